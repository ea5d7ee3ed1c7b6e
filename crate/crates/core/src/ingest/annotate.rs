use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::net::IpAddr;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::countries::Placement;
use super::domain::extract_tld;
use super::measurement::MeasurementRecord;
use super::prefix::{AnycastSet, PrefixTable};
use super::tables::{AsOrg, AsOrgTable, CaOwnerTable, GeoTable};
use super::toplist::ToplistEntry;
use crate::layer::Layer;

/// One popular website with its provider at every layer.
///
/// `None` means the layer could not be resolved (or was not annotated).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WebsiteRecord {
    pub domain: String,
    pub country: String,
    pub tld: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosting_asn: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosting_org: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosting_hq: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosting_continent: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_asn: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_org: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_hq: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_continent: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ca_owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ca_hq: Option<String>,
}

impl WebsiteRecord {
    /// The provider key the layer's distribution is built over.
    pub fn provider_key(&self, layer: Layer) -> Option<&str> {
        match layer {
            Layer::Hosting => self.hosting_org.as_deref(),
            Layer::Dns => self.dns_org.as_deref(),
            Layer::Tld => (!self.tld.is_empty()).then_some(self.tld.as_str()),
            Layer::Ca => self.ca_owner.as_deref(),
        }
    }

    /// Headquarters country of the layer's provider, if known.
    pub fn provider_hq(&self, layer: Layer) -> Option<&str> {
        let hq = match layer {
            Layer::Hosting => self.hosting_hq.as_deref(),
            Layer::Dns => self.dns_hq.as_deref(),
            Layer::Tld => None,
            Layer::Ca => self.ca_hq.as_deref(),
        };
        hq.filter(|h| !h.is_empty())
    }
}

pub fn write_records<'a>(mut out: impl Write, records: impl IntoIterator<Item = &'a WebsiteRecord>) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(reader: impl BufRead) -> io::Result<Vec<WebsiteRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Which resolved address keys a layer when a name has several.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressPolicy {
    /// Lowest address (IPv4 sorts before IPv6).
    #[default]
    Lowest,
    /// Organization owning the most addresses; ties go to the lowest address.
    Majority,
}

impl FromStr for AddressPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lowest" => Ok(Self::Lowest),
            "majority" => Ok(Self::Majority),
            _ => Err(format!("unknown address policy {s:?} (expected lowest or majority)")),
        }
    }
}

impl fmt::Display for AddressPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lowest => "lowest",
            Self::Majority => "majority",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotateOptions {
    pub address_policy: AddressPolicy,
    pub layers: Vec<Layer>,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            address_policy: AddressPolicy::Lowest,
            layers: Layer::ALL.to_vec(),
        }
    }
}

/// The lookup tables annotation needs.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub prefixes: PrefixTable,
    pub as_orgs: AsOrgTable,
    pub geo: GeoTable,
    pub anycast: AnycastSet,
    pub ca_owners: CaOwnerTable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub resolved: u64,
    pub unknown: u64,
}

impl LayerStats {
    pub fn failure_rate(&self) -> f64 {
        let total = self.resolved + self.unknown;
        if total == 0 {
            0.0
        } else {
            self.unknown as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryCoverage {
    pub entries: u64,
    pub annotated: u64,
}

/// Counters from one annotation run. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub toplist_entries: u64,
    pub annotated: u64,
    pub missing_measurement: u64,
    pub layers: BTreeMap<Layer, LayerStats>,
    pub countries: BTreeMap<String, CountryCoverage>,
    /// pfx2as rows with a multi-origin ASN set.
    #[serde(default)]
    pub multi_origin_rows: u64,
    #[serde(default)]
    pub duplicate_measurements: u64,
}

impl AnnotationStats {
    pub fn merge(&mut self, other: &AnnotationStats) {
        self.toplist_entries += other.toplist_entries;
        self.annotated += other.annotated;
        self.missing_measurement += other.missing_measurement;
        for (layer, s) in &other.layers {
            let e = self.layers.entry(*layer).or_default();
            e.resolved += s.resolved;
            e.unknown += s.unknown;
        }
        for (c, s) in &other.countries {
            let e = self.countries.entry(c.clone()).or_default();
            e.entries += s.entries;
            e.annotated += s.annotated;
        }
        self.multi_origin_rows += other.multi_origin_rows;
        self.duplicate_measurements += other.duplicate_measurements;
    }

    fn count_layer(&mut self, layer: Layer, resolved: bool) {
        let e = self.layers.entry(layer).or_default();
        if resolved {
            e.resolved += 1;
        } else {
            e.unknown += 1;
        }
    }
}

struct Resolved<'t> {
    asn: Option<u32>,
    org: Option<&'t AsOrg>,
    placement: Option<Placement>,
}

fn placement(tables: &Tables, ip: IpAddr) -> Option<Placement> {
    if tables.anycast.is_anycast(ip) {
        Some(Placement::Anycast)
    } else {
        tables.geo.lookup(ip).map(|r| Placement::Continent(r.continent))
    }
}

fn resolve_addresses<'t>(tables: &'t Tables, ips: &[IpAddr], policy: AddressPolicy) -> Option<Resolved<'t>> {
    let mut sorted = ips.to_vec();
    sorted.sort();
    sorted.dedup();
    let lookup = |ip: IpAddr| {
        let asn = tables.prefixes.lookup_asn(ip);
        let org = asn.and_then(|a| tables.as_orgs.get(a));
        Resolved {
            asn,
            org,
            placement: placement(tables, ip),
        }
    };
    let lowest = *sorted.first()?;
    if policy == AddressPolicy::Lowest {
        return Some(lookup(lowest));
    }
    let resolved: Vec<Resolved> = sorted.iter().map(|&ip| lookup(ip)).collect();
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &resolved {
        if let Some(org) = r.org {
            *votes.entry(org.org_id.as_str()).or_default() += 1;
        }
    }
    let Some(&max) = votes.values().max() else {
        return resolved.into_iter().next();
    };
    // `resolved` is in address order, so the first hit is the lowest tied address.
    resolved
        .into_iter()
        .find(|r| r.org.is_some_and(|o| votes[o.org_id.as_str()] == max))
}

fn annotate_one(
    entry: &ToplistEntry,
    m: &MeasurementRecord,
    tables: &Tables,
    opts: &AnnotateOptions,
    stats: &mut AnnotationStats,
) -> WebsiteRecord {
    let mut rec = WebsiteRecord {
        domain: entry.domain.clone(),
        country: entry.country.clone(),
        tld: extract_tld(&entry.domain).unwrap_or_default(),
        ..WebsiteRecord::default()
    };
    let want = |l: Layer| opts.layers.contains(&l);
    if want(Layer::Hosting) {
        if let Some(r) = resolve_addresses(tables, &m.a, opts.address_policy) {
            rec.hosting_asn = r.asn;
            rec.hosting_org = r.org.map(|o| o.org_name.clone());
            rec.hosting_hq = r.org.and_then(|o| o.hq_country.clone());
            rec.hosting_continent = r.placement;
        }
        stats.count_layer(Layer::Hosting, rec.hosting_org.is_some());
    }
    if want(Layer::Dns) {
        if let Some(r) = resolve_addresses(tables, &m.ns_addresses(), opts.address_policy) {
            rec.dns_asn = r.asn;
            rec.dns_org = r.org.map(|o| o.org_name.clone());
            rec.dns_hq = r.org.and_then(|o| o.hq_country.clone());
            rec.dns_continent = r.placement;
        }
        stats.count_layer(Layer::Dns, rec.dns_org.is_some());
    }
    if want(Layer::Tld) {
        stats.count_layer(Layer::Tld, !rec.tld.is_empty());
    }
    if want(Layer::Ca) {
        if let Some(owner) = m.issuer.as_deref().and_then(|i| tables.ca_owners.get(i)) {
            rec.ca_owner = Some(owner.ca_owner.clone());
            rec.ca_hq = owner.hq_country.clone();
        }
        stats.count_layer(Layer::Ca, rec.ca_owner.is_some());
    }
    rec
}

/// Joins toplist entries with measurements on domain and resolves each
/// selected layer through the lookup tables.
///
/// Entries without a measurement are skipped and counted. Output is sorted
/// by `(country, domain)`, so input order never matters. Runs on the current
/// rayon pool.
pub fn annotate(
    entries: &[ToplistEntry],
    measurements: &[MeasurementRecord],
    tables: &Tables,
    opts: &AnnotateOptions,
) -> (Vec<WebsiteRecord>, AnnotationStats) {
    let by_domain: BTreeMap<&str, &MeasurementRecord> = measurements.iter().map(|m| (m.domain.as_str(), m)).collect();
    // A country lists an origin once; http/https variants of one host collapse.
    let unique: BTreeSet<&ToplistEntry> = entries.iter().collect();
    let unique: Vec<&ToplistEntry> = unique.into_iter().collect();

    let (mut records, stats) = unique
        .par_iter()
        .fold(
            || (Vec::new(), AnnotationStats::default()),
            |(mut recs, mut stats), entry| {
                stats.toplist_entries += 1;
                let found = by_domain.get(entry.domain.as_str());
                let cov = stats.countries.entry(entry.country.clone()).or_default();
                cov.entries += 1;
                cov.annotated += u64::from(found.is_some());
                match found {
                    Some(m) => {
                        stats.annotated += 1;
                        recs.push(annotate_one(entry, m, tables, opts, &mut stats));
                    }
                    None => stats.missing_measurement += 1,
                }
                (recs, stats)
            },
        )
        .reduce(
            || (Vec::new(), AnnotationStats::default()),
            |(mut ra, mut sa), (rb, sb)| {
                ra.extend(rb);
                sa.merge(&sb);
                (ra, sa)
            },
        );
    records.sort();
    records.dedup_by(|a, b| a.country == b.country && a.domain == b.domain);
    (records, stats)
}
