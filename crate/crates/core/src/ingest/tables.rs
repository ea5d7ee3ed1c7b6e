use std::collections::BTreeMap;
use std::io;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::countries::Continent;
use super::domain::normalize_issuer;
use super::{csv_rows, data_lines, read_all, IngestError, LoadOptions, Loaded, RejectReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsOrg {
    pub org_id: String,
    pub org_name: String,
    /// Headquarters country; `None` when the registry left it blank.
    pub hq_country: Option<String>,
}

/// ASN to owning organization.
#[derive(Debug, Clone, Default)]
pub struct AsOrgTable {
    by_asn: BTreeMap<u32, AsOrg>,
}

fn country_field(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty() && s != "-" && s != "??").then(|| s.to_ascii_uppercase())
}

impl AsOrgTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (u32, AsOrg)>) -> Self {
        Self {
            by_asn: entries.into_iter().collect(),
        }
    }

    /// Parses `asn<TAB>org_id<TAB>org_name<TAB>country` lines.
    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let mut by_asn = BTreeMap::new();
        let mut rejected = RejectReport::default();
        let mut lines = 0;
        for (line, raw) in data_lines(&text) {
            lines += 1;
            let fields: Vec<&str> = raw.split('\t').collect();
            let [asn, org_id, org_name, country] = fields[..] else {
                rejected.push(line, format!("expected 4 tab-separated fields, found {}", fields.len()));
                continue;
            };
            let Ok(asn) = asn.trim().trim_start_matches("AS").parse::<u32>() else {
                rejected.push(line, format!("invalid ASN {asn:?}"));
                continue;
            };
            if org_name.trim().is_empty() {
                rejected.push(line, "empty organization name");
                continue;
            }
            by_asn.insert(
                asn,
                AsOrg {
                    org_id: org_id.trim().to_string(),
                    org_name: org_name.trim().to_string(),
                    hq_country: country_field(country),
                },
            );
        }
        opts.finish("as2org", Self { by_asn }, rejected, lines)
    }

    pub fn get(&self, asn: u32) -> Option<&AsOrg> {
        self.by_asn.get(&asn)
    }

    pub fn len(&self) -> usize {
        self.by_asn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_asn.is_empty()
    }
}

/// An inclusive address range with its location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoRange {
    pub start: IpAddr,
    pub end: IpAddr,
    pub country: String,
    pub continent: Continent,
}

/// Disjoint address ranges sorted by start address.
#[derive(Debug, Clone, Default)]
pub struct GeoTable {
    ranges: Vec<GeoRange>,
}

#[derive(Deserialize)]
struct GeoRow {
    start_ip: String,
    end_ip: String,
    country: String,
    continent: String,
}

impl GeoTable {
    /// Sorts the ranges and rejects any overlap.
    pub fn new(mut ranges: Vec<GeoRange>) -> Result<Self, IngestError> {
        ranges.sort_by(|a, b| a.start.cmp(&b.start).then(a.end.cmp(&b.end)));
        for w in ranges.windows(2) {
            if w[0].end.is_ipv4() == w[1].start.is_ipv4() && w[0].end >= w[1].start {
                return Err(IngestError::OverlappingRanges {
                    first: format!("{}-{}", w[0].start, w[0].end),
                    second: format!("{}-{}", w[1].start, w[1].end),
                });
            }
        }
        Ok(Self { ranges })
    }

    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let rows = csv_rows::<GeoRow>(&text, "geo", "start_ip,end_ip,country,continent")?;
        let lines = rows.len();
        let mut ranges = Vec::new();
        let mut rejected = RejectReport::default();
        for (line, row) in rows {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    rejected.push(line, e);
                    continue;
                }
            };
            let (Ok(start), Ok(end)) = (row.start_ip.parse::<IpAddr>(), row.end_ip.parse::<IpAddr>()) else {
                rejected.push(line, format!("invalid address range {}-{}", row.start_ip, row.end_ip));
                continue;
            };
            if start.is_ipv4() != end.is_ipv4() || start > end {
                rejected.push(line, format!("invalid address range {start}-{end}"));
                continue;
            }
            let continent = match row.continent.parse() {
                Ok(c) => c,
                Err(e) => {
                    rejected.push(line, e);
                    continue;
                }
            };
            let Some(country) = country_field(&row.country) else {
                rejected.push(line, "empty country");
                continue;
            };
            ranges.push(GeoRange {
                start,
                end,
                country,
                continent,
            });
        }
        let table = Self::new(ranges)?;
        opts.finish("geo", table, rejected, lines)
    }

    pub fn lookup(&self, ip: IpAddr) -> Option<&GeoRange> {
        let idx = self.ranges.partition_point(|r| r.start <= ip);
        let r = self.ranges.get(idx.checked_sub(1)?)?;
        (ip <= r.end && r.start.is_ipv4() == ip.is_ipv4()).then_some(r)
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaOwner {
    pub ca_owner: String,
    pub hq_country: Option<String>,
}

/// Certificate issuer organization to the CA owner, matched after
/// [`normalize_issuer`].
#[derive(Debug, Clone, Default)]
pub struct CaOwnerTable {
    by_issuer: BTreeMap<String, CaOwner>,
}

#[derive(Deserialize)]
struct CaRow {
    issuer_org: String,
    ca_owner: String,
    country: String,
}

impl CaOwnerTable {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, CaOwner)>) -> Self {
        Self {
            by_issuer: entries.into_iter().map(|(k, v)| (normalize_issuer(k), v)).collect(),
        }
    }

    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let rows = csv_rows::<CaRow>(&text, "ca_owners", "issuer_org,ca_owner,country")?;
        let lines = rows.len();
        let mut by_issuer = BTreeMap::new();
        let mut rejected = RejectReport::default();
        for (line, row) in rows {
            match row {
                Ok(r) if !r.issuer_org.is_empty() && !r.ca_owner.is_empty() => {
                    by_issuer.insert(
                        normalize_issuer(&r.issuer_org),
                        CaOwner {
                            ca_owner: r.ca_owner,
                            hq_country: country_field(&r.country),
                        },
                    );
                }
                Ok(_) => rejected.push(line, "empty issuer or owner"),
                Err(e) => rejected.push(line, e),
            }
        }
        opts.finish("ca_owners", Self { by_issuer }, rejected, lines)
    }

    pub fn get(&self, issuer: &str) -> Option<&CaOwner> {
        self.by_issuer.get(&normalize_issuer(issuer))
    }

    pub fn len(&self) -> usize {
        self.by_issuer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_issuer.is_empty()
    }
}
