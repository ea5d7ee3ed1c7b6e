use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::domain::{is_valid_hostname, normalize_hostname};
use super::{read_all, IngestError, LoadOptions, Loaded, RejectReport};

/// Raw active-measurement result for one domain, one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub domain: String,
    #[serde(default)]
    pub a: Vec<IpAddr>,
    #[serde(default)]
    pub ns: Vec<String>,
    #[serde(default)]
    pub ns_a: BTreeMap<String, Vec<IpAddr>>,
    #[serde(default)]
    pub issuer: Option<String>,
    /// Probe time, seconds since the Unix epoch.
    #[serde(default)]
    pub ts: i64,
    /// Per-field failure notes such as `a: nxdomain`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MeasurementRecord {
    /// Every nameserver address, deduplicated and sorted.
    pub fn ns_addresses(&self) -> Vec<IpAddr> {
        let mut v: Vec<IpAddr> = self.ns_a.values().flatten().copied().collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Parses measurement JSON lines. Duplicate domains keep the greatest record
/// (latest `ts` first), so the result does not depend on input order.
/// Returns records sorted by domain and the number of duplicates dropped.
pub fn parse_measurements(
    reader: impl io::Read,
    opts: &LoadOptions,
) -> Result<(Loaded<Vec<MeasurementRecord>>, u64), IngestError> {
    let text = read_all(reader)?;
    let mut rejected = RejectReport::default();
    let mut by_domain: BTreeMap<String, MeasurementRecord> = BTreeMap::new();
    let mut lines = 0;
    let mut duplicates = 0;
    for (line, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if raw.is_empty() {
            continue;
        }
        lines += 1;
        let mut rec: MeasurementRecord = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                rejected.push(line, e.to_string());
                continue;
            }
        };
        rec.domain = normalize_hostname(&rec.domain);
        if !is_valid_hostname(&rec.domain) {
            rejected.push(line, format!("invalid domain {:?}", rec.domain));
            continue;
        }
        match by_domain.get_mut(&rec.domain) {
            Some(existing) => {
                duplicates += 1;
                if (rec.ts, &rec) > (existing.ts, &*existing) {
                    *existing = rec;
                }
            }
            None => {
                by_domain.insert(rec.domain.clone(), rec);
            }
        }
    }
    let records = by_domain.into_values().collect();
    Ok((opts.finish("measurements", records, rejected, lines)?, duplicates))
}

pub fn write_measurements<'a>(
    mut out: impl Write,
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let line = r#"{"domain":"Example.COM.","a":["192.0.2.1"],"ns":["ns1.example.com"],"ns_a":{"ns1.example.com":["198.51.100.7","2001:db8::1"]},"issuer":"Let's Encrypt","ts":1700000000}"#;
        let (l, dups) = parse_measurements(line.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(dups, 0);
        let r = &l.value[0];
        assert_eq!(r.domain, "example.com");
        assert_eq!(r.a, vec!["192.0.2.1".parse::<IpAddr>().unwrap()]);
        assert_eq!(r.ns_addresses().len(), 2);
        assert_eq!(r.issuer.as_deref(), Some("Let's Encrypt"));
    }

    #[test]
    fn duplicates_resolve_independent_of_order() {
        let older = r#"{"domain":"a.com","a":["192.0.2.1"],"ts":1}"#;
        let newer = r#"{"domain":"a.com","a":["192.0.2.9"],"ts":2}"#;
        let opts = LoadOptions::default();
        let (x, d1) = parse_measurements(format!("{older}\n{newer}\n").as_bytes(), &opts).unwrap();
        let (y, d2) = parse_measurements(format!("{newer}\n{older}\n").as_bytes(), &opts).unwrap();
        assert_eq!((d1, d2), (1, 1));
        assert_eq!(x.value, y.value);
        assert_eq!(x.value[0].ts, 2);
    }

    #[test]
    fn round_trip() {
        let rec = MeasurementRecord {
            domain: "a.com".into(),
            a: vec!["192.0.2.1".parse().unwrap()],
            notes: vec!["ns: servfail".into()],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_measurements(&mut buf, [&rec]).unwrap();
        let (l, _) = parse_measurements(buf.as_slice(), &LoadOptions::default()).unwrap();
        assert_eq!(l.value, vec![rec]);
    }

    #[test]
    fn malformed_lines_are_reported() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!("{{\"domain\":\"s{i}.com\"}}\n"));
        }
        text.push_str("{not json\n");
        let err = parse_measurements(text.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::TooManyMalformed { bad: 1, total: 11, .. }));
    }
}
