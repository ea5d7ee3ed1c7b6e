use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use super::countries::CountryTable;
use super::domain::domain_from_origin;
use super::{csv_rows, read_all, IngestError, LoadOptions, Loaded, RejectReport};

/// One origin in a country's popularity list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ToplistEntry {
    pub country: String,
    pub rank_bucket: u64,
    pub origin: String,
    /// Host name derived from `origin`.
    pub domain: String,
}

#[derive(Deserialize)]
struct Row {
    country: String,
    rank_bucket: String,
    origin: String,
}

/// Rank buckets are `1` or `5` times a power of ten, starting at 1000.
fn valid_bucket(b: u64) -> bool {
    if b < 1000 {
        return false;
    }
    let mut x = b;
    while x.is_multiple_of(10) {
        x /= 10;
    }
    x == 1 || x == 5
}

/// Parses a toplist CSV, keeping the smallest bucket for duplicate
/// `(country, origin)` pairs. Entries come back sorted by country, bucket
/// and origin.
pub fn parse_toplist(
    reader: impl io::Read,
    countries: &CountryTable,
    opts: &LoadOptions,
) -> Result<Loaded<Vec<ToplistEntry>>, IngestError> {
    let text = read_all(reader)?;
    let rows = csv_rows::<Row>(&text, "toplist", "country,rank_bucket,origin")?;
    let lines = rows.len();
    let mut rejected = RejectReport::default();
    let mut best: BTreeMap<(String, String), ToplistEntry> = BTreeMap::new();
    for (line, row) in rows {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(line, e);
                continue;
            }
        };
        let country = row.country.to_ascii_uppercase();
        if !countries.contains(&country) {
            rejected.push(line, format!("unknown country {:?}", row.country));
            continue;
        }
        let rank_bucket = match row.rank_bucket.parse::<u64>() {
            Ok(b) if valid_bucket(b) => b,
            _ => {
                rejected.push(line, format!("invalid rank bucket {:?}", row.rank_bucket));
                continue;
            }
        };
        let domain = match domain_from_origin(&row.origin) {
            Ok(d) => d,
            Err(e) => {
                rejected.push(line, e.to_string());
                continue;
            }
        };
        let entry = ToplistEntry {
            country: country.clone(),
            rank_bucket,
            origin: row.origin,
            domain,
        };
        best.entry((country, entry.origin.clone()))
            .and_modify(|e| {
                if entry.rank_bucket < e.rank_bucket {
                    *e = entry.clone();
                }
            })
            .or_insert(entry);
    }
    let mut entries: Vec<ToplistEntry> = best.into_values().collect();
    entries.sort_by(|a, b| (&a.country, a.rank_bucket, &a.origin).cmp(&(&b.country, b.rank_bucket, &b.origin)));
    opts.finish("toplist", entries, rejected, lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(csv: &str) -> Result<Loaded<Vec<ToplistEntry>>, IngestError> {
        parse_toplist(
            csv.as_bytes(),
            &CountryTable::builtin(),
            &LoadOptions {
                max_malformed_fraction: 0.5,
            },
        )
    }

    #[test]
    fn well_formed_row() {
        let l = parse("country,rank_bucket,origin\nTH,1000,https://example.co.th\n").unwrap();
        assert_eq!(
            l.value,
            vec![ToplistEntry {
                country: "TH".into(),
                rank_bucket: 1000,
                origin: "https://example.co.th".into(),
                domain: "example.co.th".into(),
            }]
        );
        assert!(l.rejected.is_empty());
    }

    #[test]
    fn unknown_country_rejected_with_line() {
        let l = parse(
            "country,rank_bucket,origin\nTH,1000,https://a.co.th\nZZ,1000,https://b.zz\nTH,5000,https://c.co.th\n",
        )
        .unwrap();
        assert_eq!(l.value.len(), 2);
        assert_eq!(l.rejected.0.len(), 1);
        assert_eq!(l.rejected.0[0].line, 3);
        assert!(l.rejected.0[0].message.contains("ZZ"));
    }

    #[test]
    fn duplicates_keep_smallest_bucket() {
        let l =
            parse("country,rank_bucket,origin\nDE,10000,https://a.de\nDE,1000,https://a.de\nFR,5000,https://a.de\n")
                .unwrap();
        assert_eq!(l.value.len(), 2);
        assert_eq!(l.value[0].country, "DE");
        assert_eq!(l.value[0].rank_bucket, 1000);
    }

    #[test]
    fn bucket_rules() {
        for b in [1000, 5000, 10_000, 50_000, 1_000_000] {
            assert!(valid_bucket(b), "{b}");
        }
        for b in [0, 500, 2000, 7000, 1001] {
            assert!(!valid_bucket(b), "{b}");
        }
    }

    #[test]
    fn aborts_above_threshold() {
        let mut csv = String::from("country,rank_bucket,origin\n");
        for i in 0..98 {
            csv.push_str(&format!("US,1000,https://s{i}.com\n"));
        }
        csv.push_str("US,1000\nXX,1000,https://x.com\n");
        let err = parse_toplist(csv.as_bytes(), &CountryTable::builtin(), &LoadOptions::default()).unwrap_err();
        match err {
            IngestError::TooManyMalformed { bad, total, report, .. } => {
                assert_eq!((bad, total), (2, 100));
                assert_eq!(report.0[0].line, 100);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            parse("cc,bucket,origin\nUS,1000,https://a.com\n"),
            Err(IngestError::BadHeader { .. })
        ));
    }
}
