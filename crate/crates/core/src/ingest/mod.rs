//! Input datasets and the join that turns them into [`WebsiteRecord`]s.
//!
//! File formats (all UTF-8):
//!
//! | dataset       | format                                                    |
//! |---------------|-----------------------------------------------------------|
//! | toplist       | CSV `country,rank_bucket,origin`                          |
//! | measurements  | JSON lines: `domain`, `a`, `ns`, `ns_a`, `issuer`, `ts`   |
//! | pfx2as        | whitespace separated `prefix length asn`                  |
//! | as2org        | TSV `asn<TAB>org_id<TAB>org_name<TAB>country`             |
//! | geo           | CSV `start_ip,end_ip,country,continent`                   |
//! | anycast       | one CIDR per line                                         |
//! | ca_owners     | CSV `issuer_org,ca_owner,country`                         |
//! | countries     | CSV `code,name,subregion,continent`                       |
//!
//! Line-oriented loaders collect malformed lines into a report instead of
//! failing on the first one, and give up only when more than
//! [`LoadOptions::max_malformed_fraction`] of the lines are bad.

mod annotate;
mod countries;
mod domain;
mod measurement;
mod prefix;
mod tables;
mod toplist;

use std::fmt;
use std::io;

pub use annotate::{
    annotate, read_records, write_records, AddressPolicy, AnnotateOptions, AnnotationStats, CountryCoverage,
    LayerStats, Tables, WebsiteRecord,
};
pub use countries::{Continent, CountryInfo, CountryTable, Placement};
pub use domain::{domain_from_origin, extract_tld, is_valid_hostname, normalize_hostname, normalize_issuer};
pub use measurement::{parse_measurements, write_measurements, MeasurementRecord};
pub use prefix::{AnycastSet, IpTrie, Prefix, PrefixError, PrefixTable};
pub use tables::{AsOrg, AsOrgTable, CaOwner, CaOwnerTable, GeoRange, GeoTable};
pub use toplist::{parse_toplist, ToplistEntry};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{what}: {bad} of {total} lines malformed (limit {limit:.1}%)\n{report}")]
    TooManyMalformed {
        what: &'static str,
        bad: usize,
        total: usize,
        limit: f64,
        report: RejectReport,
    },
    #[error("{what}: missing or wrong header, expected `{expected}`")]
    BadHeader { what: &'static str, expected: &'static str },
    #[error("geo ranges overlap: {first} and {second}")]
    OverlappingRanges { first: String, second: String },
    #[error("no TLD in single-label hostname {0:?}")]
    NoTld(String),
    #[error("invalid hostname {0:?}")]
    InvalidHostname(String),
}

/// One rejected input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// All rejected lines of one input file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectReport(pub Vec<RowError>);

impl RejectReport {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    fn push(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(RowError {
            line,
            message: message.into(),
        });
    }
}

impl fmt::Display for RejectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {row}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub max_malformed_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_malformed_fraction: 0.01,
        }
    }
}

/// A parsed dataset plus the lines that were skipped.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub rejected: RejectReport,
    pub lines: usize,
}

impl LoadOptions {
    fn finish<T>(
        &self,
        what: &'static str,
        value: T,
        rejected: RejectReport,
        lines: usize,
    ) -> Result<Loaded<T>, IngestError> {
        let bad = rejected.len();
        if lines > 0 && bad as f64 > self.max_malformed_fraction * lines as f64 {
            return Err(IngestError::TooManyMalformed {
                what,
                bad,
                total: lines,
                limit: self.max_malformed_fraction * 100.0,
                report: rejected,
            });
        }
        Ok(Loaded { value, rejected, lines })
    }
}

/// Data lines with their 1-based line numbers, skipping blanks and `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

fn read_all(mut reader: impl io::Read) -> Result<String, IngestError> {
    let mut s = String::new();
    reader.read_to_string(&mut s)?;
    Ok(s)
}

type NumberedRow<T> = (usize, Result<T, String>);

/// Deserializes CSV rows after checking the header, pairing each row with its
/// 1-based line number.
fn csv_rows<T: serde::de::DeserializeOwned>(
    text: &str,
    what: &'static str,
    expected: &'static str,
) -> Result<Vec<NumberedRow<T>>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|_| IngestError::BadHeader { what, expected })?
        .clone();
    let want: Vec<&str> = expected.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(IngestError::BadHeader { what, expected });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let parsed = if rec.len() != headers.len() {
                    Err(format!("expected {} fields, found {}", headers.len(), rec.len()))
                } else {
                    rec.deserialize(Some(&headers)).map_err(|e| e.to_string())
                };
                rows.push((line, parsed));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rows.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(rows)
}
