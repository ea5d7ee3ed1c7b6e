use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{csv_rows, read_all, IngestError, LoadOptions, Loaded, RejectReport};

const BUILTIN: &str = include_str!("../../assets/countries.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    AF,
    AS,
    EU,
    NA,
    OC,
    SA,
}

impl Continent {
    pub fn as_str(self) -> &'static str {
        match self {
            Continent::AF => "AF",
            Continent::AS => "AS",
            Continent::EU => "EU",
            Continent::NA => "NA",
            Continent::OC => "OC",
            Continent::SA => "SA",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Continent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AF" => Ok(Continent::AF),
            "AS" => Ok(Continent::AS),
            "EU" => Ok(Continent::EU),
            "NA" => Ok(Continent::NA),
            "OC" => Ok(Continent::OC),
            "SA" => Ok(Continent::SA),
            _ => Err(format!("unknown continent {s:?}")),
        }
    }
}

/// Where an IP address serves from: a continent, or anycast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Placement {
    Anycast,
    Continent(Continent),
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Anycast => f.write_str("anycast"),
            Placement::Continent(c) => c.fmt(f),
        }
    }
}

impl TryFrom<String> for Placement {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s.eq_ignore_ascii_case("anycast") {
            Ok(Placement::Anycast)
        } else {
            s.parse().map(Placement::Continent)
        }
    }
}

impl From<Placement> for String {
    fn from(p: Placement) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryInfo {
    pub code: String,
    pub name: String,
    pub subregion: String,
    pub continent: Continent,
}

/// Country code to name, subregion and continent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryTable {
    by_code: BTreeMap<String, CountryInfo>,
}

#[derive(Deserialize)]
struct CountryRow {
    code: String,
    name: String,
    subregion: String,
    continent: String,
}

impl CountryTable {
    /// The 150-country reference set bundled with the crate.
    pub fn builtin() -> Self {
        Self::parse(
            BUILTIN.as_bytes(),
            &LoadOptions {
                max_malformed_fraction: 0.0,
            },
        )
        .expect("bundled country table is well-formed")
        .value
    }

    pub fn parse(reader: impl io::Read, opts: &LoadOptions) -> Result<Loaded<Self>, IngestError> {
        let text = read_all(reader)?;
        let rows = csv_rows::<CountryRow>(&text, "countries", "code,name,subregion,continent")?;
        let lines = rows.len();
        let mut by_code = BTreeMap::new();
        let mut rejected = RejectReport::default();
        for (line, row) in rows {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    rejected.push(line, e);
                    continue;
                }
            };
            let code = row.code.to_ascii_uppercase();
            if code.len() != 2 || !code.bytes().all(|b| b.is_ascii_alphabetic()) {
                rejected.push(line, format!("invalid country code {:?}", row.code));
                continue;
            }
            let continent = match row.continent.parse() {
                Ok(c) => c,
                Err(e) => {
                    rejected.push(line, e);
                    continue;
                }
            };
            by_code.insert(
                code.clone(),
                CountryInfo {
                    code,
                    name: row.name,
                    subregion: row.subregion,
                    continent,
                },
            );
        }
        opts.finish("countries", Self { by_code }, rejected, lines)
    }

    pub fn get(&self, code: &str) -> Option<&CountryInfo> {
        self.by_code.get(&code.to_ascii_uppercase())
    }

    pub fn contains(&self, code: &str) -> bool {
        self.get(code).is_some()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.by_code.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CountryInfo> {
        self.by_code.values()
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }
}
