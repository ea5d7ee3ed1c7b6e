use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four web-infrastructure layers a website depends on.
///
/// The declaration order is the report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Hosting,
    Dns,
    Tld,
    Ca,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Hosting, Layer::Dns, Layer::Tld, Layer::Ca];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Hosting => "hosting",
            Layer::Dns => "dns",
            Layer::Tld => "tld",
            Layer::Ca => "ca",
        }
    }

    /// Layers whose providers are organizations with a headquarters country.
    pub fn has_provider_hq(self) -> bool {
        !matches!(self, Layer::Tld)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown layer {0:?} (expected hosting, dns, tld or ca)")]
pub struct ParseLayerError(pub String);

impl FromStr for Layer {
    type Err = ParseLayerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hosting" => Ok(Layer::Hosting),
            "dns" => Ok(Layer::Dns),
            "tld" => Ok(Layer::Tld),
            "ca" => Ok(Layer::Ca),
            _ => Err(ParseLayerError(s.to_string())),
        }
    }
}

/// Parses a comma-separated layer list such as `hosting,tld`, keeping report order.
pub fn parse_layer_list(s: &str) -> Result<Vec<Layer>, ParseLayerError> {
    let mut layers = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Layer>, _>>()?;
    layers.sort();
    layers.dedup();
    Ok(layers)
}
