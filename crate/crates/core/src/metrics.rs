//! Scalar metrics: centralization score, HHI, usage and endemicity of a
//! provider, insularity and Pearson correlation.
//!
//! Everything here is a pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::WebsiteRecord;
use crate::layer::Layer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("provider {0:?} has a zero count")]
    ZeroCount(String),
    #[error("usage value {0} is outside [0, 100]")]
    UsageOutOfRange(f64),
    #[error("usage curve is not sorted non-increasing at position {0}")]
    UnsortedCurve(usize),
    #[error("no records")]
    NoRecords,
    #[error("record for {domain} belongs to {found}, not {expected}")]
    CountryMismatch {
        domain: String,
        expected: String,
        found: String,
    },
    #[error("insularity by headquarters is undefined for the {0} layer")]
    NoHeadquarters(Layer),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("degenerate series")]
    DegenerateSeries,
}

/// Website counts per provider for one country and one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDistribution {
    country: String,
    layer: Layer,
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl ProviderDistribution {
    pub fn new(country: impl Into<String>, layer: Layer, counts: BTreeMap<String, u64>) -> Result<Self, MetricsError> {
        if let Some((key, _)) = counts.iter().find(|(_, &c)| c == 0) {
            return Err(MetricsError::ZeroCount(key.clone()));
        }
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(MetricsError::EmptyDistribution);
        }
        Ok(Self {
            country: country.into(),
            layer,
            counts,
            total,
        })
    }

    /// Builds a distribution with synthetic provider keys `p1, p2, ...`.
    pub fn from_counts(country: impl Into<String>, layer: Layer, counts: &[u64]) -> Result<Self, MetricsError> {
        let map = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("p{}", i + 1), c))
            .collect();
        Self::new(country, layer, map)
    }

    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn layer(&self) -> Layer {
        self.layer
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    /// Total number of websites, `C`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts sorted non-increasing, ignoring provider keys.
    pub fn sorted_counts(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.counts.values().copied().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

/// A centralization score together with the site total it was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralizationScore {
    pub value: f64,
    pub total: u64,
}

impl CentralizationScore {
    /// The largest attainable score for this total, `1 - 1/C`.
    pub fn upper_bound(&self) -> f64 {
        1.0 - 1.0 / self.total as f64
    }
}

/// Sum of squared market shares.
///
/// The squares are accumulated exactly in integers and divided once, so the
/// only rounding is the final division. `C^2` must stay below 2^53 for the
/// denominator to be exact, which holds for any realistic toplist.
pub fn hhi(dist: &ProviderDistribution) -> Result<f64, MetricsError> {
    let c = dist.total;
    if c == 0 {
        return Err(MetricsError::EmptyDistribution);
    }
    let sum_sq: u128 = dist.counts.values().map(|&a| (a as u128) * (a as u128)).sum();
    let c = c as f64;
    Ok(sum_sq as f64 / (c * c))
}

/// Earth mover's distance from `dist` to the fully decentralized reference,
/// in closed form: `HHI - 1/C`.
pub fn centralization_score(dist: &ProviderDistribution) -> Result<CentralizationScore, MetricsError> {
    let h = hhi(dist)?;
    let value = h - 1.0 / dist.total as f64;
    Ok(CentralizationScore {
        value,
        total: dist.total,
    })
}

/// Antitrust interpretation bands for HHI-like scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationBand {
    Competitive,
    ModeratelyConcentrated,
    HighlyConcentrated,
}

impl ConcentrationBand {
    pub const MODERATE_FROM: f64 = 0.10;
    pub const HIGH_ABOVE: f64 = 0.18;

    pub fn as_str(self) -> &'static str {
        match self {
            ConcentrationBand::Competitive => "competitive",
            ConcentrationBand::ModeratelyConcentrated => "moderately_concentrated",
            ConcentrationBand::HighlyConcentrated => "highly_concentrated",
        }
    }
}

impl fmt::Display for ConcentrationBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Both endpoints 0.10 and 0.18 belong to the moderate band.
pub fn concentration_band(score: f64) -> ConcentrationBand {
    if score < ConcentrationBand::MODERATE_FROM {
        ConcentrationBand::Competitive
    } else if score <= ConcentrationBand::HIGH_ABOVE {
        ConcentrationBand::ModeratelyConcentrated
    } else {
        ConcentrationBand::HighlyConcentrated
    }
}

/// A provider's per-country usage percentages, sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageCurve {
    provider: String,
    values: Vec<f64>,
}

impl UsageCurve {
    /// Validates an already sorted curve.
    pub fn new(provider: impl Into<String>, values: Vec<f64>) -> Result<Self, MetricsError> {
        check_range(&values)?;
        if let Some(i) = values.windows(2).position(|w| w[0] < w[1]) {
            return Err(MetricsError::UnsortedCurve(i + 1));
        }
        Ok(Self {
            provider: provider.into(),
            values,
        })
    }

    /// Sorts per-country percentages into a curve.
    pub fn from_unsorted(provider: impl Into<String>, mut values: Vec<f64>) -> Result<Self, MetricsError> {
        check_range(&values)?;
        values.sort_unstable_by(|a, b| b.total_cmp(a));
        Ok(Self {
            provider: provider.into(),
            values,
        })
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Peak usage `u_1`, or 0 for an empty curve.
    pub fn peak(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

fn check_range(values: &[f64]) -> Result<(), MetricsError> {
    match values.iter().find(|v| !(0.0..=100.0).contains(*v)) {
        Some(&v) => Err(MetricsError::UsageOutOfRange(v)),
        None => Ok(()),
    }
}

/// Area under the usage curve.
pub fn usage(curve: &UsageCurve) -> f64 {
    curve.values.iter().sum()
}

/// Area between the usage curve and the flat line at its peak.
pub fn endemicity(curve: &UsageCurve) -> f64 {
    let peak = curve.peak();
    curve.values.iter().map(|u| peak - u).sum()
}

/// `E / (U + E)`, defined as 0 for an all-zero curve.
pub fn endemicity_ratio(curve: &UsageCurve) -> f64 {
    provider_metrics(curve).endemicity_ratio
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProviderMetrics {
    pub usage: f64,
    pub endemicity: f64,
    pub endemicity_ratio: f64,
}

pub fn provider_metrics(curve: &UsageCurve) -> ProviderMetrics {
    let u = usage(curve);
    let e = endemicity(curve);
    let denom = u + e;
    let ratio = if denom > 0.0 { e / denom } else { 0.0 };
    ProviderMetrics {
        usage: u,
        endemicity: e,
        endemicity_ratio: ratio,
    }
}

/// Insular, unknown-HQ and total record counts for one country and layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InsularityCount {
    pub insular: u64,
    pub unknown: u64,
    pub total: u64,
}

impl InsularityCount {
    pub fn fraction(&self) -> f64 {
        self.insular as f64 / self.total as f64
    }
}

/// Counts records whose provider at `layer` is headquartered in `country`.
/// Records whose provider HQ is unknown stay in the denominator.
pub fn insularity_count(
    records: &[WebsiteRecord],
    country: &str,
    layer: Layer,
) -> Result<InsularityCount, MetricsError> {
    if !layer.has_provider_hq() {
        return Err(MetricsError::NoHeadquarters(layer));
    }
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut count = InsularityCount::default();
    for r in records {
        check_country(r, country)?;
        count.total += 1;
        match r.provider_hq(layer) {
            Some(hq) if hq.eq_ignore_ascii_case(country) => count.insular += 1,
            Some(_) => {}
            None => count.unknown += 1,
        }
    }
    Ok(count)
}

pub fn insularity(records: &[WebsiteRecord], country: &str, layer: Layer) -> Result<f64, MetricsError> {
    insularity_count(records, country, layer).map(|c| c.fraction())
}

fn check_country(r: &WebsiteRecord, country: &str) -> Result<(), MetricsError> {
    if r.country.eq_ignore_ascii_case(country) {
        Ok(())
    } else {
        Err(MetricsError::CountryMismatch {
            domain: r.domain.clone(),
            expected: country.to_string(),
            found: r.country.clone(),
        })
    }
}

/// Maps top-level domains to the country they are insular to.
///
/// Every ccTLD maps to its country, `uk` maps to GB, and `com` maps to the
/// US. Other gTLDs are absent and never count as insular.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CcMap(BTreeMap<String, String>);

impl CcMap {
    pub fn from_country_codes<'a>(codes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut map = BTreeMap::new();
        for code in codes {
            map.insert(code.to_ascii_lowercase(), code.to_ascii_uppercase());
        }
        if map.contains_key("gb") {
            map.insert("uk".to_string(), "GB".to_string());
        }
        map.insert("com".to_string(), "US".to_string());
        CcMap(map)
    }

    pub fn insert(&mut self, tld: &str, country: &str) {
        self.0.insert(tld.to_ascii_lowercase(), country.to_ascii_uppercase());
    }

    pub fn country_of(&self, tld: &str) -> Option<&str> {
        self.0.get(&tld.to_ascii_lowercase()).map(String::as_str)
    }
}

/// Fraction of `records` whose TLD maps to `country`.
pub fn tld_insularity(records: &[WebsiteRecord], country: &str, cc_map: &CcMap) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut insular = 0u64;
    for r in records {
        check_country(r, country)?;
        if cc_map
            .country_of(&r.tld)
            .is_some_and(|c| c.eq_ignore_ascii_case(country))
        {
            insular += 1;
        }
    }
    Ok(insular as f64 / records.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewObservations(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationBand {
    Poor,
    Fair,
    Moderate,
    Strong,
}

impl CorrelationBand {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationBand::Poor => "poor",
            CorrelationBand::Fair => "fair",
            CorrelationBand::Moderate => "moderate",
            CorrelationBand::Strong => "strong",
        }
    }
}

impl fmt::Display for CorrelationBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 0.30 and 0.60 fall in Fair, 0.80 in Moderate.
pub fn correlation_band(rho: f64) -> CorrelationBand {
    let r = rho.abs();
    if r < 0.30 {
        CorrelationBand::Poor
    } else if r <= 0.60 {
        CorrelationBand::Fair
    } else if r <= 0.80 {
        CorrelationBand::Moderate
    } else {
        CorrelationBand::Strong
    }
}
