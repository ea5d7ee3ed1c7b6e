//! Grouping providers by size and reach.
//!
//! Each provider gets a usage curve across countries, summarized as usage `U`
//! and endemicity ratio `E_R`. Providers in the long tail are set aside as
//! extra-small regional; the rest are rotated onto their principal axes,
//! min-max scaled, clustered with affinity propagation, and each cluster is
//! labeled from its exemplar's `(U, E_R)` through [`ClassRules`].

mod affinity;
mod pca;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use affinity::{similarity, AffinityPropagation, ApClustering, Preference};
pub use pca::{covariance, minmax_scale, pca2, Pca2};

use crate::ingest::WebsiteRecord;
use crate::layer::Layer;
use crate::metrics::{provider_metrics, UsageCurve};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("zero variance")]
    ZeroVariance,
    #[error("damping {0} outside [0.5, 1)")]
    InvalidDamping(f64),
    #[error("max_iter and convergence_iter must be positive")]
    InvalidIterations,
    #[error("invalid class rules: {0}")]
    InvalidRules(String),
    #[error("provider {0:?} is not in the clustering")]
    MissingProvider(String),
}

/// The provider taxonomy, from extra-large global to extra-small regional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProviderClass {
    #[serde(rename = "XL-GP")]
    XlGp,
    #[serde(rename = "L-GP")]
    LGp,
    #[serde(rename = "L-GP(R)")]
    LGpR,
    #[serde(rename = "M-GP")]
    MGp,
    #[serde(rename = "S-GP")]
    SGp,
    #[serde(rename = "L-RP")]
    LRp,
    #[serde(rename = "S-RP")]
    SRp,
    #[serde(rename = "XS-RP")]
    XsRp,
}

impl ProviderClass {
    pub const ALL: [ProviderClass; 8] = [
        ProviderClass::XlGp,
        ProviderClass::LGp,
        ProviderClass::LGpR,
        ProviderClass::MGp,
        ProviderClass::SGp,
        ProviderClass::LRp,
        ProviderClass::SRp,
        ProviderClass::XsRp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderClass::XlGp => "XL-GP",
            ProviderClass::LGp => "L-GP",
            ProviderClass::LGpR => "L-GP(R)",
            ProviderClass::MGp => "M-GP",
            ProviderClass::SGp => "S-GP",
            ProviderClass::LRp => "L-RP",
            ProviderClass::SRp => "S-RP",
            ProviderClass::XsRp => "XS-RP",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ProviderClass::XlGp => "Extra Large Global",
            ProviderClass::LGp => "Large Global",
            ProviderClass::LGpR => "Large Global (Regional)",
            ProviderClass::MGp => "Medium Global",
            ProviderClass::SGp => "Small Global",
            ProviderClass::LRp => "Large Regional",
            ProviderClass::SRp => "Small Regional",
            ProviderClass::XsRp => "Extra Small Regional",
        }
    }
}

impl fmt::Display for ProviderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProviderClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProviderClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown provider class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderFeatures {
    pub provider: String,
    pub usage: f64,
    pub endemicity_ratio: f64,
    /// Largest per-country usage percentage.
    pub max_country_usage: f64,
}

/// Usage curve of every provider at `layer`.
///
/// A provider's usage in a country is the percentage of that country's sites
/// with a known provider at this layer. The curve spans every country that
/// has at least one such site, with zeros where the provider is absent.
pub fn usage_curves(records: &[WebsiteRecord], layer: Layer) -> Vec<UsageCurve> {
    let mut per_country: BTreeMap<&str, u64> = BTreeMap::new();
    let mut counts: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for r in records {
        if let Some(key) = r.provider_key(layer) {
            *per_country.entry(r.country.as_str()).or_default() += 1;
            *counts.entry(key).or_default().entry(r.country.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(provider, by_country)| {
            let values = per_country
                .iter()
                .map(|(c, &total)| 100.0 * by_country.get(c).copied().unwrap_or(0) as f64 / total as f64)
                .collect();
            UsageCurve::from_unsorted(provider, values).expect("percentages lie in [0, 100]")
        })
        .collect()
}

pub fn features_from_curve(curve: &UsageCurve) -> ProviderFeatures {
    let m = provider_metrics(curve);
    ProviderFeatures {
        provider: curve.provider().to_string(),
        usage: m.usage,
        endemicity_ratio: m.endemicity_ratio,
        max_country_usage: curve.peak(),
    }
}

/// Features of every provider at `layer`, sorted by provider key.
pub fn provider_features(records: &[WebsiteRecord], layer: Layer) -> Vec<ProviderFeatures> {
    usage_curves(records, layer).iter().map(features_from_curve).collect()
}

/// Thresholds that send a provider to the long tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailRule {
    /// Percentage a provider must reach in at least one country.
    pub min_peak_usage: f64,
    /// Smallest total usage `U`.
    pub min_total_usage: f64,
}

impl Default for LongTailRule {
    fn default() -> Self {
        Self {
            min_peak_usage: 0.1,
            min_total_usage: 10.0,
        }
    }
}

/// Splits providers into `(kept, long_tail)`.
pub fn filter_long_tail(
    features: &[ProviderFeatures],
    rule: &LongTailRule,
) -> (Vec<ProviderFeatures>, Vec<ProviderFeatures>) {
    features
        .iter()
        .cloned()
        .partition(|f| f.max_country_usage >= rule.min_peak_usage && f.usage >= rule.min_total_usage)
}

/// Thresholds mapping an exemplar's `(U, E_R)` to a class.
///
/// Exemplars with `E_R <= global_max_endemicity_ratio` are global. Global
/// size tiers are cut at the given quantiles of kept providers' usage; within
/// the large tier an `E_R` above `regional_global_min_endemicity_ratio` marks
/// L-GP(R). Regional exemplars at or above `regional_large_usage_quantile` are
/// L-RP, the rest S-RP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassRules {
    pub global_max_endemicity_ratio: f64,
    pub regional_global_min_endemicity_ratio: f64,
    pub xl_usage_quantile: f64,
    pub l_usage_quantile: f64,
    pub m_usage_quantile: f64,
    pub regional_large_usage_quantile: f64,
    pub long_tail_min_peak_usage: f64,
    pub long_tail_min_total_usage: f64,
}

impl Default for ClassRules {
    fn default() -> Self {
        Self {
            global_max_endemicity_ratio: 0.5,
            regional_global_min_endemicity_ratio: 0.35,
            xl_usage_quantile: 0.99,
            l_usage_quantile: 0.95,
            m_usage_quantile: 0.85,
            regional_large_usage_quantile: 0.60,
            long_tail_min_peak_usage: 0.1,
            long_tail_min_total_usage: 10.0,
        }
    }
}

impl ClassRules {
    /// Parses `key = value` lines; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        let rules: ClassRules =
            toml::from_str(text).map_err(|e| ClassifyError::InvalidRules(e.message().to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn long_tail(&self) -> LongTailRule {
        LongTailRule {
            min_peak_usage: self.long_tail_min_peak_usage,
            min_total_usage: self.long_tail_min_total_usage,
        }
    }

    /// Rejects rule sets whose regions overlap or leave gaps.
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |msg: String| Err(ClassifyError::InvalidRules(msg));
        let fields = [
            ("global_max_endemicity_ratio", self.global_max_endemicity_ratio),
            (
                "regional_global_min_endemicity_ratio",
                self.regional_global_min_endemicity_ratio,
            ),
            ("xl_usage_quantile", self.xl_usage_quantile),
            ("l_usage_quantile", self.l_usage_quantile),
            ("m_usage_quantile", self.m_usage_quantile),
            ("regional_large_usage_quantile", self.regional_large_usage_quantile),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.global_max_endemicity_ratio > 0.0 && self.global_max_endemicity_ratio < 1.0) {
            return bad(format!(
                "global_max_endemicity_ratio = {} leaves the global or the regional region empty",
                self.global_max_endemicity_ratio
            ));
        }
        if self.regional_global_min_endemicity_ratio >= self.global_max_endemicity_ratio {
            return bad(format!(
                "L-GP(R) window ({}, {}] overlaps the regional region E_R > {}",
                self.regional_global_min_endemicity_ratio,
                self.global_max_endemicity_ratio,
                self.global_max_endemicity_ratio
            ));
        }
        let tiers = [
            ("xl_usage_quantile", self.xl_usage_quantile),
            ("l_usage_quantile", self.l_usage_quantile),
            ("m_usage_quantile", self.m_usage_quantile),
        ];
        for w in tiers.windows(2) {
            let ((upper, u), (lower, l)) = (w[0], w[1]);
            if l >= u {
                return bad(format!(
                    "{lower} = {l} overlaps {upper} = {u}; tiers must strictly decrease"
                ));
            }
        }
        if self.m_usage_quantile <= 0.0 {
            return bad("m_usage_quantile must be positive so S-GP is non-empty".into());
        }
        if self.regional_large_usage_quantile <= 0.0 || self.regional_large_usage_quantile >= 1.0 {
            return bad(format!(
                "regional_large_usage_quantile = {} leaves L-RP or S-RP empty",
                self.regional_large_usage_quantile
            ));
        }
        if !(self.long_tail_min_peak_usage >= 0.0 && self.long_tail_min_total_usage >= 0.0) {
            return bad("long-tail thresholds must be non-negative".into());
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Usage cut points derived from the kept providers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageTiers {
    pub xl: f64,
    pub l: f64,
    pub m: f64,
    pub regional_large: f64,
}

impl UsageTiers {
    pub fn from_usage(usages: &[f64], rules: &ClassRules) -> Self {
        Self {
            xl: quantile(usages, rules.xl_usage_quantile),
            l: quantile(usages, rules.l_usage_quantile),
            m: quantile(usages, rules.m_usage_quantile),
            regional_large: quantile(usages, rules.regional_large_usage_quantile),
        }
    }
}

/// Class for an exemplar with usage `u` and endemicity ratio `er`.
pub fn class_for(u: f64, er: f64, tiers: &UsageTiers, rules: &ClassRules) -> ProviderClass {
    if er <= rules.global_max_endemicity_ratio {
        if u >= tiers.xl {
            ProviderClass::XlGp
        } else if u >= tiers.l {
            if er > rules.regional_global_min_endemicity_ratio {
                ProviderClass::LGpR
            } else {
                ProviderClass::LGp
            }
        } else if u >= tiers.m {
            ProviderClass::MGp
        } else {
            ProviderClass::SGp
        }
    } else if u >= tiers.regional_large {
        ProviderClass::LRp
    } else {
        ProviderClass::SRp
    }
}

/// Clusters keyed by provider.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: BTreeMap<String, usize>,
    /// Exemplar provider of each cluster id.
    pub exemplars: Vec<String>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Labels every provider: kept providers take their cluster exemplar's class,
/// long-tail providers are always XS-RP.
pub fn assign_classes(
    clusters: &ClusterResult,
    kept: &[ProviderFeatures],
    long_tail: &[ProviderFeatures],
    rules: &ClassRules,
) -> Result<BTreeMap<String, ProviderClass>, ClassifyError> {
    rules.validate()?;
    let by_key: BTreeMap<&str, &ProviderFeatures> = kept.iter().map(|f| (f.provider.as_str(), f)).collect();
    let usages: Vec<f64> = kept.iter().map(|f| f.usage).collect();
    let tiers = UsageTiers::from_usage(&usages, rules);
    let cluster_class: Vec<ProviderClass> = clusters
        .exemplars
        .iter()
        .map(|e| {
            let f = by_key
                .get(e.as_str())
                .ok_or_else(|| ClassifyError::MissingProvider(e.clone()))?;
            Ok(class_for(f.usage, f.endemicity_ratio, &tiers, rules))
        })
        .collect::<Result<_, ClassifyError>>()?;
    let mut classes = BTreeMap::new();
    for f in kept {
        let cid = clusters
            .assignments
            .get(&f.provider)
            .ok_or_else(|| ClassifyError::MissingProvider(f.provider.clone()))?;
        classes.insert(f.provider.clone(), cluster_class[*cid]);
    }
    for f in long_tail {
        classes.insert(f.provider.clone(), ProviderClass::XsRp);
    }
    Ok(classes)
}

/// Order of the feature transforms before clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformOrder {
    #[default]
    PcaThenScale,
    ScaleThenPca,
    ScaleOnly,
}

impl FromStr for TransformOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pca-then-scale" => Ok(Self::PcaThenScale),
            "scale-then-pca" => Ok(Self::ScaleThenPca),
            "scale-only" => Ok(Self::ScaleOnly),
            _ => Err(format!(
                "unknown transform order {s:?} (expected pca-then-scale, scale-then-pca or scale-only)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifyConfig {
    pub rules: ClassRules,
    pub order: TransformOrder,
    pub affinity: AffinityPropagation,
}

/// Everything the classification produced for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub kept: Vec<ProviderFeatures>,
    pub long_tail: Vec<ProviderFeatures>,
    pub clusters: ClusterResult,
    pub classes: BTreeMap<String, ProviderClass>,
}

fn transform(points: &[[f64; 2]], order: TransformOrder) -> Result<Vec<[f64; 2]>, ClassifyError> {
    let rotate = |p: &[[f64; 2]]| match pca2(p) {
        Ok(r) => Ok(r.points),
        // Identical points: nothing to rotate.
        Err(ClassifyError::ZeroVariance) => Ok(vec![[0.0, 0.0]; p.len()]),
        Err(e) => Err(e),
    };
    match order {
        TransformOrder::PcaThenScale => minmax_scale(&rotate(points)?),
        TransformOrder::ScaleThenPca => rotate(&minmax_scale(points)?),
        TransformOrder::ScaleOnly => minmax_scale(points),
    }
}

/// Runs the whole classification over provider features.
///
/// Providers are processed in key order, so the result does not depend on
/// the order of `features`.
pub fn classify_providers(
    features: &[ProviderFeatures],
    config: &ClassifyConfig,
) -> Result<Classification, ClassifyError> {
    config.rules.validate()?;
    let mut sorted = features.to_vec();
    sorted.sort_by(|a, b| a.provider.cmp(&b.provider));
    sorted.dedup_by(|a, b| a.provider == b.provider);
    let (kept, long_tail) = filter_long_tail(&sorted, &config.rules.long_tail());

    let clusters = match kept.len() {
        0 => ClusterResult {
            assignments: BTreeMap::new(),
            exemplars: Vec::new(),
            iterations_run: 0,
            converged: true,
        },
        1 => ClusterResult {
            assignments: BTreeMap::from([(kept[0].provider.clone(), 0)]),
            exemplars: vec![kept[0].provider.clone()],
            iterations_run: 0,
            converged: true,
        },
        _ => {
            let raw: Vec<[f64; 2]> = kept.iter().map(|f| [f.usage, f.endemicity_ratio]).collect();
            let points = transform(&raw, config.order)?;
            let ap = config.affinity.fit(&points)?;
            // Exemplar indices are ascending in key order, so cluster ids are too.
            ClusterResult {
                assignments: kept
                    .iter()
                    .zip(&ap.labels)
                    .map(|(f, &l)| (f.provider.clone(), l))
                    .collect(),
                exemplars: ap.exemplars.iter().map(|&i| kept[i].provider.clone()).collect(),
                iterations_run: ap.iterations,
                converged: ap.converged,
            }
        }
    };
    let classes = assign_classes(&clusters, &kept, &long_tail, &config.rules)?;
    Ok(Classification {
        kept,
        long_tail,
        clusters,
        classes,
    })
}

impl Classification {
    /// CSV with columns `provider,cluster_id,exemplar,class`; long-tail
    /// providers have empty cluster and exemplar fields.
    pub fn write_csv(&self, out: impl Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["provider", "cluster_id", "exemplar", "class"])?;
        for (provider, class) in &self.classes {
            let (cid, exemplar) = match self.clusters.assignments.get(provider) {
                Some(&c) => (c.to_string(), self.clusters.exemplars[c].clone()),
                None => (String::new(), String::new()),
            };
            w.write_record([provider.as_str(), &cid, &exemplar, class.as_str()])?;
        }
        w.flush()
    }

    /// Providers per class.
    pub fn class_counts(&self) -> BTreeMap<ProviderClass, usize> {
        let mut counts = BTreeMap::new();
        for c in self.classes.values() {
            *counts.entry(*c).or_default() += 1;
        }
        counts
    }

    pub fn long_tail_keys(&self) -> BTreeSet<&str> {
        self.long_tail.iter().map(|f| f.provider.as_str()).collect()
    }
}

/// CSV with columns `provider,usage,endemicity_ratio,max_country_usage`.
pub fn write_features_csv(out: impl Write, features: &[ProviderFeatures]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["provider", "usage", "endemicity_ratio", "max_country_usage"])?;
    for f in features {
        w.write_record([
            f.provider.clone(),
            format!("{:.6}", f.usage),
            format!("{:.6}", f.endemicity_ratio),
            format!("{:.6}", f.max_country_usage),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(p: &str, usage: f64, er: f64, peak: f64) -> ProviderFeatures {
        ProviderFeatures {
            provider: p.into(),
            usage,
            endemicity_ratio: er,
            max_country_usage: peak,
        }
    }

    #[test]
    fn long_tail_examples() {
        let rule = LongTailRule::default();
        let fs = [
            feat("tiny-share", 50.0, 0.2, 0.05),
            feat("tiny-usage", 9.0, 0.2, 5.0),
            feat("kept", 50.0, 0.2, 5.0),
        ];
        let (kept, tail) = filter_long_tail(&fs, &rule);
        assert_eq!(kept.iter().map(|f| f.provider.as_str()).collect::<Vec<_>>(), ["kept"]);
        assert_eq!(tail.len(), 2);
    }

    #[test]
    fn features_from_records() {
        let rec = |c: &str, org: &str| WebsiteRecord {
            domain: "x.com".into(),
            country: c.into(),
            tld: "com".into(),
            hosting_org: Some(org.into()),
            ..Default::default()
        };
        let records = vec![
            rec("US", "A"),
            rec("US", "A"),
            rec("US", "B"),
            rec("US", "A"),
            rec("DE", "B"),
            rec("DE", "B"),
        ];
        let f = provider_features(&records, Layer::Hosting);
        // A: US 75%, DE 0% -> U = 75, E = 75, E_R = 0.5. B: DE 100%, US 25%.
        assert_eq!(f[0].provider, "A");
        assert_eq!(f[0].usage, 75.0);
        assert_eq!(f[0].endemicity_ratio, 0.5);
        assert_eq!(f[1].max_country_usage, 100.0);
        assert_eq!(f[1].usage, 125.0);
        assert!((f[1].endemicity_ratio - 75.0 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn rule_examples() {
        let rules = ClassRules::default();
        let usages: Vec<f64> = (1..=100).map(f64::from).collect();
        let tiers = UsageTiers::from_usage(&usages, &rules);
        assert_eq!(class_for(100.0, 0.1, &tiers, &rules), ProviderClass::XlGp);
        assert_eq!(class_for(97.0, 0.1, &tiers, &rules), ProviderClass::LGp);
        assert_eq!(class_for(97.0, 0.45, &tiers, &rules), ProviderClass::LGpR);
        assert_eq!(class_for(90.0, 0.1, &tiers, &rules), ProviderClass::MGp);
        assert_eq!(class_for(20.0, 0.5, &tiers, &rules), ProviderClass::SGp);
        assert_eq!(class_for(70.0, 0.9, &tiers, &rules), ProviderClass::LRp);
        assert_eq!(class_for(10.0, 0.9, &tiers, &rules), ProviderClass::SRp);
    }

    #[test]
    fn rules_file() {
        let r = ClassRules::parse("global_max_endemicity_ratio = 0.6\nxl_usage_quantile = 0.98\n").unwrap();
        assert_eq!(r.global_max_endemicity_ratio, 0.6);
        assert_eq!(r.l_usage_quantile, 0.95);
        let err = ClassRules::parse("l_usage_quantile = 0.995\n").unwrap_err();
        assert!(
            err.to_string()
                .contains("l_usage_quantile = 0.995 overlaps xl_usage_quantile"),
            "{err}"
        );
        let err = ClassRules::parse("regional_global_min_endemicity_ratio = 0.55\n").unwrap_err();
        assert!(err.to_string().contains("L-GP(R) window"), "{err}");
        assert!(ClassRules::parse("bogus = 1\n").is_err());
        assert!(ClassRules::parse("global_max_endemicity_ratio = 1.0\n").is_err());
    }

    #[test]
    fn class_names_round_trip() {
        for c in ProviderClass::ALL {
            assert_eq!(c.as_str().parse::<ProviderClass>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
    }

    #[test]
    fn pipeline_assigns_every_provider() {
        let mut fs = vec![feat("cloud", 3000.0, 0.05, 60.0), feat("cdn", 2900.0, 0.08, 55.0)];
        for i in 0..8 {
            fs.push(feat(&format!("regional{i}"), 40.0 + i as f64, 0.95, 30.0));
        }
        fs.push(feat("tail", 5.0, 0.99, 5.0));
        let c = classify_providers(&fs, &ClassifyConfig::default()).unwrap();
        assert_eq!(c.classes.len(), fs.len());
        assert_eq!(c.classes["tail"], ProviderClass::XsRp);
        assert_eq!(c.classes["cloud"], ProviderClass::XlGp);
        assert!(c.classes["regional0"] == ProviderClass::LRp || c.classes["regional0"] == ProviderClass::SRp);

        let mut shuffled = fs.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        assert_eq!(
            classify_providers(&shuffled, &ClassifyConfig::default())
                .unwrap()
                .classes,
            c.classes
        );

        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("provider,cluster_id,exemplar,class\n"));
        assert!(text.contains("tail,,,XS-RP\n"));
    }

    #[test]
    fn degenerate_inputs() {
        let one = [feat("solo", 100.0, 0.1, 50.0)];
        let c = classify_providers(&one, &ClassifyConfig::default()).unwrap();
        assert_eq!(c.classes["solo"], ProviderClass::XlGp);

        let same = [feat("a", 100.0, 0.1, 50.0), feat("b", 100.0, 0.1, 50.0)];
        let c = classify_providers(&same, &ClassifyConfig::default()).unwrap();
        assert_eq!(c.clusters.exemplars.len(), 1);
        assert_eq!(c.classes.len(), 2);

        let c = classify_providers(&[], &ClassifyConfig::default()).unwrap();
        assert!(c.classes.is_empty());
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
    }
}
