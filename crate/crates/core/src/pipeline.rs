//! Per-country, per-layer scoring and the report built from it.
//!
//! Countries are scored in parallel over the immutable record set; every
//! result is collected back in country-code order so reports are byte-stable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::ProviderClass;
use crate::emd::{emd_centralization_with, EmdError, TransportSolver};
use crate::ingest::{AnnotationStats, Continent, CountryTable, WebsiteRecord};
use crate::layer::Layer;
use crate::metrics::{
    centralization_score, concentration_band, correlation_band, insularity_count, pearson, tld_insularity, CcMap,
    CentralizationScore, CorrelationBand, MetricsError, ProviderDistribution,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{country}/{layer}: {source}")]
    Metrics {
        country: String,
        layer: Layer,
        source: MetricsError,
    },
    #[error("unknown country code {0:?}")]
    UnknownCountry(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A country's distribution at one layer, plus the records that had no
/// provider at that layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDistribution {
    pub distribution: ProviderDistribution,
    pub unknown: u64,
}

/// Counts the records of `country` by their provider at `layer`.
pub fn build_distribution(
    records: &[WebsiteRecord],
    country: &str,
    layer: Layer,
) -> Result<BuiltDistribution, MetricsError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut unknown = 0;
    for r in records.iter().filter(|r| r.country == country) {
        match r.provider_key(layer) {
            Some(k) => *counts.entry(k.to_string()).or_default() += 1,
            None => unknown += 1,
        }
    }
    if counts.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    Ok(BuiltDistribution {
        distribution: ProviderDistribution::new(country, layer, counts)?,
        unknown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Countries with fewer annotated sites are excluded.
    pub min_sites: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { min_sites: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountryScore {
    pub score: CentralizationScore,
    /// Sites without a provider at this layer; `score.total + unknown` is the
    /// country's site count.
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub country: String,
    pub sites: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCountry {
    pub rank: usize,
    pub country: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: Layer,
    pub scores: BTreeMap<String, CountryScore>,
    /// Descending by score, ties by country code.
    pub ranking: Vec<RankedCountry>,
    pub exclusions: Vec<Exclusion>,
}

/// Scores every country in `countries` at `layer`.
pub fn score_all(records: &[WebsiteRecord], countries: &[String], layer: Layer, opts: &ScoreOptions) -> LayerScores {
    let mut by_country: BTreeMap<&str, Vec<&WebsiteRecord>> = BTreeMap::new();
    for r in records {
        by_country.entry(r.country.as_str()).or_default().push(r);
    }
    let wanted: BTreeSet<&str> = countries.iter().map(String::as_str).collect();

    let results: Vec<(&str, Result<CountryScore, Exclusion>)> = wanted
        .par_iter()
        .map(|&c| {
            let recs: Vec<WebsiteRecord> = by_country
                .get(c)
                .map(|v| v.iter().map(|r| (*r).clone()).collect())
                .unwrap_or_default();
            let sites = recs.len() as u64;
            let exclude = |reason: String| Exclusion {
                country: c.to_string(),
                sites,
                reason,
            };
            if sites < opts.min_sites {
                return (c, Err(exclude(format!("fewer than {} sites", opts.min_sites))));
            }
            let out = match build_distribution(&recs, c, layer) {
                Ok(b) => match centralization_score(&b.distribution) {
                    Ok(score) => Ok(CountryScore {
                        score,
                        unknown: b.unknown,
                    }),
                    Err(e) => Err(exclude(e.to_string())),
                },
                Err(_) => Err(exclude(format!("no sites with a known {layer} provider"))),
            };
            (c, out)
        })
        .collect();

    let mut scores = BTreeMap::new();
    let mut exclusions = Vec::new();
    for (c, r) in results {
        match r {
            Ok(s) => {
                scores.insert(c.to_string(), s);
            }
            Err(e) => exclusions.push(e),
        }
    }
    let ranking = rank(&scores);
    LayerScores {
        layer,
        scores,
        ranking,
        exclusions,
    }
}

fn rank(scores: &BTreeMap<String, CountryScore>) -> Vec<RankedCountry> {
    let mut v: Vec<(&String, f64)> = scores.iter().map(|(c, s)| (c, s.score.value)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter()
        .enumerate()
        .map(|(i, (c, s))| RankedCountry {
            rank: i + 1,
            country: c.clone(),
            score: s,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Continent,
    Subregion,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Continent => "continent",
            Grouping::Subregion => "subregion",
        }
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continent" => Ok(Grouping::Continent),
            "subregion" => Ok(Grouping::Subregion),
            _ => Err(format!("unknown grouping {s:?} (expected continent or subregion)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalSummary {
    pub grouping: Grouping,
    pub groups: BTreeMap<String, GroupStats>,
}

/// Mean and population variance of the scores in each group, every country
/// weighted equally.
pub fn regional_summary(
    scores: &LayerScores,
    table: &CountryTable,
    grouping: Grouping,
) -> Result<RegionalSummary, PipelineError> {
    let mut members: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (c, s) in &scores.scores {
        let info = table.get(c).ok_or_else(|| PipelineError::UnknownCountry(c.clone()))?;
        let key = match grouping {
            Grouping::Continent => info.continent.to_string(),
            Grouping::Subregion => info.subregion.clone(),
        };
        members.entry(key).or_default().push(s.score.value);
    }
    let groups = members
        .into_iter()
        .map(|(g, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let variance = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (
                g,
                GroupStats {
                    mean,
                    variance,
                    count: v.len(),
                },
            )
        })
        .collect();
    Ok(RegionalSummary { grouping, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsularityCell {
    pub value: Option<f64>,
    /// Sites whose provider headquarters is unknown; they count as not insular.
    pub unknown: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsularityReport {
    pub cells: BTreeMap<Layer, BTreeMap<String, InsularityCell>>,
    /// Per layer, countries by descending insularity, ties by code. Failed
    /// cells are left out.
    pub rankings: BTreeMap<Layer, Vec<String>>,
}

impl InsularityReport {
    pub fn value(&self, layer: Layer, country: &str) -> Option<f64> {
        self.cells.get(&layer)?.get(country)?.value
    }
}

/// Insularity of every country at every layer. The TLD layer counts a site as
/// insular when its TLD maps to the country under `cc_map`. A failing cell is
/// recorded and the rest of the report still computed.
pub fn insularity_report(
    records: &[WebsiteRecord],
    countries: &[String],
    layers: &[Layer],
    cc_map: &CcMap,
) -> InsularityReport {
    let mut by_country: BTreeMap<&str, Vec<WebsiteRecord>> = BTreeMap::new();
    for r in records {
        by_country.entry(r.country.as_str()).or_default().push(r.clone());
    }
    let countries: BTreeSet<&str> = countries.iter().map(String::as_str).collect();
    let mut cells = BTreeMap::new();
    let mut rankings = BTreeMap::new();
    for &layer in layers {
        let row: BTreeMap<String, InsularityCell> = countries
            .par_iter()
            .map(|&c| {
                let recs = by_country.get(c).map(Vec::as_slice).unwrap_or_default();
                let result = if layer == Layer::Tld {
                    tld_insularity(recs, c, cc_map).map(|v| (v, 0))
                } else {
                    insularity_count(recs, c, layer).map(|n| (n.fraction(), n.unknown))
                };
                let cell = match result {
                    Ok((v, unknown)) => InsularityCell {
                        value: Some(v),
                        unknown,
                        error: None,
                    },
                    Err(e) => InsularityCell {
                        value: None,
                        unknown: 0,
                        error: Some(e.to_string()),
                    },
                };
                (c.to_string(), cell)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let mut order: Vec<(&String, f64)> = row.iter().filter_map(|(c, cell)| Some((c, cell.value?))).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rankings.insert(layer, order.into_iter().map(|(c, _)| c.clone()).collect());
        cells.insert(layer, row);
    }
    InsularityReport { cells, rankings }
}

/// Provider classes per layer, keyed by provider.
pub type ClassMap = BTreeMap<Layer, BTreeMap<String, ProviderClass>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub layer: Layer,
    /// `share:<class>` or `insularity`, correlated against the score.
    pub pair: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub band: Option<CorrelationBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn correlate(layer: Layer, pair: String, x: &[f64], y: &[f64]) -> CorrelationRow {
    let (rho, note) = match pearson(x, y) {
        Ok(r) => (Some(r), None),
        Err(MetricsError::DegenerateSeries | MetricsError::TooFewObservations(_)) => (None, Some("degenerate".into())),
        Err(e) => (None, Some(e.to_string())),
    };
    CorrelationRow {
        layer,
        pair,
        n: x.len(),
        rho,
        band: rho.map(correlation_band),
        note,
    }
}

/// Correlates each layer's scores with the per-country share of sites served
/// by each provider class, and with the layer's insularity. Only scored
/// countries take part.
pub fn correlation_report(
    scores: &[LayerScores],
    records: &[WebsiteRecord],
    classes: &ClassMap,
    insularity: Option<&InsularityReport>,
) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    for ls in scores {
        let layer = ls.layer;
        let countries: Vec<&String> = ls.scores.keys().collect();
        let s: Vec<f64> = countries.iter().map(|c| ls.scores[*c].score.value).collect();

        if let Some(class_of) = classes.get(&layer) {
            let mut shares: BTreeMap<&str, BTreeMap<ProviderClass, u64>> = BTreeMap::new();
            for r in records {
                if let Some(class) = r.provider_key(layer).and_then(|k| class_of.get(k)) {
                    *shares.entry(r.country.as_str()).or_default().entry(*class).or_default() += 1;
                }
            }
            for class in ProviderClass::ALL {
                let x: Vec<f64> = countries
                    .iter()
                    .map(|c| {
                        let n = shares.get(c.as_str()).and_then(|m| m.get(&class)).copied().unwrap_or(0);
                        n as f64 / ls.scores[*c].score.total as f64
                    })
                    .collect();
                rows.push(correlate(layer, format!("share:{class}"), &x, &s));
            }
        }

        if let Some(ins) = insularity.filter(|i| i.cells.contains_key(&layer)) {
            let (x, y): (Vec<f64>, Vec<f64>) = countries
                .iter()
                .zip(&s)
                .filter_map(|(c, &v)| Some((ins.value(layer, c)?, v)))
                .unzip();
            rows.push(correlate(layer, "insularity".into(), &x, &y));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMismatch {
    pub layer: Layer,
    pub country: String,
    pub closed_form: f64,
    pub oracle: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub checked: usize,
    /// Distributions too large for the exact solver.
    pub skipped: usize,
    pub mismatches: Vec<OracleMismatch>,
}

/// Recomputes up to `sample` scores of each layer (every score when `None`)
/// by solving the transport problem, and reports differences above `tol`.
/// Countries are sampled at evenly spaced ranks.
pub fn oracle_check(
    records: &[WebsiteRecord],
    scores: &[LayerScores],
    sample: Option<usize>,
    tol: f64,
) -> OracleSummary {
    let solver = TransportSolver::default();
    let mut summary = OracleSummary::default();
    for ls in scores {
        let all: Vec<&RankedCountry> = ls.ranking.iter().collect();
        let picked: Vec<&RankedCountry> = match sample {
            Some(k) if k < all.len() => (0..k).map(|i| all[i * all.len() / k]).collect(),
            _ => all,
        };
        let results: Vec<(String, f64, Result<f64, String>)> = picked
            .par_iter()
            .map(|rc| {
                let oracle = build_distribution(records, &rc.country, ls.layer)
                    .map_err(|e| e.to_string())
                    .and_then(|b| {
                        emd_centralization_with(&solver, &b.distribution).map_err(|e| match e {
                            EmdError::TooLarge { .. } => String::from("too large"),
                            e => e.to_string(),
                        })
                    });
                (rc.country.clone(), rc.score, oracle)
            })
            .collect();
        for (country, closed_form, oracle) in results {
            match oracle {
                Err(e) if e == "too large" => summary.skipped += 1,
                Ok(o) if (o - closed_form).abs() <= tol => summary.checked += 1,
                other => {
                    summary.checked += 1;
                    let (oracle, error) = match other {
                        Ok(o) => (Some(o), None),
                        Err(e) => (None, Some(e)),
                    };
                    summary.mismatches.push(OracleMismatch {
                        layer: ls.layer,
                        country,
                        closed_form,
                        oracle,
                        error,
                    });
                }
            }
        }
    }
    summary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub scores: LayerScores,
    pub regional: Vec<RegionalSummary>,
}

/// Everything a report run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub layers: Vec<LayerReport>,
    pub continents: BTreeMap<String, Continent>,
    pub insularity: InsularityReport,
    pub correlations: Vec<CorrelationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub layers: Vec<Layer>,
    pub score: ScoreOptions,
    pub classes: ClassMap,
    pub annotation: Option<AnnotationStats>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            layers: Layer::ALL.to_vec(),
            score: ScoreOptions::default(),
            classes: ClassMap::new(),
            annotation: None,
        }
    }
}

/// Countries present in `records`, sorted.
pub fn countries_of(records: &[WebsiteRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records.iter().map(|r| r.country.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

pub fn build_report(
    records: &[WebsiteRecord],
    table: &CountryTable,
    config: &ReportConfig,
) -> Result<ReportBundle, PipelineError> {
    let countries = countries_of(records);
    let mut continents = BTreeMap::new();
    for c in &countries {
        let info = table.get(c).ok_or_else(|| PipelineError::UnknownCountry(c.clone()))?;
        continents.insert(c.clone(), info.continent);
    }
    let mut layers: Vec<Layer> = config.layers.clone();
    layers.sort();
    layers.dedup();

    let scores: Vec<LayerScores> = layers
        .iter()
        .map(|&l| score_all(records, &countries, l, &config.score))
        .collect();
    let cc_map = CcMap::from_country_codes(table.codes());
    let insularity = insularity_report(records, &countries, &layers, &cc_map);
    let correlations = correlation_report(&scores, records, &config.classes, Some(&insularity));
    let layers = scores
        .into_iter()
        .map(|s| {
            let regional = [Grouping::Continent, Grouping::Subregion]
                .into_iter()
                .map(|g| regional_summary(&s, table, g))
                .collect::<Result<_, _>>()?;
            Ok(LayerReport { scores: s, regional })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(ReportBundle {
        layers,
        continents,
        insularity,
        correlations,
        annotation: config.annotation.clone(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown format {s:?} (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    pub format: ReportFormat,
    /// Adds a concentration band column to score tables.
    pub band: bool,
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

/// `rank,country,continent,score[,band]`, one row per ranked country.
pub fn write_scores_csv(
    out: impl Write,
    scores: &LayerScores,
    continents: &BTreeMap<String, Continent>,
    band: bool,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank", "country", "continent", "score"];
    if band {
        header.push("band");
    }
    w.write_record(&header)?;
    for r in &scores.ranking {
        let mut row = vec![
            r.rank.to_string(),
            r.country.clone(),
            continents.get(&r.country).map(|c| c.to_string()).unwrap_or_default(),
            f4(r.score),
        ];
        if band {
            row.push(concentration_band(r.score).as_str().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_exclusions_csv(out: impl Write, exclusions: &[Exclusion]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "sites", "reason"])?;
    for e in exclusions {
        w.write_record([e.country.as_str(), &e.sites.to_string(), &e.reason])?;
    }
    w.flush()
}

pub fn write_regional_csv(out: impl Write, regional: &[RegionalSummary]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["grouping", "group", "count", "mean", "variance"])?;
    for r in regional {
        for (g, s) in &r.groups {
            w.write_record([
                r.grouping.as_str(),
                g,
                &s.count.to_string(),
                &f4(s.mean),
                &f4(s.variance),
            ])?;
        }
    }
    w.flush()
}

pub fn write_insularity_csv(out: impl Write, report: &InsularityReport) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "rank", "country", "insularity", "unknown_hq"])?;
    for (layer, cells) in &report.cells {
        let ranked = report.rankings.get(layer).map(Vec::as_slice).unwrap_or_default();
        for (i, c) in ranked.iter().enumerate() {
            let cell = &cells[c];
            w.write_record([
                layer.as_str(),
                &(i + 1).to_string(),
                c,
                &cell.value.map(f4).unwrap_or_default(),
                &cell.unknown.to_string(),
            ])?;
        }
        for (c, cell) in cells.iter().filter(|(_, cell)| cell.value.is_none()) {
            w.write_record([layer.as_str(), "", c, cell.error.as_deref().unwrap_or("error"), ""])?;
        }
    }
    w.flush()
}

pub fn write_correlations_csv(out: impl Write, rows: &[CorrelationRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "pair", "n", "rho", "band"])?;
    for r in rows {
        let (rho, band) = match (r.rho, r.band) {
            (Some(rho), Some(b)) => (f4(rho), b.as_str().to_string()),
            _ => (String::new(), r.note.clone().unwrap_or_default()),
        };
        w.write_record([r.layer.as_str(), &r.pair, &r.n.to_string(), &rho, &band])?;
    }
    w.flush()
}

fn write_file(path: PathBuf, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<PathBuf, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, buf).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the bundle into `dir` and returns the files written, in order.
///
/// CSV output is one `scores_<layer>.csv` and `regional_<layer>.csv` per
/// layer, `exclusions_<layer>.csv` only when something was excluded, plus
/// `insularity.csv` and `correlations.csv`. JSON output is a single
/// `report.json`.
pub fn emit_report(bundle: &ReportBundle, opts: &EmitOptions, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    match opts.format {
        ReportFormat::Json => {
            written.push(write_file(dir.join("report.json"), |buf| {
                serde_json::to_writer_pretty(&mut *buf, bundle)?;
                buf.push(b'\n');
                Ok(())
            })?);
        }
        ReportFormat::Csv => {
            for l in &bundle.layers {
                let name = l.scores.layer.as_str();
                written.push(write_file(dir.join(format!("scores_{name}.csv")), |b| {
                    write_scores_csv(b, &l.scores, &bundle.continents, opts.band)
                })?);
                written.push(write_file(dir.join(format!("regional_{name}.csv")), |b| {
                    write_regional_csv(b, &l.regional)
                })?);
                if !l.scores.exclusions.is_empty() {
                    written.push(write_file(dir.join(format!("exclusions_{name}.csv")), |b| {
                        write_exclusions_csv(b, &l.scores.exclusions)
                    })?);
                }
            }
            written.push(write_file(dir.join("insularity.csv"), |b| {
                write_insularity_csv(b, &bundle.insularity)
            })?);
            written.push(write_file(dir.join("correlations.csv"), |b| {
                write_correlations_csv(b, &bundle.correlations)
            })?);
        }
    }
    Ok(written)
}
