//! `webcent`: collect, annotate, score, classify and report on the
//! centralization of web infrastructure per country.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use webcent_collector::{collect_jsonl, read_domain_list, Clock, ProbeConfig};
use webcent_core::classify::{
    classify_providers, provider_features, write_features_csv, ClassRules, ClassifyConfig, TransformOrder,
};
use webcent_core::ingest::{
    annotate, parse_measurements, parse_toplist, read_records, write_records, AddressPolicy, AnnotateOptions,
    AnnotationStats, AnycastSet, AsOrgTable, CaOwnerTable, CountryTable, GeoTable, LoadOptions, Loaded, PrefixTable,
    Tables, WebsiteRecord,
};
use webcent_core::layer::{parse_layer_list, Layer};
use webcent_core::pipeline::{
    build_report, countries_of, emit_report, oracle_check, score_all, write_exclusions_csv, write_scores_csv, ClassMap,
    EmitOptions, LayerScores, ReportConfig, ReportFormat, ScoreOptions,
};

use manifest::Manifest;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "webcent", version, about = "Centralization of web infrastructure by country")]
struct Cli {
    /// TOML file with default inputs and settings; flags override it.
    #[arg(long, global = true, env = "WEBCENT_MANIFEST")]
    manifest: Option<PathBuf>,
    /// Worker threads for parallel stages [default: available parallelism].
    #[arg(long, global = true, env = "WEBCENT_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Seed for randomized sampling (oracle checks only).
    #[arg(long, global = true, env = "WEBCENT_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve domains and fetch certificate issuers into a measurements file.
    Collect(CollectArgs),
    /// Join a toplist with measurements and lookup tables.
    Annotate(AnnotateArgs),
    /// Centralization score per country and layer.
    Score(ScoreArgs),
    /// Provider classes per layer.
    Classify(ClassifyArgs),
    /// Full report: scores, regional summaries, insularity and correlations.
    Report(ReportArgs),
    /// Recompute scores with the exact transport solver and compare.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct CollectArgs {
    /// Newline-separated domain list.
    #[arg(long)]
    domains: Option<PathBuf>,
    /// DNS resolver, `address:port`.
    #[arg(long, env = "WEBCENT_RESOLVER")]
    resolver: Option<SocketAddr>,
    /// Output JSON lines file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 443)]
    tls_port: u16,
    #[arg(long, env = "WEBCENT_TIMEOUT_MS", default_value_t = 3000, value_parser = clap::value_parser!(u64).range(1..))]
    timeout_ms: u64,
    /// Probes running at once.
    #[arg(long, env = "WEBCENT_MAX_INFLIGHT", value_parser = clap::value_parser!(u64).range(1..))]
    max_inflight: Option<u64>,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Skip the TLS handshake.
    #[arg(long)]
    no_tls: bool,
    /// Also resolve and probe IPv6 addresses.
    #[arg(long)]
    ipv6: bool,
    /// Probes started per second at most.
    #[arg(long)]
    rate_limit: Option<f64>,
    /// Stamp every record with this Unix time instead of the clock.
    #[arg(long)]
    fixed_time: Option<i64>,
}

#[derive(Args)]
struct InputArgs {
    /// Country reference table [default: built in].
    #[arg(long)]
    countries: Option<PathBuf>,
    /// Layers to process, e.g. `hosting,tld`.
    #[arg(long, env = "WEBCENT_LAYERS")]
    layers: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[command(flatten)]
    common: InputArgs,
    #[arg(long)]
    toplist: Option<PathBuf>,
    #[arg(long)]
    measurements: Option<PathBuf>,
    #[arg(long)]
    pfx2as: Option<PathBuf>,
    #[arg(long)]
    as2org: Option<PathBuf>,
    #[arg(long)]
    geo: Option<PathBuf>,
    #[arg(long)]
    anycast: Option<PathBuf>,
    #[arg(long)]
    ca_owners: Option<PathBuf>,
    /// `lowest` or `majority`.
    #[arg(long)]
    address_policy: Option<String>,
    /// Largest tolerated share of malformed lines per input file.
    #[arg(long, env = "WEBCENT_MAX_MALFORMED")]
    max_malformed: Option<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: InputArgs,
    /// Annotated records (JSON lines).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Countries with fewer sites are excluded.
    #[arg(long, env = "WEBCENT_MIN_SITES")]
    min_sites: Option<u64>,
    /// Add a concentration band column.
    #[arg(long)]
    band: bool,
    /// `csv` or `json`.
    #[arg(long, env = "WEBCENT_FORMAT")]
    format: Option<String>,
    /// Verify scores with the exact transport solver; fail on mismatch.
    #[arg(long)]
    oracle_check: bool,
    /// Countries per layer to verify [default: all].
    #[arg(long)]
    oracle_sample: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: InputArgs,
    #[arg(long)]
    records: Option<PathBuf>,
    /// Class thresholds (TOML).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// `pca-then-scale`, `scale-then-pca` or `scale-only`.
    #[arg(long, default_value = "pca-then-scale")]
    transform: TransformOrder,
    /// Also write provider features (U, E_R).
    #[arg(long)]
    dump_features: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: InputArgs,
    #[arg(long)]
    records: Option<PathBuf>,
    /// Annotation stats written by `annotate`.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, env = "WEBCENT_MIN_SITES")]
    min_sites: Option<u64>,
    #[arg(long, env = "WEBCENT_FORMAT")]
    format: Option<String>,
    #[arg(long)]
    band: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, env = "WEBCENT_LAYERS")]
    layers: Option<String>,
    #[arg(long, env = "WEBCENT_MIN_SITES")]
    min_sites: Option<u64>,
    /// Countries per layer to verify [default: all].
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let manifest = match &cli.manifest {
        Some(p) => Manifest::load(p)?,
        None => Manifest::default(),
    };
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.into()).build_global()?;
    }
    let ctx = Ctx {
        manifest,
        seed: cli.seed,
    };
    match cli.command {
        Command::Collect(a) => ctx.collect(a),
        Command::Annotate(a) => ctx.annotate(a),
        Command::Score(a) => ctx.score(a),
        Command::Classify(a) => ctx.classify(a),
        Command::Report(a) => ctx.report(a),
        Command::OracleCheck(a) => ctx.oracle(a),
    }
}

struct Ctx {
    manifest: Manifest,
    seed: Option<u64>,
}

/// An input path that must exist.
fn input(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let p = flag
        .or_else(|| fallback.clone())
        .ok_or_else(|| format!("missing --{name} (no flag and no manifest entry)"))?;
    if !p.is_file() {
        return Err(format!("{}: input file not found", p.display()).into());
    }
    Ok(p)
}

fn optional_input(flag: Option<PathBuf>, fallback: &Option<PathBuf>) -> Result<Option<PathBuf>> {
    match flag.or_else(|| fallback.clone()) {
        Some(p) if !p.is_file() => Err(format!("{}: input file not found", p.display()).into()),
        other => Ok(other),
    }
}

fn open(p: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(p).map_err(|e| format!("{}: {e}", p.display()))?,
    ))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

fn write_file(p: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let file = File::create(p).map_err(|e| format!("{}: {e}", p.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| format!("{}: {e}", p.display()))?;
    Ok(())
}

fn report_rejects<T>(what: &str, path: &Path, loaded: &Loaded<T>) {
    for row in &loaded.rejected.0 {
        eprintln!("warning: {}:{}: {} ({what})", path.display(), row.line, row.message);
    }
}

fn parse_format(s: Option<String>) -> Result<ReportFormat> {
    Ok(s.as_deref().unwrap_or("csv").parse::<ReportFormat>()?)
}

impl Ctx {
    fn layers(&self, flag: Option<String>) -> Result<Vec<Layer>> {
        match flag.or_else(|| self.manifest.layers.clone()) {
            Some(s) => Ok(parse_layer_list(&s)?),
            None => Ok(Layer::ALL.to_vec()),
        }
    }

    fn out_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        let d = flag
            .or_else(|| self.manifest.out.clone())
            .ok_or("missing --out (no flag and no manifest entry)")?;
        create_dir(&d)?;
        Ok(d)
    }

    fn countries(&self, flag: Option<PathBuf>) -> Result<CountryTable> {
        match optional_input(flag, &self.manifest.countries)? {
            Some(p) => Ok(CountryTable::parse(open(&p)?, &LoadOptions::default())?.value),
            None => Ok(CountryTable::builtin()),
        }
    }

    fn records(&self, flag: Option<PathBuf>) -> Result<Vec<WebsiteRecord>> {
        let p = input(flag, &self.manifest.records, "records")?;
        Ok(read_records(open(&p)?).map_err(|e| format!("{}: {e}", p.display()))?)
    }

    fn score_options(&self, flag: Option<u64>) -> ScoreOptions {
        ScoreOptions {
            min_sites: flag
                .or(self.manifest.min_sites)
                .unwrap_or(ScoreOptions::default().min_sites),
        }
    }

    fn rules(&self, flag: Option<PathBuf>) -> Result<ClassRules> {
        match optional_input(flag, &self.manifest.rules)? {
            Some(p) => {
                let text = fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                Ok(ClassRules::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?)
            }
            None => Ok(ClassRules::default()),
        }
    }

    fn collect(&self, a: CollectArgs) -> Result<ExitCode> {
        let domains_path = input(a.domains, &self.manifest.domains, "domains")?;
        let out = a
            .out
            .or_else(|| self.manifest.measurements.clone())
            .ok_or("missing --out (no flag and no manifest entry)")?;
        let resolver = match (a.resolver, &self.manifest.resolver) {
            (Some(r), _) => r,
            (None, Some(s)) => s.parse().map_err(|e| format!("manifest resolver {s:?}: {e}"))?,
            (None, None) => return Err("missing --resolver".into()),
        };
        let max_inflight = match (a.max_inflight, self.manifest.max_inflight) {
            (Some(n), _) => n as usize,
            (None, Some(0)) => return Err("manifest max_inflight must be at least 1".into()),
            (None, Some(n)) => n,
            (None, None) => ProbeConfig::new(resolver).max_inflight,
        };
        let config = ProbeConfig {
            tls_port: a.tls_port,
            timeout: Duration::from_millis(a.timeout_ms),
            max_inflight,
            retries: a.retries,
            tls: !a.no_tls,
            ipv6: a.ipv6,
            rate_limit: a.rate_limit,
            clock: a.fixed_time.map_or(Clock::System, Clock::Fixed),
            ..ProbeConfig::new(resolver)
        };
        let domains = read_domain_list(open(&domains_path)?)?;

        // Written under a temporary name so an interrupted run is recognizable.
        let partial = out.with_extension("partial");
        let file = File::create(&partial).map_err(|e| format!("{}: {e}", partial.display()))?;
        let stats = collect_jsonl(&domains, &config, BufWriter::new(file))
            .map_err(|e| format!("{e}; partial output left in {}", partial.display()))?;
        fs::rename(&partial, &out).map_err(|e| format!("{}: {e}", out.display()))?;
        eprintln!(
            "collected {} domains: {} resolved, {} with certificate issuer, {} failed",
            stats.domains, stats.resolved, stats.tls_ok, stats.failed
        );
        Ok(ExitCode::SUCCESS)
    }

    fn annotate(&self, a: AnnotateArgs) -> Result<ExitCode> {
        let m = &self.manifest;
        let opts = LoadOptions {
            max_malformed_fraction: a
                .max_malformed
                .or(m.max_malformed)
                .unwrap_or(LoadOptions::default().max_malformed_fraction),
        };
        let countries = self.countries(a.common.countries)?;
        let toplist_p = input(a.toplist, &m.toplist, "toplist")?;
        let meas_p = input(a.measurements, &m.measurements, "measurements")?;
        let pfx_p = input(a.pfx2as, &m.pfx2as, "pfx2as")?;
        let org_p = input(a.as2org, &m.as2org, "as2org")?;
        let geo_p = optional_input(a.geo, &m.geo)?;
        let any_p = optional_input(a.anycast, &m.anycast)?;
        let ca_p = optional_input(a.ca_owners, &m.ca_owners)?;
        let layers = self.layers(a.common.layers)?;
        let policy: AddressPolicy = a
            .address_policy
            .or_else(|| m.address_policy.clone())
            .as_deref()
            .unwrap_or("lowest")
            .parse()?;
        let out = self.out_dir(a.common.out)?;

        let with_path = |p: &Path, e: webcent_core::ingest::IngestError| format!("{}: {e}", p.display());
        let toplist = parse_toplist(open(&toplist_p)?, &countries, &opts).map_err(|e| with_path(&toplist_p, e))?;
        report_rejects("toplist", &toplist_p, &toplist);
        let (measurements, duplicates) =
            parse_measurements(open(&meas_p)?, &opts).map_err(|e| with_path(&meas_p, e))?;
        report_rejects("measurements", &meas_p, &measurements);
        let prefixes = PrefixTable::parse(open(&pfx_p)?, &opts).map_err(|e| with_path(&pfx_p, e))?;
        report_rejects("pfx2as", &pfx_p, &prefixes);
        let as_orgs = AsOrgTable::parse(open(&org_p)?, &opts).map_err(|e| with_path(&org_p, e))?;
        report_rejects("as2org", &org_p, &as_orgs);
        let geo = match &geo_p {
            Some(p) => {
                let l = GeoTable::parse(open(p)?, &opts).map_err(|e| with_path(p, e))?;
                report_rejects("geo", p, &l);
                l.value
            }
            None => GeoTable::default(),
        };
        let anycast = match &any_p {
            Some(p) => {
                let l = AnycastSet::parse(open(p)?, &opts).map_err(|e| with_path(p, e))?;
                report_rejects("anycast", p, &l);
                l.value
            }
            None => AnycastSet::default(),
        };
        let ca_owners = match &ca_p {
            Some(p) => {
                let l = CaOwnerTable::parse(open(p)?, &opts).map_err(|e| with_path(p, e))?;
                report_rejects("ca_owners", p, &l);
                l.value
            }
            None => CaOwnerTable::default(),
        };
        let multi_origin_rows = prefixes.value.multi_origin_rows;
        let tables = Tables {
            prefixes: prefixes.value,
            as_orgs: as_orgs.value,
            geo,
            anycast,
            ca_owners,
        };
        let (records, mut stats) = annotate(
            &toplist.value,
            &measurements.value,
            &tables,
            &AnnotateOptions {
                address_policy: policy,
                layers,
            },
        );
        stats.multi_origin_rows = multi_origin_rows;
        stats.duplicate_measurements = duplicates;

        write_file(&out.join("records.jsonl"), |w| write_records(w, &records))?;
        write_file(&out.join("annotation_stats.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &stats)?;
            w.write_all(b"\n")
        })?;
        eprintln!(
            "annotated {} of {} toplist entries ({} without measurement)",
            stats.annotated, stats.toplist_entries, stats.missing_measurement
        );
        Ok(ExitCode::SUCCESS)
    }

    fn score(&self, a: ScoreArgs) -> Result<ExitCode> {
        let records = self.records(a.records)?;
        let layers = self.layers(a.common.layers)?;
        let table = self.countries(a.common.countries)?;
        let format = parse_format(a.format.or_else(|| self.manifest.format.clone()))?;
        let opts = self.score_options(a.min_sites);
        let out = self.out_dir(a.common.out)?;
        let countries = countries_of(&records);
        let continents = countries
            .iter()
            .filter_map(|c| Some((c.clone(), table.get(c)?.continent)))
            .collect();

        let scores: Vec<LayerScores> = layers
            .iter()
            .map(|&l| score_all(&records, &countries, l, &opts))
            .collect();
        match format {
            ReportFormat::Json => write_file(&out.join("scores.json"), |w| {
                serde_json::to_writer_pretty(&mut *w, &scores)?;
                w.write_all(b"\n")
            })?,
            ReportFormat::Csv => {
                for s in &scores {
                    let name = s.layer.as_str();
                    write_file(&out.join(format!("scores_{name}.csv")), |w| {
                        write_scores_csv(w, s, &continents, a.band)
                    })?;
                    if !s.exclusions.is_empty() {
                        write_file(&out.join(format!("exclusions_{name}.csv")), |w| {
                            write_exclusions_csv(w, &s.exclusions)
                        })?;
                    }
                }
            }
        }
        if a.oracle_check && !self.run_oracle(&records, &scores, a.oracle_sample, 1e-9) {
            return Ok(ExitCode::FAILURE);
        }
        Ok(ExitCode::SUCCESS)
    }

    /// Prints the comparison and returns whether every checked score agreed.
    fn run_oracle(&self, records: &[WebsiteRecord], scores: &[LayerScores], sample: Option<usize>, tol: f64) -> bool {
        let picked: Vec<LayerScores> = match (sample, self.seed.or(self.manifest.seed)) {
            // A seed draws a random sample instead of evenly spaced ranks.
            (Some(k), Some(seed)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                scores
                    .iter()
                    .map(|s| {
                        let mut ls = s.clone();
                        ls.ranking.shuffle(&mut rng);
                        ls.ranking.truncate(k);
                        ls
                    })
                    .collect()
            }
            _ => scores.to_vec(),
        };
        let sample = if self.seed.or(self.manifest.seed).is_some() {
            None
        } else {
            sample
        };
        let summary = oracle_check(records, &picked, sample, tol);
        for m in &summary.mismatches {
            eprintln!(
                "mismatch: {} {}: closed form {} vs oracle {}",
                m.layer,
                m.country,
                m.closed_form,
                m.oracle
                    .map_or_else(|| m.error.clone().unwrap_or_default(), |o| o.to_string())
            );
        }
        eprintln!(
            "oracle check: {} checked, {} skipped (too large), {} mismatched",
            summary.checked,
            summary.skipped,
            summary.mismatches.len()
        );
        summary.mismatches.is_empty()
    }

    fn classify(&self, a: ClassifyArgs) -> Result<ExitCode> {
        let rules = self.rules(a.rules)?;
        let records = self.records(a.records)?;
        let layers = self.layers(a.common.layers)?;
        let out = self.out_dir(a.common.out)?;
        let config = ClassifyConfig {
            rules,
            order: a.transform,
            ..Default::default()
        };
        for layer in layers {
            let features = provider_features(&records, layer);
            if a.dump_features {
                write_file(&out.join(format!("features_{layer}.csv")), |w| {
                    write_features_csv(w, &features)
                })?;
            }
            let c = classify_providers(&features, &config).map_err(|e| format!("{layer}: {e}"))?;
            write_file(&out.join(format!("classes_{layer}.csv")), |w| c.write_csv(w))?;
            let counts: Vec<String> = c.class_counts().iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("{layer}: {} providers, {}", c.classes.len(), counts.join(" "));
        }
        Ok(ExitCode::SUCCESS)
    }

    fn report(&self, a: ReportArgs) -> Result<ExitCode> {
        let rules = self.rules(a.rules)?;
        let records = self.records(a.records)?;
        let layers = self.layers(a.common.layers)?;
        let table = self.countries(a.common.countries)?;
        let format = parse_format(a.format.or_else(|| self.manifest.format.clone()))?;
        let annotation: Option<AnnotationStats> = match optional_input(a.stats, &self.manifest.stats)? {
            Some(p) => Some(serde_json::from_reader(open(&p)?).map_err(|e| format!("{}: {e}", p.display()))?),
            None => None,
        };
        let out = self.out_dir(a.common.out)?;

        let config = ClassifyConfig {
            rules,
            ..Default::default()
        };
        let mut classes = ClassMap::new();
        for &layer in &layers {
            let c = classify_providers(&provider_features(&records, layer), &config)
                .map_err(|e| format!("{layer}: {e}"))?;
            classes.insert(layer, c.classes);
        }
        let bundle = build_report(
            &records,
            &table,
            &ReportConfig {
                layers,
                score: self.score_options(a.min_sites),
                classes,
                annotation,
            },
        )?;
        emit_report(&bundle, &EmitOptions { format, band: a.band }, &out)?;
        let excluded: BTreeSet<&str> = bundle
            .layers
            .iter()
            .flat_map(|l| l.scores.exclusions.iter().map(|e| e.country.as_str()))
            .collect();
        if !excluded.is_empty() {
            eprintln!(
                "excluded from at least one layer: {}",
                excluded.into_iter().collect::<Vec<_>>().join(", ")
            );
        }
        Ok(ExitCode::SUCCESS)
    }

    fn oracle(&self, a: OracleArgs) -> Result<ExitCode> {
        let records = self.records(a.records)?;
        let layers = self.layers(a.layers)?;
        let opts = self.score_options(a.min_sites);
        let countries = countries_of(&records);
        let scores: Vec<LayerScores> = layers
            .iter()
            .map(|&l| score_all(&records, &countries, l, &opts))
            .collect();
        let mut out = io::stdout().lock();
        writeln!(out, "layer,countries")?;
        let per_layer: BTreeMap<Layer, usize> = scores.iter().map(|s| (s.layer, s.ranking.len())).collect();
        for (l, n) in per_layer {
            writeln!(out, "{l},{n}")?;
        }
        Ok(if self.run_oracle(&records, &scores, a.sample, a.tolerance) {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        })
    }
}
