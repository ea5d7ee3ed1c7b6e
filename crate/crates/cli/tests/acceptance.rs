//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test -p webcent --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, TcpListener};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use webcent_collector::mock::{MockDns, MockZone};
use webcent_core::classify::{covariance, pca2, AffinityPropagation};
use webcent_core::emd::{emd_centralization, solve_transport, CostMatrix, DiscreteDistribution};
use webcent_core::ingest::{read_records, Prefix, PrefixTable, WebsiteRecord};
use webcent_core::metrics::{
    centralization_score, concentration_band, endemicity_ratio, hhi, ConcentrationBand, UsageCurve,
};
use webcent_core::pipeline::ReportBundle;
use webcent_core::{Layer, ProviderDistribution};

use common::{golden_diff, read_tree, run_pipeline, stderr, webcent};

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dist(counts: &[u64]) -> ProviderDistribution {
    ProviderDistribution::from_counts("XX", Layer::Hosting, counts).unwrap()
}

/// Random positive counts over at most `max_n` providers summing to at most `max_c`.
fn random_counts(rng: &mut ChaCha8Rng, max_n: usize, max_c: u64) -> Vec<u64> {
    let n = rng.gen_range(1..=max_n);
    let c = rng.gen_range(n as u64..=max_c);
    // Random composition of c into n positive parts.
    let mut cuts: BTreeSet<u64> = BTreeSet::new();
    while cuts.len() < n - 1 {
        cuts.insert(rng.gen_range(1..c));
    }
    let mut prev = 0;
    let mut out: Vec<u64> = cuts
        .into_iter()
        .map(|x| {
            let d = x - prev;
            prev = x;
            d
        })
        .collect();
    out.push(c - prev);
    out
}

fn closed_form_vs_oracle() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE3D);
    for k in 0..200 {
        let counts = random_counts(&mut rng, 40, 500);
        let d = dist(&counts);
        let closed = centralization_score(&d).unwrap().value;
        let oracle = emd_centralization(&d).map_err(|e| e.to_string())?;
        ensure((closed - oracle).abs() <= 1e-9, || {
            format!("case {k} {counts:?}: closed form {closed} vs oracle {oracle}")
        })?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))
}

/// Every mass vector of length `n` with entries in `0..=3`.
fn mass_vectors(n: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=3).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// Minimal cost over every integer flow matrix with the given margins.
struct BruteForce<'a> {
    supply: &'a [u64],
    cost: &'a [Vec<i64>],
    cols: Vec<u64>,
    best: i64,
}

impl BruteForce<'_> {
    fn min_cost(supply: &[u64], demand: &[u64], cost: &[Vec<i64>]) -> i64 {
        let mut b = BruteForce {
            supply,
            cost,
            cols: demand.to_vec(),
            best: i64::MAX,
        };
        b.go(0, 0, supply[0], 0);
        b.best
    }

    /// Fills cell `(i, j)` with every amount that still fits.
    fn go(&mut self, i: usize, j: usize, row_left: u64, acc: i64) {
        if i == self.supply.len() {
            if self.cols.iter().all(|&c| c == 0) {
                self.best = self.best.min(acc);
            }
            return;
        }
        if j == self.cols.len() {
            if row_left == 0 {
                let next = self.supply.get(i + 1).copied().unwrap_or(0);
                self.go(i + 1, 0, next, acc);
            }
            return;
        }
        for f in 0..=row_left.min(self.cols[j]) {
            self.cols[j] -= f;
            self.go(i, j + 1, row_left - f, acc + f as i64 * self.cost[i][j]);
            self.cols[j] += f;
        }
    }
}

fn exhaustive_optimality() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut instances = 0;
    for n in 1..=4 {
        for m in 1..=4 {
            let rows = mass_vectors(n);
            let cols = mass_vectors(m);
            for s in &rows {
                let total: u64 = s.iter().sum();
                if total == 0 {
                    continue;
                }
                for t in cols.iter().filter(|t| t.iter().sum::<u64>() == total) {
                    let cost: Vec<Vec<i64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..10)).collect()).collect();
                    let want = BruteForce::min_cost(s, t, &cost);
                    let a = DiscreteDistribution::from_counts(s).unwrap();
                    let b = DiscreteDistribution::from_counts(t).unwrap();
                    let d = CostMatrix::from_fn(n, m, |i, j| cost[i][j] as f64);
                    let plan = solve_transport(&a, &b, &d).map_err(|e| e.to_string())?;
                    ensure(plan.total_work == want as f64, || {
                        format!(
                            "supply {s:?} demand {t:?} costs {cost:?}: solver {} vs {want}",
                            plan.total_work
                        )
                    })?;
                    instances += 1;
                }
            }
        }
    }
    ensure(instances > 10_000, || format!("only {instances} instances enumerated"))
}

/// The shared corpus for the bounds and identity checks.
fn corpus() -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    (0..1000).map(|_| random_counts(&mut rng, 60, 2000)).collect()
}

fn bounds_and_extremes() -> Result<(), String> {
    for c in [1u64, 2, 3, 7, 10, 97, 1000, 12345] {
        let uniform = centralization_score(&dist(&vec![1; c as usize])).unwrap().value;
        ensure(uniform == 0.0, || format!("decentralized C={c}: {uniform}"))?;
        let mono = centralization_score(&dist(&[c])).unwrap().value;
        ensure(mono == 1.0 - 1.0 / c as f64, || format!("monopoly C={c}: {mono}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for (k, counts) in corpus().into_iter().enumerate() {
        let d = dist(&counts);
        let s = centralization_score(&d).unwrap();
        ensure(s.value >= 0.0 && s.value <= s.upper_bound(), || {
            format!("case {k}: {} outside [0, {}]", s.value, s.upper_bound())
        })?;
        if counts.len() >= 2 {
            let i = rng.gen_range(0..counts.len());
            let mut j = rng.gen_range(0..counts.len() - 1);
            if j >= i {
                j += 1;
            }
            let mut merged: Vec<u64> = counts
                .iter()
                .enumerate()
                .filter(|&(x, _)| x != i && x != j)
                .map(|(_, &c)| c)
                .collect();
            merged.push(counts[i] + counts[j]);
            let after = centralization_score(&dist(&merged)).unwrap().value;
            ensure(after >= s.value, || {
                format!("case {k}: merging lowered {} to {after}", s.value)
            })?;
        }
    }
    Ok(())
}

fn hhi_identity() -> Result<(), String> {
    for (k, counts) in corpus().into_iter().enumerate() {
        let d = dist(&counts);
        let lhs = hhi(&d).unwrap() - 1.0 / d.total() as f64;
        let rhs = centralization_score(&d).unwrap().value;
        ensure((lhs - rhs).abs() <= 1e-12, || format!("case {k}: {lhs} vs {rhs}"))?;
    }
    Ok(())
}

fn band_anchors() -> Result<(), String> {
    use ConcentrationBand::*;
    for (score, want) in [
        (0.0411, Competitive),
        (0.1358, ModeratelyConcentrated),
        (0.3548, HighlyConcentrated),
    ] {
        let got = concentration_band(score);
        ensure(got == want, || format!("{score}: {got} instead of {want}"))?;
    }
    Ok(())
}

fn endemicity_properties() -> Result<(), String> {
    let flat = UsageCurve::new("flat", vec![12.5; 150]).unwrap();
    ensure(endemicity_ratio(&flat) == 0.0, || {
        format!("flat curve: {}", endemicity_ratio(&flat))
    })?;
    for peak in [0.001, 1.0, 37.5, 100.0] {
        let mut v = vec![0.0; 150];
        v[0] = peak;
        let er = endemicity_ratio(&UsageCurve::new("one", v).unwrap());
        ensure((er - 149.0 / 150.0).abs() <= 1e-12, || {
            format!("single country, peak {peak}: {er}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(150);
    for k in 0..1000 {
        let n = rng.gen_range(1..=200);
        let zero_frac: f64 = rng.gen();
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < zero_frac {
                    0.0
                } else {
                    rng.gen_range(0.0..=100.0)
                }
            })
            .collect();
        let er = endemicity_ratio(&UsageCurve::from_unsorted("r", v).unwrap());
        ensure((0.0..1.0).contains(&er), || format!("curve {k}: {er}"))?;
    }
    Ok(())
}

fn random_ip(rng: &mut ChaCha8Rng, v6: bool) -> IpAddr {
    if v6 {
        IpAddr::V6(Ipv6Addr::from(rng.gen::<u128>()))
    } else {
        IpAddr::V4(Ipv4Addr::from(rng.gen::<u32>()))
    }
}

fn masked(ip: IpAddr, len: u8) -> IpAddr {
    match ip {
        IpAddr::V4(a) => {
            let m = if len == 0 { 0 } else { u32::MAX << (32 - len) };
            IpAddr::V4(Ipv4Addr::from(u32::from(a) & m))
        }
        IpAddr::V6(a) => {
            let m = if len == 0 { 0 } else { u128::MAX << (128 - len) };
            IpAddr::V6(Ipv6Addr::from(u128::from(a) & m))
        }
    }
}

fn longest_prefix_match() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1F);
    for t in 0..100 {
        let mut entries: Vec<(Prefix, u32)> = Vec::new();
        let size = rng.gen_range(1..200);
        for _ in 0..size {
            let v6 = rng.gen_bool(0.3);
            // Nested prefixes come from re-masking an earlier one more finely.
            let base = if !entries.is_empty() && rng.gen_bool(0.4) {
                let (p, _) = entries[rng.gen_range(0..entries.len())];
                let w = if p.addr().is_ipv4() { 32 } else { 128 };
                let len = rng.gen_range(p.len()..=w);
                let mixed = mix(p.addr(), random_ip(&mut rng, p.addr().is_ipv6()), p.len());
                (masked(mixed, len), len)
            } else {
                let w = if v6 { 128 } else { 32 };
                let len = rng.gen_range(0..=w);
                (masked(random_ip(&mut rng, v6), len), len)
            };
            entries.push((Prefix::new(base.0, base.1).unwrap(), rng.gen_range(1..70000)));
        }
        let table = PrefixTable::from_entries(entries.clone());
        // Later duplicates replace earlier ones.
        let mut canonical: BTreeMap<Prefix, u32> = BTreeMap::new();
        for (p, a) in &entries {
            canonical.insert(*p, *a);
        }
        for q in 0..1000 {
            let ip = if rng.gen_bool(0.7) {
                let (p, _) = entries[rng.gen_range(0..entries.len())];
                mix(p.addr(), random_ip(&mut rng, p.addr().is_ipv6()), p.len())
            } else {
                let v6 = rng.gen_bool(0.3);
                random_ip(&mut rng, v6)
            };
            let want = canonical
                .iter()
                .filter(|(p, _)| p.contains(ip))
                .max_by_key(|(p, _)| p.len())
                .map(|(_, &a)| a);
            let got = table.lookup_asn(ip);
            ensure(got == want, || {
                format!("table {t} query {q} {ip}: {got:?} vs brute force {want:?}")
            })?;
        }
    }
    Ok(())
}

/// Network bits of `net` (first `len`) followed by the host bits of `host`.
fn mix(net: IpAddr, host: IpAddr, len: u8) -> IpAddr {
    match (net, host) {
        (IpAddr::V4(n), IpAddr::V4(h)) => {
            let m = if len == 0 { 0 } else { u32::MAX << (32 - len) };
            IpAddr::V4(Ipv4Addr::from((u32::from(n) & m) | (u32::from(h) & !m)))
        }
        (IpAddr::V6(n), IpAddr::V6(h)) => {
            let m = if len == 0 { 0 } else { u128::MAX << (128 - len) };
            IpAddr::V6(Ipv6Addr::from((u128::from(n) & m) | (u128::from(h) & !m)))
        }
        _ => net,
    }
}

/// Connected components of the graph linking points closer than `threshold`.
fn threshold_clusters(points: &[[f64; 2]], threshold: f64) -> Vec<usize> {
    let n = points.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
                if label[j] == usize::MAX && d < threshold {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

/// Whether two labelings describe the same partition.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

fn clustering_recovery() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in [2usize, 3] {
        for trial in 0..5 {
            let centers = [[0.0, 0.0], [10.0, 1.0], [4.0, 9.0]];
            // Equal blob sizes: with the median preference, a small blob next to a
            // large one gets split into several exemplars.
            let size = rng.gen_range(12..30);
            let mut points = Vec::new();
            for c in &centers[..k] {
                for _ in 0..size {
                    points.push([c[0] + rng.gen_range(-0.8..0.8), c[1] + rng.gen_range(-0.8..0.8)]);
                }
            }
            let oracle = threshold_clusters(&points, 3.0);
            ensure(oracle.iter().collect::<BTreeSet<_>>().len() == k, || {
                "oracle split a blob".into()
            })?;
            let ap = AffinityPropagation::default();
            let first = ap.fit(&points).map_err(|e| e.to_string())?;
            ensure(first.n_clusters() == k, || {
                format!("{k} blobs, trial {trial}: found {} clusters", first.n_clusters())
            })?;
            ensure(same_partition(&first.labels, &oracle), || {
                format!("{k} blobs, trial {trial}: membership differs from the threshold oracle")
            })?;
            let again = ap.fit(&points).map_err(|e| e.to_string())?;
            ensure(again == first, || format!("{k} blobs, trial {trial}: rerun differs"))?;
        }
    }
    Ok(())
}

fn pca_correctness() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..100 {
        let n = rng.gen_range(3..200);
        let (a, b, c): (f64, f64, f64) = (
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(0.01..3.0),
        );
        let shift = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                [shift[0] + a * x + c * y, shift[1] + b * x - c * y]
            })
            .collect();
        let (_, [sxx, _, syy]) = covariance(&points);
        let out = pca2(&points).map_err(|e| e.to_string())?;
        let (_, [pxx, pxy, pyy]) = covariance(&out.points);
        ensure(pxy.abs() < 1e-9, || {
            format!("dataset {k}: off-diagonal covariance {pxy}")
        })?;
        let (before, after) = (sxx + syy, pxx + pyy);
        ensure(((after - before) / before).abs() < 1e-9, || {
            format!("dataset {k}: total variance {before} became {after}")
        })?;
    }
    Ok(())
}

/// `country -> layer -> counts` straight from the records.
fn independent_counts(records: &[WebsiteRecord]) -> BTreeMap<(String, Layer), BTreeMap<String, u64>> {
    let mut out: BTreeMap<(String, Layer), BTreeMap<String, u64>> = BTreeMap::new();
    for r in records {
        let keys = [
            (Layer::Hosting, r.hosting_org.clone()),
            (Layer::Dns, r.dns_org.clone()),
            (Layer::Tld, Some(r.tld.clone()).filter(|t| !t.is_empty())),
            (Layer::Ca, r.ca_owner.clone()),
        ];
        for (layer, key) in keys {
            if let Some(k) = key {
                *out.entry((r.country.clone(), layer)).or_default().entry(k).or_default() += 1;
            }
        }
    }
    out
}

fn end_to_end_fixture() -> Result<(), String> {
    let start = Instant::now();
    let t = TempDir::new().unwrap();
    run_pipeline(t.path());
    let json = TempDir::new().unwrap();
    let json_dir = json.path().join("report");
    let o = webcent(&[
        "--manifest",
        common::manifest().to_str().unwrap(),
        "report",
        "--records",
        t.path().join("annotate/records.jsonl").to_str().unwrap(),
        "--format",
        "json",
        "--out",
        json_dir.to_str().unwrap(),
    ]);
    ensure(o.status.success(), || stderr(&o))?;
    let elapsed = start.elapsed();

    let diffs = golden_diff(t.path());
    ensure(diffs.is_empty(), || format!("golden mismatch: {diffs:?}"))?;

    let records = read_records(
        fs::File::open(t.path().join("annotate/records.jsonl"))
            .map(std::io::BufReader::new)
            .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let bundle: ReportBundle =
        serde_json::from_slice(&fs::read(json_dir.join("report.json")).unwrap()).map_err(|e| e.to_string())?;
    let counts = independent_counts(&records);
    let mut checked = 0;
    for lr in &bundle.layers {
        for (country, cs) in &lr.scores.scores {
            let c = &counts[&(country.clone(), lr.scores.layer)];
            let d = ProviderDistribution::new(country.clone(), lr.scores.layer, c.clone()).unwrap();
            let oracle = emd_centralization(&d).map_err(|e| e.to_string())?;
            ensure((cs.score.value - oracle).abs() <= 1e-9, || {
                format!(
                    "{country} {}: reported {} vs oracle {oracle}",
                    lr.scores.layer, cs.score.value
                )
            })?;
            checked += 1;
        }
    }
    ensure(checked == 12, || format!("expected 12 scored cells, saw {checked}"))?;

    // .com counts as US at the TLD layer, and only there.
    let tld_cell = |cc: &str| bundle.insularity.value(Layer::Tld, cc);
    for cc in ["US", "DE", "JP"] {
        let mine: Vec<&WebsiteRecord> = records.iter().filter(|r| r.country == cc).collect();
        let home = mine
            .iter()
            .filter(|r| r.tld == cc.to_ascii_lowercase() || (cc == "US" && r.tld == "com"))
            .count();
        let want = home as f64 / mine.len() as f64;
        let got = tld_cell(cc).ok_or_else(|| format!("no TLD insularity for {cc}"))?;
        ensure((got - want).abs() < 1e-12, || {
            format!("TLD insularity {cc}: {got} vs {want}")
        })?;
    }
    ensure(tld_cell("US").unwrap() > 0.5, || {
        "US .com sites were not counted as domestic".into()
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("pipeline took {elapsed:?}")
    })
}

fn determinism() -> Result<(), String> {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    ensure(ta.len() >= 20, || format!("only {} output files", ta.len()))?;
    for (k, v) in &ta {
        ensure(tb.get(k) == Some(v), || format!("{k} differs between runs"))?;
    }
    ensure(ta.len() == tb.len(), || "runs produced different file sets".into())
}

fn collector_contract() -> Result<(), String> {
    let closed = TcpListener::bind("127.0.0.1:0").unwrap();
    let closed_port = closed.local_addr().unwrap().port();
    drop(closed);

    let mut zone = MockZone {
        delay: Duration::from_millis(5),
        ..Default::default()
    };
    let mut domains = Vec::new();
    for i in 0..60 {
        let d = format!("d{i:02}.test");
        zone = match i % 3 {
            0 => zone.with_nxdomain(&d),
            // Resolves to loopback where nothing listens on the TLS port.
            _ => zone.with_a(&d, &["127.0.0.1"]).with_ns(&d, &["ns.test"]),
        };
        domains.push(d);
    }
    let dns = MockDns::start(zone.with_a("ns.test", &["127.0.0.2"])).map_err(|e| e.to_string())?;

    let t = TempDir::new().unwrap();
    let list = t.path().join("domains.txt");
    fs::write(&list, domains.join("\n")).unwrap();
    let out = t.path().join("m.jsonl");
    let o = webcent(&[
        "collect",
        "--domains",
        list.to_str().unwrap(),
        "--resolver",
        &dns.addr().to_string(),
        "--max-inflight",
        "4",
        "--tls-port",
        &closed_port.to_string(),
        "--retries",
        "0",
        "--timeout-ms",
        "1000",
        "--fixed-time",
        "1700000000",
        "--out",
        out.to_str().unwrap(),
    ]);
    ensure(o.status.success(), || format!("collect failed: {}", stderr(&o)))?;

    let text = fs::read_to_string(&out).unwrap();
    let recs: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    ensure(recs.len() == domains.len(), || {
        format!("{} records for {} domains", recs.len(), domains.len())
    })?;
    for (i, (r, d)) in recs.iter().zip(&domains).enumerate() {
        ensure(r["domain"] == d.as_str(), || {
            format!("record {i} is {} instead of {d}", r["domain"])
        })?;
        let notes: Vec<&str> = r["notes"]
            .as_array()
            .map(|v| v.iter().filter_map(|n| n.as_str()).collect())
            .unwrap_or_default();
        ensure(r["issuer"].is_null(), || format!("{d}: unexpected issuer"))?;
        if i % 3 == 0 {
            ensure(r["a"].as_array().is_some_and(|a| a.is_empty()), || {
                format!("{d}: addresses on NXDOMAIN")
            })?;
            ensure(notes.contains(&"a: nxdomain"), || format!("{d}: notes {notes:?}"))?;
        } else {
            ensure(notes.contains(&"tls 127.0.0.1: connection refused"), || {
                format!("{d}: notes {notes:?}")
            })?;
        }
    }
    let peak = dns.stats().max_in_flight();
    ensure(peak <= 4, || format!("{peak} queries in flight with --max-inflight 4"))?;
    ensure(peak >= 2, || "probes never overlapped".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 12] = [
        ("closed form matches transport oracle", closed_form_vs_oracle),
        ("exhaustive transport optimality", exhaustive_optimality),
        ("bounds and extremes", bounds_and_extremes),
        ("HHI identity", hhi_identity),
        ("concentration band anchors", band_anchors),
        ("endemicity properties", endemicity_properties),
        ("longest-prefix match vs brute force", longest_prefix_match),
        ("clustering recovery", clustering_recovery),
        ("PCA correctness", pca_correctness),
        ("end-to-end fixture", end_to_end_fixture),
        ("determinism", determinism),
        ("collector contract", collector_contract),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let ms = start.elapsed().as_millis();
        match result {
            Ok(()) => println!("PASS {name} ({ms} ms)"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({ms} ms): {e}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 12 criteria failed");
        ExitCode::FAILURE
    }
}
