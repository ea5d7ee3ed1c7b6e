use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};

use proptest::prelude::*;
use webcent_core::classify::{covariance, pca2, quantile};
use webcent_core::emd::{emd_centralization, solve_transport, CostMatrix, DiscreteDistribution};
use webcent_core::ingest::{read_records, write_records, Prefix, PrefixTable, WebsiteRecord};
use webcent_core::metrics::{centralization_score, endemicity_ratio, hhi, pearson, UsageCurve};
use webcent_core::pipeline::{score_all, ScoreOptions};
use webcent_core::{Layer, ProviderDistribution};

fn dist(counts: &[u64]) -> ProviderDistribution {
    ProviderDistribution::from_counts("XX", Layer::Dns, counts).unwrap()
}

fn counts() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..200, 1..40)
}

proptest! {
    #[test]
    fn score_within_bounds(c in counts()) {
        let s = centralization_score(&dist(&c)).unwrap();
        prop_assert!(s.value >= 0.0);
        prop_assert!(s.value <= s.upper_bound());
    }

    #[test]
    fn score_ignores_provider_order(mut c in counts()) {
        let a = centralization_score(&dist(&c)).unwrap().value;
        c.reverse();
        prop_assert_eq!(a, centralization_score(&dist(&c)).unwrap().value);
    }

    #[test]
    fn merging_never_decreases_score(c in prop::collection::vec(1u64..200, 2..40), i in 0usize..40, j in 0usize..40) {
        let (i, j) = (i % c.len(), j % c.len());
        prop_assume!(i != j);
        let mut merged: Vec<u64> = c.iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, &x)| x).collect();
        merged.push(c[i] + c[j]);
        let before = centralization_score(&dist(&c)).unwrap().value;
        let after = centralization_score(&dist(&merged)).unwrap().value;
        prop_assert!(after >= before);
    }

    #[test]
    fn hhi_minus_inverse_total_is_score(c in counts()) {
        let d = dist(&c);
        let lhs = hhi(&d).unwrap() - 1.0 / d.total() as f64;
        prop_assert!((lhs - centralization_score(&d).unwrap().value).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_matches_solver(c in prop::collection::vec(1u64..30, 1..12)) {
        let d = dist(&c);
        let closed = centralization_score(&d).unwrap().value;
        prop_assert!((closed - emd_centralization(&d).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn solver_plan_is_feasible_and_no_worse_than_northwest(
        s in prop::collection::vec(0u64..6, 1..6),
        costs in prop::collection::vec(0u32..20, 36),
        seed in any::<u64>(),
    ) {
        let total: u64 = s.iter().sum();
        prop_assume!(total > 0);
        // Demand: the same total spread over a rotated copy of the supply.
        let mut t = s.clone();
        t.rotate_left((seed % s.len() as u64) as usize);
        let (n, m) = (s.len(), t.len());
        let d = CostMatrix::from_fn(n, m, |i, j| costs[i * 6 + j] as f64);
        let a = DiscreteDistribution::from_counts(&s).unwrap();
        let b = DiscreteDistribution::from_counts(&t).unwrap();
        let plan = solve_transport(&a, &b, &d).unwrap();
        prop_assert!(plan.is_feasible(&a, &b, 1e-9));

        // North-west corner plan is feasible, so the optimum can't cost more.
        let (mut sl, mut tl) = (s.clone(), t.clone());
        let (mut i, mut j, mut nw) = (0, 0, 0.0);
        while i < n && j < m {
            let f = sl[i].min(tl[j]);
            nw += f as f64 * costs[i * 6 + j] as f64;
            sl[i] -= f;
            tl[j] -= f;
            if sl[i] == 0 { i += 1 } else { j += 1 }
        }
        prop_assert!(plan.total_work <= nw);
    }

    #[test]
    fn endemicity_ratio_in_unit_interval(v in prop::collection::vec(0.0f64..=100.0, 1..200)) {
        let er = endemicity_ratio(&UsageCurve::from_unsorted("p", v).unwrap());
        prop_assert!((0.0..1.0).contains(&er));
    }

    #[test]
    fn endemicity_ratio_is_scale_free(v in prop::collection::vec(0.0f64..=50.0, 1..100), k in 0.1f64..2.0) {
        let a = endemicity_ratio(&UsageCurve::from_unsorted("p", v.clone()).unwrap());
        let b = endemicity_ratio(&UsageCurve::from_unsorted("p", v.iter().map(|x| x * k).collect()).unwrap());
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn pearson_bounded_and_symmetric(xy in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..50)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - pearson(&y, &x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn quantile_is_monotone(mut v in prop::collection::vec(0.0f64..1e4, 1..60), q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        v.sort_by(f64::total_cmp);
        prop_assert_eq!(quantile(&v, 0.0), v[0]);
        prop_assert_eq!(quantile(&v, 1.0), *v.last().unwrap());
    }

    #[test]
    fn pca_decorrelates(points in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..80)) {
        let points: Vec<[f64; 2]> = points.into_iter().map(|(x, y)| [x, y]).collect();
        let (_, [sxx, _, syy]) = covariance(&points);
        prop_assume!(sxx + syy > 1e-6);
        let out = pca2(&points).unwrap();
        let (_, [pxx, pxy, pyy]) = covariance(&out.points);
        let scale = sxx + syy;
        prop_assert!(pxy.abs() <= 1e-9 * scale);
        prop_assert!(((pxx + pyy) - scale).abs() <= 1e-9 * scale);
        prop_assert!(pxx + 1e-9 * scale >= pyy);
    }

    #[test]
    fn longest_prefix_match_agrees_with_scan(
        entries in prop::collection::vec((any::<u32>(), 0u8..=32, 1u32..100), 1..40),
        probes in prop::collection::vec(any::<u32>(), 1..50),
    ) {
        let prefixes: Vec<(Prefix, u32)> = entries
            .iter()
            .map(|&(a, len, asn)| {
                let m = if len == 0 { 0 } else { u32::MAX << (32 - len) };
                (Prefix::new(IpAddr::V4(Ipv4Addr::from(a & m)), len).unwrap(), asn)
            })
            .collect();
        let table = PrefixTable::from_entries(prefixes.clone());
        let mut last: BTreeMap<Prefix, u32> = BTreeMap::new();
        for (p, a) in &prefixes {
            last.insert(*p, *a);
        }
        // Half the probes land inside a known prefix.
        for (k, &raw) in probes.iter().enumerate() {
            let (p, _) = prefixes[k % prefixes.len()];
            let ip = if k % 2 == 0 {
                let m = if p.is_empty() { 0 } else { u32::MAX << (32 - p.len()) };
                let IpAddr::V4(base) = p.addr() else { unreachable!() };
                IpAddr::V4(Ipv4Addr::from((u32::from(base) & m) | (raw & !m)))
            } else {
                IpAddr::V4(Ipv4Addr::from(raw))
            };
            let want = last.iter().filter(|(p, _)| p.contains(ip)).max_by_key(|(p, _)| p.len()).map(|(_, &a)| a);
            prop_assert_eq!(table.lookup_asn(ip), want);
        }
    }

    #[test]
    fn ranking_is_sorted_and_sequential(rows in prop::collection::vec((0usize..6, 0usize..5), 1..120)) {
        let countries = ["AA", "BB", "CC", "DD", "EE", "FF"];
        let records: Vec<WebsiteRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(c, p))| WebsiteRecord {
                domain: format!("s{i}.test"),
                country: countries[c].into(),
                tld: "test".into(),
                hosting_org: Some(format!("org{p}")),
                ..Default::default()
            })
            .collect();
        let list: Vec<String> = countries.iter().map(|s| s.to_string()).collect();
        let ls = score_all(&records, &list, Layer::Hosting, &ScoreOptions { min_sites: 1 });
        for (i, r) in ls.ranking.iter().enumerate() {
            prop_assert_eq!(r.rank, i + 1);
        }
        for w in ls.ranking.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].country < w[1].country));
        }
        prop_assert_eq!(ls.ranking.len() + ls.exclusions.len(), countries.len());
    }

    #[test]
    fn records_round_trip(rows in prop::collection::vec(("[a-z]{1,8}", "[A-Z]{2}", proptest::option::of("[A-Za-z ]{1,12}"), proptest::option::of(1u32..70000)), 0..20)) {
        let records: Vec<WebsiteRecord> = rows
            .into_iter()
            .map(|(d, c, org, asn)| WebsiteRecord {
                domain: format!("{d}.example"),
                country: c,
                tld: "example".into(),
                hosting_asn: asn,
                hosting_org: org.clone(),
                ca_owner: org,
                ..Default::default()
            })
            .collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        prop_assert_eq!(read_records(&buf[..]).unwrap(), records);
    }
}
