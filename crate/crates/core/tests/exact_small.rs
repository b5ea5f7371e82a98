//! Small instances checked against exact laws by enumeration.

use std::collections::BTreeMap;

use gelsim::dynamic_cm::Theta;
use gelsim::frozen_sim::{FrozenConfig, FrozenSim};
use gelsim::graphs::{components, sample_percolated};
use gelsim::rng::sim_rng;

type Outcome = (u64, Vec<(u32, u32)>);

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Replays an activation order with plain per-particle labels.
fn naive_replay(degrees: &[u32], order: &[usize], alpha: usize) -> Outcome {
    let owner: Vec<usize> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d as usize))
        .collect();
    let n = degrees.len();
    let mut label: Vec<usize> = (0..n).collect();
    let mut gel = vec![false; n];
    let mut bonds_at = vec![0u32; n];
    let mut pending: Option<usize> = None;
    for &arm in order {
        let v = owner[arm];
        if gel[v] {
            continue;
        }
        match pending.take() {
            None => pending = Some(v),
            Some(u) => {
                let (lu, lv) = (label[u], label[v]);
                for l in label.iter_mut() {
                    if *l == lv {
                        *l = lu;
                    }
                }
                bonds_at[u] += 1;
                let members: Vec<usize> = (0..n).filter(|&w| label[w] == lu).collect();
                if members.len() >= alpha {
                    for w in members {
                        gel[w] = true;
                    }
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, (i64, u32)> = BTreeMap::new();
    for v in (0..n).filter(|&v| !gel[v]) {
        let e = clusters.entry(label[v]).or_insert((0, 0));
        e.0 += i64::from(degrees[v]) - 2 * i64::from(bonds_at[v]);
        e.1 += 1;
    }
    let mut census: Vec<(u32, u32)> = clusters
        .into_values()
        .map(|(a, m)| (u32::try_from(a).unwrap(), m))
        .collect();
    census.sort_unstable();
    ((0..n).filter(|&v| !gel[v]).count() as u64, census)
}

fn exact_law(degrees: &[u32], alpha: usize, t: f64) -> BTreeMap<Outcome, f64> {
    let m: usize = degrees.iter().map(|&d| d as usize).sum();
    let p = 1.0 - (-t).exp();
    let perms = permutations(m);
    let w = 1.0 / perms.len() as f64;
    let mut law = BTreeMap::new();
    for perm in &perms {
        for l in 0..=m {
            let o = naive_replay(degrees, &perm[..l], alpha);
            *law.entry(o).or_insert(0.0) += w * binom_pmf(m, l, p);
        }
    }
    law
}

fn sim_outcome(sim: &FrozenSim) -> Outcome {
    let census = sim.cluster_census();
    let mut c: Vec<(u32, u32)> = census
        .entries
        .iter()
        .flat_map(|&(key, cnt)| std::iter::repeat_n(key, cnt as usize))
        .collect();
    c.sort_unstable();
    (sim.n_solution(), c)
}

fn empirical(degrees: &[u32], alpha: u64, t: f64, runs: u64) -> BTreeMap<Outcome, f64> {
    let theta = Theta::from_degrees(degrees).unwrap();
    let mut out = BTreeMap::new();
    for seed in 0..runs {
        let cfg = FrozenConfig::new(theta.clone(), alpha, t, seed);
        let mut sim = FrozenSim::new(&cfg).unwrap();
        sim.advance_to(t);
        *out.entry(sim_outcome(&sim)).or_insert(0.0) += 1.0 / runs as f64;
    }
    out
}

fn assert_close(exact: &BTreeMap<Outcome, f64>, emp: &BTreeMap<Outcome, f64>, runs: u64) {
    let total: f64 = exact.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    for k in emp.keys() {
        assert!(exact.contains_key(k), "impossible outcome {k:?}");
    }
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (k, &p) in exact {
        let q = emp.get(k).copied().unwrap_or(0.0);
        let sd = (p * (1.0 - p) / runs as f64).sqrt();
        assert!(
            (q - p).abs() <= 5.0 * sd + 1e-12,
            "{k:?}: exact {p}, observed {q}"
        );
        if p > 0.0 {
            chi2 += runs as f64 * (q - p).powi(2) / p;
            cells += 1;
        }
    }
    // Loose chi-square bound: mean cells - 1, sd sqrt(2 (cells - 1)).
    let df = (cells - 1) as f64;
    assert!(
        chi2 < df + 6.0 * (2.0 * df).sqrt() + 5.0,
        "chi2 {chi2} over {cells} cells"
    );
}

#[test]
fn frozen_law_matches_enumeration_with_freezing() {
    let degrees = [1, 1, 2, 2];
    let runs = 60_000;
    let exact = exact_law(&degrees, 3, 0.7);
    let emp = empirical(&degrees, 3, 0.7, runs);
    assert_close(&exact, &emp, runs);
}

#[test]
fn frozen_law_matches_enumeration_without_freezing() {
    let degrees = [1, 2, 3];
    let runs = 60_000;
    let exact = exact_law(&degrees, 4, 0.5);
    let emp = empirical(&degrees, 4, 0.5, runs);
    assert_close(&exact, &emp, runs);
}

#[test]
fn no_freezing_matches_percolated_pairing() {
    // With alpha = N + 1 the component structure at time t is a uniform
    // pairing of a p-percolated arm subset, p = 1 - e^{-t}.
    let degrees: Vec<u32> = vec![1, 1, 2, 2, 3];
    let t: f64 = 0.8;
    let p = 1.0 - (-t).exp();
    let runs = 40_000u64;
    let theta = Theta::from_degrees(&degrees).unwrap();
    let mut a: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut b: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut rng = sim_rng(77);
    for seed in 0..runs {
        let cfg = FrozenConfig::new(theta.clone(), 6, t, seed);
        let mut sim = FrozenSim::new(&cfg).unwrap();
        sim.advance_to(t);
        let mut sizes: Vec<u32> = sim
            .cluster_census()
            .entries
            .iter()
            .flat_map(|&((_, m), c)| std::iter::repeat_n(m, c as usize))
            .collect();
        sizes.sort_unstable();
        *a.entry(sizes).or_insert(0.0) += 1.0 / runs as f64;
        let pairing = sample_percolated(&degrees, p, &mut rng).unwrap();
        let mut sizes: Vec<u32> = components(&pairing)
            .components
            .iter()
            .map(|c| c.size)
            .collect();
        sizes.sort_unstable();
        *b.entry(sizes).or_insert(0.0) += 1.0 / runs as f64;
    }
    for k in a.keys().chain(b.keys()) {
        let (x, y) = (
            a.get(k).copied().unwrap_or(0.0),
            b.get(k).copied().unwrap_or(0.0),
        );
        let pool = (x + y) / 2.0;
        let sd = (2.0 * pool * (1.0 - pool) / runs as f64).sqrt();
        assert!((x - y).abs() <= 5.0 * sd + 1e-9, "{k:?}: {x} vs {y}");
    }
}
