//! Galton-Watson trees: samplers, total progeny, canonical codes and exact
//! finite-tree laws.
//!
//! `GW_pi` lets every vertex reproduce with law `pi`. The delayed tree
//! `GW_{pi, hat pi}` uses `pi` at the root and the size-biased shift
//! `hat pi` everywhere else; it is the local limit of a configuration-model
//! component seen from a uniform vertex.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::{ln_factorial, Pmf};

/// Finite rooted unordered tree stored as a parent array (root at 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    parent: Vec<usize>,
}

impl RootedTree {
    pub fn single() -> Self {
        Self { parent: vec![0] }
    }

    /// Builds a tree from a parent array; `parent[0]` is ignored and every
    /// other entry must point to an earlier vertex.
    pub fn from_parents(parent: Vec<usize>) -> Result<Self> {
        if parent.is_empty() {
            return Err(Error::domain("a tree needs at least one vertex"));
        }
        if parent.iter().enumerate().skip(1).any(|(v, &p)| p >= v) {
            return Err(Error::domain("parent array must point to earlier vertices"));
        }
        let mut parent = parent;
        parent[0] = 0;
        Ok(Self { parent })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.parent.len()];
        for (v, &p) in self.parent.iter().enumerate().skip(1) {
            ch[p].push(v);
        }
        ch
    }

    /// AHU code: a leaf is `()`, an internal vertex wraps the sorted codes
    /// of its children. Equal codes iff the rooted trees are isomorphic.
    pub fn canonical_code(&self) -> String {
        let ch = self.children();
        let mut codes = vec![String::new(); self.parent.len()];
        // Parents precede children, so a reverse sweep sees children first.
        for v in (0..self.parent.len()).rev() {
            let mut sub: Vec<&str> = ch[v].iter().map(|&c| codes[c].as_str()).collect();
            sub.sort_unstable();
            let code = format!("({})", sub.concat());
            codes[v] = code;
        }
        std::mem::take(&mut codes[0])
    }
}

/// Outcome of a capped tree sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GwSample {
    Tree(RootedTree),
    /// More than `node_cap` vertices: the tree may be infinite.
    CapExceeded,
}

/// Plain `GW_pi` tree in breadth-first order, stopped beyond `node_cap`
/// vertices.
pub fn sample_gw<R: Rng + ?Sized>(pi: &Pmf, node_cap: usize, rng: &mut R) -> GwSample {
    let sampler = pi.sampler();
    grow(node_cap, |_| sampler.sample(rng))
}

/// Delayed `GW_{pi, hat pi}` tree; `pi = delta_0` gives the single vertex.
pub fn sample_delayed_gw<R: Rng + ?Sized>(pi: &Pmf, node_cap: usize, rng: &mut R) -> GwSample {
    let root = pi.sampler();
    let Ok(hat) = pi.size_biased_shift() else {
        return GwSample::Tree(RootedTree::single());
    };
    let rest = hat.sampler();
    grow(node_cap, |depth_zero| {
        if depth_zero {
            root.sample(rng)
        } else {
            rest.sample(rng)
        }
    })
}

fn grow(node_cap: usize, mut offspring: impl FnMut(bool) -> usize) -> GwSample {
    let node_cap = node_cap.max(1);
    let mut parent = vec![0usize];
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let k = offspring(v == 0);
        if parent.len() + k > node_cap {
            return GwSample::CapExceeded;
        }
        for _ in 0..k {
            queue.push_back(parent.len());
            parent.push(v);
        }
    }
    GwSample::Tree(RootedTree { parent })
}

/// Total progeny law of the delayed tree `GW_{pi, hat pi}`:
/// `pi(0)` at `m = 1`, otherwise `m_1 / (m - 1) * hat pi^{*m}(m - 2)`.
pub fn progeny_pmf(pi: &Pmf, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("total progeny is at least 1"));
    }
    if m == 1 {
        return Ok(pi.get(0));
    }
    let hat = pi.size_biased_shift()?;
    let conv = hat.convolve_power(m, m - 2)?;
    Ok(pi.mean() / (m - 1) as f64 * conv.get(m - 2))
}

/// Total progeny law of the plain tree `GW_pi` (Dwass):
/// `pi^{*m}(m - 1) / m`.
pub fn plain_progeny_pmf(pi: &Pmf, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("total progeny is at least 1"));
    }
    let conv = pi.convolve_power(m, m - 1)?;
    Ok(conv.get(m - 1) / m as f64)
}

/// Exact probability that `GW_{pi, hat pi}` equals `tree` up to
/// isomorphism. Each vertex with `c` children contributes its offspring
/// probability times the number `c! / prod mult!` of distinct orderings of
/// its child subtrees.
pub fn delayed_tree_probability(tree: &RootedTree, pi: &Pmf) -> Result<f64> {
    let hat = pi.size_biased_shift()?;
    Ok(tree_probability_with(tree, pi, &hat))
}

/// Exact probability of `tree` under the plain `GW_pi`.
pub fn tree_probability(tree: &RootedTree, pi: &Pmf) -> f64 {
    tree_probability_with(tree, pi, pi)
}

fn tree_probability_with(tree: &RootedTree, root_law: &Pmf, law: &Pmf) -> f64 {
    let ch = tree.children();
    let mut codes = vec![String::new(); tree.len()];
    let mut prob = 1.0;
    for v in (0..tree.len()).rev() {
        let mut sub: Vec<String> = ch[v].iter().map(|&c| codes[c].clone()).collect();
        sub.sort_unstable();
        let c = sub.len();
        let mut orderings = ln_factorial(c as u64);
        let mut i = 0;
        while i < c {
            let j = (i..c).find(|&j| sub[j] != sub[i]).unwrap_or(c);
            orderings -= ln_factorial((j - i) as u64);
            i = j;
        }
        let p = if v == 0 { root_law.get(c) } else { law.get(c) };
        prob *= p * orderings.exp();
        codes[v] = format!("({})", sub.concat());
    }
    prob
}

/// All rooted unordered trees with exactly `n` vertices, one per
/// isomorphism class, sorted by canonical code.
pub fn enumerate_trees(n: usize) -> Vec<RootedTree> {
    if n == 0 {
        return Vec::new();
    }
    let mut level: BTreeMap<String, RootedTree> = BTreeMap::new();
    let t = RootedTree::single();
    level.insert(t.canonical_code(), t);
    for _ in 1..n {
        let mut next = BTreeMap::new();
        for tree in level.values() {
            for v in 0..tree.len() {
                let mut parent = tree.parent.clone();
                parent.push(v);
                let grown = RootedTree { parent };
                next.entry(grown.canonical_code()).or_insert(grown);
            }
        }
        level = next;
    }
    level.into_values().collect()
}

/// Counts of sampled clusters keyed by canonical code, with separate
/// buckets for cyclic clusters and clusters above the size cap.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeTally {
    pub trees: BTreeMap<String, u64>,
    pub exceeded: u64,
    pub cyclic: u64,
}

impl TreeTally {
    pub fn add_tree(&mut self, tree: &RootedTree) {
        *self.trees.entry(tree.canonical_code()).or_insert(0) += 1;
    }

    pub fn add_sample(&mut self, sample: &GwSample) {
        match sample {
            GwSample::Tree(t) => self.add_tree(t),
            GwSample::CapExceeded => self.exceeded += 1,
        }
    }

    /// Samples that were trees or exceeded the cap.
    pub fn acyclic_total(&self) -> u64 {
        self.trees.values().sum::<u64>() + self.exceeded
    }

    pub fn total(&self) -> u64 {
        self.acyclic_total() + self.cyclic
    }

    pub fn cycle_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.cyclic as f64 / self.total() as f64
        }
    }

    /// Empirical law over acyclic samples; cyclic clusters are excluded.
    pub fn frequencies(&self) -> BTreeMap<String, f64> {
        let total = self.acyclic_total().max(1) as f64;
        self.trees
            .iter()
            .map(|(code, &c)| (code.clone(), c as f64 / total))
            .collect()
    }

    /// Writes `canonical_code,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["canonical_code", "count"])?;
        for (code, c) in &self.trees {
            w.write_record([code.as_str(), &c.to_string()])?;
        }
        w.write_record(["exceeded", &self.exceeded.to_string()])?;
        w.write_record(["cyclic", &self.cyclic.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Exact `GW_{pi, hat pi}` probabilities of every tree with at most
/// `size_cap` vertices, keyed by canonical code.
pub fn delayed_tree_law(pi: &Pmf, size_cap: usize) -> Result<BTreeMap<String, f64>> {
    let hat = pi.size_biased_shift()?;
    let mut law = BTreeMap::new();
    for n in 1..=size_cap {
        for t in enumerate_trees(n) {
            law.insert(t.canonical_code(), tree_probability_with(&t, pi, &hat));
        }
    }
    Ok(law)
}

/// Writes the exact delayed law up to `size_cap` as `canonical_code,probability`.
pub fn write_law_csv<W: Write>(law: &BTreeMap<String, f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canonical_code", "probability"])?;
    for (code, p) in law {
        w.write_record([code.as_str(), &format!("{p:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Total-variation distance between an empirical tree law and the exact
/// `GW_{pi, hat pi}` law, restricted to trees with at most `size_cap`
/// vertices; everything else (larger trees, unknown codes) is one lumped
/// atom.
pub fn tree_distribution_distance(
    empirical: &BTreeMap<String, f64>,
    pi: &Pmf,
    size_cap: usize,
) -> Result<f64> {
    let law = delayed_tree_law(pi, size_cap)?;
    let keys: BTreeSet<&String> = law.keys().collect();
    let mut tv = 0.0;
    for (code, &p) in &law {
        let e = empirical.get(code).copied().unwrap_or(0.0);
        tv += (e - p).abs();
    }
    let law_in: f64 = law.values().sum();
    let emp_total: f64 = empirical.values().sum();
    // Mass of codes outside the enumerated set plus the unrecorded mass.
    let emp_out = empirical
        .iter()
        .filter(|(c, _)| !keys.contains(c))
        .map(|(_, e)| e)
        .sum::<f64>()
        + (1.0 - emp_total).max(0.0);
    tv += (emp_out - (1.0 - law_in)).abs();
    Ok(0.5 * tv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::borel_pmf;
    use crate::rng::sim_rng;

    fn size_hist(samples: impl Iterator<Item = GwSample>, cap: usize) -> (Vec<u64>, u64) {
        let mut h = vec![0u64; cap + 1];
        let mut exceeded = 0;
        for s in samples {
            match s {
                GwSample::Tree(t) => h[t.len()] += 1,
                GwSample::CapExceeded => exceeded += 1,
            }
        }
        (h, exceeded)
    }

    fn within_3_sigma(count: u64, n: u64, p: f64) -> bool {
        let sd = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
        (count as f64 - n as f64 * p).abs() <= 3.0 * sd
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = sim_rng(1);
        let d0 = Pmf::point_mass(0);
        let d1 = Pmf::point_mass(1);
        let d2 = Pmf::point_mass(2);
        for _ in 0..20 {
            assert_eq!(
                sample_gw(&d0, 10, &mut rng),
                GwSample::Tree(RootedTree::single())
            );
            assert_eq!(sample_gw(&d1, 100, &mut rng), GwSample::CapExceeded);
            assert_eq!(
                sample_delayed_gw(&d0, 10, &mut rng),
                GwSample::Tree(RootedTree::single())
            );
            assert_eq!(sample_delayed_gw(&d2, 100, &mut rng), GwSample::CapExceeded);
        }
    }

    #[test]
    fn critical_poisson_sizes_are_borel() {
        let pi = Pmf::poisson(1.0, 64).unwrap();
        let n = 100_000u64;
        for delayed in [false, true] {
            let mut rng = sim_rng(if delayed { 3 } else { 2 });
            let (h, _) = size_hist(
                (0..n).map(|_| {
                    if delayed {
                        sample_delayed_gw(&pi, 50, &mut rng)
                    } else {
                        sample_gw(&pi, 50, &mut rng)
                    }
                }),
                50,
            );
            for (m, &hm) in h.iter().enumerate().take(11).skip(1) {
                let p = borel_pmf(1.0, m as u64).unwrap();
                assert!(within_3_sigma(hm, n, p), "delayed={delayed} m={m}");
            }
        }
    }

    #[test]
    fn progeny_examples() {
        let p1 = Pmf::poisson(1.0, 64).unwrap();
        assert!((progeny_pmf(&p1, 1).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((progeny_pmf(&p1, 2).unwrap() - (-2.0f64).exp()).abs() < 1e-14);
        assert!((progeny_pmf(&p1, 2).unwrap() - borel_pmf(1.0, 2).unwrap()).abs() < 1e-14);
        assert_eq!(progeny_pmf(&Pmf::point_mass(3), 2).unwrap(), 0.0);
        // Root with one child that has no offspring: mu(1) * hat mu(0).
        let half = Pmf::poisson(0.5, 64).unwrap();
        let direct = half.get(1) * half.size_biased_shift().unwrap().get(0);
        assert!((progeny_pmf(&half, 2).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn progeny_mass_and_survival() {
        let sub = Pmf::poisson(0.5, 128).unwrap();
        let s: f64 = (1..=500).map(|m| progeny_pmf(&sub, m).unwrap()).sum();
        assert!(s <= 1.0 + 1e-12 && 1.0 - s < 1e-2);
        let sup = Pmf::poisson(2.0, 256).unwrap();
        let mut acc = 0.0;
        for m in 1..=500 {
            acc += progeny_pmf(&sup, m).unwrap();
            assert!(acc <= 1.0 + 1e-12);
        }
        // Survival of GW(Poisson(2)) is 0.7968.
        assert!(1.0 - acc > 0.1);
        assert!((1.0 - acc - 0.796_812_1).abs() < 1e-4);
    }

    #[test]
    fn delayed_equals_dwass_on_samples() {
        let laws = [
            Pmf::poisson(0.5, 64).unwrap(),
            Pmf::poisson(1.0, 64).unwrap(),
            Pmf::binomial(3, 0.3).unwrap(),
        ];
        let n = 100_000u64;
        for (i, pi) in laws.iter().enumerate() {
            let mut rng = sim_rng(20 + i as u64);
            let (h, _) = size_hist((0..n).map(|_| sample_delayed_gw(pi, 60, &mut rng)), 60);
            for (m, &hm) in h.iter().enumerate().take(11).skip(1) {
                let p = progeny_pmf(pi, m).unwrap();
                assert!(within_3_sigma(hm, n, p), "law {i} m={m}");
            }
        }
    }

    #[test]
    fn canonical_code_examples() {
        let path = RootedTree::from_parents(vec![0, 0, 1]).unwrap();
        let cherry = RootedTree::from_parents(vec![0, 0, 0]).unwrap();
        assert_eq!(path.canonical_code(), "((()))");
        assert_eq!(cherry.canonical_code(), "(()())");
        let a = RootedTree::from_parents(vec![0, 0, 0, 1]).unwrap();
        let b = RootedTree::from_parents(vec![0, 0, 0, 2]).unwrap();
        assert_eq!(a.canonical_code(), b.canonical_code());
        assert!(RootedTree::from_parents(vec![0, 2, 0]).is_err());
    }

    /// Brute force: every labelled parent array on n vertices, relabelled
    /// by a canonical form computed independently (sorted nested vectors).
    fn nested(tree: &RootedTree) -> String {
        fn rec(v: usize, ch: &[Vec<usize>]) -> Vec<String> {
            let mut kids: Vec<String> = ch[v].iter().map(|&c| rec(c, ch).join("")).collect();
            kids.sort();
            let mut out = vec!["[".to_string()];
            out.extend(kids);
            out.push("]".to_string());
            out
        }
        rec(0, &tree.children()).join("")
    }

    fn all_parent_arrays(n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![0usize]];
        for v in 1..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..v).map(move |q| {
                        let mut p = p.clone();
                        p.push(q);
                        p
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn canonical_code_is_exact_up_to_seven_nodes() {
        // Rooted unlabelled trees: 1, 1, 2, 4, 9, 20, 48.
        let counts = [1, 1, 2, 4, 9, 20, 48];
        for n in 1..=7 {
            let mut by_code: BTreeMap<String, String> = BTreeMap::new();
            let mut classes = BTreeSet::new();
            for p in all_parent_arrays(n) {
                let t = RootedTree::from_parents(p).unwrap();
                let code = t.canonical_code();
                let reference = nested(&t);
                if let Some(prev) = by_code.insert(code, reference.clone()) {
                    assert_eq!(prev, reference);
                }
                classes.insert(reference);
            }
            assert_eq!(by_code.len(), classes.len());
            assert_eq!(by_code.len(), counts[n - 1]);
            assert_eq!(enumerate_trees(n).len(), counts[n - 1]);
        }
    }

    #[test]
    fn exact_tree_law_sums_to_progeny() {
        let pi = Pmf::binomial(3, 0.4).unwrap();
        for n in 1..=6 {
            let total: f64 = enumerate_trees(n)
                .iter()
                .map(|t| delayed_tree_probability(t, &pi).unwrap())
                .sum();
            assert!(
                (total - progeny_pmf(&pi, n).unwrap()).abs() < 1e-12,
                "n={n}"
            );
        }
    }

    #[test]
    fn exact_tree_law_matches_samples() {
        let pi = Pmf::poisson(0.8, 64).unwrap();
        let mut rng = sim_rng(30);
        let mut tally = TreeTally::default();
        for _ in 0..100_000 {
            match sample_delayed_gw(&pi, 4, &mut rng) {
                GwSample::Tree(t) => tally.add_tree(&t),
                GwSample::CapExceeded => tally.exceeded += 1,
            }
        }
        let d = tree_distribution_distance(&tally.frequencies(), &pi, 4).unwrap();
        assert!(d < 0.01, "distance {d}");
    }

    #[test]
    fn distance_examples() {
        let pi = Pmf::poisson(1.3, 64).unwrap();
        let exact = delayed_tree_law(&pi, 4).unwrap();
        assert!(tree_distribution_distance(&exact, &pi, 4).unwrap() < 1e-12);

        let single = RootedTree::single().canonical_code();
        let emp = BTreeMap::from([(single, 1.0)]);
        let d1 = Pmf::point_mass(1);
        let p_single = delayed_tree_probability(&RootedTree::single(), &d1).unwrap();
        let d = tree_distribution_distance(&emp, &d1, 4).unwrap();
        assert!((d - (1.0 - p_single)).abs() < 1e-12);
    }
}
