//! Dynamical configuration model `G_t(theta)`.
//!
//! Every arm of the `n` vertices carries an `Exp(1)` clock. Activated arms
//! are bound in pairs in the order they ring (first with second, third with
//! fourth, ...). At a fixed time the graph is a configuration model on the
//! activated arms; run until the first component reaches `alpha` vertices
//! it describes the first gelation of the frozen model.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arms::{
    check_arm_total, degrees_from_counts, realize_counts, ActivationStream, ArmLayout,
};
use crate::error::{Error, Result};
use crate::graphs::{Arm, Pairing};
use crate::measures::Pmf;
use crate::rng::SimRng;
use crate::smoluchowski::{t_gel, GelTime};
use crate::union_find::UnionFind;

/// `theta = (n, mu)` with integral degree counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theta {
    /// `counts[r]` vertices of degree `r`.
    counts: Vec<u64>,
}

impl Theta {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::Degenerate("theta needs at least one vertex".into()));
        }
        let mut counts = counts;
        while counts.len() > 1 && *counts.last().unwrap() == 0 {
            counts.pop();
        }
        Ok(Self { counts })
    }

    /// Rounds `n mu(r)` to integers summing to `n`.
    pub fn from_pmf(n: usize, mu: &Pmf) -> Result<Self> {
        Self::from_counts(realize_counts(mu, n))
    }

    pub fn from_degrees(degrees: &[u32]) -> Result<Self> {
        Self::from_counts(crate::arms::degree_counts(degrees))
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum::<u64>() as usize
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mu(&self) -> Pmf {
        Pmf::from_counts(&self.counts).expect("theta has positive total")
    }

    pub fn arm_total(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(r, &c)| r as u64 * c)
            .sum()
    }

    /// Vertex degrees in increasing order (vertex ids follow degree).
    pub fn degrees(&self) -> Vec<u32> {
        degrees_from_counts(&self.counts)
    }
}

/// When to stop a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopSpec {
    /// Process activations up to time `t`.
    Time(f64),
    /// Process exactly this many activations.
    ArmCount(u64),
    /// Stop at the first component of size at least `alpha`.
    FirstGel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Time,
    ArmCount,
    Gel,
    /// Every arm rang without a large component.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GelComponent {
    pub size: u64,
    /// (activated arms, degree) -> vertex count.
    #[serde(serialize_with = "crate::pair_map::serialize")]
    pub v_kr: BTreeMap<(u32, u32), u64>,
    /// Activated arms on the gel's vertices.
    pub activated_arms: u64,
}

impl GelComponent {
    /// Vertex count per degree.
    pub fn degree_counts(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for (&(_, r), &c) in &self.v_kr {
            *out.entry(r).or_insert(0) += c;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionAfter {
    /// Vertices outside the gel.
    pub s: u64,
    /// Activated arms outside the gel.
    pub b: u64,
    /// `degree_counts[r]` solution vertices of degree `r`.
    pub degree_counts: Vec<u64>,
    pub mu_bar: Option<Pmf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DcmRun {
    pub stop_reason: StopReason,
    /// Time of the last processed activation (or the time target).
    pub stop_time: f64,
    /// Time of the activation that created the first large component.
    pub sigma: Option<f64>,
    pub gel_component: Option<GelComponent>,
    pub solution_after: SolutionAfter,
    /// Activated arms `B_theta(t)` at the stop.
    pub activated_total: u64,
    #[serde(skip)]
    pub graph: Pairing,
}

impl DcmRun {
    /// Writes the gel component's census as `k,r,count` (activated arms,
    /// degree).
    pub fn write_census_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "r", "count"])?;
        if let Some(g) = &self.gel_component {
            for (&(k, r), &c) in &g.v_kr {
                w.write_record([k.to_string(), r.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the dynamical configuration model on `theta` until `stop`.
///
/// With [`StopSpec::Time`] and [`StopSpec::ArmCount`] the run never stops
/// early on a large component; `sigma` still records when the first one
/// appeared.
pub fn simulate_dcm(theta: &Theta, alpha: u64, stop: StopSpec, rng: SimRng) -> Result<DcmRun> {
    if alpha < 2 {
        return Err(Error::precondition("alpha must be at least 2"));
    }
    let total = theta.arm_total();
    check_arm_total(total as usize)?;
    match stop {
        StopSpec::ArmCount(b) if b > total => {
            return Err(Error::precondition(format!(
                "arm target {b} exceeds the {total} available arms"
            )))
        }
        StopSpec::Time(t) if t.is_nan() || t < 0.0 => {
            return Err(Error::precondition(format!("time target {t} is negative")))
        }
        _ => {}
    }
    let degrees = theta.degrees();
    let layout = ArmLayout::new(&degrees);
    let n = degrees.len();
    let mut uf = UnionFind::new(n);
    let mut activated = vec![0u32; n];
    let mut stream = ActivationStream::new(layout.arm_count(), rng);
    let mut pending: Option<u32> = None;
    let mut matches = Vec::new();
    let mut sigma = None;
    let mut gel_root = None;
    let mut last_time = 0.0;
    let to_arm = |id: u32| Arm {
        vertex: layout.owner(id),
        slot: layout.slot(id),
    };

    let reason = loop {
        match stop {
            StopSpec::Time(t_max) => match stream.peek_time() {
                Some(t) if t <= t_max => {}
                _ => {
                    last_time = if t_max.is_finite() {
                        t_max
                    } else {
                        stream.time()
                    };
                    break StopReason::Time;
                }
            },
            StopSpec::ArmCount(b) if stream.emitted() as u64 >= b => break StopReason::ArmCount,
            _ => {}
        }
        let Some((arm, t)) = stream.next() else {
            break StopReason::Exhausted;
        };
        last_time = t;
        let v = layout.owner(arm);
        activated[v as usize] += 1;
        match pending.take() {
            None => pending = Some(arm),
            Some(other) => {
                matches.push((to_arm(other), to_arm(arm)));
                let (root, _) = uf.union(layout.owner(other), v);
                if sigma.is_none() && u64::from(uf.root_size(root)) >= alpha {
                    sigma = Some(t);
                    gel_root = Some(root);
                    if stop == StopSpec::FirstGel {
                        break StopReason::Gel;
                    }
                }
            }
        }
    };

    let gel_root = gel_root.map(|r| uf.find(r));
    let mut gel: Option<GelComponent> = gel_root.map(|_| GelComponent {
        size: 0,
        v_kr: BTreeMap::new(),
        activated_arms: 0,
    });
    let mut sol_counts = vec![0u64; theta.counts.len()];
    let (mut s, mut b) = (0u64, 0u64);
    for v in 0..n as u32 {
        let (d, k) = (degrees[v as usize], activated[v as usize]);
        match (&mut gel, gel_root) {
            (Some(g), Some(root)) if uf.find(v) == root => {
                g.size += 1;
                g.activated_arms += u64::from(k);
                *g.v_kr.entry((k, d)).or_insert(0) += 1;
            }
            _ => {
                s += 1;
                b += u64::from(k);
                sol_counts[d as usize] += 1;
            }
        }
    }
    let mu_bar = (s > 0).then(|| Pmf::from_counts(&sol_counts)).transpose()?;
    Ok(DcmRun {
        stop_reason: reason,
        stop_time: last_time,
        sigma,
        gel_component: gel,
        solution_after: SolutionAfter {
            s,
            b,
            degree_counts: sol_counts,
            mu_bar,
        },
        activated_total: stream.emitted() as u64,
        graph: Pairing {
            degrees,
            matches,
            unpaired: pending.map(to_arm),
        },
    })
}

/// Deterministic hitting time `-log(1 - B / (n m_1))` of `B` activations.
pub fn activation_time_for_arms(theta: &Theta, b: u64) -> Result<f64> {
    let total = theta.arm_total();
    if b >= total {
        return Err(Error::precondition(format!(
            "{b} activations are never reached with {total} arms"
        )));
    }
    Ok(-(-(b as f64) / total as f64).ln_1p())
}

/// Generating function of the activated-arm law at time `t`:
/// `G_mu((1 - e^{-t}) x + e^{-t})`.
pub fn rho_t_pgf(mu: &Pmf, t: f64, x: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::domain(format!("time {t} is negative")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("pgf argument {x} not in [0,1]")));
    }
    let e = (-t).exp();
    mu.pgf((1.0 - e) * x + e)
}

/// Activated-arm law `rho_t` itself (binomial thinning of `mu`).
pub fn rho_t(mu: &Pmf, t: f64) -> Result<Pmf> {
    let p = 1.0 - (-t).exp();
    let mut w = vec![0.0; mu.k_max() + 1];
    for (r, &m) in mu.weights().iter().enumerate() {
        for (k, b) in Pmf::binomial(r, p)?.weights().iter().enumerate() {
            w[k] += m * b;
        }
    }
    Pmf::new(w)
}

/// First-gelation forecasts for `theta` with threshold `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GelForecast {
    pub t_gel: f64,
    /// `T_gel + (alpha/n) m_3 / (2 m_2 (m_2 - m_1))`.
    pub sigma: f64,
    pub gel_size: f64,
    /// Activated arms in the gel, `2 alpha`.
    pub gel_arm_count: f64,
    /// Expected gel vertices of degree `k`: `alpha k mu(k) / m_1`.
    pub gel_degree_counts: Vec<f64>,
    /// Activated arms left in solution per vertex,
    /// `m_1^2/m_2 + (alpha/n)(m_1 m_3 / (2 m_2^2) - 2)`.
    pub b_after_over_n: f64,
    /// Coefficients of `G_mu + (alpha/n)(G_mu - x G_mu'/m_1)`.
    pub mu_bar: Vec<f64>,
    /// `(alpha/n) m_3 / (m_2 (m_2 - m_1))`.
    pub intergel_gap: f64,
}

pub fn gelation_predictions(theta: &Theta, alpha: u64) -> Result<GelForecast> {
    let mu = theta.mu();
    forecast_for(&mu, theta.n(), alpha)
}

/// [`gelation_predictions`] for a degree law and vertex count.
pub fn forecast_for(mu: &Pmf, n: usize, alpha: u64) -> Result<GelForecast> {
    let (m1, m2, m3) = (
        mu.factorial_moment(1),
        mu.factorial_moment(2),
        mu.factorial_moment(3),
    );
    let GelTime::Finite(tg) = t_gel(mu)? else {
        return Err(Error::precondition(
            "no gelation forecast for a subcritical or critical degree law",
        ));
    };
    if m3 <= 0.0 {
        return Err(Error::precondition("gelation forecast needs m_3 > 0"));
    }
    let eps = alpha as f64 / n as f64;
    let gap = eps * m3 / (m2 * (m2 - m1));
    Ok(GelForecast {
        t_gel: tg,
        sigma: tg + 0.5 * gap,
        gel_size: alpha as f64,
        gel_arm_count: 2.0 * alpha as f64,
        gel_degree_counts: mu
            .weights()
            .iter()
            .enumerate()
            .map(|(k, &w)| alpha as f64 * k as f64 * w / m1)
            .collect(),
        b_after_over_n: m1 * m1 / m2 + eps * (m1 * m3 / (2.0 * m2 * m2) - 2.0),
        mu_bar: mu
            .weights()
            .iter()
            .enumerate()
            .map(|(k, &w)| w + eps * (w - k as f64 * w / m1))
            .collect(),
        intergel_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sim_rng;

    #[test]
    fn theta_basics() {
        let th = Theta::from_pmf(1000, &Pmf::point_mass(2)).unwrap();
        assert_eq!(th.n(), 1000);
        assert_eq!(th.arm_total(), 2000);
        assert!(Theta::from_counts(vec![0, 0]).is_err());
        let th = Theta::from_degrees(&[2, 0, 1, 2]).unwrap();
        assert_eq!(th.counts(), &[1, 1, 2]);
        assert_eq!(th.degrees(), vec![0, 1, 2, 2]);
    }

    #[test]
    fn no_arms_never_activate() {
        let th = Theta::from_counts(vec![10]).unwrap();
        let run = simulate_dcm(&th, 5, StopSpec::Time(3.0), sim_rng(1)).unwrap();
        assert_eq!(run.stop_reason, StopReason::Time);
        assert_eq!(run.activated_total, 0);
        assert!(run.graph.matches.is_empty());
    }

    #[test]
    fn two_degree_one_vertices_link_once() {
        let th = Theta::from_counts(vec![0, 2]).unwrap();
        let run = simulate_dcm(&th, 100, StopSpec::Time(f64::INFINITY), sim_rng(2)).unwrap();
        assert_eq!(run.graph.matches.len(), 1);
        assert_eq!(crate::graphs::components(&run.graph).components[0].size, 2);
        let run = simulate_dcm(&th, 2, StopSpec::FirstGel, sim_rng(2)).unwrap();
        assert_eq!(run.stop_reason, StopReason::Gel);
        assert_eq!(run.gel_component.unwrap().size, 2);
        assert_eq!(run.solution_after.s, 0);
    }

    #[test]
    fn stop_preconditions() {
        let th = Theta::from_counts(vec![0, 2]).unwrap();
        assert!(simulate_dcm(&th, 2, StopSpec::ArmCount(3), sim_rng(0)).is_err());
        assert!(simulate_dcm(&th, 1, StopSpec::FirstGel, sim_rng(0)).is_err());
        let run = simulate_dcm(&th, 5, StopSpec::ArmCount(1), sim_rng(0)).unwrap();
        assert_eq!(run.activated_total, 1);
        assert!(run.graph.unpaired.is_some());
    }

    #[test]
    fn activation_time_examples() {
        let th = Theta::from_pmf(1000, &Pmf::point_mass(2)).unwrap();
        assert_eq!(activation_time_for_arms(&th, 0).unwrap(), 0.0);
        assert!((activation_time_for_arms(&th, 1000).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(activation_time_for_arms(&th, 2000).is_err());
    }

    #[test]
    fn rho_examples() {
        let mu = Pmf::poisson(2.0, 64).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert!((rho_t_pgf(&mu, 0.0, x).unwrap() - 1.0).abs() < 1e-15);
            let far = rho_t_pgf(&mu, 50.0, x).unwrap();
            assert!((far - mu.pgf(x).unwrap()).abs() < 1e-12);
        }
        let d2 = Pmf::point_mass(2);
        assert!((rho_t_pgf(&d2, 2f64.ln(), 0.0).unwrap() - 0.25).abs() < 1e-15);
        let r = rho_t(&d2, 2f64.ln()).unwrap();
        assert!((r.get(0) - 0.25).abs() < 1e-15 && (r.get(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forecast_examples() {
        let n = 1_000_000;
        let alpha = 100_000;
        let mu = Pmf::poisson(2.0, 256).unwrap();
        let f = forecast_for(&mu, n, alpha).unwrap();
        let eps = alpha as f64 / n as f64;
        assert!((f.sigma - (2f64.ln() + eps / 2.0)).abs() < 1e-12);
        assert!((f.intergel_gap - eps).abs() < 1e-12);
        let (sum, first): (f64, f64) = f
            .gel_degree_counts
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(s, fm), (k, &c)| (s + c, fm + k as f64 * c));
        assert!((sum - alpha as f64).abs() < 1e-6);
        assert!((first / sum - 3.0).abs() < 1e-10);
        // B_after/n: 1 + eps (8/(2*16)*2 - 2).
        assert!((f.b_after_over_n - (1.0 + eps * (0.5 - 2.0))).abs() < 1e-12);
        let mass: f64 = f.mu_bar.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(forecast_for(&Pmf::poisson(0.8, 64).unwrap(), n, alpha).is_err());
    }

    #[test]
    fn activated_count_is_monotone() {
        let th = Theta::from_pmf(2000, &Pmf::poisson(2.0, 64).unwrap()).unwrap();
        let mut prev = 0;
        for i in 0..20 {
            let t = i as f64 * 0.2;
            let run = simulate_dcm(&th, 3000, StopSpec::Time(t), sim_rng(7)).unwrap();
            assert!(run.activated_total >= prev);
            prev = run.activated_total;
        }
    }

    #[test]
    fn gel_component_size_is_bounded() {
        let th = Theta::from_pmf(20_000, &Pmf::poisson(2.0, 64).unwrap()).unwrap();
        for seed in 0..20 {
            let alpha = 500;
            let run = simulate_dcm(&th, alpha, StopSpec::FirstGel, sim_rng(seed)).unwrap();
            let g = run.gel_component.unwrap();
            assert!(g.size >= alpha && g.size < 2 * alpha);
            assert_eq!(g.size + run.solution_after.s, 20_000);
        }
    }
}
