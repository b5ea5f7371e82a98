//! Probability mass functions on the naturals with finite support.
//!
//! Every degree law, activated-arm law and offspring law of the crate is a
//! [`Pmf`]: a weight vector indexed by `k = 0..=k_max`. Named laws with
//! infinite support are cut at `k_max` (default [`DEFAULT_KMAX`]) and
//! renormalized; the mass removed by the cut is kept in
//! [`Pmf::truncated_mass`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Support cap applied to named laws with infinite support.
pub const DEFAULT_KMAX: usize = 256;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct Pmf {
    weights: Vec<f64>,
    truncated: f64,
}

#[derive(Serialize, Deserialize)]
struct PmfRepr {
    weights: Vec<f64>,
}

impl TryFrom<PmfRepr> for Pmf {
    type Error = Error;

    fn try_from(repr: PmfRepr) -> Result<Self> {
        Pmf::new(repr.weights)
    }
}

impl From<Pmf> for PmfRepr {
    fn from(pmf: Pmf) -> Self {
        PmfRepr {
            weights: pmf.weights,
        }
    }
}

impl Pmf {
    /// Normalizes nonnegative `weights` into a pmf.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("pmf weights must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::Degenerate("pmf weights sum to zero".into()));
        }
        let mut weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        trim_trailing_zeros(&mut weights);
        Ok(Self {
            weights,
            truncated: 0.0,
        })
    }

    /// Empirical law of integer counts (`counts[k]` items of value `k`).
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    /// Coefficient vector kept as is (no renormalization), with the mass
    /// lost beyond the cap recorded.
    fn raw(mut weights: Vec<f64>, truncated: f64) -> Self {
        trim_trailing_zeros(&mut weights);
        Self { weights, truncated }
    }

    pub fn point_mass(d: usize) -> Self {
        let mut weights = vec![0.0; d + 1];
        weights[d] = 1.0;
        Self {
            weights,
            truncated: 0.0,
        }
    }

    /// Poisson(`lambda`) cut at `k_max`, renormalized.
    pub fn poisson(lambda: f64, k_max: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::domain(format!("poisson rate {lambda} must be >= 0")));
        }
        if lambda == 0.0 {
            return Ok(Self::point_mass(0));
        }
        let ln_lambda = lambda.ln();
        let weights: Vec<f64> = (0..=k_max)
            .map(|k| (k as f64 * ln_lambda - lambda - ln_factorial(k as u64)).exp())
            .collect();
        Ok(Self::renormalized(weights))
    }

    /// Binomial(`d`, `p`), exact (finite support).
    pub fn binomial(d: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!(
                "binomial parameter {p} not in [0,1]"
            )));
        }
        let weights = (0..=d).map(|k| binomial_term(d, k, p)).collect();
        Ok(Self::renormalized(weights))
    }

    fn renormalized(weights: Vec<f64>) -> Self {
        let total = compensated_sum(weights.iter().copied());
        let mut pmf = Self::raw(weights.into_iter().map(|w| w / total).collect(), 0.0);
        pmf.truncated = (1.0 - total).max(0.0);
        pmf
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `mu(k)`, zero outside the support.
    pub fn get(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    /// Largest index carrying weight.
    pub fn k_max(&self) -> usize {
        self.weights.len() - 1
    }

    /// Mass removed by the support cap when the law was built.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Generating function `G(x) = sum_k mu(k) x^k` for `x` in `[0,1]`.
    pub fn pgf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("pgf argument {x} not in [0,1]")));
        }
        Ok(self.pgf_at(x))
    }

    /// Unchecked generating function (Horner); callers guarantee `|x| <= 1`.
    pub fn pgf_at(&self, x: f64) -> f64 {
        self.weights.iter().rev().fold(0.0, |acc, &w| acc * x + w)
    }

    /// `i`-th derivative of the generating function at `x`.
    pub fn pgf_derivative(&self, x: f64, order: usize) -> f64 {
        if order == 0 {
            return self.pgf_at(x);
        }
        let mut acc = 0.0;
        for k in (order..self.weights.len()).rev() {
            acc = acc * x + falling_factorial(k, order) * self.weights[k];
        }
        acc
    }

    /// `m_i = sum_k k(k-1)...(k-i+1) mu(k)`.
    pub fn factorial_moment(&self, i: usize) -> f64 {
        compensated_sum(
            self.weights
                .iter()
                .enumerate()
                .skip(i)
                .map(|(k, &w)| falling_factorial(k, i) * w),
        )
    }

    pub fn mean(&self) -> f64 {
        self.factorial_moment(1)
    }

    /// `hat(mu)(k) = (k+1) mu(k+1) / m_1`: the law of the number of other
    /// arms on the particle owning a uniformly chosen arm.
    pub fn size_biased_shift(&self) -> Result<Self> {
        let m1 = self.mean();
        if m1 <= 0.0 {
            return Err(Error::Degenerate(
                "size-biased shift of a law with zero mean".into(),
            ));
        }
        let weights: Vec<f64> = (0..self.k_max())
            .map(|k| (k + 1) as f64 * self.weights[k + 1] / m1)
            .collect();
        if weights.is_empty() {
            return Err(Error::Degenerate("size-biased shift of delta_0".into()));
        }
        Ok(Self::raw(weights, 0.0))
    }

    /// `gamma = m_2 - m_1`; its sign separates the sub-, critical and
    /// supercritical configuration-model regimes.
    pub fn gamma_param(&self) -> f64 {
        self.factorial_moment(2) - self.factorial_moment(1)
    }

    /// Convolution, coefficients above `cap` dropped.
    pub fn convolve(&self, other: &Self, cap: usize) -> Self {
        let len = (self.weights.len() + other.weights.len() - 1).min(cap + 1);
        let mut out = vec![0.0; len];
        for (i, &a) in self.weights.iter().enumerate().take(len) {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.weights.iter().enumerate().take(len - i) {
                out[i + j] += a * b;
            }
        }
        let kept: f64 = out.iter().sum();
        let total = self.total_mass() * other.total_mass();
        Self::raw(
            out,
            (total - kept).max(0.0) + self.truncated + other.truncated,
        )
    }

    /// `m`-fold convolution power, coefficients above `cap` dropped.
    ///
    /// The retained coefficients are exact (no renormalization); they sum to
    /// `1 - truncated_mass()`.
    pub fn convolve_power(&self, m: usize, cap: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::precondition("convolution power needs m >= 1"));
        }
        let mut base = self.convolve(&Self::point_mass(0), cap);
        let mut acc: Option<Self> = None;
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.convolve(&base, cap),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.convolve(&base, cap);
            }
        }
        let mut out = acc.expect("m >= 1");
        out.truncated = (1.0 - out.total_mass()).max(0.0);
        Ok(out)
    }

    pub fn sampler(&self) -> PmfSampler {
        let mut cdf = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        PmfSampler { cdf }
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn trim_trailing_zeros(weights: &mut Vec<f64>) {
    while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
        weights.pop();
    }
    if weights.is_empty() {
        weights.push(0.0);
    }
}

/// Inverse-cdf sampler for a [`Pmf`].
#[derive(Clone, Debug)]
pub struct PmfSampler {
    cdf: Vec<f64>,
}

impl PmfSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}

/// `k (k-1) ... (k-i+1)` as a float.
pub fn falling_factorial(k: usize, i: usize) -> f64 {
    if i > k {
        return 0.0;
    }
    ((k - i + 1)..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// `ln(n!)`; exact summation below 30, `lgamma` above.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 30 {
        (2..=n).map(|j| (j as f64).ln()).sum()
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

fn binomial_term(d: usize, k: usize, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == d { 1.0 } else { 0.0 };
    }
    let ln = ln_factorial(d as u64) - ln_factorial(k as u64) - ln_factorial((d - k) as u64)
        + k as f64 * p.ln()
        + (d - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

/// Borel law `B(lambda, m) = (lambda m)^(m-1) e^(-lambda m) / m!`, the total
/// progeny of a Poisson(`lambda`) Galton-Watson tree.
pub fn borel_pmf(lambda: f64, m: u64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain(format!(
            "borel parameter {lambda} not in (0,1]"
        )));
    }
    if m == 0 {
        return Err(Error::domain("borel pmf is supported on m >= 1"));
    }
    let mf = m as f64;
    if m <= 30 {
        let mut value = (-lambda * mf).exp();
        for j in 1..m {
            value *= lambda * mf / j as f64;
        }
        Ok(value / mf)
    } else {
        let ln = (mf - 1.0) * (lambda * mf).ln() - lambda * mf - ln_factorial(m);
        Ok(ln.exp())
    }
}

/// Named degree laws accepted on the command line and in configs:
/// `poisson:<rate>`, `delta:<d>`, `binomial:<d>:<p>`, `pmf:<w0>,<w1>,...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DistSpec {
    Poisson(f64),
    Delta(usize),
    Binomial(usize, f64),
    Weights(Vec<f64>),
}

impl DistSpec {
    pub fn to_pmf(&self) -> Result<Pmf> {
        self.to_pmf_with_cap(DEFAULT_KMAX)
    }

    pub fn to_pmf_with_cap(&self, k_max: usize) -> Result<Pmf> {
        match self {
            Self::Poisson(l) => Pmf::poisson(*l, k_max),
            Self::Delta(d) => Ok(Pmf::point_mass(*d)),
            Self::Binomial(d, p) => Pmf::binomial(*d, *p),
            Self::Weights(w) => Pmf::new(w.clone()),
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Poisson(l) => write!(f, "poisson:{l}"),
            Self::Delta(d) => write!(f, "delta:{d}"),
            Self::Binomial(d, p) => write!(f, "binomial:{d}:{p}"),
            Self::Weights(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "pmf:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("invalid distribution spec {s:?}: {what}"));
        let mut parts = s.trim().split(':');
        let kind = parts.next().unwrap_or_default().to_ascii_lowercase();
        let args: Vec<&str> = parts.collect();
        let spec = match (kind.as_str(), args.as_slice()) {
            ("poisson", [l]) => Self::Poisson(l.parse().map_err(|_| bad("rate"))?),
            ("delta", [d]) => Self::Delta(d.parse().map_err(|_| bad("degree"))?),
            ("binomial", [d, p]) => Self::Binomial(
                d.parse().map_err(|_| bad("trials"))?,
                p.parse().map_err(|_| bad("probability"))?,
            ),
            ("pmf", [w]) => Self::Weights(
                w.split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("weights"))?,
            ),
            _ => {
                return Err(bad(
                    "expected poisson:<l>, delta:<d>, binomial:<d>:<p> or pmf:<w,..>",
                ))
            }
        };
        // Reject invalid parameters at parse time.
        spec.to_pmf()?;
        Ok(spec)
    }
}

impl From<DistSpec> for String {
    fn from(spec: DistSpec) -> Self {
        spec.to_string()
    }
}

impl TryFrom<String> for DistSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
