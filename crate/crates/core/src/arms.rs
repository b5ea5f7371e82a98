//! Arm bookkeeping shared by the graph samplers and both simulators.
//!
//! Arms are numbered globally: the arms of vertex `v` are
//! `offsets[v]..offsets[v + 1]`, slot `s` of `v` is arm `offsets[v] + s`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::measures::Pmf;
use crate::rng::SimRng;

#[derive(Clone, Debug)]
pub struct ArmLayout {
    offsets: Vec<u32>,
    owner: Vec<u32>,
}

impl ArmLayout {
    pub fn new(degrees: &[u32]) -> Self {
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        let mut owner = Vec::new();
        offsets.push(0);
        for (v, &d) in degrees.iter().enumerate() {
            owner.extend(std::iter::repeat_n(v as u32, d as usize));
            offsets.push(owner.len() as u32);
        }
        Self { offsets, owner }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn arm_count(&self) -> usize {
        self.owner.len()
    }

    #[inline]
    pub fn owner(&self, arm: u32) -> u32 {
        self.owner[arm as usize]
    }

    #[inline]
    pub fn slot(&self, arm: u32) -> u32 {
        arm - self.offsets[self.owner(arm) as usize]
    }

    #[inline]
    pub fn arm(&self, vertex: u32, slot: u32) -> u32 {
        self.offsets[vertex as usize] + slot
    }

    #[inline]
    pub fn degree(&self, vertex: u32) -> u32 {
        self.offsets[vertex as usize + 1] - self.offsets[vertex as usize]
    }

    pub fn arms_of(&self, vertex: u32) -> std::ops::Range<u32> {
        self.offsets[vertex as usize]..self.offsets[vertex as usize + 1]
    }
}

/// Arm activations in time order.
///
/// The activation order is a uniform permutation of the arms and the times
/// are the order statistics of i.i.d. `Exp(1)` clocks, generated by the
/// Renyi representation `t_i = t_{i-1} + E_i / (M - i)`. Together they have
/// the law of sorting independent clocks.
#[derive(Clone, Debug)]
pub struct ActivationStream {
    order: Vec<u32>,
    pos: usize,
    time: f64,
    next_time: Option<f64>,
    rng: SimRng,
}

impl ActivationStream {
    pub fn new(arm_count: usize, mut rng: SimRng) -> Self {
        let mut order: Vec<u32> = (0..arm_count as u32).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            time: 0.0,
            next_time: None,
            rng,
        }
    }

    /// Number of activations already emitted.
    pub fn emitted(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.order.len() - self.pos
    }

    /// Time of the last emitted activation (0 before the first).
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Time of the next activation without consuming it.
    pub fn peek_time(&mut self) -> Option<f64> {
        if self.pos >= self.order.len() {
            return None;
        }
        if self.next_time.is_none() {
            let left = (self.order.len() - self.pos) as f64;
            let e: f64 = Exp1.sample(&mut self.rng);
            self.next_time = Some(self.time + e / left);
        }
        self.next_time
    }
}

impl Iterator for ActivationStream {
    type Item = (u32, f64);

    fn next(&mut self) -> Option<(u32, f64)> {
        let t = self.peek_time()?;
        let arm = self.order[self.pos];
        self.pos += 1;
        self.time = t;
        self.next_time = None;
        Some((arm, t))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining(), Some(self.remaining()))
    }
}

/// Integer degree counts `n_r` with `sum n_r = n` closest to `n mu(r)`
/// (largest-remainder rounding).
pub fn realize_counts(mu: &Pmf, n: usize) -> Vec<u64> {
    let w = mu.weights();
    let total: f64 = w.iter().sum();
    let ideal: Vec<f64> = w.iter().map(|&p| p / total * n as f64).collect();
    let mut counts: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (ideal[a] - ideal[a].floor(), ideal[b] - ideal[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned as usize)) {
        counts[k] += 1;
    }
    counts
}

/// Degree sequence listing `counts[r]` vertices of degree `r`, in
/// increasing degree order.
pub fn degrees_from_counts(counts: &[u64]) -> Vec<u32> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(r, &c)| std::iter::repeat_n(r as u32, c as usize))
        .collect()
}

/// Number of vertices of each degree.
pub fn degree_counts(degrees: &[u32]) -> Vec<u64> {
    let max = degrees.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max + 1];
    for &d in degrees {
        counts[d as usize] += 1;
    }
    counts
}

/// Draws `n` i.i.d. degrees from `mu`.
pub fn sample_degrees<R: Rng + ?Sized>(mu: &Pmf, n: usize, rng: &mut R) -> Vec<u32> {
    let s = mu.sampler();
    (0..n).map(|_| s.sample(rng) as u32).collect()
}

pub(crate) fn check_arm_total(total: usize) -> Result<()> {
    if total > u32::MAX as usize {
        return Err(Error::precondition(format!(
            "{total} arms exceed the 32-bit arm index space"
        )));
    }
    Ok(())
}
