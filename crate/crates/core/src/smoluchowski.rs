//! Deterministic limit of the frozen model.
//!
//! Concentrations `c(a, m)` of clusters with `a` free arms and mass `m`
//! follow Smoluchowski's equation with limited aggregations. Two clusters
//! with `a'` and `a''` free arms bind into one with `a' + a'' - 2`; every
//! free arm rings at rate one. In the *modified* time scale the free-arm
//! density obeys `dA/dt = -A`:
//!
//! ```text
//! dc(p)/dt = ( 1/2 sum_{p' o p'' = p} a' a'' c(p') c(p'') ) / A  -  a c(p)
//! ```
//!
//! The *unmodified* equation multiplies the right-hand side by `A`; the two
//! differ by the time change `s'(t) = A_{s(t)}`.
//!
//! The system is integrated on the window `a <= A_max, m <= M_max`.
//! Clusters created outside the window go to an inert overflow bucket
//! whose mass and arms are tracked, so `window mass + overflow mass` is an
//! exact invariant. The overflow behaves like a gel with threshold
//! `M_max`.
//!
//! The closed-form part covers the gelation time, the solution `Q(t)` of
//! `(Q - e^{-t}) G'_nu(Q) = G_nu(Q)` with `nu = hat mu`, the limit state
//! `n_t = G_mu(Q)`, `psi_t(x, y) = G_mu(((Q - e^{-t}) x + e^{-t}) y)`, the
//! tilt constants `(c, beta)` and the limiting concentrations.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Pmf;

/// Default mass cap of the integration window.
pub const DEFAULT_M_MAX: usize = 200;
/// Default step of the fixed-step integrator.
pub const DEFAULT_DT: f64 = 1e-3;

const ARM_UNDERFLOW: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-15;

/// Free-arm cap matching a mass cap: a tree of mass `m` built from
/// degree-`d` particles keeps about `(d - 2) m + 2` free arms, so the arm
/// window has to grow with the mass window.
pub fn default_a_max(m_max: usize) -> usize {
    m_max + 2
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdeState {
    a_max: usize,
    m_max: usize,
    /// Row-major over `(a, m)`, `m = 0` column unused.
    c: Vec<f64>,
    pub t: f64,
    pub overflow_mass: f64,
    pub overflow_arms: f64,
}

impl OdeState {
    pub fn zeros(a_max: usize, m_max: usize) -> Result<Self> {
        if a_max < 1 || m_max < 1 {
            return Err(Error::precondition("truncation caps must be >= 1"));
        }
        Ok(Self {
            a_max,
            m_max,
            c: vec![0.0; (a_max + 1) * (m_max + 1)],
            t: 0.0,
            overflow_mass: 0.0,
            overflow_arms: 0.0,
        })
    }

    /// Monodisperse start `c_0(a, 1) = mu(a)`; degrees above `a_max` are
    /// moved to the overflow.
    pub fn monodisperse(mu: &Pmf, a_max: usize, m_max: usize) -> Result<Self> {
        let mut s = Self::zeros(a_max, m_max)?;
        for (a, &w) in mu.weights().iter().enumerate() {
            if a <= a_max {
                s.set(a, 1, w);
            } else {
                s.overflow_mass += w;
                s.overflow_arms += a as f64 * w;
            }
        }
        Ok(s)
    }

    pub fn a_max(&self) -> usize {
        self.a_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    #[inline]
    fn idx(&self, a: usize, m: usize) -> usize {
        a * (self.m_max + 1) + m
    }

    /// `c(a, m)`; zero outside the window.
    pub fn get(&self, a: usize, m: usize) -> f64 {
        if a > self.a_max || m > self.m_max {
            0.0
        } else {
            self.c[self.idx(a, m)]
        }
    }

    pub fn set(&mut self, a: usize, m: usize, value: f64) {
        let i = self.idx(a, m);
        self.c[i] = value;
    }

    /// `(a, m, c(a, m))` over the window, `m >= 1`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.m_max + 1;
        self.c
            .iter()
            .enumerate()
            .filter(move |(i, _)| i % w != 0)
            .map(move |(i, &c)| (i / w, i % w, c))
    }

    /// `<c, a>`: free arms in the window.
    pub fn arms(&self) -> f64 {
        self.entries().map(|(a, _, c)| a as f64 * c).sum()
    }

    /// `<c, m>`: mass in the window.
    pub fn mass(&self) -> f64 {
        self.entries().map(|(_, m, c)| m as f64 * c).sum()
    }

    /// `<c, 1>`: cluster count in the window.
    pub fn clusters(&self) -> f64 {
        self.entries().map(|(_, _, c)| c).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass() + self.overflow_mass
    }

    /// `sum_{m >= k} sum_a m c(a, m)` inside the window.
    pub fn tail_mass(&self, k: usize) -> f64 {
        self.entries()
            .filter(|&(_, m, _)| m >= k)
            .map(|(_, m, c)| m as f64 * c)
            .sum()
    }

    /// `sum_a c(a, m)`.
    pub fn mass_marginal(&self, m: usize) -> f64 {
        (0..=self.a_max).map(|a| self.get(a, m)).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.entries().map(|e| e.2).fold(f64::INFINITY, f64::min)
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = self.c.clone();
        y.push(self.overflow_mass);
        y.push(self.overflow_arms);
        y
    }

    fn unpack(&mut self, y: &[f64]) {
        let n = self.c.len();
        self.c.copy_from_slice(&y[..n]);
        for c in &mut self.c {
            if *c < 0.0 {
                *c = 0.0;
            }
        }
        self.overflow_mass = y[n];
        self.overflow_arms = y[n + 1];
    }
}

/// Which time scale to integrate in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OdeKind {
    /// Right-hand side divided by the free-arm density.
    Modified,
    /// Classical scale.
    Unmodified,
}

/// 2-D self-convolution of `f(a, m) = a c(a, m)` by FFT.
struct Coagulator {
    a_max: usize,
    m_max: usize,
    la: usize,
    lm: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    tbuf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// Smallest `2^a 3^b 5^c 7^d` not below `n`.
fn smooth_len(n: usize) -> usize {
    (n.max(1)..)
        .find(|&x| {
            let mut y = x;
            for p in [2, 3, 5, 7] {
                while y % p == 0 {
                    y /= p;
                }
            }
            y == 1
        })
        .expect("smooth numbers are unbounded")
}

impl Coagulator {
    fn new(a_max: usize, m_max: usize) -> Self {
        // f is supported on a, m >= 1; shifting both indices by one puts
        // the product's (a' + a'' - 2, m' + m'' - 2) at the array origin.
        // Window outputs sit below a_max + 1 and m_max - 1; the largest
        // true index is 2 a_max - 2, so cyclic lengths 2 cap - 1 avoid
        // aliasing inside the window.
        let la = smooth_len(2 * a_max.max(1));
        let lm = smooth_len(2 * m_max.max(1));
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(lm);
        let row_inv = planner.plan_fft_inverse(lm);
        let col_fwd = planner.plan_fft_forward(la);
        let col_inv = planner.plan_fft_inverse(la);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            a_max,
            m_max,
            la,
            lm,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            buf: vec![Complex::default(); la * lm],
            tbuf: vec![Complex::default(); la * lm],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    /// Writes `G(a, m) = sum a' a'' c' c''` for window `(a, m)` into `gain`
    /// (same layout as the state).
    fn gain(&mut self, c: &[f64], gain: &mut [f64]) {
        let (la, lm, w) = (self.la, self.lm, self.m_max + 1);
        self.buf.iter_mut().for_each(|z| *z = Complex::default());
        for a in 1..=self.a_max {
            let row = &mut self.buf[(a - 1) * lm..a * lm];
            for m in 1..=self.m_max {
                row[m - 1] = Complex::new(a as f64 * c[a * w + m], 0.0);
            }
        }
        let rows = self.a_max * lm;
        self.row_fwd
            .process_with_scratch(&mut self.buf[..rows], &mut self.scratch);
        transpose(&self.buf, &mut self.tbuf, la, lm);
        self.col_fwd
            .process_with_scratch(&mut self.tbuf, &mut self.scratch);
        for z in &mut self.tbuf {
            *z = *z * *z;
        }
        self.col_inv
            .process_with_scratch(&mut self.tbuf, &mut self.scratch);
        transpose(&self.tbuf, &mut self.buf, lm, la);
        let out_rows = (self.a_max + 1) * lm;
        self.row_inv
            .process_with_scratch(&mut self.buf[..out_rows], &mut self.scratch);
        let scale = 1.0 / (la * lm) as f64;
        for a in 0..=self.a_max {
            gain[a * w] = 0.0;
            gain[a * w + 1] = 0.0;
            for m in 2..=self.m_max {
                gain[a * w + m] = (self.buf[a * lm + m - 2].re * scale).max(0.0);
            }
        }
    }
}

fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], rows: usize, cols: usize) {
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Right-hand side evaluator; owns the FFT plans and work buffers.
pub struct OdeSystem {
    kind: OdeKind,
    a_max: usize,
    m_max: usize,
    coag: Coagulator,
    gain: Vec<f64>,
}

impl OdeSystem {
    pub fn new(kind: OdeKind, a_max: usize, m_max: usize) -> Self {
        Self {
            kind,
            a_max,
            m_max,
            coag: Coagulator::new(a_max, m_max),
            gain: vec![0.0; (a_max + 1) * (m_max + 1)],
        }
    }

    /// Derivative of the packed state `[c..., overflow_mass, overflow_arms]`.
    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let w = self.m_max + 1;
        let n = (self.a_max + 1) * w;
        let c = &y[..n];
        let (mut arms, mut arm_moment, mut mass_moment) = (0.0, 0.0, 0.0);
        for a in 1..=self.a_max {
            for m in 1..=self.m_max {
                let f = a as f64 * c[a * w + m];
                arms += f;
                arm_moment += a as f64 * f;
                mass_moment += m as f64 * f;
            }
        }
        if arms < ARM_UNDERFLOW {
            return Err(Error::numerical(format!(
                "free-arm density {arms:e} underflowed"
            )));
        }
        self.coag.gain(c, &mut self.gain);
        // Modified scale: gain / (2A) - a c. Unmodified: A times that.
        let (gain_scale, loss_scale) = match self.kind {
            OdeKind::Modified => (0.5 / arms, 1.0),
            OdeKind::Unmodified => (0.5, arms),
        };
        let (mut win_mass_gain, mut win_arm_gain) = (0.0, 0.0);
        for a in 0..=self.a_max {
            for m in 1..=self.m_max {
                let i = a * w + m;
                let g = self.gain[i] * gain_scale;
                win_mass_gain += m as f64 * g;
                win_arm_gain += a as f64 * g;
                dy[i] = g - a as f64 * c[i] * loss_scale;
            }
            dy[a * w] = 0.0;
        }
        // Totals over all products: sum (m' + m'') f' f'' = 2 <m f> A and
        // sum (a' + a'' - 2) f' f'' = 2 <a f> A - 2 A^2; the part outside the
        // window feeds the overflow.
        let total_mass_gain = 2.0 * mass_moment * arms * gain_scale;
        let total_arm_gain = (2.0 * arm_moment * arms - 2.0 * arms * arms) * gain_scale;
        dy[n] = (total_mass_gain - win_mass_gain).max(0.0);
        dy[n + 1] = (total_arm_gain - win_arm_gain).max(0.0);
        Ok(())
    }

    /// Time derivative of `c` at `state` (no step taken).
    pub fn derivative(&mut self, state: &OdeState) -> Result<OdeState> {
        let y = state.pack();
        let mut dy = vec![0.0; y.len()];
        self.rhs(&y, &mut dy)?;
        let mut d = state.clone();
        let n = d.c.len();
        d.c.copy_from_slice(&dy[..n]);
        d.overflow_mass = dy[n];
        d.overflow_arms = dy[n + 1];
        Ok(d)
    }

    /// One classical RK4 step of length `h`.
    fn rk4(&mut self, y: &mut [f64], h: f64, work: &mut Rk4Work) -> Result<()> {
        let Rk4Work {
            k1,
            k2,
            k3,
            k4,
            tmp,
        } = work;
        self.rhs(y, k1)?;
        axpy(tmp, y, 0.5 * h, k1);
        self.rhs(tmp, k2)?;
        axpy(tmp, y, 0.5 * h, k2);
        self.rhs(tmp, k3)?;
        axpy(tmp, y, h, k3);
        self.rhs(tmp, k4)?;
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for i in 0..out.len() {
        out[i] = y[i] + h * k[i];
    }
}

/// Per-step scalars plus full states at the recorded times.
#[derive(Clone, Debug, Serialize)]
pub struct OdeTrajectory {
    pub kind: OdeKind,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Free-arm density `A_t` in the window.
    pub arms: Vec<f64>,
    /// Window mass `<c_t, m>`.
    pub mass: Vec<f64>,
    pub overflow_mass: Vec<f64>,
    pub snapshots: Vec<OdeState>,
}

impl OdeTrajectory {
    pub fn final_state(&self) -> &OdeState {
        self.snapshots
            .last()
            .expect("trajectory has a final snapshot")
    }

    /// Recorded state whose time is closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> &OdeState {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has snapshots")
    }

    /// Writes `t,a,m,c,overflow_mass` rows for every positive entry of every
    /// snapshot.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "a", "m", "c", "overflow_mass"])?;
        for s in &self.snapshots {
            for (a, m, c) in s.entries().filter(|e| e.2 > 0.0) {
                w.write_record([
                    format!("{:?}", s.t),
                    a.to_string(),
                    m.to_string(),
                    format!("{c:e}"),
                    format!("{:e}", s.overflow_mass),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeOptions {
    pub t_max: f64,
    pub dt: f64,
    /// Times at which full states are kept; `t_max` is always added.
    pub record_times: Vec<f64>,
}

impl OdeOptions {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self {
            t_max,
            dt,
            record_times: Vec::new(),
        }
    }

    pub fn record_at(mut self, times: &[f64]) -> Self {
        self.record_times = times.to_vec();
        self
    }
}

/// Fixed-step RK4 integration from `c0`. Steps are shortened to land
/// exactly on the recorded times.
pub fn integrate(c0: &OdeState, kind: OdeKind, opts: &OdeOptions) -> Result<OdeTrajectory> {
    if !(opts.dt > 0.0 && opts.t_max >= 0.0) {
        return Err(Error::precondition("need dt > 0 and t_max >= 0"));
    }
    if c0.arms() <= 0.0 {
        return Err(Error::precondition(
            "initial free-arm density must be positive",
        ));
    }
    let mut marks: Vec<f64> = opts
        .record_times
        .iter()
        .copied()
        .filter(|&t| t >= c0.t && t <= opts.t_max)
        .chain(std::iter::once(opts.t_max))
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let mut sys = OdeSystem::new(kind, c0.a_max, c0.m_max);
    let mut state = c0.clone();
    let mut y = state.pack();
    let mut work = Rk4Work::new(y.len());
    let mut traj = OdeTrajectory {
        kind,
        dt: opts.dt,
        times: vec![state.t],
        arms: vec![state.arms()],
        mass: vec![state.mass()],
        overflow_mass: vec![state.overflow_mass],
        snapshots: Vec::new(),
    };
    let mut t = state.t;
    let mut step = 0u64;
    let t0 = t;
    for &mark in &marks {
        while t < mark - 1e-12 {
            // Nominal grid t0 + k dt keeps rounding from accumulating.
            let next = (t0 + (step + 1) as f64 * opts.dt).min(mark);
            let h = next - t;
            sys.rk4(&mut y, h, &mut work)?;
            state.unpack(&y);
            for (i, v) in state.c.iter().enumerate() {
                y[i] = *v;
            }
            t = next;
            if (t - (t0 + (step + 1) as f64 * opts.dt)).abs() < 1e-12 {
                step += 1;
            }
            state.t = t;
            traj.times.push(t);
            traj.arms.push(state.arms());
            traj.mass.push(state.mass());
            traj.overflow_mass.push(state.overflow_mass);
        }
        traj.snapshots.push(state.clone());
    }
    Ok(traj)
}

pub fn integrate_modified(c0: &OdeState, t_max: f64, dt: f64) -> Result<OdeTrajectory> {
    integrate(c0, OdeKind::Modified, &OdeOptions::new(t_max, dt))
}

pub fn integrate_unmodified(c0: &OdeState, t_max: f64, dt: f64) -> Result<OdeTrajectory> {
    integrate(c0, OdeKind::Unmodified, &OdeOptions::new(t_max, dt))
}

/// Solution of `s'(t) = A_{s(t)}, s(0) = 0` for a modified trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct TimeChange {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

impl TimeChange {
    /// Modified time reached at classical time `t` (linear interpolation).
    pub fn modified_time(&self, t: f64) -> f64 {
        interp(&self.t, &self.s, t)
    }

    /// Classical time at which modified time `s` is reached.
    pub fn classical_time(&self, s: f64) -> f64 {
        interp(&self.s, &self.t, s)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Integrates `s'(t) = A_{s(t)}` by RK4, with `A` interpolated
/// (log-linearly) between the steps of `traj`. Stops when `s` reaches the
/// end of the trajectory.
pub fn time_change(traj: &OdeTrajectory, dt: f64) -> Result<TimeChange> {
    if traj.kind != OdeKind::Modified {
        return Err(Error::precondition(
            "time change takes a modified trajectory",
        ));
    }
    if traj.arms.iter().any(|&a| a <= 0.0) {
        return Err(Error::precondition("free-arm density must stay positive"));
    }
    let ln_a: Vec<f64> = traj.arms.iter().map(|a| a.ln()).collect();
    let s_end = *traj.times.last().unwrap();
    let s0 = traj.times[0];
    let arms_at = |s: f64| interp(&traj.times, &ln_a, s.min(s_end)).exp();
    let mut out = TimeChange {
        t: vec![0.0],
        s: vec![s0],
    };
    let (mut t, mut s) = (0.0, s0);
    while s < s_end {
        let k1 = arms_at(s);
        let k2 = arms_at(s + 0.5 * dt * k1);
        let k3 = arms_at(s + 0.5 * dt * k2);
        let k4 = arms_at(s + dt * k3);
        s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        out.t.push(t);
        out.s.push(s);
    }
    Ok(out)
}

/// `T_gel` or the absence of gelation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum GelTime {
    Finite(f64),
    Never,
}

impl GelTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(t) => Some(t),
            Self::Never => None,
        }
    }

    /// Whether `t` lies strictly before gelation.
    pub fn is_before(self, t: f64) -> bool {
        match self {
            Self::Finite(tg) => t < tg,
            Self::Never => true,
        }
    }
}

/// `T_gel = -log(1 - m_1/m_2)` when `m_2 > m_1`.
pub fn t_gel(mu: &Pmf) -> Result<GelTime> {
    let m1 = mu.factorial_moment(1);
    let m2 = mu.factorial_moment(2);
    if m1 <= 0.0 {
        return Err(Error::precondition("gelation time needs m_1 > 0"));
    }
    if m2 > m1 {
        Ok(GelTime::Finite((m2 / (m2 - m1)).ln()))
    } else {
        Ok(GelTime::Never)
    }
}

/// Residual of `(Q - e^{-t}) G'_nu(Q) - G_nu(Q)` with `nu = hat mu`, up to
/// the positive factor `m_1`.
fn q_residual(mu: &Pmf, t: f64, q: f64) -> f64 {
    (q - (-t).exp()) * mu.pgf_derivative(q, 2) - mu.pgf_derivative(q, 1)
}

/// Residual of the defining equation of `Q(t)` in the `nu` normalization.
pub fn q_equation_residual(mu: &Pmf, t: f64, q: f64) -> f64 {
    q_residual(mu, t, q) / mu.mean()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::numerical(format!(
            "no sign change on [{lo}, {hi}]: f = {flo:e}, {fhi:e}"
        )));
    }
    let rising = fhi > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `Q(t)`: 1 before gelation, afterwards the root in `(e^{-t}, 1]` of
/// `(Q - e^{-t}) G'_nu(Q) = G_nu(Q)`.
pub fn solve_q(mu: &Pmf, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::domain(format!("time {t} is negative")));
    }
    match t_gel(mu)? {
        GelTime::Finite(tg) if t >= tg => {
            let lo = (-t).exp() + 1e-15;
            bisect(lo, 1.0, |q| q_residual(mu, t, q)).map(|q| q.min(1.0))
        }
        _ => Ok(1.0),
    }
}

/// Limit state of the frozen model at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitState {
    pub t: f64,
    pub q: f64,
    /// Concentration of particles in solution, `G_mu(Q)`.
    pub n: f64,
    /// Free (unactivated) arms in solution, `e^{-t} G'_mu(Q)`.
    pub free_arms: f64,
    /// `psi[r][k]`: density of particles of degree `r` with `k` activated
    /// arms, the coefficient of `x^k y^r` in `psi_t`.
    pub psi: Vec<Vec<f64>>,
    /// Law of activated arms in solution, `G_mu(alpha x + beta) / G_mu(Q)`.
    pub pi: Pmf,
    /// Degree law in solution, `G_mu(Q y) / G_mu(Q)`.
    pub mu: Pmf,
}

pub fn limit_state(mu: &Pmf, t: f64) -> Result<LimitState> {
    let q = solve_q(mu, t)?;
    let beta = (-t).exp();
    let alpha = (q - beta).max(0.0);
    let n = mu.pgf_at(q);
    let p_act = if q > 0.0 { (alpha / q).min(1.0) } else { 0.0 };
    let mut psi = Vec::with_capacity(mu.k_max() + 1);
    let mut pi_w = vec![0.0; mu.k_max() + 1];
    let mut deg_w = vec![0.0; mu.k_max() + 1];
    for (r, &w) in mu.weights().iter().enumerate() {
        let scale = w * q.powi(r as i32);
        let row: Vec<f64> = Pmf::binomial(r, p_act)?
            .weights()
            .iter()
            .map(|b| b * scale)
            .collect();
        for (k, v) in row.iter().enumerate() {
            pi_w[k] += v;
        }
        deg_w[r] = scale;
        psi.push(row);
    }
    Ok(LimitState {
        t,
        q,
        n,
        free_arms: beta * mu.pgf_derivative(q, 1),
        psi,
        pi: Pmf::new(pi_w)?,
        mu: Pmf::new(deg_w)?,
    })
}

/// Criticality defect `(Q - e^{-t})^2 G''_mu(Q) - (Q - e^{-t}) G'_mu(Q)`,
/// proportional to `m_2 - m_1` of `pi_t`.
pub fn criticality_defect(mu: &Pmf, t: f64, q: f64) -> f64 {
    let alpha = q - (-t).exp();
    alpha * alpha * mu.pgf_derivative(q, 2) - alpha * mu.pgf_derivative(q, 1)
}

/// Tilt constants of the post-gelation limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tilt {
    pub c: f64,
    pub beta: f64,
}

/// Root `c` in `(0, 1)` of `c G'_nu(c) = G_nu(c)` and `beta = 1/G'_nu(c)`.
pub fn solve_tilt(nu: &Pmf) -> Result<Tilt> {
    if nu.get(0) <= 0.0 {
        return Err(Error::precondition("tilt constants need nu(0) > 0"));
    }
    if nu.mean() <= 1.0 {
        return Err(Error::precondition(
            "tilt constants need a supercritical law (mean of nu above 1)",
        ));
    }
    let c = bisect(0.0, 1.0, |x| x * nu.pgf_derivative(x, 1) - nu.pgf_at(x))?;
    let beta = 1.0 / nu.pgf_derivative(c, 1);
    if beta <= 1.0 {
        return Err(Error::numerical(format!(
            "tilt beta = {beta} is not above 1"
        )));
    }
    Ok(Tilt { c, beta })
}

/// Limiting concentration `c_inf(0, m)` of closed clusters of mass `m >= 2`
/// per initial particle:
/// `m_1 beta^{m-1} nu^{*m}(m-2) / (m (m-1))`, with `beta = 1` when `mu` does
/// not gel. The `m = 1` entry is `mu(0)`.
pub fn limiting_concentration(mu: &Pmf, m: usize) -> Result<f64> {
    LimitingConcentrations::new(mu)?.get(m)
}

/// [`limiting_concentration`] with the tilt solved once.
#[derive(Clone, Debug)]
pub struct LimitingConcentrations {
    m1: f64,
    mu0: f64,
    nu: Pmf,
    beta: f64,
}

impl LimitingConcentrations {
    pub fn new(mu: &Pmf) -> Result<Self> {
        let nu = mu.size_biased_shift()?;
        // With nu(0) = 0 no finite cluster closes, every entry is zero and
        // the tilt is irrelevant.
        let beta = match t_gel(mu)? {
            GelTime::Finite(_) if nu.get(0) > 0.0 => solve_tilt(&nu)?.beta,
            _ => 1.0,
        };
        Ok(Self {
            m1: mu.mean(),
            mu0: mu.get(0),
            nu,
            beta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn get(&self, m: usize) -> Result<f64> {
        if m < 2 {
            return Err(Error::precondition(
                "limiting concentrations are given for m >= 2 (m = 1 is mu(0))",
            ));
        }
        let conv = self.nu.convolve_power(m, m - 2)?;
        let ln = self.beta.ln() * (m - 1) as f64;
        Ok(self.m1 * ln.exp() * conv.get(m - 2) / (m * (m - 1)) as f64)
    }

    /// `c_inf(0, m)` including `m = 1`.
    pub fn closed(&self, m: usize) -> Result<f64> {
        if m == 1 {
            Ok(self.mu0)
        } else {
            self.get(m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{borel_pmf, DEFAULT_KMAX};

    fn poisson(l: f64) -> Pmf {
        Pmf::poisson(l, DEFAULT_KMAX).unwrap()
    }

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_len(401), 405);
        assert_eq!(smooth_len(11), 12);
        assert_eq!(smooth_len(1), 1);
    }

    #[test]
    fn t_gel_examples() {
        assert_eq!(t_gel(&poisson(2.0)).unwrap().finite().unwrap(), 2f64.ln());
        let d3 = t_gel(&Pmf::point_mass(3)).unwrap().finite().unwrap();
        assert!((d3 - 2f64.ln()).abs() < 1e-15);
        assert_eq!(t_gel(&poisson(0.5)).unwrap(), GelTime::Never);
        assert!(t_gel(&Pmf::point_mass(0)).is_err());
    }

    #[test]
    fn solve_q_examples() {
        let p2 = poisson(2.0);
        let e1 = (-1.0f64).exp();
        assert!((solve_q(&p2, 1.0).unwrap() - (e1 + 0.5)).abs() < 1e-10);
        let d3 = Pmf::point_mass(3);
        assert!((solve_q(&d3, 1.0).unwrap() - 2.0 * e1).abs() < 1e-10);
        for mu in [&p2, &d3, &Pmf::binomial(4, 0.6).unwrap()] {
            let tg = t_gel(mu).unwrap().finite().unwrap();
            assert!((solve_q(mu, tg).unwrap() - 1.0).abs() < 1e-10);
            assert!((solve_q(mu, tg + 1e-9).unwrap() - 1.0).abs() < 1e-8);
            assert_eq!(solve_q(mu, 0.5 * tg).unwrap(), 1.0);
        }
    }

    #[test]
    fn q_is_monotone_with_small_residual() {
        let mu = Pmf::binomial(4, 0.6).unwrap();
        let mut prev = 1.0;
        for i in 0..200 {
            let t = i as f64 * 0.05;
            let q = solve_q(&mu, t).unwrap();
            assert!(q <= prev + 1e-15);
            if !t_gel(&mu).unwrap().is_before(t) {
                assert!(q_equation_residual(&mu, t, q).abs() <= 1e-10);
                assert!(criticality_defect(&mu, t, q).abs() <= 1e-8);
            }
            prev = q;
        }
    }

    #[test]
    fn limit_state_examples() {
        let e1 = (-1.0f64).exp();
        let s = limit_state(&poisson(2.0), 1.0).unwrap();
        assert!((s.n - (1.0 - 2.0 + 2.0 * e1).exp()).abs() < 1e-10);
        assert!((s.n - 0.76784).abs() < 1e-4);
        let s = limit_state(&Pmf::point_mass(3), 1.0).unwrap();
        assert!((s.n - (2.0 * e1).powi(3)).abs() < 1e-10);
        let s = limit_state(&Pmf::binomial(4, 0.6).unwrap(), 1.0).unwrap();
        let expected = (1.5 * (0.4 + 0.6 * e1)).powi(4);
        assert!((s.n - expected).abs() < 1e-10);
        let table: f64 = s.psi.iter().flatten().sum();
        assert!((table - s.n).abs() < 1e-12);
        // Post-gel the activated-arm law is exactly critical.
        assert!((s.pi.factorial_moment(2) - s.pi.factorial_moment(1)).abs() < 1e-8);
    }

    #[test]
    fn limit_state_is_subcritical_before_gel() {
        let mu = poisson(2.0);
        for t in [0.1, 0.4, 0.69] {
            let s = limit_state(&mu, t).unwrap();
            assert_eq!(s.q, 1.0);
            assert!(s.pi.factorial_moment(2) < s.pi.factorial_moment(1));
            assert!((s.free_arms - 2.0 * (-t).exp()).abs() < 1e-12);
        }
        // pi_t is Poisson(1) after gelation for Poisson(2).
        let s = limit_state(&mu, 2.0).unwrap();
        let p1 = poisson(1.0);
        for k in 0..20 {
            assert!((s.pi.get(k) - p1.get(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn tilt_examples() {
        let tilt = solve_tilt(&poisson(2.0)).unwrap();
        assert!((tilt.c - 0.5).abs() < 1e-10);
        assert!((tilt.beta - std::f64::consts::E / 2.0).abs() < 1e-10);
        let nu = poisson(2.0);
        let r = tilt.c * nu.pgf_derivative(tilt.c, 1) - nu.pgf_at(tilt.c);
        assert!(r.abs() < 1e-12);
        let q40 = solve_q(&poisson(2.0), 40.0).unwrap();
        assert!((q40 - tilt.c).abs() < 1e-8);
        assert!(solve_tilt(&Pmf::point_mass(2)).is_err());
        assert!(solve_tilt(&poisson(0.5)).is_err());
        let nu = Pmf::binomial(3, 0.6).unwrap();
        assert!(solve_tilt(&nu).unwrap().beta > 1.0);
    }

    #[test]
    fn limiting_concentration_examples() {
        // Per initial particle: m_1 beta^{m-1} nu^{*m}(m-2) / (m (m-1)).
        let sup = limiting_concentration(&poisson(2.0), 2).unwrap();
        assert!((sup - (-3.0f64).exp() / 2.0).abs() < 1e-12);
        let sub = limiting_concentration(&poisson(0.5), 2).unwrap();
        assert!((sub - 0.25 * (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(limiting_concentration(&Pmf::point_mass(3), 2).unwrap(), 0.0);
        assert!(limiting_concentration(&poisson(2.0), 1).is_err());
    }

    #[test]
    fn limiting_concentrations_are_borel_for_poisson() {
        for l in [0.3, 0.5, 0.9] {
            let lc = LimitingConcentrations::new(&poisson(l)).unwrap();
            for m in 1..=20 {
                let mc = m as f64 * lc.closed(m).unwrap();
                assert!(
                    (mc - borel_pmf(l, m as u64).unwrap()).abs() < 1e-10,
                    "l={l} m={m}"
                );
            }
        }
        // Supercritical: m c_inf(0, m) = n_inf Borel(1, m) with n_inf = e^{1-l}.
        let lc = LimitingConcentrations::new(&poisson(2.0)).unwrap();
        let n_inf = (-1.0f64).exp();
        for m in 1..=20 {
            let mc = m as f64 * lc.closed(m).unwrap();
            assert!((mc - n_inf * borel_pmf(1.0, m as u64).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn initial_derivatives() {
        let mu = poisson(2.0);
        let c0 = OdeState::monodisperse(&mu, 30, 20).unwrap();
        let mut modified = OdeSystem::new(OdeKind::Modified, 30, 20);
        let mut classical = OdeSystem::new(OdeKind::Unmodified, 30, 20);
        let dm = modified.derivative(&c0).unwrap();
        let du = classical.derivative(&c0).unwrap();
        let a0 = c0.arms();
        for a in 0..=30 {
            assert!((dm.get(a, 1) + a as f64 * mu.get(a)).abs() < 1e-14);
            assert!((du.get(a, 1) - a0 * dm.get(a, 1)).abs() < 1e-13);
        }
        // Two monomers a', a'' give a dimer with a' + a'' - 2 arms.
        let expect: f64 = (1..=6)
            .map(|a1| {
                let a2 = 5 + 2 - a1;
                a1 as f64 * a2 as f64 * mu.get(a1) * mu.get(a2)
            })
            .sum::<f64>()
            * 0.5
            / a0;
        assert!((dm.get(5, 2) - expect).abs() < 1e-14);
    }

    #[test]
    fn modified_pre_gel_arms_and_conservation() {
        let mu = poisson(2.0);
        let c0 = OdeState::monodisperse(&mu, 62, 60).unwrap();
        let opts = OdeOptions::new(0.5, 5e-3);
        let traj = integrate(&c0, OdeKind::Modified, &opts).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            // Until clusters start leaving the 60-particle window.
            if t <= 0.25 {
                assert!((traj.arms[i] - 2.0 * (-t).exp()).abs() < 1e-5, "t={t}");
            }
            let total = traj.mass[i] + traj.overflow_mass[i];
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert!(traj.arms.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.mass.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(traj.final_state().min_entry() >= 0.0);
    }

    #[test]
    fn subcritical_mass_is_conserved() {
        let mu = poisson(0.5);
        let c0 = OdeState::monodisperse(&mu, 40, 60).unwrap();
        let traj = integrate_unmodified(&c0, 5.0, 1e-2).unwrap();
        for &m in &traj.mass {
            assert!((m - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn time_change_matches_unmodified() {
        let mu = poisson(0.5);
        let c0 = OdeState::monodisperse(&mu, 30, 40).unwrap();
        let dt = 2e-3;
        let modified = integrate_modified(&c0, 1.0, dt).unwrap();
        let tc = time_change(&modified, dt).unwrap();
        assert_eq!(tc.s[0], 0.0);
        assert!(tc.s.windows(2).all(|w| w[1] > w[0]));
        // Closed form before gelation: A_s = m_1 e^{-s} gives s = ln(1 + m_1 t).
        for &t in &[0.2, 0.5] {
            assert!((tc.modified_time(t) - (0.5f64 * t).ln_1p()).abs() < 1e-6);
        }
        let targets: Vec<f64> = [0.2, 0.5].iter().map(|&t| tc.modified_time(t)).collect();
        let modified = integrate(
            &c0,
            OdeKind::Modified,
            &OdeOptions::new(1.0, dt).record_at(&targets),
        )
        .unwrap();
        let classical = integrate(
            &c0,
            OdeKind::Unmodified,
            &OdeOptions::new(0.5, dt).record_at(&[0.2, 0.5]),
        )
        .unwrap();
        for (&t, &s) in [0.2, 0.5].iter().zip(&targets) {
            let a = modified.snapshot_near(s);
            let b = classical.snapshot_near(t);
            for aa in 0..=30 {
                for m in 1..=40 {
                    assert!((a.get(aa, m) - b.get(aa, m)).abs() < 1e-4);
                }
            }
        }
    }
}
