//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Every function returns a flat `Float64Array` with a fixed row width so the
//! page can plot without a serialization layer.

use gelsim::dynamic_cm::Theta;
use gelsim::frozen_sim::{run_frozen, FrozenConfig};
use gelsim::smoluchowski::{limit_state, t_gel, GelTime, LimitingConcentrations};
use gelsim::DistSpec;
use wasm_bindgen::prelude::*;

fn pmf(dist: &str) -> Result<gelsim::Pmf, JsError> {
    let spec: DistSpec = dist
        .parse()
        .map_err(|e: gelsim::Error| JsError::new(&e.to_string()))?;
    spec.to_pmf().map_err(err)
}

fn err(e: gelsim::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Gelation time of the degree law, `Infinity` when there is none.
#[wasm_bindgen]
pub fn gel_time(dist: &str) -> Result<f64, JsError> {
    Ok(match t_gel(&pmf(dist)?).map_err(err)? {
        GelTime::Finite(t) => t,
        GelTime::Never => f64::INFINITY,
    })
}

/// Rows `[t, Q(t), n_t, free arms]` on `points` uniform times in `[0, t_max]`.
#[wasm_bindgen]
pub fn limit_curves(dist: &str, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let mu = pmf(dist)?;
    let points = points.max(2);
    let mut out = Vec::with_capacity(4 * points);
    for i in 0..points {
        let t = t_max * i as f64 / (points - 1) as f64;
        let s = limit_state(&mu, t).map_err(err)?;
        out.extend([t, s.q, s.n, s.free_arms]);
    }
    Ok(out)
}

/// `c_inf(m)` for `m = 1..=m_max`: cluster concentrations at `t = infinity`.
#[wasm_bindgen]
pub fn limiting_concentrations(dist: &str, m_max: usize) -> Result<Vec<f64>, JsError> {
    let lc = LimitingConcentrations::new(&pmf(dist)?).map_err(err)?;
    (1..=m_max).map(|m| lc.closed(m).map_err(err)).collect()
}

/// One frozen run. Rows `[t, n_t, B/N, gel events]` on `points` uniform
/// times, then one row `[tau, size, 0, 0]` per gel event.
#[wasm_bindgen]
pub fn simulate(
    dist: &str,
    n: usize,
    alpha: u64,
    t_max: f64,
    seed: u64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let theta = Theta::from_pmf(n, &pmf(dist)?).map_err(err)?;
    let points = points.max(2);
    let times: Vec<f64> = (0..points)
        .map(|i| t_max * i as f64 / (points - 1) as f64)
        .collect();
    let mut cfg = FrozenConfig::new(theta, alpha, t_max, seed).with_snapshots(&times);
    cfg.snapshot_on_gel = false;
    cfg.validate().map_err(err)?;
    let traj = run_frozen(&cfg).map_err(err)?;
    let mut out = Vec::new();
    for s in &traj.snapshots {
        out.extend([
            s.t,
            s.n_t(),
            s.b_solution as f64 / n as f64,
            s.num_gel_events as f64,
        ]);
    }
    for g in &traj.gel_events {
        out.extend([g.tau, g.size as f64, 0.0, 0.0]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_widths() {
        assert_eq!(limit_curves("poisson:2", 3.0, 10).ok().unwrap().len(), 40);
        assert_eq!(
            limiting_concentrations("poisson:2", 5).ok().unwrap().len(),
            5
        );
        let sim = simulate("poisson:2", 2000, 100, 3.0, 1, 5).ok().unwrap();
        assert_eq!(sim.len() % 4, 0);
        assert_eq!(sim[16], 3.0);
        assert!((gel_time("poisson:2").ok().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
