//! Inter-gel gaps against the forecast from the degree law left in solution.

use gelsim::dynamic_cm::Theta;
use gelsim::frozen_sim::{FrozenConfig, FrozenSim};
use gelsim::Pmf;

#[test]
fn gaps_follow_solution_forecast() {
    let n = 1_000_000;
    let alpha = 100_000;
    let theta = Theta::from_pmf(n, &Pmf::poisson(2.0, 64).unwrap()).unwrap();
    for seed in 0..3 {
        let cfg = FrozenConfig::new(theta.clone(), alpha, 2.5, seed);
        let mut sim = FrozenSim::new(&cfg).unwrap();
        sim.advance_to(2.5);
        let events = sim.gel_events();
        // First forecast from Poisson(2) itself: m_3 / (m_2 (m_2 - m_1)) = 1.
        let first = events[0].predicted_next_gap(alpha).unwrap() * n as f64 / alpha as f64;
        assert!((first - 1.0).abs() < 0.3, "seed {seed}: {first}");
        let gaps: Vec<f64> = events
            .windows(2)
            .filter(|w| w[0].tau <= 2.0)
            .map(|w| (w[1].tau - w[0].tau) / w[0].predicted_next_gap(alpha).unwrap())
            .collect();
        assert!(gaps.len() >= 3);
        for (k, r) in gaps.iter().enumerate() {
            assert!((0.5..=1.5).contains(r), "seed {seed} gap {k}: ratio {r}");
        }
    }
}
