//! Property tests over random degree sequences, laws and seeds.

use std::collections::BTreeSet;

use gelsim::dynamic_cm::{simulate_dcm, StopReason, StopSpec, Theta};
use gelsim::frozen_sim::{run_frozen, FrozenConfig, FrozenSim};
use gelsim::graphs::{components, explore_components, sample_cm, sample_percolated};
use gelsim::gw_local::progeny_pmf;
use gelsim::rng::sim_rng;
use gelsim::smoluchowski::{criticality_defect, q_equation_residual, solve_q, t_gel, GelTime};
use gelsim::Pmf;
use proptest::prelude::*;

/// Degree sequences with an even arm total.
fn arb_degrees(max_n: usize, max_d: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..=max_d, 1..=max_n).prop_map(|mut d| {
        if d.iter().sum::<u32>() % 2 == 1 {
            d.push(1);
        }
        d
    })
}

fn arb_law() -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.0f64..1.0, 2..7)
        .prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| Pmf::new(w).unwrap())
}

fn partition(comps: impl IntoIterator<Item = Vec<u32>>) -> BTreeSet<Vec<u32>> {
    comps.into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairing_is_valid_and_partitions_agree(degrees in arb_degrees(40, 5), seed in any::<u64>()) {
        let mut rng = sim_rng(seed);
        let pairing = sample_cm(&degrees, &mut rng);
        prop_assert!(pairing.validate().is_ok());
        let uf = components(&pairing);
        let ex = explore_components(&pairing, &mut rng);
        prop_assert_eq!(
            partition(uf.components.iter().map(|c| c.vertices.clone())),
            partition(ex.into_iter().map(|c| c.vertices))
        );
        // Every vertex in exactly one component, v_k conserved.
        let total: usize = uf.components.iter().map(|c| c.vertices.len()).sum();
        prop_assert_eq!(total, degrees.len());
        for k in 0..=5u32 {
            let global = degrees.iter().filter(|&&d| d == k).count() as u64;
            let summed: u64 = uf.components.iter().map(|c| c.v_k.get(&k).copied().unwrap_or(0)).sum();
            prop_assert_eq!(global, summed);
        }
    }

    #[test]
    fn percolated_pairing_uses_a_subset(degrees in arb_degrees(30, 4), p in 0.0f64..=1.0, seed in any::<u64>()) {
        let pairing = sample_percolated(&degrees, p, &mut sim_rng(seed)).unwrap();
        prop_assert!(pairing.validate().is_ok());
        let act = pairing.activated_counts();
        prop_assert!(act.iter().zip(&degrees).all(|(a, d)| a <= d));
    }

    #[test]
    fn dcm_activations_grow_and_gel_is_bounded(
        degrees in arb_degrees(300, 4),
        alpha in 2u64..40,
        seed in any::<u64>(),
    ) {
        let theta = Theta::from_degrees(&degrees).unwrap();
        let mut last = 0;
        for t in [0.2, 0.6, 1.5] {
            let run = simulate_dcm(&theta, theta.n() as u64 + 1, StopSpec::Time(t), sim_rng(seed)).unwrap();
            prop_assert!(run.activated_total >= last);
            last = run.activated_total;
        }
        let run = simulate_dcm(&theta, alpha, StopSpec::FirstGel, sim_rng(seed)).unwrap();
        if run.stop_reason == StopReason::Gel {
            let size = run.gel_component.as_ref().unwrap().size;
            prop_assert!(size >= alpha && size < 2 * alpha, "size {} alpha {}", size, alpha);
        }
    }

    #[test]
    fn frozen_bookkeeping(degrees in arb_degrees(200, 4), alpha in 2u64..30, seed in any::<u64>()) {
        let theta = Theta::from_degrees(&degrees).unwrap();
        let alpha = alpha.min(theta.n() as u64 + 1);
        let cfg = FrozenConfig::new(theta, alpha, 4.0, seed);
        let mut sim = FrozenSim::new(&cfg).unwrap();
        let n = sim.n() as u64;
        loop {
            let gel_mass: u64 = sim.gel_events().iter().map(|e| e.size).sum();
            prop_assert_eq!(sim.n_solution() + gel_mass, n);
            let act_solution: u64 = (0..n as u32)
                .filter(|&v| !sim.is_in_gel(v))
                .map(|v| sim.activated()[v as usize] as u64)
                .sum();
            prop_assert_eq!(act_solution, sim.b_solution());
            let pending = sim.pending_arm().is_some() as u64;
            prop_assert_eq!(sim.b_solution(), 2 * sim.links_solution() + pending);
            let census = sim.cluster_census();
            let census_mass: u64 = census.entries.iter().map(|&((_, m), c)| m as u64 * c).sum();
            prop_assert_eq!(census_mass, sim.n_solution());
            if !sim.step() {
                break;
            }
        }
        for e in sim.gel_events() {
            prop_assert!(e.size >= alpha && e.size < 2 * alpha);
        }
    }

    #[test]
    fn frozen_runs_are_deterministic(degrees in arb_degrees(100, 3), seed in any::<u64>()) {
        let theta = Theta::from_degrees(&degrees).unwrap();
        let alpha = 5.min(theta.n() as u64 + 1);
        let cfg = FrozenConfig::new(theta, alpha, 3.0, seed);
        let a = run_frozen(&cfg).unwrap();
        let b = run_frozen(&cfg).unwrap();
        prop_assert_eq!(a.snapshots, b.snapshots);
        prop_assert_eq!(a.gel_events, b.gel_events);
    }

    #[test]
    fn q_is_monotone_and_critical_after_gel(mu in arb_law()) {
        let tg = t_gel(&mu).unwrap();
        let mut prev = 1.0;
        for i in 0..60 {
            let t = 0.1 * i as f64;
            let q = solve_q(&mu, t).unwrap();
            prop_assert!(q <= prev + 1e-15 && q > 0.0);
            prev = q;
            if let GelTime::Finite(g) = tg {
                if t >= g {
                    prop_assert!(q_equation_residual(&mu, t, q).abs() <= 1e-10);
                    prop_assert!(criticality_defect(&mu, t, q).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn progeny_partial_sums_stay_below_one(mu in arb_law()) {
        if mu.mean() > 0.0 {
            let mut acc = 0.0;
            for m in 1..=200 {
                acc += progeny_pmf(&mu, m).unwrap();
                prop_assert!(acc <= 1.0 + 1e-10);
            }
        }
    }
}
