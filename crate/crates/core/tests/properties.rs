mod common;

use proptest::prelude::*;

use rampflow::controllers::ControllerKind;
use rampflow::cumulative::{reconstruct_densities, restrictiveness_report, to_cumulative, total_time_spent_cumulative, tts_bounds};
use rampflow::lp::{brute_force_reachable_counts, build_lp, solve_lp, LpStatus};
use rampflow::report::fmt_g9;
use rampflow::simulator::{evaluate_metrics, total_time_spent};

use common::{box_excursion, mass_balance_error, random_instance, rel_diff, Shape};

const SMALL: Shape = Shape {
    max_cells: 3,
    min_steps: 3,
    max_steps: 12,
    load: 1.2,
};

const KINDS: [ControllerKind; 3] = [ControllerKind::None, ControllerKind::BestEffort, ControllerKind::Alinea];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_survive_the_coordinate_change(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape::default(), &KINDS);
        for (_, traj) in &inst.runs {
            for (cs, s) in to_cumulative(&inst.model, traj).iter().zip(&traj.states) {
                let rho = reconstruct_densities(&inst.model, cs).unwrap();
                for (a, b) in rho.iter().zip(&s.density) {
                    prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn tts_is_the_same_in_both_coordinates(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape::default(), &[ControllerKind::BestEffort]);
        let (_, traj) = &inst.runs[0];
        let direct = total_time_spent(&inst.model, &traj.states);
        let counted = total_time_spent_cumulative(&inst.model, &to_cumulative(&inst.model, traj));
        prop_assert!(rel_diff(counted, direct) <= 1e-9);
    }

    #[test]
    fn noiseless_runs_conserve_cars_and_stay_in_the_box(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape::default(), &KINDS);
        for (_, traj) in &inst.runs {
            prop_assert!(mass_balance_error(&inst.model, traj) <= 1e-9);
            prop_assert!(box_excursion(&inst.model, traj) <= 0.0);
        }
    }

    #[test]
    fn metrics_are_consistent(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape::default(), &KINDS);
        for (_, traj) in &inst.runs {
            let m = evaluate_metrics(&inst.model, traj);
            prop_assert!(m.tdt.iter().all(|d| *d >= 0.0));
            prop_assert!((m.tts - m.tft - m.twt).abs() <= 1e-12 * m.tts.max(1.0));
        }
    }

    #[test]
    fn relaxed_best_effort_bounds_best_effort(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape::default(), &[]);
        let b = tts_bounds(&inst.model, &inst.demand, Some(&inst.initial)).unwrap();
        prop_assert!(b.tts_lb <= b.tts_be * (1.0 + 1e-9));
        prop_assert!(b.gap_rel >= -1e-9);
        prop_assert!((0.0..=1.0).contains(&b.restrictive_fraction));
    }

    #[test]
    fn fmt_g9_parses_back_within_nine_digits(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let back: f64 = fmt_g9(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn no_policy_beats_the_linear_program(seed in any::<u64>()) {
        let inst = random_instance(seed, SMALL, &KINDS);
        let sol = solve_lp(&build_lp(&inst.model, &inst.demand, Some(&inst.initial)).unwrap()).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(sol.residual <= 1e-6);
        for (kind, traj) in &inst.runs {
            let tts = total_time_spent(&inst.model, &traj.states);
            prop_assert!(sol.objective <= tts * (1.0 + 1e-6), "{} beats the LP: {} < {}", kind, tts, sol.objective);
        }
    }

    #[test]
    fn nonrestrictive_best_effort_reaches_the_largest_counts(seed in any::<u64>()) {
        let shape = Shape { max_cells: 2, min_steps: 2, max_steps: 3, load: 1.2 };
        let inst = random_instance(seed, shape, &[ControllerKind::BestEffort]);
        let (_, traj) = &inst.runs[0];
        let report = restrictiveness_report(&inst.model, traj);
        if report.statuses.iter().flatten().all(|s| !s.is_restrictive()) {
            let reach = brute_force_reachable_counts(&inst.model, &inst.demand, Some(&inst.initial), 6, None).unwrap();
            let be = to_cumulative(&inst.model, traj);
            for (t, (cs, top)) in be.iter().zip(&reach).enumerate() {
                for (a, b) in cs.phi.iter().zip(top) {
                    prop_assert!(*a >= b - 1e-9 * b.abs().max(1.0), "step {}: best effort {} below reachable {}", t, a, b);
                }
            }
        }
    }
}
