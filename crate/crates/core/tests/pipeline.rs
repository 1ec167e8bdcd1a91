use keyrate::io::{read_rows, write_rows, ConstraintChoice, PinchingMode, RunConfig, Scenario};
use keyrate::kfactory::{weights, FactorOrder, KStructure, LambdaVector, Pinching};
use keyrate::opalg::RuleSet;
use keyrate::oracle::ExplicitRealization;
use keyrate::pipeline::{
    anticommutation_identities, baseline_bounds, cond_shannon, devetak_winter, entropy_bound, guessing_probability, k_driven_level,
    key_rate, level_label, minimal_level, pironio_reference, run_point, sweep, transfer_lambda, BoundEngine,
};
use keyrate::relax::generate_basis;
use keyrate::scenarios::{constraints_from_behavior, six_state, werner_chsh, ConstraintMode};
use keyrate::sdp::SolverOptions;

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn config(grid: Vec<f64>, budget: usize) -> RunConfig {
    RunConfig {
        scenario: Scenario::Werner,
        grid,
        constraints: ConstraintChoice::Chsh,
        pinching: PinchingMode::One,
        level: None,
        lambda_budget: budget,
        tol: 1e-8,
        seed: 0,
        out: None,
        onesided: false,
    }
}

#[test]
fn budget_one_stays_at_zero_lambda() {
    let (_, b) = werner_chsh(0.05).unwrap();
    let r = key_rate(&b, ConstraintMode::Full, None, 1).unwrap();
    assert!(r.hae.bits.abs() < 1e-9, "{}", r.hae.bits);
    assert!(r.hae.lambda.0.iter().all(|&v| v == 0.0));
    assert_eq!(r.hae.diagnostics.evaluations, 1);
    assert_eq!(r.rate, 0.0);
}

#[test]
fn baseline_formulas() {
    let (hmin, briet) = baseline_bounds(0.5, true);
    assert!((hmin - 1.0).abs() < 1e-15 && (briet.unwrap() - 1.0).abs() < 1e-15);
    let (hmin, briet) = baseline_bounds(0.75, true);
    assert!((hmin - (4.0f64 / 3.0).log2()).abs() < 1e-15);
    assert!((briet.unwrap() - 0.5).abs() < 1e-15);
    let (hmin, briet) = baseline_bounds(1.0, true);
    assert_eq!((hmin, briet), (0.0, Some(0.0)));
    assert_eq!(baseline_bounds(0.75, false).1, None);
}

#[test]
fn pironio_endpoints() {
    assert!((pironio_reference(2.0 * std::f64::consts::SQRT_2).unwrap() - 1.0).abs() < 1e-12);
    assert!(pironio_reference(2.0).unwrap().abs() < 1e-12);
    assert!(pironio_reference(1.9).is_err());
    assert!(pironio_reference(3.0).is_err());
}

#[test]
fn error_correction_cost_is_binary_entropy() {
    for q in [0.0, 0.01, 0.05, 0.11, 0.3] {
        let (_, b) = werner_chsh(q).unwrap();
        let h = cond_shannon(&b, b.key).unwrap();
        assert!((h - h2(q)).abs() < 1e-12, "q={q}: {h}");
    }
    assert!(cond_shannon(&werner_chsh(0.1).unwrap().1, (5, 0)).is_err());
}

#[test]
fn devetak_winter_clips_at_zero() {
    assert_eq!(devetak_winter(0.2, 0.5), 0.0);
    assert!((devetak_winter(0.9, 0.3) - 0.6).abs() < 1e-15);
}

#[test]
fn transferred_lambda_keeps_weights() {
    let (_, b) = werner_chsh(0.03).unwrap();
    let chsh = constraints_from_behavior(&b, ConstraintMode::ChshOnly).unwrap();
    let full = constraints_from_behavior(&b, ConstraintMode::Full).unwrap();
    let lambda = LambdaVector(vec![0.7]);
    let moved = transfer_lambda(&chsh, &lambda, &full).unwrap();
    let (w1, w2) = (weights(&lambda, &chsh).unwrap(), weights(&moved, &full).unwrap());
    let card = chsh.card;
    // Weights may differ by a constant on each input pair.
    for x in 0..card.alice_inputs {
        for y in 0..card.bob_inputs {
            let d0 = w1.get(0, 0, x, y) - w2.get(0, 0, x, y);
            for a in 0..card.alice_outputs {
                for bb in 0..card.bob_outputs {
                    assert!((w1.get(a, bb, x, y) - w2.get(a, bb, x, y) - d0).abs() < 1e-9);
                }
            }
        }
    }
    let rules = RuleSet::new(card, true);
    let pin = Pinching::OneParty { alice_key: 0 };
    let a = entropy_bound(&chsh, &lambda, pin, None, &rules).unwrap();
    let f = entropy_bound(&full, &moved, pin, None, &rules).unwrap();
    assert!(f.nats >= a.nats - 1e-6, "{} < {}", f.nats, a.nats);
}

#[test]
fn bound_stays_below_production() {
    // H(A0|E) of the Werner realization itself caps any certified bound.
    let (r, b) = werner_chsh(0.05).unwrap();
    let production = keyrate::oracle::entropy_production(&ExplicitRealization::try_from(&r).unwrap(), Pinching::OneParty { alice_key: 0 }).unwrap();
    let cs = constraints_from_behavior(&b, ConstraintMode::ChshOnly).unwrap();
    let rules = RuleSet::new(cs.card, true);
    for l in [-0.5, 0.3, 1.0, 2.0] {
        let got = entropy_bound(&cs, &LambdaVector(vec![l]), Pinching::OneParty { alice_key: 0 }, None, &rules).unwrap();
        assert!(got.nats <= production + 1e-6, "λ={l}: {} > {production}", got.nats);
    }
}

#[test]
fn guessing_probability_of_local_point_is_high() {
    let (_, b) = werner_chsh(0.5).unwrap();
    let cs = constraints_from_behavior(&b, ConstraintMode::Full).unwrap();
    let pg = guessing_probability(&cs, Pinching::OneParty { alice_key: 0 }, None, &RuleSet::new(cs.card, true)).unwrap();
    assert!(pg > 0.999 && pg <= 1.0, "{pg}");
}

#[test]
fn run_point_with_unit_budget() {
    let cfg = config(vec![0.02, 0.08], 1);
    let row = run_point(&cfg, 0.02);
    assert_eq!(row.status, "ok");
    assert!(row.bound_bits.unwrap().abs() < 1e-9);
    assert_eq!(row.dw_rate, Some(0.0));
    assert_eq!(row.evaluations, 1);
    assert_eq!(row.level, "3,4");
    let rows = sweep(&cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.parameter).collect::<Vec<_>>(), vec![0.02, 0.08]);
    assert!(sweep(&config(Vec::new(), 1)).is_err());
}

#[test]
fn failed_points_are_recorded() {
    let row = run_point(&config(vec![0.7], 1), 0.7);
    assert_ne!(row.status, "ok");
    assert_eq!(row.bound_bits, None);
}

#[test]
fn rows_round_trip_through_csv() {
    let rows = sweep(&config(vec![0.0, 0.1], 1)).unwrap();
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows).unwrap();
    let back = read_rows(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!((a.parameter, &a.level, &a.status, a.evaluations), (b.parameter, &b.level, &b.status, b.evaluations));
        assert_eq!(a.bound_bits.is_some(), b.bound_bits.is_some());
    }
}

#[test]
fn anticommutation_holds_on_six_state_realization() {
    let (r, b) = six_state(0.03).unwrap();
    let rules = RuleSet::new(b.card, true);
    let e = ExplicitRealization::try_from(&r).unwrap();
    let ids = anticommutation_identities(&rules).unwrap();
    assert_eq!(ids.len(), 3);
    for p in &ids {
        assert!(e.poly_expectation(p).unwrap().norm() < 1e-12);
    }
}

#[test]
fn k_driven_basis_admits_k() {
    let (_, b) = six_state(0.02).unwrap();
    let cs = constraints_from_behavior(&b, ConstraintMode::MatchedBases).unwrap();
    let plain = RuleSet::new(cs.card, true);
    let rules = plain.clone().with_identities(anticommutation_identities(&plain).unwrap());
    let pin = Pinching::OneParty { alice_key: 0 };
    let structure = KStructure::new(cs.card, pin, &FactorOrder::support_of(&cs), &rules).unwrap();
    let level = k_driven_level(&structure, &rules).unwrap();
    let small = generate_basis(&level, &rules).unwrap().len();
    let full = generate_basis(&minimal_level(&structure), &rules).unwrap().len();
    assert!(small < full, "{small} vs {full}");
    assert!(level_label(&level).contains('+'));
    // Building the relaxation fails if some word of K is not a moment.
    let engine = BoundEngine::with_level(&cs, &rules, structure, level, SolverOptions::default()).unwrap();
    assert_eq!(engine.relaxation().blocks[0].basis.len(), small);
}
