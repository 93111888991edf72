use lbsim::model::{Model, ModelParams, PotentialSpec};
use lbsim::pdmp::{simulate_ensemble, Initial, SimOptions, TrajectorySample};
use lbsim::rng::{self, Purpose};
use lbsim::splitting::*;
use lbsim::stats;

fn model(lambda: f64) -> Model {
    Model::new(&ModelParams::with_lambda(lambda)).unwrap()
}

fn zero_model(lambda: f64) -> Model {
    Model::new(&ModelParams {
        lambda,
        potential: PotentialSpec::zero(),
        ..ModelParams::default()
    })
    .unwrap()
}

const ORIGIN: Initial = Initial::Point { x: 0.0, p: 0.0 };

fn annotated(m: &Model, pair: &MinorizationPair, horizon: f64, grid_n: usize, seed: u64, n: usize) -> Vec<(TrajectorySample, SplitAnnotation)> {
    let opts = SimOptions::default();
    simulate_split_ensemble(m, &opts, pair, horizon, &ORIGIN, grid_n, seed, n, &CycleBudget::default()).unwrap()
}

#[test]
fn pair_validation() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 0.05).unwrap();
    assert_eq!(pair.level, 3.0);
    assert!(pair.measure > 1.0);
    assert!((pair.h(2.9) - 0.05 / pair.measure).abs() < 1e-15);
    assert_eq!(pair.h(3.1), 0.0);
    assert!(MinorizationPair::new(&m, 0.0).is_err());
    assert!(MinorizationPair::new(&m, 1.5).is_err());
    let mut r = rng::stream(1, 0, Purpose::Aux);
    for _ in 0..1000 {
        let s = pair.sample_nu(&m, &mut r).unwrap();
        assert!(m.hamiltonian(s) <= 3.0);
    }
}

#[test]
fn vanishing_atom_weight_gives_no_visits() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 1e-9).unwrap();
    for (_, ann) in annotated(&m, &pair, 400.0, 5, 2, 40) {
        assert_eq!(*ann.n_tilde.last().unwrap(), 0);
        assert!(!ann.z0);
    }
}

#[test]
fn high_energy_paths_never_visit_the_atom() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 1.0).unwrap();
    let opts = SimOptions::default();
    let init = Initial::Point { x: 0.0, p: 30.0 };
    for id in 0..20 {
        let (_, ann) = simulate_split(&m, &opts, &pair, 5.0, &init, 6, 3, id, &CycleBudget::default()).unwrap();
        assert!(ann.h_values.iter().all(|&h| h == 0.0));
        assert_eq!(*ann.n_tilde.last().unwrap(), 0);
        assert!(ann.atom_times.is_empty());
    }
}

#[test]
fn online_and_stored_annotations_agree() {
    let m = model(0.2);
    let pair = MinorizationPair::new(&m, 0.3).unwrap();
    let opts = SimOptions::default();
    for id in 0..5 {
        let (traj, online) = simulate_split(&m, &opts, &pair, 300.0, &ORIGIN, 31, 4, id, &CycleBudget::default()).unwrap();
        let offline = annotate(&traj, &pair, rng::stream(4, id, Purpose::Partition), &m).unwrap();
        assert_eq!(online.partition_times, offline.partition_times);
        assert_eq!(online.atom_flags, offline.atom_flags);
        assert_eq!(online.cycle_starts, offline.cycle_starts);
        assert_eq!(online.n_tilde, offline.n_tilde);
        assert_eq!(online.int_h, offline.int_h);
        assert!(offline.cycle_drift.is_empty());
        assert_eq!(online.cycle_drift.len(), online.cycle_starts.len());
        assert!(online.cycle_starts.windows(2).all(|w| w[0] < w[1]));
        let c = online.closure.clone().unwrap();
        assert_eq!(c.n_cycles, online.atom_visits());
        if c.n_cycles > 0 {
            assert_eq!(c.first_start, online.cycle_starts[0]);
            let idx = c.n_cycles as usize;
            if idx < online.cycle_starts.len() {
                assert_eq!(c.last_start, online.cycle_starts[idx]);
            } else {
                assert!(c.last_start > 300.0);
            }
        }
    }
}

#[test]
fn atom_marks_follow_h() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 1.0).unwrap();
    let hin = 1.0 / pair.measure;
    let ens = annotated(&m, &pair, 400.0, 2, 5, 250);
    let (mut n_in, mut k_in, mut n_total) = (0u64, 0u64, 0usize);
    for (_, a) in &ens {
        n_total += a.partition_times.len();
        for (&h, &z) in a.h_values.iter().zip(&a.atom_flags) {
            if h > 0.0 {
                assert!((h - hin).abs() < 1e-15);
                n_in += 1;
                k_in += z as u64;
            } else {
                assert!(!z);
            }
        }
    }
    assert!(n_total >= 90_000);
    let expect = n_in as f64 * hin;
    let chi2 = (k_in as f64 - expect).powi(2) / (expect * (1.0 - hin));
    // One degree of freedom, 0.999 quantile.
    assert!(chi2 < 10.83, "chi2 {chi2}");
}

#[test]
fn constant_h_compensator() {
    let m = model(0.1);
    let c = 0.3;
    let pair = MinorizationPair::constant(c).unwrap();
    let ens = annotated(&m, &pair, 50.0, 11, 6, 5);
    for (_, a) in &ens {
        for (k, &t) in a.grid.iter().enumerate() {
            let n_t = a.partition_times.iter().filter(|&&s| s <= t).count() as f64;
            assert!((a.sum_h[k] - a.int_h[k] - c * (n_t - t)).abs() < 1e-9);
        }
    }
}

#[test]
fn compensators_free_particle() {
    let m = zero_model(0.1);
    let pair = MinorizationPair::with_level(&m, 0.5, 3.0).unwrap();
    let ens = annotated(&m, &pair, 200.0, 5, 7, 400);
    let anns: Vec<SplitAnnotation> = ens.into_iter().map(|(_, a)| a).collect();
    let rep = martingale_residuals(&anns, &[50.0, 100.0, 200.0]).unwrap();
    assert!(rep.all_ok, "{rep:#?}");
    assert!(martingale_residuals(&anns[..10], &[50.0]).is_err());
}

#[test]
fn compensators_default_potential() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 0.05).unwrap();
    let ens = annotated(&m, &pair, 400.0, 5, 8, 400);
    let anns: Vec<SplitAnnotation> = ens.into_iter().map(|(_, a)| a).collect();
    let rep = martingale_residuals(&anns, &[100.0, 200.0, 400.0]).unwrap();
    assert!(rep.all_ok, "{rep:#?}");
}

#[test]
fn non_adjacent_cycles_are_uncorrelated() {
    let m = model(0.2);
    let pair = MinorizationPair::new(&m, 1.0).unwrap();
    let ens = annotated(&m, &pair, 4000.0, 2, 9, 20);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (_, a) in &ens {
        let cs = CycleStatistics::from_annotation(a).unwrap();
        for w in cs.integrals.windows(3) {
            x.push(w[0]);
            y.push(w[2]);
        }
        assert!(cs.durations.iter().all(|&d| d > 0.0));
    }
    let r = stats::correlation(&x, &y);
    let se = 1.0 / (x.len() as f64).sqrt();
    assert!(x.len() > 1000);
    assert!(r.abs() <= 3.0 * se, "lag-2 correlation {r} (se {se}, n {})", x.len());
}

#[test]
fn zero_potential_estimators_vanish() {
    let m = zero_model(0.1);
    let pair = MinorizationPair::new(&m, 0.05).unwrap();
    let opts = SimOptions::default();
    let (ups, _) = estimate_upsilon(&m, &opts, &pair, 100, 1, &CycleBudget::default()).unwrap();
    assert_eq!(ups.value, 0.0);
    assert_eq!(ups.stderr, 0.0);
    let m0 = zero_model(0.0);
    let pair0 = MinorizationPair::new(&m0, 0.05).unwrap();
    let small = CycleBudget {
        max_events: 100_000,
        max_timeout_fraction: 0.2,
    };
    let (kappa, _) = estimate_kappa(&m0, &opts, &pair0, 100, 1, &small).unwrap();
    assert_eq!(kappa.value, 0.0);
    let r = resolvent_point_estimate(&m, &opts, lbsim::model::PhasePoint::new(0.0, 1.0), 5.0, 100, 1).unwrap();
    assert_eq!(r.value, 0.0);
    let ens = annotated(&m, &pair, 50.0, 2, 3, 1000);
    let rep = kappa_variance_check(&ens, 0.1, &ups, 0.05).unwrap();
    assert_eq!(rep.var_w, 0.0);
}

#[test]
fn estimator_preconditions() {
    let m = model(0.1);
    let pair = MinorizationPair::new(&m, 0.05).unwrap();
    let opts = SimOptions::default();
    let b = CycleBudget::default();
    assert!(estimate_upsilon(&m, &opts, &pair, 50, 1, &b).is_err());
    assert!(estimate_kappa(&m, &opts, &pair, 100, 1, &b).is_err());
    assert!(resolvent_point_estimate(&m, &opts, lbsim::model::PhasePoint::new(0.0, 1.0), 0.0, 100, 1).is_err());
    let tight = CycleBudget {
        max_events: 1,
        max_timeout_fraction: 0.0,
    };
    assert!(matches!(
        estimate_upsilon(&m, &opts, &pair, 100, 1, &tight),
        Err(lbsim::Error::CycleTimeout(_))
    ));
}

#[test]
fn positive_kappa_and_small_lambda_continuity() {
    let opts = SimOptions::default();
    let b = CycleBudget::default();
    let m0 = model(0.0);
    let pair0 = MinorizationPair::new(&m0, 0.1).unwrap();
    let (ups0, cs) = estimate_upsilon(&m0, &opts, &pair0, 300, 11, &b).unwrap();
    assert!(cs.timeouts <= 6);
    let m1 = model(0.02);
    let pair1 = MinorizationPair::new(&m1, 0.1).unwrap();
    let (ups1, _) = estimate_upsilon(&m1, &opts, &pair1, 300, 12, &b).unwrap();
    assert!(ups0.ci95().0 > 0.0, "{ups0:?}");
    assert!(ups0.overlaps(&ups1), "{ups0:?} vs {ups1:?}");
}

#[test]
fn resolvent_sign_symmetry_and_convergence() {
    let m = model(0.0);
    let opts = SimOptions::default();
    let plus = resolvent_point_estimate(&m, &opts, lbsim::model::PhasePoint::new(0.0, 1.2), 10.0, 2000, 1).unwrap();
    let minus = resolvent_point_estimate(&m, &opts, lbsim::model::PhasePoint::new(0.0, -1.2), 10.0, 2000, 2).unwrap();
    let se = (plus.stderr.powi(2) + minus.stderr.powi(2)).sqrt();
    assert!((plus.value + minus.value).abs() <= 3.0 * se, "{plus:?} {minus:?}");
    // Correlations decay on the mean collision time 8, so cut well past it.
    let s = lbsim::model::PhasePoint::new(0.0, 1.2);
    let short = resolvent_point_estimate(&m, &opts, s, 40.0, 2000, 3).unwrap();
    let long = resolvent_point_estimate(&m, &opts, s, 80.0, 2000, 3).unwrap();
    assert!((long.value - short.value).abs() < 2.0 * long.stderr, "{short:?} {long:?}");
}

fn occupation_and_gap(lam: f64, n: usize, seed: u64) -> (f64, f64) {
    let opts = SimOptions {
        kernel_integrals: true,
        record_events: false,
        ..SimOptions::default()
    };
    let m = model(lam);
    let ens = simulate_ensemble(&m, &opts, 2.0 / lam, &ORIGIN, 41, seed, n).unwrap();
    let s = lam.sqrt();
    let l: Vec<f64> = ens.iter().map(|t| s * t.l[t.last()]).collect();
    let g: Vec<f64> = ens
        .iter()
        .map(|t| t.l.iter().zip(&t.a_plus).map(|(a, b)| s * (a - b).abs()).fold(0.0, f64::max))
        .collect();
    (stats::mean(&l), stats::mean(&g))
}

#[test]
fn occupation_scaling_across_lambda() {
    let means: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&lam| occupation_and_gap(lam, 300, 13).0).collect();
    let c = means[0];
    assert!(means.iter().all(|&v| v <= 2.0 * c), "{means:?}");
    // The gap peaks near lambda = 0.02 and only decays below it.
    let (_, g_hi) = occupation_and_gap(0.01, 200, 14);
    let (_, g_lo) = occupation_and_gap(0.002, 200, 15);
    assert!(g_lo < g_hi, "{g_hi} vs {g_lo}");
}
