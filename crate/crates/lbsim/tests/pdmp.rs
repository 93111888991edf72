use lbsim::model::{escape_rate, Model, ModelParams, PhasePoint, PotentialSpec};
use lbsim::pdmp::{
    energy_martingale_check, flow_segment, next_collision, rescale, simulate_ensemble,
    simulate_trajectory, Initial, SimOptions,
};
use lbsim::rng::{self, Purpose};
use lbsim::stats::{self, ks_vs_cdf, SampleSet};

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

fn point(x: f64, p: f64) -> Initial {
    Initial::Point { x, p }
}

#[test]
fn zero_potential_has_no_drift() {
    let m = zero_model(0.1);
    let tr = simulate_trajectory(&m, &SimOptions::default(), 200.0, &point(0.2, 1.0), 101, 3, 0).unwrap();
    assert!(tr.n_events > 0);
    for k in 0..tr.grid.len() {
        assert_eq!(tr.d[k], 0.0);
        assert!((tr.p[k] - tr.initial.p - tr.j[k]).abs() < 1e-12);
    }
}

#[test]
fn no_collisions_conserves_energy_and_fills_occupation() {
    let m = model(0.1);
    let opts = SimOptions {
        collisions: false,
        kernel_integrals: true,
        ..SimOptions::default()
    };
    let u = m.level_measure();
    for &(x, p, inside) in &[(0.3, 1.7, true), (0.1, 0.4, true), (0.0, 3.0, false)] {
        let tr = simulate_trajectory(&m, &opts, 30.0, &point(x, p), 31, 1, 0).unwrap();
        let h0 = m.hamiltonian(PhasePoint::new(x, p));
        for k in 0..tr.grid.len() {
            assert!((0.5 * tr.q[k] * tr.q[k] - h0).abs() < 1e-9);
            let want = if inside { tr.grid[k] / u } else { 0.0 };
            assert!((tr.l[k] - want).abs() < 1e-12);
            let mg = tr.q[k] - tr.q[0] - tr.a_plus[k] + tr.a_minus[k];
            assert!(mg.abs() < 1e-9);
        }
    }
}

#[test]
fn momentum_identity_on_grid() {
    let m = model(0.1);
    let opts = SimOptions::default();
    let ens = simulate_ensemble(&m, &opts, 100.0, &point(0.0, 0.0), 401, 17, 20).unwrap();
    for tr in &ens {
        for k in 0..tr.grid.len() {
            let rhs = tr.initial.p - tr.d[k] + tr.j[k];
            assert!((tr.p[k] - rhs).abs() <= 1e-8 * (1.0 + tr.p[k].abs()));
        }
        let jsum: f64 = tr.events.iter().map(|e| e.p_after - e.p_before).sum();
        assert!((jsum - tr.j[tr.last()]).abs() < 1e-9);
        for w in tr.events.windows(2) {
            assert!(w[0].time < w[1].time);
        }
    }
}

fn drift_by_quadrature(m: &Model, s: PhasePoint, t: f64) -> f64 {
    let h = 1e-3;
    let n = (t / h).round() as usize;
    let mut states = Vec::with_capacity(n + 1);
    let mut cur = s;
    states.push(cur);
    for _ in 0..n {
        cur = flow_segment(m.potential(), cur, h, 1e-5);
        states.push(cur);
    }
    let f: Vec<f64> = states.iter().map(|s| m.potential().force_gradient(s.x)).collect();
    let mut acc = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

#[test]
fn drift_matches_time_quadrature_of_force() {
    let m = model(0.1);
    let opts = SimOptions {
        collisions: false,
        ..SimOptions::default()
    };
    // One rotating orbit (exact flow) and one trapped orbit (integrator).
    for &(x, p) in &[(0.3, 1.7), (0.05, 0.8)] {
        let tr = simulate_trajectory(&m, &opts, 6.0, &point(x, p), 2, 1, 0).unwrap();
        let want = drift_by_quadrature(&m, PhasePoint::new(x, p), 6.0);
        let got = tr.d[1];
        assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn exact_orbits_agree_with_integrated_paths() {
    let m = model(0.1);
    let fast = SimOptions::default();
    let slow = SimOptions {
        orbit_margin: -1.0,
        ..SimOptions::default()
    };
    for id in 0..6 {
        let a = simulate_trajectory(&m, &fast, 40.0, &point(0.0, 2.5), 2, 5, id).unwrap();
        let b = simulate_trajectory(&m, &slow, 40.0, &point(0.0, 2.5), 2, 5, id).unwrap();
        assert_eq!(a.n_events, b.n_events);
        assert!((a.d[1] - b.d[1]).abs() < 1e-6, "{} vs {}", a.d[1], b.d[1]);
        assert!((a.p[1] - b.p[1]).abs() < 1e-6);
    }
}

#[test]
fn same_seed_same_path() {
    let m = model(0.2);
    let opts = SimOptions {
        kernel_integrals: true,
        ..SimOptions::default()
    };
    let a = simulate_trajectory(&m, &opts, 30.0, &Initial::Maxwellian { beta: 0.2 }, 50, 9, 4).unwrap();
    let b = simulate_trajectory(&m, &opts, 30.0, &Initial::Maxwellian { beta: 0.2 }, 50, 9, 4).unwrap();
    assert_eq!(a, b);
    let c = simulate_trajectory(&m, &opts, 30.0, &Initial::Maxwellian { beta: 0.2 }, 50, 9, 5).unwrap();
    assert_ne!(a.p, c.p);
}

#[test]
fn occupation_is_monotone_with_quantised_increments() {
    let m = model(0.2);
    let tr = simulate_trajectory(&m, &SimOptions::default(), 200.0, &point(0.0, 0.0), 2001, 2, 0).unwrap();
    let u = m.level_measure();
    let dt = tr.grid[1] - tr.grid[0];
    let mut last_event = 0;
    for k in 1..tr.grid.len() {
        let inc = tr.l[k] - tr.l[k - 1];
        assert!(inc >= 0.0);
        let crossing = tr.events[last_event..]
            .iter()
            .take_while(|e| e.time <= tr.grid[k])
            .count();
        if crossing == 0 {
            assert!(inc.abs() < 1e-12 || (inc - dt / u).abs() < 1e-9, "{inc}");
        }
        last_event += crossing;
    }
    let r = rescale(&tr, 0.2, 40.0).unwrap();
    assert!(r.scaled_l.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn rescale_identity_and_horizon() {
    let m = model(0.1);
    let tr = simulate_trajectory(&m, &SimOptions::default(), 10.0, &point(0.0, 1.0), 11, 1, 0).unwrap();
    let r = rescale(&tr, 1.0, 10.0).unwrap();
    assert_eq!(r.scaled_p, tr.p);
    assert_eq!(r.t, tr.grid);
    assert!(rescale(&tr, 0.5, 10.0).is_err());
}

#[test]
fn zero_mass_ratio_clock_is_poisson() {
    let m = model(0.0);
    let opts = SimOptions::default();
    let n = 100_000;
    let mut times = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let x = (id as f64 * 0.618_033_988_7).fract();
        let p = -6.0 + 12.0 * (id as f64 * 0.414_213_562).fract();
        let (t, _) = next_collision(&m, &opts, PhasePoint::new(x, p), rng::stream(4, id, Purpose::Path)).unwrap();
        times.push(t);
    }
    let (mean, var) = stats::mean_var(&times);
    let se = (var / n as f64).sqrt();
    assert!((mean - 8.0).abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn thinned_clock_matches_hazard_integral() {
    let lam = 0.1;
    let m = model(lam);
    let opts = SimOptions::default();
    let s = PhasePoint::new(0.0, 10.0);
    assert!((m.hamiltonian(s) - 50.0).abs() < 1e-12);
    // Cumulative hazard along the deterministic flow.
    let dt = 1e-3;
    let n = 100_000;
    let mut cum = vec![0.0; n + 1];
    let mut cur = s;
    let mut prev = escape_rate(lam, cur.p);
    for i in 1..=n {
        cur = flow_segment(m.potential(), cur, dt, 1e-4);
        let r = escape_rate(lam, cur.p);
        cum[i] = cum[i - 1] + 0.5 * dt * (prev + r);
        prev = r;
    }
    let cdf = |t: f64| {
        let u = t / dt;
        let i = u.floor() as usize;
        if i >= n {
            return 1.0;
        }
        let f = u - i as f64;
        1.0 - (-(cum[i] * (1.0 - f) + cum[i + 1] * f)).exp()
    };
    let samples: Vec<f64> = (0..100_000u64)
        .map(|id| next_collision(&m, &opts, s, rng::stream(8, id, Purpose::Path)).unwrap().0)
        .collect();
    let d = ks_vs_cdf(&SampleSet::new(samples), cdf).unwrap();
    assert!(d <= 0.02, "{d}");
}

#[test]
fn constant_rate_clock_is_exponential() {
    let m = zero_model(0.1);
    let opts = SimOptions {
        constant_rate: Some(1.0),
        ..SimOptions::default()
    };
    let tr = simulate_trajectory(&m, &opts, 1.0e6, &point(0.0, 1.0), 2, 6, 0).unwrap();
    let mut gaps = Vec::with_capacity(tr.events.len());
    let mut last = 0.0;
    for e in &tr.events {
        gaps.push(e.time - last);
        last = e.time;
    }
    assert!(gaps.len() > 900_000);
    let d = ks_vs_cdf(&SampleSet::new(gaps), |t| 1.0 - (-t).exp()).unwrap();
    assert!(d <= 0.01, "{d}");
}

#[test]
fn energy_martingale_small_ensemble() {
    let m = model(0.1);
    let opts = SimOptions {
        kernel_integrals: true,
        record_events: false,
        ..SimOptions::default()
    };
    let ens = simulate_ensemble(&m, &opts, 20.0, &point(0.0, 0.0), 3, 21, 400).unwrap();
    let r = energy_martingale_check(&ens).unwrap();
    assert!(r.mean_ok && r.variance_ok, "{r:?}");
    assert!(energy_martingale_check(&ens[..50]).is_err());
}

#[test]
fn energy_sup_grows_diffusively() {
    let opts = SimOptions {
        record_events: false,
        ..SimOptions::default()
    };
    let ratio = |lam: f64| {
        let m = model(lam);
        let horizon = 4.0 / lam;
        let ens = simulate_ensemble(&m, &opts, horizon, &point(0.0, 0.0), 2, 31, 300).unwrap();
        let sup: Vec<f64> = ens.iter().map(|t| t.energy_max[1].sqrt()).collect();
        stats::mean(&sup) / horizon.sqrt()
    };
    let c = ratio(0.2);
    for lam in [0.1, 0.05] {
        let r = ratio(lam);
        assert!(r <= 2.0 * c, "lambda {lam}: {r} vs fitted {c}");
    }
}
