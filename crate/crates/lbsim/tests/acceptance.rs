//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::Instant;

use lbsim::harness::experiments::{self, KineticRow};
use lbsim::harness::{self, Command, Config, ResultRecord, RunOutput};
use lbsim::limits::Convention;
use lbsim::model::{escape_rate, jump_rate, Model, ModelParams};
use lbsim::pdmp::{energy_martingale_check, simulate_ensemble, Initial, SimOptions};
use lbsim::quad;
use lbsim::splitting::{martingale_residuals, simulate_split_ensemble, CycleBudget, Estimate, MinorizationPair};
use lbsim::Result;

const ORIGIN: Initial = Initial::Point { x: 0.0, p: 0.0 };

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn find<'a>(recs: &'a [ResultRecord], metric: &str, lambda: Option<f64>) -> &'a ResultRecord {
    recs.iter()
        .find(|r| r.metric == metric && (lambda.is_none() || r.lambda == lambda))
        .unwrap_or_else(|| panic!("record {metric} missing"))
}

fn passed(recs: &[ResultRecord], metrics: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in metrics {
        let r = find(recs, m, None);
        ok &= r.pass == Some(true);
        parts.push(format!("{m}={:.4}/{:.3e}", r.value, r.tolerance.unwrap_or(f64::NAN)));
    }
    (ok, parts.join(" "))
}

fn c1_escape_rate() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    for lam in [0.0, 0.05, 0.1, 0.2, 0.5] {
        for i in 0..=24 {
            let p = -30.0 + 2.5 * i as f64;
            let num = quad::adaptive_pieces(|q| jump_rate(lam, p, q), &[p - 60.0, p, p + 60.0], 1e-14);
            worst = worst.max((escape_rate(lam, p) / num - 1.0).abs());
            if lam == 0.0 {
                worst = worst.max((escape_rate(0.0, p) - 0.125).abs() * 8.0);
            }
        }
        worst = worst.max((escape_rate(lam, 0.0) * 8.0 * (1.0 + lam) - 1.0).abs());
    }
    verdict(worst <= 1e-8, format!("max relative error {worst:.2e}"))
}

fn c2_detailed_balance() -> Result<Verdict> {
    let grid: Vec<f64> = (0..1000).map(|i| -10.0 + 20.0 * (i as f64 + 0.5) / 1000.0).collect();
    let mut worst: f64 = 0.0;
    for lam in [0.1, 0.5] {
        for &p in &grid {
            for &q in &grid {
                let l = jump_rate(lam, p, q) * (-lam * p * p / 2.0).exp();
                let r = jump_rate(lam, q, p) * (-lam * q * q / 2.0).exp();
                if l > 1e-300 {
                    worst = worst.max(((l - r) / l).abs());
                }
            }
        }
    }
    verdict(worst <= 1e-12, format!("max relative residual {worst:.2e} on 1000^2 pairs"))
}

fn c3_momentum_identity() -> Result<Verdict> {
    let m = Model::new(&ModelParams::with_lambda(0.1))?;
    let ens = simulate_ensemble(&m, &SimOptions::default(), 400.0, &ORIGIN, 401, 3, 100)?;
    let mut worst: f64 = 0.0;
    for tr in &ens {
        for k in 0..tr.grid.len() {
            let rhs = tr.initial.p - tr.d[k] + tr.j[k];
            worst = worst.max((tr.p[k] - rhs).abs() / (1.0 + tr.p[k].abs()));
        }
    }
    verdict(worst <= 1e-8, format!("max |P - P0 + D - J|/(1+|P|) = {worst:.2e}"))
}

fn c4_energy_martingale(n: usize) -> Result<Verdict> {
    let m = Model::new(&ModelParams::with_lambda(0.1))?;
    let opts = SimOptions {
        kernel_integrals: true,
        record_events: false,
        ..SimOptions::default()
    };
    let ens = simulate_ensemble(&m, &opts, 40.0, &ORIGIN, 2, 4, n)?;
    let r = energy_martingale_check(&ens)?;
    verdict(
        r.variance_ok,
        format!("var(M)={:.4} mean(V)={:.4} diff={:.4} se={:.4}", r.var_m, r.mean_v1, r.diff, r.se_diff),
    )
}

fn c5_slope(limits: &[ResultRecord]) -> Result<Verdict> {
    let (ok, d) = passed(limits, &["local_time_slope_dev"]);
    verdict(ok, d)
}

fn c6_laplace(limits: &[ResultRecord]) -> Result<Verdict> {
    let (ok, d) = passed(limits, &["laplace_mc_dev_self-consistent", "laplace_mc_dev_paper"]);
    let sc = (-Convention::SelfConsistent.laplace_exponent(1.0)).exp();
    let pa = (-Convention::Paper.laplace_exponent(1.0)).exp();
    let rounded = (sc - 0.2855).abs() <= 1e-4 && (pa - 0.3906).abs() <= 1e-4;
    verdict(ok && rounded, format!("{d} exact {sc:.5} / {pa:.5}"))
}

fn c7_levy_identity(app: &[ResultRecord]) -> Result<Verdict> {
    let rows: Vec<&ResultRecord> = app.iter().filter(|r| r.metric.starts_with("laplace_identity")).collect();
    let worst = rows.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    verdict(
        rows.len() == 6 && rows.iter().all(|r| r.pass == Some(true)),
        format!("{} rows, max residual {worst:.2e}", rows.len()),
    )
}

fn c8_volterra(vol: &[ResultRecord]) -> Result<Verdict> {
    let (ok, d) = passed(vol, &["mass_error", "second_moment_rel_error", "density_mc_l1_self-consistent"]);
    verdict(ok, d)
}

fn c9_mittag_leffler(limits: &[ResultRecord]) -> Result<Verdict> {
    let (ok, d) = passed(limits, &["mittag_leffler_scaling_ks"]);
    verdict(ok, d)
}

fn c10_kappa(recs: &[ResultRecord], kappa: &Estimate) -> Result<Verdict> {
    let overlaps: Vec<&ResultRecord> = recs.iter().filter(|r| r.metric.starts_with("kappa_overlap")).collect();
    let cons = find(recs, "kappa_consistency", None);
    let var = find(recs, "kappa_var", None);
    let ok = overlaps.len() == 3 && overlaps.iter().all(|r| r.pass == Some(true)) && cons.pass == Some(true);
    verdict(
        ok,
        format!(
            "pooled {:.4}±{:.4}, variance route {:.4}±{:.4}, gap {:.4} vs {:.4}",
            kappa.value,
            kappa.stderr,
            var.value,
            var.stderr.unwrap_or(0.0),
            cons.value,
            cons.tolerance.unwrap_or(f64::NAN)
        ),
    )
}

fn c11_thm2(recs: &[ResultRecord]) -> Result<Verdict> {
    let (ok, d) = passed(
        recs,
        &["ks_p_decreasing", "ks_p_final", "ks_l_decreasing", "mean_l_gap_decreasing"],
    );
    let ks: Vec<String> = recs
        .iter()
        .filter(|r| r.metric == "ks_p")
        .map(|r| format!("{:.4}", r.value))
        .collect();
    verdict(ok, format!("{d} ks_p=[{}]", ks.join(", ")))
}

fn c12_thm1(recs: &[ResultRecord], final_lambda: f64) -> Result<Verdict> {
    let (ok, d) = passed(recs, &["ks_d_decreasing", "ks_d_final"]);
    let ratio = find(recs, "variance_ratio", Some(final_lambda)).value;
    let in_band = (0.8..=1.2).contains(&ratio);
    verdict(ok && in_band, format!("{d} variance ratio {ratio:.4}"))
}

fn c13_compensators(n: usize) -> Result<Verdict> {
    let lam = 0.1;
    let m = Model::new(&ModelParams::with_lambda(lam))?;
    let pair = MinorizationPair::new(&m, 0.05)?;
    let ens = simulate_split_ensemble(
        &m,
        &SimOptions::default(),
        &pair,
        400.0,
        &ORIGIN,
        5,
        13,
        n,
        &CycleBudget::default(),
    )?;
    let anns: Vec<_> = ens.into_iter().map(|(_, a)| a).collect();
    let rep = martingale_residuals(&anns, &[100.0, 200.0, 400.0])?;
    let last = rep.rows.last().expect("ladder is nonempty");
    let s2 = lam.sqrt();
    let ok = rep.rows.iter().all(|r| {
        r.atom_mean.abs() <= 3.0 * r.atom_se
            && r.partition_mean.abs() <= 3.0 * r.partition_se
            && (s2 * r.total_mean).abs() <= 3.0 * s2 * r.total_se
    });
    verdict(
        ok,
        format!(
            "t={}: atom {:.3}±{:.3}, partition {:.3}±{:.3}, scaled visits-minus-compensator {:.4}±{:.4}",
            last.t,
            last.atom_mean,
            last.atom_se,
            last.partition_mean,
            last.partition_se,
            s2 * last.total_mean,
            s2 * last.total_se
        ),
    )
}

/// Reduced configs for every subcommand.
fn reduced() -> Config {
    let mut c = Config::default();
    c.experiment.ensemble = 200;
    c.experiment.lambdas = vec![0.2, 0.1];
    c.experiment.kappa = Some(0.24);
    c.splitting.n_cycles = 100;
    c.splitting.variance_cycles = 100;
    c.splitting.variance_t = 2.0;
    c.limits.laplace_samples = 5000;
    c.limits.slope_t = 200.0;
    c.volterra.mc_samples = 10_000;
    c.model.lambda = 0.1;
    c
}

fn fingerprint(out: &RunOutput) -> Vec<u8> {
    let mut v = out.records_jsonl().into_bytes();
    for a in &out.artifacts {
        a.write(&mut v).expect("in-memory write");
    }
    v
}

fn on_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool")
        .install(f)
}

fn c14_reproducibility() -> Result<Verdict> {
    let cfg = reduced();
    let mut bad = Vec::new();
    let commands = [
        Command::Simulate,
        Command::Limits,
        Command::Volterra,
        Command::Kappa,
        Command::Thm1,
        Command::Thm2,
        Command::Appendix,
        Command::Conjecture,
    ];
    for cmd in commands {
        let a = fingerprint(&harness::run_with_threads(cmd, &cfg, 1)?);
        let b = fingerprint(&harness::run_with_threads(cmd, &cfg, 1)?);
        let c = fingerprint(&harness::run_with_threads(cmd, &cfg, 8)?);
        if a != b || a != c {
            bad.push(cmd.name().to_string());
        }
    }
    let lib = |threads| {
        on_pool(threads, || -> Result<String> {
            let a = c4_energy_martingale(200)?;
            let b = c13_compensators(100)?;
            Ok(format!("{} {}", a.detail, b.detail))
        })
    };
    let (a, b, c) = (lib(1)?, lib(1)?, lib(8)?);
    if a != b || a != c {
        bad.push("library checks".into());
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} subcommands and library checks identical at 1/1/8 threads", commands.len())
        } else {
            format!("differing: {}", bad.join(", "))
        },
    )
}

fn main() {
    let cfg = Config::default();
    let mut failures = 0;
    let mut report = |n: u32, name: &str, t0: Instant, v: Result<Verdict>| {
        let secs = t0.elapsed().as_secs_f64();
        match v {
            Ok(v) => {
                if !v.pass {
                    failures += 1;
                }
                let tag = if v.pass { "PASS" } else { "FAIL" };
                println!("{tag} {n:>2} {name}: {} ({secs:.1}s)", v.detail);
            }
            Err(e) => {
                failures += 1;
                println!("FAIL {n:>2} {name}: error {e} ({secs:.1}s)");
            }
        }
    };

    let t = Instant::now();
    report(1, "escape rate closed form", t, c1_escape_rate());
    let t = Instant::now();
    report(2, "detailed balance", t, c2_detailed_balance());
    let t = Instant::now();
    report(3, "momentum identity", t, c3_momentum_identity());
    let t = Instant::now();
    report(4, "energy martingale variance", t, c4_energy_martingale(10_000));

    let t = Instant::now();
    let limits = experiments::limits_suite(&cfg).map(|o| o.records);
    let t6 = Instant::now();
    match &limits {
        Ok(l) => {
            report(5, "local time slope", t, c5_slope(l));
            report(6, "subordinator Laplace transform", t6, c6_laplace(l));
        }
        Err(e) => {
            report(5, "local time slope", t, Err(e.clone()));
            report(6, "subordinator Laplace transform", t, Err(e.clone()));
        }
    }

    let t = Instant::now();
    let app: Result<Vec<ResultRecord>> = [Convention::SelfConsistent, Convention::Paper]
        .iter()
        .map(|&c| experiments::appendix_suite(&cfg, c))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.concat());
    report(7, "Levy exponent identity", t, app.and_then(|a| c7_levy_identity(&a)));

    let t = Instant::now();
    report(
        8,
        "Volterra solver",
        t,
        experiments::volterra_suite(&cfg).and_then(|o| c8_volterra(&o.records)),
    );

    let t = Instant::now();
    report(9, "Mittag-Leffler scaling", t, limits.clone().and_then(|l| c9_mittag_leffler(&l)));

    let t = Instant::now();
    let kappa = experiments::kappa_table(&cfg);
    let kappa_est = kappa.as_ref().ok().map(|(_, k)| k.clone());
    report(10, "kappa cross-estimation", t, kappa.and_then(|(r, k)| c10_kappa(&r, &k)));

    let t = Instant::now();
    let rows: Result<Vec<KineticRow>> = experiments::kinetic_ladder(&cfg);
    report(
        11,
        "momentum and occupation trends",
        t,
        rows.clone().and_then(|r| experiments::thm2_table(&cfg, &r)).and_then(|r| c11_thm2(&r)),
    );

    let t = Instant::now();
    let final_lambda = *cfg.experiment.lambdas.last().expect("ladder");
    let thm1 = match (rows, kappa_est) {
        (Ok(r), Some(k)) => experiments::thm1_table(&cfg, &r, &k).and_then(|recs| c12_thm1(&recs, final_lambda)),
        (Err(e), _) => Err(e),
        (_, None) => Err(lbsim::Error::MissingKappa),
    };
    report(12, "drift law trends", t, thm1);

    let t = Instant::now();
    report(13, "splitting compensators", t, c13_compensators(1000));

    let t = Instant::now();
    report(14, "reproducibility", t, c14_reproducibility());

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 14 criteria passed");
}
