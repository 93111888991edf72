//! The experiment tables. Every sample set is generated from `(seed, tag, id)`
//! streams and reduced in id order, so records do not depend on the pool size.

use rayon::prelude::*;

use super::config::Config;
use super::{Artifact, CsvTable, ResultRecord, RunOutput};
use crate::error::{Error, Result};
use crate::limits::{
    local_time_mollified, mittag_leffler_half_cdf, mittag_leffler_path, ou_local_time_samples, ou_path,
    perturbed_momentum, time_changed_bm, time_changed_bm_samples, Convention, LimitPath, SubordinatorSampler,
};
use crate::model::{normal_cdf, Model};
use crate::pdmp::{rescale, simulate_trajectory, Initial, TrajectorySample};
use crate::rng::{stream, Purpose};
use crate::splitting::{
    estimate_kappa, estimate_upsilon, kappa_variance_check, simulate_split_ensemble, Estimate, MinorizationPair,
};
use crate::stats::{self, SampleSet};
use crate::volterra::{density_vs_mc, solve_density, KernelMode, QGrid, VolterraOptions};

/// `(2 pi)^{-1/2}`, the long-run slope of the local time.
pub const LOCAL_TIME_SLOPE: f64 = 0.398_942_280_401_432_7;

/// Sample-stream tags, one per independent sample set.
mod tag {
    pub const KINETIC: u64 = 100;
    pub const OU_CLOCK: u64 = 200;
    pub const TIME_CHANGED: u64 = 300;
    pub const KAPPA: u64 = 400;
    pub const UPSILON: u64 = 500;
    pub const VARIANCE_ROUTE: u64 = 600;
    pub const SLOPE: u64 = 700;
    pub const LAPLACE: u64 = 800;
    pub const MITTAG_LEFFLER: u64 = 900;
    pub const LONG_TIME: u64 = 1000;
    pub const VOLTERRA_MC: u64 = 1100;
    pub const CONJECTURE: u64 = 1200;
    pub const PATHS: u64 = 1300;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sample set `tag` within a run seeded by `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

fn seed(cfg: &Config, tag: u64) -> u64 {
    derive_seed(cfg.experiment.seed, tag)
}

fn ks(a: &[f64], b: &[f64]) -> Result<f64> {
    stats::ks_two_sample(&SampleSet::new(a.to_vec()), &SampleSet::new(b.to_vec()))
}

/// Terminal values of one mass ratio's ensemble, diffusively rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticRow {
    pub lambda: f64,
    /// `λ^{1/2} P_{T/λ}`, `λ^{1/2} L_{T/λ}`, `λ^{1/4} D_{T/λ}`.
    pub p: Vec<f64>,
    pub l: Vec<f64>,
    pub d: Vec<f64>,
    /// Rescaled momentum on the output grid, one row of `grid` values per path.
    pub p_path: Vec<f64>,
    /// Per grid interval: squared rescaled drift increment and rescaled occupation increment.
    pub activity: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub mean_events: f64,
}

struct PathSummary {
    p: f64,
    l: f64,
    d: f64,
    p_path: Vec<f64>,
    activity: Vec<f64>,
    occupancy: Vec<f64>,
    events: u64,
}

fn summarize(tr: &TrajectorySample, lambda: f64) -> PathSummary {
    let s2 = lambda.sqrt();
    let s4 = lambda.powf(0.25);
    let k = tr.last();
    PathSummary {
        p: s2 * tr.p[k],
        l: s2 * tr.l[k],
        d: s4 * tr.d[k],
        p_path: tr.p.iter().map(|v| s2 * v).collect(),
        activity: tr.d.windows(2).map(|w| (s4 * (w[1] - w[0])).powi(2)).collect(),
        occupancy: tr.l.windows(2).map(|w| s2 * (w[1] - w[0])).collect(),
        events: tr.n_events,
    }
}

/// Simulates `ensemble` paths from the origin to `T/λ` for every ladder entry.
pub fn kinetic_ladder(cfg: &Config) -> Result<Vec<KineticRow>> {
    let e = &cfg.experiment;
    let opts = cfg.model.sim_options();
    let initial = Initial::Point { x: 0.0, p: 0.0 };
    let mut rows = Vec::with_capacity(e.lambdas.len());
    for (i, &lambda) in e.lambdas.iter().enumerate() {
        let model = Model::new(&cfg.model.params(lambda))?;
        let s = seed(cfg, tag::KINETIC + i as u64);
        let paths: Vec<PathSummary> = (0..e.ensemble as u64)
            .into_par_iter()
            .map(|id| {
                let tr = simulate_trajectory(&model, &opts, e.t / lambda, &initial, e.grid, s, id)?;
                Ok(summarize(&tr, lambda))
            })
            .collect::<Result<_>>()?;
        let mut row = KineticRow {
            lambda,
            p: Vec::with_capacity(paths.len()),
            l: Vec::with_capacity(paths.len()),
            d: Vec::with_capacity(paths.len()),
            p_path: Vec::with_capacity(paths.len() * e.grid),
            activity: Vec::new(),
            occupancy: Vec::new(),
            mean_events: 0.0,
        };
        let mut events = 0u64;
        for ps in paths {
            row.p.push(ps.p);
            row.l.push(ps.l);
            row.d.push(ps.d);
            row.p_path.extend(ps.p_path);
            row.activity.extend(ps.activity);
            row.occupancy.extend(ps.occupancy);
            events += ps.events;
        }
        row.mean_events = events as f64 / e.ensemble as f64;
        rows.push(row);
    }
    Ok(rows)
}

/// Mollified OU local times at `T`, the comparison law for `λ^{1/2} L_{T/λ}`.
pub fn ou_clock_samples(cfg: &Config) -> Result<Vec<f64>> {
    let l = &cfg.limits;
    ou_local_time_samples(
        cfg.experiment.t,
        l.dt(),
        l.epsilon,
        0.0,
        cfg.experiment.ensemble,
        seed(cfg, tag::OU_CLOCK),
    )
}

/// Momentum marginals, occupation laws and occupation means along the ladder.
pub fn thm2_table(cfg: &Config, rows: &[KineticRow]) -> Result<Vec<ResultRecord>> {
    const EX: &str = "thm2";
    let t = cfg.experiment.t;
    let ell = ou_clock_samples(cfg)?;
    let mean_ell = stats::mean(&ell);
    let se_ell = stats::std_err(&ell);
    let sd = (1.0 - (-t).exp()).sqrt();
    let mut out = vec![ResultRecord::info(EX, "mean_ell", None, mean_ell, Some(se_ell))];
    let (mut ks_p, mut ks_l, mut gaps) = (Vec::new(), Vec::new(), Vec::new());
    for row in rows {
        let lam = Some(row.lambda);
        let kp = stats::ks_vs_cdf(&SampleSet::new(row.p.clone()), |x| normal_cdf(x / sd))?;
        let kl = ks(&row.l, &ell)?;
        let m = stats::mean(&row.l);
        let se = stats::std_err(&row.l);
        let gap = (m - mean_ell).abs();
        out.push(ResultRecord::info(EX, "ks_p", lam, kp, None));
        out.push(ResultRecord::info(EX, "ks_l", lam, kl, None));
        out.push(ResultRecord::info(EX, "mean_l", lam, m, Some(se)));
        out.push(ResultRecord::info(EX, "mean_l_gap", lam, gap, Some(se.hypot(se_ell))));
        out.push(ResultRecord::info(EX, "mean_events", lam, row.mean_events, None));
        ks_p.push(kp);
        ks_l.push(kl);
        gaps.push(gap);
    }
    let sup = rows.iter().map(|r| stats::mean(&r.l)).fold(0.0, f64::max);
    out.push(ResultRecord::info(EX, "mean_l_sup", None, sup, None));
    out.push(ResultRecord::decreasing(EX, "ks_p_decreasing", &ks_p));
    if let (Some(&kp), Some(row)) = (ks_p.last(), rows.last()) {
        out.push(ResultRecord::check(EX, "ks_p_final", Some(row.lambda), kp, None, 0.05));
    }
    out.push(ResultRecord::decreasing(EX, "ks_l_decreasing", &ks_l));
    out.push(ResultRecord::decreasing(EX, "mean_l_gap_decreasing", &gaps));
    Ok(out)
}

/// Diffusion constant from the config, for runs that do not estimate it.
pub fn configured_kappa(cfg: &Config) -> Result<Estimate> {
    let value = cfg.experiment.kappa.ok_or(Error::MissingKappa)?;
    Ok(Estimate {
        value,
        stderr: cfg.experiment.kappa_stderr.unwrap_or(0.0),
        n: 0,
    })
}

/// Drift laws against `sqrt(κ) B_{ℓ_T}`, the variance ratio and the
/// activity/occupation correlation along the ladder.
pub fn thm1_table(cfg: &Config, rows: &[KineticRow], kappa: &Estimate) -> Result<Vec<ResultRecord>> {
    const EX: &str = "thm1";
    let lim = &cfg.limits;
    let sampler = SubordinatorSampler::new(lim.convention, lim.delta)?;
    let b = time_changed_bm_samples(
        &sampler,
        cfg.experiment.t,
        kappa.value,
        cfg.experiment.ensemble,
        seed(cfg, tag::TIME_CHANGED),
    );
    let mut out = vec![ResultRecord::info(EX, "kappa", None, kappa.value, Some(kappa.stderr))];
    let mut ks_d = Vec::new();
    let mut negative = 0;
    for row in rows {
        let lam = Some(row.lambda);
        let kd = ks(&row.d, &b)?;
        out.push(ResultRecord::info(EX, "ks_d", lam, kd, None));
        ks_d.push(kd);

        let (var_d, var_se) = stats::var_with_se(&row.d);
        let ml = stats::mean(&row.l);
        let ml_se = stats::std_err(&row.l);
        let denom = kappa.value * ml;
        if denom > 0.0 {
            let ratio = var_d / denom;
            let rel = |x: f64, s: f64| if x != 0.0 { s / x } else { 0.0 };
            let se = ratio.abs()
                * (rel(var_d, var_se).powi(2) + rel(kappa.value, kappa.stderr).powi(2) + rel(ml, ml_se).powi(2)).sqrt();
            let slack = 1.96 * se + row.lambda.powf(0.25);
            out.push(ResultRecord::info(EX, "variance_ratio", lam, ratio, Some(se)));
            out.push(ResultRecord::check(EX, "variance_ratio_dev", lam, ratio - 1.0, Some(se), slack));
        } else {
            out.push(ResultRecord::info(EX, "var_d", lam, var_d, Some(var_se)));
        }

        let corr = stats::correlation(&row.activity, &row.occupancy);
        let corr = if corr.is_finite() { corr } else { 0.0 };
        if corr <= 0.0 {
            negative += 1;
        }
        out.push(ResultRecord::info(EX, "activity_occupancy_corr", lam, corr, None));
    }
    out.push(ResultRecord::decreasing(EX, "ks_d_decreasing", &ks_d));
    if let (Some(&kd), Some(row)) = (ks_d.last(), rows.last()) {
        out.push(ResultRecord::check(EX, "ks_d_final", Some(row.lambda), kd, None, 0.08));
    }
    let potential_free = rows.iter().all(|r| r.activity.iter().all(|&a| a == 0.0));
    if !potential_free {
        out.push(ResultRecord::check(EX, "activity_occupancy_nonpositive", None, negative as f64, None, 0.0));
    }
    Ok(out)
}

/// Inverse-variance weighted mean.
pub fn pooled(estimates: &[Estimate]) -> Estimate {
    let w: Vec<f64> = estimates.iter().map(|e| 1.0 / (e.stderr * e.stderr)).collect();
    if w.iter().any(|x| !x.is_finite()) {
        let n = estimates.len() as f64;
        return Estimate {
            value: estimates.iter().map(|e| e.value).sum::<f64>() / n,
            stderr: 0.0,
            n: estimates.iter().map(|e| e.n).sum(),
        };
    }
    let sw: f64 = w.iter().sum();
    Estimate {
        value: estimates.iter().zip(&w).map(|(e, w)| e.value * w).sum::<f64>() / sw,
        stderr: sw.recip().sqrt(),
        n: estimates.iter().map(|e| e.n).sum(),
    }
}

fn pair_for(cfg: &Config, model: &Model, u: f64) -> Result<MinorizationPair> {
    match cfg.splitting.level {
        Some(level) => MinorizationPair::with_level(model, u, level),
        None => MinorizationPair::new(model, u),
    }
}

/// Cycle estimates of `κ` across atom weights, their pooled value and the
/// variance-route cross-check at a small mass ratio.
pub fn kappa_table(cfg: &Config) -> Result<(Vec<ResultRecord>, Estimate)> {
    const EX: &str = "kappa";
    let sp = &cfg.splitting;
    let opts = cfg.model.sim_options();
    let budget = sp.budget();
    let model0 = Model::new(&cfg.model.params(0.0))?;
    let mut out = Vec::new();
    let mut ests = Vec::new();
    for (i, &u) in sp.u.iter().enumerate() {
        let pair = pair_for(cfg, &model0, u)?;
        let (est, cs) = estimate_kappa(&model0, &opts, &pair, sp.n_cycles, seed(cfg, tag::KAPPA + i as u64), &budget)?;
        out.push(ResultRecord::info(EX, &format!("kappa_hat_u{u}"), Some(0.0), est.value, Some(est.stderr)));
        out.push(ResultRecord::info(EX, &format!("timeouts_u{u}"), Some(0.0), cs.timeouts as f64, None));
        ests.push(est);
    }
    for i in 0..ests.len() {
        for j in i + 1..ests.len() {
            let (a, b) = (&ests[i], &ests[j]);
            let metric = format!("kappa_overlap_u{}_u{}", sp.u[i], sp.u[j]);
            out.push(ResultRecord::check(
                EX,
                &metric,
                Some(0.0),
                a.value - b.value,
                Some(a.stderr.hypot(b.stderr)),
                1.96 * (a.stderr + b.stderr),
            ));
        }
    }
    let kappa = pooled(&ests);
    out.push(ResultRecord::info(EX, "kappa_pooled", Some(0.0), kappa.value, Some(kappa.stderr)));

    let lam = sp.variance_lambda;
    let model = Model::new(&cfg.model.params(lam))?;
    let pair = pair_for(cfg, &model, sp.variance_u)?;
    let (ups, _) = estimate_upsilon(&model, &opts, &pair, sp.variance_cycles, seed(cfg, tag::UPSILON), &budget)?;
    let samples = simulate_split_ensemble(
        &model,
        &opts,
        &pair,
        sp.variance_t / lam,
        &Initial::Point { x: 0.0, p: 0.0 },
        2,
        seed(cfg, tag::VARIANCE_ROUTE),
        sp.variance_n,
        &budget,
    )?;
    let rep = kappa_variance_check(&samples, lam, &ups, sp.variance_u)?;
    let l4 = lam.powf(0.25);
    out.push(ResultRecord::info(EX, "upsilon_hat", Some(lam), ups.value, Some(ups.stderr)));
    out.push(ResultRecord::check(
        EX,
        "variance_route_ratio_dev",
        Some(lam),
        rep.ratio - 1.0,
        Some(rep.ratio_se),
        3.0 * rep.ratio_se + l4,
    ));
    out.push(ResultRecord::info(EX, "kappa_var", Some(lam), rep.kappa_var, Some(rep.kappa_var_se)));
    out.push(ResultRecord::check(
        EX,
        "kappa_consistency",
        Some(lam),
        kappa.value - rep.kappa_var,
        Some(kappa.stderr.hypot(rep.kappa_var_se)),
        1.96 * kappa.stderr.hypot(rep.kappa_var_se) + l4 * kappa.value.abs(),
    ));
    Ok((out, kappa))
}

/// Mean of `ℓ_T / T` over a few long OU paths.
fn slope_records(cfg: &Config, ex: &str) -> Result<Vec<ResultRecord>> {
    let l = &cfg.limits;
    let t = l.slope_t;
    let ell = ou_local_time_samples(t, l.dt(), l.epsilon, 0.0, 8, seed(cfg, tag::SLOPE))?;
    let slopes: Vec<f64> = ell.iter().map(|v| v / t).collect();
    let m = stats::mean(&slopes);
    Ok(vec![ResultRecord::check(
        ex,
        "local_time_slope_dev",
        None,
        m - LOCAL_TIME_SLOPE,
        Some(stats::std_err(&slopes)),
        0.05 * LOCAL_TIME_SLOPE,
    )])
}

/// Monte Carlo `E exp(-s_1)` against the closed form `exp(-1/G_1)`.
fn laplace_mc_record(cfg: &Config, ex: &str, conv: Convention) -> Result<ResultRecord> {
    let sampler = SubordinatorSampler::new(conv, cfg.limits.delta)?;
    let s = seed(cfg, tag::LAPLACE + conv as u64);
    let v: Vec<f64> = (0..cfg.limits.laplace_samples as u64)
        .into_par_iter()
        .map(|id| (-sampler.value_at(1.0, &mut stream(s, id, Purpose::Limit))).exp())
        .collect();
    let exact = (-conv.laplace_exponent(1.0)).exp();
    let se = stats::std_err(&v);
    Ok(ResultRecord::check(
        ex,
        &format!("laplace_mc_dev_{}", conv.name()),
        None,
        stats::mean(&v) - exact,
        Some(se),
        3.0 * se,
    ))
}

/// Local-time slope, subordinator Laplace transforms, Mittag-Leffler scaling,
/// and one limit path written as `limit_path.csv`.
pub fn limits_suite(cfg: &Config) -> Result<RunOutput> {
    const EX: &str = "limits";
    let mut records = slope_records(cfg, EX)?;
    for conv in [Convention::SelfConsistent, Convention::Paper] {
        records.push(laplace_mc_record(cfg, EX, conv)?);
    }

    // m_4 / 2 has the law of m_1 for the index-1/2 clock.
    let n = cfg.limits.laplace_samples as u64;
    let s = seed(cfg, tag::MITTAG_LEFFLER);
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream(s, id, Purpose::Limit);
            let m1 = mittag_leffler_path(0.5, &[1.0], 2e-3, &mut rng)?[0];
            let m4 = mittag_leffler_path(0.5, &[4.0], 2e-3, &mut rng)?[0];
            Ok((m1, 0.5 * m4))
        })
        .collect::<Result<_>>()?;
    let (m1, m4): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    records.push(ResultRecord::check(EX, "mittag_leffler_scaling_ks", None, ks(&m1, &m4)?, None, 0.02));
    let exact = stats::ks_vs_cdf(&SampleSet::new(m1), |x| mittag_leffler_half_cdf(1.0, x))?;
    records.push(ResultRecord::info(EX, "mittag_leffler_marginal_ks", None, exact, None));

    let e = &cfg.experiment;
    let kappa = e.kappa.unwrap_or(cfg.volterra.kappa);
    let path = LimitPath::simulate(e.t, 0.0, kappa, &cfg.limits.options(), seed(cfg, tag::PATHS), 0)?;
    let stride = ((path.t.len() - 1) / (e.grid - 1)).max(1);
    let mut table = CsvTable::new("limit_path.csv", &["t", "p", "ell", "b_ell"]);
    for k in (0..path.t.len()).step_by(stride) {
        table.push(&[path.t[k], path.p[k], path.ell[k], path.b_ell[k]]);
    }
    Ok(RunOutput {
        records,
        artifacts: vec![Artifact::Table(table)],
    })
}

fn density_grid(cfg: &Config, conv: Convention) -> QGrid {
    let v = &cfg.volterra;
    let mut grid = QGrid::default_for(KernelMode::OuKernel, v.kappa, v.t, conv);
    grid.n = v.n_q;
    if let Some(w) = v.half_width {
        grid.half_width = w;
    }
    grid
}

fn volterra_options(cfg: &Config) -> VolterraOptions {
    VolterraOptions {
        snapshots: cfg.volterra.snapshots,
        moment_tol: cfg.volterra.moment_tol,
    }
}

/// Density distances between the final snapshot and `sqrt(κ) B_{ℓ_t}` samples.
fn volterra_mc_records(cfg: &Config, ex: &str, conv: Convention) -> Result<(Vec<ResultRecord>, crate::volterra::DensitySolution)> {
    let v = &cfg.volterra;
    let sol = solve_density(v.kappa, v.t, v.n_t, density_grid(cfg, conv), conv, &volterra_options(cfg))?;
    let sampler = SubordinatorSampler::new(conv, cfg.limits.delta)?;
    let mc = time_changed_bm_samples(&sampler, v.t, v.kappa, v.mc_samples, seed(cfg, tag::VOLTERRA_MC));
    let d = density_vs_mc(&sol, sol.t.len() - 1, &mc)?;
    let name = conv.name();
    Ok((
        vec![
            ResultRecord::check(ex, &format!("density_mc_l1_{name}"), None, d.l1, None, 0.05),
            ResultRecord::info(ex, &format!("density_mc_ks_{name}"), None, d.ks, None),
        ],
        sol,
    ))
}

/// Solver invariants and the Monte Carlo match; writes `density.csv` and `density.json`.
pub fn volterra_suite(cfg: &Config) -> Result<RunOutput> {
    const EX: &str = "volterra";
    let conv = cfg.limits.convention;
    let (mc, sol) = volterra_mc_records(cfg, EX, conv)?;
    let n = sol.q.len();
    let mut mass = 0.0f64;
    let mut sym = 0.0f64;
    let mut min = f64::INFINITY;
    for (s, v) in sol.values.iter().enumerate() {
        mass = mass.max((sol.mass(s) - 1.0).abs());
        for j in 0..n / 2 {
            sym = sym.max((v[j] - v[n - 1 - j]).abs());
        }
        min = min.min(v.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let last = sol.t.len() - 1;
    let want = crate::volterra::second_moment(sol.mode, sol.kappa, sol.t[last], conv);
    let m2 = if want > 0.0 { sol.second_moment(last) / want - 1.0 } else { sol.second_moment(last) };
    let mut records = vec![
        ResultRecord::check(EX, "mass_error", None, mass, None, 1e-10),
        ResultRecord::check(EX, "symmetry_error", None, sym, None, 1e-12),
        ResultRecord::check(EX, "negative_part", None, min.min(0.0), None, 1e-6),
        ResultRecord::check(EX, "second_moment_rel_error", None, m2, None, cfg.volterra.moment_tol),
    ];
    records.extend(mc);
    let mut csv = Vec::new();
    sol.write_csv(&mut csv)?;
    let meta = serde_json::json!({
        "kappa": sol.kappa,
        "convention": conv.name(),
        "mode": sol.mode,
        "n_t": sol.n_t,
        "n_q": n,
        "dq": sol.dq(),
        "t": sol.t,
    });
    Ok(RunOutput {
        records,
        artifacts: vec![
            Artifact::File {
                name: "density.csv".into(),
                bytes: csv,
            },
            Artifact::File {
                name: "density.json".into(),
                bytes: (serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n").into_bytes(),
            },
        ],
    })
}

/// Least-squares slope of `y` against `x`.
fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Laplace identities, subordinator transforms, slopes and the density match
/// for one convention.
pub fn appendix_suite(cfg: &Config, conv: Convention) -> Result<Vec<ResultRecord>> {
    let ex = format!("appendix-{}", conv.name());
    let ex = ex.as_str();
    let mut out = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        let closed = conv.laplace_exponent(gamma);
        let quad = crate::limits::laplace_exponent_quadrature(gamma, conv);
        out.push(ResultRecord::check(ex, &format!("laplace_identity_gamma{gamma}"), None, quad - closed, None, 1e-6));
    }
    out.push(ResultRecord::info(ex, "laplace_transform_gamma1", None, (-conv.laplace_exponent(1.0)).exp(), None));
    out.push(laplace_mc_record(cfg, ex, conv)?);
    out.extend(slope_records(cfg, ex)?);

    // var(sqrt(κ) B_{ℓ_{st}}) / t grows like κ s (2π)^{-1/2}.
    let t0 = 50.0;
    let kappa = cfg.volterra.kappa;
    let sampler = SubordinatorSampler::new(conv, cfg.limits.delta.max(1e-3))?;
    let n = cfg.limits.laplace_samples / 2;
    let s_values = [1.0, 2.0, 4.0];
    let mut scaled_var = Vec::new();
    for (i, s) in s_values.iter().enumerate() {
        let b = time_changed_bm_samples(&sampler, s * t0, kappa, n, seed(cfg, tag::LONG_TIME + i as u64));
        scaled_var.push(stats::mean_var(&b).1 / t0);
    }
    let slope = ls_slope(&s_values, &scaled_var) / (kappa * LOCAL_TIME_SLOPE);
    out.push(ResultRecord::check(ex, "long_time_variance_slope_dev", None, slope - 1.0, None, 0.05));

    out.extend(volterra_mc_records(cfg, ex, conv)?.0);
    Ok(out)
}

/// Bounded path functionals on a uniform grid of `[0, T]`.
fn functionals(path: &[f64]) -> [f64; 4] {
    let n = path.len() as f64;
    let tanh_avg = path.iter().map(|x| x.tanh()).sum::<f64>() / n;
    let tanh2_avg = path.iter().map(|x| x.tanh().powi(2)).sum::<f64>() / n;
    let beta = 4.0;
    let soft_sup = (path.iter().map(|x| (beta * x.tanh()).exp()).sum::<f64>() / n).ln() / beta;
    [1.0, tanh_avg, tanh2_avg, soft_sup]
}

const FUNCTIONAL_NAMES: [&str; 4] = ["constant", "tanh_avg", "tanh2_avg", "soft_sup"];

/// Gaps between kinetic functionals and those of the perturbed and plain OU
/// paths. Exploratory: no record is checked.
pub fn conjecture_compare(cfg: &Config, rows: &[KineticRow], kappa: f64) -> Result<Vec<ResultRecord>> {
    const EX: &str = "conjecture";
    let e = &cfg.experiment;
    let lim = &cfg.limits;
    let dt = lim.dt();
    let steps = (e.t / dt).round() as usize;
    let stride = steps / (e.grid - 1);
    if stride == 0 || stride * (e.grid - 1) != steps {
        return Err(Error::ConfigInvalid(format!(
            "OU step {dt} does not divide the output grid of {} points on [0, {}]",
            e.grid, e.t
        )));
    }
    let s = seed(cfg, tag::CONJECTURE);
    let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    // Per path: plain OU functionals, then perturbed functionals per ladder entry.
    let per_path: Vec<Vec<[f64; 4]>> = (0..e.ensemble as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream(s, id, Purpose::Limit);
            let p = ou_path(e.t, dt, 0.0, &mut rng)?;
            let ell = local_time_mollified(&p, dt, lim.epsilon)?;
            let b = time_changed_bm(&ell, 1.0, &mut rng)?;
            let on_grid = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<f64>>();
            let mut f = vec![functionals(&on_grid(&p))];
            for &lam in &lambdas {
                let pert = perturbed_momentum(&p, &b, dt, lam, kappa)?;
                f.push(functionals(&on_grid(&pert)));
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    let column = |j: usize, which: usize| -> Vec<f64> { per_path.iter().map(|f| f[which][j]).collect() };
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let kin: Vec<[f64; 4]> = row.p_path.chunks(e.grid).map(functionals).collect();
        for (j, name) in FUNCTIONAL_NAMES.iter().enumerate() {
            let k: Vec<f64> = kin.iter().map(|f| f[j]).collect();
            let (mk, sk) = (stats::mean(&k), stats::std_err(&k));
            for (label, which) in [("perturbed", i + 1), ("ou", 0)] {
                let c = column(j, which);
                let gap = (mk - stats::mean(&c)).abs();
                let se = sk.hypot(stats::std_err(&c));
                out.push(ResultRecord::info(EX, &format!("gap_{label}_{name}"), Some(row.lambda), gap, Some(se)));
            }
        }
    }
    Ok(out)
}

/// Kinetic ensemble at `model.lambda`, written as `paths.csv`.
pub fn simulate(cfg: &Config) -> Result<RunOutput> {
    const EX: &str = "simulate";
    let e = &cfg.experiment;
    let lambda = cfg.model.lambda;
    if !(lambda > 0.0) {
        return Err(Error::ConfigInvalid("simulate needs model.lambda in (0, 1)".into()));
    }
    let model = Model::new(&cfg.model.params(lambda))?;
    let opts = cfg.model.sim_options();
    let initial = Initial::Point { x: 0.0, p: 0.0 };
    let horizon = e.t / lambda;
    let s = seed(cfg, tag::PATHS);
    let paths: Vec<TrajectorySample> = (0..e.ensemble as u64)
        .into_par_iter()
        .map(|id| simulate_trajectory(&model, &opts, horizon, &initial, e.grid, s, id))
        .collect::<Result<_>>()?;
    let mut table = CsvTable::new(
        "paths.csv",
        &[
            "traj_id", "t", "P", "D", "L", "Q", "scaled_t", "scaled_P", "scaled_D", "scaled_L", "scaled_Q",
        ],
    );
    let mut identity = 0.0f64;
    let mut max_d = 0.0f64;
    let mut events = 0u64;
    for tr in &paths {
        let r = rescale(tr, lambda, e.t)?;
        for k in 0..tr.grid.len() {
            let p0 = tr.initial.p;
            identity = identity.max((tr.p[k] - (p0 - tr.d[k] + tr.j[k])).abs() / (1.0 + tr.p[k].abs()));
            max_d = max_d.max(tr.d[k].abs());
            if k < r.t.len() {
                table.push(&[
                    tr.traj_id as f64,
                    tr.grid[k],
                    tr.p[k],
                    tr.d[k],
                    tr.l[k],
                    tr.q[k],
                    r.t[k],
                    r.scaled_p[k],
                    r.scaled_d[k],
                    r.scaled_l[k],
                    r.scaled_q[k],
                ]);
            }
        }
        events += tr.n_events;
    }
    let lam = Some(lambda);
    let n = paths.len() as f64;
    Ok(RunOutput {
        records: vec![
            ResultRecord::info(EX, "trajectories", lam, n, None),
            ResultRecord::info(EX, "mean_events", lam, events as f64 / n, None),
            ResultRecord::info(EX, "max_abs_d", lam, max_d, None),
            ResultRecord::check(EX, "momentum_identity", lam, identity, None, 1e-8),
        ],
        artifacts: vec![Artifact::Table(table)],
    })
}
