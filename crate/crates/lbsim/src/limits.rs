//! Limit-side processes: Ornstein-Uhlenbeck momentum, its local time at zero,
//! the inverse-local-time subordinator, Brownian motion on the local-time clock
//! and the Mittag-Leffler comparison clock.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};
use crate::rng::{self, Purpose};

/// Variance clock of the OU process started at zero.
///
/// `SelfConsistent` uses `1 - exp(-t)`, the variance of `dp = -p/2 dt + dB`.
/// `Paper` uses the printed `1 - exp(-t/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Paper,
    #[default]
    SelfConsistent,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::Paper => "paper",
            Convention::SelfConsistent => "self-consistent",
        }
    }

    /// Time constant `c` in `omega(t) = 1 - exp(-t/c)`.
    pub fn time_constant(self) -> f64 {
        match self {
            Convention::Paper => 2.0,
            Convention::SelfConsistent => 1.0,
        }
    }

    pub fn omega(self, t: f64) -> f64 {
        -(-t / self.time_constant()).exp_m1()
    }

    /// Laplace-transformed transition density at the origin, `G_gamma(0, 0)`.
    pub fn green_at_origin(self, gamma: f64) -> f64 {
        let c = self.time_constant();
        c * ln_beta(c * gamma, 0.5).exp() / (2.0 * PI).sqrt()
    }

    /// Closed-form Laplace exponent `1 / G_gamma(0, 0)` of the subordinator.
    pub fn laplace_exponent(self, gamma: f64) -> f64 {
        1.0 / self.green_at_origin(gamma)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Excursion-length density of the subordinator.
pub fn levy_density(tau: f64, convention: Convention) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let c = convention.time_constant();
    let om = -(-tau / c).exp_m1();
    (-tau / (2.0 * c)).exp() * om.powf(-1.5) / ((2.0 * PI).sqrt() * c * c)
}

/// `int (1 - exp(-gamma tau)) R(tau) dtau` by adaptive quadrature after `tau = x^2`.
pub fn laplace_exponent_quadrature(gamma: f64, convention: Convention) -> f64 {
    let x_max = (80.0 * convention.time_constant()).sqrt();
    let f = |x: f64| {
        if x == 0.0 {
            return 0.0;
        }
        let tau = x * x;
        -(-gamma * tau).exp_m1() * levy_density(tau, convention) * 2.0 * x
    };
    let pts: Vec<f64> = (0..=16).map(|i| x_max * i as f64 / 16.0).collect();
    quad::adaptive_pieces(f, &pts, 1e-13)
}

/// One exact OU step `p -> exp(-dt/2) p + sqrt(1 - exp(-dt)) xi`.
#[inline]
pub fn ou_step(p: f64, dt: f64, xi: f64) -> f64 {
    (-0.5 * dt).exp() * p + (-(-dt).exp_m1()).sqrt() * xi
}

/// OU path on `round(t / dt) + 1` grid points.
pub fn ou_path<R: Rng + ?Sized>(t: f64, dt: f64, p0: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("OU path needs dt > 0 and t >= 0 (dt {dt}, t {t})")));
    }
    let n = (t / dt).round() as usize;
    let decay = (-0.5 * dt).exp();
    let sd = (-(-dt).exp_m1()).sqrt();
    let mut p = Vec::with_capacity(n + 1);
    let mut cur = p0;
    p.push(cur);
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        cur = decay * cur + sd * xi;
        p.push(cur);
    }
    Ok(p)
}

#[inline]
fn mollifier(p: f64, epsilon: f64) -> f64 {
    (-p.abs() / epsilon).exp() / (2.0 * epsilon)
}

fn check_step(dt: f64, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("mollifier width must be positive, got {epsilon}")));
    }
    if dt > 0.25 * epsilon * epsilon {
        return Err(Error::StepTooCoarse { dt, epsilon });
    }
    Ok(())
}

/// Cumulative trapezoidal integral of `exp(-|p|/eps) / (2 eps)` along a path.
pub fn local_time_mollified(p: &[f64], dt: f64, epsilon: f64) -> Result<Vec<f64>> {
    check_step(dt, epsilon)?;
    let mut ell = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    let mut prev = p.first().map(|&x| mollifier(x, epsilon)).unwrap_or(0.0);
    ell.push(0.0);
    for &x in p.iter().skip(1) {
        let f = mollifier(x, epsilon);
        acc += 0.5 * dt * (prev + f);
        prev = f;
        ell.push(acc);
    }
    Ok(ell)
}

/// Terminal mollified local time of an OU path, without storing the path.
pub fn ou_local_time<R: Rng + ?Sized>(t: f64, dt: f64, epsilon: f64, p0: f64, rng: &mut R) -> Result<f64> {
    check_step(dt, epsilon)?;
    let n = (t / dt).round() as usize;
    let decay = (-0.5 * dt).exp();
    let sd = (-(-dt).exp_m1()).sqrt();
    let mut cur = p0;
    let mut prev = mollifier(cur, epsilon);
    let mut acc = 0.0;
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        cur = decay * cur + sd * xi;
        let f = mollifier(cur, epsilon);
        acc += 0.5 * dt * (prev + f);
        prev = f;
    }
    Ok(acc)
}

/// Mollified local times at `t` for `n` OU paths started at `p0`.
pub fn ou_local_time_samples(t: f64, dt: f64, epsilon: f64, p0: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n as u64)
        .into_par_iter()
        .map(|id| ou_local_time(t, dt, epsilon, p0, &mut rng::stream(seed, id, Purpose::Limit)))
        .collect()
}

/// Quadratic-variation and terminal value of the Tanaka-Meyer martingale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanakaReport {
    pub qv_per_time: f64,
    pub terminal: f64,
}

/// Rebuilds `|p_t| - |p_0| - ell_t + 1/2 int |p|` and measures its quadratic variation.
pub fn tanaka_check(p: &[f64], ell: &[f64], dt: f64) -> Result<TanakaReport> {
    if p.len() != ell.len() || p.len() < 2 {
        return Err(Error::InvalidParameter("path and local time must share a grid of at least two points".into()));
    }
    let mut drift = 0.0;
    let mut prev = 0.0;
    let mut qv = 0.0;
    for k in 1..p.len() {
        drift += 0.25 * dt * (p[k - 1].abs() + p[k].abs());
        let b = p[k].abs() - p[0].abs() - ell[k] + drift;
        qv += (b - prev) * (b - prev);
        prev = b;
    }
    let horizon = dt * (p.len() - 1) as f64;
    Ok(TanakaReport {
        qv_per_time: qv / horizon,
        terminal: prev,
    })
}

/// Fritsch-Carlson monotone cubic interpolant.
#[derive(Debug, Clone)]
struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / d[i];
            let b = m[i + 1] / d[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[i] = t * a * d[i];
                m[i + 1] = t * b * d[i];
            }
        }
        Self { x, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = ((x - self.x[i]) / h).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * h * self.m[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * h * self.m[i + 1]
    }
}

const JUMP_TABLE_CELLS: usize = 4000;

/// Compound-Poisson approximation of the subordinator: jumps above `delta`
/// drawn by inverse CDF, smaller jumps replaced by their mean drift.
#[derive(Debug, Clone)]
pub struct SubordinatorSampler {
    convention: Convention,
    delta: f64,
    drift: f64,
    jump_rate: f64,
    inverse: MonotoneCubic,
}

impl SubordinatorSampler {
    pub fn new(convention: Convention, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("jump cutoff must be positive, got {delta}")));
        }
        let c = convention.time_constant();
        // Beyond this the jump mass is below exp(-40) relative.
        let tau_max = 80.0 * c;
        if delta >= tau_max {
            return Err(Error::InvalidParameter(format!("jump cutoff {delta} is too large")));
        }
        let gl = GaussLegendre::new(16);
        let (x0, x1) = (delta.ln(), tau_max.ln());
        let h = (x1 - x0) / JUMP_TABLE_CELLS as f64;
        let xs: Vec<f64> = (0..=JUMP_TABLE_CELLS).map(|i| x0 + h * i as f64).collect();
        let mut cdf = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in xs.windows(2) {
            acc += gl.integrate(w[0], w[1], |x| {
                let tau = x.exp();
                levy_density(tau, convention) * tau
            });
            cdf.push(acc);
        }
        // Small-jump mean: int_0^delta tau R(tau) dtau, with tau = x^2.
        let r = delta.sqrt();
        let drift = quad::adaptive(
            |x: f64| {
                let tau = (x * x).max(f64::MIN_POSITIVE);
                tau * levy_density(tau, convention) * 2.0 * x
            },
            0.0,
            r,
            1e-14,
        )
        .0;
        Ok(Self {
            convention,
            delta,
            drift,
            jump_rate: acc,
            inverse: MonotoneCubic::new(cdf, xs),
        })
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Deterministic slope compensating the truncated small jumps.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Total rate of jumps above the cutoff.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    /// Laplace exponent of the truncated process, by quadrature.
    pub fn truncated_exponent(&self, gamma: f64) -> f64 {
        let x_max = (80.0 * self.convention.time_constant()).sqrt();
        let lo = self.delta.sqrt();
        let pts: Vec<f64> = (0..=16).map(|i| lo + (x_max - lo) * i as f64 / 16.0).collect();
        let jumps = quad::adaptive_pieces(
            |x: f64| {
                let tau = x * x;
                -(-gamma * tau).exp_m1() * levy_density(tau, self.convention) * 2.0 * x
            },
            &pts,
            1e-13,
        );
        gamma * self.drift + jumps
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.jump_rate;
        self.inverse.eval(u).exp().max(self.delta)
    }

    /// Subordinator path over local time `[0, horizon]`.
    pub fn path<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> SubordinatorPath {
        let mut jump_times = Vec::new();
        let mut jump_sizes = Vec::new();
        let mut r = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            r += e / self.jump_rate;
            if r > horizon {
                break;
            }
            jump_times.push(r);
            jump_sizes.push(self.sample_jump(rng));
        }
        SubordinatorPath::new(self.drift, horizon, jump_times, jump_sizes)
    }

    /// Exact sample of `s_r` at a fixed local time `r`.
    pub fn value_at<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        let mut t = 0.0;
        let mut s = self.drift * r;
        loop {
            let e: f64 = rng.sample(Exp1);
            t += e / self.jump_rate;
            if t > r {
                return s;
            }
            s += self.sample_jump(rng);
        }
    }

    /// Exact sample of the inverse `inf{r : s_r > t}` without storing the path.
    pub fn first_passage<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let mut r = 0.0;
        let mut s = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            let gap = e / self.jump_rate;
            if s + self.drift * gap > t {
                return r + (t - s) / self.drift;
            }
            r += gap;
            s += self.drift * gap + self.sample_jump(rng);
            if s > t {
                return r;
            }
        }
    }

    /// Local times at `t` for `n` independent paths.
    pub fn first_passage_samples(&self, t: f64, n: usize, seed: u64) -> Vec<f64> {
        (0..n as u64)
            .into_par_iter()
            .map(|id| self.first_passage(t, &mut rng::stream(seed, id, Purpose::Limit)))
            .collect()
    }
}

/// Drift plus finitely many jumps, on local time `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorPath {
    pub drift: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SubordinatorPath {
    pub fn new(drift: f64, horizon: f64, jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = jump_sizes
            .iter()
            .map(|j| {
                acc += j;
                acc
            })
            .collect();
        Self {
            drift,
            horizon,
            jump_times,
            jump_sizes,
            cumulative,
        }
    }

    fn jumps_through(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Right-continuous value `s_r`.
    pub fn value(&self, r: f64) -> f64 {
        let k = self.jump_times.partition_point(|&v| v <= r);
        self.drift * r + self.jumps_through(k)
    }

    /// Left limit `s_{r-}`.
    pub fn value_left(&self, r: f64) -> f64 {
        let k = self.jump_times.partition_point(|&v| v < r);
        self.drift * r + self.jumps_through(k)
    }

    pub fn terminal(&self) -> f64 {
        self.value(self.horizon)
    }

    /// `inf{r : s_r > t}`, or `None` if the path never exceeds `t`.
    pub fn inverse(&self, t: f64) -> Option<f64> {
        if t < 0.0 {
            return Some(0.0);
        }
        if self.terminal() <= t {
            return None;
        }
        let mut start = 0.0;
        let mut base = 0.0;
        for (k, &next) in self.jump_times.iter().enumerate() {
            if base > t {
                return Some(start);
            }
            if self.drift > 0.0 {
                let hit = start + (t - base) / self.drift;
                if hit < next {
                    return Some(hit);
                }
            }
            start = next;
            base = self.drift * next + self.cumulative[k];
        }
        if base > t {
            return Some(start);
        }
        Some(start + (t - base) / self.drift)
    }
}

pub fn subordinator_path<R: Rng + ?Sized>(
    horizon: f64,
    delta: f64,
    convention: Convention,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    Ok(SubordinatorSampler::new(convention, delta)?.path(horizon, rng))
}

/// Local-time path `ell_t = inf{r : s_r > t}` on the given grid.
pub fn inverse_subordinator(path: &SubordinatorPath, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&t| {
            path.inverse(t).ok_or(Error::PathTooShort {
                reached: path.terminal(),
                target: t,
            })
        })
        .collect()
}

/// Brownian motion run on the clock `ell`: increments `N(0, kappa * d ell)`.
pub fn time_changed_bm<R: Rng + ?Sized>(ell: &[f64], kappa: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("diffusion constant must be nonnegative, got {kappa}")));
    }
    let mut out = Vec::with_capacity(ell.len());
    let mut b = 0.0;
    let mut prev = ell.first().copied().unwrap_or(0.0);
    out.push(0.0);
    for &l in ell.iter().skip(1) {
        let dl = (l - prev).max(0.0);
        prev = l;
        if dl > 0.0 && kappa > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            b += (kappa * dl).sqrt() * z;
        }
        out.push(b);
    }
    Ok(out)
}

/// `p_t + sqrt(kappa) lambda^{1/4} (b_t - 1/2 int_0^t exp(-(t-r)/2) b_r dr)`
/// with `b` the unit-rate time-changed path.
pub fn perturbed_momentum(p: &[f64], b: &[f64], dt: f64, lambda: f64, kappa: f64) -> Result<Vec<f64>> {
    if p.len() != b.len() {
        return Err(Error::InvalidParameter("momentum and clock paths must share a grid".into()));
    }
    if !(lambda >= 0.0) || !(kappa >= 0.0) {
        return Err(Error::InvalidParameter("lambda and kappa must be nonnegative".into()));
    }
    let scale = kappa.sqrt() * lambda.powf(0.25);
    let decay = (-0.5 * dt).exp();
    let mut conv = 0.0;
    let mut out = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        if k > 0 {
            conv = decay * conv + 0.5 * dt * (decay * b[k - 1] + b[k]);
        }
        out.push(p[k] + scale * (b[k] - 0.5 * conv));
    }
    Ok(out)
}

/// One-sided stable variable with `E exp(-g S) = exp(-g^alpha)` (Kanter's representation).
pub fn stable_subordinator_sample<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * (1.0 - rng.random::<f64>());
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Inverse of an `alpha`-stable subordinator, read on `grid`.
///
/// The subordinator is built from increments over local-time steps `r_step`;
/// crossings inside a step are located by linear interpolation.
pub fn mittag_leffler_path<R: Rng + ?Sized>(alpha: f64, grid: &[f64], r_step: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("stable index must lie in (0, 1), got {alpha}")));
    }
    if !(r_step > 0.0) {
        return Err(Error::InvalidParameter(format!("local-time step must be positive, got {r_step}")));
    }
    let scale = r_step.powf(1.0 / alpha);
    let mut out = Vec::with_capacity(grid.len());
    let (mut r, mut sigma) = (0.0, 0.0);
    let mut next = scale * stable_subordinator_sample(alpha, rng);
    for &t in grid {
        while next <= t {
            r += r_step;
            sigma = next;
            next = sigma + scale * stable_subordinator_sample(alpha, rng);
        }
        out.push(r + r_step * ((t - sigma) / (next - sigma)).max(0.0));
    }
    Ok(out)
}

/// Exact marginal of the index-1/2 clock: `sqrt(2 t) |N|`, the running maximum of `sqrt 2 W`.
pub fn mittag_leffler_half_marginal<R: Rng + ?Sized>(t: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (2.0 * t).sqrt() * z.abs()
}

/// CDF of the index-1/2 clock at time `t`.
pub fn mittag_leffler_half_cdf(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    2.0 * crate::model::normal_cdf(x / (2.0 * t).sqrt()) - 1.0
}

/// OU momentum with its local time, subordinator and time-changed Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPath {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub ell: Vec<f64>,
    pub s_path: Option<SubordinatorPath>,
    pub b_ell: Vec<f64>,
    pub kappa: f64,
    pub epsilon: f64,
    pub convention: Convention,
}

/// Settings for [`LimitPath::simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub dt: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub convention: Convention,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            epsilon: 0.05,
            delta: 1e-4,
            convention: Convention::SelfConsistent,
        }
    }
}

impl LimitPath {
    /// OU path from `p0` with mollified local time and `sqrt(kappa) B` on that clock.
    pub fn simulate(horizon: f64, p0: f64, kappa: f64, opts: &LimitOptions, seed: u64, id: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, id, Purpose::Limit);
        let p = ou_path(horizon, opts.dt, p0, &mut rng)?;
        let ell = local_time_mollified(&p, opts.dt, opts.epsilon)?;
        let b_ell = time_changed_bm(&ell, kappa, &mut rng)?;
        let t = (0..p.len()).map(|k| k as f64 * opts.dt).collect();
        Ok(Self {
            t,
            p,
            ell,
            s_path: None,
            b_ell,
            kappa,
            epsilon: opts.epsilon,
            convention: opts.convention,
        })
    }

    /// Clock from an inverted subordinator instead of the mollified OU local time.
    pub fn from_subordinator(grid: Vec<f64>, kappa: f64, opts: &LimitOptions, seed: u64, id: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, id, Purpose::Limit);
        let sampler = SubordinatorSampler::new(opts.convention, opts.delta)?;
        let t_max = grid.last().copied().unwrap_or(0.0);
        let mut horizon = 1.0 + t_max.sqrt();
        let path = loop {
            let path = sampler.path(horizon, &mut rng);
            if path.terminal() > t_max {
                break path;
            }
            horizon *= 2.0;
        };
        let ell = inverse_subordinator(&path, &grid)?;
        let b_ell = time_changed_bm(&ell, kappa, &mut rng)?;
        Ok(Self {
            p: vec![f64::NAN; grid.len()],
            t: grid,
            ell,
            s_path: Some(path),
            b_ell,
            kappa,
            epsilon: opts.epsilon,
            convention: opts.convention,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# convention={} kappa={} epsilon={}",
            self.convention.name(),
            self.kappa,
            self.epsilon
        )?;
        writeln!(w, "t,p,ell,b_ell")?;
        for k in 0..self.t.len() {
            writeln!(w, "{},{},{},{}", self.t[k], self.p[k], self.ell[k], self.b_ell[k])?;
        }
        Ok(())
    }
}

/// Samples of `sqrt(kappa) B_{ell_t}` with `ell_t` drawn exactly through the subordinator.
pub fn time_changed_bm_samples(sampler: &SubordinatorSampler, t: f64, kappa: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = rng::stream(seed, id, Purpose::Limit);
            let ell = sampler.first_passage(t, &mut rng);
            let z: f64 = rng.sample(StandardNormal);
            (kappa * ell).sqrt() * z
        })
        .collect()
}
