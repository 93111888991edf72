//! Density of the time-changed Brownian motion from its Volterra master
//! equation, solved mode by mode in Fourier space by product integration.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::limits::Convention;
use crate::stats::{self, SampleSet};

/// Memory kernel of the master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelMode {
    /// `omega(u)^{-1/2}` with coefficient `kappa / (2 sqrt(2 pi))`.
    OuKernel,
    /// `u^{alpha - 1} / Gamma(alpha)` with coefficient `kappa / 2`.
    Fractional { alpha: f64 },
}

/// `int_a^b omega(u)^{-1/2} du`, via `y = sqrt(omega(u))`.
pub fn ou_kernel_moment(a: f64, b: f64, convention: Convention) -> f64 {
    let c = convention.time_constant();
    let y = |u: f64| convention.omega(u).sqrt();
    (b - a) + 2.0 * c * ((1.0 + y(b)) / (1.0 + y(a))).ln()
}

/// `int_a^b u^{alpha - 1} / Gamma(alpha) du`.
pub fn fractional_kernel_moment(a: f64, b: f64, alpha: f64) -> f64 {
    (b.powf(alpha) - a.powf(alpha)) / gamma(alpha + 1.0)
}

impl KernelMode {
    fn coefficient(self, kappa: f64) -> f64 {
        match self {
            KernelMode::OuKernel => kappa / (2.0 * (2.0 * PI).sqrt()),
            KernelMode::Fractional { .. } => 0.5 * kappa,
        }
    }

    fn moment(self, a: f64, b: f64, convention: Convention) -> f64 {
        match self {
            KernelMode::OuKernel => ou_kernel_moment(a, b, convention),
            KernelMode::Fractional { alpha } => fractional_kernel_moment(a, b, alpha),
        }
    }
}

/// `int q^2 rho_t(q) dq` implied by the equation.
pub fn second_moment(mode: KernelMode, kappa: f64, t: f64, convention: Convention) -> f64 {
    2.0 * mode.coefficient(kappa) * mode.moment(0.0, t, convention)
}

/// Product-integration weights `w_i = int_{(i-1)h}^{ih} K`, `i = 1..=n`.
fn weights(mode: KernelMode, h: f64, n: usize, convention: Convention) -> Vec<f64> {
    (1..=n)
        .map(|i| mode.moment((i - 1) as f64 * h, i as f64 * h, convention))
        .collect()
}

fn solve_mode(w: &[f64], a: f64) -> Vec<f64> {
    // Implicit rectangle rule: f_n (1 + a w_1) = 1 - a sum_{j<n-1} f_{j+1} w_{n-j}.
    let n = w.len();
    let mut f = Vec::with_capacity(n + 1);
    f.push(1.0);
    for step in 1..=n {
        let mut acc = 0.0;
        for j in 0..step - 1 {
            acc += f[j + 1] * w[step - j - 1];
        }
        f.push((1.0 - a * acc) / (1.0 + a * w[0]));
    }
    f
}

/// Fourier transform `E exp(i k B)` of the solution on `n_t` uniform steps to `t_end`.
pub fn fourier_mode(k: f64, mode: KernelMode, kappa: f64, t_end: f64, n_t: usize, convention: Convention) -> Vec<f64> {
    let w = weights(mode, t_end / n_t as f64, n_t, convention);
    solve_mode(&w, mode.coefficient(kappa) * k * k)
}

/// Symmetric midpoint grid `q_j = (j + 1/2 - n/2) dq` on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QGrid {
    pub n: usize,
    pub half_width: f64,
}

impl QGrid {
    /// Default grid: 1024 points over eight analytic standard deviations at `t_end`.
    pub fn default_for(mode: KernelMode, kappa: f64, t_end: f64, convention: Convention) -> Self {
        let m2 = second_moment(mode, kappa.max(1e-300), t_end, convention);
        Self {
            n: 1024,
            half_width: 8.0 * m2.sqrt(),
        }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dq = self.step();
        (0..self.n).map(|j| (j as f64 + 0.5 - 0.5 * self.n as f64) * dq).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 8 || self.n % 2 != 0 || !(self.half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "q grid needs an even point count >= 8 and positive width, got {self:?}"
            )));
        }
        Ok(())
    }
}


/// Density snapshots on a q grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySolution {
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub kappa: f64,
    pub convention: Convention,
    pub mode: KernelMode,
    pub n_t: usize,
}

/// Solver settings beyond the physical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolterraOptions {
    /// Number of stored snapshots (the final time is always included).
    pub snapshots: usize,
    /// Relative tolerance on the second-moment check.
    pub moment_tol: f64,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        Self {
            snapshots: 11,
            moment_tol: 1e-4,
        }
    }
}

pub fn solve_density(
    kappa: f64,
    t_end: f64,
    n_t: usize,
    grid: QGrid,
    convention: Convention,
    opts: &VolterraOptions,
) -> Result<DensitySolution> {
    solve(KernelMode::OuKernel, kappa, t_end, n_t, grid, convention, opts)
}

pub fn solve_fractional(
    alpha: f64,
    kappa: f64,
    t_end: f64,
    n_t: usize,
    grid: QGrid,
    opts: &VolterraOptions,
) -> Result<DensitySolution> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("fractional order must lie in (0, 1), got {alpha}")));
    }
    solve(
        KernelMode::Fractional { alpha },
        kappa,
        t_end,
        n_t,
        grid,
        Convention::SelfConsistent,
        opts,
    )
}

fn solve(
    mode: KernelMode,
    kappa: f64,
    t_end: f64,
    n_t: usize,
    grid: QGrid,
    convention: Convention,
    opts: &VolterraOptions,
) -> Result<DensitySolution> {
    if n_t < 64 {
        return Err(Error::InvalidParameter(format!("need at least 64 time steps, got {n_t}")));
    }
    if !(kappa >= 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("need kappa >= 0 and t > 0 (kappa {kappa}, t {t_end})")));
    }
    grid.validate()?;
    let snaps = opts.snapshots.clamp(1, n_t);
    let steps: Vec<usize> = (1..=snaps).map(|i| (i * n_t).div_ceil(snaps)).collect();
    let h = t_end / n_t as f64;
    let w = weights(mode, h, n_t, convention);
    let coef = mode.coefficient(kappa);
    let dq = grid.step();
    let dk = 2.0 * PI / (grid.n as f64 * dq);
    let n_modes = grid.n / 2;
    // Row m holds mode k_m = m dk at the snapshot steps.
    let modes: Vec<Vec<f64>> = (0..n_modes)
        .into_par_iter()
        .map(|m| {
            let k = m as f64 * dk;
            let f = solve_mode(&w, coef * k * k);
            steps.iter().map(|&s| f[s]).collect()
        })
        .collect();
    let q = grid.points();
    let values: Vec<Vec<f64>> = (0..steps.len())
        .map(|s| {
            q.iter()
                .map(|&x| {
                    // Lanczos factors damp the ringing from the cusp at q = 0, so values are
                    // two-cell averages. The Nyquist mode vanishes on the midpoint grid.
                    let mut acc = modes[0][s];
                    for (m, row) in modes.iter().enumerate().skip(1) {
                        let z = 2.0 * PI * m as f64 / grid.n as f64;
                        acc += 2.0 * row[s] * (z.sin() / z) * (m as f64 * dk * x).cos();
                    }
                    acc * dk / (2.0 * PI)
                })
                .collect()
        })
        .collect();
    let sol = DensitySolution {
        q,
        t: steps.iter().map(|&s| s as f64 * h).collect(),
        values,
        kappa,
        convention,
        mode,
        n_t,
    };
    if kappa > 0.0 {
        let got = sol.second_moment(sol.t.len() - 1);
        let want = second_moment(mode, kappa, t_end, convention);
        if (got - want).abs() > opts.moment_tol * want {
            return Err(Error::GridTooCoarse { got, want });
        }
    }
    Ok(sol)
}

impl DensitySolution {
    pub fn dq(&self) -> f64 {
        self.q[1] - self.q[0]
    }

    pub fn mass(&self, snapshot: usize) -> f64 {
        self.values[snapshot].iter().sum::<f64>() * self.dq()
    }

    pub fn second_moment(&self, snapshot: usize) -> f64 {
        self.values[snapshot]
            .iter()
            .zip(&self.q)
            .map(|(r, q)| r * q * q)
            .sum::<f64>()
            * self.dq()
    }

    /// Cell-integrated CDF at the right edges of the q cells.
    pub fn cdf(&self, snapshot: usize) -> Vec<f64> {
        let dq = self.dq();
        let mut acc = 0.0;
        self.values[snapshot]
            .iter()
            .map(|r| {
                acc += r * dq;
                acc
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# convention={} kappa={} n_t={}", self.convention.name(), self.kappa, self.n_t)?;
        writeln!(w, "q,t,value")?;
        for (s, t) in self.t.iter().enumerate() {
            for (q, v) in self.q.iter().zip(&self.values[s]) {
                writeln!(w, "{q},{t},{v}")?;
            }
        }
        Ok(())
    }
}

/// Histogram and CDF distances between a snapshot and Monte Carlo samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityDistance {
    pub l1: f64,
    pub ks: f64,
    pub bins: usize,
}

/// Compares a snapshot with samples, merging q cells into about `sqrt(n) / 4` bins.
pub fn density_vs_mc(sol: &DensitySolution, snapshot: usize, samples: &[f64]) -> Result<DensityDistance> {
    if samples.len() < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "density comparison needs at least 10^4 samples, got {}",
            samples.len()
        )));
    }
    let n_q = sol.q.len();
    let target = ((samples.len() as f64).sqrt() / 4.0).floor() as usize;
    let group = n_q.div_ceil(target.clamp(1, n_q));
    let bins = n_q.div_ceil(group);
    let dq = sol.dq();
    let left = sol.q[0] - 0.5 * dq;
    let mut counts = vec![0.0; bins];
    for &x in samples {
        let cell = ((x - left) / dq).floor();
        if cell >= 0.0 && (cell as usize) < n_q {
            counts[cell as usize / group] += 1.0;
        }
    }
    let n = samples.len() as f64;
    let mut l1 = 0.0;
    let mut inside = 0.0;
    for (b, count) in counts.iter().enumerate() {
        let lo = b * group;
        let hi = ((b + 1) * group).min(n_q);
        let mass: f64 = sol.values[snapshot][lo..hi].iter().sum::<f64>() * dq;
        l1 += (mass - count / n).abs();
        inside += mass;
    }
    // Mass outside the grid on either side.
    let outside_mc = 1.0 - counts.iter().sum::<f64>() / n;
    l1 += (outside_mc - (1.0 - inside)).abs();

    let cdf = sol.cdf(snapshot);
    let edges: Vec<f64> = sol.q.iter().map(|q| q + 0.5 * dq).collect();
    let set = SampleSet::new(samples.to_vec());
    let ks = stats::ks_vs_cdf(&set, |x| {
        if x < left {
            return 0.0;
        }
        let j = edges.partition_point(|&e| e <= x);
        if j >= n_q {
            return 1.0;
        }
        let below = if j == 0 { 0.0 } else { cdf[j - 1] };
        let frac = (x - (edges[j] - dq)) / dq;
        below + frac * (cdf[j] - below)
    })?;
    Ok(DensityDistance { l1, ks, bins })
}

/// Draws samples from a snapshot by inverting its piecewise-linear CDF.
pub fn sample_from_solution(sol: &DensitySolution, snapshot: usize, uniforms: &[f64]) -> Vec<f64> {
    let cdf: Vec<f64> = sol.cdf(snapshot).iter().map(|c| c.clamp(0.0, 1.0)).collect();
    let dq = sol.dq();
    let left = sol.q[0] - 0.5 * dq;
    uniforms
        .iter()
        .map(|&u| {
            let j = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            let below = if j == 0 { 0.0 } else { cdf[j - 1] };
            let width = cdf[j] - below;
            let frac = if width > 0.0 { (u - below) / width } else { 0.5 };
            left + (j as f64 + frac.clamp(0.0, 1.0)) * dq
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_are_additive() {
        for conv in [Convention::Paper, Convention::SelfConsistent] {
            let whole = ou_kernel_moment(0.0, 2.0, conv);
            let parts = ou_kernel_moment(0.0, 0.7, conv) + ou_kernel_moment(0.7, 2.0, conv);
            assert!((whole - parts).abs() < 1e-14);
        }
        assert!((fractional_kernel_moment(0.0, 1.0, 0.5) - 1.0 / gamma(1.5)).abs() < 1e-14);
    }

    #[test]
    fn zero_mode_is_one() {
        let f = fourier_mode(0.0, KernelMode::OuKernel, 1.0, 1.0, 100, Convention::SelfConsistent);
        assert!(f.iter().all(|&v| v == 1.0));
    }
}
