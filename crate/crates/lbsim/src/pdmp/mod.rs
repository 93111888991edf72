//! Piecewise-deterministic collision process: flow, thinned collision clock,
//! path observables and ensembles.

pub mod flow;
mod sim;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use flow::{flow_segment, symplectic_step, Orbit};
pub use sim::{CollisionEvent, SimOptions, Simulator, Snapshot};

use crate::error::{Error, Result};
use crate::model::{Model, PhasePoint};
use crate::rng::{self, Purpose, SimRng};
use crate::stats;

/// Initial law of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Initial {
    Point { x: f64, p: f64 },
    /// Density proportional to `exp(-beta H)`.
    Maxwellian { beta: f64 },
}

impl Default for Initial {
    fn default() -> Self {
        Initial::Point { x: 0.0, p: 0.0 }
    }
}

impl Initial {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Initial::Point { x, p } if x.is_finite() && p.is_finite() => Ok(()),
            Initial::Maxwellian { beta } if beta > 0.0 && beta.is_finite() => Ok(()),
            _ => Err(Error::InvalidParameter(format!("bad initial condition {self:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, model: &Model, rng: &mut R) -> PhasePoint {
        match *self {
            Initial::Point { x, p } => PhasePoint::new(x, p),
            Initial::Maxwellian { beta } => {
                let x = loop {
                    let x: f64 = rng.random();
                    let u: f64 = rng.random();
                    if u < (-beta * model.potential().value(x)).exp() {
                        break x;
                    }
                };
                let z: f64 = rng.sample(StandardNormal);
                PhasePoint::new(x, z / beta.sqrt())
            }
        }
    }
}

/// First collision from `s`: its delay and the pre-collision point.
pub fn next_collision(
    model: &Model,
    opts: &SimOptions,
    s: PhasePoint,
    rng: SimRng,
) -> Result<(f64, PhasePoint)> {
    let mut sim = Simulator::new(model, opts, s, rng);
    match sim.advance(f64::INFINITY)? {
        Some(ev) => Ok((ev.time, PhasePoint::new(ev.x, ev.p_before))),
        None => Err(Error::InvalidParameter("collisions are disabled".into())),
    }
}

/// One simulated path, sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub traj_id: u64,
    pub initial: PhasePoint,
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub d: Vec<f64>,
    pub j: Vec<f64>,
    pub l: Vec<f64>,
    /// Empty unless kernel integrals were requested.
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub v1: Vec<f64>,
    pub energy_max: Vec<f64>,
    pub events: Vec<CollisionEvent>,
    pub n_events: u64,
}

impl TrajectorySample {
    pub fn last(&self) -> usize {
        self.grid.len() - 1
    }

    pub(crate) fn empty(traj_id: u64, initial: PhasePoint, horizon: f64, grid: Vec<f64>, with_acc: bool) -> Self {
        let n = grid.len();
        let cap = if with_acc { n } else { 0 };
        Self {
            traj_id,
            initial,
            horizon,
            grid,
            p: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            j: Vec::with_capacity(n),
            l: Vec::with_capacity(n),
            a_plus: Vec::with_capacity(cap),
            a_minus: Vec::with_capacity(cap),
            v1: Vec::with_capacity(cap),
            energy_max: Vec::with_capacity(n),
            events: Vec::new(),
            n_events: 0,
        }
    }

    /// Appends the observables of `snap`; kernel integrals only if allocated.
    pub(crate) fn push(&mut self, snap: &Snapshot) {
        self.p.push(snap.p);
        self.q.push(snap.q);
        self.d.push(snap.d);
        self.j.push(snap.j);
        self.l.push(snap.l);
        if self.a_plus.capacity() > 0 {
            self.a_plus.push(snap.a_plus);
            self.a_minus.push(snap.a_minus);
            self.v1.push(snap.v1);
        }
        self.energy_max.push(snap.energy_max);
    }
}

/// Uniform grid of `n` points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                horizon
            } else {
                horizon * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Simulates one trajectory; deterministic in `(seed, traj_id)`.
pub fn simulate_trajectory(
    model: &Model,
    opts: &SimOptions,
    horizon: f64,
    initial: &Initial,
    grid_n: usize,
    seed: u64,
    traj_id: u64,
) -> Result<TrajectorySample> {
    if !(horizon > 0.0) || grid_n < 2 {
        return Err(Error::InvalidParameter("need horizon > 0 and grid_n >= 2".into()));
    }
    opts.validate()?;
    initial.validate()?;
    let mut init_rng = rng::stream(seed, traj_id, Purpose::Initial);
    let s0 = initial.sample(model, &mut init_rng);
    let mut sim = Simulator::new(model, opts, s0, rng::stream(seed, traj_id, Purpose::Path));
    let grid = uniform_grid(horizon, grid_n);
    let mut out = TrajectorySample::empty(traj_id, s0, horizon, grid, opts.kernel_integrals);
    for k in 0..grid_n {
        sim.advance_to(out.grid[k])?;
        out.push(&sim.snapshot()?);
    }
    out.n_events = sim.n_events();
    out.events = sim.take_events();
    Ok(out)
}

/// Simulates trajectories `0..n` in parallel; the result order is the id order.
pub fn simulate_ensemble(
    model: &Model,
    opts: &SimOptions,
    horizon: f64,
    initial: &Initial,
    grid_n: usize,
    seed: u64,
    n: usize,
) -> Result<Vec<TrajectorySample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|id| simulate_trajectory(model, opts, horizon, initial, grid_n, seed, id))
        .collect()
}

/// Diffusively rescaled path observables on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledPaths {
    pub lambda: f64,
    pub t: Vec<f64>,
    pub scaled_p: Vec<f64>,
    pub scaled_d: Vec<f64>,
    pub scaled_l: Vec<f64>,
    pub scaled_q: Vec<f64>,
}

/// Maps `t ↦ λt` and scales `P`, `Q`, `L` by `λ^{1/2}` and `D` by `λ^{1/4}`.
pub fn rescale(traj: &TrajectorySample, lambda: f64, t_max: f64) -> Result<RescaledPaths> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must be in (0,1], got {lambda}")));
    }
    let need = t_max / lambda;
    if traj.horizon < need * (1.0 - 1e-12) {
        return Err(Error::HorizonTooShort {
            have: traj.horizon,
            need,
        });
    }
    let s2 = lambda.sqrt();
    let s4 = lambda.powf(0.25);
    let keep = traj.grid.iter().take_while(|&&t| t <= need * (1.0 + 1e-12)).count();
    Ok(RescaledPaths {
        lambda,
        t: traj.grid[..keep].iter().map(|t| t * lambda).collect(),
        scaled_p: traj.p[..keep].iter().map(|v| v * s2).collect(),
        scaled_d: traj.d[..keep].iter().map(|v| v * s4).collect(),
        scaled_l: traj.l[..keep].iter().map(|v| v * s2).collect(),
        scaled_q: traj.q[..keep].iter().map(|v| v * s2).collect(),
    })
}

/// Ensemble check of the energy martingale and its predictable variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n: usize,
    pub mean_m: f64,
    pub se_mean_m: f64,
    pub var_m: f64,
    pub mean_v1: f64,
    /// `var(M) - mean(V1)` and its standard error.
    pub diff: f64,
    pub se_diff: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
}

/// Forms `M_T = Q_T - Q_0 - A⁺_T + A⁻_T` per trajectory and compares moments.
pub fn energy_martingale_check(ensemble: &[TrajectorySample]) -> Result<MartingaleReport> {
    if ensemble.len() < 100 {
        return Err(Error::InvalidParameter("martingale check needs at least 100 paths".into()));
    }
    let mut m = Vec::with_capacity(ensemble.len());
    let mut v = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        if tr.a_plus.is_empty() {
            return Err(Error::InvalidParameter(
                "trajectories were simulated without kernel integrals".into(),
            ));
        }
        let k = tr.last();
        m.push(tr.q[k] - tr.q[0] - tr.a_plus[k] + tr.a_minus[k]);
        v.push(tr.v1[k]);
    }
    let n = m.len() as f64;
    let (mean_m, var_m) = stats::mean_var(&m);
    let se_mean_m = (var_m / n).sqrt();
    let mean_v1 = stats::mean(&v);
    let d: Vec<f64> = m
        .iter()
        .zip(&v)
        .map(|(mi, vi)| (mi - mean_m).powi(2) - vi)
        .collect();
    let (_, var_d) = stats::mean_var(&d);
    let diff = var_m - mean_v1;
    let se_diff = (var_d / n).sqrt();
    Ok(MartingaleReport {
        n: m.len(),
        mean_m,
        se_mean_m,
        var_m,
        mean_v1,
        diff,
        se_diff,
        mean_ok: mean_m.abs() <= 3.0 * se_mean_m,
        variance_ok: diff.abs() <= 3.0 * se_diff,
    })
}
