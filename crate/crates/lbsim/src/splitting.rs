//! Regeneration structure: partition times, atom marks, life cycles and the
//! cycle estimators of the diffusion constant.
//!
//! Partition times form a unit-rate Poisson process independent of the path.
//! At each partition time `τ` the atom flag is set with probability `h(S_τ)`,
//! where `h = u χ(H ≤ l) / U`. A life cycle starts at the partition time
//! following an atom visit.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sublevel_measure, Model, PhasePoint};
use crate::pdmp::{simulate_ensemble, uniform_grid, Initial, SimOptions, Simulator, TrajectorySample};
use crate::rng::{self, Purpose, SimRng};
use crate::stats;

/// The pair `(h, ν)` with `h = u χ(H ≤ l)/U` and `ν` uniform on `{H ≤ l}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizationPair {
    pub u: f64,
    pub level: f64,
    pub measure: f64,
    /// Test hook: replaces `h` by this constant everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_h: Option<f64>,
}

impl MinorizationPair {
    /// Uses the model's own level `1 + 2 sup V`.
    pub fn new(model: &Model, u: f64) -> Result<Self> {
        Self::with_level(model, u, model.level())
    }

    pub fn with_level(model: &Model, u: f64, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidParameter(format!("energy level must be positive, got {level}")));
        }
        let measure = if (level - model.level()).abs() < 1e-15 {
            model.level_measure()
        } else {
            sublevel_measure(model.potential(), level)
        };
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidParameter(format!("atom weight u must be in (0,1], got {u}")));
        }
        if u > measure {
            return Err(Error::InvalidParameter(format!(
                "atom weight u={u} exceeds the sublevel measure {measure}"
            )));
        }
        Ok(Self {
            u,
            level,
            measure,
            constant_h: None,
        })
    }

    /// `h ≡ c`; only meaningful for testing compensators.
    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("constant h must be in [0,1], got {c}")));
        }
        Ok(Self {
            u: c,
            level: f64::INFINITY,
            measure: 1.0,
            constant_h: Some(c),
        })
    }

    /// `h` as a function of the energy.
    #[inline]
    pub fn h(&self, energy: f64) -> f64 {
        match self.constant_h {
            Some(c) => c,
            None if energy <= self.level => self.u / self.measure,
            None => 0.0,
        }
    }

    /// Draws from `ν` by rejection from the box `[0,1) × [-√(2l), √(2l)]`.
    pub fn sample_nu<R: Rng + ?Sized>(&self, model: &Model, rng: &mut R) -> Result<PhasePoint> {
        if self.constant_h.is_some() {
            return Err(Error::InvalidParameter("constant h has no reference measure".into()));
        }
        let pmax = (2.0 * self.level).sqrt();
        loop {
            let x: f64 = rng.random();
            let p = pmax * (2.0 * rng.random::<f64>() - 1.0);
            let s = PhasePoint::new(x, p);
            if model.hamiltonian(s) <= self.level {
                return Ok(s);
            }
        }
    }
}

/// Sequential partition-time marking shared by all annotators.
struct Marker {
    rng: SimRng,
    next_tau: f64,
    awaiting_start: bool,
}

struct Mark {
    atom: bool,
    cycle_start: bool,
}

impl Marker {
    /// Draws `Z₀ ~ Bernoulli(h0)` and the first partition time.
    fn new(mut rng: SimRng, h0: f64) -> (Self, bool) {
        let z0 = rng.random::<f64>() < h0;
        let next_tau = rng.sample::<f64, _>(Exp1);
        (
            Self {
                rng,
                next_tau,
                awaiting_start: z0,
            },
            z0,
        )
    }

    /// Marks the partition time `self.next_tau` given `h` there and draws the next one.
    fn mark(&mut self, h: f64) -> Mark {
        let cycle_start = self.awaiting_start;
        let atom = self.rng.random::<f64>() < h;
        self.awaiting_start = atom;
        self.next_tau += self.rng.sample::<f64, _>(Exp1);
        Mark { atom, cycle_start }
    }

    /// While `h = 0` and no cycle start is pending, partition times carry no
    /// marks; runs the path to its next collision and restarts the clock there.
    fn skip_idle(&mut self, sim: &mut Simulator<'_>, h: f64) -> Result<()> {
        if h > 0.0 || self.awaiting_start {
            return Ok(());
        }
        if let Some(ev) = sim.advance(f64::INFINITY)? {
            if self.next_tau <= ev.time {
                self.next_tau = ev.time + self.rng.sample::<f64, _>(Exp1);
            }
        }
        Ok(())
    }
}

/// Running `∫ h(S_r) dr` over a piecewise-constant energy history.
struct HClock {
    t: f64,
    energy: f64,
    integral: f64,
}

impl HClock {
    fn new(energy: f64) -> Self {
        Self {
            t: 0.0,
            energy,
            integral: 0.0,
        }
    }

    /// The energy changes to `energy` at time `t`.
    fn switch(&mut self, pair: &MinorizationPair, t: f64, energy: f64) {
        self.integral += pair.h(self.energy) * (t - self.t);
        self.t = t;
        self.energy = energy;
    }

    fn at(&self, pair: &MinorizationPair, t: f64) -> f64 {
        self.integral + pair.h(self.energy) * (t - self.t)
    }
}

/// Runs `sim` to `t`, feeding every collision into `clock`.
fn run_with_clock(sim: &mut Simulator<'_>, clock: &mut HClock, pair: &MinorizationPair, t: f64) -> Result<()> {
    while let Some(ev) = sim.advance(t)? {
        clock.switch(pair, ev.time, sim.segment_energy());
    }
    Ok(())
}

/// Boundary data of the telescoped cycle martingale at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleClosure {
    /// Number of atom visits up to the horizon, the mark at time 0 included.
    pub n_cycles: u64,
    pub first_start: f64,
    /// Start of cycle `n_cycles + 1`; may lie beyond the horizon.
    pub last_start: f64,
    pub d_first: f64,
    pub d_last: f64,
}

/// Partition times, atom marks and life cycles along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAnnotation {
    pub horizon: f64,
    pub z0: bool,
    pub h0: f64,
    /// Nonzero partition times up to the horizon.
    pub partition_times: Vec<f64>,
    pub h_values: Vec<f64>,
    pub atom_flags: Vec<bool>,
    /// Atom-visit times `R'_m` (0 first when `z0`).
    pub atom_times: Vec<f64>,
    /// Cycle starts `R_m` up to the horizon.
    pub cycle_starts: Vec<f64>,
    /// `D` at each cycle start; empty when annotating a stored trajectory.
    pub cycle_drift: Vec<f64>,
    pub grid: Vec<f64>,
    /// Atom visits at nonzero partition times in `(0, t]`.
    pub n_tilde: Vec<u64>,
    /// `Σ h(S_τ)` over nonzero partition times in `(0, t]`.
    pub sum_h: Vec<f64>,
    /// `Σ (h - h²)(S_τ)` over the same times.
    pub sum_h_var: Vec<f64>,
    /// `∫₀ᵗ h(S_r) dr`.
    pub int_h: Vec<f64>,
    pub closure: Option<CycleClosure>,
    #[serde(skip)]
    running: (usize, u64, f64, f64),
}

impl SplitAnnotation {
    fn new(traj: &TrajectorySample, h0: f64, z0: bool) -> Self {
        Self {
            horizon: traj.horizon,
            z0,
            h0,
            partition_times: Vec::new(),
            h_values: Vec::new(),
            atom_flags: Vec::new(),
            atom_times: if z0 { vec![0.0] } else { Vec::new() },
            cycle_starts: Vec::new(),
            cycle_drift: Vec::new(),
            grid: traj.grid.clone(),
            n_tilde: Vec::with_capacity(traj.grid.len()),
            sum_h: Vec::with_capacity(traj.grid.len()),
            sum_h_var: Vec::with_capacity(traj.grid.len()),
            int_h: Vec::with_capacity(traj.grid.len()),
            closure: None,
            running: (0, 0, 0.0, 0.0),
        }
    }

    fn record(&mut self, tau: f64, h: f64, mark: &Mark) {
        self.partition_times.push(tau);
        self.h_values.push(h);
        self.atom_flags.push(mark.atom);
        if mark.atom {
            self.atom_times.push(tau);
        }
        if mark.cycle_start {
            self.cycle_starts.push(tau);
        }
    }

    fn close_grid_point(&mut self, int_h: f64) {
        let (from, mut n, mut sh, mut sv) = self.running;
        for (h, &z) in self.h_values[from..].iter().zip(&self.atom_flags[from..]) {
            n += z as u64;
            sh += h;
            sv += h - h * h;
        }
        self.running = (self.h_values.len(), n, sh, sv);
        self.n_tilde.push(n);
        self.sum_h.push(sh);
        self.sum_h_var.push(sv);
        self.int_h.push(int_h);
    }

    /// Atom visits up to the horizon including the mark at time 0.
    pub fn atom_visits(&self) -> u64 {
        self.atom_times.len() as u64
    }
}

/// Annotates a stored trajectory; the energy at a partition time is read off
/// the collision record.
pub fn annotate(traj: &TrajectorySample, pair: &MinorizationPair, rng: SimRng, model: &Model) -> Result<SplitAnnotation> {
    if traj.n_events > 0 && traj.events.len() as u64 != traj.n_events {
        return Err(Error::InvalidParameter(
            "annotation needs the full collision record".into(),
        ));
    }
    let h0 = pair.h(model.hamiltonian(traj.initial));
    let (mut marker, z0) = Marker::new(rng, h0);
    let mut ann = SplitAnnotation::new(traj, h0, z0);
    let mut clock = HClock::new(model.hamiltonian(traj.initial));
    let mut events = traj.events.iter().peekable();
    let mut feed = |clock: &mut HClock, t: f64| {
        while let Some(e) = events.next_if(|e| e.time <= t) {
            clock.switch(pair, e.time, model.hamiltonian(PhasePoint::new(e.x, e.p_after)));
        }
    };
    for &t in &traj.grid {
        while marker.next_tau <= t {
            let tau = marker.next_tau;
            feed(&mut clock, tau);
            let h = pair.h(clock.energy);
            let mark = marker.mark(h);
            ann.record(tau, h, &mark);
        }
        feed(&mut clock, t);
        ann.close_grid_point(clock.at(pair, t));
    }
    Ok(ann)
}

/// Per-run limits for open-ended cycle simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleBudget {
    pub max_events: u64,
    /// Fraction of cycle runs allowed to hit `max_events` before an estimator
    /// gives up; timed-out runs are dropped from the estimate.
    pub max_timeout_fraction: f64,
}

impl Default for CycleBudget {
    fn default() -> Self {
        Self {
            max_events: 10_000_000,
            max_timeout_fraction: 0.02,
        }
    }
}

/// Simulates a trajectory with on-the-fly annotation and continues past the
/// horizon until the cycle following the last atom visit has started.
#[allow(clippy::too_many_arguments)]
pub fn simulate_split(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    horizon: f64,
    initial: &Initial,
    grid_n: usize,
    seed: u64,
    traj_id: u64,
    budget: &CycleBudget,
) -> Result<(TrajectorySample, SplitAnnotation)> {
    if !(horizon > 0.0) || grid_n < 2 {
        return Err(Error::InvalidParameter("need horizon > 0 and grid_n >= 2".into()));
    }
    opts.validate()?;
    initial.validate()?;
    let mut init_rng = rng::stream(seed, traj_id, Purpose::Initial);
    let s0 = initial.sample(model, &mut init_rng);
    let mut sim = Simulator::new(model, opts, s0, rng::stream(seed, traj_id, Purpose::Path));
    let grid = uniform_grid(horizon, grid_n);
    let mut traj = TrajectorySample::empty(traj_id, s0, horizon, grid, opts.kernel_integrals);
    let h0 = pair.h(model.hamiltonian(s0));
    let (mut marker, z0) = Marker::new(rng::stream(seed, traj_id, Purpose::Partition), h0);
    let mut ann = SplitAnnotation::new(&traj, h0, z0);
    let mut clock = HClock::new(model.hamiltonian(s0));
    for k in 0..grid_n {
        let t = traj.grid[k];
        while marker.next_tau <= t {
            let tau = marker.next_tau;
            run_with_clock(&mut sim, &mut clock, pair, tau)?;
            let h = pair.h(sim.segment_energy());
            let mark = marker.mark(h);
            if mark.cycle_start {
                ann.cycle_drift.push(sim.snapshot()?.d);
            }
            ann.record(tau, h, &mark);
        }
        run_with_clock(&mut sim, &mut clock, pair, t)?;
        ann.close_grid_point(clock.at(pair, t));
        traj.push(&sim.snapshot()?);
    }
    traj.n_events = sim.n_events();
    traj.events = sim.take_events();

    let n_cycles = ann.atom_visits();
    let mut starts: Vec<(f64, f64)> = ann
        .cycle_starts
        .iter()
        .copied()
        .zip(ann.cycle_drift.iter().copied())
        .collect();
    let need = n_cycles as usize + 1;
    while n_cycles > 0 && starts.len() < need {
        let h_now = pair.h(sim.segment_energy());
        marker.skip_idle(&mut sim, h_now)?;
        let tau = marker.next_tau;
        sim.advance_to(tau)?;
        if sim.n_events() > budget.max_events {
            return Err(Error::CycleTimeout(sim.n_events()));
        }
        let h = pair.h(sim.segment_energy());
        if marker.mark(h).cycle_start {
            starts.push((tau, sim.snapshot()?.d));
        }
    }
    ann.closure = Some(if n_cycles == 0 {
        CycleClosure {
            n_cycles: 0,
            first_start: f64::NAN,
            last_start: f64::NAN,
            d_first: 0.0,
            d_last: 0.0,
        }
    } else {
        CycleClosure {
            n_cycles,
            first_start: starts[0].0,
            last_start: starts[need - 1].0,
            d_first: starts[0].1,
            d_last: starts[need - 1].1,
        }
    });
    Ok((traj, ann))
}

/// Ensemble version of [`simulate_split`], ordered by id.
#[allow(clippy::too_many_arguments)]
pub fn simulate_split_ensemble(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    horizon: f64,
    initial: &Initial,
    grid_n: usize,
    seed: u64,
    n: usize,
    budget: &CycleBudget,
) -> Result<Vec<(TrajectorySample, SplitAnnotation)>> {
    (0..n as u64)
        .into_par_iter()
        .map(|id| simulate_split(model, opts, pair, horizon, initial, grid_n, seed, id, budget))
        .collect()
}

/// Per-cycle quantities extracted from annotated trajectories or cycle runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleStatistics {
    /// `∫ V'(X_r) dr` over each completed cycle.
    pub integrals: Vec<f64>,
    pub durations: Vec<f64>,
    /// `2∫₀^{R₁} V'(X_r) ∫_r^{R₂} V'(X_{r'}) dr' dr` per run started from `ν`.
    pub double_integrals: Vec<f64>,
    /// Runs dropped for exceeding the event budget.
    pub timeouts: usize,
}

impl CycleStatistics {
    /// Completed cycles inside the horizon of an online annotation.
    pub fn from_annotation(ann: &SplitAnnotation) -> Result<Self> {
        if ann.cycle_drift.len() != ann.cycle_starts.len() {
            return Err(Error::InvalidParameter(
                "cycle drifts are only available from simulate_split".into(),
            ));
        }
        let integrals = ann.cycle_drift.windows(2).map(|w| w[1] - w[0]).collect();
        let durations = ann.cycle_starts.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            integrals,
            durations,
            double_integrals: Vec::new(),
            timeouts: 0,
        })
    }
}

/// Mean and standard error at one ladder time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    /// `Ñ_t - Σ h(S_τ)`.
    pub atom_mean: f64,
    pub atom_se: f64,
    /// `Σ h(S_τ) - ∫₀ᵗ h`.
    pub partition_mean: f64,
    pub partition_se: f64,
    /// `Ñ_t - ∫₀ᵗ h`.
    pub total_mean: f64,
    pub total_se: f64,
    /// `var(Ñ_t - Σ h) - mean Σ (h - h²)` and its standard error.
    pub variance_gap: f64,
    pub variance_gap_se: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub n: usize,
    pub rows: Vec<ResidualRow>,
    pub all_ok: bool,
}

fn within(mean: f64, se: f64) -> bool {
    mean.abs() <= 3.0 * se || (mean == 0.0 && se == 0.0)
}

/// Mean-zero checks of the two compensator residuals at the grid points
/// nearest to each ladder time.
pub fn martingale_residuals(annotations: &[SplitAnnotation], ladder: &[f64]) -> Result<ResidualReport> {
    if annotations.len() < 100 {
        return Err(Error::InvalidParameter("residual check needs at least 100 annotations".into()));
    }
    let grid = &annotations[0].grid;
    let mut rows = Vec::with_capacity(ladder.len());
    for &t in ladder {
        let k = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::InvalidParameter("empty grid".into()))?;
        let mut r1 = Vec::with_capacity(annotations.len());
        let mut r2 = Vec::with_capacity(annotations.len());
        let mut tot = Vec::with_capacity(annotations.len());
        let mut sv = Vec::with_capacity(annotations.len());
        for a in annotations {
            if a.grid.len() != grid.len() {
                return Err(Error::InvalidParameter("annotations use different grids".into()));
            }
            r1.push(a.n_tilde[k] as f64 - a.sum_h[k]);
            r2.push(a.sum_h[k] - a.int_h[k]);
            tot.push(a.n_tilde[k] as f64 - a.int_h[k]);
            sv.push(a.sum_h_var[k]);
        }
        let (m1, v1) = stats::mean_var(&r1);
        let gaps: Vec<f64> = r1.iter().zip(&sv).map(|(r, s)| (r - m1).powi(2) - s).collect();
        let n = r1.len() as f64;
        let row = ResidualRow {
            t: grid[k],
            atom_mean: m1,
            atom_se: (v1 / n).sqrt(),
            partition_mean: stats::mean(&r2),
            partition_se: stats::std_err(&r2),
            total_mean: stats::mean(&tot),
            total_se: stats::std_err(&tot),
            variance_gap: v1 - stats::mean(&sv),
            variance_gap_se: stats::std_err(&gaps),
            ok: false,
        };
        let ok = within(row.atom_mean, row.atom_se)
            && within(row.partition_mean, row.partition_se)
            && within(row.total_mean, row.total_se)
            && within(row.variance_gap, row.variance_gap_se);
        rows.push(ResidualRow { ok, ..row });
    }
    let all_ok = rows.iter().all(|r| r.ok);
    Ok(ResidualReport {
        n: annotations.len(),
        rows,
        all_ok,
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let (value, var) = stats::mean_var(v);
        Self {
            value,
            stderr: (var / v.len() as f64).sqrt(),
            n: v.len(),
        }
    }

    /// Symmetric 95% normal interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        let (a0, a1) = self.ci95();
        let (b0, b1) = other.ci95();
        a0 <= b1 && b0 <= a1
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            value: c * self.value,
            stderr: c.abs() * self.stderr,
            n: self.n,
        }
    }
}

/// One run from `ν` to the start of the second cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRun {
    pub r1: f64,
    pub r2: f64,
    pub d1: f64,
    pub d2: f64,
    pub events: u64,
}

impl CycleRun {
    /// `2∫₀^{R₁} V' ∫_r^{R₂} V' = 2 D(R₁) D(R₂) - D(R₁)²`.
    pub fn double_integral(&self) -> f64 {
        2.0 * self.d1 * self.d2 - self.d1 * self.d1
    }
}

/// Runs the split process from `ν̃` until the second cycle starts.
pub fn run_cycle(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    seed: u64,
    id: u64,
    budget: &CycleBudget,
) -> Result<CycleRun> {
    let s0 = pair.sample_nu(model, &mut rng::stream(seed, id, Purpose::Initial))?;
    let mut sim = Simulator::new(model, opts, s0, rng::stream(seed, id, Purpose::Path));
    let h0 = pair.h(model.hamiltonian(s0));
    let (mut marker, _) = Marker::new(rng::stream(seed, id, Purpose::Partition), h0);
    let mut starts: Vec<(f64, f64)> = Vec::with_capacity(2);
    while starts.len() < 2 {
        let h_now = pair.h(sim.segment_energy());
        marker.skip_idle(&mut sim, h_now)?;
        let tau = marker.next_tau;
        sim.advance_to(tau)?;
        if sim.n_events() > budget.max_events {
            return Err(Error::CycleTimeout(sim.n_events()));
        }
        let mark = marker.mark(pair.h(sim.segment_energy()));
        if mark.cycle_start {
            starts.push((tau, sim.snapshot()?.d));
        }
    }
    Ok(CycleRun {
        r1: starts[0].0,
        r2: starts[1].0,
        d1: starts[0].1,
        d2: starts[1].1,
        events: sim.n_events(),
    })
}

fn cycle_options(opts: &SimOptions) -> SimOptions {
    SimOptions {
        kernel_integrals: false,
        record_events: false,
        collisions: true,
        ..opts.clone()
    }
}

/// Runs `n_cycles` independent cycle pairs in parallel, ordered by id.
/// Returns the completed runs and the number of timed-out ones.
pub fn run_cycles(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    n_cycles: usize,
    seed: u64,
    budget: &CycleBudget,
) -> Result<(Vec<CycleRun>, usize)> {
    let opts = cycle_options(opts);
    let all: Vec<Result<CycleRun>> = (0..n_cycles as u64)
        .into_par_iter()
        .map(|id| run_cycle(model, &opts, pair, seed, id, budget))
        .collect();
    let mut runs = Vec::with_capacity(n_cycles);
    let mut timeouts = 0;
    for r in all {
        match r {
            Ok(run) => runs.push(run),
            Err(Error::CycleTimeout(_)) => timeouts += 1,
            Err(e) => return Err(e),
        }
    }
    if timeouts as f64 > budget.max_timeout_fraction * n_cycles as f64 {
        return Err(Error::CycleTimeout(budget.max_events));
    }
    Ok((runs, timeouts))
}

/// Regenerative estimate of `υ_λ` from runs started at `ν̃`.
pub fn estimate_upsilon(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    n_cycles: usize,
    seed: u64,
    budget: &CycleBudget,
) -> Result<(Estimate, CycleStatistics)> {
    if n_cycles < 100 {
        return Err(Error::InvalidParameter("upsilon estimate needs at least 100 cycles".into()));
    }
    let (runs, timeouts) = run_cycles(model, opts, pair, n_cycles, seed, budget)?;
    let double: Vec<f64> = runs.iter().map(CycleRun::double_integral).collect();
    let cs = CycleStatistics {
        integrals: runs.iter().map(|r| r.d2 - r.d1).collect(),
        durations: runs.iter().map(|r| r.r2 - r.r1).collect(),
        double_integrals: double.clone(),
        timeouts,
    };
    Ok((Estimate::from_samples(&double), cs))
}

/// `κ̂ = u υ̂₀`; the model must have `λ = 0`.
pub fn estimate_kappa(
    model: &Model,
    opts: &SimOptions,
    pair: &MinorizationPair,
    n_cycles: usize,
    seed: u64,
    budget: &CycleBudget,
) -> Result<(Estimate, CycleStatistics)> {
    if model.lambda() != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kappa is defined at lambda = 0, got {}",
            model.lambda()
        )));
    }
    let (ups, cs) = estimate_upsilon(model, opts, pair, n_cycles, seed, budget)?;
    Ok((ups.scaled(pair.u), cs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRouteReport {
    pub lambda: f64,
    pub n: usize,
    /// `var(W)` with `W = λ^{1/4}(D_{R_{Ñ+1}} - D_{R₁})`.
    pub var_w: f64,
    pub var_w_se: f64,
    /// `mean(λ^{1/2} Ñ)`.
    pub mean_scaled_visits: f64,
    pub mean_scaled_visits_se: f64,
    /// `υ̂ · mean(λ^{1/2} Ñ)`.
    pub predicted: f64,
    pub predicted_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// `u var(W) / mean(λ^{1/2} Ñ)`, a second estimate of `κ`.
    pub kappa_var: f64,
    pub kappa_var_se: f64,
    pub agrees: bool,
}

/// Compares the telescoped cycle martingale's variance with `υ̂ E Ñ`.
pub fn kappa_variance_check(
    samples: &[(TrajectorySample, SplitAnnotation)],
    lambda: f64,
    upsilon: &Estimate,
    u: f64,
) -> Result<VarianceRouteReport> {
    if samples.len() < 1000 {
        return Err(Error::InvalidParameter("variance check needs at least 1000 trajectories".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must be in (0,1], got {lambda}")));
    }
    let s2 = lambda.sqrt();
    let s4 = lambda.powf(0.25);
    let mut w = Vec::with_capacity(samples.len());
    let mut nv = Vec::with_capacity(samples.len());
    for (_, ann) in samples {
        let c = ann
            .closure
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("annotation lacks cycle closure".into()))?;
        w.push(s4 * (c.d_last - c.d_first));
        nv.push(s2 * c.n_cycles as f64);
    }
    let (var_w, var_w_se) = stats::var_with_se(&w);
    let mv = stats::mean(&nv);
    let mv_se = stats::std_err(&nv);
    let predicted = upsilon.value * mv;
    let predicted_se = ((upsilon.stderr * mv).powi(2) + (upsilon.value * mv_se).powi(2)).sqrt();
    let ratio = var_w / predicted;
    let ratio_se = ratio.abs() * ((var_w_se / var_w).powi(2) + (predicted_se / predicted).powi(2)).sqrt();
    let kappa_var = u * var_w / mv;
    let kappa_var_se = kappa_var.abs() * ((var_w_se / var_w).powi(2) + (mv_se / mv).powi(2)).sqrt();
    let agrees = (ratio - 1.0).abs() <= 3.0 * ratio_se + s4;
    Ok(VarianceRouteReport {
        lambda,
        n: samples.len(),
        var_w,
        var_w_se,
        mean_scaled_visits: mv,
        mean_scaled_visits_se: mv_se,
        predicted,
        predicted_se,
        ratio,
        ratio_se,
        kappa_var,
        kappa_var_se,
        agrees,
    })
}

/// Nested Monte Carlo estimate of `∫₀^{t_cut} E_s[V'(X_r)] dr = E_s[D_{t_cut}]`.
pub fn resolvent_point_estimate(
    model: &Model,
    opts: &SimOptions,
    s: PhasePoint,
    t_cut: f64,
    n_inner: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(t_cut > 0.0) || n_inner < 100 {
        return Err(Error::InvalidParameter("need t_cut > 0 and n_inner >= 100".into()));
    }
    let opts = SimOptions {
        kernel_integrals: false,
        record_events: false,
        ..opts.clone()
    };
    let init = Initial::Point { x: s.x, p: s.p };
    let ens = simulate_ensemble(model, &opts, t_cut, &init, 2, seed, n_inner)?;
    let d: Vec<f64> = ens.iter().map(|t| t.d[1]).collect();
    Ok(Estimate::from_samples(&d))
}

/// JSON line describing one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRecord {
    pub estimator: String,
    pub lambda: f64,
    pub u: f64,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}
