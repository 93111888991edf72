//! Event-driven simulator for the collision process.
//!
//! Between collisions the flow runs on a fixed step lattice anchored at the
//! segment start, so probing the state at intermediate times never perturbs
//! the path. Rotating orbits use the exact orbit parametrisation instead.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::flow::{symplectic_step, Orbit};
use crate::error::{Error, Result};
use crate::model::{escape_rate, wrap, Model, PhasePoint};
use crate::quad::GaussLegendre;
use crate::rng::SimRng;

/// Numerical and test-hook options of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Integrator step is `step_base / (1 + sqrt(2H))`.
    pub step_base: f64,
    /// Orbits with `H >= sup V + orbit_margin` use the exact flow. Negative disables it.
    pub orbit_margin: f64,
    /// Allowed energy drift per unit time on integrated segments.
    pub drift_tol: f64,
    /// Accumulate time integrals of `A±` and `V_1`.
    pub kernel_integrals: bool,
    /// Node spacing (time) for those integrals on integrated segments.
    pub kernel_spacing: f64,
    /// Collisions on/off (off is a test hook).
    pub collisions: bool,
    /// Replace the escape rate by a constant (test hook).
    pub constant_rate: Option<f64>,
    /// Keep the list of collision events.
    pub record_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step_base: 3e-3,
            orbit_margin: 0.5,
            drift_tol: 1e-6,
            kernel_integrals: false,
            kernel_spacing: 0.02,
            collisions: true,
            constant_rate: None,
            record_events: true,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_base > 0.0) || !(self.drift_tol > 0.0) || !(self.kernel_spacing > 0.0) {
            return Err(Error::InvalidParameter(
                "step_base, drift_tol and kernel_spacing must be positive".into(),
            ));
        }
        if let Some(r) = self.constant_rate {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter("constant_rate must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One accepted collision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub x: f64,
    pub p_before: f64,
    pub p_after: f64,
}

/// Observables at the current simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    /// `sqrt(2H)` at the current point.
    pub q: f64,
    pub d: f64,
    pub j: f64,
    pub l: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub v1: f64,
    /// Energy of the current collision-free segment.
    pub segment_energy: f64,
    pub energy_max: f64,
}

type Acc = [f64; 3];

/// `(A⁺, A⁻, V_1)` at `(x, p)`; zero when there are no collisions to compensate.
#[inline]
fn kernel_integrand(model: &Model, collisions: bool, x: f64, p: f64) -> Acc {
    if !collisions {
        return [0.0; 3];
    }
    let (a, v1) = model.drift_and_variance(x, p);
    [a.max(0.0), (-a).max(0.0), v1]
}

#[derive(Debug, Clone)]
enum Flow {
    Free,
    Orbit {
        orbit: Orbit,
        theta0: f64,
        period_acc: Option<Acc>,
    },
    Lattice {
        h: f64,
        stride: u64,
        k: u64,
        x: f64,
        p: f64,
        f_front: Acc,
        acc: Acc,
    },
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    s0: PhasePoint,
    energy: f64,
    flow: Flow,
}

/// Simulator state for one trajectory.
pub struct Simulator<'m> {
    model: &'m Model,
    opts: SimOptions,
    rng: SimRng,
    gl: GaussLegendre,
    t: f64,
    seg: Segment,
    p_init: f64,
    d: f64,
    j: f64,
    l: f64,
    acc: Acc,
    rate_bar: f64,
    next_proposal: f64,
    n_events: u64,
    energy_max: f64,
    inv_measure: f64,
    events: Vec<CollisionEvent>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m Model, opts: &SimOptions, initial: PhasePoint, rng: SimRng) -> Self {
        let s = PhasePoint::new(initial.x, initial.p);
        let energy = model.hamiltonian(s);
        let mut sim = Self {
            model,
            opts: opts.clone(),
            rng,
            gl: GaussLegendre::new(32),
            t: 0.0,
            seg: Segment {
                t0: 0.0,
                s0: s,
                energy,
                flow: Flow::Free,
            },
            p_init: s.p,
            d: 0.0,
            j: 0.0,
            l: 0.0,
            acc: [0.0; 3],
            rate_bar: 0.0,
            next_proposal: f64::INFINITY,
            n_events: 0,
            energy_max: energy,
            inv_measure: 1.0 / model.level_measure(),
            events: Vec::new(),
        };
        sim.start_segment(0.0, s);
        sim
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<CollisionEvent> {
        std::mem::take(&mut self.events)
    }

    /// Energy of the current collision-free segment.
    pub fn segment_energy(&self) -> f64 {
        self.seg.energy
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    fn integrand(&self, x: f64, p: f64) -> Acc {
        kernel_integrand(self.model, self.opts.collisions, x, p)
    }

    fn start_segment(&mut self, t0: f64, s0: PhasePoint) {
        let pot = self.model.potential();
        let energy = self.model.hamiltonian(s0);
        self.energy_max = self.energy_max.max(energy);
        let flow = if pot.is_zero() {
            Flow::Free
        } else {
            let orbit = if self.opts.orbit_margin >= 0.0
                && energy >= pot.sup() + self.opts.orbit_margin
                && s0.p != 0.0
            {
                Orbit::new(pot, energy, s0.p.signum())
            } else {
                None
            };
            match orbit {
                Some(orbit) => {
                    let theta0 = orbit.theta(s0.x);
                    Flow::Orbit {
                        orbit,
                        theta0,
                        period_acc: None,
                    }
                }
                None => {
                    let h = self.opts.step_base / (1.0 + (2.0 * energy).sqrt());
                    let half = (self.opts.kernel_spacing / (2.0 * h)).round().max(1.0) as u64;
                    let f_front = if self.opts.kernel_integrals {
                        self.integrand(s0.x, s0.p)
                    } else {
                        [0.0; 3]
                    };
                    Flow::Lattice {
                        h,
                        stride: 2 * half,
                        k: 0,
                        x: s0.x,
                        p: s0.p,
                        f_front,
                        acc: [0.0; 3],
                    }
                }
            }
        };
        self.seg = Segment {
            t0,
            s0,
            energy,
            flow,
        };
        self.rate_bar = match self.opts.constant_rate {
            Some(r) => r,
            None => escape_rate(self.model.lambda(), (2.0 * energy).sqrt() * (1.0 + 1e-9) + 1e-12),
        };
        self.next_proposal = if self.opts.collisions {
            let e: f64 = self.rng.sample(Exp1);
            t0 + e / self.rate_bar
        } else {
            f64::INFINITY
        };
    }

    /// State at time `t` of the current segment and the kernel integrals from its start.
    fn probe(&mut self, t: f64) -> (PhasePoint, Acc) {
        let e = (t - self.seg.t0).max(0.0);
        let with_acc = self.opts.kernel_integrals;
        let collisions = self.opts.collisions;
        let s0 = self.seg.s0;
        let model = self.model;
        let pot = model.potential();
        match &mut self.seg.flow {
            Flow::Free => {
                let s = PhasePoint::new(s0.x + s0.p * e, s0.p);
                let acc = if with_acc {
                    let f = kernel_integrand(model, collisions, s0.x, s0.p);
                    [f[0] * e, f[1] * e, f[2] * e]
                } else {
                    [0.0; 3]
                };
                (s, acc)
            }
            Flow::Orbit {
                orbit,
                theta0,
                period_acc,
            } => {
                let s = orbit.state(pot, *theta0, e);
                if !with_acc {
                    return (s, [0.0; 3]);
                }
                let sign = orbit.sign();
                let f = |x: f64| {
                    let v = orbit.speed(pot, x);
                    kernel_integrand(model, collisions, x, sign * v).map(|g| g / v)
                };
                let tau = orbit.period();
                let n_full = (e / tau).floor();
                let mut acc = [0.0; 3];
                if n_full > 0.0 {
                    let per = *period_acc.get_or_insert_with(|| {
                        let n = 64;
                        let mut sum = [0.0; 3];
                        for i in 0..n {
                            let g = f(i as f64 / n as f64);
                            for c in 0..3 {
                                sum[c] += g[c];
                            }
                        }
                        sum.map(|v| v / n as f64)
                    });
                    for c in 0..3 {
                        acc[c] = n_full * per[c];
                    }
                }
                let xu_end = orbit.unwrapped_position(pot, *theta0, e) - sign * n_full;
                let xu_start = s0.x;
                let (lo, hi) = if xu_end >= xu_start {
                    (xu_start, xu_end)
                } else {
                    (xu_end, xu_start)
                };
                if hi > lo {
                    let half = 0.5 * (hi - lo);
                    let mid = 0.5 * (hi + lo);
                    for (z, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                        let g = f(wrap(mid + half * z));
                        for c in 0..3 {
                            acc[c] += w * half * g[c];
                        }
                    }
                }
                (s, acc)
            }
            Flow::Lattice {
                h,
                stride,
                k,
                x,
                p,
                f_front,
                acc,
            } => {
                let h = *h;
                let kt = (e / h).floor() as u64;
                if kt < *k {
                    *k = 0;
                    *x = s0.x;
                    *p = s0.p;
                    *acc = [0.0; 3];
                    if with_acc {
                        *f_front = kernel_integrand(model, collisions, s0.x, s0.p);
                    }
                }
                let step = |x: &mut f64, p: &mut f64, dt: f64| {
                    symplectic_step(pot, x, p, dt);
                    if !(0.0..1.0).contains(x) {
                        *x = wrap(*x);
                    }
                };
                let eval = |x: f64, p: f64| kernel_integrand(model, collisions, x, p);
                if with_acc {
                    let m = *stride;
                    let target = (kt / m) * m;
                    while *k < target {
                        for _ in 0..m / 2 {
                            step(x, p, h);
                        }
                        let fm = eval(*x, *p);
                        for _ in 0..m / 2 {
                            step(x, p, h);
                        }
                        let fe = eval(*x, *p);
                        let w = m as f64 * h / 6.0;
                        for c in 0..3 {
                            acc[c] += w * (f_front[c] + 4.0 * fm[c] + fe[c]);
                        }
                        *f_front = fe;
                        *k += m;
                    }
                } else {
                    while *k < kt {
                        step(x, p, h);
                        *k += 1;
                    }
                }
                let state_at = |e_at: f64| {
                    let kk = ((e_at / h).floor() as u64).max(*k);
                    let (mut xs, mut ps) = (*x, *p);
                    for _ in *k..kk {
                        step(&mut xs, &mut ps, h);
                    }
                    let rest = e_at - kk as f64 * h;
                    if rest > 0.0 {
                        step(&mut xs, &mut ps, rest);
                    }
                    PhasePoint { x: xs, p: ps }
                };
                let s = state_at(e);
                let mut total = *acc;
                if with_acc {
                    let ef = *k as f64 * h;
                    let r = e - ef;
                    if r > 0.0 {
                        let sm = state_at(ef + 0.5 * r);
                        let fm = eval(sm.x, sm.p);
                        let fe = eval(s.x, s.p);
                        for c in 0..3 {
                            total[c] += r / 6.0 * (f_front[c] + 4.0 * fm[c] + fe[c]);
                        }
                    }
                }
                (s, total)
            }
        }
    }

    fn check_drift(&self, s: PhasePoint, t: f64) -> Result<()> {
        if matches!(self.seg.flow, Flow::Lattice { .. }) {
            let duration = t - self.seg.t0;
            let drift = (self.model.hamiltonian(s) - self.seg.energy).abs();
            if drift > self.opts.drift_tol * duration.max(1.0) {
                return Err(Error::EnergyDriftExceeded { drift, duration });
            }
        }
        Ok(())
    }

    /// Runs until the next accepted collision or `t_max`, whichever comes first.
    pub fn advance(&mut self, t_max: f64) -> Result<Option<CollisionEvent>> {
        debug_assert!(t_max >= self.t);
        loop {
            if self.next_proposal > t_max {
                self.t = t_max;
                return Ok(None);
            }
            let tp = self.next_proposal;
            let (s, seg_acc) = self.probe(tp);
            let rate = match self.opts.constant_rate {
                Some(r) => r,
                None => escape_rate(self.model.lambda(), s.p),
            };
            let prob = rate / self.rate_bar;
            // The majorant is tight at zero momentum, where rounding can exceed it by an ulp.
            assert!(prob > 0.0 && prob <= 1.0 + 1e-12, "thinning acceptance {prob} outside (0,1]");
            let u: f64 = self.rng.random();
            if u < prob {
                self.check_drift(s, tp)?;
                let p_after = self.model.sample_jump(s.p, &mut self.rng)?;
                let duration = tp - self.seg.t0;
                self.d -= s.p - self.seg.s0.p;
                if self.seg.energy <= self.model.level() {
                    self.l += duration * self.inv_measure;
                }
                for c in 0..3 {
                    self.acc[c] += seg_acc[c];
                }
                self.j += p_after - s.p;
                self.n_events += 1;
                let ev = CollisionEvent {
                    time: tp,
                    x: s.x,
                    p_before: s.p,
                    p_after,
                };
                if self.opts.record_events {
                    self.events.push(ev);
                }
                self.t = tp;
                self.start_segment(tp, PhasePoint { x: s.x, p: p_after });
                return Ok(Some(ev));
            }
            let e: f64 = self.rng.sample(Exp1);
            self.next_proposal = tp + e / self.rate_bar;
        }
    }

    /// Runs through all collisions up to `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.advance(t)?.is_some() {}
        Ok(())
    }

    /// Observables at the current time.
    pub fn snapshot(&mut self) -> Result<Snapshot> {
        let t = self.t;
        let (s, seg_acc) = self.probe(t);
        self.check_drift(s, t)?;
        let duration = t - self.seg.t0;
        let l = if self.seg.energy <= self.model.level() {
            self.l + duration * self.inv_measure
        } else {
            self.l
        };
        let d = self.d - (s.p - self.seg.s0.p);
        Ok(Snapshot {
            t,
            x: s.x,
            p: s.p,
            q: (2.0 * self.model.hamiltonian(s)).sqrt(),
            d,
            j: self.j,
            l,
            a_plus: self.acc[0] + seg_acc[0],
            a_minus: self.acc[1] + seg_acc[1],
            v1: self.acc[2] + seg_acc[2],
            segment_energy: self.seg.energy,
            energy_max: self.energy_max,
        })
    }

    /// Momentum at time zero.
    pub fn initial_momentum(&self) -> f64 {
        self.p_init
    }
}
