//! Hamiltonian flow between collisions.
//!
//! Two flows are provided: a fourth-order symplectic composition of
//! position-Verlet steps (triple jump), and an exact parametrisation of
//! rotating orbits through the time-of-flight function
//! `Θ(x) = ∫₀ˣ dy / v(y)`, `v = sqrt(2(H - V))`, expanded in a Fourier series.

use std::cell::RefCell;
use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::model::{wrap, PhasePoint, Potential};

const CBRT_2: f64 = 1.259_921_049_894_873_2;
const W1: f64 = 1.0 / (2.0 - CBRT_2);
const W0: f64 = -CBRT_2 / (2.0 - CBRT_2);
const C_OUTER: f64 = 0.5 * W1;
const C_INNER: f64 = 0.5 * (W0 + W1);

/// One composed step of size `h` from `(x, p)`; `x` is left unwrapped.
#[inline]
pub fn symplectic_step(pot: &Potential, x: &mut f64, p: &mut f64, h: f64) {
    *x += C_OUTER * h * *p;
    *p -= W1 * h * pot.force_gradient(*x);
    *x += C_INNER * h * *p;
    *p -= W0 * h * pot.force_gradient(*x);
    *x += C_INNER * h * *p;
    *p -= W1 * h * pot.force_gradient(*x);
    *x += C_OUTER * h * *p;
}

/// Advances `s` by `dt` with fixed steps of size `step` and a final partial step.
pub fn flow_segment(pot: &Potential, s: PhasePoint, dt: f64, step: f64) -> PhasePoint {
    assert!(dt >= 0.0 && step > 0.0, "flow needs dt >= 0 and step > 0");
    if dt == 0.0 {
        return s;
    }
    if pot.is_zero() {
        return PhasePoint::new(s.x + s.p * dt, s.p);
    }
    let n = (dt / step).floor();
    let mut x = s.x;
    let mut p = s.p;
    let mut k = 0.0;
    while k < n {
        symplectic_step(pot, &mut x, &mut p, step);
        if !(0.0..1.0).contains(&x) {
            x = wrap(x);
        }
        k += 1.0;
    }
    let rest = dt - n * step;
    if rest > 0.0 {
        symplectic_step(pot, &mut x, &mut p, rest);
    }
    PhasePoint::new(x, p)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cosine and sine coefficients `(a_k, b_k)`, `k = 1..n/2-1`, of samples on a uniform grid.
fn real_fourier(f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 2.0 / n as f64;
    let harmonics = n / 2 - 1;
    let cos = (1..=harmonics).map(|k| scale * buf[k].re).collect();
    let sin = (1..=harmonics).map(|k| -scale * buf[k].im).collect();
    (cos, sin)
}

/// Exact flow on a rotating orbit (`H > sup V`).
#[derive(Debug, Clone)]
pub struct Orbit {
    energy: f64,
    sign: f64,
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Orbit {
    /// Builds the orbit of energy `energy` travelling in direction `sign`.
    ///
    /// Returns `None` when the Fourier series of `1/v` does not settle within
    /// the largest sample size, which happens only very close to the separatrix.
    pub fn new(pot: &Potential, energy: f64, sign: f64) -> Option<Self> {
        if energy <= pot.sup() {
            return None;
        }
        let mut n = 16usize;
        while n <= 4096 {
            let f: Vec<f64> = (0..n)
                .map(|j| 1.0 / (2.0 * (energy - pot.value(j as f64 / n as f64))).sqrt())
                .collect();
            let mean = f.iter().sum::<f64>() / n as f64;
            let harmonics = n / 2 - 1;
            let (mut cos, mut sin) = real_fourier(&f);
            let tail = (harmonics / 2..harmonics)
                .map(|k| cos[k].abs() + sin[k].abs())
                .fold(0.0, f64::max);
            if tail <= 1e-15 * mean {
                let keep = (0..harmonics)
                    .rposition(|k| cos[k].abs() + sin[k].abs() > 1e-16 * mean)
                    .map_or(0, |k| k + 1);
                cos.truncate(keep);
                sin.truncate(keep);
                return Some(Self {
                    energy,
                    sign: sign.signum(),
                    mean,
                    cos,
                    sin,
                });
            }
            n *= 2;
        }
        None
    }

    /// Time to travel once around the torus.
    pub fn period(&self) -> f64 {
        self.mean
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// Time of flight from 0 to `y` in the positive direction, `y ∈ [0, 1]`.
    pub fn theta(&self, y: f64) -> f64 {
        let (s1, c1) = (TAU * y).sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut acc = self.mean * y;
        for k in 0..self.cos.len() {
            let kf = TAU * (k + 1) as f64;
            acc += (self.cos[k] * s + self.sin[k] * (1.0 - c)) / kf;
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
        }
        acc
    }

    /// Speed `|p|` at position `x`.
    #[inline]
    pub fn speed(&self, pot: &Potential, x: f64) -> f64 {
        (2.0 * (self.energy - pot.value(x))).max(0.0).sqrt()
    }

    /// Inverse of `theta` on `[0, period)`.
    pub fn theta_inverse(&self, pot: &Potential, r: f64) -> f64 {
        let tau = self.mean;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut y = (r / tau).clamp(0.0, 1.0);
        for _ in 0..60 {
            let g = self.theta(y) - r;
            if g.abs() <= 2.0 * f64::EPSILON * tau {
                break;
            }
            if g > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let d = 1.0 / self.speed(pot, y);
            let mut next = y - g / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 4.0 * f64::EPSILON {
                y = next;
                break;
            }
            y = next;
        }
        y
    }

    /// Unwrapped position after time `elapsed`, starting from phase `theta0 = theta(x0)`.
    pub fn unwrapped_position(&self, pot: &Potential, theta0: f64, elapsed: f64) -> f64 {
        let th = theta0 + self.sign * elapsed;
        let n = (th / self.mean).floor();
        let r = (th - n * self.mean).clamp(0.0, self.mean);
        n + self.theta_inverse(pot, r)
    }

    /// State after time `elapsed`, starting from phase `theta0`.
    pub fn state(&self, pot: &Potential, theta0: f64, elapsed: f64) -> PhasePoint {
        let xu = self.unwrapped_position(pot, theta0, elapsed);
        let x = wrap(xu);
        PhasePoint {
            x,
            p: self.sign * self.speed(pot, x),
        }
    }
}
