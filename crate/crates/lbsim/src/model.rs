//! Periodic potential, Hamiltonian and the momentum-jump collision kernel.
//!
//! The kernel is evaluated through the substitution
//! `w = (1-λ)p/2 - (1+λ)p'/2`, under which `J(p,p') dp'` becomes
//! `|w + λp| exp(-w²/2) dw / (16(1+λ))`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Fourier description of a 1-periodic potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V(x) = (1 - cos 2πx)/2`.
    #[default]
    CosineDefault,
    /// `V(x) = constant + Σ_k cosine[k-1] cos 2πkx + sine[k-1] sin 2πkx`.
    TruncatedFourier {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cosine: Vec<f64>,
        #[serde(default)]
        sine: Vec<f64>,
    },
}

impl PotentialSpec {
    /// The identically zero potential.
    pub fn zero() -> Self {
        PotentialSpec::TruncatedFourier {
            constant: 0.0,
            cosine: Vec::new(),
            sine: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Zero,
    Cosine,
    Fourier {
        constant: f64,
        cosine: Vec<f64>,
        sine: Vec<f64>,
    },
}

/// A validated potential with cached maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    spec: PotentialSpec,
    shape: Shape,
    sup: f64,
}

impl Potential {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        let shape = match spec {
            PotentialSpec::CosineDefault => Shape::Cosine,
            PotentialSpec::TruncatedFourier {
                constant,
                cosine,
                sine,
            } => {
                let all = std::iter::once(constant).chain(cosine).chain(sine);
                if all.clone().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "potential coefficients must be finite".into(),
                    ));
                }
                if all.clone().all(|&c| c == 0.0) {
                    Shape::Zero
                } else {
                    Shape::Fourier {
                        constant: *constant,
                        cosine: cosine.clone(),
                        sine: sine.clone(),
                    }
                }
            }
        };
        let mut pot = Potential {
            spec: spec.clone(),
            shape,
            sup: 0.0,
        };
        let (min, argmax) = pot.scan(8192);
        if min < -1e-12 {
            return Err(Error::InvalidParameter(format!(
                "potential must be nonnegative, found minimum {min:e}"
            )));
        }
        pot.sup = pot.refine_max(argmax, 1.0 / 8192.0);
        Ok(pot)
    }

    fn scan(&self, n: usize) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..n {
            let x = i as f64 / n as f64;
            let v = self.value(x);
            min = min.min(v);
            if v > best.0 {
                best = (v, x);
            }
        }
        (min, best.1)
    }

    fn refine_max(&self, x0: f64, h: f64) -> f64 {
        let (mut a, mut b) = (x0 - h, x0 + h);
        for _ in 0..80 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if self.value(m1) < self.value(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        self.value(0.5 * (a + b)).max(self.value(x0))
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.shape == Shape::Zero
    }

    /// Maximum of `V` over the torus.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// Returns `(V(x), V'(x))`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Zero => (0.0, 0.0),
            Shape::Cosine => {
                let (s, c) = (TAU * x).sin_cos();
                (0.5 * (1.0 - c), PI * s)
            }
            Shape::Fourier {
                constant,
                cosine,
                sine,
            } => {
                let (s1, c1) = (TAU * x).sin_cos();
                let (mut s, mut c) = (s1, c1);
                let mut v = *constant;
                let mut dv = 0.0;
                let n = cosine.len().max(sine.len());
                for k in 0..n {
                    let a = cosine.get(k).copied().unwrap_or(0.0);
                    let b = sine.get(k).copied().unwrap_or(0.0);
                    let kf = TAU * (k + 1) as f64;
                    v += a * c + b * s;
                    dv += kf * (b * c - a * s);
                    let cn = c * c1 - s * s1;
                    s = s * c1 + c * s1;
                    c = cn;
                }
                (v, dv)
            }
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    #[inline]
    pub fn force_gradient(&self, x: f64) -> f64 {
        self.eval(x).1
    }
}

/// Evaluates `V` and `V'` for a potential description.
pub fn potential_eval(spec: &PotentialSpec, x: f64) -> Result<(f64, f64)> {
    Ok(Potential::new(spec)?.eval(x))
}

/// User-facing model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub potential: PotentialSpec,
    /// Gauss-Legendre nodes per panel in kernel integrals.
    pub quad_points: usize,
    /// Truncation of the Gaussian variable `w`, in standard deviations.
    pub tail_cutoff: f64,
    /// Relative tolerance for the quadrature doubling check.
    pub quad_tol: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            potential: PotentialSpec::CosineDefault,
            quad_points: 16,
            tail_cutoff: 10.0,
            quad_tol: 1e-9,
        }
    }
}

impl ModelParams {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in [0,1), got {}",
                self.lambda
            )));
        }
        if self.quad_points < 16 {
            return Err(Error::InvalidParameter("quad_points must be at least 16".into()));
        }
        if !(self.tail_cutoff >= 8.0) {
            return Err(Error::InvalidParameter("tail_cutoff must be at least 8".into()));
        }
        if !(self.quad_tol > 0.0) {
            return Err(Error::InvalidParameter("quad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Point of the phase space `T × R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    /// Builds a point, reducing `x` to `[0, 1)`.
    pub fn new(x: f64, p: f64) -> Self {
        Self { x: wrap(x), p }
    }
}

/// Reduces a position to `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Order `n` of the moment `V_{λ,n}`; the integrand power is `2n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentOrder {
    Half,
    One,
    ThreeHalves,
    Two,
}

impl MomentOrder {
    pub fn power(self) -> i32 {
        match self {
            MomentOrder::Half => 1,
            MomentOrder::One => 2,
            MomentOrder::ThreeHalves => 3,
            MomentOrder::Two => 4,
        }
    }

    pub fn from_half_integer(n: f64) -> Result<Self> {
        match (2.0 * n).round() as i64 {
            1 if (2.0 * n - 1.0).abs() < 1e-12 => Ok(MomentOrder::Half),
            2 if (2.0 * n - 2.0).abs() < 1e-12 => Ok(MomentOrder::One),
            3 if (2.0 * n - 3.0).abs() < 1e-12 => Ok(MomentOrder::ThreeHalves),
            4 if (2.0 * n - 4.0).abs() < 1e-12 => Ok(MomentOrder::Two),
            _ => Err(Error::InvalidParameter(format!(
                "moment order must be one of 1/2, 1, 3/2, 2; got {n}"
            ))),
        }
    }
}

/// Drift and moment functions of the energy-like variable `Q = sqrt(2H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStats {
    pub a: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub v_n: f64,
}

/// Jump-rate density from `p_from` to `p_to`.
pub fn jump_rate(lambda: f64, p_from: f64, p_to: f64) -> f64 {
    let w = 0.5 * (1.0 - lambda) * p_from - 0.5 * (1.0 + lambda) * p_to;
    (1.0 + lambda) / 64.0 * (p_to - p_from).abs() * (-0.5 * w * w).exp()
}

/// Total collision rate at momentum `p`.
pub fn escape_rate(lambda: f64, p: f64) -> f64 {
    let c = lambda * p;
    SQRT_2PI / (16.0 * (1.0 + lambda)) * (c * erf(c / std::f64::consts::SQRT_2) + 2.0 * normal_pdf(c))
}

const MAX_INVERSE_ITER: usize = 200;

/// Draws the post-collision momentum from `J(p, ·)/E(p)`.
pub fn sample_jump<R: Rng + ?Sized>(lambda: f64, p: f64, rng: &mut R) -> Result<f64> {
    if lambda == 0.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let mag = 2.0 * (-2.0 * u.ln()).sqrt();
        return Ok(if rng.random::<bool>() { p + mag } else { p - mag });
    }
    let c = lambda * p;
    let u: f64 = rng.random();
    let w = sample_abs_shifted_gaussian(c, u)?;
    Ok(((1.0 - lambda) * p - 2.0 * w) / (1.0 + lambda))
}

/// Inverse CDF of the density proportional to `|w + c| φ(w)`, at level `u`.
pub fn sample_abs_shifted_gaussian(c: f64, u: f64) -> Result<f64> {
    if c < 0.0 {
        return sample_abs_shifted_gaussian(-c, 1.0 - u).map(|w| -w);
    }
    let left_mass = (normal_pdf(c) - c * normal_cdf(-c)).max(0.0);
    let total = 2.0 * normal_pdf(c) + c * erf(c / std::f64::consts::SQRT_2);
    let y = u * total;
    if y < left_mass {
        // F(w) = φ(w) - cΦ(w) on w ≤ -c, increasing from 0 to left_mass.
        let f = |w: f64| normal_pdf(w) - c * normal_cdf(w) - y;
        let df = |w: f64| -(w + c) * normal_pdf(w);
        newton_bisect(f, df, -c - 12.0, -c)
    } else {
        let y = y - left_mass;
        // G(w) = ∫_{-c}^{w} (v+c)φ(v) dv.
        let erf_c = erf(c / std::f64::consts::SQRT_2);
        let pc = normal_pdf(c);
        let g = |w: f64| pc - normal_pdf(w) + 0.5 * c * (erf(w / std::f64::consts::SQRT_2) + erf_c) - y;
        let dg = |w: f64| (w + c) * normal_pdf(w);
        newton_bisect(g, dg, -c, 12.0)
    }
}

fn newton_bisect<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(
    f: F,
    df: D,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo >= 0.0 {
        return Ok(lo);
    }
    if fhi <= 0.0 {
        return Ok(hi);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_INVERSE_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) || hi - lo <= 1e-14 * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::InverseCdfNotConverged(MAX_INVERSE_ITER))
}

/// Kernel integrals at one phase point: `A`, `V_{2n}` for a chosen power, and `V_1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelIntegrals {
    pub a: f64,
    pub v_pow: f64,
    pub v1: f64,
}

const PANEL_WIDTH: f64 = 2.0;

/// Validated model: potential, mass ratio and cached quadrature rules.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    potential: Potential,
    gl: GaussLegendre,
    gl_fine: GaussLegendre,
    level: f64,
    level_measure: f64,
}

impl Model {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let potential = Potential::new(&params.potential)?;
        let level = 1.0 + 2.0 * potential.sup();
        let level_measure = sublevel_measure(&potential, level);
        Ok(Self {
            params: params.clone(),
            gl: GaussLegendre::new(params.quad_points),
            gl_fine: GaussLegendre::new(2 * params.quad_points),
            potential,
            level,
            level_measure,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Energy threshold `1 + 2 sup V` of the small set.
    pub fn level(&self) -> f64 {
        self.level
    }

    /// Lebesgue measure of `{H ≤ level}`.
    pub fn level_measure(&self) -> f64 {
        self.level_measure
    }

    pub fn hamiltonian(&self, s: PhasePoint) -> f64 {
        0.5 * s.p * s.p + self.potential.value(s.x)
    }

    pub fn jump_rate(&self, p_from: f64, p_to: f64) -> f64 {
        jump_rate(self.params.lambda, p_from, p_to)
    }

    pub fn escape_rate(&self, p: f64) -> f64 {
        escape_rate(self.params.lambda, p)
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<f64> {
        sample_jump(self.params.lambda, p, rng)
    }

    /// `A`, `A±` and `V_n` at `s`, with a doubling check on the quadrature.
    pub fn kernel_stats(&self, s: PhasePoint, order: MomentOrder) -> Result<KernelStats> {
        let v0 = self.potential.value(s.x);
        let coarse = self.kernel_integrals_with(&self.gl, v0, s.p, order.power());
        let fine = self.kernel_integrals_with(&self.gl_fine, v0, s.p, order.power());
        let tol = self.params.quad_tol;
        let da = (coarse.a - fine.a).abs();
        let dv = (coarse.v_pow - fine.v_pow).abs();
        let scale_a = tol * (1.0 + fine.a.abs());
        let scale_v = tol * (1.0 + fine.v_pow.abs());
        if da > scale_a || dv > scale_v {
            return Err(Error::QuadratureNotConverged {
                diff: da.max(dv),
                tol: scale_a.min(scale_v),
            });
        }
        Ok(KernelStats {
            a: fine.a,
            a_plus: fine.a.max(0.0),
            a_minus: (-fine.a).max(0.0),
            v_n: fine.v_pow,
        })
    }

    /// Single-rule evaluation of `A` and `V_1`, used along trajectories.
    #[inline]
    pub fn drift_and_variance(&self, x: f64, p: f64) -> (f64, f64) {
        let v0 = self.potential.value(x);
        let k = self.kernel_integrals_with(&self.gl, v0, p, 2);
        (k.a, k.v1)
    }

    /// Integrals of `(Q'-Q)` and `|Q'-Q|^power` against `J(p, p') dp'` at potential level `v0`.
    pub fn kernel_integrals_with(
        &self,
        gl: &GaussLegendre,
        v0: f64,
        p: f64,
        power: i32,
    ) -> KernelIntegrals {
        let lam = self.params.lambda;
        let c = lam * p;
        let q = (p * p + 2.0 * v0).sqrt();
        let cut = self.params.tail_cutoff;
        let mut pts = [0.0f64; 64];
        let mut n = 0usize;
        let push = |v: f64, pts: &mut [f64; 64], n: &mut usize| {
            if v > -cut && v < cut && *n < pts.len() {
                pts[*n] = v;
                *n += 1;
            }
        };
        push(-c, &mut pts, &mut n);
        // p' = 0 and p' = -p in the w variable.
        let w0 = 0.5 * (1.0 - lam) * p;
        push(w0, &mut pts, &mut n);
        push(p, &mut pts, &mut n);
        if v0 > 0.0 {
            let beta = 0.5 * (1.0 + lam) * (2.0 * v0).sqrt();
            let mut d = beta;
            while d < PANEL_WIDTH {
                push(w0 - d, &mut pts, &mut n);
                push(w0 + d, &mut pts, &mut n);
                d *= 4.0;
            }
        }
        pts[n] = cut;
        n += 1;
        let pts = &mut pts[..n];
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = 1.0 / (16.0 * (1.0 + lam));
        let inv = 1.0 / (1.0 + lam);
        let mut acc = KernelIntegrals::default();
        let mut lo = -cut;
        for &hi in pts.iter() {
            if hi - lo <= 1e-15 {
                continue;
            }
            let panels = ((hi - lo) / PANEL_WIDTH).ceil().max(1.0) as usize;
            let h = (hi - lo) / panels as f64;
            for k in 0..panels {
                let a = lo + h * k as f64;
                let mid = a + 0.5 * h;
                let half = 0.5 * h;
                for (z, wt) in gl.nodes.iter().zip(&gl.weights) {
                    let w = mid + half * z;
                    let weight = wt * half * (w + c).abs() * (-0.5 * w * w).exp();
                    let pp = ((1.0 - lam) * p - 2.0 * w) * inv;
                    let dq = (pp * pp + 2.0 * v0).sqrt() - q;
                    acc.a += weight * dq;
                    let d2 = dq * dq;
                    acc.v1 += weight * d2;
                    acc.v_pow += weight
                        * match power {
                            1 => dq.abs(),
                            2 => d2,
                            3 => d2 * dq.abs(),
                            _ => d2 * d2,
                        };
                }
            }
            lo = hi;
        }
        acc.a *= scale;
        acc.v1 *= scale;
        acc.v_pow *= scale;
        acc
    }
}

/// Lebesgue measure of `{(x,p): p²/2 + V(x) ≤ level}`.
pub fn sublevel_measure(potential: &Potential, level: f64) -> f64 {
    if potential.is_zero() {
        return 2.0 * (2.0 * level).sqrt();
    }
    let (v, _) = quad::adaptive(
        |x| 2.0 * (2.0 * (level - potential.value(x)).max(0.0)).sqrt(),
        0.0,
        1.0,
        1e-12,
    );
    v
}
