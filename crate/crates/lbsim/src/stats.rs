//! Distribution distances and Monte Carlo uncertainty.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, ss / (n - 1.0))
}

/// Standard error of the mean.
pub fn std_err(v: &[f64]) -> f64 {
    let (_, var) = mean_var(v);
    (var / v.len() as f64).sqrt()
}

/// Sample variance and its standard error (delta method on centred squares).
pub fn var_with_se(v: &[f64]) -> (f64, f64) {
    let (m, var) = mean_var(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    (var, std_err(&sq))
}

/// Weighted or plain sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub label: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            weights: None,
            label: String::new(),
        }
    }

    pub fn labelled(values: Vec<f64>, label: &str) -> Self {
        Self {
            values,
            weights: None,
            label: label.to_string(),
        }
    }

    /// Weights are normalised to sum to one.
    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive, one per value".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            values,
            weights: Some(weights.iter().map(|w| w / total).collect()),
            label: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted (value, mass) pairs with equal values merged.
    fn atoms(&self) -> Vec<(f64, f64)> {
        let n = self.values.len() as f64;
        let mut pairs: Vec<(f64, f64)> = match &self.weights {
            Some(w) => self.values.iter().copied().zip(w.iter().copied()).collect(),
            None => self.values.iter().map(|&v| (v, 1.0 / n)).collect(),
        };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => out.push((v, w)),
            }
        }
        out
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn effective_size(&self) -> f64 {
        match &self.weights {
            Some(w) => 1.0 / w.iter().map(|x| x * x).sum::<f64>(),
            None => self.values.len() as f64,
        }
    }
}

fn check_nonempty(a: &SampleSet) -> Result<()> {
    if a.is_empty() {
        Err(Error::InvalidParameter("sample set is empty".into()))
    } else {
        Ok(())
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_nonempty(a)?;
    check_nonempty(b)?;
    let xa = a.atoms();
    let xb = b.atoms();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d: f64 = 0.0;
    while i < xa.len() || j < xb.len() {
        let va = xa.get(i).map_or(f64::INFINITY, |p| p.0);
        let vb = xb.get(j).map_or(f64::INFINITY, |p| p.0);
        let v = va.min(vb);
        if va == v {
            fa += xa[i].1;
            i += 1;
        }
        if vb == v {
            fb += xb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    Ok(d.min(1.0))
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_vs_cdf<F: Fn(f64) -> f64>(a: &SampleSet, cdf: F) -> Result<f64> {
    check_nonempty(a)?;
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    for (v, w) in a.atoms() {
        let left = cdf(v - 1e-12 * v.abs().max(1.0));
        d = d.max((left - cum).abs());
        cum += w;
        d = d.max((cdf(v) - cum).abs());
    }
    Ok(d.min(1.0))
}

/// 1-D Wasserstein-1 distance `∫|F_a - F_b|`.
pub fn wasserstein1(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_nonempty(a)?;
    check_nonempty(b)?;
    if a.weights.is_none() && b.weights.is_none() && a.len() == b.len() {
        let mut x = a.values.clone();
        let mut y = b.values.clone();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        return Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64);
    }
    let xa = a.atoms();
    let xb = b.atoms();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < xa.len() || j < xb.len() {
        let va = xa.get(i).map_or(f64::INFINITY, |p| p.0);
        let vb = xb.get(j).map_or(f64::INFINITY, |p| p.0);
        let v = va.min(vb);
        if let Some(p) = prev {
            total += (fa - fb).abs() * (v - p);
        }
        if va == v {
            fa += xa[i].1;
            i += 1;
        }
        if vb == v {
            fb += xb[j].1;
            j += 1;
        }
        prev = Some(v);
    }
    Ok(total)
}

/// Batch-means estimate of the mean with a 95% half-width.
pub fn batch_ci(values: &[f64], n_batches: usize) -> Result<(f64, f64)> {
    if n_batches < 8 {
        return Err(Error::InvalidParameter("batch_ci needs at least 8 batches".into()));
    }
    let size = values.len() / n_batches;
    if size == 0 {
        return Err(Error::InvalidParameter("fewer values than batches".into()));
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&values[b * size..(b + 1) * size]))
        .collect();
    let (m, var) = mean_var(&means);
    let t = student_t_quantile(0.975, (n_batches - 1) as f64);
    Ok((m, t * (var / n_batches as f64).sqrt()))
}

pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("valid Student t parameters")
        .inverse_cdf(p)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic two-sample critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n: f64, m: f64) -> f64 {
    let (mut lo, mut hi) = (0.3, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * ((n + m) / (n * m)).sqrt()
}

/// Sample quantile by linear interpolation of the sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    }
}

/// Sample Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normal_cdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn ks_trivial_cases() {
        let a = SampleSet::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        let b = SampleSet::new(vec![10.0, 11.0]);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
        let pm = SampleSet::new(vec![0.5; 100]);
        let d = ks_vs_cdf(&pm, |x| if x >= 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!(d <= 1.0 / 100.0);
        assert!(ks_two_sample(&SampleSet::new(vec![]), &a).is_err());
    }

    #[test]
    fn ks_two_sample_null_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let bound = 1.95 * (2.0 / n as f64).sqrt() * 1.36;
        let mut ok = 0;
        for _ in 0..100 {
            let a = SampleSet::new(normals(&mut rng, n));
            let b = SampleSet::new(normals(&mut rng, n));
            if ks_two_sample(&a, &b).unwrap() <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn ks_against_cdf_scales_and_detects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = SampleSet::new(normals(&mut rng, 40_000));
        let d = ks_vs_cdf(&a, normal_cdf).unwrap();
        assert!(d < 1.63 / 200.0, "{d}");
        let shifted = ks_vs_cdf(&a, |x| normal_cdf(x - 0.5)).unwrap();
        assert!(shifted >= normal_cdf(0.25) - normal_cdf(-0.25) - 0.02);
    }

    #[test]
    fn wasserstein_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let a = SampleSet::new(x.clone());
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        let s = SampleSet::new(x.iter().map(|v| v + 0.7).collect());
        assert!((wasserstein1(&a, &s).unwrap() - 0.7).abs() < 1e-9);
        assert!(wasserstein1(&a, &SampleSet::new(y)).unwrap() <= 0.01);
        let w = SampleSet::weighted(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let u = SampleSet::new(vec![0.0, 1.0, 1.0, 1.0]);
        assert!(wasserstein1(&w, &u).unwrap().abs() < 1e-15);
    }

    #[test]
    fn batch_ci_cases() {
        let (m, h) = batch_ci(&[2.5; 800], 10).unwrap();
        assert_eq!((m, h), (2.5, 0.0));
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { 3.0 }).collect();
        assert_eq!(batch_ci(&alt, 10).unwrap().0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = normals(&mut rng, 10_000);
        let (_, h) = batch_ci(&z, 20).unwrap();
        let target = 1.96 / 100.0;
        assert!(h > target / 1.5 && h < target * 1.5, "{h}");
        assert!(batch_ci(&z, 4).is_err());
    }

    #[test]
    fn kolmogorov_critical_value() {
        let c = ks_critical(0.05, 1.0, f64::INFINITY.min(1e300));
        assert!((c - 1.3581).abs() < 1e-3, "{c}");
    }
}
