//! Experiment configuration: one TOML file with five sections plus `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::limits::{Convention, LimitOptions};
use crate::model::{ModelParams, PotentialSpec};
use crate::pdmp::SimOptions;
use crate::splitting::CycleBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Mass ratio for `simulate`; the experiments use the ladder instead.
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub quad_points: usize,
    pub tail_cutoff: f64,
    pub quad_tol: f64,
    /// Integrator step scale, divided by `1 + sqrt(2H)`.
    pub step_base: f64,
    pub orbit_margin: f64,
    pub drift_tol: f64,
    pub kernel_spacing: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelParams::default();
        let s = SimOptions::default();
        Self {
            lambda: m.lambda,
            potential: m.potential,
            quad_points: m.quad_points,
            tail_cutoff: m.tail_cutoff,
            quad_tol: m.quad_tol,
            step_base: s.step_base,
            orbit_margin: s.orbit_margin,
            drift_tol: s.drift_tol,
            kernel_spacing: s.kernel_spacing,
        }
    }
}

impl ModelSection {
    pub fn params(&self, lambda: f64) -> ModelParams {
        ModelParams {
            lambda,
            potential: self.potential.clone(),
            quad_points: self.quad_points,
            tail_cutoff: self.tail_cutoff,
            quad_tol: self.quad_tol,
        }
    }

    /// Simulator options without event lists or kernel integrals.
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            step_base: self.step_base,
            orbit_margin: self.orbit_margin,
            drift_tol: self.drift_tol,
            kernel_spacing: self.kernel_spacing,
            record_events: false,
            ..SimOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingSection {
    /// Atom weights for the cross-estimate of the diffusion constant.
    pub u: Vec<f64>,
    /// Energy level of the atom; defaults to the model level.
    pub level: Option<f64>,
    /// Cycles per weight at zero mass ratio.
    pub n_cycles: usize,
    /// Mass ratio, atom weight, scaled horizon and size of the variance-route ensemble.
    pub variance_lambda: f64,
    pub variance_u: f64,
    pub variance_t: f64,
    pub variance_n: usize,
    pub variance_cycles: usize,
    pub max_events: u64,
    pub max_timeout_fraction: f64,
}

impl Default for SplittingSection {
    fn default() -> Self {
        let b = CycleBudget::default();
        Self {
            u: vec![0.02, 0.05, 0.1],
            level: None,
            n_cycles: 600,
            variance_lambda: 0.05,
            variance_u: 0.05,
            variance_t: 20.0,
            variance_n: 1000,
            variance_cycles: 400,
            max_events: b.max_events,
            max_timeout_fraction: b.max_timeout_fraction,
        }
    }
}

impl SplittingSection {
    pub fn budget(&self) -> CycleBudget {
        CycleBudget {
            max_events: self.max_events,
            max_timeout_fraction: self.max_timeout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub epsilon: f64,
    /// OU step; defaults to `epsilon^2 / 4`.
    pub dt: Option<f64>,
    /// Small-jump cutoff of the subordinator.
    pub delta: f64,
    pub convention: Convention,
    /// Horizon of the long-run local-time slope check.
    pub slope_t: f64,
    /// Sample count for subordinator Laplace checks.
    pub laplace_samples: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            dt: None,
            delta: 1e-4,
            convention: Convention::SelfConsistent,
            slope_t: 1.0e4,
            laplace_samples: 100_000,
        }
    }
}

impl LimitsSection {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(0.25 * self.epsilon * self.epsilon)
    }

    pub fn options(&self) -> LimitOptions {
        LimitOptions {
            dt: self.dt(),
            epsilon: self.epsilon,
            delta: self.delta,
            convention: self.convention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolterraSection {
    pub kappa: f64,
    pub t: f64,
    pub n_t: usize,
    pub n_q: usize,
    /// Half width of the q grid; defaults to eight analytic standard deviations.
    pub half_width: Option<f64>,
    pub snapshots: usize,
    pub moment_tol: f64,
    pub mc_samples: usize,
}

impl Default for VolterraSection {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            t: 1.0,
            n_t: 256,
            n_q: 1024,
            half_width: None,
            snapshots: 11,
            moment_tol: 1e-4,
            mc_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: String,
    /// Mass ratios, strictly decreasing in (0, 1).
    pub lambdas: Vec<f64>,
    /// Horizon in rescaled time; kinetic paths run to `t / lambda`.
    pub t: f64,
    pub ensemble: usize,
    pub seed: u64,
    /// Grid points on `[0, t]` for path-valued outputs.
    pub grid: usize,
    /// Diffusion constant for the joint-law table; estimated when absent.
    pub kappa: Option<f64>,
    pub kappa_stderr: Option<f64>,
    pub out: String,
    /// Exit nonzero when any checked record fails.
    pub assert: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            id: "run".into(),
            lambdas: vec![0.2, 0.1, 0.05],
            t: 4.0,
            ensemble: 10_000,
            seed: 1,
            grid: 101,
            kappa: None,
            kappa_stderr: None,
            out: "out".into(),
            assert: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub splitting: SplittingSection,
    pub limits: LimitsSection,
    pub volterra: VolterraSection,
    pub experiment: ExperimentSection,
}

fn parse_table(text: &str) -> Result<toml::Table> {
    toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
}

/// Sets `a.b.c = value`, reading `value` as a TOML literal and falling back to a string.
fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = match parse_table(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigInvalid(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::ConfigInvalid(format!("'{part}' in '{key}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("override '{o}' is not key=value")))?;
            set_key(&mut table, k.trim(), v.trim())?;
        }
        let cfg: Config = table.try_into().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        let l = &self.experiment.lambdas;
        if l.is_empty() || l.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return bad(format!("lambda ladder must lie in (0, 1), got {l:?}"));
        }
        if l.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("lambda ladder must be strictly decreasing, got {l:?}"));
        }
        if !(self.experiment.t > 0.0) || self.experiment.ensemble == 0 || self.experiment.grid < 2 {
            return bad("experiment needs t > 0, ensemble >= 1 and grid >= 2".into());
        }
        if self.splitting.u.iter().any(|&u| !(u > 0.0 && u <= 1.0)) || !(self.splitting.variance_u > 0.0) {
            return bad(format!("atom weights must lie in (0, 1], got {:?}", self.splitting.u));
        }
        if !(self.limits.epsilon > 0.0) || !(self.limits.delta > 0.0) {
            return bad("limits need epsilon > 0 and delta > 0".into());
        }
        if let Some(k) = self.experiment.kappa {
            if !(k >= 0.0) {
                return bad(format!("kappa must be nonnegative, got {k}"));
            }
        }
        self.model
            .params(self.model.lambda)
            .validate()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        self.model
            .sim_options()
            .validate()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
