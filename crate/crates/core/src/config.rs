//! Experiment configuration: one JSON document describing a run. Optional
//! fields are filled by [`ExperimentConfig::resolve`], and the resolved
//! document is what a run records, so every run is self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundled;
use crate::diophantine::{dc_constant, DiophantineSpec};
use crate::error::{Error, Result};
use crate::series::FtSeries;

/// Where the Hamiltonian comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSource {
    /// One of [`bundled::NAMES`].
    Bundled(String),
    Inline(FtSeries),
    /// Path to a series JSON file, relative to the working directory.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub n_orbits: usize,
    pub steps: u64,
    /// Requested step; capped by the integrator's stability limit.
    pub dt: f64,
    /// Factor applied to the drift constants fitted at the largest radius.
    pub margin: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            n_orbits: 4,
            steps: 100_000,
            dt: 1e-3,
            margin: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(rename = "I0", default)]
    pub action0: Option<Vec<f64>>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_integrate_steps")]
    pub steps: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
}

fn default_integrate_steps() -> u64 {
    100_000
}

fn default_stride() -> u64 {
    100
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        IntegrateConfig {
            theta0: None,
            action0: None,
            dt: None,
            steps: default_integrate_steps(),
            stride: default_stride(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hamiltonian: HamiltonianSource,
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Mode cutoff of the Diophantine check and of the normal form.
    #[serde(rename = "K", default)]
    pub mode_cutoff: Option<u32>,
    /// Strictly decreasing; the first one is the working radius.
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_m_cap")]
    pub m_cap: u32,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Exponent of the Diophantine set; defaults to `(m*-1)(d+1) + tau + 1`.
    #[serde(default)]
    pub tau_bar: Option<f64>,
    /// Mode cutoff of the Diophantine-set indicator.
    #[serde(rename = "K_bar", default = "default_k_bar")]
    pub mode_cutoff_bar: u32,
    #[serde(default = "default_c_nu")]
    pub c_nu: f64,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub integrate: IntegrateConfig,
}

fn default_radii() -> Vec<f64> {
    vec![0.06, 0.045, 0.03]
}

fn default_m_cap() -> u32 {
    12
}

fn default_rank_tol() -> f64 {
    1e-8
}

fn default_n_samples() -> u64 {
    100_000
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

fn default_threads() -> usize {
    1
}

fn default_k_bar() -> u32 {
    20
}

fn default_c_nu() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn bundled(name: &str) -> Self {
        Self::with_source(HamiltonianSource::Bundled(name.to_string()))
    }

    pub fn with_source(hamiltonian: HamiltonianSource) -> Self {
        ExperimentConfig {
            hamiltonian,
            omega: None,
            tau: None,
            gamma: None,
            mode_cutoff: None,
            radii: default_radii(),
            m_cap: default_m_cap(),
            rank_tol: default_rank_tol(),
            n_samples: default_n_samples(),
            seed: 0,
            out: default_out(),
            threads: default_threads(),
            tau_bar: None,
            mode_cutoff_bar: default_k_bar(),
            c_nu: default_c_nu(),
            stability: StabilityConfig::default(),
            integrate: IntegrateConfig::default(),
        }
    }

    /// Parses a config document; unknown fields and type errors are
    /// configuration errors.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config schema: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    /// Loads the Hamiltonian.
    pub fn hamiltonian(&self) -> Result<FtSeries> {
        match &self.hamiltonian {
            HamiltonianSource::Bundled(name) => Ok(bundled::by_name(name)?.hamiltonian),
            HamiltonianSource::Inline(h) => Ok(h.clone()),
            HamiltonianSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read Hamiltonian {}: {e}", path.display())))?;
                FtSeries::from_json(&text).map_err(|e| Error::Config(format!("Hamiltonian {}: {e}", path.display())))
            }
        }
    }

    /// Fills `omega`, `tau`, `gamma` and `K` (from the bundled entry, or from
    /// the linear part of `H` with `tau = d - 1`, half the finite-cutoff
    /// constant and `K` the series' mode cutoff), validates every field and
    /// returns the Hamiltonian with the completed config. `tau_bar` stays
    /// unset until the stabilization order is known.
    pub fn resolve(&self) -> Result<(ExperimentConfig, FtSeries)> {
        let h = self.hamiltonian()?;
        let d = h.d();
        let mut cfg = self.clone();
        let base = match &self.hamiltonian {
            HamiltonianSource::Bundled(name) => Some(bundled::by_name(name)?.dc),
            _ => None,
        };
        let omega = match (&cfg.omega, &base) {
            (Some(w), _) => w.clone(),
            (None, Some(b)) => b.omega.clone(),
            (None, None) => linear_part(&h),
        };
        if omega.len() != d {
            return Err(Error::Config(format!("omega has {} entries, H has d = {d}", omega.len())));
        }
        let tau = cfg.tau.or(base.as_ref().map(|b| b.tau)).unwrap_or((d - 1) as f64);
        let k = cfg.mode_cutoff.or(base.as_ref().map(|b| b.k_max)).unwrap_or(h.k_max().max(1));
        let gamma = match (cfg.gamma, &base) {
            (Some(g), _) => g,
            (None, Some(b)) if cfg.omega.is_none() && cfg.tau.is_none() && cfg.mode_cutoff.is_none() => b.gamma,
            _ => 0.5 * dc_constant(&omega, tau, k).gamma_k,
        };
        cfg.omega = Some(omega);
        cfg.tau = Some(tau);
        cfg.gamma = Some(gamma);
        cfg.mode_cutoff = Some(k);
        cfg.validate()?;
        Ok((cfg, h))
    }

    /// The Diophantine condition of a resolved config.
    pub fn diophantine(&self) -> Result<DiophantineSpec> {
        match (&self.omega, self.tau, self.gamma, self.mode_cutoff) {
            (Some(w), Some(t), Some(g), Some(k)) => DiophantineSpec::new(w.clone(), t, g, k),
            _ => Err(Error::Config("config is not resolved".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("radii must be a non-empty list of positive numbers".into());
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return bad("radii must be strictly decreasing".into());
        }
        if self.m_cap < 2 {
            return bad(format!("m_cap = {} must be at least 2", self.m_cap));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol = {} must lie in (0, 1)", self.rank_tol));
        }
        if self.n_samples < 1000 {
            return bad(format!("n_samples = {} must be at least 1000", self.n_samples));
        }
        if self.threads < 1 {
            return bad("threads must be at least 1".into());
        }
        if !(self.c_nu > 0.0) {
            return bad(format!("c_nu = {} must be positive", self.c_nu));
        }
        if self.mode_cutoff_bar < 1 {
            return bad("K_bar must be at least 1".into());
        }
        let s = &self.stability;
        if s.n_orbits < 1 || s.steps < 1 || !(s.dt > 0.0) || !(s.margin >= 1.0) {
            return bad("stability needs n_orbits, steps >= 1, dt > 0 and margin >= 1".into());
        }
        if self.integrate.stride < 1 || self.integrate.dt.is_some_and(|dt| !(dt > 0.0)) {
            return bad("integrate needs stride >= 1 and dt > 0".into());
        }
        self.diophantine().map(|_| ())
    }
}

fn linear_part(h: &FtSeries) -> Vec<f64> {
    let d = h.d();
    (0..d)
        .map(|j| {
            let mut a = vec![0; d];
            a[j] = 1;
            h.coeff(&vec![0; d], &a).re
        })
        .collect()
}
