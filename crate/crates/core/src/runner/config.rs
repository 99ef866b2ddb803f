//! TOML run configuration. Unknown keys are rejected; every run directory
//! gets a resolved copy so a run can be repeated from that file alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homodyne::{DetectionConfig, PhaseStrategy};
use crate::opo::{output_state, OpoParams};
use crate::stv::StvState;

pub const SCHEMA_VERSION: u32 = 1;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// A list of values, or `count` evenly spaced values from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|k| start + (stop - start) * k as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }

    fn single(v: f64) -> Self {
        Grid::List(vec![v])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kurtosis: Option<KurtosisSection>,
}

/// Source state: either `n_th` + `n_sq`, or OPO parameters
/// (`coupling` = κ₁/κ, `threshold` = 𝓔, `psi` and `omega` in units of κ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl SourceSpec {
    pub fn photon_numbers(n_th: f64, n_sq: f64) -> Self {
        Self {
            label: None,
            n_th: Some(n_th),
            n_sq: Some(n_sq),
            coupling: None,
            threshold: None,
            psi: None,
            omega: None,
        }
    }

    pub fn state(&self) -> Result<StvState> {
        let direct = self.n_th.is_some() || self.n_sq.is_some();
        let opo = self.coupling.is_some()
            || self.threshold.is_some()
            || self.psi.is_some()
            || self.omega.is_some();
        match (direct, opo) {
            (true, false) => {
                let (Some(n_th), Some(n_sq)) = (self.n_th, self.n_sq) else {
                    return Err(config_err("source needs both n_th and n_sq"));
                };
                StvState::from_photon_numbers(n_th, n_sq).map_err(|e| config_err(format!("source: {e}")))
            }
            (false, true) => {
                let (Some(c), Some(e)) = (self.coupling, self.threshold) else {
                    return Err(config_err("OPO source needs coupling and threshold"));
                };
                let params = OpoParams::from_threshold(c, e, self.psi.unwrap_or(0.0), self.omega.unwrap_or(0.0))
                    .map_err(|e| config_err(format!("source: {e}")))?;
                output_state(&params).map_err(|e| config_err(format!("source: {e}")))
            }
            (true, true) => Err(config_err(
                "source must give either photon numbers or OPO parameters, not both",
            )),
            (false, false) => Err(config_err("source is empty")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Scan,
    Random,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_tau_s")]
    pub tau_s: f64,
    #[serde(default = "default_phase")]
    pub phase: PhaseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electronic_noise_db: Option<f64>,
    /// Subtract the modelled electronic noise before unbiasing.
    #[serde(default = "yes")]
    pub correct_electronic_noise: bool,
}

fn default_eta() -> f64 {
    1.0
}
fn default_n_samples() -> usize {
    100_000
}
fn default_tau_s() -> f64 {
    400e-9
}
fn default_phase() -> PhaseMode {
    PhaseMode::Scan
}
fn yes() -> bool {
    true
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            n_samples: default_n_samples(),
            tau_s: default_tau_s(),
            phase: default_phase(),
            fixed_phase: None,
            electronic_noise_db: None,
            correct_electronic_noise: true,
        }
    }
}

impl DetectionSection {
    pub fn to_config(&self, seed: u64) -> Result<DetectionConfig> {
        let phase = match (self.phase, self.fixed_phase) {
            (PhaseMode::Scan, None) => PhaseStrategy::UniformScan,
            (PhaseMode::Random, None) => PhaseStrategy::UniformRandom,
            (PhaseMode::Fixed, Some(p)) => PhaseStrategy::Fixed(p),
            (PhaseMode::Fixed, None) => return Err(config_err("phase = \"fixed\" needs fixed_phase")),
            (_, Some(_)) => return Err(config_err("fixed_phase is only valid with phase = \"fixed\"")),
        };
        let cfg = DetectionConfig {
            eta: self.eta,
            n_samples: self.n_samples,
            tau_s: self.tau_s,
            phase,
            electronic_noise_db: self.electronic_noise_db,
            seed,
        };
        cfg.validate().map_err(|e| config_err(format!("detection: {e}")))?;
        Ok(cfg)
    }
}

/// Which quadrature feeds the variance-ratio estimate of T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureChoice {
    AntiSqueezed,
    Squeezed,
    PhaseAveraged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub t_values: Grid,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    /// Upstream acquisitions; defaults to `repetitions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_repetitions: Option<usize>,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureChoice,
    #[serde(default)]
    pub keep_samples: bool,
    /// Upper bound on the total number of samples written to `samples/`.
    #[serde(default = "default_max_kept")]
    pub max_kept_samples: usize,
}

fn default_reps() -> usize {
    5
}
fn default_quadrature() -> QuadratureChoice {
    QuadratureChoice::AntiSqueezed
}
fn default_max_kept() -> usize {
    20_000_000
}

impl ExperimentSection {
    pub fn reference_repetitions(&self) -> usize {
        self.reference_repetitions.unwrap_or(self.repetitions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub coupling: Grid,
    pub threshold: Grid,
    #[serde(default = "zero_grid")]
    pub psi: Grid,
    #[serde(default = "zero_grid")]
    pub omega: Grid,
}

fn zero_grid() -> Grid {
    Grid::single(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub t_values: Grid,
    #[serde(default = "default_rel_error")]
    pub rel_error: f64,
    #[serde(default = "default_kappa_tau_s")]
    pub kappa_tau_s: f64,
    /// Sources to tabulate; the top-level `[source]` is used when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalSection>,
}

fn default_rel_error() -> f64 {
    0.01
}
fn default_kappa_tau_s() -> f64 {
    6.0
}

/// Coherent-beam comparison detector. SNR is `snr_factor` × the limiting SNR
/// at each T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub nep: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    #[serde(default = "default_b_tau_s")]
    pub b_tau_s: f64,
    #[serde(default = "default_tau_s")]
    pub tau_s: f64,
    #[serde(default = "default_classical_n")]
    pub n_samples: f64,
    #[serde(default = "default_snr_factor")]
    pub snr_factor: f64,
}

fn default_wavelength() -> f64 {
    1064e-9
}
fn default_b_tau_s() -> f64 {
    10.0
}
fn default_classical_n() -> f64 {
    1e6
}
fn default_snr_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KurtosisSection {
    #[serde(default = "default_kurtosis_n")]
    pub n_samples: usize,
    #[serde(default = "default_kurtosis_phases")]
    pub phases: Vec<f64>,
    /// Phase window half-width used on scanned input files.
    #[serde(default = "default_window")]
    pub window_half_width: f64,
    #[serde(default)]
    pub gain_jitter_rel: f64,
    #[serde(default = "default_block")]
    pub block_size: usize,
}

fn default_kurtosis_n() -> usize {
    1_000_000
}
fn default_kurtosis_phases() -> Vec<f64> {
    vec![0.0, std::f64::consts::FRAC_PI_2]
}
fn default_window() -> f64 {
    0.05
}
fn default_block() -> usize {
    4096
}

impl Default for KurtosisSection {
    fn default() -> Self {
        Self {
            n_samples: default_kurtosis_n(),
            phases: default_kurtosis_phases(),
            window_half_width: default_window(),
            gain_jitter_rel: 0.0,
            block_size: default_block(),
        }
    }
}

fn check_transmittivities(name: &str, ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        return Err(config_err(format!("{name}: T grid is empty")));
    }
    if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(config_err(format!("{name}: transmittivity {t} outside [0, 1]")));
    }
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn source_state(&self) -> Result<StvState> {
        self.source
            .as_ref()
            .ok_or_else(|| config_err("missing [source] section"))?
            .state()
    }

    pub fn validate_experiment(&self) -> Result<&ExperimentSection> {
        let exp = self
            .experiment
            .as_ref()
            .ok_or_else(|| config_err("missing [experiment] section"))?;
        check_transmittivities("experiment", &exp.t_values.values())?;
        if exp.repetitions < 1 || exp.reference_repetitions() < 1 {
            return Err(config_err("experiment: repetitions must be at least 1"));
        }
        self.source_state()?;
        self.detection.to_config(self.seed)?;
        Ok(exp)
    }

    pub fn validate_sweep(&self) -> Result<&SweepSection> {
        let sw = self.sweep.as_ref().ok_or_else(|| config_err("missing [sweep] section"))?;
        for (name, g) in [
            ("coupling", &sw.coupling),
            ("threshold", &sw.threshold),
            ("psi", &sw.psi),
            ("omega", &sw.omega),
        ] {
            let v = g.values();
            if v.is_empty() {
                return Err(config_err(format!("sweep: {name} grid is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(config_err(format!("sweep: {name} grid has non-finite values")));
            }
        }
        Ok(sw)
    }

    pub fn validate_budget(&self) -> Result<&BudgetSection> {
        let b = self.budget.as_ref().ok_or_else(|| config_err("missing [budget] section"))?;
        check_transmittivities("budget", &b.t_values.values())?;
        if !(b.rel_error > 0.0 && b.kappa_tau_s > 0.0) {
            return Err(config_err("budget: rel_error and kappa_tau_s must be positive"));
        }
        if b.sources.is_empty() {
            self.source_state()?;
        }
        for s in &b.sources {
            s.state()?;
            if s.label.as_deref().is_none_or(|l| l.is_empty() || l.contains(['/', '\\'])) {
                return Err(config_err("budget: every source needs a file-name-safe label"));
            }
        }
        if let Some(c) = &b.classical {
            let pos = [c.nep, c.wavelength, c.b_tau_s, c.tau_s, c.n_samples, c.snr_factor];
            if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(config_err("budget.classical: all values must be positive"));
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7

[source]
n_th = 0.55
n_sq = 0.11

[detection]
eta = 0.88

[experiment]
t_values = { start = 0.45, stop = 1.0, count = 12 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = Config::from_toml(MINIMAL).unwrap();
        let exp = cfg.validate_experiment().unwrap();
        assert_eq!(exp.t_values.values().len(), 12);
        assert_eq!(exp.repetitions, 5);
        assert_eq!(cfg.detection.n_samples, 100_000);
        let again = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("eta = 0.88", "eta = 0.88\nefficiency = 1");
        assert!(matches!(Config::from_toml(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(Config::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn source_forms() {
        let s = SourceSpec {
            coupling: Some(1.0),
            threshold: Some(0.5),
            ..SourceSpec::photon_numbers(0.0, 0.0)
        };
        assert!(s.state().is_err());
        let s = SourceSpec {
            n_th: None,
            n_sq: None,
            ..s
        };
        assert!(s.state().unwrap().var_x() > 1.0);
    }

    #[test]
    fn grid_values() {
        assert_eq!(Grid::Range { start: 0.0, stop: 1.0, count: 3 }.values(), vec![0.0, 0.5, 1.0]);
        assert!(Grid::List(vec![]).values().is_empty());
    }
}
