//! Configuration-driven commands behind the `sqvac` binary.

pub mod config;
mod experiment;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::{
    angular_frequency, classical_accuracy, classical_dose, classical_dose_floor, limiting_snr,
    squeezed_accuracy, squeezed_dose, squeezed_samples_for_target, write_budget_csv, BudgetRow,
    ClassicalConfig, ErrorBudget, Scheme,
};
use crate::homodyne::{
    inject_jitter, kurtosis, read_samples_csv, JitterConfig, PhaseStrategy, PhaseWindow,
};
use crate::opo::{sweep, write_sweep_csv, OpoParams};

pub use config::Config;
pub use experiment::{
    run_experiment, write_experiment, EstimateRow, ExperimentOutput, PointRow, SummaryRow,
    ESTIMATES_HEADER, POINTS_HEADER, SUMMARY_HEADER,
};

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub keep_samples: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.samples {
            cfg.detection.n_samples = n;
        }
        if self.keep_samples {
            if let Some(exp) = cfg.experiment.as_mut() {
                exp.keep_samples = true;
            }
        }
    }
}

/// Process exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub(crate) fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))
}

/// Grid points of the sweep in output order: ψ outermost, then 𝓔, ω and
/// κ₁/κ innermost.
pub fn sweep_grid(cfg: &Config) -> Result<Vec<OpoParams>> {
    let sw = cfg.validate_sweep()?;
    let mut grid = Vec::new();
    for psi in sw.psi.values() {
        for e in sw.threshold.values() {
            for omega in sw.omega.values() {
                for c in sw.coupling.values() {
                    let p = OpoParams::from_threshold(c, e, psi, omega).map_err(|err| {
                        Error::Config(format!(
                            "sweep point (coupling {c}, threshold {e}, psi {psi}, omega {omega}): {err}"
                        ))
                    })?;
                    grid.push(p);
                }
            }
        }
    }
    Ok(grid)
}

pub fn cmd_opo_sweep(cfg: &Config, out_dir: &Path) -> Result<PathBuf> {
    let grid = sweep_grid(cfg)?;
    create_out_dir(out_dir)?;
    let path = out_dir.join("sweep.csv");
    write_sweep_csv(&sweep(&grid), create_file(&path)?)?;
    Ok(path)
}

pub fn cmd_experiment(cfg: &Config, out_dir: &Path) -> Result<ExperimentOutput> {
    let output = run_experiment(cfg)?;
    write_experiment(cfg, &output, out_dir)?;
    Ok(output)
}

/// Budget rows for one source: the squeezed method at the target error, and
/// the classical detector (if configured) at `snr_factor` × limiting SNR.
pub fn budget_rows(cfg: &Config, source_index: Option<usize>) -> Result<Vec<BudgetRow>> {
    let b = cfg.validate_budget()?;
    let state = match source_index {
        Some(i) => b.sources[i].state()?,
        None => cfg.source_state()?,
    };
    let anti = if (state.var_x() - 0.25).abs() >= (state.var_y() - 0.25).abs() {
        state.var_x()
    } else {
        state.var_y()
    };
    let mut rows = Vec::new();
    for t in b.t_values.values() {
        if t == 0.0 {
            continue;
        }
        let n = squeezed_samples_for_target(anti, t, b.rel_error)?;
        rows.push(BudgetRow {
            t,
            n_samples: n,
            budget: ErrorBudget {
                rel_error: squeezed_accuracy(anti, t, n)?,
                photon_dose: squeezed_dose(&state, n, b.kappa_tau_s)?,
                scheme: Scheme::Squeezed,
            },
        });
        if let Some(c) = &b.classical {
            let det = ClassicalConfig {
                nep: c.nep,
                bandwidth: c.b_tau_s / c.tau_s,
                omega0: angular_frequency(c.wavelength),
                snr: c.snr_factor * limiting_snr(t, b.rel_error)?,
                n_samples: c.n_samples,
                tau_s: c.tau_s,
            };
            rows.push(BudgetRow {
                t,
                n_samples: c.n_samples,
                budget: ErrorBudget {
                    rel_error: classical_accuracy(&det, t)?,
                    photon_dose: classical_dose(&det)?,
                    scheme: Scheme::Classical,
                },
            });
        }
    }
    Ok(rows)
}

pub fn cmd_budget(cfg: &Config, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let b = cfg.validate_budget()?;
    let jobs: Vec<(String, Option<usize>)> = if b.sources.is_empty() {
        let label = cfg
            .source
            .as_ref()
            .and_then(|s| s.label.clone())
            .unwrap_or_else(|| "source".into());
        vec![(label, None)]
    } else {
        b.sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.label.clone().unwrap_or_default(), Some(i)))
            .collect()
    };
    create_out_dir(out_dir)?;
    let mut written = Vec::new();
    let mut log = Vec::new();
    for (label, idx) in jobs {
        let rows = budget_rows(cfg, idx)?;
        let path = out_dir.join(format!("budget_{label}.csv"));
        write_budget_csv(&rows, create_file(&path)?)?;
        if let Some(c) = &b.classical {
            for pair in rows.chunks(2) {
                if let [sq, cl] = pair {
                    log.push(format!(
                        "{label} T={}: dose ratio squeezed/classical = {:.4e}; classical shot-noise floor {:.4e}",
                        sq.t,
                        sq.budget.photon_dose / cl.budget.photon_dose,
                        classical_dose_floor(sq.t, b.rel_error, c.b_tau_s)?
                    ));
                }
            }
        }
        written.push(path);
    }
    if !log.is_empty() {
        let path = out_dir.join("budget_log.txt");
        fs::write(&path, log.join("\n") + "\n").map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(written)
}

pub const KURTOSIS_HEADER: [&str; 4] = ["phi", "kurtosis", "n", "gaussian_bound"];

/// Excess kurtosis per LO phase. Synthesizes fixed-phase data from the
/// configured source (optionally with gain jitter), or reads a sample file and
/// selects phase windows. `gaussian_bound` is 3·√(24/n).
pub fn cmd_kurtosis_check(cfg: &Config, input: Option<&Path>, out_dir: &Path) -> Result<PathBuf> {
    let k = cfg.kurtosis.clone().unwrap_or_default();
    if k.phases.is_empty() {
        return Err(Error::Config("kurtosis: phase list is empty".into()));
    }
    let mut rows = Vec::new();
    match input {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
            let samples = read_samples_csv(std::io::BufReader::new(file))?;
            for &phi in &k.phases {
                let w = PhaseWindow::new(phi, k.window_half_width);
                let n = samples.iter().filter(|s| w.contains(s.theta)).count();
                rows.push((phi, kurtosis(&samples, Some(w))?, n));
            }
        }
        None => {
            let state = cfg.source_state()?;
            let jitter = JitterConfig {
                gain_jitter_rel: k.gain_jitter_rel,
                block_size: k.block_size,
            };
            jitter.validate().map_err(|e| Error::Config(format!("kurtosis: {e}")))?;
            for (i, &phi) in k.phases.iter().enumerate() {
                let mut det = cfg.detection.to_config(experiment::cell_seed(cfg.seed, 2, i as u64, 0))?;
                det.phase = PhaseStrategy::Fixed(phi);
                det.n_samples = k.n_samples;
                let samples = inject_jitter(&state, &jitter, &det)?;
                rows.push((phi, kurtosis(&samples, None)?, samples.len()));
            }
        }
    }
    create_out_dir(out_dir)?;
    let path = out_dir.join("kurtosis.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    w.write_record(KURTOSIS_HEADER)?;
    for (phi, kv, n) in rows {
        let bound = 3.0 * (24.0 / n as f64).sqrt();
        w.write_record([phi.to_string(), kv.to_string(), n.to_string(), bound.to_string()])?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::from_toml(text).unwrap()
    }

    #[test]
    fn vacuum_sweep_is_one_row() {
        let c = cfg("schema_version = 1\n[sweep]\ncoupling = [1.0]\nthreshold = [0.0]\n");
        let dir = tempfile::tempdir().unwrap();
        let p = cmd_opo_sweep(&c, dir.path()).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, "kappa1_over_kappa,psi,E,omega,n_th,n_sq,N_tot\n1,0,0,0,0,0,0\n");
    }

    #[test]
    fn detuning_grid_shape() {
        let c = cfg(
            "schema_version = 1\n[sweep]\ncoupling = { start = 0.0, stop = 1.0, count = 11 }\n\
             threshold = [0.5]\npsi = [0.0, 0.5, 1.0]\n",
        );
        assert_eq!(sweep_grid(&c).unwrap().len(), 33);
    }

    #[test]
    fn empty_budget_grid_is_config_error() {
        let c = cfg("schema_version = 1\n[source]\nn_th = 0.1\nn_sq = 0.2\n[budget]\nt_values = []\n");
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_budget(&c, dir.path()).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn budget_rows_hit_the_target() {
        let c = cfg(
            "schema_version = 1\n[budget]\nt_values = [0.25, 0.5, 1.0]\n\
             [[budget.sources]]\nlabel = \"full\"\ncoupling = 1.0\nthreshold = 0.5\n\
             [budget.classical]\nnep = 1e-9\n",
        );
        let rows = budget_rows(&c, Some(0)).unwrap();
        assert_eq!(rows.len(), 6);
        for pair in rows.chunks(2) {
            assert!((pair[0].budget.rel_error - 0.01).abs() < 1e-12);
            assert!(pair[0].budget.photon_dose < pair[1].budget.photon_dose);
        }
    }
}
