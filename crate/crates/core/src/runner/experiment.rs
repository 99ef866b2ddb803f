//! Synthetic transmittivity experiment: repeated up-stream (reference) and
//! down-stream tomographic acquisitions over a grid of sample transmittivities.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{Config, QuadratureChoice};
use super::{create_file, create_out_dir};
use crate::error::{Error, Result};
use crate::estimator::{t_from_nsq, t_from_nth, t_from_ntot, t_from_variances, Measured};
use crate::homodyne::{sample, write_samples_csv, QuadratureSample};
use crate::stats::{fit_linear, mean_and_variance, LinearFit};
use crate::stv::{linearization_coefficients, LinearizationOptions, StvState};
use crate::tomography::{estimate_state_with, DetectionModel, StateEstimate};

pub const ESTIMATES_HEADER: [&str; 6] = ["t", "repetition", "quantity", "value", "std_error", "n"];
pub const POINTS_HEADER: [&str; 5] = ["t", "quantity", "mean", "std_error", "repetitions"];
pub const SUMMARY_HEADER: [&str; 7] = ["ratio", "source", "A", "A_std_error", "B", "B_std_error", "points"];

/// Quantities aggregated per T and regressed against the true T.
const POINT_QUANTITIES: [&str; 9] = [
    "var_x",
    "var_y",
    "n_th",
    "n_sq",
    "N_tot",
    "t_variance_ratio",
    "t_ntot_ratio",
    "nsq_ratio",
    "nth_ratio",
];

/// Independent seed for one acquisition (`kind` separates reference cells,
/// grid cells and auxiliary runs). SplitMix64 finalizer over the inputs.
pub(crate) fn cell_seed(base: u64, kind: u64, a: u64, b: u64) -> u64 {
    let mut z = base;
    for v in [kind, a, b] {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(v.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// One line of `estimates.csv`; `t = None` marks reference acquisitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub t: Option<f64>,
    pub repetition: usize,
    pub quantity: String,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub t: f64,
    pub quantity: &'static str,
    pub mean: f64,
    pub std_error: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub ratio: &'static str,
    pub source: &'static str,
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub estimates: Vec<EstimateRow>,
    pub points: Vec<PointRow>,
    pub summary: Vec<SummaryRow>,
    pub log: Vec<String>,
    /// Kept acquisitions as (file stem, samples), when requested.
    pub kept_samples: Vec<(String, Vec<QuadratureSample>)>,
}

impl ExperimentOutput {
    pub fn summary_fit(&self, ratio: &str, source: &str) -> Option<LinearFit> {
        self.summary
            .iter()
            .find(|r| r.ratio == ratio && r.source == source)
            .and_then(|r| r.fit)
    }

    pub fn point(&self, t: f64, quantity: &str) -> Option<&PointRow> {
        self.points.iter().find(|p| p.t == t && p.quantity == quantity)
    }
}

struct Cell {
    t_index: Option<usize>,
    rep: usize,
    state: StvState,
    seed: u64,
}

struct CellResult {
    estimate: Result<StateEstimate>,
    samples: Option<Vec<QuadratureSample>>,
}

fn mean_with_error(values: &[f64], single_error: f64) -> (f64, f64) {
    match mean_and_variance(values) {
        Some((m, v)) => (m, (v / values.len() as f64).sqrt()),
        None => (values[0], single_error),
    }
}

fn push(rows: &mut Vec<EstimateRow>, t: Option<f64>, rep: usize, q: &str, v: f64, e: f64, n: usize) {
    rows.push(EstimateRow {
        t,
        repetition: rep,
        quantity: q.to_string(),
        value: v,
        std_error: e,
        n,
    });
}

fn state_rows(rows: &mut Vec<EstimateRow>, t: Option<f64>, rep: usize, est: &StateEstimate) {
    let n = est.var_x.n_used;
    for (q, v, e, _) in crate::tomography::estimate_rows(est) {
        push(rows, t, rep, q, v, e, n);
    }
    if est.clamped {
        push(rows, t, rep, "clamped", 1.0, 0.0, n);
    }
}

/// Runs the experiment in memory. Results do not depend on the thread count.
pub fn run_experiment(cfg: &Config) -> Result<ExperimentOutput> {
    let exp = cfg.validate_experiment()?;
    let upstream = cfg.source_state()?;
    let base_det = cfg.detection.to_config(cfg.seed)?;
    let model = DetectionModel {
        eta: base_det.eta,
        electronic_variance: if cfg.detection.correct_electronic_noise {
            base_det.electronic_noise_variance()
        } else {
            0.0
        },
    };
    let ts = exp.t_values.values();
    let ref_reps = exp.reference_repetitions();

    let mut cells = Vec::new();
    for rep in 0..ref_reps {
        cells.push(Cell {
            t_index: None,
            rep,
            state: upstream,
            seed: cell_seed(cfg.seed, 0, 0, rep as u64),
        });
    }
    for (i, &t) in ts.iter().enumerate() {
        let state = upstream
            .apply_loss(t)
            .map_err(|e| Error::Config(format!("experiment: {e}")))?;
        for rep in 0..exp.repetitions {
            cells.push(Cell {
                t_index: Some(i),
                rep,
                state,
                seed: cell_seed(cfg.seed, 1, i as u64, rep as u64),
            });
        }
    }

    let total_samples = cells.len().saturating_mul(base_det.n_samples);
    let keep = exp.keep_samples && total_samples <= exp.max_kept_samples;
    let mut log = Vec::new();
    log.push(format!(
        "source: var_x={} var_y={} n_th={} n_sq={} N_tot={}",
        upstream.var_x(),
        upstream.var_y(),
        upstream.photon_numbers().n_th,
        upstream.photon_numbers().n_sq,
        upstream.total_photons()
    ));
    log.push(format!(
        "detection: eta={} samples={} electronic_variance_corrected={} seed={}",
        model.eta, base_det.n_samples, model.electronic_variance, cfg.seed
    ));
    log.push(format!(
        "grid: {} transmittivities x {} repetitions, {} reference acquisitions",
        ts.len(),
        exp.repetitions,
        ref_reps
    ));
    if exp.keep_samples && !keep {
        log.push(format!(
            "samples not kept: {total_samples} samples exceed max_kept_samples = {}",
            exp.max_kept_samples
        ));
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|c| {
            let mut det = base_det;
            det.seed = c.seed;
            match sample(&c.state, &det) {
                Ok(s) => CellResult {
                    estimate: estimate_state_with(&s, &model, 0.0),
                    samples: keep.then_some(s),
                },
                Err(e) => CellResult {
                    estimate: Err(e),
                    samples: None,
                },
            }
        })
        .collect();

    let mut estimates = Vec::new();
    let mut kept_samples = Vec::new();
    let mut refs: Vec<StateEstimate> = Vec::new();
    for (c, r) in cells.iter().zip(&results) {
        if c.t_index.is_some() {
            continue;
        }
        match &r.estimate {
            Ok(e) => {
                state_rows(&mut estimates, None, c.rep, e);
                refs.push(*e);
            }
            Err(err) => {
                push(&mut estimates, None, c.rep, "error", f64::NAN, f64::NAN, 0);
                log.push(format!("reference repetition {}: {err}", c.rep));
            }
        }
        if let Some(s) = &r.samples {
            kept_samples.push((format!("ref_r{}", c.rep), s.clone()));
        }
    }
    if refs.is_empty() {
        return Err(Error::InsufficientData("no usable reference acquisition".into()));
    }

    let reference = |f: fn(&StateEstimate) -> (f64, f64)| -> Measured {
        let vals: Vec<f64> = refs.iter().map(|e| f(e).0).collect();
        let (m, s) = mean_with_error(&vals, f(&refs[0]).1);
        Measured::new(m, s)
    };
    let ref_x = reference(|e| (e.var_x.value, e.var_x.std_error));
    let ref_y = reference(|e| (e.var_y.value, e.var_y.std_error));
    let ref_nth = reference(|e| (e.n_th.value, e.n_th.std_error));
    let ref_nsq = reference(|e| (e.n_sq.value, e.n_sq.std_error));
    let ref_ntot = reference(|e| (e.n_tot.value, e.n_tot.std_error));
    let choice = match exp.quadrature {
        QuadratureChoice::AntiSqueezed | QuadratureChoice::Squeezed => {
            let x_larger = (ref_x.value - 0.25).abs() >= (ref_y.value - 0.25).abs();
            let use_x = x_larger == (exp.quadrature == QuadratureChoice::AntiSqueezed);
            if use_x {
                "var_x"
            } else {
                "var_y"
            }
        }
        QuadratureChoice::PhaseAveraged => "phase_averaged",
    };
    let quadrature = |e: &StateEstimate| -> Measured {
        match choice {
            "var_x" => Measured::new(e.var_x.value, e.var_x.std_error),
            "var_y" => Measured::new(e.var_y.value, e.var_y.std_error),
            _ => Measured::new(
                0.5 * (e.var_x.value + e.var_y.value),
                0.5 * e.n_tot.std_error,
            ),
        }
    };
    let ref_q = match choice {
        "var_x" => ref_x,
        "var_y" => ref_y,
        _ => Measured::new(0.5 * (ref_x.value + ref_y.value), 0.5 * ref_ntot.std_error),
    };
    log.push(format!(
        "reference: var_x={}±{} var_y={}±{} n_th={}±{} n_sq={}±{} N_tot={}±{}",
        ref_x.value,
        ref_x.std_error,
        ref_y.value,
        ref_y.std_error,
        ref_nth.value,
        ref_nth.std_error,
        ref_nsq.value,
        ref_nsq.std_error,
        ref_ntot.value,
        ref_ntot.std_error
    ));
    log.push(format!("variance-ratio quadrature: {choice}"));

    let ratio = |num: Measured, den: Measured| -> (f64, f64) {
        let r = num.value / den.value;
        let e = ((num.std_error / den.value).powi(2) + (r * den.std_error / den.value).powi(2)).sqrt();
        (r, e)
    };

    // per_t[i][q] collects (value, std_error) across repetitions.
    let mut per_t: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); POINT_QUANTITIES.len()]; ts.len()];
    for (c, r) in cells.iter().zip(&results) {
        let Some(i) = c.t_index else { continue };
        let t = Some(ts[i]);
        if let Some(s) = &r.samples {
            kept_samples.push((format!("t{i:02}_r{}", c.rep), s.clone()));
        }
        let e = match &r.estimate {
            Ok(e) => e,
            Err(err) => {
                push(&mut estimates, t, c.rep, "error", f64::NAN, f64::NAN, 0);
                log.push(format!("T={} repetition {}: {err}", ts[i], c.rep));
                continue;
            }
        };
        let n = e.var_x.n_used;
        state_rows(&mut estimates, t, c.rep, e);
        let mut derived: Vec<(&str, Result<(f64, f64)>)> = vec![
            (
                "t_variance_ratio",
                t_from_variances(quadrature(e), ref_q).map(|x| (x.t_hat, x.std_error)),
            ),
            (
                "t_ntot_ratio",
                t_from_ntot(Measured::new(e.n_tot.value, e.n_tot.std_error), ref_ntot)
                    .map(|x| (x.t_hat, x.std_error)),
            ),
        ];
        derived.push((
            "nsq_ratio",
            if ref_nsq.value > 0.0 {
                Ok(ratio(Measured::new(e.n_sq.value, e.n_sq.std_error), ref_nsq))
            } else {
                Err(Error::Unmeasurable("upstream n_sq is zero".into()))
            },
        ));
        derived.push((
            "nth_ratio",
            if ref_nth.value > 0.0 {
                Ok(ratio(Measured::new(e.n_th.value, e.n_th.std_error), ref_nth))
            } else {
                Err(Error::Unmeasurable("upstream n_th is zero".into()))
            },
        ));
        derived.push((
            "t_nsq_inversion",
            t_from_nsq(Measured::new(e.n_sq.value, e.n_sq.std_error), ref_nth.value, ref_nsq.value)
                .map(|x| (x.t_hat, x.std_error)),
        ));
        derived.push((
            "t_nth_inversion",
            t_from_nth(Measured::new(e.n_th.value, e.n_th.std_error), ref_nth.value, ref_nsq.value)
                .map(|x| (x.t_hat, x.std_error)),
        ));
        let base = [
            (e.var_x.value, e.var_x.std_error),
            (e.var_y.value, e.var_y.std_error),
            (e.n_th.value, e.n_th.std_error),
            (e.n_sq.value, e.n_sq.std_error),
            (e.n_tot.value, e.n_tot.std_error),
        ];
        for (k, b) in base.into_iter().enumerate() {
            per_t[i][k].push(b);
        }
        for (q, res) in derived {
            match res {
                Ok((v, s)) => {
                    push(&mut estimates, t, c.rep, q, v, s, n);
                    if let Some(k) = POINT_QUANTITIES.iter().position(|p| *p == q) {
                        per_t[i][k].push((v, s));
                    }
                }
                Err(err) => {
                    push(&mut estimates, t, c.rep, q, f64::NAN, f64::NAN, n);
                    log.push(format!("T={} repetition {} {q}: {err}", ts[i], c.rep));
                }
            }
        }
    }

    let mut points = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        for (k, q) in POINT_QUANTITIES.iter().enumerate() {
            let vals = &per_t[i][k];
            if vals.is_empty() {
                continue;
            }
            let xs: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let (mean, se) = mean_with_error(&xs, vals[0].1);
            points.push(PointRow {
                t,
                quantity: q,
                mean,
                std_error: se,
                repetitions: vals.len(),
            });
        }
    }
    for p in points.iter().filter(|p| p.quantity == "t_ntot_ratio") {
        log.push(format!(
            "T={}: T_ntot = {} ± {} ({} repetitions)",
            p.t, p.mean, p.std_error, p.repetitions
        ));
    }

    let mut summary = Vec::new();
    for (name, q) in [
        ("ntot", "t_ntot_ratio"),
        ("variance", "t_variance_ratio"),
        ("nth", "nth_ratio"),
        ("nsq", "nsq_ratio"),
    ] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.quantity == q)
            .map(|p| (p.t, p.mean))
            .unzip();
        let fit = fit_linear(&xs, &ys);
        match &fit {
            Ok(f) => log.push(format!(
                "fit {name} (measured): A = {} ± {}, B = {} ± {}, points = {}",
                f.intercept, f.intercept_std_error, f.slope, f.slope_std_error, f.n_points
            )),
            Err(err) => log.push(format!("fit {name} (measured): {err}")),
        }
        summary.push(SummaryRow {
            ratio: name,
            source: "measured",
            fit: fit.ok(),
        });
    }
    let p0 = upstream.photon_numbers();
    let (t_min, t_max) = ts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let theory = linearization_coefficients(
        p0.n_th,
        p0.n_sq,
        &LinearizationOptions {
            t_min,
            t_max,
            points: 100,
        },
    );
    let exact_ntot = LinearFit {
        intercept: 0.0,
        slope: 1.0,
        intercept_std_error: 0.0,
        slope_std_error: 0.0,
        n_points: 0,
    };
    summary.push(SummaryRow {
        ratio: "ntot",
        source: "theory",
        fit: Some(exact_ntot),
    });
    summary.push(SummaryRow {
        ratio: "variance",
        source: "theory",
        fit: Some(exact_ntot),
    });
    match theory {
        Ok(lin) => {
            for (name, fit) in [("nth", lin.thermal), ("nsq", lin.squeezed)] {
                if let Err(err) = &fit {
                    log.push(format!("fit {name} (theory): {err}"));
                }
                summary.push(SummaryRow {
                    ratio: name,
                    source: "theory",
                    fit: fit.ok(),
                });
            }
        }
        Err(err) => {
            log.push(format!("theory linearization: {err}"));
            for name in ["nth", "nsq"] {
                summary.push(SummaryRow {
                    ratio: name,
                    source: "theory",
                    fit: None,
                });
            }
        }
    }

    Ok(ExperimentOutput {
        estimates,
        points,
        summary,
        log,
        kept_samples,
    })
}

fn t_field(t: Option<f64>) -> String {
    t.map_or_else(|| "ref".to_string(), |t| t.to_string())
}

/// Writes the run directory: `config_echo.toml`, `estimates.csv`,
/// `points.csv`, `summary.csv`, `log.txt` and optionally `samples/`.
pub fn write_experiment(cfg: &Config, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    create_out_dir(dir)?;
    fs::write(dir.join("config_echo.toml"), cfg.to_toml()).map_err(|e| Error::Io(e.to_string()))?;

    let mut w = csv::Writer::from_writer(create_file(&dir.join("estimates.csv"))?);
    w.write_record(ESTIMATES_HEADER)?;
    for r in &out.estimates {
        w.write_record([
            t_field(r.t),
            r.repetition.to_string(),
            r.quantity.clone(),
            r.value.to_string(),
            r.std_error.to_string(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create_file(&dir.join("points.csv"))?);
    w.write_record(POINTS_HEADER)?;
    for p in &out.points {
        w.write_record([
            p.t.to_string(),
            p.quantity.to_string(),
            p.mean.to_string(),
            p.std_error.to_string(),
            p.repetitions.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create_file(&dir.join("summary.csv"))?);
    w.write_record(SUMMARY_HEADER)?;
    for s in &out.summary {
        let (a, ae, b, be, n) = match s.fit {
            Some(f) => (f.intercept, f.intercept_std_error, f.slope, f.slope_std_error, f.n_points),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0),
        };
        w.write_record([
            s.ratio.to_string(),
            s.source.to_string(),
            a.to_string(),
            ae.to_string(),
            b.to_string(),
            be.to_string(),
            n.to_string(),
        ])?;
    }
    w.flush()?;

    let mut log = String::new();
    for line in &out.log {
        let _ = writeln!(log, "{line}");
    }
    fs::write(dir.join("log.txt"), log).map_err(|e| Error::Io(e.to_string()))?;

    if !out.kept_samples.is_empty() {
        let sdir = dir.join("samples");
        create_out_dir(&sdir)?;
        for (stem, s) in &out.kept_samples {
            write_samples_csv(s, create_file(&sdir.join(format!("{stem}.csv")))?)?;
        }
    }
    Ok(())
}
