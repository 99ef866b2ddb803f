//! Monte Carlo balanced-homodyne detection of STV states.
//!
//! Each outcome is drawn from a zero-mean Gaussian whose variance is the
//! detected quadrature variance `η ΔX_θ² + (1 − η)/4`, optionally plus
//! additive electronic noise. Samples are generated in fixed-size chunks, and
//! chunk `c` draws from ChaCha stream `c` of the configured seed, so the output
//! is the same for any number of worker threads.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::stats::chunked_sums;
use crate::stv::{StvState, VACUUM_VARIANCE};

/// Samples per RNG stream.
pub const SAMPLE_CHUNK: usize = 1 << 15;

// Reserved stream ids for draws that are not per-chunk.
const OFFSET_STREAM: u64 = u64::MAX;
const JITTER_STREAM: u64 = u64::MAX - 1;

/// How the LO phase is chosen for each sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseStrategy {
    /// All samples at one LO phase.
    Fixed(f64),
    /// `θ_j = offset + 2πj/N` with a seed-dependent global offset.
    UniformScan,
    /// Independent uniform phases on [0, 2π).
    UniformRandom,
}

impl PhaseStrategy {
    pub fn is_scanned(&self) -> bool {
        !matches!(self, PhaseStrategy::Fixed(_))
    }
}

/// Homodyne detector and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub eta: f64,
    pub n_samples: usize,
    /// Sampling interval in seconds.
    pub tau_s: f64,
    pub phase: PhaseStrategy,
    /// Clearance of shot noise over electronic noise in dB; `None` disables it.
    pub electronic_noise_db: Option<f64>,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            n_samples: 100_000,
            tau_s: 400e-9,
            phase: PhaseStrategy::UniformScan,
            electronic_noise_db: None,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(domain(format!("homodyne efficiency must lie in (0, 1], got {}", self.eta)));
        }
        if self.n_samples < 1 {
            return Err(domain("sample count must be at least 1"));
        }
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return Err(domain(format!("sampling interval must be positive, got {}", self.tau_s)));
        }
        if let PhaseStrategy::Fixed(phi) = self.phase {
            if !phi.is_finite() {
                return Err(domain("fixed LO phase must be finite"));
            }
        }
        if let Some(db) = self.electronic_noise_db {
            if !db.is_finite() {
                return Err(domain("electronic noise clearance must be finite"));
            }
        }
        Ok(())
    }

    /// Electronic noise variance: shot noise divided by 10^(clearance/10).
    pub fn electronic_noise_variance(&self) -> f64 {
        match self.electronic_noise_db {
            Some(db) => VACUUM_VARIANCE / 10f64.powf(db / 10.0),
            None => 0.0,
        }
    }

    /// Variance of the recorded signal at LO phase `theta`.
    pub fn detected_variance(&self, state: &StvState, theta: f64) -> f64 {
        self.eta * state.quadrature_variance(theta)
            + (1.0 - self.eta) * VACUUM_VARIANCE
            + self.electronic_noise_variance()
    }
}

/// One homodyne outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSample {
    pub x: f64,
    /// LO phase in [0, 2π).
    pub theta: f64,
}

/// Block-wise fluctuation of the squeezed photon number, used only to produce
/// non-Gaussian test data for the kurtosis diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    /// Relative RMS of the `n_sq` multiplier (log-normal, mean 1).
    pub gain_jitter_rel: f64,
    pub block_size: usize,
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_jitter_rel >= 0.0 && self.gain_jitter_rel.is_finite()) {
            return Err(domain("gain jitter must be finite and ≥ 0"));
        }
        if self.block_size < 1 {
            return Err(domain("jitter block size must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if t >= TAU {
        0.0
    } else {
        t
    }
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn generate<F>(cfg: &DetectionConfig, state_for: F) -> Vec<QuadratureSample>
where
    F: Fn(usize) -> StvState + Sync,
{
    let n = cfg.n_samples;
    let offset = match cfg.phase {
        PhaseStrategy::UniformScan => chunk_rng(cfg.seed, OFFSET_STREAM).random::<f64>() * TAU,
        _ => 0.0,
    };
    let n_chunks = n.div_ceil(SAMPLE_CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(cfg.seed, c as u64);
            let start = c * SAMPLE_CHUNK;
            let end = (start + SAMPLE_CHUNK).min(n);
            let state_for = &state_for;
            (start..end).map(move |j| {
                let theta = match cfg.phase {
                    PhaseStrategy::Fixed(phi) => wrap_phase(phi),
                    PhaseStrategy::UniformScan => wrap_phase(offset + TAU * j as f64 / n as f64),
                    PhaseStrategy::UniformRandom => wrap_phase(rng.random::<f64>() * TAU),
                };
                let var = cfg.detected_variance(&state_for(j), theta);
                let z: f64 = StandardNormal.sample(&mut rng);
                QuadratureSample {
                    x: var.sqrt() * z,
                    theta,
                }
            })
        })
        .collect()
}

/// Draws `cfg.n_samples` homodyne outcomes from `state`.
pub fn sample(state: &StvState, cfg: &DetectionConfig) -> Result<Vec<QuadratureSample>> {
    cfg.validate()?;
    let s = *state;
    Ok(generate(cfg, |_| s))
}

/// Like [`sample`], but the squeezed photon number of the source is rescaled
/// by an independent log-normal factor in every block of `block_size` samples.
/// The output is a scale mixture of Gaussians.
pub fn inject_jitter(
    state: &StvState,
    jitter: &JitterConfig,
    cfg: &DetectionConfig,
) -> Result<Vec<QuadratureSample>> {
    cfg.validate()?;
    jitter.validate()?;
    if jitter.gain_jitter_rel == 0.0 {
        return sample(state, cfg);
    }
    let block_states = jitter_block_states(state, jitter, cfg)?;
    Ok(generate(cfg, |j| block_states[j / jitter.block_size]))
}

/// Per-block source states used by [`inject_jitter`].
pub fn jitter_block_states(
    state: &StvState,
    jitter: &JitterConfig,
    cfg: &DetectionConfig,
) -> Result<Vec<StvState>> {
    let n_blocks = cfg.n_samples.div_ceil(jitter.block_size);
    let sigma2 = (1.0 + jitter.gain_jitter_rel * jitter.gain_jitter_rel).ln();
    let dist = LogNormal::new(-0.5 * sigma2, sigma2.sqrt())
        .map_err(|e| domain(format!("jitter distribution: {e}")))?;
    let mut rng = chunk_rng(cfg.seed, JITTER_STREAM);
    let p = state.photon_numbers();
    (0..n_blocks)
        .map(|_| {
            let m: f64 = dist.sample(&mut rng);
            StvState::from_photon_numbers(p.n_th, p.n_sq * m)
                .map(|s| s.rotated_to(state.orientation()))
        })
        .collect()
}

/// Selects samples whose LO phase is within `half_width` of `center`.
/// Quadrature statistics are π-periodic, so distance is taken modulo π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseWindow {
    pub center: f64,
    pub half_width: f64,
}

impl PhaseWindow {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn contains(&self, theta: f64) -> bool {
        let d = (theta - self.center).rem_euclid(PI);
        d.min(PI - d) <= self.half_width
    }
}

fn windowed(samples: &[QuadratureSample], window: Option<PhaseWindow>) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| window.is_none_or(|w| w.contains(s.theta)))
        .map(|s| s.x)
        .collect()
}

/// Sample variance with its Gaussian confidence `√(2/N)·variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub confidence: f64,
    pub n: usize,
}

/// Unbiased sample variance of `x` over the samples in `window`.
pub fn sample_variance(
    samples: &[QuadratureSample],
    window: Option<PhaseWindow>,
) -> Result<VarianceEstimate> {
    let xs = windowed(samples, window);
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "variance needs at least 2 samples in the window, got {}",
            xs.len()
        )));
    }
    let (_, var) = crate::stats::mean_and_variance(&xs).expect("checked length");
    let n = xs.len();
    Ok(VarianceEstimate {
        value: var,
        confidence: (2.0 / n as f64).sqrt() * var,
        n,
    })
}

/// Excess kurtosis `m₄/m₂² − 3` from central sample moments.
pub fn kurtosis(samples: &[QuadratureSample], window: Option<PhaseWindow>) -> Result<f64> {
    let xs = windowed(samples, window);
    kurtosis_of(&xs)
}

pub fn kurtosis_of(xs: &[f64]) -> Result<f64> {
    if xs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "kurtosis needs at least 4 samples, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let [s1] = chunked_sums(xs, |&x| [x]);
    let mean = s1 / n;
    let [m2, m4] = chunked_sums(xs, |&x| {
        let d = (x - mean) * (x - mean);
        [d, d * d]
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        return Err(Error::InsufficientData("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Writes samples as `theta,x` with shortest round-trip float formatting.
pub fn write_samples_csv<W: Write>(samples: &[QuadratureSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "x"])?;
    for s in samples {
        // Display prints the shortest representation that parses back exactly.
        w.write_record([s.theta.to_string(), s.x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `theta,x` format produced by [`write_samples_csv`].
pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<QuadratureSample>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "theta" || &headers[1] != "x" {
        return Err(Error::Io(format!(
            "expected header `theta,x`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("line {}: {e}", i + 2)))
        };
        let theta = parse(0)?;
        let x = parse(1)?;
        if !(0.0..TAU).contains(&theta) {
            return Err(Error::Io(format!("line {}: theta {theta} outside [0, 2π)", i + 2)));
        }
        out.push(QuadratureSample { x, theta });
    }
    Ok(out)
}
