//! Below-threshold degenerate OPO: steady-state quadrature spectrum.
//!
//! All rates are normalized to the total cavity damping `κ = κ₁ + κ₂`, so
//! `gamma`, `psi` and `omega` are dimensionless multiples of κ. Gain and
//! detuning fluctuations are not modelled.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::stv::{PhotonNumbers, StvState};

/// Denominators below this magnitude are treated as the threshold singularity.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Cavity and gain parameters, stored normalized to κ = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpoParams {
    kappa1: f64,
    kappa2: f64,
    gamma: f64,
    psi: f64,
    omega: f64,
}

impl OpoParams {
    /// Accepts absolute rates (any common unit) and normalizes them by κ₁ + κ₂.
    pub fn new(kappa1: f64, kappa2: f64, gamma: f64, psi: f64, omega: f64) -> Result<Self> {
        if ![kappa1, kappa2, gamma, psi, omega]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(domain("OPO parameters must be finite"));
        }
        if kappa1 < 0.0 || kappa2 < 0.0 {
            return Err(domain("damping rates must be non-negative"));
        }
        let kappa = kappa1 + kappa2;
        if kappa <= 0.0 {
            return Err(domain("total damping κ₁ + κ₂ must be positive"));
        }
        let p = Self {
            kappa1: kappa1 / kappa,
            kappa2: kappa2 / kappa,
            gamma: gamma / kappa,
            psi: psi / kappa,
            omega: omega / kappa,
        };
        // Stability of the linearized cavity: γ² < κ² + ψ² (𝓔 < 1 on resonance).
        if p.gamma * p.gamma >= 1.0 + p.psi * p.psi {
            return Err(Error::Singular(format!(
                "at or above threshold: γ²/κ² = {} ≥ 1 + ψ²/κ²",
                p.gamma * p.gamma
            )));
        }
        Ok(p)
    }

    /// Parameterization used for design curves: coupling efficiency κ₁/κ,
    /// threshold distance 𝓔 = γ²/κ² and detuning/analysis frequency in units of κ.
    pub fn from_threshold(coupling: f64, threshold: f64, psi: f64, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&coupling) {
            return Err(domain(format!("coupling efficiency must lie in [0, 1], got {coupling}")));
        }
        if !(threshold >= 0.0) {
            return Err(domain(format!("threshold distance must be ≥ 0, got {threshold}")));
        }
        Self::new(coupling, 1.0 - coupling, threshold.sqrt(), psi, omega)
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// κ₁/κ.
    pub fn coupling_efficiency(&self) -> f64 {
        self.kappa1
    }

    /// 𝓔 = γ²/κ².
    pub fn threshold_distance(&self) -> f64 {
        self.gamma * self.gamma
    }

    fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

fn spectrum(p: &OpoParams) -> Result<f64> {
    let (k1, k2, g, psi, w) = (p.kappa1, p.kappa2, p.gamma, p.psi, p.omega);
    let k = k1 + k2;
    let denom = Complex64::new(k * k - g * g - (w * w - psi * psi), 2.0 * w * k);
    let d2 = denom.norm_sqr();
    if d2 < DENOMINATOR_GUARD {
        return Err(Error::Singular(format!(
            "|κ² − γ² − (ω² − ψ²) + 2iωκ|² = {d2:e}"
        )));
    }
    let feed = Complex64::new(k + g, w - psi);
    let num = (denom - 2.0 * k1 * feed).norm_sqr() + 4.0 * k1 * k2 * feed.norm_sqr();
    Ok(num / (4.0 * d2))
}

/// Output variance ΔX² of the φ = 0 quadrature at analysis frequency ω.
pub fn variance_x(params: &OpoParams) -> Result<f64> {
    spectrum(params)
}

/// ΔY²: the same spectrum with γ → −γ.
pub fn variance_y(params: &OpoParams) -> Result<f64> {
    spectrum(&params.with_gamma(-params.gamma))
}

/// STV state emitted at the sampled frequency, squeezing axis at φ = 0.
pub fn output_state(params: &OpoParams) -> Result<StvState> {
    StvState::new(variance_x(params)?, variance_y(params)?)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: OpoParams,
    pub result: Result<SweepValues>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepValues {
    pub photons: PhotonNumbers,
    pub n_tot: f64,
}

/// CSV header of sweep tables.
pub const SWEEP_HEADER: [&str; 7] = [
    "kappa1_over_kappa",
    "psi",
    "E",
    "omega",
    "n_th",
    "n_sq",
    "N_tot",
];

/// Evaluates every grid point (in parallel); rows keep the input order and
/// invalid points carry their error instead of aborting the sweep.
pub fn sweep(grid: &[OpoParams]) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|p| SweepRow {
            params: *p,
            result: output_state(p).map(|s| {
                let photons = s.photon_numbers();
                SweepValues {
                    photons,
                    n_tot: photons.total(),
                }
            }),
        })
        .collect()
}

/// Writes a sweep table; failed rows get empty value fields followed by the
/// error text in an extra trailing `error` column.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SWEEP_HEADER.to_vec();
    let any_err = rows.iter().any(|r| r.result.is_err());
    if any_err {
        header.push("error");
    }
    w.write_record(&header)?;
    for r in rows {
        let p = &r.params;
        let mut rec = vec![
            p.coupling_efficiency().to_string(),
            p.psi().to_string(),
            p.threshold_distance().to_string(),
            p.omega().to_string(),
        ];
        match &r.result {
            Ok(v) => {
                rec.push(v.photons.n_th.to_string());
                rec.push(v.photons.n_sq.to_string());
                rec.push(v.n_tot.to_string());
                if any_err {
                    rec.push(String::new());
                }
            }
            Err(e) => {
                rec.extend([String::new(), String::new(), String::new()]);
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
