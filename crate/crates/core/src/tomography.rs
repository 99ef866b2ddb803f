//! Pattern-function estimation of quadrature second moments from
//! phase-scanned homodyne data.
//!
//! For LO phases spread uniformly over [0, 2π) the single-sample kernel
//!
//! ```text
//! R_η[ΔX_φ²](x, θ) = [x² (1 + 2 cos 2(θ − φ)) − (1 − η)/4] / η
//! ```
//!
//! has expectation equal to the *pre-detection* variance of `X_φ`: the phase
//! average picks out the `cos 2θ` Fourier component of `⟨x_θ²⟩`, and the
//! efficiency correction undoes the vacuum admixture `v → ηv + (1−η)/4`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::homodyne::QuadratureSample;
use crate::stats::chunked_sums;
use crate::stv::{StvState, VACUUM_VARIANCE};

/// Minimum sample count accepted by the kernel estimators.
pub const MIN_SAMPLES: usize = 100;

/// Largest tolerated |⟨e^{2iθ}⟩| or |⟨e^{4iθ}⟩| for data to count as phase-scanned.
pub const SCAN_UNIFORMITY_LIMIT: f64 = 0.25;

/// Detection model the kernels invert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    pub eta: f64,
    /// Additive electronic-noise variance (same units as quadratures).
    pub electronic_variance: f64,
}

impl DetectionModel {
    pub fn ideal(eta: f64) -> Self {
        Self {
            eta,
            electronic_variance: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Domain(format!(
                "homodyne efficiency must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if !(self.electronic_variance >= 0.0) {
            return Err(Error::Domain("electronic variance must be ≥ 0".into()));
        }
        Ok(())
    }

    fn offset(&self) -> f64 {
        (1.0 - self.eta) * VACUUM_VARIANCE + self.electronic_variance
    }

    pub fn kernel(&self, x: f64, theta: f64, phi: f64) -> f64 {
        (x * x * (1.0 + 2.0 * (2.0 * (theta - phi)).cos()) - self.offset()) / self.eta
    }
}

/// Single-sample pattern function for `⟨X_φ²⟩` under uniform phase scanning.
pub fn kernel_second_moment(x: f64, theta: f64, phi: f64, eta: f64) -> f64 {
    DetectionModel::ideal(eta).kernel(x, theta, phi)
}

/// Mean of a pattern function with its confidence `√(Var R / N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_used: usize,
}

impl KernelEstimate {
    /// Sample variance of the kernel, `N·std_error²`.
    pub fn kernel_variance(&self) -> f64 {
        self.std_error * self.std_error * self.n_used as f64
    }
}

/// Rejects data that is not spread over the LO phase circle.
pub fn check_phase_scanned(samples: &[QuadratureSample]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "kernel estimation needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let [c2, s2, c4, s4] = chunked_sums(samples, |q| {
        let t = q.theta;
        [
            (2.0 * t).cos(),
            (2.0 * t).sin(),
            (4.0 * t).cos(),
            (4.0 * t).sin(),
        ]
    });
    let r2 = (c2 * c2 + s2 * s2).sqrt() / n;
    let r4 = (c4 * c4 + s4 * s4).sqrt() / n;
    if r2 > SCAN_UNIFORMITY_LIMIT || r4 > SCAN_UNIFORMITY_LIMIT {
        return Err(Error::NotPhaseScanned(format!(
            "LO phases are concentrated (|⟨e^2iθ⟩| = {r2:.3}, |⟨e^4iθ⟩| = {r4:.3}); \
             use homodyne::sample_variance for fixed-phase data"
        )));
    }
    Ok(())
}

fn mean_and_error(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Estimates ΔX_φ² (pre-detection) from phase-scanned samples.
pub fn estimate_variance(samples: &[QuadratureSample], phi: f64, eta: f64) -> Result<KernelEstimate> {
    estimate_variance_with(samples, phi, &DetectionModel::ideal(eta))
}

pub fn estimate_variance_with(
    samples: &[QuadratureSample],
    phi: f64,
    model: &DetectionModel,
) -> Result<KernelEstimate> {
    model.validate()?;
    check_phase_scanned(samples)?;
    let [s, ss] = chunked_sums(samples, |q| {
        let r = model.kernel(q.x, q.theta, phi);
        [r, r * r]
    });
    let (value, std_error) = mean_and_error(s, ss, samples.len());
    Ok(KernelEstimate {
        value,
        std_error,
        n_used: samples.len(),
    })
}

/// Phase-averaged second moment `(ΔX² + ΔY²)/2 = (2n_th+1)(2n_sq+1)/4`.
pub fn estimate_phase_averaged(samples: &[QuadratureSample], model: &DetectionModel) -> Result<KernelEstimate> {
    model.validate()?;
    check_phase_scanned(samples)?;
    let [s, ss] = chunked_sums(samples, |q| {
        let r = (q.x * q.x - model.offset()) / model.eta;
        [r, r * r]
    });
    let (value, std_error) = mean_and_error(s, ss, samples.len());
    Ok(KernelEstimate {
        value,
        std_error,
        n_used: samples.len(),
    })
}

/// Closed-form kernel variance `C₀ + C₁ cos 2φ + C₂ cos 4φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl AppendixCoefficients {
    pub fn new(var_x: f64, var_y: f64, eta: f64) -> Self {
        let (x, y) = (var_x, var_y);
        let c0 = 0.25
            * (13.5 * (x * x + y * y) + 9.0 * x * y + (1.0 - 3.0 / eta) * (x + y)
                + 0.25 * (3.0 / (eta * eta) - 2.0 / eta + 1.0));
        let c1 = 0.5 * (x - y) * (3.0 * (x + y) - 1.0);
        let c2 = 0.375 * (x - y) * (x - y);
        Self { c0, c1, c2 }
    }

    pub fn evaluate(&self, phi: f64) -> f64 {
        self.c0 + self.c1 * (2.0 * phi).cos() + self.c2 * (4.0 * phi).cos()
    }
}

/// Tabulated kernel variance for a state, with φ measured from its squeezing axis.
pub fn appendix_variance(state_observed: &StvState, phi: f64, eta: f64) -> f64 {
    AppendixCoefficients::new(state_observed.var_x(), state_observed.var_y(), eta)
        .evaluate(phi - state_observed.orientation())
}

/// Exact variance of [`kernel_second_moment`] for Gaussian data with uniform
/// phases, by trapezoidal quadrature over θ (spectrally accurate for the
/// trigonometric integrand). Independent of the Monte Carlo path.
pub fn kernel_variance_exact(state: &StvState, phi: f64, model: &DetectionModel) -> f64 {
    let n = 4096;
    let off = model.offset();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let th = std::f64::consts::TAU * k as f64 / n as f64;
        let v = model.eta * state.quadrature_variance(th) + off;
        let a = 1.0 + 2.0 * (2.0 * (th - phi)).cos();
        // E[x²] = v, E[x⁴] = 3v² for a zero-mean Gaussian.
        m1 += (v * a - off) / model.eta;
        m2 += (3.0 * v * v * a * a - 2.0 * off * v * a + off * off) / (model.eta * model.eta);
    }
    m1 /= n as f64;
    m2 /= n as f64;
    m2 - m1 * m1
}

/// Value with a first-order propagated 1σ error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimated {
    pub value: f64,
    pub std_error: f64,
}

/// Tomographic state estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub var_x: KernelEstimate,
    pub var_y: KernelEstimate,
    /// Covariance of the two variance estimates (same samples).
    pub covariance_xy: f64,
    /// Physical state used for the photon numbers; clamped if needed.
    pub state: StvState,
    pub n_th: Estimated,
    pub n_sq: Estimated,
    pub n_tot: Estimated,
    /// True when the raw estimate violated `16 ΔX² ΔY² ≥ 1` and was projected
    /// onto the physical boundary.
    pub clamped: bool,
}

/// Estimates ΔX², ΔY² along φ = 0, π/2 and derives `(n_th, n_sq, N_tot)`.
pub fn estimate_state(samples: &[QuadratureSample], eta: f64) -> Result<StateEstimate> {
    estimate_state_with(samples, &DetectionModel::ideal(eta), 0.0)
}

/// General form: detection model and squeezing-axis orientation.
pub fn estimate_state_with(
    samples: &[QuadratureSample],
    model: &DetectionModel,
    orientation: f64,
) -> Result<StateEstimate> {
    model.validate()?;
    check_phase_scanned(samples)?;
    let phi_y = orientation + FRAC_PI_2;
    let [sx, sy, sxx, syy, sxy] = chunked_sums(samples, |q| {
        let rx = model.kernel(q.x, q.theta, orientation);
        let ry = model.kernel(q.x, q.theta, phi_y);
        [rx, ry, rx * rx, ry * ry, rx * ry]
    });
    let n = samples.len();
    let nf = n as f64;
    let (vx, ex) = mean_and_error(sx, sxx, n);
    let (vy, ey) = mean_and_error(sy, syy, n);
    let cov = (sxy - nf * vx * vy) / (nf - 1.0) / nf;
    let var_x = KernelEstimate {
        value: vx,
        std_error: ex,
        n_used: n,
    };
    let var_y = KernelEstimate {
        value: vy,
        std_error: ey,
        n_used: n,
    };
    Ok(derive_state(var_x, var_y, cov, orientation))
}

fn clamp_to_physical(x: f64, y: f64) -> (f64, f64, bool) {
    let floor = 1e-12;
    match (x > 0.0, y > 0.0) {
        (false, false) => (VACUUM_VARIANCE, VACUUM_VARIANCE, true),
        (true, false) => (x.max(VACUUM_VARIANCE), 1.0 / (16.0 * x.max(VACUUM_VARIANCE)), true),
        (false, true) => (1.0 / (16.0 * y.max(VACUUM_VARIANCE)), y.max(VACUUM_VARIANCE), true),
        (true, true) if 16.0 * x * y < 1.0 => {
            let s = 1.0 / (4.0 * (x * y).sqrt());
            ((s * x).max(floor), (s * y).max(floor), true)
        }
        _ => (x, y, false),
    }
}

fn derive_state(var_x: KernelEstimate, var_y: KernelEstimate, cov: f64, orientation: f64) -> StateEstimate {
    let (x, y, clamped) = clamp_to_physical(var_x.value, var_y.value);
    let state = StvState::with_orientation(x, y, orientation)
        .expect("clamped variances satisfy the uncertainty relation");
    let p = state.photon_numbers();
    let (ex, ey) = (var_x.std_error, var_y.std_error);
    let propagate = |gx: f64, gy: f64| {
        (gx * gx * ex * ex + gy * gy * ey * ey + 2.0 * gx * gy * cov)
            .max(0.0)
            .sqrt()
    };
    let g = (x * y).sqrt();
    let n_th = Estimated {
        value: p.n_th,
        std_error: propagate((y / x).sqrt(), (x / y).sqrt()),
    };
    let k = 1.0 / (8.0 * g);
    let n_sq = Estimated {
        value: p.n_sq,
        std_error: propagate(k * (1.0 - y / x), k * (1.0 - x / y)),
    };
    // N_tot = ΔX² + ΔY² − 1/2.
    let n_tot = Estimated {
        value: p.total(),
        std_error: propagate(1.0, 1.0),
    };
    StateEstimate {
        var_x,
        var_y,
        covariance_xy: cov,
        state,
        n_th,
        n_sq,
        n_tot,
        clamped,
    }
}

/// Squeezing-axis orientation and mean field from the low Fourier components
/// of phase-scanned data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationFit {
    /// LO phase of the largest quadrature variance, in [0, π).
    pub orientation: f64,
    /// Pre-detection mean of `X_φ` is `mean_x cos φ + mean_y sin φ`.
    pub mean_x: f64,
    pub mean_y: f64,
}

pub fn fit_orientation(samples: &[QuadratureSample], model: &DetectionModel) -> Result<OrientationFit> {
    model.validate()?;
    check_phase_scanned(samples)?;
    let n = samples.len() as f64;
    let [c2, s2, mc, ms] = chunked_sums(samples, |q| {
        let t = q.theta;
        let x2 = q.x * q.x;
        [x2 * (2.0 * t).cos(), x2 * (2.0 * t).sin(), q.x * t.cos(), q.x * t.sin()]
    });
    let orientation = (0.5 * (s2 / n).atan2(c2 / n)).rem_euclid(std::f64::consts::PI);
    let scale = 2.0 / (n * model.eta.sqrt());
    Ok(OrientationFit {
        orientation,
        mean_x: mc * scale,
        mean_y: ms * scale,
    })
}

/// State estimate along a fitted squeezing axis, with the mean field removed.
pub fn estimate_state_oriented(
    samples: &[QuadratureSample],
    model: &DetectionModel,
) -> Result<(OrientationFit, StateEstimate)> {
    let fit = fit_orientation(samples, model)?;
    let est = estimate_state_with(samples, model, fit.orientation)?;
    let mean_along = |phi: f64| fit.mean_x * phi.cos() + fit.mean_y * phi.sin();
    let mx = mean_along(fit.orientation);
    let my = mean_along(fit.orientation + FRAC_PI_2);
    let var_x = KernelEstimate {
        value: est.var_x.value - mx * mx,
        ..est.var_x
    };
    let var_y = KernelEstimate {
        value: est.var_y.value - my * my,
        ..est.var_y
    };
    Ok((fit, derive_state(var_x, var_y, est.covariance_xy, fit.orientation)))
}

/// Quantity rows in the `quantity,value,std_error,n` estimate format.
pub fn estimate_rows(est: &StateEstimate) -> Vec<(&'static str, f64, f64, usize)> {
    let n = est.var_x.n_used;
    vec![
        ("var_x", est.var_x.value, est.var_x.std_error, n),
        ("var_y", est.var_y.value, est.var_y.std_error, n),
        ("n_th", est.n_th.value, est.n_th.std_error, n),
        ("n_sq", est.n_sq.value, est.n_sq.std_error, n),
        ("N_tot", est.n_tot.value, est.n_tot.std_error, n),
    ]
}

pub const ESTIMATE_HEADER: [&str; 4] = ["quantity", "value", "std_error", "n"];

pub fn write_estimates_csv<W: std::io::Write>(est: &StateEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for (q, v, e, n) in estimate_rows(est) {
        w.write_record([q.to_string(), v.to_string(), e.to_string(), n.to_string()])?;
    }
    if est.clamped {
        w.write_record(["clamped", "1", "0", &n_string(est)])?;
    }
    w.flush()?;
    Ok(())
}

fn n_string(est: &StateEstimate) -> String {
    est.var_x.n_used.to_string()
}
