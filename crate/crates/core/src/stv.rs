//! Squeezed thermal vacuum (STV) states.
//!
//! A zero-mean single-mode Gaussian state is fixed by its two principal
//! quadrature variances. Quadratures are `X_φ = (a e^{-iφ} + a† e^{iφ}) / 2`,
//! so the vacuum variance is 1/4 everywhere in this crate.
//!
//! The same state is equivalently described by the mean thermal and squeezed
//! photon numbers `(n_th, n_sq)`; conversions in both directions live here,
//! together with the lossy-channel map (a beam splitter of transmittivity `t`
//! mixing in vacuum) and the closed forms for photon numbers after loss.

use std::f64::consts::FRAC_PI_2;

use crate::error::{domain, Error, Result};
use crate::stats::{fit_linear, LinearFit};

/// Quadrature variance of the vacuum (shot-noise level).
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Slack allowed on `16 ΔX² ΔY² ≥ 1` before a state is rejected.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;

/// Zero-mean Gaussian state given by its principal quadrature variances.
///
/// `var_x` is the variance along the LO phase `orientation`, `var_y` the one
/// along `orientation + π/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StvState {
    var_x: f64,
    var_y: f64,
    orientation: f64,
}

/// Mean thermal and squeezed photon numbers of an STV state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonNumbers {
    pub n_th: f64,
    pub n_sq: f64,
}

impl PhotonNumbers {
    pub fn new(n_th: f64, n_sq: f64) -> Self {
        Self { n_th, n_sq }
    }

    /// `N_tot = n_sq + n_th + 2 n_sq n_th`.
    pub fn total(&self) -> f64 {
        self.n_sq + self.n_th + 2.0 * self.n_sq * self.n_th
    }
}

impl StvState {
    /// Builds a state from principal variances, checking the uncertainty relation.
    pub fn new(var_x: f64, var_y: f64) -> Result<Self> {
        Self::with_orientation(var_x, var_y, 0.0)
    }

    pub fn with_orientation(var_x: f64, var_y: f64, orientation: f64) -> Result<Self> {
        if !(var_x.is_finite() && var_y.is_finite() && orientation.is_finite()) {
            return Err(domain("state parameters must be finite"));
        }
        if var_x <= 0.0 || var_y <= 0.0 {
            return Err(domain(format!(
                "quadrature variances must be positive (got {var_x}, {var_y})"
            )));
        }
        let product = 16.0 * var_x * var_y;
        if product < 1.0 - PHYSICALITY_TOLERANCE {
            return Err(domain(format!(
                "non-physical state: 16·ΔX²·ΔY² = {product} < 1"
            )));
        }
        Ok(Self {
            var_x,
            var_y,
            orientation,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            var_x: VACUUM_VARIANCE,
            var_y: VACUUM_VARIANCE,
            orientation: 0.0,
        }
    }

    /// Inverse of [`StvState::photon_numbers`]; squeezing axis at φ = 0.
    pub fn from_photon_numbers(n_th: f64, n_sq: f64) -> Result<Self> {
        if !(n_th.is_finite() && n_sq.is_finite()) || n_th < 0.0 || n_sq < 0.0 {
            return Err(domain(format!(
                "photon numbers must be finite and non-negative (got n_th={n_th}, n_sq={n_sq})"
            )));
        }
        let scale = (2.0 * n_th + 1.0) / 4.0;
        let anti = 2.0 * ((1.0 + n_sq) * n_sq).sqrt();
        let base = 1.0 + 2.0 * n_sq;
        // base - anti = (√(1+n) - √n)², written that way to avoid cancellation.
        let squeezed = ((1.0 + n_sq).sqrt() - n_sq.sqrt()).powi(2);
        Self::new(scale * (base + anti), scale * squeezed)
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn var_y(&self) -> f64 {
        self.var_y
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn rotated_to(self, orientation: f64) -> Self {
        Self {
            orientation,
            ..self
        }
    }

    /// `(n_th, n_sq)`: `n_th = 2(√(ΔX²ΔY²) − 1/4)`,
    /// `n_sq = (√(ΔX²/ΔY²) + √(ΔY²/ΔX²) − 2) / 4`.
    pub fn photon_numbers(&self) -> PhotonNumbers {
        let g = (self.var_x * self.var_y).sqrt();
        // Within the physicality tolerance n_th may come out as -1e-10; clamp.
        let n_th = (2.0 * (g - VACUUM_VARIANCE)).max(0.0);
        // r + 1/r − 2 = (√ΔX² − √ΔY²)² / √(ΔX²ΔY²), free of cancellation near r = 1.
        let d = self.var_x.sqrt() - self.var_y.sqrt();
        let n_sq = d * d / (4.0 * g);
        PhotonNumbers { n_th, n_sq }
    }

    /// Mean photon number `⟨a†a⟩ = n_sq + n_th + 2 n_sq n_th`.
    pub fn total_photons(&self) -> f64 {
        self.photon_numbers().total()
    }

    /// Squeezing parameter |ζ| with `n_sq = sinh²|ζ|`.
    pub fn squeezing_parameter(&self) -> f64 {
        self.photon_numbers().n_sq.sqrt().asinh()
    }

    /// Variance of `X_φ`; equals `var_x` at φ = orientation and `var_y` a quarter
    /// turn later. For `var_x ≥ var_y` this is
    /// `(2n_th+1)/4 · (1 + 2n_sq + 2√((1+n_sq)n_sq) cos 2(φ − orientation))`.
    pub fn quadrature_variance(&self, phi: f64) -> f64 {
        let d = phi - self.orientation;
        let c = (2.0 * d).cos();
        0.5 * (self.var_x + self.var_y) + 0.5 * (self.var_x - self.var_y) * c
    }

    pub fn p_representation(&self) -> PRepresentationParams {
        PRepresentationParams {
            excess_x: self.var_x - VACUUM_VARIANCE,
            excess_y: self.var_y - VACUUM_VARIANCE,
        }
    }

    /// Propagation through a medium of transmittivity `t`: the P-function is
    /// rescaled, so every excess variance over shot noise is multiplied by `t`.
    pub fn apply_loss(&self, t: f64) -> Result<Self> {
        check_transmittivity(t)?;
        let p = self.p_representation().scaled(t);
        Ok(Self {
            var_x: VACUUM_VARIANCE + p.excess_x,
            var_y: VACUUM_VARIANCE + p.excess_y,
            orientation: self.orientation,
        })
    }

    /// Efficiency-limited detection modelled as a beam splitter: `v → ηv + (1−η)/4`.
    pub fn detected(&self, eta: f64) -> Result<Self> {
        self.apply_loss(eta)
    }

    pub fn is_vacuum(&self, tol: f64) -> bool {
        (self.var_x - VACUUM_VARIANCE).abs() <= tol && (self.var_y - VACUUM_VARIANCE).abs() <= tol
    }

    /// Principal variances ordered so the larger one comes first, with the
    /// matching orientation.
    pub fn canonical(&self) -> Self {
        if self.var_x >= self.var_y {
            *self
        } else {
            Self {
                var_x: self.var_y,
                var_y: self.var_x,
                orientation: self.orientation + FRAC_PI_2,
            }
        }
    }
}

/// Excess variances over shot noise; the Gaussian P-function widths.
///
/// Negative values (down to −1/4) mean the P-function is not a regular
/// density along that axis (squeezing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRepresentationParams {
    pub excess_x: f64,
    pub excess_y: f64,
}

impl PRepresentationParams {
    pub fn new(excess_x: f64, excess_y: f64) -> Result<Self> {
        if excess_x < -VACUUM_VARIANCE || excess_y < -VACUUM_VARIANCE {
            return Err(domain(format!(
                "excess variances must be ≥ −1/4 (got {excess_x}, {excess_y})"
            )));
        }
        Ok(Self { excess_x, excess_y })
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            excess_x: t * self.excess_x,
            excess_y: t * self.excess_y,
        }
    }

    /// True when both widths are non-negative, i.e. P is an ordinary Gaussian.
    pub fn is_classical(&self) -> bool {
        self.excess_x >= 0.0 && self.excess_y >= 0.0
    }

    pub fn to_state(&self) -> Result<StvState> {
        StvState::new(
            VACUUM_VARIANCE + self.excess_x,
            VACUUM_VARIANCE + self.excess_y,
        )
    }

    /// Value of the P-function at `β = re + i·im`; only defined for classical widths.
    pub fn density(&self, re: f64, im: f64) -> Option<f64> {
        if self.excess_x <= 0.0 || self.excess_y <= 0.0 {
            return None;
        }
        let norm = 1.0 / (2.0 * std::f64::consts::PI * (self.excess_x * self.excess_y).sqrt());
        Some(norm * (-re * re / (2.0 * self.excess_x) - im * im / (2.0 * self.excess_y)).exp())
    }
}

pub(crate) fn check_transmittivity(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("transmittivity must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Photon numbers after a loss `t`, in closed form:
///
/// ```text
/// 2n_th,T + 1 = √([1 − T + T(1+2n_th)(1+2n_sq)]² − [2T(1+2n_th)√((1+n_sq)n_sq)]²)
/// 2n_sq,T + 1 = [1 − T + T(1+2n_th)(1+2n_sq)] / (2n_th,T + 1)
/// ```
pub fn downstream_photon_numbers(n_th0: f64, n_sq0: f64, t: f64) -> Result<PhotonNumbers> {
    if !(n_th0.is_finite() && n_sq0.is_finite()) || n_th0 < 0.0 || n_sq0 < 0.0 {
        return Err(domain("photon numbers must be finite and non-negative"));
    }
    check_transmittivity(t)?;
    Ok(downstream_unchecked(n_th0, n_sq0, t))
}

/// Same closed form without the range check on `t`; used by the ratio inverters
/// which need to evaluate slightly beyond T = 1.
pub(crate) fn downstream_unchecked(n_th0: f64, n_sq0: f64, t: f64) -> PhotonNumbers {
    let th = 1.0 + 2.0 * n_th0;
    let a = 1.0 - t + t * th * (1.0 + 2.0 * n_sq0);
    let b = 2.0 * t * th * ((1.0 + n_sq0) * n_sq0).sqrt();
    let thermal = ((a - b) * (a + b)).max(0.0).sqrt();
    let squeezed = a / thermal;
    PhotonNumbers {
        n_th: ((thermal - 1.0) / 2.0).max(0.0),
        n_sq: ((squeezed - 1.0) / 2.0).max(0.0),
    }
}

/// Grid used to linearize the photon-number ratios in `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationOptions {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for LinearizationOptions {
    /// The experimentally tested interval T ∈ [0.45, 1].
    fn default() -> Self {
        Self {
            t_min: 0.45,
            t_max: 1.0,
            points: 100,
        }
    }
}

impl LinearizationOptions {
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.t_max - self.t_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.t_min + step * i as f64)
            .collect()
    }
}

/// `n_th,T / n_th,0 ≈ A_th + B_th·T` and `n_sq,T / n_sq,0 ≈ A_sq + B_sq·T`.
/// Each channel is an error when its upstream photon number is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub thermal: Result<LinearFit>,
    pub squeezed: Result<LinearFit>,
}

/// Least-squares linearization of the downstream photon-number ratios.
///
/// When `n_sq0 = 0` the thermal channel is exactly `n_th,T = T n_th0`.
pub fn linearization_coefficients(
    n_th0: f64,
    n_sq0: f64,
    opts: &LinearizationOptions,
) -> Result<Linearization> {
    if !(n_th0 >= 0.0 && n_sq0 >= 0.0) {
        return Err(domain("photon numbers must be non-negative"));
    }
    if opts.points < 50 {
        return Err(domain(format!(
            "linearization grid needs at least 50 points, got {}",
            opts.points
        )));
    }
    if !(0.0 <= opts.t_min && opts.t_min < opts.t_max && opts.t_max <= 1.0) {
        return Err(domain("linearization range must satisfy 0 ≤ t_min < t_max ≤ 1"));
    }
    let ts = opts.grid();
    let rows: Vec<PhotonNumbers> = ts
        .iter()
        .map(|&t| downstream_unchecked(n_th0, n_sq0, t))
        .collect();
    let channel = |upstream: f64, pick: fn(&PhotonNumbers) -> f64, name: &str| {
        if upstream <= 0.0 {
            return Err(Error::Domain(format!(
                "{name} ratio undefined for zero upstream photon number"
            )));
        }
        let ratios: Vec<f64> = rows.iter().map(|p| pick(p) / upstream).collect();
        fit_linear(&ts, &ratios)
    };
    Ok(Linearization {
        thermal: channel(n_th0, |p| p.n_th, "thermal"),
        squeezed: channel(n_sq0, |p| p.n_sq, "squeezed"),
    })
}
