//! Transmittivity estimation and accuracy / photon-dose budgets, for the
//! squeezed-vacuum method and for a conventional coherent-beam power ratio.

use crate::error::{domain, Error, Result};
use crate::stv::{downstream_unchecked, StvState, VACUUM_VARIANCE};

pub use crate::stats::{fit_linear, LinearFit};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Smallest upstream excess variance / photon number considered measurable.
pub const VACUUM_EPSILON: f64 = 1e-6;

/// Angular optical frequency for a vacuum wavelength in metres.
pub fn angular_frequency(wavelength_m: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / wavelength_m
}

/// A measured value with 1σ uncertainty. `f64` converts to an exact value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub std_error: f64,
}

impl Measured {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0)
    }
}

impl From<f64> for Measured {
    fn from(value: f64) -> Self {
        Self::exact(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    VarianceRatio,
    PhotonRatio,
    NtotRatio,
    NsqRatio,
    NthRatio,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::VarianceRatio => "variance_ratio",
            Method::PhotonRatio => "photon_ratio",
            Method::NtotRatio => "ntot_ratio",
            Method::NsqRatio => "nsq_ratio",
            Method::NthRatio => "nth_ratio",
        }
    }
}

/// Estimated transmittivity. `t_hat` is never clipped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittivityEstimate {
    pub t_hat: f64,
    pub std_error: f64,
    pub method: Method,
}

fn ratio_with_error(num: Measured, den: Measured, method: Method) -> TransmittivityEstimate {
    let t_hat = num.value / den.value;
    let std_error = ((num.std_error / den.value).powi(2)
        + (t_hat * den.std_error / den.value).powi(2))
    .sqrt();
    TransmittivityEstimate {
        t_hat,
        std_error,
        method,
    }
}

/// T as the ratio of down- to upstream excess quadrature variance.
pub fn t_from_variances(
    var_phi_t: impl Into<Measured>,
    var_phi_0: impl Into<Measured>,
) -> Result<TransmittivityEstimate> {
    let (vt, v0) = (var_phi_t.into(), var_phi_0.into());
    if !(vt.value.is_finite() && v0.value.is_finite()) {
        return Err(domain("variances must be finite"));
    }
    let excess0 = v0.value - VACUUM_VARIANCE;
    if excess0.abs() <= VACUUM_EPSILON {
        return Err(Error::Unmeasurable(format!(
            "upstream variance {} is indistinguishable from vacuum",
            v0.value
        )));
    }
    Ok(ratio_with_error(
        Measured::new(vt.value - VACUUM_VARIANCE, vt.std_error),
        Measured::new(excess0, v0.std_error),
        Method::VarianceRatio,
    ))
}

/// `4ΔX_φ² − 1` written in photon numbers.
fn scaled_excess(n_th: f64, n_sq: f64, phi: f64) -> f64 {
    (2.0 * n_th + 1.0) * (1.0 + 2.0 * n_sq + 2.0 * ((1.0 + n_sq) * n_sq).sqrt() * (2.0 * phi).cos()) - 1.0
}

/// T from photon numbers along quadrature φ (exact values; no error propagation).
pub fn t_from_photon_numbers(
    n_th_t: f64,
    n_sq_t: f64,
    n_th_0: f64,
    n_sq_0: f64,
    phi: f64,
) -> Result<TransmittivityEstimate> {
    if [n_th_t, n_sq_t, n_th_0, n_sq_0].iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
        return Err(domain("photon numbers must be finite and non-negative"));
    }
    let den = scaled_excess(n_th_0, n_sq_0, phi);
    if den.abs() <= 4.0 * VACUUM_EPSILON {
        return Err(Error::Unmeasurable(format!(
            "upstream quadrature at φ = {phi} carries no excess noise"
        )));
    }
    Ok(TransmittivityEstimate {
        t_hat: scaled_excess(n_th_t, n_sq_t, phi) / den,
        std_error: 0.0,
        method: Method::PhotonRatio,
    })
}

/// T as the ratio of total photon numbers.
pub fn t_from_ntot(ntot_t: impl Into<Measured>, ntot_0: impl Into<Measured>) -> Result<TransmittivityEstimate> {
    let (nt, n0) = (ntot_t.into(), ntot_0.into());
    if !(nt.value.is_finite() && n0.value.is_finite()) {
        return Err(domain("photon numbers must be finite"));
    }
    if n0.value <= VACUUM_EPSILON {
        return Err(Error::Unmeasurable(format!(
            "upstream total photon number {} is indistinguishable from vacuum",
            n0.value
        )));
    }
    Ok(ratio_with_error(nt, n0, Method::NtotRatio))
}

/// Search interval for inverting the loss map; values above 1 arise from noise.
const INVERSION_T_MAX: f64 = 2.0;
const INVERSION_GRID: usize = 400;

fn invert_loss_map(target: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let mut prev_t = 0.0;
    let mut prev = f(0.0) - target;
    if prev == 0.0 {
        return Some(0.0);
    }
    for k in 1..=INVERSION_GRID {
        let t = INVERSION_T_MAX * k as f64 / INVERSION_GRID as f64;
        let cur = f(t) - target;
        if !cur.is_finite() {
            break;
        }
        if cur == 0.0 {
            return Some(t);
        }
        if cur.signum() != prev.signum() {
            let (mut lo, mut hi, mut flo) = (prev_t, t, prev);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid) - target;
                if fm == 0.0 {
                    return Some(mid);
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_t = t;
        prev = cur;
    }
    None
}

fn invert_channel(
    measured: Measured,
    n_th_0: f64,
    n_sq_0: f64,
    pick: fn(f64, f64, f64) -> f64,
    method: Method,
) -> Result<TransmittivityEstimate> {
    if !(n_th_0 >= 0.0 && n_sq_0 >= 0.0) || !measured.value.is_finite() {
        return Err(domain("photon numbers must be finite and non-negative"));
    }
    if pick(n_th_0, n_sq_0, 1.0) <= VACUUM_EPSILON {
        return Err(Error::Unmeasurable(format!(
            "upstream {} photon number is zero",
            method.name()
        )));
    }
    let f = |t: f64| pick(n_th_0, n_sq_0, t);
    let t_hat = invert_loss_map(measured.value, f).ok_or_else(|| {
        Error::Unmeasurable(format!(
            "{} value {} is outside the range of the loss map on [0, {INVERSION_T_MAX}]",
            method.name(),
            measured.value
        ))
    })?;
    let h = 1e-6;
    let slope = (f((t_hat + h).min(INVERSION_T_MAX)) - f((t_hat - h).max(0.0)))
        / ((t_hat + h).min(INVERSION_T_MAX) - (t_hat - h).max(0.0));
    let std_error = if slope.abs() > 0.0 {
        measured.std_error / slope.abs()
    } else {
        f64::INFINITY
    };
    Ok(TransmittivityEstimate {
        t_hat,
        std_error,
        method,
    })
}

/// T by inverting the downstream squeezing photon number map. The error
/// propagates the downstream uncertainty only (upstream taken as known).
pub fn t_from_nsq(n_sq_t: impl Into<Measured>, n_th_0: f64, n_sq_0: f64) -> Result<TransmittivityEstimate> {
    invert_channel(
        n_sq_t.into(),
        n_th_0,
        n_sq_0,
        |a, b, t| downstream_unchecked(a, b, t).n_sq,
        Method::NsqRatio,
    )
}

/// T by inverting the downstream thermal photon number map.
pub fn t_from_nth(n_th_t: impl Into<Measured>, n_th_0: f64, n_sq_0: f64) -> Result<TransmittivityEstimate> {
    invert_channel(
        n_th_t.into(),
        n_th_0,
        n_sq_0,
        |a, b, t| downstream_unchecked(a, b, t).n_th,
        Method::NthRatio,
    )
}

fn check_open_unit(t: f64) -> Result<()> {
    if t == 0.0 {
        return Err(Error::Unmeasurable("relative error diverges at T = 0".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("transmittivity must lie in (0, 1], got {t}")));
    }
    Ok(())
}

fn check_excess(var_phi_0: f64) -> Result<f64> {
    let e = (var_phi_0 - VACUUM_VARIANCE).abs();
    if !var_phi_0.is_finite() || !(var_phi_0 > 0.0) {
        return Err(domain(format!("variance must be positive, got {var_phi_0}")));
    }
    if e <= VACUUM_EPSILON {
        return Err(Error::Unmeasurable("upstream quadrature is at the vacuum level".into()));
    }
    Ok(e)
}

/// Relative error of T for fixed-phase variance estimates with
/// `δ[ΔX²] = √(2/N)·ΔX²` up- and downstream.
pub fn squeezed_accuracy(var_phi_0: f64, t: f64, n_samples: f64) -> Result<f64> {
    let e = check_excess(var_phi_0)?;
    check_open_unit(t)?;
    if !(n_samples >= 2.0) {
        return Err(domain(format!("need at least 2 samples, got {n_samples}")));
    }
    let inv = 1.0 / t;
    let inner = (1.0 - inv).powi(2) / 16.0 + 0.5 * e * (inv + 3.0 + 4.0 * e);
    Ok((2.0 / n_samples).sqrt() / e * inner.sqrt())
}

/// General propagation from the two variance confidence intervals.
pub fn squeezed_accuracy_general(var_phi_0: f64, t: f64, delta_t: f64, delta_0: f64) -> Result<f64> {
    let e = check_excess(var_phi_0)?;
    check_open_unit(t)?;
    if !(delta_t >= 0.0 && delta_0 >= 0.0) {
        return Err(domain("confidence intervals must be non-negative"));
    }
    Ok(((delta_t / t).powi(2) + delta_0 * delta_0).sqrt() / e)
}

/// Samples needed to reach `rel_error` with [`squeezed_accuracy`].
pub fn squeezed_samples_for_target(var_phi_0: f64, t: f64, rel_error: f64) -> Result<f64> {
    if !(rel_error > 0.0) {
        return Err(domain("target relative error must be positive"));
    }
    let at_two = squeezed_accuracy(var_phi_0, t, 2.0)?;
    Ok(2.0 * (at_two / rel_error).powi(2))
}

/// Photons through the sample: `N_tot · N · κτ_s`.
pub fn squeezed_dose(state: &StvState, n_samples: f64, kappa_tau_s: f64) -> Result<f64> {
    if !(n_samples >= 0.0 && kappa_tau_s >= 0.0) {
        return Err(domain("sample count and κτ_s must be non-negative"));
    }
    Ok(state.total_photons() * n_samples * kappa_tau_s)
}

/// Output photon flux `N_tot / τ` for cavity photon lifetime τ (s).
pub fn photon_flux(n_tot: f64, lifetime: f64) -> Result<f64> {
    if !(lifetime > 0.0) || !(n_tot >= 0.0) {
        return Err(domain("lifetime must be positive and N_tot non-negative"));
    }
    Ok(n_tot / lifetime)
}

/// Coherent-beam power-ratio measurement with a noisy detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalConfig {
    /// Noise-equivalent power (W).
    pub nep: f64,
    /// Detection bandwidth (Hz).
    pub bandwidth: f64,
    /// Optical angular frequency (rad/s).
    pub omega0: f64,
    /// Upstream power over NEP.
    pub snr: f64,
    pub n_samples: f64,
    /// Sampling interval (s).
    pub tau_s: f64,
}

impl ClassicalConfig {
    /// SNR may be zero (no probe light); everything else strictly positive.
    pub fn validate(&self) -> Result<()> {
        let positive = [self.nep, self.bandwidth, self.omega0, self.n_samples, self.tau_s];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(domain("NEP, bandwidth, ω₀, N and τ_s must be finite and positive"));
        }
        if !(self.snr >= 0.0) || !self.snr.is_finite() {
            return Err(domain(format!("SNR must be finite and ≥ 0, got {}", self.snr)));
        }
        Ok(())
    }

    /// `ħω₀B / (NEP·N)`: shot-noise weight in the relative error.
    pub fn shot_factor(&self) -> f64 {
        HBAR * self.omega0 * self.bandwidth / (self.nep * self.n_samples)
    }

    pub fn b_tau_s(&self) -> f64 {
        self.bandwidth * self.tau_s
    }
}

/// Relative error of T = P_T / P_0. Infinite when SNR = 0.
pub fn classical_accuracy(cfg: &ClassicalConfig, t: f64) -> Result<f64> {
    cfg.validate()?;
    check_open_unit(t)?;
    if cfg.snr == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(classical_accuracy_from_factor(cfg.shot_factor(), cfg.snr, t))
}

fn classical_accuracy_from_factor(x: f64, snr: f64, t: f64) -> f64 {
    let down = (1.0 + (x * snr * t).sqrt()) / t;
    let up = 1.0 + (x * snr).sqrt();
    (down * down + up * up).sqrt() / snr
}

/// Smallest SNR reaching `rel_error` in the NEP-dominated limit.
pub fn limiting_snr(t: f64, rel_error: f64) -> Result<f64> {
    check_open_unit(t)?;
    if !(rel_error > 0.0) {
        return Err(domain("target relative error must be positive"));
    }
    Ok((1.0 / rel_error) * (1.0 / (t * t) + 1.0).sqrt())
}

/// Photons through the sample: `SNR · NEP/(ħω₀) · N · τ_s`.
pub fn classical_dose(cfg: &ClassicalConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(cfg.snr * cfg.nep / (HBAR * cfg.omega0) * cfg.n_samples * cfg.tau_s)
}

/// Dose needed for `rel_error` at a given SNR, with the detector described
/// only through `Bτ_s`: solves for the shot weight `x = SNR·Bτ_s/N_ph`.
/// Diverges as SNR approaches [`limiting_snr`] from above.
pub fn classical_dose_for_target(t: f64, rel_error: f64, snr: f64, b_tau_s: f64) -> Result<f64> {
    let floor_snr = limiting_snr(t, rel_error)?;
    if !(b_tau_s > 0.0) {
        return Err(domain("Bτ_s must be positive"));
    }
    if !(snr > floor_snr) {
        return Err(Error::Unmeasurable(format!(
            "SNR {snr} does not exceed the limiting value {floor_snr}"
        )));
    }
    // Accuracy is increasing in x; bracket and bisect on a log scale.
    let g = |x: f64| classical_accuracy_from_factor(x, snr, t) - rel_error;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Unmeasurable("dose inversion did not bracket".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(snr * b_tau_s / x)
}

/// Shot-noise floor of the classical dose (SNR → ∞): `Bτ_s(1/T + 1)/(δT/T)²`.
pub fn classical_dose_floor(t: f64, rel_error: f64, b_tau_s: f64) -> Result<f64> {
    check_open_unit(t)?;
    if !(rel_error > 0.0 && b_tau_s > 0.0) {
        return Err(domain("relative error and Bτ_s must be positive"));
    }
    Ok(b_tau_s * (1.0 / t + 1.0) / (rel_error * rel_error))
}

/// `B_eff / B` for a squeezed-plus-coherent probe at LO angle θ.
pub fn squeezed_coherent_bandwidth(state: &StvState, theta: f64) -> f64 {
    let p = state.photon_numbers();
    1.0 + p.n_sq + p.n_th + 2.0 * p.n_sq * p.n_th + ((1.0 + p.n_sq) * p.n_sq).sqrt() * (2.0 * theta).cos()
}

/// Overall transmittivity of interfaces and slab.
pub fn composite_transmittivity(t1: f64, t_slab: f64, t2: f64) -> Result<f64> {
    for t in [t1, t_slab, t2] {
        if !(0.0..=1.0).contains(&t) {
            return Err(domain(format!("transmittivity must lie in [0, 1], got {t}")));
        }
    }
    Ok(t1 * t_slab * t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Squeezed,
    Classical,
    SqueezedPlusCoherent,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Squeezed => "squeezed",
            Scheme::Classical => "classical",
            Scheme::SqueezedPlusCoherent => "squeezed_plus_coherent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    pub rel_error: f64,
    pub photon_dose: f64,
    pub scheme: Scheme,
}

/// One budget table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRow {
    pub t: f64,
    pub n_samples: f64,
    pub budget: ErrorBudget,
}

pub const BUDGET_HEADER: [&str; 5] = ["scheme", "T", "rel_error", "N", "N_ph"];

pub fn write_budget_csv<W: std::io::Write>(rows: &[BudgetRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BUDGET_HEADER)?;
    for r in rows {
        w.write_record([
            r.budget.scheme.name().to_string(),
            r.t.to_string(),
            r.budget.rel_error.to_string(),
            r.n_samples.to_string(),
            r.budget.photon_dose.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opo::{output_state, OpoParams};
    use crate::stv::downstream_photon_numbers;
    use proptest::prelude::*;

    fn reference_state() -> StvState {
        StvState::from_photon_numbers(0.55, 0.11).unwrap()
    }

    #[test]
    fn variance_ratio_examples() {
        assert_eq!(t_from_variances(0.9, 0.9).unwrap().t_hat, 1.0);
        assert_eq!(t_from_variances(0.25, 0.9).unwrap().t_hat, 0.0);
        let v0 = 1.0073995094027792;
        let vt = 0.25 + 0.64 * (v0 - 0.25);
        assert!((t_from_variances(vt, v0).unwrap().t_hat - 0.64).abs() < 1e-14);
        assert!(matches!(t_from_variances(0.3, 0.25), Err(Error::Unmeasurable(_))));
    }

    #[test]
    fn variance_ratio_error_matches_general_formula() {
        let v0 = 1.0;
        let t = 0.5;
        let vt = 0.25 + t * 0.75;
        let est = t_from_variances(Measured::new(vt, 2e-3), Measured::new(v0, 3e-3)).unwrap();
        let rel = squeezed_accuracy_general(v0, t, 2e-3, 3e-3).unwrap();
        assert!((est.std_error / est.t_hat - rel).abs() < 1e-14);
    }

    #[test]
    fn photon_ratio_examples() {
        assert!((t_from_photon_numbers(0.55, 0.11, 0.55, 0.11, 0.3).unwrap().t_hat - 1.0).abs() < 1e-14);
        assert_eq!(t_from_photon_numbers(0.0, 0.0, 0.55, 0.11, 0.3).unwrap().t_hat, 0.0);
        let d = downstream_photon_numbers(0.55, 0.11, 0.3).unwrap();
        for k in 0..12 {
            let phi = k as f64 * std::f64::consts::PI / 12.0;
            let e = t_from_photon_numbers(d.n_th, d.n_sq, 0.55, 0.11, phi).unwrap();
            assert!((e.t_hat - 0.3).abs() < 1e-10, "φ={phi}: {}", e.t_hat);
        }
        assert!(matches!(
            t_from_photon_numbers(0.0, 0.0, 0.0, 0.0, 0.0),
            Err(Error::Unmeasurable(_))
        ));
    }

    #[test]
    fn ntot_ratio_examples() {
        assert_eq!(t_from_ntot(0.781, 0.781).unwrap().t_hat, 1.0);
        assert!((t_from_ntot(0.5, 0.781).unwrap().t_hat - 0.64).abs() < 1e-3);
        assert!(matches!(t_from_ntot(0.1, 0.0), Err(Error::Unmeasurable(_))));
    }

    #[test]
    fn channel_inversion_recovers_t() {
        for t in [0.05, 0.3, 0.64, 0.9, 1.0] {
            let d = downstream_photon_numbers(0.55, 0.11, t).unwrap();
            assert!((t_from_nsq(d.n_sq, 0.55, 0.11).unwrap().t_hat - t).abs() < 1e-10);
            assert!((t_from_nth(d.n_th, 0.55, 0.11).unwrap().t_hat - t).abs() < 1e-10);
        }
        // Noise can push the downstream value above its upstream value.
        let e = t_from_nsq(Measured::new(0.115, 0.002), 0.55, 0.11).unwrap();
        assert!(e.t_hat > 1.0 && e.std_error > 0.0);
        assert!(matches!(t_from_nsq(0.05, 0.55, 0.0), Err(Error::Unmeasurable(_))));
    }

    #[test]
    fn accuracy_reduces_at_unit_transmittivity() {
        for (v0, n) in [(1.0, 1e6), (0.13, 1e4), (3.2, 50.0), (0.25005, 1e8)] {
            let v: f64 = (v0 - 0.25f64).abs();
            let full = squeezed_accuracy(v0, 1.0, n).unwrap();
            let reduced = (2.0 / n).sqrt() * (2.0 * (1.0 + v) / v).sqrt();
            assert!((full - reduced).abs() <= 1e-12 * reduced, "{full} vs {reduced}");
        }
    }

    #[test]
    fn reference_y_operating_point() {
        // ΔY² of the reference state; the closed form gives 0.0132 at N = 10⁶.
        let y = reference_state().var_y();
        let rel = squeezed_accuracy(y, 1.0, 1e6).unwrap();
        assert!((rel - 0.013170).abs() < 2e-5, "{rel}");
    }

    #[test]
    fn accuracy_grows_towards_zero_transmittivity() {
        let v0 = reference_state().var_x();
        let mut prev = 0.0;
        for k in (1..=100).rev() {
            let t = k as f64 / 100.0;
            let r = squeezed_accuracy(v0, t, 1e6).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        assert!(matches!(squeezed_accuracy(v0, 0.0, 1e6), Err(Error::Unmeasurable(_))));
    }

    #[test]
    fn samples_for_target_inverts_accuracy() {
        let n = squeezed_samples_for_target(1.3, 0.5, 0.01).unwrap();
        assert!((squeezed_accuracy(1.3, 0.5, n).unwrap() - 0.01).abs() < 1e-14);
    }

    #[test]
    fn dose_examples() {
        assert_eq!(squeezed_dose(&StvState::vacuum(), 1e6, 6.0).unwrap(), 0.0);
        let d = squeezed_dose(&reference_state(), 1e6, 6.0).unwrap();
        assert!((d - 4.686e6).abs() < 1.0, "{d}");
        // N_tot ≈ 0.7 and τ ≈ 66 ns give a flux of order 10⁷ s⁻¹.
        let f = photon_flux(0.7, 6.6e-8).unwrap();
        assert!(f > 0.9e7 && f < 1.1e7, "{f}");
    }

    fn detector(snr: f64) -> ClassicalConfig {
        let tau_s = 400e-9;
        ClassicalConfig {
            nep: 1e-9,
            bandwidth: 10.0 / tau_s,
            omega0: angular_frequency(1064e-9),
            snr,
            n_samples: 1e6,
            tau_s,
        }
    }

    #[test]
    fn classical_limits() {
        let r1 = classical_accuracy(&detector(1e6), 0.5).unwrap();
        let r2 = classical_accuracy(&detector(1e12), 0.5).unwrap();
        assert!(r2 < r1 && r2 < 1e-5);
        assert_eq!(classical_accuracy(&detector(0.0), 0.5).unwrap(), f64::INFINITY);
        // NEP-dominated: shot weight 1e-12.
        let mut cfg = detector(50.0);
        cfg.n_samples = HBAR * cfg.omega0 * cfg.bandwidth / (cfg.nep * 1e-12);
        assert!((cfg.shot_factor() - 1e-12).abs() < 1e-24);
        let t = 0.4;
        let lim = (1.0 / 50.0) * (1.0 / (t * t) + 1.0f64).sqrt();
        assert!((classical_accuracy(&cfg, t).unwrap() / lim - 1.0).abs() < 1e-4);
        let snr = limiting_snr(0.5, 0.01).unwrap();
        assert!((snr - 100.0 * 5.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn classical_dose_is_linear() {
        assert_eq!(classical_dose(&detector(0.0)).unwrap(), 0.0);
        let a = classical_dose(&detector(200.0)).unwrap();
        let mut cfg = detector(200.0);
        cfg.n_samples *= 2.0;
        assert!((classical_dose(&cfg).unwrap() / a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dose_for_target_is_consistent() {
        let (t, rel, bts) = (0.5, 0.01, 10.0);
        let snr = 3.0 * limiting_snr(t, rel).unwrap();
        let nph = classical_dose_for_target(t, rel, snr, bts).unwrap();
        let x = snr * bts / nph;
        assert!((classical_accuracy_from_factor(x, snr, t) - rel).abs() < 1e-12);
        let floor = classical_dose_floor(t, rel, bts).unwrap();
        assert!(nph > floor);
        assert!((floor - 3e5).abs() < 1e-6);
        let huge = classical_dose_for_target(t, rel, 1e9, bts).unwrap();
        assert!((huge / floor - 1.0).abs() < 1e-2);
        assert!(classical_dose_for_target(t, rel, limiting_snr(t, rel).unwrap(), bts).is_err());
    }

    #[test]
    fn effective_bandwidth() {
        assert_eq!(squeezed_coherent_bandwidth(&StvState::vacuum(), 0.7), 1.0);
        for s in [0.01, 0.5, 3.0, 100.0, 1e4] {
            let st = StvState::from_photon_numbers(0.0, s).unwrap();
            let f = squeezed_coherent_bandwidth(&st, std::f64::consts::FRAC_PI_2);
            assert!((f - (1.0 + s - (s * (1.0 + s)).sqrt())).abs() < 1e-9 * (1.0 + s));
            assert!(f < 1.0 && f > 0.5);
        }
    }

    #[test]
    fn composite() {
        assert_eq!(composite_transmittivity(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(composite_transmittivity(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!((composite_transmittivity(0.96, 0.7, 0.96).unwrap() - 0.64512).abs() < 1e-15);
        assert!(composite_transmittivity(1.1, 0.5, 1.0).is_err());
    }

    #[test]
    fn squeezed_beats_classical_over_transmittivity_range() {
        let state = output_state(&OpoParams::from_threshold(1.0, 0.5, 0.0, 0.0).unwrap()).unwrap();
        for k in 1..=10 {
            let t = k as f64 / 10.0;
            let n = squeezed_samples_for_target(state.var_x(), t, 0.01).unwrap();
            let sq = squeezed_dose(&state, n, 6.0).unwrap();
            let cl = classical_dose(&detector(limiting_snr(t, 0.01).unwrap())).unwrap();
            println!("T={t:.1}: squeezed/classical dose ratio {:.3e}", sq / cl);
            assert!(sq < cl);
        }
    }

    #[test]
    fn budget_csv_header() {
        let rows = [BudgetRow {
            t: 0.5,
            n_samples: 1e6,
            budget: ErrorBudget {
                rel_error: 0.01,
                photon_dose: 2.0e6,
                scheme: Scheme::Squeezed,
            },
        }];
        let mut buf = Vec::new();
        write_budget_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "scheme,T,rel_error,N,N_ph\nsqueezed,0.5,0.01,1000000,2000000\n");
    }

    proptest! {
        #[test]
        fn closed_form_offset_from_general_propagation(
            v0 in 0.01f64..5.0, t in 0.01f64..1.0, n in 10.0f64..1e7
        ) {
            // Substituting δ = √(2/N)·ΔX² into the general formula does not
            // reproduce the closed form; their squared brackets differ by
            // −1/(8T) + |e| (e > 0) or −1/(8T) + |e|/T + 2|e| (e < 0).
            prop_assume!((v0 - 0.25).abs() > 1e-3);
            let e = v0 - 0.25;
            let vt = 0.25 + t * e;
            let d = |v: f64| (2.0 / n).sqrt() * v;
            let general = squeezed_accuracy_general(v0, t, d(vt), d(v0)).unwrap();
            let closed = squeezed_accuracy(v0, t, n).unwrap();
            let scale = n / 2.0 * e * e;
            let gap = (closed * closed - general * general) * scale;
            let expected = if e > 0.0 {
                -1.0 / (8.0 * t) + e
            } else {
                -1.0 / (8.0 * t) + e.abs() / t + 2.0 * e.abs()
            };
            let size = closed * closed * scale;
            prop_assert!((gap - expected).abs() < 1e-9 * size.max(1.0), "{gap} vs {expected}");
        }

        #[test]
        fn accuracy_nonincreasing_in_samples(v0 in 0.3f64..5.0, t in 0.01f64..1.0, n in 10.0f64..1e6) {
            prop_assert!(squeezed_accuracy(v0, t, 2.0 * n).unwrap() <= squeezed_accuracy(v0, t, n).unwrap());
            let mut a = detector(500.0);
            let r1 = classical_accuracy(&a, t).unwrap();
            a.n_samples *= 2.0;
            prop_assert!(classical_accuracy(&a, t).unwrap() <= r1);
        }

        #[test]
        fn estimators_are_exact_on_noiseless_inputs(
            n_th in 0.0f64..3.0, n_sq in 0.01f64..3.0, t in 0.01f64..1.0
        ) {
            let up = StvState::from_photon_numbers(n_th, n_sq).unwrap();
            let down = up.apply_loss(t).unwrap();
            let pd = down.photon_numbers();
            prop_assert!((t_from_variances(down.var_x(), up.var_x()).unwrap().t_hat - t).abs() < 1e-10);
            prop_assert!((t_from_ntot(down.total_photons(), up.total_photons()).unwrap().t_hat - t).abs() < 1e-10);
            prop_assert!((t_from_photon_numbers(pd.n_th, pd.n_sq, n_th, n_sq, 0.0).unwrap().t_hat - t).abs() < 1e-10);
            prop_assert!((t_from_nsq(pd.n_sq, n_th, n_sq).unwrap().t_hat - t).abs() < 1e-9);
        }
    }
}
