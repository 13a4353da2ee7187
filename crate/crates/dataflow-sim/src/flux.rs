//! Throttling functions, the macroscopic flux and its derivatives.
//!
//! Two layers live here. [`Throttle`] carries the two shape constants
//! (`rho_star`, `eta`) and exposes infallible `#[inline]` kernels for the
//! solvers' inner loops. The free functions ([`flux_phi`], [`dphi_drho`], ...)
//! validate their arguments and delegate to those kernels.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Densities below this are treated as empty when forming `sigma / rho`.
pub const RHO_FLOOR: f64 = 1e-14;

/// Processing rate field α(t, x), in units of 1/time.
#[derive(Clone)]
pub enum RateField {
    /// Same rate everywhere and always.
    Uniform(f64),
    /// Rate depending on position only.
    Profile(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Rate depending on time and position.
    Varying(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Piecewise constant values on `n` equal cells of the periodic unit interval.
    Sampled(Arc<[f64]>),
}

impl RateField {
    pub fn profile(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RateField::Profile(Arc::new(f))
    }

    pub fn varying(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        RateField::Varying(Arc::new(f))
    }

    pub fn sampled(values: Vec<f64>) -> Self {
        RateField::Sampled(values.into())
    }

    /// Rate at time `t` and position `x` (taken modulo 1).
    pub fn at(&self, t: f64, x: f64) -> f64 {
        match self {
            RateField::Uniform(a) => *a,
            RateField::Profile(f) => f(x.rem_euclid(1.0)),
            RateField::Varying(f) => f(t, x.rem_euclid(1.0)),
            RateField::Sampled(v) => {
                let n = v.len();
                let i = ((x.rem_euclid(1.0) * n as f64).floor() as usize).min(n - 1);
                v[i]
            }
        }
    }

    /// Rates at time `t` on the given positions.
    pub fn sample(&self, t: f64, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.at(t, x)).collect()
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, RateField::Varying(_))
    }
}

impl fmt::Debug for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateField::Uniform(a) => f.debug_tuple("Uniform").field(a).finish(),
            RateField::Profile(_) => f.write_str("Profile(<fn>)"),
            RateField::Varying(_) => f.write_str("Varying(<fn>)"),
            RateField::Sampled(v) => write!(f, "Sampled({} cells)", v.len()),
        }
    }
}

/// Model constants plus the rate field.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Density at which a processor runs at full rate.
    pub rho_star: f64,
    /// Coupling strength between neighbouring processors.
    pub eta: f64,
    /// Plateau density behind a front.
    pub r: f64,
    /// Mean processing rate.
    pub alpha_bar: f64,
    pub alpha: RateField,
}

impl ModelParams {
    /// Parameters with plateau `r = 0.5` and a uniform rate of `0.1`.
    pub fn new(rho_star: f64, eta: f64) -> Result<Self> {
        let p = ModelParams {
            rho_star,
            eta,
            r: 0.5,
            alpha_bar: 0.1,
            alpha: RateField::Uniform(0.1),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_plateau(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    /// Replaces the rate field; a uniform field also sets `alpha_bar`.
    pub fn with_rate(mut self, alpha: RateField) -> Self {
        if let RateField::Uniform(a) = alpha {
            self.alpha_bar = a;
        }
        self.alpha = alpha;
        self
    }

    pub fn with_alpha_bar(mut self, alpha_bar: f64) -> Self {
        self.alpha_bar = alpha_bar;
        self
    }

    pub fn throttle(&self) -> Throttle {
        Throttle {
            rho_star: self.rho_star,
            eta: self.eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_star.is_finite() && self.rho_star > 0.0) {
            return Err(Error::Config(format!(
                "rho_star must be positive, got {}",
                self.rho_star
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !self.r.is_finite() || self.r < 0.0 {
            return Err(Error::Config(format!(
                "r must be non-negative, got {}",
                self.r
            )));
        }
        if !self.alpha_bar.is_finite() || self.alpha_bar < 0.0 {
            return Err(Error::Config(format!(
                "alpha_bar must be non-negative, got {}",
                self.alpha_bar
            )));
        }
        match &self.alpha {
            RateField::Uniform(a) if !a.is_finite() || *a < 0.0 => Err(Error::Config(format!(
                "alpha must be non-negative, got {a}"
            ))),
            RateField::Sampled(v) if v.is_empty() => Err(Error::Config("empty rate table".into())),
            RateField::Sampled(v) => match v.iter().find(|a| !a.is_finite() || **a < 0.0) {
                Some(a) => Err(Error::Config(format!(
                    "alpha must be non-negative, got {a}"
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Checks the front-scenario requirement `0 < r < rho_star`.
    pub fn validate_front(&self) -> Result<()> {
        if self.r > 0.0 && self.r < self.rho_star {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "front data needs 0 < r < rho_star, got r = {} and rho_star = {}",
                self.r, self.rho_star
            )))
        }
    }
}

/// Shape constants of the throttling functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Throttle {
    pub rho_star: f64,
    pub eta: f64,
}

impl Throttle {
    /// Linear ramp `min(max(u / rho_star, 0), 1)`.
    #[inline]
    pub fn w1(&self, u: f64) -> f64 {
        (u / self.rho_star).clamp(0.0, 1.0)
    }

    /// One-sided starvation factor `min(1, max(1 + eta s, 0))`.
    #[inline]
    pub fn w2_bar(&self, s: f64) -> f64 {
        (1.0 + self.eta * s).clamp(0.0, 1.0)
    }

    /// Tent `max(0, 1 - eta |s|)`.
    #[inline]
    pub fn tent(&self, s: f64) -> f64 {
        (1.0 - self.eta * s.abs()).max(0.0)
    }

    /// Derivative of the tent with `0` at the peak and the inner slope at the feet.
    #[inline]
    pub fn tent_slope(&self, s: f64) -> f64 {
        if s == 0.0 || self.eta * s.abs() > 1.0 {
            0.0
        } else {
            -self.eta * s.signum()
        }
    }

    /// Usable amount `min(u, max(u + eta v1, 0), max(u + eta v2, 0))`.
    #[inline]
    pub fn w2(&self, u: f64, v1: f64, v2: f64) -> f64 {
        u.min((u + self.eta * v1).max(0.0))
            .min((u + self.eta * v2).max(0.0))
    }

    /// Flux `alpha w1(rho W2(sigma / rho))`, zero for empty cells.
    #[inline]
    pub fn phi(&self, rho: f64, sigma: f64, alpha: f64) -> f64 {
        if rho < RHO_FLOOR {
            return 0.0;
        }
        let u = rho * self.tent(sigma / rho);
        if u < self.rho_star {
            alpha * u / self.rho_star
        } else {
            alpha
        }
    }

    /// Flux with separate forward and backward neighbour differences.
    ///
    /// `sigma_fwd` couples to the right neighbour and `sigma_bwd` to the left;
    /// with both equal to `sigma` this is [`Throttle::phi`].
    #[inline]
    pub fn phi_split(&self, rho: f64, sigma_fwd: f64, sigma_bwd: f64, alpha: f64) -> f64 {
        if rho < RHO_FLOOR {
            return 0.0;
        }
        alpha * self.w1(self.w2(rho, sigma_fwd, -sigma_bwd))
    }

    /// Characteristic speed of [`Throttle::phi_split`] in the density.
    #[inline]
    pub fn split_speed(&self, rho: f64, sigma_fwd: f64, sigma_bwd: f64, alpha: f64) -> f64 {
        if rho < RHO_FLOOR {
            return 0.0;
        }
        let u = self.w2(rho, sigma_fwd, -sigma_bwd);
        if u > 0.0 && u < self.rho_star {
            alpha / self.rho_star
        } else {
            0.0
        }
    }

    #[inline]
    pub fn dphi_drho(&self, rho: f64, sigma: f64, alpha: f64) -> f64 {
        if rho < RHO_FLOOR {
            return 0.0;
        }
        let s = sigma / rho;
        if self.eta * s.abs() > 1.0 || rho * self.tent(s) >= self.rho_star {
            0.0
        } else {
            // W2 - s W2' collapses to 1 on the closed tent.
            alpha / self.rho_star
        }
    }

    #[inline]
    pub fn dphi_dsigma(&self, rho: f64, sigma: f64, alpha: f64) -> f64 {
        if rho < RHO_FLOOR {
            return 0.0;
        }
        let s = sigma / rho;
        if rho * self.tent(s) >= self.rho_star {
            0.0
        } else {
            alpha / self.rho_star * self.tent_slope(s)
        }
    }
}

fn finite(op: &'static str, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(op, format!("{name} = {v} is not finite")))
    }
}

fn positive(op: &'static str, name: &str, v: f64) -> Result<f64> {
    if finite(op, name, v)? > 0.0 {
        Ok(v)
    } else {
        Err(Error::domain(op, format!("{name} = {v} must be positive")))
    }
}

fn checked(
    op: &'static str,
    rho: f64,
    sigma: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<Throttle> {
    finite(op, "rho", rho)?;
    finite(op, "sigma", sigma)?;
    if finite(op, "alpha", alpha)? < 0.0 {
        return Err(Error::domain(op, format!("alpha = {alpha} is negative")));
    }
    positive(op, "rho_star", params.rho_star)?;
    positive(op, "eta", params.eta)?;
    Ok(params.throttle())
}

pub fn ramp_w1(u: f64, rho_star: f64) -> Result<f64> {
    finite("ramp_w1", "u", u)?;
    positive("ramp_w1", "rho_star", rho_star)?;
    Ok((u / rho_star).clamp(0.0, 1.0))
}

pub fn w2_bar(s: f64, eta: f64) -> Result<f64> {
    finite("w2_bar", "s", s)?;
    positive("w2_bar", "eta", eta)?;
    Ok((1.0 + eta * s).clamp(0.0, 1.0))
}

pub fn symmetric_w2(s: f64, eta: f64) -> Result<f64> {
    finite("symmetric_w2", "s", s)?;
    positive("symmetric_w2", "eta", eta)?;
    Ok((1.0 - eta * s.abs()).max(0.0))
}

/// Three-argument throttle `min(u, max(u + eta v1, 0), max(u + eta v2, 0))`.
pub fn throttle_w2(u: f64, v1: f64, v2: f64, eta: f64) -> Result<f64> {
    for (name, v) in [("u", u), ("v1", v1), ("v2", v2)] {
        finite("throttle_w2", name, v)?;
    }
    positive("throttle_w2", "eta", eta)?;
    Ok(Throttle { rho_star: 1.0, eta }.w2(u, v1, v2))
}

/// Macroscopic flux Φ(ρ, σ) in `[0, alpha]`.
pub fn flux_phi(rho: f64, sigma: f64, alpha: f64, params: &ModelParams) -> Result<f64> {
    let th = checked("flux_phi", rho, sigma, alpha, params)?;
    if rho < 0.0 {
        return Err(Error::domain(
            "flux_phi",
            format!("density {rho} is negative"),
        ));
    }
    Ok(th.phi(rho, sigma, alpha))
}

/// ∂Φ/∂ρ, using `W2'(0) = 0` and the inner slope at `|s| = 1/eta`.
pub fn dphi_drho(rho: f64, sigma: f64, alpha: f64, params: &ModelParams) -> Result<f64> {
    let th = checked("dphi_drho", rho, sigma, alpha, params)?;
    if rho <= 0.0 {
        return Err(Error::domain(
            "dphi_drho",
            format!("density {rho} must be positive"),
        ));
    }
    Ok(th.dphi_drho(rho, sigma, alpha))
}

/// ∂Φ/∂σ with the same kink convention as [`dphi_drho`].
pub fn dphi_dsigma(rho: f64, sigma: f64, alpha: f64, params: &ModelParams) -> Result<f64> {
    let th = checked("dphi_dsigma", rho, sigma, alpha, params)?;
    if rho <= 0.0 {
        return Err(Error::domain(
            "dphi_dsigma",
            format!("density {rho} must be positive"),
        ));
    }
    Ok(th.dphi_dsigma(rho, sigma, alpha))
}

/// Discriminant of the relaxation system's characteristic polynomial at
/// wave vector `(xi1, xi2)`; negative means complex eigenvalues.
///
/// Valid only on the open tent `0 < |s| < 1/eta`.
pub fn hyperbolicity_discriminant(
    xi1: f64,
    xi2: f64,
    s: f64,
    eps: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<f64> {
    const OP: &str = "hyperbolicity_discriminant";
    for (name, v) in [("xi1", xi1), ("xi2", xi2), ("s", s), ("alpha", alpha)] {
        finite(OP, name, v)?;
    }
    positive(OP, "eps", eps)?;
    let (rs, eta) = (
        positive(OP, "rho_star", params.rho_star)?,
        positive(OP, "eta", params.eta)?,
    );
    if s == 0.0 || eta * s.abs() >= 1.0 {
        return Err(Error::domain(
            OP,
            format!("s = {s} outside 0 < |s| < 1/eta"),
        ));
    }
    if xi2 == 0.0 {
        return Ok(0.0);
    }
    let pre = xi2 / (eps * rs);
    let lead = eps * alpha - rs;
    Ok(pre * pre * (lead * lead - 4.0 * s.signum() * eps * alpha * rs * eta * xi1 / xi2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rho_star: f64, eta: f64) -> ModelParams {
        ModelParams::new(rho_star, eta).unwrap()
    }

    #[test]
    fn ramp_values() {
        assert_eq!(ramp_w1(0.0, 0.8).unwrap(), 0.0);
        assert_eq!(ramp_w1(0.8, 0.8).unwrap(), 1.0);
        assert_eq!(ramp_w1(0.4, 0.8).unwrap(), 0.5);
        assert!(ramp_w1(f64::NAN, 0.8).is_err());
        assert!(ramp_w1(0.1, 0.0).is_err());
    }

    #[test]
    fn starvation_factors() {
        assert_eq!(w2_bar(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(w2_bar(-0.5, 1.0).unwrap(), 0.5);
        for eta in [0.5, 1.0, 10.0] {
            assert_eq!(w2_bar(-1.0 / eta, eta).unwrap(), 0.0);
            assert_eq!(symmetric_w2(1.0 / eta, eta).unwrap(), 0.0);
            assert_eq!(symmetric_w2(-1.0 / eta, eta).unwrap(), 0.0);
        }
        assert_eq!(symmetric_w2(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(symmetric_w2(0.5, 1.0).unwrap(), 0.5);
        assert!(symmetric_w2(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn three_argument_throttle_matches_tent() {
        let th = Throttle {
            rho_star: 0.8,
            eta: 2.0,
        };
        let (rho, sigma) = (0.4, 0.05);
        assert_eq!(th.w2(rho, sigma, -sigma), rho * th.tent(sigma / rho));
        assert_eq!(throttle_w2(0.3, -1.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn flux_examples() {
        let p = params(0.8, 0.5);
        assert_eq!(flux_phi(0.0, 0.3, 0.1, &p).unwrap(), 0.0);
        assert_eq!(flux_phi(0.5, 0.0, 0.1, &p).unwrap(), 0.0625);
        assert_eq!(flux_phi(0.5, 1.2, 0.7, &p).unwrap(), 0.0);
        assert_eq!(flux_phi(1.6, 0.0, 0.1, &p).unwrap(), 0.1);
        assert_eq!(flux_phi(1e-15, 1.0, 0.1, &p).unwrap(), 0.0);
        assert!(flux_phi(-0.1, 0.0, 0.1, &p).is_err());
        assert!(flux_phi(0.1, 0.0, -0.1, &p).is_err());
    }

    #[test]
    fn derivative_examples() {
        let p = params(0.8, 1.0);
        let rho = 0.4;
        assert_eq!(dphi_drho(rho, 0.5 * rho, 0.1, &p).unwrap(), 0.125);
        assert_eq!(dphi_drho(rho, 2.0 * rho, 0.1, &p).unwrap(), 0.0);
        assert_eq!(dphi_drho(rho, 0.0, 0.1, &p).unwrap(), 0.125);
        assert_eq!(dphi_dsigma(rho, 0.5 * rho, 0.1, &p).unwrap(), -0.125);
        assert_eq!(dphi_dsigma(rho, -0.5 * rho, 0.1, &p).unwrap(), 0.125);
        assert_eq!(dphi_dsigma(rho, 2.0 * rho, 0.1, &p).unwrap(), 0.0);
        assert!(dphi_drho(0.0, 0.0, 0.1, &p).is_err());
    }

    #[test]
    fn derivatives_at_tent_feet_use_inner_slope() {
        let p = params(0.8, 2.0);
        assert_eq!(dphi_drho(0.4, 0.2, 0.1, &p).unwrap(), 0.125);
        assert_eq!(dphi_dsigma(0.4, 0.2, 0.1, &p).unwrap(), -0.25);
        assert_eq!(dphi_dsigma(0.4, -0.2, 0.1, &p).unwrap(), 0.25);
    }

    #[test]
    fn saturated_flux_is_flat() {
        let p = params(0.8, 1.0);
        assert_eq!(dphi_drho(1.2, 0.1, 0.1, &p).unwrap(), 0.0);
        assert_eq!(dphi_dsigma(1.2, 0.1, 0.1, &p).unwrap(), 0.0);
    }

    #[test]
    fn discriminant_examples() {
        let p = params(0.8, 1.0);
        let (eps, alpha) = (0.5, 0.1);
        assert_eq!(
            hyperbolicity_discriminant(1.0, 0.0, 0.3, eps, alpha, &p).unwrap(),
            0.0
        );
        let lead: f64 = eps * alpha - 0.8;
        let threshold = lead * lead / (4.0 * eps * alpha * 0.8 * 1.0);
        let d0 = hyperbolicity_discriminant(threshold, 1.0, 0.3, eps, alpha, &p).unwrap();
        assert!(d0.abs() < 1e-15, "{d0}");
        let d1 = hyperbolicity_discriminant(2.0 * threshold, 1.0, 0.3, eps, alpha, &p).unwrap();
        assert!(d1 < 0.0);
        assert!(hyperbolicity_discriminant(1.0, 1.0, 0.0, eps, alpha, &p).is_err());
        assert!(hyperbolicity_discriminant(1.0, 1.0, 1.0, eps, alpha, &p).is_err());
    }

    #[test]
    fn sampled_rate_lookup_wraps() {
        let a = RateField::sampled(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.at(0.0, 0.1), 1.0);
        assert_eq!(a.at(0.0, 0.99), 4.0);
        assert_eq!(a.at(0.0, 1.3), 2.0);
        assert_eq!(a.at(0.0, -0.1), 4.0);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(0.8, -1.0).is_err());
        let p = params(0.8, 1.0).with_plateau(0.9);
        assert!(p.validate_front().is_err());
        let bad = params(0.8, 1.0).with_rate(RateField::Uniform(-1.0));
        assert!(bad.validate().is_err());
    }
}
