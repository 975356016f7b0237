//! Exponential-family members.
//!
//! A density in the family has the form
//! `f(y; θ, φ) = exp((yθ − b(θ)) / a(φ) + c(y, φ))` with `a(φ) = φ / w` for an
//! observation carrying prior weight `w`. A [`FamilySpec`] is a plain record of
//! the functions that make up one member, always paired with its canonical
//! link, so `θ = g(μ)`.
//!
//! Two members are provided: [`FamilySpec::POISSON`] (log link, `φ = 1`) used
//! for claim counts, and [`FamilySpec::NORMAL`] (identity link), which exists
//! so that fits can be checked against closed-form least squares.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// An exponential-family member with its canonical link.
#[derive(Clone, Copy)]
pub struct FamilySpec {
    pub name: &'static str,
    /// `Some(φ)` when the dispersion is fixed by the family (Poisson: 1).
    pub fixed_dispersion: Option<f64>,
    /// Cumulant function `b(θ)`.
    pub cumulant: fn(f64) -> f64,
    /// `b'(θ)`, the mean as a function of the natural parameter.
    pub cumulant_d1: fn(f64) -> f64,
    /// `b''(θ)`.
    pub cumulant_d2: fn(f64) -> f64,
    /// Variance function `V(μ)`.
    pub variance: fn(f64) -> f64,
    /// Canonical link `g(μ)`.
    pub link: fn(f64) -> f64,
    pub inverse_link: fn(f64) -> f64,
    /// `g'(μ)`.
    pub link_derivative: fn(f64) -> f64,
    /// `c(y, ψ)` where `ψ = φ / w`.
    pub log_base_measure: fn(f64, f64) -> f64,
    /// Unit deviance `d(y, μ)`; the deviance is `Σ wᵢ d(yᵢ, μ̂ᵢ)`.
    pub unit_deviance: fn(f64, f64) -> f64,
    /// IRLS starting mean for a response.
    pub initial_mean: fn(f64) -> f64,
    valid_mean: fn(f64) -> bool,
    valid_response: fn(f64) -> bool,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("fixed_dispersion", &self.fixed_dispersion)
            .finish_non_exhaustive()
    }
}

impl PartialEq for FamilySpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

fn poisson_log_base_measure(y: f64, psi: f64) -> f64 {
    // y is the average of w = 1/ψ unit-exposure counts, so w·y is the total count.
    let w = 1.0 / psi;
    let total = w * y;
    let scale = if total > 0.0 { total * w.ln() } else { 0.0 };
    scale - libm::lgamma(total + 1.0)
}

fn poisson_unit_deviance(y: f64, mu: f64) -> f64 {
    let ylogy = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
    2.0 * (ylogy - (y - mu))
}

fn normal_log_base_measure(y: f64, psi: f64) -> f64 {
    -y * y / (2.0 * psi) - 0.5 * (2.0 * PI * psi).ln()
}

impl FamilySpec {
    /// Poisson counts with the log link.
    pub const POISSON: FamilySpec = FamilySpec {
        name: "poisson",
        fixed_dispersion: Some(1.0),
        cumulant: f64::exp,
        cumulant_d1: f64::exp,
        cumulant_d2: f64::exp,
        variance: |mu| mu,
        link: f64::ln,
        inverse_link: f64::exp,
        link_derivative: |mu| 1.0 / mu,
        log_base_measure: poisson_log_base_measure,
        unit_deviance: poisson_unit_deviance,
        initial_mean: |y| y + 0.5,
        valid_mean: |mu| mu > 0.0 && mu.is_finite(),
        valid_response: |y| y >= 0.0 && y.is_finite(),
    };

    /// Normal responses with the identity link.
    pub const NORMAL: FamilySpec = FamilySpec {
        name: "normal",
        fixed_dispersion: None,
        cumulant: |theta| 0.5 * theta * theta,
        cumulant_d1: |theta| theta,
        cumulant_d2: |_| 1.0,
        variance: |_| 1.0,
        link: |mu| mu,
        inverse_link: |eta| eta,
        link_derivative: |_| 1.0,
        log_base_measure: normal_log_base_measure,
        unit_deviance: |y, mu| (y - mu) * (y - mu),
        initial_mean: |y| y,
        valid_mean: f64::is_finite,
        valid_response: f64::is_finite,
    };

    pub fn by_name(name: &str) -> Result<FamilySpec> {
        match name.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Self::POISSON),
            "normal" | "gaussian" => Ok(Self::NORMAL),
            other => Err(Error::Invalid(format!(
                "unknown family '{other}' (expected poisson or normal)"
            ))),
        }
    }

    pub fn is_valid_mean(&self, mu: f64) -> bool {
        (self.valid_mean)(mu)
    }

    pub fn is_valid_response(&self, y: f64) -> bool {
        (self.valid_response)(y)
    }

    pub fn check_mean(&self, mu: f64) -> Result<()> {
        if self.is_valid_mean(mu) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "mean {mu} outside the {} mean domain",
                self.name
            )))
        }
    }

    pub fn check_response(&self, y: f64) -> Result<()> {
        if self.is_valid_response(y) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "response {y} is not valid for the {} family",
                self.name
            )))
        }
    }

    /// Dispersion used for this family given a caller-supplied fallback.
    pub fn dispersion_or(&self, supplied: f64) -> f64 {
        self.fixed_dispersion.unwrap_or(supplied)
    }

    /// Log-likelihood contribution of one observation, `log f(y; θ(μ), φ/w)`,
    /// including the `c(y, φ/w)` term.
    pub fn log_density(&self, y: f64, mu: f64, dispersion: f64, weight: f64) -> Result<f64> {
        check_weight(weight)?;
        check_dispersion(dispersion)?;
        self.check_mean(mu)?;
        self.check_response(y)?;
        let psi = dispersion / weight;
        let theta = (self.link)(mu);
        Ok((y * theta - (self.cumulant)(theta)) / psi + (self.log_base_measure)(y, psi))
    }

    /// `b'(θ)`. Overflow is reported rather than returned as infinity.
    pub fn mean_from_theta(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!(
                "natural parameter {theta} is not finite"
            )));
        }
        let mu = (self.cumulant_d1)(theta);
        if mu.is_finite() {
            Ok(mu)
        } else {
            Err(Error::Overflow(format!(
                "mean b'({theta}) overflows for the {} family",
                self.name
            )))
        }
    }

    /// `V(μ)·φ/w`.
    pub fn variance_of_observation(&self, mu: f64, dispersion: f64, weight: f64) -> Result<f64> {
        check_weight(weight)?;
        check_dispersion(dispersion)?;
        self.check_mean(mu)?;
        Ok((self.variance)(mu) * dispersion / weight)
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("weight {weight} must be positive")))
    }
}

fn check_dispersion(dispersion: f64) -> Result<()> {
    if dispersion > 0.0 && dispersion.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "dispersion {dispersion} must be positive"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: FamilySpec = FamilySpec::POISSON;
    const N: FamilySpec = FamilySpec::NORMAL;

    #[test]
    fn poisson_log_density_examples() {
        assert!((P.log_density(0.0, 1.0, 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        let expected = 2.0 * 1.5f64.ln() - 1.5 - 2f64.ln();
        let got = P.log_density(2.0, 1.5, 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got + 1.382217).abs() < 5e-7);
    }

    #[test]
    fn normal_density_at_mode() {
        for mu in [-3.0, 0.0, 2.5, 40.0] {
            let got = N.log_density(mu, mu, 1.0, 1.0).unwrap();
            assert!((got + 0.5 * (2.0 * PI).ln()).abs() < 1e-12, "mu={mu}");
        }
    }

    #[test]
    fn log_density_domain_errors() {
        assert!(matches!(
            P.log_density(1.0, 0.0, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            P.log_density(-1.0, 1.0, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            P.log_density(1.0, 1.0, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            N.log_density(1.0, f64::NAN, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_poisson_is_density_of_the_average() {
        // w = 3 iid counts with mean 2 averaging to 5/3: the total 5 is Poisson(6).
        let got = P.log_density(5.0 / 3.0, 2.0, 1.0, 3.0).unwrap();
        let expected = 5.0 * 6f64.ln() - 6.0 - libm::lgamma(6.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn mean_from_theta_examples() {
        assert_eq!(P.mean_from_theta(0.0).unwrap(), 1.0);
        assert!((P.mean_from_theta(5f64.ln()).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(N.mean_from_theta(2.5).unwrap(), 2.5);
        assert!(matches!(P.mean_from_theta(1000.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(P.variance_of_observation(3.0, 1.0, 1.0).unwrap(), 3.0);
        assert_eq!(P.variance_of_observation(3.0, 1.0, 6.0).unwrap(), 0.5);
        assert_eq!(N.variance_of_observation(-7.0, 2.0, 1.0).unwrap(), 2.0);
        assert!(P.variance_of_observation(-3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn link_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mu = 10f64.powf(rng.gen_range(-6.0..6.0));
            for fam in [P, N] {
                let back = (fam.inverse_link)((fam.link)(mu));
                assert!(((back - mu) / mu).abs() <= 1e-12, "{} mu={mu}", fam.name);
                assert!((fam.mean_from_theta((fam.link)(mu)).unwrap() - mu).abs() / mu <= 1e-12);
                assert!((fam.variance)(mu) > 0.0);
            }
        }
    }

    #[test]
    fn cumulant_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..100 {
            let theta = rng.gen_range(-5.0..5.0);
            for fam in [P, N] {
                let b = fam.cumulant;
                let d1 = (b(theta + h) - b(theta - h)) / (2.0 * h);
                let d2 = (b(theta + h) - 2.0 * b(theta) + b(theta - h)) / (h * h);
                let e1 = (fam.cumulant_d1)(theta);
                let e2 = (fam.cumulant_d2)(theta);
                assert!(
                    ((d1 - e1) / e1.abs().max(1e-300)).abs() < 1e-6,
                    "{} θ={theta}",
                    fam.name
                );
                assert!(((d2 - e2) / e2).abs() < 1e-6, "{} θ={theta}", fam.name);
            }
        }
    }

    #[test]
    fn poisson_mass_sums_to_one() {
        for mu in [0.3, 1.0, 7.5, 42.0, 100.0] {
            let total: f64 = (0..=200)
                .map(|y| P.log_density(y as f64, mu, 1.0, 1.0).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "mu={mu} total={total}");
        }
    }

    #[test]
    fn family_lookup() {
        assert_eq!(FamilySpec::by_name("Poisson").unwrap(), P);
        assert_eq!(FamilySpec::by_name("gaussian").unwrap(), N);
        assert!(FamilySpec::by_name("gamma").is_err());
    }
}
