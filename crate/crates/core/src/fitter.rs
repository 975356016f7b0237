//! Maximum-likelihood GLM fitting by iteratively reweighted least squares.
//!
//! Each iteration regresses the working response
//! `z = η − offset + (y − μ)·g'(μ)` on the design with working weights
//! `w / (V(μ)·g'(μ)²)`. The weighted least-squares step is solved through a
//! QR factorization of `√W·X`; the normal equations are never formed. The
//! loop stops once the relative change in deviance
//! `|Dₜ − Dₜ₋₁| / (|Dₜ| + 0.1)` drops below the tolerance, halving the step
//! (up to a fixed number of times) whenever the deviance goes up or the
//! means leave the family's domain.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{DesignInfo, DesignMatrix};
use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::inference::{standard_normal_sf, ModelSummary};

/// Convergence settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitControls {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_step_halvings: usize,
    /// Dispersion for families that do not fix it (Normal). Not estimated.
    pub dispersion: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            tolerance: 1e-8,
            max_iterations: 25,
            max_step_halvings: 10,
            dispersion: 1.0,
        }
    }
}

/// A converged fit whose next Newton step still moves some linear predictor
/// this far is running off to infinity (a level with no claims), not
/// settling at a finite optimum.
const DIVERGENCE_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub info: DesignInfo,
    pub family: FamilySpec,
    pub dispersion: f64,
    pub coefficients: Vec<f64>,
    /// Inverse Fisher information at the final estimates, times φ.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub response: Vec<f64>,
    pub weights: Vec<f64>,
    pub fitted_means: Vec<f64>,
    /// Including the offset.
    pub linear_predictors: Vec<f64>,
    pub deviance: f64,
    pub scaled_deviance: f64,
    pub null_deviance: f64,
    pub df_residual: usize,
    pub df_null: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub data_fingerprint: u64,
}

impl FitResult {
    pub fn labels(&self) -> &[String] {
        &self.info.column_labels
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        let j = self.labels().iter().position(|l| l == label)?;
        Some(self.coefficients[j])
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            terms: self.info.terms.clone(),
            n_params: self.n_params(),
            scaled_deviance: self.scaled_deviance,
            df_residual: self.df_residual,
            aic: self.aic,
            data_fingerprint: Some(self.data_fingerprint),
        }
    }
}

/// One row of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldRow {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

/// `z = estimate / se` and the two-sided normal p-value `2·Φ(−|z|)`.
pub fn wald_test(estimate: f64, std_error: f64) -> (f64, f64) {
    if estimate == 0.0 {
        return (0.0, 1.0);
    }
    let z = estimate / std_error;
    (z, (2.0 * standard_normal_sf(z.abs())).min(1.0))
}

pub fn wald_statistics(fit: &FitResult) -> Vec<WaldRow> {
    fit.labels()
        .iter()
        .enumerate()
        .map(|(j, label)| WaldRow {
            label: label.clone(),
            estimate: fit.coefficients[j],
            std_error: fit.std_errors[j],
            z_value: fit.z_values[j],
            p_value: fit.p_values[j],
        })
        .collect()
}

/// `Σ wᵢ·d(yᵢ, μᵢ)`.
pub fn deviance(family: &FamilySpec, y: &[f64], mu: &[f64], weights: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .zip(weights)
        .map(|((&y, &m), &w)| w * (family.unit_deviance)(y, m))
        .sum()
}

/// Full log-likelihood `Σ log f(yᵢ; μᵢ, φ/wᵢ)`, including `c(y, φ)`.
pub fn log_likelihood_at(
    family: &FamilySpec,
    y: &[f64],
    mu: &[f64],
    dispersion: f64,
    weights: &[f64],
) -> Result<f64> {
    y.iter()
        .zip(mu)
        .zip(weights)
        .map(|((&y, &m), &w)| family.log_density(y, m, dispersion, w))
        .sum()
}

pub fn log_likelihood(fit: &FitResult, family: &FamilySpec) -> Result<f64> {
    log_likelihood_at(
        family,
        &fit.response,
        &fit.fitted_means,
        fit.dispersion,
        &fit.weights,
    )
}

/// `(D, D*)` with `D* = D/φ`.
pub fn deviance_pair(fit: &FitResult, family: &FamilySpec) -> (f64, f64) {
    let d = deviance(family, &fit.response, &fit.fitted_means, &fit.weights);
    (d, d / fit.dispersion)
}

struct Irls {
    beta: DVector<f64>,
    eta: DVector<f64>,
    mu: DVector<f64>,
    deviance: f64,
    iterations: usize,
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    offset: &'a DVector<f64>,
    weights: &'a DVector<f64>,
    family: &'a FamilySpec,
}

impl Problem<'_> {
    fn evaluate(&self, beta: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let eta = self.x * beta + self.offset;
        let mu = eta.map(self.family.inverse_link);
        if !mu.iter().all(|&m| self.family.is_valid_mean(m)) {
            return None;
        }
        let dev = deviance(
            self.family,
            self.y.as_slice(),
            mu.as_slice(),
            self.weights.as_slice(),
        );
        dev.is_finite().then_some((eta, mu, dev))
    }

    fn working_response(&self, eta: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let d = self.family.link_derivative;
        DVector::from_iterator(
            mu.len(),
            (0..mu.len()).map(|i| eta[i] - self.offset[i] + (self.y[i] - mu[i]) * d(mu[i])),
        )
    }

    fn working_weights(&self, mu: &DVector<f64>) -> DVector<f64> {
        let f = self.family;
        DVector::from_iterator(
            mu.len(),
            mu.iter().zip(self.weights.iter()).map(|(&m, &w)| {
                let d = (f.link_derivative)(m);
                w / ((f.variance)(m) * d * d)
            }),
        )
    }

    /// Weighted least squares via QR of `√W·X`.
    fn wls(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let sw = w.map(f64::sqrt);
        let mut a = self.x.clone();
        for (mut row, s) in a.row_iter_mut().zip(sw.iter()) {
            row *= *s;
        }
        let b = z.component_mul(&sw);
        let qr = a.qr();
        let r = qr.r();
        check_triangle(&r)?;
        let qtb = qr.q().transpose() * b;
        r.solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Invalid("singular weighted least-squares system".into()))
    }

    fn run(&self, controls: &FitControls) -> Result<Irls> {
        let f = self.family;
        let mut mu = self.y.map(f.initial_mean);
        if !mu.iter().all(|&m| f.is_valid_mean(m)) {
            return Err(Error::Domain(
                "starting means outside the family domain".into(),
            ));
        }
        let mut eta = mu.map(f.link);
        let mut dev = deviance(f, self.y.as_slice(), mu.as_slice(), self.weights.as_slice());
        let mut trace = vec![dev];
        let mut beta: Option<DVector<f64>> = None;

        for iter in 1..=controls.max_iterations {
            let z = self.working_response(&eta, &mu);
            let w = self.working_weights(&mu);
            let mut candidate = self.wls(&z, &w)?;
            let mut step = self.evaluate(&candidate);

            if let Some(prev) = &beta {
                let worse = |s: &Option<(DVector<f64>, DVector<f64>, f64)>| match s {
                    None => true,
                    Some((_, _, d)) => *d - dev > 1e-12 * (dev.abs() + 0.1),
                };
                let mut halvings = 0;
                while worse(&step) {
                    if halvings == controls.max_step_halvings {
                        trace.push(step.map_or(f64::NAN, |s| s.2));
                        return Err(Error::NonConvergence { trace });
                    }
                    candidate = (&candidate + prev) * 0.5;
                    step = self.evaluate(&candidate);
                    halvings += 1;
                }
            }

            let Some((new_eta, new_mu, new_dev)) = step else {
                trace.push(f64::NAN);
                return Err(Error::NonConvergence { trace });
            };
            trace.push(new_dev);
            let change = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
            eta = new_eta;
            mu = new_mu;
            dev = new_dev;
            beta = Some(candidate);

            if change < controls.tolerance {
                let out = Irls {
                    beta: beta.unwrap(),
                    eta,
                    mu,
                    deviance: dev,
                    iterations: iter,
                };
                if self.diverging(&out) {
                    return Err(Error::NonConvergence { trace });
                }
                return Ok(out);
            }
        }
        Err(Error::NonConvergence { trace })
    }

    fn diverging(&self, fit: &Irls) -> bool {
        let z = self.working_response(&fit.eta, &fit.mu);
        match self.wls(&z, &self.working_weights(&fit.mu)) {
            Ok(next) => {
                let moved = self.x * (next - &fit.beta);
                !moved.iter().all(|d| d.abs() < DIVERGENCE_STEP)
            }
            Err(_) => true,
        }
    }
}

fn check_triangle(r: &DMatrix<f64>) -> Result<()> {
    let scale = r.diagonal().amax();
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(Error::Invalid(
            "weighted design lost rank during fitting".into(),
        ));
    }
    Ok(())
}

/// Fits the model and computes the full set of summary statistics.
pub fn fit(
    design: &DesignMatrix,
    family: &FamilySpec,
    controls: &FitControls,
) -> Result<FitResult> {
    let n = design.nrows();
    let p = design.ncols();
    if n < p {
        return Err(Error::Invalid(format!(
            "{n} observations for {p} parameters"
        )));
    }
    for &y in design.response.iter() {
        family.check_response(y)?;
    }
    let dispersion = family.dispersion_or(controls.dispersion);
    if !(dispersion > 0.0 && dispersion.is_finite()) {
        return Err(Error::Domain(format!(
            "dispersion {dispersion} must be positive"
        )));
    }

    let problem = Problem {
        x: &design.matrix,
        y: &design.response,
        offset: &design.offset,
        weights: &design.weights,
        family,
    };
    let irls = problem.run(controls)?;

    // covariance from the Fisher information at the final means
    let w = problem.working_weights(&irls.mu);
    let mut a = design.matrix.clone();
    for (mut row, s) in a.row_iter_mut().zip(w.iter()) {
        row *= s.sqrt();
    }
    let r = a.qr().r();
    check_triangle(&r)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Invalid("singular information matrix".into()))?;
    let mut covariance = (&r_inv * r_inv.transpose()) * dispersion;
    covariance = (&covariance + covariance.transpose()) * 0.5;

    let coefficients: Vec<f64> = irls.beta.iter().copied().collect();
    let std_errors: Vec<f64> = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    let (z_values, p_values) = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| wald_test(b, se))
        .unzip();

    let response: Vec<f64> = design.response.iter().copied().collect();
    let weights: Vec<f64> = design.weights.iter().copied().collect();
    let fitted_means: Vec<f64> = irls.mu.iter().copied().collect();
    let log_likelihood = log_likelihood_at(family, &response, &fitted_means, dispersion, &weights)?;

    let intercept = design.has_intercept();
    let null_deviance = if intercept && p == 1 {
        irls.deviance
    } else if intercept {
        let ones = DMatrix::from_element(n, 1, 1.0);
        Problem {
            x: &ones,
            ..problem
        }
        .run(controls)?
        .deviance
    } else {
        let mu: Vec<f64> = design
            .offset
            .iter()
            .map(|&o| (family.inverse_link)(o))
            .collect();
        deviance(family, &response, &mu, &weights)
    };

    Ok(FitResult {
        info: design.info.clone(),
        family: *family,
        dispersion,
        coefficients,
        covariance,
        std_errors,
        z_values,
        p_values,
        response,
        weights,
        fitted_means,
        linear_predictors: irls.eta.iter().copied().collect(),
        deviance: irls.deviance,
        scaled_deviance: irls.deviance / dispersion,
        null_deviance,
        df_residual: n - p,
        df_null: if intercept { n - 1 } else { n },
        log_likelihood,
        aic: -2.0 * log_likelihood + 2.0 * p as f64,
        n_iterations: irls.iterations,
        converged: true,
        data_fingerprint: design.data_fingerprint,
    })
}
