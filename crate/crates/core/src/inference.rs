//! Distribution functions and model assessment: residual-deviance goodness
//! of fit, nested-model comparison by change in scaled deviance, and AIC
//! selection.
//!
//! Every test rejects its null hypothesis when the p-value falls below `alpha`.

use serde::Serialize;

use crate::design::Term;
use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_TERMS: usize = 10_000;

/// `P(a, x)` by its power series; converges quickly for `x < a + 1`.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..MAX_TERMS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - libm::lgamma(a)).exp()
}

/// `Q(a, x)` by its continued fraction (modified Lentz); for `x ≥ a + 1`.
fn upper_gamma_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - libm::lgamma(a)).exp() * h
}

/// Regularized upper incomplete gamma function `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("gamma shape {a} must be positive")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "gamma argument {x} must be nonnegative"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x)
    } else {
        upper_gamma_fraction(a, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Upper-tail probability `P(X > x)` for `X ~ χ²(df)`.
pub fn chi_square_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "chi-square statistic {x} must be nonnegative"
        )));
    }
    regularized_gamma_q(f64::from(df) / 2.0, x / 2.0)
}

/// Critical value `x` with `chi_square_sf(x, df) = alpha`, by bracketing and bisection.
pub fn chi_square_quantile(alpha: f64, df: u32) -> Result<f64> {
    check_alpha(alpha)?;
    if df == 0 {
        return Err(Error::Domain(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = f64::from(df).max(1.0);
    while chi_square_sf(hi, df)? > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_sf(mid, df)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(Z > z)` for a standard normal `Z`.
pub fn standard_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "significance level {alpha} must lie in (0, 1)"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// The null hypothesis under test.
    pub narrative: String,
}

impl TestReport {
    fn new(statistic: f64, df: u32, alpha: f64, narrative: String) -> Result<Self> {
        check_alpha(alpha)?;
        let p_value = chi_square_sf(statistic, df)?;
        let decision = if p_value < alpha {
            Decision::Reject
        } else {
            Decision::FailToReject
        };
        Ok(TestReport {
            statistic,
            df,
            p_value,
            alpha,
            decision,
            narrative,
        })
    }

    pub fn rejected(&self) -> bool {
        self.decision == Decision::Reject
    }
}

/// The parts of a fit that model assessment needs. Summaries can also be
/// written down directly from reported deviances.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub terms: Vec<Term>,
    pub n_params: usize,
    pub scaled_deviance: f64,
    pub df_residual: usize,
    pub aic: f64,
    /// `None` when the originating data is unknown; never conflicts.
    pub data_fingerprint: Option<u64>,
}

fn same_data(a: &ModelSummary, b: &ModelSummary) -> bool {
    match (a.data_fingerprint, b.data_fingerprint) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Residual-deviance test: `D*` against `χ²(n − p)`.
pub fn goodness_of_fit(model: &ModelSummary, alpha: f64) -> Result<TestReport> {
    if model.df_residual == 0 {
        return Err(Error::Invalid(
            "saturated model has no residual degrees of freedom to test".into(),
        ));
    }
    let df = u32::try_from(model.df_residual)
        .map_err(|_| Error::Invalid("too many residual degrees of freedom".into()))?;
    TestReport::new(
        model.scaled_deviance,
        df,
        alpha,
        "H0: the residual deviance is not significantly large".into(),
    )
}

/// Change in scaled deviance `D*_reduced − D*_full` against `χ²(q)`,
/// `q = p_full − p_reduced`. Rejecting means the reduced model is rejected in
/// favour of the full one.
pub fn compare_nested(
    reduced: &ModelSummary,
    full: &ModelSummary,
    alpha: f64,
) -> Result<TestReport> {
    if !same_data(reduced, full) {
        return Err(Error::MixedData);
    }
    let full_keys: Vec<Term> = full.terms.iter().map(Term::key).collect();
    if let Some(t) = reduced.terms.iter().find(|t| !full_keys.contains(&t.key())) {
        return Err(Error::NotNested(format!(
            "term '{t}' of the reduced model is absent from the full model"
        )));
    }
    let extra: Vec<String> = full
        .terms
        .iter()
        .filter(|t| !reduced.terms.iter().any(|r| r.key() == t.key()))
        .map(Term::to_string)
        .collect();
    if extra.is_empty() || full.n_params <= reduced.n_params {
        return Err(Error::NotNested(
            "the full model adds no parameters to the reduced model".into(),
        ));
    }
    let q = u32::try_from(full.n_params - reduced.n_params)
        .map_err(|_| Error::Invalid("parameter difference too large".into()))?;
    let statistic = (reduced.scaled_deviance - full.scaled_deviance).max(0.0);
    TestReport::new(
        statistic,
        q,
        alpha,
        format!("H0: the extra terms ({}) are not needed", extra.join(", ")),
    )
}

/// Index of the smallest AIC; ties go to fewer parameters, then the earlier index.
pub fn select_by_aic(models: &[ModelSummary]) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::Invalid("no models to select from".into()));
    }
    if models
        .iter()
        .any(|a| models.iter().any(|b| !same_data(a, b)))
    {
        return Err(Error::MixedData);
    }
    let mut best = 0;
    for (i, m) in models.iter().enumerate().skip(1) {
        let b = &models[best];
        if m.aic < b.aic || (m.aic == b.aic && m.n_params < b.n_params) {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::parse_formula;

    /// Closed form for even degrees of freedom: a Poisson(x/2) lower tail.
    fn sf_even_df(x: f64, df: u32) -> f64 {
        let half = x / 2.0;
        let mut term = (-half).exp();
        let mut sum = term;
        for j in 1..df / 2 {
            term *= half / f64::from(j);
            sum += term;
        }
        sum
    }

    fn summary(text: &str, p: usize, dev: f64, aic: f64) -> ModelSummary {
        ModelSummary {
            terms: parse_formula(text).unwrap().terms,
            n_params: p,
            scaled_deviance: dev,
            df_residual: 54 - p,
            aic,
            data_fingerprint: None,
        }
    }

    #[test]
    fn chi_square_golden_values() {
        for (x, df, p) in [
            (41.93, 46, 0.6433506),
            (43.755, 47, 0.6077625),
            (44.94, 49, 0.6383855),
        ] {
            let got = chi_square_sf(x, df).unwrap();
            assert!((got - p).abs() < 5e-7, "sf({x}, {df}) = {got}");
        }
        assert!((chi_square_sf(2f64.ln() * 2.0, 2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi_square_matches_even_df_closed_form() {
        for df in (2..=200).step_by(2) {
            for x in [0.1, 1.0, 5.0, 20.0, 60.0, 150.0, 300.0, 1000.0] {
                let got = chi_square_sf(x, df).unwrap();
                let want = sf_even_df(x, df);
                assert!((got - want).abs() < 1e-10, "df={df} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn chi_square_one_df_is_a_normal_tail() {
        for x in [0.01, 0.5, 3.84, 10.0, 40.0] {
            let want = 2.0 * standard_normal_sf(f64::sqrt(x));
            assert!((chi_square_sf(x, 1).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn chi_square_domain() {
        assert!(chi_square_sf(-1.0, 3).is_err());
        assert!(chi_square_sf(f64::NAN, 3).is_err());
        assert!(chi_square_sf(1.0, 0).is_err());
        for df in 1..=60 {
            assert_eq!(chi_square_sf(0.0, df).unwrap(), 1.0);
        }
    }

    #[test]
    fn chi_square_is_decreasing() {
        for df in [1, 2, 5, 46, 120] {
            let mut prev = 1.0;
            for i in 1..400 {
                let x = f64::from(i) * 0.25;
                let v = chi_square_sf(x, df).unwrap();
                assert!(v <= prev, "df={df} x={x}");
                // strict once the tail is resolvable in double precision
                if prev < 1.0 - 1e-12 && prev > 1e-300 {
                    assert!(v < prev, "df={df} x={x}");
                }
                prev = v;
            }
        }
    }

    #[test]
    fn quantile_examples() {
        // df=1: 2Φ(−√x) = 0.05 ⇒ √x = 1.959963985
        let z = 1.959_963_984_540_054f64;
        assert!((chi_square_quantile(0.05, 1).unwrap() - z * z).abs() < 1e-8);
        assert!((chi_square_quantile(0.05, 1).unwrap() - 3.84146).abs() < 5e-6);
        // df=4: e^{−x/2}(1 + x/2) = 0.05
        let x4 = chi_square_quantile(0.05, 4).unwrap();
        assert!(((-x4 / 2.0).exp() * (1.0 + x4 / 2.0) - 0.05).abs() < 1e-10);
        assert!((x4 - 9.48773).abs() < 5e-6);
        assert!((chi_square_quantile(0.5, 2).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-10);
        assert!(chi_square_quantile(0.0, 2).is_err());
        assert!(chi_square_quantile(1.0, 2).is_err());
    }

    #[test]
    fn quantile_round_trip() {
        for df in 1..=60 {
            for a in [0.01, 0.05, 0.5, 0.95] {
                let x = chi_square_quantile(a, df).unwrap();
                assert!(
                    (chi_square_sf(x, df).unwrap() - a).abs() <= 1e-7,
                    "df={df} a={a}"
                );
            }
        }
    }

    #[test]
    fn normal_tail() {
        assert_eq!(standard_normal_sf(0.0), 0.5);
        assert!((standard_normal_sf(4.809) - 7.584e-7).abs() < 1e-9);
        assert!((2.0 * standard_normal_sf(4.809) - 1.51e-6).abs() < 2e-8);
        assert!((2.0 * standard_normal_sf(1.350) - 0.1771).abs() < 1e-4);
        assert!((standard_normal_sf(-1.0) + standard_normal_sf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn goodness_of_fit_examples() {
        let r = goodness_of_fit(
            &summary("claims ~ sex + region + type + job", 8, 41.93, 0.0),
            0.05,
        )
        .unwrap();
        assert_eq!(r.df, 46);
        assert!((r.p_value - 0.6433506).abs() < 5e-7);
        assert_eq!(r.decision, Decision::FailToReject);

        let r = goodness_of_fit(&summary("claims ~ region + type", 5, 44.94, 0.0), 0.05).unwrap();
        assert!((r.p_value - 0.6383855).abs() < 5e-7);
        assert!(!r.rejected());

        let mut bad = summary("claims ~ 1", 1, 100.0, 0.0);
        bad.df_residual = 10;
        let r = goodness_of_fit(&bad, 0.05).unwrap();
        assert!(r.p_value < 1e-15);
        assert_eq!(r.decision, Decision::Reject);

        let mut saturated = bad.clone();
        saturated.df_residual = 0;
        assert!(goodness_of_fit(&saturated, 0.05).is_err());
    }

    #[test]
    fn nested_comparisons_from_reported_deviances() {
        let fit3 = summary("claims ~ region + type", 5, 44.94, 285.25);
        let fit4 = summary("claims ~ region * type", 9, 42.412, 290.72);
        let r = compare_nested(&fit3, &fit4, 0.05).unwrap();
        assert!((r.statistic - 2.528).abs() < 1e-9);
        assert_eq!(r.df, 4);
        assert!((r.p_value - 0.64).abs() < 0.01);
        assert_eq!(r.decision, Decision::FailToReject);

        let fit2 = summary("claims ~ region + type + job", 7, 43.755, 288.06);
        let fit1 = summary("claims ~ sex + region + type + job", 8, 41.93, 288.24);
        let r = compare_nested(&fit2, &fit1, 0.05).unwrap();
        assert!((r.statistic - 1.825).abs() < 1e-9);
        assert_eq!(r.df, 1);
        assert!((r.p_value - 0.18).abs() < 0.01);
        assert!(!r.rejected());
    }

    #[test]
    fn nesting_errors() {
        let fit3 = summary("claims ~ region + type", 5, 44.94, 285.25);
        let fit4 = summary("claims ~ region * type", 9, 42.412, 290.72);
        assert!(matches!(
            compare_nested(&fit3, &fit3, 0.05),
            Err(Error::NotNested(_))
        ));
        assert!(matches!(
            compare_nested(&fit4, &fit3, 0.05),
            Err(Error::NotNested(_))
        ));
        let other = summary("claims ~ sex + job", 4, 50.0, 300.0);
        assert!(matches!(
            compare_nested(&other, &fit4, 0.05),
            Err(Error::NotNested(_))
        ));

        let mut a = fit3.clone();
        let mut b = fit4.clone();
        a.data_fingerprint = Some(1);
        b.data_fingerprint = Some(2);
        assert_eq!(compare_nested(&a, &b, 0.05), Err(Error::MixedData));
    }

    #[test]
    fn aic_selection() {
        let aics = [288.24, 288.06, 285.25, 290.72];
        let ps = [8, 7, 5, 9];
        let models: Vec<_> = aics
            .iter()
            .zip(ps)
            .map(|(&a, p)| summary("claims ~ region", p, 0.0, a))
            .collect();
        assert_eq!(select_by_aic(&models).unwrap(), 2);
        assert_eq!(select_by_aic(&models[..1]).unwrap(), 0);

        let tie = [
            summary("claims ~ region", 3, 0.0, 10.0),
            summary("claims ~ sex", 2, 0.0, 10.0),
        ];
        assert_eq!(select_by_aic(&tie).unwrap(), 1);
        let same = [
            summary("claims ~ sex", 2, 0.0, 10.0),
            summary("claims ~ job", 2, 0.0, 10.0),
        ];
        assert_eq!(select_by_aic(&same).unwrap(), 0);

        assert!(select_by_aic(&[]).is_err());
        let mut mixed = models.clone();
        mixed[0].data_fingerprint = Some(1);
        mixed[1].data_fingerprint = Some(2);
        assert_eq!(select_by_aic(&mixed), Err(Error::MixedData));
    }
}
