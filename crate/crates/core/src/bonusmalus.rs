//! Bonus-Malus premium ladder.
//!
//! Steps run from 1 (the single malus class, 120% of the base premium) to 14
//! (30%). A new policyholder enters at step 2. After each policy year the
//! step moves according to the number of claims reported that year; three or
//! more claims all use the same row. The premium for a year is charged at
//! the step held when the year starts.
//!
//! Policyholder behaviour such as withholding small claims to protect a step
//! is not modelled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Claim-count rows of the transition table: 0, 1, 2 and 3-or-more claims.
pub const CLAIM_CATEGORIES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonusMalusTable {
    pub steps: usize,
    /// Premium percentage of the base premium, indexed by step − 1.
    pub percentages: Vec<f64>,
    /// `transitions[k][s − 1]` is the step after a year with `k` claims
    /// (`k = 3` meaning three or more) starting from step `s`.
    pub transitions: Vec<Vec<usize>>,
    #[serde(default = "default_entry_step")]
    pub entry_step: usize,
}

fn default_entry_step() -> usize {
    2
}

impl Default for BonusMalusTable {
    fn default() -> Self {
        BonusMalusTable {
            steps: 14,
            percentages: vec![
                120.0, 100.0, 90.0, 80.0, 70.0, 60.0, 55.0, 50.0, 45.0, 40.0, 37.5, 35.0, 32.5,
                30.0,
            ],
            transitions: vec![
                vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 14],
                vec![1, 1, 1, 1, 2, 3, 4, 5, 6, 7, 7, 8, 8, 9],
                vec![1, 1, 1, 1, 1, 1, 1, 1, 2, 3, 3, 4, 4, 5],
                vec![1; 14],
            ],
            entry_step: 2,
        }
    }
}

impl BonusMalusTable {
    /// Reads and validates a table from JSON:
    /// `{"steps": n, "percentages": [...], "transitions": [[..],[..],[..],[..]], "entry_step": 2}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let table: BonusMalusTable = serde_json::from_str(text)
            .map_err(|e| Error::Invalid(format!("invalid Bonus-Malus table JSON: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.steps;
        let bad = |m: String| Err(Error::Invalid(format!("invalid Bonus-Malus table: {m}")));
        if n == 0 {
            return bad("no steps".into());
        }
        if self.percentages.len() != n {
            return bad(format!(
                "{} percentages for {n} steps",
                self.percentages.len()
            ));
        }
        if self
            .percentages
            .iter()
            .any(|p| !(*p > 0.0 && p.is_finite()))
        {
            return bad("percentages must be positive".into());
        }
        if self.percentages.windows(2).any(|w| w[1] >= w[0]) {
            return bad("percentages must strictly decrease with the step".into());
        }
        if self.transitions.len() != CLAIM_CATEGORIES {
            return bad(format!(
                "{} transition rows, expected {CLAIM_CATEGORIES} (0, 1, 2, 3+ claims)",
                self.transitions.len()
            ));
        }
        for (k, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return bad(format!("transition row {k} has {} entries", row.len()));
            }
            if row.iter().any(|&s| s == 0 || s > n) {
                return bad(format!("transition row {k} leaves steps 1..{n}"));
            }
        }
        let zero = &self.transitions[0];
        if zero.windows(2).any(|w| w[1] < w[0]) || zero[n - 1] != n {
            return bad("claim-free row must be nondecreasing and keep the top step".into());
        }
        if self.transitions[CLAIM_CATEGORIES - 1]
            .iter()
            .any(|&s| s != 1)
        {
            return bad("the 3+ claims row must send every step to 1".into());
        }
        for s in 0..n {
            if (1..CLAIM_CATEGORIES).any(|k| self.transitions[k][s] > self.transitions[k - 1][s]) {
                return bad(format!("more claims improve the step from {}", s + 1));
            }
        }
        if self.entry_step == 0 || self.entry_step > n {
            return bad(format!("entry step {} outside 1..{n}", self.entry_step));
        }
        Ok(())
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if (1..=self.steps).contains(&step) {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "step {step} outside 1..{}",
                self.steps
            )))
        }
    }

    pub fn percentage(&self, step: usize) -> Result<f64> {
        self.check_step(step)?;
        Ok(self.percentages[step - 1])
    }

    pub fn next_step(&self, step: usize, claims: u32) -> Result<usize> {
        self.check_step(step)?;
        let row = (claims as usize).min(CLAIM_CATEGORIES - 1);
        Ok(self.transitions[row][step - 1])
    }

    pub fn premium(&self, step: usize, base_premium: f64) -> Result<f64> {
        if !(base_premium > 0.0 && base_premium.is_finite()) {
            return Err(Error::Range(format!(
                "base premium {base_premium} must be positive"
            )));
        }
        Ok(base_premium * self.percentage(step)? / 100.0)
    }

    /// Row-stochastic transition matrix when annual claim counts are Poisson(λ).
    pub fn transition_matrix(&self, lambda: f64) -> Result<Vec<Vec<f64>>> {
        let probs = claim_category_probabilities(lambda)?;
        let n = self.steps;
        let mut m = vec![vec![0.0; n]; n];
        for s in 0..n {
            for (k, p) in probs.iter().enumerate() {
                m[s][self.transitions[k][s] - 1] += p;
            }
        }
        Ok(m)
    }

    /// Long-run share of policyholders on each step under Poisson(λ) claims,
    /// by power iteration from the uniform vector. A ladder whose chain cycles
    /// never settles and is reported as an error.
    pub fn stationary_distribution(&self, lambda: f64) -> Result<Vec<f64>> {
        const MAX_ITER: usize = 1_000_000;
        let m = self.transition_matrix(lambda)?;
        let n = self.steps;
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..MAX_ITER {
            let next = step_distribution(&m, &pi);
            let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if change < 1e-12 {
                let total: f64 = pi.iter().sum();
                return Ok(pi.into_iter().map(|p| p / total).collect());
            }
        }
        Err(Error::Invalid(format!(
            "stationary distribution did not settle for lambda {lambda}"
        )))
    }

    /// Premium percentage averaged over a distribution on the steps.
    pub fn expected_percentage(&self, distribution: &[f64]) -> f64 {
        distribution
            .iter()
            .zip(&self.percentages)
            .map(|(p, c)| p * c)
            .sum()
    }
}

/// One year's distribution → the next.
pub fn step_distribution(matrix: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
    let n = pi.len();
    let mut next = vec![0.0; n];
    for (s, row) in matrix.iter().enumerate() {
        for (t, p) in row.iter().enumerate() {
            next[t] += pi[s] * p;
        }
    }
    next
}

/// `[P(0), P(1), P(2), P(≥3)]` for Poisson(λ) annual claim counts.
pub fn claim_category_probabilities(lambda: f64) -> Result<[f64; CLAIM_CATEGORIES]> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "claim frequency {lambda} must be nonnegative"
        )));
    }
    let p0 = (-lambda).exp();
    let p1 = p0 * lambda;
    let p2 = p1 * lambda / 2.0;
    Ok([p0, p1, p2, (1.0 - p0 - p1 - p2).max(0.0)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryYear {
    pub year: usize,
    pub step_before: usize,
    pub claims: u32,
    pub step_after: usize,
    pub premium_paid: f64,
}

/// Runs a policyholder through successive years. Year `t` is charged at the
/// step held entering it, then that year's claims move the step.
pub fn simulate_trajectory(
    table: &BonusMalusTable,
    start: usize,
    yearly_claims: &[u32],
    base_premium: f64,
) -> Result<Vec<TrajectoryYear>> {
    table.check_step(start)?;
    table.premium(start, base_premium)?;
    let mut step = start;
    yearly_claims
        .iter()
        .enumerate()
        .map(|(i, &claims)| {
            let premium_paid = table.premium(step, base_premium)?;
            let after = table.next_step(step, claims)?;
            let year = TrajectoryYear {
                year: i + 1,
                step_before: step,
                claims,
                step_after: after,
                premium_paid,
            };
            step = after;
            Ok(year)
        })
        .collect()
}
