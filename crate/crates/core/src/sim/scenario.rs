use serde::Serialize;

use crate::error::{Error, Result};

/// Number of leading variants with no direct effect on the second exposure
/// in mediation mode.
pub const MEDIATION_NULL_VARIANTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Outcome {
    Continuous,
    /// Bernoulli outcome on the logistic scale with the given intercept.
    Binary { intercept: f64 },
}

/// The three causal-effect scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    /// X1 causal (0.2), X2 not causal, X2 measured without error.
    S1,
    /// X1 not causal, X2 causal (0.2), X2 measured without error.
    S2,
    /// Both causal (0.2), X2 measured with unit error variance.
    S3,
}

impl Scenario {
    pub fn theta(self) -> [f64; 2] {
        match self {
            Scenario::S1 => [0.2, 0.0],
            Scenario::S2 => [0.0, 0.2],
            Scenario::S3 => [0.2, 0.2],
        }
    }

    pub fn sigma_zeta2_sq(self) -> f64 {
        match self {
            Scenario::S1 | Scenario::S2 => 0.0,
            Scenario::S3 => 1.0,
        }
    }

    /// Logistic intercept giving roughly 5% prevalence.
    pub fn binary_intercept(self) -> f64 {
        match self {
            Scenario::S1 | Scenario::S2 => -4.0,
            Scenario::S3 => -4.9,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Some(Scenario::S1),
            "S2" => Some(Scenario::S2),
            "S3" => Some(Scenario::S3),
            _ => None,
        }
    }
}

/// Data-generating configuration for one simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    /// Individuals per sample.
    pub n: usize,
    /// Number of variants `J`.
    pub n_variants: usize,
    pub theta: [f64; 2],
    /// Effect of X1 on X2.
    pub rho: f64,
    /// Confounder loading.
    pub gamma: f64,
    pub sigma_zeta_sq: [f64; 2],
    pub beta_range: (f64, f64),
    pub maf_range: (f64, f64),
    pub outcome: Outcome,
    pub mediation_mode: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 20_000,
            n_variants: 40,
            theta: [0.2, 0.0],
            rho: 0.0,
            gamma: 0.2,
            sigma_zeta_sq: [0.0, 0.0],
            beta_range: (0.08, 0.2),
            maf_range: (0.01, 0.5),
            outcome: Outcome::Continuous,
            mediation_mode: false,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Continuous-outcome cell of one of the three scenarios.
    pub fn scenario(scenario: Scenario, rho: f64, sigma_zeta1_sq: f64, seed: u64) -> Self {
        Self {
            theta: scenario.theta(),
            rho,
            sigma_zeta_sq: [sigma_zeta1_sq, scenario.sigma_zeta2_sq()],
            seed,
            ..Self::default()
        }
    }

    /// Same cell with a binary outcome at the scenario's intercept.
    pub fn binary(scenario: Scenario, rho: f64, sigma_zeta1_sq: f64, seed: u64) -> Self {
        Self {
            outcome: Outcome::Binary {
                intercept: scenario.binary_intercept(),
            },
            ..Self::scenario(scenario, rho, sigma_zeta1_sq, seed)
        }
    }

    /// Mediation configuration: `theta2 = 0.2`, `rho = 0.6`, and the first
    /// variants have no direct effect on X2.
    pub fn mediation(theta1: f64, sigma_zeta1_sq: f64, sigma_zeta2_sq: f64, seed: u64) -> Self {
        Self {
            theta: [theta1, 0.2],
            rho: 0.6,
            sigma_zeta_sq: [sigma_zeta1_sq, sigma_zeta2_sq],
            mediation_mode: true,
            seed,
            ..Self::default()
        }
    }

    /// Total effect of X1 on Y: `theta1 + rho * theta2`.
    pub fn total_effect(&self) -> f64 {
        self.theta[0] + self.rho * self.theta[1]
    }

    /// True proportion of the X1 effect mediated by X2.
    pub fn true_proportion_mediated(&self) -> f64 {
        self.rho * self.theta[1] / self.total_effect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.n_variants <= 2 {
            return bad(format!("J must exceed K = 2, got {}", self.n_variants));
        }
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad(format!("maf_range ({lo}, {hi}) must lie in (0, 0.5]"));
        }
        let (blo, bhi) = self.beta_range;
        if !(blo.is_finite() && bhi.is_finite() && blo <= bhi) {
            return bad(format!("invalid beta_range ({blo}, {bhi})"));
        }
        if self.sigma_zeta_sq.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad(format!("sigma_zeta_sq must be non-negative, got {:?}", self.sigma_zeta_sq));
        }
        if !(self.rho.abs() <= 1.0) {
            return bad(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.gamma.abs() <= 1.0) {
            return bad(format!("gamma must lie in [-1, 1], got {}", self.gamma));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return bad("theta must be finite".into());
        }
        if self.mediation_mode && self.n_variants <= MEDIATION_NULL_VARIANTS {
            return bad(format!("mediation mode needs J > {MEDIATION_NULL_VARIANTS}"));
        }
        if let Outcome::Binary { intercept } = self.outcome {
            if !intercept.is_finite() {
                return bad("binary intercept must be finite".into());
            }
        }
        Ok(())
    }
}
