//! Checks of the decay estimates: drift certificates, decay fits, weak Poincare
//! ratios, regularization, L1 growth, composition bounds, coercivity and
//! hypocoercive decay. Everything here is `f64`.

pub mod coercivity;
pub mod composition;
pub mod decay;
pub mod drift;
pub mod fit;
pub mod poincare;
pub mod regularization;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::functionals::FunctionalError;
use crate::model::ModelError;
use crate::operators::OperatorError;
use crate::phase_grid::GridError;
use crate::semigroup::SemigroupError;

pub use coercivity::{coercivity_study, hypocoercive_decay, CoercivityStudy, HypocoerciveDecay};
pub use composition::{composition_bounds_check, CompositionStudy};
pub use decay::{
    decay_run, decay_study, polynomial_study, DecayRun, DecaySetup, DecayStudy, PolynomialDecay, PolynomialSetup,
};
pub use drift::{certify_drift_exp, certify_drift_poly, drift_sweep, DriftCertificate, DriftKind, DriftParams};
pub use fit::{fit_decay, fit_series, DecayFit, DecayModel, FitError};
pub use poincare::{weak_poincare_ratio, PoincareStudy};
pub use regularization::{l1_growth_check, regularization_rate, L1Growth, RegularizationStudy};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid verification input: {0}")]
    BadInput(String),
}

/// One thresholded measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable condition, e.g. `<= 1e-6`.
    pub threshold: String,
    pub pass: bool,
}

/// Named record of inputs, measurements and thresholded checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub name: String,
    pub inputs: BTreeMap<String, String>,
    pub measured: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            inputs: BTreeMap::new(),
            measured: BTreeMap::new(),
            checks: Vec::new(),
            pass: true,
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    pub fn check(&mut self, name: &str, value: f64, threshold: impl Into<String>, pass: bool) -> &mut Self {
        self.checks.push(Check { name: name.to_string(), value, threshold: threshold.into(), pass });
        self.pass &= pass;
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `key: value` blocks.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name: {}", self.name);
        let _ = writeln!(s, "pass: {}", self.pass);
        for (k, v) in &self.inputs {
            let _ = writeln!(s, "input.{k}: {v}");
        }
        for (k, v) in &self.measured {
            let _ = writeln!(s, "measured.{k}: {v:.6e}");
        }
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "check.{}: {:.6e} {} {}", c.name, c.value, c.threshold, verdict);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

/// Merges reports into a deterministic, name-sorted list.
pub fn merge_reports(mut reports: Vec<VerificationReport>) -> Vec<VerificationReport> {
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_accumulates_verdict_and_renders() {
        let mut r = VerificationReport::new("demo");
        r.input("gamma", 0.5).measure("x", 1.5).check("small", 1e-7, "<= 1e-6", true);
        assert!(r.pass);
        r.check("big", 2.0, "<= 1", false).note("failed on purpose");
        assert!(!r.pass);
        let text = r.to_text();
        assert!(text.contains("input.gamma: 0.5"));
        assert!(text.contains("check.big: 2.000000e0 <= 1 FAIL"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["measured"]["x"], 1.5);
    }

    #[test]
    fn merge_is_sorted() {
        let names: Vec<String> = merge_reports(vec![VerificationReport::new("b"), VerificationReport::new("a")])
            .into_iter()
            .map(|r| r.name)
            .collect();
        assert_eq!(names, ["a", "b"]);
    }
}
