//! Action-class distributions, the classifier interface, and SAFE / WARNING /
//! DANGER aggregation over configured class sets.

mod classifier;
mod mock;

pub use classifier::{Backbone, ClassifierBackend, ClassifierHandle};
pub use mock::{mock_kinematic_classifier, KinematicFeatures, MockKinematicConfig};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::TrackId;

/// NTU action label, 1-based (`A1` is `ActionClass(1)`, stored at index 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionClass(pub u16);

impl ActionClass {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ActionClass(i as u16 + 1)
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Degenerate("empty class distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Degenerate("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Degenerate(format!("probabilities sum to {sum}")));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn uniform(num_classes: usize) -> Self {
        ClassDistribution { probs: vec![1.0 / num_classes as f64; num_classes] }
    }

    /// Puts the given masses on specific classes and spreads the remainder
    /// uniformly over all other classes.
    pub fn concentrated(num_classes: usize, masses: &[(ActionClass, f64)]) -> Result<Self> {
        let fixed: f64 = masses.iter().map(|(_, m)| m).sum();
        let rest = num_classes - masses.len();
        let fill = if rest > 0 { (1.0 - fixed) / rest as f64 } else { 0.0 };
        let mut probs = vec![fill; num_classes];
        for (c, m) in masses {
            *probs
                .get_mut(c.index())
                .ok_or_else(|| Error::Degenerate(format!("{c} outside {num_classes} classes")))? = *m;
        }
        Self::new(probs)
    }

    /// Softmax of raw scores.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / sum).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, c: ActionClass) -> f64 {
        self.probs.get(c.index()).copied().unwrap_or(0.0)
    }

    pub fn mass(&self, classes: &BTreeSet<ActionClass>) -> f64 {
        classes.iter().map(|c| self.prob(*c)).sum()
    }

    /// Highest-probability class; ties go to the lowest id.
    pub fn top(&self) -> (ActionClass, f64) {
        let (i, p) = self
            .probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        (ActionClass::from_index(i), p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RiskLevel {
    Safe,
    Warning,
    Danger,
}

impl RiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Safe => "SAFE",
            RiskLevel::Warning => "WARNING",
            RiskLevel::Danger => "DANGER",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RiskLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SAFE" => Ok(RiskLevel::Safe),
            "WARNING" => Ok(RiskLevel::Warning),
            "DANGER" => Ok(RiskLevel::Danger),
            other => Err(Error::Config(format!("unknown risk level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub danger_classes: BTreeSet<ActionClass>,
    pub warning_classes: BTreeSet<ActionClass>,
    pub danger_threshold: f64,
    pub warning_threshold: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            danger_classes: [50, 51, 52].into_iter().map(ActionClass).collect(),
            warning_classes: [7, 42, 43, 57].into_iter().map(ActionClass).collect(),
            danger_threshold: 0.3,
            warning_threshold: 0.5,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.danger_classes.is_disjoint(&self.warning_classes) {
            return Err(Error::Config("danger and warning class sets overlap".into()));
        }
        for t in [self.danger_threshold, self.warning_threshold] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("threshold {t} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub level: RiskLevel,
    pub danger_mass: f64,
    pub warning_mass: f64,
    pub top_class: (ActionClass, f64),
    pub track_ids: Vec<TrackId>,
    pub frame_span: (u64, u64),
}

/// Strict thresholds: a mass equal to its threshold does not trigger.
/// DANGER wins when both are exceeded.
pub fn aggregate_risk(dist: &ClassDistribution, cfg: &RiskConfig) -> RiskAssessment {
    let danger_mass = dist.mass(&cfg.danger_classes);
    let warning_mass = dist.mass(&cfg.warning_classes);
    let level = if danger_mass > cfg.danger_threshold {
        RiskLevel::Danger
    } else if warning_mass > cfg.warning_threshold {
        RiskLevel::Warning
    } else {
        RiskLevel::Safe
    };
    RiskAssessment {
        level,
        danger_mass,
        warning_mass,
        top_class: dist.top(),
        track_ids: Vec::new(),
        frame_span: (0, 0),
    }
}
