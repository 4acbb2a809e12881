use serde::{Deserialize, Serialize};

/// Where a working value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    True,
    Surrogate,
}

/// A point in standard-normal space with an optional limit-state value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub coords: Vec<f64>,
    pub eval: Option<f64>,
    pub kind: EvalKind,
}

impl Sample {
    pub fn unevaluated(coords: Vec<f64>) -> Self {
        Self { coords, eval: None, kind: EvalKind::Surrogate }
    }

    pub fn with_true(coords: Vec<f64>, value: f64) -> Self {
        Self { coords, eval: Some(value), kind: EvalKind::True }
    }

    pub fn with_surrogate(coords: Vec<f64>, value: f64) -> Self {
        Self { coords, eval: Some(value), kind: EvalKind::Surrogate }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The working value; panics on an unevaluated sample.
    pub fn value(&self) -> f64 {
        self.eval.expect("sample has no working value")
    }

    pub fn is_true(&self) -> bool {
        self.eval.is_some() && self.kind == EvalKind::True
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}
