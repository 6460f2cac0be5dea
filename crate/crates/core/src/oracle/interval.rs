use super::{OptDomain, Orientation, Solution};
use crate::error::{check_len, Result};

/// The one-dimensional region `[-1/2, 1/2]`.
///
/// With labels `c ∈ {-1, +1}` this is binary classification. At a zero cost
/// every point is optimal and the lower endpoint is returned.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntervalDomain;

impl IntervalDomain {
    pub const LOWER: f64 = -0.5;
    pub const UPPER: f64 = 0.5;
}

impl OptDomain for IntervalDomain {
    fn dim(&self) -> usize {
        1
    }

    fn orientation(&self) -> Orientation {
        Orientation::Minimize
    }

    fn argmin(&self, cost: &[f64]) -> Result<Solution> {
        check_len("interval argmin", 1, cost.len())?;
        let x = if cost[0] < 0.0 { Self::UPPER } else { Self::LOWER };
        Ok(Solution {
            x: vec![x],
            objective: cost[0] * x,
            dual: None,
        })
    }

    fn diameter(&self) -> f64 {
        1.0
    }

    fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        Some(vec![vec![Self::LOWER], vec![Self::UPPER]])
    }

    fn name(&self) -> &'static str {
        "interval"
    }
}
