use super::{OptDomain, Orientation, Solution};
use crate::error::{check_len, Error, Result};

/// The unit simplex `conv{e_1, …, e_m}` used for multiclass classification.
#[derive(Debug, Clone)]
pub struct SimplexDomain {
    m: usize,
}

impl SimplexDomain {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "simplex needs at least 2 classes, got {m}"
            )));
        }
        Ok(Self { m })
    }

    /// Cost vector of class `j`: all ones except a zero at `j`.
    pub fn label(&self, j: usize) -> Vec<f64> {
        let mut c = vec![1.0; self.m];
        c[j] = 0.0;
        c
    }

    /// Class index encoded by a label vector, if it is one.
    pub fn label_index(&self, c: &[f64]) -> Option<usize> {
        if c.len() != self.m {
            return None;
        }
        let zeros: Vec<usize> = (0..self.m).filter(|&j| c[j] == 0.0).collect();
        let ones = c.iter().filter(|&&v| v == 1.0).count();
        (zeros.len() == 1 && ones == self.m - 1).then(|| zeros[0])
    }
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin_index(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = j;
        }
    }
    best
}

impl OptDomain for SimplexDomain {
    fn dim(&self) -> usize {
        self.m
    }

    fn orientation(&self) -> Orientation {
        Orientation::Minimize
    }

    fn argmin(&self, cost: &[f64]) -> Result<Solution> {
        check_len("simplex argmin", self.m, cost.len())?;
        let j = argmin_index(cost);
        let mut x = vec![0.0; self.m];
        x[j] = 1.0;
        Ok(Solution {
            x,
            objective: cost[j],
            dual: None,
        })
    }

    fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        Some(
            (0..self.m)
                .map(|j| {
                    let mut e = vec![0.0; self.m];
                    e[j] = 1.0;
                    e
                })
                .collect(),
        )
    }

    fn name(&self) -> &'static str {
        "simplex"
    }
}
