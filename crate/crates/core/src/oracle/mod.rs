//! Solvers for `x*(d) = argmin_{x in X} f(x) + dᵀx` on the supported domains.
//!
//! Internally every domain is solved in minimization form. Domains whose
//! natural input is a value or return vector (knapsack, portfolio) report
//! [`Orientation::Maximize`]; [`canonical_cost`] negates such vectors before
//! they reach [`OptDomain::argmin`]. All argmins break ties toward the lowest
//! index, so repeated calls return bit-identical points.

mod interval;
mod knapsack;
mod portfolio;
mod simplex;

pub use interval::IntervalDomain;
pub use knapsack::KnapsackDomain;
pub use portfolio::PortfolioDomain;
pub use simplex::SimplexDomain;

use std::fmt::Debug;

use crate::error::{check_len, Result};

/// Sense of the native input vector of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Native vectors are costs to be minimized.
    Minimize,
    /// Native vectors are values or returns to be maximized.
    Maximize,
}

impl Orientation {
    /// +1 for minimization, -1 for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Minimize => 1.0,
            Orientation::Maximize => -1.0,
        }
    }
}

/// Optimal point returned by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Objective at `x`, in the sense of the function that produced it.
    pub objective: f64,
    /// Budget multiplier: knapsack `τ` or portfolio `γ`.
    pub dual: Option<f64>,
}

/// A feasible region together with its convex objective term `f`.
pub trait OptDomain: Send + Sync + Debug {
    /// Dimension `m` of decisions and cost vectors.
    fn dim(&self) -> usize;

    fn orientation(&self) -> Orientation;

    /// Minimizer of `f(x) + costᵀx` for a cost in minimization form.
    /// `Solution::objective` is the attained minimum.
    fn argmin(&self, cost: &[f64]) -> Result<Solution>;

    /// The objective term `f(x)`; zero for linear domains.
    fn curvature(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// `max ‖x - x'‖₂` over the feasible region, or an upper bound where noted.
    fn diameter(&self) -> f64;

    /// Finite vertex set for polyhedral domains with `f = 0`.
    fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        None
    }

    fn name(&self) -> &'static str;
}

/// Converts a native vector to minimization form.
pub fn canonical_cost(dom: &dyn OptDomain, v: &[f64]) -> Vec<f64> {
    let s = dom.orientation().sign();
    v.iter().map(|x| s * x).collect()
}

/// `x*(v)` for a native vector `v`.
pub fn decide(dom: &dyn OptDomain, v: &[f64]) -> Result<Vec<f64>> {
    check_len("decide", dom.dim(), v.len())?;
    Ok(dom.argmin(&canonical_cost(dom, v))?.x)
}

/// `f(x) + costᵀx` for a cost in minimization form.
pub fn canonical_objective(dom: &dyn OptDomain, x: &[f64], cost: &[f64]) -> f64 {
    dom.curvature(x) + dot(cost, x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
