use nalgebra::DMatrix;

use super::{dot, OptDomain, Orientation, Solution};
use crate::error::{check_len, Error, Result};

const BREAKPOINT_TOL: f64 = 1e-9;
const VERTEX_SCAN_MAX_ITEMS: usize = 8;

/// Continuous knapsack polytope `{x ∈ [0,1]^m : pᵀx ≤ B}`.
#[derive(Debug, Clone)]
pub struct KnapsackDomain {
    weights: Vec<f64>,
    capacity: f64,
    maximize: bool,
}

impl KnapsackDomain {
    /// Value-maximizing knapsack with the given item weights and capacity.
    pub fn new(weights: Vec<f64>, capacity: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("knapsack needs at least one item".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "knapsack weights must be positive and finite, got {w}"
            )));
        }
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "knapsack capacity must be nonnegative, got {capacity}"
            )));
        }
        Ok(Self {
            weights,
            capacity,
            maximize: true,
        })
    }

    /// Treat native vectors as costs instead of values.
    pub fn minimizing(mut self) -> Self {
        self.maximize = false;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn is_maximizing(&self) -> bool {
        self.maximize
    }

    /// Greedy LP optimum of `max valuesᵀx`.
    ///
    /// Items with nonpositive value are never packed and at most one item is
    /// fractional. The returned dual is the smallest optimal budget price.
    pub fn solve(&self, values: &[f64]) -> Result<Solution> {
        check_len("knapsack solve", self.weights.len(), values.len())?;
        let m = values.len();
        let mut order: Vec<usize> = (0..m).filter(|&j| values[j] > 0.0).collect();
        // stable sort keeps lower indices first among equal ratios
        order.sort_by(|&a, &b| {
            let ra = values[a] / self.weights[a];
            let rb = values[b] / self.weights[b];
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut x = vec![0.0; m];
        let mut remaining = self.capacity;
        let mut tau = 0.0;
        let mut pos = 0;
        while pos < order.len() {
            let j = order[pos];
            if remaining <= 0.0 {
                break;
            }
            if self.weights[j] <= remaining {
                x[j] = 1.0;
                remaining -= self.weights[j];
                pos += 1;
            } else {
                x[j] = remaining / self.weights[j];
                remaining = 0.0;
                tau = values[j] / self.weights[j];
                pos = order.len();
            }
        }
        if remaining <= 0.0 && tau == 0.0 {
            // budget exhausted by whole items: price at the best item left out
            if let Some(&j) = order.get(pos) {
                tau = values[j] / self.weights[j];
            }
        }
        Ok(Solution {
            objective: dot(values, &x),
            x,
            dual: Some(tau),
        })
    }

    fn clip_map(&self, values: &[f64], lambda: f64, tau: f64) -> Vec<f64> {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, p)| ((v - p * tau) / lambda).clamp(0.0, 1.0))
            .collect()
    }

    fn load(&self, values: &[f64], lambda: f64, tau: f64) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, p)| p * ((v - p * tau) / lambda).clamp(0.0, 1.0))
            .sum()
    }

    /// Unique maximizer of `valuesᵀx - (λ/2)‖x‖²` over the polytope.
    ///
    /// The dual `τ` is the smallest nonnegative price with `pᵀx(τ) ≤ B`.
    pub fn solve_regularized(&self, values: &[f64], lambda: f64) -> Result<Solution> {
        check_len("regularized knapsack", self.weights.len(), values.len())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be positive, got {lambda}"
            )));
        }
        let tau = self.regularized_price(values, lambda);
        let x = self.clip_map(values, lambda, tau);
        let objective = dot(values, &x) - 0.5 * lambda * dot(&x, &x);
        Ok(Solution {
            x,
            objective,
            dual: Some(tau),
        })
    }

    fn regularized_price(&self, values: &[f64], lambda: f64) -> f64 {
        let b = self.capacity;
        if self.load(values, lambda, 0.0) <= b {
            return 0.0;
        }
        let mut breaks: Vec<f64> = values
            .iter()
            .zip(&self.weights)
            .flat_map(|(v, p)| [v / p, (v - lambda) / p])
            .filter(|t| *t > 0.0)
            .collect();
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();

        let mut lo = 0.0;
        for &t in &breaks {
            let g = self.load(values, lambda, t);
            if g <= b {
                return self
                    .segment_price(values, lambda, lo, t)
                    .unwrap_or_else(|| self.bisect_price(values, lambda, lo, t));
            }
            lo = t;
        }
        // load is zero beyond the largest breakpoint, so this is unreachable
        // unless rounding interferes
        lo
    }

    /// Root of `load(τ) = B` on a segment between consecutive breakpoints,
    /// where the load is linear in `τ`.
    fn segment_price(&self, values: &[f64], lambda: f64, lo: f64, hi: f64) -> Option<f64> {
        let mid = 0.5 * (lo + hi);
        let (mut full, mut pv, mut pp) = (0.0, 0.0, 0.0);
        for (v, p) in values.iter().zip(&self.weights) {
            let x = (v - p * mid) / lambda;
            if x >= 1.0 {
                full += p;
            } else if x > 0.0 {
                pv += p * v;
                pp += p * p;
            }
        }
        if pp <= 0.0 {
            return None;
        }
        Some(((pv - lambda * (self.capacity - full)) / pp).clamp(lo, hi))
    }

    fn bisect_price(&self, values: &[f64], lambda: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            if hi - lo <= 1e-10 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.load(values, lambda, mid) <= self.capacity {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Jacobian of the regularized solution map with respect to `values`.
    ///
    /// Fails with [`Error::Breakpoint`] where the map is not differentiable.
    pub fn jacobian_regularized(&self, values: &[f64], lambda: f64) -> Result<DMatrix<f64>> {
        let sol = self.solve_regularized(values, lambda)?;
        let m = values.len();
        let tau = sol.dual.unwrap_or(0.0);
        let b = self.capacity;
        let scaled = |t: f64| -> Vec<f64> {
            values
                .iter()
                .zip(&self.weights)
                .map(|(v, p)| (v - p * t) / lambda)
                .collect()
        };
        let near_kink = |u: &[f64]| {
            u.iter()
                .any(|&u| u.abs() <= BREAKPOINT_TOL || (u - 1.0).abs() <= BREAKPOINT_TOL)
        };

        let load0 = self.load(values, lambda, 0.0);
        let binding = load0 > b + BREAKPOINT_TOL * b.max(1.0);
        let u = scaled(tau);
        let free: Vec<usize> = (0..m).filter(|&j| u[j] > 0.0 && u[j] < 1.0).collect();

        if !binding {
            if (load0 - b).abs() <= BREAKPOINT_TOL * b.max(1.0) && !free.is_empty() {
                return Err(Error::Breakpoint);
            }
            if near_kink(&u) {
                return Err(Error::Breakpoint);
            }
            let mut jac = DMatrix::zeros(m, m);
            for &j in &free {
                jac[(j, j)] = 1.0 / lambda;
            }
            return Ok(jac);
        }

        if free.is_empty() {
            // every item saturated: τ ranges over an interval on which x is constant
            let hi = values
                .iter()
                .zip(&self.weights)
                .flat_map(|(v, p)| [v / p, (v - lambda) / p])
                .filter(|t| *t > tau + BREAKPOINT_TOL)
                .fold(f64::INFINITY, f64::min);
            if hi.is_finite() && hi - tau <= BREAKPOINT_TOL {
                return Err(Error::Breakpoint);
            }
            return Ok(DMatrix::zeros(m, m));
        }

        if near_kink(&u) {
            return Err(Error::Breakpoint);
        }
        let pf: f64 = free.iter().map(|&j| self.weights[j].powi(2)).sum();
        let mut jac = DMatrix::zeros(m, m);
        for &i in &free {
            for &j in &free {
                let eye = if i == j { 1.0 } else { 0.0 };
                jac[(i, j)] = (eye - self.weights[i] * self.weights[j] / pf) / lambda;
            }
        }
        Ok(jac)
    }

    /// All vertices of the polytope: packed subsets plus at most one
    /// fractional item filling the remaining capacity.
    pub fn enumerate_vertices(&self) -> Vec<Vec<f64>> {
        let m = self.weights.len();
        let mut out = Vec::new();
        for mask in 0u64..(1u64 << m) {
            let used: f64 = (0..m)
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| self.weights[j])
                .sum();
            if used > self.capacity {
                continue;
            }
            let base: Vec<f64> = (0..m).map(|j| (mask >> j & 1) as f64).collect();
            for j in (0..m).filter(|j| mask >> j & 1 == 0) {
                let frac = (self.capacity - used) / self.weights[j];
                if frac > 0.0 && frac < 1.0 {
                    let mut v = base.clone();
                    v[j] = frac;
                    out.push(v);
                }
            }
            out.push(base);
        }
        out
    }
}

impl OptDomain for KnapsackDomain {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn orientation(&self) -> Orientation {
        if self.maximize {
            Orientation::Maximize
        } else {
            Orientation::Minimize
        }
    }

    fn argmin(&self, cost: &[f64]) -> Result<Solution> {
        let values: Vec<f64> = cost.iter().map(|c| -c).collect();
        let mut sol = self.solve(&values)?;
        sol.objective = -sol.objective;
        Ok(sol)
    }

    /// Exact up to eight items; beyond that the box bound `√m`.
    fn diameter(&self) -> f64 {
        let m = self.weights.len();
        if m > VERTEX_SCAN_MAX_ITEMS {
            return (m as f64).sqrt();
        }
        let verts = self.enumerate_vertices();
        let mut best: f64 = 0.0;
        for (i, a) in verts.iter().enumerate() {
            for b in &verts[i + 1..] {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                best = best.max(d2);
            }
        }
        best.sqrt()
    }

    fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        (self.weights.len() <= 16).then(|| self.enumerate_vertices())
    }

    fn name(&self) -> &'static str {
        "knapsack"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dom(p: &[f64], b: f64) -> KnapsackDomain {
        KnapsackDomain::new(p.to_vec(), b).unwrap()
    }

    #[test]
    fn dominant_item_fills_capacity() {
        let s = dom(&[1.0, 1.0], 1.0).solve(&[2.0, 1.0]).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn one_fractional_item() {
        let s = dom(&[2.0, 1.0], 2.0).solve(&[3.0, 2.0]).unwrap();
        assert_eq!(s.x, vec![0.5, 1.0]);
        assert_eq!(s.objective, 3.5);
        assert_eq!(s.dual, Some(1.5));
    }

    #[test]
    fn negative_values_stay_out() {
        let s = dom(&[1.0, 1.0], 2.0).solve(&[-1.0, -1.0]).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.dual, Some(0.0));
    }

    #[test]
    fn ratio_ties_prefer_low_index() {
        let s = dom(&[1.0, 2.0], 1.0).solve(&[1.0, 2.0]).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
    }

    #[test]
    fn argmin_is_negated_solve() {
        let d = dom(&[2.0, 1.0], 2.0);
        let s = d.argmin(&[-3.0, -2.0]).unwrap();
        assert_eq!(s.x, vec![0.5, 1.0]);
        assert_eq!(s.objective, -3.5);
    }

    #[test]
    fn regularized_slack_budget() {
        let s = dom(&[1.0, 1.0], 2.0).solve_regularized(&[0.5, 2.0], 1.0).unwrap();
        assert_eq!(s.x, vec![0.5, 1.0]);
        assert_eq!(s.dual, Some(0.0));
    }

    #[test]
    fn regularized_binding_budget() {
        let s = dom(&[1.0, 1.0], 1.0).solve_regularized(&[0.5, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(s.x[0], 0.0);
        assert_abs_diff_eq!(s.x[1], 1.0);
        // any price in [0.5, 1] supports this point; the smallest is reported
        assert_abs_diff_eq!(s.dual.unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn regularized_nonpositive_values() {
        let s = dom(&[1.0, 3.0], 1.0).solve_regularized(&[-1.0, 0.0], 0.5).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert_eq!(s.dual, Some(0.0));
    }

    #[test]
    fn regularized_rejects_bad_lambda() {
        assert!(dom(&[1.0], 1.0).solve_regularized(&[1.0], 0.0).is_err());
        assert!(dom(&[1.0], 1.0).solve_regularized(&[1.0], -1.0).is_err());
    }

    #[test]
    fn jacobian_interior_slack() {
        let j = dom(&[1.0, 1.0], 5.0).jacobian_regularized(&[0.3, 0.6], 2.0).unwrap();
        assert_eq!(j, DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn jacobian_saturated_row_is_zero() {
        let j = dom(&[1.0, 1.0], 5.0).jacobian_regularized(&[0.3, 4.0], 1.0).unwrap();
        assert_eq!(j[(1, 1)], 0.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(j[(0, 0)], 1.0);
    }

    #[test]
    fn jacobian_flags_kink() {
        let d = dom(&[1.0, 1.0], 5.0);
        assert!(matches!(
            d.jacobian_regularized(&[1.0, 0.5], 1.0),
            Err(Error::Breakpoint)
        ));
    }

    #[test]
    fn jacobian_all_saturated_binding_is_zero() {
        // items 0 and 1 exactly fill the budget; item 2 excluded
        let d = dom(&[1.0, 2.0, 1.0], 3.0);
        let j = d.jacobian_regularized(&[5.0, 9.0, -1.0], 0.1).unwrap();
        assert_eq!(j, DMatrix::zeros(3, 3));
    }

    #[test]
    fn vertex_set_of_two_items() {
        let verts = dom(&[2.0, 1.0], 2.0).enumerate_vertices();
        for v in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 1.0]] {
            assert!(verts.iter().any(|u| u == &v.to_vec()), "missing {v:?}");
        }
        assert_eq!(verts.len(), 4);
    }

    #[test]
    fn diameter_of_unit_box_corner() {
        // budget large enough for everything: the box [0,1]^2
        assert_abs_diff_eq!(dom(&[1.0, 1.0], 2.0).diameter(), 2f64.sqrt());
        // budget one: triangle with vertices 0, e1, e2
        assert_abs_diff_eq!(dom(&[1.0, 1.0], 1.0).diameter(), 2f64.sqrt());
        assert_abs_diff_eq!(dom(&[1.0], 1.0).diameter(), 1.0);
    }
}
