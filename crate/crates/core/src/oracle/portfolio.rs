use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{OptDomain, Orientation, Solution};
use crate::error::{check_len, Error, Result};

const KKT_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 100_000;
const POWER_STEPS: usize = 50;
const POLISH_EVERY: usize = 10;
const PROJECTION_TOL: f64 = 1e-12;
const PROJECTION_CAP: usize = 400;

/// Mean-variance region `{x : pᵀx = b}` (optionally with `x ≥ 0`) and the
/// risk term `½ xᵀQx`. Native vectors are expected returns.
#[derive(Debug, Clone)]
pub struct PortfolioDomain {
    q: DMatrix<f64>,
    p: DVector<f64>,
    b: f64,
    nonneg: bool,
    q_inv_p: DVector<f64>,
    p_q_inv_p: f64,
    /// `Q⁻¹ - Q⁻¹p(Q⁻¹p)ᵀ / pᵀQ⁻¹p`
    a: DMatrix<f64>,
    lipschitz: f64,
}

impl PortfolioDomain {
    pub fn new(q: DMatrix<f64>, p: Vec<f64>, b: f64, nonneg: bool) -> Result<Self> {
        let m = p.len();
        if m == 0 {
            return Err(Error::InvalidParameter("portfolio needs at least one asset".into()));
        }
        if q.nrows() != m || q.ncols() != m {
            return Err(Error::Dimension {
                context: "portfolio risk matrix",
                expected: m,
                got: q.nrows().max(q.ncols()),
            });
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-10 * q.amax().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "risk matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("budget coefficients must be positive".into()));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidParameter(format!("budget must be positive, got {b}")));
        }
        let chol = Cholesky::new(q.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite("Cholesky factorization of the risk matrix failed".into())
        })?;
        let diag_min = chol.l_dirty().diagonal().min();
        let diag_max = chol.l_dirty().diagonal().max();
        if !(diag_min > 0.0) || diag_max / diag_min > 1e8 {
            return Err(Error::NotPositiveDefinite(format!(
                "risk matrix is numerically singular (Cholesky diagonal range {diag_min:e}..{diag_max:e})"
            )));
        }
        let p = DVector::from_vec(p);
        let q_inv = chol.inverse();
        let q_inv_p = &q_inv * &p;
        let p_q_inv_p = p.dot(&q_inv_p);
        let a = &q_inv - &q_inv_p * q_inv_p.transpose() / p_q_inv_p;
        let lipschitz = power_iteration(&q);
        Ok(Self {
            q,
            p,
            b,
            nonneg,
            q_inv_p,
            p_q_inv_p,
            a,
            lipschitz,
        })
    }

    /// Unit-budget long-only portfolio `1ᵀx = 1, x ≥ 0`.
    pub fn long_only(q: DMatrix<f64>) -> Result<Self> {
        let m = q.nrows();
        Self::new(q, vec![1.0; m], 1.0, true)
    }

    pub fn risk_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    /// Matrix `A` of the closed-form equality-constrained solution.
    pub fn solution_operator(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Largest eigenvalue estimate of `Q` from power iteration.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Closed-form maximizer of `dᵀx - ½xᵀQx` subject to `pᵀx = b` only.
    pub fn solve_eq(&self, returns: &[f64]) -> Result<Solution> {
        check_len("portfolio returns", self.p.len(), returns.len())?;
        let d = DVector::from_column_slice(returns);
        let x = &self.a * &d + &self.q_inv_p * (self.b / self.p_q_inv_p);
        // multiplier of pᵀx = b in  Qx - d + γp = 0
        let gamma = (self.q_inv_p.dot(&d) - self.b) / self.p_q_inv_p;
        let x: Vec<f64> = x.iter().copied().collect();
        Ok(Solution {
            objective: self.canonical_value(&x, returns),
            x,
            dual: Some(gamma),
        })
    }

    /// `½(d - c)ᵀA(d - c)`, the equality-constrained optimality gap.
    pub fn closed_form_loss(&self, d: &[f64], c: &[f64]) -> Result<f64> {
        check_len("portfolio loss", self.p.len(), d.len())?;
        check_len("portfolio loss", self.p.len(), c.len())?;
        let diff = DVector::from_iterator(d.len(), d.iter().zip(c).map(|(a, b)| a - b));
        Ok(0.5 * diff.dot(&(&self.a * &diff)))
    }

    /// Long-only optimum by accelerated projected gradient with periodic
    /// exact polishing on the current support.
    pub fn solve_qp(&self, returns: &[f64]) -> Result<Solution> {
        check_len("portfolio returns", self.p.len(), returns.len())?;
        let m = self.p.len();
        let r = DVector::from_column_slice(returns);
        let value = |x: &DVector<f64>| 0.5 * x.dot(&(&self.q * x)) - r.dot(x);

        let mut x = DVector::from_element(m, self.b / self.p.sum());
        let mut y = x.clone();
        let mut f_x = value(&x);
        let mut t = 1.0_f64;
        let mut step_l = self.lipschitz.max(f64::MIN_POSITIVE);
        let mut best_residual = f64::INFINITY;

        for it in 1..=MAX_ITERS {
            let grad = &self.q * &y - &r;
            let f_y = value(&y);
            let mut x_new;
            loop {
                let trial = &y - &grad / step_l;
                x_new = self.project(&trial)?;
                let diff = &x_new - &y;
                let model = f_y + grad.dot(&diff) + 0.5 * step_l * diff.norm_squared();
                if value(&x_new) <= model + 1e-12 * model.abs().max(1.0) {
                    break;
                }
                step_l *= 2.0;
            }
            let f_new = value(&x_new);
            if f_new > f_x {
                // adaptive restart
                t = 1.0;
                y = x.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &x_new + (&x_new - &x) * ((t - 1.0) / t_next);
                t = t_next;
                x = x_new;
                f_x = f_new;
            }

            if it % POLISH_EVERY == 0 {
                let (res, _) = self.kkt_residual(x.as_slice(), returns);
                best_residual = best_residual.min(res);
                if res <= KKT_TOL {
                    return Ok(self.finish(x.as_slice().to_vec(), returns));
                }
                if let Some(polished) = self.polish(x.as_slice(), &r) {
                    let (res, _) = self.kkt_residual(&polished, returns);
                    if res <= KKT_TOL {
                        return Ok(self.finish(polished, returns));
                    }
                }
            }
        }
        Err(Error::NonConvergence(format!(
            "portfolio QP reached {MAX_ITERS} iterations with KKT residual {best_residual:e}"
        )))
    }

    fn finish(&self, x: Vec<f64>, returns: &[f64]) -> Solution {
        let (_, gamma) = self.kkt_residual(&x, returns);
        Solution {
            objective: self.canonical_value(&x, returns),
            x,
            dual: Some(gamma),
        }
    }

    fn canonical_value(&self, x: &[f64], returns: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q * &xv)) - returns.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest KKT violation of a long-only point, with the least-squares
    /// budget multiplier on its support.
    pub fn kkt_residual(&self, x: &[f64], returns: &[f64]) -> (f64, f64) {
        let xv = DVector::from_column_slice(x);
        let g = &self.q * &xv - DVector::from_column_slice(returns);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..x.len() {
            if x[j] > 0.0 {
                num += self.p[j] * g[j];
                den += self.p[j] * self.p[j];
            }
        }
        let gamma = if den > 0.0 { -num / den } else { 0.0 };
        let mut res = (self.p.dot(&xv) - self.b).abs();
        for j in 0..x.len() {
            let s = g[j] + gamma * self.p[j];
            if x[j] > 0.0 {
                res = res.max(s.abs());
            } else {
                res = res.max(-x[j]).max(-s);
            }
        }
        (res, gamma)
    }

    /// Solves the equality-constrained problem restricted to the support of `x`.
    fn polish(&self, x: &[f64], r: &DVector<f64>) -> Option<Vec<f64>> {
        let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] > 0.0).collect();
        if support.is_empty() {
            return None;
        }
        let s = support.len();
        let qs = DMatrix::from_fn(s, s, |i, j| self.q[(support[i], support[j])]);
        let ps = DVector::from_fn(s, |i, _| self.p[support[i]]);
        let rs = DVector::from_fn(s, |i, _| r[support[i]]);
        let chol: Cholesky<f64, Dyn> = Cholesky::new(qs)?;
        let q_inv_r = chol.solve(&rs);
        let q_inv_p = chol.solve(&ps);
        let denom = ps.dot(&q_inv_p);
        // Qx - r + γp = 0 on the support, pᵀx = b
        let gamma = (ps.dot(&q_inv_r) - self.b) / denom;
        let xs = q_inv_r - q_inv_p * gamma;
        if xs.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let mut out = vec![0.0; x.len()];
        for (i, &j) in support.iter().enumerate() {
            out[j] = xs[i];
        }
        Some(out)
    }

    /// Euclidean projection onto `{x ≥ 0, pᵀx = b}`.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let p = &self.p;
        let b = self.b;
        let p2 = p.norm_squared();
        let ratios: Vec<f64> = y.iter().zip(p.iter()).map(|(a, w)| a / w).collect();
        let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let rmax = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let load = |theta: f64| -> f64 {
            y.iter()
                .zip(p.iter())
                .map(|(a, w)| w * (a - theta * w).max(0.0))
                .sum()
        };
        let theta0 = (p.dot(y) - b) / p2;
        let theta = if theta0 <= rmin {
            theta0
        } else {
            let mut lo = rmin - b / p2;
            let mut hi = rmax;
            let mut done = false;
            for _ in 0..PROJECTION_CAP {
                if hi - lo <= PROJECTION_TOL * lo.abs().max(hi.abs()).max(1.0) {
                    done = true;
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if load(mid) > b {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if !done {
                return Err(Error::NonConvergence(
                    "simplex projection bisection did not converge".into(),
                ));
            }
            let approx = 0.5 * (lo + hi);
            // exact multiplier on the identified support
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..y.len() {
                if y[j] - approx * p[j] > 0.0 {
                    num += p[j] * y[j];
                    den += p[j] * p[j];
                }
            }
            let exact = (num - b) / den;
            let consistent = (0..y.len()).all(|j| {
                let inside = y[j] - approx * p[j] > 0.0;
                let v = y[j] - exact * p[j];
                if inside {
                    v > 0.0
                } else {
                    v <= 0.0
                }
            });
            if den > 0.0 && consistent {
                exact
            } else {
                approx
            }
        };
        Ok(DVector::from_iterator(
            y.len(),
            y.iter().zip(p.iter()).map(|(a, w)| (a - theta * w).max(0.0)),
        ))
    }
}

fn power_iteration(q: &DMatrix<f64>) -> f64 {
    let m = q.nrows();
    let mut v = DVector::from_fn(m, |i, _| 1.0 + i as f64 / m as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_STEPS {
        let w = q * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / n;
    }
    lambda
}

impl OptDomain for PortfolioDomain {
    fn dim(&self) -> usize {
        self.p.len()
    }

    fn orientation(&self) -> Orientation {
        Orientation::Maximize
    }

    fn argmin(&self, cost: &[f64]) -> Result<Solution> {
        let returns: Vec<f64> = cost.iter().map(|c| -c).collect();
        if self.nonneg {
            self.solve_qp(&returns)
        } else {
            self.solve_eq(&returns)
        }
    }

    fn curvature(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q * &xv))
    }

    /// Largest distance between two vertices of the scaled simplex; infinite
    /// without the sign constraint.
    fn diameter(&self) -> f64 {
        if !self.nonneg {
            return f64::INFINITY;
        }
        let ends: Vec<f64> = self.p.iter().map(|w| self.b / w).collect();
        let mut best: f64 = 0.0;
        for i in 0..ends.len() {
            for j in i + 1..ends.len() {
                best = best.max((ends[i] * ends[i] + ends[j] * ends[j]).sqrt());
            }
        }
        best
    }

    fn name(&self) -> &'static str {
        "portfolio"
    }
}
