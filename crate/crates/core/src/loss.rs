//! True optimality-gap loss and convex surrogate losses.
//!
//! All losses take native vectors (costs for minimizing domains, values or
//! returns for maximizing ones) and return subgradients with respect to the
//! native prediction.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::oracle::{canonical_cost, canonical_objective, dot, KnapsackDomain, OptDomain};

/// Loss value with an optional subgradient in prediction space.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// `None` where the loss is not differentiable and has no subgradient
    /// contract (true loss, regularized gap at a breakpoint).
    pub subgrad: Option<Vec<f64>>,
}

/// Prediction-independent quantities of a single realized cost vector,
/// cached across training iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub x: Vec<f64>,
    pub value: f64,
}

/// A loss `ℓ(d, c)` on predicted and realized vectors.
pub trait LossFn: Send + Sync {
    fn name(&self) -> &'static str;

    /// Precomputes whatever depends only on `c`.
    fn anchor(&self, _c: &[f64]) -> Result<Option<Anchor>> {
        Ok(None)
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], anchor: Option<&Anchor>) -> Result<LossEval>;

    fn eval(&self, d: &[f64], c: &[f64]) -> Result<LossEval> {
        let a = self.anchor(c)?;
        self.eval_anchored(d, c, a.as_ref())
    }

    fn value(&self, d: &[f64], c: &[f64]) -> Result<f64> {
        Ok(self.eval(d, c)?.value)
    }

    fn is_convex(&self) -> bool {
        true
    }

    /// Closed-form minimizer of `Σ_i prob_i ℓ(d, c_i)`, if one is known.
    fn conditional_minimizer(&self, _outcomes: &[(f64, &[f64])]) -> Option<Vec<f64>> {
        None
    }
}

/// `‖d - c‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

/// `‖d - c‖₁`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbsDevLoss;

pub fn squared_loss(d: &[f64], c: &[f64]) -> Result<LossEval> {
    check_len("squared loss", d.len(), c.len())?;
    let diff: Vec<f64> = d.iter().zip(c).map(|(a, b)| a - b).collect();
    Ok(LossEval {
        value: dot(&diff, &diff),
        subgrad: Some(diff.iter().map(|v| 2.0 * v).collect()),
    })
}

pub fn abs_dev_loss(d: &[f64], c: &[f64]) -> Result<LossEval> {
    check_len("absolute deviation loss", d.len(), c.len())?;
    let mut value = 0.0;
    let mut g = Vec::with_capacity(d.len());
    for (a, b) in d.iter().zip(c) {
        let diff = a - b;
        value += diff.abs();
        g.push(if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        });
    }
    Ok(LossEval {
        value,
        subgrad: Some(g),
    })
}

impl LossFn for SquaredLoss {
    fn name(&self) -> &'static str {
        "squared"
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], _: Option<&Anchor>) -> Result<LossEval> {
        squared_loss(d, c)
    }

    fn conditional_minimizer(&self, outcomes: &[(f64, &[f64])]) -> Option<Vec<f64>> {
        let m = outcomes.first()?.1.len();
        let total: f64 = outcomes.iter().map(|o| o.0).sum();
        let mut mean = vec![0.0; m];
        for (p, c) in outcomes {
            for j in 0..m {
                mean[j] += p * c[j] / total;
            }
        }
        Some(mean)
    }
}

impl LossFn for AbsDevLoss {
    fn name(&self) -> &'static str {
        "abs_dev"
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], _: Option<&Anchor>) -> Result<LossEval> {
        abs_dev_loss(d, c)
    }

    /// Coordinatewise lower weighted median.
    fn conditional_minimizer(&self, outcomes: &[(f64, &[f64])]) -> Option<Vec<f64>> {
        let m = outcomes.first()?.1.len();
        let total: f64 = outcomes.iter().map(|o| o.0).sum();
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let mut col: Vec<(f64, f64)> = outcomes.iter().map(|(p, c)| (c[j], *p)).collect();
            col.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            let mut med = col[col.len() - 1].0;
            for (v, p) in col {
                acc += p;
                if acc >= 0.5 * total {
                    med = v;
                    break;
                }
            }
            out.push(med);
        }
        Some(out)
    }
}

/// Optimality gap `f(x*(d)) + cᵀx*(d) - min_x {f(x) + cᵀx}`.
pub fn true_loss(dom: &dyn OptDomain, d: &[f64], c: &[f64]) -> Result<f64> {
    check_len("true loss prediction", dom.dim(), d.len())?;
    check_len("true loss cost", dom.dim(), c.len())?;
    let cc = canonical_cost(dom, c);
    let xd = dom.argmin(&canonical_cost(dom, d))?.x;
    let best = dom.argmin(&cc)?.objective;
    Ok(canonical_objective(dom, &xd, &cc) - best)
}

/// SPO+ loss and subgradient: `L(c, 2d - c)` evaluated in minimization form.
pub fn spo_plus_loss(dom: &dyn OptDomain, d: &[f64], c: &[f64]) -> Result<LossEval> {
    SpoPlusLoss::from_ref(dom).eval(d, c)
}

/// The true loss as a [`LossFn`]; it carries no subgradient.
#[derive(Debug, Clone)]
pub struct TrueLoss {
    domain: Arc<dyn OptDomain>,
}

impl TrueLoss {
    pub fn new(domain: Arc<dyn OptDomain>) -> Self {
        Self { domain }
    }
}

impl LossFn for TrueLoss {
    fn name(&self) -> &'static str {
        "true"
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], _: Option<&Anchor>) -> Result<LossEval> {
        Ok(LossEval {
            value: true_loss(self.domain.as_ref(), d, c)?,
            subgrad: None,
        })
    }

    fn is_convex(&self) -> bool {
        false
    }
}

enum DomainRef<'a> {
    Owned(Arc<dyn OptDomain>),
    Borrowed(&'a dyn OptDomain),
}

/// SPO+ surrogate on an arbitrary domain.
pub struct SpoPlusLoss<'a> {
    domain: DomainRef<'a>,
}

impl std::fmt::Debug for SpoPlusLoss<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpoPlusLoss")
            .field("domain", &self.dom().name())
            .finish()
    }
}

impl SpoPlusLoss<'static> {
    pub fn new(domain: Arc<dyn OptDomain>) -> Self {
        Self {
            domain: DomainRef::Owned(domain),
        }
    }
}

impl<'a> SpoPlusLoss<'a> {
    pub fn from_ref(domain: &'a dyn OptDomain) -> Self {
        Self {
            domain: DomainRef::Borrowed(domain),
        }
    }

    fn dom(&self) -> &dyn OptDomain {
        match &self.domain {
            DomainRef::Owned(d) => d.as_ref(),
            DomainRef::Borrowed(d) => *d,
        }
    }
}

impl LossFn for SpoPlusLoss<'_> {
    fn name(&self) -> &'static str {
        "spo_plus"
    }

    fn anchor(&self, c: &[f64]) -> Result<Option<Anchor>> {
        let dom = self.dom();
        check_len("spo+ cost", dom.dim(), c.len())?;
        let x = dom.argmin(&canonical_cost(dom, c))?.x;
        let value = dom.curvature(&x);
        Ok(Some(Anchor { x, value }))
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], anchor: Option<&Anchor>) -> Result<LossEval> {
        let dom = self.dom();
        check_len("spo+ prediction", dom.dim(), d.len())?;
        check_len("spo+ cost", dom.dim(), c.len())?;
        let owned;
        let anchor = match anchor {
            Some(a) => a,
            None => {
                owned = self.anchor(c)?.expect("spo+ always anchors");
                &owned
            }
        };
        let sign = dom.orientation().sign();
        let shifted: Vec<f64> = d
            .iter()
            .zip(c)
            .map(|(di, ci)| sign * (2.0 * di - ci))
            .collect();
        let inner = dom.argmin(&shifted)?;
        let value = anchor.value + dot(&shifted, &anchor.x) - inner.objective;
        let subgrad = anchor
            .x
            .iter()
            .zip(&inner.x)
            .map(|(a, b)| sign * 2.0 * (a - b))
            .collect();
        Ok(LossEval {
            value,
            subgrad: Some(subgrad),
        })
    }
}

/// Regularization strength of the regularized knapsack gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegGapParams {
    pub lambda: f64,
}

impl RegGapParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidParameter(format!(
                "regularization must be positive, got {lambda}"
            )))
        }
    }
}

/// Gap `cᵀx*(c) - cᵀx*_λ(d)` between the optimal knapsack value and the
/// value of the regularized decision, in value-maximization form.
#[derive(Debug)]
pub struct RegGapLoss {
    domain: Arc<KnapsackDomain>,
    params: RegGapParams,
    negatives: AtomicUsize,
}

impl RegGapLoss {
    pub fn new(domain: Arc<KnapsackDomain>, params: RegGapParams) -> Result<Self> {
        if !domain.is_maximizing() {
            return Err(Error::UnsupportedLoss(
                "reg_gap (knapsack must be value-maximizing)".into(),
            ));
        }
        Ok(Self {
            domain,
            params,
            negatives: AtomicUsize::new(0),
        })
    }

    /// Number of evaluations that produced a slightly negative value.
    pub fn negative_count(&self) -> usize {
        self.negatives.load(Ordering::Relaxed)
    }
}

pub fn reg_gap_loss(
    dom: &KnapsackDomain,
    params: RegGapParams,
    d: &[f64],
    c: &[f64],
) -> Result<LossEval> {
    RegGapLoss::new(Arc::new(dom.clone()), params)?.eval(d, c)
}

impl LossFn for RegGapLoss {
    fn name(&self) -> &'static str {
        "reg_gap"
    }

    fn anchor(&self, c: &[f64]) -> Result<Option<Anchor>> {
        let sol = self.domain.solve(c)?;
        Ok(Some(Anchor {
            value: sol.objective,
            x: sol.x,
        }))
    }

    fn eval_anchored(&self, d: &[f64], c: &[f64], anchor: Option<&Anchor>) -> Result<LossEval> {
        check_len("reg_gap cost", self.domain.weights().len(), c.len())?;
        let best = match anchor {
            Some(a) => a.value,
            None => self.domain.solve(c)?.objective,
        };
        let lambda = self.params.lambda;
        let x = self.domain.solve_regularized(d, lambda)?.x;
        let value = best - dot(c, &x);
        if value < 0.0 {
            let bound = lambda * c.len() as f64 / 2.0;
            if value < -bound {
                return Err(Error::Assumption(format!(
                    "regularized gap {value} below -{bound}"
                )));
            }
            self.negatives.fetch_add(1, Ordering::Relaxed);
        }
        let subgrad = match self.domain.jacobian_regularized(d, lambda) {
            Ok(jac) => Some((0..c.len()).map(|i| -dot(jac.column(i).as_slice(), c)).collect()),
            Err(Error::Breakpoint) => None,
            Err(e) => return Err(e),
        };
        Ok(LossEval { value, subgrad })
    }

    fn is_convex(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{IntervalDomain, PortfolioDomain, SimplexDomain};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn squared_values() {
        let e = squared_loss(&[1.0, 2.0], &[1.0, 0.0]).unwrap();
        assert_eq!(e.value, 4.0);
        assert_eq!(e.subgrad.unwrap(), vec![0.0, 4.0]);
        let z = squared_loss(&[1.5, -2.0], &[1.5, -2.0]).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.subgrad.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn abs_dev_values() {
        assert_eq!(abs_dev_loss(&[1.0, 2.0], &[1.0, 0.0]).unwrap().value, 2.0);
        let e = abs_dev_loss(&[3.0], &[1.0]).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.subgrad.unwrap(), vec![1.0]);
        assert_eq!(abs_dev_loss(&[2.0, 2.0], &[2.0, 2.0]).unwrap().value, 0.0);
    }

    #[test]
    fn multiclass_true_loss_misclassification() {
        let s = SimplexDomain::new(3).unwrap();
        let c = s.label(1);
        assert_eq!(true_loss(&s, &[0.1, 0.5, 0.9], &c).unwrap(), 1.0);
        assert_eq!(true_loss(&s, &[0.9, 0.1, 0.5], &c).unwrap(), 0.0);
    }

    #[test]
    fn knapsack_true_loss_matches_enumeration() {
        let k = KnapsackDomain::new(vec![2.0, 1.0], 2.0).unwrap();
        // x*(c) for c=(1,5) is (0.5,1) which is also x*(d) for d=(3,2)
        assert_abs_diff_eq!(true_loss(&k, &[3.0, 2.0], &[1.0, 5.0]).unwrap(), 0.0);
        // d=(5,1) packs item 0 fully: value 1 against optimum 5.5
        assert_abs_diff_eq!(true_loss(&k, &[5.0, 1.0], &[1.0, 5.0]).unwrap(), 4.5);
    }

    #[test]
    fn binary_spo_plus_is_hinge() {
        let e = spo_plus_loss(&IntervalDomain, &[0.25], &[1.0]).unwrap();
        assert_abs_diff_eq!(e.value, 0.5);
        for &(d, c) in &[(0.7, 1.0), (-0.3, 1.0), (0.2, -1.0), (-2.0, -1.0)] {
            let v = spo_plus_loss(&IntervalDomain, &[d], &[c]).unwrap().value;
            assert_abs_diff_eq!(v, (1.0 - 2.0 * d * c).max(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn multiclass_spo_plus_at_zero() {
        let s = SimplexDomain::new(2).unwrap();
        let e = spo_plus_loss(&s, &[0.0, 0.0], &s.label(0)).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn spo_plus_vanishes_at_truth() {
        let k = KnapsackDomain::new(vec![3.0, 1.0, 2.0], 4.0).unwrap();
        let c = [1.0, 4.0, 2.5];
        assert_abs_diff_eq!(spo_plus_loss(&k, &c, &c).unwrap().value, 0.0);
    }

    #[test]
    fn portfolio_spo_plus_is_four_gaps() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let dom = PortfolioDomain::new(q, vec![1.0, 2.0], 1.5, false).unwrap();
        let d = [0.3, -0.2];
        let c = [-0.4, 0.9];
        let spo = spo_plus_loss(&dom, &d, &c).unwrap().value;
        let gap = dom.closed_form_loss(&d, &c).unwrap();
        assert_abs_diff_eq!(spo, 4.0 * gap, epsilon = 1e-10);
        assert_abs_diff_eq!(true_loss(&dom, &d, &c).unwrap(), gap, epsilon = 1e-10);
    }

    #[test]
    fn reg_gap_example() {
        let k = KnapsackDomain::new(vec![1.0, 1.0], 1.0).unwrap();
        let p = RegGapParams::new(1.0).unwrap();
        let e = reg_gap_loss(&k, p, &[0.5, 2.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(e.value, 0.0);
    }

    #[test]
    fn reg_gap_zero_when_decisions_agree() {
        let k = KnapsackDomain::new(vec![1.0, 1.0, 1.0], 2.0).unwrap();
        let p = RegGapParams::new(0.01).unwrap();
        let c = [3.0, 1.0, 2.0];
        let e = reg_gap_loss(&k, p, &c, &c).unwrap();
        assert_abs_diff_eq!(e.value, 0.0);
    }

    #[test]
    fn reg_gap_rejects_minimizing_domain() {
        let k = KnapsackDomain::new(vec![1.0], 1.0).unwrap().minimizing();
        let p = RegGapParams::new(1.0).unwrap();
        assert!(RegGapLoss::new(Arc::new(k), p).is_err());
        assert!(RegGapParams::new(0.0).is_err());
    }

    #[test]
    fn true_loss_is_not_convex() {
        let s = SimplexDomain::new(2).unwrap();
        let c = s.label(1);
        let l0 = true_loss(&s, &[1.0, 0.0], &c).unwrap();
        let l1 = true_loss(&s, &[-1.0, 0.0], &c).unwrap();
        let mid = true_loss(&s, &[0.0, 0.0], &c).unwrap();
        assert_eq!((l0, l1, mid), (0.0, 1.0, 1.0));
        assert!(mid > 0.5 * l0 + 0.5 * l1);
    }
}
