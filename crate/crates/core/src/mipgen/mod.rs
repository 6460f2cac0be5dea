//! LP-format model emission for the regularized knapsack gap ERM (a
//! mixed-integer program) and the multiclass SPO+ ERM (a linear program).
//!
//! Variable names: `V_r_c` for predictor entries, and per data point `i`
//! and item `j`: `x_i_j`, `q_i_j`, `z_i_j`, `tau_i`, `v_i`, `t_i`, `gamma_i`.
//! The objective constant is carried by `const_one`, fixed at 1.

mod lp;

pub use lp::{Constraint, LpModel, RowSense, VarKind, Variable};

use crate::error::{Error, Result};
use crate::oracle::{KnapsackDomain, SimplexDomain};
use crate::predictor::{Dataset, LinearPredictor};

/// Solver time limit recorded in emitted files, in seconds.
pub const TIME_LIMIT_SECS: u32 = 300;

/// Emitted regularized-gap model with its big-M constants.
#[derive(Debug, Clone)]
pub struct RegGapMip {
    pub model: LpModel,
    /// Bound on `‖Vw_i‖₁` implied by the entry box on `V`.
    pub big_m: f64,
    /// Bound on the budget price, `big_m / min_j p_j`.
    pub big_m_tau: f64,
    pub lambda: f64,
    m: usize,
    k: usize,
}

fn predictor_vars(model: &mut LpModel, m: usize, k: usize, lo: f64, hi: f64) -> Vec<Vec<usize>> {
    (0..m)
        .map(|r| {
            (0..k)
                .map(|c| model.add_var(format!("V_{r}_{c}"), lo, hi, VarKind::Continuous))
                .collect()
        })
        .collect()
}

/// Terms of `scale · (V w)_j`.
fn prediction_terms(v: &[Vec<usize>], j: usize, w: &[f64], scale: f64) -> Vec<(usize, f64)> {
    v[j].iter()
        .zip(w)
        .filter(|(_, &wc)| wc != 0.0)
        .map(|(&idx, &wc)| (idx, scale * wc))
        .collect()
}

/// Mixed-integer model of `min_V (1/n) Σ_i ℓ_reg(V w_i, c_i)` with
/// `|V_rc| ≤ v_box`, using big-M complementarity for the regularized
/// knapsack optimality conditions.
pub fn emit_reg_gap_erm(
    data: &Dataset,
    dom: &KnapsackDomain,
    lambda: f64,
    v_box: f64,
) -> Result<RegGapMip> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    if !(v_box > 0.0 && v_box.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "predictor box must be positive, got {v_box}"
        )));
    }
    if data.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    if !dom.is_maximizing() {
        return Err(Error::InvalidParameter(
            "regularized gap needs a value-maximizing knapsack".into(),
        ));
    }
    let m = dom.weights().len();
    if data.cost_dim() != m {
        return Err(Error::Dimension {
            context: "training costs",
            expected: m,
            got: data.cost_dim(),
        });
    }
    let k = data.feature_dim();
    let n = data.len();
    let p = dom.weights();
    let b = dom.capacity();
    let w_norm = data
        .features
        .iter()
        .map(|w| w.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let big_m = (v_box * w_norm * m as f64).max(f64::MIN_POSITIVE);
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m_tau = big_m / p_min;

    let mut model = LpModel::new();
    model.add_comment(format!("regularized knapsack gap ERM: n = {n}, m = {m}, k = {k}, lambda = {lambda}"));
    model.add_comment(format!("big-M = {big_m}, price bound = {big_m_tau}"));
    model.add_comment(format!("time limit: {TIME_LIMIT_SECS} s (advisory)"));
    let v = predictor_vars(&mut model, m, k, -v_box, v_box);
    let one = model.add_var("const_one", 1.0, 1.0, VarKind::Continuous);

    let mut objective = Vec::new();
    let mut constant = 0.0;
    for (i, (w, c)) in data.features.iter().zip(&data.costs).enumerate() {
        let best = dom.solve(c)?;
        constant += c.iter().zip(&best.x).map(|(a, x)| a * x).sum::<f64>();
        let x: Vec<usize> = (0..m)
            .map(|j| model.add_var(format!("x_{i}_{j}"), 0.0, 1.0, VarKind::Continuous))
            .collect();
        let q: Vec<usize> = (0..m)
            .map(|j| model.add_var(format!("q_{i}_{j}"), 0.0, 1.0, VarKind::Binary))
            .collect();
        let z: Vec<usize> = (0..m)
            .map(|j| model.add_var(format!("z_{i}_{j}"), 0.0, 1.0, VarKind::Binary))
            .collect();
        let tau = model.add_var(format!("tau_{i}"), 0.0, f64::INFINITY, VarKind::Continuous);
        let bind = model.add_var(format!("v_{i}"), 0.0, 1.0, VarKind::Binary);

        model.add_constraint(
            format!("budget_{i}"),
            (0..m).map(|j| (x[j], p[j])).collect(),
            RowSense::Le,
            b,
        );
        model.add_constraint(
            format!("price_on_{i}"),
            vec![(tau, 1.0), (bind, -big_m_tau)],
            RowSense::Le,
            0.0,
        );
        let mut slack: Vec<(usize, f64)> = (0..m).map(|j| (x[j], -p[j])).collect();
        slack.push((bind, b));
        model.add_constraint(format!("budget_tight_{i}"), slack, RowSense::Le, 0.0);

        for j in 0..m {
            let big_q = big_m_tau * p[j] + big_m;
            let big_z = big_q + lambda;
            let d_plus = |extra: Vec<(usize, f64)>| {
                let mut t = prediction_terms(&v, j, w, 1.0);
                t.extend(extra);
                t
            };
            let d_minus = |extra: Vec<(usize, f64)>| {
                let mut t = prediction_terms(&v, j, w, -1.0);
                t.extend(extra);
                t
            };
            // q = 1 iff the reduced value d_j - p_j tau is nonnegative
            model.add_constraint(
                format!("q_up_{i}_{j}"),
                d_plus(vec![(tau, -p[j]), (q[j], -big_m)]),
                RowSense::Le,
                0.0,
            );
            model.add_constraint(
                format!("q_lo_{i}_{j}"),
                d_minus(vec![(tau, p[j]), (q[j], big_q)]),
                RowSense::Le,
                big_q,
            );
            // z = 1 iff the reduced value reaches lambda
            model.add_constraint(
                format!("z_up_{i}_{j}"),
                d_plus(vec![(tau, -p[j]), (z[j], -big_m)]),
                RowSense::Le,
                lambda,
            );
            model.add_constraint(
                format!("z_lo_{i}_{j}"),
                d_minus(vec![(tau, p[j]), (z[j], big_z)]),
                RowSense::Le,
                big_z - lambda,
            );
            model.add_constraint(
                format!("x_q_{i}_{j}"),
                vec![(x[j], 1.0), (q[j], -1.0)],
                RowSense::Le,
                0.0,
            );
            model.add_constraint(
                format!("x_z_{i}_{j}"),
                vec![(x[j], 1.0), (z[j], -1.0)],
                RowSense::Ge,
                0.0,
            );
            model.add_constraint(
                format!("x_up_{i}_{j}"),
                d_minus(vec![(x[j], lambda), (tau, p[j]), (q[j], big_q)]),
                RowSense::Le,
                big_q,
            );
            model.add_constraint(
                format!("x_lo_{i}_{j}"),
                d_minus(vec![(x[j], lambda), (tau, p[j]), (z[j], big_m)]),
                RowSense::Ge,
                0.0,
            );
            objective.push((x[j], -c[j] / n as f64));
        }
    }
    objective.push((one, constant / n as f64));
    model.set_objective(objective);
    Ok(RegGapMip {
        model,
        big_m,
        big_m_tau,
        lambda,
        m,
        k,
    })
}

impl RegGapMip {
    /// Assignment that fixes `V` to `predictor` and sets every per-point
    /// block from the regularized knapsack oracle.
    pub fn oracle_assignment(
        &self,
        predictor: &LinearPredictor,
        data: &Dataset,
        dom: &KnapsackDomain,
    ) -> Result<Vec<f64>> {
        let model = &self.model;
        let mut a = vec![0.0; model.variables.len()];
        for r in 0..self.m {
            for c in 0..self.k {
                a[self.index(&format!("V_{r}_{c}"))?] = predictor.matrix()[(r, c)];
            }
        }
        a[self.index("const_one")?] = 1.0;
        for (i, w) in data.features.iter().enumerate() {
            let d = predictor.predict(w)?;
            let sol = dom.solve_regularized(&d, self.lambda)?;
            let tau = sol.dual.unwrap_or(0.0);
            a[self.index(&format!("tau_{i}"))?] = tau;
            a[self.index(&format!("v_{i}"))?] = if tau > 0.0 { 1.0 } else { 0.0 };
            for j in 0..self.m {
                let reduced = d[j] - dom.weights()[j] * tau;
                a[self.index(&format!("x_{i}_{j}"))?] = sol.x[j];
                a[self.index(&format!("q_{i}_{j}"))?] = if reduced >= 0.0 { 1.0 } else { 0.0 };
                a[self.index(&format!("z_{i}_{j}"))?] = if reduced >= self.lambda { 1.0 } else { 0.0 };
            }
        }
        Ok(a)
    }

    /// The `x` block of data point `i` in an assignment.
    pub fn decode_x(&self, assignment: &[f64], i: usize) -> Result<Vec<f64>> {
        (0..self.m)
            .map(|j| Ok(assignment[self.index(&format!("x_{i}_{j}"))?]))
            .collect()
    }

    /// The predictor encoded in an assignment.
    pub fn decode_predictor(&self, assignment: &[f64]) -> Result<LinearPredictor> {
        let mut data = Vec::with_capacity(self.m * self.k);
        for r in 0..self.m {
            for c in 0..self.k {
                data.push(assignment[self.index(&format!("V_{r}_{c}"))?]);
            }
        }
        LinearPredictor::from_row_slice(self.m, self.k, &data)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.model
            .var_index(name)
            .ok_or_else(|| Error::InvalidParameter(format!("model has no variable {name}")))
    }
}

/// Linear program `min_V (1/n) Σ_i t_i` whose optimum is the multiclass
/// SPO+ ERM value. Costs must be labels `1 - e_j`.
pub fn emit_multiclass_spo_lp(data: &Dataset) -> Result<LpModel> {
    if data.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let m = data.cost_dim();
    let k = data.feature_dim();
    let n = data.len();
    let simplex = SimplexDomain::new(m)?;
    let mut model = LpModel::new();
    model.add_comment(format!("multiclass SPO+ ERM: n = {n}, m = {m}, k = {k}"));
    model.add_comment(format!("time limit: {TIME_LIMIT_SECS} s (advisory)"));
    let v = predictor_vars(&mut model, m, k, f64::NEG_INFINITY, f64::INFINITY);
    let mut objective = Vec::new();
    for (i, (w, c)) in data.features.iter().zip(&data.costs).enumerate() {
        let label = simplex
            .label_index(c)
            .ok_or_else(|| Error::Data(format!("row {i}: cost {c:?} is not a class label")))?;
        let t = model.add_var(format!("t_{i}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
        let g = model.add_var(format!("gamma_{i}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
        let mut top = prediction_terms(&v, label, w, 2.0);
        top.extend([(g, -1.0), (t, -1.0)]);
        model.add_constraint(format!("loss_{i}"), top, RowSense::Le, 0.0);
        let mut own = prediction_terms(&v, label, w, -2.0);
        own.push((g, 1.0));
        model.add_constraint(format!("gamma_{i}_{label}"), own, RowSense::Le, 0.0);
        for j in (0..m).filter(|&j| j != label) {
            let mut other = prediction_terms(&v, j, w, -2.0);
            other.push((g, 1.0));
            model.add_constraint(format!("gamma_{i}_{j}"), other, RowSense::Le, -1.0);
        }
        objective.push((t, 1.0 / n as f64));
    }
    model.set_objective(objective);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{reg_gap_loss, spo_plus_loss, RegGapParams};
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn toy() -> (KnapsackDomain, Dataset) {
        let dom = KnapsackDomain::new(vec![2.0, 3.0], 3.0).unwrap();
        let data = Dataset::new(
            vec![vec![1.0, 0.5], vec![-0.5, 1.0], vec![0.25, 1.0]],
            vec![vec![3.0, 1.0], vec![0.5, 2.0], vec![1.0, 1.0]],
        )
        .unwrap();
        (dom, data)
    }

    #[test]
    fn single_item_counts() {
        let dom = KnapsackDomain::new(vec![2.0], 1.0).unwrap();
        let data = Dataset::new(vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        let mip = emit_reg_gap_erm(&data, &dom, 0.1, 5.0).unwrap();
        assert_eq!(mip.model.binary_count(), 3);
        // budget row plus ten complementarity rows
        assert_eq!(mip.model.constraints.len(), 11);
        assert_eq!(mip.big_m_tau * 2.0, mip.big_m);
        assert_abs_diff_eq!(mip.big_m, 5.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (dom, data) = toy();
        assert!(emit_reg_gap_erm(&data, &dom, 0.0, 1.0).is_err());
        assert!(emit_reg_gap_erm(&data, &dom, 0.1, -1.0).is_err());
        assert!(emit_reg_gap_erm(&data, &dom.clone().minimizing(), 0.1, 1.0).is_err());
        let bad = Dataset::new(vec![vec![1.0]], vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(emit_multiclass_spo_lp(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn oracle_points_are_feasible_with_matching_objective() {
        let (dom, data) = toy();
        let lambda = 0.3;
        let mip = emit_reg_gap_erm(&data, &dom, lambda, 4.0).unwrap();
        let mut rng = rng_from_seed(12);
        for _ in 0..200 {
            let vals: Vec<f64> = (0..4).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let v = LinearPredictor::from_row_slice(2, 2, &vals).unwrap();
            let a = mip.oracle_assignment(&v, &data, &dom).unwrap();
            assert!(mip.model.max_violation(&a) <= 1e-8, "{}", mip.model.max_violation(&a));
            let params = RegGapParams::new(lambda).unwrap();
            let mut expected = 0.0;
            for (w, c) in data.features.iter().zip(&data.costs) {
                let d = v.predict(w).unwrap();
                expected += reg_gap_loss(&dom, params, &d, c).unwrap().value / 3.0;
            }
            assert_abs_diff_eq!(mip.model.objective_value(&a), expected, epsilon = 1e-9);
            assert_eq!(mip.decode_predictor(&a).unwrap(), v);
        }
    }

    #[test]
    fn wrong_block_is_infeasible() {
        let (dom, data) = toy();
        let mip = emit_reg_gap_erm(&data, &dom, 0.3, 4.0).unwrap();
        let v = LinearPredictor::from_row_slice(2, 2, &[1.0, 0.5, 2.0, -1.0]).unwrap();
        let mut a = mip.oracle_assignment(&v, &data, &dom).unwrap();
        let x0 = mip.model.var_index("x_0_0").unwrap();
        a[x0] = if a[x0] > 0.5 { a[x0] - 0.3 } else { a[x0] + 0.3 };
        assert!(mip.model.max_violation(&a) > 1e-3);
    }

    #[test]
    fn files_round_trip() {
        let (dom, data) = toy();
        let mip = emit_reg_gap_erm(&data, &dom, 0.3, 4.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.lp");
        mip.model.write(&path).unwrap();
        let back = LpModel::read(&path).unwrap();
        assert!(back.same_model(&mip.model));
        assert_eq!(back.constraints.len(), mip.model.constraints.len());
        assert!(std::fs::read_to_string(&path).unwrap().contains("time limit: 300 s"));
    }

    #[test]
    fn multiclass_counts_and_values() {
        let s = SimplexDomain::new(2).unwrap();
        let data = Dataset::new(vec![vec![1.0, 2.0]], vec![s.label(1)]).unwrap();
        let lp = emit_multiclass_spo_lp(&data).unwrap();
        assert_eq!(lp.variables.len(), 4 + 2);
        assert_eq!(lp.constraints.len(), 3);
        assert!(LpModel::parse(&lp.to_lp_string()).unwrap().same_model(&lp));
    }

    #[test]
    fn multiclass_tight_t_equals_loss() {
        let s = SimplexDomain::new(3).unwrap();
        let mut rng = rng_from_seed(5);
        let features: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let costs: Vec<Vec<f64>> = (0..4).map(|i| s.label(i % 3)).collect();
        let data = Dataset::new(features, costs).unwrap();
        let lp = emit_multiclass_spo_lp(&data).unwrap();
        for _ in 0..50 {
            let vals: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = LinearPredictor::from_row_slice(3, 2, &vals).unwrap();
            let mut a = vec![0.0; lp.variables.len()];
            for r in 0..3 {
                for c in 0..2 {
                    a[lp.var_index(&format!("V_{r}_{c}")).unwrap()] = vals[r * 2 + c];
                }
            }
            let mut mean = 0.0;
            for (i, (w, c)) in data.features.iter().zip(&data.costs).enumerate() {
                let d = v.predict(w).unwrap();
                let j = s.label_index(c).unwrap();
                let gamma = (0..3)
                    .map(|jj| if jj == j { 2.0 * d[jj] } else { 2.0 * d[jj] - 1.0 })
                    .fold(f64::INFINITY, f64::min);
                let loss = spo_plus_loss(&s, &d, c).unwrap().value;
                assert!(loss >= 0.0);
                a[lp.var_index(&format!("gamma_{i}")).unwrap()] = gamma;
                a[lp.var_index(&format!("t_{i}")).unwrap()] = 2.0 * d[j] - gamma;
                assert_abs_diff_eq!(2.0 * d[j] - gamma, loss, epsilon = 1e-12);
                mean += loss / 4.0;
            }
            assert!(lp.max_violation(&a) <= 1e-12);
            assert_abs_diff_eq!(lp.objective_value(&a), mean, epsilon = 1e-12);
        }
    }
}
