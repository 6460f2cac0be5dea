//! Linear predictors `w ↦ Vw` and empirical risk minimization.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::loss::{Anchor, LossFn};
use crate::rng::rng_from_seed;

const RIDGE: f64 = 1e-8;
const DIVERGENCE_LIMIT: f64 = 1e12;
const FORMAT_TAG: &str = "predopt-linear";
const FORMAT_VERSION: u32 = 1;

/// Anything mapping a feature vector to a predicted cost vector.
pub trait Predict: Sync {
    fn predict(&self, w: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Predict for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self(w))
    }
}

/// Coefficient matrix `V` of shape `m × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    v: DMatrix<f64>,
}

impl LinearPredictor {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("predictor has non-finite entries".into()));
        }
        Ok(Self { v })
    }

    pub fn zeros(m: usize, k: usize) -> Self {
        Self {
            v: DMatrix::zeros(m, k),
        }
    }

    pub fn from_row_slice(m: usize, k: usize, data: &[f64]) -> Result<Self> {
        check_len("predictor entries", m * k, data.len())?;
        Self::new(DMatrix::from_row_slice(m, k, data))
    }

    pub fn outputs(&self) -> usize {
        self.v.nrows()
    }

    pub fn features(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("predict features", self.v.ncols(), w.len())?;
        Ok((0..self.v.nrows())
            .map(|r| (0..w.len()).map(|c| self.v[(r, c)] * w[c]).sum())
            .collect())
    }

    /// Serializes as a versioned CSV: a tag row, a shape row, then `V` row-major.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG},{FORMAT_VERSION}\n{},{}\n",
            self.v.nrows(),
            self.v.ncols()
        );
        for r in 0..self.v.nrows() {
            let row: Vec<String> = (0..self.v.ncols()).map(|c| self.v[(r, c)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let mut next = |what: &str| -> Result<csv::StringRecord> {
            records
                .next()
                .ok_or_else(|| Error::Data(format!("predictor file ends before {what}")))?
                .map_err(Error::from)
        };
        let tag = next("format tag")?;
        if tag.get(0) != Some(FORMAT_TAG) || tag.get(1) != Some(&FORMAT_VERSION.to_string()) {
            return Err(Error::Data(format!(
                "unsupported predictor format {:?}",
                tag.iter().collect::<Vec<_>>()
            )));
        }
        let shape = next("shape row")?;
        let dim = |i: usize| -> Result<usize> {
            shape
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Data("malformed predictor shape row".into()))
        };
        let (m, k) = (dim(0)?, dim(1)?);
        let mut data = Vec::with_capacity(m * k);
        for r in 0..m {
            let row = next("all coefficient rows")?;
            if row.len() != k {
                return Err(Error::Data(format!(
                    "predictor row {r} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for cell in row.iter() {
                data.push(
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("bad coefficient {cell:?}: {e}")))?,
                );
            }
        }
        Self::from_row_slice(m, k, &data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

impl Predict for LinearPredictor {
    fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        LinearPredictor::predict(self, w)
    }
}

/// Training pairs `(w_i, c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub costs: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, costs: Vec<Vec<f64>>) -> Result<Self> {
        check_len("dataset rows", features.len(), costs.len())?;
        if features.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let k = features[0].len();
        let m = costs[0].len();
        for (w, c) in features.iter().zip(&costs) {
            check_len("feature vector", k, w.len())?;
            check_len("cost vector", m, c.len())?;
        }
        Ok(Self { features, costs })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn cost_dim(&self) -> usize {
        self.costs[0].len()
    }

    /// Headed CSV with feature columns `w0..` followed by cost columns `c0..`.
    pub fn to_csv_string(&self) -> String {
        let mut head: Vec<String> = (0..self.feature_dim()).map(|i| format!("w{i}")).collect();
        head.extend((0..self.cost_dim()).map(|j| format!("c{j}")));
        let mut out = head.join(",");
        out.push('\n');
        for (w, c) in self.features.iter().zip(&self.costs) {
            let row: Vec<String> = w.iter().chain(c).map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads the layout of [`Dataset::to_csv_string`]; columns are
    /// classified by the leading `w` or `c` of their header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let mut is_feature = Vec::with_capacity(header.len());
        for h in header.iter() {
            match h.chars().next() {
                Some('w') => is_feature.push(true),
                Some('c') => is_feature.push(false),
                _ => return Err(Error::Data(format!("column {h:?} is neither a w* feature nor a c* cost"))),
            }
        }
        let mut features = Vec::new();
        let mut costs = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let (mut w, mut c) = (Vec::new(), Vec::new());
            for (cell, &feat) in rec.iter().zip(&is_feature) {
                let v: f64 = cell
                    .parse()
                    .map_err(|e| Error::Data(format!("row {}: bad number {cell:?}: {e}", line + 2)))?;
                if feat {
                    w.push(v);
                } else {
                    c.push(v);
                }
            }
            features.push(w);
            costs.push(c);
        }
        Self::new(features, costs)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    /// The first `n` pairs.
    pub fn head(&self, n: usize) -> Self {
        Self {
            features: self.features[..n].to_vec(),
            costs: self.costs[..n].to_vec(),
        }
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            costs: idx.iter().map(|&i| self.costs[i].clone()).collect(),
        }
    }

    fn gram(&self) -> DMatrix<f64> {
        let k = self.feature_dim();
        let mut g = DMatrix::zeros(k, k);
        for w in &self.features {
            for a in 0..k {
                for b in 0..k {
                    g[(a, b)] += w[a] * w[b];
                }
            }
        }
        g
    }
}

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Empirical risk of the returned predictor.
    pub final_objective: f64,
    pub iterations: usize,
    /// Best empirical risk seen up to each iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Initial step size actually used.
    pub step_size: f64,
    /// Per-point gradient contributions dropped at nondifferentiable points.
    pub skipped_gradients: usize,
    /// Whether a ridge term was needed to invert the feature Gram matrix.
    pub ridge_applied: bool,
}

fn empirical_risk_squared(data: &Dataset, v: &LinearPredictor) -> Result<f64> {
    let mut total = 0.0;
    for (w, c) in data.features.iter().zip(&data.costs) {
        let d = v.predict(w)?;
        total += d.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

fn invert_gram(g: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = g.nrows();
    let scale = (g.trace() / k as f64).max(f64::MIN_POSITIVE);
    if let Some(ch) = Cholesky::new(g.clone()) {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        if lo > 0.0 && (hi / lo).powi(2) < 1e12 {
            return (ch.inverse(), false);
        }
    }
    let ridged = g + DMatrix::identity(k, k) * (RIDGE * scale.max(1.0));
    let inv = Cholesky::new(ridged.clone())
        .map(|c| c.inverse())
        .unwrap_or_else(|| ridged.pseudo_inverse(0.0).expect("ridged Gram matrix"));
    (inv, true)
}

/// Ordinary least squares via the normal equations.
///
/// A small ridge is added when the Gram matrix is singular or badly
/// conditioned, and flagged in the report.
pub fn fit_least_squares(data: &Dataset) -> Result<(LinearPredictor, TrainReport)> {
    let (m, k) = (data.cost_dim(), data.feature_dim());
    let g = data.gram();
    let mut r = DMatrix::zeros(m, k);
    for (w, c) in data.features.iter().zip(&data.costs) {
        for i in 0..m {
            for j in 0..k {
                r[(i, j)] += c[i] * w[j];
            }
        }
    }
    let (g_inv, ridge_applied) = invert_gram(&g);
    let mut v = &r * &g_inv;
    // one step of iterative refinement on the normal equations
    let resid = &r - &v * &g;
    v += resid * &g_inv;
    let predictor = LinearPredictor::new(v)?;
    let objective = empirical_risk_squared(data, &predictor)?;
    Ok((
        predictor,
        TrainReport {
            final_objective: objective,
            iterations: 1,
            objective_trace: vec![objective],
            converged: true,
            step_size: 0.0,
            skipped_gradients: 0,
            ridge_applied,
        },
    ))
}

/// How the initial step size `α₀` of the `α₀/√t` schedule is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Train every candidate on all but a held-out fraction of the data, keep
    /// the lowest training objective (held-out loss breaks ties), then retrain
    /// on everything.
    Holdout { candidates: Vec<f64>, fraction: f64 },
}

impl StepRule {
    /// Ten log-spaced candidates from `1e-3` to `1e2` with a 10% holdout.
    pub fn default_grid() -> Self {
        let candidates = (0..10).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 9.0)).collect();
        StepRule::Holdout {
            candidates,
            fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub step: StepRule,
    /// Seed for the holdout split.
    pub seed: u64,
    /// Scale steps by the inverse feature Gram matrix.
    pub precondition: bool,
    /// Stop once the preconditioned gradient norm falls below this.
    pub gradient_tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            step: StepRule::default_grid(),
            seed: 0,
            precondition: true,
            gradient_tolerance: 1e-12,
        }
    }
}

struct Evaluation {
    objective: f64,
    gradient: DMatrix<f64>,
    skipped: usize,
}

fn evaluate(
    data: &Dataset,
    anchors: &[Option<Anchor>],
    loss: &dyn LossFn,
    v: &LinearPredictor,
) -> Result<Evaluation> {
    let (m, k) = (v.outputs(), v.features());
    let mut objective = 0.0;
    let mut gradient = DMatrix::zeros(m, k);
    let mut skipped = 0;
    for ((w, c), a) in data.features.iter().zip(&data.costs).zip(anchors) {
        let d = v.predict(w)?;
        let e = loss.eval_anchored(&d, c, a.as_ref())?;
        objective += e.value;
        match e.subgrad {
            Some(g) => {
                for i in 0..m {
                    if g[i] != 0.0 {
                        for j in 0..k {
                            gradient[(i, j)] += g[i] * w[j];
                        }
                    }
                }
            }
            None => skipped += 1,
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        objective: objective / n,
        gradient: gradient / n,
        skipped,
    })
}

fn anchors_for(data: &Dataset, loss: &dyn LossFn) -> Result<Vec<Option<Anchor>>> {
    data.costs.iter().map(|c| loss.anchor(c)).collect()
}

fn descend(
    data: &Dataset,
    anchors: &[Option<Anchor>],
    loss: &dyn LossFn,
    alpha0: f64,
    opts: &TrainOptions,
) -> Result<(LinearPredictor, TrainReport)> {
    let (m, k) = (data.cost_dim(), data.feature_dim());
    let (precond, ridge_applied) = if opts.precondition {
        let (inv, ridge) = invert_gram(&(data.gram() / data.len() as f64));
        (inv, ridge)
    } else {
        (DMatrix::identity(k, k), false)
    };

    let mut v = LinearPredictor::zeros(m, k);
    let mut best = (f64::INFINITY, v.clone());
    let mut trace = Vec::with_capacity(opts.steps + 1);
    let mut skipped = 0;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.steps + 1 {
        let eval = evaluate(data, anchors, loss, &v)?;
        iterations = t;
        skipped += eval.skipped;
        if !eval.objective.is_finite() || eval.objective > DIVERGENCE_LIMIT {
            return Err(Error::Divergence(Box::new(TrainReport {
                final_objective: best.0,
                iterations,
                objective_trace: trace,
                converged: false,
                step_size: alpha0,
                skipped_gradients: skipped,
                ridge_applied,
            })));
        }
        if eval.objective < best.0 {
            best = (eval.objective, v.clone());
        }
        trace.push(best.0);
        if t > opts.steps {
            break;
        }
        let direction = &eval.gradient * &precond;
        if direction.norm() <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        let step = alpha0 / (t as f64).sqrt();
        v = LinearPredictor {
            v: &v.v - direction * step,
        };
    }

    Ok((
        best.1,
        TrainReport {
            final_objective: best.0,
            iterations,
            objective_trace: trace,
            converged,
            step_size: alpha0,
            skipped_gradients: skipped,
            ridge_applied,
        },
    ))
}

fn mean_loss(data: &Dataset, loss: &dyn LossFn, v: &LinearPredictor) -> Result<f64> {
    let mut total = 0.0;
    for (w, c) in data.features.iter().zip(&data.costs) {
        total += loss.value(&v.predict(w)?, c)?;
    }
    Ok(total / data.len() as f64)
}

/// Subgradient descent on the empirical risk `(1/n) Σ ℓ(Vw_i, c_i)` with
/// steps `α₀/√t`, returning the best iterate.
pub fn fit_erm_first_order(
    data: &Dataset,
    loss: &dyn LossFn,
    opts: &TrainOptions,
) -> Result<(LinearPredictor, TrainReport)> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("training needs at least one step".into()));
    }
    let alpha0 = match &opts.step {
        StepRule::Fixed(a) => {
            if !(*a > 0.0) {
                return Err(Error::InvalidParameter(format!("step size must be positive, got {a}")));
            }
            *a
        }
        StepRule::Holdout {
            candidates,
            fraction,
        } => select_step(data, loss, opts, candidates, *fraction)?,
    };
    let anchors = anchors_for(data, loss)?;
    descend(data, &anchors, loss, alpha0, opts)
}

fn select_step(
    data: &Dataset,
    loss: &dyn LossFn,
    opts: &TrainOptions,
    candidates: &[f64],
    fraction: f64,
) -> Result<f64> {
    if candidates.is_empty() || candidates.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("step candidates must be positive".into()));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("holdout fraction {fraction} not in [0,1)")));
    }
    let n = data.len();
    let held = (fraction * n as f64).ceil() as usize;
    let (train, valid) = if held == 0 || held >= n {
        (data.clone(), data.clone())
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(opts.seed));
        let (v_idx, t_idx) = idx.split_at(held);
        let mut t_idx = t_idx.to_vec();
        let mut v_idx = v_idx.to_vec();
        t_idx.sort_unstable();
        v_idx.sort_unstable();
        (data.subset(&t_idx), data.subset(&v_idx))
    };
    let anchors = anchors_for(&train, loss)?;
    // (held-out loss, training objective)
    let scores: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|&a| match descend(&train, &anchors, loss, a, opts) {
            Ok((v, report)) => (
                mean_loss(&valid, loss, &v).unwrap_or(f64::INFINITY),
                report.final_objective,
            ),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        let b = &scores[best];
        let tie = (s.1 - b.1).abs() <= 1e-9 * b.1.abs().max(1e-12);
        if (s.1 < b.1 && !tie) || (tie && s.0 < b.0) {
            best = i;
        }
    }
    if !scores[best].1.is_finite() {
        return Err(Error::NonConvergence(
            "every step-size candidate diverged".into(),
        ));
    }
    Ok(candidates[best])
}
