//! Synthetic generators and CSV ingestion for the three studies.
//!
//! Every generator is a pure function of its parameters and seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::oracle::KnapsackDomain;
use crate::predictor::Dataset;
use crate::rng::{rng_from_seed, Rng};

/// Draws a knapsack instance: integer weights in `[1, 1000]` and an integer
/// capacity between the heaviest weight and a random fraction of the total.
pub fn gen_knapsack_instance(m: usize, seed: u64) -> Result<KnapsackDomain> {
    if m == 0 {
        return Err(Error::InvalidParameter("knapsack needs at least one item".into()));
    }
    let mut rng = rng_from_seed(seed);
    let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(1..=1000u32) as f64).collect();
    let capacity = draw_capacity(&weights, &mut rng);
    KnapsackDomain::new(weights, capacity)
}

/// Upper end of the capacity range for a given `r ∈ [0, 1]`.
pub fn capacity_upper(weights: &[f64], r: f64) -> f64 {
    let l = weights.iter().copied().fold(0.0, f64::max);
    let total: f64 = weights.iter().sum();
    r * l + total - l
}

/// Integer capacity uniform on `[l, ⌊u⌋]`; collapses to `l` when `u < l`.
pub(crate) fn draw_capacity(weights: &[f64], rng: &mut Rng) -> f64 {
    let l = weights.iter().copied().fold(0.0, f64::max);
    let r: f64 = rng.gen();
    let u = capacity_upper(weights, r).floor().max(l);
    rng.gen_range(l as u64..=u as u64) as f64
}

/// Parameters of the polynomial knapsack value model.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackGenParams {
    pub m: usize,
    /// Feature dimension including the trailing constant.
    pub k: usize,
    /// Odd polynomial degree.
    pub degree: u32,
    /// Half-width of the multiplicative noise, in `[0, 1)`.
    pub noise_halfwidth: f64,
    /// Add the centered exponential noise.
    pub additive_noise: bool,
    pub seed: u64,
}

impl KnapsackGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        if self.degree == 0 || self.degree % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "degree must be an odd positive integer, got {}",
                self.degree
            )));
        }
        if !(0.0..1.0).contains(&self.noise_halfwidth) {
            return Err(Error::InvalidParameter(format!(
                "noise half-width must lie in [0, 1), got {}",
                self.noise_halfwidth
            )));
        }
        Ok(())
    }
}

/// Ground-truth coefficients with independent standard normal entries.
pub fn gen_truth_matrix(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let mut v = DMatrix::zeros(m, k);
    for r in 0..m {
        for c in 0..k {
            v[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    v
}

/// `c_ij = ε̃_ij (v_jᵀw_i)^δ + η_ij` with `w_i` uniform on `[-1, 1]^{k-1} × {1}`.
pub fn gen_knapsack_data(params: &KnapsackGenParams, v0: &DMatrix<f64>, n: usize) -> Result<Dataset> {
    params.validate()?;
    if v0.nrows() != params.m || v0.ncols() != params.k {
        return Err(Error::Dimension {
            context: "knapsack truth matrix",
            expected: params.m * params.k,
            got: v0.nrows() * v0.ncols(),
        });
    }
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("truth matrix has non-finite entries".into()));
    }
    let mut rng = rng_from_seed(params.seed);
    let (m, k) = (params.m, params.k);
    let mut features = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut w: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        w.push(1.0);
        let mut c = Vec::with_capacity(m);
        for j in 0..m {
            let signal: f64 = (0..k).map(|i| v0[(j, i)] * w[i]).sum();
            let mult = if params.noise_halfwidth > 0.0 {
                rng.gen_range(1.0 - params.noise_halfwidth..=1.0 + params.noise_halfwidth)
            } else {
                1.0
            };
            let eta = if params.additive_noise {
                let e: f64 = Exp1.sample(&mut rng);
                (e - 1.0) / 2.0
            } else {
                0.0
            };
            c.push(mult * signal.powi(params.degree as i32) + eta);
        }
        features.push(w);
        costs.push(c);
    }
    Dataset::new(features, costs)
}

/// Multinomial logit model `P[class j | w] ∝ exp(-v_jᵀw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGenParams {
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub v_true: DMatrix<f64>,
}

impl LogitGenParams {
    /// Standard normal true coefficients drawn from `truth_seed`.
    pub fn random(m: usize, k: usize, truth_seed: u64, seed: u64) -> Self {
        Self {
            m,
            k,
            seed,
            v_true: gen_truth_matrix(m, k, truth_seed),
        }
    }

    pub fn probabilities(&self, w: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = (0..self.m)
            .map(|j| -(0..self.k).map(|i| self.v_true[(j, i)] * w[i]).sum::<f64>())
            .collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }
}

/// Labeled multiclass sample with the exact class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassData {
    /// Costs are `1 - e_j` for the drawn class `j`.
    pub data: Dataset,
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

pub fn gen_multiclass_data(params: &LogitGenParams, n: usize) -> Result<MulticlassData> {
    if params.m < 2 || params.k == 0 {
        return Err(Error::InvalidParameter("need m ≥ 2 classes and k ≥ 1 features".into()));
    }
    if params.v_true.nrows() != params.m || params.v_true.ncols() != params.k {
        return Err(Error::Dimension {
            context: "logit coefficients",
            expected: params.m * params.k,
            got: params.v_true.len(),
        });
    }
    let mut rng = rng_from_seed(params.seed);
    let mut features = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    for _ in 0..n {
        let w: Vec<f64> = (0..params.k).map(|_| rng.gen::<f64>()).collect();
        let p = params.probabilities(&w);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut label = params.m - 1;
        for (j, pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                label = j;
                break;
            }
        }
        let mut c = vec![1.0; params.m];
        c[label] = 0.0;
        features.push(w);
        costs.push(c);
        labels.push(label);
        probabilities.push(p);
    }
    Ok(MulticlassData {
        data: Dataset::new(features, costs)?,
        labels,
        probabilities,
    })
}

/// Locations of the portfolio CSV inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioCsvSchema {
    /// Long format: `date,ticker,return`.
    pub returns: PathBuf,
    /// Wide format: `date,f1,…,f{k-1}`.
    pub factors: PathBuf,
}

/// Aligned daily returns and factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    /// `returns[t][a]` is the return of ticker `a` on date `t`, if present.
    pub returns: Vec<Vec<Option<f64>>>,
    /// Raw factor values per date, without the constant.
    pub factors: Vec<Vec<f64>>,
}

/// Training window, its risk matrix and the following test days.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWindow {
    pub tickers: Vec<String>,
    /// Factors with a trailing 1 and the realized returns.
    pub train: Dataset,
    pub test: Dataset,
    /// Sample covariance of the training returns.
    pub q: DMatrix<f64>,
    /// Whether `1e-8·I` was added to make `q` positive definite.
    pub jittered: bool,
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

fn parse_num(cell: &str, what: &str, line: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("{what}: bad number {cell:?} on line {line}")))
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

impl PortfolioSeries {
    /// Reads both files and aligns them by date. Any date present in one
    /// file but not the other is an error.
    pub fn load(schema: &PortfolioCsvSchema) -> Result<Self> {
        let mut per_date: BTreeMap<String, HashMap<String, f64>> = BTreeMap::new();
        let mut tickers = BTreeSet::new();
        let mut rd = open(&schema.returns)?;
        let header = rd.headers()?.clone();
        if header.len() < 3 || &header[0] != "date" || &header[1] != "ticker" || &header[2] != "return" {
            return Err(Error::Data(format!(
                "{}: expected header date,ticker,return",
                schema.returns.display()
            )));
        }
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let date = rec.get(0).unwrap_or("").to_string();
            if !is_iso_date(&date) {
                return Err(Error::Data(format!("returns: bad date {date:?} on line {line}")));
            }
            let ticker = rec.get(1).unwrap_or("").to_string();
            let value = parse_num(rec.get(2).unwrap_or(""), "returns", line)?;
            if per_date
                .entry(date.clone())
                .or_default()
                .insert(ticker.clone(), value)
                .is_some()
            {
                return Err(Error::Data(format!("returns: duplicate entry for {ticker} on {date}")));
            }
            tickers.insert(ticker);
        }

        let mut factor_rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut rd = open(&schema.factors)?;
        let width = rd.headers()?.len();
        if width < 2 {
            return Err(Error::Data(format!(
                "{}: expected header date,f1,…",
                schema.factors.display()
            )));
        }
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let date = rec.get(0).unwrap_or("").to_string();
            if !is_iso_date(&date) {
                return Err(Error::Data(format!("factors: bad date {date:?} on line {line}")));
            }
            if rec.len() != width {
                return Err(Error::Data(format!("factors: wrong column count on line {line}")));
            }
            let row = (1..width)
                .map(|c| parse_num(&rec[c], "factors", line))
                .collect::<Result<Vec<f64>>>()?;
            if factor_rows.insert(date.clone(), row).is_some() {
                return Err(Error::Data(format!("factors: duplicate date {date}")));
            }
        }

        if let Some(d) = per_date.keys().find(|d| !factor_rows.contains_key(*d)) {
            return Err(Error::Data(format!("date {d} has returns but no factors")));
        }
        if let Some(d) = factor_rows.keys().find(|d| !per_date.contains_key(*d)) {
            return Err(Error::Data(format!("date {d} has factors but no returns")));
        }

        let tickers: Vec<String> = tickers.into_iter().collect();
        let dates: Vec<String> = per_date.keys().cloned().collect();
        let returns = dates
            .iter()
            .map(|d| tickers.iter().map(|t| per_date[d].get(t).copied()).collect())
            .collect();
        let factors = dates.iter().map(|d| factor_rows[d].clone()).collect();
        Ok(Self {
            dates,
            tickers,
            returns,
            factors,
        })
    }

    /// Training window of `n` dates starting at `start`, followed by
    /// `horizon` test dates, for the named tickers in the given order.
    pub fn window(
        &self,
        tickers: &[String],
        start: usize,
        n: usize,
        horizon: usize,
    ) -> Result<PortfolioWindow> {
        if n < 2 {
            return Err(Error::InvalidParameter("training window needs at least 2 dates".into()));
        }
        if start + n + horizon > self.dates.len() {
            return Err(Error::Data(format!(
                "window of {} dates from index {start} exceeds the {} available",
                n + horizon,
                self.dates.len()
            )));
        }
        let cols = tickers
            .iter()
            .map(|t| {
                self.tickers
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| Error::Data(format!("unknown ticker {t}")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut rows = Vec::with_capacity(n + horizon);
        for t in start..start + n + horizon {
            let r = cols
                .iter()
                .zip(tickers)
                .map(|(&a, name)| {
                    self.returns[t][a].ok_or_else(|| {
                        Error::Data(format!("missing return for {name} on {}", self.dates[t]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut w = self.factors[t].clone();
            w.push(1.0);
            rows.push((w, r));
        }
        let (train_rows, test_rows) = rows.split_at(n);
        let split = |rs: &[(Vec<f64>, Vec<f64>)]| -> Result<Dataset> {
            Dataset::new(
                rs.iter().map(|r| r.0.clone()).collect(),
                rs.iter().map(|r| r.1.clone()).collect(),
            )
        };
        let train = split(train_rows)?;
        let test = if horizon > 0 {
            split(test_rows)?
        } else {
            Dataset {
                features: vec![],
                costs: vec![],
            }
        };
        let (q, jittered) = covariance_with_jitter(&train.costs);
        Ok(PortfolioWindow {
            tickers: tickers.to_vec(),
            train,
            test,
            q,
            jittered,
        })
    }
}

/// Loads the CSV pair and cuts one window.
pub fn load_portfolio_window(
    schema: &PortfolioCsvSchema,
    tickers: &[String],
    start: usize,
    n: usize,
    horizon: usize,
) -> Result<PortfolioWindow> {
    PortfolioSeries::load(schema)?.window(tickers, start, n, horizon)
}

/// Sample covariance with denominator `n - 1`.
pub fn sample_covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows[0].len();
    let mut mean = vec![0.0; m];
    for r in rows {
        for j in 0..m {
            mean[j] += r[j] / n as f64;
        }
    }
    let mut q = DMatrix::zeros(m, m);
    for r in rows {
        for a in 0..m {
            for b in 0..m {
                q[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    q / (n as f64 - 1.0)
}

fn covariance_with_jitter(rows: &[Vec<f64>]) -> (DMatrix<f64>, bool) {
    let q = sample_covariance(rows);
    let m = q.nrows();
    let healthy = nalgebra::Cholesky::new(q.clone()).is_some_and(|c| {
        let d = c.l_dirty().diagonal();
        d.min() > 0.0 && (d.max() / d.min()).powi(2) < 1e12
    });
    if healthy {
        (q, false)
    } else {
        (q + DMatrix::identity(m, m) * 1e-8, true)
    }
}

/// Synthetic factor-model returns: i.i.d. standard normal factors,
/// `c = V₀w + noise` with per-asset noise scales in `[0.5, 1]`.
pub fn gen_portfolio_series(m: usize, k: usize, len: usize, seed: u64) -> Result<PortfolioSeries> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let v0 = gen_truth_matrix(m, k, rng.gen());
    let scales: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..=1.0)).collect();
    let mut returns = Vec::with_capacity(len);
    let mut factors = Vec::with_capacity(len);
    for _ in 0..len {
        let f: Vec<f64> = (0..k - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r: Vec<Option<f64>> = (0..m)
            .map(|j| {
                let mean: f64 =
                    (0..k - 1).map(|i| v0[(j, i)] * f[i]).sum::<f64>() + v0[(j, k - 1)];
                let z: f64 = StandardNormal.sample(&mut rng);
                Some(mean + scales[j] * z)
            })
            .collect();
        returns.push(r);
        factors.push(f);
    }
    Ok(PortfolioSeries {
        dates: (0..len).map(|t| format!("day{t:06}")).collect(),
        tickers: (0..m).map(|j| format!("A{j:03}")).collect(),
        returns,
        factors,
    })
}

/// The coefficient matrix used by [`gen_portfolio_series`] for a seed.
pub fn portfolio_truth(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    gen_truth_matrix(m, k, rng.gen())
}

/// Synthetic stand-in for [`load_portfolio_window`]: `n` training days and
/// `horizon` test days of a factor model with `k - 1` factors.
pub fn gen_portfolio_synthetic(
    m: usize,
    k: usize,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<PortfolioWindow> {
    let series = gen_portfolio_series(m, k, n + horizon, seed)?;
    let tickers = series.tickers.clone();
    series.window(&tickers, 0, n, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::fit_least_squares;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    #[test]
    fn knapsack_capacity_within_range() {
        for seed in 0..200 {
            let k = gen_knapsack_instance(10, seed).unwrap();
            let l = k.weights().iter().copied().fold(0.0, f64::max);
            let total: f64 = k.weights().iter().sum();
            assert!(k.capacity() >= l && k.capacity() <= total);
            assert_eq!(k.capacity().fract(), 0.0);
            assert!(k.weights().iter().all(|w| w.fract() == 0.0 && *w >= 1.0 && *w <= 1000.0));
        }
    }

    #[test]
    fn full_fraction_reaches_total_weight() {
        let w = [3.0, 7.0, 5.0];
        assert_eq!(capacity_upper(&w, 1.0), 15.0);
        assert_eq!(capacity_upper(&w, 0.0), 8.0);
    }

    #[test]
    fn capacity_mean_matches_quadrature() {
        let w = [300.0, 120.0, 450.0, 80.0, 610.0];
        let l = 610.0;
        // E[B] = ∫ (l + max(l, ⌊u(r)⌋)) / 2 dr by the midpoint rule
        let grid = 200_000;
        let exact: f64 = (0..grid)
            .map(|i| {
                let r = (i as f64 + 0.5) / grid as f64;
                0.5 * (l + capacity_upper(&w, r).floor().max(l))
            })
            .sum::<f64>()
            / grid as f64;
        let mut rng = rng_from_seed(99);
        let draws: Vec<f64> = (0..10_000).map(|_| draw_capacity(&w, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} vs {exact} (se {se})");
    }

    fn knap_params(degree: u32, halfwidth: f64, noise: bool) -> KnapsackGenParams {
        KnapsackGenParams {
            m: 4,
            k: 3,
            degree,
            noise_halfwidth: halfwidth,
            additive_noise: noise,
            seed: 5,
        }
    }

    #[test]
    fn noiseless_linear_model_is_exact() {
        let v0 = gen_truth_matrix(4, 3, 1);
        let data = gen_knapsack_data(&knap_params(1, 0.0, false), &v0, 50).unwrap();
        for (w, c) in data.features.iter().zip(&data.costs) {
            assert_eq!(w[2], 1.0);
            assert!(w[..2].iter().all(|x| (-1.0..=1.0).contains(x)));
            for j in 0..4 {
                let expect: f64 = (0..3).map(|i| v0[(j, i)] * w[i]).sum();
                assert_abs_diff_eq!(c[j], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conditional_mean_is_polynomial_signal() {
        // one fixed feature vector, repeated draws of the noise
        let v0 = DMatrix::from_row_slice(1, 1, &[0.8]);
        let params = KnapsackGenParams {
            m: 1,
            k: 1,
            degree: 3,
            noise_halfwidth: 0.3,
            additive_noise: true,
            seed: 17,
        };
        let data = gen_knapsack_data(&params, &v0, 100_000).unwrap();
        let xs: Vec<f64> = data.costs.iter().map(|c| c[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 0.8f64.powi(3)).abs() <= 3.0 * sd / n.sqrt());
    }

    #[test]
    fn exponential_noise_is_centered() {
        let v0 = DMatrix::zeros(1, 1);
        let params = KnapsackGenParams {
            m: 1,
            k: 1,
            degree: 1,
            noise_halfwidth: 0.0,
            additive_noise: true,
            seed: 23,
        };
        let data = gen_knapsack_data(&params, &v0, 100_000).unwrap();
        let n = data.len() as f64;
        let mean = data.costs.iter().map(|c| c[0]).sum::<f64>() / n;
        // η = (E - 1)/2 has standard deviation 1/2
        assert!(mean.abs() <= 3.0 * 0.5 / n.sqrt());
    }

    #[test]
    fn knapsack_params_validated() {
        assert!(knap_params(2, 0.1, true).validate().is_err());
        assert!(knap_params(3, 1.0, true).validate().is_err());
        assert!(knap_params(5, 0.2, true).validate().is_ok());
    }

    #[test]
    fn identical_logit_rows_give_uniform_classes() {
        let params = LogitGenParams {
            m: 3,
            k: 2,
            seed: 1,
            v_true: DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]),
        };
        for p in params.probabilities(&[0.3, 0.9]) {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn multiclass_probabilities_and_labels() {
        let params = LogitGenParams::random(4, 4, 3, 4);
        let out = gen_multiclass_data(&params, 500).unwrap();
        for ((p, c), &label) in out.probabilities.iter().zip(&out.data.costs).zip(&out.labels) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert_eq!(c[label], 0.0);
            assert_eq!(c.iter().sum::<f64>(), 3.0);
        }
        assert!(out.data.features.iter().flatten().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn label_frequencies_match_probabilities() {
        // k = 1 with a zero coefficient column fixes the class probabilities
        let params = LogitGenParams {
            m: 3,
            k: 1,
            seed: 8,
            v_true: DMatrix::from_row_slice(3, 1, &[0.0, 0.7, -0.4]),
        };
        let n = 100_000;
        let out = gen_multiclass_data(&params, n).unwrap();
        let mut counts = [0usize; 3];
        for &l in &out.labels {
            counts[l] += 1;
        }
        // probabilities depend on w here, so compare with their average
        for j in 0..3 {
            let expect = out.probabilities.iter().map(|p| p[j]).sum::<f64>() / n as f64;
            let freq = counts[j] as f64 / n as f64;
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!((freq - expect).abs() <= 3.0 * se, "class {j}: {freq} vs {expect}");
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn two_asset_schema(dir: &Path) -> PortfolioCsvSchema {
        let returns = write(
            dir,
            "returns.csv",
            "date,ticker,return\n\
             2004-01-02,AAA,1.0\n2004-01-02,BBB,2.0\n\
             2004-01-05,AAA,2.0\n2004-01-05,BBB,0.0\n\
             2004-01-06,AAA,3.0\n2004-01-06,BBB,1.0\n\
             2004-01-07,AAA,0.5\n2004-01-07,BBB,0.5\n",
        );
        let factors = write(
            dir,
            "factors.csv",
            "date,f1,f2\n2004-01-02,0.1,0.2\n2004-01-05,0.3,-0.1\n2004-01-06,0.0,0.0\n2004-01-07,1.0,1.0\n",
        );
        PortfolioCsvSchema { returns, factors }
    }

    #[test]
    fn hand_covariance_of_three_days() {
        let dir = tempfile::tempdir().unwrap();
        let schema = two_asset_schema(dir.path());
        let names = vec!["AAA".to_string(), "BBB".to_string()];
        let win = load_portfolio_window(&schema, &names, 0, 3, 1).unwrap();
        // AAA: 1,2,3 (mean 2); BBB: 2,0,1 (mean 1)
        assert_abs_diff_eq!(win.q[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(win.q[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(win.q[(0, 1)], -0.5, epsilon = 1e-15);
        assert!(!win.jittered);
        assert_eq!(win.train.features[0], vec![0.1, 0.2, 1.0]);
        assert_eq!(win.test.costs[0], vec![0.5, 0.5]);
    }

    #[test]
    fn ticker_order_permutes_covariance() {
        let dir = tempfile::tempdir().unwrap();
        let schema = two_asset_schema(dir.path());
        let a = load_portfolio_window(&schema, &["AAA".into(), "BBB".into()], 0, 3, 0).unwrap();
        let b = load_portfolio_window(&schema, &["BBB".into(), "AAA".into()], 0, 3, 0).unwrap();
        assert_eq!(a.q[(0, 0)], b.q[(1, 1)]);
        assert_eq!(a.q[(0, 1)], b.q[(1, 0)]);
        assert_eq!(a.train.costs[1][0], b.train.costs[1][1]);
    }

    #[test]
    fn constant_returns_get_jitter() {
        let dir = tempfile::tempdir().unwrap();
        let returns = write(
            dir.path(),
            "r.csv",
            "date,ticker,return\n2004-01-02,X,1\n2004-01-05,X,1\n2004-01-06,X,1\n",
        );
        let factors = write(dir.path(), "f.csv", "date,f1\n2004-01-02,0\n2004-01-05,1\n2004-01-06,2\n");
        let win = load_portfolio_window(&PortfolioCsvSchema { returns, factors }, &["X".into()], 0, 3, 0)
            .unwrap();
        assert!(win.jittered);
        assert_abs_diff_eq!(win.q[(0, 0)], 1e-8);
    }

    #[test]
    fn missing_cells_and_dates_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let returns = write(
            dir.path(),
            "r.csv",
            "date,ticker,return\n2004-01-02,X,1\n2004-01-02,Y,1\n2004-01-05,X,2\n2004-01-06,X,1\n2004-01-06,Y,3\n",
        );
        let factors = write(dir.path(), "f.csv", "date,f1\n2004-01-02,0\n2004-01-05,1\n2004-01-06,2\n");
        let schema = PortfolioCsvSchema { returns, factors };
        let err = load_portfolio_window(&schema, &["X".into(), "Y".into()], 0, 3, 0).unwrap_err();
        assert!(err.to_string().contains("Y on 2004-01-05"), "{err}");

        let factors = write(dir.path(), "g.csv", "date,f1\n2004-01-02,0\n2004-01-06,2\n");
        let err = PortfolioSeries::load(&PortfolioCsvSchema {
            returns: schema.returns.clone(),
            factors,
        })
        .unwrap_err();
        assert!(err.to_string().contains("2004-01-05"), "{err}");
    }

    #[test]
    fn synthetic_portfolio_is_reproducible_and_psd() {
        let a = gen_portfolio_synthetic(5, 4, 60, 10, 3).unwrap();
        let b = gen_portfolio_synthetic(5, 4, 60, 10, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.q, a.q.transpose());
        assert!(a.q.clone().symmetric_eigenvalues().min() >= 0.0);
        assert_eq!(a.test.len(), 10);
        assert!(a.train.features.iter().all(|w| w.len() == 4 && w[3] == 1.0));
    }

    #[test]
    fn least_squares_recovers_factor_model() {
        let (m, k, seed) = (5, 4, 11);
        let win = gen_portfolio_synthetic(m, k, 10_000, 0, seed).unwrap();
        let (v, _) = fit_least_squares(&win.train).unwrap();
        let err = (v.matrix() - portfolio_truth(m, k, seed)).norm();
        assert!(err <= 0.1, "Frobenius error {err}");
    }
}
