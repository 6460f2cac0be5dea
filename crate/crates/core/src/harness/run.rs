use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::config::{ExperimentConfig, LossName, Study};
use super::eval::{eval_multiclass, eval_optimality_gap, GapMode};
use super::suites::{run_suite, SuiteParams};
use crate::datagen::{
    gen_knapsack_data, gen_knapsack_instance, gen_multiclass_data, gen_portfolio_series,
    gen_truth_matrix, KnapsackGenParams, LogitGenParams, PortfolioCsvSchema, PortfolioSeries,
};
use crate::error::{Error, Result};
use crate::loss::{AbsDevLoss, LossFn, RegGapLoss, RegGapParams, SpoPlusLoss};
use crate::oracle::{KnapsackDomain, OptDomain, PortfolioDomain, SimplexDomain};
use crate::predictor::{
    fit_erm_first_order, fit_least_squares, Dataset, LinearPredictor, StepRule, TrainOptions,
};
use crate::rng::{derive_seed, rng_from_seed};

/// Sub-stream indices of a repetition seed.
const STREAM_INSTANCE: u64 = 0;
const STREAM_TRUTH: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_FIT: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub study: Study,
    pub loss: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub rep: usize,
    pub metric: String,
    pub value: f64,
    /// Seconds spent training and evaluating this row.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn sorted(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(|a, b| {
            (a.study.as_str(), a.loss.as_str(), a.n, a.rep, a.metric.as_str())
                .cmp(&(b.study.as_str(), b.loss.as_str(), b.n, b.rep, b.metric.as_str()))
        });
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Results CSV without timings, so reruns are byte-identical.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("study,loss,m,k,n,rep,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.study.as_str(),
                r.loss,
                r.m,
                r.k,
                r.n,
                r.rep,
                r.metric,
                r.value
            );
        }
        s
    }

    pub fn timing_csv_string(&self) -> String {
        let mut s = String::from("study,loss,n,rep,wall_time\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{:.6}", r.study.as_str(), r.loss, r.n, r.rep, r.wall_time);
        }
        s
    }

    /// Values of one loss at one sample size, in repetition order.
    pub fn values(&self, loss: &str, n: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.loss == loss && r.n == n)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, loss: &str, n: usize) -> Option<f64> {
        let v = self.values(loss, n);
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    pub fn summary_string(&self) -> String {
        let mut keys: Vec<(String, usize, String)> = self
            .rows
            .iter()
            .map(|r| (r.loss.clone(), r.n, r.metric.clone()))
            .collect();
        keys.dedup();
        keys.sort();
        keys.dedup();
        let mut s = String::from("loss,n,metric,reps,mean,median,min,max\n");
        for (loss, n, metric) in keys {
            let v: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.loss == loss && r.n == n && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let med = crate::numeric::median(&v).unwrap_or(f64::NAN);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(s, "{loss},{n},{metric},{},{mean:.6},{med:.6},{lo:.6},{hi:.6}", v.len());
        }
        s
    }

    /// Writes the results CSV plus `<stem>.timing.csv` and `<stem>.summary.txt`.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))?;
        let timing = sidecar(path, "timing.csv");
        std::fs::write(&timing, self.timing_csv_string()).map_err(|e| Error::io(&timing, e))?;
        let summary = sidecar(path, "summary.txt");
        std::fs::write(&summary, self.summary_string()).map_err(|e| Error::io(&summary, e))
    }
}

pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn train_options(cfg: &ExperimentConfig, seed: u64) -> TrainOptions {
    TrainOptions {
        steps: cfg.training.steps,
        step: match cfg.training.step_size {
            Some(a) => StepRule::Fixed(a),
            None => StepRule::default_grid(),
        },
        seed,
        ..TrainOptions::default()
    }
}

fn train(
    cfg: &ExperimentConfig,
    name: LossName,
    data: &Dataset,
    dom: &Arc<dyn OptDomain>,
    knapsack: Option<&Arc<KnapsackDomain>>,
    seed: u64,
) -> Result<LinearPredictor> {
    let opts = train_options(cfg, seed);
    let fitted = match name {
        LossName::Ls => fit_least_squares(data)?,
        LossName::SpoPlus => fit_erm_first_order(data, &SpoPlusLoss::new(dom.clone()), &opts)?,
        LossName::AbsDev => fit_erm_first_order(data, &AbsDevLoss, &opts)?,
        LossName::RegGap => {
            let kd = knapsack.ok_or_else(|| Error::Config("reg_gap needs a knapsack study".into()))?;
            let loss = RegGapLoss::new(kd.clone(), RegGapParams::new(cfg.knapsack.lambda)?)?;
            fit_erm_first_order(data, &loss as &dyn LossFn, &opts)?
        }
    };
    Ok(fitted.0)
}

fn finite(row: ResultRow) -> Result<ResultRow> {
    if row.value.is_finite() {
        Ok(row)
    } else {
        Err(Error::Data(format!(
            "{} produced a non-finite {} at n = {}, rep = {}",
            row.loss, row.metric, row.n, row.rep
        )))
    }
}

fn n_max(cfg: &ExperimentConfig) -> usize {
    cfg.n_list.iter().copied().max().unwrap_or(0)
}

fn knapsack_rep(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<ResultRow>> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let kd = Arc::new(gen_knapsack_instance(cfg.m, derive_seed(seed, STREAM_INSTANCE))?);
    let dom: Arc<dyn OptDomain> = kd.clone();
    let truth = gen_truth_matrix(cfg.m, cfg.k, derive_seed(seed, STREAM_TRUTH));
    let params = |s: u64| KnapsackGenParams {
        m: cfg.m,
        k: cfg.k,
        degree: cfg.knapsack.degree,
        noise_halfwidth: cfg.knapsack.noise_halfwidth,
        additive_noise: cfg.knapsack.additive_noise,
        seed: s,
    };
    let test = gen_knapsack_data(&params(derive_seed(seed, STREAM_TEST)), &truth, cfg.knapsack.test_size)?;
    let train_all = gen_knapsack_data(&params(derive_seed(seed, STREAM_TRAIN)), &truth, n_max(cfg))?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let data = train_all.head(n);
        for &loss in &cfg.losses {
            let start = Instant::now();
            let v = train(cfg, loss, &data, &dom, Some(&kd), derive_seed(seed, STREAM_FIT))?;
            let gap = eval_optimality_gap(kd.as_ref(), &v, &test, GapMode::MeanRelative)?;
            rows.push(finite(ResultRow {
                study: Study::Knapsack,
                loss: loss.as_str().into(),
                m: cfg.m,
                k: cfg.k,
                n,
                rep,
                metric: "mean_relative_gap".into(),
                value: gap.value,
                wall_time: start.elapsed().as_secs_f64(),
            })?);
        }
    }
    Ok(rows)
}

fn multiclass_rep(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<ResultRow>> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let truth_seed = derive_seed(seed, STREAM_TRUTH);
    let train_params = LogitGenParams::random(cfg.m, cfg.k, truth_seed, derive_seed(seed, STREAM_TRAIN));
    let test_params = LogitGenParams {
        seed: derive_seed(seed, STREAM_TEST),
        ..train_params.clone()
    };
    let train_all = gen_multiclass_data(&train_params, n_max(cfg))?;
    let test = gen_multiclass_data(&test_params, cfg.multiclass.test_size)?;
    let dom: Arc<dyn OptDomain> = Arc::new(SimplexDomain::new(cfg.m)?);
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let data = train_all.data.head(n);
        for &loss in &cfg.losses {
            let start = Instant::now();
            let v = train(cfg, loss, &data, &dom, None, derive_seed(seed, STREAM_FIT))?;
            let e = eval_multiclass(&v, &test.data.features, &test.probabilities)?;
            rows.push(finite(ResultRow {
                study: Study::Multiclass,
                loss: loss.as_str().into(),
                m: cfg.m,
                k: cfg.k,
                n,
                rep,
                metric: "relative_bayes_gap".into(),
                value: e.relative_gap,
                wall_time: start.elapsed().as_secs_f64(),
            })?);
        }
    }
    Ok(rows)
}

fn portfolio_rep(cfg: &ExperimentConfig, rep: usize, csv: Option<&PortfolioSeries>) -> Result<Vec<ResultRow>> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let horizon = cfg.portfolio.horizon;
    let longest = n_max(cfg);
    let synthetic;
    let (series, tickers, end) = match csv {
        Some(series) => {
            let mut rng = rng_from_seed(derive_seed(seed, STREAM_INSTANCE));
            let mut pool = series.tickers.clone();
            if pool.len() < cfg.m {
                return Err(Error::Data(format!(
                    "returns file has {} tickers, {} requested",
                    pool.len(),
                    cfg.m
                )));
            }
            pool.shuffle(&mut rng);
            pool.truncate(cfg.m);
            pool.sort();
            let last_start = series.dates.len().checked_sub(longest + horizon).ok_or_else(|| {
                Error::Data(format!(
                    "returns file has {} dates, {} needed",
                    series.dates.len(),
                    longest + horizon
                ))
            })?;
            let start = rng.gen_range(0..=last_start);
            (series, pool, start + longest)
        }
        None => {
            synthetic = gen_portfolio_series(cfg.m, cfg.k, longest + horizon, derive_seed(seed, STREAM_TRAIN))?;
            let tickers = synthetic.tickers.clone();
            (&synthetic, tickers, longest)
        }
    };
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let window = series.window(&tickers, end - n, n, horizon)?;
        if window.train.feature_dim() != cfg.k {
            return Err(Error::Data(format!(
                "factor file gives k = {} features including the constant, config says {}",
                window.train.feature_dim(),
                cfg.k
            )));
        }
        let dom = Arc::new(PortfolioDomain::long_only(window.q.clone())?);
        let dyn_dom: Arc<dyn OptDomain> = dom.clone();
        for &loss in &cfg.losses {
            let start = Instant::now();
            let v = train(cfg, loss, &window.train, &dyn_dom, None, derive_seed(seed, STREAM_FIT))?;
            let gap = eval_optimality_gap(dom.as_ref(), &v, &window.test, GapMode::MedianAbsolute)?;
            rows.push(finite(ResultRow {
                study: Study::Portfolio,
                loss: loss.as_str().into(),
                m: cfg.m,
                k: cfg.k,
                n,
                rep,
                metric: "median_gap".into(),
                value: gap.value,
                wall_time: start.elapsed().as_secs_f64(),
            })?);
        }
    }
    Ok(rows)
}

fn diagnostics_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let d = &cfg.diagnostics;
    let start = Instant::now();
    let records = run_suite(
        d.suite,
        &SuiteParams {
            seed: cfg.seed,
            trials: d.trials,
            predictors: d.predictors,
            eps: d.eps,
        },
    )?;
    let elapsed = start.elapsed().as_secs_f64() / records.len().max(1) as f64;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            finite(ResultRow {
                study: Study::Diagnostics,
                loss: r.suite.into(),
                m: 0,
                k: 0,
                n: 0,
                rep: i,
                metric: format!("slack:{}", r.case),
                value: r.slack,
                wall_time: elapsed,
            })
        })
        .collect()
}

/// Runs every repetition in parallel and returns rows sorted by
/// `(study, loss, n, rep)`. Diagnostics report one row per check with the
/// slack of the checked inequality as its value.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let csv = match (&cfg.portfolio.returns_csv, &cfg.portfolio.factors_csv) {
        (Some(r), Some(f)) if cfg.study == Study::Portfolio => Some(PortfolioSeries::load(&PortfolioCsvSchema {
            returns: r.clone(),
            factors: f.clone(),
        })?),
        _ => None,
    };
    let per_rep = |rep: usize| -> Result<Vec<ResultRow>> {
        match cfg.study {
            Study::Knapsack => knapsack_rep(cfg, rep),
            Study::Multiclass => multiclass_rep(cfg, rep),
            Study::Portfolio => portfolio_rep(cfg, rep, csv.as_ref()),
            Study::Diagnostics => unreachable!(),
        }
    };
    let rows: Vec<ResultRow> = if cfg.study == Study::Diagnostics {
        diagnostics_rows(cfg)?
    } else {
        (0..cfg.reps)
            .into_par_iter()
            .map(per_rep)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    };
    Ok(ResultTable::sorted(rows))
}
