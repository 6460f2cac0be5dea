use crate::error::{check_len, Error, Result};
use crate::loss::true_loss;
use crate::numeric::median;
use crate::oracle::{canonical_cost, OptDomain};
use crate::predictor::{Dataset, Predict};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MulticlassEval {
    pub expected_loss: f64,
    pub bayes_loss: f64,
    /// `(expected − bayes) / bayes`.
    pub relative_gap: f64,
}

/// Expected 0-1 loss of the decision `argmin Vw` under the exact class
/// probabilities, with exact ties resolved uniformly at random.
pub fn eval_multiclass(
    predictor: &dyn Predict,
    features: &[Vec<f64>],
    probabilities: &[Vec<f64>],
) -> Result<MulticlassEval> {
    if features.is_empty() {
        return Err(Error::Data("multiclass test set is empty".into()));
    }
    check_len("multiclass probabilities", features.len(), probabilities.len())?;
    let n = features.len() as f64;
    let mut expected = 0.0;
    let mut bayes = 0.0;
    for (w, p) in features.iter().zip(probabilities) {
        let d = predictor.predict(w)?;
        check_len("multiclass prediction", p.len(), d.len())?;
        let low = d.iter().copied().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..d.len()).filter(|&j| d[j] == low).collect();
        let hit: f64 = ties.iter().map(|&j| p[j]).sum::<f64>() / ties.len() as f64;
        expected += (1.0 - hit) / n;
        bayes += (1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max)) / n;
    }
    let relative_gap = (expected - bayes) / bayes;
    Ok(MulticlassEval {
        expected_loss: expected,
        bayes_loss: bayes,
        relative_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMode {
    /// Median of `L(Vw, c)`.
    MedianAbsolute,
    /// Mean of `L(Vw, c)` divided by the native optimal value.
    MeanRelative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEval {
    pub value: f64,
    pub evaluated: usize,
    /// Points dropped in relative mode for a nonpositive optimum.
    pub excluded: usize,
}

pub fn eval_optimality_gap(
    dom: &dyn OptDomain,
    predictor: &dyn Predict,
    test: &Dataset,
    mode: GapMode,
) -> Result<GapEval> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let sign = dom.orientation().sign();
    let mut gaps = Vec::with_capacity(test.len());
    let mut excluded = 0;
    for (w, c) in test.features.iter().zip(&test.costs) {
        let d = predictor.predict(w)?;
        let gap = true_loss(dom, &d, c)?;
        match mode {
            GapMode::MedianAbsolute => gaps.push(gap),
            GapMode::MeanRelative => {
                let optimum = sign * dom.argmin(&canonical_cost(dom, c))?.objective;
                if optimum > 0.0 {
                    gaps.push(gap / optimum);
                } else {
                    excluded += 1;
                }
            }
        }
    }
    if gaps.is_empty() {
        return Err(Error::Data(format!(
            "all {excluded} test points have a nonpositive optimal value"
        )));
    }
    let value = match mode {
        GapMode::MedianAbsolute => median(&gaps).expect("nonempty"),
        GapMode::MeanRelative => gaps.iter().sum::<f64>() / gaps.len() as f64,
    };
    Ok(GapEval {
        value,
        evaluated: gaps.len(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{IntervalDomain, KnapsackDomain};
    use crate::predictor::LinearPredictor;
    use approx::assert_abs_diff_eq;

    /// Predicts the first feature coordinates unchanged.
    struct Echo;

    impl Predict for Echo {
        fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
            Ok(w.to_vec())
        }
    }

    #[test]
    fn multiclass_hand_values() {
        let p = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let feats = vec![vec![1.0], vec![1.0]];
        let pick_first = LinearPredictor::from_row_slice(2, 1, &[0.0, 1.0]).unwrap();
        let e = eval_multiclass(&pick_first, &feats, &p).unwrap();
        assert_abs_diff_eq!(e.expected_loss, 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(e.bayes_loss, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(e.relative_gap, 1.2, epsilon = 1e-12);

        let zero = LinearPredictor::zeros(2, 1);
        assert_abs_diff_eq!(eval_multiclass(&zero, &feats, &p).unwrap().expected_loss, 0.5, epsilon = 1e-15);

        let right = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let e = eval_multiclass(&Echo, &right, &p).unwrap();
        assert_abs_diff_eq!(e.relative_gap, 0.0, epsilon = 1e-15);
        assert!(eval_multiclass(&zero, &[], &[]).is_err());
    }

    #[test]
    fn gap_modes() {
        let dom = KnapsackDomain::new(vec![1.0, 1.0], 1.0).unwrap();
        let test = Dataset::new(vec![vec![2.0, 1.5]], vec![vec![2.0, 1.5]]).unwrap();
        for mode in [GapMode::MedianAbsolute, GapMode::MeanRelative] {
            assert_eq!(eval_optimality_gap(&dom, &Echo, &test, mode).unwrap().value, 0.0);
        }
        // picks item 2 (value 1.5) against an optimum of 2
        let wrong = Dataset::new(vec![vec![0.0, 1.0]], vec![vec![2.0, 1.5]]).unwrap();
        let g = eval_optimality_gap(&dom, &Echo, &wrong, GapMode::MeanRelative).unwrap();
        assert_abs_diff_eq!(g.value, 0.25, epsilon = 1e-15);

        let dom = IntervalDomain;
        let t = Dataset::new(
            vec![vec![1.0], vec![-1.0], vec![4.0]],
            vec![vec![1.0], vec![1.0], vec![-4.0]],
        )
        .unwrap();
        let g = eval_optimality_gap(&dom, &Echo, &t, GapMode::MedianAbsolute).unwrap();
        assert_abs_diff_eq!(g.value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nonpositive_optima_are_excluded() {
        let dom = KnapsackDomain::new(vec![1.0, 1.0], 1.0).unwrap();
        let t = Dataset::new(
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![-1.0, -2.0], vec![2.0, 1.0]],
        )
        .unwrap();
        let g = eval_optimality_gap(&dom, &Echo, &t, GapMode::MeanRelative).unwrap();
        assert_eq!((g.evaluated, g.excluded), (1, 1));
        let all_bad = t.head(1);
        assert!(matches!(
            eval_optimality_gap(&dom, &Echo, &all_bad, GapMode::MeanRelative),
            Err(Error::Data(_))
        ));
    }
}
