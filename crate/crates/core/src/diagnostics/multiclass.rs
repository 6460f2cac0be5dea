use crate::error::{Error, Result};
use crate::loss::spo_plus_loss;
use crate::oracle::SimplexDomain;

/// Minimum of the expected multiclass SPO+ loss for label probabilities `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSpoMinimizer {
    pub value: f64,
    /// A minimizing prediction in the loss's own coordinates.
    pub witness: Vec<f64>,
    /// Whether a constant prediction attains the minimum.
    pub is_constant_optimal: bool,
}

fn validate(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter("class probabilities must be positive".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "class probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Expected SPO+ loss `Σ_j p_j ℓ(d, 1 − e_j)` on the probability simplex.
pub fn expected_multiclass_spo(p: &[f64], d: &[f64]) -> Result<f64> {
    validate(p)?;
    let dom = SimplexDomain::new(p.len())?;
    let mut total = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        total += pj * spo_plus_loss(&dom, d, &dom.label(j))?.value;
    }
    Ok(total)
}

/// Closed-form minimizer. The optimal value is `1` when no class has
/// probability above one half and `2(1 − max p)` otherwise; in the latter
/// case the witness lowers the likeliest class by one half.
pub fn multiclass_spo_minimizer(p: &[f64]) -> Result<MulticlassSpoMinimizer> {
    validate(p)?;
    let (top, &p_top) = p
        .iter()
        .enumerate()
        .fold((0, &p[0]), |best, (j, x)| if *x > *best.1 { (j, x) } else { best });
    let m = p.len();
    if p_top <= 0.5 {
        Ok(MulticlassSpoMinimizer {
            value: 1.0,
            witness: vec![0.0; m],
            is_constant_optimal: true,
        })
    } else {
        let mut witness = vec![0.0; m];
        witness[top] = -0.5;
        Ok(MulticlassSpoMinimizer {
            value: 2.0 * (1.0 - p_top),
            witness,
            is_constant_optimal: false,
        })
    }
}

/// Smallest expected loss over predictions with one coordinate at zero and
/// the rest equal to `t/2`, `t` on a uniform grid of `[0, 1]`. Returns the
/// value and its minimizer.
pub fn multiclass_family_search(p: &[f64], grid: usize) -> Result<(f64, Vec<f64>)> {
    validate(p)?;
    if grid < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points".into()));
    }
    let m = p.len();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for low in 0..m {
        for g in 0..grid {
            let t = g as f64 / (grid - 1) as f64;
            let mut d = vec![0.5 * t; m];
            d[low] = 0.0;
            let v = expected_multiclass_spo(p, &d)?;
            if v < best.0 {
                best = (v, d);
            }
        }
    }
    Ok(best)
}
