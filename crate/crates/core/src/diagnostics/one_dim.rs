use crate::error::{Error, Result};
use crate::numeric::golden_section;

/// Population SPO+ minimizer for a scalar cost on the interval `[-1/2, 1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneDimMinimizer {
    /// Golden-section estimate of a minimizer.
    pub d_star: f64,
    pub value: f64,
    /// Exact minimizer set `[lo, hi]` from the breakpoints; ends may be infinite.
    pub set_lo: f64,
    pub set_hi: f64,
    pub mean: f64,
    pub median: f64,
    pub sign_d: f64,
    pub sign_mean: f64,
    pub sign_median: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn validate(atoms: &[(f64, f64)]) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidParameter("no atoms".into()));
    }
    if atoms.iter().any(|a| !(a.1 > 0.0) || !a.0.is_finite()) {
        return Err(Error::InvalidParameter(
            "atoms need finite values and positive probabilities".into(),
        ));
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
    }
    if atoms.iter().all(|a| a.0 == 0.0) {
        return Err(Error::InvalidParameter("support is the single point zero".into()));
    }
    if atoms.iter().any(|a| a.0 == 0.0) {
        return Err(Error::Assumption("cost has an atom at zero".into()));
    }
    Ok(())
}

/// Expected SPO+ loss `½E|2d−c| + d(P[c<0] − P[c>0]) + ½E|c|` for `(c, p)` atoms.
pub fn spo_1d_population_objective(atoms: &[(f64, f64)], d: f64) -> f64 {
    let mut v = 0.0;
    for &(c, p) in atoms {
        v += p * (0.5 * (2.0 * d - c).abs() - d * sign(c) + 0.5 * c.abs());
    }
    v
}

fn weighted_median(atoms: &[(f64, f64)]) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0.0;
    for (i, &(c, p)) in sorted.iter().enumerate() {
        cum += p;
        if (cum - 0.5).abs() <= 1e-12 && i + 1 < sorted.len() {
            return 0.5 * (c + sorted[i + 1].0);
        }
        if cum > 0.5 {
            return c;
        }
    }
    sorted[sorted.len() - 1].0
}

/// Minimizes the expected SPO+ loss over scalar predictions.
pub fn spo_1d_population_minimizer(atoms: &[(f64, f64)]) -> Result<OneDimMinimizer> {
    validate(atoms)?;
    let f = |d: f64| spo_1d_population_objective(atoms, d);
    let scale = atoms.iter().fold(0.0f64, |a, x| a.max(x.0.abs()));
    let radius = scale + 1.0;
    let (d_star, value) = golden_section(&f, -radius, radius, 1e-12);

    // piecewise linear: the minimum is attained at a breakpoint c/2
    let mut breaks: Vec<f64> = atoms.iter().map(|a| 0.5 * a.0).collect();
    breaks.sort_by(|a, b| a.total_cmp(b));
    let best = breaks.iter().map(|&b| f(b)).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let attained: Vec<f64> = breaks.iter().copied().filter(|&b| f(b) <= best + tol).collect();
    let p_pos: f64 = atoms.iter().filter(|a| a.0 > 0.0).map(|a| a.1).sum();
    let p_neg: f64 = atoms.iter().filter(|a| a.0 < 0.0).map(|a| a.1).sum();
    // slopes beyond the outermost breakpoints are 2P[c<0] and -2P[c>0]
    let set_lo = if p_pos == 0.0 { f64::NEG_INFINITY } else { attained[0] };
    let set_hi = if p_neg == 0.0 { f64::INFINITY } else { attained[attained.len() - 1] };

    let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
    let median = weighted_median(atoms);
    Ok(OneDimMinimizer {
        d_star,
        value: value.min(best),
        set_lo,
        set_hi,
        mean,
        median,
        sign_d: sign(d_star),
        sign_mean: sign(mean),
        sign_median: sign(median),
    })
}
