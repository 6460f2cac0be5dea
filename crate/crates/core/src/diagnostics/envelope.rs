use crate::error::{Error, Result};

/// Greatest convex minorant of a sampled function, piecewise linear between
/// the vertices of the lower convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexEnvelope {
    hull: Vec<(f64, f64)>,
}

/// Lower convex hull of `(x, y)` samples with strictly increasing `x`.
pub fn convex_envelope(samples: &[(f64, f64)]) -> Result<ConvexEnvelope> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("envelope needs at least one sample".into()));
    }
    if samples.iter().any(|s| !s.0.is_finite() || !s.1.is_finite()) {
        return Err(Error::InvalidParameter("envelope samples must be finite".into()));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "envelope abscissae must be strictly increasing".into(),
        ));
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for &p in samples {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b unless it lies strictly below the chord from a to p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(ConvexEnvelope { hull })
}

impl ConvexEnvelope {
    /// Hull vertices in increasing order.
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.hull
    }

    /// Envelope value at `x`, or `None` outside the sampled range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let first = self.hull[0];
        let last = self.hull[self.hull.len() - 1];
        if x < first.0 || x > last.0 {
            return None;
        }
        if self.hull.len() == 1 {
            return Some(first.1);
        }
        let i = self.hull.partition_point(|v| v.0 < x);
        if i == 0 {
            return Some(first.1);
        }
        let (a, b) = (self.hull[i - 1], self.hull[i]);
        let t = (x - a.0) / (b.0 - a.0);
        Some(a.1 + t * (b.1 - a.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn convex_samples_are_reproduced() {
        let s: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64 * 0.1, (i as f64 * 0.1).powi(2))).collect();
        let env = convex_envelope(&s).unwrap();
        for &(x, y) in &s {
            assert_abs_diff_eq!(env.eval(x).unwrap(), y, epsilon = 1e-15);
        }
    }

    #[test]
    fn v_shape() {
        let env = convex_envelope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).unwrap();
        assert_eq!(env.vertices().len(), 3);
        assert_abs_diff_eq!(env.eval(1.5).unwrap(), 0.5);
        assert_abs_diff_eq!(env.eval(2.5).unwrap(), 0.5);
        assert_eq!(env.eval(0.5), None);
    }

    #[test]
    fn constant_and_concave() {
        let env = convex_envelope(&[(0.1, 2.0), (0.5, 2.0), (0.9, 2.0)]).unwrap();
        assert_abs_diff_eq!(env.eval(0.3).unwrap(), 2.0);
        let sqrt = convex_envelope(&[(0.0, 0.0), (1.0, 1.0), (4.0, 2.0)]).unwrap();
        assert_eq!(sqrt.vertices(), &[(0.0, 0.0), (4.0, 2.0)]);
        assert_abs_diff_eq!(sqrt.eval(1.0).unwrap(), 0.5);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(convex_envelope(&[(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(convex_envelope(&[(2.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(convex_envelope(&[]).is_err());
    }

    /// Largest convex minorant by brute force: for each x, the lowest chord
    /// between two samples bracketing x.
    fn brute(samples: &[(f64, f64)], x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for a in samples {
            for b in samples {
                if a.0 <= x && x <= b.0 {
                    let v = if a.0 == b.0 {
                        a.1
                    } else {
                        a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1)
                    };
                    best = best.min(v);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn envelope_is_convex_minorant(ys in prop::collection::vec(0.0f64..5.0, 2..12)) {
            let s: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect();
            let env = convex_envelope(&s).unwrap();
            for &(x, y) in &s {
                let e = env.eval(x).unwrap();
                prop_assert!(e <= y + 1e-12);
                prop_assert!((e - brute(&s, x)).abs() < 1e-9);
            }
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    let (a, b) = (s[i].0, s[j].0);
                    let mid = env.eval(0.5 * (a + b)).unwrap();
                    prop_assert!(mid <= 0.5 * (env.eval(a).unwrap() + env.eval(b).unwrap()) + 1e-12);
                }
            }
        }
    }
}
