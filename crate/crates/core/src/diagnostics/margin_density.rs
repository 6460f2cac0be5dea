use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, normal_cdf, normal_pdf};

const QUAD_TOL: f64 = 1e-12;

/// Profile of the bridge between the two Gaussian tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeShape {
    /// Flat at `α/2` then linear up to 1; needs `α ∈ (0, 2/3)`.
    Plateau,
    /// `1 + 1.5(α−1)(1−r²)`; needs `α > 1/3`.
    Quadratic,
}

/// Continuous density symmetric about `eps > 0` whose sign margin
/// `P[c>0] − P[c<0]` equals `(1 − 2Φ(−eps))/k`.
///
/// Outside `[0, 2 eps]` the density is a scaled `N(eps, 1)` density; inside it
/// is a bridge `h(r; α)` with `h(1) = 1` and unit-interval integral `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanishingMarginDensity {
    eps: f64,
    k: u32,
    z: f64,
    scale: f64,
    alpha: f64,
    shape: BridgeShape,
}

impl VanishingMarginDensity {
    /// Plateau bridge only.
    pub fn new(eps: f64, k: u32) -> Result<Self> {
        let (z, scale, alpha) = Self::params(eps, k)?;
        if !(alpha > 0.0 && alpha < 2.0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "bridge mass {alpha} outside (0, 2/3) for eps = {eps}, k = {k}"
            )));
        }
        Ok(Self {
            eps,
            k,
            z,
            scale,
            alpha,
            shape: BridgeShape::Plateau,
        })
    }

    /// Plateau bridge when admissible, the quadratic bridge otherwise.
    pub fn with_fallback(eps: f64, k: u32) -> Result<Self> {
        match Self::new(eps, k) {
            Ok(d) => Ok(d),
            Err(_) => {
                let (z, scale, alpha) = Self::params(eps, k)?;
                if alpha > 1.0 / 3.0 {
                    Ok(Self {
                        eps,
                        k,
                        z,
                        scale,
                        alpha,
                        shape: BridgeShape::Quadratic,
                    })
                } else {
                    Err(Error::InvalidParameter(format!(
                        "no bridge profile for mass {alpha} at eps = {eps}, k = {k}"
                    )))
                }
            }
        }
    }

    fn params(eps: f64, k: u32) -> Result<(f64, f64, f64)> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let z = 2.0 * normal_cdf(-eps);
        let kf = k as f64;
        let scale = (z + (1.0 - 1.0 / kf) * (1.0 - z)) / z;
        let alpha = (1.0 - z) / (2.0 * kf * eps * scale * normal_pdf(eps));
        Ok((z, scale, alpha))
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shape(&self) -> BridgeShape {
        self.shape
    }

    /// Point where the plateau bridge changes slope, in bridge coordinates.
    fn plateau_end(&self) -> f64 {
        (2.0 - 3.0 * self.alpha) / (2.0 - self.alpha)
    }

    fn bridge(&self, r: f64) -> f64 {
        let a = self.alpha;
        match self.shape {
            BridgeShape::Plateau => {
                if r <= self.plateau_end() {
                    a / 2.0
                } else {
                    (2.0 - a).powi(2) * (r - 1.0) / (4.0 * a) + 1.0
                }
            }
            BridgeShape::Quadratic => 1.0 + 1.5 * (a - 1.0) * (1.0 - r * r),
        }
    }

    pub fn density(&self, c: f64) -> f64 {
        let e = self.eps;
        if c <= 0.0 || c >= 2.0 * e {
            self.scale * normal_pdf(c - e)
        } else {
            let r = (c / e - 1.0).abs();
            self.scale * normal_pdf(e) * self.bridge(r)
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let e = self.eps;
        let half = 8.0 + e;
        let mut pts = vec![e - half, 0.0, e, 2.0 * e, e + half];
        if self.shape == BridgeShape::Plateau {
            let t = self.plateau_end();
            pts.push(e * (1.0 - t));
            pts.push(e * (1.0 + t));
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    fn integrate(&self, g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let pts = self.breakpoints();
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0].max(lo), w[1].min(hi));
            if a < b {
                total += adaptive_simpson(&|c| g(c) * self.density(c), a, b, QUAD_TOL);
            }
        }
        total
    }

    fn outer(&self) -> (f64, f64) {
        let half = 8.0 + self.eps;
        (self.eps - half, self.eps + half)
    }

    /// Mass beyond each end of the quadrature window.
    fn tail_mass(&self) -> f64 {
        self.scale * normal_cdf(-(8.0 + self.eps))
    }

    pub fn total_mass(&self) -> f64 {
        let (lo, hi) = self.outer();
        self.integrate(&|_| 1.0, lo, hi) + 2.0 * self.tail_mass()
    }

    pub fn mean(&self) -> f64 {
        let (lo, hi) = self.outer();
        // ∫ c φ(c−eps) over the two tails, which are mirror images about eps
        let tails = 2.0 * self.eps * self.tail_mass();
        self.integrate(&|c| c, lo, hi) + tails
    }

    /// `P[c>0] − P[c<0]` by quadrature.
    pub fn margin(&self) -> f64 {
        let (lo, hi) = self.outer();
        let neg = self.integrate(&|_| 1.0, lo, 0.0) + self.tail_mass();
        let pos = self.integrate(&|_| 1.0, 0.0, hi) + self.tail_mass();
        pos - neg
    }

    /// `(1 − 2Φ(−eps))/k`.
    pub fn margin_exact(&self) -> f64 {
        (1.0 - self.z) / self.k as f64
    }
}
