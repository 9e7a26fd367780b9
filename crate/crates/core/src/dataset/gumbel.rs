use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Which tail the extreme value distribution models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GumbelFlavor {
    Max,
    Min,
}

/// Gumbel distribution with location `location` and scale `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gumbel<T> {
    pub flavor: GumbelFlavor,
    pub location: T,
    pub scale: T,
}

impl<T: Scalar> Gumbel<T> {
    pub fn new(flavor: GumbelFlavor, location: T, scale: T) -> Result<Self> {
        if !(scale > T::zero()) || !location.is_finite() {
            return Err(Error::InvalidArgument("Gumbel scale must be positive".into()));
        }
        Ok(Self { flavor, location, scale })
    }

    /// Zero-mean Gumbel of the given scale (location shifted by the Euler–Mascheroni term).
    pub fn centered(flavor: GumbelFlavor, scale: T) -> Result<Self> {
        let shift = T::lit(EULER_GAMMA) * scale;
        let location = match flavor {
            GumbelFlavor::Max => -shift,
            GumbelFlavor::Min => shift,
        };
        Self::new(flavor, location, scale)
    }

    pub fn cdf(&self, x: T) -> T {
        let z = (x - self.location) / self.scale;
        match self.flavor {
            GumbelFlavor::Max => (-(-z).exp()).exp(),
            GumbelFlavor::Min => -(-(z.exp())).exp_m1(),
        }
    }

    pub fn mean(&self) -> T {
        let shift = T::lit(EULER_GAMMA) * self.scale;
        match self.flavor {
            GumbelFlavor::Max => self.location + shift,
            GumbelFlavor::Min => self.location - shift,
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        // open interval so that ln(-ln u) stays finite
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let g = T::lit(-(-u.ln()).ln());
        match self.flavor {
            GumbelFlavor::Max => self.location + self.scale * g,
            GumbelFlavor::Min => self.location - self.scale * g,
        }
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Maximum-likelihood Gumbel fit with its one-sample KS statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit<T> {
    pub flavor: GumbelFlavor,
    pub location: T,
    pub scale: T,
    pub ks_statistic: T,
}

impl<T: Scalar> GumbelFit<T> {
    pub fn distribution(&self) -> Gumbel<T> {
        Gumbel { flavor: self.flavor, location: self.location, scale: self.scale }
    }
}

pub const MIN_GUMBEL_SAMPLES: usize = 30;

/// Fits a Gumbel distribution of the given flavor by maximum likelihood.
///
/// The data are standardized first and the scale equation
/// `beta = mean(y) - sum(y e^{-y/beta}) / sum(e^{-y/beta})` is solved by
/// bisection, so the fit is exactly translation and scale equivariant up to
/// rounding.
pub fn fit_gumbel<T: Scalar>(residuals: &[T], flavor: GumbelFlavor) -> Result<GumbelFit<T>> {
    let n = residuals.len();
    if n < MIN_GUMBEL_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_GUMBEL_SAMPLES, got: n });
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("residuals must be finite".into()));
    }
    let nf = T::from_usize_lossy(n);
    let mean = residuals.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let var = residuals.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / nf;
    let sd = var.sqrt();
    if !(sd > T::zero()) || residuals.iter().all(|&r| r == residuals[0]) {
        return Err(Error::ZeroVariance);
    }
    // Max-flavor fit on standardized data; Min is a Max fit on the negation.
    let sign = match flavor {
        GumbelFlavor::Max => T::one(),
        GumbelFlavor::Min => -T::one(),
    };
    let y: Vec<T> = residuals.iter().map(|&r| sign * (r - mean) / sd).collect();
    let (loc_std, scale_std) = fit_max_standardized(&y);
    let location = mean + sign * sd * loc_std;
    let scale = sd * scale_std;
    let dist = Gumbel { flavor, location, scale };
    let ks = ks_statistic(residuals, |x| dist.cdf(x));
    Ok(GumbelFit { flavor, location, scale, ks_statistic: ks })
}

fn fit_max_standardized<T: Scalar>(y: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(y.len());
    let ybar = y.iter().fold(T::zero(), |a, &b| a + b) / n;
    let ymin = y.iter().copied().fold(y[0], |a, b| a.min(b));
    // g is negative as beta -> 0 and positive for large beta
    let g = |beta: T| {
        let (mut sw, mut swy) = (T::zero(), T::zero());
        for &v in y {
            let w = (-(v - ymin) / beta).exp();
            sw += w;
            swy += w * v;
        }
        beta - ybar + swy / sw
    };
    let mut lo = T::lit(1e-8);
    let mut hi = T::one();
    while g(hi) <= T::zero() {
        lo = hi;
        hi *= T::lit(2.0);
    }
    let tol = T::default_epsilon() * T::lit(4.0);
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if g(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= tol * hi {
            break;
        }
    }
    let beta = (lo + hi) * T::lit(0.5);
    let sw = y.iter().fold(T::zero(), |a, &v| a + (-(v - ymin) / beta).exp());
    let loc = ymin - beta * (sw / n).ln();
    (loc, beta)
}

/// Supremum distance between the empirical CDF of `sample` and `cdf`,
/// evaluated on both sides of every jump.
pub fn ks_statistic<T: Scalar>(sample: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = T::from_usize_lossy(sorted.len());
    let mut d = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = T::from_usize_lossy(i + 1) / n - f;
        let below = f - T::from_usize_lossy(i) / n;
        d = d.max(above).max(below);
    }
    d.min(T::one())
}
