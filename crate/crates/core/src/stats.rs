//! Gaussian summaries of the similarity distributions and their intersection.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("all samples are equal; the distribution is degenerate")]
    ZeroVariance,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("auto and cross Gaussians are indistinguishable")]
    IdenticalDistributions,
    #[error("auto mean {auto} does not exceed cross mean {cross}")]
    AutoNotAboveCross { auto: f64, cross: f64 },
    #[error("histogram needs at least one sample and one bin")]
    EmptyHistogram,
}

/// Mean, population standard deviation and variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianEstimate {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    pub n: usize,
}

impl GaussianEstimate {
    /// Builds an estimate from known parameters (`n` is informational).
    pub fn from_params(mu: f64, sigma: f64, n: usize) -> Self {
        Self {
            mu,
            sigma,
            nu: sigma * sigma,
            n,
        }
    }

    pub fn peak(&self) -> f64 {
        gaussian_pdf(self, self.mu)
    }
}

/// Fits a descriptive Gaussian: sample mean and population (1/n) variance.
pub fn estimate_gaussian(samples: &[f64]) -> Result<GaussianEstimate, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let mu = samples.iter().sum::<f64>() / n as f64;
    let nu = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
    if nu == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sigma = nu.sqrt();
    Ok(GaussianEstimate { mu, sigma, nu, n })
}

pub fn gaussian_pdf(g: &GaussianEstimate, x: f64) -> f64 {
    let z = (x - g.mu) / g.sigma;
    (-0.5 * z * z).exp() / (g.sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Roots of `A x² + B x + C = 0` where the auto and cross densities meet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionResult {
    pub roots: Vec<f64>,
    pub chosen: Option<f64>,
    pub quadratic_coeffs: (f64, f64, f64),
}

const LINEAR_CUTOFF: f64 = 1e-12;

/// Solves `f_auto(x) = f_cross(x)`.
///
/// With auto = 1 and cross = 2 the coefficients are
/// `A = ν₁ − ν₂`, `B = 2(μ₁ν₂ − μ₂ν₁)`, `C = ν₁μ₂² − ν₂μ₁² − ν₁ν₂ ln(ν₁/ν₂)`.
/// The root between the two means is `chosen`; when both roots qualify the
/// one with the higher density wins, ties to the smaller root.
pub fn intersect_gaussians(
    auto: &GaussianEstimate,
    cross: &GaussianEstimate,
) -> Result<IntersectionResult, StatsError> {
    let (m1, v1) = (auto.mu, auto.nu);
    let (m2, v2) = (cross.mu, cross.nu);
    let a = v1 - v2;
    let b = 2.0 * (m1 * v2 - m2 * v1);
    let c = v1 * m2 * m2 - v2 * m1 * m1 - v1 * v2 * (v1 / v2).ln();

    let roots = if v1 == v2 {
        if m1 == m2 {
            return Err(StatsError::IdenticalDistributions);
        }
        // Equal variances: the densities cross exactly halfway.
        vec![0.5 * (m1 + m2)]
    } else if a.abs() <= LINEAR_CUTOFF {
        if b.abs() <= LINEAR_CUTOFF {
            return Err(StatsError::IdenticalDistributions);
        }
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            Vec::new()
        } else {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q == 0.0 {
                // b = 0 and c = 0: double root at zero.
                vec![0.0]
            } else {
                let mut r = vec![q / a, c / q];
                r.sort_by(f64::total_cmp);
                r.dedup();
                r
            }
        }
    };

    let (lo, hi) = (m1.min(m2), m1.max(m2));
    let mut chosen: Option<f64> = None;
    for &r in roots.iter().filter(|r| (lo..=hi).contains(*r)) {
        chosen = match chosen {
            Some(prev) if gaussian_pdf(auto, prev) >= gaussian_pdf(auto, r) => Some(prev),
            _ => Some(r),
        };
    }

    Ok(IntersectionResult {
        roots,
        chosen,
        quadratic_coeffs: (a, b, c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    Intersection,
    MeanFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialThreshold {
    pub lambda: f64,
    pub source: InitSource,
}

/// Starting threshold: the chosen intersection when it lies in
/// `[μ_cross, μ_auto] ∩ [0, 1]`, otherwise the midpoint of the two means.
pub fn initialize_threshold(
    intersection: &IntersectionResult,
    auto: &GaussianEstimate,
    cross: &GaussianEstimate,
) -> Result<InitialThreshold, StatsError> {
    if auto.mu <= cross.mu {
        return Err(StatsError::AutoNotAboveCross {
            auto: auto.mu,
            cross: cross.mu,
        });
    }
    let usable = intersection
        .chosen
        .filter(|&r| r >= cross.mu && r <= auto.mu && (0.0..=1.0).contains(&r));
    Ok(match usable {
        Some(lambda) => InitialThreshold {
            lambda,
            source: InitSource::Intersection,
        },
        None => InitialThreshold {
            lambda: 0.5 * (cross.mu + auto.mu),
            source: InitSource::MeanFallback,
        },
    })
}

/// Equal-width, density-normalized histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl HistogramSummary {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }
}

/// Bins span `[min, max]` of the samples; a zero span is widened to a unit
/// interval centred on the value. The top edge is inclusive.
pub fn histogram(samples: &[f64], bins: usize) -> Result<HistogramSummary, StatsError> {
    if samples.is_empty() || bins == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max > min {
        (min, max)
    } else {
        (min - 0.5, min + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = samples.len() as f64;
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
        .collect();
    Ok(HistogramSummary {
        bin_edges,
        densities,
    })
}
