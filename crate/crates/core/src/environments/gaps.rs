//! Minimum utility differences, the minimum preference gap and related
//! distribution diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::{ContextModel, StochasticEnvSpec};
use crate::market::{compute_utilities, UtilityMatrix};
use crate::{Error, Result};

/// Smallest absolute difference between two entries of the same row.
pub fn delta_min(u: &UtilityMatrix) -> Result<f64> {
    if u.n_arms() < 2 {
        return Err(Error::TooFewArms);
    }
    let mut best = f64::INFINITY;
    let mut row = Vec::with_capacity(u.n_arms());
    for i in 0..u.n_players() {
        row.clear();
        row.extend_from_slice(u.row(i));
        row.sort_by(f64::total_cmp);
        for w in row.windows(2) {
            best = best.min(w[1] - w[0]);
        }
    }
    Ok(best)
}

/// Closed-form CDF of the minimum difference for one player with unit
/// parameter facing arms uniform on `[0, 1/2]`, `[1/4, 3/4]`, `[1/2, 1]`.
pub fn appendix_h_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x <= 0.125 {
        1.0 - 8.0 * (8.0 / 3.0 * x.powi(3) - 0.25 * x * x - 0.5 * x + 0.125)
    } else if x <= 0.25 {
        1.0 - 8.0 * (0.75 * x * x - 0.625 * x + 25.0 / 192.0)
    } else if x < 0.5 {
        1.0 - 8.0 * (-4.0 / 3.0 * x.powi(3) + 2.0 * x * x - x + 1.0 / 6.0)
    } else {
        1.0
    }
}

/// The one-dimensional environment whose minimum difference follows
/// [`appendix_h_cdf`] when the player parameter is 1.
pub fn appendix_h_contexts() -> StochasticEnvSpec {
    StochasticEnvSpec {
        dim: 1,
        arms: vec![
            ContextModel::UniformBox { lo: 0.0, hi: 0.5 },
            ContextModel::UniformBox { lo: 0.25, hi: 0.75 },
            ContextModel::UniformBox { lo: 0.5, hi: 1.0 },
        ],
    }
}

/// Empirical distribution of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `P(X <= x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// `P(X < x)`.
    pub fn eval_below(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s < x) as f64 / self.sorted.len() as f64
    }

    /// Largest absolute deviation from `f` over the sample points, checked
    /// on both sides of each jump.
    pub fn sup_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        let mut worst: f64 = 0.0;
        for (k, &s) in self.sorted.iter().enumerate() {
            let fs = f(s);
            worst = worst.max((fs - k as f64 / n).abs());
            worst = worst.max((fs - (k + 1) as f64 / n).abs());
        }
        worst
    }
}

fn ln_horizon(horizon: u64) -> f64 {
    (horizon.max(1) as f64).ln()
}

/// Supremum of `{D > 0 : P(X >= D) >= 1 - ln T/(T D^2)}` for the empirical
/// distribution, computed exactly on its step structure.
///
/// `P(X < D)` is nondecreasing and `ln T/(T D^2)` decreasing, so the set is
/// an interval `(0, D*]` and there is exactly one crossing.
pub fn min_gap_from_samples(cdf: &EmpiricalCdf, horizon: u64) -> (f64, Vec<f64>) {
    let c = ln_horizon(horizon) / horizon.max(1) as f64;
    let s = cdf.sorted();
    let n = s.len();
    let mut best = 0.0f64;
    // For D in (s[k-1], s[k]] exactly k samples lie below D.
    for k in 0..=n {
        let lo = if k == 0 { 0.0 } else { s[k - 1].max(0.0) };
        let hi = if k == n { f64::INFINITY } else { s[k] };
        if hi <= lo {
            continue;
        }
        let reach = if k == 0 {
            f64::INFINITY
        } else {
            (c * n as f64 / k as f64).sqrt()
        };
        if reach <= lo {
            break;
        }
        best = best.max(reach.min(hi));
    }
    (best, vec![best])
}

/// Same supremum for a continuous CDF: scan a 512-point log grid on
/// `[1e-4, 1]`, then bisect each sign change of `F(D) - ln T/(T D^2)`.
/// Returns the largest crossing and all of them.
pub fn min_gap_from_cdf(f: impl Fn(f64) -> f64, horizon: u64) -> (f64, Vec<f64>) {
    let c = ln_horizon(horizon) / horizon.max(1) as f64;
    let g = |d: f64| f(d) - c / (d * d);
    let grid: Vec<f64> = (0..512)
        .map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 511.0))
        .collect();
    let mut crossings = Vec::new();
    for w in grid.windows(2) {
        if g(w[0]) <= 0.0 && g(w[1]) > 0.0 {
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push(lo);
        }
    }
    if g(grid[511]) <= 0.0 {
        crossings.push(grid[511]);
    }
    let best = crossings.last().copied().unwrap_or(grid[0]);
    (best, crossings)
}

/// Least-squares slope through the origin of the CDF on `(0, d0]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub d0: f64,
    pub slope: f64,
    /// Largest `F(D) / D` on the fitting grid.
    pub max_ratio: f64,
}

fn fit_slope(cdf: &EmpiricalCdf, d0: f64) -> SlopeFit {
    let pts: Vec<f64> = (1..=64).map(|i| d0 * i as f64 / 64.0).collect();
    let (mut sxy, mut sxx, mut max_ratio) = (0.0, 0.0, 0.0f64);
    for &d in &pts {
        let y = cdf.eval(d);
        sxy += d * y;
        sxx += d * d;
        max_ratio = max_ratio.max(y / d);
    }
    SlopeFit {
        d0,
        slope: sxy / sxx,
        max_ratio,
    }
}

/// Monte-Carlo diagnostics of the minimum difference distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapDiagnostics {
    pub horizon: u64,
    pub n_samples: usize,
    /// Estimated minimum preference gap.
    pub delta_min_star: f64,
    /// Every point where the defining condition stops holding.
    pub crossings: Vec<f64>,
    /// `min_j lambda_min(E[x_j x_j^T])`.
    pub eigen_floor: f64,
    /// `lambda_min(E[X X^T])` for the stacked context vector `X`.
    pub joint_eigen_floor: f64,
    pub cdf_slope: Vec<SlopeFit>,
    /// `(D, F(D))` on a 64-point grid over `[0, 1/2]`.
    pub cdf_grid: Vec<(f64, f64)>,
    #[serde(skip)]
    pub cdf: EmpiricalCdf,
}

/// Draws `n_samples` rounds of contexts, records the minimum difference of
/// the induced utilities and summarizes its distribution.
pub fn estimate_min_gap<R: Rng + ?Sized>(
    env: &StochasticEnvSpec,
    theta: &[DVector<f64>],
    horizon: u64,
    n_samples: usize,
    rng: &mut R,
) -> Result<GapDiagnostics> {
    env.validate()?;
    if n_samples < 2 {
        return Err(Error::param("n_samples", "needs at least two draws"));
    }
    if env.n_arms() < 2 {
        return Err(Error::TooFewArms);
    }
    let d = env.dim;
    let k = env.n_arms();
    let mut per_arm = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut joint = DMatrix::<f64>::zeros(k * d, k * d);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let ctx = env.sample(rng);
        let u = compute_utilities(theta, &ctx)?;
        samples.push(delta_min(&u)?);
        let stacked = DVector::from_iterator(k * d, ctx.iter().flat_map(|x| x.iter().copied()));
        joint.ger(1.0, &stacked, &stacked, 1.0);
        for (j, x) in ctx.iter().enumerate() {
            per_arm[j].ger(1.0, x, x, 1.0);
        }
    }
    let n = n_samples as f64;
    let min_eig = |m: DMatrix<f64>| {
        (m / n)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    let eigen_floor = per_arm
        .into_iter()
        .map(min_eig)
        .fold(f64::INFINITY, f64::min);
    let joint_eigen_floor = min_eig(joint);
    let cdf = EmpiricalCdf::new(samples);
    let (delta_min_star, crossings) = min_gap_from_samples(&cdf, horizon);
    let cdf_slope = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0]
        .iter()
        .map(|&d0| fit_slope(&cdf, d0))
        .collect();
    let cdf_grid = (0..=64)
        .map(|i| {
            let x = 0.5 * i as f64 / 64.0;
            (x, cdf.eval(x))
        })
        .collect();
    Ok(GapDiagnostics {
        horizon,
        n_samples,
        delta_min_star,
        crossings,
        eigen_floor,
        joint_eigen_floor,
        cdf_slope,
        cdf_grid,
        cdf,
    })
}
