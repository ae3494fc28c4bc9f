//! Per-player ridge regression and self-normalized confidence radii.

use nalgebra::{DMatrix, DVector};

use crate::market::{ContextSet, UtilityMatrix};
use crate::{Error, Result};

/// Regularized Gram matrix `V = lambda I + sum x x^T`, response
/// `b = sum y x` and the ridge estimate `V^-1 b`.
#[derive(Clone, Debug)]
pub struct GramState {
    ridge: f64,
    gram: DMatrix<f64>,
    response: DVector<f64>,
    estimate: DVector<f64>,
    inverse: DMatrix<f64>,
    samples: usize,
}

impl GramState {
    pub fn new(dim: usize, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::param("ridge", "must be positive and finite"));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        Ok(Self {
            ridge,
            gram: DMatrix::identity(dim, dim) * ridge,
            response: DVector::zeros(dim),
            estimate: DVector::zeros(dim),
            inverse: DMatrix::identity(dim, dim) / ridge,
            samples: 0,
        })
    }

    /// State with a given Gram matrix and response vector, e.g. to plant a
    /// known estimate.
    pub fn from_parts(ridge: f64, gram: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let mut s = Self::new(response.len(), ridge)?;
        if gram.nrows() != s.dim() || gram.ncols() != s.dim() {
            return Err(Error::DimensionMismatch {
                what: "gram",
                expected: s.dim(),
                found: gram.nrows(),
            });
        }
        s.gram = gram;
        s.response = response;
        s.refresh()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.response.len()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn update(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "context",
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression sample"));
        }
        self.gram.ger(1.0, x, x, 1.0);
        self.response.axpy(y, x, 1.0);
        self.samples += 1;
        self.refresh()
    }

    fn refresh(&mut self) -> Result<()> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        self.estimate = chol.solve(&self.response);
        self.inverse = chol.inverse();
        Ok(())
    }

    /// `||x||_{V^-1}`.
    pub fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        (x.dot(&(&self.inverse * x))).max(0.0).sqrt()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.gram
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Inputs of the confidence radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusParams {
    pub horizon: u64,
    pub dim: usize,
    pub b_x: f64,
    pub b_theta: f64,
    pub noise_r: f64,
    pub ridge: f64,
    pub delta: f64,
}

/// `eta = R sqrt(d ln((1 + T b_x^2 / lambda) / delta)) + sqrt(lambda) b_theta`.
pub fn confidence_radius(p: &RadiusParams) -> Result<f64> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::param("delta", "must lie in (0, 1)"));
    }
    if p.ridge.is_nan() || p.ridge <= 0.0 {
        return Err(Error::param("ridge", "must be positive"));
    }
    let t = p.horizon as f64;
    let inner = (1.0 + t * p.b_x * p.b_x / p.ridge) / p.delta;
    Ok(p.noise_r * (p.dim as f64 * inner.ln()).sqrt() + p.ridge.sqrt() * p.b_theta)
}

/// `Uhat[i][j] = thetahat_i . x_j`.
pub fn estimated_utilities(states: &[GramState], ctx: &ContextSet) -> Result<UtilityMatrix> {
    let k = ctx.n_arms();
    let mut values = Vec::with_capacity(states.len() * k);
    for s in states {
        if s.dim() != ctx.dim() {
            return Err(Error::DimensionMismatch {
                what: "context",
                expected: s.dim(),
                found: ctx.dim(),
            });
        }
        values.extend(ctx.iter().map(|x| s.estimate().dot(x)));
    }
    UtilityMatrix::new(states.len(), k, values)
}

/// Matrix of `||x_j||_{V_i^-1}`.
pub fn inv_norms(states: &[GramState], ctx: &ContextSet) -> UtilityMatrix {
    let k = ctx.n_arms();
    let values = states
        .iter()
        .flat_map(|s| ctx.iter().map(move |x| s.inv_norm(x)))
        .collect();
    UtilityMatrix::new(states.len(), k, values).expect("norms are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn single_update() {
        let mut s = GramState::new(1, 1.0).unwrap();
        s.update(&one(1.0), 2.0).unwrap();
        assert_eq!(s.gram()[(0, 0)], 2.0);
        assert!((s.estimate()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_updates_shrink_towards_zero() {
        let mut s = GramState::new(1, 1.0).unwrap();
        for n in 1..=20 {
            s.update(&one(1.0), 1.0).unwrap();
            let expected = n as f64 / (n as f64 + 1.0);
            assert!((s.estimate()[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_after_one_update() {
        let mut s = GramState::new(1, 1.0).unwrap();
        s.update(&one(1.0), 0.0).unwrap();
        assert!((s.inv_norm(&one(1.0)) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GramState::new(2, 0.0).is_err());
        let mut s = GramState::new(2, 1.0).unwrap();
        assert!(s.update(&one(1.0), 1.0).is_err());
        assert!(s
            .update(&DVector::from_vec(vec![1.0, f64::NAN]), 1.0)
            .is_err());
    }

    #[test]
    fn radius_values() {
        let base = RadiusParams {
            horizon: 10_000,
            dim: 3,
            b_x: 1.0,
            b_theta: 1.0,
            noise_r: 0.0,
            ridge: 1.0,
            delta: 1e-8,
        };
        assert!((confidence_radius(&base).unwrap() - 1.0).abs() < 1e-15);
        let eta = confidence_radius(&RadiusParams {
            noise_r: 1.0,
            ..base
        })
        .unwrap();
        assert!((eta - 10.104_579_250_7).abs() < 1e-9, "{eta}");
        assert!(confidence_radius(&RadiusParams { delta: 0.0, ..base }).is_err());
    }
}
