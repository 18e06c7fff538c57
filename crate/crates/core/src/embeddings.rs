//! Mean elements, covariance operators in Gram-matrix form, maximum mean
//! discrepancy and the deflection-optimal detector.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg;
use crate::{Error, Result};

/// An RKHS element `Σ α_i K(·, x_i)` over a finite point set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEmbedding {
    spec: KernelSpec,
    points: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
}

impl MeanEmbedding {
    pub fn new(spec: KernelSpec, points: Vec<Vec<f64>>, coeffs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("embedding needs at least one point"));
        }
        if points.len() != coeffs.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: coeffs.len() });
        }
        spec.check_points(&points)?;
        Ok(Self { spec, points, coeffs })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ α_i K(z, x_i)`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.spec.check_point(z)?;
        Ok(self
            .points
            .iter()
            .zip(&self.coeffs)
            .map(|(p, a)| a * self.spec.eval_unchecked(p, z))
            .sum())
    }

    /// Inner product with `f = Σ β_j K(·, x_j)` over the same points: `αᵀK_xβ`.
    pub fn inner_with_coeffs(&self, beta: &[f64]) -> Result<f64> {
        if beta.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: beta.len() });
        }
        Ok(bilinear(&self.spec, &self.points, &self.coeffs, &self.points, beta))
    }

    /// Inner product with another element of the same RKHS.
    pub fn inner(&self, other: &MeanEmbedding) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::InvalidParameter("embeddings use different kernels".into()));
        }
        Ok(bilinear(&self.spec, &self.points, &self.coeffs, &other.points, &other.coeffs))
    }

    pub fn norm_sq(&self) -> Result<f64> {
        self.inner(self)
    }

    /// `‖self − other‖²`, clipped at zero.
    pub fn distance_sq(&self, other: &MeanEmbedding) -> Result<f64> {
        Ok((self.norm_sq()? - 2.0 * self.inner(other)? + other.norm_sq()?).max(0.0))
    }
}

/// `Σ_ij α_i β_j K(x_i, y_j)` without materializing the cross Gram.
fn bilinear(spec: &KernelSpec, xs: &[Vec<f64>], alpha: &[f64], ys: &[Vec<f64>], beta: &[f64]) -> f64 {
    // rows in parallel, summed in order so the result does not depend on scheduling
    let rows: Vec<f64> = xs
        .par_iter()
        .zip(alpha.par_iter())
        .map(|(x, a)| a * ys.iter().zip(beta).map(|(y, b)| b * spec.eval_unchecked(x, y)).sum::<f64>())
        .collect();
    rows.iter().sum()
}

/// Empirical mean element `(1/N) Σ K(·, x_i)`.
pub fn mean_embed<P: AsRef<[f64]>>(spec: &KernelSpec, samples: &[P]) -> Result<MeanEmbedding> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("mean embedding of an empty sample"));
    }
    let n = samples.len();
    let points = samples.iter().map(|p| p.as_ref().to_vec()).collect();
    MeanEmbedding::new(*spec, points, vec![1.0 / n as f64; n])
}

/// Gram matrices of paired samples `(x_i, y_i)`, acting as the empirical (cross-)covariance operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CovOperatorRep {
    gram_x: Mat<f64>,
    gram_y: Mat<f64>,
    centered: bool,
    reg_lambda: f64,
}

impl CovOperatorRep {
    pub fn new(gram_x: Mat<f64>, gram_y: Mat<f64>, centered: bool, reg_lambda: f64) -> Result<Self> {
        let n = linalg::check_square(gram_x.as_ref(), "gram_x")?;
        if linalg::check_square(gram_y.as_ref(), "gram_y")? != n {
            return Err(Error::DimensionMismatch { expected: n, found: gram_y.nrows() });
        }
        if n == 0 {
            return Err(Error::EmptyInput("covariance operator on zero samples"));
        }
        if !(reg_lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("regularization must be ≥ 0, got {reg_lambda}")));
        }
        Ok(Self { gram_x, gram_y, centered, reg_lambda })
    }

    pub fn from_samples<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
        spec_x: &KernelSpec,
        xs: &[P],
        spec_y: &KernelSpec,
        ys: &[Q],
        centered: bool,
        reg_lambda: f64,
    ) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
        }
        Self::new(gram_matrix(spec_x, xs)?, gram_matrix(spec_y, ys)?, centered, reg_lambda)
    }

    pub fn len(&self) -> usize {
        self.gram_x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gram_x(&self) -> MatRef<'_, f64> {
        self.gram_x.as_ref()
    }

    pub fn gram_y(&self) -> MatRef<'_, f64> {
        self.gram_y.as_ref()
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    /// `⟨f, Σ_XY g⟩ = (1/N) αᵀK_x C K_y β` for `f = Σ α_i K_x(·,x_i)`, `g = Σ β_i K_y(·,y_i)`.
    /// Without centering `C` is dropped (uncentered second moment).
    pub fn cov_bilinear(&self, alpha: &[f64], beta: &[f64]) -> Result<f64> {
        let n = self.len();
        for v in [alpha, beta] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        let fx = linalg::mat_vec(self.gram_x.as_ref(), alpha);
        let mut gy = linalg::mat_vec(self.gram_y.as_ref(), beta);
        if self.centered {
            let mean = gy.iter().sum::<f64>() / n as f64;
            gy.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(fx.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>() / n as f64)
    }

    /// Coefficients of `(Σ_X + λI)⁻¹ g` using the stored regularization.
    pub fn apply_reg_inverse(&self, beta: &[f64]) -> Result<Vec<f64>> {
        apply_reg_inverse(self.gram_x.as_ref(), self.reg_lambda, beta)
    }
}

/// Coefficient form of the regularized inverse: `α = N(K + NλI)⁻¹β`.
pub fn apply_reg_inverse(gram: MatRef<'_, f64>, reg_lambda: f64, beta: &[f64]) -> Result<Vec<f64>> {
    let n = linalg::check_square(gram, "gram")?;
    if beta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: beta.len() });
    }
    if !(reg_lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization must be positive, got {reg_lambda}")));
    }
    let nf = n as f64;
    let mut m = gram.to_owned();
    linalg::add_diagonal(&mut m, nf * reg_lambda);
    let rhs = Mat::from_fn(n, 1, |i, _| nf * beta[i]);
    let sol = match linalg::spd_solve(m.as_ref(), rhs.as_ref()) {
        Ok(s) => s,
        Err(_) => linalg::lu_solve(m.as_ref(), rhs.as_ref())?,
    };
    Ok((0..n).map(|i| sol[(i, 0)]).collect())
}

/// Biased (V-statistic) squared maximum mean discrepancy between two samples.
pub fn mmd_sq<P: AsRef<[f64]>, Q: AsRef<[f64]>>(spec: &KernelSpec, p: &[P], q: &[Q]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput("mmd needs two nonempty samples"));
    }
    spec.check_points(p)?;
    spec.check_points(q)?;
    let block_mean = |a: &[&[f64]], b: &[&[f64]]| -> f64 {
        let mut acc = 0.0;
        for x in a {
            for y in b {
                acc += spec.eval_unchecked(x, y);
            }
        }
        acc / (a.len() * b.len()) as f64
    };
    let pa: Vec<&[f64]> = p.iter().map(|v| v.as_ref()).collect();
    let qa: Vec<&[f64]> = q.iter().map(|v| v.as_ref()).collect();
    let v = block_mean(&pa, &pa) + block_mean(&qa, &qa) - 2.0 * block_mean(&pa, &qa);
    Ok(v.max(0.0))
}

/// The deflection-optimal detector in finite dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    /// Detector direction `f = (Σ₀ + λI)⁻¹(μ₁ − μ₀)`.
    pub direction: Vec<f64>,
    /// `⟨μ₁ − μ₀, f⟩`.
    pub max_deflection: f64,
}

/// Deflection `(fᵀ(μ₁ − μ₀))² / (fᵀΣ₀f)` of the linear statistic `fᵀy`.
pub fn deflection(f: &[f64], mu0: &[f64], mu1: &[f64], sigma0: MatRef<'_, f64>) -> f64 {
    let signal: f64 = f.iter().zip(mu1.iter().zip(mu0)).map(|(a, (m1, m0))| a * (m1 - m0)).sum();
    let sf = linalg::mat_vec(sigma0, f);
    let var: f64 = f.iter().zip(&sf).map(|(a, b)| a * b).sum();
    signal * signal / var
}

/// Optimal detector for mean `μ₀` vs `μ₁` under noise covariance `Σ₀`.
///
/// With `reg_lambda = 0`, `Σ₀` must be positive definite.
pub fn deflection_detector(mu0: &[f64], mu1: &[f64], sigma0: MatRef<'_, f64>, reg_lambda: f64) -> Result<Detector> {
    let n = linalg::check_square(sigma0, "sigma0")?;
    for m in [mu0, mu1] {
        if m.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.len() });
        }
    }
    if !(reg_lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("regularization must be ≥ 0, got {reg_lambda}")));
    }
    let mut s = sigma0.to_owned();
    linalg::add_diagonal(&mut s, reg_lambda);
    let (vals, _) = linalg::sym_eigen(s.as_ref())?;
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(vals[0] > 1e-12 * lmax) {
        return Err(Error::Singular("noise covariance".into()));
    }
    let diff: Vec<f64> = mu1.iter().zip(mu0).map(|(a, b)| a - b).collect();
    let rhs = Mat::from_fn(n, 1, |i, _| diff[i]);
    let sol = linalg::spd_solve(s.as_ref(), rhs.as_ref()).map_err(|_| Error::Singular("noise covariance".into()))?;
    let direction: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let max_deflection = direction.iter().zip(&diff).map(|(a, b)| a * b).sum();
    Ok(Detector { direction, max_deflection })
}

/// Kernel detector built from samples under both hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDetector {
    /// Detector `f = Σ γ_j K(·, z_j)` over the pooled points (null samples first).
    pub function: MeanEmbedding,
    /// `⟨m̂₁ − m̂₀, f⟩`.
    pub max_deflection: f64,
}

impl EmpiricalDetector {
    pub fn statistic(&self, y: &[f64]) -> Result<f64> {
        self.function.eval(y)
    }
}

/// Solves `(Σ̂₀ + λI) f = m̂₁ − m̂₀` in coefficient form over the pooled sample.
///
/// `Σ̂₀` is the centered empirical covariance operator of the null samples; its action on
/// `f = Σ γ_j K(·, z_j)` has coefficients `(1/N₀) C K_{X₀Z} γ` on the null points.
pub fn empirical_deflection_detector<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    spec: &KernelSpec,
    null_samples: &[P],
    alt_samples: &[Q],
    reg_lambda: f64,
) -> Result<EmpiricalDetector> {
    if null_samples.is_empty() || alt_samples.is_empty() {
        return Err(Error::EmptyInput("detector needs samples under both hypotheses"));
    }
    if !(reg_lambda > 0.0) {
        return Err(Error::InvalidParameter("empirical detector needs a positive regularization".into()));
    }
    let (n0, n1) = (null_samples.len(), alt_samples.len());
    let m = n0 + n1;
    let pooled: Vec<Vec<f64>> = null_samples
        .iter()
        .map(|p| p.as_ref().to_vec())
        .chain(alt_samples.iter().map(|p| p.as_ref().to_vec()))
        .collect();
    let kzz = gram_matrix(spec, &pooled)?;
    let mut sys = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        let mean = (0..n0).map(|i| kzz[(i, j)]).sum::<f64>() / n0 as f64;
        for i in 0..n0 {
            sys[(i, j)] = (kzz[(i, j)] - mean) / n0 as f64;
        }
    }
    linalg::add_diagonal(&mut sys, reg_lambda);
    let beta: Vec<f64> = (0..m).map(|i| if i < n0 { -1.0 / n0 as f64 } else { 1.0 / n1 as f64 }).collect();
    let rhs = Mat::from_fn(m, 1, |i, _| beta[i]);
    let sol = linalg::lu_solve(sys.as_ref(), rhs.as_ref())?;
    let gamma: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
    let kg = linalg::mat_vec(kzz.as_ref(), &gamma);
    let max_deflection = beta.iter().zip(&kg).map(|(a, b)| a * b).sum();
    Ok(EmpiricalDetector { function: MeanEmbedding::new(*spec, pooled, gamma)?, max_deflection })
}
