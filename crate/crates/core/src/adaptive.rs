//! Online kernel adaptive filters: kRLS with approximate-linear-dependence
//! sparsification and normalized kLMS with the coherence criterion.

use faer::{Mat, MatRef};

use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg;
use crate::{Error, Result};

/// Smallest ALD residual used in the `1/e` updates.
pub const ALD_FLOOR: f64 = 1e-12;

/// Common interface of the online filters.
pub trait OnlineFilter {
    /// `ŷ = Σ α_i K(x, d_i)` over the current dictionary.
    fn predict(&self, x: &[f64]) -> Result<f64>;
    /// Processes `(x, y)`; returns the prediction made before the update.
    fn update(&mut self, x: &[f64], y: f64) -> Result<f64>;
    fn dictionary_len(&self) -> usize;
}

fn kernel_row(spec: &KernelSpec, dict: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    dict.iter().map(|d| spec.eval_unchecked(d, x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn first_sample(spec: &KernelSpec, x: &[f64], y: f64) -> Result<f64> {
    spec.check_point(x)?;
    let kxx = spec.eval_unchecked(x, x);
    if !(kxx > 0.0) {
        return Err(Error::InvalidParameter(format!("first sample has K(x, x) = {kxx}; cannot initialize")));
    }
    Ok(y / kxx)
}

/// Result of one kRLS step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrlsStep {
    pub prediction: f64,
    pub ald_error: f64,
    pub added: bool,
}

/// Kernel recursive least squares with an ALD-sparsified dictionary.
///
/// Keeps the inverse dictionary Gram `K̂⁻¹`, `P = (AᵀA)⁻¹` for the implicit
/// projection-coefficient matrix `A`, and the expansion coefficients `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrlsState {
    spec: KernelSpec,
    ald_threshold: f64,
    dict: Vec<Vec<f64>>,
    k_inv: Mat<f64>,
    p: Mat<f64>,
    alpha: Vec<f64>,
    n: usize,
}

impl KrlsState {
    /// Starts from the first sample: `D = {x₁}`, `α = y₁ / K(x₁, x₁)`.
    pub fn new(spec: KernelSpec, ald_threshold: f64, x1: &[f64], y1: f64) -> Result<Self> {
        if !(ald_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!("ALD threshold must be ≥ 0, got {ald_threshold}")));
        }
        let a1 = first_sample(&spec, x1, y1)?;
        let kxx = spec.eval_unchecked(x1, x1);
        Ok(Self {
            spec,
            ald_threshold,
            dict: vec![x1.to_vec()],
            k_inv: Mat::from_fn(1, 1, |_, _| 1.0 / kxx),
            p: Mat::identity(1, 1),
            alpha: vec![a1],
            n: 1,
        })
    }

    pub fn step(&mut self, x: &[f64], y: f64) -> Result<KrlsStep> {
        self.spec.check_point(x)?;
        let k = kernel_row(&self.spec, &self.dict, x);
        let prediction = dot(&k, &self.alpha);
        let err = y - prediction;
        let a = linalg::mat_vec(self.k_inv.as_ref(), &k);
        let ald_error = self.spec.eval_unchecked(x, x) - dot(&k, &a);
        self.n += 1;
        let d = self.dict.len();
        let added = ald_error > self.ald_threshold;
        if !added {
            let pa = linalg::mat_vec(self.p.as_ref(), &a);
            let denom = 1.0 + dot(&a, &pa);
            let gain = linalg::mat_vec(self.k_inv.as_ref(), &pa);
            for (al, g) in self.alpha.iter_mut().zip(&gain) {
                *al += g / denom * err;
            }
            let p_new = Mat::from_fn(d, d, |i, j| self.p[(i, j)] - pa[i] * pa[j] / denom);
            self.p = p_new;
        } else {
            let mut e = ald_error;
            if e < ALD_FLOOR {
                log::warn!("kRLS step {}: ALD residual {e:.3e} floored to {ALD_FLOOR:e}", self.n);
                e = ALD_FLOOR;
            }
            let old = &self.k_inv;
            let k_inv = Mat::from_fn(d + 1, d + 1, |i, j| match (i < d, j < d) {
                (true, true) => old[(i, j)] + a[i] * a[j] / e,
                (true, false) => -a[i] / e,
                (false, true) => -a[j] / e,
                (false, false) => 1.0 / e,
            });
            let p = Mat::from_fn(d + 1, d + 1, |i, j| match (i < d, j < d) {
                (true, true) => self.p[(i, j)],
                (false, false) => 1.0,
                _ => 0.0,
            });
            for (al, ai) in self.alpha.iter_mut().zip(&a) {
                *al -= ai * err / e;
            }
            self.alpha.push(err / e);
            self.k_inv = k_inv;
            self.p = p;
            self.dict.push(x.to_vec());
            debug_assert!(self.inverse_residual() < 1e-6 * (1.0 + self.k_inv.norm_max()));
        }
        if self.alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { step: self.n, reason: "non-finite kRLS coefficients".into() });
        }
        Ok(KrlsStep { prediction, ald_error, added })
    }

    /// `max |K̂⁻¹ K̂ − I|` over the current dictionary.
    pub fn inverse_residual(&self) -> f64 {
        let d = self.dict.len();
        let g = gram_matrix(&self.spec, &self.dict).expect("dictionary points were validated");
        (&self.k_inv * &g - Mat::<f64>::identity(d, d)).norm_max()
    }

    pub fn dictionary(&self) -> &[Vec<f64>] {
        &self.dict
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn k_inv(&self) -> MatRef<'_, f64> {
        self.k_inv.as_ref()
    }

    pub fn p(&self) -> MatRef<'_, f64> {
        self.p.as_ref()
    }

    pub fn samples_seen(&self) -> usize {
        self.n
    }
}

impl OnlineFilter for KrlsState {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.spec.check_point(x)?;
        Ok(dot(&kernel_row(&self.spec, &self.dict, x), &self.alpha))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.step(x, y)?.prediction)
    }

    fn dictionary_len(&self) -> usize {
        self.dict.len()
    }
}

/// Result of one kLMS step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlmsStep {
    pub prediction: f64,
    pub coherence: f64,
    pub added: bool,
}

/// Normalized kernel LMS with a coherence-sparsified dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct KlmsState {
    spec: KernelSpec,
    coherence_threshold: f64,
    step_size: f64,
    stabilizer: f64,
    dict: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    n: usize,
}

impl KlmsState {
    pub fn new(
        spec: KernelSpec,
        coherence_threshold: f64,
        step_size: f64,
        stabilizer: f64,
        x1: &[f64],
        y1: f64,
    ) -> Result<Self> {
        if !(coherence_threshold > 0.0 && coherence_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coherence threshold must lie in (0, 1], got {coherence_threshold}"
            )));
        }
        if !(step_size > 0.0) || !(stabilizer > 0.0) {
            return Err(Error::InvalidParameter("step size and stabilizer must be positive".into()));
        }
        let a1 = first_sample(&spec, x1, y1)?;
        Ok(Self {
            spec,
            coherence_threshold,
            step_size,
            stabilizer,
            dict: vec![x1.to_vec()],
            alpha: vec![a1],
            n: 1,
        })
    }

    pub fn step(&mut self, x: &[f64], y: f64) -> Result<KlmsStep> {
        self.spec.check_point(x)?;
        let mut k = kernel_row(&self.spec, &self.dict, x);
        let prediction = dot(&k, &self.alpha);
        let err = y - prediction;
        let coherence = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.n += 1;
        let added = coherence < self.coherence_threshold;
        if added {
            k.push(self.spec.eval_unchecked(x, x));
            self.alpha.push(0.0);
            self.dict.push(x.to_vec());
        }
        let gain = self.step_size * err / (self.stabilizer + dot(&k, &k));
        for (al, ki) in self.alpha.iter_mut().zip(&k) {
            *al += gain * ki;
        }
        if self.alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { step: self.n, reason: "non-finite kLMS coefficients".into() });
        }
        Ok(KlmsStep { prediction, coherence, added })
    }

    pub fn dictionary(&self) -> &[Vec<f64>] {
        &self.dict
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn samples_seen(&self) -> usize {
        self.n
    }
}

impl OnlineFilter for KlmsState {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.spec.check_point(x)?;
        Ok(dot(&kernel_row(&self.spec, &self.dict, x), &self.alpha))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.step(x, y)?.prediction)
    }

    fn dictionary_len(&self) -> usize {
        self.dict.len()
    }
}

/// Offline kernel ridge coefficients `α₀ = (K + λI)⁻¹ y`.
pub fn batch_ridge(gram: MatRef<'_, f64>, targets: &[f64], reg_lambda: f64) -> Result<Vec<f64>> {
    let n = linalg::check_square(gram, "gram")?;
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: targets.len() });
    }
    if !(reg_lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge parameter must be ≥ 0, got {reg_lambda}")));
    }
    let mut m = gram.to_owned();
    linalg::add_diagonal(&mut m, reg_lambda);
    let rhs = Mat::from_fn(n, 1, |i, _| targets[i]);
    let sol = linalg::spd_solve(m.as_ref(), rhs.as_ref()).or_else(|_| linalg::lu_solve(m.as_ref(), rhs.as_ref()))?;
    Ok((0..n).map(|i| sol[(i, 0)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_atom_prediction() {
        let g = KernelSpec::gaussian(2, 0.3).unwrap();
        let f = KlmsState::new(g, 0.5, 0.1, 0.03, &[0.2, 0.4], 1.0).unwrap();
        assert_abs_diff_eq!(f.predict(&[0.2, 0.4]).unwrap(), 1.0, epsilon = 1e-15);
        let r = KrlsState::new(g, 0.1, &[0.2, 0.4], 1.0).unwrap();
        assert_abs_diff_eq!(r.predict(&[0.2, 0.4]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn always_accept_keeps_one_atom() {
        let g = KernelSpec::gaussian(1, 0.5).unwrap();
        let mut r = KrlsState::new(g, 1.0, &[0.0], 0.5).unwrap();
        for i in 0..50 {
            r.step(&[i as f64 * 0.1], (i as f64).sin()).unwrap();
        }
        assert_eq!(r.dictionary_len(), 1);
    }

    #[test]
    fn linear_fit_predicts_exactly() {
        let lin = KernelSpec::linear(1).unwrap();
        let mut r = KrlsState::new(lin, 1e-8, &[1.0], 2.0).unwrap();
        for i in 2..=10 {
            r.step(&[i as f64], 2.0 * i as f64).unwrap();
        }
        assert_abs_diff_eq!(r.predict(&[3.0]).unwrap(), 6.0, epsilon = 1e-5);
        assert!(r.inverse_residual() < 1e-6);
    }

    #[test]
    fn zero_innovation_leaves_klms_unchanged() {
        let g = KernelSpec::gaussian(1, 0.5).unwrap();
        let mut f = KlmsState::new(g, 0.5, 0.1, 0.03, &[0.0], 1.0).unwrap();
        let before = f.alpha().to_vec();
        let y = f.predict(&[0.1]).unwrap();
        let s = f.step(&[0.1], y).unwrap();
        assert!(!s.added);
        assert_eq!(f.alpha(), &before[..]);
    }

    #[test]
    fn invalid_initialization() {
        let lin = KernelSpec::linear(1).unwrap();
        assert!(KrlsState::new(lin, 0.1, &[0.0], 1.0).is_err());
        let g = KernelSpec::gaussian(1, 0.5).unwrap();
        assert!(KlmsState::new(g, 0.0, 0.1, 0.03, &[0.0], 1.0).is_err());
        assert!(KlmsState::new(g, 0.5, 0.0, 0.03, &[0.0], 1.0).is_err());
    }

    #[test]
    fn ridge_interpolates_as_lambda_vanishes() {
        let g = KernelSpec::gaussian(1, 0.5).unwrap();
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.7]).collect();
        let y = [0.3, -1.0, 0.5, 2.0, 0.0, 1.0];
        let k = gram_matrix(&g, &xs).unwrap();
        let a = batch_ridge(k.as_ref(), &y, 1e-10).unwrap();
        let fit = linalg::mat_vec(k.as_ref(), &a);
        for (f, t) in fit.iter().zip(&y) {
            assert_abs_diff_eq!(f, t, epsilon = 1e-6);
        }
    }
}
