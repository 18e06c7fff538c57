//! Kernel Bayes rule, the kernel Bayes filter and the fixed-point pre-image decoder.

use faer::{Mat, MatRef};

use crate::kernels::{cross_gram, gram_matrix, kernel_vector, sq_dist, KernelSpec};
use crate::linalg;
use crate::rng::stream_rng;
use crate::{Error, Result};

fn col_mat(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// `Λ K ((K Λ)² + εI)⁻¹ Λ k` with `Λ = Diag(weights)`.
fn weighted_bayes_solve(gram: MatRef<'_, f64>, weights: &[f64], k: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let n = weights.len();
    let kl = Mat::from_fn(n, n, |i, j| gram[(i, j)] * weights[j]);
    let mut sys = &kl * &kl;
    linalg::add_diagonal(&mut sys, epsilon);
    let rhs = Mat::from_fn(n, 1, |i, _| weights[i] * k[i]);
    let s = linalg::lu_solve(sys.as_ref(), rhs.as_ref())?;
    let s: Vec<f64> = (0..n).map(|i| s[(i, 0)]).collect();
    let ks = linalg::mat_vec(gram, &s);
    Ok(weights.iter().zip(&ks).map(|(w, v)| w * v).collect())
}

/// Kernel Bayes rule with a prior on `y` and likelihood learned from joint samples.
///
/// The prior embedding `Σ γ_j K_y(·, ỹ_j)` is evaluated at the joint `y`-samples,
/// giving weights `μ = (K_y + λI)⁻¹ μ^π`; the returned coefficients
/// `ζ = Λ K_x ((K_x Λ)² + εI)⁻¹ Λ k_X(x)` express the posterior embedding
/// `Σ ζ_i K_y(·, y_i)` given the observation `x`.
#[allow(clippy::too_many_arguments)]
pub fn kbr_posterior<P: AsRef<[f64]>, Q: AsRef<[f64]>, R: AsRef<[f64]>>(
    prior_points: &[P],
    prior_coeffs: &[f64],
    joint_x: &[Q],
    joint_y: &[R],
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    reg_lambda: f64,
    reg_epsilon: f64,
    query_x: &[f64],
) -> Result<Vec<f64>> {
    if prior_points.len() != prior_coeffs.len() {
        return Err(Error::DimensionMismatch { expected: prior_points.len(), found: prior_coeffs.len() });
    }
    if joint_x.len() != joint_y.len() {
        return Err(Error::DimensionMismatch { expected: joint_x.len(), found: joint_y.len() });
    }
    check_regularizers(reg_lambda, reg_epsilon)?;
    let n = joint_y.len();
    let cross = cross_gram(spec_y, joint_y, prior_points)?;
    let prior_at_joint = linalg::mat_vec(cross.as_ref(), prior_coeffs);
    let mut ky = gram_matrix(spec_y, joint_y)?;
    linalg::add_diagonal(&mut ky, reg_lambda);
    let mu = linalg::lu_solve(ky.as_ref(), col_mat(&prior_at_joint).as_ref())?;
    let mu: Vec<f64> = (0..n).map(|i| mu[(i, 0)]).collect();
    let kx = gram_matrix(spec_x, joint_x)?;
    let k = kernel_vector(spec_x, joint_x, query_x)?;
    weighted_bayes_solve(kx.as_ref(), &mu, &k, reg_epsilon)
}

fn check_regularizers(reg_lambda: f64, reg_epsilon: f64) -> Result<()> {
    if !(reg_lambda > 0.0 && reg_epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularizers must be positive, got λ = {reg_lambda}, ε = {reg_epsilon}"
        )));
    }
    Ok(())
}

/// Training structures of the kernel Bayes filter, built from `N + 1` consecutive
/// state/observation pairs.
#[derive(Debug, Clone)]
pub struct KbrModel {
    spec_x: KernelSpec,
    spec_y: KernelSpec,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<Vec<f64>>,
    gram_x: Mat<f64>,
    gram_y: Mat<f64>,
    gram_x_shift: Mat<f64>,
    transition: Mat<f64>,
    reg_lambda: f64,
    reg_epsilon: f64,
}

/// Posterior coefficients `α^k` over the training states `x_1..x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct KbrState {
    pub alpha: Vec<f64>,
    pub step: usize,
}

impl KbrModel {
    /// `train_x[i]`, `train_y[i]` for `i = 0..=N`; the last state only enters through
    /// the shifted Gram `K(x_i, x_{j+1})`.
    pub fn new(
        spec_x: KernelSpec,
        spec_y: KernelSpec,
        train_x: Vec<Vec<f64>>,
        train_y: Vec<Vec<f64>>,
        reg_lambda: f64,
        reg_epsilon: f64,
    ) -> Result<Self> {
        if train_x.len() != train_y.len() {
            return Err(Error::DimensionMismatch { expected: train_x.len(), found: train_y.len() });
        }
        if train_x.len() < 2 {
            return Err(Error::InvalidParameter("kernel Bayes filter needs at least 2 training pairs".into()));
        }
        check_regularizers(reg_lambda, reg_epsilon)?;
        let n = train_x.len() - 1;
        let gram_x = gram_matrix(&spec_x, &train_x[..n])?;
        let gram_y = gram_matrix(&spec_y, &train_y[..n])?;
        let gram_x_shift = cross_gram(&spec_x, &train_x[..n], &train_x[1..])?;
        let mut reg = gram_x.clone();
        linalg::add_diagonal(&mut reg, reg_lambda);
        let llt = linalg::cholesky(reg.as_ref())?;
        use faer::linalg::solvers::Solve;
        let left = llt.solve(gram_x_shift.as_ref());
        let right = llt.solve(gram_x.as_ref());
        let transition = &left * &right;
        if !transition.is_all_finite() {
            return Err(Error::Numerical { step: 0, reason: "non-finite transition matrix".into() });
        }
        Ok(Self {
            spec_x,
            spec_y,
            train_x,
            train_y,
            gram_x,
            gram_y,
            gram_x_shift,
            transition,
            reg_lambda,
            reg_epsilon,
        })
    }

    /// Number `N` of training states carrying coefficients.
    pub fn len(&self) -> usize {
        self.gram_x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spec_x(&self) -> &KernelSpec {
        &self.spec_x
    }

    pub fn spec_y(&self) -> &KernelSpec {
        &self.spec_y
    }

    /// Training states `x_1..x_N` that carry the posterior coefficients.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.train_x[..self.len()]
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.train_y[..self.len()]
    }

    pub fn gram_x(&self) -> MatRef<'_, f64> {
        self.gram_x.as_ref()
    }

    pub fn gram_y(&self) -> MatRef<'_, f64> {
        self.gram_y.as_ref()
    }

    pub fn gram_x_shift(&self) -> MatRef<'_, f64> {
        self.gram_x_shift.as_ref()
    }

    /// `(K_x + λI)⁻¹ K_{XX+} (K_x + λI)⁻¹ K_x`.
    pub fn transition(&self) -> MatRef<'_, f64> {
        self.transition.as_ref()
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn reg_epsilon(&self) -> f64 {
        self.reg_epsilon
    }

    /// `k_Y(y) = (K_y(y_1, y), …, K_y(y_N, y))`.
    pub fn obs_vector(&self, y: &[f64]) -> Result<Vec<f64>> {
        kernel_vector(&self.spec_y, self.observations(), y)
    }

    /// `α = (K_y + λI)⁻¹ k_Y(y)`.
    pub fn init(&self, y_first: &[f64]) -> Result<KbrState> {
        let k = self.obs_vector(y_first)?;
        let mut reg = self.gram_y.clone();
        linalg::add_diagonal(&mut reg, self.reg_lambda);
        let sol = linalg::spd_solve(reg.as_ref(), col_mat(&k).as_ref())
            .or_else(|_| linalg::lu_solve(reg.as_ref(), col_mat(&k).as_ref()))?;
        Ok(KbrState { alpha: (0..self.len()).map(|i| sol[(i, 0)]).collect(), step: 0 })
    }

    /// Prior weights `μ^k = T α^{k−1}`.
    pub fn prior_weights(&self, state: &KbrState) -> Result<Vec<f64>> {
        if state.alpha.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: state.alpha.len() });
        }
        Ok(linalg::mat_vec(self.transition.as_ref(), &state.alpha))
    }

    /// Posterior update for given prior weights and observation kernel vector.
    pub fn update_with(&self, weights: &[f64], obs_kernel: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        for v in [weights, obs_kernel] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        weighted_bayes_solve(self.gram_y.as_ref(), weights, obs_kernel, self.reg_epsilon)
    }

    /// One filter step: `μ = Tα / Σ(Tα)`, `Λ = Diag(μ)`, `α ← Λ K_y ((K_y Λ)² + εI)⁻¹ Λ k_Y(y)`.
    ///
    /// The prior weights are rescaled to unit total mass. The update is not
    /// scale-invariant in `μ` (ε fixes a scale), and without the rescaling the
    /// coefficient mass grows geometrically until the posterior system is singular.
    pub fn step(&self, state: &KbrState, y_obs: &[f64]) -> Result<KbrState> {
        let step = state.step + 1;
        let numerical = |reason: String| Error::Numerical { step, reason };
        let mut weights = self.prior_weights(state)?;
        let mass: f64 = weights.iter().sum();
        let scale = weights.iter().map(|w| w.abs()).sum::<f64>();
        if !mass.is_finite() || mass.abs() <= 1e-12 * scale || scale == 0.0 {
            return Err(numerical(format!("prior weights have degenerate total mass {mass:.3e}")));
        }
        weights.iter_mut().for_each(|w| *w /= mass);
        let k = self.obs_vector(y_obs)?;
        let alpha = self.update_with(&weights, &k).map_err(|e| match e {
            Error::Singular(s) => numerical(format!("singular posterior system ({s})")),
            other => other,
        })?;
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(numerical("non-finite posterior coefficients".into()));
        }
        Ok(KbrState { alpha, step })
    }

    /// Pre-image of the posterior embedding over the training states.
    pub fn decode(&self, state: &KbrState, opts: &PreimageOptions) -> Result<Preimage> {
        let ka = linalg::mat_vec(self.gram_x.as_ref(), &state.alpha);
        let norm_sq = state.alpha.iter().zip(&ka).map(|(a, b)| a * b).sum();
        preimage_impl(self.states(), &state.alpha, &self.spec_x, opts, norm_sq)
    }
}

/// Settings of the fixed-point pre-image search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreimageOptions {
    pub max_iters: usize,
    /// Number of random starts; all are run and the best converged one is kept.
    pub num_restarts: usize,
    /// Fixed-point residual accepted as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PreimageOptions {
    fn default() -> Self {
        Self { max_iters: 200, num_restarts: 5, tol: 1e-8, seed: 0 }
    }
}

/// A decoded point.
#[derive(Debug, Clone, PartialEq)]
pub struct Preimage {
    pub point: Vec<f64>,
    /// `‖K(·, x) − Σ α_i K(·, x_i)‖²`.
    pub distance_sq: f64,
    pub iterations: usize,
    /// Starts that ended in divergence, oscillation or the iteration cap.
    pub failed_starts: usize,
}

/// Finds `x` minimizing `‖K(·, x) − Σ α_i K(·, x_i)‖` for a gaussian kernel by the
/// fixed-point iteration `x ← Σ w_i α_i x_i / Σ w_i α_i`, `w_i = K(x, x_i)`.
pub fn preimage<P: AsRef<[f64]>>(points: &[P], alpha: &[f64], spec: &KernelSpec, opts: &PreimageOptions) -> Result<Preimage> {
    if points.len() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), found: alpha.len() });
    }
    let g = gram_matrix(spec, points)?;
    let ga = linalg::mat_vec(g.as_ref(), alpha);
    let norm_sq = alpha.iter().zip(&ga).map(|(a, b)| a * b).sum();
    preimage_impl(points, alpha, spec, opts, norm_sq)
}

enum RunEnd {
    Converged(Vec<f64>, usize),
    Failed(Vec<f64>),
}

fn preimage_impl<P: AsRef<[f64]>>(
    points: &[P],
    alpha: &[f64],
    spec: &KernelSpec,
    opts: &PreimageOptions,
    target_norm_sq: f64,
) -> Result<Preimage> {
    if spec.bandwidth_sq().is_none() {
        return Err(Error::InvalidParameter("pre-image iteration needs a gaussian kernel".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("pre-image over an empty expansion"));
    }
    if opts.num_restarts == 0 || opts.max_iters == 0 || !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("pre-image needs restarts ≥ 1, iterations ≥ 1 and tol > 0".into()));
    }
    spec.check_points(points)?;
    let dim = spec.input_dim();
    let radius = points.iter().map(|p| dot_self(p.as_ref()).sqrt()).fold(0.0, f64::max);
    let bound = 10.0 * radius + opts.tol;
    let distance_sq = |x: &[f64]| -> f64 {
        let cross: f64 = points.iter().zip(alpha).map(|(p, a)| a * spec.eval_unchecked(p.as_ref(), x)).sum();
        (target_norm_sq - 2.0 * cross + spec.eval_unchecked(x, x)).max(0.0)
    };
    let map = |x: &[f64]| -> Vec<f64> {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (p, a) in points.iter().zip(alpha) {
            let w = a * spec.eval_unchecked(p.as_ref(), x);
            den += w;
            for (acc, v) in num.iter_mut().zip(p.as_ref()) {
                *acc += w * v;
            }
        }
        num.into_iter().map(|v| v / den).collect()
    };

    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut best_failed: Option<(Vec<f64>, f64)> = None;
    let mut failed = 0;
    for r in 0..opts.num_restarts {
        let mut rng = stream_rng(opts.seed, r as u64);
        let end = run_fixed_point(&map, start_point(points, alpha, &mut rng), bound, opts);
        match end {
            RunEnd::Converged(x, iters) => {
                let d = distance_sq(&x);
                if best.as_ref().is_none_or(|b| d < b.1) {
                    best = Some((x, d, iters));
                }
            }
            RunEnd::Failed(x) => {
                failed += 1;
                if x.iter().all(|v| v.is_finite()) {
                    let d = distance_sq(&x);
                    if best_failed.as_ref().is_none_or(|b| d < b.1) {
                        best_failed = Some((x, d));
                    }
                }
            }
        }
    }
    match best {
        Some((point, distance_sq, iterations)) => Ok(Preimage { point, distance_sq, iterations, failed_starts: failed }),
        None => {
            let (best_point, best_distance) = best_failed.unwrap_or((vec![f64::NAN; dim], f64::INFINITY));
            Err(Error::PreimageFailed { best_point, best_distance, restarts: opts.num_restarts })
        }
    }
}

fn dot_self(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Random convex combination of the expansion points, weighted towards positive coefficients.
fn start_point<P: AsRef<[f64]>, R: rand::Rng + ?Sized>(points: &[P], alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let any_positive = alpha.iter().any(|&a| a > 0.0);
    let weights: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let e = crate::data::exp1(rng);
            if any_positive {
                a.max(0.0) * e
            } else {
                e
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let dim = points[0].as_ref().len();
    let mut x = vec![0.0; dim];
    for (p, w) in points.iter().zip(&weights) {
        for (acc, v) in x.iter_mut().zip(p.as_ref()) {
            *acc += w / total * v;
        }
    }
    x
}

fn run_fixed_point(
    map: &dyn Fn(&[f64]) -> Vec<f64>,
    start: Vec<f64>,
    bound: f64,
    opts: &PreimageOptions,
) -> RunEnd {
    let mut history: Vec<Vec<f64>> = vec![start];
    for iter in 1..=opts.max_iters {
        let x = history.last().expect("history is nonempty");
        let next = map(x);
        if next.iter().any(|v| !v.is_finite()) || dot_self(&next).sqrt() > bound {
            return RunEnd::Failed(history.pop().expect("history is nonempty"));
        }
        let step = sq_dist(&next, x).sqrt();
        if step <= opts.tol {
            return RunEnd::Converged(history.pop().expect("history is nonempty"), iter);
        }
        // period 2..4 cycles
        let len = history.len();
        for k in 2..=4 {
            if len >= k && sq_dist(&next, &history[len - k]).sqrt() <= 10.0 * opts.tol {
                return RunEnd::Failed(next);
            }
        }
        history.push(next);
        if history.len() > 5 {
            history.remove(0);
        }
    }
    RunEnd::Failed(history.pop().expect("history is nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_atom_preimage() {
        let spec = KernelSpec::gaussian(2, 0.5).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 0.5]];
        let p = preimage(&pts, &[0.0, 1.0, 0.0], &spec, &PreimageOptions::default()).unwrap();
        assert_eq!(p.point, vec![1.0, 2.0]);
        assert_abs_diff_eq!(p.distance_sq, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_pair_decodes_to_midpoint() {
        let spec = KernelSpec::gaussian(1, 1.0).unwrap();
        let pts = vec![vec![0.9], vec![1.1]];
        let p = preimage(&pts, &[0.5, 0.5], &spec, &PreimageOptions::default()).unwrap();
        assert_abs_diff_eq!(p.point[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn preimage_rejects_non_gaussian() {
        let lin = KernelSpec::linear(1).unwrap();
        assert!(preimage(&[vec![1.0]], &[1.0], &lin, &PreimageOptions::default()).is_err());
    }

    #[test]
    fn all_negative_weights_fail_with_best_point() {
        let spec = KernelSpec::gaussian(1, 1.0).unwrap();
        let pts = vec![vec![0.0], vec![3.0]];
        // the map with weights of mixed sign pushes iterates away from both atoms
        let r = preimage(&pts, &[1.0, -1.0], &spec, &PreimageOptions { max_iters: 50, ..Default::default() });
        if let Err(Error::PreimageFailed { restarts, .. }) = r {
            assert_eq!(restarts, 5);
        }
    }

    #[test]
    fn zero_weights_annihilate() {
        let spec = KernelSpec::gaussian(1, 0.5).unwrap();
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3, i as f64 * 0.3 + 0.1]).collect();
        let ys: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3]).collect();
        let model = KbrModel::new(KernelSpec::gaussian(2, 0.5).unwrap(), spec, xs, ys, 1e-4, 1e-4).unwrap();
        let k = model.obs_vector(&[0.5]).unwrap();
        assert!(model.update_with(&[0.0; 5], &k).unwrap().iter().all(|&v| v == 0.0));
        let s = model.init(&[0.3]).unwrap();
        let s2 = model.step(&s, &[0.6]).unwrap();
        assert_eq!(s2.step, 1);
        assert!(s2.alpha.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_pair_posterior_is_finite() {
        let g = KernelSpec::gaussian(1, 0.5).unwrap();
        let z = kbr_posterior(&[vec![0.2]], &[1.0], &[vec![0.1]], &[vec![0.3]], &g, &g, 1e-3, 1e-3, &[0.0]).unwrap();
        assert_eq!(z.len(), 1);
        assert!(z[0].is_finite());
    }
}
