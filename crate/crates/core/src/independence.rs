//! HSIC, the spectral maximal-correlation estimate, recursive sparse HSIC and a
//! permutation-calibrated independence test.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::kernels::{center_gram, gram_matrix, Centering, KernelSpec};
use crate::linalg;
use crate::rng::{permutation, stream_rng};
use crate::{Error, Result};

fn check_pair(gram_x: MatRef<'_, f64>, gram_y: MatRef<'_, f64>) -> Result<usize> {
    let n = linalg::check_square(gram_x, "gram_x")?;
    let m = linalg::check_square(gram_y, "gram_y")?;
    if n != m {
        return Err(Error::DimensionMismatch { expected: n, found: m });
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("HSIC needs at least 2 samples, got {n}")));
    }
    Ok(n)
}

/// Biased HSIC estimate `(1/N²) Tr(C K_x C K_y)`.
pub fn hsic_batch(gram_x: MatRef<'_, f64>, gram_y: MatRef<'_, f64>) -> Result<f64> {
    let n = check_pair(gram_x, gram_y)?;
    let cx = center_gram(gram_x, Centering::Both)?;
    // Tr(K̃_x K_y) with both symmetric is the entrywise inner product
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += cx[(i, j)] * gram_y[(i, j)];
        }
    }
    Ok(acc / (n * n) as f64)
}

/// PSD square root after clipping negative eigenvalues.
fn psd_sqrt(m: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (vals, vecs) = linalg::sym_eigen(m)?;
    let n = vals.len();
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let scaled = Mat::from_fn(n, n, |i, k| vecs[(i, k)] * roots[k]);
    Ok(&scaled * vecs.transpose())
}

/// `(1/N) ‖K_x^{1/2} C K_y^{1/2}‖₂`, the largest singular value scaled by `1/N`.
pub fn max_correlation(gram_x: MatRef<'_, f64>, gram_y: MatRef<'_, f64>) -> Result<f64> {
    let n = check_pair(gram_x, gram_y)?;
    let sx = psd_sqrt(gram_x)?;
    let sy = psd_sqrt(gram_y)?;
    let csy = center_gram(sy.as_ref(), Centering::Left)?;
    let m = &sx * &csy;
    let mtm = m.transpose() * &m;
    let top = linalg::sym_eigenvalues(mtm.as_ref())?.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt() / n as f64)
}

/// Running state of the sparse recursive HSIC estimator.
///
/// Each retained atom `(x_α, y_α)` carries a count `π_α` of the samples it stands
/// for and the running kernel sums `v_x`, `v_y`. A new pair joins the dictionary when
/// its coherence `max_α |K_x(x, x_α) K_y(y, y_α)|` is at most `μ`; otherwise it is
/// merged into the most coherent atom (lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct HsicDictionary {
    spec_x: KernelSpec,
    spec_y: KernelSpec,
    mu: f64,
    atoms_x: Vec<Vec<f64>>,
    atoms_y: Vec<Vec<f64>>,
    indices: Vec<usize>,
    counts: Vec<u64>,
    v_x: Vec<f64>,
    v_y: Vec<f64>,
    norm_sq_joint: f64,
    norm_sq_mx: f64,
    norm_sq_my: f64,
    cross: f64,
    n: usize,
}

impl HsicDictionary {
    pub fn new(spec_x: KernelSpec, spec_y: KernelSpec, mu: f64) -> Result<Self> {
        if !spec_x.is_normalized() || !spec_y.is_normalized() {
            return Err(Error::NotNormalized);
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParameter(format!("coherence threshold must lie in (0, 1], got {mu}")));
        }
        Ok(Self {
            spec_x,
            spec_y,
            mu,
            atoms_x: Vec::new(),
            atoms_y: Vec::new(),
            indices: Vec::new(),
            counts: Vec::new(),
            v_x: Vec::new(),
            v_y: Vec::new(),
            norm_sq_joint: 0.0,
            norm_sq_mx: 0.0,
            norm_sq_my: 0.0,
            cross: 0.0,
            n: 0,
        })
    }

    /// Consumes the pair `(x, y)` and returns the updated estimate.
    pub fn update(&mut self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.spec_x.check_point(x)?;
        self.spec_y.check_point(y)?;
        let kappa_x = self.spec_x.eval_unchecked(x, x);
        let kappa_y = self.spec_y.eval_unchecked(y, y);
        let index = self.n;
        self.n += 1;
        if index == 0 {
            self.push_atom(x, y, index, vec![kappa_x], vec![kappa_y]);
            self.norm_sq_joint = kappa_x * kappa_y;
            self.norm_sq_mx = kappa_x;
            self.norm_sq_my = kappa_y;
            self.cross = kappa_x * kappa_y;
            return Ok(self.hsic());
        }
        let kx: Vec<f64> = self.atoms_x.iter().map(|a| self.spec_x.eval_unchecked(a, x)).collect();
        let ky: Vec<f64> = self.atoms_y.iter().map(|a| self.spec_y.eval_unchecked(a, y)).collect();

        let nf = self.n as f64;
        let shrink = (nf - 1.0) * (nf - 1.0) / (nf * nf);
        let inv_n2 = 1.0 / (nf * nf);
        let pi = |v: &[f64]| -> f64 { self.counts.iter().zip(v).map(|(&c, k)| c as f64 * k).sum() };
        let kxy: Vec<f64> = kx.iter().zip(&ky).map(|(a, b)| a * b).collect();
        let pi_kxy = pi(&kxy);
        let pi_kx = pi(&kx);
        let pi_ky = pi(&ky);
        self.norm_sq_joint = shrink * self.norm_sq_joint + 2.0 * inv_n2 * pi_kxy + kappa_x * kappa_y * inv_n2;
        self.norm_sq_mx = shrink * self.norm_sq_mx + 2.0 * inv_n2 * pi_kx + kappa_x * inv_n2;
        self.norm_sq_my = shrink * self.norm_sq_my + 2.0 * inv_n2 * pi_ky + kappa_y * inv_n2;

        // most coherent atom, lowest index on ties
        let (best, coherence) = kxy
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });

        for (v, k) in self.v_x.iter_mut().zip(&kx) {
            *v += k;
        }
        for (v, k) in self.v_y.iter_mut().zip(&ky) {
            *v += k;
        }
        if coherence <= self.mu {
            self.push_atom(x, y, index, vec![pi_kx + kappa_x], vec![pi_ky + kappa_y]);
        } else {
            self.counts[best] += 1;
        }
        let weighted: f64 = self
            .counts
            .iter()
            .zip(self.v_x.iter().zip(&self.v_y))
            .map(|(&c, (a, b))| c as f64 * a * b)
            .sum();
        self.cross = weighted / (nf * nf * nf);
        Ok(self.hsic())
    }

    fn push_atom(&mut self, x: &[f64], y: &[f64], index: usize, vx: Vec<f64>, vy: Vec<f64>) {
        self.atoms_x.push(x.to_vec());
        self.atoms_y.push(y.to_vec());
        self.indices.push(index);
        self.counts.push(1);
        self.v_x.extend(vx);
        self.v_y.extend(vy);
    }

    /// Current estimate `‖M‖² + ‖m_x‖²‖m_y‖² − 2c`.
    pub fn hsic(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.norm_sq_joint + self.norm_sq_mx * self.norm_sq_my - 2.0 * self.cross
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Stream positions of the retained atoms, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples_seen(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Runs the sparse estimator over a whole stream and returns the final state.
pub fn sparse_hsic<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    xs: &[P],
    ys: &[Q],
    mu: f64,
) -> Result<HsicDictionary> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let mut dict = HsicDictionary::new(*spec_x, *spec_y, mu)?;
    for (x, y) in xs.iter().zip(ys) {
        dict.update(x.as_ref(), y.as_ref())?;
    }
    Ok(dict)
}

/// Outcome of a permutation-calibrated test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

/// Upper `(1 − level)` order statistic of a permutation null.
///
/// With `P` replicas the threshold is `sorted[⌈(1 − level)·P⌉]` (0-based, clamped to
/// `P − 1`): index 95 of 100 at level 0.05, the minimum at level 1.
pub fn permutation_threshold(null: &mut [f64], level: f64) -> Result<f64> {
    if null.is_empty() {
        return Err(Error::EmptyInput("empty permutation null"));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1], got {level}")));
    }
    if null.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical { step: 0, reason: "NaN in permutation null".into() });
    }
    null.sort_by(f64::total_cmp);
    let p = null.len();
    let idx = (((1.0 - level) * p as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(null[idx.min(p - 1)])
}

/// HSIC independence test calibrated by permuting the `y` sample.
///
/// Replica `r` draws its permutation from stream `r + 1` of `seed`, so the
/// threshold does not depend on the thread count.
pub fn independence_perm_test<P: AsRef<[f64]> + Sync, Q: AsRef<[f64]> + Sync>(
    xs: &[P],
    ys: &[Q],
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    num_perms: usize,
    level: f64,
    seed: u64,
) -> Result<TestOutcome> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let n = xs.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("independence test needs at least 4 samples, got {n}")));
    }
    if num_perms < 20 {
        return Err(Error::InvalidParameter(format!("at least 20 permutations are required, got {num_perms}")));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1], got {level}")));
    }
    let gx = gram_matrix(spec_x, xs)?;
    let gy = gram_matrix(spec_y, ys)?;
    let cx = center_gram(gx.as_ref(), Centering::Both)?;
    let scale = 1.0 / (n * n) as f64;
    let stat_for = |perm: Option<&[usize]>| -> f64 {
        let mut acc = 0.0;
        for j in 0..n {
            let pj = perm.map_or(j, |p| p[j]);
            for i in 0..n {
                let pi = perm.map_or(i, |p| p[i]);
                acc += cx[(i, j)] * gy[(pi, pj)];
            }
        }
        acc * scale
    };
    let statistic = stat_for(None);
    let mut null: Vec<f64> = (0..num_perms)
        .into_par_iter()
        .map(|r| {
            let perm = permutation(n, &mut stream_rng(seed, r as u64 + 1));
            stat_for(Some(&perm))
        })
        .collect();
    let threshold = permutation_threshold(&mut null, level)?;
    Ok(TestOutcome { statistic, threshold, reject: statistic > threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_points(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn constant_feature_gives_zero() {
        let spec = KernelSpec::gaussian(1, 1.0).unwrap();
        let gx = gram_matrix(&spec, &scalar_points(&[0.1, 0.5, -1.0, 2.0])).unwrap();
        let ones = Mat::<f64>::ones(4, 4);
        assert_abs_diff_eq!(hsic_batch(gx.as_ref(), ones.as_ref()).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(max_correlation(gx.as_ref(), ones.as_ref()).unwrap(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn linear_kernel_matches_covariance_frobenius() {
        let pts = vec![vec![1.0, 0.0], vec![0.5, 2.0], vec![-1.0, 1.0], vec![3.0, -0.5], vec![0.0, 0.2]];
        let lin = KernelSpec::linear(2).unwrap();
        let g = gram_matrix(&lin, &pts).unwrap();
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..2).map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / n).collect();
        let mut cov = [[0.0; 2]; 2];
        for p in &pts {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
                }
            }
        }
        let frob: f64 = cov.iter().flatten().map(|v| v * v).sum();
        let h = hsic_batch(g.as_ref(), g.as_ref()).unwrap();
        assert!(h > 0.0);
        assert_abs_diff_eq!(h, frob, epsilon = 1e-12);
    }

    #[test]
    fn max_correlation_two_points() {
        let lin = KernelSpec::linear(1).unwrap();
        let g = gram_matrix(&lin, &scalar_points(&[1.0, 3.0])).unwrap();
        // K^{1/2} C K^{1/2} for the rank-one K = vvᵀ, v = (1, 3): eigenvalue (vᵀCv)·‖v‖²/‖v‖² = vᵀCv
        let v = [1.0, 3.0];
        let mean = 2.0;
        let vcv: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
        assert_abs_diff_eq!(max_correlation(g.as_ref(), g.as_ref()).unwrap(), vcv / 2.0, epsilon = 1e-10);
        assert!(hsic_batch(g.as_ref(), Mat::<f64>::ones(3, 3).as_ref()).is_err());
        let one = Mat::<f64>::ones(1, 1);
        assert!(hsic_batch(one.as_ref(), one.as_ref()).is_err());
    }

    #[test]
    fn sparse_hsic_first_step_and_errors() {
        let g = KernelSpec::gaussian(1, 1.0).unwrap();
        let mut d = HsicDictionary::new(g, g, 0.9).unwrap();
        assert_eq!(d.update(&[0.3], &[1.0]).unwrap(), 0.0);
        assert_eq!(d.counts(), &[1]);
        assert!(matches!(
            HsicDictionary::new(KernelSpec::linear(1).unwrap(), g, 0.9),
            Err(Error::NotNormalized)
        ));
        assert!(HsicDictionary::new(g, g, 0.0).is_err());
        assert!(HsicDictionary::new(g, g, 1.1).is_err());
    }

    #[test]
    fn sparse_hsic_mu_one_matches_batch() {
        let g = KernelSpec::gaussian(1, 0.8).unwrap();
        let xs = scalar_points(&[0.1, -0.7, 1.3, 0.4, 2.2, -1.5, 0.0, 0.9]);
        let ys = scalar_points(&[1.0, 0.2, -0.3, 0.8, -1.1, 0.5, 0.7, -0.2]);
        let mut d = HsicDictionary::new(g, g, 1.0).unwrap();
        for n in 0..xs.len() {
            let h = d.update(&xs[n], &ys[n]).unwrap();
            if n >= 1 {
                let gx = gram_matrix(&g, &xs[..=n]).unwrap();
                let gy = gram_matrix(&g, &ys[..=n]).unwrap();
                assert_abs_diff_eq!(h, hsic_batch(gx.as_ref(), gy.as_ref()).unwrap(), epsilon = 1e-12);
            }
        }
        assert_eq!(d.len(), xs.len());
    }

    #[test]
    fn duplicate_pairs_merge() {
        let g = KernelSpec::gaussian(1, 1.0).unwrap();
        let mut d = HsicDictionary::new(g, g, 0.5).unwrap();
        for _ in 0..5 {
            d.update(&[1.0], &[2.0]).unwrap();
        }
        assert_eq!(d.len(), 1);
        assert_eq!(d.counts(), &[5]);
        assert_abs_diff_eq!(d.hsic(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn quantile_convention() {
        let mut v: Vec<f64> = (0..100).rev().map(|i| i as f64).collect();
        assert_eq!(permutation_threshold(&mut v, 0.05).unwrap(), 95.0);
        assert_eq!(permutation_threshold(&mut v, 1.0).unwrap(), 0.0);
        assert!(permutation_threshold(&mut v, 0.0).is_err());
        let mut w = vec![3.0, 1.0, 2.0];
        assert_eq!(permutation_threshold(&mut w, 1e-6).unwrap(), 3.0);
    }

    #[test]
    fn perm_test_detects_identity_dependence() {
        let g = KernelSpec::gaussian(1, 1.0).unwrap();
        let xs: Vec<Vec<f64>> = (0..256).map(|i| vec![((i * 37) % 256) as f64 / 64.0 - 2.0]).collect();
        let out = independence_perm_test(&xs, &xs, &g, &g, 100, 0.05, 11).unwrap();
        assert!(out.reject);
        assert!(independence_perm_test(&xs[..3], &xs[..3], &g, &g, 100, 0.05, 11).is_err());
        assert!(independence_perm_test(&xs, &xs, &g, &g, 10, 0.05, 11).is_err());
        let low = independence_perm_test(&xs, &xs, &g, &g, 20, 1.0, 11).unwrap();
        assert!(low.threshold <= out.threshold);
    }
}
