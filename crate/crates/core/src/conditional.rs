//! Hilbert-Schmidt norms of empirical conditional covariance operators and a
//! permutation test of conditional independence.
//!
//! With `K̃_u = C K_u C` and `R_u = K̃_u + NλI`, the raw statistic is
//! `Tr(K̃_x K̃_y − 2 K̃_y R_z⁻¹ K̃_z K̃_x + K̃_y K̃_z R_z⁻¹ K̃_x R_z⁻¹ K̃_z) / N²` and the
//! normalized one replaces each `K̃_u` by `N_u = K̃_u R_u⁻¹`. Because `K̃_z` and
//! `R_z` commute, both collapse to `Tr(A W B W)` with `W = I − N_z`, which is the
//! form evaluated here.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::independence::{permutation_threshold, TestOutcome};
use crate::kernels::{center_gram, gram_matrix, Centering, KernelSpec};
use crate::linalg;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Settings of the conditional-independence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondTestConfig {
    pub reg_lambda: f64,
    pub num_domains: usize,
    pub num_perms: usize,
    pub level: f64,
    pub use_normalized: bool,
}

impl Default for CondTestConfig {
    fn default() -> Self {
        Self { reg_lambda: 0.05, num_domains: 8, num_perms: 100, level: 0.05, use_normalized: true }
    }
}

impl CondTestConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.reg_lambda > 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("λ must be positive, got {}", self.reg_lambda)));
        }
        if self.num_domains == 0 || 4 * self.num_domains > n {
            return Err(Error::InvalidParameter(format!(
                "{} domains over {n} samples leaves fewer than 4 points per domain",
                self.num_domains
            )));
        }
        if self.num_perms == 0 {
            return Err(Error::InvalidParameter("at least one permutation is required".into()));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0, 1], got {}", self.level)));
        }
        Ok(())
    }
}

fn check_grams(grams: &[MatRef<'_, f64>]) -> Result<usize> {
    let n = linalg::check_square(grams[0], "gram")?;
    for g in &grams[1..] {
        if linalg::check_square(*g, "gram")? != n {
            return Err(Error::DimensionMismatch { expected: n, found: g.nrows() });
        }
    }
    if n < 2 {
        return Err(Error::InvalidParameter("conditional measures need at least 2 samples".into()));
    }
    Ok(n)
}

fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `R⁻¹` with `R = K̃ + NλI`.
fn reg_inverse(centered: MatRef<'_, f64>, reg_lambda: f64) -> Result<Mat<f64>> {
    let n = centered.nrows();
    let mut r = centered.to_owned();
    linalg::add_diagonal(&mut r, n as f64 * reg_lambda);
    let mut inv = linalg::spd_inverse(r.as_ref())?;
    symmetrize(&mut inv);
    Ok(inv)
}

/// `N = K̃ R⁻¹`, symmetric since `K̃` and `R` commute.
fn normalized_gram(centered: MatRef<'_, f64>, reg_lambda: f64) -> Result<Mat<f64>> {
    let inv = reg_inverse(centered, reg_lambda)?;
    let mut nm = centered * &inv;
    symmetrize(&mut nm);
    Ok(nm)
}

fn psd_factor(b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (vals, vecs) = linalg::sym_eigen(b)?;
    let cut = 1e-13 * vals.last().copied().unwrap_or(0.0).max(0.0);
    let kept: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > cut).collect();
    Ok(Mat::from_fn(b.nrows(), kept.len(), |i, j| vecs[(i, kept[j])] * vals[kept[j]].sqrt()))
}

/// Precomputed part of the statistic that does not involve the first argument.
///
/// Holds `B = W Y W / s` (`Y` is `K̃_y` or `N_y`, `s` is `N²` for the raw form, 1
/// otherwise) so that the statistic for any first-argument Gram is `Tr(A B)`.
struct Conditioner {
    b: Mat<f64>,
    /// `F` with `B ≈ F Fᵀ`, eigenvalues of `B` below `1e-13 · λ_max` dropped.
    factor: Mat<f64>,
    trace_b: f64,
    reg_lambda: f64,
    normalized: bool,
}

impl Conditioner {
    fn new(gram_y: MatRef<'_, f64>, gram_z: MatRef<'_, f64>, reg_lambda: f64, normalized: bool) -> Result<Self> {
        let n = gram_y.nrows();
        let cy = center_gram(gram_y, Centering::Both)?;
        let cz = center_gram(gram_z, Centering::Both)?;
        let nz = normalized_gram(cz.as_ref(), reg_lambda)?;
        let w = Mat::<f64>::identity(n, n) - &nz;
        let y = if normalized { normalized_gram(cy.as_ref(), reg_lambda)? } else { cy };
        let mut b = &w * &y * &w;
        if !normalized {
            b *= faer::Scale(1.0 / (n * n) as f64);
        }
        symmetrize(&mut b);
        let trace_b = (0..n).map(|i| b[(i, i)]).sum();
        let factor = if normalized { psd_factor(b.as_ref())? } else { Mat::zeros(n, 0) };
        Ok(Self { b, factor, trace_b, reg_lambda, normalized })
    }

    /// Statistic for an uncentered first-argument Gram.
    fn statistic(&self, gram_x: MatRef<'_, f64>) -> Result<f64> {
        let cx = center_gram(gram_x, Centering::Both)?;
        if self.normalized {
            // Tr(N_x B) = Tr(B) − Nλ Tr(R_x⁻¹ B)
            // with Tr(R_x⁻¹ B) = Tr(Fᵀ R_x⁻¹ F)
            let n = cx.nrows();
            let mut r = cx;
            linalg::add_diagonal(&mut r, n as f64 * self.reg_lambda);
            let solved = linalg::spd_solve(r.as_ref(), self.factor.as_ref())?;
            let quad: f64 = (0..self.factor.ncols())
                .map(|k| (0..n).map(|i| self.factor[(i, k)] * solved[(i, k)]).sum::<f64>())
                .sum();
            Ok(self.trace_b - n as f64 * self.reg_lambda * quad)
        } else {
            Ok(linalg::trace_of_product(cx.as_ref(), self.b.as_ref()))
        }
    }
}

/// Squared HS norm of the empirical conditional cross-covariance of `x` and `y` given `z`.
pub fn cond_hs_norm(
    gram_x: MatRef<'_, f64>,
    gram_y: MatRef<'_, f64>,
    gram_z: MatRef<'_, f64>,
    reg_lambda: f64,
    normalized: bool,
) -> Result<f64> {
    check_grams(&[gram_x, gram_y, gram_z])?;
    if !(reg_lambda > 0.0 && reg_lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ must be positive, got {reg_lambda}")));
    }
    Conditioner::new(gram_y, gram_z, reg_lambda, normalized)?.statistic(gram_x)
}

/// Gram of the extended variable `(a, c)` under the product kernel.
pub fn extended_gram(gram_a: MatRef<'_, f64>, gram_c: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_grams(&[gram_a, gram_c])?;
    Ok(linalg::hadamard(gram_a, gram_c))
}

/// Conditional-independence measure for `A ⊥ B | C`: the conditional HS norm of the
/// extended pair `(A, C)` against `B` given `C`.
#[allow(clippy::too_many_arguments)]
pub fn extended_cond_measure<P: AsRef<[f64]>, Q: AsRef<[f64]>, R: AsRef<[f64]>>(
    samples_a: &[P],
    samples_b: &[Q],
    samples_c: &[R],
    spec_a: &KernelSpec,
    spec_b: &KernelSpec,
    spec_c: &KernelSpec,
    config: &CondTestConfig,
) -> Result<f64> {
    let problem = CondProblem::new(samples_a, samples_b, samples_c, spec_a, spec_b, spec_c, config)?;
    problem.statistic()
}

/// Splits sample indices into `num_domains` equal-count groups by sorting on the
/// conditioning variable (ties by index). Vector-valued samples are sorted on their
/// first principal coordinate.
pub fn domain_partition<P: AsRef<[f64]>>(samples: &[P], num_domains: usize) -> Result<Vec<Vec<usize>>> {
    let n = samples.len();
    if num_domains == 0 || num_domains > n {
        return Err(Error::InvalidParameter(format!("cannot split {n} samples into {num_domains} domains")));
    }
    let dim = samples[0].as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch("conditioning samples differ in dimension".into()));
    }
    let keys: Vec<f64> = if dim == 1 {
        samples.iter().map(|s| s.as_ref()[0]).collect()
    } else {
        let mean: Vec<f64> = (0..dim).map(|d| samples.iter().map(|s| s.as_ref()[d]).sum::<f64>() / n as f64).collect();
        let cov = Mat::from_fn(dim, dim, |a, b| {
            samples.iter().map(|s| (s.as_ref()[a] - mean[a]) * (s.as_ref()[b] - mean[b])).sum::<f64>() / n as f64
        });
        let (_, vecs) = linalg::sym_eigen(cov.as_ref())?;
        let top: Vec<f64> = (0..dim).map(|d| vecs[(d, dim - 1)]).collect();
        samples
            .iter()
            .map(|s| s.as_ref().iter().zip(&mean).zip(&top).map(|((v, m), t)| (v - m) * t).sum())
            .collect()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]).then(i.cmp(&j)));
    let (base, extra) = (n / num_domains, n % num_domains);
    let mut out = Vec::with_capacity(num_domains);
    let mut start = 0;
    for l in 0..num_domains {
        let len = base + usize::from(l < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Permutation of `0..n` that shuffles indices within each domain only.
pub fn within_domain_permutation<R: rand::Rng + ?Sized>(domains: &[Vec<usize>], n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    for dom in domains {
        let mut shuffled = dom.clone();
        shuffled.shuffle(rng);
        for (&slot, &src) in dom.iter().zip(&shuffled) {
            perm[slot] = src;
        }
    }
    perm
}

/// Grams and precomputations shared by the statistic and its permutation null.
struct CondProblem {
    gram_a: Mat<f64>,
    gram_c: Mat<f64>,
    domains: Vec<Vec<usize>>,
    conditioner: Conditioner,
    config: CondTestConfig,
}

impl CondProblem {
    fn new<P: AsRef<[f64]>, Q: AsRef<[f64]>, R: AsRef<[f64]>>(
        samples_a: &[P],
        samples_b: &[Q],
        samples_c: &[R],
        spec_a: &KernelSpec,
        spec_b: &KernelSpec,
        spec_c: &KernelSpec,
        config: &CondTestConfig,
    ) -> Result<Self> {
        let n = samples_a.len();
        for len in [samples_b.len(), samples_c.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        config.validate(n)?;
        let gram_a = gram_matrix(spec_a, samples_a)?;
        let gram_b = gram_matrix(spec_b, samples_b)?;
        let gram_c = gram_matrix(spec_c, samples_c)?;
        let domains = domain_partition(samples_c, config.num_domains)?;
        let conditioner = Conditioner::new(gram_b.as_ref(), gram_c.as_ref(), config.reg_lambda, config.use_normalized)?;
        Ok(Self { gram_a, gram_c, domains, conditioner, config: *config })
    }

    fn statistic(&self) -> Result<f64> {
        self.conditioner.statistic(linalg::hadamard(self.gram_a.as_ref(), self.gram_c.as_ref()).as_ref())
    }

    fn permuted_statistic(&self, perm: &[usize]) -> Result<f64> {
        let n = perm.len();
        let ext = Mat::from_fn(n, n, |i, j| self.gram_a[(perm[i], perm[j])] * self.gram_c[(i, j)]);
        self.conditioner.statistic(ext.as_ref())
    }

    fn threshold(&self, seed: u64) -> Result<f64> {
        let n = self.gram_a.nrows();
        let mut null = (0..self.config.num_perms)
            .into_par_iter()
            .map(|r| {
                let perm = within_domain_permutation(&self.domains, n, &mut stream_rng(seed, r as u64 + 1));
                self.permuted_statistic(&perm)
            })
            .collect::<Result<Vec<f64>>>()?;
        permutation_threshold(&mut null, self.config.level)
    }
}

/// Permutation threshold for the measure of [`extended_cond_measure`], permuting `a`
/// within the domains of `c`.
#[allow(clippy::too_many_arguments)]
pub fn cond_perm_threshold<P: AsRef<[f64]>, Q: AsRef<[f64]>, R: AsRef<[f64]>>(
    samples_a: &[P],
    samples_b: &[Q],
    samples_c: &[R],
    spec_a: &KernelSpec,
    spec_b: &KernelSpec,
    spec_c: &KernelSpec,
    config: &CondTestConfig,
    seed: u64,
) -> Result<f64> {
    CondProblem::new(samples_a, samples_b, samples_c, spec_a, spec_b, spec_c, config)?.threshold(seed)
}

/// Tests `A ⊥ B | C` (the chain `A − C − B`): statistic, permutation threshold and decision.
#[allow(clippy::too_many_arguments)]
pub fn markov_cond_test<P: AsRef<[f64]>, Q: AsRef<[f64]>, R: AsRef<[f64]>>(
    samples_a: &[P],
    samples_b: &[Q],
    samples_c: &[R],
    spec_a: &KernelSpec,
    spec_b: &KernelSpec,
    spec_c: &KernelSpec,
    config: &CondTestConfig,
    seed: u64,
) -> Result<TestOutcome> {
    let problem = CondProblem::new(samples_a, samples_b, samples_c, spec_a, spec_b, spec_c, config)?;
    let statistic = problem.statistic()?;
    let threshold = problem.threshold(seed)?;
    Ok(TestOutcome { statistic, threshold, reject: statistic > threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_gram(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = stream_rng(seed, 0);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 3.0]).collect();
        gram_matrix(&KernelSpec::gaussian(1, 1.0).unwrap(), &pts).unwrap()
    }

    fn verbatim(gx: &Mat<f64>, gy: &Mat<f64>, gz: &Mat<f64>, lam: f64, normalized: bool) -> f64 {
        let n = gx.nrows();
        let c = crate::kernels::centering_matrix(n);
        let tilde = |g: &Mat<f64>| &c * g * &c;
        let (kx, ky, kz) = (tilde(gx), tilde(gy), tilde(gz));
        let reg = |k: &Mat<f64>| {
            let mut r = k.clone();
            linalg::add_diagonal(&mut r, n as f64 * lam);
            linalg::spd_inverse(r.as_ref()).unwrap()
        };
        let tr = |m: Mat<f64>| (0..n).map(|i| m[(i, i)]).sum::<f64>();
        if normalized {
            let nx = &kx * reg(&kx);
            let ny = &ky * reg(&ky);
            let nz = &kz * reg(&kz);
            tr(&nx * &ny) - 2.0 * tr(&ny * &nz * &nx) + tr(&ny * &nz * &nx * &nz)
        } else {
            let rz = reg(&kz);
            (tr(&kx * &ky) - 2.0 * tr(&ky * &rz * &kz * &kx) + tr(&ky * &kz * &rz * &kx * &rz * &kz)) / (n * n) as f64
        }
    }

    #[test]
    fn fast_form_matches_verbatim_trace() {
        let (gx, gy, gz) = (random_gram(30, 1), random_gram(30, 2), random_gram(30, 3));
        for normalized in [false, true] {
            let fast = cond_hs_norm(gx.as_ref(), gy.as_ref(), gz.as_ref(), 0.01, normalized).unwrap();
            let slow = verbatim(&gx, &gy, &gz, 0.01, normalized);
            assert_relative_eq!(fast, slow, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_y_gives_zero() {
        let (gx, gz) = (random_gram(12, 4), random_gram(12, 5));
        let ones = Mat::<f64>::ones(12, 12);
        for normalized in [false, true] {
            let v = cond_hs_norm(gx.as_ref(), ones.as_ref(), gz.as_ref(), 0.01, normalized).unwrap();
            assert!(v.abs() < 1e-10, "{v}");
        }
        assert!(cond_hs_norm(gx.as_ref(), ones.as_ref(), gz.as_ref(), 0.0, true).is_err());
    }

    #[test]
    fn partition_and_permutation() {
        let zs: Vec<Vec<f64>> = [5.0, 1.0, 3.0, 3.0, 0.0, 2.0, 4.0, 6.0, 7.0].iter().map(|&v| vec![v]).collect();
        let doms = domain_partition(&zs, 2).unwrap();
        assert_eq!(doms, vec![vec![4, 1, 5, 2, 3], vec![6, 0, 7, 8]]);
        let mut rng = stream_rng(1, 1);
        let perm = within_domain_permutation(&doms, 9, &mut rng);
        for d in &doms {
            let mut a: Vec<usize> = d.iter().map(|&i| perm[i]).collect();
            let mut b = d.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn config_validation() {
        let pts: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let g = KernelSpec::gaussian(1, 1.0).unwrap();
        let cfg = CondTestConfig { num_domains: 5, ..Default::default() };
        assert!(extended_cond_measure(&pts, &pts, &pts, &g, &g, &g, &cfg).is_err());
        let cfg = CondTestConfig { num_domains: 4, ..Default::default() };
        assert!(extended_cond_measure(&pts, &pts, &pts, &g, &g, &g, &cfg).is_ok());
    }
}
