//! Kernel functions, Gram matrices, centering and Gaussian-kernel geometry.

use faer::{Mat, MatRef};

use crate::{Error, Result};

/// Kernel families supported by [`KernelSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `x·y`.
    Linear,
    /// `exp(-‖x−y‖² / (2σ²))`; the field is σ².
    Gaussian { bandwidth_sq: f64 },
    /// `(1 + x·y)^M`.
    Polynomial { degree: u32 },
    /// `min(t, s)` on nonnegative scalars (Wiener process covariance).
    Min,
    /// Paley-Wiener kernel `sin(a(t−s)) / (π(t−s))`, equal to `a/π` on the diagonal.
    Sinc { band: f64 },
}

/// A parameterized positive semi-definite kernel on `ℝ^input_dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    input_dim: usize,
}

/// Tolerance on the smallest Gram eigenvalue for a PSD check on `n` points.
pub fn psd_tolerance(n: usize) -> f64 {
    1e-9 * n as f64
}

impl KernelSpec {
    pub fn new(family: KernelFamily, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        match family {
            KernelFamily::Gaussian { bandwidth_sq } if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "gaussian bandwidth σ² must be positive, got {bandwidth_sq}"
                )))
            }
            KernelFamily::Polynomial { degree: 0 } => {
                return Err(Error::InvalidParameter("polynomial degree must be ≥ 1".into()))
            }
            KernelFamily::Sinc { band } if !(band > 0.0 && band.is_finite()) => {
                return Err(Error::InvalidParameter(format!("sinc band must be positive, got {band}")))
            }
            KernelFamily::Min | KernelFamily::Sinc { .. } if input_dim != 1 => {
                return Err(Error::InvalidParameter("min and sinc kernels are scalar (input_dim = 1)".into()))
            }
            _ => {}
        }
        Ok(Self { family, input_dim })
    }

    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, input_dim)
    }

    /// Gaussian kernel `exp(-‖x−y‖²/(2σ²))`.
    pub fn gaussian(input_dim: usize, bandwidth_sq: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { bandwidth_sq }, input_dim)
    }

    /// Gaussian kernel written as `exp(-‖x−y‖²/w)`, i.e. σ² = w/2.
    ///
    /// The online-filtering and rotation experiments state their kernels in this form.
    pub fn gaussian_unscaled(input_dim: usize, width: f64) -> Result<Self> {
        Self::gaussian(input_dim, width / 2.0)
    }

    pub fn polynomial(input_dim: usize, degree: u32) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { degree }, input_dim)
    }

    pub fn min() -> Self {
        Self { family: KernelFamily::Min, input_dim: 1 }
    }

    pub fn sinc(band: f64) -> Result<Self> {
        Self::new(KernelFamily::Sinc { band }, 1)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// True when `K(x,x) = 1` for every admissible `x`.
    pub fn is_normalized(&self) -> bool {
        match self.family {
            KernelFamily::Gaussian { .. } => true,
            KernelFamily::Sinc { band } => (band - std::f64::consts::PI).abs() < 1e-12,
            _ => false,
        }
    }

    /// σ² of a Gaussian kernel, `None` for the other families.
    pub fn bandwidth_sq(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian { bandwidth_sq } => Some(bandwidth_sq),
            _ => None,
        }
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        if self.family == KernelFamily::Min && x[0] < 0.0 {
            return Err(Error::InvalidDomain(format!("min kernel requires t ≥ 0, got {}", x[0])));
        }
        Ok(())
    }

    /// Evaluates `K(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates without validating dimensions or domain.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => dot(x, y),
            KernelFamily::Gaussian { bandwidth_sq } => (-sq_dist(x, y) / (2.0 * bandwidth_sq)).exp(),
            KernelFamily::Polynomial { degree } => (1.0 + dot(x, y)).powi(degree as i32),
            KernelFamily::Min => x[0].min(y[0]),
            KernelFamily::Sinc { band } => {
                // symmetric difference keeps eval(x,y) == eval(y,x) bit-for-bit
                let d = x[0] - y[0];
                if d == 0.0 {
                    band / std::f64::consts::PI
                } else {
                    (band * d).sin() / (std::f64::consts::PI * d)
                }
            }
        }
    }

    pub(crate) fn check_points<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<()> {
        points.iter().try_for_each(|p| self.check_point(p.as_ref()))
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gram matrix `G_ij = K(x_i, x_j)`.
pub fn gram_matrix<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P]) -> Result<Mat<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("gram_matrix needs at least one point"));
    }
    spec.check_points(points)?;
    let n = points.len();
    let mut g = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval_unchecked(points[i].as_ref(), points[j].as_ref());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Cross Gram matrix `G_ij = K(a_i, b_j)`.
pub fn cross_gram<P: AsRef<[f64]>, Q: AsRef<[f64]>>(spec: &KernelSpec, a: &[P], b: &[Q]) -> Result<Mat<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("cross_gram needs nonempty point sets"));
    }
    spec.check_points(a)?;
    spec.check_points(b)?;
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| spec.eval_unchecked(a[i].as_ref(), b[j].as_ref())))
}

/// Kernel column `(K(x_1, z), …, K(x_N, z))`.
pub fn kernel_vector<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P], z: &[f64]) -> Result<Vec<f64>> {
    spec.check_point(z)?;
    spec.check_points(points)?;
    Ok(points.iter().map(|p| spec.eval_unchecked(p.as_ref(), z)).collect())
}

/// Which sides of the Gram matrix the centering projector is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// `C·G·C`
    #[default]
    Both,
    /// `C·G`
    Left,
    /// `G·C`
    Right,
}

/// The centering projector `C = I − (1/N)𝟙𝟙ᵀ`.
pub fn centering_matrix(n: usize) -> Mat<f64> {
    let off = -1.0 / n as f64;
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 + off } else { off })
}

/// Applies the centering projector to a square matrix.
///
/// Computed by subtracting row/column means, O(N²).
pub fn center_gram(g: MatRef<'_, f64>, mode: Centering) -> Result<Mat<f64>> {
    let n = g.nrows();
    if n != g.ncols() {
        return Err(Error::ShapeMismatch(format!("center_gram needs a square matrix, got {}×{}", n, g.ncols())));
    }
    if n == 0 {
        return Err(Error::EmptyInput("center_gram on an empty matrix"));
    }
    let nf = n as f64;
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| g[(i, j)]).sum::<f64>() / nf).collect();
    let row_means: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g[(i, j)]).sum::<f64>() / nf).collect();
    let grand = col_means.iter().sum::<f64>() / nf;
    let out = match mode {
        Centering::Left => Mat::from_fn(n, n, |i, j| g[(i, j)] - col_means[j]),
        Centering::Right => Mat::from_fn(n, n, |i, j| g[(i, j)] - row_means[i]),
        Centering::Both => Mat::from_fn(n, n, |i, j| g[(i, j)] - col_means[j] - row_means[i] + grand),
    };
    Ok(out)
}

/// Squared RKHS distance `K(x,x) − 2K(x,y) + K(y,y)` between the atoms of `x` and `y`.
pub fn rkhs_distance_sq(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(spec.eval(x, x)? - 2.0 * spec.eval(x, y)? + spec.eval(y, y)?)
}

/// Polygonal length of the RKHS curve `s ↦ K(·, s·x)` for `s ∈ [0, t]` using `segments` chords.
///
/// Converges to `t‖x‖/σ` as the number of segments grows.
pub fn gaussian_curve_length(spec: &KernelSpec, x: &[f64], t: f64, segments: usize) -> Result<f64> {
    if spec.bandwidth_sq().is_none() {
        return Err(Error::InvalidParameter("curve length is defined for the gaussian family".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("curve parameter t must be ≥ 0, got {t}")));
    }
    if segments == 0 {
        return Err(Error::InvalidParameter("at least one segment is required".into()));
    }
    spec.check_point(x)?;
    let step: Vec<f64> = x.iter().map(|v| v * t / segments as f64).collect();
    let zero = vec![0.0; x.len()];
    // every chord has the same length for a translation-invariant kernel
    let chord = rkhs_distance_sq(spec, &zero, &step)?.max(0.0).sqrt();
    Ok(chord * segments as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basic_evaluations() {
        let g = KernelSpec::gaussian(3, 1.0).unwrap();
        assert_eq!(g.eval(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap(), 1.0);
        let lin = KernelSpec::linear(2).unwrap();
        assert_eq!(lin.eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(KernelSpec::min().eval(&[0.3], &[0.7]).unwrap(), 0.3);
    }

    #[test]
    fn evaluation_errors() {
        let lin = KernelSpec::linear(2).unwrap();
        assert!(matches!(lin.eval(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(KernelSpec::min().eval(&[-0.1], &[0.5]), Err(Error::InvalidDomain(_))));
        assert!(KernelSpec::gaussian(1, 0.0).is_err());
        assert!(KernelSpec::polynomial(2, 0).is_err());
        assert!(KernelSpec::sinc(-1.0).is_err());
    }

    #[test]
    fn sinc_diagonal_by_continuity() {
        let s = KernelSpec::sinc(2.0).unwrap();
        assert_abs_diff_eq!(s.eval(&[0.4], &[0.4]).unwrap(), 2.0 / std::f64::consts::PI);
        let near = s.eval(&[0.4], &[0.4 + 1e-9]).unwrap();
        assert_abs_diff_eq!(near, 2.0 / std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn gram_examples() {
        let lin = KernelSpec::linear(2).unwrap();
        let g = gram_matrix(&lin, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(g, Mat::<f64>::identity(2, 2));
        let g = gram_matrix(&lin, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(g[(0, 0)], 2.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(gram_matrix(&lin, &empty), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn polynomial_matches_explicit_feature_map() {
        // degree-2 embedding of ℝ² into ℝ⁶
        fn phi(x: &[f64]) -> [f64; 6] {
            let s = std::f64::consts::SQRT_2;
            [1.0, s * x[0], s * x[1], x[0] * x[0], s * x[0] * x[1], x[1] * x[1]]
        }
        let pts = [vec![0.3, -1.2], vec![1.5, 0.4], vec![-0.7, -0.1], vec![2.0, 1.1]];
        let k = KernelSpec::polynomial(2, 2).unwrap();
        let g = gram_matrix(&k, &pts).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = dot(&phi(&pts[i]), &phi(&pts[j]));
                assert_abs_diff_eq!(g[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn centering_examples() {
        let ones = Mat::<f64>::ones(4, 4);
        let c = center_gram(ones.as_ref(), Centering::Both).unwrap();
        assert!(c.norm_max() < 1e-15);

        let cm = centering_matrix(5);
        let cc = &cm * &cm;
        assert!((&cc - &cm).norm_max() < 1e-15);

        let g = Mat::from_fn(3, 3, |i, j| [[2.0, 0.3, -1.0], [0.3, 1.5, 0.7], [-1.0, 0.7, 4.0]][i][j]);
        let out = center_gram(g.as_ref(), Centering::Both).unwrap();
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| out[(i, j)]).sum();
            let col: f64 = (0..3).map(|j| out[(j, i)]).sum();
            assert!(row.abs() < 1e-12 && col.abs() < 1e-12);
        }
        // one-sided forms agree with explicit products
        let left = center_gram(g.as_ref(), Centering::Left).unwrap();
        let right = center_gram(g.as_ref(), Centering::Right).unwrap();
        let c3 = centering_matrix(3);
        assert!((&left - &c3 * &g).norm_max() < 1e-14);
        assert!((&right - &g * &c3).norm_max() < 1e-14);
        assert!((&out - &c3 * &g * &c3).norm_max() < 1e-14);
    }

    #[test]
    fn distance_examples() {
        let g = KernelSpec::gaussian(2, 1.0).unwrap();
        assert_eq!(rkhs_distance_sq(&g, &[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        // ‖x−y‖² = 2
        let d = rkhs_distance_sq(&g, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(d, 2.0 * (1.0 - (-1.0f64).exp()), epsilon = 1e-15);
        let far = rkhs_distance_sq(&g, &[0.0, 0.0], &[10.0, 0.0]).unwrap();
        assert!((far - 2.0).abs() < 1e-6);
    }

    #[test]
    fn curve_length_examples() {
        let g = KernelSpec::gaussian(2, 1.0).unwrap();
        assert_eq!(gaussian_curve_length(&g, &[0.6, 0.8], 0.0, 10).unwrap(), 0.0);
        let l = gaussian_curve_length(&g, &[0.6, 0.8], 1.0, 10_000).unwrap();
        assert!((l - 1.0).abs() < 1e-3);
        let l = gaussian_curve_length(&g, &[0.0, 2.0], 0.5, 10_000).unwrap();
        assert!((l - 1.0).abs() < 1e-3);
        assert!(gaussian_curve_length(&g, &[0.6, 0.8], -1.0, 10).is_err());
        assert!(gaussian_curve_length(&KernelSpec::linear(2).unwrap(), &[0.6, 0.8], 1.0, 10).is_err());
    }

    #[test]
    fn curve_length_error_shrinks_quadratically() {
        let g = KernelSpec::gaussian(1, 1.0).unwrap();
        let target = 3.0;
        let mut prev_err = f64::INFINITY;
        let mut prev_len = 0.0;
        for n in [4usize, 8, 16, 32, 64, 128] {
            let len = gaussian_curve_length(&g, &[1.5], 2.0, n).unwrap();
            let err = (len - target).abs();
            assert!(len >= prev_len, "length must be nondecreasing in N");
            assert!(prev_err / err >= 3.0 || prev_err.is_infinite());
            prev_err = err;
            prev_len = len;
        }
    }
}
