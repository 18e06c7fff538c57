//! Finite-dimensional reproducing kernels of inner-product subspaces of `ℝⁿ`,
//! minimum-norm interpolation and linear solving, and the discretized Mercer
//! decomposition of the Wiener (min) kernel.
//!
//! A subspace `V ⊂ ℝⁿ` with its own inner product has a unique kernel matrix
//! `K = [k_1 … k_n]` whose columns lie in `V` and reproduce coordinates:
//! `⟨v, k_i⟩ = e_iᵀ v` for every `v ∈ V`. Three constructions are provided
//! (orthonormal basis, full-space metric, arbitrary basis with its Gram matrix)
//! plus the column-by-column geometric construction.

use faer::{Mat, MatRef};

use crate::kernels::{gram_matrix, psd_tolerance, KernelSpec};
use crate::linalg::{self, check_square};
use crate::{Error, Result};

/// Relative eigenvalue cut used for singular constraint systems.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Absolute tolerance for the orthonormality check.
const ORTHONORMAL_TOL: f64 = 1e-8;

/// The kernel matrix of an inner-product subspace of `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceKernel {
    matrix: Mat<f64>,
}

impl SubspaceKernel {
    /// Wraps a matrix after checking it is square, symmetric and PSD.
    pub fn new(matrix: Mat<f64>) -> Result<Self> {
        let n = check_square(matrix.as_ref(), "kernel matrix")?;
        if !linalg::is_symmetric(matrix.as_ref(), 1e-10) {
            return Err(Error::InvalidParameter("kernel matrix is not symmetric".into()));
        }
        let min_eig = linalg::sym_eigenvalues(matrix.as_ref())?.first().copied().unwrap_or(0.0);
        if min_eig < -psd_tolerance(n) * matrix.norm_max().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.matrix
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Column `k_i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|r| self.matrix[(r, i)]).collect()
    }

    /// The subspace element `Kα`.
    pub fn element(&self, alpha: &[f64]) -> Vec<f64> {
        linalg::mat_vec(self.matrix.as_ref(), alpha)
    }

    /// Induced inner product `⟨Kα, Kβ⟩ = βᵀKα`.
    pub fn inner(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let ka = self.element(alpha);
        beta.iter().zip(&ka).map(|(b, k)| b * k).sum()
    }
}

/// A subspace of `ℝⁿ` given by `r` spanning vectors (columns of `basis`) and their
/// Gram matrix under the subspace's inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductSubspace {
    basis: Mat<f64>,
    gram_of_basis: Mat<f64>,
}

impl InnerProductSubspace {
    pub fn new(basis: Mat<f64>, gram_of_basis: Mat<f64>) -> Result<Self> {
        let (n, r) = (basis.nrows(), basis.ncols());
        if r == 0 || n == 0 {
            return Err(Error::EmptyInput("subspace needs at least one spanning vector"));
        }
        if r > n {
            return Err(Error::ShapeMismatch(format!("{r} spanning vectors exceed ambient dimension {n}")));
        }
        if gram_of_basis.nrows() != r || gram_of_basis.ncols() != r {
            return Err(Error::ShapeMismatch(format!(
                "basis Gram matrix must be {r}×{r}, got {}×{}",
                gram_of_basis.nrows(),
                gram_of_basis.ncols()
            )));
        }
        if !linalg::is_symmetric(gram_of_basis.as_ref(), 1e-10) {
            return Err(Error::InvalidParameter("basis Gram matrix is not symmetric".into()));
        }
        let min_eig = linalg::sym_eigenvalues(gram_of_basis.as_ref())?[0];
        if min_eig < -psd_tolerance(r) * gram_of_basis.norm_max().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { basis, gram_of_basis })
    }

    /// Subspace spanned by the columns of `basis` with the Euclidean inner product.
    pub fn euclidean(basis: Mat<f64>) -> Result<Self> {
        let gram = basis.transpose() * &basis;
        Self::new(basis, gram)
    }

    /// All of `ℝⁿ` with the inner product `⟨x, y⟩ = yᵀQx`.
    pub fn full_space(metric: Mat<f64>) -> Result<Self> {
        let n = check_square(metric.as_ref(), "metric")?;
        Self::new(Mat::identity(n, n), metric)
    }

    pub fn basis(&self) -> MatRef<'_, f64> {
        self.basis.as_ref()
    }

    pub fn gram_of_basis(&self) -> MatRef<'_, f64> {
        self.gram_of_basis.as_ref()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// `K = u_1u_1ᵀ + … + u_ru_rᵀ` for a basis that is orthonormal under the declared inner product.
pub fn kernel_from_orthonormal_basis(space: &InnerProductSubspace) -> Result<SubspaceKernel> {
    let r = space.rank();
    let deviation = (&space.gram_of_basis - Mat::<f64>::identity(r, r)).norm_max();
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(SubspaceKernel { matrix: &space.basis * space.basis.transpose() })
}

/// Kernel of `ℝⁿ` under the inner product `⟨x, y⟩ = yᵀQx`, namely `K = Q⁻¹`.
pub fn kernel_from_metric(metric: MatRef<'_, f64>) -> Result<SubspaceKernel> {
    check_square(metric, "metric")?;
    if !linalg::is_symmetric(metric, 1e-12) {
        return Err(Error::InvalidParameter("metric is not symmetric".into()));
    }
    let inv = linalg::spd_inverse(metric)?;
    // symmetrize away rounding
    let sym = Mat::from_fn(inv.nrows(), inv.ncols(), |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]));
    Ok(SubspaceKernel { matrix: sym })
}

/// Kernel from an arbitrary basis `B` with Gram matrix `G`: each column solves
/// `⟨v_j, k_i⟩ = e_iᵀv_j`, giving `K = B G⁻¹ Bᵀ`.
pub fn kernel_from_spanning_set(space: &InnerProductSubspace) -> Result<SubspaceKernel> {
    let coeffs = linalg::spd_solve(space.gram_of_basis(), space.basis().transpose())
        .map_err(|_| Error::Singular("basis Gram matrix".into()))?;
    let k = &space.basis * &coeffs;
    let sym = Mat::from_fn(k.nrows(), k.ncols(), |i, j| 0.5 * (k[(i, j)] + k[(j, i)]));
    Ok(SubspaceKernel { matrix: sym })
}

/// Column `i` of the kernel, built geometrically: the minimum-norm element `z̃` of
/// `V ∩ {e_iᵀz = 1}` rescaled by `⟨z̃, z̃⟩⁻¹`. Returns zeros when the intersection is empty.
pub fn geometric_kernel_column(space: &InnerProductSubspace, i: usize) -> Result<Vec<f64>> {
    let (n, r) = (space.ambient_dim(), space.rank());
    if i >= n {
        return Err(Error::InvalidParameter(format!("index {i} out of range for dimension {n}")));
    }
    let row: Vec<f64> = (0..r).map(|j| space.basis[(i, j)]).collect();
    let row_norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = space.basis.norm_max().max(1e-300);
    if row_norm <= 1e-12 * scale {
        return Ok(vec![0.0; n]);
    }
    // Lagrange system for min cᵀGc subject to rowᵀc = 1
    let mut kkt = Mat::<f64>::zeros(r + 1, r + 1);
    for a in 0..r {
        for b in 0..r {
            kkt[(a, b)] = space.gram_of_basis[(a, b)];
        }
        kkt[(a, r)] = row[a];
        kkt[(r, a)] = row[a];
    }
    let mut rhs = Mat::<f64>::zeros(r + 1, 1);
    rhs[(r, 0)] = 1.0;
    let sol = linalg::lu_solve(kkt.as_ref(), rhs.as_ref())?;
    let c: Vec<f64> = (0..r).map(|a| sol[(a, 0)]).collect();
    let gc = linalg::mat_vec(space.gram_of_basis(), &c);
    let norm_sq: f64 = c.iter().zip(&gc).map(|(x, y)| x * y).sum();
    if !(norm_sq > 0.0) {
        return Err(Error::Singular("degenerate inner product on the constraint set".into()));
    }
    let z = linalg::mat_vec(space.basis(), &c);
    Ok(z.into_iter().map(|v| v / norm_sq).collect())
}

/// Solution of a minimum-norm interpolation problem `f = Σ α_j K(·, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    pub coeffs: Vec<f64>,
    /// `‖f‖² = αᵀAα`.
    pub norm_sq: f64,
}

/// Solves `Aα = c` for a PSD constraint matrix. Singular-but-consistent systems get the
/// minimum-norm α via an eigenvalue-thresholded pseudo-inverse.
fn solve_constraints(a: MatRef<'_, f64>, c: &[f64]) -> Result<Interpolant> {
    let n = a.nrows();
    let (vals, _) = linalg::sym_eigen(a)?;
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rhs = Mat::from_fn(n, 1, |i, _| c[i]);
    let alpha: Vec<f64> = if vals[0] > PINV_REL_TOL * lmax {
        let s = linalg::spd_solve(a, rhs.as_ref())?;
        (0..n).map(|i| s[(i, 0)]).collect()
    } else {
        let p = linalg::pinv_sym(a, PINV_REL_TOL)?;
        linalg::mat_vec(p.as_ref(), c)
    };
    let fitted = linalg::mat_vec(a, &alpha);
    let residual = fitted.iter().zip(c).map(|(f, t)| (f - t).powi(2)).sum::<f64>().sqrt();
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > 1e-8 * c_norm.max(1.0) {
        return Err(Error::Infeasible { residual });
    }
    let norm_sq = alpha.iter().zip(&fitted).map(|(a, f)| a * f).sum();
    Ok(Interpolant { coeffs: alpha, norm_sq })
}

/// Minimum-norm `f` in the RKHS of `spec` with `f(x_j) = c_j`.
pub fn min_norm_interpolate_points<P: AsRef<[f64]>>(
    spec: &KernelSpec,
    points: &[P],
    values: &[f64],
) -> Result<Interpolant> {
    if points.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} points but {} values", points.len(), values.len())));
    }
    for (i, p) in points.iter().enumerate() {
        if points[..i].iter().any(|q| q.as_ref() == p.as_ref()) {
            return Err(Error::InvalidParameter("constraint points must be distinct".into()));
        }
    }
    let a = gram_matrix(spec, points)?;
    solve_constraints(a.as_ref(), values)
}

/// Minimum-norm interpolant in a finite subspace, constraints given as `(coordinate, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceInterpolant {
    pub coeffs: Vec<f64>,
    /// The solution vector `x = Σ α_j k_{i_j}`.
    pub element: Vec<f64>,
    pub norm_sq: f64,
}

/// Minimum-norm `x ∈ V` with `x_{i_j} = c_j` for each constraint `(i_j, c_j)`.
pub fn min_norm_interpolate_subspace(
    kernel: &SubspaceKernel,
    constraints: &[(usize, f64)],
) -> Result<SubspaceInterpolant> {
    if constraints.is_empty() {
        return Err(Error::EmptyInput("no interpolation constraints"));
    }
    let n = kernel.dim();
    let idx: Vec<usize> = constraints.iter().map(|&(i, _)| i).collect();
    for (k, &i) in idx.iter().enumerate() {
        if i >= n {
            return Err(Error::InvalidParameter(format!("coordinate {i} out of range for dimension {n}")));
        }
        if idx[..k].contains(&i) {
            return Err(Error::InvalidParameter("constraint coordinates must be distinct".into()));
        }
    }
    let m = idx.len();
    let a = Mat::from_fn(m, m, |p, q| kernel.matrix[(idx[p], idx[q])]);
    let c: Vec<f64> = constraints.iter().map(|&(_, v)| v).collect();
    let Interpolant { coeffs, norm_sq } = solve_constraints(a.as_ref(), &c)?;
    let mut element = vec![0.0; n];
    for (&i, &al) in idx.iter().zip(&coeffs) {
        for (r, e) in element.iter_mut().enumerate() {
            *e += al * kernel.matrix[(r, i)];
        }
    }
    Ok(SubspaceInterpolant { coeffs, element, norm_sq })
}

fn check_system(a: MatRef<'_, f64>, b: &[f64]) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyInput("empty linear system"));
    }
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    Ok(())
}

/// Minimum Euclidean-norm solution of `Ax = b`: `x = Aᵀ(AAᵀ)⁻¹b`.
///
/// When `AAᵀ` is singular the pseudo-inverse is used; an inconsistent system is
/// reported with its least-squares residual.
pub fn min_norm_linear_solve(a: MatRef<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    check_system(a, b)?;
    let gram = a * a.transpose();
    let (vals, _) = linalg::sym_eigen(gram.as_ref())?;
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dual: Vec<f64> = if vals[0] > PINV_REL_TOL * lmax {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let s = linalg::spd_solve(gram.as_ref(), rhs.as_ref())?;
        (0..b.len()).map(|i| s[(i, 0)]).collect()
    } else {
        let p = linalg::pinv_sym(gram.as_ref(), PINV_REL_TOL)?;
        linalg::mat_vec(p.as_ref(), b)
    };
    let x = linalg::mat_vec(a.transpose(), &dual);
    let ax = linalg::mat_vec(a, &x);
    let residual = ax.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > 1e-8 * b_norm.max(1.0) {
        return Err(Error::InconsistentSystem { residual });
    }
    Ok(x)
}

/// Minimum-norm solution assembled coordinate by coordinate: with `K = AAᵀ` and
/// `c_s` the `s`-th column of `A`, `x_s = ⟨b, c_s⟩_K = c_sᵀK⁻¹b`.
///
/// The `K`-inner products are evaluated through a Cholesky factor `K = LLᵀ` as
/// `(L⁻¹c_s)·(L⁻¹b)`.
pub fn solve_via_frame(a: MatRef<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    check_system(a, b)?;
    let gram = a * a.transpose();
    let (vals, _) = linalg::sym_eigen(gram.as_ref())?;
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(vals[0] > PINV_REL_TOL * lmax) {
        return Err(Error::Singular("AAᵀ".into()));
    }
    let llt = linalg::cholesky(gram.as_ref()).map_err(|_| Error::Singular("AAᵀ".into()))?;
    let l = llt.L();
    let r = b.len();
    let forward = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; r];
        for i in 0..r {
            let s: f64 = (0..i).map(|k| l[(i, k)] * out[k]).sum();
            out[i] = (v[i] - s) / l[(i, i)];
        }
        out
    };
    let wb = forward(b);
    let x = (0..a.ncols())
        .map(|s| {
            let cs: Vec<f64> = (0..r).map(|t| a[(t, s)]).collect();
            let u = forward(&cs);
            u.iter().zip(&wb).map(|(p, q)| p * q).sum()
        })
        .collect();
    Ok(x)
}

/// Discretized Mercer decomposition of `R(t,s) = min(t,s)` on `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MercerDecomposition {
    /// Grid points `i/G`, `i = 1..=G`.
    pub grid: Vec<f64>,
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions sampled on the grid, normalized so `(1/G) Σ ψ(t_i)² = 1` and `ψ(t_1) > 0`.
    pub eigenfunctions: Vec<Vec<f64>>,
}

/// Closed-form `k`-th eigenvalue (1-based) of the min kernel: `((k − ½)π)⁻²`.
pub fn min_kernel_eigenvalue(k: usize) -> f64 {
    let w = (k as f64 - 0.5) * std::f64::consts::PI;
    1.0 / (w * w)
}

/// Eigen-decomposes `(1/G)·[min(t_i, t_j)]` on the uniform grid and returns the top `num_eigs` pairs.
pub fn mercer_min_kernel(grid_size: usize, num_eigs: usize) -> Result<MercerDecomposition> {
    if num_eigs == 0 {
        return Err(Error::InvalidParameter("at least one eigenpair must be requested".into()));
    }
    if grid_size < 8 * num_eigs {
        return Err(Error::InvalidParameter(format!(
            "grid size {grid_size} too coarse for {num_eigs} eigenpairs (need ≥ {})",
            8 * num_eigs
        )));
    }
    let g = grid_size as f64;
    let grid: Vec<f64> = (1..=grid_size).map(|i| i as f64 / g).collect();
    let r = Mat::from_fn(grid_size, grid_size, |i, j| grid[i].min(grid[j]) / g);
    let (vals, vecs) = linalg::sym_eigen(r.as_ref())?;
    let mut eigenvalues = Vec::with_capacity(num_eigs);
    let mut eigenfunctions = Vec::with_capacity(num_eigs);
    for k in 0..num_eigs {
        let col = grid_size - 1 - k;
        eigenvalues.push(vals[col]);
        let sign = if vecs[(0, col)] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * g.sqrt();
        eigenfunctions.push((0..grid_size).map(|i| vecs[(i, col)] * scale).collect());
    }
    Ok(MercerDecomposition { grid, eigenvalues, eigenfunctions })
}
