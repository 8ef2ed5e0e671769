//! Dense matrix kernels: eigendecomposition with multiplicities, numerical
//! rank, definiteness tests, Lyapunov solves, PBH tests and the PD square
//! root.
//!
//! Matrices are `nalgebra` dense matrices. Norms written `‖·‖` are Frobenius
//! norms unless stated otherwise.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative radius used to merge numerically coincident eigenvalues.
pub const CLUSTER_RTOL: f64 = 1e-7;
/// Relative tolerance for structural rank decisions (Markov parameters,
/// transforms, Rosenbrock pencils).
pub const STRUCTURAL_RTOL: f64 = 1e-9;

const SCHUR_MAX_ITER: usize = 10_000;

pub fn check_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn check_square(m: &Mat) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() })
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn herm(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Tolerance below which a real part counts as lying on the imaginary axis.
pub fn axis_tol(a: &Mat) -> f64 {
    1e-7 * (1.0 + a.norm())
}

/// Singular value decomposition `M = U·diag(s)·Vᴴ` with `s` descending.
/// `U` is `r × k` and `V` is `c × k` with `k = min(r, c)`.
#[derive(Debug, Clone)]
pub struct Svd<T: ComplexField> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD of a matrix with `r ≥ c`. Accurate on nearly rank
/// deficient input, where the bidiagonal QR iteration can lose orthogonality.
fn jacobi_tall<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> Svd<T> {
    let (r, c) = m.shape();
    let mut u = m.clone();
    let mut v = DMatrix::<T>::identity(c, c);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dotc(&u.column(j));
                let g = gamma.modulus();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // phase that makes the pair's inner product real and positive
                let phase = gamma.conjugate().unscale(g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut u, &mut v] {
                    for k in 0..mat.nrows() {
                        let xi = mat[(k, i)];
                        let xj = mat[(k, j)] * phase;
                        mat[(k, i)] = xi.scale(cs) - xj.scale(sn);
                        mat[(k, j)] = xi.scale(sn) + xj.scale(cs);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|k| u.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut uo = DMatrix::<T>::zeros(r, c);
    let mut vo = DMatrix::<T>::zeros(c, c);
    let mut s = Vec::with_capacity(c);
    for (k, &i) in order.iter().enumerate() {
        let sigma = norms[i];
        s.push(sigma);
        vo.set_column(k, &v.column(i));
        if sigma > 0.0 {
            uo.set_column(k, &u.column(i).unscale(sigma));
        }
    }
    Svd { u: uo, s, v: vo }
}

pub fn svd_generic<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> Svd<T> {
    let (r, c) = m.shape();
    if r >= c {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.adjoint());
        Svd { u: t.v, s: t.s, v: t.u }
    }
}

pub fn svd(m: &Mat) -> Svd<f64> {
    svd_generic(m)
}

pub fn svd_c(m: &CMat) -> Svd<Complex64> {
    svd_generic(m)
}

/// Descending singular values.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    svd(m).s
}

pub fn singular_values_c(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    svd_c(m).s
}

pub fn default_rank_tol(m: &Mat) -> f64 {
    let smax = singular_values(m).first().copied().unwrap_or(0.0);
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax
}

/// Number of singular values above `tol` (auto: `max(r,c)·eps·σ_max`).
pub fn rank(m: &Mat, tol: Option<f64>) -> usize {
    let sv = singular_values(m);
    let tol = tol.unwrap_or_else(|| {
        m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sv.first().copied().unwrap_or(0.0)
    });
    sv.iter().filter(|&&s| s > tol).count()
}

/// Rank with a tolerance relative to the largest singular value.
pub fn rank_rel(m: &Mat, rtol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

pub fn rank_c(m: &CMat, tol: f64) -> usize {
    singular_values_c(m).iter().filter(|&&s| s > tol).count()
}

/// Right singular vectors of `m` whose singular value is at most `tol`,
/// ordered by decreasing singular value. Missing singular values of a wide
/// matrix count as zero.
fn null_space_generic<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    // Pad to at least c rows so V is square.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let d = svd_generic(&padded);
    let idx: Vec<usize> = (0..c).filter(|&i| d.s[i] <= tol).collect();
    DMatrix::from_fn(c, idx.len(), |i, k| d.v[(i, idx[k])])
}

/// Orthonormal basis (as columns) of the right kernel of `m`.
pub fn null_space(m: &Mat, tol: f64) -> Mat {
    null_space_generic(m, tol)
}

/// Orthonormal basis (as columns) of the right kernel of a complex matrix.
pub fn null_space_c(m: &CMat, tol: f64) -> CMat {
    null_space_generic(m, tol)
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis(m: &Mat, tol: f64) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.nrows(), 0);
    }
    let d = svd(m);
    let k = d.s.iter().filter(|&&s| s > tol).count();
    d.u.columns(0, k).into_owned()
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    check_square(m)?;
    if m.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    let sv = singular_values(m);
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if smax == 0.0 || smin <= 1e-13 * smax {
        return Err(Error::Singular(what.to_string()));
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular(what.to_string()))
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(herm(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn lambda_max_sym(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn lambda_min_sym(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Assemble a block matrix from a grid of blocks. Blocks in a grid row must
/// share a row count, blocks in a grid column a column count; empty blocks
/// carry their shape like any other.
pub fn assemble(grid: &[Vec<&Mat>]) -> Mat {
    let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |b| b.nrows())).collect();
    let widths: Vec<usize> = grid.first().map_or(Vec::new(), |row| row.iter().map(|b| b.ncols()).collect());
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c0 = 0;
        for (j, blk) in row.iter().enumerate() {
            debug_assert_eq!(blk.nrows(), heights[i], "block row height");
            debug_assert_eq!(blk.ncols(), widths[j], "block column width");
            out.view_mut((r0, c0), blk.shape()).copy_from(*blk);
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    out
}

/// Complex counterpart of [`assemble`].
pub fn assemble_c(grid: &[Vec<&CMat>]) -> CMat {
    let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |b| b.nrows())).collect();
    let widths: Vec<usize> = grid.first().map_or(Vec::new(), |row| row.iter().map(|b| b.ncols()).collect());
    let mut out = CMat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c0 = 0;
        for (j, blk) in row.iter().enumerate() {
            out.view_mut((r0, c0), blk.shape()).copy_from(*blk);
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    NegativeDefinite,
    NegativeSemidefinite,
}

/// Tests the definiteness of a symmetric matrix against the absolute
/// eigenvalue tolerance `tol`. The matrix is symmetrized first; asymmetry
/// beyond `max(tol, 1e-9)·(1 + ‖M‖)` is an error.
pub fn definiteness(m: &Mat, mode: Definiteness, tol: f64) -> Result<bool> {
    check_square(m)?;
    let deviation = (m - m.transpose()).norm();
    if deviation > tol.max(1e-9) * (1.0 + m.norm()) {
        return Err(Error::Asymmetric { deviation });
    }
    let ev = sym_eigenvalues(m);
    let (lo, hi) = match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Ok(true),
    };
    Ok(match mode {
        Definiteness::PositiveDefinite => lo > tol,
        Definiteness::PositiveSemidefinite => lo >= -tol,
        Definiteness::NegativeDefinite => hi < -tol,
        Definiteness::NegativeSemidefinite => hi <= tol,
    })
}

/// Group of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub value: Complex64,
    pub members: Vec<usize>,
    pub algebraic: usize,
    pub geometric: usize,
    /// Orthonormal basis of `ker(A - value·I)`, one column per independent
    /// eigenvector.
    pub basis: CMat,
}

impl EigenCluster {
    pub fn is_semisimple(&self) -> bool {
        self.geometric == self.algebraic
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<Complex64>,
    /// Column `i` is an eigenvector for `values[i]`. Defective clusters
    /// repeat their available eigenvectors.
    pub vectors: CMat,
    pub algebraic: Vec<usize>,
    pub geometric: Vec<usize>,
    pub clusters: Vec<EigenCluster>,
}

impl EigenResult {
    pub fn max_real(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn schur_eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let schur = a.clone().try_schur(f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence)?;
    let mut vals: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(vals)
}

/// Eigenvalues, eigenvectors and multiplicities of a real square matrix.
pub fn eig(a: &Mat) -> Result<EigenResult> {
    let n = check_square(a)?;
    check_finite(a)?;
    let values = schur_eigenvalues(a)?;
    let radius = CLUSTER_RTOL * a.norm();

    // single-linkage clustering
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }

    let ac = to_complex(a);
    let mut vectors = CMat::zeros(n, n);
    let mut algebraic = vec![0; n];
    let mut geometric = vec![0; n];
    let mut clusters = Vec::with_capacity(groups.len());
    for members in groups {
        let k = members.len();
        let sum: Complex64 = members.iter().map(|&i| values[i]).sum();
        let mut value = sum / k as f64;
        if value.im.abs() <= radius {
            value.im = 0.0;
        }
        let shifted = &ac - CMat::identity(n, n) * value;
        let sv = singular_values_c(&shifted);
        // Nullity is at least one; beyond that count singular values inside
        // the cluster radius.
        let tol = radius.max(n as f64 * f64::EPSILON * sv.first().copied().unwrap_or(0.0));
        let nullity = sv.iter().filter(|&&s| s <= tol).count().clamp(1, k);
        let basis_all = null_space_c(&shifted, f64::INFINITY);
        // null_space_c with an infinite tolerance returns all right singular
        // vectors ordered by decreasing singular value; keep the last ones.
        let basis = basis_all.columns(n - nullity, nullity).into_owned();
        for (slot, &i) in members.iter().enumerate() {
            vectors.set_column(i, &basis.column(slot.min(nullity - 1)));
            algebraic[i] = k;
            geometric[i] = nullity;
        }
        clusters.push(EigenCluster { value, members, algebraic: k, geometric: nullity, basis });
    }
    Ok(EigenResult { values, vectors, algebraic, geometric, clusters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Hurwitz,
    LyapunovStable,
    Unstable,
}

pub fn stability_class(a: &Mat) -> Result<StabilityClass> {
    stability_class_tol(a, axis_tol(a))
}

pub fn stability_class_tol(a: &Mat, tol: f64) -> Result<StabilityClass> {
    Ok(classify_spectrum(&eig(a)?, tol).0)
}

/// Classification plus the eigenvalue that decided a non-Hurwitz outcome.
pub fn classify_spectrum(e: &EigenResult, tol: f64) -> (StabilityClass, Option<Complex64>) {
    let mut class = StabilityClass::Hurwitz;
    let mut witness = None;
    for c in &e.clusters {
        if c.value.re > tol || (c.value.re.abs() <= tol && !c.is_semisimple()) {
            return (StabilityClass::Unstable, Some(c.value));
        }
        if c.value.re >= -tol {
            class = StabilityClass::LyapunovStable;
            witness = Some(c.value);
        }
    }
    (class, witness)
}

/// Solves `AᵀP + PA = -Q` through the vectorized `n²` linear system.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = check_square(a)?;
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Q is {:?}, A is {n}x{n}", q.shape())));
    }
    check_finite(a)?;
    check_finite(q)?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let vals = schur_eigenvalues(a)?;
    let floor = 1e-10 * a.norm().max(1.0);
    for i in 0..n {
        for j in i..n {
            let s = (vals[i] + vals[j]).norm();
            if s <= floor {
                return Err(Error::SingularLyapunov { pair_sum: s });
            }
        }
    }
    let at = a.transpose();
    let eye = Mat::identity(n, n);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let x = op.full_piv_lu().solve(&rhs).ok_or(Error::SingularLyapunov { pair_sum: 0.0 })?;
    let p = Mat::from_column_slice(n, n, x.as_slice());
    Ok(sym(&p))
}

/// Symmetric positive definite `P` with `AᵀP + PA = 0` for a matrix whose
/// spectrum is purely imaginary and semisimple.
pub fn kernel_pd_solution(a: &Mat) -> Result<Mat> {
    let n = check_square(a)?;
    let e = eig(&a.transpose())?;
    let tol = axis_tol(a);
    let mut p = CMat::zeros(n, n);
    for c in &e.clusters {
        if c.value.re.abs() > tol {
            return Err(Error::NotPurelyImaginary { eigenvalue: c.value });
        }
        if !c.is_semisimple() {
            return Err(Error::Defective { eigenvalue: c.value });
        }
        // Left eigenvectors w of A satisfy AᵀP + PA = 0 for P = Σ w w*.
        p += &c.basis * c.basis.adjoint() * Complex64::new(c.algebraic as f64 / c.geometric as f64, 0.0);
    }
    let mut real = sym(&p.map(|z| z.re));
    let scale = n as f64 / real.trace().max(f64::MIN_POSITIVE);
    real *= scale;
    Ok(real)
}

/// Unique symmetric positive definite square root.
pub fn sqrtm_pd(p: &Mat) -> Result<Mat> {
    let n = check_square(p)?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let deviation = (p - p.transpose()).norm();
    if deviation > 1e-9 * (1.0 + p.norm()) {
        return Err(Error::Asymmetric { deviation });
    }
    let se = SymmetricEigen::new(sym(p));
    let lmin = se.eigenvalues.min();
    let lmax = se.eigenvalues.max();
    if lmin <= n as f64 * f64::EPSILON * lmax.abs() || lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lmin });
    }
    let d = Mat::from_diagonal(&se.eigenvalues.map(f64::sqrt));
    Ok(sym(&(&se.eigenvectors * d * se.eigenvectors.transpose())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbhMode {
    /// `rank [λI − A, B] = n` at every eigenvalue.
    ControllableWith,
    /// `rank [λI − A; C] = n` at every eigenvalue.
    ObservableWith,
}

pub fn default_pbh_tol(a: &Mat, m: &Mat) -> f64 {
    1e-8 * (a.norm() + m.norm()).max(1.0)
}

/// Eigenvalue at which the PBH rank test fails, if any.
pub fn pbh_witness(a: &Mat, m: &Mat, mode: PbhMode, tol: Option<f64>) -> Result<Option<Complex64>> {
    let n = check_square(a)?;
    match mode {
        PbhMode::ControllableWith if m.nrows() != n => {
            return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", m.nrows())))
        }
        PbhMode::ObservableWith if m.ncols() != n => {
            return Err(Error::Dimension(format!("C has {} columns, A is {n}x{n}", m.ncols())))
        }
        _ => {}
    }
    let tol = tol.unwrap_or_else(|| default_pbh_tol(a, m));
    let e = eig(a)?;
    let ac = to_complex(a);
    let mc = to_complex(m);
    for c in &e.clusters {
        let shifted = CMat::identity(n, n) * c.value - &ac;
        let pencil = match mode {
            PbhMode::ControllableWith => {
                let mut p = CMat::zeros(n, n + m.ncols());
                p.view_mut((0, 0), (n, n)).copy_from(&shifted);
                p.view_mut((0, n), mc.shape()).copy_from(&mc);
                p
            }
            PbhMode::ObservableWith => {
                let mut p = CMat::zeros(n + m.nrows(), n);
                p.view_mut((0, 0), (n, n)).copy_from(&shifted);
                p.view_mut((n, 0), mc.shape()).copy_from(&mc);
                p
            }
        };
        if rank_c(&pencil, tol) < n {
            return Ok(Some(c.value));
        }
    }
    Ok(None)
}

pub fn pbh_test(a: &Mat, m: &Mat, mode: PbhMode, tol: Option<f64>) -> Result<bool> {
    Ok(pbh_witness(a, m, mode, tol)?.is_none())
}
