//! Relative degrees, the output-transformation search, the normal form with
//! internal dynamics `z` and output chains `x1` (degree one) and `x2, x3`
//! (degree two), and the split of the zero dynamics into a skew-symmetric
//! critical part and a Hurwitz part.

use std::hash::{DefaultHasher, Hash, Hasher};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkit::{self, Mat, PbhMode, StabilityClass, STRUCTURAL_RTOL};
use crate::sysmodel::StateSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdKind {
    /// Every row has a finite degree and `H(r)` is nonsingular.
    FullRdVector,
    /// Rows of equal degree are independent but `H(r)` as a whole is not.
    LirdOnly,
    None,
}

#[derive(Debug, Clone)]
pub struct RelativeDegreeInfo {
    /// Per-output relative degree; 0 marks a row whose Markov parameters
    /// vanish up to order `n`.
    pub r: Vec<usize>,
    pub h: Mat,
    pub kind: RdKind,
    pub diagnostic: Option<String>,
}

impl RelativeDegreeInfo {
    pub fn at_most_two(&self) -> bool {
        self.kind == RdKind::FullRdVector && self.r.iter().all(|&d| d == 1 || d == 2)
    }
}

fn markov_row_nonzero(row: &Mat, a_norm: f64, j: usize, c_norm: f64, b_norm: f64) -> bool {
    row.norm() > STRUCTURAL_RTOL * c_norm * a_norm.max(1.0).powi(j as i32) * b_norm
}

/// Rank of a matrix after scaling its rows to unit norm.
fn row_scaled_rank(m: &Mat) -> usize {
    let mut s = m.clone();
    for mut row in s.row_iter_mut() {
        let nrm = row.norm();
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    matkit::rank(&s, Some(STRUCTURAL_RTOL))
}

/// Per-row relative degrees, `H(r)` and its classification.
pub fn relative_degree_vector(sys: &StateSpace) -> Result<RelativeDegreeInfo> {
    let p = sys.check_full_rank_ports()?;
    let n = sys.states();
    let a_norm = sys.a.norm();
    let b_norm = sys.b.norm();
    let mut r = vec![0usize; p];
    let mut h = Mat::zeros(p, p);
    let mut diagnostic = None;
    for i in 0..p {
        let c_i = sys.c.rows(i, 1).into_owned();
        let c_norm = c_i.norm();
        let mut row = c_i.clone();
        for j in 0..n {
            let markov = &row * &sys.b;
            if markov_row_nonzero(&markov, a_norm, j, c_norm, b_norm) {
                r[i] = j + 1;
                h.set_row(i, &markov.row(0));
                break;
            }
            row = &row * &sys.a;
        }
        if r[i] == 0 {
            diagnostic = Some(format!("output {} has vanishing Markov parameters up to order {n}", i + 1));
        }
    }
    let kind = if r.contains(&0) {
        RdKind::None
    } else if row_scaled_rank(&h) == p {
        RdKind::FullRdVector
    } else {
        let mut groups_ok = true;
        let mut degrees: Vec<usize> = r.clone();
        degrees.sort_unstable();
        degrees.dedup();
        for d in degrees {
            let idx: Vec<usize> = (0..p).filter(|&i| r[i] == d).collect();
            let g = h.select_rows(idx.iter());
            if row_scaled_rank(&g) < idx.len() {
                groups_ok = false;
                diagnostic = Some(format!("rows of degree {d} in H(r) are dependent"));
            }
        }
        if groups_ok {
            diagnostic = Some("H(r) is singular although equal-degree rows are independent".into());
            RdKind::LirdOnly
        } else {
            RdKind::None
        }
    };
    Ok(RelativeDegreeInfo { r, h, kind, diagnostic })
}

/// Greedy row selection: repeatedly takes the row with the largest residual
/// after projecting out the rows already chosen (ties go to the lower
/// index). Returns the chosen indices in selection order.
fn pivot_rows(m: &Mat, rtol: f64) -> Vec<usize> {
    let scale = m.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut chosen = Vec::new();
    let mut residual = m.clone();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m.nrows() {
            if chosen.contains(&i) {
                continue;
            }
            let nrm = residual.row(i).norm();
            if best.is_none_or(|(_, b)| nrm > b) {
                best = Some((i, nrm));
            }
        }
        match best {
            Some((i, nrm)) if nrm > rtol * scale && scale > 0.0 => {
                let q = residual.row(i).into_owned() / nrm;
                for k in 0..m.nrows() {
                    let coeff = (residual.row(k) * q.transpose())[(0, 0)];
                    let update = &q * coeff;
                    let mut row = residual.row_mut(k);
                    row -= update;
                }
                chosen.push(i);
            }
            _ => return chosen,
        }
    }
}

/// Coefficients `x` with `x · basis ≈ target` (least squares).
fn row_combination(basis: &Mat, target: &Mat) -> Result<Mat> {
    if basis.nrows() == 0 {
        return Ok(Mat::zeros(target.nrows(), 0));
    }
    // x·basis = target  ⇔  basisᵀ·xᵀ = targetᵀ, solved through the pseudo-inverse
    let d = matkit::svd(&basis.transpose());
    let cutoff = STRUCTURAL_RTOL * d.s.first().copied().unwrap_or(0.0);
    let mut x_t = Mat::zeros(basis.nrows(), target.nrows());
    for (k, &sigma) in d.s.iter().enumerate() {
        if sigma > cutoff {
            let coeff = d.u.column(k).transpose() * target.transpose() / sigma;
            x_t += d.v.column(k) * coeff;
        }
    }
    Ok(x_t.transpose())
}

/// Permutation placing degree-1 rows before degree-2 rows, stable otherwise.
fn degree_sort_permutation(r: &[usize]) -> Mat {
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by_key(|&i| r[i]);
    let p = r.len();
    let mut perm = Mat::zeros(p, p);
    for (k, &i) in order.iter().enumerate() {
        perm[(k, i)] = 1.0;
    }
    perm
}

fn with_output(sys: &StateSpace, t_y: &Mat) -> Result<StateSpace> {
    StateSpace::new(sys.a.clone(), sys.b.clone(), t_y * &sys.c, Some(t_y * &sys.d))
}

/// Searches for a nonsingular `T_y` such that `(A, B, T_y C)` has a relative
/// degree vector with entries in `{1, 2}`, sorted with degree-1 rows first.
pub fn find_output_transformation(sys: &StateSpace) -> Result<(Mat, RelativeDegreeInfo)> {
    let p = sys.check_full_rank_ports()?;
    if !matkit::pbh_test(&sys.a, &sys.b, PbhMode::ControllableWith, None)? {
        return Err(Error::NotControllable);
    }

    // Stage 1: zero the dependent rows of CB.
    let m0 = &sys.c * &sys.b;
    let independent = pivot_rows(&m0, STRUCTURAL_RTOL);
    let mut t_y = Mat::identity(p, p);
    let basis = m0.select_rows(independent.iter());
    let dependent: Vec<usize> = (0..p).filter(|i| !independent.contains(i)).collect();
    for &i in &dependent {
        let coeff = row_combination(&basis, &m0.rows(i, 1).into_owned())?;
        for (k, &j) in independent.iter().enumerate() {
            t_y[(i, j)] -= coeff[(0, k)];
        }
    }

    // Stage 2: the zeroed rows must reach the input at the next derivative,
    // independently of each other and of the stage-1 rows.
    if !dependent.is_empty() {
        let c1 = &t_y * &sys.c;
        let ab = &sys.a * &sys.b;
        let second = c1.select_rows(dependent.iter()) * &ab;
        let own = pivot_rows(&second, STRUCTURAL_RTOL);
        if own.len() < dependent.len() {
            // A further elimination inside the group would push some output
            // to degree three or more.
            return Err(Error::NoRdLeqTwo(format!(
                "{} of {} outputs with vanishing CB have dependent rows in CAB; some relative degree is at least 3",
                dependent.len() - own.len(),
                dependent.len()
            )));
        }
    }
    let info = relative_degree_vector(&with_output(sys, &t_y)?)?;
    if !info.at_most_two() {
        let why = info.diagnostic.clone().unwrap_or_else(|| format!("relative degrees {:?}", info.r));
        return Err(Error::NoRdLeqTwo(why));
    }
    let perm = degree_sort_permutation(&info.r);
    let t_y = &perm * t_y;
    let info = relative_degree_vector(&with_output(sys, &t_y)?)?;
    Ok((t_y, info))
}

/// Output, state and input transforms with their inverses.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    pub t_y: Mat,
    pub t_y_inv: Mat,
    pub t_x: Mat,
    pub t_x_inv: Mat,
    pub t_u: Mat,
    pub t_u_inv: Mat,
}

impl TransformSet {
    pub fn new(t_y: Mat, t_x: Mat, t_u: Mat) -> Result<Self> {
        let t_y_inv = matkit::inverse(&t_y, "T_y")?;
        let t_x_inv = matkit::inverse(&t_x, "T_x")?;
        let t_u_inv = matkit::inverse(&t_u, "T_u")?;
        Ok(Self { t_y, t_y_inv, t_x, t_x_inv, t_u, t_u_inv })
    }

    /// Stable identifier of this frame, used to detect mixing gains and
    /// transforms from different runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in [&self.t_y, &self.t_x, &self.t_u] {
            m.shape().hash(&mut h);
            for v in m.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Normal form. Coordinates are ordered `(z, x1, x2, x3)` with sizes
/// `(m, p1, p2, p2)`; the transformed output is `(x1, x2)`.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub p1: usize,
    pub p2: usize,
    pub m: usize,
    pub a00: Mat,
    pub a01: Mat,
    pub a02: Mat,
    pub a03: Mat,
    pub a10: Mat,
    pub a11: Mat,
    pub a12: Mat,
    pub a13: Mat,
    pub a30: Mat,
    pub a31: Mat,
    pub a32: Mat,
    pub a33: Mat,
    pub a_tilde: Mat,
    pub b_tilde: Mat,
    pub c_tilde: Mat,
    pub transforms: TransformSet,
    pub source: StateSpace,
}

impl NormalForm {
    pub fn n(&self) -> usize {
        self.m + self.p1 + 2 * self.p2
    }

    pub fn p(&self) -> usize {
        self.p1 + self.p2
    }

    /// Offsets of the `z`, `x1`, `x2`, `x3` blocks.
    pub fn offsets(&self) -> [usize; 4] {
        [0, self.m, self.m + self.p1, self.m + self.p1 + self.p2]
    }

    /// Input matrix with identity blocks feeding `x1` and `x3`.
    pub fn structural_b(m: usize, p1: usize, p2: usize) -> Mat {
        let n = m + p1 + 2 * p2;
        let mut b = Mat::zeros(n, p1 + p2);
        for i in 0..p1 {
            b[(m + i, i)] = 1.0;
        }
        for i in 0..p2 {
            b[(m + p1 + p2 + i, p1 + i)] = 1.0;
        }
        b
    }

    /// Output matrix reading `x1` and `x2`.
    pub fn structural_c(m: usize, p1: usize, p2: usize) -> Mat {
        let n = m + p1 + 2 * p2;
        let mut c = Mat::zeros(p1 + p2, n);
        for i in 0..p1 + p2 {
            c[(i, m + i)] = 1.0;
        }
        c
    }

    /// Builds the normal form from explicit transforms. The transformed
    /// system must already have the block structure; small deviations are
    /// snapped to exact zeros and identities.
    pub fn from_transforms(sys: &StateSpace, transforms: TransformSet) -> Result<Self> {
        let p = sys.check_full_rank_ports()?;
        let n = sys.states();
        if transforms.t_y.shape() != (p, p) || transforms.t_u.shape() != (p, p) || transforms.t_x.shape() != (n, n) {
            return Err(Error::Dimension("transform shapes do not match the system".into()));
        }
        let info = relative_degree_vector(&with_output(sys, &transforms.t_y)?)?;
        if !info.at_most_two() {
            return Err(Error::NoRdLeqTwo(format!("output transform gives relative degrees {:?}", info.r)));
        }
        if info.r.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("T_y must list degree-1 outputs first".into()));
        }
        let p1 = info.r.iter().filter(|&&d| d == 1).count();
        let p2 = p - p1;
        if n < p + p2 {
            return Err(Error::Dimension(format!("{n} states cannot hold {p1} degree-1 and {p2} degree-2 outputs")));
        }
        let m = n - p - p2;

        let a_t = &transforms.t_x * &sys.a * &transforms.t_x_inv;
        let b_t = &transforms.t_x * &sys.b * &transforms.t_u_inv;
        let c_t = &transforms.t_y * &sys.c * &transforms.t_x_inv;
        let scale = 1.0 + transforms.t_x.norm() * transforms.t_x_inv.norm() * (1.0 + sys.a.norm() + sys.b.norm() + sys.c.norm());
        let tol = 1e-8 * scale * transforms.t_u_inv.norm().max(transforms.t_y.norm()).max(1.0);

        let b_s = Self::structural_b(m, p1, p2);
        let c_s = Self::structural_c(m, p1, p2);
        if (&b_t - &b_s).norm() > tol {
            return Err(Error::InvalidArgument(format!(
                "transformed input matrix lacks the normal-form structure (deviation {:.3e})",
                (&b_t - &b_s).norm()
            )));
        }
        if (&c_t - &c_s).norm() > tol {
            return Err(Error::InvalidArgument(format!(
                "transformed output matrix lacks the normal-form structure (deviation {:.3e})",
                (&c_t - &c_s).norm()
            )));
        }
        let mut a_t = a_t;
        let x2 = m + p1;
        let mut x2_rows = Mat::zeros(p2, n);
        for i in 0..p2 {
            x2_rows[(i, m + p1 + p2 + i)] = 1.0;
        }
        let dev = (a_t.rows(x2, p2) - &x2_rows).norm();
        if dev > tol {
            return Err(Error::InvalidArgument(format!("x2 rows of the transformed state matrix deviate by {dev:.3e}")));
        }
        a_t.rows_mut(x2, p2).copy_from(&x2_rows);

        let o = [0, m, m + p1, m + p1 + p2];
        let w = [m, p1, p2, p2];
        let blk = |i: usize, j: usize| a_t.view((o[i], o[j]), (w[i], w[j])).into_owned();
        Ok(Self {
            p1,
            p2,
            m,
            a00: blk(0, 0),
            a01: blk(0, 1),
            a02: blk(0, 2),
            a03: blk(0, 3),
            a10: blk(1, 0),
            a11: blk(1, 1),
            a12: blk(1, 2),
            a13: blk(1, 3),
            a30: blk(3, 0),
            a31: blk(3, 1),
            a32: blk(3, 2),
            a33: blk(3, 3),
            a_tilde: a_t,
            b_tilde: b_s,
            c_tilde: c_s,
            transforms,
            source: sys.clone(),
        })
    }

    /// Transformed system `(Ã, B̃, C̃)`.
    pub fn system(&self) -> StateSpace {
        StateSpace {
            a: self.a_tilde.clone(),
            b: self.b_tilde.clone(),
            c: self.c_tilde.clone(),
            d: Mat::zeros(self.p(), self.p()),
            name: None,
        }
    }
}

/// Sign convention for basis rows: the largest-magnitude entry is positive.
fn normalize_row_signs(m: &mut Mat) {
    for mut row in m.row_iter_mut() {
        let (mut best, mut idx) = (0.0, 0);
        for (k, v) in row.iter().enumerate() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                idx = k;
            }
        }
        if row[idx] < 0.0 {
            row.neg_mut();
        }
    }
}

/// Constructs `T_x = [C̃_z; C̃_O; C̃_T; C̃_T A]` and `T_u` from an output
/// transform and returns the normal form.
pub fn to_normal_form(sys: &StateSpace, t_y: &Mat) -> Result<NormalForm> {
    let p = sys.check_full_rank_ports()?;
    let n = sys.states();
    if t_y.shape() != (p, p) {
        return Err(Error::Dimension(format!("T_y must be {p}x{p}")));
    }
    let info = relative_degree_vector(&with_output(sys, t_y)?)?;
    if !info.at_most_two() {
        return Err(Error::NoRdLeqTwo(
            info.diagnostic.clone().unwrap_or_else(|| format!("relative degrees {:?}", info.r)),
        ));
    }
    let t_y = degree_sort_permutation(&info.r) * t_y;
    let c_t = &t_y * &sys.c;
    let p1 = info.r.iter().filter(|&&d| d == 1).count();
    let p2 = p - p1;
    if n < p + p2 {
        return Err(Error::Dimension(format!("{n} states cannot hold {p1} degree-1 and {p2} degree-2 outputs")));
    }
    let m = n - p - p2;
    let c_o = c_t.rows(0, p1).into_owned();
    let c_tt = c_t.rows(p1, p2).into_owned();
    let c_ta = &c_tt * &sys.a;

    // C̃_z: orthonormal complement of the rows of C̃_T inside the left null
    // space of B.
    let left_null = matkit::null_space(&sys.b.transpose(), STRUCTURAL_RTOL * sys.b.norm().max(1.0)).transpose();
    let c_z = if m == 0 {
        Mat::zeros(0, n)
    } else {
        let proj_rows = if p2 > 0 {
            let q = matkit::range_basis(&c_tt.transpose(), STRUCTURAL_RTOL * c_tt.norm());
            &left_null - &left_null * &q * q.transpose()
        } else {
            left_null.clone()
        };
        let basis = matkit::range_basis(&proj_rows.transpose(), STRUCTURAL_RTOL * left_null.norm().max(1.0));
        if basis.ncols() < m {
            return Err(Error::RankDeficient(format!(
                "cannot complete the internal coordinates: found {} of {m} rows",
                basis.ncols()
            )));
        }
        let mut cz = basis.columns(0, m).transpose();
        normalize_row_signs(&mut cz);
        cz
    };
    let t_x = matkit::assemble(&[vec![&c_z], vec![&c_o], vec![&c_tt], vec![&c_ta]]);
    let io_rows = matkit::assemble(&[vec![&c_o], vec![&c_ta]]);
    let t_u = io_rows * &sys.b;
    let transforms = TransformSet::new(t_y, t_x, t_u)?;
    NormalForm::from_transforms(sys, transforms)
}

/// `S A00 S⁻¹ = diag(A00a, A00b)` with `A00a` skew-symmetric and `A00b`
/// Hurwitz. Coupling blocks are given in the rotated coordinates.
#[derive(Debug, Clone)]
pub struct ZeroDynamicsSplit {
    pub s: Mat,
    pub s_inv: Mat,
    pub m_a: usize,
    pub m_b: usize,
    pub a00a: Mat,
    pub a00b: Mat,
    pub a01a: Mat,
    pub a01b: Mat,
    pub a02a: Mat,
    pub a02b: Mat,
    pub a03a: Mat,
    pub a03b: Mat,
}

impl ZeroDynamicsSplit {
    /// `diag(A00a, A00b)`.
    pub fn a00_rotated(&self) -> Mat {
        matkit::block_diag(&self.a00a, &self.a00b)
    }
}

/// Zero-dynamics stability check returning the offending eigenvalue.
fn zero_dynamics_class(a00: &Mat) -> Result<(StabilityClass, Option<Complex64>)> {
    let e = matkit::eig(a00)?;
    Ok(matkit::classify_spectrum(&e, matkit::axis_tol(a00)))
}

pub fn split_zero_dynamics(nf: &NormalForm) -> Result<ZeroDynamicsSplit> {
    let m = nf.m;
    let split_rows = |x: &Mat, s: &Mat, m_a: usize| {
        let r = s * x;
        (r.rows(0, m_a).into_owned(), r.rows(m_a, m - m_a).into_owned())
    };
    if m == 0 {
        let e = |c| Mat::zeros(0, c);
        return Ok(ZeroDynamicsSplit {
            s: Mat::zeros(0, 0),
            s_inv: Mat::zeros(0, 0),
            m_a: 0,
            m_b: 0,
            a00a: Mat::zeros(0, 0),
            a00b: Mat::zeros(0, 0),
            a01a: e(nf.p1),
            a01b: e(nf.p1),
            a02a: e(nf.p2),
            a02b: e(nf.p2),
            a03a: e(nf.p2),
            a03b: e(nf.p2),
        });
    }
    let a00 = &nf.a00;
    let (class, witness) = zero_dynamics_class(a00)?;
    if class == StabilityClass::Unstable {
        return Err(Error::NotWeaklyMinimumPhase { witness: witness.unwrap_or_default() });
    }
    let sv = matkit::singular_values(a00);
    if sv.last().copied().unwrap_or(0.0) <= 1e-12 * sv[0].max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroAtOrigin);
    }

    let tol = matkit::axis_tol(a00);
    let e = matkit::eig(a00)?;
    let mut p_c = Mat::identity(m, m);
    let mut m_a = 0;
    for c in &e.clusters {
        if c.value.re.abs() <= tol {
            m_a += c.algebraic;
            if c.value.im > 0.0 {
                let w2 = c.value.im * c.value.im;
                p_c *= a00 * a00 + Mat::identity(m, m) * w2;
            }
        }
    }
    let (s, s_inv) = if m_a == 0 {
        (Mat::identity(m, m), Mat::identity(m, m))
    } else {
        let d = matkit::svd(&p_c);
        let m_b = m - m_a;
        let v_c = d.v.columns(m_b, m_a).into_owned();
        let v_h = d.u.columns(0, m_b).into_owned();
        let v = matkit::assemble(&[vec![&v_c, &v_h]]);
        let w = matkit::inverse(&v, "spectral basis")?;
        let rotated = &w * a00 * &v;
        let a_c = rotated.view((0, 0), (m_a, m_a)).into_owned();
        let p = matkit::kernel_pd_solution(&a_c)?;
        let s_c = matkit::sqrtm_pd(&p)?;
        let s_c_inv = matkit::inverse(&s_c, "critical similarity")?;
        let eye_b = Mat::identity(m_b, m_b);
        let s = matkit::block_diag(&s_c, &eye_b) * &w;
        let s_inv = &v * matkit::block_diag(&s_c_inv, &eye_b);
        (s, s_inv)
    };
    let rotated = &s * a00 * &s_inv;
    let m_b = m - m_a;
    let a00a = {
        let blk = rotated.view((0, 0), (m_a, m_a)).into_owned();
        (&blk - blk.transpose()) * 0.5
    };
    let a00b = rotated.view((m_a, m_a), (m_b, m_b)).into_owned();
    let (a01a, a01b) = split_rows(&nf.a01, &s, m_a);
    let (a02a, a02b) = split_rows(&nf.a02, &s, m_a);
    let (a03a, a03b) = split_rows(&nf.a03, &s, m_a);
    Ok(ZeroDynamicsSplit { s, s_inv, m_a, m_b, a00a, a00b, a01a, a01b, a02a, a02b, a03a, a03b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseInfo {
    pub weakly_minimum_phase: bool,
    pub minimum_phase: bool,
}

pub fn phase_classification(nf: &NormalForm) -> Result<PhaseInfo> {
    if nf.m == 0 {
        return Ok(PhaseInfo { weakly_minimum_phase: true, minimum_phase: true });
    }
    let (class, _) = zero_dynamics_class(&nf.a00)?;
    Ok(PhaseInfo {
        weakly_minimum_phase: class != StabilityClass::Unstable,
        minimum_phase: class == StabilityClass::Hurwitz,
    })
}
