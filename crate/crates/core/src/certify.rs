//! Membership tests for the negative-imaginary classes: sampled frequency
//! checks, residues at imaginary-axis poles, state-space certificate
//! verification and the DC-gain test for positive-feedback loops.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkit::{self, CMat, Definiteness, Mat};
use crate::par::{par_map, Execution};
use crate::sysmodel::{self, StateSpace, TfEvaluator};

/// Margin an NI grid point may fall below zero and still pass.
pub const NI_GRID_TOL: f64 = 1e-8;
/// Strict positivity floor for SNI and SSNI grid points.
pub const STRICT_FLOOR: f64 = 1e-10;
/// Frequencies standing in for the SSNI limits at infinity and at zero.
pub const SSNI_HIGH_PROXY: f64 = 1e6;
pub const SSNI_LOW_PROXY: f64 = 1e-6;
/// Level of output strictness reachable by the OSNI construction.
pub fn osni_epsilon_max() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NiClass {
    Ni,
    Sni,
    Osni,
    Ssni,
}

impl fmt::Display for NiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NiClass::Ni => "NI",
            NiClass::Sni => "SNI",
            NiClass::Osni => "OSNI",
            NiClass::Ssni => "SSNI",
        })
    }
}

impl FromStr for NiClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ni" => Ok(NiClass::Ni),
            "sni" => Ok(NiClass::Sni),
            "osni" => Ok(NiClass::Osni),
            "ssni" => Ok(NiClass::Ssni),
            other => Err(Error::InvalidArgument(format!("unknown class {other:?}"))),
        }
    }
}

/// Log-spaced sample of `(0, ∞)`.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Points within `exclusion_rtol·(1 + |λ|)` of a pole `λ` are skipped.
    pub exclusion_rtol: f64,
}

impl FrequencyGrid {
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || count == 0 {
            return Err(Error::InvalidArgument(format!("bad grid [{lo}, {hi}] with {count} points")));
        }
        let (l0, l1) = (lo.log10(), hi.log10());
        let omegas = if count == 1 {
            vec![lo]
        } else {
            (0..count).map(|k| 10f64.powf(l0 + (l1 - l0) * k as f64 / (count - 1) as f64)).collect()
        };
        Ok(Self { omegas, lo, hi, exclusion_rtol: 1e-6 })
    }

    pub fn with_points(count: usize) -> Result<Self> {
        Self::log_spaced(1e-4, 1e4, count)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn excluding(&self, poles: &[Complex64]) -> Vec<f64> {
        self.omegas
            .iter()
            .copied()
            .filter(|&w| {
                let s = Complex64::new(0.0, w);
                poles.iter().all(|&l| (s - l).norm() > self.exclusion_rtol * (1.0 + l.norm()))
            })
            .collect()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::log_spaced(1e-4, 1e4, 400).expect("valid default grid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    pub class: Option<NiClass>,
    pub worst_omega: Option<f64>,
    pub worst_margin: Option<f64>,
    pub worst_eigenvalue: Option<Complex64>,
    pub notes: Vec<String>,
}

impl Verdict {
    fn new(class: Option<NiClass>) -> Self {
        Self { holds: true, class, worst_omega: None, worst_margin: None, worst_eigenvalue: None, notes: Vec::new() }
    }

    fn fail(&mut self, note: impl Into<String>) {
        self.holds = false;
        self.notes.push(note.into());
    }
}

/// `j(R − R*)`, Hermitian by construction.
fn imaginary_part_matrix(r: &CMat) -> CMat {
    (r - r.adjoint()).map(|z| z * Complex64::new(0.0, 1.0))
}

fn min_herm_eig(m: &CMat) -> f64 {
    matkit::hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Smallest eigenvalue of the defining Hermitian matrix at one frequency.
/// For OSNI the value is divided by `max(1, ω)`.
fn grid_margin(ev: &TfEvaluator, d: &CMat, class: NiClass, eps: f64, w: f64) -> Result<f64> {
    let r = ev.eval(Complex64::new(0.0, w))?;
    let herm = imaginary_part_matrix(&r);
    Ok(match class {
        NiClass::Osni => {
            let rbar = &r - d;
            let m = herm.map(|z| z * w) - (rbar.adjoint() * &rbar).map(|z| z * (eps * w * w));
            min_herm_eig(&m) / w.max(1.0)
        }
        _ => min_herm_eig(&herm),
    })
}

/// Residue `K0 = lim (s − jω0)·j·R(s)` at an imaginary-axis pole.
#[derive(Debug, Clone)]
pub struct ResidueCheck {
    /// Hermitian part of the residue.
    pub k0: CMat,
    /// `‖K0 − K0*‖` before symmetrization.
    pub hermitian_defect: f64,
    pub psd: bool,
}

/// Residue through the spectral projector of the pole. The pole must be
/// semisimple; a semisimple cluster of size one is the simple case.
pub fn residue_at_imaginary_pole(sys: &StateSpace, omega0: f64) -> Result<ResidueCheck> {
    let raw = raw_residue(sys, omega0)?;
    let defect = (&raw - raw.adjoint()).norm();
    let k0 = matkit::herm(&raw);
    let tol = 1e-8 * (1.0 + k0.norm());
    let psd = matkit::hermitian_eigenvalues(&k0).first().is_none_or(|&l| l >= -tol);
    Ok(ResidueCheck { k0, hermitian_defect: defect, psd })
}

/// Unsymmetrized residue `j·C·P·B` with `P` the spectral projector at `jω0`.
pub fn raw_residue(sys: &StateSpace, omega0: f64) -> Result<CMat> {
    if omega0.is_nan() || omega0 <= 0.0 {
        return Err(Error::InvalidArgument("omega0 must be positive".into()));
    }
    let target = Complex64::new(0.0, omega0);
    let n = sys.states();
    let e = matkit::eig(&sys.a)?;
    let tol = matkit::axis_tol(&sys.a);
    let cluster = e
        .clusters
        .iter()
        .filter(|c| (c.value - target).norm() <= tol.max(1e-6 * (1.0 + omega0)))
        .min_by(|x, y| (x.value - target).norm().total_cmp(&(y.value - target).norm()))
        .ok_or_else(|| Error::InvalidArgument(format!("no pole at j{omega0}")))?;
    if !cluster.is_semisimple() {
        return Err(Error::NonSimplePole(cluster.value));
    }
    let lambda = cluster.value;
    let v = &cluster.basis;
    // left eigenvectors: w* A = λ w*  ⇔  Aᵀ w = conj(λ) w
    let at = matkit::to_complex(&sys.a.transpose());
    let shifted = at - CMat::identity(n, n) * lambda.conj();
    let all = matkit::null_space_c(&shifted, f64::INFINITY);
    let k = cluster.geometric;
    let w = all.columns(n - k, k).into_owned();
    let gram = w.adjoint() * v;
    let gram_inv = gram.try_inverse().ok_or_else(|| Error::Singular("left/right eigenvector pairing".into()))?;
    let projector = v * gram_inv * w.adjoint();
    let c = matkit::to_complex(&sys.c);
    let b = matkit::to_complex(&sys.b);
    Ok((c * projector * b).map(|z| z * Complex64::new(0.0, 1.0)))
}

pub fn classify_freq(sys: &StateSpace, class: NiClass, grid: &FrequencyGrid, eps: Option<f64>) -> Result<Verdict> {
    classify_freq_with(sys, class, grid, eps, Execution::default())
}

/// Sampled check of the frequency-domain definition of `class`.
pub fn classify_freq_with(
    sys: &StateSpace,
    class: NiClass,
    grid: &FrequencyGrid,
    eps: Option<f64>,
    exec: Execution,
) -> Result<Verdict> {
    sys.ports()?;
    let eps = match (class, eps) {
        (NiClass::Osni, Some(e)) if e > 0.0 && e.is_finite() => e,
        (NiClass::Osni, _) => return Err(Error::InvalidArgument("OSNI needs a positive epsilon".into())),
        _ => 0.0,
    };
    let ev = TfEvaluator::new(sys)?;
    let tol = matkit::axis_tol(&sys.a);
    let mut verdict = Verdict::new(Some(class));
    let eig = matkit::eig(&sys.a)?;

    match class {
        NiClass::Ni => {
            for c in &eig.clusters {
                if c.value.norm() <= tol || c.value.re > tol {
                    return Err(Error::PoleInForbiddenRegion { pole: c.value });
                }
            }
            for c in eig.clusters.iter().filter(|c| c.value.re.abs() <= tol && c.value.im > 0.0) {
                verdict.notes.push(format!(
                    "imaginary-axis pole {:.6}j treated as simple within cluster radius {:.1e}",
                    c.value.im,
                    matkit::CLUSTER_RTOL * sys.a.norm()
                ));
                match residue_at_imaginary_pole(sys, c.value.im) {
                    Ok(r) if r.psd => {}
                    Ok(r) => {
                        verdict.worst_eigenvalue = Some(c.value);
                        verdict.worst_margin = matkit::hermitian_eigenvalues(&r.k0).first().copied();
                        verdict.fail(format!("residue at {:.6}j is not positive semidefinite", c.value.im));
                    }
                    Err(Error::NonSimplePole(p)) => {
                        verdict.worst_eigenvalue = Some(p);
                        verdict.fail(format!("imaginary-axis pole {p} is not simple"));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        _ => {
            for c in &eig.clusters {
                if c.value.re >= -tol {
                    return Err(Error::PoleInForbiddenRegion { pole: c.value });
                }
            }
        }
    }

    let omegas = grid.excluding(ev.poles());
    if omegas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let d = matkit::to_complex(&sys.d);
    let margins = par_map(&omegas, exec, |&w| grid_margin(&ev, &d, class, eps, w));
    let mut worst = (f64::INFINITY, 0.0);
    for (w, m) in omegas.iter().zip(margins) {
        let m = m?;
        if m < worst.0 {
            worst = (m, *w);
        }
    }
    let (min_margin, at) = worst;
    verdict.worst_omega = Some(at);
    verdict.worst_margin = Some(verdict.worst_margin.map_or(min_margin, |r| r.min(min_margin)));
    let grid_ok = match class {
        NiClass::Ni => min_margin >= -NI_GRID_TOL,
        NiClass::Osni => min_margin >= -NI_GRID_TOL,
        NiClass::Sni | NiClass::Ssni => min_margin >= STRICT_FLOOR,
    };
    if class == NiClass::Osni {
        verdict.notes.push("OSNI margins are divided by max(1, ω)".into());
    }
    if !grid_ok {
        verdict.fail(format!("defining matrix has eigenvalue {min_margin:.3e} at ω = {at:.4e}"));
    }

    if class == NiClass::Ssni {
        let hi = imaginary_part_matrix(&ev.eval(Complex64::new(0.0, SSNI_HIGH_PROXY))?)
            .map(|z| z * SSNI_HIGH_PROXY);
        let lo = imaginary_part_matrix(&ev.eval(Complex64::new(0.0, SSNI_LOW_PROXY))?)
            .map(|z| z / SSNI_LOW_PROXY);
        let (hi_min, lo_min) = (min_herm_eig(&hi), min_herm_eig(&lo));
        verdict.notes.push(format!(
            "limit conditions evaluated at ω = {SSNI_HIGH_PROXY:e} (min eig {hi_min:.3e}) and ω = {SSNI_LOW_PROXY:e} (min eig {lo_min:.3e})"
        ));
        if hi_min < STRICT_FLOOR {
            verdict.worst_margin = Some(verdict.worst_margin.unwrap_or(hi_min).min(hi_min));
            verdict.fail("high-frequency limit condition fails");
        }
        if lo_min < STRICT_FLOOR {
            verdict.worst_margin = Some(verdict.worst_margin.unwrap_or(lo_min).min(lo_min));
            verdict.fail("low-frequency limit condition fails");
        }
    }
    Ok(verdict)
}

/// Residuals of the certificate inequalities, recomputed on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `λ_max(AY + YAᵀ [+ ε(CAY)ᵀCAY])`.
    pub lyap_residual: f64,
    /// `‖B + AYCᵀ‖`.
    pub coupling_residual: f64,
    /// `λ_min(Y)`.
    pub pd_margin: f64,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    y: Mat,
    epsilon: Option<f64>,
    class: NiClass,
    residuals: Residuals,
}

impl Certificate {
    /// Evaluates `Y` against `sys`.
    pub fn evaluate(sys: &StateSpace, class: NiClass, y: Mat, epsilon: Option<f64>) -> Result<Self> {
        let n = sys.states();
        if y.shape() != (n, n) {
            return Err(Error::Dimension(format!("Y is {:?}, system has {n} states", y.shape())));
        }
        matkit::check_finite(&y)?;
        let deviation = (&y - y.transpose()).norm();
        if deviation > 1e-9 * (1.0 + y.norm()) {
            return Err(Error::Asymmetric { deviation });
        }
        let y = matkit::sym(&y);
        let ay = &sys.a * &y;
        let mut lyap = &ay + ay.transpose();
        if class == NiClass::Osni {
            let e = epsilon.ok_or_else(|| Error::InvalidArgument("OSNI certificate needs epsilon".into()))?;
            let cay = &sys.c * &ay;
            lyap += cay.transpose() * cay * e;
        }
        let coupling = &sys.b + &ay * sys.c.transpose();
        let residuals = Residuals {
            lyap_residual: matkit::lambda_max_sym(&lyap),
            coupling_residual: coupling.norm(),
            pd_margin: matkit::lambda_min_sym(&y),
        };
        Ok(Self { y, epsilon: if class == NiClass::Osni { epsilon } else { None }, class, residuals })
    }

    pub fn y(&self) -> &Mat {
        &self.y
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn class(&self) -> NiClass {
        self.class
    }

    pub fn residuals(&self) -> Residuals {
        self.residuals
    }
}

/// Normal rank probe point for `R(s) + R(−s)ᵀ`.
const NORMAL_RANK_PROBE: Complex64 = Complex64::new(1.2345, 0.6789);

/// Checks `Y` against the state-space lemma of `class` (NI, OSNI or SSNI).
pub fn verify_certificate(sys: &StateSpace, class: NiClass, y: &Mat, eps: Option<f64>) -> Result<(Verdict, Certificate)> {
    if class == NiClass::Sni {
        return Err(Error::InvalidArgument("no state-space certificate is defined for SNI".into()));
    }
    let p = sys.ports()?;
    if class == NiClass::Osni && !eps.is_some_and(|e| e > 0.0 && e.is_finite()) {
        return Err(Error::InvalidArgument("OSNI needs a positive epsilon".into()));
    }
    let cert = Certificate::evaluate(sys, class, y.clone(), eps)?;
    let res = cert.residuals();
    let mut verdict = Verdict::new(Some(class));
    verdict.worst_margin = Some(res.lyap_residual);

    let d_dev = (&sys.d - sys.d.transpose()).norm();
    if d_dev > 1e-10 * (1.0 + sys.d.norm()) {
        verdict.fail(format!("D is not symmetric (deviation {d_dev:.3e})"));
    }
    match class {
        NiClass::Ni | NiClass::Osni => {
            let mm = sysmodel::is_minimal(sys)?;
            if !mm.is_minimal() {
                verdict.fail(format!(
                    "realization is not minimal (controllable {}, observable {})",
                    mm.controllable, mm.observable
                ));
            }
            let sv = matkit::singular_values(&sys.a);
            if sv.last().is_some_and(|&s| s <= 1e-12 * sv[0]) {
                verdict.fail("A is singular");
            }
        }
        _ => {
            let e = matkit::eig(&sys.a)?;
            let n = sys.states();
            let ac = matkit::to_complex(&sys.a);
            let tol_b = matkit::default_pbh_tol(&sys.a, &sys.b);
            let tol_c = matkit::default_pbh_tol(&sys.a, &sys.c);
            for c in &e.clusters {
                let shifted = CMat::identity(n, n) * c.value - &ac;
                let ctrl = matkit::rank_c(
                    &matkit::assemble_c(&[vec![&shifted, &matkit::to_complex(&sys.b)]]),
                    tol_b,
                ) == n;
                let obs = matkit::rank_c(
                    &matkit::assemble_c(&[vec![&shifted], vec![&matkit::to_complex(&sys.c)]]),
                    tol_c,
                ) == n;
                if obs && !ctrl {
                    verdict.worst_eigenvalue = Some(c.value);
                    verdict.fail(format!("mode {} is observable but uncontrollable", c.value));
                }
            }
            let ev = TfEvaluator::new(sys)?;
            let phi = ev.eval(NORMAL_RANK_PROBE)? + ev.eval(-NORMAL_RANK_PROBE)?.transpose();
            let rk = matkit::rank_c(&phi, 1e-9 * phi.norm().max(f64::MIN_POSITIVE));
            if rk < p {
                verdict.fail(format!("R(s) + R(-s)^T has rank {rk} < {p} at the probe point"));
            }
        }
    }

    let y_scale = sys.a.norm() * cert.y().norm();
    let coupling_tol = 1e-9 * 1f64.max(sys.b.norm()).max(y_scale * sys.c.norm());
    if res.pd_margin <= f64::EPSILON * cert.y().norm() * sys.states() as f64 {
        verdict.fail(format!("Y is not positive definite (min eigenvalue {:.3e})", res.pd_margin));
    }
    if res.coupling_residual > coupling_tol {
        verdict.fail(format!("‖B + AYC^T‖ = {:.3e} exceeds {coupling_tol:.1e}", res.coupling_residual));
    }
    let lyap_ok = match class {
        NiClass::Ssni => res.lyap_residual <= -STRICT_FLOOR,
        _ => res.lyap_residual <= 1e-9 * (1.0 + y_scale),
    };
    if !lyap_ok {
        verdict.fail(format!("Lyapunov-type inequality violated (max eigenvalue {:.3e})", res.lyap_residual));
    }
    Ok((verdict, cert))
}

/// DC-gain test for the positive-feedback loop of an NI system `r` with an
/// SNI system `rs`. Class membership of the two systems is taken as given.
pub fn dc_gain_interconnection_stable(r: &StateSpace, rs: &StateSpace) -> Result<Verdict> {
    let p = r.ports()?;
    if rs.ports()? != p {
        return Err(Error::Dimension(format!("port counts differ: {p} and {}", rs.inputs())));
    }
    let mut verdict = Verdict::new(None);
    verdict.notes.push("first system asserted NI, second asserted SNI".into());
    let dd = &r.d * &rs.d;
    if dd.norm() > 1e-10 * (1.0 + r.d.norm() * rs.d.norm()) {
        verdict.fail("R(∞)R_s(∞) ≠ 0");
    }
    if !matkit::definiteness(&rs.d, Definiteness::PositiveSemidefinite, 1e-10 * (1.0 + rs.d.norm()))? {
        verdict.fail("R_s(∞) is not positive semidefinite");
    }
    let product = sysmodel::dc_gain(r)? * sysmodel::dc_gain(rs)?;
    let e = matkit::eig(&product)?;
    let (lmax, at) = e
        .values
        .iter()
        .map(|z| (z.re, *z))
        .fold((f64::NEG_INFINITY, Complex64::default()), |acc, x| if x.0 > acc.0 { x } else { acc });
    let lmax = if p == 0 { 0.0 } else { lmax };
    verdict.worst_margin = Some(lmax);
    verdict.worst_eigenvalue = Some(at);
    verdict.notes.push(format!("λ_max(R(0)R_s(0)) = {lmax:.6}"));
    if lmax >= 1.0 - 1e-9 {
        verdict.fail("DC loop gain is not below one");
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    fn ss(a: Mat, b: Mat, c: Mat, d: Option<Mat>) -> StateSpace {
        StateSpace::new(a, b, c, d).unwrap()
    }

    fn lag() -> StateSpace {
        ss(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), None)
    }

    #[test]
    fn first_order_lag_is_sni() {
        let v = classify_freq(&lag(), NiClass::Sni, &FrequencyGrid::default(), None).unwrap();
        assert!(v.holds);
        // oracle: j(R − R*) = 2ω/(1+ω²), smallest at the grid ends
        let w = 1e-4;
        assert_relative_eq!(v.worst_margin.unwrap(), 2.0 * w / (1.0 + w * w), max_relative = 1e-9);
    }

    #[test]
    fn phase_lead_is_not_ni() {
        // s/(s+1) = 1 − 1/(s+1)
        let sys = ss(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[-1.0]), Some(m(1, 1, &[1.0])));
        let v = classify_freq(&sys, NiClass::Ni, &FrequencyGrid::default(), None).unwrap();
        assert!(!v.holds);
        let w = v.worst_omega.unwrap();
        assert_relative_eq!(v.worst_margin.unwrap(), -2.0 * w / (1.0 + w * w), max_relative = 1e-9);
    }

    #[test]
    fn unstable_pole_is_forbidden() {
        let sys = ss(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), None);
        let r = classify_freq(&sys, NiClass::Ni, &FrequencyGrid::default(), None);
        assert!(matches!(r, Err(Error::PoleInForbiddenRegion { .. })));
    }

    fn oscillator(c: &[f64]) -> StateSpace {
        ss(m(2, 2, &[0., 1., -1., 0.]), m(2, 1, &[0., 1.]), m(1, 2, c), None)
    }

    #[test]
    fn residue_of_undamped_oscillator() {
        // 1/(s²+1) = (1/2j)(1/(s−j) − 1/(s+j)), so K0 = j·(1/2j) = 1/2
        let r = residue_at_imaginary_pole(&oscillator(&[1., 0.]), 1.0).unwrap();
        assert_relative_eq!(r.k0[(0, 0)].re, 0.5, epsilon = 1e-10);
        assert!(r.hermitian_defect < 1e-8);
        assert!(r.psd);
        let v = classify_freq(&oscillator(&[1., 0.]), NiClass::Ni, &FrequencyGrid::default(), None).unwrap();
        assert!(v.holds, "{:?}", v.notes);
    }

    #[test]
    fn residue_of_velocity_output_is_not_hermitian() {
        // s/(s²+1) has residue 1/2 at j, so j·residue = j/2
        let raw = raw_residue(&oscillator(&[0., 1.]), 1.0).unwrap();
        assert_relative_eq!(raw[(0, 0)].re, 0.0, epsilon = 1e-10);
        assert_relative_eq!(raw[(0, 0)].im, 0.5, epsilon = 1e-10);
        let r = residue_at_imaginary_pole(&oscillator(&[0., 1.]), 1.0).unwrap();
        assert!(r.hermitian_defect > 0.5);
    }

    #[test]
    fn double_imaginary_pole_is_rejected() {
        // (s²+1)² realized as a companion form
        let a = m(4, 4, &[0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., -1., 0., -2., 0.]);
        let sys = ss(a, m(4, 1, &[0., 0., 0., 1.]), m(1, 4, &[1., 0., 0., 0.]), None);
        assert!(matches!(residue_at_imaginary_pole(&sys, 1.0), Err(Error::NonSimplePole(_))));
        let v = classify_freq(&sys, NiClass::Ni, &FrequencyGrid::default(), None).unwrap();
        assert!(!v.holds);
        assert!(v.worst_eigenvalue.is_some());
    }

    #[test]
    fn scalar_certificate_oracle() {
        // B + AYCᵀ = 1 − Y
        let sys = lag();
        let (v, c) = verify_certificate(&sys, NiClass::Ni, &m(1, 1, &[1.0]), None).unwrap();
        assert!(v.holds, "{:?}", v.notes);
        assert_eq!(c.residuals().coupling_residual, 0.0);
        let (v, c) = verify_certificate(&sys, NiClass::Ni, &m(1, 1, &[1.1]), None).unwrap();
        assert!(!v.holds);
        assert_relative_eq!(c.residuals().coupling_residual, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn certificate_rejects_asymmetric_y() {
        let sys = ss(-Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2), None);
        let r = verify_certificate(&sys, NiClass::Ni, &m(2, 2, &[1., 0.5, 0., 1.]), None);
        assert!(matches!(r, Err(Error::Asymmetric { .. })));
        let r = verify_certificate(&sys, NiClass::Ni, &Mat::identity(3, 3), None);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn ssni_certificate_for_lag() {
        let (v, _) = verify_certificate(&lag(), NiClass::Ssni, &m(1, 1, &[1.0]), None).unwrap();
        assert!(v.holds, "{:?}", v.notes);
        let v = classify_freq(&lag(), NiClass::Ssni, &FrequencyGrid::default(), None).unwrap();
        assert!(v.holds, "{:?}", v.notes);
    }

    #[test]
    fn dc_gain_examples() {
        let r = ss(
            -Mat::identity(2, 2),
            Mat::identity(2, 2),
            m(2, 2, &[0.25, 0.25, 0.25, 0.5]),
            None,
        );
        let half = ss(-Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2) * 0.5, None);
        assert!(dc_gain_interconnection_stable(&r, &half).unwrap().holds);
        let two = ss(-Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2) * 2.0, None);
        let v = dc_gain_interconnection_stable(&r, &two).unwrap();
        assert!(!v.holds);
        // oracle: 2·(3 + √5)/8
        assert_relative_eq!(v.worst_margin.unwrap(), (3.0 + 5f64.sqrt()) / 4.0, epsilon = 1e-12);
        let zero = ss(-Mat::identity(2, 2), Mat::identity(2, 2), Mat::zeros(2, 2), None);
        assert!(dc_gain_interconnection_stable(&zero, &two).unwrap().holds);
    }

    #[test]
    fn grid_excludes_poles() {
        let g = FrequencyGrid::log_spaced(0.5, 2.0, 3).unwrap();
        assert_eq!(g.excluding(&[Complex64::new(0.0, 1.0)]).len(), 2);
        assert!(FrequencyGrid::log_spaced(1.0, 0.5, 3).is_err());
    }

    #[test]
    fn class_parsing() {
        assert_eq!("osni".parse::<NiClass>().unwrap(), NiClass::Osni);
        assert_eq!(NiClass::Ssni.to_string(), "SSNI");
        assert!("xni".parse::<NiClass>().is_err());
    }
}
