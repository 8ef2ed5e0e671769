//! Constructive state-feedback synthesis on the normal form: NI, OSNI and
//! SSNI closed loops with analytic certificates, composition of the
//! original-coordinate law, and robust stabilization against SNI
//! uncertainty with a DC-gain bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::{self, Certificate, NiClass, Verdict};
use crate::error::{Error, Result};
use crate::matkit::{self, Definiteness, Mat, PbhMode, StabilityClass};
use crate::structure::{self, NormalForm, TransformSet, ZeroDynamicsSplit};
use crate::sysmodel::{self, StateSpace, UncertainSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum K13Policy {
    Zero,
    /// Orthonormal columns when `p1 ≥ p2`, orthonormal rows otherwise.
    Orthonormal,
    /// Random direction scaled to `σ_max = √2·θ`.
    RandomInSk,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// DC gain of the degree-1 channels (default `I`).
    pub y2: Option<Mat>,
    /// DC gain of the degree-2 channels (default `I`).
    pub y3: Option<Mat>,
    /// Certificate weight on the critical zero dynamics.
    pub y1a: f64,
    /// Dissipation of the Hurwitz zero dynamics (default `I`). Mutually
    /// exclusive with `y1b`.
    pub qb: Option<Mat>,
    /// Certificate block of the Hurwitz zero dynamics; implies
    /// `Qb = −(A00b·Y1b + Y1b·A00bᵀ)`, which must be positive definite.
    pub y1b: Option<Mat>,
    pub theta: f64,
    pub k13_policy: K13Policy,
    /// Fixed `ℋ` (`p2 × m_b`, in the split coordinates); disables retries.
    pub h: Option<Mat>,
    /// Fixed `K13` (`p1 × p2`); disables retries.
    pub k13: Option<Mat>,
    pub epsilon: f64,
    pub rng_seed: u64,
    pub max_retries: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            y2: None,
            y3: None,
            y1a: 1.0,
            qb: None,
            y1b: None,
            theta: 0.9,
            k13_policy: K13Policy::RandomInSk,
            h: None,
            k13: None,
            epsilon: certify::osni_epsilon_max(),
            rng_seed: 0,
            max_retries: 32,
        }
    }
}

/// Parameters actually used by a synthesis run.
#[derive(Debug, Clone)]
pub struct FreeParameters {
    pub y1a: f64,
    pub y1b: Mat,
    pub qb: Mat,
    pub h: Mat,
    pub k13: Mat,
    pub y2: Mat,
    pub y3: Mat,
    pub theta: f64,
    pub rng_seed: u64,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub enum GainBlocks {
    Ni {
        k10: Mat,
        k11: Mat,
        k12: Mat,
        k13: Mat,
        k20: Mat,
        k21: Mat,
        k22: Mat,
        k23: Mat,
    },
    Ssni {
        k1: Mat,
        k2: Mat,
    },
}

/// Output of a synthesis run, all in normal-form coordinates.
#[derive(Debug, Clone)]
pub struct GainSet {
    pub blocks: GainBlocks,
    pub free: FreeParameters,
    pub closed_loop: StateSpace,
    pub certificate: Certificate,
    pub verdict: Verdict,
    pub target: NiClass,
    pub frame: u64,
    pub notes: Vec<String>,
}

/// `u = K_x x + K_v v` in original coordinates; `K_w = K_v − I` when the
/// law is used against uncertainty entering at the plant input.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub k_x: Mat,
    pub k_v: Mat,
    pub k_w: Option<Mat>,
}

impl FeedbackLaw {
    /// `(A + B K_x, B K_v, C, D K_v)`.
    pub fn closed_loop(&self, sys: &StateSpace) -> Result<StateSpace> {
        StateSpace::new(&sys.a + &sys.b * &self.k_x, &sys.b * &self.k_v, sys.c.clone(), Some(&sys.d * &self.k_v))
    }
}

fn check_spd(m: &Mat, dim: usize, what: &str) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::Dimension(format!("{what} must be {dim}x{dim}, got {:?}", m.shape())));
    }
    if !matkit::definiteness(m, Definiteness::PositiveDefinite, 0.0)? {
        return Err(Error::InvalidArgument(format!("{what} must be positive definite")));
    }
    Ok(())
}

fn spd_or_identity(m: &Option<Mat>, dim: usize, what: &str) -> Result<Mat> {
    match m {
        Some(m) => {
            check_spd(m, dim, what)?;
            Ok(matkit::sym(m))
        }
        None => Ok(Mat::identity(dim, dim)),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// `G / σ_max(G)`; zero stays zero.
fn unit_spectral(g: Mat) -> Mat {
    let s = matkit::singular_values(&g).first().copied().unwrap_or(0.0);
    if s > 0.0 {
        g / s
    } else {
        g
    }
}

/// Matrix with orthonormal columns (`r ≥ c`) or rows (`r < c`). The first
/// draw is the leading identity block.
fn orthonormal(rng: Option<&mut ChaCha8Rng>, r: usize, c: usize) -> Mat {
    if r == 0 || c == 0 {
        return Mat::zeros(r, c);
    }
    let tall = r >= c;
    let (rr, cc) = if tall { (r, c) } else { (c, r) };
    let q = match rng {
        None => Mat::identity(rr, cc),
        Some(rng) => {
            let g = random_matrix(rng, rr, cc);
            g.qr().q().columns(0, cc).into_owned()
        }
    };
    if tall {
        q
    } else {
        q.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum K13Mode {
    Policy(K13Policy),
    /// OSNI: `K13ᵀK13 = I`.
    OrthonormalColumns,
}

struct RotatedBlocks {
    a00: Mat,
    a01: Mat,
    a02: Mat,
    a00_inv: Mat,
}

fn rotated_blocks(nf: &NormalForm, split: &ZeroDynamicsSplit) -> Result<RotatedBlocks> {
    let a00 = split.a00_rotated();
    let a00_inv = matkit::inverse(&a00, "A00")?;
    let a01 = matkit::assemble(&[vec![&split.a01a], vec![&split.a01b]]);
    let a02 = matkit::assemble(&[vec![&split.a02a], vec![&split.a02b]]);
    debug_assert_eq!(a01.shape(), nf.a01.shape());
    Ok(RotatedBlocks { a00, a01, a02, a00_inv })
}

/// NI closed loop and certificate per the block construction, with `K13`
/// constrained by `mode`.
fn synthesize_ni_core(nf: &NormalForm, cfg: &SynthesisConfig, mode: K13Mode, h_scale: f64) -> Result<GainSet> {
    let (m, p1, p2) = (nf.m, nf.p1, nf.p2);
    if !matkit::pbh_test(&nf.a_tilde, &nf.b_tilde, PbhMode::ControllableWith, None)? {
        return Err(Error::NotControllable);
    }
    let split = structure::split_zero_dynamics(nf)?;
    let (m_a, m_b) = (split.m_a, split.m_b);
    let y2 = spd_or_identity(&cfg.y2, p1, "Y2")?;
    let y3 = spd_or_identity(&cfg.y3, p2, "Y3")?;
    if !(cfg.y1a > 0.0 && cfg.y1a.is_finite()) {
        return Err(Error::InvalidArgument("y1a must be positive".into()));
    }
    if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
        return Err(Error::InvalidArgument("theta must lie in (0, 1]".into()));
    }
    let (y1b, qb) = match (&cfg.y1b, &cfg.qb) {
        (Some(_), Some(_)) => return Err(Error::InvalidArgument("give either Y1b or Qb, not both".into())),
        (Some(y1b), None) => {
            check_spd(y1b, m_b, "Y1b")?;
            let qb = -(&split.a00b * y1b + y1b * split.a00b.transpose());
            check_spd(&matkit::sym(&qb), m_b, "Qb implied by Y1b")?;
            (matkit::sym(y1b), matkit::sym(&qb))
        }
        (None, qb) => {
            let qb = spd_or_identity(qb, m_b, "Qb")?;
            (matkit::solve_lyapunov(&split.a00b.transpose(), &qb)?, qb)
        }
    };
    let qb_half = matkit::sqrtm_pd(&qb)?;
    let y1b_inv = matkit::inverse(&y1b, "Y1b")?;

    if let Some(h) = &cfg.h {
        if h.shape() != (p2, m_b) {
            return Err(Error::Dimension(format!("H must be {p2}x{m_b}")));
        }
        let gap = &qb - h.transpose() * h;
        if !matkit::definiteness(&gap, Definiteness::PositiveSemidefinite, 1e-12 * (1.0 + qb.norm()))? {
            return Err(Error::InvalidArgument("H violates HᵀH ⪯ Qb".into()));
        }
    }
    if let Some(k) = &cfg.k13 {
        if k.shape() != (p1, p2) {
            return Err(Error::Dimension(format!("K13 must be {p1}x{p2}")));
        }
        let bound = Mat::identity(p1, p1) * 2.0 - k * k.transpose();
        if !matkit::definiteness(&bound, Definiteness::PositiveSemidefinite, 1e-12)? {
            return Err(Error::InvalidArgument("K13 violates K13·K13ᵀ ⪯ 2I".into()));
        }
        if mode == K13Mode::OrthonormalColumns && (k.transpose() * k - Mat::identity(p2, p2)).norm() > 1e-9 {
            return Err(Error::InvalidArgument("OSNI needs K13ᵀK13 = I".into()));
        }
    }

    let rb = rotated_blocks(nf, &split)?;
    let a00a_inv_t = matkit::inverse(&split.a00a, "A00a")?.transpose();
    let a00b_inv_t = matkit::inverse(&split.a00b, "A00b")?.transpose();
    let k20a = (-(split.a02a.transpose() * &a00a_inv_t) - split.a03a.transpose()) / cfg.y1a;
    let k10a = -(split.a01a.transpose() * &a00a_inv_t) / cfg.y1a;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let randomized = m_b > 0 && ((cfg.h.is_none() && h_scale != 0.0) || cfg.k13.is_none());
    let attempts_allowed = if randomized { cfg.max_retries.max(1) } else { 1 };
    let mut witness = None;
    let mut chosen = None;
    for attempt in 0..attempts_allowed {
        let h = match &cfg.h {
            Some(h) => h.clone(),
            None if p2 == 0 || m_b == 0 || h_scale == 0.0 => Mat::zeros(p2, m_b),
            None => unit_spectral(random_matrix(&mut rng, p2, m_b)) * &qb_half * (cfg.theta * h_scale),
        };
        let k13 = match (&cfg.k13, mode) {
            (Some(k), _) => k.clone(),
            (None, K13Mode::OrthonormalColumns) | (None, K13Mode::Policy(K13Policy::Orthonormal)) => {
                orthonormal(if attempt == 0 { None } else { Some(&mut rng) }, p1, p2)
            }
            (None, K13Mode::Policy(K13Policy::Zero)) => Mat::zeros(p1, p2),
            (None, K13Mode::Policy(K13Policy::RandomInSk)) => {
                unit_spectral(random_matrix(&mut rng, p1, p2)) * (2f64.sqrt() * cfg.theta)
            }
        };
        let k20b = (-(split.a02b.transpose() * &a00b_inv_t) - split.a03b.transpose() + &h) * &y1b_inv;
        let k10b = (-(split.a01b.transpose() * &a00b_inv_t) - &k13 * &h) * &y1b_inv;
        let k10 = matkit::assemble(&[vec![&k10a, &k10b]]);
        let k20 = matkit::assemble(&[vec![&k20a, &k20b]]);
        let stacked = matkit::assemble(&[vec![&k10], vec![&k20]]);
        match matkit::pbh_witness(&rb.a00, &stacked, PbhMode::ObservableWith, None)? {
            None => {
                chosen = Some((attempt + 1, h, k13, k10, k20));
                break;
            }
            Some(w) => witness = Some(w),
        }
    }
    let (attempts, h, k13, k10r, k20r) = chosen.ok_or(Error::RetryExhausted {
        attempts: attempts_allowed,
        witness: witness.unwrap_or_default(),
    })?;

    let y2_inv = matkit::inverse(&y2, "Y2")?;
    let y3_inv = matkit::inverse(&y3, "Y3")?;
    let g1 = &rb.a00_inv * &rb.a01; // A00⁻¹A01
    let g2 = &rb.a00_inv * &rb.a02; // A00⁻¹A02
    let k11 = &k10r * &g1 - &y2_inv;
    let k12 = &k10r * &g2;
    let k21 = &k20r * &g1;
    let k22 = &k20r * &g2 - &y3_inv;
    let k23 = Mat::identity(p2, p2) * -0.5;

    // certificate in split coordinates
    let y1 = matkit::block_diag(&(Mat::identity(m_a, m_a) * cfg.y1a), &y1b);
    let g1y2 = &g1 * &y2;
    let g2y3 = &g2 * &y3;
    let y11 = &y1 + &g1y2 * g1.transpose() + &g2y3 * g2.transpose();
    let z = |r, c| Mat::zeros(r, c);
    let y_rot = matkit::assemble(&[
        vec![&y11, &(-&g1y2), &(-&g2y3), &z(m, p2)],
        vec![&(-g1y2.transpose()), &y2, &z(p1, p2), &z(p1, p2)],
        vec![&(-g2y3.transpose()), &z(p2, p1), &y3, &z(p2, p2)],
        vec![&z(p2, m), &z(p2, p1), &z(p2, p2), &Mat::identity(p2, p2)],
    ]);

    // back to the unrotated normal-form frame: z = S⁻¹ z'
    let k10 = &k10r * &split.s;
    let k20 = &k20r * &split.s;
    let rest = nf.n() - m;
    let sigma_inv = matkit::block_diag(&split.s_inv, &Mat::identity(rest, rest));
    let y = matkit::sym(&(&sigma_inv * y_rot * sigma_inv.transpose()));

    let a_cl = matkit::assemble(&[
        vec![&nf.a00, &nf.a01, &nf.a02, &nf.a03],
        vec![&k10, &k11, &k12, &k13],
        vec![&z(p2, m), &z(p2, p1), &z(p2, p2), &Mat::identity(p2, p2)],
        vec![&k20, &k21, &k22, &k23],
    ]);
    let closed_loop = StateSpace::new(a_cl, nf.b_tilde.clone(), nf.c_tilde.clone(), None)?;
    let (verdict, certificate) = certify::verify_certificate(&closed_loop, NiClass::Ni, &y, None)?;
    if !verdict.holds {
        return Err(Error::CertificateFailed(verdict.notes.join("; ")));
    }
    let notes = Vec::new();
    Ok(GainSet {
        blocks: GainBlocks::Ni { k10, k11, k12, k13: k13.clone(), k20, k21, k22, k23 },
        free: FreeParameters {
            y1a: cfg.y1a,
            y1b,
            qb,
            h,
            k13,
            y2,
            y3,
            theta: cfg.theta,
            rng_seed: cfg.rng_seed,
            attempts,
        },
        closed_loop,
        certificate,
        verdict,
        target: NiClass::Ni,
        frame: nf.transforms.fingerprint(),
        notes,
    })
}

/// Gains rendering the normal form NI with a minimal closed loop.
pub fn synthesize_ni(nf: &NormalForm, cfg: &SynthesisConfig) -> Result<GainSet> {
    synthesize_ni_core(nf, cfg, K13Mode::Policy(cfg.k13_policy), 1.0)
}

/// NI construction with `K13ᵀK13 = I`, certified for output strictness
/// `ε`. The strictness bound is only reached for `ℋ = 0`, so unless `ℋ` is
/// fixed the construction is retried with `ℋ` shrunk towards zero. If no
/// candidate verifies at the requested level, the level is bisected
/// downwards and the achieved value is reported.
pub fn synthesize_osni(nf: &NormalForm, cfg: &SynthesisConfig) -> Result<GainSet> {
    if nf.p2 > 0 && nf.p1 < nf.p2 {
        return Err(Error::UnsupportedShape(format!(
            "K13 is {}x{} and cannot have orthonormal columns; use NI synthesis instead",
            nf.p1, nf.p2
        )));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let eps_max = certify::osni_epsilon_max();
    let mut notes = Vec::new();
    let mut eps = cfg.epsilon;
    if eps > eps_max {
        notes.push(format!("epsilon {eps} clamped to {eps_max}"));
        eps = eps_max;
    }
    let scales: Vec<f64> = if cfg.h.is_some() {
        vec![1.0]
    } else {
        [1.0, 0.0].into_iter().chain((1..=20).map(|k| 0.5f64.powi(k))).collect()
    };
    let mut first = None;
    let mut last_err = None;
    for &scale in &scales {
        let gs = match synthesize_ni_core(nf, cfg, K13Mode::OrthonormalColumns, scale) {
            Ok(gs) => gs,
            Err(e @ (Error::RetryExhausted { .. } | Error::CertificateFailed(_))) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let (verdict, cert) =
            certify::verify_certificate(&gs.closed_loop, NiClass::Osni, gs.certificate.y(), Some(eps))?;
        if verdict.holds {
            return Ok(finish_osni(gs, verdict, cert, notes, scale));
        }
        first.get_or_insert(gs);
    }
    let Some(gs) = first else {
        return Err(last_err.unwrap_or_else(|| Error::CertificateFailed("no OSNI candidate".into())));
    };
    let y = gs.certificate.y().clone();
    let (mut lo, mut hi) = (0.0, eps);
    let mut best = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (v, c) = certify::verify_certificate(&gs.closed_loop, NiClass::Osni, &y, Some(mid))?;
        if v.holds {
            lo = mid;
            best = Some((v, c));
        } else {
            hi = mid;
        }
    }
    let (verdict, cert) =
        best.ok_or_else(|| Error::CertificateFailed("no positive output strictness verified".into()))?;
    notes.push(format!("epsilon {eps} failed verification; achieved {lo}"));
    Ok(finish_osni(gs, verdict, cert, notes, 1.0))
}

fn finish_osni(mut gs: GainSet, verdict: Verdict, cert: Certificate, notes: Vec<String>, scale: f64) -> GainSet {
    if scale == 0.0 {
        gs.notes.push("H set to zero to reach the strictness level".into());
    } else if scale != 1.0 {
        gs.notes.push(format!("H scaled by {scale} to reach the strictness level"));
    }
    gs.notes.extend(notes);
    gs.certificate = cert;
    gs.verdict = verdict;
    gs.target = NiClass::Osni;
    gs
}

/// Gains rendering a degree-one normal form SSNI.
pub fn synthesize_ssni(nf: &NormalForm, cfg: &SynthesisConfig) -> Result<GainSet> {
    if nf.p2 != 0 {
        return Err(Error::RelativeDegreeNotOne { p2: nf.p2 });
    }
    let (m, p) = (nf.m, nf.p1);
    let a00 = &nf.a00;
    if m > 0 {
        let e = matkit::eig(a00)?;
        let (class, witness) = matkit::classify_spectrum(&e, matkit::axis_tol(a00));
        if class != StabilityClass::Hurwitz {
            return Err(Error::NotMinimumPhase { witness: witness.unwrap_or_default() });
        }
        if !matkit::pbh_test(a00, &nf.a01, PbhMode::ControllableWith, None)? {
            return Err(Error::NotControllable);
        }
    }
    let y2 = spd_or_identity(&cfg.y2, p, "Y2")?;
    let a00_inv = matkit::inverse(a00, "A00")?;
    let g = &a00_inv * &nf.a01; // A00⁻¹A01
    let correction = &g * g.transpose() * 0.5;
    let mut y1 = matkit::solve_lyapunov(&a00.transpose(), &(Mat::identity(m, m) + &correction))?;
    let floor = -1e-8 * a00.norm();
    let mut scalings = 0;
    while m > 0 && matkit::lambda_max_sym(&(a00 * &y1 + &y1 * a00.transpose() + &correction)) > floor {
        y1 *= 2.0;
        scalings += 1;
        if scalings > 200 {
            return Err(Error::CertificateFailed("could not reach the strict Lyapunov margin".into()));
        }
    }
    let y1_inv = matkit::inverse(&y1, "Y1")?;
    let y2_inv = matkit::inverse(&y2, "Y2")?;
    let k1 = -(nf.a01.transpose() * a00_inv.transpose() * &y1_inv);
    let k2 = &k1 * &g - &y2_inv;

    let gy2 = &g * &y2;
    let y11 = &y1 + &gy2 * g.transpose();
    let y = matkit::assemble(&[vec![&y11, &(-&gy2)], vec![&(-gy2.transpose()), &y2]]);
    let a_cl = matkit::assemble(&[vec![a00, &nf.a01], vec![&k1, &k2]]);
    let closed_loop = StateSpace::new(a_cl, nf.b_tilde.clone(), nf.c_tilde.clone(), None)?;
    if matkit::stability_class(&closed_loop.a)? != StabilityClass::Hurwitz {
        return Err(Error::CertificateFailed("closed loop is not Hurwitz".into()));
    }
    let (verdict, certificate) = certify::verify_certificate(&closed_loop, NiClass::Ssni, &y, None)?;
    if !verdict.holds {
        return Err(Error::CertificateFailed(verdict.notes.join("; ")));
    }
    let r0 = sysmodel::dc_gain(&closed_loop)?;
    let dc_dev = (&r0 - &y2).norm();
    if dc_dev > 1e-8 * (1.0 + y2.norm()) {
        return Err(Error::CertificateFailed(format!("R(0) deviates from Y2 by {dc_dev:.3e}")));
    }
    let mut notes = Vec::new();
    if scalings > 0 {
        notes.push(format!("Y1 scaled by 2^{scalings} to reach the strict margin"));
    }
    Ok(GainSet {
        blocks: GainBlocks::Ssni { k1, k2 },
        free: FreeParameters {
            y1a: cfg.y1a,
            y1b: y1,
            qb: Mat::identity(m, m),
            h: Mat::zeros(0, m),
            k13: Mat::zeros(p, 0),
            y2,
            y3: Mat::zeros(0, 0),
            theta: cfg.theta,
            rng_seed: cfg.rng_seed,
            attempts: 1,
        },
        closed_loop,
        certificate,
        verdict,
        target: NiClass::Ssni,
        frame: nf.transforms.fingerprint(),
        notes,
    })
}

/// Normal-coordinate gain `K̃` with `ũ = K̃ x̃ + ṽ`.
pub fn normal_coordinate_gain(gains: &GainSet, nf: &NormalForm) -> Mat {
    match &gains.blocks {
        GainBlocks::Ni { k10, k11, k12, k13, k20, k21, k22, k23 } => matkit::assemble(&[
            vec![&(k10 - &nf.a10), &(k11 - &nf.a11), &(k12 - &nf.a12), &(k13 - &nf.a13)],
            vec![&(k20 - &nf.a30), &(k21 - &nf.a31), &(k22 - &nf.a32), &(k23 - &nf.a33)],
        ]),
        GainBlocks::Ssni { k1, k2 } => matkit::assemble(&[vec![&(k1 - &nf.a10), &(k2 - &nf.a11)]]),
    }
}

/// Maps normal-form gains to `u = K_x x + K_v v` in original coordinates.
pub fn compose_full_gain(gains: &GainSet, transforms: &TransformSet, nf: &NormalForm) -> Result<FeedbackLaw> {
    if gains.frame != transforms.fingerprint() || nf.transforms.fingerprint() != gains.frame {
        return Err(Error::FrameMismatch);
    }
    let k_tilde = normal_coordinate_gain(gains, nf);
    let k_x = &transforms.t_u_inv * k_tilde * &transforms.t_x;
    let k_v = &transforms.t_u_inv * transforms.t_y_inv.transpose();
    Ok(FeedbackLaw { k_x, k_v, k_w: None })
}

/// Closed loop and certificate expressed in original coordinates.
#[derive(Debug, Clone)]
pub struct OriginalFrame {
    pub law: FeedbackLaw,
    pub closed_loop: StateSpace,
    pub certificate: Certificate,
    pub verdict: Verdict,
}

/// Applies the composed law to the source plant and carries the
/// certificate over: `Y_o = T_x⁻¹ Y T_x⁻ᵀ`. For OSNI the level becomes
/// `ε / σ_max(T_y⁻¹)²`.
pub fn realize_in_original(gains: &GainSet, nf: &NormalForm) -> Result<OriginalFrame> {
    let t = &nf.transforms;
    let law = compose_full_gain(gains, t, nf)?;
    let closed_loop = law.closed_loop(&nf.source)?;
    let y = matkit::sym(&(&t.t_x_inv * gains.certificate.y() * t.t_x_inv.transpose()));
    let eps = gains.certificate.epsilon().map(|e| {
        let s = matkit::singular_values(&t.t_y_inv).first().copied().unwrap_or(1.0);
        e / (s * s)
    });
    let (verdict, certificate) = certify::verify_certificate(&closed_loop, gains.target, &y, eps)?;
    Ok(OriginalFrame { law, closed_loop, certificate, verdict })
}

#[derive(Debug, Clone, Default)]
pub struct RobustConfig {
    pub synthesis: SynthesisConfig,
    /// Fixed transforms instead of the output-transformation search.
    pub transforms: Option<TransformSet>,
}

#[derive(Debug, Clone)]
pub struct RobustResult {
    pub law: FeedbackLaw,
    pub gains: GainSet,
    pub normal_form: NormalForm,
    /// Common scale of `Y2 = Y3 = β·I` when chosen automatically.
    pub beta: Option<f64>,
    /// Nominal loop from `w` to `y` under `u = K_x x + K_w w`.
    pub nominal: StateSpace,
    pub dc_gain: Mat,
    pub dc_lambda_max: f64,
    /// `1/γ`.
    pub dc_bound: f64,
    pub certificate: Certificate,
    pub certificate_verdict: Verdict,
}

/// Full pipeline for a plant with SNI uncertainty bounded by `γ` at DC.
pub fn robust_stabilize(usys: &UncertainSystem, cfg: &RobustConfig) -> Result<RobustResult> {
    let plant = &usys.plant;
    let mm = sysmodel::is_minimal(plant)?;
    if !mm.is_minimal() {
        return Err(Error::NotMinimal { controllable: mm.controllable, observable: mm.observable });
    }
    if sysmodel::has_zero_at_origin(plant)? {
        return Err(Error::ZeroAtOrigin);
    }
    let nf = match &cfg.transforms {
        Some(ts) => NormalForm::from_transforms(plant, ts.clone())?,
        None => {
            let (t_y, _) = structure::find_output_transformation(plant)?;
            structure::to_normal_form(plant, &t_y)?
        }
    };
    let phase = structure::phase_classification(&nf)?;
    if !phase.weakly_minimum_phase {
        let e = matkit::eig(&nf.a00)?;
        let (_, w) = matkit::classify_spectrum(&e, matkit::axis_tol(&nf.a00));
        return Err(Error::NotWeaklyMinimumPhase { witness: w.unwrap_or_default() });
    }
    let t = &nf.transforms;
    let mut scfg = cfg.synthesis.clone();
    let mut beta = None;
    if scfg.y2.is_none() && scfg.y3.is_none() {
        let lmax = matkit::lambda_max_sym(&(&t.t_y_inv * t.t_y_inv.transpose()));
        let b = 0.9 / (usys.gamma * lmax);
        scfg.y2 = Some(Mat::identity(nf.p1, nf.p1) * b);
        scfg.y3 = Some(Mat::identity(nf.p2, nf.p2) * b);
        beta = Some(b);
    }
    let gains = synthesize_ni(&nf, &scfg)?;
    let orig = realize_in_original(&gains, &nf)?;
    let mut law = orig.law;
    let p = nf.p();
    law.k_w = Some(&law.k_v - Mat::identity(p, p));
    let nominal = orig.closed_loop;
    let dc_gain = sysmodel::dc_gain(&nominal)?;
    let dc_lambda_max = matkit::lambda_max_sym(&dc_gain);
    Ok(RobustResult {
        law,
        gains,
        normal_form: nf,
        beta,
        nominal,
        dc_gain,
        dc_lambda_max,
        dc_bound: 1.0 / usys.gamma,
        certificate: orig.certificate,
        certificate_verdict: orig.verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    fn worked_plant() -> StateSpace {
        StateSpace::new(
            m(4, 4, &[-1., 0., 1., 1., 1., -1., 0., 1., 1., -1., 1., 0., 0., 1., -1., 1.]),
            m(4, 2, &[0., 0., 1., 0., 1., 0., 1., 1.]),
            m(2, 4, &[0., 1., 0., 0., 0., 0., 1., 0.]),
            None,
        )
        .unwrap()
    }

    fn worked_nf() -> NormalForm {
        let ts = TransformSet::new(
            m(2, 2, &[1., 0., -1., 1.]),
            m(4, 4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., -1., 1., 0., 0., 0., 1., -1.]),
            m(2, 2, &[1., 0., 0., -1.]),
        )
        .unwrap();
        NormalForm::from_transforms(&worked_plant(), ts).unwrap()
    }

    fn pinned() -> SynthesisConfig {
        SynthesisConfig {
            y1b: Some(m(1, 1, &[1.0])),
            h: Some(m(1, 1, &[1.0])),
            k13: Some(m(1, 1, &[1.0])),
            y2: Some(m(1, 1, &[0.25])),
            y3: Some(m(1, 1, &[0.25])),
            ..SynthesisConfig::default()
        }
    }

    #[test]
    fn worked_example_block_gains() {
        let gs = synthesize_ni(&worked_nf(), &pinned()).unwrap();
        let GainBlocks::Ni { k10, k11, k12, k20, k21, k22, k23, .. } = &gs.blocks else { panic!() };
        for (got, want) in [(k10, 1.0), (k11, -6.0), (k12, -2.0), (k20, 4.0), (k21, -8.0), (k22, -12.0), (k23, -0.5)] {
            assert_relative_eq!(got[(0, 0)], want, epsilon = 1e-12);
        }
        assert_relative_eq!(gs.free.qb[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn worked_example_composed_law() {
        let nf = worked_nf();
        let gs = synthesize_ni(&nf, &pinned()).unwrap();
        let kt = normal_coordinate_gain(&gs, &nf);
        assert_relative_eq!(kt, m(2, 4, &[0., -6., -3., 2., 3., -7., -13., -1.5]), epsilon = 1e-12);
        let law = compose_full_gain(&gs, &nf.transforms, &nf).unwrap();
        assert_relative_eq!(law.k_x, m(2, 4, &[0., -3., -1., -2., -3., -6., 14.5, -1.5]), epsilon = 1e-12);
        assert_relative_eq!(law.k_v, m(2, 2, &[1., 1., 0., -1.]), epsilon = 1e-12);
    }

    #[test]
    fn identity_frame_composition() {
        // empty zero dynamics, one degree-1 output, A-blocks zero
        let sys = StateSpace::new(m(1, 1, &[0.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), None).unwrap();
        let ts = TransformSet::new(Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)).unwrap();
        let nf = NormalForm::from_transforms(&sys, ts).unwrap();
        let gs = synthesize_ni(&nf, &SynthesisConfig { y2: Some(m(1, 1, &[2.0])), ..Default::default() }).unwrap();
        let GainBlocks::Ni { k11, .. } = &gs.blocks else { panic!() };
        assert_relative_eq!(k11[(0, 0)], -0.5, epsilon = 1e-15);
        let law = compose_full_gain(&gs, &nf.transforms, &nf).unwrap();
        assert_eq!(law.k_x, normal_coordinate_gain(&gs, &nf));
        assert_eq!(gs.closed_loop.a, m(1, 1, &[-0.5]));
    }

    #[test]
    fn frame_mismatch_is_detected() {
        let nf = worked_nf();
        let gs = synthesize_ni(&nf, &pinned()).unwrap();
        let other = TransformSet::new(Mat::identity(2, 2), Mat::identity(4, 4), Mat::identity(2, 2)).unwrap();
        assert!(matches!(compose_full_gain(&gs, &other, &nf), Err(Error::FrameMismatch)));
    }

    fn cfg_fixed_h() -> SynthesisConfig {
        SynthesisConfig { epsilon: certify::osni_epsilon_max(), y2: None, y3: None, ..pinned() }
    }

    #[test]
    fn worked_example_osni_boundary() {
        let nf = worked_nf();
        // unit DC gains and free H, as in the strictness bound
        let unit = SynthesisConfig { y2: None, y3: None, h: None, ..pinned() };
        let cfg = SynthesisConfig { epsilon: certify::osni_epsilon_max(), ..unit.clone() };
        let gs = synthesize_osni(&nf, &cfg).unwrap();
        assert!(gs.verdict.holds);
        assert_eq!(gs.certificate.epsilon(), Some(certify::osni_epsilon_max()));
        assert!(gs.certificate.residuals().lyap_residual <= 1e-9);
        assert_eq!(gs.free.h[(0, 0)], 0.0);
        let gs = synthesize_osni(&nf, &SynthesisConfig { epsilon: 0.3, ..unit.clone() }).unwrap();
        assert!(gs.verdict.holds && gs.certificate.residuals().lyap_residual <= 1e-12);
        let gs = synthesize_osni(&nf, &SynthesisConfig { epsilon: 0.5, ..unit }).unwrap();
        assert!(gs.notes.iter().any(|n| n.contains("clamped")));
        // a fixed nonzero H lowers the achievable level
        let gs = synthesize_osni(&nf, &cfg_fixed_h()).unwrap();
        assert!(gs.verdict.holds);
        assert!(gs.certificate.epsilon().unwrap() < certify::osni_epsilon_max());
    }

    #[test]
    fn ssni_scalar_oracle() {
        // A00 = −1, A01 = 1, Y2 = 1: Y1 solves −2·Y1 = −(1 + ½) so Y1 = 0.75,
        // K1 = 1/Y1 and K2 = K1·A00⁻¹A01 − 1
        let sys = StateSpace::new(m(2, 2, &[-1., 1., 0., 0.]), m(2, 1, &[0., 1.]), m(1, 2, &[0., 1.]), None).unwrap();
        let ts = TransformSet::new(Mat::identity(1, 1), Mat::identity(2, 2), Mat::identity(1, 1)).unwrap();
        let nf = NormalForm::from_transforms(&sys, ts).unwrap();
        let gs = synthesize_ssni(&nf, &SynthesisConfig::default()).unwrap();
        let GainBlocks::Ssni { k1, k2 } = &gs.blocks else { panic!() };
        assert_relative_eq!(gs.free.y1b[(0, 0)], 0.75, epsilon = 1e-12);
        assert_relative_eq!(k1[(0, 0)], 1.0 / 0.75, epsilon = 1e-12);
        assert_relative_eq!(k2[(0, 0)], -1.0 / 0.75 - 1.0, epsilon = 1e-12);
        assert_relative_eq!(sysmodel::dc_gain(&gs.closed_loop).unwrap()[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(gs.certificate.residuals().lyap_residual < -1e-10);
    }

    #[test]
    fn ssni_rejects_non_hurwitz_zero_dynamics() {
        let a = m(3, 3, &[0., 1., 1., -1., 0., 1., 0., 0., 0.]);
        let sys = StateSpace::new(a, m(3, 1, &[0., 0., 1.]), m(1, 3, &[0., 0., 1.]), None).unwrap();
        let ts = TransformSet::new(Mat::identity(1, 1), Mat::identity(3, 3), Mat::identity(1, 1)).unwrap();
        let nf = NormalForm::from_transforms(&sys, ts).unwrap();
        assert!(matches!(synthesize_ssni(&nf, &SynthesisConfig::default()), Err(Error::NotMinimumPhase { .. })));
        assert!(matches!(
            synthesize_ssni(&worked_nf(), &SynthesisConfig::default()),
            Err(Error::RelativeDegreeNotOne { p2: 1 })
        ));
    }

    #[test]
    fn robust_worked_example() {
        let usys = UncertainSystem::new(worked_plant(), 1.0, None).unwrap();
        let cfg = RobustConfig { synthesis: pinned(), transforms: Some(worked_nf().transforms) };
        let res = robust_stabilize(&usys, &cfg).unwrap();
        assert_relative_eq!(res.law.k_w.clone().unwrap(), m(2, 2, &[0., 1., 0., -2.]), epsilon = 1e-12);
        assert_relative_eq!(res.dc_gain, m(2, 2, &[0.25, 0.25, 0.25, 0.5]), epsilon = 1e-12);
        assert!((res.dc_lambda_max - 0.6545).abs() < 5e-4);
        assert!(res.certificate_verdict.holds, "{:?}", res.certificate_verdict.notes);
    }

    #[test]
    fn robust_default_beta_respects_bound() {
        for gamma in [1.0, 10.0] {
            let usys = UncertainSystem::new(worked_plant(), gamma, None).unwrap();
            let res = robust_stabilize(&usys, &RobustConfig::default()).unwrap();
            assert!(res.dc_lambda_max < 1.0 / gamma);
            assert!(res.beta.is_some());
        }
    }

    #[test]
    fn mixed_zero_dynamics_with_weight() {
        // z has an oscillator and a stable mode; one degree-1 and one
        // degree-2 output
        let (mm, p1, p2) = (3, 1, 1);
        let n = mm + p1 + 2 * p2;
        let mut a = Mat::zeros(n, n);
        let a00 = m(3, 3, &[0., 2., 0., -0.5, 0., 0., 0., 0., -1.]);
        a.view_mut((0, 0), (3, 3)).copy_from(&a00);
        a.view_mut((0, 3), (3, 3)).copy_from(&m(3, 3, &[1., 0.5, -1., 0.3, 1., 0., 1., -1., 2.]));
        a.view_mut((3, 0), (1, 6)).copy_from(&m(1, 6, &[0.2, 0.1, -0.3, 1., 0.5, 0.2]));
        a[(4, 5)] = 1.0;
        a.view_mut((5, 0), (1, 6)).copy_from(&m(1, 6, &[0.4, -0.2, 0.1, 0.3, -1., 0.7]));
        let sys = StateSpace::new(a, NormalForm::structural_b(mm, p1, p2), NormalForm::structural_c(mm, p1, p2), None)
            .unwrap();
        let ts = TransformSet::new(Mat::identity(2, 2), Mat::identity(n, n), Mat::identity(2, 2)).unwrap();
        let nf = NormalForm::from_transforms(&sys, ts).unwrap();
        for y1a in [1.0, 2.5] {
            let gs = synthesize_ni(&nf, &SynthesisConfig { y1a, ..Default::default() }).unwrap();
            assert!(gs.verdict.holds);
            assert!(gs.certificate.residuals().coupling_residual < 1e-9);
            assert!(sysmodel::is_minimal(&gs.closed_loop).unwrap().is_minimal());
        }
    }
}
