//! Seeded generator of systems with a planted normal form, for property
//! tests, acceptance runs and benchmarks.
//!
//! A normal form with chosen block sizes is drawn first and then hidden
//! behind random state, input and output transformations, so the original
//! realization generally has no relative degree vector until the output is
//! transformed back.

use rand::Rng;

use crate::error::Result;
use crate::matkit::{self, Mat, PbhMode};
use crate::structure::NormalForm;
use crate::sysmodel::{self, StateSpace};

/// Block sizes of the planted normal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantSpec {
    /// Degree-1 outputs.
    pub p1: usize,
    /// Degree-2 outputs.
    pub p2: usize,
    /// Zero-dynamics states on the imaginary axis (even; paired oscillators).
    pub m_a: usize,
    /// Asymptotically stable zero-dynamics states.
    pub m_b: usize,
}

impl PlantSpec {
    pub fn m(&self) -> usize {
        self.m_a + self.m_b
    }

    pub fn n(&self) -> usize {
        self.m() + self.p1 + 2 * self.p2
    }

    pub fn p(&self) -> usize {
        self.p1 + self.p2
    }

    /// Random NI-feasible shape with `n ≤ max_n` and `1 ≤ p ≤ max_p`.
    pub fn random_ni<R: Rng>(rng: &mut R, max_n: usize, max_p: usize) -> Self {
        loop {
            let p = rng.gen_range(1..=max_p);
            let p2 = rng.gen_range(0..=p);
            let p1 = p - p2;
            let room = max_n.saturating_sub(p1 + 2 * p2);
            if p1 + 2 * p2 > max_n {
                continue;
            }
            let m_a = 2 * rng.gen_range(0..=room / 2);
            let m_b = rng.gen_range(0..=room - m_a);
            return Self { p1, p2, m_a, m_b };
        }
    }

    /// Random SSNI-feasible shape: all degrees one, stable zero dynamics.
    pub fn random_ssni<R: Rng>(rng: &mut R, max_n: usize, max_p: usize) -> Self {
        let p1 = rng.gen_range(1..=max_p.min(max_n));
        let m_b = rng.gen_range(0..=max_n - p1);
        Self { p1, p2: 0, m_a: 0, m_b }
    }
}

/// A generated plant together with the transforms that reveal its normal
/// form.
#[derive(Debug, Clone)]
pub struct PlantedSystem {
    pub spec: PlantSpec,
    pub sys: StateSpace,
    pub normal: StateSpace,
    pub t_y: Mat,
    pub t_x: Mat,
    pub t_u: Mat,
}

fn uniform<R: Rng>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random nonsingular matrix with condition number at most about 10.
fn well_conditioned<R: Rng>(rng: &mut R, n: usize) -> Mat {
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let q1 = uniform(rng, n, n).qr().q();
    let q2 = uniform(rng, n, n).qr().q();
    let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)));
    q1 * d * q2
}

/// Zero dynamics `S⁻¹·diag(ω_k J, H)·S` with `H` Hurwitz.
fn zero_dynamics<R: Rng>(rng: &mut R, m_a: usize, m_b: usize) -> Mat {
    let mut core = Mat::zeros(m_a + m_b, m_a + m_b);
    for k in 0..m_a / 2 {
        let w = rng.gen_range(0.5..2.0);
        core[(2 * k, 2 * k + 1)] = w;
        core[(2 * k + 1, 2 * k)] = -w;
    }
    if m_b > 0 {
        let g = uniform(rng, m_b, m_b);
        let k = uniform(rng, m_b, m_b);
        let h = -(&g * g.transpose() * 0.5 + Mat::identity(m_b, m_b) * 0.5) + (&k - k.transpose()) * 0.5;
        core.view_mut((m_a, m_a), (m_b, m_b)).copy_from(&h);
    }
    let s = well_conditioned(rng, m_a + m_b);
    let s_inv = matkit::inverse(&s, "S").expect("well-conditioned draw");
    s_inv * core * s
}

/// Normal-form realization with random coupling blocks.
pub fn planted_normal_form<R: Rng>(rng: &mut R, spec: PlantSpec) -> Result<StateSpace> {
    let PlantSpec { p1, p2, .. } = spec;
    let m = spec.m();
    let n = spec.n();
    let mut a = uniform(rng, n, n);
    a.view_mut((0, 0), (m, m)).copy_from(&zero_dynamics(rng, spec.m_a, spec.m_b));
    let x2 = m + p1;
    a.view_mut((x2, 0), (p2, n)).fill(0.0);
    for i in 0..p2 {
        a[(x2 + i, x2 + p2 + i)] = 1.0;
    }
    StateSpace::new(a, NormalForm::structural_b(m, p1, p2), NormalForm::structural_c(m, p1, p2), None)
}

/// Draws until the hidden system is minimal. Returns the plant in original
/// coordinates and the transforms mapping it to the planted normal form.
pub fn planted_system<R: Rng>(rng: &mut R, spec: PlantSpec) -> Result<PlantedSystem> {
    loop {
        let normal = planted_normal_form(rng, spec)?;
        if !matkit::pbh_test(&normal.a, &normal.b, PbhMode::ControllableWith, None)?
            || !matkit::pbh_test(&normal.a, &normal.c, PbhMode::ObservableWith, None)?
        {
            continue;
        }
        let (n, p) = (spec.n(), spec.p());
        let t_x = well_conditioned(rng, n);
        let t_u = well_conditioned(rng, p);
        let t_y = well_conditioned(rng, p);
        let t_x_inv = matkit::inverse(&t_x, "T_x")?;
        let t_y_inv = matkit::inverse(&t_y, "T_y")?;
        let sys = StateSpace::new(
            &t_x_inv * &normal.a * &t_x,
            &t_x_inv * &normal.b * &t_u,
            &t_y_inv * &normal.c * &t_x,
            None,
        )?;
        if !sysmodel::is_minimal(&sys)?.is_minimal() {
            continue;
        }
        return Ok(PlantedSystem { spec, sys, normal, t_y, t_x, t_u });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planted_shapes_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let spec = PlantSpec::random_ni(&mut rng, 8, 3);
            let ps = planted_system(&mut rng, spec).unwrap();
            let info = structure::relative_degree_vector(&ps.normal).unwrap();
            let mut want = vec![1; spec.p1];
            want.extend(vec![2; spec.p2]);
            assert_eq!(info.r, want);
            assert!(!sysmodel::has_zero_at_origin(&ps.sys).unwrap());
        }
    }

    #[test]
    fn same_seed_same_system() {
        let spec = PlantSpec { p1: 1, p2: 1, m_a: 2, m_b: 1 };
        let a = planted_system(&mut ChaCha8Rng::seed_from_u64(3), spec).unwrap();
        let b = planted_system(&mut ChaCha8Rng::seed_from_u64(3), spec).unwrap();
        assert_eq!(a.sys.a, b.sys.a);
    }
}
