use nisynth::certify::{self, FrequencyGrid, NiClass};
use nisynth::matkit::{self, Mat, PbhMode};
use nisynth::planted::{self, PlantSpec};
use nisynth::structure;
use nisynth::synth::{self, SynthesisConfig};
use nisynth::sysmodel::{self, StateSpace};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn kalman_rank(a: &Mat, b: &Mat) -> usize {
    let n = a.nrows();
    let mut blocks = Vec::new();
    let mut cur = b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * cur;
    }
    let refs: Vec<&Mat> = blocks.iter().collect();
    matkit::rank(&matkit::assemble(&[refs]), None)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ni_pipeline_emits_valid_certificates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec::random_ni(&mut r, 8, 3);
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, _) = structure::find_output_transformation(&ps.sys).unwrap();
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let gs = synth::synthesize_ni(&nf, &SynthesisConfig { rng_seed: seed, ..Default::default() }).unwrap();
        let res = gs.certificate.residuals();
        prop_assert!(res.pd_margin > 0.0);
        prop_assert!(res.coupling_residual <= 1e-8 * (1.0 + gs.closed_loop.a.norm() * gs.certificate.y().norm()));
        let sv = matkit::singular_values(&gs.closed_loop.a);
        prop_assert!(sv.last().copied().unwrap_or(1.0) > 1e-10 * gs.closed_loop.a.norm());
        let orig = synth::realize_in_original(&gs, &nf).unwrap();
        prop_assert!(orig.verdict.holds, "{:?}", orig.verdict.notes);
        let v = certify::classify_freq(&orig.closed_loop, NiClass::Ni, &FrequencyGrid::default(), None).unwrap();
        prop_assert!(v.holds, "{:?}", v.notes);
    }

    #[test]
    fn normal_form_dc_gain_matches_weights(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec { m_a: 0, ..PlantSpec::random_ni(&mut r, 7, 3) };
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, _) = structure::find_output_transformation(&ps.sys).unwrap();
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let y2 = Mat::identity(nf.p1, nf.p1) * 0.7;
        let y3 = Mat::identity(nf.p2, nf.p2) * 1.3;
        let cfg = SynthesisConfig { y2: Some(y2.clone()), y3: Some(y3.clone()), ..Default::default() };
        let gs = synth::synthesize_ni(&nf, &cfg).unwrap();
        let r0 = sysmodel::dc_gain(&gs.closed_loop).unwrap();
        prop_assert!((r0 - matkit::block_diag(&y2, &y3)).norm() < 1e-8);
    }

    #[test]
    fn normal_form_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec::random_ni(&mut r, 8, 3);
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, info) = structure::find_output_transformation(&ps.sys).unwrap();
        prop_assert!(info.at_most_two());
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let t = &nf.transforms;
        let scale = 1.0 + ps.sys.a.norm() + ps.sys.b.norm() + ps.sys.c.norm();
        prop_assert!((&t.t_x_inv * &nf.a_tilde * &t.t_x - &ps.sys.a).norm() <= 1e-8 * scale);
        prop_assert!((&t.t_x_inv * &nf.b_tilde * &t.t_u - &ps.sys.b).norm() <= 1e-8 * scale);
        prop_assert!((&t.t_y_inv * &nf.c_tilde * &t.t_x - &ps.sys.c).norm() <= 1e-8 * scale);
    }

    #[test]
    fn relative_degree_invariant_under_state_change(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec::random_ni(&mut r, 8, 3);
        let normal = planted::planted_normal_form(&mut r, spec).unwrap();
        let t = uniform(&mut r, spec.n(), spec.n()) + Mat::identity(spec.n(), spec.n()) * 3.0;
        let ti = matkit::inverse(&t, "T").unwrap();
        let moved = StateSpace::new(&ti * &normal.a * &t, &ti * &normal.b, &normal.c * &t, None).unwrap();
        let a = structure::relative_degree_vector(&normal).unwrap();
        let b = structure::relative_degree_vector(&moved).unwrap();
        prop_assert_eq!(a.r, b.r);
        prop_assert_eq!(a.kind, b.kind);
    }

    #[test]
    fn ni_verdict_invariant_under_congruence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec { m_a: 0, ..PlantSpec::random_ni(&mut r, 6, 2) };
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, _) = structure::find_output_transformation(&ps.sys).unwrap();
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let gs = synth::synthesize_ni(&nf, &SynthesisConfig::default()).unwrap();
        let p = nf.p();
        let t = uniform(&mut r, p, p) + Mat::identity(p, p) * 2.0;
        let sys = &gs.closed_loop;
        let moved = StateSpace::new(sys.a.clone(), &sys.b * t.transpose(), &t * &sys.c, None).unwrap();
        let grid = FrequencyGrid::default();
        let a = certify::classify_freq(sys, NiClass::Ni, &grid, None).unwrap();
        let b = certify::classify_freq(&moved, NiClass::Ni, &grid, None).unwrap();
        prop_assert_eq!(a.holds, b.holds);
    }

    #[test]
    fn osni_certificate_implies_ni(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut spec = PlantSpec::random_ni(&mut r, 8, 3);
        if spec.p2 > spec.p1 {
            std::mem::swap(&mut spec.p1, &mut spec.p2);
        }
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let nf = structure::NormalForm::from_transforms(
            &ps.sys,
            structure::TransformSet::new(ps.t_y.clone(), ps.t_x.clone(), ps.t_u.clone()).unwrap(),
        ).unwrap();
        let gs = synth::synthesize_osni(&nf, &SynthesisConfig { rng_seed: seed, ..Default::default() }).unwrap();
        prop_assert!(gs.verdict.holds);
        let (ni, _) = certify::verify_certificate(&gs.closed_loop, NiClass::Ni, gs.certificate.y(), None).unwrap();
        prop_assert!(ni.holds);
    }

    #[test]
    fn ssni_synthesis_meets_contract(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec::random_ssni(&mut r, 6, 3);
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, _) = structure::find_output_transformation(&ps.sys).unwrap();
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let gs = synth::synthesize_ssni(&nf, &SynthesisConfig::default()).unwrap();
        prop_assert!(gs.certificate.residuals().lyap_residual < -1e-10);
        prop_assert_eq!(matkit::stability_class(&gs.closed_loop.a).unwrap(), matkit::StabilityClass::Hurwitz);
        let v = certify::classify_freq(&gs.closed_loop, NiClass::Ssni, &FrequencyGrid::default(), None).unwrap();
        prop_assert!(v.holds, "{:?}", v.notes);
    }

    #[test]
    fn transfer_function_conjugate_symmetry(seed in any::<u64>(), re in -2.0f64..2.0, im in 0.1f64..5.0) {
        let mut r = rng(seed);
        let n = r.gen_range(1..6);
        let sys = StateSpace::new(uniform(&mut r, n, n), uniform(&mut r, n, 2), uniform(&mut r, 2, n), None).unwrap();
        let s = Complex64::new(re, im);
        let (Ok(a), Ok(b)) = (sysmodel::eval_tf(&sys, s), sysmodel::eval_tf(&sys, s.conj())) else {
            return Ok(());
        };
        prop_assert!((a.map(|z| z.conj()) - b).norm() <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn synthesis_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = PlantSpec::random_ni(&mut r, 6, 2);
        let ps = planted::planted_system(&mut r, spec).unwrap();
        let (t_y, _) = structure::find_output_transformation(&ps.sys).unwrap();
        let nf = structure::to_normal_form(&ps.sys, &t_y).unwrap();
        let cfg = SynthesisConfig { rng_seed: 7, ..Default::default() };
        let a = synth::synthesize_ni(&nf, &cfg).unwrap();
        let b = synth::synthesize_ni(&nf, &cfg).unwrap();
        prop_assert_eq!(a.closed_loop.a, b.closed_loop.a);
    }
}

#[test]
fn pbh_agrees_with_kalman_rank() {
    let mut r = rng(5);
    for k in 0..200 {
        let n = r.gen_range(1..=5);
        let m = r.gen_range(1..=2);
        let a = uniform(&mut r, n, n);
        // every third case gets a planted uncontrollable mode
        let b = if k % 3 == 0 {
            let mut b = uniform(&mut r, n, m);
            b.row_mut(n - 1).fill(0.0);
            let mut a2 = a.clone();
            a2.row_mut(n - 1).fill(0.0);
            a2[(n - 1, n - 1)] = 0.5;
            let ctrb = kalman_rank(&a2, &b) == n;
            assert_eq!(matkit::pbh_test(&a2, &b, PbhMode::ControllableWith, None).unwrap(), ctrb);
            continue;
        } else {
            uniform(&mut r, n, m)
        };
        let ctrb = kalman_rank(&a, &b) == n;
        assert_eq!(matkit::pbh_test(&a, &b, PbhMode::ControllableWith, None).unwrap(), ctrb);
    }
}

#[test]
fn lyapunov_residuals_on_random_hurwitz() {
    let mut r = rng(9);
    for _ in 0..100 {
        let n = r.gen_range(1..=6);
        let g = uniform(&mut r, n, n);
        let shift = matkit::eig(&g).unwrap().max_real() + r.gen_range(0.1..1.0);
        let a = g - Mat::identity(n, n) * shift;
        let q = Mat::identity(n, n);
        let p = matkit::solve_lyapunov(&a, &q).unwrap();
        assert!((&p - p.transpose()).norm() <= 1e-10 * (1.0 + p.norm()));
        assert!((a.transpose() * &p + &p * &a + &q).norm() <= 1e-8 * (1.0 + p.norm()));
    }
}
