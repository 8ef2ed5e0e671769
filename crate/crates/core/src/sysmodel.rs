//! State-space systems, transfer-function evaluation, minimality, the
//! origin-zero test, positive-feedback interconnection and RK4 simulation.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkit::{self, CMat, Mat, PbhMode};

/// `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub name: Option<String>,
}

impl StateSpace {
    /// Validates shapes and finiteness. A missing `D` is zero.
    pub fn new(a: Mat, b: Mat, c: Mat, d: Option<Mat>) -> Result<Self> {
        let n = matkit::check_square(&a)?;
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, A is {n}x{n}", c.ncols())));
        }
        let d = d.unwrap_or_else(|| Mat::zeros(c.nrows(), b.ncols()));
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(Error::Dimension(format!(
                "D is {:?}, expected {}x{}",
                d.shape(),
                c.nrows(),
                b.ncols()
            )));
        }
        for m in [&a, &b, &c, &d] {
            matkit::check_finite(m)?;
        }
        Ok(Self { a, b, c, d, name: None })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Static gain `y = D u` with no states.
    pub fn static_gain(d: Mat) -> Result<Self> {
        let (p, q) = d.shape();
        Self::new(Mat::zeros(0, 0), Mat::zeros(0, q), Mat::zeros(p, 0), Some(d))
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Port count of a square system.
    pub fn ports(&self) -> Result<usize> {
        if self.inputs() == self.outputs() {
            Ok(self.inputs())
        } else {
            Err(Error::Dimension(format!(
                "system has {} inputs and {} outputs, a square system is required",
                self.inputs(),
                self.outputs()
            )))
        }
    }

    /// Requires rank B = rank C = p.
    pub fn check_full_rank_ports(&self) -> Result<usize> {
        let p = self.ports()?;
        if matkit::rank_rel(&self.b, matkit::STRUCTURAL_RTOL) != p {
            return Err(Error::RankDeficient("rank B < p".into()));
        }
        if matkit::rank_rel(&self.c, matkit::STRUCTURAL_RTOL) != p {
            return Err(Error::RankDeficient("rank C < p".into()));
        }
        Ok(p)
    }

    pub fn has_zero_feedthrough(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }
}

/// Transfer-matrix evaluator with the pole list computed once. Holds no
/// mutable state, so one instance can serve concurrent sweeps.
#[derive(Debug, Clone)]
pub struct TfEvaluator {
    a: CMat,
    b: CMat,
    c: CMat,
    d: CMat,
    poles: Vec<Complex64>,
    proximity: f64,
}

impl TfEvaluator {
    pub fn new(sys: &StateSpace) -> Result<Self> {
        let poles = matkit::eig(&sys.a)?.values;
        Ok(Self {
            a: matkit::to_complex(&sys.a),
            b: matkit::to_complex(&sys.b),
            c: matkit::to_complex(&sys.c),
            d: matkit::to_complex(&sys.d),
            poles,
            proximity: 1e-9 * (1.0 + sys.a.norm()),
        })
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn eval(&self, s: Complex64) -> Result<CMat> {
        if let Some(&pole) = self.poles.iter().find(|&&l| (s - l).norm() < self.proximity) {
            return Err(Error::PoleProximity { pole });
        }
        let n = self.a.nrows();
        if n == 0 {
            return Ok(self.d.clone());
        }
        let resolvent = CMat::identity(n, n) * s - &self.a;
        let x = resolvent.lu().solve(&self.b).ok_or(Error::PoleProximity { pole: s })?;
        Ok(&self.c * x + &self.d)
    }
}

/// `R(s) = C(sI − A)⁻¹B + D`.
pub fn eval_tf(sys: &StateSpace, s: Complex64) -> Result<CMat> {
    TfEvaluator::new(sys)?.eval(s)
}

/// Real DC gain `R(0)`.
pub fn dc_gain(sys: &StateSpace) -> Result<Mat> {
    Ok(eval_tf(sys, Complex64::new(0.0, 0.0))?.map(|z| z.re))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Minimality {
    pub controllable: bool,
    pub observable: bool,
}

impl Minimality {
    pub fn is_minimal(&self) -> bool {
        self.controllable && self.observable
    }
}

pub fn is_minimal(sys: &StateSpace) -> Result<Minimality> {
    Ok(Minimality {
        controllable: matkit::pbh_test(&sys.a, &sys.b, PbhMode::ControllableWith, None)?,
        observable: matkit::pbh_test(&sys.a, &sys.c, PbhMode::ObservableWith, None)?,
    })
}

/// True when the Rosenbrock pencil `[[A, B], [C, D]]` loses rank at `s = 0`.
pub fn has_zero_at_origin(sys: &StateSpace) -> Result<bool> {
    let p = sys.ports()?;
    let n = sys.states();
    let pencil = matkit::assemble(&[vec![&sys.a, &sys.b], vec![&sys.c, &sys.d]]);
    Ok(matkit::rank_rel(&pencil, matkit::STRUCTURAL_RTOL) < n + p)
}

/// Positive-feedback loop `u_p = y_Δ + r`, `u_Δ = y_p`. The exogenous input
/// `r` enters at the plant input and the loop output is `y_p`; the state is
/// stacked as `[x_p; x_Δ]`.
pub fn interconnect_positive_feedback(plant: &StateSpace, delta: &StateSpace) -> Result<StateSpace> {
    let p = plant.ports()?;
    if delta.inputs() != p || delta.outputs() != p {
        return Err(Error::Dimension(format!(
            "plant has {p} ports, uncertainty is {}x{}",
            delta.outputs(),
            delta.inputs()
        )));
    }
    let (np, nd) = (plant.states(), delta.states());
    let loop_gain = Mat::identity(p, p) - &plant.d * &delta.d;
    let e = matkit::inverse(&loop_gain, "I - D_p D_Δ").map_err(|_| Error::IllPosed)?;

    // y_p = Cy x + Dy r
    let dp_cd = &plant.d * &delta.c;
    let cy = &e * matkit::assemble(&[vec![&plant.c, &dp_cd]]);
    let dy = &e * &plant.d;
    // y_Δ = Cw x + Dw r
    let zero_pn = Mat::zeros(p, np);
    let cw = matkit::assemble(&[vec![&zero_pn, &delta.c]]) + &delta.d * &cy;
    let dw = &delta.d * &dy;

    let a_open = matkit::block_diag(&plant.a, &delta.a);
    let bp_cw = &plant.b * &cw;
    let bd_cy = &delta.b * &cy;
    let a = a_open + matkit::assemble(&[vec![&bp_cw], vec![&bd_cy]]);
    let bp_in = &plant.b * (Mat::identity(p, p) + &dw);
    let bd_in = &delta.b * &dy;
    let b = matkit::assemble(&[vec![&bp_in], vec![&bd_in]]);
    debug_assert_eq!(a.nrows(), np + nd);
    StateSpace::new(a, b, cy, Some(dy))
}

/// Input signal for [`simulate`].
#[derive(Debug, Clone)]
pub enum Input {
    None,
    Constant(DVector<f64>),
    /// Samples at increasing times, linearly interpolated and held constant
    /// outside the sampled range.
    Sampled { times: Vec<f64>, values: Vec<DVector<f64>> },
}

impl Input {
    fn at(&self, t: f64, p: usize) -> DVector<f64> {
        match self {
            Input::None => DVector::zeros(p),
            Input::Constant(u) => u.clone(),
            Input::Sampled { times, values } => {
                if times.is_empty() {
                    return DVector::zeros(p);
                }
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0].clone()
                } else if k >= times.len() {
                    values[times.len() - 1].clone()
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                    &values[k - 1] * (1.0 - w) + &values[k] * w
                }
            }
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            Input::None => Ok(()),
            Input::Constant(u) if u.len() == p => Ok(()),
            Input::Constant(u) => Err(Error::Dimension(format!("input has {} entries, expected {p}", u.len()))),
            Input::Sampled { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::Dimension("sample times and values differ in length".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument("sample times must increase".into()));
                }
                if values.iter().any(|v| v.len() != p) {
                    return Err(Error::Dimension(format!("input samples must have {p} entries")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Fixed-step RK4 over `[0, t_end]` with `round(t_end/dt)` steps.
pub fn simulate(sys: &StateSpace, x0: &DVector<f64>, input: &Input, t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument("t_end and dt must be positive and finite".into()));
    }
    if x0.len() != sys.states() {
        return Err(Error::Dimension(format!("x0 has {} entries, system has {} states", x0.len(), sys.states())));
    }
    let p = sys.inputs();
    input.validate(p)?;
    let steps = ((t_end / dt).round() as usize).max(1);
    let h = t_end / steps as f64;
    let f = |t: f64, x: &DVector<f64>| &sys.a * x + &sys.b * input.at(t, p);
    let output = |t: f64, x: &DVector<f64>| &sys.c * x + &sys.d * input.at(t, p);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    times.push(0.0);
    outputs.push(output(0.0, &x));
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t1 = (k + 1) as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t1 });
        }
        times.push(t1);
        outputs.push(output(t1, &x));
        states.push(x.clone());
    }
    Ok(Trajectory { times, states, outputs })
}

/// Plant with an uncertainty bound `λ_max(Δ(0)) ≤ γ` and an optional sample
/// of the uncertainty.
#[derive(Debug, Clone)]
pub struct UncertainSystem {
    pub plant: StateSpace,
    pub gamma: f64,
    pub delta: Option<StateSpace>,
}

impl UncertainSystem {
    pub fn new(plant: StateSpace, gamma: f64, delta: Option<StateSpace>) -> Result<Self> {
        plant.ports()?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { plant, gamma, delta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    fn first_order() -> StateSpace {
        StateSpace::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), None).unwrap()
    }

    #[test]
    fn eval_first_order() {
        let sys = first_order();
        let r0 = eval_tf(&sys, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(r0[(0, 0)].re, 1.0, epsilon = 1e-15);
        let rj = eval_tf(&sys, Complex64::new(0.0, 1.0)).unwrap()[(0, 0)];
        assert_relative_eq!(rj.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(rj.im, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn eval_at_pole_is_rejected() {
        let sys = first_order();
        assert!(matches!(eval_tf(&sys, Complex64::new(-1.0, 0.0)), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn minimality_examples() {
        let s = StateSpace::new(m(2, 2, &[-1.0, 0.0, 0.0, -2.0]), m(2, 1, &[1.0, 0.0]), m(1, 2, &[1.0, 1.0]), None)
            .unwrap();
        assert!(!is_minimal(&s).unwrap().controllable);
        assert!(is_minimal(&first_order()).unwrap().is_minimal());
    }

    #[test]
    fn origin_zero_examples() {
        let integ = StateSpace::new(m(1, 1, &[0.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), None).unwrap();
        assert!(!has_zero_at_origin(&integ).unwrap());
        // R(s) = 1/(s+1) - 1/(s+1) = 0, oracle det [[-1,0,1],[0,-1,1],[1,-1,0]] = 0
        let cancel =
            StateSpace::new(-Mat::identity(2, 2), m(2, 1, &[1.0, 1.0]), m(1, 2, &[1.0, -1.0]), None).unwrap();
        let pencil = m(3, 3, &[-1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 1.0, -1.0, 0.0]);
        assert!(pencil.determinant().abs() < 1e-15);
        assert!(has_zero_at_origin(&cancel).unwrap());
    }

    #[test]
    fn interconnection_with_zero_delta_is_block_diagonal() {
        let plant = first_order();
        let delta = StateSpace::new(m(1, 1, &[-3.0]), m(1, 1, &[0.0]), m(1, 1, &[0.0]), None).unwrap();
        let cl = interconnect_positive_feedback(&plant, &delta).unwrap();
        assert_eq!(cl.a, m(2, 2, &[-1.0, 0.0, 0.0, -3.0]));
    }

    #[test]
    fn interconnection_rejects_mismatched_ports() {
        let plant = first_order();
        let delta = StateSpace::static_gain(Mat::identity(2, 2)).unwrap();
        assert!(matches!(interconnect_positive_feedback(&plant, &delta), Err(Error::Dimension(_))));
    }

    #[test]
    fn interconnection_ill_posed() {
        let plant = StateSpace::static_gain(m(1, 1, &[1.0])).unwrap();
        let delta = StateSpace::static_gain(m(1, 1, &[1.0])).unwrap();
        assert!(matches!(interconnect_positive_feedback(&plant, &delta), Err(Error::IllPosed)));
    }

    #[test]
    fn interconnection_with_feedthrough() {
        // plant 1/(s+1) + 1, static delta 0.5: loop y = (R r) / (1 - 0.5 R)
        let plant = StateSpace::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), Some(m(1, 1, &[1.0]))).unwrap();
        let delta = StateSpace::static_gain(m(1, 1, &[0.5])).unwrap();
        let cl = interconnect_positive_feedback(&plant, &delta).unwrap();
        let s = Complex64::new(0.3, 0.7);
        let r = eval_tf(&plant, s).unwrap()[(0, 0)];
        let want = r / (1.0 - 0.5 * r);
        let got = eval_tf(&cl, s).unwrap()[(0, 0)];
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn scalar_decay() {
        let sys = first_order();
        let x0 = DVector::from_element(1, 1.0);
        let tr = simulate(&sys, &x0, &Input::None, 1.0, 1e-3).unwrap();
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let sys = first_order();
        let tr = simulate(&sys, &DVector::zeros(1), &Input::None, 2.0, 0.01).unwrap();
        assert!(tr.states.iter().all(|x| x.norm() == 0.0));
        assert_eq!(tr.times.len(), tr.states.len());
        assert_eq!(tr.outputs.len(), tr.states.len());
    }

    #[test]
    fn constant_input_reaches_dc_gain() {
        let sys = first_order();
        let u = Input::Constant(DVector::from_element(1, 2.0));
        let tr = simulate(&sys, &DVector::zeros(1), &u, 20.0, 1e-2).unwrap();
        assert!((tr.outputs.last().unwrap()[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn divergence_is_reported() {
        let sys = StateSpace::new(m(1, 1, &[1e5]), m(1, 1, &[0.0]), m(1, 1, &[1.0]), None).unwrap();
        let r = simulate(&sys, &DVector::from_element(1, 1.0), &Input::None, 100.0, 1.0);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(StateSpace::new(Mat::zeros(2, 2), Mat::zeros(3, 1), Mat::zeros(1, 2), None).is_err());
        assert!(StateSpace::new(Mat::zeros(2, 2), Mat::zeros(2, 1), Mat::zeros(1, 3), None).is_err());
        assert!(UncertainSystem::new(first_order(), 0.0, None).is_err());
    }
}
