//! Report envelope and JSON encoders for library types.

use std::collections::BTreeMap;

use nisynth::certify::{Certificate, Verdict};
use nisynth::io::{mat_to_rows, CertificateJson, SystemJson, TransformsJson};
use nisynth::matkit::Mat;
use nisynth::structure::NormalForm;
use nisynth::synth::{FreeParameters, GainBlocks};
use nisynth::sysmodel::StateSpace;
use nisynth::ErrorKind;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, kind: "input", message: message.into() }
    }
}

impl From<nisynth::Error> for Failure {
    fn from(e: nisynth::Error) -> Self {
        let (code, kind) = match e.kind() {
            ErrorKind::Input => (EXIT_INPUT, "input"),
            ErrorKind::Verdict => (EXIT_VERDICT, "verdict"),
            ErrorKind::Numerical => (EXIT_NUMERICAL, "numerical"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
}

/// Top-level report. Field order is fixed and maps are sorted, so identical
/// runs serialize identically apart from `timings_ms`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub rng_seed: Option<u64>,
    pub status: &'static str,
    pub exit_code: i32,
    pub verdict: Option<bool>,
    pub result: Value,
    pub error: Option<ErrorReport>,
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn status_for(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_VERDICT => "verdict_failed",
        EXIT_INPUT => "input_error",
        _ => "numerical_error",
    }
}

pub fn mat(m: &Mat) -> Value {
    json!(mat_to_rows(m))
}

pub fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn system(sys: &StateSpace) -> Value {
    json!(SystemJson::from_system(sys))
}

pub fn verdict(v: &Verdict) -> Value {
    json!({
        "holds": v.holds,
        "class": v.class.map(|c| c.to_string()),
        "worst_omega": v.worst_omega,
        "worst_margin": v.worst_margin,
        "worst_eigenvalue": v.worst_eigenvalue.map(complex),
        "notes": v.notes,
    })
}

pub fn certificate(c: &Certificate) -> Value {
    json!(CertificateJson::from_certificate(c))
}

pub fn residuals(c: &Certificate) -> Value {
    let r = c.residuals();
    json!({
        "lyap_residual": r.lyap_residual,
        "coupling_residual": r.coupling_residual,
        "pd_margin": r.pd_margin,
    })
}

pub fn blocks(b: &GainBlocks) -> Value {
    match b {
        GainBlocks::Ni { k10, k11, k12, k13, k20, k21, k22, k23 } => json!({
            "K10": mat(k10), "K11": mat(k11), "K12": mat(k12), "K13": mat(k13),
            "K20": mat(k20), "K21": mat(k21), "K22": mat(k22), "K23": mat(k23),
        }),
        GainBlocks::Ssni { k1, k2 } => json!({ "K1": mat(k1), "K2": mat(k2) }),
    }
}

pub fn free_parameters(f: &FreeParameters) -> Value {
    json!({
        "y1a": f.y1a,
        "Y1b": mat(&f.y1b),
        "Qb": mat(&f.qb),
        "H": mat(&f.h),
        "K13": mat(&f.k13),
        "Y2": mat(&f.y2),
        "Y3": mat(&f.y3),
        "theta": f.theta,
        "rng_seed": f.rng_seed,
        "attempts": f.attempts,
    })
}

pub fn normal_form(nf: &NormalForm) -> Value {
    json!({
        "p1": nf.p1,
        "p2": nf.p2,
        "m": nf.m,
        "blocks": {
            "A00": mat(&nf.a00), "A01": mat(&nf.a01), "A02": mat(&nf.a02), "A03": mat(&nf.a03),
            "A10": mat(&nf.a10), "A11": mat(&nf.a11), "A12": mat(&nf.a12), "A13": mat(&nf.a13),
            "A30": mat(&nf.a30), "A31": mat(&nf.a31), "A32": mat(&nf.a32), "A33": mat(&nf.a33),
        },
        "A_tilde": mat(&nf.a_tilde),
        "transforms": TransformsJson::from_transforms(&nf.transforms),
    })
}
