//! Synthesis configuration file: optional overrides of every free parameter
//! and, optionally, fixed transforms.

use nisynth::io::{mat_from_rows, Rows, TransformsJson};
use nisynth::matkit::Mat;
use nisynth::structure::TransformSet;
use nisynth::synth::{K13Policy, SynthesisConfig};
use nisynth::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigJson {
    #[serde(rename = "Y2")]
    pub y2: Option<Rows>,
    #[serde(rename = "Y3")]
    pub y3: Option<Rows>,
    pub y1a: Option<f64>,
    #[serde(rename = "Qb")]
    pub qb: Option<Rows>,
    #[serde(rename = "Y1b")]
    pub y1b: Option<Rows>,
    pub theta: Option<f64>,
    #[serde(rename = "K13_policy")]
    pub k13_policy: Option<String>,
    #[serde(rename = "H")]
    pub h: Option<Rows>,
    #[serde(rename = "K13")]
    pub k13: Option<Rows>,
    pub epsilon: Option<f64>,
    pub rng_seed: Option<u64>,
    pub max_retries: Option<usize>,
    pub transforms: Option<TransformsJson>,
}

fn parse_policy(s: &str) -> Result<K13Policy> {
    match s.to_ascii_lowercase().as_str() {
        "zero" => Ok(K13Policy::Zero),
        "orthonormal" => Ok(K13Policy::Orthonormal),
        "random-in-s_k" | "random" => Ok(K13Policy::RandomInSk),
        other => Err(Error::InvalidArgument(format!("unknown K13 policy {other:?}"))),
    }
}

fn opt_mat(rows: &Option<Rows>, what: &str) -> Result<Option<Mat>> {
    rows.as_ref().map(|r| mat_from_rows(r, what, Some(0))).transpose()
}

impl ConfigJson {
    pub fn to_config(&self) -> Result<(SynthesisConfig, Option<TransformSet>)> {
        let d = SynthesisConfig::default();
        let cfg = SynthesisConfig {
            y2: opt_mat(&self.y2, "Y2")?,
            y3: opt_mat(&self.y3, "Y3")?,
            y1a: self.y1a.unwrap_or(d.y1a),
            qb: opt_mat(&self.qb, "Qb")?,
            y1b: opt_mat(&self.y1b, "Y1b")?,
            theta: self.theta.unwrap_or(d.theta),
            k13_policy: self.k13_policy.as_deref().map(parse_policy).transpose()?.unwrap_or(d.k13_policy),
            h: opt_mat(&self.h, "H")?,
            k13: opt_mat(&self.k13, "K13")?,
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
        };
        let transforms = self.transforms.as_ref().map(TransformsJson::to_transforms).transpose()?;
        Ok((cfg, transforms))
    }
}

/// A weight given on the command line: a scalar `β` (meaning `β·I`) or a
/// JSON matrix.
pub fn parse_weight(text: &str, dim: usize, what: &str) -> Result<Mat> {
    if let Ok(beta) = text.trim().parse::<f64>() {
        return Ok(Mat::identity(dim, dim) * beta);
    }
    let rows: Rows = serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("{what}: expected a scalar or a JSON matrix ({e})")))?;
    mat_from_rows(&rows, what, Some(0))
}

/// A vector given as comma-separated numbers or a JSON array.
pub fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    if t.starts_with('[') {
        return serde_json::from_str(t).map_err(|e| Error::InvalidArgument(format!("{what}: {e}")));
    }
    t.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{what}: {e}"))))
        .collect()
}
