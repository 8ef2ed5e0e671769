//! Serializable forms of systems, certificates and transforms. Matrices are
//! nested row-major arrays; shapes are validated on conversion.

use serde::{Deserialize, Serialize};

use crate::certify::{Certificate, NiClass};
use crate::error::{Error, Result};
use crate::matkit::Mat;
use crate::structure::TransformSet;
use crate::sysmodel::StateSpace;

pub type Rows = Vec<Vec<f64>>;

pub fn mat_to_rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Rectangular matrix from rows. `cols_hint` fixes the width of an empty
/// matrix.
pub fn mat_from_rows(rows: &[Vec<f64>], what: &str, cols_hint: Option<usize>) -> Result<Mat> {
    let cols = rows.first().map(Vec::len).or(cols_hint).unwrap_or(0);
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Dimension(format!(
            "{what}: row {bad} has {} entries, expected {cols}",
            rows[bad].len()
        )));
    }
    let m = Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl SystemJson {
    pub fn to_system(&self) -> Result<StateSpace> {
        let a = mat_from_rows(&self.a, "A", Some(0))?;
        let n = a.nrows();
        let d = self.d.as_ref().map(|d| mat_from_rows(d, "D", None)).transpose()?;
        let (b, c) = if n == 0 {
            // without states the port counts come from D
            let (p, q) = d.as_ref().map_or((0, 0), |d| d.shape());
            let b = if self.b.is_empty() { Mat::zeros(0, q) } else { mat_from_rows(&self.b, "B", None)? };
            let c = if self.c.is_empty() { Mat::zeros(p, 0) } else { mat_from_rows(&self.c, "C", Some(0))? };
            (b, c)
        } else {
            (mat_from_rows(&self.b, "B", None)?, mat_from_rows(&self.c, "C", Some(n))?)
        };
        let sys = StateSpace::new(a, b, c, d)?;
        Ok(match &self.name {
            Some(name) => sys.with_name(name.clone()),
            None => sys,
        })
    }

    pub fn from_system(sys: &StateSpace) -> Self {
        Self {
            a: mat_to_rows(&sys.a),
            b: mat_to_rows(&sys.b),
            c: mat_to_rows(&sys.c),
            d: (!sys.has_zero_feedthrough()).then(|| mat_to_rows(&sys.d)),
            name: sys.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertificateJson {
    #[serde(rename = "Y")]
    pub y: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub class: String,
}

impl CertificateJson {
    pub fn from_certificate(cert: &Certificate) -> Self {
        Self { y: mat_to_rows(cert.y()), epsilon: cert.epsilon(), class: cert.class().to_string() }
    }

    pub fn parts(&self) -> Result<(Mat, Option<f64>, NiClass)> {
        let y = mat_from_rows(&self.y, "Y", Some(0))?;
        let class = self.class.parse()?;
        Ok((y, self.epsilon, class))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransformsJson {
    #[serde(rename = "T_y")]
    pub t_y: Rows,
    #[serde(rename = "T_x")]
    pub t_x: Rows,
    #[serde(rename = "T_u")]
    pub t_u: Rows,
}

impl TransformsJson {
    pub fn from_transforms(t: &TransformSet) -> Self {
        Self { t_y: mat_to_rows(&t.t_y), t_x: mat_to_rows(&t.t_x), t_u: mat_to_rows(&t.t_u) }
    }

    pub fn to_transforms(&self) -> Result<TransformSet> {
        TransformSet::new(
            mat_from_rows(&self.t_y, "T_y", Some(0))?,
            mat_from_rows(&self.t_x, "T_x", Some(0))?,
            mat_from_rows(&self.t_u, "T_u", Some(0))?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_round_trip() {
        let js = r#"{"A": [[0, 1], [-2, -3]], "B": [[0], [1]], "C": [[1, 0]], "name": "plant"}"#;
        let parsed: SystemJson = serde_json::from_str(js).unwrap();
        let sys = parsed.to_system().unwrap();
        assert_eq!(sys.a[(1, 0)], -2.0);
        assert_eq!(SystemJson::from_system(&sys), parsed);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let js = r#"{"A": [[0, 1], [-2]], "B": [[0], [1]], "C": [[1, 0]]}"#;
        let parsed: SystemJson = serde_json::from_str(js).unwrap();
        assert!(matches!(parsed.to_system(), Err(Error::Dimension(_))));
    }

    #[test]
    fn static_gain_system() {
        let js = r#"{"A": [], "B": [], "C": [], "D": [[0.5, 0], [0, 0.5]]}"#;
        let sys = serde_json::from_str::<SystemJson>(js).unwrap().to_system().unwrap();
        assert_eq!((sys.states(), sys.inputs(), sys.outputs()), (0, 2, 2));
    }
}
