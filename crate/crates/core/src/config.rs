//! Plain-text (TOML) model specification.
//!
//! ```toml
//! F = [[1.0, 1.0], [0.0, 1.0]]
//! H = [[1.0, 0.0]]
//! Q = [[0.0333, 0.05], [0.05, 0.1]]
//! R = [[9.0]]            # or: r_sq = [9.0]
//! position = [0]         # state indices scored as position
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::LinearGaussianModel;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R", default)]
    r: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    r_sq: Option<Vec<f64>>,
    #[serde(default)]
    position: Option<Vec<usize>>,
}

/// A model together with the state components that count as position.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub model: LinearGaussianModel,
    pub position: Vec<usize>,
}

fn matrix(name: &'static str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims(
            name,
            "non-empty rectangular matrix",
            "ragged or empty rows",
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawModel = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("model file: {e}")))?;
        let (f, h, q) = (matrix("F", &raw.f)?, matrix("H", &raw.h)?, matrix("Q", &raw.q)?);
        let model = match (raw.r, raw.r_sq) {
            (Some(r), None) => LinearGaussianModel::new(f, h, q, matrix("R", &r)?)?,
            (None, Some(r_sq)) => LinearGaussianModel::with_diagonal_r(f, h, q, DVector::from_vec(r_sq))?,
            _ => return Err(Error::InvalidConfig("model file needs exactly one of R or r_sq".into())),
        };
        let position = raw.position.unwrap_or_else(|| vec![0]);
        if position.is_empty() || position.iter().any(|&i| i >= model.state_dim()) {
            return Err(Error::InvalidConfig(format!(
                "position indices {position:?} out of range for state dimension {}",
                model.state_dim()
            )));
        }
        Ok(Self { model, position })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
