//! Gain files: synthesized or hand-entered `E`, `Π`, `K` plus diagnostics.

use std::fs;
use std::path::Path;

use pcons_core::synthesis::{Certificate, GainSet};
use pcons_core::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::scenario::{matrix_to_rows, Rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Theorem1,
    Theorem2,
}

impl From<Variant> for VariantName {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Theorem1 => VariantName::Theorem1,
            Variant::Theorem2 => VariantName::Theorem2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRecord {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub normative: bool,
}

impl From<&Certificate> for CertificateRecord {
    fn from(c: &Certificate) -> Self {
        Self {
            name: c.name.into(),
            passed: c.passed,
            worst: c.worst,
            normative: c.normative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantName>,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "Pi", default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Rows>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(rename = "Sigma", default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    /// Half-width of the rounding interval of the `E` entries.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub precision: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateRecord>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl GainsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("gains serialize");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

impl From<&GainSet> for GainsFile {
    fn from(g: &GainSet) -> Self {
        Self {
            variant: Some(g.variant.into()),
            e: matrix_to_rows(&g.e),
            pi: Some(matrix_to_rows(&g.pi)),
            k: Some(matrix_to_rows(&g.k)),
            p: Some(matrix_to_rows(&g.p)),
            sigma: Some(matrix_to_rows(&g.sigma)),
            alpha: Some(g.alpha),
            gamma: Some(g.gamma.clone()),
            precision: 0.0,
            seed: Some(g.seed),
            rounds: Some(g.rounds),
            iterations: Some(g.iterations),
            certificates: g.certificates.iter().map(Into::into).collect(),
        }
    }
}
