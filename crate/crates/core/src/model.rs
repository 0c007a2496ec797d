//! Trained classifiers and their text format.
//!
//! A model stores the rows with non-negligible coefficients and evaluates
//! `f(x) = sum_i c_i (K(x_i, x) + 1)`. The file format is canonical JSON
//! (17 significant digits per float), so save -> load -> save is byte-stable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::format::to_canonical_json;
use crate::kernel::KernelSpec;
use crate::loss::{LossKind, LossParams};
use crate::solver::{cccp_train, train_baseline, SolverConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Coefficients at or below this magnitude are dropped from the stored model.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSection {
    pub kind: LossKind,
    pub eta: f64,
    pub lambda: f64,
    pub s: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub n_train: usize,
    pub d: usize,
    pub cccp_iterations: usize,
    pub final_objective: f64,
    pub config_digest: String,
    pub format_version: u32,
    /// Effective configuration that produced the model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    loss: LossSection,
    kernel: KernelSpec,
    support: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    meta: ModelMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    kind: LossKind,
    params: LossParams,
    kernel: KernelSpec,
    support: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    meta: ModelMeta,
    transform: Option<Standardizer>,
}

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kind: LossKind,
    pub kernel: KernelSpec,
    pub params: LossParams,
    pub solver: SolverConfig,
}

impl FitConfig {
    pub fn digest(&self) -> String {
        let text = to_canonical_json(self).unwrap_or_default();
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn fit(&self, ds: &Dataset) -> Result<TrainedModel> {
        fit(ds, &self.kernel, &self.params, &self.solver, self.kind)
    }
}

/// Trains a classifier of the requested kind. The rescaled loss goes through
/// the CCCP solver, the other kinds through their convex baseline.
pub fn fit(
    ds: &Dataset,
    spec: &KernelSpec,
    p: &LossParams,
    cfg: &SolverConfig,
    kind: LossKind,
) -> Result<TrainedModel> {
    match kind {
        LossKind::RescaledHP => cccp_train(ds, spec, p, cfg).map(|(m, _)| m),
        _ => train_baseline(kind, ds, spec, p, cfg),
    }
}

impl TrainedModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_training(
        kind: LossKind,
        params: LossParams,
        kernel: KernelSpec,
        ds: &Dataset,
        coeffs: &[f64],
        iterations: usize,
        objective: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("training produced non-finite coefficients".into()));
        }
        let fit_cfg = FitConfig {
            kind,
            kernel,
            params,
            solver: *cfg,
        };
        let (support, kept): (Vec<Vec<f64>>, Vec<f64>) = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > PRUNE_THRESHOLD)
            .map(|(i, &c)| (ds.row(i).to_vec(), c))
            .unzip();
        Ok(TrainedModel {
            kind,
            params,
            kernel,
            support,
            coeffs: kept,
            meta: ModelMeta {
                n_train: ds.n(),
                d: ds.d(),
                cccp_iterations: iterations,
                final_objective: objective,
                config_digest: fit_cfg.digest(),
                format_version: FORMAT_VERSION,
                config: None,
            },
            transform: None,
        })
    }

    /// A model with explicit support rows and coefficients, mainly for tests
    /// and tooling.
    pub fn from_parts(
        kind: LossKind,
        params: LossParams,
        kernel: KernelSpec,
        support: Vec<Vec<f64>>,
        coeffs: Vec<f64>,
        d: usize,
    ) -> Result<Self> {
        let m = TrainedModel {
            kind,
            params,
            kernel,
            meta: ModelMeta {
                n_train: support.len(),
                d,
                cccp_iterations: 0,
                final_objective: f64::NAN,
                config_digest: String::new(),
                format_version: FORMAT_VERSION,
                config: None,
            },
            support,
            coeffs,
            transform: None,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.support.len() != self.coeffs.len() {
            return Err(Error::Format(format!(
                "{} support rows but {} coefficients",
                self.support.len(),
                self.coeffs.len()
            )));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Format("non-finite coefficient".into()));
        }
        if self
            .support
            .iter()
            .any(|r| r.len() != self.meta.d || r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Format(format!(
                "support rows must have {} finite entries",
                self.meta.d
            )));
        }
        if let Some(t) = &self.transform {
            if t.mu.len() != self.meta.d || t.sigma.len() != self.meta.d {
                return Err(Error::Format("transform dimension mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }
    pub fn params(&self) -> &LossParams {
        &self.params
    }
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }
    pub fn dim(&self) -> usize {
        self.meta.d
    }
    pub fn transform(&self) -> Option<&Standardizer> {
        self.transform.as_ref()
    }

    /// Attaches the input standardization applied before every prediction.
    pub fn with_transform(mut self, t: Standardizer) -> Result<Self> {
        self.transform = Some(t);
        self.check()?;
        Ok(self)
    }

    pub fn with_config_echo(mut self, config: serde_json::Value) -> Self {
        self.meta.config = Some(config);
        self
    }

    /// `f(x) = sum_i c_i (K(x_i, x) + 1)` on raw (untransformed) input.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.meta.d {
            return Err(Error::usage(format!(
                "model expects {} features, got {}",
                self.meta.d,
                x.len()
            )));
        }
        let mut buf;
        let x = match &self.transform {
            Some(t) => {
                buf = x.to_vec();
                t.apply_row(&mut buf);
                &buf[..]
            }
            None => x,
        };
        Ok(self
            .support
            .iter()
            .zip(&self.coeffs)
            .map(|(row, c)| c * (self.kernel.eval_unchecked(row, x) + 1.0))
            .sum())
    }

    /// `+1` when the decision value is `>= 0`, else `-1`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sign_label(self.decision_value(x)?))
    }

    pub fn decision_values(&self, ds: &Dataset) -> Result<Vec<f64>> {
        (0..ds.n())
            .into_par_iter()
            .map(|i| self.decision_value(ds.row(i)))
            .collect()
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<f64>> {
        Ok(self
            .decision_values(ds)?
            .into_iter()
            .map(sign_label)
            .collect())
    }

    pub fn save(&self) -> Result<String> {
        let file = ModelFile {
            version: FORMAT_VERSION,
            loss: LossSection {
                kind: self.kind,
                eta: self.params.eta(),
                lambda: self.params.lambda(),
                s: self.params.s(),
                tau: self.params.tau(),
            },
            kernel: self.kernel,
            support: self.support.clone(),
            coeffs: self.coeffs.clone(),
            meta: self.meta.clone(),
            transform: self.transform.clone(),
        };
        to_canonical_json(&file)
    }

    pub fn load(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("missing or invalid 'version' field".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Version {
                found: version as u32,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(raw).map_err(|e| Error::Format(e.to_string()))?;
        let l = file.loss;
        let params = LossParams::new(l.eta, l.lambda, l.s, l.tau)
            .map_err(|e| Error::Format(e.to_string()))?;
        let m = TrainedModel {
            kind: l.kind,
            params,
            kernel: file.kernel,
            support: file.support,
            coeffs: file.coeffs,
            meta: file.meta,
            transform: file.transform,
        };
        m.check()?;
        Ok(m)
    }
}

fn sign_label(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
