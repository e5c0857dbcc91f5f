//! Pipeline configuration.
//!
//! Settings come in layers: built-in defaults, then a TOML file, then
//! command-line flags, each overriding the last. Parameters whose defaults
//! depend on others (`sigma_v` on the scale count, the filter level and the
//! candidate radius on `sigma_spatial` and `eta`) are derived after the
//! layers are merged, so overriding `sigma_spatial` moves them too unless
//! they were set explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smokeflow_core::dense_interp::{InterpParams, TensorVariant};
use smokeflow_core::pipeline::PipelineParams;
use smokeflow_core::refine::RefineParams;
use smokeflow_core::skeleton::ScaleSet;
use smokeflow_core::sparse_flow::{density_at_mahalanobis, AttractionParams, FILTER_MAHALANOBIS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Garcia,
    PaperLiteral,
}

impl From<Variant> for TensorVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Garcia => TensorVariant::Garcia,
            Variant::PaperLiteral => TensorVariant::PaperLiteral,
        }
    }
}

/// Fully resolved configuration, as echoed in run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub scales: Vec<f64>,
    pub attraction: AttractionConfig,
    pub interp: InterpConfig,
    pub refine: RefineConfig,
    pub debug: DebugConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionConfig {
    pub sigma_spatial: f64,
    pub eta: f64,
    pub sigma_v: f64,
    pub min_weight: f64,
    pub neighbor_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub tensor_variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub gamma: f64,
    pub penalizer_eps: f64,
    pub outer_iters: usize,
    pub sor_iters: usize,
    pub sor_omega: f64,
}

/// Optional intermediate outputs. Not part of the configuration hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DebugConfig {
    pub dump_skeleton: Option<PathBuf>,
    pub dump_sparse: Option<PathBuf>,
    pub dump_interp: Option<PathBuf>,
}

/// One layer of partial settings.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub epsilon: Option<f64>,
    pub scales: Option<Vec<f64>>,
    #[serde(default)]
    pub attraction: AttractionLayer,
    #[serde(default)]
    pub interp: InterpLayer,
    #[serde(default)]
    pub refine: RefineLayer,
    #[serde(default)]
    pub debug: DebugLayer,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractionLayer {
    pub sigma_spatial: Option<f64>,
    pub eta: Option<f64>,
    pub sigma_v: Option<f64>,
    pub min_weight: Option<f64>,
    pub neighbor_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpLayer {
    pub lambda: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub tensor_variant: Option<Variant>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineLayer {
    pub enabled: Option<bool>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub penalizer_eps: Option<f64>,
    pub outer_iters: Option<usize>,
    pub sor_iters: Option<usize>,
    pub sor_omega: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugLayer {
    pub dump_skeleton: Option<PathBuf>,
    pub dump_sparse: Option<PathBuf>,
    pub dump_interp: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, [$($field:ident),*]) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl ConfigLayer {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Settings of `top` win over those of `self`.
    pub fn overlay(mut self, top: &ConfigLayer) -> Self {
        overlay!(self, top, [epsilon, scales]);
        overlay!(self.attraction, top.attraction, [sigma_spatial, eta, sigma_v, min_weight, neighbor_radius]);
        overlay!(self.interp, top.interp, [lambda, max_iters, tol, tensor_variant]);
        overlay!(
            self.refine,
            top.refine,
            [enabled, alpha, gamma, penalizer_eps, outer_iters, sor_iters, sor_omega]
        );
        overlay!(self.debug, top.debug, [dump_skeleton, dump_sparse, dump_interp]);
        self
    }

    /// Fills every unset value with its default and validates the result.
    pub fn resolve(&self) -> Result<PipelineConfig, ConfigError> {
        let defaults = PipelineParams::default();
        let scales = self.scales.clone().unwrap_or_else(|| defaults.scales.sigmas().to_vec());
        let set = ScaleSet::new(scales.clone()).map_err(invalid)?;
        let derived = AttractionParams::for_scale_count(set.count());
        let a = &self.attraction;
        let sigma_spatial = a.sigma_spatial.unwrap_or(derived.sigma_spatial);
        let eta = a.eta.unwrap_or(derived.eta);
        let attraction = AttractionConfig {
            sigma_spatial,
            eta,
            sigma_v: a.sigma_v.unwrap_or(derived.sigma_v),
            min_weight: a
                .min_weight
                .unwrap_or_else(|| density_at_mahalanobis(sigma_spatial, eta, FILTER_MAHALANOBIS)),
            neighbor_radius: a.neighbor_radius.unwrap_or(3.0 * sigma_spatial),
        };
        let di = InterpParams::default();
        let interp = InterpConfig {
            lambda: self.interp.lambda.unwrap_or(di.lambda),
            max_iters: self.interp.max_iters.unwrap_or(di.max_iters),
            tol: self.interp.tol.unwrap_or(di.tol),
            tensor_variant: self.interp.tensor_variant.unwrap_or_default(),
        };
        let dr = RefineParams::default();
        let r = &self.refine;
        let refine = RefineConfig {
            enabled: r.enabled.unwrap_or(true),
            alpha: r.alpha.unwrap_or(dr.alpha),
            gamma: r.gamma.unwrap_or(dr.gamma),
            penalizer_eps: r.penalizer_eps.unwrap_or(dr.penalizer_eps),
            outer_iters: r.outer_iters.unwrap_or(dr.outer_iters),
            sor_iters: r.sor_iters.unwrap_or(dr.sor_iters),
            sor_omega: r.sor_omega.unwrap_or(dr.sor_omega),
        };
        let config = PipelineConfig {
            epsilon: self.epsilon.unwrap_or(defaults.epsilon),
            scales,
            attraction,
            interp,
            refine,
            debug: DebugConfig {
                dump_skeleton: self.debug.dump_skeleton.clone(),
                dump_sparse: self.debug.dump_sparse.clone(),
                dump_interp: self.debug.dump_interp.clone(),
            },
        };
        config.params()?;
        Ok(config)
    }
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl Default for PipelineConfig {
    fn default() -> Self {
        ConfigLayer::default().resolve().expect("defaults are valid")
    }
}

impl PipelineConfig {
    /// Library parameters, validated.
    pub fn params(&self) -> Result<PipelineParams, ConfigError> {
        if !(0.0..=255.0).contains(&self.epsilon) {
            return Err(invalid("epsilon must lie in [0, 255]"));
        }
        if !self.attraction.neighbor_radius.is_finite() {
            return Err(invalid("neighbor_radius must be finite"));
        }
        let a = &self.attraction;
        let attraction = AttractionParams {
            sigma_spatial: a.sigma_spatial,
            eta: a.eta,
            sigma_v: a.sigma_v,
            min_weight: a.min_weight,
            neighbor_radius: a.neighbor_radius,
        };
        attraction.validate().map_err(invalid)?;
        let interp = InterpParams {
            lambda: self.interp.lambda,
            max_iters: self.interp.max_iters,
            tol: self.interp.tol,
            tensor_variant: self.interp.tensor_variant.into(),
        };
        interp.validate().map_err(invalid)?;
        let r = &self.refine;
        let refine = RefineParams {
            alpha: r.alpha,
            gamma: r.gamma,
            penalizer_eps: r.penalizer_eps,
            outer_iters: r.outer_iters,
            sor_iters: r.sor_iters,
            sor_omega: r.sor_omega,
        };
        refine.validate().map_err(invalid)?;
        Ok(PipelineParams {
            epsilon: self.epsilon,
            scales: ScaleSet::new(self.scales.clone()).map_err(invalid)?,
            attraction,
            interp,
            refine: r.enabled.then_some(refine),
        })
    }

    /// SHA-256 over the canonical JSON of every setting that affects the
    /// flow. Debug outputs are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.debug = DebugConfig::default();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
