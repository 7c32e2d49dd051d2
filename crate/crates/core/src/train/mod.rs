//! Losses, metrics and the end-to-end oversampling training loop.

mod loss;
mod metrics;
mod pipeline;

pub use loss::{classification_loss, reconstruction_loss, sample_negatives, total_loss};
pub use metrics::{binary_auc, evaluate, ClassMetrics, MetricsReport};
pub use pipeline::{node_importance, run_pipeline, score_links, EpochLog, PipelineOutput, ScoredEdge};

use crate::error::{Error, Result};
use crate::extract::ExtractorConfig;
use crate::mixer::MixerConfig;
use crate::net::{Aggregation, LayerKind, ModelConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which component, if any, is swapped for its plain counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    /// Same-class nearest-neighbor interpolation instead of masked mixup.
    NoUfm,
    /// Fixed-radius subgraphs instead of relevance ranking.
    NoAse,
    /// Mean-aggregation layers instead of multi-filter layers.
    NoMse,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoUfm, Ablation::NoAse, Ablation::NoMse];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoUfm => "no-ufm",
            Ablation::NoAse => "no-ase",
            Ablation::NoMse => "no-mse",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("ablation", format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    /// `None` picks 0.001 for homophilic graphs (edge homophily ≥ 0.5) and
    /// 0.01 otherwise.
    pub lr: Option<f64>,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Epochs after warm-up.
    pub epochs: usize,
    pub patience: usize,
    /// Evaluations before early stopping may trigger.
    pub min_epochs: usize,
    pub lambda: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub zeta: f64,
    pub xi: f64,
    pub kappa: f64,
    pub omega: f64,
    pub steps: usize,
    pub hops: usize,
    pub expand_hops: usize,
    pub drnl_cap: usize,
    pub hidden: Vec<usize>,
    /// Neighbor combination inside multi-filter layers.
    pub aggregation: Aggregation,
    pub projection_dim: usize,
    /// Classifier-only epochs on the original graph before synthesis starts.
    pub warmup_epochs: usize,
    /// Epochs between recomputations of feature importance.
    pub refresh_interval: usize,
    /// Drop synthetic nodes that receive no accepted edge.
    pub drop_isolated: bool,
    pub negative_retries: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr: None,
            weight_decay: 5e-4,
            dropout: 0.7,
            epochs: 2000,
            patience: 5,
            min_epochs: 0,
            lambda: 1e-6,
            eta: 0.5,
            batch_size: 32,
            zeta: 1.0,
            xi: 0.3,
            kappa: 1.05,
            omega: 0.3,
            steps: 50,
            hops: 2,
            expand_hops: 1,
            drnl_cap: 10,
            hidden: vec![64, 32],
            aggregation: Aggregation::Mean,
            projection_dim: 32,
            warmup_epochs: 10,
            refresh_interval: 10,
            drop_isolated: false,
            negative_retries: 100,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("lambda", format!("{} outside (0, 1]", self.lambda)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::config("eta", format!("{} outside (0, 1)", self.eta)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config("lr", format!("{lr} must be positive")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        for (key, v) in [
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("batch_size", self.batch_size),
            ("refresh_interval", self.refresh_interval),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::config("omega", format!("{} outside [0, 1]", self.omega)));
        }
        self.mixer().validate()?;
        self.extractor(Ablation::Full).validate()?;
        self.model(Ablation::Full).validate()
    }

    pub fn learning_rate(&self, edge_homophily: f64) -> f64 {
        self.lr
            .unwrap_or(if edge_homophily >= 0.5 { 0.001 } else { 0.01 })
    }

    pub fn mixer(&self) -> MixerConfig {
        MixerConfig {
            kappa: self.kappa,
            zeta: self.zeta,
            steps: self.steps,
        }
    }

    pub fn extractor(&self, ablation: Ablation) -> ExtractorConfig {
        ExtractorConfig {
            xi: self.xi,
            hops: self.hops,
            drnl_cap: self.drnl_cap,
            expand_hops: self.expand_hops,
            adaptive: ablation != Ablation::NoAse,
        }
    }

    pub fn model(&self, ablation: Ablation) -> ModelConfig {
        let kind = match (ablation, self.aggregation) {
            (Ablation::NoMse, _) => LayerKind::MeanAgg,
            (_, Aggregation::Mean) => LayerKind::MultiFilter,
            (_, Aggregation::Sum) => LayerKind::MultiFilterSum,
        };
        ModelConfig {
            encoder_dims: self.hidden.clone(),
            classifier_dims: self.hidden.clone(),
            omega: self.omega,
            dropout: self.dropout,
            projection_dim: self.projection_dim,
            encoder_kind: kind,
            classifier_kind: kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn lambda_zero_rejected() {
        let hp = HyperParams {
            lambda: 0.0,
            ..HyperParams::default()
        };
        assert!(matches!(hp.validate(), Err(Error::Config { key, .. }) if key == "lambda"));
    }

    #[test]
    fn automatic_learning_rate() {
        let hp = HyperParams::default();
        assert_eq!(hp.learning_rate(0.81), 0.001);
        assert_eq!(hp.learning_rate(0.2), 0.01);
        let fixed = HyperParams {
            lr: Some(0.05),
            ..hp
        };
        assert_eq!(fixed.learning_rate(0.9), 0.05);
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.as_str().parse::<Ablation>().unwrap(), a);
        }
        assert!("nope".parse::<Ablation>().is_err());
    }
}
