use crate::error::{Error, Result};
use crate::graph::{EvalQuota, ImbalanceSpec, SbmSpec, Setting};
use crate::train::{Ablation, HyperParams};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One experiment: a graph source, the imbalance protocol, hyperparameters
/// and the seeds to repeat over.
///
/// ```toml
/// dataset = "data/cora"        # or an [sbm] table, not both
/// ablation = "full"
/// setting = "semi"
/// repeat = 5
/// output_dir = "runs/cora"
///
/// [imbalance]
/// minority_count = 3           # or minority_classes = [4, 5, 6]
/// im_ratio = 0.1
///
/// [train]
/// lambda = 0.5
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmConfig>,
    #[serde(default)]
    pub imbalance: ImbalanceConfig,
    /// `train.seed` is replaced by each entry of the seed list.
    #[serde(default)]
    pub train: HyperParams,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "default_setting")]
    pub setting: Setting,
    #[serde(default)]
    pub eval: EvalQuota,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
    /// Defaults to `0..repeat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_setting() -> Setting {
    Setting::Semi
}

fn default_repeat() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("graphbal-out")
}

/// Inline SBM source. Class `c` has mean `separation * e_c` unless `means`
/// is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub sizes: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_feature_dim() -> usize {
    8
}

fn default_separation() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    1.0
}

impl SbmConfig {
    /// Block sizes and edge probabilities with default features.
    pub fn new(sizes: Vec<usize>, p_intra: f64, p_inter: f64) -> Self {
        Self {
            sizes,
            p_intra,
            p_inter,
            feature_dim: default_feature_dim(),
            separation: default_separation(),
            noise_std: default_noise(),
            means: None,
            seed: 0,
        }
    }

    pub fn to_spec(&self) -> SbmSpec {
        let mut spec = SbmSpec::with_axis_means(
            self.sizes.clone(),
            self.p_intra,
            self.p_inter,
            self.feature_dim,
            self.separation,
            self.noise_std,
            self.seed,
        );
        if let Some(means) = &self.means {
            spec.means = means.clone();
        }
        spec
    }
}

/// Minority classes are either listed or drawn at random per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minority_classes: Option<Vec<usize>>,
    /// Number of classes drawn when none are listed; defaults to half the
    /// classes, rounded down, at least one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minority_count: Option<usize>,
    #[serde(default = "default_im_ratio")]
    pub im_ratio: f64,
    #[serde(default = "default_majority_train")]
    pub majority_train_count: usize,
}

fn default_im_ratio() -> f64 {
    0.1
}

fn default_majority_train() -> usize {
    20
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        Self {
            minority_classes: None,
            minority_count: None,
            im_ratio: default_im_ratio(),
            majority_train_count: default_majority_train(),
        }
    }
}

impl ImbalanceConfig {
    pub fn resolve<R: Rng + ?Sized>(&self, num_classes: usize, rng: &mut R) -> Result<ImbalanceSpec> {
        let minority = match &self.minority_classes {
            Some(list) => list.clone(),
            None => {
                let k = self.minority_count.unwrap_or((num_classes / 2).max(1));
                if k == 0 || k >= num_classes {
                    return Err(Error::config(
                        "imbalance.minority_count",
                        format!("{k} minority classes out of {num_classes}"),
                    ));
                }
                let mut picked = sample(rng, num_classes, k).into_vec();
                picked.sort_unstable();
                picked
            }
        };
        let spec = ImbalanceSpec {
            minority_classes: minority,
            im_ratio: self.im_ratio,
            majority_train_count: self.majority_train_count,
        };
        spec.validate(num_classes)?;
        Ok(spec)
    }
}

impl ExperimentConfig {
    /// A config for `dataset` with every other field at its default.
    pub fn for_dataset(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: Some(dataset.into()),
            ..Self::empty()
        }
    }

    pub fn for_sbm(sbm: SbmConfig) -> Self {
        Self {
            sbm: Some(sbm),
            ..Self::empty()
        }
    }

    fn empty() -> Self {
        Self {
            dataset: None,
            sbm: None,
            imbalance: ImbalanceConfig::default(),
            train: HyperParams::default(),
            ablation: Ablation::Full,
            setting: default_setting(),
            eval: EvalQuota::default(),
            repeat: default_repeat(),
            seeds: None,
            output_dir: default_output_dir(),
        }
    }

    /// Parses and validates TOML text. Errors carry the dotted key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "(root)".to_string() } else { path };
            Error::config(key, e.inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.sbm) {
            (Some(_), Some(_)) => return Err(Error::config("dataset", "dataset and sbm are mutually exclusive")),
            (None, None) => return Err(Error::config("dataset", "one of dataset or sbm is required")),
            _ => {}
        }
        if self.repeat == 0 {
            return Err(Error::config("repeat", "must be at least 1"));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.repeat {
                return Err(Error::config(
                    "seeds",
                    format!("{} seeds for repeat = {}", seeds.len(), self.repeat),
                ));
            }
        }
        if !(self.imbalance.im_ratio > 0.0 && self.imbalance.im_ratio <= 1.0) {
            return Err(Error::config(
                "imbalance.im_ratio",
                format!("{} outside (0, 1]", self.imbalance.im_ratio),
            ));
        }
        if self.imbalance.minority_classes.is_some() && self.imbalance.minority_count.is_some() {
            return Err(Error::config(
                "imbalance.minority_count",
                "give minority_classes or minority_count, not both",
            ));
        }
        if let Some(sbm) = &self.sbm {
            sbm.to_spec().validate().map_err(|e| match e {
                Error::Config { key, msg } => Error::config(format!("sbm.{key}"), msg),
                other => other,
            })?;
        }
        self.train.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(format!("train.{key}"), msg),
            other => other,
        })
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.repeat as u64).collect())
    }
}

const TOP_LEVEL_KEYS: [&str; 10] = [
    "dataset",
    "sbm",
    "imbalance",
    "train",
    "ablation",
    "setting",
    "eval",
    "repeat",
    "seeds",
    "output_dir",
];

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config("(syntax)", e.message().to_string()))
}

/// Reads a config file. A relative `dataset` path is resolved against the
/// file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    build_config(Some(path), &[])
}

/// A config from an optional file plus `key=value` overrides applied on top.
///
/// Keys are dotted paths (`imbalance.im_ratio=0.2`); a bare key that is not
/// a top-level field addresses `[train]` (`lambda=0.5`). Values are TOML
/// literals, falling back to plain strings.
pub fn build_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config("(file)", format!("{}: {e}", p.display())))?;
            let mut t = parse_table(&text)?;
            if let (Some(toml::Value::String(ds)), Some(parent)) = (t.get("dataset"), p.parent()) {
                if Path::new(ds).is_relative() {
                    let joined = parent.join(ds).to_string_lossy().into_owned();
                    t.insert("dataset".into(), toml::Value::String(joined));
                }
            }
            t
        }
        None => toml::Table::new(),
    };
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    ExperimentConfig::from_table(table)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
    let key = key.trim();
    let mut path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    if path.len() == 1 && !TOP_LEVEL_KEYS.contains(&path[0]) {
        path.insert(0, "train");
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut node = table;
    for (depth, seg) in parents.iter().enumerate() {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path[..=depth].join("."), "is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn dataset_only_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str("dataset = \"d\"").unwrap();
        let hp = &cfg.train;
        assert_eq!(
            (hp.kappa, hp.omega, hp.eta, hp.dropout, hp.xi, hp.zeta),
            (1.05, 0.3, 0.5, 0.7, 0.3, 1.0)
        );
        assert_eq!(hp.lambda, 1e-6);
        assert_eq!(cfg.repeat, 1);
        assert_eq!(cfg.seed_list(), vec![0]);
        assert_eq!(cfg.imbalance.im_ratio, 0.1);
    }

    #[test]
    fn zero_lambda_is_rejected_with_key() {
        let err = ExperimentConfig::from_toml_str("dataset = \"d\"\n[train]\nlambda = 0.0").unwrap_err();
        assert_eq!(key_of(err), "train.lambda");
    }

    #[test]
    fn dataset_and_sbm_are_exclusive() {
        let text = "dataset = \"d\"\n[sbm]\nsizes = [5, 5]\np_intra = 0.1\np_inter = 0.1";
        assert_eq!(key_of(ExperimentConfig::from_toml_str(text).unwrap_err()), "dataset");
        assert_eq!(key_of(ExperimentConfig::from_toml_str("repeat = 2").unwrap_err()), "dataset");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::from_toml_str("dataset = \"d\"\n[train]\nlamda = 0.5").unwrap_err();
        assert_eq!(key_of(err), "train.lamda");
    }

    #[test]
    fn repeat_and_seed_list_must_agree() {
        assert_eq!(key_of(ExperimentConfig::from_toml_str("dataset = \"d\"\nrepeat = 0").unwrap_err()), "repeat");
        let err = ExperimentConfig::from_toml_str("dataset = \"d\"\nrepeat = 2\nseeds = [4]").unwrap_err();
        assert_eq!(key_of(err), "seeds");
        let ok = ExperimentConfig::from_toml_str("dataset = \"d\"\nrepeat = 2\nseeds = [4, 9]").unwrap();
        assert_eq!(ok.seed_list(), vec![4, 9]);
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
            ablation = "no-mse"
            setting = "supervised"
            [sbm]
            sizes = [10, 10, 4]
            p_intra = 0.02
            p_inter = 0.2
            [imbalance]
            minority_classes = [2]
            im_ratio = 0.2
            [eval.per_class]
            val = 2
            test = 3
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.ablation, Ablation::NoMse);
        assert_eq!(cfg.setting, Setting::Supervised);
        assert_eq!(cfg.eval, EvalQuota::PerClass { val: 2, test: 3 });
        assert_eq!(cfg.sbm.as_ref().unwrap().to_spec().means[1], vec![0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn overrides_apply_on_top_of_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "dataset = \"data\"\nrepeat = 3\n[train]\nlambda = 0.5").unwrap();
        let sets = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let cfg = build_config(
            Some(&path),
            &sets(&["kappa=2.0", "imbalance.im_ratio=0.3", "ablation=no-ase", "hidden=[16]"]),
        )
        .unwrap();
        assert_eq!(cfg.dataset, Some(dir.path().join("data")));
        assert_eq!((cfg.repeat, cfg.train.lambda, cfg.train.kappa), (3, 0.5, 2.0));
        assert_eq!(cfg.imbalance.im_ratio, 0.3);
        assert_eq!(cfg.ablation, Ablation::NoAse);
        assert_eq!(cfg.train.hidden, vec![16]);

        let err = build_config(Some(&path), &sets(&["lambda=0"])).unwrap_err();
        assert_eq!(key_of(err), "train.lambda");
        let err = build_config(Some(&path), &sets(&["repeat.x=1"])).unwrap_err();
        assert_eq!(key_of(err), "repeat");
        assert!(build_config(None, &sets(&["dataset=elsewhere"])).is_ok());
    }

    #[test]
    fn random_minority_selection() {
        let imb = ImbalanceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let spec = imb.resolve(7, &mut rng).unwrap();
            assert_eq!(spec.minority_classes.len(), 3);
            assert!(spec.minority_classes.windows(2).all(|w| w[0] < w[1]));
            assert!(spec.minority_classes.iter().all(|&c| c < 7));
        }
        let two = ImbalanceConfig {
            minority_count: Some(2),
            ..ImbalanceConfig::default()
        };
        assert!(two.resolve(2, &mut rng).is_err());
    }
}
