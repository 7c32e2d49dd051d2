use super::config::ExperimentConfig;
use super::ingest::ingest_dataset;
use super::report::{HomophilyStats, RunReport, SeedRun, Summary, SweepPoint, SweepReport};
use crate::error::{Error, Result};
use crate::graph::{edge_homophily, generate_sbm, make_imbalanced_split, node_homophily, Graph};
use crate::train::{run_pipeline, Ablation, HyperParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Parameter grids for the sweep modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    ImRatio(Vec<f64>),
    Dropout(Vec<f64>),
    Xi(Vec<f64>),
    /// Every ablation mode in turn.
    Ablations,
}

impl Sweep {
    pub fn im_ratio() -> Self {
        Sweep::ImRatio(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    }

    pub fn dropout() -> Self {
        Sweep::Dropout((1..=9).map(|k| k as f64 / 10.0).collect())
    }

    pub fn xi() -> Self {
        Sweep::Xi(vec![0.01, 0.1, 0.3, 0.5, 0.7, 0.9])
    }

    pub fn parameter(&self) -> &'static str {
        match self {
            Sweep::ImRatio(_) => "im_ratio",
            Sweep::Dropout(_) => "dropout",
            Sweep::Xi(_) => "xi",
            Sweep::Ablations => "ablation",
        }
    }

    fn points(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let with = |f: &dyn Fn(&mut ExperimentConfig, f64), values: &[f64]| {
            values
                .iter()
                .map(|&v| {
                    let mut cfg = base.clone();
                    f(&mut cfg, v);
                    (v.to_string(), cfg)
                })
                .collect()
        };
        match self {
            Sweep::ImRatio(v) => with(&|c, x| c.imbalance.im_ratio = x, v),
            Sweep::Dropout(v) => with(&|c, x| c.train.dropout = x, v),
            Sweep::Xi(v) => with(&|c, x| c.train.xi = x, v),
            Sweep::Ablations => Ablation::ALL
                .into_iter()
                .map(|a| {
                    let mut cfg = base.clone();
                    cfg.ablation = a;
                    (a.to_string(), cfg)
                })
                .collect(),
        }
    }
}

/// The configured dataset directory, or the inline SBM.
pub fn load_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    match (&cfg.dataset, &cfg.sbm) {
        (Some(dir), None) => ingest_dataset(dir),
        (None, Some(sbm)) => generate_sbm(&sbm.to_spec()),
        _ => Err(Error::config("dataset", "exactly one of dataset or sbm is required")),
    }
}

/// Trains once per seed on `graph`. Each seed drives the minority-class
/// draw, the split and the training RNG.
pub fn run_on_graph(cfg: &ExperimentConfig, graph: &Graph) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = cfg.seed_list();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = cfg.imbalance.resolve(graph.num_classes(), &mut rng)?;
        let masks = make_imbalanced_split(graph, &spec, cfg.setting, cfg.eval, &mut rng)?;
        let mut g = graph.clone();
        g.set_masks(masks)?;
        let hp = HyperParams {
            seed,
            ..cfg.train.clone()
        };
        let out = run_pipeline(&g, &spec, &hp, cfg.ablation)?;
        log::info!(
            "seed {seed}: acc {:.4} macro-F1 {:.4} after {} epochs (best {})",
            out.test.accuracy,
            out.test.macro_f1,
            out.epochs_run,
            out.best_epoch
        );
        runs.push(SeedRun {
            seed,
            minority_classes: spec.minority_classes.clone(),
            metrics: out.test,
            best_epoch: out.best_epoch,
            epochs_run: out.epochs_run,
            learning_rate: out.learning_rate,
            synthetic_nodes: out.synthetic.len(),
            seconds: t.elapsed().as_secs_f64(),
            log: out.log,
        });
    }
    let mut config = cfg.clone();
    config.seeds = Some(seeds);
    Ok(RunReport {
        config,
        homophily: HomophilyStats {
            node: node_homophily(graph)?,
            edge: edge_homophily(graph)?,
        },
        summary: Summary::of(&runs)?,
        runs,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    run_on_graph(cfg, &load_graph(cfg)?)
}

/// One full experiment per grid point, all on the same graph.
pub fn run_sweep(cfg: &ExperimentConfig, sweep: &Sweep) -> Result<SweepReport> {
    cfg.validate()?;
    let graph = load_graph(cfg)?;
    let points = sweep
        .points(cfg)
        .into_iter()
        .map(|(value, point)| {
            log::info!("{} = {value}", sweep.parameter());
            Ok(SweepPoint {
                value,
                report: run_on_graph(&point, &graph)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        parameter: sweep.parameter().to_string(),
        points,
    })
}
