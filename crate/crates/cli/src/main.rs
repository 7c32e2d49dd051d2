use clap::{Args, Parser, Subcommand, ValueEnum};
use graphbal_core::experiment::{
    build_config, emit_report, emit_sweep, ingest_dataset, run_experiment, run_sweep, write_dataset,
    ExperimentConfig, SbmConfig, Sweep, SWEEP_FILE,
};
use graphbal_core::graph::{edge_homophily, generate_sbm, node_homophily};
use graphbal_core::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "graphbal", version, about = "Minority oversampling for imbalanced node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over the configured seeds.
    Run(ExperimentArgs),
    /// Repeat the experiment for each imbalance ratio.
    SweepImratio {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Defaults to 0.1, 0.2, ..., 0.6.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Repeat the experiment for each value of one hyperparameter.
    SweepHparam {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        param: HParam,
        /// Defaults to 0.1..0.9 for dropout and 0.01, 0.1, 0.3, 0.5, 0.7, 0.9 for xi.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Run the full model and each ablation.
    Ablate(ExperimentArgs),
    /// Write a stochastic block model graph as a dataset directory.
    GenSbm {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        p_intra: f64,
        #[arg(long)]
        p_inter: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print homophily and the class histogram of a dataset directory.
    Stats { dir: PathBuf },
    /// Print one metric of a sweep.csv as gnuplot columns.
    Plot {
        /// A sweep.csv file or the directory holding it.
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::F1)]
        metric: Metric,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    config: Option<PathBuf>,
    /// Dataset directory; overrides the config's source.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `key=value` override; bare keys address hyperparameters (`lambda=0.5`).
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    repeat: Option<usize>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, env = "GRAPHBAL_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HParam {
    Dropout,
    Xi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Acc,
    F1,
    Auc,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_INGEST: u8 = 2;
const EXIT_NAN: u8 = 3;
const EXIT_OUTPUT: u8 = 4;

/// An error with the exit code it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Ingest { .. } => EXIT_INGEST,
            Error::NonFinite(_) => EXIT_NAN,
            Error::Io(_) => EXIT_OUTPUT,
            _ => EXIT_CONFIG,
        };
        Failure(code, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("graphbal: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(exp) => {
            let (cfg, out) = exp.resolve()?;
            let report = guarded(&cfg, &out, run_experiment(&cfg))?;
            emit_report(&report, &out)?;
            let s = &report.summary;
            println!(
                "accuracy {:.2} ± {:.2}  macro-F1 {:.2} ± {:.2}  AUC {}",
                100.0 * s.accuracy.mean,
                100.0 * s.accuracy.std,
                100.0 * s.macro_f1.mean,
                100.0 * s.macro_f1.std,
                s.auc
                    .map(|a| format!("{:.2} ± {:.2}", 100.0 * a.mean, 100.0 * a.std))
                    .unwrap_or_else(|| "n/a".into())
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::SweepImratio { exp, values } => {
            let sweep = if values.is_empty() { Sweep::im_ratio() } else { Sweep::ImRatio(values) };
            sweep_command(exp, sweep)
        }
        Command::SweepHparam { exp, param, values } => {
            let sweep = match (param, values.is_empty()) {
                (HParam::Dropout, true) => Sweep::dropout(),
                (HParam::Dropout, false) => Sweep::Dropout(values),
                (HParam::Xi, true) => Sweep::xi(),
                (HParam::Xi, false) => Sweep::Xi(values),
            };
            sweep_command(exp, sweep)
        }
        Command::Ablate(exp) => sweep_command(exp, Sweep::Ablations),
        Command::GenSbm {
            sizes,
            p_intra,
            p_inter,
            dim,
            separation,
            noise,
            seed,
            out,
        } => {
            let sbm = SbmConfig {
                sizes,
                p_intra,
                p_inter,
                feature_dim: dim,
                separation,
                noise_std: noise,
                means: None,
                seed,
            };
            let g = generate_sbm(&sbm.to_spec())?;
            write_dataset(&out, &g)?;
            println!(
                "wrote {} nodes, {} edges, H_edge {:.4} to {}",
                g.num_nodes(),
                g.num_edges(),
                edge_homophily(&g)?,
                out.display()
            );
            Ok(())
        }
        Command::Stats { dir } => {
            let g = ingest_dataset(&dir)?;
            println!("nodes\t{}", g.num_nodes());
            println!("edges\t{}", g.num_edges());
            println!("features\t{}", g.feature_dim());
            println!("H_node\t{:.4}", node_homophily(&g)?);
            println!("H_edge\t{:.4}", edge_homophily(&g)?);
            for (name, count) in g.class_names().iter().zip(g.class_counts(None)?) {
                println!("class {name}\t{count}");
            }
            Ok(())
        }
        Command::Plot { path, metric } => plot(&path, metric),
    }
}

impl ExperimentArgs {
    fn resolve(self) -> Result<(ExperimentConfig, PathBuf), Failure> {
        let mut sets = Vec::new();
        if let Some(ds) = &self.dataset {
            sets.push(format!("dataset={}", toml_string(&ds.to_string_lossy())));
        }
        if let Some(r) = self.repeat {
            sets.push(format!("repeat={r}"));
        }
        sets.extend(self.set);
        let mut cfg = build_config(self.config.as_deref(), &sets)?;
        let out = self.out.unwrap_or_else(|| cfg.output_dir.clone());
        cfg.output_dir = out.clone();
        Ok((cfg, out))
    }
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn sweep_command(exp: ExperimentArgs, sweep: Sweep) -> Result<(), Failure> {
    let (cfg, out) = exp.resolve()?;
    let report = guarded(&cfg, &out, run_sweep(&cfg, &sweep))?;
    emit_sweep(&report, &out)?;
    for p in &report.points {
        let s = &p.report.summary;
        println!(
            "{} = {}\tacc {:.2}\tF1 {:.2}",
            report.parameter,
            p.value,
            100.0 * s.accuracy.mean,
            100.0 * s.macro_f1.mean
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// On a non-finite loss, leaves `abort.txt` with the error and the config in `out`.
fn guarded<T>(cfg: &ExperimentConfig, out: &Path, result: graphbal_core::Result<T>) -> Result<T, Failure> {
    if let Err(Error::NonFinite(msg)) = &result {
        let echo = serde_json::to_string_pretty(cfg).unwrap_or_default();
        let dump = format!("{msg}\n\nconfig:\n{echo}\n");
        if std::fs::create_dir_all(out).and_then(|_| std::fs::write(out.join("abort.txt"), dump)).is_err() {
            log::warn!("could not write abort.txt to {}", out.display());
        }
    }
    result.map_err(Failure::from)
}

fn plot(path: &Path, metric: Metric) -> Result<(), Failure> {
    let file = if path.is_dir() { path.join(SWEEP_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| Failure(EXIT_INGEST, format!("{}: {e}", file.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Failure(EXIT_INGEST, format!("{} is empty", file.display())))?
        .split(',')
        .collect();
    let prefix = match metric {
        Metric::Acc => "acc",
        Metric::F1 => "f1",
        Metric::Auc => "auc",
    };
    let col = |name: String| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Failure(EXIT_INGEST, format!("{} has no {name} column", file.display())))
    };
    let (mean, std) = (col(format!("{prefix}_mean"))?, col(format!("{prefix}_std"))?);
    println!("# {}\t{prefix}_mean\t{prefix}_std", header[0]);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let get = |i: usize| cells.get(i).copied().unwrap_or("");
        println!("{}\t{}\t{}", get(0), get(mean), get(std));
    }
    Ok(())
}
