use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wats_core::calibrator::{Optimizer, Selection};
use wats_core::exec::THREADS_ENV;
use wats_core::pipeline::{self, Method, RunConfig};
use wats_core::synth::{GraphModel, MiscalProfile, SyntheticSpec};
use wats_core::{CoeffScheme, Exec, Result, WatsError};

#[derive(Parser)]
#[command(name = "wats", version, about = "Wavelet-aware temperature scaling for graph node classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute heat-kernel wavelet features and write them as CSV.
    Features {
        #[command(flatten)]
        run: RunArgs,
        /// Output CSV path.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Fit a calibrator on the validation split and evaluate on test.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic graph with planted miscalibration.
    Synth(SynthArgs),
    /// Aggregate report.json files into a comparison table.
    Report {
        /// Report files written by `calibrate`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "report_out")]
        output_dir: PathBuf,
    },
    /// Grid search over Chebyshev order and diffusion scale.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4, 5])]
        k_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1f64, 0.4, 0.8, 1.2, 1.6, 2.0, 2.5])]
        s_list: Vec<f64>,
        /// One calibration per seed in every cell.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
        seeds: Vec<u64>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    num_nodes: Option<usize>,
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Chebyshev order.
    #[arg(long)]
    k: Option<usize>,
    /// Diffusion scale.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    scheme: Option<CoeffScheme>,
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Bound the spectrum by power iteration instead of using lambda-max.
    #[arg(long)]
    auto_lambda_max: bool,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
    #[arg(long)]
    num_bins: Option<usize>,
    /// Degree-bin lower edges, comma separated.
    #[arg(long, value_delimiter = ',')]
    degree_edges: Option<Vec<usize>>,
    /// Temperature search interval for TS as `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    ts_interval: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    PlainGd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Nll,
    Ece,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = &self.$field {
                    cfg.$($target)+ = v.clone().into();
                }
            };
        }
        set!(edges => edges);
        set!(num_nodes => num_nodes);
        set!(logits => logits);
        set!(labels => labels);
        set!(split => split);
        set!(output_dir => output_dir);
        set!(method => method);
        set!(k => wavelet.k);
        set!(s => wavelet.s);
        set!(scheme => wavelet.scheme);
        set!(lambda_max => wavelet.lambda_max);
        set!(hidden_dim => mlp.hidden_dim);
        set!(dropout => mlp.dropout);
        set!(seed => mlp.seed);
        set!(learning_rate => train.learning_rate);
        set!(max_epochs => train.max_epochs);
        set!(weight_decay => train.weight_decay);
        set!(patience => train.patience);
        set!(num_bins => num_bins);
        set!(degree_edges => degree_edges);
        if self.auto_lambda_max {
            cfg.wavelet.auto_lambda_max = true;
        }
        if let Some(o) = self.optimizer {
            cfg.train.optimizer = match o {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::PlainGd => Optimizer::PlainGd,
            };
        }
        if let Some(s) = self.selection {
            cfg.train.selection = match s {
                SelectionArg::Nll => Selection::Nll,
                SelectionArg::Ece => Selection::Ece,
            };
        }
        if let Some(v) = &self.ts_interval {
            let [lo, hi] = v[..] else {
                return Err(WatsError::InvalidParameter(
                    "--ts-interval takes exactly two values, lo,hi".into(),
                ));
            };
            cfg.ts_interval = (lo, hi);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "synth_out")]
    output_dir: PathBuf,
    #[arg(long)]
    num_nodes: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    /// Edges per new node for the Barabási–Albert model.
    #[arg(long)]
    attach: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModelArg {
    Sbm,
    Ba,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    None,
    DegreeUnderconfidence,
}

impl SynthArgs {
    fn resolve(&self) -> Result<SyntheticSpec> {
        let mut spec = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| WatsError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| WatsError::File {
                    path: p.clone(),
                    message: e.to_string(),
                })?
            }
            None => SyntheticSpec::default(),
        };
        if let Some(n) = self.num_nodes {
            spec.num_nodes = n;
        }
        match self.model {
            Some(ModelArg::Ba) if !matches!(spec.model, GraphModel::BarabasiAlbert { .. }) => {
                spec.model = GraphModel::BarabasiAlbert { attach: 3 };
            }
            Some(ModelArg::Sbm) if !matches!(spec.model, GraphModel::Sbm { .. }) => {
                spec.model = SyntheticSpec::default().model;
            }
            _ => {}
        }
        match &mut spec.model {
            GraphModel::Sbm { p_in, p_out, .. } => {
                if let Some(v) = self.p_in {
                    *p_in = v;
                }
                if let Some(v) = self.p_out {
                    *p_out = v;
                }
            }
            GraphModel::BarabasiAlbert { attach } => {
                if let Some(v) = self.attach {
                    *attach = v;
                }
            }
        }
        if let Some(c) = self.num_classes {
            spec.num_classes = c;
        }
        if let Some(m) = self.margin {
            spec.logit_margin = m;
        }
        if self.noise_sd.is_some() {
            spec.noise_sd = self.noise_sd;
        }
        if let Some(p) = self.profile {
            spec.miscal_profile = match p {
                ProfileArg::None => MiscalProfile::None,
                ProfileArg::DegreeUnderconfidence => MiscalProfile::DegreeUnderconfidence,
            };
        }
        if let Some(s) = self.strength {
            spec.profile_strength = s;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        Ok(spec)
    }
}

fn init_exec() -> Exec {
    let (exec, threads) = Exec::from_env();
    if exec == Exec::Sequential {
        return exec;
    }
    #[cfg(feature = "parallel")]
    {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
        {
            return Exec::Parallel;
        }
    }
    eprintln!("warning: {THREADS_ENV}={threads} ignored, running sequentially");
    Exec::Sequential
}

fn run(cli: Cli) -> Result<()> {
    let exec = init_exec();
    match cli.command {
        Command::Features { run, output } => {
            let cfg = run.resolve()?;
            let start = Instant::now();
            let out = pipeline::run_features(&cfg, &output, exec)?;
            println!(
                "N={} |E|={} K={} s={} scheme={} lambda_max={} time={:.3}s -> {}",
                out.features.num_nodes(),
                out.num_edges,
                out.config.order_k,
                out.config.scale_s,
                out.config.coeff_scheme,
                out.config.lambda_max,
                start.elapsed().as_secs_f64(),
                output.display()
            );
        }
        Command::Calibrate { run } => {
            let cfg = run.resolve()?;
            let start = Instant::now();
            let out = pipeline::run_calibrate(&cfg, exec)?;
            let (u, c) = (&out.report.uncalibrated, &out.report.calibrated);
            println!("{:<14} {:>9} {:>9} {:>9}", "method", "ECE", "NLL", "accuracy");
            for r in [u, c] {
                println!("{:<14} {:>9.5} {:>9.5} {:>9.5}", r.method_tag, r.ece, r.nll, r.accuracy);
            }
            if let Some(t) = &out.report.training {
                println!(
                    "val NLL {:.5} -> {:.5} after {} epochs",
                    t.initial_val_nll, t.best_val_nll, t.epochs_run
                );
            }
            println!(
                "wrote {} in {:.3}s",
                cfg.output_dir.display(),
                start.elapsed().as_secs_f64()
            );
        }
        Command::Synth(args) => {
            let spec = args.resolve()?;
            let (inst, files) = pipeline::run_synth(&spec, &args.output_dir)?;
            println!(
                "N={} |E|={} classes={} train/val/test={}/{}/{} -> {}",
                inst.graph.num_nodes(),
                inst.graph.num_edges(),
                spec.num_classes,
                inst.split.train.len(),
                inst.split.val.len(),
                inst.split.test.len(),
                args.output_dir.display()
            );
            println!(
                "files: {} {} {} {} {}",
                files.edges.display(),
                files.logits.display(),
                files.labels.display(),
                files.split.display(),
                files.planted.display()
            );
        }
        Command::Report {
            reports,
            output_dir,
        } => {
            let summary = pipeline::run_report(&reports, &output_dir)?;
            print!("{}", summary.table());
        }
        Command::Sweep {
            run,
            k_list,
            s_list,
            seeds,
        } => {
            let cfg = run.resolve()?;
            let res = pipeline::run_sweep(&cfg, &k_list, &s_list, &seeds, exec)?;
            print!("{}", res.csv());
            for c in res.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("warning: cell k={} s={} failed: {}", c.k, c.s, c.error.as_deref().unwrap_or(""));
            }
            if res.warnings > 0 {
                eprintln!("{} warning(s)", res.warnings);
            }
            if let (Some((k, s, e)), Some(band)) = (res.best, res.best_in_k3_k4) {
                println!("best k={k} s={s} ece={e:.5} (k in {{3,4}}: {band})");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
