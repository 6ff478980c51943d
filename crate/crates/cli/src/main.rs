use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use gpmap::eval::PredictMode;
use gpmap::pipeline::{self, Mode, RenderSource, RunConfig};
use gpmap::{Error, SdfGrid};

#[derive(Parser)]
#[command(name = "gpmap", version, about = "Implicit-surface mapping with sparse GP experts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory through a world: writes scans.jsonl and gt.sdf.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Learn a map from a scan log: writes checkpoints, model.json and stats.csv.
    Map {
        scan_log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a model checkpoint against a ground-truth grid.
    Eval {
        model: PathBuf,
        ground_truth: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render a grid file or a model checkpoint (.json) to PPM.
    Render {
        input: PathBuf,
        image: PathBuf,
        /// Draw primary PIs as colored dots, one color per expert.
        #[arg(long)]
        overlay: bool,
        /// Predict on this grid file's layout instead of a grid around the model.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Individual,
    Mixture,
    Both,
}

/// Config file plus per-key overrides. Flag names are the config keys in
/// kebab-case.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use every N-th scan.
    #[arg(long, visible_alias = "scan-stride")]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    scan_rate: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    t_add: Option<f64>,
    #[arg(long)]
    t_del: Option<f64>,
    #[arg(long)]
    min_pi_dist: Option<f64>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_new: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long = "kernel-r")]
    kernel_r: Option<f64>,
    #[arg(long)]
    aux_offset: Option<f64>,
    #[arg(long)]
    k_per_edge: Option<usize>,
    #[arg(long)]
    n_secondary_per_neighbor: Option<usize>,
    #[arg(long)]
    update_margin: Option<f64>,
    #[arg(long)]
    mix_radius: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mode = self.mode.map(|m| match m {
            ModeArg::Individual => "individual",
            ModeArg::Mixture => "mixture",
            ModeArg::Both => "both",
        });
        let mut out = Vec::new();
        let mut put = |key: &'static str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        put("output", self.output.as_ref().map(|p| json!(p)));
        put("seed", self.seed.map(|v| json!(v)));
        put("scan_stride", self.stride.map(|v| json!(v)));
        put("mode", mode.map(|v| json!(v)));
        put("checkpoint_every", self.checkpoint_every.map(|v| json!(v)));
        put("world", self.world.as_ref().map(|p| json!(p)));
        put("noise_sigma", self.noise_sigma.map(|v| json!(v)));
        put("speed", self.speed.map(|v| json!(v)));
        put("scan_rate", self.scan_rate.map(|v| json!(v)));
        put("sigma2", self.sigma2.map(|v| json!(v)));
        put("t_add", self.t_add.map(|v| json!(v)));
        put("t_del", self.t_del.map(|v| json!(v)));
        put("min_pi_dist", self.min_pi_dist.map(|v| json!(v)));
        put("n_min", self.n_min.map(|v| json!(v)));
        put("n_new", self.n_new.map(|v| json!(v)));
        put("n_max", self.n_max.map(|v| json!(v)));
        put("kernel_R", self.kernel_r.map(|v| json!(v)));
        put("aux_offset", self.aux_offset.map(|v| json!(v)));
        put("k_per_edge", self.k_per_edge.map(|v| json!(v)));
        put("n_secondary_per_neighbor", self.n_secondary_per_neighbor.map(|v| json!(v)));
        put("update_margin", self.update_margin.map(|v| json!(v)));
        put("mix_radius", self.mix_radius.map(|v| json!(v)));
        out
    }

    fn load(&self) -> Result<RunConfig, Error> {
        let mut base = match &self.config {
            Some(path) => serde_json::to_value(RunConfig::read(path)?)?,
            None => serde_json::to_value(RunConfig::default())?,
        };
        let obj: &mut Map<String, Value> = base.as_object_mut().expect("config is an object");
        for (key, v) in self.overrides() {
            obj.insert(key.to_string(), v);
        }
        let cfg: RunConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn predict_mode(mode: Mode) -> Result<PredictMode, Error> {
    match mode {
        Mode::Individual => Ok(PredictMode::Individual),
        Mode::Mixture => Ok(PredictMode::Mixture),
        Mode::Both => Err(Error::Precondition("render needs --mode individual or mixture".into())),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.load()?;
            let s = pipeline::simulate(&cfg)?;
            println!("simulated {} scans with seed {}", s.scans, s.seed);
            println!("wrote {} and {}", s.scan_log.display(), s.ground_truth.display());
        }
        Command::Map { scan_log, common } => {
            let cfg = common.load()?;
            let s = pipeline::map(&cfg, &scan_log)?;
            println!(
                "used {} scans (stride {}), fed {} measurements, skipped {} rays",
                s.stats.len(),
                cfg.ensemble.scan_stride,
                s.measurements_fed,
                s.skipped_rays
            );
            match &s.ensemble {
                Some(ens) => println!(
                    "{} experts, {} PIs ({} primary)",
                    ens.len(),
                    ens.total_pis(),
                    ens.total_primary()
                ),
                None => println!("no scan had any returns; no model written"),
            }
            if let Some(m) = &s.model {
                println!("wrote {}", m.display());
            }
        }
        Command::Eval { model, ground_truth, common } => {
            let cfg = common.load()?;
            let report = pipeline::evaluate_files(&model, &ground_truth, cfg.mode, cfg.grid.as_ref(), &cfg.output)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Render { input, image, overlay, grid, common } => {
            let cfg = common.load()?;
            let source = RenderSource::load(&input)?;
            let spec = match &grid {
                Some(p) => Some(*SdfGrid::read(p)?.spec()),
                None => cfg.grid,
            };
            let drawn = pipeline::render(&source, spec, predict_mode(cfg.mode)?, overlay, &image)?;
            if overlay {
                println!("drew {drawn} PI dots");
            }
            println!("wrote {}", image.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
