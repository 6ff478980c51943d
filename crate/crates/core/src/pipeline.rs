//! File-level commands: simulate a dataset, build a map, evaluate, render.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::config::EnsembleConfig;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::eval::{hausdorff, pi_dots, predict_grid, rmsd, Image, PredictMode};
use crate::geometry::{point, Aabb};
use crate::grid::{GridSpec, SdfGrid};
use crate::ingest::{read_scan_log, scan_to_measurements, write_scan_log};
use crate::sim::{generate_dataset, ground_truth_sdf, ScanParams, World};

/// Margin around the world outline for the default grid (m).
const GRID_MARGIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Individual,
    Mixture,
    Both,
}

impl Mode {
    fn predict_modes(self) -> Vec<PredictMode> {
        match self {
            Mode::Individual => vec![PredictMode::Individual],
            Mode::Mixture => vec![PredictMode::Mixture],
            Mode::Both => vec![PredictMode::Individual, PredictMode::Mixture],
        }
    }
}

/// Everything a run needs: the ensemble parameters plus data generation,
/// evaluation and output settings. Serialized as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub ensemble: EnsembleConfig,
    pub world: Option<PathBuf>,
    pub waypoints: Vec<[f64; 2]>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Robot speed (m/s) and scan rate (Hz) along the waypoint path.
    pub speed: f64,
    pub scan_rate: f64,
    pub grid: Option<GridSpec>,
    pub mode: Mode,
    pub checkpoint_every: usize,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ensemble: EnsembleConfig::default(),
            world: None,
            waypoints: Vec::new(),
            noise_sigma: 0.01,
            seed: 0,
            speed: 1.0,
            scan_rate: 10.0,
            grid: None,
            mode: Mode::Individual,
            checkpoint_every: 10,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.checkpoint_every == 0 {
            return Err(Error::Precondition("checkpoint_every must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Precondition(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    /// Configured grid, or a lattice-aligned one covering the world outline
    /// with a margin.
    pub fn grid_for(&self, world: &World) -> Result<GridSpec> {
        if let Some(g) = self.grid {
            return Ok(g);
        }
        let pts: Vec<_> = world.polygons.iter().flat_map(|p| p.points.iter()).map(|p| point(p[0], p[1])).collect();
        let bb = Aabb::from_points(&pts)
            .ok_or_else(|| Error::Precondition("world has no vertices".into()))?
            .expanded(GRID_MARGIN);
        GridSpec::lattice_covering([bb.min.x, bb.min.y], [bb.max.x, bb.max.y], 0.1)
    }

    fn load_world(&self) -> Result<World> {
        let path = self
            .world
            .as_ref()
            .ok_or_else(|| Error::Precondition("no world file configured".into()))?;
        World::read(path)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub scans: usize,
    pub seed: u64,
    pub scan_log: PathBuf,
    pub ground_truth: PathBuf,
}

/// Writes `scans.jsonl` and `gt.sdf` into the output directory.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let world = cfg.load_world()?;
    if cfg.waypoints.is_empty() {
        return Err(Error::Precondition("no waypoints configured".into()));
    }
    let scans = generate_dataset(
        &world,
        &cfg.waypoints,
        cfg.speed,
        cfg.scan_rate,
        &ScanParams::default(),
        cfg.noise_sigma,
        cfg.seed,
    )?;
    let gt = ground_truth_sdf(&world, &cfg.grid_for(&world)?)?;
    ensure_dir(&cfg.output)?;
    let scan_log = cfg.output.join("scans.jsonl");
    let ground_truth = cfg.output.join("gt.sdf");
    write_scan_log(&scan_log, &scans)?;
    gt.write(&ground_truth)?;
    Ok(SimulateSummary {
        scans: scans.len(),
        seed: cfg.seed,
        scan_log,
        ground_truth,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub scan_index: usize,
    pub n_experts: usize,
    pub n_pi_total: usize,
    pub n_pi_primary: usize,
    pub wall_ms: f64,
}

#[derive(Debug)]
pub struct MapSummary {
    pub ensemble: Option<Ensemble>,
    pub stats: Vec<StatsRow>,
    pub measurements_fed: usize,
    pub skipped_rays: usize,
    pub checkpoints: Vec<PathBuf>,
    pub model: Option<PathBuf>,
}

/// Learns a map from a scan log. Scans are taken with `scan_stride`; the
/// first used scan with any returns initializes the ensemble and every later
/// one is a learning step. Checkpoints go to
/// `checkpoint_NNNNNN.json` every `checkpoint_every` used scans, the final
/// model to `model.json` and per-scan statistics to `stats.csv`.
pub fn map(cfg: &RunConfig, scan_log: &Path) -> Result<MapSummary> {
    cfg.validate()?;
    let stride = cfg.ensemble.scan_stride;
    let scans = read_scan_log(scan_log, stride)?;
    ensure_dir(&cfg.output)?;
    let mut summary = MapSummary {
        ensemble: None,
        stats: Vec::new(),
        measurements_fed: 0,
        skipped_rays: 0,
        checkpoints: Vec::new(),
        model: None,
    };
    for (k, scan) in scans.iter().enumerate() {
        let scan_index = k * stride;
        let started = Instant::now();
        let conv = scan_to_measurements(scan, cfg.ensemble.aux_offset);
        summary.skipped_rays += conv.skipped;
        summary.measurements_fed += conv.batch.len();
        match summary.ensemble.as_mut() {
            Some(ens) => {
                ens.step(&conv.batch)
                    .map_err(|e| e.context(format!("scan index {scan_index}")))?;
            }
            None if !conv.batch.is_empty() => {
                summary.ensemble = Some(
                    Ensemble::init(&conv.batch, cfg.ensemble.clone())
                        .map_err(|e| e.context(format!("scan index {scan_index}")))?,
                );
            }
            None => {}
        }
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let ens = summary.ensemble.as_ref();
        summary.stats.push(StatsRow {
            scan_index,
            n_experts: ens.map_or(0, |e| e.len()),
            n_pi_total: ens.map_or(0, |e| e.total_pis()),
            n_pi_primary: ens.map_or(0, |e| e.total_primary()),
            wall_ms,
        });
        if (k + 1) % cfg.checkpoint_every == 0 {
            if let Some(ens) = ens {
                let path = cfg.output.join(format!("checkpoint_{:06}.json", k + 1));
                Checkpoint::from_ensemble(ens).write(&path)?;
                summary.checkpoints.push(path);
            }
        }
    }
    write_stats(&cfg.output.join("stats.csv"), &summary.stats)?;
    if let Some(ens) = &summary.ensemble {
        let path = cfg.output.join("model.json");
        Checkpoint::from_ensemble(ens).write(&path)?;
        summary.model = Some(path);
    }
    Ok(summary)
}

fn write_stats(path: &Path, rows: &[StatsRow]) -> Result<()> {
    let mut out = String::from("scan_index,n_experts,n_pi_total,n_pi_primary,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.scan_index, r.n_experts, r.n_pi_total, r.n_pi_primary, r.wall_ms
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn metric_pair(ens: &Ensemble, gt: &SdfGrid, mode: PredictMode) -> Result<(Option<f64>, Option<f64>)> {
    let pred = predict_grid(ens, gt.spec(), mode)?;
    Ok((rmsd(&pred, gt)?, hausdorff(&pred, gt)?))
}

/// Metrics of a model against a ground-truth grid. With `Mode::Both` the
/// report has `individual` and `mixture` sections; otherwise `rmsd` and
/// `hausdorff` sit at the top level next to the model size counts.
pub fn evaluate(ens: &Ensemble, gt: &SdfGrid, mode: Mode) -> Result<Value> {
    let mut report = json!({
        "n_pi_total": ens.total_pis(),
        "n_pi_primary": ens.total_primary(),
        "n_experts": ens.len(),
    });
    let obj = report.as_object_mut().expect("object literal");
    match mode {
        Mode::Both => {
            for m in mode.predict_modes() {
                let (r, h) = metric_pair(ens, gt, m)?;
                let key = match m {
                    PredictMode::Individual => "individual",
                    PredictMode::Mixture => "mixture",
                };
                obj.insert(key.into(), json!({ "rmsd": r, "hausdorff": h }));
            }
        }
        _ => {
            let m = mode.predict_modes()[0];
            let (r, h) = metric_pair(ens, gt, m)?;
            obj.insert("mode".into(), json!(m));
            obj.insert("rmsd".into(), json!(r));
            obj.insert("hausdorff".into(), json!(h));
        }
    }
    Ok(report)
}

/// Loads a checkpoint and ground truth, writes `metrics.json` to the output
/// directory and returns the report. A configured grid must match the
/// ground truth's layout.
pub fn evaluate_files(
    model: &Path,
    gt: &Path,
    mode: Mode,
    grid: Option<&GridSpec>,
    output: &Path,
) -> Result<Value> {
    let ens = Checkpoint::read(model)?.to_ensemble()?;
    let gt = SdfGrid::read(gt)?;
    if let Some(g) = grid.filter(|g| *g != gt.spec()) {
        return Err(Error::Precondition(format!(
            "configured grid {g:?} does not match ground truth grid {:?}",
            gt.spec()
        )));
    }
    let report = evaluate(&ens, &gt, mode)?;
    ensure_dir(output)?;
    let path = output.join("metrics.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Render input: a grid file, or a model checkpoint to be predicted first.
pub enum RenderSource {
    Grid(SdfGrid),
    Model(Box<Ensemble>),
}

impl RenderSource {
    /// `.json` files are read as checkpoints, anything else as a grid.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            Ok(RenderSource::Model(Box::new(Checkpoint::read(path)?.to_ensemble()?)))
        } else {
            Ok(RenderSource::Grid(SdfGrid::read(path)?))
        }
    }
}

/// Grid spanning an ensemble's primary PIs with a one meter margin.
pub fn model_grid(ens: &Ensemble, resolution: f64) -> Result<GridSpec> {
    let pts: Vec<_> = ens.experts().flat_map(|e| e.primary_pis()).collect();
    let bb = Aabb::from_points(&pts)
        .ok_or_else(|| Error::Precondition("model has no pseudo-inputs".into()))?
        .expanded(1.0);
    GridSpec::covering([bb.min.x, bb.min.y], [bb.max.x, bb.max.y], resolution)
}

/// Renders to PPM. For a model, predicts on `grid` (or a grid around the
/// model) first and optionally overlays the primary PIs. Returns the number
/// of overlay dots drawn.
pub fn render(
    source: &RenderSource,
    grid: Option<GridSpec>,
    mode: PredictMode,
    overlay: bool,
    path: &Path,
) -> Result<usize> {
    let (img, drawn) = match source {
        RenderSource::Grid(g) => (Image::from_grid(g), 0),
        RenderSource::Model(ens) => {
            let spec = match grid {
                Some(g) => g,
                None => model_grid(ens, 0.1)?,
            };
            let g = predict_grid(ens, &spec, mode)?;
            let mut img = Image::from_grid(&g);
            let drawn = if overlay { img.overlay(&spec, &pi_dots(ens)) } else { 0 };
            (img, drawn)
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    img.write_ppm(path)?;
    Ok(drawn)
}
