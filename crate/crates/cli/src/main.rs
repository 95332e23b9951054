//! `elseg`: synthesize cells, train the autoencoder, annotate, review and export.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use elseg_core::annotate::{to_coco, to_voc, voc_file_name, AnnotationRecord, Category, Status, COCO_FILE};
use elseg_core::autoenc::{load_model, save_model, Scale};
use elseg_core::config::PipelineConfig;
use elseg_core::evaluate::{evaluate, load_truth};
use elseg_core::imagecore::load_grayscale;
use elseg_core::pipeline::{
    discover_inputs, read_records, run_infer, train_model, write_outputs, TimingReport, TIMING_FILE, VOC_DIR,
};
use elseg_core::synthcell::{generate_dataset_with, read_manifest, write_dataset, CellSpec, DefectKind, MANIFEST_FILE};
use elseg_review::{CostOptions, ReviewStore};
use log::{info, warn};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "elseg", version, about = "Defect annotation for electroluminescence cell images")]
struct Cli {
    /// TOML configuration; without one the desk preset is used.
    #[arg(long, global = true, env = "ELSEG_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides both the pipeline and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch inference.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Where the subcommand writes; each subcommand documents its default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground-truth masks (default out: paths.data_dir).
    Synth(SynthArgs),
    /// Train an autoencoder on defect-free images (default out: paths.model).
    Train(TrainArgs),
    /// Segment a directory of images into silver records (default out: paths.out_dir).
    Infer(InferArgs),
    /// Score records against dataset masks (default out: <records>/evaluation.json).
    Evaluate(EvaluateArgs),
    /// Serve the review API over a record store (default out: <paths.out_dir>/review).
    Serve(ServeArgs),
    /// Export records as COCO and/or PascalVOC (default out: <paths.out_dir>/export).
    Export(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Share of cells that receive defects.
    #[arg(long, default_value_t = 0.5)]
    defect_rate: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [Kind::Crack, Kind::DeadPatch, Kind::Degradation])]
    kinds: Vec<Kind>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Crack,
    DeadPatch,
    Degradation,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl From<Kind> for DefectKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Crack => DefectKind::Crack,
            Kind::DeadPatch => DefectKind::DeadPatch,
            Kind::Degradation => DefectKind::Degradation,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset or image directory (default: paths.data_dir). Only
    /// defect-free manifest entries are used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides train.max_epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    /// Image directory (default: paths.data_dir).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained model (default: paths.model).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset holding the truth masks (default: paths.data_dir).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory written by `infer` (default: paths.out_dir).
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Records used to create the store when it does not exist yet
    /// (default: paths.out_dir).
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

#[derive(Args)]
struct ExportArgs {
    /// Export the gold records of this review store.
    #[arg(long, conflicts_with = "records")]
    store: Option<PathBuf>,
    /// Export every record written by `infer` (default: paths.out_dir).
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::All)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Coco,
    Voc,
    All,
}

/// Marks errors that should exit with the invalid-configuration code.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::desk(),
    };
    let mut cfg = cfg.with_process_env()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ELSEG_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli).map_err(|e| anyhow::Error::new(ConfigError(e)))?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Synth(a) => synth(&cfg, a, out),
        Command::Train(a) => train(&cfg, a, out),
        Command::Infer(a) => infer(&cfg, a, out),
        Command::Evaluate(a) => run_evaluate(&cfg, a, out),
        Command::Serve(a) => serve(&cfg, a, out),
        Command::Export(a) => export(&cfg, a, out),
    }
}

/// Cell geometry matching the model input of each scale.
fn cell_spec(scale: Scale, seed: u64) -> CellSpec {
    match scale {
        Scale::Desk => CellSpec::desk(seed),
        Scale::Full => CellSpec {
            width: 640,
            height: 480,
            busbar_count: 3,
            busbar_width: 20,
            corner_rounding: 60,
            ..CellSpec::desk(seed)
        },
    }
}

fn synth(cfg: &PipelineConfig, a: &SynthArgs, out: Option<&Path>) -> Result<ExitCode> {
    if !(0.0..=1.0).contains(&a.defect_rate) {
        return Err(ConfigError(anyhow::anyhow!("--defect-rate must lie in [0, 1]")).into());
    }
    let dir = out.unwrap_or(&cfg.paths.data_dir);
    let kinds: Vec<DefectKind> = a.kinds.iter().map(|&k| k.into()).collect();
    let cells = generate_dataset_with(a.count, a.defect_rate, &cell_spec(cfg.scale, cfg.seed), cfg.seed, &kinds)?;
    let manifest = write_dataset(dir, &cells, cfg.seed)?;
    let defective = manifest.entries.iter().filter(|e| !e.defects.is_empty()).count();
    println!("wrote {} cells ({defective} defective) to {}", manifest.entries.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

/// Defect-free training images: clean manifest entries, or every PNG of a
/// plain directory.
fn training_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).is_file() {
        let m = read_manifest(dir)?;
        return Ok(m
            .entries
            .into_iter()
            .filter(|e| e.defects.is_empty())
            .map(|e| dir.join(e.image))
            .collect());
    }
    Ok(discover_inputs(dir)?.into_iter().map(|i| i.path).collect())
}

fn train(cfg: &PipelineConfig, a: &TrainArgs, out: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = cfg.clone();
    if let Some(e) = a.epochs {
        cfg.train.max_epochs = e;
        cfg.validate().map_err(|e| ConfigError(e.into()))?;
    }
    let data = a.data.as_deref().unwrap_or(&cfg.paths.data_dir);
    let paths = training_images(data)?;
    if paths.len() < 2 {
        bail!("{} holds {} defect-free images; training needs at least 2", data.display(), paths.len());
    }
    let images = paths
        .iter()
        .map(load_grayscale)
        .collect::<elseg_core::Result<Vec<_>>>()?;
    info!("training on {} images", images.len());
    let (model, report) = train_model(&cfg, &images, |epoch, loss| {
        log::debug!("epoch {epoch}: loss {loss:.5}");
    })?;
    let model_path = out.unwrap_or(&cfg.paths.model);
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_model(&model, model_path)?;
    let report_path = model_path.with_extension("train.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "best validation SSIM {:.4} at epoch {} (stopped at {}); model saved to {}",
        report.best_validation_ssim(),
        report.best_epoch,
        report.stopped_epoch,
        model_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn infer(cfg: &PipelineConfig, a: &InferArgs, out: Option<&Path>) -> Result<ExitCode> {
    let model_path = a.model.as_deref().unwrap_or(&cfg.paths.model);
    let model = load_model(model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    if model.scale != cfg.scale {
        return Err(ConfigError(anyhow::anyhow!(
            "model is {:?} scale but the config expects {:?}",
            model.scale,
            cfg.scale
        ))
        .into());
    }
    let data = a.data.as_deref().unwrap_or(&cfg.paths.data_dir);
    let inputs = discover_inputs(data)?;
    if inputs.is_empty() {
        bail!("no images found in {}", data.display());
    }
    let report = run_infer(&model, cfg, &inputs)?;
    let out = out.unwrap_or(&cfg.paths.out_dir);
    write_outputs(out, &report)?;
    let t = &report.timing;
    println!(
        "annotated {}/{} images ({:.3} s/image) into {}",
        t.images - t.failures,
        t.images,
        t.mean_seconds_per_image,
        out.display()
    );
    Ok(if t.failures > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn run_evaluate(cfg: &PipelineConfig, a: &EvaluateArgs, out: Option<&Path>) -> Result<ExitCode> {
    let records_dir = a.records.as_deref().unwrap_or(&cfg.paths.out_dir);
    let data = a.data.as_deref().unwrap_or(&cfg.paths.data_dir);
    let records = read_records(records_dir)?;
    let truth = load_truth(data)?;
    let mut report = evaluate(&records, &truth)?;
    let timing_path = records_dir.join(TIMING_FILE);
    if timing_path.is_file() {
        report = report.with_cost(&TimingReport::load(&timing_path)?, &cfg.cost)?;
    } else {
        warn!("{} missing; no cost summary", timing_path.display());
    }
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| records_dir.join("evaluation.json"));
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "mean IoU {:.3} (defective {}), precision {:.3}, recall {:.3}, clean {}/{}",
        report.mean_iou,
        report.mean_iou_defective.map_or("n/a".into(), |v| format!("{v:.3}")),
        report.precision,
        report.recall,
        report.defect_free_without_polygons,
        report.defect_free_images
    );
    if let Some(c) = &report.cost {
        println!("cost {:.2} s/image over {} images", c.cost_per_image, c.n_images);
    }
    println!("report written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(cfg: &PipelineConfig, a: &ServeArgs, out: Option<&Path>) -> Result<ExitCode> {
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.out_dir.join("review"));
    let records_dir = a.records.as_deref().unwrap_or(&cfg.paths.out_dir);
    let store = if root.join(elseg_review::store::INDEX_FILE).is_file() {
        ReviewStore::open(&root)?
    } else {
        let items: Vec<(AnnotationRecord, PathBuf)> = read_records(records_dir)?
            .into_iter()
            .map(|r| {
                let path = PathBuf::from(&r.source_path);
                (r, path)
            })
            .collect();
        info!("creating review store at {} from {} records", root.display(), items.len());
        ReviewStore::create(&root, items)?
    };
    let timing_path = records_dir.join(TIMING_FILE);
    let t_inference = if timing_path.is_file() {
        Some(TimingReport::load(&timing_path)?.mean_seconds_per_image)
    } else {
        None
    };
    let cost = CostOptions {
        t_inference,
        t_revision: cfg.cost.t_revision,
        t_tuning: cfg.cost.t_tuning,
    };
    let server = elseg_review::serve(Arc::new(store), &a.bind, cost)?;
    println!("listening on {}", server.url());
    std::io::stdout().flush()?;
    server.run_until_ctrl_c()?;
    Ok(ExitCode::SUCCESS)
}

fn export(cfg: &PipelineConfig, a: &ExportArgs, out: Option<&Path>) -> Result<ExitCode> {
    let records: Vec<AnnotationRecord> = match &a.store {
        Some(store) => ReviewStore::open(store)?
            .records()
            .into_iter()
            .filter(|r| r.status == Status::Gold)
            .collect(),
        None => read_records(a.records.as_deref().unwrap_or(&cfg.paths.out_dir))?,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.out_dir.join("export"));
    fs::create_dir_all(&dir)?;
    if a.format != Format::Voc {
        fs::write(dir.join(COCO_FILE), to_coco(&records, &[Category::defect()])?)?;
    }
    if a.format != Format::Coco {
        let voc = dir.join(VOC_DIR);
        fs::create_dir_all(&voc)?;
        for r in &records {
            let folder = Path::new(&r.source_path)
                .parent()
                .and_then(|p| p.file_name())
                .and_then(|s| s.to_str())
                .unwrap_or("");
            fs::write(voc.join(voc_file_name(r)), to_voc(r, folder, "defect")?)?;
        }
    }
    println!("exported {} records to {}", records.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}
