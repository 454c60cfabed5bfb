//! Command-line front end: `count`, `eval`, `inspect`, `baseline` and
//! `export-density`.
//!
//! Exit codes: 0 on success, 1 on runtime failure or when an evaluation had
//! per-image failures, 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baseline::{count_above, detection_similarities, load_detections, prototype, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::eval::{evaluate, parse_carpk, parse_fsc147, ExemplarSelection, Split};
use crate::geometry::{PixelBox, DEFAULT_SUPERSAMPLE};
use crate::pipeline::{count_with_features, export_density, CountResult, DegeneratePolicy, PipelineConfig};
use crate::tensorio::{load_feature_map, read_header, CdfmHeader, FeatureMap, FileSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "countingdino", version, about = "Exemplar-based class-agnostic counting on patch features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count objects in one image.
    Count(CountArgs),
    /// Evaluate a dataset split and report MAE/RMSE.
    Eval(EvalArgs),
    /// Print the header and value statistics of a feature file.
    Inspect(InspectArgs),
    /// Count external detections that match the exemplar prototype.
    Baseline(BaselineArgs),
    /// Count one image and write its density maps before and after thresholding.
    ExportDensity(CountArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DegenerateArg {
    Error,
    ZeroCount,
}

/// Switches shared by every counting command.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Resolution level: features come from 4^k quadrant tiles.
    #[arg(long = "k")]
    pub k: Option<u32>,
    /// Disable the elliptical exemplar prior.
    #[arg(long)]
    pub no_ellipse: bool,
    /// Disable background thresholding (count = raw integral).
    #[arg(long)]
    pub no_threshold: bool,
    /// Use at most this many exemplars, in annotation order.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub exemplars: u32,
    /// Samples per cell side when rasterizing the ellipse.
    #[arg(long, default_value_t = DEFAULT_SUPERSAMPLE as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub supersample: u32,
    /// L2-normalize feature vectors before matching.
    #[arg(long)]
    pub normalize_features: bool,
    /// Handling of images with a constant or unresponsive similarity map.
    #[arg(long, value_enum, default_value_t = DegenerateArg::ZeroCount)]
    pub degenerate: DegenerateArg,
}

impl PipelineArgs {
    fn config(&self, default_k: u32) -> PipelineConfig {
        PipelineConfig {
            resolution_level: self.k.unwrap_or(default_k),
            apply_ellipse: !self.no_ellipse,
            apply_threshold: !self.no_threshold,
            normalize_features: self.normalize_features,
            supersample: self.supersample as usize,
            degenerate_policy: match self.degenerate {
                DegenerateArg::Error => DegeneratePolicy::Error,
                DegenerateArg::ZeroCount => DegeneratePolicy::ZeroCount,
            },
            max_exemplars: self.exemplars as usize,
            keep_density: false,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeatureInput {
    /// CDFM feature file of the image.
    #[arg(long, required_unless_present = "features_dir", conflicts_with = "features_dir")]
    pub features: Option<PathBuf>,
    /// Directory of CDFM files; requires --image.
    #[arg(long, requires = "image")]
    pub features_dir: Option<PathBuf>,
    /// Image id looked up in --features-dir.
    #[arg(long)]
    pub image: Option<String>,
}

impl FeatureInput {
    /// Loads the map and returns it with the image id it belongs to.
    fn load(&self, k: Option<u32>) -> Result<(FeatureMap, String)> {
        if let Some(path) = &self.features {
            let map = load_feature_map(path)?;
            if let Some(k) = k {
                if map.resolution_level() != k {
                    return Err(Error::Validation(format!(
                        "{} was exported at resolution level {}, --k asks for {k}",
                        path.display(),
                        map.resolution_level()
                    )));
                }
            }
            let id = self
                .image
                .clone()
                .or_else(|| path.file_name().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_default();
            return Ok((map, id));
        }
        let dir = self.features_dir.as_ref().expect("clap enforces one feature input");
        let id = self.image.clone().expect("clap enforces --image");
        let source = FileSource::new(dir);
        let map = crate::tensorio::FeatureSource::features_for(&source, &id, k.unwrap_or(2))?;
        Ok((map, id))
    }
}

#[derive(Debug, Args)]
#[group(id = "box_input", required = true, multiple = false, args = ["boxes", "boxes_file"])]
pub struct BoxInput {
    /// Exemplar boxes "x1,y1,x2,y2;x1,y1,x2,y2;..." in pixels.
    #[arg(long)]
    pub boxes: Option<String>,
    /// JSON file with an array of [x1, y1, x2, y2] exemplar boxes.
    #[arg(long)]
    pub boxes_file: Option<PathBuf>,
}

impl BoxInput {
    fn load(&self) -> Result<Vec<PixelBox>> {
        match (&self.boxes, &self.boxes_file) {
            (Some(inline), None) => parse_inline_boxes(inline),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let raw: Vec<[f64; 4]> = serde_json::from_str(&text)?;
                raw.iter()
                    .map(|b| PixelBox::new(b[0], b[1], b[2], b[3]))
                    .collect()
            }
            _ => Err(Error::Argument("give exactly one of --boxes and --boxes-file".into())),
        }
    }
}

/// Parses `"x1,y1,x2,y2;..."`. Whitespace is ignored; a trailing `;` is fine.
pub fn parse_inline_boxes(s: &str) -> Result<Vec<PixelBox>> {
    let boxes = s
        .split(';')
        .map(str::trim)
        .filter(|b| !b.is_empty())
        .map(|b| {
            let v: Vec<f64> = b
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Argument(format!("bad coordinate {f:?} in box {b:?}")))
                })
                .collect::<Result<_>>()?;
            match v.as_slice() {
                [x1, y1, x2, y2] => PixelBox::new(*x1, *y1, *x2, *y2),
                _ => Err(Error::Argument(format!("box {b:?} needs 4 coordinates"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if boxes.is_empty() {
        return Err(Error::Argument("no exemplar boxes given".into()));
    }
    Ok(boxes)
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[command(flatten)]
    pub boxes: BoxInput,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
    /// Decimals in the plain-text count.
    #[arg(long, default_value_t = 1)]
    pub decimals: usize,
    /// Directory for density-map CSV/PNG exports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Fsc147,
    Carpk,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Directory of CDFM files (optionally with k<level>/ subdirectories).
    #[arg(long)]
    pub features_dir: PathBuf,
    /// FSC-147 annotation JSON, or the CARPK root / annotation directory.
    #[arg(long)]
    pub ann: PathBuf,
    /// FSC-147 split JSON.
    #[arg(long, required_if_eq("dataset", "fsc147"))]
    pub splits: Option<PathBuf>,
    /// CARPK: draw exemplars at random with this seed instead of the first boxes.
    #[arg(long)]
    pub exemplar_seed: Option<u64>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Worker threads (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// CDFM feature file.
    #[arg(long)]
    pub features: PathBuf,
    /// Print as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: FeatureInput,
    #[command(flatten)]
    pub boxes: BoxInput,
    /// Detections JSON: {"image": [[x1,y1,x2,y2,score], ...]} or a bare array.
    #[arg(long)]
    pub detections: PathBuf,
    /// Cosine-similarity threshold (strictly above counts).
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Resolution level of the features to load.
    #[arg(long = "k")]
    pub k: Option<u32>,
    /// Print the count and per-detection similarities as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct BaselineOutput {
    image_id: String,
    count: usize,
    n_detections: usize,
    threshold: f64,
    similarities: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct InspectOutput {
    path: String,
    header: CdfmHeader,
    min: f32,
    max: f32,
    mean: f64,
    mean_cell_norm: f64,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = if e.use_stderr() { e.render().to_string() } else { e.to_string() };
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Count(args) => cmd_count(args, false, out, err),
        Command::ExportDensity(args) => cmd_count(args, true, out, err),
        Command::Eval(args) => cmd_eval(args, out, err),
        Command::Inspect(args) => cmd_inspect(args, out),
        Command::Baseline(args) => cmd_baseline(args, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Error::Argument(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_count(args: &CountArgs, export_all: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if export_all && args.out.is_none() {
        return Err(Error::Argument("export-density needs --out".into()));
    }
    let boxes = args.boxes.load()?;
    let (map, image_id) = args.input.load(args.pipeline.k)?;
    let mut cfg = args.pipeline.config(map.resolution_level());
    cfg.keep_density = args.out.is_some();
    let result: CountResult = count_with_features(&map, &image_id, &boxes, &cfg)?;

    if let Some(dir) = &args.out {
        if result.density.is_none() {
            let _ = writeln!(err, "warning: {image_id}: no density map to export");
        } else {
            for path in export_density(&result, dir, true)? {
                let _ = writeln!(err, "wrote {}", path.display());
            }
        }
    }
    if args.json {
        write_json(out, &result)?;
    } else {
        writeln!(out, "{:.*}", args.decimals, result.count).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(EXIT_OK)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let split: Split = args.split.parse()?;
    let cfg = args.pipeline.config(2);
    let dataset = match args.dataset {
        DatasetKind::Fsc147 => {
            let splits = args
                .splits
                .as_ref()
                .ok_or_else(|| Error::Argument("fsc147 needs --splits".into()))?;
            parse_fsc147(&args.ann, splits, split)?
        }
        DatasetKind::Carpk => {
            let n = cfg.max_exemplars;
            let selection = match args.exemplar_seed {
                Some(seed) => ExemplarSelection::Random { n, seed },
                None => ExemplarSelection::Head(n),
            };
            parse_carpk(&args.ann, split, selection)?
        }
    };
    let source = FileSource::new(&args.features_dir);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::Argument("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Evaluation(format!("thread pool: {e}")))?;
    let mut report = pool.install(|| evaluate(&dataset.records, &source, &cfg))?;
    report.add_failures(dataset.rejected);

    if let Some(path) = &args.report {
        report.save(path)?;
    }
    if args.json {
        write_json(out, &report)?;
    } else {
        writeln!(
            out,
            "{} {}: {} images, MAE {:.2}, RMSE {:.2}",
            match args.dataset {
                DatasetKind::Fsc147 => "FSC-147",
                DatasetKind::Carpk => "CARPK",
            },
            split.as_str(),
            report.per_image.len(),
            report.mae,
            report.rmse
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    for f in &report.failures {
        let _ = writeln!(err, "failed: {}: {}", f.image_id, f.error);
    }
    Ok(if report.failures.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<i32> {
    let header = read_header(&args.features)?;
    let map = load_feature_map(&args.features)?;
    let data = map.data();
    let (min, max) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64;
    let cells = map.rows() * map.cols();
    let mean_cell_norm = (0..cells)
        .map(|i| {
            let (r, c) = (i / map.cols(), i % map.cols());
            map.cell(r, c).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / cells as f64;
    let info = InspectOutput {
        path: args.features.display().to_string(),
        header,
        min,
        max,
        mean,
        mean_cell_norm,
    };
    if args.json {
        write_json(out, &info)?;
    } else {
        let h = &info.header;
        let text = format!(
            "{}\n  CDFM v{}\n  grid {}x{}x{} (rows x cols x channels), patch {} px\n  image {}x{} px, effective {}x{} px\n  resolution level {}\n  values min {} max {} mean {:.6}, mean cell norm {:.6}\n",
            info.path,
            h.version,
            h.rows,
            h.cols,
            h.channels,
            h.patch_size,
            h.image_height,
            h.image_width,
            h.effective_height,
            h.effective_width,
            h.resolution_level,
            info.min,
            info.max,
            info.mean,
            info.mean_cell_norm
        );
        out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(EXIT_OK)
}

fn cmd_baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<i32> {
    if !(-1.0..=1.0).contains(&args.threshold) {
        return Err(Error::Argument(format!(
            "--threshold must lie in [-1, 1], got {}",
            args.threshold
        )));
    }
    let exemplars = args.boxes.load()?;
    let (map, image_id) = args.input.load(args.k)?;
    let sets = load_detections(&args.detections, &image_id)?;
    let stem = |s: &str| {
        Path::new(s)
            .file_stem()
            .map(|x| x.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let dets = sets
        .iter()
        .find(|s| s.image_id == image_id || stem(&s.image_id) == stem(&image_id))
        .ok_or_else(|| {
            Error::Annotation(format!(
                "{} has no detections for {image_id}",
                args.detections.display()
            ))
        })?;
    let proto = prototype(&map, &exemplars)?;
    let similarities = detection_similarities(&map, dets, &proto)?;
    for (d, sim) in dets.detections.iter().zip(&similarities) {
        if sim.is_none() {
            log::warn!("{image_id}: detection {:?} has a zero-norm feature and is excluded", d.bbox);
        }
    }
    let count = count_above(&similarities, args.threshold);
    if args.json {
        write_json(
            out,
            &BaselineOutput {
                image_id,
                count,
                n_detections: dets.detections.len(),
                threshold: args.threshold,
                similarities,
            },
        )?;
    } else {
        writeln!(out, "{count}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(EXIT_OK)
}
