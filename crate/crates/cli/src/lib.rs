//! Command-line front end for the hand-state toolkit.
//!
//! [`run`] parses arguments, layers the configuration and dispatches to one
//! subcommand; it returns the process exit code so tests can drive it
//! in-process.

pub mod config;
pub mod render;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use handstate::association::{self, load_parses, write_parses, ImageParse};
use handstate::data_model::{compute_stats, load_annotations};
use handstate::detector::{self, load_checkpoint, save_checkpoint, DirImageProvider};
use handstate::evaluation::{EvalCriterion, EvalReport, ScoreThresholds};
use handstate::grasp_mining::{self, build_codebook, mine_video, EventRecord};
use handstate::mesh_quality::{
    load_recorded_views, make_labels, train_quality_mlp, write_scored_records, QualityLabel,
    ScoredRecord,
};

use config::{apply, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<handstate::Error> for CliError {
    fn from(e: handstate::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn write_err(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Runtime(format!("writing {}: {e}", p.display())),
        None => CliError::Runtime(format!("writing output: {e}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "handstate", version, about = "Hand contact-state detection, evaluation and mining")]
pub struct Cli {
    /// TOML file with per-command settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for training, MLP fitting and codebook initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (stdout for text outputs when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-image work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a detector checkpoint on images and write one parse per image.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        hand_thresh: Option<f64>,
        #[arg(long)]
        object_thresh: Option<f64>,
        /// PNG images; the file stem becomes the image id.
        images: Vec<PathBuf>,
    },
    /// Draw a parse or annotation record onto its image.
    Render {
        #[arg(long)]
        image: PathBuf,
        /// Parse or annotation file; the record is matched by image id.
        #[arg(long)]
        parse: PathBuf,
        /// Defaults to the image file stem.
        #[arg(long)]
        image_id: Option<String>,
        #[arg(long)]
        thickness: Option<u32>,
    },
    /// Score parses against ground truth.
    Evaluate {
        #[arg(long)]
        parses: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        size_bins: Option<Vec<f64>>,
        /// Also write precision-recall points as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Also draw the precision-recall curves as a PNG.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Hand-size and contact-state statistics of an annotation file.
    Stats {
        annotations: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Train a detector and write its checkpoint to --out.
    Train {
        #[arg(long)]
        annotations: PathBuf,
        /// Directory of `<image_id>.png` files.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Per-iteration losses as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Consistency scores and quality labels from recorded rotated views.
    MeshScore {
        views: PathBuf,
        #[arg(long)]
        top: Option<f64>,
        #[arg(long)]
        bottom: Option<f64>,
        /// Train the quality classifier on the labeled poses and save it here.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Contact events from per-video parse files (one file per video).
    Mine {
        /// Directory of `<image_id>.png` frames.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        iou_thresh: Option<f64>,
        #[arg(long)]
        max_missed: Option<usize>,
        #[arg(long)]
        overlap_thresh: Option<f64>,
        #[arg(long)]
        move_thresh: Option<f64>,
        parses: Vec<PathBuf>,
    },
    /// K-means pose codebook from scored mesh records.
    Codebook {
        scored: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        all_records: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply(&mut cfg.seed, cli.seed.map(Some));
    apply(&mut cfg.threads, cli.threads.map(Some));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = cli.out.clone();
    pool.install(|| dispatch(cli.command, cfg, out.as_deref()))
}

fn text_output(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| write_err(Some(p), e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn required_out<'a>(out: Option<&'a Path>, what: &str) -> Result<&'a Path, CliError> {
    out.ok_or_else(|| CliError::Usage(format!("--out is required for {what}")))
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = text_output(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| write_err(out, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| write_err(out, e))
}

fn load_png(path: &Path) -> Result<image::RgbImage, CliError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<(), CliError> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| write_err(Some(path), e))
}

fn stem(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Data(format!("{}: no usable file name", path.display())))
}

fn dispatch(cmd: Command, mut cfg: RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    match cmd {
        Command::Detect {
            checkpoint,
            hand_thresh,
            object_thresh,
            images,
        } => {
            let t = &mut cfg.detect.thresholds;
            apply(&mut t.hand, hand_thresh);
            apply(&mut t.object, object_thresh);
            let thresholds = *t;
            let model = load_checkpoint(&checkpoint)?;
            let parses = images
                .par_iter()
                .map(|p| -> Result<ImageParse, CliError> {
                    let img = load_png(p)?;
                    let (hands, objects) = model.detect(&img)?;
                    Ok(association::parse(&hands, &objects, thresholds, img.dimensions()).with_image_id(stem(p)?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut w = text_output(out)?;
            write_parses(&mut w, &parses).map_err(|e| write_err(out, e))
        }
        Command::Render {
            image,
            parse,
            image_id,
            thickness,
        } => {
            apply(&mut cfg.render.thickness, thickness);
            let out = required_out(out, "render")?;
            let img = load_png(&image)?;
            let id = match image_id {
                Some(id) => id,
                None => stem(&image)?,
            };
            let parses = load_parses(&parse)?;
            let record = parses
                .iter()
                .find(|p| p.image_id == id)
                .ok_or_else(|| CliError::Data(format!("{}: no record for image {id}", parse.display())))?;
            let drawn = render::render_parse(&img, record, cfg.render.thickness, cfg.render.font_scale);
            save_png(&drawn, out)
        }
        Command::Evaluate {
            parses,
            gt,
            criteria,
            size_bins,
            curves,
            plot,
        } => {
            apply(&mut cfg.evaluate.criteria, criteria);
            apply(&mut cfg.evaluate.size_bins, size_bins);
            let crits = cfg
                .evaluate
                .criteria
                .iter()
                .map(|c| EvalCriterion::parse(c).ok_or_else(|| CliError::Usage(format!("unknown criterion {c:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let parses = load_parses(&parses)?;
            let gt = load_annotations(&gt)?;
            let bins = &cfg.evaluate.size_bins;
            let report = EvalReport::build(
                &parses,
                &gt,
                &crits,
                &ScoreThresholds::default(),
                (!bins.is_empty()).then_some(bins.as_slice()),
            )?;
            if let Some(p) = &curves {
                let mut w = text_output(Some(p))?;
                report.write_curves_csv(&mut w).and_then(|_| w.flush()).map_err(|e| write_err(Some(p), e))?;
            }
            if let Some(p) = &plot {
                save_png(&render::render_pr_plot(&report.curves, 256), p)?;
            }
            write_json(out, &report)
        }
        Command::Stats { annotations, bins } => {
            apply(&mut cfg.stats.bins, bins);
            let set = load_annotations(&annotations)?;
            write_json(out, &compute_stats(&set, cfg.stats.bins)?)
        }
        Command::Train {
            annotations,
            images,
            epochs,
            lr,
            batch_size,
            max_iterations,
            log,
        } => {
            let tc = &mut cfg.train;
            apply(&mut tc.epochs, epochs);
            apply(&mut tc.learning_rate, lr);
            apply(&mut tc.batch_size, batch_size);
            apply(&mut tc.max_iterations, max_iterations.map(Some));
            apply(&mut tc.seed, cfg.seed);
            let out = required_out(out, "train")?;
            let set = load_annotations(&annotations)?;
            let provider = DirImageProvider::new(images);
            let mut progress = |it: usize, l: &detector::LossDict| {
                if it % 10 == 0 {
                    eprintln!("iter {it:>5}  total {:.4}  det {:.4}  state {:.4}", l.total, l.l_det, l.l_state);
                }
            };
            let (model, report) = detector::train(&set, &provider, &cfg.train, Some(&mut progress))?;
            save_checkpoint(out, &model, Some(&cfg.train))?;
            if let Some(p) = &log {
                let mut w = text_output(Some(p))?;
                for l in &report.losses {
                    serde_json::to_writer(&mut w, l).map_err(|e| write_err(Some(p), e))?;
                    writeln!(w).map_err(|e| write_err(Some(p), e))?;
                }
                w.flush().map_err(|e| write_err(Some(p), e))?;
            }
            Ok(())
        }
        Command::MeshScore {
            views,
            top,
            bottom,
            model,
        } => {
            let mc = &mut cfg.mesh_score;
            apply(&mut mc.top, top);
            apply(&mut mc.bottom, bottom);
            apply(&mut mc.mlp.seed, cfg.seed);
            let records = load_recorded_views(&views)?;
            let scores = records
                .par_iter()
                .map(|r| r.consistency())
                .collect::<Result<Vec<f64>, _>>()?;
            let labeled = make_labels(records.into_iter().zip(scores).collect(), mc.top, mc.bottom)?;
            if let Some(path) = &model {
                let data: Vec<(&[f64], bool)> = labeled.labeled().map(|(r, y)| (r.mesh.theta.as_slice(), y)).collect();
                train_quality_mlp(&data, &mc.mlp)?.save(path)?;
            }
            let scored: Vec<ScoredRecord> = labeled
                .items
                .into_iter()
                .map(|(r, consistency, label)| ScoredRecord {
                    image_id: r.image_id,
                    bbox: r.bbox,
                    side: r.side,
                    consistency,
                    theta: r.mesh.theta,
                    label,
                })
                .collect();
            let mut w = text_output(out)?;
            write_scored_records(&mut w, &scored).map_err(|e| write_err(out, e))
        }
        Command::Mine {
            frames,
            iou_thresh,
            max_missed,
            overlap_thresh,
            move_thresh,
            parses,
        } => {
            let m = &mut cfg.mine;
            apply(&mut m.tracker.iou_thresh, iou_thresh);
            apply(&mut m.tracker.max_missed, max_missed);
            apply(&mut m.filters.overlap_thresh, overlap_thresh);
            apply(&mut m.filters.move_thresh, move_thresh);
            let provider = DirImageProvider::new(frames);
            let per_video = parses
                .par_iter()
                .map(|path| -> Result<Vec<EventRecord>, CliError> {
                    let video = stem(path)?;
                    let frames = load_parses(path)?;
                    let events = mine_video(&frames, &provider, &m.tracker, &m.filters)?;
                    Ok(events
                        .into_iter()
                        .map(|event| EventRecord {
                            video: video.clone(),
                            image_before: frames[event.t_before].image_id.clone(),
                            image_after: frames[event.t_after].image_id.clone(),
                            event,
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>, _>>()?;
            let all: Vec<EventRecord> = per_video.into_iter().flatten().collect();
            let mut w = text_output(out)?;
            grasp_mining::write_events(&mut w, &all).map_err(|e| write_err(out, e))
        }
        Command::Codebook { scored, k, all_records } => {
            apply(&mut cfg.codebook.k, k);
            if all_records {
                cfg.codebook.all_records = true;
            }
            let file = File::open(&scored).map_err(|e| CliError::Data(format!("{}: {e}", scored.display())))?;
            let records = handstate::mesh_quality::read_scored_records(std::io::BufReader::new(file))?;
            let thetas: Vec<Vec<f64>> = records
                .into_iter()
                .filter(|r| cfg.codebook.all_records || r.label == QualityLabel::Positive)
                .map(|r| r.theta)
                .collect();
            let cb = build_codebook(&thetas, cfg.codebook.k, cfg.seed.unwrap_or(0))?;
            let mut w = text_output(out)?;
            grasp_mining::write_codebook(&mut w, &cb).map_err(|e| write_err(out, e))
        }
    }
}
