use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::{FileConfig, GridArgs};

#[derive(Debug, Parser)]
#[command(name = "oralscreen", version, about = "Oral-systemic screening analysis pipeline")]
struct Cli {
    /// JSON settings file (alpha, tail, entry, bp_precedence, stratify, mask, threshold)
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// The four dataset files, by default looked up in one directory.
#[derive(Debug, Clone, clap::Args)]
struct DataArgs {
    /// Directory holding subjects.csv, questionnaire.csv, screenings.csv and annotations.jsonl
    #[arg(value_name = "DATA_DIR")]
    data: PathBuf,
    #[arg(long)]
    subjects: Option<PathBuf>,
    #[arg(long)]
    questionnaire: Option<PathBuf>,
    #[arg(long)]
    screenings: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset and write a normalized copy plus provenance.json
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a dataset and print a summary
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Consensus MGI per image and subject
    AggregateMgi {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory; prints the subject table to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize ground-truth masks from expert marks and color thresholding
    Masks {
        #[command(flatten)]
        data: DataArgs,
        /// Image manifest (image_id,subject_id,file)
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the color-threshold baseline segmenter over a manifest
    Segment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pixel-level metrics, ROC and PR curves for predictions against ground truth
    SegEval {
        /// Directory of predictions: <id>.pmap score maps or <id>.png masks
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth <id>.png masks
        #[arg(long)]
        truth: PathBuf,
        /// Score threshold for the hard operating point
        #[arg(long)]
        threshold: Option<f32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// MGI-by-condition Fisher grids
    Correlate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Table 1, both grids and any stratified grids, with report.json
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check which Fisher conventions reproduce the published p-values
    Calibrate {
        /// Also write calibration.txt and calibration.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic reference cohort in the ingest schemas
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also render one PNG per image
        #[arg(long)]
        images: bool,
    },
    /// Start the annotation service
    Serve {
        /// Image manifest (image_id,subject_id,file)
        #[arg(long)]
        images: PathBuf,
        /// Append-only annotation log
        #[arg(long, default_value = "annotations.log.jsonl")]
        log: PathBuf,
        #[arg(long, default_value_t = oralscreen_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Allowed portal origin; any origin when omitted
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest { data, out } => commands::ingest(&data.paths(), &out),
        Command::Validate { data } => commands::validate(&data.paths()),
        Command::AggregateMgi { data, out } => commands::aggregate_mgi(&data.paths(), out.as_deref()),
        Command::Masks { data, images, out } => commands::masks(&data.paths(), &images, &out, &file),
        Command::Segment { images, out } => commands::segment(&images, &out, &file),
        Command::SegEval {
            pred,
            truth,
            threshold,
            out,
        } => commands::seg_eval(&pred, &truth, threshold.or(file.threshold).unwrap_or(0.5), &out),
        Command::Correlate { data, grid, out } => {
            commands::correlate(&data.paths(), &grid.resolve(&file)?, &out)
        }
        Command::Report { data, grid, out } => {
            commands::report(&data.paths(), &grid.resolve(&file)?, file.mask, &out)
        }
        Command::Calibrate { out } => commands::calibrate(out.as_deref()),
        Command::Synth { out, images } => commands::synth(&out, images),
        Command::Serve {
            images,
            log,
            port,
            host,
            cors_origin,
        } => commands::serve(&images, &log, (host, port).into(), cors_origin.as_deref()),
    }
}

impl DataArgs {
    fn paths(&self) -> oralscreen_core::io::DatasetPaths {
        let mut p = oralscreen_core::io::DatasetPaths::in_dir(&self.data);
        let overrides = [
            (&mut p.subjects, &self.subjects),
            (&mut p.questionnaire, &self.questionnaire),
            (&mut p.screenings, &self.screenings),
            (&mut p.annotations, &self.annotations),
        ];
        for (slot, given) in overrides {
            if let Some(path) = given {
                *slot = path.clone();
            }
        }
        p
    }
}

/// 1 for bad input, 2 for I/O trouble.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<oralscreen_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
