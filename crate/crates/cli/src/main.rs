use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vehicle_cli::commands::{self, EvalArgs, TrainArgs};
use vehicle_cli::config::{Config, ConfigLayer};
use vehicle_cli::error::{CliError, Result};
use vehicle_cli::manifest::{Split, Variant};
use vehicle_core::{ConfidenceMode, LayerTag};

/// Post-inference toolkit for vehicle detection and classification.
#[derive(Debug, Parser)]
#[command(name = "vehicle", version)]
struct Cli {
    /// TOML config file; defaults to $VEHICLE_CONFIG when set.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true, value_name = "T")]
    score_threshold: Option<f64>,
    #[arg(long, global = true, value_name = "T")]
    overlap_threshold: Option<f64>,
    /// Valid region in detection pixels: X_MIN,Y_MIN,X_MAX,Y_MAX.
    #[arg(long, global = true, value_delimiter = ',', value_name = "X")]
    region: Option<Vec<f64>>,
    #[arg(long, global = true, value_name = "PX")]
    source_width: Option<u32>,
    #[arg(long, global = true, value_name = "PX")]
    source_height: Option<u32>,
    #[arg(long, global = true, value_name = "T")]
    iou_threshold: Option<f64>,
    #[arg(long, global = true)]
    cost: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    standardize: Option<bool>,
    #[arg(long, global = true)]
    balanced: Option<bool>,
    #[arg(long, global = true)]
    confidence_mode: Option<ModeArg>,
}

impl Overrides {
    fn layer(&self) -> Result<ConfigLayer> {
        let region = match self.region.as_deref() {
            None => None,
            Some(&[x0, y0, x1, y1]) => Some([x0, y0, x1, y1]),
            Some(r) => {
                return Err(CliError::validation(format!(
                    "--region takes 4 comma-separated values, got {}",
                    r.len()
                )))
            }
        };
        Ok(ConfigLayer {
            score_threshold: self.score_threshold,
            overlap_threshold: self.overlap_threshold,
            region,
            source_width: self.source_width,
            source_height: self.source_height,
            iou_threshold: self.iou_threshold,
            cost: self.cost,
            seed: self.seed,
            standardize: self.standardize,
            balanced: self.balanced,
            confidence_mode: self.confidence_mode.map(|m| match m {
                ModeArg::Calibrated => ConfidenceMode::Calibrated,
                ModeArg::Raw => ConfidenceMode::Raw,
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Calibrated,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayerArg {
    Fc6,
    Fc7,
    Fc6fc7,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Normal,
    Dark,
    Transformed,
}

impl From<LayerArg> for LayerTag {
    fn from(l: LayerArg) -> Self {
        match l {
            LayerArg::Fc6 => LayerTag::Fc6,
            LayerArg::Fc7 => LayerTag::Fc7,
            LayerArg::Fc6fc7 => LayerTag::Fc6Fc7,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Normal => Variant::Normal,
            VariantArg::Dark => Variant::Dark,
            VariantArg::Transformed => Variant::Transformed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode grid files and filter the detections.
    Detect {
        #[arg(long)]
        grids: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a passenger/other classifier on the manifest's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "fc6fc7")]
        layer: LayerArg,
        #[arg(long, value_enum, default_value = "normal")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-class confidences for every image in the feature files.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine confidences from original and transformed images.
    Fuse {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        transformed: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections and/or labels against the manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, conflicts_with = "confidences")]
        labels: Option<PathBuf>,
        #[arg(long)]
        confidences: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "normal")]
        variant: VariantArg,
        /// Also write the results as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides.layer()?)?;
    let command = match cli.command {
        _ if cli.show_config => Command::ShowConfig,
        Some(c) => c,
        None => Command::ShowConfig,
    };
    let summary = match command {
        Command::ShowConfig => {
            print!("{}", cfg.render());
            return Ok(());
        }
        Command::Detect { grids, out } => commands::cmd_detect(&grids, &out, &cfg)?,
        Command::Train {
            manifest,
            features,
            layer,
            variant,
            out,
        } => commands::cmd_train(
            &TrainArgs {
                manifest: &manifest,
                features: &features,
                layer: layer.into(),
                variant: variant.into(),
                out: &out,
            },
            &cfg,
        )?,
        Command::Predict {
            model,
            features,
            out,
        } => commands::cmd_predict(&model, &features, &out, &cfg)?,
        Command::Fuse {
            original,
            transformed,
            out,
        } => commands::cmd_fuse(&original, &transformed, &out)?,
        Command::Eval {
            manifest,
            detections,
            labels,
            confidences,
            split,
            variant,
            json,
        } => {
            let results = commands::cmd_eval(
                &EvalArgs {
                    manifest: &manifest,
                    detections: detections.as_deref(),
                    labels: labels.as_deref(),
                    confidences: confidences.as_deref(),
                    split: split.into(),
                    variant: variant.into(),
                    json: json.as_deref(),
                },
                &cfg,
            )?;
            print!("{}", results.report());
            return Ok(());
        }
    };
    eprintln!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
