//! Command-line interface.
//!
//! Every stage is a subcommand reading and writing explicit files; `run`
//! chains them under one configuration. Diagnostics go to standard error
//! and the exit code reflects the error class (see [`RunError::exit_code`]).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use riskgraph_core::classify::SvmParams;
use riskgraph_core::graphs::GridSpec;
use riskgraph_core::ingest::synth::SynthSpec;
use riskgraph_core::kernels::{KernelConfig, NhgkParams};
use riskgraph_core::labels::{AutoK, FeatureSet, KChoice, LabelParams};
use riskgraph_core::scenes::ExtractParams;
use serde::Serialize;

use crate::config::{load_schema, PipelineConfig};
use crate::error::{Result, RunError};
use crate::io::artifact::{digest_of, file_digest};
use crate::io::{csv_log, gram};
use crate::pipeline;
use crate::stages;

#[derive(Debug, Parser)]
#[command(
    name = "riskgraph",
    version,
    about = "Driver-specific risky scene recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Feature {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kernel {
    Spgk,
    Nhgk,
    Lc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic driving log from a scenario or suite spec.
    Synth {
        /// Scenario or suite spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and smooth a CSV log into JSON-Lines records.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Column mapping (JSON); canonical column names when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 25)]
        smooth_span: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract interactive scenes from smoothed records.
    Extract {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 0.02)]
        straight_tol: f64,
        /// Response horizon after the anchor frame (s).
        #[arg(long, default_value_t = 1.5)]
        horizon: f64,
        /// Frames a lane change must persist.
        #[arg(long, default_value_t = 5)]
        persist: usize,
        #[arg(long, default_value_t = 2)]
        min_vehicles: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster driver responses into risk levels.
    Label {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, value_enum, default_value_t = Feature::One)]
        feature: Feature,
        /// `auto` or a cluster count.
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-k RSS and silhouette table (CSV).
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Build one occupancy-grid graph per scene.
    Graphs {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value_t = 3)]
        lanes: u8,
        #[arg(long, default_value_t = 10)]
        rows: u8,
        #[arg(long, default_value_t = 10.0)]
        cell_length: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a Gram matrix.
    Gram {
        /// Graphs (spgk, nhgk).
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Scenes (lc).
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long, value_enum)]
        kernel: Kernel,
        #[arg(long, default_value_t = 3)]
        h: u32,
        #[arg(long, default_value_t = 16)]
        bits: u32,
        /// Label hashing seed (nhgk).
        #[arg(long)]
        seed: Option<u64>,
        /// Raw instead of normalised spgk values.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also export the matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cross-validate and train a precomputed-kernel SVM.
    Train {
        #[arg(long)]
        gram: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long = "C", default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Confusion cells as CSV.
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
    },
    /// Rebuild the report and figure data of a finished run.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the whole pipeline.
    Run {
        /// Pipeline configuration (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides `paths.work_dir`.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Overwrite artifacts produced under another configuration.
        #[arg(long)]
        force: bool,
    },
}

/// Digest of a standalone stage: its parameters and input files.
fn stage_digest<P: Serialize>(stage: &str, params: &P, inputs: &[&Path]) -> Result<String> {
    let inputs = inputs
        .iter()
        .map(|p| file_digest(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(digest_of(&(stage, params, inputs)))
}

fn parse_k(k: &str) -> Result<KChoice> {
    if k == "auto" {
        return Ok(KChoice::Auto(AutoK::Auto));
    }
    k.parse()
        .ok()
        .filter(|&n: &usize| n >= 1)
        .map(KChoice::Fixed)
        .ok_or_else(|| {
            RunError::Config(format!("--k must be `auto` or a positive count, got `{k}`"))
        })
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, seed, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| RunError::io(&spec, e))?;
            let spec: SynthSpec =
                serde_json::from_str(&text).map_err(|e| RunError::data(&spec, e))?;
            let records = spec
                .generate(seed)
                .map_err(|e| RunError::stage("synth", e))?;
            let digest = digest_of(&("synth", &spec, seed));
            csv_log::save_log(&out, &records, Some(&format!("config_digest={digest}")))?;
            log::info!("synth: {} records", records.len());
        }
        Command::Ingest {
            input,
            schema,
            smooth_span,
            out,
        } => {
            let schema = schema
                .as_deref()
                .map(load_schema)
                .transpose()?
                .unwrap_or_default();
            let parsed = csv_log::read_log(&input, &schema)?;
            log::info!(
                "ingest: {} records, {} skipped",
                parsed.records.len(),
                parsed.skipped
            );
            let frames = stages::ingest(&parsed.records, smooth_span)?;
            let digest = stage_digest("ingest", &(&schema, smooth_span), &[&input])?;
            stages::save_frames(&out, &frames, &digest)?;
        }
        Command::Extract {
            frames,
            window,
            straight_tol,
            horizon,
            persist,
            min_vehicles,
            out,
        } => {
            let params = ExtractParams {
                window,
                straight_tol,
                horizon,
                persist,
                min_vehicles,
            };
            let records = stages::load_frames(&frames)?;
            let scenes = stages::extract(&records, &params)?;
            log::info!("extract: {} scenes", scenes.len());
            stages::save_scenes(
                &out,
                &scenes,
                &stage_digest("extract", &params, &[&frames])?,
            )?;
        }
        Command::Label {
            scenes,
            feature,
            k,
            k_min,
            k_max,
            seed,
            out,
            diag,
        } => {
            let params = LabelParams {
                feature: match feature {
                    Feature::One => FeatureSet::One,
                    Feature::Two => FeatureSet::Two,
                },
                k: parse_k(&k)?,
                k_min,
                k_max,
                seed,
                ..LabelParams::default()
            };
            let loaded = stages::load_scenes(&scenes, None)?;
            let labels = stages::label(&loaded, &params)?;
            log::info!("label: k = {}, levels {:?}", labels.k, labels.histogram());
            let digest = stage_digest("label", &params, &[&scenes])?;
            stages::save_labels(&out, &labels, &digest)?;
            if let Some(diag) = diag {
                stages::write_diag(&diag, &labels.table, &digest)?;
            }
        }
        Command::Graphs {
            scenes,
            lanes,
            rows,
            cell_length,
            out,
        } => {
            let grid = GridSpec {
                lanes,
                rows,
                cell_length,
            };
            let loaded = stages::load_scenes(&scenes, None)?;
            let graphs = stages::graphs(&loaded, &grid)?;
            stages::save_graphs(
                &out,
                &graphs,
                &grid,
                &stage_digest("graphs", &grid, &[&scenes])?,
            )?;
        }
        Command::Gram {
            graphs,
            scenes,
            kernel,
            h,
            bits,
            seed,
            raw,
            out,
            csv,
        } => {
            let missing =
                |flag: &str| RunError::Config(format!("--{flag} is required for this kernel"));
            let (matrix, refs, input, config) = match kernel {
                Kernel::Lc => {
                    let path = scenes.ok_or_else(|| missing("scenes"))?;
                    let loaded = stages::load_scenes(&path, None)?;
                    (
                        stages::vector_gram(&loaded)?,
                        stages::refs_of(&loaded),
                        path,
                        KernelConfig::Linear,
                    )
                }
                Kernel::Spgk | Kernel::Nhgk => {
                    let path = graphs.ok_or_else(|| missing("graphs"))?;
                    let config = match kernel {
                        Kernel::Spgk => KernelConfig::Spgk { normalize: !raw },
                        _ => KernelConfig::Nhgk(NhgkParams {
                            h,
                            bits,
                            seed: seed.ok_or_else(|| missing("seed"))?,
                        }),
                    };
                    let loaded = stages::load_graphs(&path)?;
                    let refs = loaded.iter().map(|g| g.scene_ref.clone()).collect();
                    (stages::graph_gram(&loaded, &config)?, refs, path, config)
                }
            };
            let digest = stage_digest("gram", &config, &[&input])?;
            stages::save_gram(&out, &matrix, &refs, &digest)?;
            if let Some(csv) = csv {
                gram::write_gram_csv(&csv, &matrix, &refs)?;
            }
        }
        Command::Train {
            gram,
            labels,
            c,
            eps,
            folds,
            seed,
            out,
            report,
            confusion_csv,
        } => {
            let params = SvmParams {
                c,
                eps,
                ..SvmParams::default()
            };
            let (matrix, refs) = stages::load_gram(&gram)?;
            let label_file = stages::load_labels(&labels)?;
            let levels = label_file.levels_for(&refs, &labels)?;
            let model = match &matrix.config {
                KernelConfig::Linear => "lc",
                other => other.name(),
            };
            let (trained, evaluation) =
                stages::train(model, &matrix, &levels, &params, folds, seed)?;
            log::info!("train: {model} accuracy {:.4}", evaluation.overall_accuracy);
            let digest = stage_digest("train", &(&params, folds, seed), &[&gram, &labels])?;
            stages::save_model(&out, &trained, &refs, &digest)?;
            stages::save_evaluation(&report, &evaluation, &digest)?;
            if let Some(csv) = confusion_csv {
                let cm = &evaluation.confusion;
                let rows = cm.classes.iter().enumerate().flat_map(|(t, target)| {
                    cm.classes.iter().enumerate().map(move |(o, output)| {
                        vec![
                            target.to_string(),
                            output.to_string(),
                            cm.counts[t][o].to_string(),
                        ]
                    })
                });
                stages::write_csv(&csv, &digest, &["target", "output", "count"], rows)?;
            }
        }
        Command::Report {
            config,
            work_dir,
            force,
        } => {
            let loaded = PipelineConfig::load(&config, work_dir.as_deref())?;
            pipeline::report_from_artifacts(&loaded, force)?;
        }
        Command::Run {
            config,
            work_dir,
            force,
        } => {
            let loaded = PipelineConfig::load(&config, work_dir.as_deref())?;
            pipeline::run_pipeline(&loaded, force)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    run_with_args(std::env::args_os())
}
