//! The full pipeline over one work directory.
//!
//! Every artifact records the run digest. A stage whose artifacts all carry
//! the current digest is loaded instead of recomputed; an artifact with a
//! different digest stops the run unless it is forced.

use std::path::{Path, PathBuf};

use riskgraph_core::classify::EvaluationReport;
use riskgraph_core::kernels::KernelConfig;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::error::{Result, RunError};
use crate::figures;
use crate::io::artifact::{self, Meta};
use crate::io::csv_log;
use crate::stages::{self, LabelsFile, MODELS};

pub const REPORT: &str = "report";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub spgk: f64,
    pub nhgk: f64,
    pub lc: f64,
}

/// Outcome of a run: the three models side by side plus their evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub driver: String,
    pub scenes: usize,
    pub k: usize,
    pub level_count: u32,
    /// Scenes per risk level, index 0 being level 1.
    pub level_histogram: Vec<usize>,
    /// Overall cross-validated accuracy of each model.
    pub accuracy: Accuracies,
    pub evaluations: Vec<EvaluationReport>,
}

/// Artifact locations inside a work directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }
    pub fn frames(&self) -> PathBuf {
        self.dir.join("frames.jsonl")
    }
    pub fn scenes(&self) -> PathBuf {
        self.dir.join("scenes.jsonl")
    }
    pub fn labels(&self) -> PathBuf {
        self.dir.join("labels.json")
    }
    pub fn diag(&self) -> PathBuf {
        self.dir.join("diag.csv")
    }
    pub fn graphs(&self) -> PathBuf {
        self.dir.join("graphs.json")
    }
    pub fn gram(&self, model: &str) -> PathBuf {
        self.dir.join(format!("gram_{model}.bin"))
    }
    pub fn model(&self, model: &str) -> PathBuf {
        self.dir.join(format!("model_{model}.json"))
    }
    pub fn evaluation(&self, model: &str) -> PathBuf {
        self.dir.join(format!("report_{model}.json"))
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn figures(&self) -> PathBuf {
        self.dir.join("figures")
    }
}

struct Stager {
    digest: String,
    force: bool,
}

impl Stager {
    /// True when every path exists with the current digest. An artifact
    /// from another configuration is an error unless forced.
    fn fresh(&self, paths: &[PathBuf]) -> Result<bool> {
        let mut all = true;
        for p in paths {
            if !p.exists() {
                all = false;
                continue;
            }
            let found = stages::stored_digest(p).unwrap_or(None);
            if found.as_deref() != Some(self.digest.as_str()) {
                if !self.force {
                    return Err(RunError::Stale {
                        path: p.clone(),
                        expected: self.digest.clone(),
                        found: found.unwrap_or_else(|| "none".into()),
                    });
                }
                all = false;
            }
        }
        Ok(all)
    }
}

/// Digest identifying a run: the configuration and, for a recorded log,
/// the log's content.
pub fn run_digest(loaded: &LoadedConfig) -> Result<String> {
    let config = loaded.config.digest();
    if loaded.config.synth.is_some() {
        return Ok(config);
    }
    let input = artifact::file_digest(&loaded.log)?;
    Ok(artifact::sha256_hex(format!("{config}:{input}").as_bytes()))
}

pub fn kernel_config(loaded: &LoadedConfig, model: &str) -> Option<KernelConfig> {
    let k = &loaded.config.kernels;
    match model {
        "spgk" => Some(KernelConfig::Spgk {
            normalize: k.spgk.normalize,
        }),
        "nhgk" => Some(KernelConfig::Nhgk(k.nhgk.clone())),
        _ => None,
    }
}

/// Runs every stage in order, resuming from fresh artifacts.
pub fn run_pipeline(loaded: &LoadedConfig, force: bool) -> Result<RunReport> {
    let c = &loaded.config;
    let layout = Layout::new(&loaded.work_dir);
    std::fs::create_dir_all(&layout.dir).map_err(|e| RunError::io(&layout.dir, e))?;

    if let Some(synth) = &c.synth {
        // Only the synth table decides whether the generated log is current.
        let stager = Stager {
            digest: artifact::digest_of(synth),
            force,
        };
        if !stager.fresh(std::slice::from_ref(&loaded.log))? {
            log::info!("synth: generating {}", loaded.log.display());
            let records = synth
                .spec
                .generate(synth.seed)
                .map_err(|e| RunError::stage("synth", e))?;
            csv_log::save_log(
                &loaded.log,
                &records,
                Some(&format!("config_digest={}", stager.digest)),
            )?;
        }
    } else if !loaded.log.exists() {
        return Err(RunError::Config(format!(
            "`paths.log` {} does not exist",
            loaded.log.display()
        )));
    }

    let digest = run_digest(loaded)?;
    let stager = Stager {
        digest: digest.clone(),
        force,
    };

    let frames = if stager.fresh(&[layout.frames()])? {
        stages::load_frames(&layout.frames())?
    } else {
        let parsed = csv_log::read_log(&loaded.log, &loaded.schema()?)?;
        log::info!(
            "ingest: {} records, {} skipped",
            parsed.records.len(),
            parsed.skipped
        );
        let frames = stages::ingest(&parsed.records, c.ingest.smooth_span)?;
        stages::save_frames(&layout.frames(), &frames, &digest)?;
        frames
    };

    let scenes = if stager.fresh(&[layout.scenes()])? {
        stages::load_scenes(&layout.scenes(), Some(&c.extract))?
    } else {
        let scenes = stages::extract(&frames, &c.extract)?;
        log::info!("extract: {} scenes", scenes.len());
        stages::save_scenes(&layout.scenes(), &scenes, &digest)?;
        scenes
    };
    drop(frames);
    let refs = stages::refs_of(&scenes);

    let labels = if stager.fresh(&[layout.labels(), layout.diag()])? {
        stages::load_labels(&layout.labels())?
    } else {
        let labels = stages::label(&scenes, &c.labels)?;
        log::info!("label: k = {}, levels {:?}", labels.k, labels.histogram());
        stages::save_labels(&layout.labels(), &labels, &digest)?;
        stages::write_diag(&layout.diag(), &labels.table, &digest)?;
        labels
    };
    let levels = labels.levels_for(&refs, &layout.labels())?;

    let graphs = if stager.fresh(&[layout.graphs()])? {
        stages::load_graphs(&layout.graphs())?
    } else {
        let graphs = stages::graphs(&scenes, &c.grid)?;
        stages::save_graphs(&layout.graphs(), &graphs, &c.grid, &digest)?;
        graphs
    };

    let mut evaluations = Vec::new();
    for model in MODELS {
        let gram_path = layout.gram(model);
        let gram = if stager.fresh(std::slice::from_ref(&gram_path))? {
            let (gram, gram_refs) = stages::load_gram(&gram_path)?;
            if gram_refs != refs {
                return Err(RunError::data(&gram_path, "rows do not match the scenes"));
            }
            gram
        } else {
            let gram = match kernel_config(loaded, model) {
                Some(config) => stages::graph_gram(&graphs, &config)?,
                None => stages::vector_gram(&scenes)?,
            };
            log::info!("gram: {model} {}x{}", gram.n(), gram.n());
            stages::save_gram(&gram_path, &gram, &refs, &digest)?;
            gram
        };
        let outputs = [layout.model(model), layout.evaluation(model)];
        let evaluation = if stager.fresh(&outputs)? {
            stages::load_model(&outputs[0])?;
            stages::load_evaluation(&outputs[1])?
        } else {
            let (trained, evaluation) =
                stages::train(model, &gram, &levels, &c.svm, c.cv.folds, c.cv.seed)?;
            log::info!("train: {model} accuracy {:.4}", evaluation.overall_accuracy);
            stages::save_model(&outputs[0], &trained, &refs, &digest)?;
            stages::save_evaluation(&outputs[1], &evaluation, &digest)?;
            evaluation
        };
        evaluations.push(evaluation);
    }

    stager.fresh(&[layout.report()])?;
    write_report(&layout, &c.driver, &labels, evaluations, &digest)
}

/// Assembles `report.json` and the figure data from labels and evaluations.
pub fn write_report(
    layout: &Layout,
    driver: &str,
    labels: &LabelsFile,
    evaluations: Vec<EvaluationReport>,
    digest: &str,
) -> Result<RunReport> {
    let accuracy_of = |name: &str| {
        evaluations
            .iter()
            .find(|e| e.model == name)
            .map(|e| e.overall_accuracy)
            .ok_or_else(|| RunError::stage("report", format!("no evaluation of model {name}")))
    };
    let report = RunReport {
        driver: driver.to_owned(),
        scenes: labels.scenes.len(),
        k: labels.k,
        level_count: labels.level_count,
        level_histogram: labels.histogram(),
        accuracy: Accuracies {
            spgk: accuracy_of("spgk")?,
            nhgk: accuracy_of("nhgk")?,
            lc: accuracy_of("lc")?,
        },
        evaluations,
    };
    for e in &report.evaluations {
        if e.confusion.total() as usize != report.scenes {
            return Err(RunError::stage(
                "report",
                format!("{} evaluated {} scenes", e.model, e.confusion.total()),
            ));
        }
    }
    artifact::write_json(
        &layout.report(),
        &Meta::new(REPORT, digest, report.scenes),
        &report,
    )?;
    figures::emit_figure_data(&layout.figures(), labels, &report.evaluations, digest)?;
    log::info!(
        "report: spgk {:.4}, nhgk {:.4}, lc {:.4}",
        report.accuracy.spgk,
        report.accuracy.nhgk,
        report.accuracy.lc
    );
    Ok(report)
}

/// Rebuilds the report from the artifacts of a finished run.
pub fn report_from_artifacts(loaded: &LoadedConfig, force: bool) -> Result<RunReport> {
    let layout = Layout::new(&loaded.work_dir);
    let digest = run_digest(loaded)?;
    let stager = Stager {
        digest: digest.clone(),
        force,
    };
    let mut inputs = vec![layout.labels()];
    inputs.extend(MODELS.iter().map(|m| layout.evaluation(m)));
    for p in &inputs {
        if !p.exists() {
            return Err(RunError::data(
                p,
                "missing artifact; run the pipeline first",
            ));
        }
    }
    stager.fresh(&inputs)?;
    let labels = stages::load_labels(&layout.labels())?;
    let evaluations = MODELS
        .iter()
        .map(|m| stages::load_evaluation(&layout.evaluation(m)))
        .collect::<Result<Vec<_>>>()?;
    write_report(
        &layout,
        &loaded.config.driver,
        &labels,
        evaluations,
        &digest,
    )
}
