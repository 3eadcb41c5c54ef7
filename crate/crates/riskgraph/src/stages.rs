//! Pipeline stages: the computation of each stage and the artifact it
//! persists. Loaders re-check the invariants of what they read, so
//! hand-edited intermediates are caught before they reach a later stage.

use std::collections::HashMap;
use std::path::Path;

use riskgraph_core::classify::{self, EvaluationReport, SvmParams, TrainedModel};
use riskgraph_core::graphs::{build_graph, GridSpec, SceneGraph};
use riskgraph_core::ingest::{self, Channel, DriverLogRecord};
use riskgraph_core::kernels::{self, KernelConfig, KernelMatrix};
use riskgraph_core::labels::{self, FeatureSet, KScore, LabelParams, OpFeature};
use riskgraph_core::linalg::Matrix;
use riskgraph_core::scenes::{self, ExtractParams, Scene};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};
use crate::io::artifact::{self, Meta};
use crate::io::gram;

pub const FRAMES: &str = "frames";
pub const SCENES: &str = "scenes";
pub const LABELS: &str = "labels";
pub const GRAPHS: &str = "graphs";
pub const MODEL: &str = "model";
pub const EVALUATION: &str = "evaluation";

/// Kernels compared by the pipeline, in report order.
pub const MODELS: [&str; 3] = ["spgk", "nhgk", "lc"];

/// Smooths every channel of every log.
pub fn ingest(records: &[DriverLogRecord], span: usize) -> Result<Vec<DriverLogRecord>> {
    ingest::smooth_log(records, span, &Channel::ALL).map_err(|e| RunError::stage("ingest", e))
}

pub fn save_frames(path: &Path, records: &[DriverLogRecord], digest: &str) -> Result<()> {
    artifact::write_jsonl(path, FRAMES, digest, records)
}

pub fn load_frames(path: &Path) -> Result<Vec<DriverLogRecord>> {
    let (meta, records) = artifact::read_jsonl(path)?;
    artifact::expect_kind(path, meta.as_ref(), FRAMES)?;
    ingest::validate_log(&records).map_err(|e| RunError::data(path, e))?;
    Ok(records)
}

pub fn extract(records: &[DriverLogRecord], params: &ExtractParams) -> Result<Vec<Scene>> {
    let scenes =
        scenes::scenes_from_records(records, params).map_err(|e| RunError::stage("extract", e))?;
    if scenes.is_empty() {
        return Err(RunError::stage("extract", "no interactive scene found"));
    }
    Ok(scenes)
}

pub fn save_scenes(path: &Path, scenes: &[Scene], digest: &str) -> Result<()> {
    artifact::write_jsonl(path, SCENES, digest, scenes)
}

/// Loads scenes; with `params` every scene must also meet the extraction
/// criteria they describe.
pub fn load_scenes(path: &Path, params: Option<&ExtractParams>) -> Result<Vec<Scene>> {
    let (meta, scenes): (_, Vec<Scene>) = artifact::read_jsonl(path)?;
    artifact::expect_kind(path, meta.as_ref(), SCENES)?;
    let mut seen = std::collections::HashSet::new();
    for s in &scenes {
        let ok = s.anchor < s.frames.len() && s.response_ax.is_finite();
        if !ok || params.is_some_and(|p| !s.satisfies_criteria(p)) {
            return Err(RunError::data(
                path,
                format!("scene {} violates the extraction criteria", s.scene_ref),
            ));
        }
        if !seen.insert(s.scene_ref.as_str()) {
            return Err(RunError::data(
                path,
                format!("duplicate scene {}", s.scene_ref),
            ));
        }
    }
    Ok(scenes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLabel {
    pub scene_ref: String,
    pub level: u32,
    pub response_ax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub feature: FeatureSet,
    pub k: usize,
    pub level_count: u32,
    pub rss: f64,
    pub silhouette: Option<f64>,
    pub cluster_levels: Vec<u32>,
    pub cluster_mean_ax: Vec<f64>,
    /// RSS and silhouette per candidate k (only the chosen k when fixed).
    pub table: Vec<KScore>,
    pub scenes: Vec<SceneLabel>,
}

impl LabelsFile {
    pub fn levels(&self) -> Vec<u32> {
        self.scenes.iter().map(|s| s.level).collect()
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.level_count as usize];
        for s in &self.scenes {
            h[s.level as usize - 1] += 1;
        }
        h
    }

    fn check(&self, path: &Path) -> Result<()> {
        if self.level_count as usize != self.k + 1 || self.cluster_levels.len() != self.k {
            return Err(RunError::data(
                path,
                "level count must be the cluster count plus one",
            ));
        }
        for s in &self.scenes {
            let braking = s.response_ax < 0.0;
            let ok =
                (1..=self.level_count).contains(&s.level) && braking == (s.level <= self.k as u32);
            if !ok {
                return Err(RunError::data(
                    path,
                    format!("scene {} has an inconsistent level", s.scene_ref),
                ));
            }
        }
        Ok(())
    }

    /// Levels in the order of `refs`.
    pub fn levels_for(&self, refs: &[String], path: &Path) -> Result<Vec<u32>> {
        let by_ref: HashMap<&str, u32> = self
            .scenes
            .iter()
            .map(|s| (s.scene_ref.as_str(), s.level))
            .collect();
        refs.iter()
            .map(|r| {
                by_ref
                    .get(r.as_str())
                    .copied()
                    .ok_or_else(|| RunError::data(path, format!("no label for scene {r}")))
            })
            .collect()
    }
}

pub fn label(scenes: &[Scene], params: &LabelParams) -> Result<LabelsFile> {
    let responses: Vec<OpFeature> = scenes.iter().map(|s| s.response).collect();
    let out =
        labels::generate_labels(&responses, params).map_err(|e| RunError::stage("label", e))?;
    let table = if out.table.is_empty() {
        vec![KScore {
            k: out.clustering.k,
            rss: out.clustering.rss,
            silhouette: out.clustering.silhouette.unwrap_or(0.0),
        }]
    } else {
        out.table.clone()
    };
    Ok(LabelsFile {
        feature: params.feature,
        k: out.clustering.k,
        level_count: out.labels.level_count,
        rss: out.clustering.rss,
        silhouette: out.clustering.silhouette,
        cluster_levels: out.labels.cluster_levels.clone(),
        cluster_mean_ax: out.labels.cluster_mean_ax.clone(),
        table,
        scenes: scenes
            .iter()
            .zip(&out.labels.levels)
            .map(|(s, &level)| SceneLabel {
                scene_ref: s.scene_ref.clone(),
                level,
                response_ax: s.response_ax,
            })
            .collect(),
    })
}

pub fn save_labels(path: &Path, labels: &LabelsFile, digest: &str) -> Result<()> {
    artifact::write_json(
        path,
        &Meta::new(LABELS, digest, labels.scenes.len()),
        labels,
    )
}

pub fn load_labels(path: &Path) -> Result<LabelsFile> {
    let (meta, labels): (_, LabelsFile) = artifact::read_json(path)?;
    artifact::expect_kind(path, meta.as_ref(), LABELS)?;
    labels.check(path)?;
    Ok(labels)
}

/// Per-k diagnostics: `k,rss,silhouette`.
pub fn write_diag(path: &Path, table: &[KScore], digest: &str) -> Result<()> {
    let rows = table
        .iter()
        .map(|s| vec![s.k.to_string(), s.rss.to_string(), s.silhouette.to_string()]);
    write_csv(path, digest, &["k", "rss", "silhouette"], rows)
}

pub fn graphs(scenes: &[Scene], grid: &GridSpec) -> Result<Vec<SceneGraph>> {
    grid.validate().map_err(|e| RunError::stage("graphs", e))?;
    Ok(scenes
        .iter()
        .map(|s| build_graph(&s.scene_ref, s.anchor_frame(), grid))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct GraphsFile {
    grid: GridSpec,
    graphs: Vec<SceneGraph>,
}

pub fn save_graphs(
    path: &Path,
    graphs: &[SceneGraph],
    grid: &GridSpec,
    digest: &str,
) -> Result<()> {
    let body = GraphsFile {
        grid: grid.clone(),
        graphs: graphs.to_vec(),
    };
    artifact::write_json(path, &Meta::new(GRAPHS, digest, graphs.len()), &body)
}

pub fn load_graphs(path: &Path) -> Result<Vec<SceneGraph>> {
    let (meta, body): (_, GraphsFile) = artifact::read_json(path)?;
    artifact::expect_kind(path, meta.as_ref(), GRAPHS)?;
    for g in &body.graphs {
        g.validate(&body.grid)
            .map_err(|e| RunError::data(path, e))?;
    }
    Ok(body.graphs)
}

pub fn graph_gram(graphs: &[SceneGraph], config: &KernelConfig) -> Result<KernelMatrix> {
    kernels::gram_matrix(graphs, config).map_err(|e| RunError::stage("gram", e))
}

/// Linear kernel on range-normalised lane-change vehicle states.
pub fn vector_gram(scenes: &[Scene]) -> Result<KernelMatrix> {
    let rows = scenes
        .iter()
        .map(|s| scenes::vrm_feature(s).map(|f| f.to_array()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::stage("gram", e))?;
    let features = Matrix::from_rows(&rows).ok_or_else(|| RunError::stage("gram", "no scenes"))?;
    let (normalized, constant) =
        labels::normalize_features(&features).map_err(|e| RunError::stage("gram", e))?;
    if !constant.is_empty() {
        log::warn!("vector features {constant:?} are constant");
    }
    KernelMatrix::linear(&normalized).map_err(|e| RunError::stage("gram", e))
}

pub fn refs_of(scenes: &[Scene]) -> Vec<String> {
    scenes.iter().map(|s| s.scene_ref.clone()).collect()
}

pub fn save_gram(path: &Path, gram: &KernelMatrix, refs: &[String], digest: &str) -> Result<()> {
    gram::write_gram(path, gram, refs, digest)
}

/// Loads a Gram matrix and its row references.
pub fn load_gram(path: &Path) -> Result<(KernelMatrix, Vec<String>)> {
    let (header, matrix) = gram::read_gram(path)?;
    Ok((matrix, header.refs))
}

/// Cross-validated evaluation plus a model trained on every sample.
pub fn train(
    model: &str,
    gram: &KernelMatrix,
    levels: &[u32],
    params: &SvmParams,
    folds: usize,
    seed: u64,
) -> Result<(TrainedModel, EvaluationReport)> {
    let report = classify::cross_validate(model, gram, levels, folds, seed, params)
        .map_err(|e| RunError::stage("train", e))?;
    let trained =
        classify::train_svm(gram, levels, params).map_err(|e| RunError::stage("train", e))?;
    Ok((trained, report))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    refs: Vec<String>,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn save_model(path: &Path, model: &TrainedModel, refs: &[String], digest: &str) -> Result<()> {
    let body = ModelFile {
        refs: refs.to_vec(),
        model: model.clone(),
    };
    artifact::write_json(path, &Meta::new(MODEL, digest, model.models.len()), &body)
}

pub fn load_model(path: &Path) -> Result<(TrainedModel, Vec<String>)> {
    let (meta, body): (_, ModelFile) = artifact::read_json(path)?;
    artifact::expect_kind(path, meta.as_ref(), MODEL)?;
    if body.refs.len() != body.model.train_size {
        return Err(RunError::data(
            path,
            "reference count differs from the training size",
        ));
    }
    for m in &body.model.models {
        m.check(body.model.params.eps)
            .map_err(|e| RunError::data(path, e))?;
        if m.support.iter().any(|&s| s >= body.model.train_size) {
            return Err(RunError::data(
                path,
                "support index outside the training set",
            ));
        }
    }
    Ok((body.model, body.refs))
}

pub fn save_evaluation(path: &Path, report: &EvaluationReport, digest: &str) -> Result<()> {
    let n = report.confusion.total() as usize;
    artifact::write_json(path, &Meta::new(EVALUATION, digest, n), report)
}

pub fn load_evaluation(path: &Path) -> Result<EvaluationReport> {
    let (meta, report): (_, EvaluationReport) = artifact::read_json(path)?;
    artifact::expect_kind(path, meta.as_ref(), EVALUATION)?;
    let c = &report.confusion;
    let k = c.classes.len();
    let consistent = c.counts.len() == k
        && c.counts.iter().all(|r| r.len() == k)
        && report.fold_accuracies.len() == report.folds
        && report.fold_sizes.iter().map(|f| f.test as u64).sum::<u64>() == c.total();
    if !consistent {
        return Err(RunError::data(
            path,
            "confusion counts and fold sizes disagree",
        ));
    }
    Ok(report)
}

/// CSV with a leading `# config_digest=` comment.
pub fn write_csv<I>(path: &Path, digest: &str, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    use std::io::Write;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| RunError::io(path, e))?;
    writeln!(file, "# config_digest={digest}").map_err(|e| RunError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)
        .map_err(|e| RunError::data(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| RunError::data(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

/// Digest recorded in any artifact kind, or `None` when it carries none.
pub fn stored_digest(path: &Path) -> Result<Option<String>> {
    use std::io::BufRead;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "bin" => Ok(Some(gram::read_header(path)?.config_digest)),
        "json" => {
            let (meta, _): (_, serde_json::Value) = artifact::read_json(path)?;
            Ok(meta.map(|m| m.config_digest))
        }
        _ => {
            let file = std::fs::File::open(path).map_err(|e| RunError::io(path, e))?;
            let mut first = String::new();
            std::io::BufReader::new(file)
                .read_line(&mut first)
                .map_err(|e| RunError::io(path, e))?;
            let first = first.trim_end();
            if let Some(rest) = first.strip_prefix("# ") {
                return Ok(rest.strip_prefix("config_digest=").map(str::to_owned));
            }
            #[derive(Deserialize)]
            struct MetaLine {
                meta: Meta,
            }
            Ok(serde_json::from_str::<MetaLine>(first)
                .ok()
                .map(|m| m.meta.config_digest))
        }
    }
}
