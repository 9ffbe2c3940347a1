//! File-level commands behind the `pseudomask` binary.
//!
//! A [`PipelineConfig`] is read from TOML and then patched by command-line
//! flags. Path templates may contain `{scene}`, which is replaced by each scene
//! name in batch runs. Every file is written atomically and every command is a
//! pure function of its inputs, so reruns produce byte-identical outputs.
//!
//! Output layout under `paths.output_dir`:
//!
//! | file | written by |
//! |---|---|
//! | `<scene>.segs.txt`, `<scene>.segs.json` | oversegment |
//! | `<scene>.masks.json`, `export/<scene>.txt`, `export/pred_mask/*` | pseudomask |
//! | `<scene>.masks.json` (extended) | merge |
//! | `eval.json`, `eval.txt` | eval |
//! | `<scene>.colored.ply` | export |

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorClass, Result};
use crate::eval::{evaluate_scenes, format_table, EvalMode, EvalSummary, GroundTruthSet, SceneInput};
use crate::features::{
    aggregate_features, cosine_similarity, fuse_similarities, load_vertex_features, Aggregation, AffinityMatrix,
    FeatureMatrix, Modality,
};
use crate::freemask::{freemask_generate, FreeMaskParams};
use crate::io;
use crate::masks::{load_benchmark_export, PseudoMaskSet};
use crate::mesh::ply::{load_ply, save_ply, PlyFormat};
use crate::mesh::TriMesh;
use crate::ncut::{masked_ncut, NCutParams};
use crate::overseg::{oversegment, OversegParams, SegmentGraph};
use crate::selftrain::{merge_predictions, MergePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    #[default]
    Ncut,
    Freemask,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncut" => Ok(Generator::Ncut),
            "freemask" => Ok(Generator::Freemask),
            _ => Err(Error::param(format!("unknown generator '{s}' (ncut|freemask)"))),
        }
    }
}

/// Which feature fields feed the affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureModality {
    #[serde(rename = "3d")]
    Geometry,
    #[serde(rename = "2d")]
    Color,
    #[default]
    #[serde(rename = "fused")]
    Fused,
}

impl std::str::FromStr for FeatureModality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" => Ok(FeatureModality::Geometry),
            "2d" => Ok(FeatureModality::Color),
            "fused" => Ok(FeatureModality::Fused),
            _ => Err(Error::param(format!("unknown modality '{s}' (3d|2d|fused)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub mesh: Option<String>,
    pub features_2d: Option<String>,
    pub features_3d: Option<String>,
    pub gt: Option<String>,
    /// Candidate masks for `merge`, in the pseudo-mask JSON format.
    pub candidates: Option<String>,
    /// Benchmark export index read by `eval`; defaults to the pseudomask export.
    pub predictions: Option<String>,
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeSection {
    pub top_k: usize,
    pub min_novelty_iou: f64,
    pub level: crate::selftrain::IouLevel,
    /// Tag for accepted masks, `merged:<cycle>`.
    pub cycle: usize,
}

impl Default for MergeSection {
    fn default() -> Self {
        let p = MergePolicy::default();
        MergeSection {
            top_k: p.top_k,
            min_novelty_iou: p.min_novelty_iou,
            level: p.level,
            cycle: 1,
        }
    }
}

impl MergeSection {
    pub fn policy(&self) -> MergePolicy {
        MergePolicy {
            top_k: self.top_k,
            min_novelty_iou: self.min_novelty_iou,
            level: self.level,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub mode: EvalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: Generator,
    pub modality: FeatureModality,
    /// Weight of the 2D affinity when fusing.
    pub w2d: f64,
    pub aggregation: Aggregation,
    pub paths: Paths,
    pub overseg: OversegParams,
    pub ncut: NCutParams,
    pub freemask: FreeMaskParams,
    pub merge: MergeSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generator: Generator::Ncut,
            modality: FeatureModality::Fused,
            w2d: 0.5,
            aggregation: Aggregation::Mean,
            paths: Paths::default(),
            overseg: OversegParams::default(),
            ncut: NCutParams::default(),
            freemask: FreeMaskParams::default(),
            merge: MergeSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&io::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.overseg.validate()?;
        self.ncut.validate()?;
        self.freemask.validate()?;
        self.merge.policy().validate()?;
        if !(0.0..=1.0).contains(&self.w2d) {
            return Err(Error::param(format!("w2d must lie in [0,1], got {}", self.w2d)));
        }
        Ok(())
    }

    fn template(&self, value: &Option<String>, key: &str, scene: &str) -> Result<PathBuf> {
        value
            .as_deref()
            .map(|t| PathBuf::from(t.replace("{scene}", scene)))
            .ok_or_else(|| Error::Config(format!("paths.{key} is not set")))
    }

    pub fn output_dir(&self, scene: &str) -> Result<PathBuf> {
        self.template(&self.paths.output_dir, "output_dir", scene)
    }

    pub fn segment_paths(&self, scene: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = self.output_dir(scene)?;
        Ok((dir.join(format!("{scene}.segs.txt")), dir.join(format!("{scene}.segs.json"))))
    }

    pub fn masks_path(&self, scene: &str) -> Result<PathBuf> {
        Ok(self.output_dir(scene)?.join(format!("{scene}.masks.json")))
    }

    pub fn export_dir(&self, scene: &str) -> Result<PathBuf> {
        Ok(self.output_dir(scene)?.join("export"))
    }

    pub fn predictions_path(&self, scene: &str) -> Result<PathBuf> {
        match &self.paths.predictions {
            Some(_) => self.template(&self.paths.predictions, "predictions", scene),
            None => Ok(self.export_dir(scene)?.join(format!("{scene}.txt"))),
        }
    }

    pub fn colored_path(&self, scene: &str) -> Result<PathBuf> {
        Ok(self.output_dir(scene)?.join(format!("{scene}.colored.ply")))
    }

    /// Parameters recorded in the pseudo-mask JSON.
    fn generation_params(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "generator": self.generator,
            "modality": self.modality,
            "aggregation": self.aggregation,
            "overseg": self.overseg,
        });
        if self.modality == FeatureModality::Fused {
            v["w2d"] = serde_json::json!(self.w2d);
        }
        match self.generator {
            Generator::Ncut => v["ncut"] = serde_json::json!(self.ncut),
            Generator::Freemask => v["freemask"] = serde_json::json!(self.freemask),
        }
        v
    }
}

fn load_mesh(path: &Path) -> Result<TriMesh> {
    load_ply(path).map_err(|e| e.with_path(path))
}

pub fn cmd_oversegment(cfg: &PipelineConfig, scene: &str) -> Result<SegmentGraph> {
    let mesh_path = cfg.template(&cfg.paths.mesh, "mesh", scene)?;
    let mesh = load_mesh(&mesh_path)?;
    let seg = oversegment(&mesh, &cfg.overseg).map_err(|e| e.with_path(&mesh_path))?;
    let (labels, sidecar) = cfg.segment_paths(scene)?;
    seg.save(&labels, &sidecar, &cfg.overseg)?;
    info!("{scene}: {} vertices -> {} segments", seg.num_vertices(), seg.num_segments());
    Ok(seg)
}

fn load_segments(cfg: &PipelineConfig, scene: &str) -> Result<SegmentGraph> {
    let (labels, sidecar) = cfg.segment_paths(scene)?;
    SegmentGraph::load(labels, sidecar)
}

fn segment_features(cfg: &PipelineConfig, key: &str, scene: &str, seg: &SegmentGraph) -> Result<FeatureMatrix> {
    let (value, modality) = match key {
        "features_2d" => (&cfg.paths.features_2d, Modality::Color2d),
        _ => (&cfg.paths.features_3d, Modality::Geometry3d),
    };
    let path = cfg.template(value, key, scene)?;
    let vf = load_vertex_features(&path, modality)?;
    aggregate_features(&vf, seg, cfg.aggregation).map_err(|e| e.with_path(&path))
}

/// The raw cosine affinity for the configured modality.
pub fn scene_affinity(cfg: &PipelineConfig, scene: &str, seg: &SegmentGraph) -> Result<AffinityMatrix> {
    match cfg.modality {
        FeatureModality::Geometry => Ok(cosine_similarity(&segment_features(cfg, "features_3d", scene, seg)?)),
        FeatureModality::Color => Ok(cosine_similarity(&segment_features(cfg, "features_2d", scene, seg)?)),
        FeatureModality::Fused => {
            let a3 = cosine_similarity(&segment_features(cfg, "features_3d", scene, seg)?);
            let a2 = cosine_similarity(&segment_features(cfg, "features_2d", scene, seg)?);
            fuse_similarities(&a2, &a3, cfg.w2d)
        }
    }
}

pub fn cmd_pseudomask(cfg: &PipelineConfig, scene: &str) -> Result<PseudoMaskSet> {
    let seg = load_segments(cfg, scene)?;
    let set = match cfg.generator {
        Generator::Ncut => masked_ncut(&scene_affinity(cfg, scene, &seg)?, &seg, &cfg.ncut)?,
        Generator::Freemask => {
            // proposals seed in a single feature space; fused runs use the 3D field
            let key = match cfg.modality {
                FeatureModality::Color => "features_2d",
                _ => "features_3d",
            };
            freemask_generate(&segment_features(cfg, key, scene, &seg)?, &seg, &cfg.freemask)?
        }
    };
    set.save_json(cfg.masks_path(scene)?, cfg.generation_params())?;
    set.export_benchmark(cfg.export_dir(scene)?, scene, seg.num_vertices())?;
    info!("{scene}: {} instances", set.len());
    Ok(set)
}

pub fn cmd_merge(cfg: &PipelineConfig, scene: &str) -> Result<PseudoMaskSet> {
    let seg = load_segments(cfg, scene)?;
    let masks_path = cfg.masks_path(scene)?;
    let doc = crate::masks::MaskDocument::load(&masks_path)?;
    let existing = PseudoMaskSet::from_document(&doc, &seg).map_err(|e| e.with_path(&masks_path))?;
    let cand_path = cfg.template(&cfg.paths.candidates, "candidates", scene)?;
    let candidates = PseudoMaskSet::load_json(&cand_path, &seg)?;
    let merged = merge_predictions(&existing, &candidates.masks, &cfg.merge.policy(), cfg.merge.cycle)?;
    info!(
        "{scene}: {} existing + {} accepted of {} candidates",
        existing.len(),
        merged.len() - existing.len(),
        candidates.len()
    );
    merged.save_json(&masks_path, doc.params)?;
    Ok(merged)
}

/// Evaluates every scene's benchmark export against its ground truth and
/// writes `eval.json` and `eval.txt` into the output directory of the first
/// scene.
pub fn cmd_eval(cfg: &PipelineConfig, scenes: &[String], jobs: usize) -> Result<EvalSummary> {
    let first = scenes.first().ok_or_else(|| Error::param("no scenes to evaluate"))?;
    let loaded = with_pool(jobs, || {
        use rayon::prelude::*;
        scenes
            .par_iter()
            .map(|scene| -> Result<_> {
                let gt_path = cfg.template(&cfg.paths.gt, "gt", scene)?;
                let gt = GroundTruthSet::load(&gt_path)?;
                let preds = load_benchmark_export(cfg.predictions_path(scene)?, gt.num_vertices())?;
                Ok((preds, gt))
            })
            .collect::<Vec<_>>()
    })?;
    let mut inputs = Vec::new();
    let mut failures = Vec::new();
    for (scene, r) in scenes.iter().zip(&loaded) {
        match r {
            Ok((preds, gt)) => inputs.push(SceneInput {
                name: scene,
                preds,
                gt,
            }),
            Err(e) => failures.push(format!("{scene}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::InvalidData(failures.join("; ")));
    }
    let summary = evaluate_scenes(&inputs, cfg.eval.mode)?;
    let dir = cfg.output_dir(first)?;
    let json = serde_json::to_string_pretty(&summary).expect("report serializes");
    io::write_atomic(dir.join("eval.json"), json.as_bytes())?;
    io::write_atomic(dir.join("eval.txt"), format_table(&summary).as_bytes())?;
    info!(
        "AP@25 {:.4}  AP@50 {:.4}  AP {:.4} over {} scenes",
        summary.ap25,
        summary.ap50,
        summary.ap_mean,
        scenes.len()
    );
    Ok(summary)
}

/// Gray used for vertices outside every mask.
pub const UNASSIGNED_RGB: [u8; 3] = [128, 128, 128];

/// 64 distinct saturated colours spread by the golden angle in hue, with
/// alternating value bands.
pub fn palette() -> [[u8; 3]; 64] {
    let mut out = [[0u8; 3]; 64];
    for (i, slot) in out.iter_mut().enumerate() {
        let h = (i as f64 * 137.507_764_050_037_85).rem_euclid(360.0) / 60.0;
        let s = if i % 2 == 0 { 0.85 } else { 0.6 };
        let v = [1.0, 0.8, 0.62, 0.9][i % 4];
        let c = v * s;
        let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
        let (r, g, b) = match h as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        *slot = [r, g, b].map(|u| ((u + m) * 255.0).round() as u8);
    }
    out
}

/// Copy of `mesh` coloured by mask membership. A vertex in several masks
/// takes the colour of the first.
pub fn colorize(mesh: &TriMesh, set: &PseudoMaskSet) -> Result<TriMesh> {
    let pal = palette();
    let to_unit = |c: [u8; 3]| c.map(|x| x as f64 / 255.0);
    let mut colors = vec![to_unit(UNASSIGNED_RGB); mesh.vertex_count()];
    let mut assigned = vec![false; mesh.vertex_count()];
    for (i, m) in set.iter().enumerate() {
        for &v in &m.vertex_ids {
            if v >= colors.len() {
                return Err(Error::DimensionMismatch(format!(
                    "mask {i} covers vertex {v} but the mesh has {}",
                    colors.len()
                )));
            }
            if !assigned[v] {
                assigned[v] = true;
                colors[v] = to_unit(pal[i % pal.len()]);
            }
        }
    }
    mesh.clone().with_colors(colors)
}

pub fn cmd_export_colored(cfg: &PipelineConfig, scene: &str) -> Result<PathBuf> {
    let mesh_path = cfg.template(&cfg.paths.mesh, "mesh", scene)?;
    let mesh = load_mesh(&mesh_path)?;
    let seg = load_segments(cfg, scene)?;
    if seg.num_vertices() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} segment labels for {} mesh vertices",
            seg.num_vertices(),
            mesh.vertex_count()
        ))
        .with_path(&mesh_path));
    }
    let set = PseudoMaskSet::load_json(cfg.masks_path(scene)?, &seg)?;
    let colored = colorize(&mesh, &set)?;
    let out = cfg.colored_path(scene)?;
    save_ply(&out, &colored, PlyFormat::BinaryLittleEndian)?;
    Ok(out)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug)]
pub struct BatchReport {
    pub succeeded: Vec<String>,
    pub failed: Vec<(String, Error)>,
}

impl BatchReport {
    /// Exit code for the batch: 0 when every scene succeeded, otherwise 1 if
    /// any failure was a usage error and 2 for data errors only.
    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            0
        } else if self.failed.iter().any(|(_, e)| e.class() == ErrorClass::Usage) {
            1
        } else {
            2
        }
    }
}

/// Runs `f` on every scene in a pool of `jobs` workers (0 = all cores),
/// collecting failures instead of stopping at the first.
pub fn run_batch<T, F>(scenes: &[String], jobs: usize, f: F) -> Result<BatchReport>
where
    F: Fn(&str) -> Result<T> + Sync,
    T: Send,
{
    use rayon::prelude::*;
    let results = with_pool(jobs, || scenes.par_iter().map(|s| f(s)).collect::<Vec<_>>())?;
    let mut report = BatchReport {
        succeeded: Vec::new(),
        failed: Vec::new(),
    };
    for (scene, r) in scenes.iter().zip(results) {
        match r {
            Ok(_) => report.succeeded.push(scene.clone()),
            Err(e) => {
                warn!("{scene}: {e}");
                report.failed.push((scene.clone(), e));
            }
        }
    }
    Ok(report)
}

/// Scene names from a list file: one per line, `#` comments and blank lines
/// skipped.
pub fn read_scene_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = io::read_to_string(&path)?;
    let scenes: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if scenes.is_empty() {
        return Err(Error::format(path.as_ref(), "scene list is empty"));
    }
    Ok(scenes)
}
