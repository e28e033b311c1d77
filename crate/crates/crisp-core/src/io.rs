//! File formats: point-cloud CSV, scene directories, correction-result
//! JSON, and the CSV report rows. Parsers validate everything because the
//! inputs may be untrusted; they are also the fuzzing entry points.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corrector::CorrectionResult;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::sdf::Point3;
use crate::shape::{BasisManifest, BlendKind, Decoder, LatentCode, ShapeBasis};
use crate::sim::{Frame, SceneConfig};

/// Hard cap on parsed point-cloud rows; a plain-text format needs a bound
/// before untrusted input dictates allocations.
const MAX_CSV_POINTS: usize = 10_000_000;

/// Serialize a cloud as CSV with the fixed `x,y,z` header.
pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(16 + cloud.len() * 24);
    out.push_str("x,y,z\n");
    for p in cloud.iter() {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    out
}

/// Parse point-cloud CSV: a `x,y,z` header, then one finite triple per
/// line. Blank trailing lines are tolerated; anything else is an error.
pub fn cloud_from_csv(bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::format("csv is not utf-8"))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == "x,y,z" => {}
        _ => return Err(Error::format("missing x,y,z header")),
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if points.len() >= MAX_CSV_POINTS {
            return Err(Error::format("point cloud exceeds row limit"));
        }
        let mut fields = line.split(',');
        let mut coords = [0.0f64; 3];
        for c in &mut coords {
            let field = fields
                .next()
                .ok_or_else(|| Error::format(format!("row {}: expected 3 fields", i + 2)))?;
            *c = field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::format(format!("row {}: bad number {field:?}", i + 2)))?;
            if !c.is_finite() {
                return Err(Error::format(format!("row {}: non-finite coordinate", i + 2)));
            }
        }
        if fields.next().is_some() {
            return Err(Error::format(format!("row {}: expected 3 fields", i + 2)));
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(PointCloud::new(points))
}

/// Decoder choice as stored in scene files and experiment configs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderKindConfig {
    #[default]
    Linear,
    Kernel { tau: f64 },
}

impl DecoderKindConfig {
    pub fn validate(&self) -> Result<()> {
        if let DecoderKindConfig::Kernel { tau } = self {
            if !(tau.is_finite() && *tau > 0.0) {
                return Err(Error::invalid("kernel temperature must be positive"));
            }
        }
        Ok(())
    }

    pub fn build(&self, basis: Arc<ShapeBasis>) -> Decoder {
        match self {
            DecoderKindConfig::Linear => Decoder::with_kind(basis, BlendKind::Linear),
            DecoderKindConfig::Kernel { tau } => Decoder::with_kind(basis, BlendKind::Kernel { tau: *tau }),
        }
    }
}

/// One view inside `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneViewMeta {
    pub view_id: u32,
    /// Row-major rotation then translation.
    pub gt_pose: [f64; 12],
    /// CSV file of the camera-frame depth cloud, relative to the scene dir.
    pub cloud_file: String,
    pub outlier_indices: Vec<usize>,
}

/// One object inside `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObjectMeta {
    pub object_id: u64,
    pub gt_alpha: Vec<f64>,
    pub views: Vec<SceneViewMeta>,
}

/// The `scene.json` document: generation config, shape basis, decoder
/// choice, and exact ground truth per object and view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub config: SceneConfig,
    pub basis: BasisManifest,
    pub decoder: DecoderKindConfig,
    pub objects: Vec<SceneObjectMeta>,
}

impl SceneDocument {
    /// Structural validation of a parsed document (before touching any
    /// cloud file): simplex-dimension agreement, finite poses, sane ids.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.decoder.validate()?;
        let k = self.basis.shapes.len();
        if self.basis.diameters.len() != k || k == 0 {
            return Err(Error::format("basis must pair every shape with a diameter"));
        }
        for obj in &self.objects {
            if obj.gt_alpha.len() != k {
                return Err(Error::format("object code dimension must match basis"));
            }
            let code = LatentCode::from_slice(&obj.gt_alpha);
            if !code.alpha.iter().all(|a| a.is_finite()) || !code.is_simplex() {
                return Err(Error::format("object code must be a simplex point"));
            }
            if obj.views.is_empty() {
                return Err(Error::format("object must have at least one view"));
            }
            for view in &obj.views {
                Pose::from_flat(&view.gt_pose)?;
                if view.cloud_file.is_empty()
                    || view.cloud_file.contains("..")
                    || view.cloud_file.contains('/')
                    || view.cloud_file.contains('\\')
                {
                    return Err(Error::format("cloud files must be plain names in the scene dir"));
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate `scene.json` bytes.
pub fn parse_scene_document(bytes: &[u8]) -> Result<SceneDocument> {
    let doc: SceneDocument = serde_json::from_slice(bytes)?;
    doc.validate()?;
    Ok(doc)
}

/// Write a generated scene to `dir`: `scene.json` plus one cloud CSV per
/// view, named `cloud_<object>_<view>.csv`.
pub fn write_scene_dir(
    dir: &Path,
    config: &SceneConfig,
    basis: &ShapeBasis,
    decoder_kind: DecoderKindConfig,
    frames: &[Frame],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut objects: Vec<SceneObjectMeta> = Vec::new();
    for frame in frames {
        let cloud_file = format!("cloud_{}_{}.csv", frame.object_id, frame.view_id);
        std::fs::write(dir.join(&cloud_file), cloud_to_csv(&frame.x))?;
        let view = SceneViewMeta {
            view_id: frame.view_id,
            gt_pose: frame.gt_pose.to_flat(),
            cloud_file,
            outlier_indices: frame.outlier_indices.clone(),
        };
        match objects.iter_mut().find(|o| o.object_id == frame.object_id) {
            Some(obj) => obj.views.push(view),
            None => objects.push(SceneObjectMeta {
                object_id: frame.object_id,
                gt_alpha: frame.gt_alpha.alpha.iter().cloned().collect(),
                views: vec![view],
            }),
        }
    }
    let doc = SceneDocument {
        config: config.clone(),
        basis: BasisManifest::from_basis(basis),
        decoder: decoder_kind,
        objects,
    };
    std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// A scene loaded back from disk, with the ground-truth relation
/// `gt_z = R x + t` reconstructed exactly from the stored pose and cloud.
pub struct LoadedScene {
    pub document: SceneDocument,
    pub basis: Arc<ShapeBasis>,
    pub decoder: Decoder,
    pub frames: Vec<Frame>,
}

/// Load a scene directory written by [`write_scene_dir`].
pub fn load_scene_dir(dir: &Path) -> Result<LoadedScene> {
    let bytes = std::fs::read(dir.join("scene.json"))?;
    let document = parse_scene_document(&bytes)?;
    let basis = document.basis.clone().into_basis()?;
    let decoder = document.decoder.build(basis.clone());

    let mut frames = Vec::new();
    for obj in &document.objects {
        let gt_alpha = LatentCode::from_slice(&obj.gt_alpha);
        for view in &obj.views {
            let csv = std::fs::read(dir.join(&view.cloud_file))?;
            let x = cloud_from_csv(&csv)?;
            if x.len() < 3 {
                return Err(Error::format("view cloud needs at least 3 points"));
            }
            for &i in &view.outlier_indices {
                if i >= x.len() {
                    return Err(Error::format("outlier index out of range"));
                }
            }
            let gt_pose = Pose::from_flat(&view.gt_pose)?;
            let gt_z = x.transformed(&gt_pose);
            frames.push(Frame {
                object_id: obj.object_id,
                view_id: view.view_id,
                x,
                gt_pose,
                gt_alpha: gt_alpha.clone(),
                gt_z,
                outlier_indices: view.outlier_indices.clone(),
            });
        }
    }
    Ok(LoadedScene { document, basis, decoder, frames })
}

/// Correction result on the wire: the pose as 12 numbers (row-major
/// rotation then translation), the code vector, the objective trace, and
/// the certificate flag.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorrectionResultJson {
    pub pose: [f64; 12],
    pub code: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub certified: bool,
}

impl CorrectionResultJson {
    pub fn from_result(result: &CorrectionResult) -> Self {
        CorrectionResultJson {
            pose: result.pose.to_flat(),
            code: result.code.code().alpha.iter().cloned().collect(),
            objective_trace: result.objective_trace.clone(),
            certified: result.certified.unwrap_or(false),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Parse and validate a correction-result JSON document.
pub fn parse_result_json(bytes: &[u8]) -> Result<CorrectionResultJson> {
    let parsed: CorrectionResultJson = serde_json::from_slice(bytes)?;
    Pose::from_flat(&parsed.pose)?;
    if parsed.code.is_empty() || !parsed.code.iter().all(|v| v.is_finite()) {
        return Err(Error::format("code vector must be nonempty and finite"));
    }
    if !parsed.objective_trace.iter().all(|v| v.is_finite()) {
        return Err(Error::format("objective trace must be finite"));
    }
    Ok(parsed)
}

/// One `results.csv` row for the correction command.
pub fn results_csv_header() -> &'static str {
    "object_id,adds_initial,adds,chamfer_l1,chamfer_l2,code_error,rotation_error_deg,translation_error,certified,wall_time_ms"
}

/// One `epoch_stats.csv` row for the self-training command.
pub fn epoch_csv_header() -> &'static str {
    "epoch,certified_fraction,mean_loss_code,mean_loss_coords,bias_norm"
}

/// One degeneracy-sweep row per cumulative keyframe count.
pub fn degeneracy_csv_header() -> &'static str {
    "n_frames,lambda_min,condition"
}
