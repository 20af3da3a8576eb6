//! Operations shared by the command line and the HTTP server.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use keydeform::checkpoint::Checkpoint;
use keydeform::deformer::{KeypointSet, PreparedShape};
use keydeform::eval::{
    alignment_benchmark, fit_keypoint_regressor, part_correlation, pck_curve, AnnotationSet, KeypointAnnotation,
    PartLabels, ShapeAnnotation,
};
use keydeform::geom::{
    generate_synthetic_family, load_obj, sample_surface_faces, write_obj, Family, Mesh,
};
use keydeform::pipeline::{round_points, EditableShape, PipelineOptions};
use keydeform::prior::{fit_pca, sample_prior, PcaPrior};
use keydeform::{Error, Rng};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// A failed command: exit code 1 for bad input, 2 for a failure while
/// doing the work.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Tag a library result with the exit code its failure deserves.
pub trait Classify<T> {
    fn or_invalid(self) -> Outcome<T>;
    fn or_runtime(self) -> Outcome<T>;
}

impl<T, E: fmt::Display> Classify<T> for std::result::Result<T, E> {
    fn or_invalid(self) -> Outcome<T> {
        self.map_err(Failure::invalid)
    }

    fn or_runtime(self) -> Outcome<T> {
        self.map_err(Failure::runtime)
    }
}

/// Checkpoint plus the inference options it was trained with.
#[derive(Debug, Clone)]
pub struct Model {
    pub checkpoint: Checkpoint,
    pub options: PipelineOptions,
}

impl Model {
    pub fn new(checkpoint: Checkpoint) -> Self {
        let points = checkpoint.header.hyperparameters.get("points").and_then(|v| v.as_u64()).unwrap_or(1024);
        let options = PipelineOptions {
            points: points as usize,
            ..PipelineOptions::default()
        };
        Self { checkpoint, options }
    }

    pub fn load(path: &Path) -> Outcome<Self> {
        Ok(Self::new(Checkpoint::load(path).or_invalid()?))
    }

    pub fn num_keypoints(&self) -> usize {
        self.checkpoint.model.num_keypoints()
    }

    pub fn checksum(&self) -> &str {
        &self.checkpoint.header.checksum
    }

    pub fn prepare(&self, mesh: &Mesh) -> keydeform::Result<EditableShape> {
        EditableShape::new(&self.checkpoint.model, mesh, &self.options)
    }
}

/// The first instance of a synthetic family under a fixed seed.
pub fn builtin_mesh(name: &str) -> keydeform::Result<Mesh> {
    let family = Family::from_str(name)?;
    Ok(generate_synthetic_family(family, 1, &mut Rng::new(0)).remove(0).mesh)
}

/// Keypoint files hold a bare `[[x, y, z], ...]` array or an object with a
/// `keypoints` field holding one.
pub fn parse_keypoints(text: &str) -> Outcome<KeypointSet> {
    let value: serde_json::Value = serde_json::from_str(text).or_invalid()?;
    let array = match value.get("keypoints") {
        Some(k) => k.clone(),
        None => value,
    };
    let set: KeypointSet = serde_json::from_value(array).or_invalid()?;
    KeypointSet::new(set.points).or_invalid()
}

pub fn read_keypoints(path: &Path) -> Outcome<KeypointSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::invalid(Error::io(path, e)))?;
    parse_keypoints(&text)
}

pub fn keypoints_json(set: &KeypointSet) -> String {
    serde_json::to_string(&json!({ "keypoints": round_points(&set.points) })).expect("keypoints serialize")
}

pub fn write_text(path: &Path, text: &str) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(Error::io(dir, e)))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::runtime(Error::io(path, e)))
}

/// `.obj` files of a directory in name order.
pub fn obj_files(dir: &Path) -> Outcome<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::invalid(Error::io(dir, e)))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::invalid(format!("no .obj files in {}", dir.display())));
    }
    Ok(paths)
}

/// Deform `shape` to `target` (mesh coordinates) and render the OBJ text.
pub fn deform_to_obj(shape: &EditableShape, target: &KeypointSet) -> keydeform::Result<String> {
    Ok(write_obj(&shape.deform(target)?))
}

/// Prior keypoints for `coefficients`, in the shape's own coordinates.
pub fn prior_keypoints(prior: &PcaPrior, shape: &EditableShape, coefficients: &[f64]) -> keydeform::Result<KeypointSet> {
    let unit = sample_prior(prior, coefficients)?;
    Ok(KeypointSet {
        points: unit.points.iter().map(|&p| shape.transform.invert(p)).collect(),
    })
}

/// Fit a prior to the keypoints the model predicts on `meshes`.
pub fn fit_prior(model: &Model, meshes: &[Mesh], n_basis: usize) -> Outcome<PcaPrior> {
    let sets = meshes
        .iter()
        .map(|m| model.prepare(m).map(|s| s.keypoints))
        .collect::<keydeform::Result<Vec<_>>>()
        .or_runtime()?;
    let mut prior = fit_pca(&sets, n_basis).or_invalid()?;
    prior.model_checksum = Some(model.checksum().to_string());
    Ok(prior)
}

/// `basis:index,min,max,steps`, with `min`/`max` in standard deviations of
/// that basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let rest = s.strip_prefix("basis:").ok_or("sweep must look like basis:index,min,max,steps")?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let [index, min, max, steps] = parts[..] else {
            return Err("sweep needs four fields: basis:index,min,max,steps".into());
        };
        let sweep = Sweep {
            index: index.parse().map_err(|_| format!("bad basis index {index:?}"))?,
            min: min.parse().map_err(|_| format!("bad minimum {min:?}"))?,
            max: max.parse().map_err(|_| format!("bad maximum {max:?}"))?,
            steps: steps.parse().map_err(|_| format!("bad step count {steps:?}"))?,
        };
        if sweep.steps < 1 || !sweep.min.is_finite() || !sweep.max.is_finite() {
            return Err("sweep needs at least one step and finite bounds".into());
        }
        Ok(sweep)
    }
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplifyStep {
    pub file: String,
    pub sigmas: f64,
    pub coefficient: f64,
    pub keypoints: Vec<[f64; 3]>,
}

/// Deform `mesh` through prior samples along one basis direction, writing
/// one OBJ per step plus `sweep.json` into `out`.
pub fn amplify(model: &Model, prior: &PcaPrior, mesh: &Mesh, sweep: Sweep, out: &Path) -> Outcome<Vec<AmplifyStep>> {
    if prior.num_keypoints != model.num_keypoints() {
        return Err(Failure::invalid(format!(
            "prior has {} keypoints, checkpoint has {}",
            prior.num_keypoints,
            model.num_keypoints()
        )));
    }
    if sweep.index >= prior.n_basis() {
        return Err(Failure::invalid(format!("prior has only {} bases", prior.n_basis())));
    }
    let shape = model.prepare(mesh).or_invalid()?;
    let sd = prior.std_devs()[sweep.index];
    let mut steps = Vec::new();
    for (i, sigmas) in sweep.values().into_iter().enumerate() {
        let mut coefficients = vec![0.0; prior.n_basis()];
        coefficients[sweep.index] = sigmas * sd;
        let target = prior_keypoints(prior, &shape, &coefficients).or_runtime()?;
        let file = format!("amplify_{i:03}.obj");
        write_text(&out.join(&file), &deform_to_obj(&shape, &target).or_runtime()?)?;
        steps.push(AmplifyStep {
            file,
            sigmas,
            coefficient: coefficients[sweep.index],
            keypoints: round_points(&target.points),
        });
    }
    let report = json!({ "basis": sweep.index, "std_dev": sd, "steps": steps });
    write_text(&out.join("sweep.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(steps)
}

/// Write normalized synthetic shapes as OBJ files plus an annotation file
/// carrying landmark keypoints and part-labelled surface samples.
pub fn write_synthetic(family: Family, count: usize, seed: u64, labelled_points: usize, out: &Path) -> Outcome<AnnotationSet> {
    let mut rng = Rng::new(seed);
    let shapes = generate_synthetic_family(family, count, &mut rng);
    let mut set = AnnotationSet {
        category: family.name().into(),
        shapes: Vec::with_capacity(count),
    };
    for (i, shape) in shapes.iter().enumerate() {
        let (unit, _) = shape.normalized().or_runtime()?;
        let name = format!("{}_{i:04}.obj", family.name());
        write_text(&out.join(&name), &write_obj(&unit.mesh))?;
        let (cloud, faces) = sample_surface_faces(&unit.mesh, labelled_points, &mut rng).or_runtime()?;
        set.shapes.push(ShapeAnnotation {
            mesh: Some(name),
            keypoints: Some(KeypointAnnotation::complete(unit.landmark_positions())),
            parts: Some(PartLabels {
                points: cloud.points,
                labels: faces.iter().map(|&f| unit.face_parts[f]).collect(),
            }),
        });
    }
    let text = serde_json::to_string(&set).expect("annotations serialize");
    write_text(&out.join("annotations.json"), &text)?;
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Pck,
    Parts,
    Align,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pck" => Ok(Protocol::Pck),
            "parts" => Ok(Protocol::Parts),
            "align" => Ok(Protocol::Align),
            other => Err(format!("unknown protocol {other:?} (expected pck, parts or align)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Fraction of annotated shapes used to fit the PCK regressor.
    pub train_fraction: f64,
    /// Neighbourhood radius of the part protocol.
    pub radius: f64,
    pub thresholds: &'static [f64],
}

pub const PCK_THRESHOLDS: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1];

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            radius: 0.05,
            thresholds: &PCK_THRESHOLDS,
        }
    }
}

/// Evaluation output: a JSON document and a CSV table of the headline rows.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: serde_json::Value,
    pub csv: String,
}

/// Load every annotated mesh, normalize it and predict keypoints in the
/// unit box (the annotation frame).
fn annotated_shapes(model: &Model, annotations: &Path) -> Outcome<(AnnotationSet, Vec<EditableShape>)> {
    let text = std::fs::read_to_string(annotations).map_err(|e| Failure::invalid(Error::io(annotations, e)))?;
    let set: AnnotationSet = serde_json::from_str(&text).or_invalid()?;
    let base = annotations.parent().unwrap_or(Path::new("."));
    let mut shapes = Vec::with_capacity(set.shapes.len());
    for (i, s) in set.shapes.iter().enumerate() {
        let rel = s.mesh.as_ref().ok_or_else(|| Failure::invalid(format!("shape {i} has no mesh")))?;
        let mesh = load_obj(base.join(rel)).or_invalid()?;
        shapes.push(model.prepare(&mesh).or_invalid()?);
    }
    Ok((set, shapes))
}

pub fn evaluate(model: &Model, protocol: Protocol, annotations: &Path, options: &EvalOptions) -> Outcome<Report> {
    let (set, shapes) = annotated_shapes(model, annotations)?;
    match protocol {
        Protocol::Pck => {
            let mut rows = Vec::new();
            for (s, shape) in set.shapes.iter().zip(&shapes) {
                let ann = s.keypoints.clone().ok_or_else(|| Failure::invalid("pck needs keypoint annotations"))?;
                rows.push((shape.keypoints.clone(), ann));
            }
            let n_train = ((rows.len() as f64) * options.train_fraction).round() as usize;
            if n_train >= rows.len() {
                return Err(Failure::invalid("pck needs at least one held-out shape"));
            }
            let regressor = fit_keypoint_regressor(&rows[..n_train]).or_invalid()?;
            let (preds, gts): (Vec<_>, Vec<_>) = rows[n_train..]
                .iter()
                .map(|(k, a)| regressor.predict(k).map(|p| (p, a.clone())))
                .collect::<keydeform::Result<Vec<_>>>()
                .or_runtime()?
                .into_iter()
                .unzip();
            let curve = pck_curve(&preds, &gts, options.thresholds).or_runtime()?;
            let at = curve.iter().find(|(t, _)| (*t - 0.05).abs() < 1e-12).map(|c| c.1);
            let mut csv = String::from("threshold,pck\n");
            for (t, v) in &curve {
                csv.push_str(&format!("{t},{v}\n"));
            }
            Ok(Report {
                json: json!({
                    "protocol": "pck",
                    "category": set.category,
                    "train_shapes": n_train,
                    "test_shapes": preds.len(),
                    "regressor": { "has_bias": regressor.has_bias, "rank_deficient": regressor.rank_deficient },
                    "curve": curve.iter().map(|(t, v)| json!({ "threshold": t, "pck": v })).collect::<Vec<_>>(),
                    "pck_at_0.05": at,
                    "checkpoint": model.checksum(),
                }),
                csv,
            })
        }
        Protocol::Parts => {
            let labels: Vec<PartLabels> = set
                .shapes
                .iter()
                .map(|s| s.parts.clone().ok_or_else(|| Failure::invalid("parts needs part-labelled clouds")))
                .collect::<Outcome<_>>()?;
            let sets: Vec<KeypointSet> = shapes.iter().map(|s| s.keypoints.clone()).collect();
            let r = part_correlation(&sets, &labels, options.radius).or_invalid()?;
            let mut csv = String::from("keypoint,part,score\n");
            for (k, (row, best)) in r.table.iter().zip(&r.per_keypoint).enumerate() {
                let part = row.iter().position(|v| v == best).map(|i| r.parts[i]);
                csv.push_str(&format!("{k},{},{best}\n", part.map_or(String::new(), |p| p.to_string())));
            }
            Ok(Report {
                json: json!({
                    "protocol": "parts",
                    "category": set.category,
                    "radius": options.radius,
                    "shapes": sets.len(),
                    "score": r.score,
                    "parts": r.parts,
                    "per_keypoint": r.per_keypoint,
                    "table": r.table,
                    "checkpoint": model.checksum(),
                }),
                csv,
            })
        }
        Protocol::Align => {
            if shapes.len() < 2 {
                return Err(Failure::invalid("align needs at least two shapes"));
            }
            let prepared: Vec<&PreparedShape> = shapes.iter().map(|s| &s.prepared).collect();
            let pairs: Vec<_> = (0..prepared.len()).map(|i| (prepared[i], prepared[(i + 1) % prepared.len()])).collect();
            let r = alignment_benchmark(&model.checkpoint.model, &pairs).or_runtime()?;
            let mut csv = String::from("pair,deformed,identity\n");
            for (i, p) in r.pairs.iter().enumerate() {
                csv.push_str(&format!("{i},{},{}\n", p.deformed, p.identity));
            }
            Ok(Report {
                json: json!({
                    "protocol": "align",
                    "category": set.category,
                    "pairs": r.pairs.len(),
                    "deformed_mean": r.deformed_mean,
                    "identity_mean": r.identity_mean,
                    "per_pair": r.pairs,
                    "checkpoint": model.checksum(),
                }),
                csv,
            })
        }
    }
}

/// Request body for prior sampling endpoints and files.
#[derive(Debug, Clone, Deserialize)]
pub struct Coefficients {
    pub coefficients: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "basis:0,-2,2,3".parse().unwrap();
        assert_eq!(s, Sweep { index: 0, min: -2.0, max: 2.0, steps: 3 });
        assert_eq!(s.values(), vec![-2.0, 0.0, 2.0]);
        assert!("0,-2,2,3".parse::<Sweep>().is_err());
        assert!("basis:0,-2,2".parse::<Sweep>().is_err());
        assert!("basis:0,-2,2,0".parse::<Sweep>().is_err());
    }

    #[test]
    fn keypoint_files_accept_both_layouts() {
        let a = parse_keypoints("[[1,2,3],[4,5,6]]").unwrap();
        let b = parse_keypoints(r#"{"keypoints": [[1,2,3],[4,5,6]]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_keypoints("[[1,2]]").unwrap_err().code, 1);
    }

    #[test]
    fn builtins_exist() {
        for name in ["winged", "table", "box"] {
            builtin_mesh(name).unwrap();
        }
        assert!(builtin_mesh("teapot").is_err());
    }
}
