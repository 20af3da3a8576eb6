//! Keypoint prediction, influence composition, cage skinning, the training
//! objective and the pairwise-alignment training loop.

use serde::{Deserialize, Serialize};

use crate::cage::{self, icosphere, init_cage, mean_value_coordinates, Cage, CageWeights, ShrinkWrap};
use crate::geom::{chamfer_with_grad, farthest_point_sample, sample_surface, vec3, Mesh, PointCloud};
use crate::net::{AdamConfig, AdamState, Dense, EncoderTrace, Head, HeadTrace, Parameters, PointEncoder, Tensor};
use crate::{Error, Result, Rng, Vec3};

/// Ordered keypoints; the index carries semantic identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeypointSet {
    pub points: Vec<Vec3>,
}

impl KeypointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("keypoints must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn from_flat(values: &[f64]) -> Self {
        Self {
            points: values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }
}

/// Architecture of the keypoint and influence predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_keypoints: usize,
    /// Icosphere subdivisions for the cage template (1 gives 42 vertices).
    pub cage_subdivisions: u32,
    pub encoder_widths: Vec<usize>,
    pub head_hidden: usize,
    /// Keypoint coordinates are squashed into `[-bound, bound]`.
    pub keypoint_bound: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_keypoints: 12,
            cage_subdivisions: 1,
            encoder_widths: vec![64, 128, 256],
            head_hidden: 256,
            keypoint_bound: 0.6,
        }
    }
}

impl ModelConfig {
    pub fn cage_template(&self) -> Cage {
        icosphere(self.cage_subdivisions)
    }

    pub fn cage_vertices(&self) -> usize {
        // 10 * 4^s + 2 for a subdivided icosahedron
        10 * 4usize.pow(self.cage_subdivisions) + 2
    }

    /// Maximum nonzero influences per keypoint: `floor(C / K)`.
    pub fn influence_support(&self) -> usize {
        self.cage_vertices() / self.num_keypoints.max(1)
    }
}

/// Keypoint predictor, influence predictor and the canonical influence
/// matrix. Both predictors read the same point encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointDeformer {
    pub config: ModelConfig,
    pub encoder: PointEncoder,
    pub keypoint_head: Head,
    pub influence_head: Head,
    /// `C x K`, row-major.
    pub canonical_influence: Tensor,
}

impl Parameters for KeypointDeformer {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.tensors();
        v.extend(self.keypoint_head.tensors());
        v.extend(self.influence_head.tensors());
        v.push(&self.canonical_influence);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.keypoint_head.tensors_mut());
        v.extend(self.influence_head.tensors_mut());
        v.push(&mut self.canonical_influence);
        v
    }
}

/// Everything predicted from one shape.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub keypoints: KeypointSet,
    /// Instance influence offset `W_I`, `C x K` row-major.
    pub influence_offset: Vec<f64>,
    encoder: EncoderTrace,
    keypoint_head: HeadTrace,
    influence_head: HeadTrace,
}

impl KeypointDeformer {
    /// Random encoder and keypoint head; zero influence output layer and
    /// zero canonical influence, so the untrained model deforms nothing.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let k = config.num_keypoints;
        let c = config.cage_vertices();
        if k == 0 {
            return Err(Error::Config("need at least one keypoint".into()));
        }
        if config.influence_support() < 1 {
            return Err(Error::InfluenceTooSparse {
                keypoints: k,
                cage_vertices: c,
            });
        }
        let encoder = PointEncoder::new(&config.encoder_widths, rng);
        let f = encoder.feature_size();
        let h = config.head_hidden;
        let mut kp_out = Dense::new("keypoint_head.output", h, 3 * k, rng);
        // keep initial keypoints well inside the squash's linear range
        kp_out.weight.values.iter_mut().for_each(|v| *v *= 0.1);
        let keypoint_head = Head {
            hidden: Dense::new("keypoint_head.hidden", f, h, rng),
            output: kp_out,
            bound: Some(config.keypoint_bound),
        };
        let influence_head = Head {
            hidden: Dense::new("influence_head.hidden", f, h, rng),
            output: Dense::zeroed("influence_head.output", h, c * k),
            bound: None,
        };
        Ok(Self {
            canonical_influence: Tensor::zeros("canonical_influence", &[c, k]),
            config,
            encoder,
            keypoint_head,
            influence_head,
        })
    }

    pub fn num_keypoints(&self) -> usize {
        self.config.num_keypoints
    }

    pub fn cage_vertices(&self) -> usize {
        self.config.cage_vertices()
    }

    pub fn predict(&self, cloud: &[Vec3]) -> Result<Prediction> {
        let (feature, encoder) = self.encoder.forward(cloud)?;
        let (kp, keypoint_head) = self.keypoint_head.forward(&feature)?;
        let (offset, influence_head) = self.influence_head.forward(&feature)?;
        Ok(Prediction {
            keypoints: KeypointSet::from_flat(&kp),
            influence_offset: offset,
            encoder,
            keypoint_head,
            influence_head,
        })
    }

    /// Gradients flow into the shared parameters; call once per prediction
    /// that contributed to the loss.
    fn backward_prediction(&mut self, pred: &Prediction, grad_keypoints: &[Vec3], grad_offset: Option<&[f64]>) {
        let gk: Vec<f64> = grad_keypoints.iter().flatten().copied().collect();
        let mut gf = self.keypoint_head.backward(&pred.keypoint_head, &gk);
        if let Some(go) = grad_offset {
            let gi = self.influence_head.backward(&pred.influence_head, go);
            gf.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
        }
        self.encoder.backward(&pred.encoder, &gf);
    }
}

pub fn predict_keypoints(model: &KeypointDeformer, cloud: &PointCloud) -> Result<KeypointSet> {
    Ok(model.predict(&cloud.points)?.keypoints)
}

/// `W = (W_C + W_I) * mask`, with the mask keeping the `M` cage vertices
/// nearest each keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub cage_vertices: usize,
    pub keypoints: usize,
    pub canonical: Vec<f64>,
    pub offset: Vec<f64>,
    pub mask: Vec<bool>,
}

impl InfluenceMatrix {
    pub fn effective(&self) -> Vec<f64> {
        self.canonical
            .iter()
            .zip(&self.offset)
            .zip(&self.mask)
            .map(|((c, o), &m)| if m { c + o } else { 0.0 })
            .collect()
    }
}

/// Mask of the `support` nearest cage vertices per keypoint column; ties
/// resolve to the lower vertex index.
pub fn influence_mask(cage_vertices: &[Vec3], keypoints: &[Vec3], support: usize) -> Vec<bool> {
    let (c, k) = (cage_vertices.len(), keypoints.len());
    let mut mask = vec![false; c * k];
    for (j, p) in keypoints.iter().enumerate() {
        let mut order: Vec<(f64, usize)> =
            cage_vertices.iter().enumerate().map(|(v, cv)| (vec3::dist2(*cv, *p), v)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, v) in order.iter().take(support) {
            mask[v * k + j] = true;
        }
    }
    mask
}

pub fn compose_influence(
    canonical: &[f64],
    offset: &[f64],
    keypoints: &KeypointSet,
    cage: &Cage,
) -> Result<InfluenceMatrix> {
    let (c, k) = (cage.len(), keypoints.len());
    if k == 0 {
        return Err(Error::Dimension("no keypoints".into()));
    }
    if canonical.len() != c * k || offset.len() != c * k {
        return Err(Error::Dimension(format!(
            "influence must be {c}x{k}, got {} and {} entries",
            canonical.len(),
            offset.len()
        )));
    }
    let support = c / k;
    if support < 1 {
        return Err(Error::InfluenceTooSparse {
            keypoints: k,
            cage_vertices: c,
        });
    }
    Ok(InfluenceMatrix {
        cage_vertices: c,
        keypoints: k,
        canonical: canonical.to_vec(),
        offset: offset.to_vec(),
        mask: influence_mask(&cage.vertices, &keypoints.points, support),
    })
}

/// `c* = c + W (p' - p)` with `W` row-major `C x K`.
pub fn skin_cage(cage_vertices: &[Vec3], influence: &[f64], source: &[Vec3], target: &[Vec3]) -> Result<Vec<Vec3>> {
    let (c, k) = (cage_vertices.len(), source.len());
    if target.len() != k || influence.len() != c * k {
        return Err(Error::Dimension(format!(
            "skinning {c} cage vertices with {k} source / {} target keypoints and {} influences",
            target.len(),
            influence.len()
        )));
    }
    let delta: Vec<Vec3> = source.iter().zip(target).map(|(p, q)| vec3::sub(*q, *p)).collect();
    Ok(cage_vertices
        .iter()
        .enumerate()
        .map(|(v, cv)| {
            let mut out = *cv;
            for (j, d) in delta.iter().enumerate() {
                out = vec3::add(out, vec3::scale(*d, influence[v * k + j]));
            }
            out
        })
        .collect())
}

/// Gradients of a scalar through [`skin_cage`]: returns `(dW, dDelta)`
/// given `dc*`. The gradient w.r.t. the source keypoints is `-dDelta`.
pub fn skin_cage_backward(influence: &[f64], delta: &[Vec3], grad_cage: &[Vec3]) -> (Vec<f64>, Vec<Vec3>) {
    let k = delta.len();
    let mut grad_w = vec![0.0; influence.len()];
    let mut grad_delta = vec![[0.0; 3]; k];
    for (v, g) in grad_cage.iter().enumerate() {
        for j in 0..k {
            grad_w[v * k + j] = vec3::dot(*g, delta[j]);
            grad_delta[j] = vec3::add(grad_delta[j], vec3::scale(*g, influence[v * k + j]));
        }
    }
    (grad_w, grad_delta)
}

/// Skin the cage and carry `points` (whose cage coordinates are `weights`)
/// along with it.
pub fn deform_shape(
    weights: &CageWeights,
    cage: &Cage,
    influence: &InfluenceMatrix,
    source: &KeypointSet,
    target: &KeypointSet,
) -> Result<Vec<Vec3>> {
    let deformed = skin_cage(&cage.vertices, &influence.effective(), &source.points, &target.points)?;
    cage::deform(weights, &deformed)
}

/// Chamfer between keypoints and a fresh farthest-point sample of `x`.
/// Returns the value and its gradient w.r.t. the keypoints.
pub fn fps_regularizer(keypoints: &KeypointSet, x: &PointCloud, j: usize, rng: &mut Rng) -> Result<(f64, Vec<Vec3>)> {
    let q = farthest_point_sample(x, j, rng)?;
    let c = chamfer_with_grad(&keypoints.points, &q.points)?;
    Ok((c.value, c.grad_a))
}

/// Objective weights and regularizer options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha_kpt: f64,
    pub alpha_inf: f64,
    /// Farthest points per regularizer draw.
    pub farthest_points: usize,
    /// Also regularize the target shape's keypoints.
    pub kpt_on_target: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub sim: f64,
    pub kpt: f64,
    pub inf: f64,
    pub total: f64,
}

/// Gradients of the total loss w.r.t. each differentiable input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub deformed: Vec<Vec3>,
    pub keypoints: Vec<Vec3>,
    pub influence_offset: Vec<f64>,
}

/// `L_sim + alpha_kpt * L_kpt + alpha_inf * L_inf`.
pub fn total_loss(
    deformed: &[Vec3],
    target: &[Vec3],
    keypoints: &KeypointSet,
    source: &PointCloud,
    influence_offset: &[f64],
    config: &LossConfig,
    rng: &mut Rng,
) -> Result<(LossTerms, LossGrads)> {
    let sim = chamfer_with_grad(deformed, target)?;
    let (kpt, kpt_grad) = fps_regularizer(keypoints, source, config.farthest_points, rng)?;
    let inf: f64 = influence_offset.iter().map(|w| w * w).sum();
    let terms = LossTerms {
        sim: sim.value,
        kpt,
        inf,
        total: sim.value + config.alpha_kpt * kpt + config.alpha_inf * inf,
    };
    check_terms(&terms)?;
    Ok((
        terms,
        LossGrads {
            deformed: sim.grad_a,
            keypoints: kpt_grad.iter().map(|g| vec3::scale(*g, config.alpha_kpt)).collect(),
            influence_offset: influence_offset.iter().map(|w| 2.0 * config.alpha_inf * w).collect(),
        },
    ))
}

fn check_terms(t: &LossTerms) -> Result<()> {
    for (name, v) in [("L_sim", t.sim), ("L_kpt", t.kpt), ("L_inf", t.inf), ("total", t.total)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(name));
        }
    }
    Ok(())
}

/// A normalized shape with its training cloud, cage and cage coordinates.
#[derive(Debug, Clone)]
pub struct PreparedShape {
    pub cloud: PointCloud,
    pub cage: Cage,
    pub weights: CageWeights,
}

impl PreparedShape {
    pub fn new(mesh: &Mesh, points: usize, template: &Cage, shrink: &ShrinkWrap, rng: &mut Rng) -> Result<Self> {
        let cloud = sample_surface(mesh, points, rng)?;
        Self::from_cloud(cloud, template, shrink)
    }

    pub fn from_cloud(cloud: PointCloud, template: &Cage, shrink: &ShrinkWrap) -> Result<Self> {
        let cage = init_cage(&cloud, template, shrink)?;
        let weights = mean_value_coordinates(&cloud.points, &cage)?;
        Ok(Self { cloud, cage, weights })
    }
}

/// Forward record of one source/target pair.
#[derive(Debug, Clone)]
pub struct PairForward {
    pub terms: LossTerms,
    pub deformed: Vec<Vec3>,
    source: Prediction,
    target: Prediction,
    influence: InfluenceMatrix,
    grads: LossGrads,
    target_kpt_grad: Option<Vec<Vec3>>,
    source_index: usize,
}

impl KeypointDeformer {
    /// Full forward pass of the alignment objective for one pair.
    pub fn forward_pair(
        &self,
        source: &PreparedShape,
        target: &PreparedShape,
        loss: &LossConfig,
        rng: &mut Rng,
    ) -> Result<PairForward> {
        if source.cage.len() != self.cage_vertices() {
            return Err(Error::Dimension(format!(
                "model expects {} cage vertices, shape has {}",
                self.cage_vertices(),
                source.cage.len()
            )));
        }
        let src = self.predict(&source.cloud.points)?;
        let tgt = self.predict(&target.cloud.points)?;
        let influence = compose_influence(
            &self.canonical_influence.values,
            &src.influence_offset,
            &src.keypoints,
            &source.cage,
        )?;
        let deformed = deform_shape(&source.weights, &source.cage, &influence, &src.keypoints, &tgt.keypoints)?;
        let (mut terms, grads) = total_loss(
            &deformed,
            &target.cloud.points,
            &src.keypoints,
            &source.cloud,
            &src.influence_offset,
            loss,
            rng,
        )?;
        let mut target_kpt_grad = None;
        if loss.kpt_on_target {
            let (v, g) = fps_regularizer(&tgt.keypoints, &target.cloud, loss.farthest_points, rng)?;
            terms.kpt += v;
            terms.total += loss.alpha_kpt * v;
            check_terms(&terms)?;
            target_kpt_grad = Some(g.iter().map(|g| vec3::scale(*g, loss.alpha_kpt)).collect());
        }
        Ok(PairForward {
            terms,
            deformed,
            source: src,
            target: tgt,
            influence,
            grads,
            target_kpt_grad,
            source_index: 0,
        })
    }

    /// Accumulate parameter gradients of `forward`'s total loss, scaled by
    /// `scale` (for averaging over a batch).
    pub fn backward_pair(&mut self, source: &PreparedShape, forward: &PairForward, scale: f64) -> Result<()> {
        let k = self.num_keypoints();
        let grad_deformed: Vec<Vec3> = forward.grads.deformed.iter().map(|g| vec3::scale(*g, scale)).collect();
        let grad_cage = cage::deform_backward(&source.weights, &grad_deformed)?;
        let delta: Vec<Vec3> = forward
            .source
            .keypoints
            .points
            .iter()
            .zip(&forward.target.keypoints.points)
            .map(|(p, q)| vec3::sub(*q, *p))
            .collect();
        let effective = forward.influence.effective();
        let (grad_w, grad_delta) = skin_cage_backward(&effective, &delta, &grad_cage);

        let mut grad_offset = vec![0.0; grad_w.len()];
        for (i, (&gw, &m)) in grad_w.iter().zip(&forward.influence.mask).enumerate() {
            if m {
                self.canonical_influence.grad[i] += gw;
                grad_offset[i] = gw;
            }
            grad_offset[i] += scale * forward.grads.influence_offset[i];
        }

        let mut grad_src = vec![[0.0; 3]; k];
        let mut grad_tgt = vec![[0.0; 3]; k];
        for j in 0..k {
            grad_src[j] = vec3::add(vec3::scale(grad_delta[j], -1.0), vec3::scale(forward.grads.keypoints[j], scale));
            grad_tgt[j] = grad_delta[j];
            if let Some(g) = &forward.target_kpt_grad {
                grad_tgt[j] = vec3::add(grad_tgt[j], vec3::scale(g[j], scale));
            }
        }
        self.backward_prediction(&forward.source, &grad_src, Some(&grad_offset));
        self.backward_prediction(&forward.target, &grad_tgt, None);
        Ok(())
    }
}

/// Records a forward pass so that `backward` can only follow one.
#[derive(Debug, Default)]
pub struct StepRecorder {
    pending: Vec<PairForward>,
}

impl StepRecorder {
    pub fn record(&mut self, source_index: usize, mut forward: PairForward) -> LossTerms {
        forward.source_index = source_index;
        let terms = forward.terms;
        self.pending.push(forward);
        terms
    }

    /// Backpropagate every recorded pair (averaged) and clear the record.
    pub fn backward(&mut self, model: &mut KeypointDeformer, shapes: &[PreparedShape]) -> Result<()> {
        if self.pending.is_empty() {
            return Err(Error::BackwardBeforeForward);
        }
        let scale = 1.0 / self.pending.len() as f64;
        for f in std::mem::take(&mut self.pending) {
            model.backward_pair(&shapes[f.source_index], &f, scale)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub alpha_kpt: f64,
    pub alpha_inf: f64,
    pub lr: f64,
    /// Points sampled per shape.
    pub points: usize,
    /// Farthest points per regularizer draw; 0 means `2K`.
    pub farthest_points: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub kpt_on_target: bool,
    pub shrink_wrap: ShrinkWrap,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            alpha_kpt: 1.0,
            alpha_inf: 1e-6,
            lr: 1e-3,
            points: 1024,
            farthest_points: 0,
            iterations: 2000,
            batch_size: 1,
            seed: 0,
            kpt_on_target: false,
            shrink_wrap: ShrinkWrap::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            alpha_kpt: self.alpha_kpt,
            alpha_inf: self.alpha_inf,
            farthest_points: if self.farthest_points == 0 {
                2 * self.model.num_keypoints
            } else {
                self.farthest_points
            },
            kpt_on_target: self.kpt_on_target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    #[serde(rename = "L_sim")]
    pub sim: f64,
    #[serde(rename = "L_kpt")]
    pub kpt: f64,
    #[serde(rename = "L_inf")]
    pub inf: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct Trained {
    pub model: KeypointDeformer,
    pub log: Vec<LogEntry>,
    /// Set when training stopped on a non-finite loss or gradient; `model`
    /// then holds the last finite parameters.
    pub diverged: Option<Error>,
}

impl Trained {
    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
            .collect()
    }
}

/// Prepare every shape (cloud, cage, cage coordinates) with a seed stream
/// derived from `seed`.
pub fn prepare_dataset(meshes: &[Mesh], config: &TrainConfig) -> Result<Vec<PreparedShape>> {
    let template = config.model.cage_template();
    let mut rng = Rng::new(config.seed ^ 0x5eed_da7a);
    meshes
        .iter()
        .map(|m| PreparedShape::new(m, config.points, &template, &config.shrink_wrap, &mut rng))
        .collect()
}

pub fn train(dataset: &[Mesh], config: &TrainConfig) -> Result<Trained> {
    let shapes = prepare_dataset(dataset, config)?;
    train_prepared(&shapes, config)
}

/// Training loop over already prepared shapes.
pub fn train_prepared(shapes: &[PreparedShape], config: &TrainConfig) -> Result<Trained> {
    if shapes.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: shapes.len(),
        });
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive and finite, got {}", config.lr)));
    }
    let mut rng = Rng::new(config.seed);
    let mut model = KeypointDeformer::new(config.model.clone(), &mut rng)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.tensors(),
    );
    let loss = config.loss();
    let mut recorder = StepRecorder::default();
    let mut log = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let last_good = model.clone();
        model.zero_grad();
        let mut sum = LossTerms::default();
        let mut failure = None;
        for _ in 0..config.batch_size {
            let s = rng.below(shapes.len());
            let mut t = rng.below(shapes.len() - 1);
            if t >= s {
                t += 1;
            }
            match model.forward_pair(&shapes[s], &shapes[t], &loss, &mut rng) {
                Ok(f) => {
                    let terms = recorder.record(s, f);
                    sum.sim += terms.sim;
                    sum.kpt += terms.kpt;
                    sum.inf += terms.inf;
                    sum.total += terms.total;
                }
                Err(e @ Error::NonFiniteLoss(_)) => {
                    failure = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let step = failure.map_or_else(
            || {
                recorder.backward(&mut model, shapes)?;
                adam.step(&mut model.tensors_mut())
            },
            Err,
        );
        match step {
            Ok(()) => {}
            Err(e @ (Error::NonFiniteLoss(_) | Error::NonFiniteGradient(_))) => {
                return Ok(Trained {
                    model: last_good,
                    log,
                    diverged: Some(Error::Diverged {
                        iteration,
                        reason: e.to_string(),
                    }),
                });
            }
            Err(e) => return Err(e),
        }
        let b = config.batch_size as f64;
        log.push(LogEntry {
            iteration,
            sim: sum.sim / b,
            kpt: sum.kpt / b,
            inf: sum.inf / b,
            total: sum.total / b,
        });
    }
    Ok(Trained {
        model,
        log,
        diverged: None,
    })
}
