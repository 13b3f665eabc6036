//! Loss, optimizers, the minibatch training loop and the per-cluster protocol.

mod persistence;

pub use persistence::{load_model, read_model, save_model, write_model, MAGIC, FORMAT_VERSION};

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{assign_cluster, cluster_training_set, ClusterDescriptor, ClusterFeatures, DbscanConfig, NOISE};
use crate::data::{make_instances, NormalizationTransform, Point, Scene, TrainingInstance};
use crate::error::{Error, Result};
use crate::model::{build_forward, AttentionMode, ModelConfig, PredictionModel};
use crate::numerics::{Gradients, ParameterStore, Tape};

/// `(1/T) Σ_t ‖ŷ_t − y_t‖²`.
pub fn loss(predicted: &[Point], truth: &[Point]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::arg(format!(
            "loss needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let total: f64 = predicted.iter().zip(truth).map(|(a, b)| a.dist_sq(b)).sum();
    Ok(total / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub teacher_forcing: bool,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 16,
            teacher_forcing: true,
            seed: 0,
            optimizer: Optimizer::default(),
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted (it freezes the parameters), negative or
    /// non-finite ones are not.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::Config("adam needs 0 <= beta < 1 and epsilon > 0".into()));
            }
        }
        Ok(())
    }
}

/// Optimizer state over a [`ParameterStore`]'s entries.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, params: &ParameterStore) -> Self {
        let moments = match optimizer {
            Optimizer::Sgd => Vec::new(),
            Optimizer::Adam { .. } => params
                .iter()
                .map(|(_, p)| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect(),
        };
        Self {
            optimizer,
            step: 0,
            moments,
        }
    }

    /// Applies the gradients currently held in `params` with rate `lr`.
    pub fn step(&mut self, params: &mut ParameterStore, lr: f64) {
        self.step += 1;
        match self.optimizer {
            Optimizer::Sgd => {
                for (_, p) in params.iter_mut() {
                    let g = p.grad.as_slice().to_vec();
                    p.value.as_mut_slice().iter_mut().zip(g).for_each(|(w, g)| *w -= lr * g);
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((_, p), (m, v)) in params.iter_mut().zip(&mut self.moments) {
                    let p = &mut *p;
                    let grad = p.grad.as_slice();
                    let value = p.value.as_mut_slice();
                    for k in 0..value.len() {
                        let g = grad[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        value[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

/// Loss and parameter gradients for one instance.
pub fn instance_gradients(
    model: &PredictionModel,
    instance: &TrainingInstance,
    teacher_forcing: bool,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(&model.params);
    let teacher = teacher_forcing.then_some(instance.future.as_slice());
    let trace = build_forward(&mut tape, model, &instance.observed, &instance.neighborhood, teacher)?;
    let targets: Vec<Vec<f64>> = instance.future.iter().map(|p| p.to_vec()).collect();
    let l = tape.mean_squared_error(&trace.predictions, &targets)?;
    let value = tape.value(l)[0];
    let grads = tape.backward(l, 1.0)?;
    Ok((value, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictionModel,
    pub log: Vec<EpochLog>,
}

fn check_instances(instances: &[TrainingInstance], config: &ModelConfig) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::arg("no training instances"));
    }
    if let Some(bad) = instances
        .iter()
        .find(|i| i.t_obs() != config.t_obs || i.t_pred() != config.t_pred)
    {
        return Err(Error::arg(format!(
            "instance of pedestrian {} has t_obs={}, t_pred={}; model expects {}/{}",
            bad.pedestrian_id,
            bad.t_obs(),
            bad.t_pred(),
            config.t_obs,
            config.t_pred
        )));
    }
    Ok(())
}

/// Minibatch training of a freshly initialized model (seeded by `train.seed`).
pub fn train_model(
    instances: &[TrainingInstance],
    model_config: ModelConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = PredictionModel::init(model_config, train.seed)?;
    train_from(model, instances, train)
}

/// Continues training `model` in place; the batch gradient is the mean over its instances.
pub fn train_from(mut model: PredictionModel, instances: &[TrainingInstance], train: &TrainConfig) -> Result<TrainOutcome> {
    train.validate()?;
    model.config.validate()?;
    check_instances(instances, &model.config)?;
    let batch = if train.batch_size > instances.len() {
        warn!(
            "batch_size {} exceeds the {} available instances; using {}",
            train.batch_size,
            instances.len(),
            instances.len()
        );
        instances.len()
    } else {
        train.batch_size
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut opt = OptimizerState::new(train.optimizer, &model.params);
    let mut log = Vec::with_capacity(train.epochs);

    for epoch in 1..=train.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            model.params.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (l, g) = match instance_gradients(&model, &instances[i], train.teacher_forcing) {
                    Ok(r) => r,
                    // Non-finite weights surface as a failed forward pass.
                    Err(_) if !model.params.iter().all(|(_, p)| p.value.is_finite()) => {
                        return Err(Error::Training { epoch, loss: f64::NAN })
                    }
                    Err(e) => return Err(e),
                };
                if !l.is_finite() {
                    return Err(Error::Training { epoch, loss: l });
                }
                loss_sum += l;
                model.params.accumulate(&g, scale)?;
            }
            if let Some(clip) = train.clip_norm {
                let norm = model.params.grad_norm();
                if norm > clip {
                    model.params.scale_grads(clip / norm);
                }
            }
            opt.step(&mut model.params, train.learning_rate);
        }
        let mean_loss = loss_sum / instances.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training { epoch, loss: mean_loss });
        }
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        log.push(EpochLog {
            epoch,
            mean_loss,
            wall_ms,
        });
    }
    model.params.zero_grads();
    Ok(TrainOutcome { model, log })
}

/// Which of the three configurations to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    /// Per-cluster models, combined attention.
    #[default]
    Cmb,
    /// One model on every instance, combined attention.
    Sc,
    /// Per-cluster models, soft attention only.
    Sft,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Cmb, Ablation::Sc, Ablation::Sft];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Cmb => "cmb",
            Ablation::Sc => "sc",
            Ablation::Sft => "sft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cmb" => Ok(Ablation::Cmb),
            "sc" => Ok(Ablation::Sc),
            "sft" => Ok(Ablation::Sft),
            _ => Err(Error::Config(format!("unknown ablation {s:?} (expected cmb, sc or sft)"))),
        }
    }

    pub fn attention_mode(self) -> AttentionMode {
        match self {
            Ablation::Sft => AttentionMode::SoftOnly,
            Ablation::Cmb | Ablation::Sc => AttentionMode::Combined,
        }
    }

    pub fn uses_clusters(self) -> bool {
        !matches!(self, Ablation::Sc)
    }
}

/// Trained models with everything needed to route and de-normalize test instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModelSet {
    pub ablation: Ablation,
    pub transform: NormalizationTransform,
    pub descriptors: Vec<ClusterDescriptor>,
    pub models: BTreeMap<i64, PredictionModel>,
    pub single_model: Option<PredictionModel>,
}

impl ClusterModelSet {
    pub fn validate(&self) -> Result<()> {
        match self.ablation {
            Ablation::Sc => {
                if self.single_model.is_none() {
                    return Err(Error::Protocol("single-model set without a model".into()));
                }
            }
            _ => {
                if let Some(d) = self.descriptors.iter().find(|d| !self.models.contains_key(&d.cluster_id)) {
                    return Err(Error::Protocol(format!("cluster {} has no model", d.cluster_id)));
                }
            }
        }
        Ok(())
    }

    /// Model configuration shared by every model in the set.
    pub fn model_config(&self) -> Option<ModelConfig> {
        self.single_model
            .as_ref()
            .or_else(|| self.models.values().next())
            .map(|m| m.config)
    }

    /// Picks the model for one observed (normalized) path: the single model, or the
    /// model of the nearest cluster centroid.
    pub fn route(&self, observed: &[Point]) -> Result<(Option<i64>, &PredictionModel)> {
        if let Some(m) = &self.single_model {
            return Ok((None, m));
        }
        let cluster = assign_cluster(observed, &self.descriptors)?;
        let model = self
            .models
            .get(&cluster)
            .ok_or_else(|| Error::Protocol(format!("instance assigned to cluster {cluster}, which has no model")))?;
        Ok((Some(cluster), model))
    }
}

/// How a scene becomes training instances and clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub dbscan: DbscanConfig,
    pub features: ClusterFeatures,
    /// Frames between consecutive windows of one trajectory.
    pub stride: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            dbscan: DbscanConfig::default(),
            features: ClusterFeatures::EntryExit,
            stride: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterLog {
    /// `None` for the single model.
    pub cluster_id: Option<i64>,
    pub instances: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct TrainedSet {
    pub set: ClusterModelSet,
    pub logs: Vec<ClusterLog>,
}

impl TrainedSet {
    /// One row per epoch: instance-weighted mean loss over the models, summed wall time.
    pub fn combined_log(&self) -> Vec<EpochLog> {
        let epochs = self.logs.iter().map(|l| l.log.len()).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let (mut loss, mut weight, mut wall) = (0.0, 0.0, 0.0);
                for l in &self.logs {
                    if let Some(row) = l.log.get(e) {
                        loss += row.mean_loss * l.instances as f64;
                        weight += l.instances as f64;
                        wall += row.wall_ms;
                    }
                }
                EpochLog {
                    epoch: e + 1,
                    mean_loss: loss / weight,
                    wall_ms: wall,
                }
            })
            .collect()
    }
}

/// Trains the requested configuration on a filtered, normalized scene.
///
/// Cluster `k` trains with seed `train.seed + k`; the single model uses `train.seed`.
/// `transform` is stored with the result so predictions can be mapped back.
pub fn train_per_cluster(
    scene: &Scene,
    transform: NormalizationTransform,
    protocol: &ProtocolConfig,
    model_config: ModelConfig,
    train: &TrainConfig,
    ablation: Ablation,
) -> Result<TrainedSet> {
    train.validate()?;
    let model_config = ModelConfig {
        mode: ablation.attention_mode(),
        ..model_config
    };
    model_config.validate()?;
    let instances = make_instances(scene, model_config.t_obs, model_config.t_pred, protocol.stride)?;
    if instances.is_empty() {
        return Err(Error::Data(format!(
            "no trajectory covers t_pred = {} frames",
            model_config.t_pred
        )));
    }

    if !ablation.uses_clusters() {
        info!("training single model on {} instances", instances.len());
        let out = train_model(&instances, model_config, train)?;
        return Ok(TrainedSet {
            logs: vec![ClusterLog {
                cluster_id: None,
                instances: instances.len(),
                log: out.log,
            }],
            set: ClusterModelSet {
                ablation,
                transform,
                descriptors: Vec::new(),
                models: BTreeMap::new(),
                single_model: Some(out.model),
            },
        });
    }

    // Only trajectories long enough to be observed take part in clustering.
    let eligible: Vec<_> = scene
        .trajectories
        .iter()
        .filter(|t| t.len() >= model_config.t_obs)
        .cloned()
        .collect();
    let eligible = Scene {
        trajectories: eligible,
        frame_rate: scene.frame_rate,
        bounds: scene.bounds,
    };
    let (assignment, descriptors) =
        cluster_training_set(&eligible, &protocol.dbscan, model_config.t_obs, protocol.features)?;
    let cluster_of: BTreeMap<i64, i64> = eligible
        .trajectories
        .iter()
        .zip(&assignment.labels)
        .map(|(t, &l)| (t.pedestrian_id, l))
        .collect();

    let mut models = BTreeMap::new();
    let mut logs = Vec::new();
    for d in &descriptors {
        let members: Vec<TrainingInstance> = instances
            .iter()
            .filter(|i| cluster_of.get(&i.pedestrian_id).copied().unwrap_or(NOISE) == d.cluster_id)
            .map(|i| TrainingInstance {
                cluster_id: Some(d.cluster_id),
                ..i.clone()
            })
            .collect();
        if members.is_empty() {
            warn!(
                "cluster {} has no trajectory covering t_pred = {} frames; dropping it",
                d.cluster_id, model_config.t_pred
            );
            continue;
        }
        info!("training cluster {} on {} instances", d.cluster_id, members.len());
        let cfg = TrainConfig {
            seed: train.seed.wrapping_add(d.cluster_id as u64),
            ..*train
        };
        let out = train_model(&members, model_config, &cfg)?;
        models.insert(d.cluster_id, out.model);
        logs.push(ClusterLog {
            cluster_id: Some(d.cluster_id),
            instances: members.len(),
            log: out.log,
        });
    }
    // Clusters that could not be trained are dropped from routing altogether.
    let descriptors: Vec<ClusterDescriptor> = descriptors
        .into_iter()
        .filter(|d| models.contains_key(&d.cluster_id))
        .collect();
    if descriptors.is_empty() {
        return Err(Error::Data("no cluster has a complete training window".into()));
    }
    Ok(TrainedSet {
        set: ClusterModelSet {
            ablation,
            transform,
            descriptors,
            models,
            single_model: None,
        },
        logs,
    })
}

/// Writes `epoch,mean_loss,wall_ms` rows.
pub fn write_training_log<W: std::io::Write>(log: &[EpochLog], mut sink: W) -> Result<()> {
    writeln!(sink, "epoch,mean_loss,wall_ms")?;
    for row in log {
        writeln!(sink, "{},{:?},{:.3}", row.epoch, row.mean_loss, row.wall_ms)?;
    }
    Ok(())
}
