//! Abnormal-walker detection from the prediction model's hidden states, the naive
//! prediction-deviation baseline and confusion matrices.

use std::collections::BTreeMap;
use std::fmt;

use crate::clustering::{dbscan, DbscanConfig, NOISE};
use crate::data::{build_neighborhood, Label, NeighborhoodTensor, Point, Scene, TrainingInstance};
use crate::error::{Error, Result};
use crate::evaluation::{ade, MetricOptions};
use crate::model::{predict, predict_with_trace, PredictionModel};
use crate::training::ClusterModelSet;

/// Encoder states `h_1..h_Tobs` followed by decoder states `s_Tobs+1..s_Tpred`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateFeature {
    pub pedestrian_id: i64,
    pub vector: Vec<f64>,
}

pub fn collect_hidden_states(
    pedestrian_id: i64,
    model: &PredictionModel,
    observed: &[Point],
    neighborhood: &NeighborhoodTensor,
) -> Result<HiddenStateFeature> {
    let trace = predict_with_trace(model, observed, neighborhood)?;
    let vector: Vec<f64> = trace
        .encoder_states
        .iter()
        .chain(&trace.decoder_states)
        .flatten()
        .copied()
        .collect();
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite hidden state for pedestrian {pedestrian_id}")));
    }
    Ok(HiddenStateFeature { pedestrian_id, vector })
}

/// Per-dimension zero mean and unit variance; constant dimensions become zero.
pub fn standardize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let d = first.len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::shape("feature vectors differ in length"));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; d];
    for v in vectors {
        var.iter_mut()
            .zip(v)
            .zip(&mean)
            .for_each(|((s, x), m)| *s += (x - m) * (x - m) / n);
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&s| if s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 })
        .collect();
    Ok(vectors
        .iter()
        .map(|v| v.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) * s).collect())
        .collect())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median over points of the radius that would make each one a core point, i.e. the
/// distance to its `(min_pts − 1)`-th nearest other point.
pub fn kth_neighbor_eps(points: &[Vec<f64>], min_pts: usize) -> Result<f64> {
    if min_pts < 2 || points.len() < min_pts {
        return Err(Error::arg(format!(
            "eps heuristic needs min_pts >= 2 and at least min_pts points, got {min_pts} and {}",
            points.len()
        )));
    }
    let mut radii: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[min_pts - 2]
        })
        .collect();
    radii.sort_by(f64::total_cmp);
    let m = radii.len();
    Ok(if m % 2 == 1 {
        radii[m / 2]
    } else {
        0.5 * (radii[m / 2 - 1] + radii[m / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierConfig {
    pub min_pts: usize,
    /// `None` picks eps with [`kth_neighbor_eps`].
    pub eps: Option<f64>,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self { min_pts: 5, eps: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub pedestrian_id: i64,
    pub label: Label,
    /// Method-specific outlyingness; larger is more abnormal.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub detections: Vec<Detection>,
    pub eps: f64,
}

/// DBSCAN over standardized features: noise is abnormal, cluster members normal.
/// The score is the distance to the nearest core point (zero for core points).
pub fn detect_outliers(features: &[HiddenStateFeature], config: &OutlierConfig) -> Result<OutlierReport> {
    if features.len() < config.min_pts {
        return Err(Error::arg(format!(
            "{} features, fewer than min_pts = {}",
            features.len(),
            config.min_pts
        )));
    }
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.vector.clone()).collect();
    let points = standardize(&raw)?;
    let mut eps = match config.eps {
        Some(e) => e,
        None => kth_neighbor_eps(&points, config.min_pts)?,
    };
    if eps == 0.0 && config.eps.is_none() {
        // Identical features: any positive radius puts them in one cluster.
        eps = f64::MIN_POSITIVE;
    }
    let dbscan_config = DbscanConfig {
        eps,
        min_pts: config.min_pts,
    };
    let assignment = dbscan(&points, &dbscan_config)?;
    if assignment.labels.iter().all(|&l| l == NOISE) {
        return Err(Error::Config(format!(
            "every feature is noise at eps = {eps}; use a larger eps"
        )));
    }
    let eps_sq = eps * eps;
    let core: Vec<usize> = (0..points.len())
        .filter(|&i| {
            points
                .iter()
                .filter(|q| {
                    let d: f64 = points[i].iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    d <= eps_sq
                })
                .count()
                >= config.min_pts
        })
        .collect();
    let detections = features
        .iter()
        .zip(&points)
        .zip(&assignment.labels)
        .map(|((f, p), &l)| Detection {
            pedestrian_id: f.pedestrian_id,
            label: if l == NOISE { Label::Abnormal } else { Label::Normal },
            score: core
                .iter()
                .map(|&c| distance(p, &points[c]))
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    Ok(OutlierReport { detections, eps })
}

/// ADE between the prediction from the first `t_obs` points and what was observed.
pub fn deviation_score(
    model: &PredictionModel,
    observed: &[Point],
    future: &[Point],
    neighborhood: &NeighborhoodTensor,
) -> Result<f64> {
    let c = &model.config;
    let predicted = predict(model, observed, neighborhood)?;
    ade(&[predicted], &[future.to_vec()], c.t_obs, c.t_pred, MetricOptions::default())
}

/// Abnormal iff the deviation score strictly exceeds `threshold`.
pub fn naive_detect(
    model: &PredictionModel,
    observed_full: &[Point],
    neighborhood: &NeighborhoodTensor,
    threshold: f64,
) -> Result<Label> {
    let t_obs = model.config.t_obs;
    if observed_full.len() != model.config.t_pred {
        return Err(Error::arg(format!(
            "naive detection needs {} points, got {}",
            model.config.t_pred,
            observed_full.len()
        )));
    }
    let score = deviation_score(model, &observed_full[..t_obs], &observed_full[t_obs..], neighborhood)?;
    Ok(if score > threshold { Label::Abnormal } else { Label::Normal })
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return Err(Error::arg("percentile needs values and q in [0, 100]"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub const DEFAULT_NAIVE_PERCENTILE: f64 = 95.0;

/// One window per pedestrian, starting at its first frame: `t_pred` points when
/// `full` is set, otherwise only `t_obs` (with an empty future). Pedestrians whose
/// first frames are too short or broken by a gap are skipped.
pub fn pedestrian_windows(scene: &Scene, t_obs: usize, t_pred: usize, full: bool) -> Result<Vec<TrainingInstance>> {
    if t_obs < 2 || t_pred <= t_obs {
        return Err(Error::arg(format!("need t_pred > t_obs >= 2, got {t_obs}/{t_pred}")));
    }
    let len = if full { t_pred } else { t_obs };
    let mut out = Vec::new();
    for traj in &scene.trajectories {
        let start = traj.first_frame();
        let Some(path) = traj.window(start, len) else { continue };
        out.push(TrainingInstance {
            pedestrian_id: traj.pedestrian_id,
            start_frame: start,
            observed: path[..t_obs].to_vec(),
            future: path[t_obs..].to_vec(),
            neighborhood: build_neighborhood(scene, traj, start, t_obs)?,
            cluster_id: None,
        });
    }
    Ok(out)
}

/// Hidden-state features for every window, each taken from its routed model.
pub fn collect_features(models: &ClusterModelSet, windows: &[TrainingInstance]) -> Result<Vec<HiddenStateFeature>> {
    windows
        .iter()
        .map(|w| {
            let (_, model) = models.route(&w.observed)?;
            collect_hidden_states(w.pedestrian_id, model, &w.observed, &w.neighborhood)
        })
        .collect()
}

/// Deviation scores for full windows, each from its routed model.
pub fn deviation_scores(models: &ClusterModelSet, windows: &[TrainingInstance]) -> Result<Vec<f64>> {
    windows
        .iter()
        .map(|w| {
            let (_, model) = models.route(&w.observed)?;
            deviation_score(model, &w.observed, &w.future, &w.neighborhood)
        })
        .collect()
}

/// Labels scores against a threshold (strictly greater is abnormal).
pub fn threshold_detections(windows: &[TrainingInstance], scores: &[f64], threshold: f64) -> Vec<Detection> {
    windows
        .iter()
        .zip(scores)
        .map(|(w, &score)| Detection {
            pedestrian_id: w.pedestrian_id,
            label: if score > threshold { Label::Abnormal } else { Label::Normal },
            score,
        })
        .collect()
}

/// 2×2 counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            0.0
        } else {
            self.tp as f64 / pos as f64
        }
    }

    pub fn false_positive_rate(&self) -> f64 {
        let neg = self.fp + self.tn;
        if neg == 0 {
            0.0
        } else {
            self.fp as f64 / neg as f64
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = [self.tp, self.fp, self.fn_, self.tn]
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(8);
        writeln!(f, "{:<22}{:^w2$}", "", "Predicted", w2 = 2 * w + 2)?;
        writeln!(f, "{:<22}{:>w$}  {:>w$}", "", "Abnormal", "Normal")?;
        writeln!(f, "{:<12}{:<10}{:>w$}  {:>w$}", "Ground", "Abnormal", self.tp, self.fn_)?;
        write!(f, "{:<12}{:<10}{:>w$}  {:>w$}", "Truth", "Normal", self.fp, self.tn)
    }
}

pub fn confusion(predicted: &BTreeMap<i64, Label>, truth: &BTreeMap<i64, Label>) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() || predicted.keys().zip(truth.keys()).any(|(a, b)| a != b) {
        let missing = predicted
            .keys()
            .find(|k| !truth.contains_key(k))
            .or_else(|| truth.keys().find(|k| !predicted.contains_key(k)));
        return Err(Error::arg(format!(
            "predicted and ground-truth pedestrian ids differ (e.g. {missing:?})"
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (id, p) in predicted {
        match (truth[id], *p) {
            (Label::Abnormal, Label::Abnormal) => m.tp += 1,
            (Label::Abnormal, Label::Normal) => m.fn_ += 1,
            (Label::Normal, Label::Abnormal) => m.fp += 1,
            (Label::Normal, Label::Normal) => m.tn += 1,
        }
    }
    Ok(m)
}

pub fn labels_of(detections: &[Detection]) -> BTreeMap<i64, Label> {
    detections.iter().map(|d| (d.pedestrian_id, d.label)).collect()
}

/// Writes `pedestrian_id,label,score` rows.
pub fn write_detections<W: std::io::Write>(detections: &[Detection], mut sink: W) -> Result<()> {
    writeln!(sink, "pedestrian_id,label,score")?;
    for d in detections {
        writeln!(sink, "{},{},{:?}", d.pedestrian_id, d.label.as_str(), d.score)?;
    }
    Ok(())
}
