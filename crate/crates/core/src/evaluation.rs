//! ADE, FDE and n-ADE, the constant-velocity reference and report tables.
//!
//! By default ADE and n-ADE follow the literal formulas: squared displacements with
//! no root, and for ADE a denominator of `n · (T_pred − T_obs − 1)` even though
//! `T_pred − T_obs` terms are summed. [`MetricOptions`] switches to per-term means
//! and Euclidean distances.

use std::fmt::Write as _;

use crate::data::{Point, TrainingInstance};
use crate::error::{Error, Result};
use crate::model::predict;
use crate::training::ClusterModelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `n · (T_pred − (T_obs + 1))`.
    #[default]
    Literal,
    /// `n · (T_pred − T_obs)`, the number of summed terms.
    Terms,
}

impl Denominator {
    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::Literal => "literal",
            Denominator::Terms => "terms",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Denominator::Literal),
            "terms" => Ok(Denominator::Terms),
            _ => Err(Error::Config(format!("unknown metric denominator {s:?} (literal or terms)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    /// `‖ŷ − y‖²`.
    #[default]
    Squared,
    /// `‖ŷ − y‖`.
    Euclidean,
}

impl Distance {
    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Squared => "squared",
            Distance::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Distance::Squared),
            "euclidean" => Ok(Distance::Euclidean),
            _ => Err(Error::Config(format!("unknown metric distance {s:?} (squared or euclidean)"))),
        }
    }

    fn eval(self, a: &Point, b: &Point) -> f64 {
        match self {
            Distance::Squared => a.dist_sq(b),
            Distance::Euclidean => a.dist(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricOptions {
    pub denominator: Denominator,
    pub distance: Distance,
}

pub const DEFAULT_CURVATURE_THRESHOLD: f64 = 1e-2;

fn check_shapes(predicted: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<usize> {
    if predicted.is_empty() {
        return Err(Error::arg("no instances to evaluate"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::arg(format!(
            "{} predicted instances for {} ground-truth instances",
            predicted.len(),
            truth.len()
        )));
    }
    let horizon = predicted[0].len();
    if horizon == 0 {
        return Err(Error::arg("empty predicted sequence"));
    }
    for (k, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != horizon || t.len() != horizon {
            return Err(Error::arg(format!(
                "instance {k}: predicted length {}, truth length {}, expected {horizon}",
                p.len(),
                t.len()
            )));
        }
    }
    Ok(horizon)
}

/// Average displacement error over predicted frames `T_obs+1 ..= T_pred`.
pub fn ade(
    predicted: &[Vec<Point>],
    truth: &[Vec<Point>],
    t_obs: usize,
    t_pred: usize,
    options: MetricOptions,
) -> Result<f64> {
    let horizon = check_shapes(predicted, truth)?;
    if t_pred <= t_obs || t_pred - t_obs != horizon {
        return Err(Error::arg(format!(
            "sequences have {horizon} points but t_pred - t_obs = {}",
            t_pred as i64 - t_obs as i64
        )));
    }
    let per_instance = match options.denominator {
        Denominator::Literal => t_pred - (t_obs + 1),
        Denominator::Terms => horizon,
    };
    if per_instance == 0 {
        return Err(Error::arg("literal ADE denominator is zero for a one-step horizon"));
    }
    let total: f64 = predicted
        .iter()
        .zip(truth)
        .flat_map(|(p, t)| p.iter().zip(t))
        .map(|(a, b)| options.distance.eval(a, b))
        .sum();
    Ok(total / (predicted.len() * per_instance) as f64)
}

/// Mean Euclidean distance at the final predicted frame.
pub fn fde(predicted: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<f64> {
    let horizon = check_shapes(predicted, truth)?;
    let total: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| p[horizon - 1].dist(&t[horizon - 1]))
        .sum();
    Ok(total / predicted.len() as f64)
}

/// Norm of the central second difference at each interior point of `path`;
/// the two endpoints have no estimate and are `None`.
pub fn second_differences(path: &[Point]) -> Vec<Option<f64>> {
    (0..path.len())
        .map(|k| {
            if k == 0 || k + 1 >= path.len() {
                None
            } else {
                let (a, b, c) = (path[k - 1], path[k], path[k + 1]);
                Some(Point::new(a.x - 2.0 * b.x + c.x, a.y - 2.0 * b.y + c.y).dist(&Point::new(0.0, 0.0)))
            }
        })
        .collect()
}

/// Indicator of a nonlinear predicted point: second difference above `threshold`.
pub fn nonlinear_mask(path: &[Point], threshold: f64) -> Vec<bool> {
    second_differences(path)
        .into_iter()
        .map(|d| d.is_some_and(|d| d > threshold))
        .collect()
}

/// Displacement error restricted to points where the predicted path bends.
///
/// Returns `Ok(None)` when no predicted point is nonlinear.
pub fn nade(
    predicted: &[Vec<Point>],
    truth: &[Vec<Point>],
    curvature_threshold: f64,
    options: MetricOptions,
) -> Result<Option<f64>> {
    check_shapes(predicted, truth)?;
    if !(curvature_threshold >= 0.0) {
        return Err(Error::arg(format!("curvature threshold must be non-negative, got {curvature_threshold}")));
    }
    let (mut num, mut den) = (0.0, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        for ((a, b), hit) in p.iter().zip(t).zip(nonlinear_mask(p, curvature_threshold)) {
            if hit {
                num += options.distance.eval(a, b);
                den += 1;
            }
        }
    }
    Ok((den > 0).then(|| num / den as f64))
}

/// Repeats the last observed displacement for `horizon` steps.
pub fn constant_velocity(observed: &[Point], horizon: usize) -> Result<Vec<Point>> {
    let n = observed.len();
    if n < 2 {
        return Err(Error::arg("constant-velocity extrapolation needs two observed points"));
    }
    let last = observed[n - 1];
    let (dx, dy) = (last.x - observed[n - 2].x, last.y - observed[n - 2].y);
    Ok((1..=horizon)
        .map(|k| Point::new(last.x + k as f64 * dx, last.y + k as f64 * dy))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ade,
    Fde,
    Nade,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ade, Metric::Fde, Metric::Nade];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ade => "ADE",
            Metric::Fde => "FDE",
            Metric::Nade => "n-ADE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: Metric,
    pub dataset: String,
    pub method: String,
    pub value: f64,
    pub count: usize,
}

/// Metric rows; an n-ADE with no nonlinear points is listed in `missing` instead.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub missing: Vec<(Metric, String, String)>,
}

pub const REPORT_HEADER: &str = "metric,dataset,method,value,count";

impl EvaluationReport {
    pub fn extend(&mut self, other: EvaluationReport) {
        self.rows.extend(other.rows);
        self.missing.extend(other.missing);
    }

    pub fn value(&self, metric: Metric, dataset: &str, method: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.dataset == dataset && r.method == method)
            .map(|r| r.value)
    }

    /// Adds the three metric rows for one method's predictions.
    pub fn push_method(
        &mut self,
        dataset: &str,
        method: &str,
        predicted: &[Vec<Point>],
        truth: &[Vec<Point>],
        t_obs: usize,
        t_pred: usize,
        settings: &EvalOptions,
    ) -> Result<()> {
        let count = predicted.len();
        let row = |metric, value| ReportRow {
            metric,
            dataset: dataset.to_string(),
            method: method.to_string(),
            value,
            count,
        };
        self.rows.push(row(Metric::Ade, ade(predicted, truth, t_obs, t_pred, settings.metrics)?));
        self.rows.push(row(Metric::Fde, fde(predicted, truth)?));
        match nade(predicted, truth, settings.curvature_threshold, settings.metrics)? {
            Some(v) => self.rows.push(row(Metric::Nade, v)),
            None => self.missing.push((Metric::Nade, dataset.to_string(), method.to_string())),
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:?},{}", r.metric.as_str(), r.dataset, r.method, r.value, r.count);
        }
        out
    }

    /// One line per (metric, dataset), one column per method.
    pub fn to_table(&self) -> String {
        let mut methods: Vec<&str> = Vec::new();
        let mut keys: Vec<(Metric, &str)> = Vec::new();
        let all = self
            .rows
            .iter()
            .map(|r| (r.metric, r.dataset.as_str(), r.method.as_str()))
            .chain(self.missing.iter().map(|(m, d, me)| (*m, d.as_str(), me.as_str())));
        for (metric, dataset, method) in all {
            if !methods.contains(&method) {
                methods.push(method);
            }
            if !keys.contains(&(metric, dataset)) {
                keys.push((metric, dataset));
            }
        }
        keys.sort_by_key(|&(m, _)| m);
        let mut cells: Vec<Vec<String>> = vec![["metric", "dataset"]
            .into_iter()
            .chain(methods.iter().copied())
            .map(String::from)
            .collect()];
        for (metric, dataset) in keys {
            let mut line = vec![metric.as_str().to_string(), dataset.to_string()];
            for m in &methods {
                line.push(match self.value(metric, dataset, m) {
                    Some(v) => format!("{v:.4}"),
                    None if self.missing.iter().any(|(mm, d, me)| *mm == metric && d == dataset && me == m) => {
                        "no-nonlinear".into()
                    }
                    None => "-".into(),
                });
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in cells {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub dataset: String,
    pub metrics: MetricOptions,
    pub curvature_threshold: f64,
    pub include_baseline: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            metrics: MetricOptions::default(),
            curvature_threshold: DEFAULT_CURVATURE_THRESHOLD,
            include_baseline: true,
        }
    }
}

pub const BASELINE_METHOD: &str = "CV";

pub fn method_name(set: &ClusterModelSet) -> String {
    format!("OUR_{}", set.ablation.as_str())
}

/// Predictions for instances in the models' normalized coordinates, routed through
/// the nearest cluster (or the single model).
pub fn predict_instances(models: &ClusterModelSet, test: &[TrainingInstance]) -> Result<Vec<Vec<Point>>> {
    test.iter()
        .map(|inst| {
            let (_, model) = models.route(&inst.observed)?;
            predict(model, &inst.observed, &inst.neighborhood)
        })
        .collect()
}

/// Evaluates a model set on normalized test instances. Errors are measured in scene
/// units, after inverting the set's normalization.
pub fn evaluate(models: &ClusterModelSet, test: &[TrainingInstance], options: &EvalOptions) -> Result<EvaluationReport> {
    let config = models
        .model_config()
        .ok_or_else(|| Error::Protocol("model set contains no model".into()))?;
    if let Some(bad) = test
        .iter()
        .find(|i| i.t_obs() != config.t_obs || i.t_pred() != config.t_pred)
    {
        return Err(Error::arg(format!(
            "test instance of pedestrian {} does not match t_obs={}, t_pred={}",
            bad.pedestrian_id, config.t_obs, config.t_pred
        )));
    }
    let tf = &models.transform;
    let truth: Vec<Vec<Point>> = test.iter().map(|i| tf.invert_all(&i.future)).collect();
    let predicted: Vec<Vec<Point>> = predict_instances(models, test)?
        .iter()
        .map(|p| tf.invert_all(p))
        .collect();

    let mut report = EvaluationReport::default();
    if options.include_baseline {
        let cv = test
            .iter()
            .map(|i| constant_velocity(&tf.invert_all(&i.observed), config.horizon()))
            .collect::<Result<Vec<_>>>()?;
        report.push_method(&options.dataset, BASELINE_METHOD, &cv, &truth, config.t_obs, config.t_pred, options)?;
    }
    report.push_method(
        &options.dataset,
        &method_name(models),
        &predicted,
        &truth,
        config.t_obs,
        config.t_pred,
        options,
    )?;
    Ok(report)
}
