//! Flat `key = value` run configuration shared by every subcommand.
//!
//! Precedence: built-in defaults, then the `--config` file, then `--set`
//! overrides, then dedicated command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use trajpred::anomaly::OutlierConfig;
use trajpred::clustering::{ClusterFeatures, DbscanConfig};
use trajpred::data::{SynthConfig, ZoneLayout};
use trajpred::evaluation::{Denominator, Distance, EvalOptions, MetricOptions};
use trajpred::model::{ModelConfig, OutputMode};
use trajpred::training::{Ablation, Optimizer, ProtocolConfig, TrainConfig};

use crate::CliError;

/// Every key with its default value and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    // paths
    ("scene", "", "input trajectory CSV (frame_id,pedestrian_id,x,y)"),
    ("labels", "", "labels CSV (pedestrian_id,label); written by synth, read by detect"),
    ("model", "model.tjf", "model file written by train, read by predict/eval/detect/plot"),
    ("out", "", "primary output file (scene CSV, predictions CSV or detection CSV)"),
    ("log", "train_log.csv", "training log CSV (epoch,mean_loss,wall_ms)"),
    ("report", "", "evaluation report CSV; the text table always goes to stdout"),
    ("plot_dir", "plots", "directory for plot SVG and polyline CSV files"),
    ("normal_scene", "", "held-out normal scene for the naive detection threshold"),
    // synthetic generator
    ("seed", "0", "generator seed"),
    ("n_pedestrians", "120", "synthetic pedestrians"),
    ("n_frames", "600", "synthetic frames"),
    ("zone_layout", "crossing", "preset (corridor, crossing, junction, plaza) or zones/routes text"),
    ("interaction_strength", "1.0", "scale of pairwise repulsion"),
    ("frame_rate", "5.0", "frames per second"),
    ("width", "30.0", "scene width (m)"),
    ("height", "30.0", "scene height (m)"),
    ("speed_mean", "1.3", "mean desired speed (m/s)"),
    ("speed_std", "0.15", "desired speed spread (m/s)"),
    ("heading_noise_deg", "0.0", "initial heading noise (degrees)"),
    ("anomaly_rate", "0.0", "fraction of abnormal pedestrians"),
    ("anomaly_speed_factor", "2.0", "speed factor of fast/slow anomalies"),
    // data and model
    ("t_obs", "20", "observed frames"),
    ("t_pred", "40", "observed plus predicted frames"),
    ("min_length", "0", "minimum trajectory length kept by the filter; 0 means t_pred"),
    ("stride", "10", "frames between training windows"),
    ("hidden_size", "32", "LSTM hidden units"),
    ("embedding_size", "16", "input embedding width"),
    ("output_mode", "absolute", "absolute or displacement decoder output"),
    ("normalize_hardwired", "false", "divide hardwired weights by their per-frame sum"),
    // clustering
    ("dbscan_eps", "0.08", "trajectory clustering radius (normalized units)"),
    ("dbscan_min_pts", "5", "trajectory clustering density"),
    ("cluster_features", "entry_exit", "entry_exit or full"),
    // training
    ("ablation", "cmb", "cmb, sc or sft"),
    ("epochs", "200", "training epochs"),
    ("learning_rate", "0.001", "optimizer step size"),
    ("batch_size", "16", "instances per update"),
    ("teacher_forcing", "true", "feed ground truth to the decoder while training"),
    ("train_seed", "0", "initialization and shuffling seed"),
    ("optimizer", "adam", "adam or sgd"),
    ("adam_beta1", "0.9", "adam first-moment decay"),
    ("adam_beta2", "0.999", "adam second-moment decay"),
    ("adam_epsilon", "1e-8", "adam denominator offset"),
    ("clip_norm", "5.0", "global gradient-norm clip; 0 disables"),
    // evaluation
    ("dataset", "synthetic", "dataset name in reports"),
    ("metric_denominator", "literal", "literal or terms"),
    ("metric_distance", "squared", "squared or euclidean"),
    ("curvature_threshold", "0.01", "n-ADE second-difference threshold (scene units)"),
    ("baseline", "true", "include the constant-velocity row"),
    ("eval_windows", "first", "first window per pedestrian, or sliding windows at stride"),
    // detection
    ("method", "hidden", "hidden or naive"),
    ("anomaly_min_pts", "5", "DBSCAN density for hidden-state outliers"),
    ("anomaly_eps", "auto", "DBSCAN radius on standardized features, or auto"),
    ("naive_threshold", "auto", "deviation threshold, or auto (percentile of normal scene)"),
    ("naive_percentile", "95", "percentile used by the automatic naive threshold"),
    ("confusion", "false", "print the confusion matrix (needs labels)"),
    // plotting
    ("plot_ids", "all", "comma-separated pedestrian ids, or all"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(usage(format!("unknown configuration key {key:?}"))),
        }
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    /// Applies a config file: `key = value` lines, `#` comments, blank lines ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| usage(format!("invalid value {raw:?} for key {key}")))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => Err(usage(format!("invalid boolean {other:?} for key {key}"))),
        }
    }

    /// A path-valued key; empty means unset.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| usage(format!("missing required setting {key} (use --{} or --set {key}=...)", key.replace('_', "-"))))
    }

    fn auto_or<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn synth(&self) -> Result<SynthConfig, CliError> {
        let width = self.parse("width")?;
        let height = self.parse("height")?;
        let cfg = SynthConfig {
            n_pedestrians: self.parse("n_pedestrians")?,
            n_frames: self.parse("n_frames")?,
            zone_layout: ZoneLayout::preset(self.get("zone_layout"), width, height)?,
            interaction_strength: self.parse("interaction_strength")?,
            seed: self.parse("seed")?,
            frame_rate: self.parse("frame_rate")?,
            width,
            height,
            speed_mean: self.parse("speed_mean")?,
            speed_std: self.parse("speed_std")?,
            heading_noise_deg: self.parse("heading_noise_deg")?,
            anomaly_rate: self.parse("anomaly_rate")?,
            anomaly_speed_factor: self.parse("anomaly_speed_factor")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelConfig, CliError> {
        let cfg = ModelConfig {
            hidden_size: self.parse("hidden_size")?,
            embedding_size: self.parse("embedding_size")?,
            t_obs: self.parse("t_obs")?,
            t_pred: self.parse("t_pred")?,
            output: OutputMode::parse(self.get("output_mode"))?,
            normalize_hardwired: self.flag("normalize_hardwired")?,
            ..ModelConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn min_length(&self) -> Result<usize, CliError> {
        let m: usize = self.parse("min_length")?;
        Ok(if m == 0 { self.parse("t_pred")? } else { m.max(2) })
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        let features = match self.get("cluster_features") {
            "entry_exit" => ClusterFeatures::EntryExit,
            "full" => ClusterFeatures::Full,
            other => return Err(usage(format!("cluster_features must be entry_exit or full, got {other:?}"))),
        };
        let dbscan = DbscanConfig {
            eps: self.parse("dbscan_eps")?,
            min_pts: self.parse("dbscan_min_pts")?,
        };
        dbscan.validate()?;
        let stride: usize = self.parse("stride")?;
        if stride == 0 {
            return Err(usage("stride must be at least 1"));
        }
        Ok(ProtocolConfig { dbscan, features, stride })
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let optimizer = match self.get("optimizer") {
            "adam" => Optimizer::Adam {
                beta1: self.parse("adam_beta1")?,
                beta2: self.parse("adam_beta2")?,
                epsilon: self.parse("adam_epsilon")?,
            },
            "sgd" => Optimizer::Sgd,
            other => return Err(usage(format!("optimizer must be adam or sgd, got {other:?}"))),
        };
        let clip: f64 = self.parse("clip_norm")?;
        let cfg = TrainConfig {
            epochs: self.parse("epochs")?,
            learning_rate: self.parse("learning_rate")?,
            batch_size: self.parse("batch_size")?,
            teacher_forcing: self.flag("teacher_forcing")?,
            seed: self.parse("train_seed")?,
            optimizer,
            clip_norm: (clip > 0.0).then_some(clip),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ablation(&self) -> Result<Ablation, CliError> {
        Ok(Ablation::parse(self.get("ablation"))?)
    }

    pub fn eval(&self) -> Result<EvalOptions, CliError> {
        Ok(EvalOptions {
            dataset: self.get("dataset").to_string(),
            metrics: MetricOptions {
                denominator: Denominator::parse(self.get("metric_denominator"))?,
                distance: Distance::parse(self.get("metric_distance"))?,
            },
            curvature_threshold: self.parse("curvature_threshold")?,
            include_baseline: self.flag("baseline")?,
        })
    }

    pub fn sliding_eval(&self) -> Result<bool, CliError> {
        match self.get("eval_windows") {
            "first" => Ok(false),
            "sliding" => Ok(true),
            other => Err(usage(format!("eval_windows must be first or sliding, got {other:?}"))),
        }
    }

    pub fn outliers(&self) -> Result<OutlierConfig, CliError> {
        Ok(OutlierConfig {
            min_pts: self.parse("anomaly_min_pts")?,
            eps: self.auto_or("anomaly_eps")?,
        })
    }

    pub fn naive_threshold(&self) -> Result<Option<f64>, CliError> {
        self.auto_or("naive_threshold")
    }

    pub fn naive_percentile(&self) -> Result<f64, CliError> {
        let p: f64 = self.parse("naive_percentile")?;
        if !(0.0..=100.0).contains(&p) {
            return Err(usage(format!("naive_percentile must lie in [0, 100], got {p}")));
        }
        Ok(p)
    }

    pub fn method(&self) -> Result<Method, CliError> {
        match self.get("method") {
            "hidden" => Ok(Method::Hidden),
            "naive" => Ok(Method::Naive),
            other => Err(usage(format!("method must be hidden or naive, got {other:?}"))),
        }
    }

    pub fn confusion(&self) -> Result<bool, CliError> {
        self.flag("confusion")
    }

    /// `None` means every pedestrian.
    pub fn plot_ids(&self) -> Result<Option<Vec<i64>>, CliError> {
        let raw = self.get("plot_ids");
        if raw == "all" {
            return Ok(None);
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("plot_ids: {s:?} is not a pedestrian id")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Every key with its current value, one `key = value` line each.
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _, help)| format!("{k} = {}    # {help}\n", self.get(k)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hidden,
    Naive,
}
