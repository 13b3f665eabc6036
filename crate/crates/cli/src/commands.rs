use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use trajpred::anomaly::{
    collect_features, confusion, detect_outliers, deviation_scores, labels_of, pedestrian_windows, percentile,
    threshold_detections, write_detections, Detection,
};
use trajpred::data::synth::{parse_labels, write_labels};
use trajpred::data::{
    filter_trajectories, make_instances, normalize, parse_trajectories, synth_generate, write_trajectories, Label,
    Scene, TrainingInstance, TrajectoryFormat,
};
use trajpred::evaluation::{evaluate, predict_instances};
use trajpred::training::{load_model, save_model, train_per_cluster, write_training_log, ClusterModelSet};

use crate::config::{Method, RunConfig};
use crate::{plot as svg, CliError};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_scene(path: &Path) -> Result<Scene, CliError> {
    parse_trajectories(open(path)?, TrajectoryFormat::Csv)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_models(cfg: &RunConfig) -> Result<ClusterModelSet, CliError> {
    let path = cfg.require_path("model")?;
    load_model(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// The model set plus the input scene mapped into the models' coordinates.
fn load_inputs(cfg: &RunConfig) -> Result<(ClusterModelSet, Scene), CliError> {
    let models = read_models(cfg)?;
    let scene = read_scene(&cfg.require_path("scene")?)?;
    let scene = models.transform.apply_scene(&scene);
    Ok((models, scene))
}

fn t_obs_pred(models: &ClusterModelSet) -> Result<(usize, usize), CliError> {
    let c = models
        .model_config()
        .ok_or_else(|| CliError::Data("model file contains no model".into()))?;
    Ok((c.t_obs, c.t_pred))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let synth = cfg.synth()?;
    let out = cfg.require_path("out")?;
    let generated = synth_generate(&synth)?;
    write_trajectories(&generated.scene, create(&out)?)?;
    if let Some(labels) = cfg.path("labels") {
        write_labels(&generated.labels, create(&labels)?)?;
    }
    let abnormal = generated.labels.values().filter(|l| **l == Label::Abnormal).count();
    info!(
        "wrote {} pedestrians ({} abnormal), {} points to {}",
        generated.scene.trajectories.len(),
        abnormal,
        generated.scene.point_count(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let model_config = cfg.model()?;
    let train = cfg.train()?;
    let protocol = cfg.protocol()?;
    let ablation = cfg.ablation()?;
    let min_length = cfg.min_length()?;
    let model_path = cfg.require_path("model")?;

    let scene = read_scene(&cfg.require_path("scene")?)?;
    let scene = filter_trajectories(&scene, min_length)?;
    if scene.trajectories.is_empty() {
        return Err(CliError::Data(format!(
            "no contiguous trajectory with at least {min_length} frames survives the filter"
        )));
    }
    let (scene, transform) = normalize(&scene).map_err(|e| CliError::Data(e.to_string()))?;
    let trained = train_per_cluster(&scene, transform, &protocol, model_config, &train, ablation)?;
    save_model(&trained.set, &model_path)?;
    if let Some(log) = cfg.path("log") {
        write_training_log(&trained.combined_log(), create(&log)?)?;
    }
    for l in &trained.logs {
        let last = l.log.last().map(|r| r.mean_loss).unwrap_or(f64::NAN);
        match l.cluster_id {
            Some(c) => info!("cluster {c}: {} instances, final loss {last:e}", l.instances),
            None => info!("single model: {} instances, final loss {last:e}", l.instances),
        }
    }
    println!(
        "trained {} model(s) ({}) -> {}",
        trained.logs.len(),
        ablation.as_str(),
        model_path.display()
    );
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let (models, scene) = load_inputs(cfg)?;
    let (t_obs, _) = t_obs_pred(&models)?;
    let windows = pedestrian_windows(&scene, t_obs, t_obs + 1, false)?;
    let predictions = predict_instances(&models, &windows)?;
    let mut sink: Box<dyn Write> = match cfg.path("out") {
        Some(p) => Box::new(create(&p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "pedestrian_id,cluster_id,step,frame_id,x,y").map_err(trajpred::Error::from)?;
    for (w, pred) in windows.iter().zip(&predictions) {
        let (cluster, _) = models.route(&w.observed)?;
        let cluster = cluster.map(|c| c.to_string()).unwrap_or_default();
        for (k, p) in models.transform.invert_all(pred).iter().enumerate() {
            writeln!(
                sink,
                "{},{cluster},{},{},{:?},{:?}",
                w.pedestrian_id,
                k + 1,
                w.start_frame + (t_obs + k) as i64,
                p.x,
                p.y
            )
            .map_err(trajpred::Error::from)?;
        }
    }
    sink.flush().map_err(trajpred::Error::from)?;
    info!("predicted {} pedestrians", windows.len());
    Ok(())
}

fn test_windows(cfg: &RunConfig, scene: &Scene, models: &ClusterModelSet) -> Result<Vec<TrainingInstance>, CliError> {
    let (t_obs, t_pred) = t_obs_pred(models)?;
    let windows = if cfg.sliding_eval()? {
        let stride = cfg.protocol()?.stride;
        make_instances(scene, t_obs, t_pred, stride)?
    } else {
        pedestrian_windows(scene, t_obs, t_pred, true)?
    };
    if windows.is_empty() {
        return Err(CliError::Data(format!("no pedestrian in the scene covers {t_pred} consecutive frames")));
    }
    Ok(windows)
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let options = cfg.eval()?;
    let (models, scene) = load_inputs(cfg)?;
    let windows = test_windows(cfg, &scene, &models)?;
    let report = evaluate(&models, &windows, &options)?;
    print!("{}", report.to_table());
    if let Some(path) = cfg.path("report") {
        let mut sink = create(&path)?;
        sink.write_all(report.to_csv().as_bytes()).map_err(trajpred::Error::from)?;
        sink.flush().map_err(trajpred::Error::from)?;
    }
    Ok(())
}

/// Naive threshold: explicit value, else a percentile of the deviation scores on a
/// normal reference scene, else the same percentile on the scene under test.
fn naive_threshold(cfg: &RunConfig, models: &ClusterModelSet, scores: &[f64]) -> Result<f64, CliError> {
    if let Some(t) = cfg.naive_threshold()? {
        return Ok(t);
    }
    let q = cfg.naive_percentile()?;
    let reference = match cfg.path("normal_scene") {
        Some(path) => {
            let normal = models.transform.apply_scene(&read_scene(&path)?);
            let windows = test_windows(cfg, &normal, models)?;
            deviation_scores(models, &windows)?
        }
        None => {
            warn!("no normal_scene given; naive threshold taken from the scene under test");
            scores.to_vec()
        }
    };
    Ok(percentile(&reference, q)?)
}

pub fn detect(cfg: &RunConfig) -> Result<(), CliError> {
    let method = cfg.method()?;
    let want_confusion = cfg.confusion()?;
    let labels_path = cfg.path("labels");
    if want_confusion && labels_path.is_none() {
        return Err(CliError::Usage("--confusion needs a labels file (--labels)".into()));
    }
    let (models, scene) = load_inputs(cfg)?;
    let (t_obs, t_pred) = t_obs_pred(&models)?;
    // Both methods see the same pedestrians: those with a full first window.
    let windows = pedestrian_windows(&scene, t_obs, t_pred, true)?;
    if windows.is_empty() {
        return Err(CliError::Data(format!("no pedestrian in the scene covers {t_pred} consecutive frames")));
    }
    let detections: Vec<Detection> = match method {
        Method::Hidden => {
            let features = collect_features(&models, &windows)?;
            let report = detect_outliers(&features, &cfg.outliers()?)?;
            info!("hidden-state DBSCAN eps = {}", report.eps);
            report.detections
        }
        Method::Naive => {
            let scores = deviation_scores(&models, &windows)?;
            let threshold = naive_threshold(cfg, &models, &scores)?;
            info!("naive deviation threshold = {threshold}");
            threshold_detections(&windows, &scores, threshold)
        }
    };
    match cfg.path("out") {
        Some(p) => {
            let mut sink = create(&p)?;
            write_detections(&detections, &mut sink)?;
            sink.flush().map_err(trajpred::Error::from)?;
        }
        None => write_detections(&detections, std::io::stdout().lock())?,
    }
    if let Some(path) = labels_path {
        let truth = parse_labels(open(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let predicted = labels_of(&detections);
        let truth: BTreeMap<i64, Label> = predicted
            .keys()
            .map(|id| {
                truth
                    .get(id)
                    .map(|l| (*id, *l))
                    .ok_or_else(|| CliError::Data(format!("pedestrian {id} has no label in {}", path.display())))
            })
            .collect::<Result<_, _>>()?;
        let m = confusion(&predicted, &truth)?;
        println!("{m}");
        println!(
            "recall {:.3}  false positive rate {:.3}  ({} pedestrians)",
            m.recall(),
            m.false_positive_rate(),
            m.total()
        );
    }
    Ok(())
}

pub fn plot(cfg: &RunConfig) -> Result<(), CliError> {
    let ids = cfg.plot_ids()?;
    let dir: PathBuf = cfg.require_path("plot_dir")?;
    let (models, scene) = load_inputs(cfg)?;
    let (t_obs, t_pred) = t_obs_pred(&models)?;
    let windows = pedestrian_windows(&scene, t_obs, t_pred, true)?;
    let selected: Vec<&TrainingInstance> = match &ids {
        None => windows.iter().collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                windows.iter().find(|w| w.pedestrian_id == *id).ok_or_else(|| {
                    CliError::Usage(format!(
                        "pedestrian {id} not found (or shorter than {t_pred} consecutive frames)"
                    ))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    for w in &selected {
        let owned = [(*w).clone()];
        let pred = predict_instances(&models, &owned)?.remove(0);
        let poly = svg::Polylines::new(w, &pred, &models.transform);
        let stem = dir.join(format!("pedestrian_{}", w.pedestrian_id));
        let mut f = create(&stem.with_extension("svg"))?;
        f.write_all(poly.to_svg().as_bytes()).map_err(trajpred::Error::from)?;
        f.flush().map_err(trajpred::Error::from)?;
        let mut f = create(&stem.with_extension("csv"))?;
        f.write_all(poly.to_csv().as_bytes()).map_err(trajpred::Error::from)?;
        f.flush().map_err(trajpred::Error::from)?;
    }
    println!("wrote {} plot(s) to {}", selected.len(), dir.display());
    Ok(())
}
