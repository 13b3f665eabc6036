use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use trajpred::data::synth::parse_labels;
use trajpred::data::{parse_trajectories, Label, TrajectoryFormat};
use trajpred::training::load_model;

fn trajpred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajpred"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = trajpred(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = trajpred(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

/// Writes `frame_id,pedestrian_id,x,y` rows.
fn write_scene(path: &Path, rows: &[(i64, i64, f64, f64)]) {
    let mut s = String::from("frame_id,pedestrian_id,x,y\n");
    for (f, id, x, y) in rows {
        s.push_str(&format!("{f},{id},{x},{y}\n"));
    }
    fs::write(path, s).unwrap();
}

/// Straight walkers that never share a frame, so every neighbourhood is empty.
fn straight_scene(path: &Path, walkers: i64, len: i64) {
    let mut rows = Vec::new();
    for id in 0..walkers {
        let start = id * (len + 5);
        for k in 0..len {
            rows.push((start + k, id, 1.0 + 0.5 * k as f64, 2.0 + id as f64 * 0.25));
        }
    }
    write_scene(path, &rows);
}

const SMALL_MODEL: &[&str] = &[
    "--set", "hidden_size=8", "--set", "embedding_size=4", "--set", "t_obs=5", "--set", "t_pred=10",
];

fn synth_corridor(dir: &TempDir, name: &str, seed: &str, extra: &[&str]) -> String {
    let out = p(dir, name);
    let mut args = vec![
        "synth", "--out", &out, "--seed", seed, "--zone-layout", "corridor", "--n-pedestrians", "40",
        "--n-frames", "200",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = synth_corridor(&dir, "a.csv", "7", &[]);
    let b = synth_corridor(&dir, "b.csv", "7", &[]);
    let c = synth_corridor(&dir, "c.csv", "8", &[]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let scene = parse_trajectories(fs::File::open(&a).unwrap(), TrajectoryFormat::Csv).unwrap();
    assert_eq!(scene.trajectories.len(), 40);
}

#[test]
fn anomaly_rate_controls_label_share() {
    let dir = TempDir::new().unwrap();
    let labels = p(&dir, "labels.csv");
    ok(&[
        "synth", "--out", &p(&dir, "s.csv"), "--seed", "3", "--labels", &labels, "--anomaly-rate", "0.1",
        "--n-pedestrians", "400", "--n-frames", "100",
    ]);
    let labels = parse_labels(fs::File::open(&labels).unwrap()).unwrap();
    assert_eq!(labels.len(), 400);
    let abnormal = labels.values().filter(|l| **l == Label::Abnormal).count();
    // Binomial(400, 0.1): mean 40, sd 6; four sigma either side.
    assert!((16..=64).contains(&abnormal), "{abnormal} abnormal");
}

#[test]
fn unknown_keys_and_bad_values_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "s.csv");
    let (c, err) = code(&["synth", "--out", &out, "--set", "n_pedestrianz=3"]);
    assert_eq!(c, 2);
    assert!(err.contains("n_pedestrianz"), "{err}");

    let cfg = p(&dir, "run.cfg");
    fs::write(&cfg, "seed = 1\nwidht = 3\n").unwrap();
    let (c, err) = code(&["synth", "--out", &out, "--config", &cfg]);
    assert_eq!(c, 2);
    assert!(err.contains("widht"), "{err}");

    let (c, _) = code(&["synth", "--out", &out, "--anomaly-rate", "1.5"]);
    assert_eq!(c, 2);
    let (c, _) = code(&["synth", "--out", &out, "--seed", "minus-one"]);
    assert_eq!(c, 2);
    let (c, _) = code(&["frobnicate"]);
    assert_eq!(c, 2);
}

#[test]
fn flags_override_set_which_overrides_file() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "run.cfg");
    fs::write(&cfg, "# comment\nepochs = 3\nhidden_size = 12\nseed = 4\n").unwrap();
    let dump = ok(&["config", "--config", &cfg, "--set", "epochs=5"]);
    assert!(dump.contains("epochs = 5 "), "{dump}");
    assert!(dump.contains("hidden_size = 12 "));
    assert!(dump.contains("t_obs = 20 "));
    // Every key is documented.
    assert!(dump.lines().all(|l| l.contains(" # ")));

    let out = p(&dir, "s.csv");
    let labels = p(&dir, "l.csv");
    ok(&[
        "synth", "--config", &cfg, "--set", "seed=9", "--seed", "11", "--out", &out, "--labels", &labels,
        "--n-pedestrians", "5", "--n-frames", "50",
    ]);
    let via_flag = fs::read(&out).unwrap();
    ok(&["synth", "--set", "seed=11", "--out", &out, "--n-pedestrians", "5", "--n-frames", "50"]);
    assert_eq!(via_flag, fs::read(&out).unwrap());
}

#[test]
fn train_builds_one_model_per_cluster() {
    let dir = TempDir::new().unwrap();
    let scene = synth_corridor(&dir, "s.csv", "1", &[]);
    let model = p(&dir, "m.tjf");
    let log = p(&dir, "log.csv");
    let mut args = vec!["train", "--scene", &scene, "--model", &model, "--log", &log, "--epochs", "2"];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    // The corridor has two routes (west→east and east→west), hence two clusters.
    let set = load_model(&model).unwrap();
    assert_eq!(set.models.len(), 2);
    assert!(set.single_model.is_none());
    let first = fs::read_to_string(&log).unwrap();
    assert!(first.starts_with("epoch,mean_loss,wall_ms\n"));
    assert_eq!(first.lines().count(), 3);

    // Same seed: identical losses (wall times differ).
    ok(&args);
    let second = fs::read_to_string(&log).unwrap();
    let losses = |s: &str| s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(losses(&first), losses(&second));

    args.extend_from_slice(&["--ablation", "sc"]);
    ok(&args);
    let set = load_model(&model).unwrap();
    assert!(set.models.is_empty());
    assert!(set.single_model.is_some());
}

#[test]
fn train_on_empty_filtered_scene_exits_3() {
    let dir = TempDir::new().unwrap();
    let scene = p(&dir, "s.csv");
    straight_scene(Path::new(&scene), 3, 8);
    let model = p(&dir, "m.tjf");
    let mut args = vec!["train", "--scene", &scene, "--model", &model];
    args.extend_from_slice(SMALL_MODEL);
    let (c, err) = code(&args);
    assert_eq!(c, 3, "{err}");
    let (c, _) = code(&["train", "--scene", &p(&dir, "missing.csv"), "--model", &model]);
    assert_eq!(c, 3);
}

/// Trains a single model on straight walkers until it reproduces them.
fn overfit(dir: &TempDir) -> (String, String) {
    let scene = p(dir, "straight.csv");
    straight_scene(Path::new(&scene), 4, 10);
    let model = p(dir, "m.tjf");
    let mut args = vec![
        "train", "--scene", &scene, "--model", &model, "--ablation", "sc", "--epochs", "1500", "--set",
        "learning_rate=0.01", "--set", "stride=1", "--set", "batch_size=4",
    ];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    (scene, model)
}

#[test]
fn eval_overfit_report_and_denominator() {
    let dir = TempDir::new().unwrap();
    let (scene, model) = overfit(&dir);
    let report = p(&dir, "report.csv");
    let table = ok(&["eval", "--scene", &scene, "--model", &model, "--report", &report]);
    assert!(table.contains("OUR_sc") && table.contains("CV"), "{table}");
    let csv = fs::read_to_string(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("metric,dataset,method,value,count"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5));
    let ade = rows
        .iter()
        .find(|r| r[0] == "ADE" && r[2] == "OUR_sc")
        .map(|r| r[3].parse::<f64>().unwrap())
        .unwrap();
    assert!(ade < 1e-2, "overfit ADE {ade}");

    let (c, _) = code(&["eval", "--scene", &scene, "--model", &p(&dir, "nope.tjf")]);
    assert_eq!(c, 3);
    fs::write(p(&dir, "junk.tjf"), b"TJF1 not really").unwrap();
    let (c, err) = code(&["eval", "--scene", &scene, "--model", &p(&dir, "junk.tjf")]);
    assert_eq!(c, 3, "{err}");
}

fn ade_of(report: &str, method: &str) -> f64 {
    report
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|r| r[0] == "ADE" && r[2] == method)
        .map(|r| r[3].parse().unwrap())
        .unwrap()
}

#[test]
fn terms_denominator_scales_ade_by_19_over_20() {
    let dir = TempDir::new().unwrap();
    let scene = synth_corridor(&dir, "s.csv", "2", &[]);
    let model = p(&dir, "m.tjf");
    ok(&[
        "train", "--scene", &scene, "--model", &model, "--epochs", "1", "--hidden-size", "4", "--set",
        "embedding_size=2", "--ablation", "sc",
    ]);
    let lit = p(&dir, "lit.csv");
    let terms = p(&dir, "terms.csv");
    ok(&["eval", "--scene", &scene, "--model", &model, "--report", &lit]);
    ok(&["eval", "--scene", &scene, "--model", &model, "--report", &terms, "--metric-denominator", "terms"]);
    let (lit, terms) = (fs::read_to_string(&lit).unwrap(), fs::read_to_string(&terms).unwrap());
    for method in ["OUR_sc", "CV"] {
        let (a, b) = (ade_of(&lit, method), ade_of(&terms, method));
        assert!((b - a * 19.0 / 20.0).abs() <= 1e-12 * a.abs().max(1.0), "{method}: {a} vs {b}");
    }
    let (c, _) = code(&["eval", "--scene", &scene, "--model", &model, "--metric-denominator", "median"]);
    assert_eq!(c, 2);
}

#[test]
fn predict_emits_horizon_points_per_pedestrian() {
    let dir = TempDir::new().unwrap();
    let scene = synth_corridor(&dir, "s.csv", "5", &[]);
    let model = p(&dir, "m.tjf");
    let mut args = vec!["train", "--scene", &scene, "--model", &model, "--epochs", "1"];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    let out = p(&dir, "pred.csv");
    ok(&["predict", "--scene", &scene, "--model", &model, "--out", &out]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pedestrian_id,cluster_id,step,frame_id,x,y"));
    let mut per_ped: BTreeMap<String, usize> = BTreeMap::new();
    for l in lines {
        *per_ped.entry(l.split(',').next().unwrap().to_string()).or_default() += 1;
    }
    assert!(!per_ped.is_empty());
    assert!(per_ped.values().all(|&n| n == 5));
}

/// Normal training scene, labelled test scene and a trained cmb model.
fn detection_fixture(dir: &TempDir) -> (String, String, String) {
    let common = ["--zone-layout", "corridor", "--n-frames", "300", "--n-pedestrians", "120"];
    let normal = p(dir, "normal.csv");
    let mut args = vec!["synth", "--out", &normal, "--seed", "21"];
    args.extend_from_slice(&common);
    ok(&args);
    let test = p(dir, "test.csv");
    let labels = p(dir, "labels.csv");
    let mut args = vec!["synth", "--out", &test, "--labels", &labels, "--seed", "22", "--anomaly-rate", "0.15"];
    args.extend_from_slice(&common);
    ok(&args);
    let model = p(dir, "m.tjf");
    let mut args = vec![
        "train", "--scene", &normal, "--model", &model, "--epochs", "15", "--set", "learning_rate=0.005",
    ];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    (test, labels, model)
}

fn recall(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("recall ")).expect("recall line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn detect_methods_and_confusion_layout() {
    let dir = TempDir::new().unwrap();
    let (test, labels, model) = detection_fixture(&dir);

    // Without labels: the detection CSV and nothing else.
    let only_csv = ok(&["detect", "--scene", &test, "--model", &model]);
    let mut lines = only_csv.lines();
    assert_eq!(lines.next(), Some("pedestrian_id,label,score"));
    assert!(lines.all(|l| l.split(',').count() == 3));

    let (c, err) = code(&["detect", "--scene", &test, "--model", &model, "--confusion"]);
    assert_eq!(c, 2, "{err}");

    let out = p(&dir, "det.csv");
    let hidden = ok(&[
        "detect", "--scene", &test, "--model", &model, "--labels", &labels, "--confusion", "--out", &out,
    ]);
    let table: Vec<&str> = hidden.lines().collect();
    assert!(table[0].trim_start().starts_with("Predicted"), "{hidden}");
    assert!(table[1].contains("Abnormal") && table[1].contains("Normal"));
    assert!(table[2].starts_with("Ground") && table[2].contains("Abnormal"));
    assert!(table[3].starts_with("Truth") && table[3].contains("Normal"));
    assert!(fs::read_to_string(&out).unwrap().starts_with("pedestrian_id,label,score\n"));

    let naive = ok(&[
        "detect", "--scene", &test, "--model", &model, "--labels", &labels, "--confusion", "--out", &out, "--method",
        "naive",
    ]);
    assert!(
        recall(&hidden) >= recall(&naive),
        "hidden:\n{hidden}\nnaive:\n{naive}"
    );
}

#[test]
fn plot_writes_svg_and_polylines() {
    let dir = TempDir::new().unwrap();
    let (scene, model) = overfit(&dir);
    let plots = p(&dir, "plots");
    ok(&["plot", "--scene", &scene, "--model", &model, "--plot-dir", &plots, "--ids", "0,2"]);
    for id in [0, 2] {
        let base = PathBuf::from(&plots).join(format!("pedestrian_{id}"));
        let svg = fs::read_to_string(base.with_extension("svg")).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
        let strokes: Vec<&str> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .filter_map(|n| n.attribute("stroke"))
            .collect();
        for color in ["green", "blue", "red"] {
            assert!(strokes.contains(&color), "{color} missing in {strokes:?}");
        }

        let csv = fs::read_to_string(base.with_extension("csv")).unwrap();
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let role = |r: &str| rows.iter().filter(|row| row[1] == r).collect::<Vec<_>>();
        assert_eq!(role("observed").len(), 5);
        assert_eq!(role("truth").len(), 5);
        assert_eq!(role("prediction").len(), 5);
        // After overfitting, the red line lies on the blue one.
        for (t, q) in role("truth").iter().zip(role("prediction")) {
            let d = ((t[3].parse::<f64>().unwrap() - q[3].parse::<f64>().unwrap()).powi(2)
                + (t[4].parse::<f64>().unwrap() - q[4].parse::<f64>().unwrap()).powi(2))
            .sqrt();
            assert!(d < 0.1, "prediction {d} m from truth");
        }
    }
    let (c, err) = code(&["plot", "--scene", &scene, "--model", &model, "--plot-dir", &plots, "--ids", "99"]);
    assert_eq!(c, 2);
    assert!(err.contains("99"));
}
