//! Shared fixtures and a plain-loop reference implementation of the predictor.
#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajpred::data::{NeighborSlot, NeighborhoodTensor, Point, TrainingInstance, SLOT_COUNT};
use trajpred::model::{hardwired_weights, AttentionMode, ModelConfig, OutputMode, PredictionModel};

pub fn small_config(hidden: usize, t_obs: usize, t_pred: usize, mode: AttentionMode) -> ModelConfig {
    ModelConfig {
        hidden_size: hidden,
        embedding_size: (hidden / 2).max(2),
        t_obs,
        t_pred,
        mode,
        ..ModelConfig::default()
    }
}

fn wander(rng: &mut ChaCha8Rng, len: usize, start: Point) -> Vec<Point> {
    let mut p = start;
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..len)
        .map(|_| {
            heading += rng.gen_range(-0.3..0.3);
            p = Point::new(p.x + 0.02 * heading.cos(), p.y + 0.02 * heading.sin());
            p
        })
        .collect()
}

/// A random normalized-coordinate instance with `real` non-dummy neighbour slots
/// scattered among the 30.
pub fn random_instance(rng: &mut ChaCha8Rng, t_obs: usize, t_pred: usize, real: usize) -> TrainingInstance {
    let start = Point::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
    let path = wander(rng, t_pred, start);
    let observed = path[..t_obs].to_vec();
    let mut neighborhood = NeighborhoodTensor::empty(&observed);
    let mut free: Vec<usize> = (0..SLOT_COUNT).collect();
    for n in 0..real.min(SLOT_COUNT) {
        let slot = free.swap_remove(rng.gen_range(0..free.len()));
        let off = Point::new(start.x + rng.gen_range(-0.2..0.2), start.y + rng.gen_range(-0.2..0.2));
        let trajectory = wander(rng, t_obs, off);
        neighborhood.slots[slot] = NeighborSlot {
            weights: hardwired_weights(&observed, &trajectory),
            trajectory,
            is_dummy: false,
            sources: vec![n as i64],
        };
    }
    TrainingInstance {
        pedestrian_id: 0,
        start_frame: 0,
        observed,
        future: path[t_obs..].to_vec(),
        neighborhood,
        cluster_id: None,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- reference implementation -------------------------------------------------

fn param<'a>(m: &'a PredictionModel, name: &str) -> (&'a [f64], usize, usize) {
    let p = m.params.get(name).unwrap_or_else(|| panic!("missing {name}"));
    (p.value.as_slice(), p.value.rows(), p.value.cols())
}

fn matvec(m: &PredictionModel, name: &str, x: &[f64]) -> Vec<f64> {
    let (w, rows, cols) = param(m, name);
    assert_eq!(cols, x.len(), "{name}");
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..cols {
            out[r] += w[r * cols + c] * x[c];
        }
    }
    out
}

fn plus(a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn bias<'a>(m: &'a PredictionModel, name: &str) -> &'a [f64] {
    param(m, name).0
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(h, c)` after one step of an LSTM with gate order input, forget, candidate, output.
pub fn ref_lstm(m: &PredictionModel, prefix: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let xh: Vec<f64> = x.iter().chain(h).copied().collect();
    let z = plus(matvec(m, &format!("{prefix}.w"), &xh), bias(m, &format!("{prefix}.b")));
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sig(z[k]);
        let f = sig(z[n + k]);
        let g = z[2 * n + k].tanh();
        let o = sig(z[3 * n + k]);
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

pub fn ref_encode(m: &PredictionModel, which: &str, path: &[Point]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = m.config.hidden_size;
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    let mut states = Vec::new();
    for p in path {
        let e = plus(matvec(m, &format!("{which}.embed.w"), &[p.x, p.y]), bias(m, &format!("{which}.embed.b")));
        (h, c) = ref_lstm(m, &format!("{which}.lstm"), &e, &h, &c);
        states.push(h.clone());
    }
    (states, c)
}

pub struct RefOutput {
    pub points: Vec<Point>,
    pub alphas: Vec<Vec<f64>>,
    pub hardwired: Vec<f64>,
}

/// Plain-loop forward pass; `teacher` replaces fed-back outputs with ground truth.
pub fn ref_predict(m: &PredictionModel, inst: &TrainingInstance, teacher: Option<&[Point]>) -> RefOutput {
    let cfg = m.config;
    let n = cfg.hidden_size;
    let (enc, c_last) = ref_encode(m, "encoder", &inst.observed);

    let mut hardwired = vec![0.0; n];
    if cfg.mode == AttentionMode::Combined {
        let real: Vec<&NeighborSlot> = inst.neighborhood.slots.iter().filter(|s| !s.is_dummy).collect();
        let mut w: Vec<Vec<f64>> = real.iter().map(|s| s.weights.clone()).collect();
        if cfg.normalize_hardwired {
            for j in 0..cfg.t_obs {
                let total: f64 = w.iter().map(|r| r[j]).sum();
                if total > 0.0 {
                    for r in w.iter_mut() {
                        r[j] /= total;
                    }
                }
            }
        }
        for (slot, ws) in real.iter().zip(&w) {
            let (states, _) = ref_encode(m, "neighbor", &slot.trajectory);
            for (hj, wj) in states.iter().zip(ws) {
                for k in 0..n {
                    hardwired[k] += wj * hj[k];
                }
            }
        }
    }

    let keys: Vec<Vec<f64>> = enc.iter().map(|h| matvec(m, "attention.key.w", h)).collect();
    let v = bias(m, "attention.out.w");
    let mut s = enc.last().unwrap().clone();
    let mut c = c_last;
    let mut y_prev = *inst.observed.last().unwrap();
    let mut out = RefOutput {
        points: Vec::new(),
        alphas: Vec::new(),
        hardwired: hardwired.clone(),
    };
    for t in 0..cfg.horizon() {
        let q = plus(matvec(m, "attention.query.w", &s), bias(m, "attention.query.b"));
        let e: Vec<f64> = keys
            .iter()
            .map(|k| (0..q.len()).map(|a| v[a] * (q[a] + k[a]).tanh()).sum())
            .collect();
        let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = e.iter().map(|x| (x - mx).exp()).collect();
        let z: f64 = ex.iter().sum();
        let alpha: Vec<f64> = ex.iter().map(|x| x / z).collect();
        let mut soft = vec![0.0; n];
        for (a, h) in alpha.iter().zip(&enc) {
            for k in 0..n {
                soft[k] += a * h[k];
            }
        }
        let both: Vec<f64> = soft.iter().chain(&hardwired).copied().collect();
        let merged: Vec<f64> = matvec(m, "merge.w", &both).iter().map(|x| x.tanh()).collect();
        let emb = plus(matvec(m, "decoder.embed.w", &[y_prev.x, y_prev.y]), bias(m, "decoder.embed.b"));
        let input: Vec<f64> = emb.iter().chain(&merged).copied().collect();
        (s, c) = ref_lstm(m, "decoder.lstm", &input, &s, &c);
        let proj = plus(matvec(m, "output.w", &s), bias(m, "output.b"));
        let y = match cfg.output {
            OutputMode::Absolute => Point::new(proj[0], proj[1]),
            OutputMode::Displacement => Point::new(y_prev.x + proj[0], y_prev.y + proj[1]),
        };
        out.points.push(y);
        out.alphas.push(alpha);
        y_prev = match teacher {
            Some(tr) => tr[t],
            None => y,
        };
    }
    out
}

/// Mean over steps of the squared Euclidean error, computed by plain loops.
pub fn ref_loss(pred: &[Point], truth: &[Point]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(a, b)| (a.x - b.x).powi(2) + (a.y - b.y).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
