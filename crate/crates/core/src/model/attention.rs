//! Single-operation entry points into the attention model, used for inspection and
//! testing. Each one records the same tape operations the full forward pass uses.

use super::forward::encode_on_tape;
use super::{AttentionMode, OutputMode, PredictionModel};
use crate::data::Point;
use crate::error::{Error, Result};
use crate::numerics::{LstmState, Tape};

/// Distances below this (normalized units) are clamped before inversion.
pub const DISTANCE_FLOOR: f64 = 0.01;

/// Inverse-distance weights `1 / max(dist_j, DISTANCE_FLOOR)` per timestep.
pub fn hardwired_weights(target: &[Point], neighbor: &[Point]) -> Vec<f64> {
    target
        .iter()
        .zip(neighbor)
        .map(|(a, b)| 1.0 / a.dist(b).max(DISTANCE_FLOOR))
        .collect()
}

/// All encoder hidden states of one path, plus the final LSTM state.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub states: Vec<Vec<f64>>,
    pub final_state: LstmState,
}

/// Context vectors of one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVectors {
    pub soft: Vec<f64>,
    pub hardwired: Vec<f64>,
    pub merged: Vec<f64>,
    pub attention_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Target,
    Neighbor,
}

/// Encodes a `t_obs`-point path with the target or the shared neighbour encoder.
pub fn encode(model: &PredictionModel, path: &[Point], which: Encoder) -> Result<EncodedSequence> {
    if path.len() != model.config.t_obs {
        return Err(Error::arg(format!(
            "path has {} points, t_obs is {}",
            path.len(),
            model.config.t_obs
        )));
    }
    let ids = model.ids()?;
    let enc = match which {
        Encoder::Target => ids.target_encoder(),
        Encoder::Neighbor => ids.neighbor_encoder(),
    };
    let mut tape = Tape::new(&model.params);
    let (states, cell) = encode_on_tape(&mut tape, &enc, model.config.hidden_size, path)?;
    let states: Vec<Vec<f64>> = states.iter().map(|&v| tape.value(v).to_vec()).collect();
    Ok(EncodedSequence {
        final_state: LstmState {
            hidden: states.last().cloned().unwrap_or_default(),
            cell: tape.value(cell).to_vec(),
        },
        states,
    })
}

/// Soft context `Σ_j α_j h_j` with `α = softmax(v · tanh(W_q s + b_q + W_k h_j))`.
pub fn soft_attention(
    model: &PredictionModel,
    s_prev: &LstmState,
    encoded: &EncodedSequence,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if encoded.states.is_empty() {
        return Err(Error::arg("soft attention over an empty encoding"));
    }
    let ids = model.ids()?;
    let mut tape = Tape::new(&model.params);
    let s = tape.input(s_prev.hidden.clone());
    let states: Vec<_> = encoded.states.iter().map(|h| tape.input(h.clone())).collect();
    let keys = states
        .iter()
        .map(|&h| tape.affine(ids.att_key_w, None, h))
        .collect::<Result<Vec<_>>>()?;
    let query = tape.affine(ids.att_query_w, Some(ids.att_query_b), s)?;
    let scores = tape.additive_score(query, &keys, ids.att_out_w)?;
    let alpha = tape.softmax(scores)?;
    let context = tape.weighted_sum(alpha, &states)?;
    Ok((tape.value(context).to_vec(), tape.value(alpha).to_vec()))
}

/// `Σ_n Σ_j w_(n,j) h'_(n,j)`.
pub fn hardwired_context(neighbor_encodings: &[EncodedSequence], weights: &[Vec<f64>], hidden_size: usize) -> Result<Vec<f64>> {
    if neighbor_encodings.len() != weights.len() {
        return Err(Error::shape(format!(
            "{} neighbour encodings for {} weight rows",
            neighbor_encodings.len(),
            weights.len()
        )));
    }
    let mut out = vec![0.0; hidden_size];
    for (enc, w) in neighbor_encodings.iter().zip(weights) {
        if enc.states.len() != w.len() {
            return Err(Error::shape("neighbour weights and states differ in length"));
        }
        for (h, &wj) in enc.states.iter().zip(w) {
            if wj == 0.0 {
                continue;
            }
            if h.len() != hidden_size {
                return Err(Error::shape("neighbour state has the wrong width"));
            }
            out.iter_mut().zip(h).for_each(|(o, x)| *o += wj * x);
        }
    }
    Ok(out)
}

/// `tanh(W_c [C_s; C_h])`; in soft-only mode `C_h` is replaced by zeros.
pub fn merge_context(model: &PredictionModel, soft: &[f64], hardwired: &[f64]) -> Result<Vec<f64>> {
    let h = model.config.hidden_size;
    if soft.len() != h || hardwired.len() != h {
        return Err(Error::shape(format!(
            "merge expects two length-{h} contexts, got {} and {}",
            soft.len(),
            hardwired.len()
        )));
    }
    let ids = model.ids()?;
    let mut tape = Tape::new(&model.params);
    let cs = tape.input(soft.to_vec());
    let ch = match model.config.mode {
        AttentionMode::Combined => tape.input(hardwired.to_vec()),
        AttentionMode::SoftOnly => tape.input(vec![0.0; h]),
    };
    let both = tape.concat(&[cs, ch])?;
    let mixed = tape.affine(ids.merge_w, None, both)?;
    let merged = tape.tanh(mixed)?;
    Ok(tape.value(merged).to_vec())
}

/// One decoder step: LSTM over `[embed(y_prev); C*]`, then the output projection.
pub fn decode_step(
    model: &PredictionModel,
    s_prev: &LstmState,
    y_prev: Point,
    merged: &[f64],
) -> Result<(LstmState, Point)> {
    let h = model.config.hidden_size;
    let ids = model.ids()?;
    let mut tape = Tape::new(&model.params);
    let sh = tape.input(s_prev.hidden.clone());
    let sc = tape.input(s_prev.cell.clone());
    let y = tape.input(y_prev.to_vec());
    let c = tape.input(merged.to_vec());
    let emb = tape.affine(ids.dec_embed_w, Some(ids.dec_embed_b), y)?;
    let input = tape.concat(&[emb, c])?;
    let st = tape.lstm(ids.dec_lstm_w, ids.dec_lstm_b, input, sh, sc)?;
    let hidden = tape.slice(st, 0, h)?;
    let proj = tape.affine(ids.out_w, Some(ids.out_b), hidden)?;
    let out = match model.config.output {
        OutputMode::Absolute => proj,
        OutputMode::Displacement => tape.add(y, proj)?,
    };
    let v = tape.value(st);
    let state = LstmState {
        hidden: v[..h].to_vec(),
        cell: v[h..].to_vec(),
    };
    let p = tape.value(out);
    Ok((state, Point::new(p[0], p[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small(mode: AttentionMode) -> ModelConfig {
        ModelConfig {
            hidden_size: 6,
            embedding_size: 3,
            t_obs: 5,
            t_pred: 8,
            mode,
            ..ModelConfig::default()
        }
    }

    fn path(offset: f64) -> Vec<Point> {
        (0..5).map(|k| Point::new(0.1 * k as f64 + offset, 0.3 - 0.05 * k as f64)).collect()
    }

    #[test]
    fn hardwired_weight_cases() {
        let a = vec![Point::new(0.0, 0.0); 3];
        let b = vec![Point::new(2.0, 0.0); 3];
        assert_eq!(hardwired_weights(&a, &b), vec![0.5; 3]);
        assert_eq!(hardwired_weights(&a, &a), vec![100.0; 3]);
    }

    #[test]
    fn zero_model_encodes_to_zero() {
        let model = PredictionModel::zeros(small(AttentionMode::Combined)).unwrap();
        let enc = encode(&model, &path(0.0), Encoder::Target).unwrap();
        assert!(enc.states.iter().flatten().all(|&v| v == 0.0));
        assert!(encode(&model, &path(0.0)[..4], Encoder::Target).is_err());
    }

    #[test]
    fn encoding_is_causal() {
        let model = PredictionModel::init(small(AttentionMode::Combined), 4).unwrap();
        let base = path(0.0);
        let mut bumped = base.clone();
        bumped[3].x += 0.2;
        let a = encode(&model, &base, Encoder::Target).unwrap();
        let b = encode(&model, &bumped, Encoder::Target).unwrap();
        assert_eq!(a.states[..3], b.states[..3]);
        assert_ne!(a.states[3], b.states[3]);
    }

    #[test]
    fn identical_states_give_that_state() {
        let model = PredictionModel::init(small(AttentionMode::Combined), 9).unwrap();
        let h = vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.2];
        let enc = EncodedSequence {
            states: vec![h.clone(); 5],
            final_state: LstmState::zeros(6),
        };
        let s = LstmState {
            hidden: vec![0.3; 6],
            cell: vec![0.0; 6],
        };
        let (cs, alpha) = soft_attention(&model, &s, &enc).unwrap();
        for (a, b) in cs.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_scorer_is_uniform() {
        let mut model = PredictionModel::init(small(AttentionMode::Combined), 9).unwrap();
        model.params.get_mut(crate::model::names::ATT_OUT_W).unwrap().value.fill(0.0);
        let enc = encode(&model, &path(0.0), Encoder::Target).unwrap();
        let (_, alpha) = soft_attention(&model, &enc.final_state, &enc).unwrap();
        assert!(alpha.iter().all(|&a| (a - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hardwired_context_cases() {
        let enc = EncodedSequence {
            states: vec![vec![1.0, 2.0], vec![3.0, -1.0]],
            final_state: LstmState::zeros(2),
        };
        assert_eq!(hardwired_context(&[], &[], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            hardwired_context(&[enc.clone()], &[vec![1.0, 1.0]], 2).unwrap(),
            vec![4.0, 1.0]
        );
        assert_eq!(hardwired_context(&[enc], &[vec![0.0, 0.0]], 2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn merge_cases() {
        let mut model = PredictionModel::init(small(AttentionMode::Combined), 2).unwrap();
        let cs = vec![0.5; 6];
        let ch = vec![40.0; 6];
        let merged = merge_context(&model, &cs, &ch).unwrap();
        assert!(merged.iter().all(|v| v.abs() <= 1.0));
        let soft_only = PredictionModel {
            config: small(AttentionMode::SoftOnly),
            params: model.params.clone(),
        };
        assert_eq!(
            merge_context(&soft_only, &cs, &ch).unwrap(),
            merge_context(&model, &cs, &[0.0; 6]).unwrap()
        );
        model.params.get_mut(crate::model::names::MERGE_W).unwrap().value.fill(0.0);
        assert!(merge_context(&model, &cs, &ch).unwrap().iter().all(|&v| v == 0.0));
        assert!(merge_context(&model, &cs[..3], &ch).is_err());
    }

    #[test]
    fn decode_step_cases() {
        let mut model = PredictionModel::zeros(small(AttentionMode::Combined)).unwrap();
        model
            .params
            .get_mut(crate::model::names::OUT_B)
            .unwrap()
            .value
            .as_mut_slice()
            .copy_from_slice(&[0.25, -0.75]);
        let (_, y) = decode_step(&model, &LstmState::zeros(6), Point::new(0.4, 0.4), &[0.1; 6]).unwrap();
        assert_eq!(y, Point::new(0.25, -0.75));

        let model = PredictionModel::init(small(AttentionMode::Combined), 14).unwrap();
        let s = LstmState::zeros(6);
        let (a, _) = decode_step(&model, &s, Point::new(0.4, 0.4), &[0.1; 6]).unwrap();
        let (b, _) = decode_step(&model, &s, Point::new(0.4, 0.4), &[-0.3; 6]).unwrap();
        assert_ne!(a, b);
    }
}
