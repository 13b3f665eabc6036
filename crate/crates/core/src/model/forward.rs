use super::{AttentionMode, OutputMode, ParamIds, PredictionModel};
use crate::data::{NeighborhoodTensor, Point};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// Handles to the interesting nodes of one unrolled prediction graph.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub predictions: Vec<Var>,
    pub encoder_hidden: Vec<Var>,
    pub decoder_hidden: Vec<Var>,
    pub alphas: Vec<Var>,
    pub soft_contexts: Vec<Var>,
    pub merged_contexts: Vec<Var>,
    pub hardwired: Var,
}

pub(crate) struct EncoderParams {
    pub embed_w: crate::numerics::ParamId,
    pub embed_b: crate::numerics::ParamId,
    pub lstm_w: crate::numerics::ParamId,
    pub lstm_b: crate::numerics::ParamId,
}

impl ParamIds {
    pub(crate) fn target_encoder(&self) -> EncoderParams {
        EncoderParams {
            embed_w: self.enc_embed_w,
            embed_b: self.enc_embed_b,
            lstm_w: self.enc_lstm_w,
            lstm_b: self.enc_lstm_b,
        }
    }

    pub(crate) fn neighbor_encoder(&self) -> EncoderParams {
        EncoderParams {
            embed_w: self.nbr_embed_w,
            embed_b: self.nbr_embed_b,
            lstm_w: self.nbr_lstm_w,
            lstm_b: self.nbr_lstm_b,
        }
    }
}

/// Runs an encoder from the zero state; returns every hidden state and the final cell.
pub(crate) fn encode_on_tape(
    tape: &mut Tape<'_>,
    enc: &EncoderParams,
    hidden_size: usize,
    path: &[Point],
) -> Result<(Vec<Var>, Var)> {
    let mut h = tape.input(vec![0.0; hidden_size]);
    let mut c = tape.input(vec![0.0; hidden_size]);
    let mut states = Vec::with_capacity(path.len());
    for p in path {
        let x = tape.input(p.to_vec());
        let emb = tape.affine(enc.embed_w, Some(enc.embed_b), x)?;
        let st = tape.lstm(enc.lstm_w, enc.lstm_b, emb, h, c)?;
        h = tape.slice(st, 0, hidden_size)?;
        c = tape.slice(st, hidden_size, hidden_size)?;
        states.push(h);
    }
    Ok((states, c))
}

/// Effective hardwired weights per real slot, optionally normalized per timestep.
pub(crate) fn slot_weights(neighborhood: &NeighborhoodTensor, normalize: bool, t_obs: usize) -> Vec<Vec<f64>> {
    let mut weights: Vec<Vec<f64>> = neighborhood.real_slots().map(|s| s.weights.clone()).collect();
    if normalize {
        for j in 0..t_obs {
            let total: f64 = weights.iter().map(|w| w[j]).sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| w[j] /= total);
            }
        }
    }
    weights
}

/// Records the full encoder-attention-decoder graph for one instance.
///
/// With `teacher` set, the decoder input at step `t` is the ground-truth point
/// `teacher[t-1]` instead of the model's own previous output.
pub fn build_forward(
    tape: &mut Tape<'_>,
    model: &PredictionModel,
    observed: &[Point],
    neighborhood: &NeighborhoodTensor,
    teacher: Option<&[Point]>,
) -> Result<ForwardTrace> {
    let config = &model.config;
    let ids = model.ids()?;
    build_forward_with(tape, config, &ids, observed, neighborhood, teacher)
}

pub(crate) fn build_forward_with(
    tape: &mut Tape<'_>,
    config: &super::ModelConfig,
    ids: &ParamIds,
    observed: &[Point],
    neighborhood: &NeighborhoodTensor,
    teacher: Option<&[Point]>,
) -> Result<ForwardTrace> {
    let h = config.hidden_size;
    if observed.len() != config.t_obs {
        return Err(Error::arg(format!(
            "observed path has {} points, model expects t_obs = {}",
            observed.len(),
            config.t_obs
        )));
    }
    if let Some(t) = teacher {
        if t.len() != config.horizon() {
            return Err(Error::arg(format!(
                "teacher sequence has {} points, horizon is {}",
                t.len(),
                config.horizon()
            )));
        }
    }

    let (enc_hidden, enc_cell) = encode_on_tape(tape, &ids.target_encoder(), h, observed)?;

    let hardwired = match config.mode {
        AttentionMode::SoftOnly => tape.input(vec![0.0; h]),
        AttentionMode::Combined => {
            let weights = slot_weights(neighborhood, config.normalize_hardwired, config.t_obs);
            let mut items = Vec::new();
            let mut flat = Vec::new();
            let nbr = ids.neighbor_encoder();
            for (slot, w) in neighborhood.real_slots().zip(&weights) {
                if slot.trajectory.len() != config.t_obs || w.len() != config.t_obs {
                    return Err(Error::shape("neighbour slot length differs from t_obs"));
                }
                let (states, _) = encode_on_tape(tape, &nbr, h, &slot.trajectory)?;
                items.extend(states);
                flat.extend_from_slice(w);
            }
            if items.is_empty() {
                tape.input(vec![0.0; h])
            } else {
                tape.fixed_weighted_sum(flat, &items)?
            }
        }
    };

    let keys = enc_hidden
        .iter()
        .map(|&hj| tape.affine(ids.att_key_w, None, hj))
        .collect::<Result<Vec<_>>>()?;

    let mut s_h = *enc_hidden.last().expect("t_obs >= 2");
    let mut s_c = enc_cell;
    let last = observed[observed.len() - 1];
    let mut y_prev = tape.input(last.to_vec());

    let horizon = config.horizon();
    let mut trace = ForwardTrace {
        predictions: Vec::with_capacity(horizon),
        encoder_hidden: enc_hidden.clone(),
        decoder_hidden: Vec::with_capacity(horizon),
        alphas: Vec::with_capacity(horizon),
        soft_contexts: Vec::with_capacity(horizon),
        merged_contexts: Vec::with_capacity(horizon),
        hardwired,
    };
    for t in 0..horizon {
        let query = tape.affine(ids.att_query_w, Some(ids.att_query_b), s_h)?;
        let scores = tape.additive_score(query, &keys, ids.att_out_w)?;
        let alpha = tape.softmax(scores)?;
        let soft = tape.weighted_sum(alpha, &enc_hidden)?;
        let both = tape.concat(&[soft, hardwired])?;
        let mixed = tape.affine(ids.merge_w, None, both)?;
        let merged = tape.tanh(mixed)?;

        let emb = tape.affine(ids.dec_embed_w, Some(ids.dec_embed_b), y_prev)?;
        let input = tape.concat(&[emb, merged])?;
        let st = tape.lstm(ids.dec_lstm_w, ids.dec_lstm_b, input, s_h, s_c)?;
        s_h = tape.slice(st, 0, h)?;
        s_c = tape.slice(st, h, h)?;
        let proj = tape.affine(ids.out_w, Some(ids.out_b), s_h)?;
        let y = match config.output {
            OutputMode::Absolute => proj,
            OutputMode::Displacement => tape.add(y_prev, proj)?,
        };

        trace.predictions.push(y);
        trace.decoder_hidden.push(s_h);
        trace.alphas.push(alpha);
        trace.soft_contexts.push(soft);
        trace.merged_contexts.push(merged);
        y_prev = match teacher {
            Some(truth) => tape.input(truth[t].to_vec()),
            None => y,
        };
    }
    Ok(trace)
}

/// Values read back from an autoregressive forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub points: Vec<Point>,
    pub alphas: Vec<Vec<f64>>,
    pub encoder_states: Vec<Vec<f64>>,
    pub decoder_states: Vec<Vec<f64>>,
    pub hardwired: Vec<f64>,
}

pub fn predict_with_trace(
    model: &PredictionModel,
    observed: &[Point],
    neighborhood: &NeighborhoodTensor,
) -> Result<PredictionTrace> {
    let mut tape = Tape::new(&model.params);
    let trace = build_forward(&mut tape, model, observed, neighborhood, None)?;
    let read = |vars: &[Var]| vars.iter().map(|&v| tape.value(v).to_vec()).collect::<Vec<_>>();
    Ok(PredictionTrace {
        points: trace
            .predictions
            .iter()
            .map(|&v| {
                let p = tape.value(v);
                Point::new(p[0], p[1])
            })
            .collect(),
        alphas: read(&trace.alphas),
        encoder_states: read(&trace.encoder_hidden),
        decoder_states: read(&trace.decoder_hidden),
        hardwired: tape.value(trace.hardwired).to_vec(),
    })
}

/// Autoregressive prediction of the `t_pred - t_obs` points after `observed`, in the
/// model's (normalized) coordinates.
pub fn predict(model: &PredictionModel, observed: &[Point], neighborhood: &NeighborhoodTensor) -> Result<Vec<Point>> {
    predict_with_trace(model, observed, neighborhood).map(|t| t.points)
}
