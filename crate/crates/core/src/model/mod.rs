//! Combined soft + hardwired attention encoder-decoder.
//!
//! The target's observed path is encoded by one LSTM, every real neighbour slot by a
//! second (shared) LSTM. At each decoding step an additive scorer attends over the
//! target's encoder states (soft context); the neighbours' states are summed with
//! fixed inverse-distance weights once per instance (hardwired context). The two
//! contexts are concatenated, squashed through `tanh(W_c ·)` and fed with the
//! previous output point into the decoder LSTM, whose hidden state is projected to
//! the next 2-D position.

mod attention;
mod forward;

pub use attention::{
    decode_step, encode, hardwired_context, hardwired_weights, merge_context, soft_attention, ContextVectors,
    EncodedSequence, Encoder, DISTANCE_FLOOR,
};
pub use forward::{build_forward, predict, predict_with_trace, ForwardTrace, PredictionTrace};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamId, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionMode {
    /// Soft attention over the target plus hardwired attention over neighbours.
    #[default]
    Combined,
    /// Hardwired context replaced by zeros.
    SoftOnly,
}

impl AttentionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionMode::Combined => "combined",
            AttentionMode::SoftOnly => "soft_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(AttentionMode::Combined),
            "soft_only" => Ok(AttentionMode::SoftOnly),
            _ => Err(Error::Config(format!("unknown attention mode {s:?}"))),
        }
    }
}

/// How the decoder's projected hidden state becomes the next point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// `y_t = W_out s_t + b_out`.
    #[default]
    Absolute,
    /// `y_t = y_{t-1} + W_out s_t + b_out`.
    Displacement,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Absolute => "absolute",
            OutputMode::Displacement => "displacement",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(OutputMode::Absolute),
            "displacement" => Ok(OutputMode::Displacement),
            _ => Err(Error::Config(format!("unknown output mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    pub mode: AttentionMode,
    pub output: OutputMode,
    /// Divide hardwired weights by their per-timestep sum over neighbours.
    pub normalize_hardwired: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            embedding_size: 16,
            t_obs: 20,
            t_pred: 40,
            mode: AttentionMode::Combined,
            output: OutputMode::Absolute,
            normalize_hardwired: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.embedding_size == 0 {
            return Err(Error::Config("hidden_size and embedding_size must be positive".into()));
        }
        if self.t_obs < 2 || self.t_pred <= self.t_obs {
            return Err(Error::Config(format!(
                "need t_pred > t_obs >= 2, got t_obs={}, t_pred={}",
                self.t_obs, self.t_pred
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.t_pred - self.t_obs
    }

    /// Width of the attention scorer's hidden layer.
    pub fn scorer_width(&self) -> usize {
        (self.hidden_size / 2).max(4)
    }
}

pub(crate) mod names {
    pub const ENC_EMBED_W: &str = "encoder.embed.w";
    pub const ENC_EMBED_B: &str = "encoder.embed.b";
    pub const ENC_LSTM_W: &str = "encoder.lstm.w";
    pub const ENC_LSTM_B: &str = "encoder.lstm.b";
    pub const NBR_EMBED_W: &str = "neighbor.embed.w";
    pub const NBR_EMBED_B: &str = "neighbor.embed.b";
    pub const NBR_LSTM_W: &str = "neighbor.lstm.w";
    pub const NBR_LSTM_B: &str = "neighbor.lstm.b";
    pub const ATT_QUERY_W: &str = "attention.query.w";
    pub const ATT_QUERY_B: &str = "attention.query.b";
    pub const ATT_KEY_W: &str = "attention.key.w";
    pub const ATT_OUT_W: &str = "attention.out.w";
    pub const MERGE_W: &str = "merge.w";
    pub const DEC_EMBED_W: &str = "decoder.embed.w";
    pub const DEC_EMBED_B: &str = "decoder.embed.b";
    pub const DEC_LSTM_W: &str = "decoder.lstm.w";
    pub const DEC_LSTM_B: &str = "decoder.lstm.b";
    pub const OUT_W: &str = "output.w";
    pub const OUT_B: &str = "output.b";
}

/// Resolved parameter handles.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamIds {
    pub enc_embed_w: ParamId,
    pub enc_embed_b: ParamId,
    pub enc_lstm_w: ParamId,
    pub enc_lstm_b: ParamId,
    pub nbr_embed_w: ParamId,
    pub nbr_embed_b: ParamId,
    pub nbr_lstm_w: ParamId,
    pub nbr_lstm_b: ParamId,
    pub att_query_w: ParamId,
    pub att_query_b: ParamId,
    pub att_key_w: ParamId,
    pub att_out_w: ParamId,
    pub merge_w: ParamId,
    pub dec_embed_w: ParamId,
    pub dec_embed_b: ParamId,
    pub dec_lstm_w: ParamId,
    pub dec_lstm_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl ParamIds {
    pub fn resolve(store: &ParameterStore, config: &ModelConfig) -> Result<Self> {
        let ids = Self {
            enc_embed_w: store.id(names::ENC_EMBED_W)?,
            enc_embed_b: store.id(names::ENC_EMBED_B)?,
            enc_lstm_w: store.id(names::ENC_LSTM_W)?,
            enc_lstm_b: store.id(names::ENC_LSTM_B)?,
            nbr_embed_w: store.id(names::NBR_EMBED_W)?,
            nbr_embed_b: store.id(names::NBR_EMBED_B)?,
            nbr_lstm_w: store.id(names::NBR_LSTM_W)?,
            nbr_lstm_b: store.id(names::NBR_LSTM_B)?,
            att_query_w: store.id(names::ATT_QUERY_W)?,
            att_query_b: store.id(names::ATT_QUERY_B)?,
            att_key_w: store.id(names::ATT_KEY_W)?,
            att_out_w: store.id(names::ATT_OUT_W)?,
            merge_w: store.id(names::MERGE_W)?,
            dec_embed_w: store.id(names::DEC_EMBED_W)?,
            dec_embed_b: store.id(names::DEC_EMBED_B)?,
            dec_lstm_w: store.id(names::DEC_LSTM_W)?,
            dec_lstm_b: store.id(names::DEC_LSTM_B)?,
            out_w: store.id(names::OUT_W)?,
            out_b: store.id(names::OUT_B)?,
        };
        let expected = parameter_shapes(config);
        for (name, (rows, cols)) in expected {
            let shape = store.value(store.id(name)?).shape();
            if shape != (rows, cols) {
                return Err(Error::shape(format!(
                    "parameter {name} has shape {shape:?}, config expects ({rows}, {cols})"
                )));
            }
        }
        Ok(ids)
    }
}

/// Names and shapes of every trainable array, in store order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(&'static str, (usize, usize))> {
    use names::*;
    let (h, e, a) = (config.hidden_size, config.embedding_size, config.scorer_width());
    vec![
        (ENC_EMBED_W, (e, 2)),
        (ENC_EMBED_B, (e, 1)),
        (ENC_LSTM_W, (4 * h, e + h)),
        (ENC_LSTM_B, (4 * h, 1)),
        (NBR_EMBED_W, (e, 2)),
        (NBR_EMBED_B, (e, 1)),
        (NBR_LSTM_W, (4 * h, e + h)),
        (NBR_LSTM_B, (4 * h, 1)),
        (ATT_QUERY_W, (a, h)),
        (ATT_QUERY_B, (a, 1)),
        (ATT_KEY_W, (a, h)),
        (ATT_OUT_W, (1, a)),
        (MERGE_W, (h, 2 * h)),
        (DEC_EMBED_W, (e, 2)),
        (DEC_EMBED_B, (e, 1)),
        (DEC_LSTM_W, (4 * h, e + 2 * h)),
        (DEC_LSTM_B, (4 * h, 1)),
        (OUT_W, (2, h)),
        (OUT_B, (2, 1)),
    ]
}

/// Trained (or freshly initialized) parameters together with their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

impl PredictionModel {
    /// Uniform `±1/sqrt(fan_in)` initialization; LSTM forget-gate biases start at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let shapes = parameter_shapes(&config);
        // Bias fan-in follows its weight matrix.
        let mut last_fan_in = 1;
        for (name, (rows, cols)) in shapes {
            let is_bias = name.ends_with(".b");
            let fan_in = if is_bias { last_fan_in } else { cols };
            if !is_bias {
                last_fan_in = cols;
            }
            let mut m = Matrix::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), &mut rng);
            if name.ends_with("lstm.b") {
                let h = config.hidden_size;
                for v in &mut m.as_mut_slice()[h..2 * h] {
                    *v = 1.0;
                }
            }
            params.insert(name, m)?;
        }
        Ok(Self { config, params })
    }

    /// All parameters set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterStore::new();
        for (name, (rows, cols)) in parameter_shapes(&config) {
            params.insert(name, Matrix::zeros(rows, cols))?;
        }
        Ok(Self { config, params })
    }

    pub(crate) fn ids(&self) -> Result<ParamIds> {
        ParamIds::resolve(&self.params, &self.config)
    }
}
