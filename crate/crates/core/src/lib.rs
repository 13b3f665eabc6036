//! Pedestrian trajectory prediction with a combined soft + hardwired attention
//! LSTM encoder-decoder, trajectory clustering, evaluation metrics and
//! hidden-state anomaly detection.

pub mod anomaly;
pub mod clustering;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
