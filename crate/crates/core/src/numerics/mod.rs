//! Dense linear algebra, LSTM kernels, a reverse-mode tape and a gradient checker.

mod gradcheck;
mod matrix;
mod ops;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, DEFAULT_STEP, GRADIENT_FLOOR};
pub use matrix::Matrix;
pub use ops::{affine, lstm_step, sigmoid, softmax, LstmState};
pub use params::{Gradients, ParamId, Parameter, ParameterStore};
pub use tape::{Tape, Var};
