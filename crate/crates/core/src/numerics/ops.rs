//! Plain (tape-free) kernels shared by the tape and by inference helpers.

use super::matrix::matvec_acc;
use super::Matrix;
use crate::error::{Error, Result};

/// Hidden and cell vectors of an LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `W·x + b`.
pub fn affine(w: &Matrix, b: Option<&[f64]>, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(b) = b {
        if b.len() != w.rows() {
            return Err(Error::shape(format!(
                "affine: bias of length {} for {} output rows",
                b.len(),
                w.rows()
            )));
        }
    }
    let mut out = w.matvec(x)?;
    if let Some(b) = b {
        out.iter_mut().zip(b).for_each(|(o, b)| *o += b);
    }
    Ok(out)
}

/// Max-subtracted softmax.
pub fn softmax(e: &[f64]) -> Result<Vec<f64>> {
    if e.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("softmax input has non-finite entries"));
    }
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// One LSTM cell step.
///
/// `w` is the concatenated gate matrix of shape `4H x (I + H)` whose row blocks are
/// the input, forget, candidate and output gates, in that order; the first `I`
/// columns multiply `x`, the last `H` multiply the previous hidden state. `b` has
/// length `4H` with the same block layout.
pub fn lstm_step(w: &Matrix, b: &[f64], x: &[f64], prev: &LstmState) -> Result<LstmState> {
    let h = prev.hidden.len();
    let mut gates = vec![0.0; 5 * h];
    let mut out = vec![0.0; 2 * h];
    lstm_forward(w, b, x, &prev.hidden, &prev.cell, &mut gates, &mut out)?;
    let cell = out.split_off(h);
    Ok(LstmState { hidden: out, cell })
}

/// Writes `[h_new; c_new]` into `out` and `[i, f, g, o, tanh(c_new)]` into `gates`.
pub(crate) fn lstm_forward(
    w: &Matrix,
    b: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let h = h_prev.len();
    let input = x.len();
    if c_prev.len() != h {
        return Err(Error::shape("lstm: hidden and cell lengths differ"));
    }
    if w.rows() != 4 * h || w.cols() != input + h || b.len() != 4 * h {
        return Err(Error::shape(format!(
            "lstm: weights {}x{} / bias {} do not fit input {} and hidden {}",
            w.rows(),
            w.cols(),
            b.len(),
            input,
            h
        )));
    }
    let pre = &mut gates[..4 * h];
    pre.copy_from_slice(b);
    matvec_acc(w, x, 0, pre);
    matvec_acc(w, h_prev, input, pre);
    for k in 0..h {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[h + k]);
        let g = gates[2 * h + k].tanh();
        let o = sigmoid(gates[3 * h + k]);
        let c = f * c_prev[k] + i * g;
        let tc = c.tanh();
        gates[k] = i;
        gates[h + k] = f;
        gates[2 * h + k] = g;
        gates[3 * h + k] = o;
        gates[4 * h + k] = tc;
        out[k] = o * tc;
        out[h + k] = c;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_zero_weight() {
        let out = affine(&Matrix::identity(2), Some(&[0.0, 0.0]), &[3.0, 4.0]).unwrap();
        assert_eq!(out, vec![3.0, 4.0]);
        let out = affine(&Matrix::zeros(2, 2), Some(&[1.0, 2.0]), &[5.0, 5.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
        assert!(affine(&Matrix::zeros(2, 2), Some(&[1.0]), &[5.0, 5.0]).is_err());
        assert!(affine(&Matrix::zeros(2, 3), None, &[5.0, 5.0]).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let s = softmax(&[1000.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] >= 0.0 && s[1] < 1e-300);
        let s = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(matches!(softmax(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lstm_zero_params_fixed_point() {
        let w = Matrix::zeros(8, 5);
        let s = lstm_step(&w, &[0.0; 8], &[0.3, -2.0, 7.0], &LstmState::zeros(2)).unwrap();
        assert_eq!(s.hidden, vec![0.0, 0.0]);
        assert_eq!(s.cell, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let h = 3;
        let w = Matrix::zeros(4 * h, 2 + h);
        let mut b = vec![0.0; 4 * h];
        for v in &mut b[h..2 * h] {
            *v = 100.0;
        }
        let prev = LstmState {
            hidden: vec![0.1, -0.2, 0.3],
            cell: vec![0.7, -1.5, 2.0],
        };
        let s = lstm_step(&w, &b, &[0.4, 0.9], &prev).unwrap();
        // candidate g = tanh(0) = 0, so the new cell is f·c with f = sigmoid(100).
        for (a, c) in s.cell.iter().zip(&prev.cell) {
            assert!((a - c).abs() < 1e-8);
        }
    }

    #[test]
    fn lstm_rejects_bad_shapes() {
        let w = Matrix::zeros(8, 4);
        assert!(lstm_step(&w, &[0.0; 8], &[0.0; 3], &LstmState::zeros(2)).is_err());
    }
}
