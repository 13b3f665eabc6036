//! Reverse-mode tape over vector-valued nodes.
//!
//! Every builder method evaluates its node eagerly and appends it to the tape, so
//! nodes are stored in topological order and [`Tape::backward`] is a single reverse
//! sweep. Parameters are read from the borrowed [`ParameterStore`]; their gradients
//! are returned as a [`Gradients`] set that the caller folds back into the store.

use super::matrix::{matvec_acc, matvec_backward};
use super::ops::lstm_forward;
use super::params::{Gradients, ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Affine { w: ParamId, b: Option<ParamId>, x: Var },
    Lstm { w: ParamId, b: ParamId, x: Var, h: Var, c: Var },
    Slice { x: Var, start: usize },
    Concat(Vec<Var>),
    Add(Var, Var),
    Tanh(Var),
    Softmax(Var),
    AdditiveScore { query: Var, keys: Vec<Var>, v: ParamId },
    WeightedSum { weights: Var, items: Vec<Var> },
    FixedWeightedSum { weights: Vec<f64>, items: Vec<Var> },
    MeanSquaredError { preds: Vec<Var>, targets: Vec<f64> },
    Total(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
    cache: Vec<f64>,
}

pub struct Tape<'p> {
    params: &'p ParameterStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParameterStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &ParameterStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Vec<f64>, cache: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value, cache });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&[f64]> {
        self.nodes
            .get(v.0)
            .map(|n| n.value.as_slice())
            .ok_or_else(|| Error::State(format!("node {} is not recorded on this tape", v.0)))
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Input, value, Vec::new())
    }

    /// `W·x (+ b)`.
    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Result<Var> {
        let wm = self.params.value(w);
        let xv = self.check(x)?;
        if wm.cols() != xv.len() {
            return Err(Error::shape(format!(
                "affine {:?}: {}x{} weight against input of length {}",
                self.params.name(w),
                wm.rows(),
                wm.cols(),
                xv.len()
            )));
        }
        let mut out = match b {
            Some(b) => {
                let bv = self.params.value(b);
                if bv.len() != wm.rows() {
                    return Err(Error::shape(format!(
                        "affine {:?}: bias length {} for {} rows",
                        self.params.name(b),
                        bv.len(),
                        wm.rows()
                    )));
                }
                bv.as_slice().to_vec()
            }
            None => vec![0.0; wm.rows()],
        };
        matvec_acc(wm, xv, 0, &mut out);
        Ok(self.push(Op::Affine { w, b, x }, out, Vec::new()))
    }

    /// LSTM cell; the node's value is `[h_new; c_new]`.
    pub fn lstm(&mut self, w: ParamId, b: ParamId, x: Var, h: Var, c: Var) -> Result<Var> {
        let hidden = self.check(h)?.len();
        let mut gates = vec![0.0; 5 * hidden];
        let mut out = vec![0.0; 2 * hidden];
        lstm_forward(
            self.params.value(w),
            self.params.value(b).as_slice(),
            self.check(x)?,
            self.check(h)?,
            self.check(c)?,
            &mut gates,
            &mut out,
        )?;
        Ok(self.push(Op::Lstm { w, b, x, h, c }, out, gates))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.check(x)?;
        if start + len > xv.len() {
            return Err(Error::shape(format!(
                "slice {start}..{} of a length-{} node",
                start + len,
                xv.len()
            )));
        }
        let value = xv[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, value, Vec::new()))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.check(p)?);
        }
        Ok(self.push(Op::Concat(parts.to_vec()), value, Vec::new()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.len() != bv.len() {
            return Err(Error::shape(format!("add: lengths {} and {}", av.len(), bv.len())));
        }
        let value = av.iter().zip(bv).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), value, Vec::new()))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.check(x)?.iter().map(|v| v.tanh()).collect();
        Ok(self.push(Op::Tanh(x), value, Vec::new()))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let value = super::ops::softmax(self.check(x)?)?;
        Ok(self.push(Op::Softmax(x), value, Vec::new()))
    }

    /// Bahdanau-style scores `e_j = v · tanh(query + key_j)`.
    ///
    /// Callers project the decoder state and the encoder states beforehand, so the
    /// per-key projection is computed once per sequence rather than once per step.
    pub fn additive_score(&mut self, query: Var, keys: &[Var], v: ParamId) -> Result<Var> {
        let q = self.check(query)?;
        let vm = self.params.value(v);
        let width = q.len();
        if vm.len() != width {
            return Err(Error::shape(format!(
                "additive score: scorer output weights have {} entries for width {width}",
                vm.len()
            )));
        }
        let mut scores = Vec::with_capacity(keys.len());
        let mut cache = Vec::with_capacity(keys.len() * width);
        for &k in keys {
            let kv = self.check(k)?;
            if kv.len() != width {
                return Err(Error::shape("additive score: key width differs from query"));
            }
            let mut e = 0.0;
            for a in 0..width {
                let t = (q[a] + kv[a]).tanh();
                cache.push(t);
                e += vm.as_slice()[a] * t;
            }
            scores.push(e);
        }
        if scores.is_empty() {
            return Err(Error::arg("additive score over an empty key set"));
        }
        Ok(self.push(
            Op::AdditiveScore {
                query,
                keys: keys.to_vec(),
                v,
            },
            scores,
            cache,
        ))
    }

    /// `Σ_j weights[j] · items[j]` with learned (node-valued) weights.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let w = self.check(weights)?.to_vec();
        if w.len() != items.len() || items.is_empty() {
            return Err(Error::shape(format!(
                "weighted sum: {} weights for {} items",
                w.len(),
                items.len()
            )));
        }
        let value = self.combine(&w, items)?;
        Ok(self.push(
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            value,
            Vec::new(),
        ))
    }

    /// `Σ_j weights[j] · items[j]` with constant weights.
    pub fn fixed_weighted_sum(&mut self, weights: Vec<f64>, items: &[Var]) -> Result<Var> {
        if weights.len() != items.len() || items.is_empty() {
            return Err(Error::shape(format!(
                "fixed weighted sum: {} weights for {} items",
                weights.len(),
                items.len()
            )));
        }
        let value = self.combine(&weights, items)?;
        Ok(self.push(
            Op::FixedWeightedSum {
                weights,
                items: items.to_vec(),
            },
            value,
            Vec::new(),
        ))
    }

    fn combine(&self, weights: &[f64], items: &[Var]) -> Result<Vec<f64>> {
        let dim = self.check(items[0])?.len();
        let mut out = vec![0.0; dim];
        for (&w, &item) in weights.iter().zip(items) {
            let iv = self.check(item)?;
            if iv.len() != dim {
                return Err(Error::shape("weighted sum items differ in length"));
            }
            out.iter_mut().zip(iv).for_each(|(o, x)| *o += w * x);
        }
        Ok(out)
    }

    /// `(1/T) Σ_t ‖pred_t − target_t‖²` as a scalar node.
    pub fn mean_squared_error(&mut self, preds: &[Var], targets: &[Vec<f64>]) -> Result<Var> {
        if preds.len() != targets.len() || preds.is_empty() {
            return Err(Error::arg(format!(
                "mean squared error: {} predictions for {} targets",
                preds.len(),
                targets.len()
            )));
        }
        let mut flat = Vec::new();
        let mut total = 0.0;
        for (&p, t) in preds.iter().zip(targets) {
            let pv = self.check(p)?;
            if pv.len() != t.len() {
                return Err(Error::shape("mean squared error: point dimensions differ"));
            }
            total += pv.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            flat.extend_from_slice(t);
        }
        let value = vec![total / preds.len() as f64];
        Ok(self.push(
            Op::MeanSquaredError {
                preds: preds.to_vec(),
                targets: flat,
            },
            value,
            Vec::new(),
        ))
    }

    /// Sum of all entries, as a scalar node.
    pub fn total(&mut self, x: Var) -> Result<Var> {
        let s = self.check(x)?.iter().sum();
        Ok(self.push(Op::Total(x), vec![s], Vec::new()))
    }

    /// Reverse accumulation from the scalar node `output`, seeded with `seed`.
    pub fn backward(&self, output: Var, seed: f64) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward computation".into()));
        }
        let out_len = self.check(output)?.len();
        if out_len != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar output, node has length {out_len}"
            )));
        }
        let mut grads = Gradients::for_store(self.params);
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        node_grads[output.0] = Some(vec![seed]);

        for idx in (0..=output.0).rev() {
            let Some(dy) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Affine { w, b, x } => {
                    let wm = self.params.value(*w);
                    let xv = &self.nodes[x.0].value;
                    if let Some(b) = b {
                        let db = grads.slot(*b, dy.len());
                        db.iter_mut().zip(&dy).for_each(|(a, g)| *a += g);
                    }
                    let dw = grads.slot(*w, wm.len());
                    let dx = acc(&mut node_grads, *x, xv.len());
                    matvec_backward(wm, xv, 0, &dy, Some(dx), dw);
                }
                Op::Lstm { w, b, x, h, c } => {
                    let hidden = self.nodes[h.0].value.len();
                    let xv = &self.nodes[x.0].value;
                    let hv = &self.nodes[h.0].value;
                    let cv = &self.nodes[c.0].value;
                    let gates = &node.cache;
                    let mut dpre = vec![0.0; 4 * hidden];
                    let mut dc_prev = vec![0.0; hidden];
                    for k in 0..hidden {
                        let i = gates[k];
                        let f = gates[hidden + k];
                        let g = gates[2 * hidden + k];
                        let o = gates[3 * hidden + k];
                        let tc = gates[4 * hidden + k];
                        let dh = dy[k];
                        let dc = dy[hidden + k] + dh * o * (1.0 - tc * tc);
                        let d_o = dh * tc;
                        dpre[k] = dc * g * i * (1.0 - i);
                        dpre[hidden + k] = dc * cv[k] * f * (1.0 - f);
                        dpre[2 * hidden + k] = dc * i * (1.0 - g * g);
                        dpre[3 * hidden + k] = d_o * o * (1.0 - o);
                        dc_prev[k] = dc * f;
                    }
                    let db = grads.slot(*b, 4 * hidden);
                    db.iter_mut().zip(&dpre).for_each(|(a, g)| *a += g);
                    let wm = self.params.value(*w);
                    {
                        let dw = grads.slot(*w, wm.len());
                        let dx = acc(&mut node_grads, *x, xv.len());
                        matvec_backward(wm, xv, 0, &dpre, Some(dx), dw);
                    }
                    {
                        let dw = grads.slot(*w, wm.len());
                        let dh = acc(&mut node_grads, *h, hidden);
                        matvec_backward(wm, hv, xv.len(), &dpre, Some(dh), dw);
                    }
                    let dc = acc(&mut node_grads, *c, hidden);
                    dc.iter_mut().zip(&dc_prev).for_each(|(a, g)| *a += g);
                }
                Op::Slice { x, start } => {
                    let n = self.nodes[x.0].value.len();
                    let dx = acc(&mut node_grads, *x, n);
                    dx[*start..*start + dy.len()]
                        .iter_mut()
                        .zip(&dy)
                        .for_each(|(a, g)| *a += g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.len();
                        let dp = acc(&mut node_grads, p, n);
                        dp.iter_mut()
                            .zip(&dy[offset..offset + n])
                            .for_each(|(a, g)| *a += g);
                        offset += n;
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let dv = acc(&mut node_grads, v, dy.len());
                        dv.iter_mut().zip(&dy).for_each(|(x, g)| *x += g);
                    }
                }
                Op::Tanh(x) => {
                    let dx = acc(&mut node_grads, *x, dy.len());
                    for ((a, g), y) in dx.iter_mut().zip(&dy).zip(&node.value) {
                        *a += g * (1.0 - y * y);
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
                    let dx = acc(&mut node_grads, *x, dy.len());
                    for k in 0..y.len() {
                        dx[k] += y[k] * (dy[k] - dot);
                    }
                }
                Op::AdditiveScore { query, keys, v } => {
                    let vm = self.params.value(*v).as_slice();
                    let width = vm.len();
                    let mut dq = vec![0.0; width];
                    let mut dv = vec![0.0; width];
                    let mut dz = vec![0.0; width];
                    for (j, &k) in keys.iter().enumerate() {
                        let g = dy[j];
                        if g == 0.0 {
                            continue;
                        }
                        let t = &node.cache[j * width..(j + 1) * width];
                        for a in 0..width {
                            dv[a] += g * t[a];
                            dz[a] = g * vm[a] * (1.0 - t[a] * t[a]);
                            dq[a] += dz[a];
                        }
                        let dk = acc(&mut node_grads, k, width);
                        dk.iter_mut().zip(&dz).for_each(|(x, g)| *x += g);
                    }
                    let slot = grads.slot(*v, width);
                    slot.iter_mut().zip(&dv).for_each(|(x, g)| *x += g);
                    let dqn = acc(&mut node_grads, *query, width);
                    dqn.iter_mut().zip(&dq).for_each(|(x, g)| *x += g);
                }
                Op::WeightedSum { weights, items } => {
                    let w = &self.nodes[weights.0].value;
                    let mut dw = vec![0.0; w.len()];
                    for (j, &item) in items.iter().enumerate() {
                        let iv = &self.nodes[item.0].value;
                        dw[j] = iv.iter().zip(&dy).map(|(a, b)| a * b).sum();
                        let di = acc(&mut node_grads, item, iv.len());
                        di.iter_mut().zip(&dy).for_each(|(x, g)| *x += w[j] * g);
                    }
                    let dwn = acc(&mut node_grads, *weights, w.len());
                    dwn.iter_mut().zip(&dw).for_each(|(x, g)| *x += g);
                }
                Op::FixedWeightedSum { weights, items } => {
                    for (&w, &item) in weights.iter().zip(items) {
                        if w == 0.0 {
                            continue;
                        }
                        let di = acc(&mut node_grads, item, dy.len());
                        di.iter_mut().zip(&dy).for_each(|(x, g)| *x += w * g);
                    }
                }
                Op::MeanSquaredError { preds, targets } => {
                    let scale = 2.0 * dy[0] / preds.len() as f64;
                    let mut offset = 0;
                    for &p in preds {
                        let pv = &self.nodes[p.0].value;
                        let n = pv.len();
                        let dp = acc(&mut node_grads, p, n);
                        for k in 0..n {
                            dp[k] += scale * (pv[k] - targets[offset + k]);
                        }
                        offset += n;
                    }
                }
                Op::Total(x) => {
                    let n = self.nodes[x.0].value.len();
                    let dx = acc(&mut node_grads, *x, n);
                    dx.iter_mut().for_each(|a| *a += dy[0]);
                }
            }
        }
        Ok(grads)
    }
}

fn acc(node_grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    node_grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn linear_case_bias_grad_is_ones() {
        let mut store = ParameterStore::new();
        let w = store.insert("w", Matrix::identity(3)).unwrap();
        let b = store.insert("b", Matrix::zeros(3, 1)).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![1.0, -2.0, 0.5]);
        let y = tape.affine(w, Some(b), x).unwrap();
        let loss = tape.total(y).unwrap();
        let grads = tape.backward(loss, 1.0).unwrap();
        assert_eq!(grads.get(b).unwrap(), &[1.0, 1.0, 1.0]);
        assert_eq!(grads.get(w).unwrap(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_seed_gives_zero_grads() {
        let mut store = ParameterStore::new();
        let w = store.insert("w", Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.1]).unwrap()).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![1.0, 2.0]);
        let y = tape.affine(w, None, x).unwrap();
        let t = tape.tanh(y).unwrap();
        let loss = tape.total(t).unwrap();
        let grads = tape.backward(loss, 0.0).unwrap();
        assert!(grads.get(w).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_on_empty_tape_is_state_error() {
        let store = ParameterStore::new();
        let tape = Tape::new(&store);
        assert!(matches!(tape.backward(Var(0), 1.0), Err(Error::State(_))));
    }

    #[test]
    fn backward_needs_scalar() {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![1.0, 2.0]);
        assert!(matches!(tape.backward(x, 1.0), Err(Error::InvalidShape(_))));
    }
}
