//! Tape of recorded primitives and its reverse sweep.

use super::params::{ParamId, ParamStore};
use super::{sigmoid, softmax, Result, Tensor, TensorError};

/// Floor applied to every logarithm argument in the likelihood readouts.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// LSTM cell weights: `w` is `[4h, in + h]` with gate blocks ordered
/// input, forget, candidate, output; `b` is `[4h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn create<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{prefix}.w"),
            super::init::uniform(rng, &[4 * hidden, input + hidden], super::init::RECURRENT_SCALE),
        );
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]));
        Self {
            w,
            b,
            input,
            hidden,
        }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden
    }
}

/// Plain recurrent cell `h = tanh(w [x; h_prev] + b)`.
#[derive(Debug, Clone, Copy)]
pub struct TanhCellParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl TanhCellParams {
    pub fn create<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{prefix}.w"),
            super::init::uniform(rng, &[hidden, input + hidden], super::init::RECURRENT_SCALE),
        );
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[hidden]));
        Self {
            w,
            b,
            input,
            hidden,
        }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        hidden * (input + hidden) + hidden
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    EmbedRow {
        table: ParamId,
        row: usize,
    },
    Dense {
        w: ParamId,
        b: ParamId,
        x: Var,
    },
    Lstm {
        p: LstmParams,
        x: Var,
        h: Var,
        c: Var,
        // i, f, g, o activations, then tanh(c_new)
        saved: Vec<f64>,
    },
    TanhCell {
        p: TanhCellParams,
        x: Var,
        h: Var,
    },
    Slice {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    MaxPool {
        rows: Vec<Var>,
        argmax: Vec<usize>,
    },
    Softmax(Var),
    SetLogMass {
        y: Var,
        correct: Vec<bool>,
    },
    LogPick {
        y: Var,
        index: usize,
    },
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Ordered record of primitive operations.
///
/// Values are computed eagerly at record time; [`Tape::backward`] walks the
/// record in exact reverse order and accumulates into parameter gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, expected: usize, found: usize) -> TensorError {
    TensorError::Shape {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient is propagated out of it).
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.input(vec![0.0; len])
    }

    /// Whole parameter as a flat vector.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).data().to_vec(), Op::Param(id))
    }

    pub fn embed_lookup(&mut self, store: &ParamStore, table: ParamId, row: usize) -> Result<Var> {
        let t = store.value(table);
        if t.shape().len() != 2 {
            return Err(TensorError::Shape {
                op: "embed_lookup",
                expected: "2-d table".into(),
                found: format!("{:?}", t.shape()),
            });
        }
        if row >= t.rows() {
            return Err(TensorError::OutOfRange {
                what: "embedding table",
                index: row,
                size: t.rows(),
            });
        }
        Ok(self.push(t.row(row).to_vec(), Op::EmbedRow { table, row }))
    }

    /// Affine map `w x + b` with `w: [d_out, d_in]`, `b: [d_out]`.
    pub fn dense(&mut self, store: &ParamStore, w: ParamId, b: ParamId, x: Var) -> Result<Var> {
        let wt = store.value(w);
        let bt = store.value(b);
        let xv = &self.nodes[x.0].value;
        if wt.shape().len() != 2 || wt.cols() != xv.len() {
            return Err(TensorError::Shape {
                op: "dense",
                expected: format!("weight [_, {}]", xv.len()),
                found: format!("{:?}", wt.shape()),
            });
        }
        if bt.len() != wt.rows() {
            return Err(shape_err("dense bias", wt.rows(), bt.len()));
        }
        let cols = wt.cols();
        let wd = wt.data();
        let out: Vec<f64> = (0..wt.rows())
            .map(|r| {
                let row = &wd[r * cols..(r + 1) * cols];
                bt.data()[r] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(self.push(out, Op::Dense { w, b, x }))
    }

    /// One LSTM step. Returns `(h, c)`.
    pub fn lstm_cell(
        &mut self,
        store: &ParamStore,
        p: &LstmParams,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let hid = p.hidden;
        let xv = &self.nodes[x.0].value;
        let hv = &self.nodes[h.0].value;
        let cv = &self.nodes[c.0].value;
        if xv.len() != p.input {
            return Err(shape_err("lstm_cell input", p.input, xv.len()));
        }
        if hv.len() != hid {
            return Err(shape_err("lstm_cell hidden", hid, hv.len()));
        }
        if cv.len() != hid {
            return Err(shape_err("lstm_cell cell", hid, cv.len()));
        }
        let wt = store.value(p.w);
        let bt = store.value(p.b);
        let cols = p.input + hid;
        if wt.shape() != [4 * hid, cols] || bt.len() != 4 * hid {
            return Err(TensorError::Shape {
                op: "lstm_cell params",
                expected: format!("[{}, {}] and [{}]", 4 * hid, cols, 4 * hid),
                found: format!("{:?} and {:?}", wt.shape(), bt.shape()),
            });
        }
        let wd = wt.data();
        let mut saved = vec![0.0; 5 * hid];
        for r in 0..4 * hid {
            let row = &wd[r * cols..(r + 1) * cols];
            let mut z = bt.data()[r];
            z += row[..p.input].iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
            z += row[p.input..].iter().zip(hv).map(|(a, b)| a * b).sum::<f64>();
            saved[r] = if r / hid == 2 { z.tanh() } else { sigmoid(z) };
        }
        let mut out = vec![0.0; 2 * hid];
        for k in 0..hid {
            let (i, f, g, o) = (saved[k], saved[hid + k], saved[2 * hid + k], saved[3 * hid + k]);
            let c_new = f * cv[k] + i * g;
            let tc = c_new.tanh();
            saved[4 * hid + k] = tc;
            out[k] = o * tc;
            out[hid + k] = c_new;
        }
        let hc = self.push(
            out,
            Op::Lstm {
                p: *p,
                x,
                h,
                c,
                saved,
            },
        );
        let h_new = self.slice(hc, 0, hid)?;
        let c_new = self.slice(hc, hid, hid)?;
        Ok((h_new, c_new))
    }

    pub fn tanh_cell(&mut self, store: &ParamStore, p: &TanhCellParams, x: Var, h: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let hv = &self.nodes[h.0].value;
        if xv.len() != p.input {
            return Err(shape_err("tanh_cell input", p.input, xv.len()));
        }
        if hv.len() != p.hidden {
            return Err(shape_err("tanh_cell hidden", p.hidden, hv.len()));
        }
        let wt = store.value(p.w);
        let bt = store.value(p.b);
        let cols = p.input + p.hidden;
        if wt.shape() != [p.hidden, cols] || bt.len() != p.hidden {
            return Err(TensorError::Shape {
                op: "tanh_cell params",
                expected: format!("[{}, {}] and [{}]", p.hidden, cols, p.hidden),
                found: format!("{:?} and {:?}", wt.shape(), bt.shape()),
            });
        }
        let wd = wt.data();
        let out = (0..p.hidden)
            .map(|r| {
                let row = &wd[r * cols..(r + 1) * cols];
                let z = bt.data()[r]
                    + row[..p.input].iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
                    + row[p.input..].iter().zip(hv).map(|(a, b)| a * b).sum::<f64>();
                z.tanh()
            })
            .collect();
        Ok(self.push(out, Op::TanhCell { p: *p, x, h }))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if start + len > xv.len() {
            return Err(TensorError::OutOfRange {
                what: "slice",
                index: start + len,
                size: xv.len(),
            });
        }
        let out = xv[start..start + len].to_vec();
        Ok(self.push(out, Op::Slice { x, start }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out: Vec<f64> = parts
            .iter()
            .flat_map(|v| self.nodes[v.0].value.iter().copied())
            .collect();
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Element-wise maximum over rows; ties resolve to the lowest row index.
    pub fn max_pool(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(first) = rows.first() else {
            return Err(TensorError::Empty { op: "max_pool" });
        };
        let dim = self.nodes[first.0].value.len();
        let mut out = self.nodes[first.0].value.clone();
        let mut argmax = vec![0usize; dim];
        for (r, v) in rows.iter().enumerate().skip(1) {
            let vals = &self.nodes[v.0].value;
            if vals.len() != dim {
                return Err(shape_err("max_pool", dim, vals.len()));
            }
            for k in 0..dim {
                if vals[k] > out[k] {
                    out[k] = vals[k];
                    argmax[k] = r;
                }
            }
        }
        Ok(self.push(
            out,
            Op::MaxPool {
                rows: rows.to_vec(),
                argmax,
            },
        ))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.is_empty() {
            return Err(TensorError::Empty { op: "softmax" });
        }
        let out = softmax(xv);
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// `Σ_{a ∉ correct} ln(1 − y_a) + ln(Σ_{a ∈ correct} y_a)` with floored
    /// log arguments. This is the (un-negated) per-step term of the
    /// correct-set cross entropy.
    pub fn set_log_mass(&mut self, y: Var, correct: &[bool]) -> Result<Var> {
        let yv = &self.nodes[y.0].value;
        if yv.len() != correct.len() {
            return Err(shape_err("set_log_mass", yv.len(), correct.len()));
        }
        let mut total = 0.0;
        let mut mass = 0.0;
        for (&p, &ok) in yv.iter().zip(correct) {
            if ok {
                mass += p;
            } else {
                total += (1.0 - p).max(LOG_FLOOR).ln();
            }
        }
        total += mass.max(LOG_FLOOR).ln();
        Ok(self.push(
            vec![total],
            Op::SetLogMass {
                y,
                correct: correct.to_vec(),
            },
        ))
    }

    /// `ln(max(y[index], 1e-12))`.
    pub fn log_pick(&mut self, y: Var, index: usize) -> Result<Var> {
        let yv = &self.nodes[y.0].value;
        if index >= yv.len() {
            return Err(TensorError::OutOfRange {
                what: "log_pick",
                index,
                size: yv.len(),
            });
        }
        let out = yv[index].max(LOG_FLOOR).ln();
        Ok(self.push(vec![out], Op::LogPick { y, index }))
    }

    /// `Σ w_i · x_i` over scalar vars.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut out = 0.0;
        for (v, w) in terms {
            let vals = &self.nodes[v.0].value;
            if vals.len() != 1 {
                return Err(shape_err("weighted_sum", 1, vals.len()));
            }
            out += w * vals[0];
        }
        Ok(self.push(vec![out], Op::WeightedSum(terms.to_vec())))
    }

    /// Reverse sweep from a scalar root, accumulating into `store` gradients.
    pub fn backward(&self, root: Var, store: &mut ParamStore) -> Result<()> {
        let root_len = self.nodes[root.0].value.len();
        if root_len != 1 {
            return Err(TensorError::NonScalarRoot(root_len));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let pg = store.get_mut(*id).grad_mut().data_mut();
                    pg.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::EmbedRow { table, row } => {
                    let t = store.get_mut(*table).grad_mut();
                    let cols = t.cols();
                    let dst = &mut t.data_mut()[row * cols..(row + 1) * cols];
                    dst.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Dense { w, b, x } => {
                    let xv = &self.nodes[x.0].value;
                    {
                        let bg = store.get_mut(*b).grad_mut().data_mut();
                        bg.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                    let (wv, wg) = store.get_mut(*w).value_and_grad_mut();
                    let cols = wv.cols();
                    let wd = wv.data();
                    let wgd = wg.data_mut();
                    let mut dx = vec![0.0; cols];
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wd[r * cols..(r + 1) * cols];
                        let grow = &mut wgd[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            grow[c] += gr * xv[c];
                            dx[c] += gr * row[c];
                        }
                    }
                    accumulate(&mut grads, *x, &dx);
                }
                Op::Lstm { p, x, h, c, saved } => {
                    let hid = p.hidden;
                    let xv = &self.nodes[x.0].value;
                    let hv = &self.nodes[h.0].value;
                    let cv = &self.nodes[c.0].value;
                    let (dh, dc) = g.split_at(hid);
                    let mut dz = vec![0.0; 4 * hid];
                    let mut dc_prev = vec![0.0; hid];
                    for k in 0..hid {
                        let (i, f, gg, o) =
                            (saved[k], saved[hid + k], saved[2 * hid + k], saved[3 * hid + k]);
                        let tc = saved[4 * hid + k];
                        let d_o = dh[k] * tc;
                        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                        let di = dct * gg;
                        let dg = dct * i;
                        let df = dct * cv[k];
                        dc_prev[k] = dct * f;
                        dz[k] = di * i * (1.0 - i);
                        dz[hid + k] = df * f * (1.0 - f);
                        dz[2 * hid + k] = dg * (1.0 - gg * gg);
                        dz[3 * hid + k] = d_o * o * (1.0 - o);
                    }
                    let (dx, dhp) = affine_backward(store, p.w, p.b, p.input, xv, hv, &dz);
                    accumulate(&mut grads, *x, &dx);
                    accumulate(&mut grads, *h, &dhp);
                    accumulate(&mut grads, *c, &dc_prev);
                }
                Op::TanhCell { p, x, h } => {
                    let xv = &self.nodes[x.0].value;
                    let hv = &self.nodes[h.0].value;
                    let dz: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gk, yk)| gk * (1.0 - yk * yk))
                        .collect();
                    let (dx, dhp) = affine_backward(store, p.w, p.b, p.input, xv, hv, &dz);
                    accumulate(&mut grads, *x, &dx);
                    accumulate(&mut grads, *h, &dhp);
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[x.0].value.len();
                    let slot = slot(&mut grads, *x, len);
                    slot[*start..start + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(a, b)| *a += b);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for v in parts {
                        let len = self.nodes[v.0].value.len();
                        accumulate(&mut grads, *v, &g[off..off + len]);
                        off += len;
                    }
                }
                Op::MaxPool { rows, argmax } => {
                    let dim = g.len();
                    for (k, &r) in argmax.iter().enumerate() {
                        let slot = slot(&mut grads, rows[r], dim);
                        slot[k] += g[k];
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                    let dx: Vec<f64> = y.iter().zip(&g).map(|(yk, gk)| yk * (gk - dot)).collect();
                    accumulate(&mut grads, *x, &dx);
                }
                Op::SetLogMass { y, correct } => {
                    let yv = &self.nodes[y.0].value;
                    let mass: f64 = yv.iter().zip(correct).filter(|(_, &c)| c).map(|(p, _)| p).sum();
                    let dy: Vec<f64> = yv
                        .iter()
                        .zip(correct)
                        .map(|(&p, &ok)| {
                            if ok {
                                if mass > LOG_FLOOR {
                                    g[0] / mass
                                } else {
                                    0.0
                                }
                            } else if 1.0 - p > LOG_FLOOR {
                                -g[0] / (1.0 - p)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *y, &dy);
                }
                Op::LogPick { y, index } => {
                    let yv = &self.nodes[y.0].value;
                    let p = yv[*index];
                    if p > LOG_FLOOR {
                        let slot = slot(&mut grads, *y, yv.len());
                        slot[*index] += g[0] / p;
                    }
                }
                Op::WeightedSum(terms) => {
                    for (v, w) in terms {
                        accumulate(&mut grads, *v, &[g[0] * w]);
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    let s = slot(grads, v, g.len());
    s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

/// Backward through `z = w [x; h] + b`: accumulates `dw`, `db` and returns
/// `(dx, dh)`.
fn affine_backward(
    store: &mut ParamStore,
    w: ParamId,
    b: ParamId,
    input: usize,
    xv: &[f64],
    hv: &[f64],
    dz: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    {
        let bg = store.get_mut(b).grad_mut().data_mut();
        bg.iter_mut().zip(dz).for_each(|(a, d)| *a += d);
    }
    let (wv, wg) = store.get_mut(w).value_and_grad_mut();
    let cols = wv.cols();
    let wd = wv.data();
    let wgd = wg.data_mut();
    let mut dx = vec![0.0; input];
    let mut dh = vec![0.0; cols - input];
    for (r, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &wd[r * cols..(r + 1) * cols];
        let grow = &mut wgd[r * cols..(r + 1) * cols];
        for c in 0..input {
            grow[c] += d * xv[c];
            dx[c] += d * row[c];
        }
        for c in input..cols {
            grow[c] += d * hv[c - input];
            dh[c - input] += d * row[c];
        }
    }
    (dx, dh)
}

/// Runs a bidirectional LSTM over `inputs`, each direction from zero state.
/// Output `t` is `[forward_h[t]; backward_h[t]]`.
pub fn bilstm_run(
    tape: &mut Tape,
    store: &ParamStore,
    fwd: &LstmParams,
    bwd: &LstmParams,
    inputs: &[Var],
) -> Result<Vec<Var>> {
    if inputs.is_empty() {
        return Err(TensorError::Empty { op: "bilstm_run" });
    }
    let forward = run_direction(tape, store, fwd, inputs.iter().copied())?;
    let mut backward = run_direction(tape, store, bwd, inputs.iter().rev().copied())?;
    backward.reverse();
    Ok(forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect())
}

fn run_direction(
    tape: &mut Tape,
    store: &ParamStore,
    p: &LstmParams,
    inputs: impl Iterator<Item = Var>,
) -> Result<Vec<Var>> {
    let mut h = tape.zeros(p.hidden);
    let mut c = tape.zeros(p.hidden);
    let mut out = Vec::new();
    for x in inputs {
        let (hn, cn) = tape.lstm_cell(store, p, x, h, c)?;
        out.push(hn);
        h = hn;
        c = cn;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::gradcheck::grad_check;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn embed_lookup_returns_row_and_routes_gradient() {
        let mut store = ParamStore::new();
        let table = store.add("e", identity(3));
        let mut tape = Tape::new();
        let v = tape.embed_lookup(&store, table, 1).unwrap();
        assert_eq!(tape.value(v), &[0.0, 1.0, 0.0]);
        let g = [0.3, -0.7, 2.0];
        let sel: Vec<_> = (0..3).map(|k| tape.slice(v, k, 1).unwrap()).collect();
        let terms: Vec<_> = sel.iter().zip(g).map(|(&s, w)| (s, w)).collect();
        let root = tape.weighted_sum(&terms).unwrap();
        tape.backward(root, &mut store).unwrap();
        let grad = store.grad(table);
        assert_eq!(grad.row(0), &[0.0; 3]);
        assert_eq!(grad.row(1), &g);
        assert_eq!(grad.row(2), &[0.0; 3]);
    }

    #[test]
    fn embed_lookup_out_of_range() {
        let mut store = ParamStore::new();
        let table = store.add("e", identity(3));
        let mut tape = Tape::new();
        assert!(matches!(
            tape.embed_lookup(&store, table, 3),
            Err(TensorError::OutOfRange { .. })
        ));
    }

    #[test]
    fn dense_identity_and_bias() {
        let mut store = ParamStore::new();
        let w = store.add("w", identity(3));
        let b = store.add("b", Tensor::vector(vec![0.5, -1.0, 2.0]));
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let y = tape.dense(&store, w, b, x).unwrap();
        assert_eq!(tape.value(y), &[1.5, 1.0, 5.0]);
        let z = tape.zeros(3);
        let y0 = tape.dense(&store, w, b, z).unwrap();
        assert_eq!(tape.value(y0), &[0.5, -1.0, 2.0]);
        let bad = tape.zeros(4);
        assert!(tape.dense(&store, w, b, bad).is_err());
    }

    #[test]
    fn lstm_zero_params_give_zero_state() {
        let mut store = ParamStore::new();
        let p = LstmParams {
            w: store.add("w", Tensor::zeros(&[16, 7])),
            b: store.add("b", Tensor::zeros(&[16])),
            input: 3,
            hidden: 4,
        };
        let mut tape = Tape::new();
        let x = tape.zeros(3);
        let h = tape.zeros(4);
        let c = tape.zeros(4);
        let (h1, c1) = tape.lstm_cell(&store, &p, x, h, c).unwrap();
        assert_eq!(tape.value(h1), &[0.0; 4]);
        assert_eq!(tape.value(c1), &[0.0; 4]);
        let bad = tape.zeros(2);
        assert!(tape.lstm_cell(&store, &p, bad, h, c).is_err());
    }

    #[test]
    fn lstm_step_is_deterministic() {
        let mut store = ParamStore::new();
        let p = LstmParams::create(&mut store, "l", 3, 4, &mut rng());
        let run = |store: &ParamStore| {
            let mut tape = Tape::new();
            let x = tape.input(vec![0.2, -0.4, 0.9]);
            let h = tape.input(vec![0.1, 0.0, -0.3, 0.2]);
            let c = tape.input(vec![0.5, -0.5, 0.0, 0.1]);
            let (h1, c1) = tape.lstm_cell(store, &p, x, h, c).unwrap();
            (tape.value(h1).to_vec(), tape.value(c1).to_vec())
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn max_pool_forward_and_tie_routing() {
        let mut store = ParamStore::new();
        let rows = store.add("rows", Tensor::new(vec![2, 2], vec![1.0, 5.0, 3.0, 5.0]).unwrap());
        let mut tape = Tape::new();
        let all = tape.param(&store, rows);
        let r0 = tape.slice(all, 0, 2).unwrap();
        let r1 = tape.slice(all, 2, 2).unwrap();
        let pooled = tape.max_pool(&[r0, r1]).unwrap();
        assert_eq!(tape.value(pooled), &[3.0, 5.0]);
        let a = tape.slice(pooled, 0, 1).unwrap();
        let b = tape.slice(pooled, 1, 1).unwrap();
        let root = tape.weighted_sum(&[(a, 1.0), (b, 1.0)]).unwrap();
        tape.backward(root, &mut store).unwrap();
        // dim 0 max in row 1; dim 1 tied (5 vs 5) -> earlier row 0
        assert_eq!(store.grad(rows).data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn max_pool_single_row_is_identity() {
        let mut tape = Tape::new();
        let r = tape.input(vec![-1.0, 2.5, 0.0]);
        let p = tape.max_pool(&[r]).unwrap();
        assert_eq!(tape.value(p), &[-1.0, 2.5, 0.0]);
        assert!(tape.max_pool(&[]).is_err());
    }

    #[test]
    fn bilstm_single_input_is_one_step_each_way() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let f = LstmParams::create(&mut store, "f", 3, 2, &mut r);
        let b = LstmParams::create(&mut store, "b", 3, 2, &mut r);
        let mut tape = Tape::new();
        let x = tape.input(vec![0.3, -0.1, 0.8]);
        let out = bilstm_run(&mut tape, &store, &f, &b, &[x]).unwrap();
        let h0 = tape.zeros(2);
        let c0 = tape.zeros(2);
        let (hf, _) = tape.lstm_cell(&store, &f, x, h0, c0).unwrap();
        let (hb, _) = tape.lstm_cell(&store, &b, x, h0, c0).unwrap();
        let expect: Vec<f64> = tape.value(hf).iter().chain(tape.value(hb)).copied().collect();
        assert_eq!(tape.value(out[0]), expect.as_slice());
        assert!(bilstm_run(&mut tape, &store, &f, &b, &[]).is_err());
    }

    #[test]
    fn bilstm_reversal_swaps_halves() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let f = LstmParams::create(&mut store, "f", 2, 3, &mut r);
        let b = LstmParams::create(&mut store, "b", 2, 3, &mut r);
        let mut tape = Tape::new();
        let xs: Vec<Var> = [[0.1, 0.2], [-0.5, 0.4], [0.9, -0.3], [0.0, 0.7]]
            .iter()
            .map(|v| tape.input(v.to_vec()))
            .collect();
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        // Swap the direction parameters: the backward pass over the reversed
        // sequence is the forward pass over the original one.
        let out = bilstm_run(&mut tape, &store, &f, &b, &xs).unwrap();
        let out_rev = bilstm_run(&mut tape, &store, &b, &f, &rev).unwrap();
        let n = xs.len();
        for t in 0..n {
            let a = tape.value(out[t]);
            let z = tape.value(out_rev[n - 1 - t]);
            assert_eq!(&a[..3], &z[3..]);
            assert_eq!(&a[3..], &z[..3]);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut tape = Tape::new();
        let x = tape.input(vec![0.3, -2.0, 1.7, 0.0]);
        let xs = tape.input(vec![100.3, 98.0, 101.7, 100.0]);
        let a = tape.softmax(x).unwrap();
        let b = tape.softmax(xs).unwrap();
        for (p, q) in tape.value(a).iter().zip(tape.value(b)) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!((tape.value(a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(x, &mut store),
            Err(TensorError::NonScalarRoot(2))
        ));
    }

    #[test]
    fn tanh_cell_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let p = TanhCellParams::create(&mut store, "t", 3, 2, &mut rng());
        let ids = [p.w, p.b];
        let report = grad_check(&mut store, &ids, |s, tape| {
            let x = tape.input(vec![0.5, -0.2, 0.1]);
            let mut h = tape.input(vec![0.05, -0.1]);
            for _ in 0..2 {
                h = tape.tanh_cell(s, &p, x, h)?;
            }
            let parts: Vec<_> = (0..2).map(|k| tape.slice(h, k, 1)).collect::<Result<_>>()?;
            tape.weighted_sum(&[(parts[0], 1.0), (parts[1], -2.0)])
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
