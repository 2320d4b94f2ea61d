//! Recurrent cells: the plain tanh cell and the gated LSTM cell, with the
//! per-step forward math and the backward-through-time passes used for
//! exact analytic gradients.

use rand::Rng;

use super::linalg::{axpy, orthogonal, Matrix};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const INPUT_INIT_RANGE: f64 = 0.01;

/// `h_t = tanh(W_h h_{t-1} + W_x x_t)` with an orthogonal recurrent matrix
/// and small uniform input weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub w_h: Matrix,
    pub w_x: Matrix,
}

impl RnnCell {
    pub fn init(hidden: usize, embed_dim: usize, rng: &mut impl Rng) -> Self {
        RnnCell {
            w_h: orthogonal(hidden, rng),
            w_x: Matrix::uniform(hidden, embed_dim, -INPUT_INIT_RANGE, INPUT_INIT_RANGE, rng),
        }
    }

    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = self.w_h.matvec(h_prev);
        self.w_x.matvec_add(x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }
}

/// Standard LSTM: input/forget/output gates and a candidate write, no
/// peepholes. Gate weights act on `[h_prev; x]`; the recurrent blocks are
/// orthogonal-initialized and the forget bias starts at 1.0 so early
/// training retains memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// Gate weight matrices in `[input, forget, output, candidate]` order,
    /// each `hidden x (hidden + embed_dim)`.
    pub w: [Matrix; 4],
    /// Gate biases in the same order.
    pub b: [Vec<f64>; 4],
}

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CANDIDATE: usize = 3;

impl LstmCell {
    pub fn init(hidden: usize, embed_dim: usize, rng: &mut impl Rng) -> Self {
        let mut gate = || {
            let mut w = Matrix::zeros(hidden, hidden + embed_dim);
            let rec = orthogonal(hidden, rng);
            let inp =
                Matrix::uniform(hidden, embed_dim, -INPUT_INIT_RANGE, INPUT_INIT_RANGE, rng);
            for r in 0..hidden {
                w.row_mut(r)[..hidden].copy_from_slice(rec.row(r));
                w.row_mut(r)[hidden..].copy_from_slice(inp.row(r));
            }
            w
        };
        let w = [gate(), gate(), gate(), gate()];
        let mut b = [
            vec![0.0; hidden],
            vec![0.0; hidden],
            vec![0.0; hidden],
            vec![0.0; hidden],
        ];
        b[GATE_FORGET].iter_mut().for_each(|v| *v = 1.0);
        LstmCell { w, b }
    }

    pub fn hidden(&self) -> usize {
        self.w[0].rows
    }

    /// One step; returns `(h, c)` and the gate activations for backprop.
    pub fn step_full(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>, Gates) {
        let d = self.hidden();
        let mut z = Vec::with_capacity(h_prev.len() + x.len());
        z.extend_from_slice(h_prev);
        z.extend_from_slice(x);

        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(4);
        for k in 0..4 {
            let mut a = self.w[k].matvec(&z);
            for (av, bv) in a.iter_mut().zip(&self.b[k]) {
                *av += bv;
            }
            acts.push(a);
        }
        let gate_g = acts.pop().unwrap();
        let gate_o = acts.pop().unwrap();
        let gate_f = acts.pop().unwrap();
        let gate_i = acts.pop().unwrap();

        let i: Vec<f64> = gate_i.iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = gate_f.iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<f64> = gate_o.iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = gate_g.iter().map(|&v| v.tanh()).collect();

        let mut c = vec![0.0; d];
        for j in 0..d {
            c[j] = f[j] * c_prev[j] + i[j] * g[j];
        }
        let mut h = vec![0.0; d];
        for j in 0..d {
            h[j] = o[j] * c[j].tanh();
        }
        (h, c, Gates { i, f, o, g })
    }

    pub fn step(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, c, _) = self.step_full(h_prev, c_prev, x);
        (h, c)
    }
}

/// Gate activations of one LSTM step, cached for the backward pass.
#[derive(Debug, Clone)]
pub struct Gates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
}

/// Forward cache of one sequence pass, enough to backpropagate exactly.
#[derive(Debug, Clone)]
pub enum CellTrace {
    Rnn {
        /// `hs[0]` is the zero initial state, `hs[t]` the state after step `t`.
        hs: Vec<Vec<f64>>,
    },
    Lstm {
        hs: Vec<Vec<f64>>,
        cs: Vec<Vec<f64>>,
        gates: Vec<Gates>,
    },
}

impl CellTrace {
    pub fn final_hidden(&self) -> &[f64] {
        match self {
            CellTrace::Rnn { hs } => hs.last().unwrap(),
            CellTrace::Lstm { hs, .. } => hs.last().unwrap(),
        }
    }
}

/// Gradient accumulators mirroring [`RnnCell`].
#[derive(Debug, Clone, PartialEq)]
pub struct RnnGrads {
    pub w_h: Matrix,
    pub w_x: Matrix,
}

/// Gradient accumulators mirroring [`LstmCell`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

pub fn rnn_forward(cell: &RnnCell, xs: &[&[f64]]) -> CellTrace {
    let d = cell.w_h.rows;
    let mut hs = Vec::with_capacity(xs.len() + 1);
    hs.push(vec![0.0; d]);
    for x in xs {
        let h = cell.step(hs.last().unwrap(), x);
        hs.push(h);
    }
    CellTrace::Rnn { hs }
}

pub fn lstm_forward(cell: &LstmCell, xs: &[&[f64]]) -> CellTrace {
    let d = cell.hidden();
    let mut hs = Vec::with_capacity(xs.len() + 1);
    let mut cs = Vec::with_capacity(xs.len() + 1);
    let mut gates = Vec::with_capacity(xs.len());
    hs.push(vec![0.0; d]);
    cs.push(vec![0.0; d]);
    for x in xs {
        let (h, c, gs) = cell.step_full(hs.last().unwrap(), cs.last().unwrap(), x);
        hs.push(h);
        cs.push(c);
        gates.push(gs);
    }
    CellTrace::Lstm { hs, cs, gates }
}

/// Backward through time for the plain cell. `d_xs[t]` receives the
/// gradient with respect to the step-`t` input embedding.
pub fn rnn_backward(
    cell: &RnnCell,
    trace: &CellTrace,
    xs: &[&[f64]],
    d_final: &[f64],
    grads: &mut RnnGrads,
    d_xs: &mut [Vec<f64>],
) {
    let hs = match trace {
        CellTrace::Rnn { hs } => hs,
        _ => unreachable!("trace kind matches cell kind"),
    };
    let mut delta = d_final.to_vec();
    for t in (1..hs.len()).rev() {
        let h = &hs[t];
        // d(pre-activation) = delta * (1 - h^2)
        let da: Vec<f64> = delta
            .iter()
            .zip(h)
            .map(|(d, hv)| d * (1.0 - hv * hv))
            .collect();
        grads.w_h.add_scaled_outer(1.0, &da, &hs[t - 1]);
        grads.w_x.add_scaled_outer(1.0, &da, xs[t - 1]);
        cell.w_x.matvec_transpose_add(&da, &mut d_xs[t - 1]);
        delta = cell.w_h.matvec_transpose(&da);
    }
}

/// Backward through time for the LSTM.
pub fn lstm_backward(
    cell: &LstmCell,
    trace: &CellTrace,
    xs: &[&[f64]],
    d_final: &[f64],
    grads: &mut LstmGrads,
    d_xs: &mut [Vec<f64>],
) {
    let (hs, cs, gates) = match trace {
        CellTrace::Lstm { hs, cs, gates } => (hs, cs, gates),
        _ => unreachable!("trace kind matches cell kind"),
    };
    let d = cell.hidden();
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; d];
    for t in (1..hs.len()).rev() {
        let gs = &gates[t - 1];
        let c_t = &cs[t];
        let c_prev = &cs[t - 1];
        let h_prev = &hs[t - 1];
        let x = xs[t - 1];

        let mut da = [
            vec![0.0; d], // input gate pre-activation
            vec![0.0; d], // forget
            vec![0.0; d], // output
            vec![0.0; d], // candidate
        ];
        let mut dc_prev = vec![0.0; d];
        for j in 0..d {
            let tc = c_t[j].tanh();
            let do_j = dh[j] * tc;
            let dc_j = dc[j] + dh[j] * gs.o[j] * (1.0 - tc * tc);
            let df_j = dc_j * c_prev[j];
            let di_j = dc_j * gs.g[j];
            let dg_j = dc_j * gs.i[j];
            dc_prev[j] = dc_j * gs.f[j];
            da[GATE_INPUT][j] = di_j * gs.i[j] * (1.0 - gs.i[j]);
            da[GATE_FORGET][j] = df_j * gs.f[j] * (1.0 - gs.f[j]);
            da[GATE_OUTPUT][j] = do_j * gs.o[j] * (1.0 - gs.o[j]);
            da[GATE_CANDIDATE][j] = dg_j * (1.0 - gs.g[j] * gs.g[j]);
        }

        let mut z = Vec::with_capacity(d + x.len());
        z.extend_from_slice(h_prev);
        z.extend_from_slice(x);
        let mut dz = vec![0.0; z.len()];
        for k in 0..4 {
            grads.w[k].add_scaled_outer(1.0, &da[k], &z);
            axpy(1.0, &da[k], &mut grads.b[k]);
            cell.w[k].matvec_transpose_add(&da[k], &mut dz);
        }
        dh = dz[..d].to_vec();
        axpy(1.0, &dz[d..], &mut d_xs[t - 1]);
        dc = dc_prev;
    }
}
