//! Vanilla RNN, LSTM and GRU layers, optionally bidirectional.
//!
//! Per direction the parameters are `W: [G*h, in]`, `U: [G*h, h]`, `b: [G*h]`,
//! with `G` gate blocks stacked in the order
//! rnn `[a]`, lstm `[i, f, g, o]`, gru `[z, r, candidate]`.
//!
//! Recurrent dropout uses one mask per sequence and direction on the state fed
//! into `U`; input dropout is element-wise on the layer input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{glorot_uniform, orthogonal};
use super::{NnError, NnRng, ParamBlock, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentSpec {
    pub cell: CellKind,
    pub hidden_units: usize,
    pub bidirectional: bool,
    /// Element-wise dropout on this layer's input.
    pub dropout_rate: f64,
    /// Per-sequence dropout on the recurrent state.
    pub recurrent_dropout_rate: f64,
}

impl RecurrentSpec {
    pub fn new(cell: CellKind, hidden_units: usize, bidirectional: bool) -> Self {
        Self { cell, hidden_units, bidirectional, dropout_rate: 0.0, recurrent_dropout_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.hidden_units == 0 {
            return Err(NnError::InvalidSpec("hidden_units must be >= 1".into()));
        }
        for r in [self.dropout_rate, self.recurrent_dropout_rate] {
            if !(0.0..1.0).contains(&r) {
                return Err(NnError::InvalidSpec(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_width(&self) -> usize {
        self.directions() * self.hidden_units
    }

    pub fn param_count(&self, input_size: usize) -> usize {
        let h = self.hidden_units;
        self.directions() * self.cell.gates() * (input_size * h + h * h + h)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[i] += mat[i, :] . v` for a row-major matrix with `v.len()` columns.
fn matvec_add(out: &mut [f64], mat: &[f64], v: &[f64]) {
    let n = v.len();
    for (o, row) in out.iter_mut().zip(mat.chunks_exact(n)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += mat^T . d`.
fn matvec_t_add(out: &mut [f64], mat: &[f64], d: &[f64]) {
    let n = out.len();
    for (&di, row) in d.iter().zip(mat.chunks_exact(n)) {
        if di != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += di * a;
            }
        }
    }
}

/// `g += d (x) v`.
fn outer_add(g: &mut [f64], d: &[f64], v: &[f64]) {
    let n = v.len();
    for (&di, row) in d.iter().zip(g.chunks_exact_mut(n)) {
        if di != 0.0 {
            for (gi, vi) in row.iter_mut().zip(v) {
                *gi += di * vi;
            }
        }
    }
}

/// Borrowed parameters of one recurrent direction.
#[derive(Clone, Copy, Debug)]
pub struct CellParams<'a> {
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
    pub hidden: usize,
}

impl CellParams<'_> {
    fn check(&self, cell: CellKind, x: &[f64], h: &[f64]) -> Result<(), NnError> {
        let g = cell.gates() * self.hidden;
        if h.len() != self.hidden
            || self.b.len() != g
            || self.u.len() != g * self.hidden
            || self.w.len() != g * x.len()
        {
            return Err(NnError::DimensionMismatch(format!(
                "{} cell: x {}, h {}, hidden {}",
                cell.name(),
                x.len(),
                h.len(),
                self.hidden
            )));
        }
        Ok(())
    }
}

/// One GRU step: update gate `z`, reset gate `r`, candidate from `U (r * h)`,
/// and `h' = (1 - z) * h + z * candidate`.
pub fn gru_cell_step(x: &[f64], h_prev: &[f64], p: &CellParams<'_>) -> Result<Vec<f64>, NnError> {
    p.check(CellKind::Gru, x, h_prev)?;
    let mut acts = vec![0.0; 3 * p.hidden];
    let mut h = vec![0.0; p.hidden];
    gru_forward_step(p, x, h_prev, h_prev, &mut acts, &mut h);
    Ok(h)
}

/// One Elman step, `h' = tanh(W x + U h + b)`.
pub fn rnn_cell_step(x: &[f64], h_prev: &[f64], p: &CellParams<'_>) -> Result<Vec<f64>, NnError> {
    p.check(CellKind::Rnn, x, h_prev)?;
    let mut h = vec![0.0; p.hidden];
    rnn_forward_step(p, x, h_prev, &mut h);
    Ok(h)
}

/// One LSTM step; returns `(h', c')`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &CellParams<'_>,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    p.check(CellKind::Lstm, x, h_prev)?;
    if c_prev.len() != p.hidden {
        return Err(NnError::DimensionMismatch("lstm cell state".into()));
    }
    let mut acts = vec![0.0; 4 * p.hidden];
    let mut h = vec![0.0; p.hidden];
    let mut c = vec![0.0; p.hidden];
    lstm_forward_step(p, x, h_prev, c_prev, &mut acts, &mut h, &mut c);
    Ok((h, c))
}

fn rnn_forward_step(p: &CellParams<'_>, x: &[f64], mh: &[f64], h: &mut [f64]) {
    h.copy_from_slice(p.b);
    matvec_add(h, p.w, x);
    matvec_add(h, p.u, mh);
    h.iter_mut().for_each(|v| *v = v.tanh());
}

/// `mh` is the (possibly masked) state fed into `U`; `hp` the true previous state.
fn gru_forward_step(p: &CellParams<'_>, x: &[f64], hp: &[f64], mh: &[f64], acts: &mut [f64], h: &mut [f64]) {
    let n = p.hidden;
    acts.copy_from_slice(p.b);
    matvec_add(acts, p.w, x);
    let (zr, cand) = acts.split_at_mut(2 * n);
    matvec_add(zr, &p.u[..2 * n * n], mh);
    zr.iter_mut().for_each(|v| *v = sigmoid(*v));
    let r = &zr[n..];
    let rmh: Vec<f64> = r.iter().zip(mh).map(|(a, b)| a * b).collect();
    matvec_add(cand, &p.u[2 * n * n..], &rmh);
    cand.iter_mut().for_each(|v| *v = v.tanh());
    for i in 0..n {
        let z = zr[i];
        h[i] = (1.0 - z) * hp[i] + z * cand[i];
    }
}

fn lstm_forward_step(
    p: &CellParams<'_>,
    x: &[f64],
    mh: &[f64],
    cp: &[f64],
    acts: &mut [f64],
    h: &mut [f64],
    c: &mut [f64],
) {
    let n = p.hidden;
    acts.copy_from_slice(p.b);
    matvec_add(acts, p.w, x);
    matvec_add(acts, p.u, mh);
    for (k, v) in acts.iter_mut().enumerate() {
        *v = if k / n == 2 { v.tanh() } else { sigmoid(*v) };
    }
    for i in 0..n {
        let (ig, fg, gg, og) = (acts[i], acts[n + i], acts[2 * n + i], acts[3 * n + i]);
        c[i] = fg * cp[i] + ig * gg;
        h[i] = og * c[i].tanh();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionParams {
    pub w: ParamBlock,
    pub u: ParamBlock,
    pub b: ParamBlock,
}

impl DirectionParams {
    fn cell(&self, hidden: usize) -> CellParams<'_> {
        CellParams { w: &self.w.values, u: &self.u.values, b: &self.b.values, hidden }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentLayer {
    pub spec: RecurrentSpec,
    pub input_size: usize,
    /// Forward direction first.
    pub directions: Vec<DirectionParams>,
}

/// Cached activations of one direction over one sequence, in processing order.
#[derive(Clone, Debug)]
pub struct DirectionTrace {
    reversed: bool,
    mask: Option<Vec<f64>>,
    acts: Vec<f64>,
    /// `(T + 1) x h`, row 0 the zero initial state.
    hs: Vec<f64>,
    cs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RecurrentTrace {
    /// Layer input after input dropout.
    input: Tensor,
    input_mask: Option<Vec<f64>>,
    dirs: Vec<DirectionTrace>,
}

impl RecurrentTrace {
    /// Final state of each direction, concatenated: forward after the last
    /// time-step, backward after the first.
    pub fn final_state(&self, hidden: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dirs.len() * hidden);
        for d in &self.dirs {
            let t = d.hs.len() / hidden - 1;
            out.extend_from_slice(&d.hs[t * hidden..(t + 1) * hidden]);
        }
        out
    }
}

fn dropout_mask(rng: &mut NnRng, n: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

impl RecurrentLayer {
    pub fn new<R: Rng + ?Sized>(spec: RecurrentSpec, input_size: usize, index: usize, rng: &mut R) -> Self {
        let h = spec.hidden_units;
        let g = spec.cell.gates() * h;
        let directions = (0..spec.directions())
            .map(|d| {
                let tag = if d == 0 { "fwd" } else { "bwd" };
                let name = |p: &str| format!("rec{index}.{tag}.{p}");
                DirectionParams {
                    w: ParamBlock::new(name("w"), vec![g, input_size], glorot_uniform(rng, g * input_size, input_size, g)),
                    u: ParamBlock::new(name("u"), vec![g, h], orthogonal(rng, g, h)),
                    b: ParamBlock::zeros(name("b"), vec![g]),
                }
            })
            .collect();
        Self { spec, input_size, directions }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &ParamBlock> {
        self.directions.iter().flat_map(|d| [&d.w, &d.u, &d.b])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut ParamBlock> {
        self.directions.iter_mut().flat_map(|d| [&mut d.w, &mut d.u, &mut d.b])
    }

    pub fn block_count(&self) -> usize {
        3 * self.directions.len()
    }

    /// Runs every direction; `rng` enables dropout (training mode).
    pub fn forward(&self, input: &Tensor, mut rng: Option<&mut NnRng>) -> Result<(Tensor, RecurrentTrace), NnError> {
        if input.shape().len() != 2 || input.cols() != self.input_size {
            return Err(NnError::DimensionMismatch(format!(
                "recurrent layer expects [T, {}], got {:?}",
                self.input_size,
                input.shape()
            )));
        }
        let t_len = input.rows();
        let h = self.spec.hidden_units;
        let mut input = input.clone();
        let mut input_mask = None;
        if let Some(rng) = rng.as_deref_mut() {
            if self.spec.dropout_rate > 0.0 {
                let mask = dropout_mask(rng, input.data().len(), self.spec.dropout_rate);
                input.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                input_mask = Some(mask);
            }
        }
        let width = self.spec.output_width();
        let mut out = vec![0.0; t_len * width];
        let mut dirs = Vec::with_capacity(self.directions.len());
        for (d, params) in self.directions.iter().enumerate() {
            let mask = match rng.as_deref_mut() {
                Some(rng) if self.spec.recurrent_dropout_rate > 0.0 => {
                    Some(dropout_mask(rng, h, self.spec.recurrent_dropout_rate))
                }
                _ => None,
            };
            let trace = self.run_direction(params, &input, d == 1, mask);
            for s in 0..t_len {
                let t = if trace.reversed { t_len - 1 - s } else { s };
                out[t * width + d * h..t * width + (d + 1) * h].copy_from_slice(&trace.hs[(s + 1) * h..(s + 2) * h]);
            }
            dirs.push(trace);
        }
        Ok((Tensor::matrix(t_len, width, out)?, RecurrentTrace { input, input_mask, dirs }))
    }

    fn run_direction(&self, params: &DirectionParams, input: &Tensor, reversed: bool, mask: Option<Vec<f64>>) -> DirectionTrace {
        let t_len = input.rows();
        let n = self.spec.hidden_units;
        let g = self.spec.cell.gates() * n;
        let p = params.cell(n);
        let mut acts = vec![0.0; t_len * g];
        let mut hs = vec![0.0; (t_len + 1) * n];
        let is_lstm = self.spec.cell == CellKind::Lstm;
        let mut cs = if is_lstm { vec![0.0; (t_len + 1) * n] } else { Vec::new() };
        let mut mh = vec![0.0; n];
        for s in 0..t_len {
            let t = if reversed { t_len - 1 - s } else { s };
            let x = input.row(t);
            let (prev, next) = hs.split_at_mut((s + 1) * n);
            let hp = &prev[s * n..];
            let hn = &mut next[..n];
            match &mask {
                Some(m) => mh.iter_mut().zip(hp.iter().zip(m)).for_each(|(o, (a, b))| *o = a * b),
                None => mh.copy_from_slice(hp),
            }
            let a = &mut acts[s * g..(s + 1) * g];
            match self.spec.cell {
                CellKind::Rnn => {
                    rnn_forward_step(&p, x, &mh, hn);
                    a.copy_from_slice(hn);
                }
                CellKind::Gru => gru_forward_step(&p, x, hp, &mh, a, hn),
                CellKind::Lstm => {
                    let (cprev, cnext) = cs.split_at_mut((s + 1) * n);
                    lstm_forward_step(&p, x, &mh, &cprev[s * n..], a, hn, &mut cnext[..n]);
                }
            }
        }
        DirectionTrace { reversed, mask, acts, hs, cs }
    }

    /// Backpropagates gradients on the output sequence (`d_output`, `[T, width]`)
    /// and on the final states (`d_final`, `width`). Parameter gradients are
    /// accumulated into `grads` in block order; the returned tensor is the
    /// gradient with respect to the layer input (before input dropout).
    pub fn backward(
        &self,
        trace: &RecurrentTrace,
        d_output: Option<&Tensor>,
        d_final: &[f64],
        grads: &mut [Vec<f64>],
    ) -> Tensor {
        let input = &trace.input;
        let t_len = input.rows();
        let n = self.spec.hidden_units;
        let width = self.spec.output_width();
        let g = self.spec.cell.gates() * n;
        let mut dx = Tensor::zeros(input.shape().to_vec());

        for (d, (params, tr)) in self.directions.iter().zip(&trace.dirs).enumerate() {
            let (gw, rest) = grads[3 * d..3 * d + 3].split_at_mut(1);
            let (gu, gb) = rest.split_at_mut(1);
            let (gw, gu, gb) = (&mut gw[0], &mut gu[0], &mut gb[0]);
            let u = &params.u.values;
            let w = &params.w.values;

            let mut dh_next = d_final[d * n..(d + 1) * n].to_vec();
            let mut dc_next = vec![0.0; n];
            let mut dh = vec![0.0; n];
            let mut da = vec![0.0; g];
            let mut mh = vec![0.0; n];
            let mut dmh = vec![0.0; n];
            for s in (0..t_len).rev() {
                let t = if tr.reversed { t_len - 1 - s } else { s };
                dh.copy_from_slice(&dh_next);
                if let Some(dout) = d_output {
                    let row = &dout.row(t)[d * n..(d + 1) * n];
                    dh.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                let hp = &tr.hs[s * n..(s + 1) * n];
                let acts = &tr.acts[s * g..(s + 1) * g];
                match &tr.mask {
                    Some(m) => mh.iter_mut().zip(hp.iter().zip(m)).for_each(|(o, (a, b))| *o = a * b),
                    None => mh.copy_from_slice(hp),
                }
                dmh.iter_mut().for_each(|v| *v = 0.0);
                // direct path from h' to h, before the U contributions
                let mut dhp = vec![0.0; n];

                match self.spec.cell {
                    CellKind::Rnn => {
                        for i in 0..n {
                            da[i] = dh[i] * (1.0 - acts[i] * acts[i]);
                        }
                        outer_add(gu, &da, &mh);
                        matvec_t_add(&mut dmh, u, &da);
                    }
                    CellKind::Gru => {
                        let (z, r, cand) = (&acts[..n], &acts[n..2 * n], &acts[2 * n..]);
                        let (daz, rest) = da.split_at_mut(n);
                        let (dar, dac) = rest.split_at_mut(n);
                        for i in 0..n {
                            dac[i] = dh[i] * z[i] * (1.0 - cand[i] * cand[i]);
                            daz[i] = dh[i] * (cand[i] - hp[i]) * z[i] * (1.0 - z[i]);
                            dhp[i] = dh[i] * (1.0 - z[i]);
                        }
                        let rmh: Vec<f64> = r.iter().zip(&mh).map(|(a, b)| a * b).collect();
                        let uc = &u[2 * n * n..];
                        let mut drmh = vec![0.0; n];
                        matvec_t_add(&mut drmh, uc, dac);
                        outer_add(&mut gu[2 * n * n..], dac, &rmh);
                        for i in 0..n {
                            dar[i] = drmh[i] * mh[i] * r[i] * (1.0 - r[i]);
                            dmh[i] = drmh[i] * r[i];
                        }
                        let dzr = &da[..2 * n];
                        outer_add(&mut gu[..2 * n * n], dzr, &mh);
                        matvec_t_add(&mut dmh, &u[..2 * n * n], dzr);
                    }
                    CellKind::Lstm => {
                        let c = &tr.cs[(s + 1) * n..(s + 2) * n];
                        let cp = &tr.cs[s * n..(s + 1) * n];
                        for i in 0..n {
                            let (ig, fg, gg, og) = (acts[i], acts[n + i], acts[2 * n + i], acts[3 * n + i]);
                            let tc = c[i].tanh();
                            let dc = dc_next[i] + dh[i] * og * (1.0 - tc * tc);
                            da[i] = dc * gg * ig * (1.0 - ig);
                            da[n + i] = dc * cp[i] * fg * (1.0 - fg);
                            da[2 * n + i] = dc * ig * (1.0 - gg * gg);
                            da[3 * n + i] = dh[i] * tc * og * (1.0 - og);
                            dc_next[i] = dc * fg;
                        }
                        outer_add(gu, &da, &mh);
                        matvec_t_add(&mut dmh, u, &da);
                    }
                }

                outer_add(gw, &da, input.row(t));
                gb.iter_mut().zip(&da).for_each(|(a, b)| *a += b);
                matvec_t_add(dx.row_mut(t), w, &da);
                for i in 0..n {
                    let m = tr.mask.as_ref().map_or(1.0, |m| m[i]);
                    dh_next[i] = dhp[i] + dmh[i] * m;
                }
            }
        }
        debug_assert_eq!(width, self.directions.len() * n);
        if let Some(mask) = &trace.input_mask {
            dx.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        dx
    }
}

/// Evaluation-mode pass of a recurrent layer; `[T, directions * hidden]`.
pub fn bidirectional_forward(input: &Tensor, layer: &RecurrentLayer) -> Result<Tensor, NnError> {
    layer.forward(input, None).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layer(cell: CellKind, bidirectional: bool, input: usize, hidden: usize, seed: u64) -> RecurrentLayer {
        let mut rng = NnRng::seed_from_u64(seed);
        let mut l = RecurrentLayer::new(RecurrentSpec::new(cell, hidden, bidirectional), input, 0, &mut rng);
        // non-zero biases so the tests see them
        for b in l.blocks_mut() {
            if b.name.ends_with(".b") {
                b.values.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        l
    }

    #[test]
    fn zero_gru_cell() {
        let zeros = vec![0.0; 3 * 2 * 2];
        let p = CellParams { w: &zeros, u: &zeros, b: &[0.0; 6], hidden: 2 };
        assert_eq!(gru_cell_step(&[0.3, -1.0], &[0.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
        assert!(gru_cell_step(&[0.3], &[0.0, 0.0], &p).is_err());
    }

    #[test]
    fn width_and_t1() {
        let l = layer(CellKind::Gru, true, 5, 32, 3);
        let x = Tensor::matrix(1, 5, vec![0.1, 0.2, -0.3, 0.4, 0.0]).unwrap();
        let y = bidirectional_forward(&x, &l).unwrap();
        assert_eq!(y.shape(), &[1, 64]);
        // single step: each direction sees the same input
        let fwd = gru_cell_step(x.row(0), &[0.0; 32], &l.directions[0].cell(32)).unwrap();
        let bwd = gru_cell_step(x.row(0), &[0.0; 32], &l.directions[1].cell(32)).unwrap();
        assert_eq!(&y.row(0)[..32], &fwd[..]);
        assert_eq!(&y.row(0)[32..], &bwd[..]);
    }

    #[test]
    fn final_state_matches_sequence_ends() {
        for cell in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
            let l = layer(cell, true, 3, 4, 9);
            let x = Tensor::matrix(6, 3, (0..18).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
            let (y, tr) = l.forward(&x, None).unwrap();
            let fin = tr.final_state(4);
            assert_eq!(&fin[..4], &y.row(5)[..4]);
            assert_eq!(&fin[4..], &y.row(0)[4..]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let l = layer(CellKind::Gru, false, 3, 4, 1);
        let x = Tensor::matrix(2, 4, vec![0.0; 8]).unwrap();
        assert!(matches!(l.forward(&x, None), Err(NnError::DimensionMismatch(_))));
    }

    #[test]
    fn dropout_only_in_training() {
        let mut spec = RecurrentSpec::new(CellKind::Gru, 4, true);
        spec.dropout_rate = 0.5;
        spec.recurrent_dropout_rate = 0.5;
        let mut rng = NnRng::seed_from_u64(5);
        let l = RecurrentLayer::new(spec, 3, 0, &mut rng);
        let x = Tensor::matrix(5, 3, (0..15).map(|v| v as f64 / 10.0).collect()).unwrap();
        let a = bidirectional_forward(&x, &l).unwrap();
        let b = bidirectional_forward(&x, &l).unwrap();
        assert_eq!(a, b);
        let (c, _) = l.forward(&x, Some(&mut rng)).unwrap();
        assert_ne!(a, c);
    }
}
