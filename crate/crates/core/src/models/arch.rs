//! Reference architectures over flat parameter vectors.
//!
//! Every network stores its parameters in one `Vec<f64>`; the layouts below
//! are fixed so checkpoints and parameter hashes stay stable.
//!
//! | id          | layers                                                      |
//! |-------------|-------------------------------------------------------------|
//! | `mlp3`      | dense 64 → relu → dense 32 → relu → dense classes           |
//! | `small_cnn` | conv3x3(8, same) → relu → dense 32 → relu → dense classes   |
//! | `lstm_seq`  | LSTM(32) over the leading axis → dense classes on last state |
//!
//! The *reduced* member of each family drops one hidden layer and halves the
//! width (`mlp3` → dense 32 → relu → dense classes, `small_cnn` → conv(4) →
//! dense classes, `lstm_seq` → LSTM(16)).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MLP3_HIDDEN: [usize; 2] = [64, 32];
pub const CNN_FILTERS: usize = 8;
pub const CNN_HIDDEN: usize = 32;
pub const LSTM_HIDDEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureId {
    Mlp3,
    SmallCnn,
    LstmSeq,
}

impl ArchitectureId {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureId::Mlp3 => "mlp3",
            ArchitectureId::SmallCnn => "small_cnn",
            ArchitectureId::LstmSeq => "lstm_seq",
        }
    }

    /// Concrete layer sizes for inputs of `input_shape`.
    ///
    /// `small_cnn` reads `[c, h, w]`, `[h, w]` or `[d]` (as a `1×1×d` image);
    /// `lstm_seq` reads `[steps, features]` or `[d]` (as `d` scalar steps).
    pub fn build(self, input_shape: &[usize], classes: usize) -> Result<Architecture> {
        if classes < 2 {
            return Err(Error::Model(format!("need at least 2 classes, got {classes}")));
        }
        let dim: usize = input_shape.iter().product();
        if dim == 0 {
            return Err(Error::Model(format!("empty input shape {input_shape:?}")));
        }
        Ok(match self {
            ArchitectureId::Mlp3 => Architecture::Mlp(Dense::new([&[dim][..], &MLP3_HIDDEN, &[classes]].concat())),
            ArchitectureId::SmallCnn => {
                let (channels, height, width) = match *input_shape {
                    [c, h, w] => (c, h, w),
                    [h, w] => (1, h, w),
                    [d] => (1, 1, d),
                    _ => {
                        return Err(Error::Model(format!(
                            "small_cnn cannot read input shape {input_shape:?}"
                        )))
                    }
                };
                Architecture::Cnn(Cnn::new(
                    channels,
                    height,
                    width,
                    CNN_FILTERS,
                    Some(CNN_HIDDEN),
                    classes,
                ))
            }
            ArchitectureId::LstmSeq => {
                let (steps, features) = match *input_shape {
                    [t, f] => (t, f),
                    [d] => (d, 1),
                    _ => {
                        return Err(Error::Model(format!(
                            "lstm_seq cannot read input shape {input_shape:?}"
                        )))
                    }
                };
                Architecture::Lstm(Lstm::new(steps, features, LSTM_HIDDEN, classes))
            }
        })
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp3" => Ok(ArchitectureId::Mlp3),
            "small_cnn" => Ok(ArchitectureId::SmallCnn),
            "lstm_seq" => Ok(ArchitectureId::LstmSeq),
            other => Err(Error::Spec(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Concrete network with all sizes resolved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(Dense),
    Cnn(Cnn),
    Lstm(Lstm),
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct Trace {
    logits: Vec<f64>,
    kind: TraceKind,
}

enum TraceKind {
    Dense(DenseTrace),
    Cnn { conv_pre: Vec<f64>, tail: DenseTrace },
    Lstm(LstmTrace),
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

impl Architecture {
    pub fn id(&self) -> ArchitectureId {
        match self {
            Architecture::Mlp(_) => ArchitectureId::Mlp3,
            Architecture::Cnn(_) => ArchitectureId::SmallCnn,
            Architecture::Lstm(_) => ArchitectureId::LstmSeq,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp(d) => d.dims[0],
            Architecture::Cnn(c) => c.channels * c.height * c.width,
            Architecture::Lstm(l) => l.steps * l.features,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Mlp(d) => *d.dims.last().unwrap(),
            Architecture::Cnn(c) => *c.tail.dims.last().unwrap(),
            Architecture::Lstm(l) => *l.head.dims.last().unwrap(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Mlp(d) => d.param_count(),
            Architecture::Cnn(c) => c.conv_params() + c.tail.param_count(),
            Architecture::Lstm(l) => l.recurrent_params() + l.head.param_count(),
        }
    }

    /// Parameter range of the output layer (weights and bias).
    pub fn head_range(&self) -> std::ops::Range<usize> {
        let (offset, dense) = match self {
            Architecture::Mlp(d) => (0, d),
            Architecture::Cnn(c) => (c.conv_params(), &c.tail),
            Architecture::Lstm(l) => (l.recurrent_params(), &l.head),
        };
        let last = dense.dims.len() - 2;
        let start = offset + dense.layer_offset(last);
        start..offset + dense.param_count()
    }

    /// Reduced member of the same family.
    pub fn smaller(&self) -> Architecture {
        match self {
            Architecture::Mlp(d) => {
                let hidden = &d.dims[1..d.dims.len() - 1];
                let kept = if hidden.len() > 1 {
                    &hidden[..hidden.len() - 1]
                } else {
                    hidden
                };
                let mut dims = vec![d.dims[0]];
                dims.extend(kept.iter().map(|&h| (h / 2).max(1)));
                dims.push(*d.dims.last().unwrap());
                Architecture::Mlp(Dense::new(dims))
            }
            Architecture::Cnn(c) => Architecture::Cnn(Cnn::new(
                c.channels,
                c.height,
                c.width,
                (c.filters / 2).max(1),
                None,
                *c.tail.dims.last().unwrap(),
            )),
            Architecture::Lstm(l) => Architecture::Lstm(Lstm::new(
                l.steps,
                l.features,
                (l.hidden / 2).max(1),
                *l.head.dims.last().unwrap(),
            )),
        }
    }

    /// Fresh parameters: `U(-1/√fan_in, 1/√fan_in)` for dense and conv layers,
    /// `U(-1/√hidden, 1/√hidden)` for the recurrent block.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        match self {
            Architecture::Mlp(d) => d.init_into(rng, &mut params),
            Architecture::Cnn(c) => {
                let fan_in = (c.channels * 9) as f64;
                let bound = 1.0 / fan_in.sqrt();
                for _ in 0..c.conv_params() {
                    params.push(rng.random_range(-bound..bound));
                }
                c.tail.init_into(rng, &mut params);
            }
            Architecture::Lstm(l) => {
                let bound = 1.0 / (l.hidden as f64).sqrt();
                for _ in 0..l.recurrent_params() {
                    params.push(rng.random_range(-bound..bound));
                }
                l.head.init_into(rng, &mut params);
            }
        }
        debug_assert_eq!(params.len(), self.param_count());
        params
    }

    /// Inference-only forward pass.
    pub fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(params, x).logits
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        match self {
            Architecture::Mlp(d) => {
                let t = d.forward(params, x.to_vec());
                Trace {
                    logits: t.output().to_vec(),
                    kind: TraceKind::Dense(t),
                }
            }
            Architecture::Cnn(c) => {
                let (w, rest) = params.split_at(c.conv_params());
                let conv_pre = c.conv_forward(w, x);
                let act = conv_pre.iter().map(|v| v.max(0.0)).collect();
                let tail = c.tail.forward(rest, act);
                Trace {
                    logits: tail.output().to_vec(),
                    kind: TraceKind::Cnn { conv_pre, tail },
                }
            }
            Architecture::Lstm(l) => {
                let (w, rest) = params.split_at(l.recurrent_params());
                let lt = l.forward(w, x);
                let head = l.head.forward(rest, lt.h[l.steps].clone());
                Trace {
                    logits: head.output().to_vec(),
                    kind: TraceKind::Lstm(LstmTrace { head, ..lt }),
                }
            }
        }
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂logits`.
    pub fn backward(&self, params: &[f64], x: &[f64], trace: &Trace, dlogits: &[f64], grad: &mut [f64]) {
        match (self, &trace.kind) {
            (Architecture::Mlp(d), TraceKind::Dense(t)) => {
                d.backward(params, t, dlogits, grad, false);
            }
            (Architecture::Cnn(c), TraceKind::Cnn { conv_pre, tail }) => {
                let n = c.conv_params();
                let (w, rest) = params.split_at(n);
                let (gw, grest) = grad.split_at_mut(n);
                let mut dact = c.tail.backward(rest, tail, dlogits, grest, true);
                for (d, pre) in dact.iter_mut().zip(conv_pre) {
                    if *pre <= 0.0 {
                        *d = 0.0;
                    }
                }
                c.conv_backward(w, x, &dact, gw);
            }
            (Architecture::Lstm(l), TraceKind::Lstm(t)) => {
                let n = l.recurrent_params();
                let (w, rest) = params.split_at(n);
                let (gw, grest) = grad.split_at_mut(n);
                let dh = l.head.backward(rest, &t.head, dlogits, grest, true);
                l.backward(w, x, t, dh, gw);
            }
            _ => unreachable!("trace does not belong to this architecture"),
        }
    }
}

/// Fully connected stack with ReLU between layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    /// Layer widths, input first, output last.
    pub dims: Vec<usize>,
}

struct DenseTrace {
    /// `acts[0]` is the input; `acts[l]` for `l ≥ 1` is the pre-activation of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl DenseTrace {
    fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Dense {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.len() >= 2, "dense stack needs input and output widths");
        Self { dims }
    }

    fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.dims.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn init_into<R: Rng>(&self, rng: &mut R, params: &mut Vec<f64>) {
        for w in self.dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
    }

    fn forward(&self, params: &[f64], input: Vec<f64>) -> DenseTrace {
        let layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let prev = &acts[l];
            let relu_in = l > 0;
            let mut z = bias.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for (w, &a) in row.iter().zip(prev) {
                    acc += w * if relu_in { a.max(0.0) } else { a };
                }
                *zo += acc;
            }
            acts.push(z);
        }
        DenseTrace { acts }
    }

    /// Returns `∂loss/∂input` when `want_input_grad` is set (empty otherwise).
    fn backward(
        &self,
        params: &[f64],
        trace: &DenseTrace,
        dout: &[f64],
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Vec<f64> {
        let layers = self.dims.len() - 1;
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let offset = self.layer_offset(l);
            let prev = &trace.acts[l];
            let relu_in = l > 0;
            {
                let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    gb[o] += d;
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, &a) in row.iter_mut().zip(prev) {
                        *g += d * if relu_in { a.max(0.0) } else { a };
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return Vec::new();
            }
            let weights = &params[offset..offset + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (nx, w) in next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *nx += d * w;
                }
            }
            if relu_in {
                for (nx, &a) in next.iter_mut().zip(prev) {
                    if a <= 0.0 {
                        *nx = 0.0;
                    }
                }
            }
            delta = next;
        }
        delta
    }
}

/// One 3×3 "same" convolution followed by a dense tail.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cnn {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub tail: Dense,
}

impl Cnn {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        hidden: Option<usize>,
        classes: usize,
    ) -> Self {
        let flat = filters * height * width;
        let dims = match hidden {
            Some(h) => vec![flat, h, classes],
            None => vec![flat, classes],
        };
        Self {
            channels,
            height,
            width,
            filters,
            tail: Dense::new(dims),
        }
    }

    fn conv_params(&self) -> usize {
        self.filters * self.channels * 9 + self.filters
    }

    fn conv_forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let (c_in, h, wd) = (self.channels, self.height, self.width);
        let bias = &w[self.filters * c_in * 9..];
        let mut out = vec![0.0; self.filters * h * wd];
        for f in 0..self.filters {
            for i in 0..h {
                for j in 0..wd {
                    let mut acc = bias[f];
                    for c in 0..c_in {
                        for di in 0..3 {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3 {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= wd as isize {
                                    continue;
                                }
                                acc +=
                                    w[((f * c_in + c) * 3 + di) * 3 + dj] * x[(c * h + ii as usize) * wd + jj as usize];
                            }
                        }
                    }
                    out[(f * h + i) * wd + j] = acc;
                }
            }
        }
        out
    }

    fn conv_backward(&self, _w: &[f64], x: &[f64], dout: &[f64], grad: &mut [f64]) {
        let (c_in, h, wd) = (self.channels, self.height, self.width);
        let bias_at = self.filters * c_in * 9;
        for f in 0..self.filters {
            for i in 0..h {
                for j in 0..wd {
                    let d = dout[(f * h + i) * wd + j];
                    if d == 0.0 {
                        continue;
                    }
                    grad[bias_at + f] += d;
                    for c in 0..c_in {
                        for di in 0..3 {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3 {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= wd as isize {
                                    continue;
                                }
                                grad[((f * c_in + c) * 3 + di) * 3 + dj] +=
                                    d * x[(c * h + ii as usize) * wd + jj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Single-layer LSTM (gate order i, f, g, o) with a dense head on the final
/// hidden state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lstm {
    pub steps: usize,
    pub features: usize,
    pub hidden: usize,
    pub head: Dense,
}

struct LstmTrace {
    /// `h[0] = 0`, `h[t+1]` after step `t`.
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    /// Post-nonlinearity gate values per step, `4·hidden` each.
    gates: Vec<Vec<f64>>,
    head: DenseTrace,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(steps: usize, features: usize, hidden: usize, classes: usize) -> Self {
        Self {
            steps,
            features,
            hidden,
            head: Dense::new(vec![hidden, classes]),
        }
    }

    fn recurrent_params(&self) -> usize {
        let g = 4 * self.hidden;
        g * self.features + g * self.hidden + g
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> LstmTrace {
        let (hd, fd) = (self.hidden, self.features);
        let g4 = 4 * hd;
        let w_ih = &w[..g4 * fd];
        let w_hh = &w[g4 * fd..g4 * fd + g4 * hd];
        let b = &w[g4 * fd + g4 * hd..];
        let mut h = vec![vec![0.0; hd]];
        let mut c = vec![vec![0.0; hd]];
        let mut gates = Vec::with_capacity(self.steps);
        for t in 0..self.steps {
            let xt = &x[t * fd..(t + 1) * fd];
            let hp = &h[t];
            let mut a = b.to_vec();
            for (r, ar) in a.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (wv, xv) in w_ih[r * fd..(r + 1) * fd].iter().zip(xt) {
                    acc += wv * xv;
                }
                for (wv, hv) in w_hh[r * hd..(r + 1) * hd].iter().zip(hp) {
                    acc += wv * hv;
                }
                *ar += acc;
            }
            for k in 0..hd {
                a[k] = sigmoid(a[k]);
                a[hd + k] = sigmoid(a[hd + k]);
                a[2 * hd + k] = a[2 * hd + k].tanh();
                a[3 * hd + k] = sigmoid(a[3 * hd + k]);
            }
            let cp = &c[t];
            let ct: Vec<f64> = (0..hd).map(|k| a[hd + k] * cp[k] + a[k] * a[2 * hd + k]).collect();
            let ht: Vec<f64> = (0..hd).map(|k| a[3 * hd + k] * ct[k].tanh()).collect();
            c.push(ct);
            h.push(ht);
            gates.push(a);
        }
        LstmTrace {
            h,
            c,
            gates,
            head: DenseTrace { acts: Vec::new() },
        }
    }

    fn backward(&self, w: &[f64], x: &[f64], t: &LstmTrace, mut dh: Vec<f64>, grad: &mut [f64]) {
        let (hd, fd) = (self.hidden, self.features);
        let g4 = 4 * hd;
        let w_hh = &w[g4 * fd..g4 * fd + g4 * hd];
        let (g_ih, rest) = grad.split_at_mut(g4 * fd);
        let (g_hh, g_b) = rest.split_at_mut(g4 * hd);
        let mut dc = vec![0.0; hd];
        let mut da = vec![0.0; g4];
        for step in (0..self.steps).rev() {
            let gates = &t.gates[step];
            let ct = &t.c[step + 1];
            let cp = &t.c[step];
            for k in 0..hd {
                let (i, f, g, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
                let tc = ct[k].tanh();
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                da[k] = dc[k] * g * i * (1.0 - i);
                da[hd + k] = dc[k] * cp[k] * f * (1.0 - f);
                da[2 * hd + k] = dc[k] * i * (1.0 - g * g);
                da[3 * hd + k] = d_o * o * (1.0 - o);
                dc[k] *= f;
            }
            let xt = &x[step * fd..(step + 1) * fd];
            let hp = &t.h[step];
            let mut dh_prev = vec![0.0; hd];
            for (r, &d) in da.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g_b[r] += d;
                for (g, xv) in g_ih[r * fd..(r + 1) * fd].iter_mut().zip(xt) {
                    *g += d * xv;
                }
                let row = &w_hh[r * hd..(r + 1) * hd];
                for ((g, hv), (dp, wv)) in g_hh[r * hd..(r + 1) * hd]
                    .iter_mut()
                    .zip(hp)
                    .zip(dh_prev.iter_mut().zip(row))
                {
                    *g += d * hv;
                    *dp += d * wv;
                }
            }
            dh = dh_prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    /// Loss = Σ_k c_k · logit_k for fixed random c; compare analytic and
    /// central-difference parameter gradients.
    fn check_gradients(arch: &Architecture, seed: u64) {
        let mut rng = seeds::rng(seed);
        let params = arch.init(&mut rng);
        let x: Vec<f64> = (0..arch.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let coef: Vec<f64> = (0..arch.classes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &[f64]| -> f64 { arch.logits(p, &x).iter().zip(&coef).map(|(z, c)| z * c).sum() };
        let trace = arch.forward(&params, &x);
        let mut grad = vec![0.0; params.len()];
        arch.backward(&params, &x, &trace, &coef, &mut grad);

        let h = 1e-6;
        let stride = (params.len() / 200).max(1);
        for k in (0..params.len()).step_by(stride) {
            let mut p = params.clone();
            p[k] += h;
            let up = loss(&p);
            p[k] -= 2.0 * h;
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
            assert!(
                err < 1e-4 || (numeric - grad[k]).abs() < 1e-8,
                "{:?} param {k}: analytic {} numeric {numeric}",
                arch.id(),
                grad[k]
            );
        }
    }

    #[test]
    fn mlp_gradients() {
        check_gradients(&ArchitectureId::Mlp3.build(&[7], 4).unwrap(), 1);
        check_gradients(&ArchitectureId::Mlp3.build(&[7], 4).unwrap().smaller(), 2);
    }

    #[test]
    fn cnn_gradients() {
        check_gradients(&ArchitectureId::SmallCnn.build(&[2, 4, 5], 3).unwrap(), 3);
        check_gradients(&ArchitectureId::SmallCnn.build(&[9], 3).unwrap().smaller(), 4);
    }

    #[test]
    fn lstm_gradients() {
        check_gradients(&ArchitectureId::LstmSeq.build(&[5, 3], 4).unwrap(), 5);
        check_gradients(&ArchitectureId::LstmSeq.build(&[6], 2).unwrap().smaller(), 6);
    }

    #[test]
    fn shapes_and_param_counts() {
        let mlp = ArchitectureId::Mlp3.build(&[16], 5).unwrap();
        assert_eq!(mlp.param_count(), 16 * 64 + 64 + 64 * 32 + 32 + 32 * 5 + 5);
        assert_eq!(mlp.head_range(), (16 * 64 + 64 + 64 * 32 + 32)..mlp.param_count());
        let small = mlp.smaller();
        assert_eq!(small, Architecture::Mlp(Dense::new(vec![16, 32, 5])));
        assert!(small.param_count() < mlp.param_count());

        let cnn = ArchitectureId::SmallCnn.build(&[1, 4, 4], 3).unwrap();
        assert_eq!(cnn.input_dim(), 16);
        assert_eq!(cnn.classes(), 3);
        assert!(cnn.smaller().param_count() < cnn.param_count());

        let lstm = ArchitectureId::LstmSeq.build(&[10, 2], 6).unwrap();
        assert_eq!(lstm.param_count(), 4 * 32 * (2 + 32 + 1) + 32 * 6 + 6);
        assert_eq!(lstm.smaller().param_count(), 4 * 16 * (2 + 16 + 1) + 16 * 6 + 6);

        assert!(ArchitectureId::SmallCnn.build(&[1, 2, 3, 4], 3).is_err());
        assert!(ArchitectureId::LstmSeq.build(&[1, 2, 3], 3).is_err());
        assert!(ArchitectureId::Mlp3.build(&[4], 1).is_err());
    }

    #[test]
    fn id_round_trip() {
        for id in [ArchitectureId::Mlp3, ArchitectureId::SmallCnn, ArchitectureId::LstmSeq] {
            assert_eq!(id.as_str().parse::<ArchitectureId>().unwrap(), id);
        }
        assert!("resnet18".parse::<ArchitectureId>().is_err());
    }
}
