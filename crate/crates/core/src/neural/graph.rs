use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::tensor::{axpy, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, softmax_rows, Matrix};

use super::layers::{resolve, Activation, InputSpec, Layer, LayerSpec};
use super::optim::OptimizerState;

const EMBEDDING_INIT: f64 = 0.05;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight { fan_in: usize, fan_out: usize },
    Bias,
}

/// A named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub data: Vec<f64>,
}

/// One gradient array per parameter, in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// A batch of model inputs, row-major.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    /// One vocabulary index per embedding table per row.
    Indices(&'a [u32]),
    /// Encoded real features, `input width` per row.
    Dense(&'a [f64]),
}

pub enum Mode<'r> {
    Infer,
    /// Dropout masks are drawn from the given generator.
    Train(&'r mut Rng),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    input: InputSpec,
    trunk: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    pub(crate) optimizer: Option<OptimizerState>,
    seed: u64,
}

/// Activations kept for the backward pass.
struct Trace {
    n: usize,
    /// `acts[0]` feeds layer 0, `acts[i + 1]` is the output of layer `i`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl ModelGraph {
    /// Builds a graph with all parameters zero; call [`ModelGraph::init_params`] next.
    pub fn new(input: InputSpec, trunk: Vec<LayerSpec>) -> Result<Self> {
        let mut params = Vec::new();
        match &input {
            InputSpec::Embeddings { tables } => {
                if tables.is_empty() {
                    return Err(Error::config("embedding input needs at least one table"));
                }
                for t in tables {
                    if t.rows == 0 || t.dim == 0 {
                        return Err(Error::config(format!(
                            "embedding {} has an empty shape",
                            t.variable
                        )));
                    }
                    params.push(Tensor {
                        name: format!("embedding.{}", t.variable),
                        shape: vec![t.rows, t.dim],
                        kind: ParamKind::Embedding,
                        data: vec![0.0; t.rows * t.dim],
                    });
                }
            }
            InputSpec::Dense { .. } => {}
        }
        let (layers, requests) = resolve(input.output_width(), &trunk, params.len())?;
        for (name, shape) in requests {
            let kind = match shape.as_slice() {
                [n_in, n_out] => ParamKind::Weight {
                    fan_in: *n_in,
                    fan_out: *n_out,
                },
                [k, c, f] => ParamKind::Weight {
                    fan_in: k * c,
                    fan_out: k * f,
                },
                _ => ParamKind::Bias,
            };
            let size = shape.iter().product();
            params.push(Tensor {
                name,
                shape,
                kind,
                data: vec![0.0; size],
            });
        }
        Ok(ModelGraph {
            input,
            trunk,
            layers,
            params,
            optimizer: None,
            seed: 0,
        })
    }

    /// Glorot-uniform weights, zero biases, `U(-0.05, 0.05)` embeddings.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = seeded(seed);
        for p in &mut self.params {
            match p.kind {
                ParamKind::Embedding => {
                    for v in &mut p.data {
                        *v = rng.gen_range(-EMBEDDING_INIT..EMBEDDING_INIT);
                    }
                }
                ParamKind::Weight { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in &mut p.data {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
                ParamKind::Bias => p.data.fill(0.0),
            }
        }
        self.optimizer = None;
        self.seed = seed;
    }

    pub fn input(&self) -> &InputSpec {
        &self.input
    }

    pub fn trunk(&self) -> &[LayerSpec] {
        &self.trunk
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn classes(&self) -> usize {
        match self.trunk.last() {
            Some(LayerSpec::SoftmaxOutput { classes }) => *classes,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Values per input row: index columns for embeddings, features for dense input.
    pub fn input_arity(&self) -> usize {
        match &self.input {
            InputSpec::Embeddings { tables } => tables.len(),
            InputSpec::Dense { width } => *width,
        }
    }

    /// Width of the concatenated vector fed to the trunk.
    pub fn concat_width(&self) -> usize {
        self.input.output_width()
    }

    pub fn embedding_tables(&self) -> usize {
        match &self.input {
            InputSpec::Embeddings { tables } => tables.len(),
            InputSpec::Dense { .. } => 0,
        }
    }

    pub(crate) fn replace_params(&mut self, data: Vec<Vec<f64>>) -> Result<()> {
        if data.len() != self.params.len()
            || data
                .iter()
                .zip(&self.params)
                .any(|(d, p)| d.len() != p.data.len())
        {
            return Err(Error::format(
                "parameter arrays do not match the layer shapes",
            ));
        }
        for (p, d) in self.params.iter_mut().zip(data) {
            p.data = d;
        }
        Ok(())
    }

    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn batch_rows(&self, batch: Batch<'_>) -> Result<usize> {
        let arity = self.input_arity();
        let len = match (batch, &self.input) {
            (Batch::Indices(ix), InputSpec::Embeddings { .. }) => ix.len(),
            (Batch::Dense(x), InputSpec::Dense { .. }) => x.len(),
            _ => return Err(Error::config("batch kind does not match the model input")),
        };
        if len % arity != 0 {
            return Err(Error::data(format!(
                "batch length {len} is not a multiple of the input arity {arity}"
            )));
        }
        Ok(len / arity)
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, batch: Batch<'_>, mode: Mode<'_>) -> Result<Matrix> {
        let trace = self.run(batch, mode)?;
        let classes = self.classes();
        Ok(Matrix::from_vec(
            trace.n,
            classes,
            trace.acts.into_iter().last().unwrap_or_default(),
        ))
    }

    /// Mean clamped cross-entropy.
    pub fn loss(&self, batch: Batch<'_>, labels: &[u32], mode: Mode<'_>) -> Result<f64> {
        let trace = self.run(batch, mode)?;
        self.check_labels(labels, trace.n)?;
        Ok(cross_entropy(
            trace.acts.last().unwrap(),
            labels,
            self.classes(),
        ))
    }

    pub fn loss_and_grad(
        &self,
        batch: Batch<'_>,
        labels: &[u32],
        mode: Mode<'_>,
    ) -> Result<(f64, Gradients)> {
        let trace = self.run(batch, mode)?;
        self.check_labels(labels, trace.n)?;
        let loss = cross_entropy(trace.acts.last().unwrap(), labels, self.classes());
        let grads = self.backward(&trace, batch, labels);
        Ok((loss, grads))
    }

    fn check_labels(&self, labels: &[u32], n: usize) -> Result<()> {
        if labels.len() != n {
            return Err(Error::data(format!("{} labels for {n} rows", labels.len())));
        }
        let k = self.classes();
        if let Some(l) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::Index(format!(
                "label {l} outside {k} output classes"
            )));
        }
        Ok(())
    }

    fn embed(&self, indices: &[u32], n: usize) -> Result<Vec<f64>> {
        let InputSpec::Embeddings { tables } = &self.input else {
            unreachable!()
        };
        let width = self.concat_width();
        let m = tables.len();
        let mut out = vec![0.0; n * width];
        for b in 0..n {
            let mut offset = b * width;
            for (j, t) in tables.iter().enumerate() {
                let idx = indices[b * m + j] as usize;
                if idx >= t.rows {
                    return Err(Error::Index(format!(
                        "index {idx} outside embedding {} with {} rows",
                        t.variable, t.rows
                    )));
                }
                out[offset..offset + t.dim]
                    .copy_from_slice(&self.params[j].data[idx * t.dim..(idx + 1) * t.dim]);
                offset += t.dim;
            }
        }
        Ok(out)
    }

    fn run(&self, batch: Batch<'_>, mode: Mode<'_>) -> Result<Trace> {
        let n = self.batch_rows(batch)?;
        let mut rng = match mode {
            Mode::Infer => None,
            Mode::Train(r) => Some(r),
        };
        let x0 = match batch {
            Batch::Indices(ix) => self.embed(ix, n)?,
            Batch::Dense(x) => x.to_vec(),
        };
        let nl = self.layers.len();
        let mut trace = Trace {
            n,
            acts: Vec::with_capacity(nl + 1),
            pre: vec![Vec::new(); nl],
            masks: vec![Vec::new(); nl],
            argmax: vec![Vec::new(); nl],
        };
        trace.acts.push(x0);
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &trace.acts[i];
            let out = match *layer {
                Layer::Dense {
                    n_in,
                    n_out,
                    act,
                    w,
                    b,
                } => {
                    let z = affine(
                        x,
                        &self.params[w].data,
                        &self.params[b].data,
                        n,
                        n_in,
                        n_out,
                    );
                    let a = activate(&z, act);
                    trace.pre[i] = z;
                    a
                }
                Layer::Conv1d {
                    len,
                    in_ch,
                    filters,
                    kernel,
                    act,
                    w,
                    b,
                } => {
                    let geo = ConvGeometry {
                        n,
                        len,
                        in_ch,
                        filters,
                        kernel,
                    };
                    let z = conv_forward(x, &self.params[w].data, &self.params[b].data, geo);
                    let a = activate(&z, act);
                    trace.pre[i] = z;
                    a
                }
                Layer::MaxPool {
                    len,
                    channels,
                    size,
                } => {
                    let (out, arg) = pool_forward(x, n, len, channels, size);
                    trace.argmax[i] = arg;
                    out
                }
                Layer::Dropout { rate } => match rng.as_deref_mut() {
                    Some(r) if rate > 0.0 => {
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if r.gen::<f64>() < rate { 0.0 } else { keep })
                            .collect();
                        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        trace.masks[i] = mask;
                        out
                    }
                    _ => x.clone(),
                },
                Layer::Flatten => x.clone(),
                Layer::Output {
                    n_in,
                    classes,
                    w,
                    b,
                } => {
                    let z = affine(
                        x,
                        &self.params[w].data,
                        &self.params[b].data,
                        n,
                        n_in,
                        classes,
                    );
                    let mut m = Matrix::from_vec(n, classes, z);
                    softmax_rows(&mut m);
                    m.into_vec()
                }
            };
            trace.acts.push(out);
        }
        Ok(trace)
    }

    fn backward(&self, trace: &Trace, batch: Batch<'_>, labels: &[u32]) -> Gradients {
        let n = trace.n;
        let mut grads: Vec<Vec<f64>> = self
            .params
            .iter()
            .map(|p| vec![0.0; p.data.len()])
            .collect();
        let classes = self.classes();
        let mut g = trace.acts.last().unwrap().clone();
        let inv = 1.0 / n as f64;
        for (b, &l) in labels.iter().enumerate() {
            g[b * classes + l as usize] -= 1.0;
        }
        for v in &mut g {
            *v *= inv;
        }
        let needs_input_grad = matches!(self.input, InputSpec::Embeddings { .. });

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let want_dx = i > 0 || needs_input_grad;
            g = match *layer {
                Layer::Output {
                    n_in,
                    classes,
                    w,
                    b,
                } => dense_backward(
                    x,
                    &g,
                    &self.params[w].data,
                    &mut grads,
                    w,
                    b,
                    n,
                    n_in,
                    classes,
                    want_dx,
                ),
                Layer::Dense {
                    n_in,
                    n_out,
                    act,
                    w,
                    b,
                } => {
                    let dz = through_activation(&g, &trace.pre[i], &trace.acts[i + 1], act);
                    dense_backward(
                        x,
                        &dz,
                        &self.params[w].data,
                        &mut grads,
                        w,
                        b,
                        n,
                        n_in,
                        n_out,
                        want_dx,
                    )
                }
                Layer::Conv1d {
                    len,
                    in_ch,
                    filters,
                    kernel,
                    act,
                    w,
                    b,
                } => {
                    let dz = through_activation(&g, &trace.pre[i], &trace.acts[i + 1], act);
                    let geo = ConvGeometry {
                        n,
                        len,
                        in_ch,
                        filters,
                        kernel,
                    };
                    conv_backward(x, &dz, &self.params[w].data, &mut grads, w, b, geo, want_dx)
                }
                Layer::MaxPool { len, channels, .. } => {
                    let mut dx = vec![0.0; n * len * channels];
                    for (gv, &a) in g.iter().zip(&trace.argmax[i]) {
                        dx[a] += gv;
                    }
                    dx
                }
                Layer::Dropout { .. } => {
                    let mask = &trace.masks[i];
                    if mask.is_empty() {
                        g
                    } else {
                        g.iter().zip(mask).map(|(v, m)| v * m).collect()
                    }
                }
                Layer::Flatten => g,
            };
        }

        if let (Batch::Indices(ix), InputSpec::Embeddings { tables }) = (batch, &self.input) {
            let width = self.concat_width();
            let m = tables.len();
            for b in 0..n {
                let mut offset = b * width;
                for (j, t) in tables.iter().enumerate() {
                    let idx = ix[b * m + j] as usize;
                    axpy(
                        1.0,
                        &g[offset..offset + t.dim],
                        &mut grads[j][idx * t.dim..(idx + 1) * t.dim],
                    );
                    offset += t.dim;
                }
            }
        }
        Gradients { tensors: grads }
    }
}

fn cross_entropy(probs: &[f64], labels: &[u32], classes: usize) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, &l)| -probs[b * classes + l as usize].clamp(PROB_FLOOR, 1.0).ln())
        .sum();
    total / labels.len() as f64
}

fn affine(x: &[f64], w: &[f64], bias: &[f64], n: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut z = Vec::with_capacity(n * n_out);
    for _ in 0..n {
        z.extend_from_slice(bias);
    }
    matmul_acc(x, w, &mut z, n, n_in, n_out);
    z
}

fn activate(z: &[f64], act: Activation) -> Vec<f64> {
    z.iter().map(|&v| act.apply(v)).collect()
}

fn through_activation(g: &[f64], z: &[f64], a: &[f64], act: Activation) -> Vec<f64> {
    g.iter()
        .zip(z)
        .zip(a)
        .map(|((gv, &zv), &av)| gv * act.derivative(zv, av))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    dz: &[f64],
    w: &[f64],
    grads: &mut [Vec<f64>],
    wi: usize,
    bi: usize,
    n: usize,
    n_in: usize,
    n_out: usize,
    want_dx: bool,
) -> Vec<f64> {
    matmul_at_b_acc(x, dz, &mut grads[wi], n, n_in, n_out);
    for row in dz.chunks(n_out) {
        axpy(1.0, row, &mut grads[bi]);
    }
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; n * n_in];
    matmul_a_bt_acc(dz, w, &mut dx, n, n_in, n_out);
    dx
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    n: usize,
    len: usize,
    in_ch: usize,
    filters: usize,
    kernel: usize,
}

/// Stacks every `kernel * in_ch` window as one row (windows are contiguous
/// in the position-major layout).
fn im2col(x: &[f64], geo: ConvGeometry) -> Vec<f64> {
    let ConvGeometry {
        n,
        len,
        in_ch,
        kernel,
        ..
    } = geo;
    let out_len = len - kernel + 1;
    let span = kernel * in_ch;
    let mut cols = Vec::with_capacity(n * out_len * span);
    for b in 0..n {
        let xs = &x[b * len * in_ch..(b + 1) * len * in_ch];
        for t in 0..out_len {
            cols.extend_from_slice(&xs[t * in_ch..t * in_ch + span]);
        }
    }
    cols
}

/// Each output position is a dense map of the contiguous `kernel * in_ch` window.
fn conv_forward(x: &[f64], w: &[f64], bias: &[f64], geo: ConvGeometry) -> Vec<f64> {
    let rows = geo.n * (geo.len - geo.kernel + 1);
    affine(
        &im2col(x, geo),
        w,
        bias,
        rows,
        geo.kernel * geo.in_ch,
        geo.filters,
    )
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dz: &[f64],
    w: &[f64],
    grads: &mut [Vec<f64>],
    wi: usize,
    bi: usize,
    geo: ConvGeometry,
    want_dx: bool,
) -> Vec<f64> {
    let ConvGeometry {
        n,
        len,
        in_ch,
        filters,
        kernel,
    } = geo;
    let out_len = len - kernel + 1;
    let span = kernel * in_ch;
    let dcols = dense_backward(
        &im2col(x, geo),
        dz,
        w,
        grads,
        wi,
        bi,
        n * out_len,
        span,
        filters,
        want_dx,
    );
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; n * len * in_ch];
    for b in 0..n {
        let base = b * len * in_ch;
        for t in 0..out_len {
            let row = (b * out_len + t) * span;
            axpy(
                1.0,
                &dcols[row..row + span],
                &mut dx[base + t * in_ch..base + t * in_ch + span],
            );
        }
    }
    dx
}

/// Max over non-overlapping windows; ties go to the earliest position.
fn pool_forward(
    x: &[f64],
    n: usize,
    len: usize,
    channels: usize,
    size: usize,
) -> (Vec<f64>, Vec<usize>) {
    let out_len = len / size;
    let mut out = Vec::with_capacity(n * out_len * channels);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..n {
        let base = b * len * channels;
        for t in 0..out_len {
            for c in 0..channels {
                let mut best = base + t * size * channels + c;
                for s in 1..size {
                    let at = base + (t * size + s) * channels + c;
                    if x[at] > x[best] {
                        best = at;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
