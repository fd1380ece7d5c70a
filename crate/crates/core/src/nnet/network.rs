use rand::Rng;

use crate::datagen::{Example, Label, FEATURES};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

use super::arch::{ArchitectureSpec, EmbeddingLayout, Layout};

/// Anything that carries a binary feature vector.
pub trait Features {
    fn features(&self) -> &[u8; FEATURES];
}

impl Features for Example {
    fn features(&self) -> &[u8; FEATURES] {
        &self.x
    }
}

impl Features for [u8; FEATURES] {
    fn features(&self) -> &[u8; FEATURES] {
        self
    }
}

/// `log(1 + exp(-y * logit))` without overflow for large `|logit|`.
pub fn logistic_loss<S: Scalar>(logit: S, y: Label) -> S {
    let m = -S::of(y.sign()) * logit;
    if m > S::zero() {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

/// Parameters of a network, flattened in [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    spec: ArchitectureSpec,
    layout: Layout,
    params: Vec<S>,
}

/// One gradient value per network parameter, same order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<S> {
    values: Vec<S>,
}

impl<S: Scalar> GradientSet<S> {
    pub fn zeros(len: usize) -> Self {
        GradientSet {
            values: vec![S::zero(); len],
        }
    }

    pub fn from_values(values: Vec<S>) -> Self {
        GradientSet { values }
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scratch buffers for batched forward and backward passes.
#[derive(Debug, Default)]
pub struct Workspace<S> {
    batch: usize,
    /// Input of each dense layer, `batch x inputs`.
    inputs: Vec<Vec<S>>,
    /// Pre-activation output of each dense layer, `batch x outputs`.
    pre: Vec<Vec<S>>,
    delta: Vec<S>,
    back: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    pub fn new() -> Self {
        Workspace {
            batch: 0,
            inputs: Vec::new(),
            pre: Vec::new(),
            delta: Vec::new(),
            back: Vec::new(),
        }
    }

    fn prepare(&mut self, layout: &Layout, batch: usize) {
        self.batch = batch;
        self.inputs.resize_with(layout.dense.len(), Vec::new);
        self.pre.resize_with(layout.dense.len(), Vec::new);
        for (l, d) in layout.dense.iter().enumerate() {
            self.inputs[l].resize(batch * d.inputs, S::zero());
            self.pre[l].resize(batch * d.outputs, S::zero());
        }
    }

    /// Logits of the last forward pass.
    pub fn logits(&self) -> &[S] {
        let last = self.pre.last().expect("forward has run");
        &last[..self.batch]
    }
}

impl<S: Scalar> Network<S> {
    /// All-zero parameters.
    pub fn zeros(spec: ArchitectureSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::of(&spec.kind);
        let params = vec![S::zero(); layout.len];
        Ok(Network {
            spec,
            layout,
            params,
        })
    }

    /// Glorot-uniform weights and embeddings, zero biases. Values are drawn
    /// in `f64` in storage order so both precisions start from the same
    /// point up to rounding.
    pub fn init<R: Rng + ?Sized>(spec: ArchitectureSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let layout = net.layout.clone();
        if let Some(e) = &layout.embedding {
            let limit = (6.0 / (EmbeddingLayout::ROWS + e.dim) as f64).sqrt();
            let n = 2 * EmbeddingLayout::ROWS * e.dim;
            for p in &mut net.params[e.offsets[0]..e.offsets[0] + n] {
                *p = S::of(rng.random_range(-limit..=limit));
            }
        }
        for d in &layout.dense {
            let limit = (6.0 / (d.inputs + d.outputs) as f64).sqrt();
            for p in &mut net.params[d.w_range()] {
                *p = S::of(rng.random_range(-limit..=limit));
            }
        }
        Ok(net)
    }

    pub fn from_params(spec: ArchitectureSpec, params: Vec<S>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| T::of(p.wide())).collect(),
        }
    }

    /// Index of the first NaN or infinite parameter.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.params.iter().position(|p| !p.is_finite())
    }

    /// Weights of the first layer feeding the given output unit, one per
    /// input feature. For the linear model this is the learned counterpart
    /// of the true log-odds vector.
    pub fn input_weights(&self, output: usize) -> Vec<S> {
        let d = &self.layout.dense[0];
        (0..d.inputs)
            .map(|i| self.params[d.w_off + i * d.outputs + output])
            .collect()
    }

    fn load_inputs<F: Features>(&self, ws: &mut Workspace<S>, batch: &[F]) {
        let h0 = &mut ws.inputs[0];
        match &self.layout.embedding {
            None => {
                for (row, item) in h0.chunks_exact_mut(FEATURES).zip(batch) {
                    for (h, &x) in row.iter_mut().zip(item.features()) {
                        *h = if x != 0 { S::one() } else { S::zero() };
                    }
                }
            }
            Some(e) => {
                let width = 2 * e.dim;
                for (row, item) in h0.chunks_exact_mut(width).zip(batch) {
                    row.fill(S::zero());
                    for (k, &x) in item.features().iter().enumerate() {
                        if x == 0 {
                            continue;
                        }
                        let g = k / EmbeddingLayout::ROWS;
                        for d in 0..e.dim {
                            row[g * e.dim + d] += self.params[e.index(k, d)];
                        }
                    }
                }
            }
        }
    }

    /// Batched forward pass; logits are left in the workspace.
    pub fn forward_batch<F: Features>(&self, ws: &mut Workspace<S>, batch: &[F]) {
        let n = batch.len();
        ws.prepare(&self.layout, n);
        self.load_inputs(ws, batch);
        let last = self.layout.dense.len() - 1;
        for (l, d) in self.layout.dense.iter().enumerate() {
            let bias = &self.params[d.b_range()];
            {
                let z = &mut ws.pre[l];
                for row in z.chunks_exact_mut(d.outputs) {
                    row.copy_from_slice(bias);
                }
                S::gemm(
                    n,
                    d.inputs,
                    d.outputs,
                    S::one(),
                    (&ws.inputs[l], d.inputs as isize, 1),
                    (&self.params[d.w_range()], d.outputs as isize, 1),
                    S::one(),
                    (z, d.outputs as isize, 1),
                );
            }
            if l < last {
                let act = self.spec.activation;
                let (pre, inputs) = (&ws.pre[l], &mut ws.inputs[l + 1]);
                for (h, &u) in inputs.iter_mut().zip(pre) {
                    *h = act.apply(u);
                }
            }
        }
    }

    /// Mean logistic-loss gradient over `batch`, written into `grad`.
    /// Per-example contributions are summed in slice order. Returns the mean
    /// loss.
    pub fn batch_gradient(
        &self,
        ws: &mut Workspace<S>,
        batch: &[Example],
        grad: &mut GradientSet<S>,
    ) -> Result<S> {
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let n = batch.len();
        if n == 0 {
            grad.values.fill(S::zero());
            return Ok(S::zero());
        }
        self.forward_batch(ws, batch);
        let scale = S::one() / S::of(n as f64);
        let mut loss = S::zero();
        ws.delta.clear();
        let logits = &ws.pre.last().expect("forward has run")[..n];
        for (ex, &z) in batch.iter().zip(logits) {
            loss += logistic_loss(z, ex.y);
            let target = if ex.y.is_pos() { S::one() } else { S::zero() };
            ws.delta.push((sigmoid(z) - target) * scale);
        }

        let act = self.spec.activation;
        for l in (0..self.layout.dense.len()).rev() {
            let d = self.layout.dense[l];
            S::gemm(
                d.inputs,
                n,
                d.outputs,
                S::one(),
                (&ws.inputs[l], 1, d.inputs as isize),
                (&ws.delta, d.outputs as isize, 1),
                S::zero(),
                (&mut grad.values[d.w_range()], d.outputs as isize, 1),
            );
            let gb = &mut grad.values[d.b_range()];
            gb.fill(S::zero());
            for row in ws.delta.chunks_exact(d.outputs) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l == 0 && self.layout.embedding.is_none() {
                break;
            }
            ws.back.resize(n * d.inputs, S::zero());
            S::gemm(
                n,
                d.outputs,
                d.inputs,
                S::one(),
                (&ws.delta, d.outputs as isize, 1),
                (&self.params[d.w_range()], 1, d.outputs as isize),
                S::zero(),
                (&mut ws.back, d.inputs as isize, 1),
            );
            if l > 0 {
                for (b, &u) in ws.back.iter_mut().zip(&ws.pre[l - 1]) {
                    *b *= act.grad(u);
                }
                std::mem::swap(&mut ws.delta, &mut ws.back);
            }
        }

        if let Some(e) = self.layout.embedding {
            let n_emb = 2 * EmbeddingLayout::ROWS * e.dim;
            grad.values[..n_emb].fill(S::zero());
            let width = 2 * e.dim;
            for (ex, row) in batch.iter().zip(ws.back.chunks_exact(width)) {
                for k in ex.active() {
                    let g = k / EmbeddingLayout::ROWS;
                    for d in 0..e.dim {
                        grad.values[e.index(k, d)] += row[g * e.dim + d];
                    }
                }
            }
        }
        Ok(loss * scale)
    }

    /// Logit and positive-label probability for one input.
    pub fn forward(&self, x: &[u8; FEATURES]) -> (S, S) {
        let mut ws = Workspace::new();
        self.forward_batch(&mut ws, std::slice::from_ref(x));
        let z = ws.logits()[0];
        (z, sigmoid(z))
    }

    /// Loss gradient for a single example.
    pub fn backward(&self, ex: &Example) -> GradientSet<S> {
        let mut ws = Workspace::new();
        let mut g = GradientSet::zeros(self.params.len());
        self.batch_gradient(&mut ws, std::slice::from_ref(ex), &mut g)
            .expect("gradient sized from network");
        g
    }

    pub fn loss(&self, ex: &Example) -> S {
        logistic_loss(self.forward(&ex.x).0, ex.y)
    }

    /// Logits for many inputs, evaluated in fixed-size chunks.
    pub fn logits<F: Features>(&self, xs: &[F]) -> Vec<S> {
        let mut ws = Workspace::new();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(256) {
            self.forward_batch(&mut ws, chunk);
            out.extend_from_slice(ws.logits());
        }
        out
    }

    /// Every hidden-layer pre-activation for one input, layer by layer.
    pub fn pre_activations(&self, x: &[u8; FEATURES]) -> Vec<S> {
        let mut ws = Workspace::new();
        self.forward_batch(&mut ws, std::slice::from_ref(x));
        let hidden = self.layout.dense.len() - 1;
        ws.pre[..hidden].iter().flatten().copied().collect()
    }
}
