//! Dense feed-forward networks with hand-written reverse-mode gradients,
//! an Adam optimizer and the anchored L2 prior used for randomized MAP
//! sampling.
//!
//! Weights are stored row-major with shape `(out, in)`. Hidden layers share a
//! single activation; the output layer is linear. Every network carries a
//! frozen copy of its initial parameters (the *anchor*) together with the
//! per-layer empirical standard deviation of the initial weights, which is
//! used as the prior scale of the anchored regularizer.

use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::ops::Range;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Zero-mean normal initialization with fan-in scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// std = sqrt(2 / fan_in)
    #[default]
    He,
    /// std = sqrt(1 / fan_in)
    LeCun,
}

impl InitRule {
    pub fn std(self, fan_in: usize) -> f64 {
        let gain = match self {
            InitRule::He => 2.0,
            InitRule::LeCun => 1.0,
        };
        (gain / fan_in as f64).sqrt()
    }
}

/// One affine layer (also used as a same-shaped gradient / moment buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.n_in..(r + 1) * self.n_in]
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.n_in == other.n_in && self.n_out == other.n_out
    }
}

/// Parameter gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.values_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.values_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += *y;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.values().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cached activations of one forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l]` the output of hidden layer `l`.
    activations: Vec<Vec<f64>>,
    out_rows: Range<usize>,
    /// Outputs for `out_rows` only.
    pub output: Vec<f64>,
}

/// MLP parameters with their frozen anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    anchor: Vec<Dense>,
    activation: Activation,
    prior_scales: Vec<f64>,
}

impl Network {
    /// Draws a fresh network. `layer_sizes` lists the input width, every
    /// hidden width and the output width.
    pub fn new(
        layer_sizes: &[usize],
        seed: u64,
        init: InitRule,
        activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        let mut init_stds = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let std = init.std(n_in);
            let normal = Normal::new(0.0, std).expect("positive std");
            let mut layer = Dense::zeros(n_in, n_out);
            layer
                .values_mut()
                .for_each(|v| *v = normal.sample(&mut rng));
            layers.push(layer);
            init_stds.push(std);
        }
        Ok(Self::with_anchor_from(layers, activation, &init_stds))
    }

    /// Wraps explicit layers; the anchor is a copy of them.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        validate_chain(&layers)?;
        let fallback = vec![1.0; layers.len()];
        Ok(Self::with_anchor_from(layers, activation, &fallback))
    }

    fn with_anchor_from(layers: Vec<Dense>, activation: Activation, fallback: &[f64]) -> Self {
        // A layer with a single weight (or identical weights) has zero
        // empirical spread; fall back to the nominal scale so the prior stays proper.
        let prior_scales = layers
            .iter()
            .zip(fallback)
            .map(|(l, &fb)| {
                let s = crate::stats::population_variance(&l.weights).sqrt();
                if s.is_finite() && s > 0.0 {
                    s
                } else {
                    fb
                }
            })
            .collect();
        Network {
            anchor: layers.clone(),
            layers,
            activation,
            prior_scales,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the trainable parameters. The anchor is not reachable.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn anchor(&self) -> &[Dense] {
        &self.anchor
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Empirical standard deviation of each layer's initial weights.
    pub fn prior_scales(&self) -> &[f64] {
        &self.prior_scales
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Copies trainable parameters from `other` (used for target-network syncs).
    pub fn copy_params_from(&mut self, other: &Network) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.bias.copy_from_slice(&src.bias);
        }
    }

    /// Hash of the trainable parameters' bit patterns.
    pub fn fingerprint(&self) -> u64 {
        hash_layers(&self.layers)
    }

    /// Hash of the anchor's bit patterns.
    pub fn anchor_fingerprint(&self) -> u64 {
        hash_layers(&self.anchor)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("forward input", self.input_dim(), input.len()));
        }
        Ok(self.forward_rows(input, 0..self.output_dim()).output)
    }

    /// Forward pass that evaluates only `out_rows` of the output layer and
    /// keeps the activations needed by [`Network::backward_trace`].
    ///
    /// Panics if the input width or row range is out of bounds.
    pub fn forward_rows(&self, input: &[f64], out_rows: Range<usize>) -> Trace {
        assert_eq!(input.len(), self.input_dim(), "input width");
        assert!(out_rows.end <= self.output_dim(), "output rows out of range");
        let n_hidden = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(n_hidden + 1);
        activations.push(input.to_vec());
        for (l, layer) in self.layers[..n_hidden].iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let mut h = if l == 0 {
                first_layer_affine(layer, x, 0..layer.n_out)
            } else {
                (0..layer.n_out).map(|r| dot(layer.row(r), x) + layer.bias[r]).collect()
            };
            for v in &mut h {
                *v = self.activation.apply(*v);
            }
            activations.push(h);
        }
        let last = &self.layers[n_hidden];
        let x = activations.last().expect("non-empty");
        let output = if n_hidden == 0 {
            first_layer_affine(last, x, out_rows.clone())
        } else {
            out_rows.clone().map(|r| dot(last.row(r), x) + last.bias[r]).collect()
        };
        Trace {
            activations,
            out_rows,
            output,
        }
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grads`, where
    /// `out_grad[k]` is d(loss)/d(output row `trace.out_rows.start + k`).
    ///
    /// Panics on shape mismatch.
    pub fn backward_trace(&self, trace: &Trace, out_grad: &[f64], scale: f64, grads: &mut Gradients) {
        assert_eq!(out_grad.len(), trace.out_rows.len(), "output gradient width");
        let n_layers = self.layers.len();
        let last = &self.layers[n_layers - 1];
        let h = &trace.activations[n_layers - 1];
        let g_last = &mut grads.layers[n_layers - 1];
        let mut delta = vec![0.0; last.n_in];
        for (k, r) in trace.out_rows.clone().enumerate() {
            let g = out_grad[k] * scale;
            if g == 0.0 {
                continue;
            }
            g_last.bias[r] += g;
            let grow = &mut g_last.weights[r * last.n_in..(r + 1) * last.n_in];
            if n_layers == 1 {
                sparse_axpy(g, h, grow);
            } else {
                axpy(g, h, grow);
            }
            axpy(g, last.row(r), &mut delta);
        }
        for l in (0..n_layers - 1).rev() {
            let layer = &self.layers[l];
            let out = &trace.activations[l + 1];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= self.activation.derivative_from_output(y);
            }
            let x = &trace.activations[l];
            let g_layer = &mut grads.layers[l];
            let mut next_delta = if l > 0 { vec![0.0; layer.n_in] } else { Vec::new() };
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g_layer.bias[r] += d;
                let grow = &mut g_layer.weights[r * layer.n_in..(r + 1) * layer.n_in];
                if l == 0 {
                    sparse_axpy(d, x, grow);
                } else {
                    axpy(d, x, grow);
                }
                if l > 0 {
                    axpy(d, layer.row(r), &mut next_delta);
                }
            }
            delta = next_delta;
        }
    }

    /// Gradient of a scalar loss whose gradient with respect to the full
    /// output vector is `output_gradient`.
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("backward input", self.input_dim(), input.len()));
        }
        if output_gradient.len() != self.output_dim() {
            return Err(Error::shape(
                "backward output gradient",
                self.output_dim(),
                output_gradient.len(),
            ));
        }
        let trace = self.forward_rows(input, 0..self.output_dim());
        let mut grads = Gradients::zeros_like(self);
        self.backward_trace(&trace, output_gradient, 1.0, &mut grads);
        Ok(grads)
    }

    /// Value of the anchored regularizer
    /// `sum_l (noise^2 / prior_l^2) * ||theta_l - anchor_l||^2 / dataset_size`.
    pub fn anchored_penalty(
        &self,
        noise_scale: f64,
        prior_scales: &[f64],
        dataset_size: usize,
    ) -> Result<f64> {
        check_penalty_args(self, noise_scale, prior_scales, dataset_size)?;
        let mut total = 0.0;
        for ((layer, anchor), &prior) in self.layers.iter().zip(&self.anchor).zip(prior_scales) {
            let coef = (noise_scale * noise_scale) / (prior * prior);
            let sq: f64 = layer
                .values()
                .zip(anchor.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += coef * sq;
        }
        Ok(total / dataset_size as f64)
    }

    /// Gradient of [`Network::anchored_penalty`].
    pub fn anchored_penalty_gradient(
        &self,
        noise_scale: f64,
        prior_scales: &[f64],
        dataset_size: usize,
    ) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.add_anchored_penalty_gradient(&mut grads, noise_scale, prior_scales, dataset_size)?;
        Ok(grads)
    }

    /// Adds the anchored-penalty gradient into `grads`.
    pub fn add_anchored_penalty_gradient(
        &self,
        grads: &mut Gradients,
        noise_scale: f64,
        prior_scales: &[f64],
        dataset_size: usize,
    ) -> Result<()> {
        check_penalty_args(self, noise_scale, prior_scales, dataset_size)?;
        for (((layer, anchor), g), &prior) in self
            .layers
            .iter()
            .zip(&self.anchor)
            .zip(&mut grads.layers)
            .zip(prior_scales)
        {
            let coef = 2.0 * (noise_scale * noise_scale) / (prior * prior) / dataset_size as f64;
            for (gs, (ps, bs)) in [
                (&mut g.weights, (&layer.weights, &anchor.weights)),
                (&mut g.bias, (&layer.bias, &anchor.bias)),
            ] {
                for ((gv, a), b) in gs.iter_mut().zip(ps).zip(bs) {
                    *gv += coef * (a - b);
                }
            }
        }
        Ok(())
    }

    /// Portable text snapshot (see README for the format).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "uadqn-network 1").unwrap();
        writeln!(s, "activation {}", self.activation.name()).unwrap();
        write!(s, "prior_scales").unwrap();
        for p in &self.prior_scales {
            write!(s, " {p:e}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        write_block(&mut s, &self.layers);
        writeln!(s, "anchor").unwrap();
        write_block(&mut s, &self.anchor);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of snapshot, expected {what}")))
        };
        if next("header")?.trim() != "uadqn-network 1" {
            return Err(Error::Parse("bad snapshot header".into()));
        }
        let activation = match keyed(next("activation")?, "activation")?.as_slice() {
            ["relu"] => Activation::Relu,
            ["tanh"] => Activation::Tanh,
            other => return Err(Error::Parse(format!("unknown activation {other:?}"))),
        };
        let prior_scales = parse_reals(&keyed(next("prior_scales")?, "prior_scales")?)?;
        let n_layers = parse_usize(&keyed(next("layers")?, "layers")?, 0)?;
        let layers = read_block(&mut next, n_layers)?;
        if next("anchor")?.trim() != "anchor" {
            return Err(Error::Parse("expected anchor section".into()));
        }
        let anchor = read_block(&mut next, n_layers)?;
        validate_chain(&layers)?;
        if prior_scales.len() != n_layers
            || anchor.len() != layers.len()
            || anchor.iter().zip(&layers).any(|(a, l)| !a.same_shape(l))
        {
            return Err(Error::Parse("anchor/prior shapes disagree with layers".into()));
        }
        Ok(Network {
            layers,
            anchor,
            activation,
            prior_scales,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn check_penalty_args(
    net: &Network,
    noise_scale: f64,
    prior_scales: &[f64],
    dataset_size: usize,
) -> Result<()> {
    if !(noise_scale > 0.0) || prior_scales.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Config(
            "anchored penalty scales must be positive".into(),
        ));
    }
    if prior_scales.len() != net.layers.len() {
        return Err(Error::shape("prior scales", net.layers.len(), prior_scales.len()));
    }
    if dataset_size == 0 {
        return Err(Error::Config("dataset size proxy must be positive".into()));
    }
    Ok(())
}

fn validate_chain(layers: &[Dense]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.n_in == 0 || l.n_out == 0 {
            return Err(Error::Config(format!("layer {i} has a zero dimension")));
        }
        if l.weights.len() != l.n_in * l.n_out {
            return Err(Error::shape("layer weights", l.n_in * l.n_out, l.weights.len()));
        }
        if l.bias.len() != l.n_out {
            return Err(Error::shape("layer bias", l.n_out, l.bias.len()));
        }
        if l.values().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("layer {i} has non-finite entries")));
        }
    }
    for pair in layers.windows(2) {
        if pair[0].n_out != pair[1].n_in {
            return Err(Error::shape("layer chaining", pair[0].n_out, pair[1].n_in));
        }
    }
    Ok(())
}

fn hash_layers(layers: &[Dense]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for l in layers {
        l.n_in.hash(&mut h);
        l.n_out.hash(&mut h);
        l.values().for_each(|v| v.to_bits().hash(&mut h));
    }
    h.finish()
}

fn write_block(s: &mut String, layers: &[Dense]) {
    for l in layers {
        writeln!(s, "dense {} {}", l.n_in, l.n_out).unwrap();
        write!(s, "w").unwrap();
        for v in &l.weights {
            write!(s, " {v:e}").unwrap();
        }
        writeln!(s).unwrap();
        write!(s, "b").unwrap();
        for v in &l.bias {
            write!(s, " {v:e}").unwrap();
        }
        writeln!(s).unwrap();
    }
}

fn read_block<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    n_layers: usize,
) -> Result<Vec<Dense>> {
    let mut out = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let dims = keyed(next("dense")?, "dense")?;
        if dims.len() != 2 {
            return Err(Error::Parse("dense line needs two dimensions".into()));
        }
        let n_in = parse_usize(&dims, 0)?;
        let n_out = parse_usize(&dims, 1)?;
        let weights = parse_reals(&keyed(next("w")?, "w")?)?;
        let bias = parse_reals(&keyed(next("b")?, "b")?)?;
        if weights.len() != n_in * n_out || bias.len() != n_out {
            return Err(Error::Parse(format!(
                "dense {n_in}x{n_out} has {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        out.push(Dense {
            n_in,
            n_out,
            weights,
            bias,
        });
    }
    Ok(out)
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Parse(format!("expected `{key}` line, got `{line}`")));
    }
    Ok(parts.collect())
}

fn parse_usize(parts: &[&str], idx: usize) -> Result<usize> {
    parts
        .get(idx)
        .ok_or_else(|| Error::Parse("missing integer".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad integer: {e}")))
}

fn parse_reals(parts: &[&str]) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad real `{p}`: {e}")))
        })
        .collect()
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
/// Input-layer affine map over `rows`. Mostly-zero inputs (one-hot
/// observations) are handled column-wise over the nonzero entries only.
fn first_layer_affine(layer: &Dense, x: &[f64], rows: Range<usize>) -> Vec<f64> {
    let nonzero = x.iter().filter(|&&v| v != 0.0).count();
    if 4 * nonzero > x.len() {
        return rows.map(|r| dot(layer.row(r), x) + layer.bias[r]).collect();
    }
    let mut acc = vec![0.0; rows.len()];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (a, r) in acc.iter_mut().zip(rows.clone()) {
                *a += layer.weights[r * layer.n_in + j] * xj;
            }
        }
    }
    acc.iter().zip(rows).map(|(a, r)| a + layer.bias[r]).collect()
}

/// `y += alpha * x`, skipping zero entries of `x`.
fn sparse_axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        if xi != 0.0 {
            *yi += alpha * xi;
        }
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Adam moments and hyperparameters for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamState {
    pub fn new(net: &Network, learning_rate: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(epsilon > 0.0) {
            return Err(Error::Config(
                "Adam learning rate and epsilon must be positive".into(),
            ));
        }
        Ok(AdamState {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
            learning_rate,
            epsilon,
            beta1: 0.9,
            beta2: 0.999,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != net.layers.len()
        || grads
            .layers
            .iter()
            .zip(&net.layers)
            .any(|(g, l)| !g.same_shape(l))
    {
        return Err(Error::shape("adam gradients", net.n_params(), grads.iter().count()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient in Adam step".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let k = AdamCoefs {
        b1,
        b2,
        lr_c1: state.learning_rate / c1,
        inv_c2: 1.0 / c2,
        eps: state.epsilon,
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
    {
        k.apply(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
        k.apply(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}

struct AdamCoefs {
    b1: f64,
    b2: f64,
    lr_c1: f64,
    inv_c2: f64,
    eps: f64,
}

impl AdamCoefs {
    fn apply(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        let n = p.len();
        let (g, m, v) = (&g[..n], &mut m[..n], &mut v[..n]);
        for i in 0..n {
            m[i] = self.b1 * m[i] + (1.0 - self.b1) * g[i];
            v[i] = self.b2 * v[i] + (1.0 - self.b2) * g[i] * g[i];
            p[i] -= self.lr_c1 * m[i] / ((v[i] * self.inv_c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_net(sizes: &[usize], seed: u64, act: Activation) -> Network {
        Network::new(sizes, seed, InitRule::He, act).unwrap()
    }

    #[test]
    fn anchor_equals_initial_weights() {
        let net = random_net(&[4, 32, 32, 50], 7, Activation::Relu);
        assert_eq!(net.layers(), net.anchor());
        assert_eq!(net.output_dim(), 50);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = random_net(&[4, 32, 32, 50], 7, Activation::Relu);
        let b = random_net(&[4, 32, 32, 50], 7, Activation::Relu);
        assert_eq!(a, b);
        let c = random_net(&[4, 32, 32, 50], 8, Activation::Relu);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn prior_scale_is_empirical_std_of_initial_weights() {
        let net = random_net(&[4, 32, 32, 50], 7, Activation::Relu);
        for (layer, &scale) in net.anchor().iter().zip(net.prior_scales()) {
            let n = layer.weights.len() as f64;
            let mean = layer.weights.iter().sum::<f64>() / n;
            let var = layer.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
            assert!((var.sqrt() - scale).abs() < 1e-12);
        }
        // fan-in scaling: 32-wide layers are narrower than the 4-wide input layer
        assert!(net.prior_scales()[1] < net.prior_scales()[0]);
    }

    #[test]
    fn invalid_layer_sizes_rejected() {
        assert!(matches!(
            Network::new(&[4], 0, InitRule::He, Activation::Relu),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Network::new(&[4, 0, 2], 0, InitRule::He, Activation::Relu),
            Err(Error::Config(_))
        ));
        assert!(Network::new(&[], 0, InitRule::He, Activation::Relu).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = random_net(&[3, 5, 4], 1, Activation::Tanh);
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut layer = Dense::zeros(3, 2);
        layer.weights[0] = 1.0; // out0 <- in0
        layer.weights[3 + 1] = 1.0; // out1 <- in1
        let net = Network::from_layers(vec![layer], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[0.5, -7.0, 9.0]).unwrap(), vec![0.5, -7.0]);
    }

    /// Straight-line reference forward pass.
    #[allow(clippy::needless_range_loop)]
    fn reference_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = net.layers().len();
        for (li, l) in net.layers().iter().enumerate() {
            let mut out = vec![0.0; l.n_out];
            for r in 0..l.n_out {
                let mut s = l.bias[r];
                for c in 0..l.n_in {
                    s += l.weights[r * l.n_in + c] * h[c];
                }
                out[r] = if li + 1 < n {
                    match net.activation() {
                        Activation::Relu => s.max(0.0),
                        Activation::Tanh => s.tanh(),
                    }
                } else {
                    s
                };
            }
            h = out;
        }
        h
    }

    #[test]
    fn forward_matches_reference_chain() {
        let mut rng = seeded_rng(3);
        for act in [Activation::Relu, Activation::Tanh] {
            let net = random_net(&[5, 9, 7, 6], 11, act);
            for _ in 0..20 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let a = net.forward(&x).unwrap();
                let b = reference_forward(&net, &x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12, "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn forward_rows_is_a_slice_of_full_forward() {
        let net = random_net(&[3, 8, 12], 5, Activation::Relu);
        let x = [0.3, -0.1, 0.9];
        let full = net.forward(&x).unwrap();
        let part = net.forward_rows(&x, 4..8);
        assert_eq!(&full[4..8], part.output.as_slice());
    }

    #[test]
    fn shape_errors() {
        let net = random_net(&[3, 4, 2], 0, Activation::Relu);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(
            net.backward(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = random_net(&[3, 4, 2], 0, Activation::Tanh);
        let g = net.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    fn perturbed_loss(net: &Network, x: &[f64], w: &[f64]) -> f64 {
        net.forward(x).unwrap().iter().zip(w).map(|(o, wi)| o * wi).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = seeded_rng(9);
        let h = 1e-5;
        // tanh keeps the loss smooth so no kink handling is needed
        let net = random_net(&[3, 6, 4], 2, Activation::Tanh);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.backward(&x, &w).unwrap();
        for l in 0..net.layers().len() {
            let n_w = net.layers()[l].weights.len();
            let n_b = net.layers()[l].bias.len();
            for idx in 0..n_w + n_b {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let (p, m, analytic) = if idx < n_w {
                    (
                        &mut plus.layers_mut()[l].weights[idx],
                        &mut minus.layers_mut()[l].weights[idx],
                        g.layers[l].weights[idx],
                    )
                } else {
                    (
                        &mut plus.layers_mut()[l].bias[idx - n_w],
                        &mut minus.layers_mut()[l].bias[idx - n_w],
                        g.layers[l].bias[idx - n_w],
                    )
                };
                *p += h;
                *m -= h;
                let fd = (perturbed_loss(&plus, &x, &w) - perturbed_loss(&minus, &x, &w)) / (2.0 * h);
                let denom = analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (fd - analytic).abs() / denom < 1e-4 || (fd - analytic).abs() < 1e-9,
                    "layer {l} idx {idx}: fd {fd} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn linear_net_quadratic_loss_matches_closed_form() {
        // L = 0.5 * ||W x + b - y||^2  =>  dL/dW = (Wx + b - y) x^T, dL/db = Wx + b - y
        let mut layer = Dense::zeros(2, 2);
        layer.weights = vec![1.0, 2.0, -1.0, 0.5];
        layer.bias = vec![0.1, -0.2];
        let net = Network::from_layers(vec![layer], Activation::Relu).unwrap();
        let x = [3.0, -1.0];
        let y = [0.0, 1.0];
        let out = net.forward(&x).unwrap();
        let resid: Vec<f64> = out.iter().zip(&y).map(|(o, t)| o - t).collect();
        let g = net.backward(&x, &resid).unwrap();
        let expected_w = [resid[0] * 3.0, -resid[0], resid[1] * 3.0, -resid[1]];
        assert_eq!(g.layers[0].weights, expected_w);
        assert_eq!(g.layers[0].bias, resid);
    }

    #[test]
    fn penalty_gradient_zero_at_anchor_and_linear() {
        let mut net = random_net(&[2, 5, 3], 4, Activation::Relu);
        let priors = net.prior_scales().to_vec();
        let g0 = net.anchored_penalty_gradient(1.0, &priors, 10).unwrap();
        assert_eq!(g0.max_abs(), 0.0);

        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w += 0.1);
            l.bias.iter_mut().for_each(|b| *b -= 0.05);
        }
        let g1 = net.anchored_penalty_gradient(1.0, &priors, 10).unwrap();
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w += 0.1);
            l.bias.iter_mut().for_each(|b| *b -= 0.05);
        }
        let g2 = net.anchored_penalty_gradient(1.0, &priors, 10).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut net = random_net(&[2, 4, 3], 6, Activation::Relu);
        let mut rng = seeded_rng(1);
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
        }
        let priors = net.prior_scales().to_vec();
        let g = net.anchored_penalty_gradient(1.3, &priors, 7).unwrap();
        let h = 1e-5;
        for l in 0..net.layers().len() {
            for idx in 0..net.layers()[l].weights.len() {
                let mut p = net.clone();
                p.layers_mut()[l].weights[idx] += h;
                let mut m = net.clone();
                m.layers_mut()[l].weights[idx] -= h;
                let fd = (p.anchored_penalty(1.3, &priors, 7).unwrap()
                    - m.anchored_penalty(1.3, &priors, 7).unwrap())
                    / (2.0 * h);
                let a = g.layers[l].weights[idx];
                assert!((fd - a).abs() <= 1e-6 * a.abs().max(1e-3), "{fd} vs {a}");
            }
        }
    }

    #[test]
    fn penalty_rejects_nonpositive_scales() {
        let net = random_net(&[2, 3], 0, Activation::Relu);
        assert!(matches!(
            net.anchored_penalty_gradient(0.0, &[1.0], 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            net.anchored_penalty_gradient(1.0, &[-1.0], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut net = random_net(&[2, 3, 1], 0, Activation::Relu);
        let before = net.clone();
        let mut st = AdamState::new(&net, 1e-4, 1e-8).unwrap();
        adam_step(&mut net, &Gradients::zeros_like(&before), &mut st).unwrap();
        assert_eq!(net.layers(), before.layers());
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = random_net(&[2, 3, 1], 0, Activation::Relu);
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        for l in &mut g.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.7);
            l.bias.iter_mut().for_each(|v| *v = -2.0);
        }
        let mut st = AdamState::new(&net, 1e-3, 1e-8).unwrap();
        adam_step(&mut net, &g, &mut st).unwrap();
        // m_hat = g, v_hat = g^2  =>  delta = -lr * g / (|g| + eps)
        for (a, b) in net.layers().iter().zip(before.layers()) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                let expect = -1e-3 * 0.7 / (0.7 + 1e-8);
                assert!(((x - y) - expect).abs() < 1e-15);
            }
            for (x, y) in a.bias.iter().zip(&b.bias) {
                let expect = 1e-3 * 2.0 / (2.0 + 1e-8);
                assert!(((x - y) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        // minimize 0.5 * sum (p - c)^2 over all parameters of a tiny net
        let mut net = random_net(&[2, 2], 3, Activation::Relu);
        let mut st = AdamState::new(&net, 1e-2, 1e-8).unwrap();
        let target = 0.37;
        for _ in 0..5000 {
            let mut g = Gradients::zeros_like(&net);
            for (gl, l) in g.layers.iter_mut().zip(net.layers()) {
                for (gv, p) in gl.weights.iter_mut().zip(&l.weights) {
                    *gv = p - target;
                }
                for (gv, p) in gl.bias.iter_mut().zip(&l.bias) {
                    *gv = p - target;
                }
            }
            adam_step(&mut net, &g, &mut st).unwrap();
        }
        for l in net.layers() {
            for p in l.weights.iter().chain(&l.bias) {
                assert!((p - target).abs() < 1e-3, "{p}");
            }
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients_without_mutating() {
        let mut net = random_net(&[2, 2], 3, Activation::Relu);
        let before = net.clone();
        let mut st = AdamState::new(&net, 1e-3, 1e-8).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[0] = f64::NAN;
        assert!(matches!(adam_step(&mut net, &g, &mut st), Err(Error::Numeric(_))));
        assert_eq!(net, before);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn snapshot_rejects_garbage() {
        assert!(Network::from_text("nope").is_err());
        let net = random_net(&[2, 3], 0, Activation::Relu);
        let text = net.to_text().replace("dense 2 3", "dense 2 4");
        assert!(Network::from_text(&text).is_err());
    }
}
