use super::{Mode, Tensor1D};
use crate::rng::SplitMix64;
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `(k - 1) / 2` zeros on each side; requires an odd kernel.
    Same,
    Valid,
}

/// `out[c][t] = bias[c] + sum_{i, tau} w[c][i][tau] * x_pad[i][t * stride + tau]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    /// `[out][in][kernel]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dot product with four interleaved partial sums, so the loop vectorizes.
/// The summation order is fixed, keeping results deterministic.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Conv1d {
    /// Zero-initialized layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::invalid("conv1d dimensions must be positive"));
        }
        if padding == Padding::Same && kernel % 2 == 0 {
            return Err(Error::invalid(format!(
                "same padding needs an odd kernel, got {kernel}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.pad();
        if padded < self.kernel {
            return Err(Error::shape(format!(
                "conv1d kernel {} longer than padded input {padded}",
                self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn weight_at(&self, c: usize, i: usize) -> &[f64] {
        let start = (c * self.in_channels + i) * self.kernel;
        &self.weight[start..start + self.kernel]
    }

    /// Output positions `t` for which tap `tau` reads inside the input.
    fn tap_range(&self, tau: usize, len: usize, out_len: usize) -> (usize, usize) {
        let pad = self.pad();
        let s = self.stride;
        let start = if tau >= pad { 0 } else { (pad - tau).div_ceil(s) };
        let end = if len + pad > tau {
            (len + pad - tau).div_ceil(s)
        } else {
            0
        };
        (start, end.min(out_len))
    }

    fn check_input(&self, x: &Tensor1D) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "conv1d expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor1D) -> Result<Tensor1D> {
        self.check_input(x)?;
        let len = x.length();
        let out_len = self.output_len(len)?;
        let (pad, s) = (self.pad(), self.stride);
        let mut out = Tensor1D::zeros(self.out_channels, out_len);
        for c in 0..self.out_channels {
            let o = out.channel_mut(c);
            o.fill(self.bias[c]);
            for i in 0..self.in_channels {
                let xi = x.channel(i);
                for (tau, &w) in self.weight_at(c, i).iter().enumerate() {
                    let (t0, t1) = self.tap_range(tau, len, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    if s == 1 {
                        let src = &xi[t0 + tau - pad..t1 + tau - pad];
                        for (ov, xv) in o[t0..t1].iter_mut().zip(src) {
                            *ov += w * xv;
                        }
                    } else {
                        for t in t0..t1 {
                            o[t] += w * xi[t * s + tau - pad];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Input gradient and `[weight, bias]` gradients for one example.
    pub fn backward(&self, x: &Tensor1D, dy: &Tensor1D) -> Result<(Tensor1D, Vec<f64>)> {
        self.check_input(x)?;
        let len = x.length();
        let out_len = self.output_len(len)?;
        if dy.shape() != (self.out_channels, out_len) {
            return Err(Error::shape("conv1d upstream gradient shape mismatch"));
        }
        let (pad, s) = (self.pad(), self.stride);
        let mut dx = Tensor1D::zeros(self.in_channels, len);
        let mut grads = vec![0.0; self.weight.len() + self.out_channels];
        let (dw, db) = grads.split_at_mut(self.weight.len());
        for c in 0..self.out_channels {
            let g = dy.channel(c);
            db[c] = g.iter().sum();
            for i in 0..self.in_channels {
                let xi = x.channel(i);
                let base = (c * self.in_channels + i) * self.kernel;
                let dxi = dx.channel_mut(i);
                for tau in 0..self.kernel {
                    let w = self.weight[base + tau];
                    let (t0, t1) = self.tap_range(tau, len, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    if s == 1 {
                        let (p0, p1) = (t0 + tau - pad, t1 + tau - pad);
                        dw[base + tau] = dot(&g[t0..t1], &xi[p0..p1]);
                        for (dv, gv) in dxi[p0..p1].iter_mut().zip(&g[t0..t1]) {
                            *dv += w * gv;
                        }
                    } else {
                        let mut acc = 0.0;
                        for t in t0..t1 {
                            let p = t * s + tau - pad;
                            acc += g[t] * xi[p];
                            dxi[p] += w * g[t];
                        }
                        dw[base + tau] = acc;
                    }
                }
            }
        }
        Ok((dx, grads))
    }

    fn init_he(&mut self, rng: &mut SplitMix64) {
        let bound = (6.0 / (self.in_channels * self.kernel) as f64).sqrt();
        for w in &mut self.weight {
            *w = rng.uniform(-bound, bound);
        }
        self.bias.fill(0.0);
    }
}

/// Max over windows of `width` samples every `stride` samples; a trailing
/// remainder is dropped. Ties route the gradient to the earliest index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub width: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn new(width: usize, stride: usize) -> Result<Self> {
        if width == 0 || stride == 0 {
            return Err(Error::invalid("max-pool width and stride must be positive"));
        }
        Ok(Self { width, stride })
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        if len < self.width {
            return Err(Error::shape(format!(
                "max-pool width {} exceeds input length {len}",
                self.width
            )));
        }
        Ok((len - self.width) / self.stride + 1)
    }

    /// Output plus the flat input index each output was taken from.
    pub fn forward(&self, x: &Tensor1D) -> Result<(Tensor1D, Vec<usize>)> {
        let len = x.length();
        let out_len = self.output_len(len)?;
        let mut out = Tensor1D::zeros(x.channels(), out_len);
        let mut argmax = Vec::with_capacity(x.channels() * out_len);
        for c in 0..x.channels() {
            let xc = x.channel(c);
            for t in 0..out_len {
                let start = t * self.stride;
                let mut best = start;
                for p in start + 1..start + self.width {
                    if xc[p] > xc[best] {
                        best = p;
                    }
                }
                out.channel_mut(c)[t] = xc[best];
                argmax.push(c * len + best);
            }
        }
        Ok((out, argmax))
    }

    pub fn backward(&self, input_shape: (usize, usize), argmax: &[usize], dy: &Tensor1D) -> Tensor1D {
        let mut dx = Tensor1D::zeros(input_shape.0, input_shape.1);
        for (&src, &g) in argmax.iter().zip(dy.values()) {
            dx.values_mut()[src] += g;
        }
        dx
    }
}

/// Per-channel batch normalization over (batch, time).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight of the old running statistic in each update.
    pub momentum: f64,
}

impl BatchNorm1d {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    fn check(&self, xs: &[Tensor1D]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::invalid("batch-norm needs a non-empty batch"));
        }
        let len = xs[0].length();
        for x in xs {
            if x.channels() != self.channels || x.length() != len {
                return Err(Error::shape(format!(
                    "batch-norm expects {} channels of equal length",
                    self.channels
                )));
            }
        }
        Ok(())
    }

    /// Normalizes a batch. Returns the outputs and the statistics used
    /// (batch statistics in train mode, running statistics otherwise).
    pub fn forward(&self, xs: &[Tensor1D], mode: Mode) -> Result<(Vec<Tensor1D>, NormStats)> {
        self.check(xs)?;
        let (mean, var) = match mode {
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
            Mode::Train => {
                let m = (xs.len() * xs[0].length()) as f64;
                let mut mean = vec![0.0; self.channels];
                let mut var = vec![0.0; self.channels];
                for c in 0..self.channels {
                    mean[c] = xs.iter().map(|x| x.channel(c).iter().sum::<f64>()).sum::<f64>() / m;
                    var[c] = xs
                        .iter()
                        .map(|x| x.channel(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>())
                        .sum::<f64>()
                        / m;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(xs.len());
        let mut ys = Vec::with_capacity(xs.len());
        for x in xs {
            let mut h = x.clone();
            let mut y = x.clone();
            for c in 0..self.channels {
                for (hv, yv) in h.channel_mut(c).iter_mut().zip(y.channel_mut(c)) {
                    *hv = (*hv - mean[c]) * inv_std[c];
                    *yv = self.gamma[c] * *hv + self.beta[c];
                }
            }
            xhat.push(h);
            ys.push(y);
        }
        Ok((
            ys,
            NormStats {
                mode,
                mean,
                var,
                inv_std,
                xhat,
            },
        ))
    }

    /// Input gradients and `[gamma, beta]` gradients summed over the batch.
    pub fn backward(&self, stats: &NormStats, dys: &[Tensor1D]) -> Result<(Vec<Tensor1D>, Vec<f64>)> {
        if dys.len() != stats.xhat.len() {
            return Err(Error::state("batch-norm backward batch differs from forward"));
        }
        let mut grads = vec![0.0; 2 * self.channels];
        let mut dxs: Vec<Tensor1D> = dys.to_vec();
        let m = (dys.len() * dys[0].length()) as f64;
        for c in 0..self.channels {
            let mut dgamma = 0.0;
            let mut dbeta = 0.0;
            for (dy, h) in dys.iter().zip(&stats.xhat) {
                for (g, x) in dy.channel(c).iter().zip(h.channel(c)) {
                    dgamma += g * x;
                    dbeta += g;
                }
            }
            grads[c] = dgamma;
            grads[self.channels + c] = dbeta;
            let scale = self.gamma[c] * stats.inv_std[c];
            match stats.mode {
                Mode::Infer => {
                    for dx in dxs.iter_mut() {
                        dx.channel_mut(c).iter_mut().for_each(|v| *v *= scale);
                    }
                }
                Mode::Train => {
                    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
                    for (dx, h) in dxs.iter_mut().zip(&stats.xhat) {
                        for (v, x) in dx.channel_mut(c).iter_mut().zip(h.channel(c)) {
                            *v = scale / m * (m * *v - dbeta - x * dgamma);
                        }
                    }
                }
            }
        }
        Ok((dxs, grads))
    }

    /// Folds batch statistics into the running estimates.
    pub fn update_running(&mut self, stats: &NormStats) {
        if stats.mode != Mode::Train {
            return;
        }
        let mo = self.momentum;
        for c in 0..self.channels {
            self.running_mean[c] = mo * self.running_mean[c] + (1.0 - mo) * stats.mean[c];
            self.running_var[c] = mo * self.running_var[c] + (1.0 - mo) * stats.var[c];
        }
    }
}

/// Statistics and normalized activations recorded by a batch-norm forward.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub mode: Mode,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub xhat: Vec<Tensor1D>,
}

/// `y = W x + b` on the flattened input; output is `out_features x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::invalid("dense dimensions must be positive"));
        }
        Ok(Self {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        })
    }

    fn check(&self, x: &Tensor1D) -> Result<()> {
        if x.values().len() != self.in_features {
            return Err(Error::shape(format!(
                "dense expects {} inputs, got {}",
                self.in_features,
                x.values().len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor1D) -> Result<Tensor1D> {
        self.check(x)?;
        let xv = x.values();
        let out = (0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + row.iter().zip(xv).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Tensor1D::new(self.out_features, 1, out)
    }

    pub fn backward(&self, x: &Tensor1D, dy: &Tensor1D) -> Result<(Tensor1D, Vec<f64>)> {
        self.check(x)?;
        if dy.values().len() != self.out_features {
            return Err(Error::shape("dense upstream gradient shape mismatch"));
        }
        let xv = x.values();
        let mut dx = vec![0.0; self.in_features];
        let mut grads = vec![0.0; self.weight.len() + self.out_features];
        let (dw, db) = grads.split_at_mut(self.weight.len());
        for (o, &g) in dy.values().iter().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let drow = &mut dw[o * self.in_features..(o + 1) * self.in_features];
            for j in 0..self.in_features {
                drow[j] = g * xv[j];
                dx[j] += g * row[j];
            }
            db[o] = g;
        }
        Ok((Tensor1D::new(x.channels(), x.length(), dx)?, grads))
    }

    fn init_he(&mut self, rng: &mut SplitMix64) {
        let bound = (6.0 / self.in_features as f64).sqrt();
        for w in &mut self.weight {
            *w = rng.uniform(-bound, bound);
        }
        self.bias.fill(0.0);
    }
}

/// `relu(conv_b(relu(conv_a(x))) + x)` with same-padded, channel-preserving
/// convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv_a: Conv1d,
    pub conv_b: Conv1d,
}

/// Intermediates of one residual-block forward pass.
#[derive(Debug, Clone)]
pub struct ResidualCache {
    pre_a: Tensor1D,
    act_a: Tensor1D,
    sum: Tensor1D,
}

impl ResidualBlock {
    pub fn new(channels: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            conv_a: Conv1d::new(channels, channels, kernel, 1, Padding::Same)?,
            conv_b: Conv1d::new(channels, channels, kernel, 1, Padding::Same)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.conv_a.in_channels
    }

    pub fn kernel(&self) -> usize {
        self.conv_a.kernel
    }

    pub fn forward(&self, x: &Tensor1D) -> Result<(Tensor1D, ResidualCache)> {
        let pre_a = self.conv_a.forward(x)?;
        let act_a = pre_a.map(relu);
        let mut sum = self.conv_b.forward(&act_a)?;
        for (s, v) in sum.values_mut().iter_mut().zip(x.values()) {
            *s += v;
        }
        let out = sum.map(relu);
        Ok((out, ResidualCache { pre_a, act_a, sum }))
    }

    pub fn backward(&self, x: &Tensor1D, cache: &ResidualCache, dy: &Tensor1D) -> Result<(Tensor1D, Vec<f64>)> {
        let dsum = relu_backward(&cache.sum, dy);
        let (dact, grads_b) = self.conv_b.backward(&cache.act_a, &dsum)?;
        let dpre = relu_backward(&cache.pre_a, &dact);
        let (mut dx, mut grads) = self.conv_a.backward(x, &dpre)?;
        for (d, s) in dx.values_mut().iter_mut().zip(dsum.values()) {
            *d += s;
        }
        grads.extend(grads_b);
        Ok((dx, grads))
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Passes `dy` where `x > 0`; the subgradient at exactly zero is zero.
pub(crate) fn relu_backward(x: &Tensor1D, dy: &Tensor1D) -> Tensor1D {
    let mut dx = dy.clone();
    for (d, &v) in dx.values_mut().iter_mut().zip(x.values()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Per-channel mean over time; output is `channels x 1`.
pub(crate) fn gap_forward(x: &Tensor1D) -> Result<Tensor1D> {
    if x.length() == 0 {
        return Err(Error::shape("global average pool of an empty tensor"));
    }
    let len = x.length() as f64;
    let means = (0..x.channels())
        .map(|c| x.channel(c).iter().sum::<f64>() / len)
        .collect();
    Tensor1D::new(x.channels(), 1, means)
}

pub(crate) fn gap_backward(input_shape: (usize, usize), dy: &Tensor1D) -> Tensor1D {
    let (channels, len) = input_shape;
    let mut dx = Tensor1D::zeros(channels, len);
    for c in 0..channels {
        let g = dy.values()[c] / len as f64;
        dx.channel_mut(c).fill(g);
    }
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    Relu,
    MaxPool,
    BatchNorm,
    Dense,
    Gap,
    Residual,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Dense => "dense",
            LayerKind::Gap => "gap",
            LayerKind::Residual => "residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    Relu,
    MaxPool(MaxPool1d),
    BatchNorm(BatchNorm1d),
    Dense(Dense),
    Gap,
    Residual(ResidualBlock),
}

/// What a layer's batch forward records for its backward pass, beyond the
/// layer inputs themselves.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    None,
    Pool(Vec<Vec<usize>>),
    Norm(NormStats),
    Residual(Vec<ResidualCache>),
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Splits per-example `(dx, grads)` pairs, summing grads in example order.
fn sum_grads(parts: Vec<(Tensor1D, Vec<f64>)>, n_params: usize) -> (Vec<Tensor1D>, Vec<f64>) {
    let mut total = vec![0.0; n_params];
    let mut dxs = Vec::with_capacity(parts.len());
    for (dx, g) in parts {
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
        dxs.push(dx);
    }
    (dxs, total)
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv1d(_) => LayerKind::Conv1d,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Gap => LayerKind::Gap,
            Layer::Residual(_) => LayerKind::Residual,
        }
    }

    /// Output shape for an input of `(channels, length)`.
    pub fn output_shape(&self, (channels, len): (usize, usize)) -> Result<(usize, usize)> {
        let need = |expected: usize| {
            if channels == expected {
                Ok(())
            } else {
                Err(Error::shape(format!(
                    "{} expects {expected} channels, got {channels}",
                    self.kind().name()
                )))
            }
        };
        match self {
            Layer::Conv1d(c) => {
                need(c.in_channels)?;
                Ok((c.out_channels, c.output_len(len)?))
            }
            Layer::Relu => Ok((channels, len)),
            Layer::MaxPool(p) => Ok((channels, p.output_len(len)?)),
            Layer::BatchNorm(b) => {
                need(b.channels)?;
                Ok((channels, len))
            }
            Layer::Dense(d) => {
                if channels * len != d.in_features {
                    return Err(Error::shape(format!(
                        "dense expects {} inputs, got {channels}x{len}",
                        d.in_features
                    )));
                }
                Ok((d.out_features, 1))
            }
            Layer::Gap => {
                if len == 0 {
                    return Err(Error::shape("global average pool of an empty tensor"));
                }
                Ok((channels, 1))
            }
            Layer::Residual(r) => {
                need(r.channels())?;
                r.conv_a.output_len(len)?;
                Ok((channels, len))
            }
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.weight.len() + c.bias.len(),
            Layer::BatchNorm(b) => 2 * b.channels,
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            Layer::Residual(r) => {
                r.conv_a.weight.len() + r.conv_a.bias.len() + r.conv_b.weight.len() + r.conv_b.bias.len()
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Gap => 0,
        }
    }

    /// Appends trainable parameters in their canonical order.
    pub fn params_into(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Conv1d(c) => {
                out.extend(&c.weight);
                out.extend(&c.bias);
            }
            Layer::BatchNorm(b) => {
                out.extend(&b.gamma);
                out.extend(&b.beta);
            }
            Layer::Dense(d) => {
                out.extend(&d.weight);
                out.extend(&d.bias);
            }
            Layer::Residual(r) => {
                for c in [&r.conv_a, &r.conv_b] {
                    out.extend(&c.weight);
                    out.extend(&c.bias);
                }
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Gap => {}
        }
    }

    /// Overwrites parameters from `src`, which must hold exactly
    /// `num_params()` values.
    pub fn set_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.num_params());
        let mut rest = src;
        let mut take = |dst: &mut Vec<f64>| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        match self {
            Layer::Conv1d(c) => {
                take(&mut c.weight);
                take(&mut c.bias);
            }
            Layer::BatchNorm(b) => {
                take(&mut b.gamma);
                take(&mut b.beta);
            }
            Layer::Dense(d) => {
                take(&mut d.weight);
                take(&mut d.bias);
            }
            Layer::Residual(r) => {
                take(&mut r.conv_a.weight);
                take(&mut r.conv_a.bias);
                take(&mut r.conv_b.weight);
                take(&mut r.conv_b.bias);
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Gap => {}
        }
    }

    /// Non-trainable state (batch-norm running mean then variance).
    pub fn num_buffers(&self) -> usize {
        match self {
            Layer::BatchNorm(b) => 2 * b.channels,
            _ => 0,
        }
    }

    pub fn buffers_into(&self, out: &mut Vec<f64>) {
        if let Layer::BatchNorm(b) = self {
            out.extend(&b.running_mean);
            out.extend(&b.running_var);
        }
    }

    pub fn set_buffers(&mut self, src: &[f64]) {
        if let Layer::BatchNorm(b) = self {
            let (m, v) = src.split_at(b.channels);
            b.running_mean.copy_from_slice(m);
            b.running_var.copy_from_slice(v);
        }
    }

    /// He-uniform weights, zero biases, identity batch-norm.
    pub fn init_he(&mut self, rng: &mut SplitMix64) {
        match self {
            Layer::Conv1d(c) => c.init_he(rng),
            Layer::Dense(d) => d.init_he(rng),
            Layer::Residual(r) => {
                r.conv_a.init_he(rng);
                r.conv_b.init_he(rng);
            }
            Layer::BatchNorm(b) => *b = BatchNorm1d::new(b.channels),
            Layer::Relu | Layer::MaxPool(_) | Layer::Gap => {}
        }
    }

    /// Single-example inference pass (batch-norm uses running statistics).
    pub fn forward_infer(&self, x: &Tensor1D) -> Result<Tensor1D> {
        match self {
            Layer::Conv1d(c) => c.forward(x),
            Layer::Relu => Ok(x.map(relu)),
            Layer::MaxPool(p) => Ok(p.forward(x)?.0),
            Layer::BatchNorm(b) => {
                let (mut ys, _) = b.forward(std::slice::from_ref(x), Mode::Infer)?;
                Ok(ys.remove(0))
            }
            Layer::Dense(d) => d.forward(x),
            Layer::Gap => gap_forward(x),
            Layer::Residual(r) => Ok(r.forward(x)?.0),
        }
    }

    pub(crate) fn forward_batch(&self, xs: &[Tensor1D], mode: Mode, exec: Exec) -> Result<(Vec<Tensor1D>, Cache)> {
        match self {
            Layer::BatchNorm(b) => {
                let (ys, stats) = b.forward(xs, mode)?;
                Ok((ys, Cache::Norm(stats)))
            }
            Layer::MaxPool(p) => {
                let (ys, idx): (Vec<_>, Vec<_>) = collect(exec.map(xs, |x| p.forward(x)))?.into_iter().unzip();
                Ok((ys, Cache::Pool(idx)))
            }
            Layer::Residual(r) => {
                let (ys, caches): (Vec<_>, Vec<_>) = collect(exec.map(xs, |x| r.forward(x)))?.into_iter().unzip();
                Ok((ys, Cache::Residual(caches)))
            }
            _ => Ok((collect(exec.map(xs, |x| self.forward_infer(x)))?, Cache::None)),
        }
    }

    /// Input gradients and parameter gradients summed over the batch.
    pub(crate) fn backward_batch(
        &self,
        xs: &[Tensor1D],
        cache: &Cache,
        dys: &[Tensor1D],
        exec: Exec,
    ) -> Result<(Vec<Tensor1D>, Vec<f64>)> {
        if xs.len() != dys.len() {
            return Err(Error::state("backward batch size differs from forward"));
        }
        let n = self.num_params();
        let idx: Vec<usize> = (0..xs.len()).collect();
        match (self, cache) {
            (Layer::Conv1d(c), Cache::None) => {
                let parts = collect(exec.map(&idx, |&b| c.backward(&xs[b], &dys[b])))?;
                Ok(sum_grads(parts, n))
            }
            (Layer::Dense(d), Cache::None) => {
                let parts = collect(exec.map(&idx, |&b| d.backward(&xs[b], &dys[b])))?;
                Ok(sum_grads(parts, n))
            }
            (Layer::Relu, Cache::None) => Ok((exec.map(&idx, |&b| relu_backward(&xs[b], &dys[b])), Vec::new())),
            (Layer::Gap, Cache::None) => Ok((exec.map(&idx, |&b| gap_backward(xs[b].shape(), &dys[b])), Vec::new())),
            (Layer::MaxPool(p), Cache::Pool(argmax)) => Ok((
                exec.map(&idx, |&b| p.backward(xs[b].shape(), &argmax[b], &dys[b])),
                Vec::new(),
            )),
            (Layer::BatchNorm(bn), Cache::Norm(stats)) => bn.backward(stats, dys),
            (Layer::Residual(r), Cache::Residual(caches)) => {
                let parts = collect(exec.map(&idx, |&b| r.backward(&xs[b], &caches[b], &dys[b])))?;
                Ok(sum_grads(parts, n))
            }
            _ => Err(Error::state(format!(
                "no recorded forward pass for {} layer",
                self.kind().name()
            ))),
        }
    }
}
