use super::layers::Cache;
use super::{Layer, Mode, Tensor1D};
use crate::rng::SplitMix64;
use crate::{Error, Exec, Result};

/// An ordered layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
}

/// Everything a batch forward pass recorded for the matching backward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    mode: Mode,
    inputs: Vec<Vec<Tensor1D>>,
    caches: Vec<Cache>,
}

impl GradTape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Chains layer shapes from `input`, failing on the first mismatch.
    pub fn output_shape(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        self.layers.iter().try_fold(input, |shape, l| l.output_shape(shape))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            l.params_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                src.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.num_params();
            l.set_params(&src[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn num_buffers(&self) -> usize {
        self.layers.iter().map(Layer::num_buffers).sum()
    }

    pub fn buffers(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_buffers());
        for l in &self.layers {
            l.buffers_into(&mut out);
        }
        out
    }

    pub fn set_buffers(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_buffers() {
            return Err(Error::shape(format!(
                "expected {} buffer values, got {}",
                self.num_buffers(),
                src.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.num_buffers();
            l.set_buffers(&src[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn init_he(&mut self, rng: &mut SplitMix64) {
        for l in &mut self.layers {
            l.init_he(rng);
        }
    }

    /// Single-example inference.
    pub fn forward(&self, x: &Tensor1D) -> Result<Tensor1D> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward_infer(&h)?;
        }
        Ok(h)
    }

    /// Inference over many examples, parallel across examples.
    pub fn forward_many(&self, xs: &[Tensor1D], exec: Exec) -> Result<Vec<Tensor1D>> {
        exec.map(xs, |x| self.forward(x)).into_iter().collect()
    }

    pub fn forward_batch(&self, xs: &[Tensor1D], mode: Mode, exec: Exec) -> Result<(Vec<Tensor1D>, GradTape)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = xs.to_vec();
        for l in &self.layers {
            let (out, cache) = l.forward_batch(&h, mode, exec)?;
            inputs.push(std::mem::replace(&mut h, out));
            caches.push(cache);
        }
        Ok((h, GradTape { mode, inputs, caches }))
    }

    /// Input gradients per example and flat parameter gradients (same
    /// order as [`Sequential::params`]) summed over the batch.
    pub fn backward(&self, tape: &GradTape, dys: &[Tensor1D], exec: Exec) -> Result<(Vec<Tensor1D>, Vec<f64>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::state("gradient tape was recorded on a different network"));
        }
        let mut grads = vec![0.0; self.num_params()];
        let mut offset = grads.len();
        let mut g = dys.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (dx, pg) = l.backward_batch(&tape.inputs[i], &tape.caches[i], &g, exec)?;
            offset -= pg.len();
            grads[offset..offset + pg.len()].copy_from_slice(&pg);
            g = dx;
        }
        Ok((g, grads))
    }

    /// Applies batch statistics recorded during a train-mode forward pass.
    pub fn update_running_stats(&mut self, tape: &GradTape) {
        for (l, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (Layer::BatchNorm(bn), Cache::Norm(stats)) = (l, cache) {
                bn.update_running(stats);
            }
        }
    }
}
