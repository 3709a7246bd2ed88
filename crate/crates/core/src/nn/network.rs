use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Trunk architecture: convolution stages over the local map, flattened and
/// joined with the goal vector, then fully connected layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side length of the local map in cells.
    pub map_cells: usize,
    pub conv: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        let stage = |channels| ConvSpec {
            channels,
            kernel: 3,
            stride: 2,
        };
        Self {
            map_cells: 120,
            conv: vec![stage(16), stage(32), stage(32)],
            hidden: vec![256, 256],
        }
    }
}

const GOAL_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Conv {
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_hw: usize,
        out_hw: usize,
        w: usize,
        b: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        relu: bool,
        /// Whether the goal vector is appended to this layer's input.
        goal: bool,
        w: usize,
        b: usize,
    },
}

impl Layer {
    fn output_len(&self) -> usize {
        match *self {
            Layer::Conv { out_c, out_hw, .. } => out_c * out_hw * out_hw,
            Layer::Dense { outputs, .. } => outputs,
        }
    }
}

/// Parameter layout of one network. Parameters live in a flat slice owned by
/// the caller so optimizers and checkpoints treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetConfig,
    out_dim: usize,
    layers: Vec<Layer>,
    n_params: usize,
}

/// Activations recorded by a forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    goal: [f64; 2],
    /// Output of every layer, after its nonlinearity.
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("network has layers")
    }
}

impl Network {
    pub fn new(config: NetConfig, out_dim: usize) -> Result<Self> {
        if config.map_cells == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig("empty network".into()));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        let (mut channels, mut hw) = (1, config.map_cells);
        for spec in &config.conv {
            if spec.kernel == 0 || spec.stride == 0 || spec.channels == 0 {
                return Err(Error::InvalidConfig(format!("conv stage {spec:?}")));
            }
            let pad = spec.kernel / 2;
            let out_hw = (hw + 2 * pad - spec.kernel) / spec.stride + 1;
            let w = offset;
            let b = w + spec.channels * channels * spec.kernel * spec.kernel;
            offset = b + spec.channels;
            layers.push(Layer::Conv {
                in_c: channels,
                out_c: spec.channels,
                kernel: spec.kernel,
                stride: spec.stride,
                pad,
                in_hw: hw,
                out_hw,
                w,
                b,
            });
            channels = spec.channels;
            hw = out_hw;
        }
        let mut inputs = channels * hw * hw + GOAL_DIM;
        let widths: Vec<(usize, bool)> = config
            .hidden
            .iter()
            .map(|&h| (h, true))
            .chain(std::iter::once((out_dim, false)))
            .collect();
        for (li, (outputs, relu)) in widths.into_iter().enumerate() {
            if outputs == 0 {
                return Err(Error::InvalidConfig("zero-width dense layer".into()));
            }
            let w = offset;
            let b = w + inputs * outputs;
            offset = b + outputs;
            layers.push(Layer::Dense {
                inputs,
                outputs,
                relu,
                goal: li == 0,
                w,
                b,
            });
            inputs = outputs;
        }
        Ok(Self {
            config,
            out_dim,
            layers,
            n_params: offset,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// He-uniform weights, zero biases; the output layer is scaled by
    /// `output_gain`.
    pub fn init_params<R: Rng>(&self, rng: &mut R, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (w, b, fan_in) = match *layer {
                Layer::Conv {
                    in_c, kernel, w, b, ..
                } => (w, b, in_c * kernel * kernel),
                Layer::Dense { inputs, w, b, .. } => (w, b, inputs),
            };
            let gain = if li == last { output_gain } else { 1.0 };
            let bound = gain * (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for p in &mut params[w..b] {
                *p = dist.sample(rng);
            }
        }
        params
    }

    fn check(&self, params: &[f64], obs: &Observation) -> Result<()> {
        if params.len() < self.n_params {
            return Err(Error::Shape {
                expected: self.n_params,
                actual: params.len(),
            });
        }
        if obs.size != self.config.map_cells || obs.local_map.len() != obs.size * obs.size {
            return Err(Error::Shape {
                expected: self.config.map_cells,
                actual: obs.size,
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], obs: &Observation) -> Result<ForwardCache> {
        self.check(params, obs)?;
        let input: Vec<f64> = obs.local_map.iter().map(|&c| f64::from(c)).collect();
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev: &[f64] = outputs.last().map_or(&input, |v| v.as_slice());
            let out = match *layer {
                Layer::Conv { .. } => conv_forward(layer, params, prev),
                Layer::Dense {
                    outputs: n_out,
                    relu,
                    goal,
                    w,
                    b,
                    ..
                } => {
                    let joined;
                    let x: &[f64] = if goal {
                        joined = [prev, &obs.goal_rel[..]].concat();
                        &joined
                    } else {
                        prev
                    };
                    dense_forward(params, x, n_out, relu, w, b)
                }
            };
            outputs.push(out);
        }
        Ok(ForwardCache {
            input,
            goal: obs.goal_rel,
            outputs,
        })
    }

    pub fn eval(&self, params: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.forward(params, obs)?.outputs.pop().expect("network has layers"))
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(d_out.len(), self.out_dim);
        let mut upstream = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let out = &cache.outputs[li];
            let prev: &[f64] = if li == 0 { &cache.input } else { &cache.outputs[li - 1] };
            match *layer {
                Layer::Dense {
                    inputs,
                    outputs,
                    relu,
                    goal,
                    w,
                    b,
                } => {
                    if relu {
                        for (g, &o) in upstream.iter_mut().zip(out) {
                            if o <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    let joined;
                    let x: &[f64] = if goal {
                        joined = [prev, &cache.goal[..]].concat();
                        &joined
                    } else {
                        prev
                    };
                    let mut d_in = vec![0.0; inputs];
                    for o in 0..outputs {
                        let g = upstream[o];
                        if g == 0.0 {
                            continue;
                        }
                        grad[b + o] += g;
                        let row = w + o * inputs;
                        let w_row = &params[row..row + inputs];
                        let g_row = &mut grad[row..row + inputs];
                        for i in 0..inputs {
                            g_row[i] += g * x[i];
                            d_in[i] += g * w_row[i];
                        }
                    }
                    // The goal components are inputs, not parameters.
                    d_in.truncate(prev.len());
                    upstream = d_in;
                }
                Layer::Conv { .. } => {
                    for (g, &o) in upstream.iter_mut().zip(out) {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    upstream = conv_backward(layer, params, prev, &upstream, grad, li > 0);
                }
            }
        }
    }
}

fn dense_forward(params: &[f64], x: &[f64], outputs: usize, relu: bool, w: usize, b: usize) -> Vec<f64> {
    let inputs = x.len();
    (0..outputs)
        .map(|o| {
            let row = &params[w + o * inputs..w + (o + 1) * inputs];
            let z = params[b + o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect()
}

fn conv_forward(layer: &Layer, params: &[f64], x: &[f64]) -> Vec<f64> {
    let Layer::Conv {
        in_c,
        out_c,
        kernel,
        stride,
        pad,
        in_hw,
        out_hw,
        w,
        b,
    } = *layer
    else {
        unreachable!()
    };
    let mut out = vec![0.0; layer.output_len()];
    for oc in 0..out_c {
        let bias = params[b + oc];
        for oy in 0..out_hw {
            for ox in 0..out_hw {
                let mut sum = bias;
                for ic in 0..in_c {
                    let w_base = w + (oc * in_c + ic) * kernel * kernel;
                    let x_base = ic * in_hw * in_hw;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= in_hw as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * in_hw;
                        let w_row = w_base + ky * kernel;
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= in_hw as isize {
                                continue;
                            }
                            sum += params[w_row + kx] * x[x_row + ix as usize];
                        }
                    }
                }
                out[(oc * out_hw + oy) * out_hw + ox] = sum.max(0.0);
            }
        }
    }
    out
}

/// Returns the gradient with respect to the layer input when `need_input`.
fn conv_backward(
    layer: &Layer,
    params: &[f64],
    x: &[f64],
    d_out: &[f64],
    grad: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    let Layer::Conv {
        in_c,
        out_c,
        kernel,
        stride,
        pad,
        in_hw,
        out_hw,
        w,
        b,
    } = *layer
    else {
        unreachable!()
    };
    let mut d_in = if need_input { vec![0.0; in_c * in_hw * in_hw] } else { Vec::new() };
    for oc in 0..out_c {
        for oy in 0..out_hw {
            for ox in 0..out_hw {
                let g = d_out[(oc * out_hw + oy) * out_hw + ox];
                if g == 0.0 {
                    continue;
                }
                grad[b + oc] += g;
                for ic in 0..in_c {
                    let w_base = w + (oc * in_c + ic) * kernel * kernel;
                    let x_base = ic * in_hw * in_hw;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= in_hw as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * in_hw;
                        let w_row = w_base + ky * kernel;
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= in_hw as isize {
                                continue;
                            }
                            let xi = x_row + ix as usize;
                            grad[w_row + kx] += g * x[xi];
                            if need_input {
                                d_in[xi] += g * params[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}
