use super::bn::{bn_backward, bn_forward, BnCache, BnParams, BN_MOMENTUM};
use super::conv::{conv_backward, conv_forward, ConvParams};
use super::{ModelSpec, Planes, Real, Variant};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `max(Re, 0) + j·max(Im, 0)`.
pub fn crelu<R: Real>(x: &Planes<R>) -> Planes<R> {
    let relu = |v: &R| if *v > R::zero() { *v } else { R::zero() };
    Planes::from_parts(
        x.shape(),
        x.re.iter().map(relu).collect(),
        x.im.iter().map(relu).collect(),
    )
    .expect("same shape")
}

/// Reverse of [`crelu`] given its output.
pub fn crelu_backward<R: Real>(out: &Planes<R>, upstream: &Planes<R>) -> Result<Planes<R>> {
    upstream.ensure_shape(out.shape())?;
    let pass = |(o, g): (&R, &R)| if *o > R::zero() { *g } else { R::zero() };
    Planes::from_parts(
        out.shape(),
        out.re.iter().zip(&upstream.re).map(pass).collect(),
        out.im.iter().zip(&upstream.im).map(pass).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<R> {
    pub conv: ConvParams<R>,
    pub bn: Option<BnParams<R>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<R> {
    pub spec: ModelSpec,
    pub layers: Vec<Layer<R>>,
}

/// Activations kept by a forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<R> {
    mode: Mode,
    inputs: Vec<Planes<R>>,
    relu_out: Vec<Option<Planes<R>>>,
    bn: Vec<Option<BnCache<R>>>,
    output: Planes<R>,
}

impl<R> ForwardCache<R> {
    pub fn output(&self) -> &Planes<R> {
        &self.output
    }
}

impl<R: Real> Model<R> {
    /// All weights, biases and BN shifts zero; BN scales at their init value.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let kernel = spec.kernel3();
        let layers = (0..spec.n_layers())
            .map(|l| {
                let (ci, co) = spec.layer_channels(l);
                Layer {
                    conv: ConvParams::zeros(co, ci, kernel),
                    bn: spec.has_bn(l).then(|| BnParams::new(co)),
                }
            })
            .collect();
        Ok(Model {
            spec: spec.clone(),
            layers,
        })
    }

    /// Complex Glorot init: Rayleigh magnitudes with scale
    /// `√(1/(fan_in + fan_out))`, uniform phases, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps: usize = spec.kernel.iter().product();
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let (ci, co) = spec.layer_channels(l);
            let sigma = (1.0 / ((ci + co) * taps) as f64).sqrt();
            let rayleigh = Weibull::new(sigma * std::f64::consts::SQRT_2, 2.0)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let w = &mut layer.conv.weight;
            for i in 0..w.len() {
                let mag: f64 = rayleigh.sample(&mut rng);
                let phase = rng.random_range(-PI..PI);
                w.re[i] = R::of(mag * phase.cos());
                w.im[i] = R::of(mag * phase.sin());
            }
        }
        Ok(model)
    }

    /// Same layout with every entry zero, for holding gradients.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                conv: ConvParams::zeros(l.conv.c_out(), l.conv.c_in(), l.conv.kernel()),
                bn: l.bn.as_ref().map(|b| BnParams::zeros(b.channels())),
            })
            .collect();
        Model {
            spec: self.spec.clone(),
            layers,
        }
    }

    pub fn cast<S: Real>(&self) -> Model<S> {
        Model {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    conv: ConvParams {
                        weight: l.conv.weight.cast(),
                        bias: l.conv.bias.cast(),
                    },
                    bn: l.bn.as_ref().map(|b| BnParams {
                        gamma: b.gamma.cast(),
                        beta: b.beta.cast(),
                        running_mean: b.running_mean.cast(),
                        running_cov: b.running_cov.cast(),
                    }),
                })
                .collect(),
        }
    }

    /// Every stored tensor with a stable name, trainable ones first per layer.
    pub fn named_blocks(&self) -> Vec<(String, &Planes<R>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.weight"), &layer.conv.weight));
            out.push((format!("layer{l}.bias"), &layer.conv.bias));
            if let Some(bn) = &layer.bn {
                out.push((format!("layer{l}.bn.gamma"), &bn.gamma));
                out.push((format!("layer{l}.bn.beta"), &bn.beta));
                out.push((format!("layer{l}.bn.running_mean"), &bn.running_mean));
                out.push((format!("layer{l}.bn.running_cov"), &bn.running_cov));
            }
        }
        out
    }

    pub fn named_blocks_mut(&mut self) -> Vec<(String, &mut Planes<R>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.weight"), &mut layer.conv.weight));
            out.push((format!("layer{l}.bias"), &mut layer.conv.bias));
            if let Some(bn) = &mut layer.bn {
                out.push((format!("layer{l}.bn.gamma"), &mut bn.gamma));
                out.push((format!("layer{l}.bn.beta"), &mut bn.beta));
                out.push((format!("layer{l}.bn.running_mean"), &mut bn.running_mean));
                out.push((format!("layer{l}.bn.running_cov"), &mut bn.running_cov));
            }
        }
        out
    }

    /// Trainable tensors in a fixed order (running statistics excluded).
    pub fn trainable(&self) -> Vec<&Planes<R>> {
        self.named_blocks()
            .into_iter()
            .filter(|(n, _)| !n.contains("running"))
            .map(|(_, p)| p)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Planes<R>> {
        self.named_blocks_mut()
            .into_iter()
            .filter(|(n, _)| !n.contains("running"))
            .map(|(_, p)| p)
            .collect()
    }

    fn check_input(&self, x: &Planes<R>) -> Result<()> {
        let s = x.shape();
        let ci = self.spec.in_channels();
        let ok = s.len() == 5 && s[1] == ci && (self.spec.variant == Variant::ThreeD || s[4] == 1);
        if !ok {
            let want: Vec<usize> = match s {
                [b, _, r, d, a] => vec![
                    *b,
                    ci,
                    *r,
                    *d,
                    if self.spec.variant == Variant::TwoD {
                        1
                    } else {
                        *a
                    },
                ],
                _ => vec![1, ci, 0, 0, 0],
            };
            return Err(Error::shape(&want, s));
        }
        Ok(())
    }

    /// Forward pass keeping everything the reverse pass needs.
    pub fn forward_cached(&self, x: &Planes<R>, mode: Mode) -> Result<ForwardCache<R>> {
        self.check_input(x)?;
        let pad = self.spec.padding3();
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut relu_out = Vec::with_capacity(n);
        let mut bn_caches = Vec::with_capacity(n);
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = conv_forward(&h, &layer.conv, pad)?;
            inputs.push(h);
            if l + 1 == n {
                relu_out.push(None);
                bn_caches.push(None);
                h = z;
                break;
            }
            let y = crelu(&z);
            match &layer.bn {
                Some(bn) => {
                    let (out, cache) = bn_forward(&y, bn, mode)?;
                    relu_out.push(Some(y));
                    bn_caches.push(cache);
                    h = out;
                }
                None => {
                    relu_out.push(None);
                    bn_caches.push(None);
                    h = y;
                }
            }
        }
        Ok(ForwardCache {
            mode,
            inputs,
            relu_out,
            bn: bn_caches,
            output: h,
        })
    }

    pub fn forward(&self, x: &Planes<R>, mode: Mode) -> Result<Planes<R>> {
        Ok(self.forward_cached(x, mode)?.output)
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    pub fn update_running(&mut self, cache: &ForwardCache<R>) {
        for (layer, c) in self.layers.iter_mut().zip(&cache.bn) {
            if let (Some(bn), Some(c)) = (layer.bn.as_mut(), c) {
                bn.update_running(c, BN_MOMENTUM);
            }
        }
    }

    /// Exact gradients of a real loss given `upstream = ∂L/∂Re(y) + j·∂L/∂Im(y)`.
    pub fn backward(
        &self,
        cache: &ForwardCache<R>,
        upstream: &Planes<R>,
        want_input: bool,
    ) -> Result<(Model<R>, Option<Planes<R>>)> {
        let n = self.layers.len();
        if cache.inputs.len() != n {
            return Err(Error::InvalidArgument(
                "forward cache does not belong to this model".into(),
            ));
        }
        let has_bn = self.layers.iter().any(|l| l.bn.is_some());
        if has_bn && cache.mode != Mode::Train {
            return Err(Error::InvalidArgument(
                "reverse pass through batch norm needs a train-mode forward cache".into(),
            ));
        }
        upstream.ensure_shape(cache.output.shape())?;
        let pad = self.spec.padding3();
        let mut grads = self.zeros_like();
        let mut g = upstream.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if let Some(bn) = &layer.bn {
                let c = cache.bn[l].as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!("missing batch-norm cache for layer {l}"))
                })?;
                let (gbn, gx) = bn_backward(bn, c, &g)?;
                grads.layers[l].bn = Some(gbn);
                g = gx;
            }
            if l + 1 < n {
                let out = cache.relu_out[l].as_ref().unwrap_or(&cache.inputs[l + 1]);
                g = crelu_backward(out, &g)?;
            }
            let (gconv, gx) =
                conv_backward(&cache.inputs[l], &layer.conv, pad, &g, l > 0 || want_input)?;
            grads.layers[l].conv = gconv;
            match gx {
                Some(gx) => g = gx,
                None => return Ok((grads, None)),
            }
        }
        Ok((grads, Some(g)))
    }
}
