//! Supervised training of CCNN models on interfered → clean pairs.

use crate::ccnn::{
    param_count, Checkpoint, CheckpointHeader, EpochRecord, Mode, Model, ModelSpec, Planes, Real,
    Variant,
};
use crate::dsp::{self, RdMap, RdaMap};
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::sim::{load_sample, manifest_root, Manifest};
use crate::tensor::ComplexTensor;
use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Results never depend on the thread count; the flag is recorded for
    /// provenance and kept for interface compatibility.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            max_epochs: 100,
            lr0: 1e-3,
            lr_decay: 0.95,
            early_stop_patience: 10,
            seed: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }
}

/// Mean of `|pred − target|²` over complex elements, with its gradient
/// `∂L/∂Re + j·∂L/∂Im`.
pub fn mse_loss<R: Real>(pred: &Planes<R>, target: &Planes<R>) -> Result<(f64, Planes<R>)> {
    target.ensure_shape(pred.shape())?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::Degenerate("loss over an empty tensor".into()));
    }
    let mut grad = Planes::zeros(pred.shape());
    let scale = R::of(2.0 / n as f64);
    let mut sum = 0.0;
    for i in 0..n {
        let (dr, di) = (pred.re[i] - target.re[i], pred.im[i] - target.im[i]);
        sum += dr.f64() * dr.f64() + di.f64() * di.f64();
        grad.re[i] = dr * scale;
        grad.im[i] = di * scale;
    }
    Ok((sum / n as f64, grad))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per real parameter component.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<R> {
    pub m: Vec<Planes<R>>,
    pub v: Vec<Planes<R>>,
    pub t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &[&Planes<R>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Planes::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Planes::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(
        &mut self,
        params: &mut [&mut Planes<R>],
        grads: &[&Planes<R>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "Adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            g.ensure_shape(p.shape())?;
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let update = |p: &mut R, g: R, m: &mut R, v: &mut R| {
            let g = g.f64();
            let mn = ADAM_BETA1 * m.f64() + (1.0 - ADAM_BETA1) * g;
            let vn = ADAM_BETA2 * v.f64() + (1.0 - ADAM_BETA2) * g * g;
            *m = R::of(mn);
            *v = R::of(vn);
            *p = R::of(p.f64() - lr * (mn / c1) / ((vn / c2).sqrt() + ADAM_EPS));
        };
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                update(&mut p.re[i], g.re[i], &mut m.re[i], &mut v.re[i]);
                update(&mut p.im[i], g.im[i], &mut m.im[i], &mut v.im[i]);
            }
        }
        Ok(())
    }
}

/// The tensor a model of this variant sees for one sample, before scaling:
/// the RDA map for 3D models, the RD map for 2D models.
pub fn model_domain(spec: &ModelSpec, rda: &RdaMap) -> Result<ComplexTensor> {
    match spec.variant {
        Variant::ThreeD => Ok(rda.0.clone()),
        Variant::TwoD => Ok(dsp::rda_to_rd(rda)?.0),
    }
}

/// One sample as a `[1, C, R, D, A]` network input scaled by `1/normalizer`.
/// 2D models take antennas as channels with a unit angle axis.
pub fn to_input(spec: &ModelSpec, t: &ComplexTensor, normalizer: f64) -> Result<Planes<f32>> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected a [R, D, A] tensor, got {s:?}"
        )));
    }
    let (nr, nd, na) = (s[0], s[1], s[2]);
    let inv = (1.0 / normalizer) as f32;
    let mut p = Planes::zeros(&match spec.variant {
        Variant::ThreeD => [1, 1, nr, nd, na],
        Variant::TwoD => [1, na, nr, nd, 1],
    });
    for (i, z) in t.data().iter().enumerate() {
        let j = match spec.variant {
            Variant::ThreeD => i,
            Variant::TwoD => {
                let (r, d, a) = (i / (nd * na), (i / na) % nd, i % na);
                (a * nr + r) * nd + d
            }
        };
        p.re[j] = z.re * inv;
        p.im[j] = z.im * inv;
    }
    Ok(p)
}

/// Inverse of [`to_input`] for one network output.
pub fn from_output(spec: &ModelSpec, p: &Planes<f32>, normalizer: f64) -> Result<Prediction> {
    let s = p.shape();
    if s.len() != 5 || s[0] != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected a single-item output, got {s:?}"
        )));
    }
    let scale = normalizer as f32;
    let (shape, map): ([usize; 3], Box<dyn Fn(usize) -> usize>) = match spec.variant {
        Variant::ThreeD => ([s[2], s[3], s[4]], Box::new(|i| i)),
        Variant::TwoD => {
            let (na, nr, nd) = (s[1], s[2], s[3]);
            (
                [nr, nd, na],
                Box::new(move |i| {
                    let (r, d, a) = (i / (nd * na), (i / na) % nd, i % na);
                    (a * nr + r) * nd + d
                }),
            )
        }
    };
    let data = (0..p.len())
        .map(|i| {
            let j = map(i);
            Complex32::new(p.re[j] * scale, p.im[j] * scale)
        })
        .collect();
    let t = ComplexTensor::from_vec(&shape, data)?;
    Ok(match spec.variant {
        Variant::ThreeD => Prediction::Rda(RdaMap(t)),
        Variant::TwoD => Prediction::Rd(RdMap(t)),
    })
}

fn stack(items: &[&Planes<f32>]) -> Planes<f32> {
    let mut shape = items[0].shape().to_vec();
    shape[0] = items.len();
    let mut re = Vec::with_capacity(items.len() * items[0].len());
    let mut im = Vec::with_capacity(items.len() * items[0].len());
    for it in items {
        re.extend_from_slice(&it.re);
        im.extend_from_slice(&it.im);
    }
    Planes::from_parts(&shape, re, im).expect("items share a shape")
}

/// Applies a trained model to interfered samples.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: Model<f32>,
    pub normalizer: f64,
}

impl Predictor {
    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        Predictor {
            model: ck.model.clone(),
            normalizer: ck.header.normalizer,
        }
    }

    pub fn predict(&self, interfered: &RdaMap) -> Result<Prediction> {
        let spec = &self.model.spec;
        let x = to_input(spec, &model_domain(spec, interfered)?, self.normalizer)?;
        let y = self.model.forward(&x, Mode::Eval)?;
        if !y.is_finite() {
            return Err(Error::Numerical("model produced non-finite output".into()));
        }
        from_output(spec, &y, self.normalizer)
    }
}

struct Pairs {
    inputs: Vec<Planes<f32>>,
    targets: Vec<Planes<f32>>,
}

fn load_split(
    manifest: &Manifest,
    root: &Path,
    split: &str,
    spec: &ModelSpec,
) -> Result<(Vec<ComplexTensor>, Vec<ComplexTensor>)> {
    let records = manifest.split(split)?;
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!("the {split} split is empty")));
    }
    let mut inputs = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    for rec in records {
        let s = load_sample(root, rec, &manifest.radar_config)?;
        inputs.push(model_domain(spec, &s.interfered_rda)?);
        targets.push(model_domain(spec, &s.clean_rda)?);
    }
    Ok((inputs, targets))
}

fn to_pairs(
    spec: &ModelSpec,
    raw: (Vec<ComplexTensor>, Vec<ComplexTensor>),
    norm: f64,
) -> Result<Pairs> {
    Ok(Pairs {
        inputs: raw
            .0
            .iter()
            .map(|t| to_input(spec, t, norm))
            .collect::<Result<_>>()?,
        targets: raw
            .1
            .iter()
            .map(|t| to_input(spec, t, norm))
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation model plus the state needed to resume.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

fn pack_state(model: &Model<f32>, adam: &AdamState<f32>) -> Vec<(String, ComplexTensor)> {
    let mut extra: Vec<(String, ComplexTensor)> = model
        .named_blocks()
        .into_iter()
        .map(|(n, p)| (format!("last.{n}"), p.to_tensor()))
        .collect();
    let names: Vec<String> = model
        .named_blocks()
        .into_iter()
        .filter(|(n, _)| !n.contains("running"))
        .map(|(n, _)| n)
        .collect();
    for (k, n) in names.iter().enumerate() {
        extra.push((format!("adam.m.{n}"), adam.m[k].to_tensor()));
        extra.push((format!("adam.v.{n}"), adam.v[k].to_tensor()));
    }
    extra
}

fn unpack_state(ck: &Checkpoint) -> Result<(Model<f32>, AdamState<f32>)> {
    let find = |name: &str| {
        ck.extra
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| Planes::<f32>::from_tensor(t))
            .ok_or_else(|| Error::Format {
                format: "CKP1",
                reason: format!("cannot resume: block {name} missing"),
            })
    };
    let mut model = ck.model.clone();
    for (n, p) in model.named_blocks_mut() {
        let stored = find(&format!("last.{n}"))?;
        stored.ensure_shape(p.shape())?;
        *p = stored;
    }
    let names: Vec<String> = model
        .named_blocks()
        .into_iter()
        .filter(|(n, _)| !n.contains("running"))
        .map(|(n, _)| n)
        .collect();
    let mut adam = AdamState::new(&model.trainable());
    for (k, n) in names.iter().enumerate() {
        adam.m[k] = find(&format!("adam.m.{n}"))?;
        adam.v[k] = find(&format!("adam.v.{n}"))?;
    }
    adam.t = ck.header.adam_step;
    Ok((model, adam))
}

/// Mean MSE over a set of pairs, in eval mode.
fn evaluate_mse(model: &Model<f32>, pairs: &Pairs, batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for (xs, ts) in pairs.inputs.chunks(batch).zip(pairs.targets.chunks(batch)) {
        let x = stack(&xs.iter().collect::<Vec<_>>());
        let t = stack(&ts.iter().collect::<Vec<_>>());
        let (loss, _) = mse_loss(&model.forward(&x, Mode::Eval)?, &t)?;
        total += loss * xs.len() as f64;
    }
    Ok(total / pairs.inputs.len() as f64)
}

/// Trains `spec` on the manifest's train split with early stopping on the
/// validation MSE. `on_epoch` sees every finished epoch (for progress output
/// and intermediate checkpoints).
pub fn train_model(
    spec: &ModelSpec,
    manifest_path: &Path,
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
    mut on_epoch: impl FnMut(&EpochRecord, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_root(manifest_path);
    let train_raw = load_split(&manifest, &root, "train", spec)?;
    let val_raw = load_split(&manifest, &root, "val", spec)?;

    let (mut model, mut adam, mut history, mut best, start, normalizer) = match resume {
        Some(ck) => {
            if ck.header.spec != *spec {
                return Err(Error::InvalidConfig(
                    "checkpoint was trained with a different model spec".into(),
                ));
            }
            let (model, adam) = unpack_state(ck)?;
            let best = (ck.model.clone(), ck.header.best_epoch);
            (
                model,
                adam,
                ck.header.history.clone(),
                Some(best),
                ck.header.epoch + 1,
                ck.header.normalizer,
            )
        }
        None => {
            let normalizer = train_raw
                .1
                .iter()
                .map(|t| t.max_abs() as f64)
                .fold(0.0, f64::max);
            if normalizer <= 0.0 || !normalizer.is_finite() {
                return Err(Error::Degenerate("training targets are all zero".into()));
            }
            let model = Model::<f32>::init(spec, cfg.seed)?;
            let adam = AdamState::new(&model.trainable());
            (model, adam, Vec::new(), None, 0, normalizer)
        }
    };
    let train = to_pairs(spec, train_raw, normalizer)?;
    let val = to_pairs(spec, val_raw, normalizer)?;

    let best_val = |history: &[EpochRecord], best_epoch: usize| {
        history
            .iter()
            .find(|h| h.epoch == best_epoch)
            .map_or(f64::INFINITY, |h| h.val_mse)
    };
    let mut stale = match &best {
        Some((_, be)) => history.iter().filter(|h| h.epoch > *be).count(),
        None => 0,
    };
    let header = |epoch: usize,
                  best_epoch: usize,
                  history: &[EpochRecord],
                  adam: &AdamState<f32>| CheckpointHeader {
        spec: spec.clone(),
        epoch,
        best_epoch,
        history: history.to_vec(),
        param_count: param_count(spec),
        normalizer,
        adam_step: adam.t,
        seed: cfg.seed,
    };

    let mut last_epoch = start.saturating_sub(1);
    for epoch in start..cfg.max_epochs {
        if stale > 0 && stale >= cfg.early_stop_patience {
            break;
        }
        let lr = cfg.lr(epoch);
        let mut order: Vec<usize> = (0..train.inputs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack(&idx.iter().map(|&i| &train.inputs[i]).collect::<Vec<_>>());
            let t = stack(&idx.iter().map(|&i| &train.targets[i]).collect::<Vec<_>>());
            let cache = model.forward_cached(&x, Mode::Train)?;
            let (loss, grad) = mse_loss(cache.output(), &t)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}, batch {b}"
                )));
            }
            total += loss * idx.len() as f64;
            let (grads, _) = model.backward(&cache, &grad, false)?;
            model.update_running(&cache);
            let g = grads.trainable();
            adam.step(&mut model.trainable_mut(), &g, lr)?;
        }
        let train_mse = total / train.inputs.len() as f64;
        let val_mse = evaluate_mse(&model, &val, cfg.batch_size)?;
        if !val_mse.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        let rec = EpochRecord {
            epoch,
            lr,
            train_mse,
            val_mse,
        };
        history.push(rec.clone());
        let improved = match &best {
            Some((_, be)) => val_mse < best_val(&history, *be),
            None => true,
        };
        if improved {
            best = Some((model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
        }
        last_epoch = epoch;
        let (bm, be) = best.as_ref().expect("set after the first epoch");
        let ck = Checkpoint {
            header: header(epoch, *be, &history, &adam),
            model: bm.clone(),
            extra: pack_state(&model, &adam),
        };
        on_epoch(&rec, &ck)?;
        if !improved && stale > cfg.early_stop_patience.saturating_sub(1) {
            break;
        }
    }
    let (bm, be) =
        best.ok_or_else(|| Error::InvalidConfig("max_epochs allows no training epoch".into()))?;
    let checkpoint = Checkpoint {
        header: header(last_epoch, be, &history, &adam),
        model: bm,
        extra: pack_state(&model, &adam),
    };
    Ok(TrainOutcome {
        checkpoint,
        history,
    })
}

/// History as CSV with columns `epoch,lr,train_mse,val_mse`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_mse,val_mse\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.lr, h.train_mse, h.val_mse
        ));
    }
    out
}
