use super::{ExperimentConfig, Method, MitigationConfig};
use crate::ccnn::{Checkpoint, ModelSpec};
use crate::dsp::{self, RdaMap};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_sample, Prediction};
use crate::mitigate::{detect_interference, imat, ramp_filter, zeroing};
use crate::sim::{load_sample, manifest_root, Manifest};
use crate::train::Predictor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A checkpoint bound to the table row it is reported under.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub predictor: Predictor,
}

impl TrainedModel {
    /// Fails when the checkpoint's architecture is not the one the row names.
    pub fn new(method: Method, ckpt: &Checkpoint) -> Result<Self> {
        if !method.is_neural() {
            return Err(Error::InvalidArgument(format!(
                "{method} takes no checkpoint"
            )));
        }
        let preset = ModelSpec::preset(method.name())?;
        let spec = &ckpt.header.spec;
        if spec.variant != preset.variant || spec.channels != preset.channels {
            return Err(Error::InvalidArgument(format!(
                "checkpoint holds a {:?} model with channels {:?}, not {method}",
                spec.variant, spec.channels
            )));
        }
        Ok(TrainedModel {
            method,
            predictor: Predictor::from_checkpoint(ckpt),
        })
    }
}

/// Runs one method on an interfered RDA-map.
pub fn mitigate(
    method: Method,
    interfered: &RdaMap,
    cfg: &MitigationConfig,
    model: Option<&Predictor>,
) -> Result<Prediction> {
    let classical =
        |f: &dyn Fn(&crate::tensor::ComplexTensor) -> Result<crate::tensor::ComplexTensor>| {
            let cube = dsp::rda_to_time(interfered)?;
            Ok(Prediction::Rda(dsp::time_to_rda(&f(&cube)?)?))
        };
    match method {
        Method::None => Ok(Prediction::Rda(interfered.clone())),
        Method::Zeroing => classical(&|c| zeroing(c, &detect_interference(c, cfg.c_mad)?)),
        Method::Ramp => classical(&|c| ramp_filter(c, cfg.ramp_alpha)),
        Method::Imat => classical(&|c| {
            Ok(imat(c, &detect_interference(c, cfg.c_mad)?, cfg.imat_params())?.cube)
        }),
        _ => model
            .ok_or_else(|| Error::InvalidArgument(format!("no checkpoint given for {method}")))?
            .predict(interfered),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub method: Method,
    /// Scored with a model trained on fixed-AoA interference.
    pub fixed_aoa_training: bool,
    pub f1: f64,
    pub evm: f64,
    pub ppmse: f64,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub n: usize,
    pub f1: f64,
    pub evm: f64,
    pub ppmse: f64,
}

/// Scores `methods` on every sample of a split. Results are grouped by
/// method in the order given, samples in manifest order.
pub fn evaluate_split(
    manifest_path: &Path,
    split: &str,
    methods: &[Method],
    models: &[TrainedModel],
    cfg: &ExperimentConfig,
    fixed_aoa_training: bool,
) -> Result<Vec<SampleScore>> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_root(manifest_path);
    let records = manifest.split(split)?;
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!("the {split} split is empty")));
    }
    let lookup = |m: Method| -> Result<Option<&Predictor>> {
        if !m.is_neural() {
            return Ok(None);
        }
        models
            .iter()
            .find(|t| t.method == m)
            .map(|t| Some(&t.predictor))
            .ok_or_else(|| Error::InvalidArgument(format!("no checkpoint given for {m}")))
    };
    let predictors = methods
        .iter()
        .map(|&m| lookup(m))
        .collect::<Result<Vec<_>>>()?;

    let per_sample: Vec<Vec<SampleScore>> = records
        .par_iter()
        .map(|rec| {
            let sample = load_sample(&root, rec, &manifest.radar_config)?;
            methods
                .iter()
                .zip(&predictors)
                .map(|(&m, p)| {
                    let out = mitigate(m, &sample.interfered_rda, &cfg.mitigation, *p)?;
                    let r = evaluate_sample(&sample, &out, &cfg.cfar, cfg.match_tolerance)?;
                    Ok(SampleScore {
                        id: rec.id.clone(),
                        method: m,
                        fixed_aoa_training,
                        f1: r.f1,
                        evm: r.evm,
                        ppmse: r.ppmse,
                        n_tp: r.n_tp,
                        n_fp: r.n_fp,
                        n_fn: r.n_fn,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok((0..methods.len())
        .flat_map(|k| per_sample.iter().map(move |s| s[k].clone()))
        .collect())
}

/// Per-method means in report order.
pub fn aggregate(scores: &[SampleScore]) -> Vec<Aggregate> {
    Method::ALL
        .into_iter()
        .filter_map(|m| {
            let rows: Vec<_> = scores.iter().filter(|s| s.method == m).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            let mean = |f: fn(&SampleScore) -> f64| rows.iter().map(|s| f(s)).sum::<f64>() / n;
            Some(Aggregate {
                method: m,
                n: rows.len(),
                f1: mean(|s| s.f1),
                evm: mean(|s| s.evm),
                ppmse: mean(|s| s.ppmse),
            })
        })
        .collect()
}

pub fn aggregate_csv(rows: &[Aggregate]) -> String {
    let mut out = String::from("method,F1,EVM,PPMSE\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.method, r.f1, r.evm, r.ppmse
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scores: Vec<SampleScore>,
    pub aggregate: Vec<Aggregate>,
    /// Networks trained on fixed-AoA data, scored on the same test split.
    pub fixed_aoa: Vec<Aggregate>,
}

/// Scores the configured methods on the test split and writes
/// `samples.json`, `aggregate.csv` and, when fixed-AoA models are given,
/// `fixed_aoa.csv` into `out_dir`.
pub fn run_evaluation(
    manifest_path: &Path,
    cfg: &ExperimentConfig,
    models: &[TrainedModel],
    fixed_aoa_models: &[TrainedModel],
    out_dir: &Path,
) -> Result<EvaluationReport> {
    let mut scores = evaluate_split(
        manifest_path,
        "test",
        &cfg.ordered_methods(),
        models,
        cfg,
        false,
    )?;
    let main = aggregate(&scores);
    let mut fixed_methods: Vec<Method> = fixed_aoa_models.iter().map(|t| t.method).collect();
    fixed_methods.sort();
    fixed_methods.dedup();
    let fixed = if fixed_methods.is_empty() {
        Vec::new()
    } else {
        let s = evaluate_split(
            manifest_path,
            "test",
            &fixed_methods,
            fixed_aoa_models,
            cfg,
            true,
        )?;
        let agg = aggregate(&s);
        scores.extend(s);
        agg
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("samples.json", serde_json::to_string_pretty(&scores)?)?;
    write("aggregate.csv", aggregate_csv(&main))?;
    if !fixed.is_empty() {
        write("fixed_aoa.csv", aggregate_csv(&fixed))?;
    }
    Ok(EvaluationReport {
        scores,
        aggregate: main,
        fixed_aoa: fixed,
    })
}
