//! Unsupervised training on freshly generated instances.

use std::path::Path;

use serde::{Deserialize, Serialize};
use weavematch_autodiff::{Adam, ParamStore, Scalar, Tape};
use weavematch_core::{binarize_argmax, cost_report, is_stable, Dataset, DatasetSpec, PreferenceInstance};

use crate::error::{NnError, Result};
use crate::loss::{composite, LossBreakdown, LossKind, LossWeights, MatrixLoss, ScoreConsts};
use crate::model::{score_tensors, Mode, WeaveNet};

/// Instances per eval-mode forward pass during validation.
const VALIDATION_CHUNK: usize = 125;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossKind,
    #[serde(default)]
    pub matrix_loss: MatrixLoss,
    #[serde(default)]
    pub weights: LossWeights,
    /// Training distribution. Its seed drives sample generation; `count` is unused.
    pub dataset: DatasetSpec,
    pub val_every: usize,
    /// Seed of the weight initialisation.
    pub seed: u64,
    /// Rescale gradients whose global norm exceeds this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn new(dataset: DatasetSpec, loss: LossKind, iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            batch_size: 8,
            lr: 1e-4,
            loss,
            matrix_loss: MatrixLoss::Cosine,
            weights: LossWeights::default(),
            dataset,
            val_every: 1000,
            seed,
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.val_every == 0 {
            return Err(NnError::Config("batch size and validation interval must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(NnError::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        self.weights.validate()
    }
}

/// Outcome metrics of argmax-binarised predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchMetrics {
    /// Percentage of instances whose prediction is one-to-one and stable.
    pub stable_rate: f64,
    /// Mean sex-equality cost over the stable predictions (NaN if none).
    pub mean_seq: f64,
    /// Mean balance cost over the stable predictions (NaN if none).
    pub mean_bal: f64,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: usize,
    pub lm: f64,
    pub ls: f64,
    pub lf_or_lb: f64,
    pub stable_rate: f64,
    pub mean_seq: f64,
    pub mean_bal: f64,
}

impl ValidationRecord {
    fn new(iteration: usize, losses: LossBreakdown, metrics: MatchMetrics) -> Self {
        Self {
            iteration,
            lm: losses.lm,
            ls: losses.ls,
            lf_or_lb: losses.lf_or_lb,
            stable_rate: metrics.stable_rate,
            mean_seq: metrics.mean_seq,
            mean_bal: metrics.mean_bal,
        }
    }

    pub fn metrics(&self) -> MatchMetrics {
        MatchMetrics { stable_rate: self.stable_rate, mean_seq: self.mean_seq, mean_bal: self.mean_bal }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<ValidationRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| NnError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

pub struct TrainOutcome {
    /// Weights with the best validation record.
    pub best: WeaveNet<f32>,
    pub best_record: Option<ValidationRecord>,
    pub log: TrainLog,
}

/// Argmax-binarises each row-major logit matrix and scores it against its instance.
pub fn match_metrics(instances: &[PreferenceInstance], logits: &[Vec<f64>]) -> Result<MatchMetrics> {
    if instances.is_empty() || instances.len() != logits.len() {
        return Err(NnError::Input(format!(
            "{} instances but {} logit matrices",
            instances.len(),
            logits.len()
        )));
    }
    let (mut stable, mut seq, mut bal) = (0usize, 0u64, 0u64);
    for (inst, l) in instances.iter().zip(logits) {
        let out = binarize_argmax(l, inst.n(), inst.m())?;
        if let Some(m) = out.matching.filter(|m| m.is_perfect() && is_stable(inst, m)) {
            let c = cost_report(inst, &m)?;
            stable += 1;
            seq += c.seq;
            bal += c.bal;
        }
    }
    let mean = |total: u64| if stable == 0 { f64::NAN } else { total as f64 / stable as f64 };
    Ok(MatchMetrics {
        stable_rate: 100.0 * stable as f64 / instances.len() as f64,
        mean_seq: mean(seq),
        mean_bal: mean(bal),
    })
}

/// Eval-mode losses and match metrics on a validation set.
pub fn evaluate_validation<T: Scalar>(
    model: &WeaveNet<T>,
    instances: &[PreferenceInstance],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, MatchMetrics)> {
    if instances.is_empty() {
        return Err(NnError::Input("validation set is empty".into()));
    }
    let mut logits = Vec::with_capacity(instances.len());
    let mut sum = LossBreakdown::default();
    // group by size so every forward pass sees one market size.
    let mut start = 0;
    while start < instances.len() {
        let n = instances[start].n();
        let mut end = start + 1;
        while end < instances.len() && end - start < VALIDATION_CHUNK && instances[end].n() == n {
            end += 1;
        }
        let chunk = &instances[start..end];
        let (sa, sb) = score_tensors::<T>(chunk, model.config().c_min)?;
        let mut tape = Tape::new();
        let (a, b) = model.inputs(&mut tape, &sa, &sb);
        let out = model.forward(&mut tape, a, b, Mode::Eval)?;
        let consts = ScoreConsts::new(&mut tape, &sa, &sb)?;
        let terms = composite(&mut tape, cfg.loss, cfg.matrix_loss, out.logits, &consts, &cfg.weights)?;
        let br = terms.breakdown(&tape);
        let w = chunk.len() as f64;
        sum.lm += br.lm * w;
        sum.ls += br.ls * w;
        sum.lf_or_lb += br.lf_or_lb * w;
        sum.total += br.total * w;
        let values = tape.value(out.logits);
        let per = n * instances[start].m();
        logits.extend(values.data().chunks(per).map(|c| c.iter().map(|v| v.to_f64_lossy()).collect()));
        start = end;
    }
    let k = instances.len() as f64;
    let losses = LossBreakdown { lm: sum.lm / k, ls: sum.ls / k, lf_or_lb: sum.lf_or_lb / k, total: sum.total / k };
    Ok((losses, match_metrics(instances, &logits)?))
}

/// Whether `a` is a better checkpoint than `b`: higher stable rate, then the
/// lower fairness cost of the objective (balance for `bsm`, sex equality otherwise).
fn better(a: &ValidationRecord, b: &ValidationRecord, kind: LossKind) -> bool {
    if a.stable_rate != b.stable_rate {
        return a.stable_rate > b.stable_rate;
    }
    let cost = |r: &ValidationRecord| {
        let c = if kind == LossKind::Bsm { r.mean_bal } else { r.mean_seq };
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };
    cost(a) < cost(b)
}

/// Trains from the model's current weights. `on_record` sees every
/// validation record as it is produced.
pub fn train(
    mut model: WeaveNet<f32>,
    cfg: &TrainConfig,
    validation: &[PreferenceInstance],
    mut on_record: impl FnMut(&ValidationRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if validation.is_empty() {
        return Err(NnError::Input("validation set is empty".into()));
    }
    let data = Dataset::new(cfg.dataset.clone())?;
    let mut adam = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    let mut best: Option<(ValidationRecord, ParamStore<f32>)> = None;

    let mut validate = |iteration: usize, model: &WeaveNet<f32>, log: &mut TrainLog| -> Result<()> {
        let (losses, metrics) = evaluate_validation(model, validation, cfg)?;
        let rec = ValidationRecord::new(iteration, losses, metrics);
        on_record(&rec);
        log.records.push(rec);
        if best.as_ref().is_none_or(|(b, _)| better(&rec, b, cfg.loss)) {
            best = Some((rec, model.params().clone()));
        }
        Ok(())
    };

    validate(0, &model, &mut log)?;
    for it in 0..cfg.iterations {
        let base = (it * cfg.batch_size) as u64;
        let batch: Vec<PreferenceInstance> = (0..cfg.batch_size as u64).map(|k| data.instance(base + k)).collect();
        let (sa, sb) = score_tensors::<f32>(&batch, model.config().c_min)?;
        let mut tape = Tape::new();
        let (a, b) = model.inputs(&mut tape, &sa, &sb);
        let out = model.forward(&mut tape, a, b, Mode::Train)?;
        let consts = ScoreConsts::new(&mut tape, &sa, &sb)?;
        let terms = composite(&mut tape, cfg.loss, cfg.matrix_loss, out.logits, &consts, &cfg.weights)?;
        let loss = tape.value(terms.total).item();
        if !loss.is_finite() {
            return Err(NnError::Diverged { iteration: it + 1, what: "loss".into() });
        }
        let mut grads = tape.backward(terms.total)?;
        if !grads.all_finite() {
            return Err(NnError::Diverged { iteration: it + 1, what: "gradient".into() });
        }
        if let Some(clip) = cfg.clip_norm {
            let norm = grads.param_norm();
            if norm > clip {
                grads.scale_params((clip / norm) as f32);
            }
        }
        adam.step(model.params_mut(), &grads);
        model.apply_norm_updates(&out.norm_updates);
        let done = it + 1;
        if done % cfg.val_every == 0 || done == cfg.iterations {
            if !model.params().all_finite() {
                return Err(NnError::Diverged { iteration: done, what: "weights".into() });
            }
            validate(done, &model, &mut log)?;
        }
    }

    let (best_record, store) = best.expect("validated at iteration 0");
    model.params_mut().copy_from(&store)?;
    Ok(TrainOutcome { best: model, best_record: Some(best_record), log })
}
