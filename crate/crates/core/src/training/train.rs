use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, loss_positions, AdamConfig, AdamState, Architecture, LossSpec, LossTarget, Model,
    Normalizer, Pair, Parameters, TrainingError,
};
use crate::mesh::Point;
use crate::scargen::Split;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without improvement of the monitored loss before stopping.
    pub patience: usize,
    pub loss: LossSpec,
    pub seed: u64,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 4,
            epochs: 200,
            patience: 20,
            loss: LossSpec::default(),
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return Err(TrainingError::InvalidConfig(
                "batch_size, epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest monitored loss.
    pub model: Model,
    pub metrics: Vec<MetricRow>,
    /// Mean batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub steps: u64,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

fn target_of(pair: &Pair, target: LossTarget) -> &[Point] {
    match target {
        LossTarget::Input => pair.input.positions(),
        LossTarget::GroundTruth => pair.ground_truth.positions(),
    }
}

fn as_divergence(e: TrainingError, step: u64) -> TrainingError {
    if e.is_numerical() {
        TrainingError::Divergence {
            step,
            what: e.to_string(),
        }
    } else {
        e
    }
}

/// Mean loss of the model over `pairs`, forward only.
pub(crate) fn mean_loss(
    model: &Model,
    pairs: &[Pair],
    spec: LossSpec,
) -> Result<f64, TrainingError> {
    let losses: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let out = model.reconstruct_positions(p.input.positions())?;
            Ok(loss_positions(&out, target_of(p, spec.target), spec.metric)?.0)
        })
        .collect::<Result<_, TrainingError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains a fresh model on `train`, monitoring `val` for early stopping
/// (or the training loss when `val` is empty).
///
/// The model is initialized from `config.seed`; batches are shuffled by a
/// separate stream of the same seed. Per-sample gradients are computed in
/// parallel and summed in batch order, so results do not depend on the
/// thread count.
pub fn train(
    train: &[Pair],
    val: &[Pair],
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    architecture.validate()?;
    let reference = &train
        .first()
        .ok_or(TrainingError::EmptySplit(Split::Train))?
        .ground_truth;
    for p in train.iter().chain(val) {
        if p.input.faces() != reference.faces() || p.ground_truth.faces() != reference.faces() {
            return Err(TrainingError::TopologyMismatch(format!(
                "{} does not share the training face list",
                p.name
            )));
        }
    }
    let truths: Vec<&[Point]> = train.iter().map(|p| p.ground_truth.positions()).collect();
    let normalizer = Normalizer::fit(&truths)?;
    let mut model = Model::new(architecture, reference, normalizer, config.seed)?;
    info!(
        "model: levels {:?}, {} parameters",
        model.hierarchy.level_sizes(),
        model.parameter_count()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(model.parameter_count());
    let mut metrics = Vec::new();
    let mut step_losses = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut stale = 0;
    let mut stopped_early = false;
    let spec = config.loss;
    let cap = config.max_steps.unwrap_or(u64::MAX);

    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut epoch_sum, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            if state.step >= cap {
                break;
            }
            let step = state.step + 1;
            let results: Vec<(f64, Parameters)> = batch
                .par_iter()
                .map(|&i| {
                    let p = &train[i];
                    model.loss_and_grad(p.input.positions(), target_of(p, spec.target), spec.metric)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| as_divergence(e, step))?;
            let mut grad = model.params.zeros_like();
            let mut batch_sum = 0.0;
            for (l, g) in &results {
                batch_sum += l;
                grad.add_assign(g);
            }
            grad.scale(1.0 / batch.len() as f64);
            let mut flat = model.params.to_flat();
            adam_step(&mut flat, &grad.to_flat(), &mut state, &config.adam)?;
            model.params.set_flat(&flat);
            step_losses.push(batch_sum / batch.len() as f64);
            epoch_sum += batch_sum;
            epoch_count += batch.len();
        }
        if epoch_count == 0 {
            break;
        }

        let train_loss = epoch_sum / epoch_count as f64;
        metrics.push(MetricRow {
            epoch,
            split: Split::Train,
            loss: train_loss,
        });
        let monitored = if val.is_empty() {
            train_loss
        } else {
            let v = mean_loss(&model, val, spec).map_err(|e| as_divergence(e, state.step))?;
            metrics.push(MetricRow {
                epoch,
                split: Split::Val,
                loss: v,
            });
            v
        };
        debug!("epoch {epoch}: train {train_loss:.6e}, monitored {monitored:.6e}");
        if !monitored.is_finite() {
            return Err(TrainingError::Divergence {
                step: state.step,
                what: "non-finite loss".into(),
            });
        }
        if monitored < best.0 {
            best = (monitored, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                info!("early stop after epoch {epoch}");
                stopped_early = true;
                break 'epochs;
            }
        }
    }

    let (best_loss, best_epoch, best_params) = best;
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        metrics,
        step_losses,
        steps: state.step,
        best_epoch,
        best_loss,
        stopped_early,
    })
}

/// Appends `epoch,split,loss` lines, writing that header first when the
/// file is new or empty.
pub fn append_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<(), TrainingError> {
    let path = path.as_ref();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut text = String::new();
    if file.metadata()?.len() == 0 {
        text.push_str("epoch,split,loss\n");
    }
    for r in rows {
        text.push_str(&format!("{},{},{}\n", r.epoch, r.split, r.loss));
    }
    file.write_all(text.as_bytes())?;
    Ok(())
}
