//! The shared mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainError, TrainingExample};
use crate::eval::DevSet;
use crate::model::Seq2SeqModel;
use crate::numeric::{Adam, AdamConfig, WarmupSchedule};
use crate::seeds::stage_seed;
use crate::text::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub total_steps: u64,
    pub batch_size: usize,
    pub lr: f32,
    pub warmup_steps: u64,
    pub seed: u64,
    pub eval_every: u64,
    /// Stop after this many evaluations without a dev Hits@10 improvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<u32>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            total_steps: 5000,
            batch_size: 32,
            lr: 1e-3,
            warmup_steps: 100,
            seed: 0,
            eval_every: 250,
            early_stop_patience: None,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.total_steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("total_steps, batch_size and eval_every must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.eval_every > self.total_steps {
            return bad("eval_every must not exceed total_steps");
        }
        if self.early_stop_patience == Some(0) {
            return bad("early_stop_patience must be positive when set");
        }
        Ok(())
    }
}

/// One recorded evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    /// Mean training loss since the previous point; at step 0 the loss of
    /// the first batch before any update.
    pub train_loss: f32,
    pub dev_hits_at_10: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub points: Vec<TracePoint>,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn final_point(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), TrainError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "train_loss", "dev_hits_at_10"])
            .map_err(|e| TrainError::Format(e.to_string()))?;
        for p in &self.points {
            let dev = p.dev_hits_at_10.map(|v| v.to_string()).unwrap_or_default();
            out.write_record([p.step.to_string(), p.train_loss.to_string(), dev])
                .map_err(|e| TrainError::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn batch_of(dataset: &[TrainingExample], idx: &[usize]) -> (Vec<Vec<TokenId>>, Vec<Vec<TokenId>>) {
    idx.iter()
        .map(|&i| (dataset[i].src.clone(), dataset[i].tgt.clone()))
        .unzip()
}

/// Trains `model` in place with shuffled mini-batches and Adam.
///
/// Every `eval_every` steps (and once before the first update) a trace point
/// is recorded, so an uninterrupted run yields
/// `total_steps / eval_every + 1` points.
pub fn train(
    model: &mut Seq2SeqModel,
    dataset: &[TrainingExample],
    config: &TrainRunConfig,
    dev: Option<&DevSet>,
) -> Result<TrainTrace, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyInput("training dataset"));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "dropout"));
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            warmup_steps: config.warmup_steps,
            schedule: WarmupSchedule::LinearThenConstant,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let batch_size = config.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;

    let dev_hits = |m: &Seq2SeqModel| -> Result<Option<f64>, TrainError> {
        dev.map(|d| d.hits_at_10(m)).transpose().map_err(TrainError::from)
    };

    let mut trace = TrainTrace::default();
    let first: Vec<usize> = order[..batch_size].to_vec();
    let (src, tgt) = batch_of(dataset, &first);
    trace.points.push(TracePoint {
        step: 0,
        train_loss: model.batch_loss(&src, &tgt, None)?,
        dev_hits_at_10: dev_hits(model)?,
    });
    let mut best = trace.points[0].dev_hits_at_10.unwrap_or(f64::NEG_INFINITY);
    let mut since_best = 0u32;
    let mut window = Vec::new();

    for step in 1..=config.total_steps {
        let mut idx = Vec::with_capacity(batch_size);
        while idx.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let (src, tgt) = batch_of(dataset, &idx);
        model.params_mut().zero_grads();
        let loss = model.accumulate_gradients(&src, &tgt, Some(&mut dropout_rng))?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, loss });
        }
        adam.step(model.params_mut())?;
        window.push(loss);

        if step % config.eval_every == 0 {
            let mean = window.iter().sum::<f32>() / window.len() as f32;
            window.clear();
            let hits = dev_hits(model)?;
            trace.points.push(TracePoint {
                step,
                train_loss: mean,
                dev_hits_at_10: hits,
            });
            if let (Some(patience), Some(h)) = (config.early_stop_patience, hits) {
                if h > best {
                    best = h;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        trace.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    model.params_mut().clear_grads();
    Ok(trace)
}
