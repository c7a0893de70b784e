use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{encode_training_example, Stream};
use super::{adamw_step, save_checkpoint, AdamState, Checkpoint, Dataset, OptimizerConfig, TrainError};
use crate::encoding::EncodedExample;
use crate::model::{Grads, LossTerms, ModelConfig, ModelError, Network, Params, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: u64,
    pub learning_rate: f64,
    pub loss: LossTerms,
}

type GradHook = Box<dyn FnMut(u64, &mut Grads)>;

/// Mini-batch training over an in-memory dataset.
pub struct Trainer<'d> {
    data: &'d Dataset,
    params: Params,
    adam: AdamState,
    opt: OptimizerConfig,
    stream: Stream,
    step: u64,
    frozen: Vec<String>,
    hook: Option<GradHook>,
}

impl<'d> Trainer<'d> {
    /// Fresh run. Parameters whose path contains any of `frozen` are never updated.
    pub fn new(
        model: &ModelConfig,
        opt: OptimizerConfig,
        data: &'d Dataset,
        frozen: Vec<String>,
    ) -> Result<Trainer<'d>, TrainError> {
        model.validate().map_err(TrainError::Config)?;
        let params = Params::init(model, opt.seed);
        let ckpt = Checkpoint {
            adam: AdamState::new(&params),
            params,
            cursor: Default::default(),
            step: 0,
            seed: opt.seed,
            optimizer: opt,
            frozen,
        };
        Trainer::from_checkpoint(ckpt, data)
    }

    pub fn from_checkpoint(ckpt: Checkpoint, data: &'d Dataset) -> Result<Trainer<'d>, TrainError> {
        ckpt.optimizer.validate().map_err(TrainError::Config)?;
        if data.is_empty() {
            return Err(TrainError::Data("training set is empty".into()));
        }
        let stream = Stream::new(data, ckpt.seed, ckpt.optimizer.shuffle_buffer, ckpt.cursor);
        Ok(Trainer {
            data,
            params: ckpt.params,
            adam: ckpt.adam,
            opt: ckpt.optimizer,
            stream,
            step: ckpt.step,
            frozen: ckpt.frozen,
            hook: None,
        })
    }

    /// Installs a hook that may rewrite each step's gradients before the update.
    pub fn set_grad_hook(&mut self, hook: impl FnMut(u64, &mut Grads) + 'static) {
        self.hook = Some(Box::new(hook));
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: self.adam.clone(),
            optimizer: self.opt.clone(),
            cursor: self.stream.cursor(),
            step: self.step,
            seed: self.opt.seed,
            frozen: self.frozen.clone(),
        }
    }

    /// One optimizer step. On a non-finite loss or gradient the state is
    /// left as it was before the step.
    pub fn step(&mut self) -> Result<StepLog, TrainError> {
        let stream_before = self.stream.cursor();
        let picks = self.stream.next_batch(self.data, self.opt.batch_size);
        let batch = picks
            .iter()
            .map(|&at| encode_training_example(self.data.get(at)))
            .collect::<Result<Vec<_>, _>>()?;
        let net = Network::new(&self.params);
        let step = self.step + 1;
        let (loss, mut grads) = match net.loss_and_grads(&self.params, &batch) {
            Ok(r) => r,
            Err(ModelError::NonFiniteGradient(path)) => {
                self.stream = Stream::new(self.data, self.opt.seed, self.opt.shuffle_buffer, stream_before);
                return Err(TrainError::NonFinite {
                    step,
                    what: format!("gradient of {path}"),
                    last_good: None,
                });
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(hook) = self.hook.as_mut() {
            hook(step, &mut grads);
        }
        let bad = if !loss.total.is_finite() {
            Some("loss".to_string())
        } else {
            grads
                .first_non_finite()
                .map(|i| format!("gradient of {}", self.params.tensors()[i].name))
        };
        if let Some(what) = bad {
            self.stream = Stream::new(self.data, self.opt.seed, self.opt.shuffle_buffer, stream_before);
            return Err(TrainError::NonFinite {
                step,
                what,
                last_good: None,
            });
        }
        let lr = self.opt.learning_rate_at(self.step);
        let frozen = &self.frozen;
        adamw_step(&mut self.params, &grads, &mut self.adam, &self.opt, lr, |name| {
            frozen.iter().any(|f| name.contains(f.as_str()))
        });
        self.step = step;
        Ok(StepLog {
            step,
            epoch: self.stream.cursor().epoch,
            learning_rate: lr,
            loss,
        })
    }

    /// Runs up to `steps` steps, calling `on_step` after each; it returns
    /// `false` to stop early. When a step turns non-finite and `out` is
    /// given, the last good state is saved under `out/last-good`.
    pub fn run(
        &mut self,
        steps: u64,
        out: Option<&Path>,
        mut on_step: impl FnMut(&Trainer<'d>, &StepLog) -> bool,
    ) -> Result<Vec<StepLog>, TrainError> {
        let mut log = Vec::new();
        for _ in 0..steps {
            match self.step() {
                Ok(entry) => {
                    log.push(entry);
                    if !on_step(self, &entry) {
                        break;
                    }
                }
                Err(TrainError::NonFinite { step, what, .. }) => {
                    let last_good = match out {
                        Some(dir) => {
                            let path: PathBuf = dir.join("last-good");
                            save_checkpoint(&path, &self.checkpoint())?;
                            Some(path)
                        }
                        None => None,
                    };
                    return Err(TrainError::NonFinite { step, what, last_good });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(log)
    }
}

/// Trains a fresh model for `opt.max_steps` steps.
pub fn train(data: &Dataset, model: &ModelConfig, opt: &OptimizerConfig) -> Result<(Params, Vec<StepLog>), TrainError> {
    let mut trainer = Trainer::new(model, opt.clone(), data, Vec::new())?;
    let log = trainer.run(opt.max_steps, None, |_, _| true)?;
    Ok((trainer.params, log))
}

/// Fraction of examples whose labelled move is the model's most likely
/// legal move.
pub fn top1_accuracy(params: &Params, examples: &[EncodedExample]) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let net = Network::new(params);
    let mut hits = 0usize;
    for chunk in examples.chunks(256) {
        let samples: Vec<Sample<'_>> = chunk
            .iter()
            .map(|e| Sample {
                input: &e.input,
                active: e.active,
                opponent: e.opponent,
            })
            .collect();
        for (out, ex) in net.forward_batch(&samples)?.iter().zip(chunk) {
            let best = ex
                .labels
                .aux
                .legal_moves
                .iter()
                .copied()
                .reduce(|a, b| {
                    if out.policy_logits[b.index()] > out.policy_logits[a.index()] {
                        b
                    } else {
                        a
                    }
                })
                .expect("legal moves");
            if best == ex.labels.policy {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Encodes every example in the dataset.
pub fn encode_dataset(data: &Dataset) -> Result<Vec<EncodedExample>, TrainError> {
    data.shards.iter().flatten().map(encode_training_example).collect()
}
