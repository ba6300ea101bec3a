use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::history::EpochRecord;
use super::loss::evaluate_accuracy;
use super::model::{ModelParams, TrainingData};
use super::objective::{backward_full, forward_full, ForwardPass};
use super::optim::{adam_step, AdamState};
use crate::error::{Error, Result};

/// What an observer sees after each epoch.
pub struct EpochView<'a> {
    pub record: &'a EpochRecord,
    /// The dropout pass whose gradient was applied.
    pub train_pass: &'a ForwardPass,
    /// Evaluation pass after the update.
    pub eval_pass: &'a ForwardPass,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy (the initial ones if no epoch ran).
    pub best: ModelParams,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.history[e - 1])
    }
}

/// Stream for dropout masks, separate from the initialisation stream.
const DROPOUT_STREAM: u64 = 1;

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(_) => Error::Diverged { epoch },
        other => other,
    }
}

/// Full-batch Adam training with early stopping on strict validation improvement.
pub fn train(
    initial: ModelParams,
    data: &TrainingData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochView<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = initial.clone();
    let mut best = initial;
    let mut best_epoch = None;
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(DROPOUT_STREAM);

    for epoch in 1..=cfg.max_epochs {
        let on_err = diverged(epoch);
        let pass = forward_full(&params, data, cfg, Some(&mut rng)).map_err(&on_err)?;
        if !pass.loss.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let grads = backward_full(&params, data, cfg, &pass).map_err(&on_err)?;
        adam_step(&mut params, &grads, &mut state, cfg.lr).map_err(&on_err)?;
        let eval = forward_full(&params, data, cfg, None).map_err(&on_err)?;
        let acc = |nodes: &[usize]| evaluate_accuracy(&eval.probs, &data.labels, nodes);
        let record = EpochRecord {
            epoch,
            l0: pass.loss.l0,
            la: pass.loss.la,
            lb: pass.loss.lb,
            total: pass.loss.total,
            train_acc: acc(&data.splits.train),
            val_acc: acc(&data.splits.val),
            test_acc: acc(&data.splits.test),
        };
        observer(&EpochView {
            record: &record,
            train_pass: &pass,
            eval_pass: &eval,
        })?;
        history.push(record);
        if record.val_acc > best_val {
            best_val = record.val_acc;
            best = params.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log::debug!("early stop at epoch {epoch}, best epoch {best_epoch:?}");
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}
