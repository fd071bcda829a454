//! Cross-entropy training with Adam, accuracy, and gradient checking.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unigram::{BOS_ID, EOS_ID, PAD_ID};

use super::config::RegionSet;
use super::model::Forward;
use super::params::ModelParams;
use super::tape::Var;

/// One training pair: regions and the framed token sequence
/// `<bos> … <eos> <pad>*` in model ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub regions: RegionSet,
    pub tokens: Vec<usize>,
}

/// Wraps caption token ids in `<bos>`/`<eos>` and right-pads to `pad_to`.
pub fn frame_tokens(ids: &[usize], pad_to: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(pad_to.max(ids.len() + 2));
    out.push(BOS_ID);
    out.extend_from_slice(ids);
    out.push(EOS_ID);
    while out.len() < pad_to {
        out.push(PAD_ID);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` steps
    /// (0 disables decay).
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_factor: 0.8,
            decay_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.decay_every == 0 {
            self.learning_rate
        } else {
            self.learning_rate * self.decay_factor.powi((step / self.decay_every) as i32)
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: usize,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<_> = params
            .tensors()
            .iter()
            .map(|t| Array2::zeros(t.dim()))
            .collect();
        Adam {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    fn update(&mut self, params: &mut ModelParams, grads: &[Array2<f64>], cfg: &TrainConfig) {
        let lr = cfg.learning_rate_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
                });
        }
    }
}

fn split_targets(tokens: &[usize]) -> (&[usize], Vec<Option<usize>>) {
    let input = &tokens[..tokens.len().saturating_sub(1)];
    let targets = tokens
        .iter()
        .skip(1)
        .map(|&t| (t != PAD_ID).then_some(t))
        .collect();
    (input, targets)
}

fn count_targets(batch: &[Example]) -> usize {
    batch
        .iter()
        .map(|ex| ex.tokens.iter().skip(1).filter(|&&t| t != PAD_ID).count())
        .sum()
}

/// Mean token cross-entropy over the non-pad targets of the batch.
fn build_loss<'a>(batch: &[Example], params: &'a ModelParams) -> Result<(Forward<'a>, Var)> {
    let count = count_targets(batch);
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / count as f64;
    let mut f = Forward::new(params);
    let mut total: Option<Var> = None;
    for ex in batch {
        let (input, targets) = split_targets(&ex.tokens);
        if input.is_empty() {
            continue;
        }
        let memory = f.encoder(&ex.regions)?;
        let logits = f.decoder(memory, input)?;
        let loss = f.tape.cross_entropy(logits, &targets, scale);
        total = Some(match total {
            Some(t) => f.tape.add(t, loss),
            None => loss,
        });
    }
    let total = total.ok_or(Error::EmptyBatch)?;
    Ok((f, total))
}

pub fn batch_loss(batch: &[Example], params: &ModelParams) -> Result<f64> {
    let (f, loss) = build_loss(batch, params)?;
    Ok(f.tape.value(loss)[[0, 0]])
}

/// Loss and its gradient for every parameter tensor (zeros for tensors the
/// batch does not touch).
pub fn loss_and_grads(batch: &[Example], params: &ModelParams) -> Result<(f64, Vec<Array2<f64>>)> {
    let (f, loss) = build_loss(batch, params)?;
    let value = f.tape.value(loss)[[0, 0]];
    let grads = f
        .tape
        .backward(loss, params.tensors().len())
        .into_iter()
        .zip(params.tensors())
        .map(|(g, t)| g.unwrap_or_else(|| Array2::zeros(t.dim())))
        .collect();
    Ok((value, grads))
}

/// One optimizer step on the batch. Returns the loss before the update.
pub fn train_step(
    batch: &[Example],
    params: &mut ModelParams,
    cfg: &TrainConfig,
    state: &mut Adam,
) -> Result<f64> {
    let (loss, grads) = loss_and_grads(batch, params)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: state.steps(),
            detail: format!(
                "loss={loss}, batch={} examples, {} targets, params finite={}",
                batch.len(),
                count_targets(batch),
                params.is_finite()
            ),
        });
    }
    state.update(params, &grads, cfg);
    Ok(loss)
}

/// Fraction of non-pad targets predicted by the arg-max logit under teacher
/// forcing.
pub fn next_token_accuracy(batch: &[Example], params: &ModelParams) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for ex in batch {
        let (input, targets) = split_targets(&ex.tokens);
        if input.is_empty() {
            continue;
        }
        let enc = super::model::encoder_forward(&ex.regions, params)?;
        let logits = super::model::decoder_forward(&enc, input, params)?;
        for (row, target) in logits.outer_iter().zip(&targets) {
            if let Some(t) = target {
                let best = row
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
                    );
                hits += usize::from(best.0 == *t);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(hits as f64 / total as f64)
}

/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares analytic gradients with central differences on `n_coords`
/// parameter coordinates drawn uniformly with `seed`. Returns the largest
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
pub fn grad_check(
    params: &ModelParams,
    batch: &[Example],
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = loss_and_grads(batch, params)?;
    let total = params.num_params();
    let mut offsets = Vec::with_capacity(params.tensors().len());
    let mut acc = 0;
    for t in params.tensors() {
        offsets.push(acc);
        acc += t.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..n_coords {
        let flat = rng.gen_range(0..total);
        let ti = offsets.partition_point(|&o| o <= flat) - 1;
        let within = flat - offsets[ti];
        let cols = params.tensors()[ti].ncols();
        let (r, c) = (within / cols, within % cols);
        let original = params.tensors()[ti][[r, c]];

        probe.tensors_mut()[ti][[r, c]] = original + GRAD_CHECK_STEP;
        let plus = batch_loss(batch, &probe)?;
        probe.tensors_mut()[ti][[r, c]] = original - GRAD_CHECK_STEP;
        let minus = batch_loss(batch, &probe)?;
        probe.tensors_mut()[ti][[r, c]] = original;

        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let analytic = grads[ti][[r, c]];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}
