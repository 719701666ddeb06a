use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ap_loss, apc_loss, map_loss, LossResult, RecallLoss};
use crate::memory::Fifo;
use crate::rank::{Lambda, Margin};
use crate::weights::WeightScheme;

use super::dataset::SynthDataset;
use super::eval::{evaluate, Metrics};
use super::model::EmbeddingModel;
use super::optim::{Adam, AdamConfig};
use super::similarity::{batch_similarities, embedding_gradient, MemoryItem, QueryScores};

/// Rank-based training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    RecallLog,
    RecallLogLog,
    Ap,
    /// `(2·L_mAP + L_APC) / 3`: per-query AP loss averaged over queries,
    /// plus the AP loss of all queries concatenated.
    MapPlusApc,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::RecallLog => "recall-log",
            LossKind::RecallLogLog => "recall-loglog",
            LossKind::Ap => "ap",
            LossKind::MapPlusApc => "map-apc",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "recall-log" => Ok(LossKind::RecallLog),
            "recall-loglog" => Ok(LossKind::RecallLogLog),
            "ap" => Ok(LossKind::Ap),
            "map-apc" | "map-plus-apc" => Ok(LossKind::MapPlusApc),
            other => Err(Error::InvalidInput(format!("unknown loss kind '{other}'"))),
        }
    }
}

/// Weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// i.i.d. Gaussian with variance `1/d`.
    Gaussian,
    /// Rank-one `a bᵀ` plus Gaussian noise of the given scale: every
    /// embedding starts within `O(scale)` of `±b`, so similarities are nearly tied.
    NearTie { noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub alpha: f64,
    pub lambda: f64,
    /// Number of past batches kept in the score memory (`τ`).
    pub memory_batches: usize,
    pub batch_size: usize,
    pub samples_per_class: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub embed_dim: usize,
    pub train_per_class: usize,
    pub init: Init,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::RecallLog,
            alpha: 0.05,
            lambda: 0.5,
            memory_batches: 3,
            batch_size: 64,
            samples_per_class: 4,
            steps: 300,
            eval_every: 25,
            embed_dim: 16,
            train_per_class: 16,
            init: Init::Gaussian,
            optimizer: AdamConfig {
                learning_rate: 0.003,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        Margin::new(self.alpha)?;
        Lambda::new(self.lambda)?;
        let bad = |msg: &str| Err(Error::InvalidInput(msg.into()));
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be >= 2");
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(self.samples_per_class) {
            return bad("batch_size must be a multiple of samples_per_class and >= 2");
        }
        if self.eval_every == 0 || self.embed_dim == 0 {
            return bad("eval_every and embed_dim must be positive");
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2))
            || !(o.epsilon > 0.0 && o.weight_decay >= 0.0 && o.lr_drop_factor > 0.0)
        {
            return bad("optimizer hyperparameters out of range");
        }
        Ok(())
    }
}

/// One evaluation row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub recall_at_1: f64,
    pub recall_at_4: f64,
    pub map: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    pub model: EmbeddingModel,
}

impl TrainReport {
    pub fn initial(&self) -> &HistoryRow {
        self.history.first().expect("history has the step-0 row")
    }

    pub fn last(&self) -> &HistoryRow {
        self.history.last().expect("history has the step-0 row")
    }

    /// Row with the highest R@1 (earliest on ties).
    pub fn best(&self) -> &HistoryRow {
        self.history
            .iter()
            .reduce(|best, row| {
                if row.recall_at_1 > best.recall_at_1 {
                    row
                } else {
                    best
                }
            })
            .expect("history has the step-0 row")
    }
}

/// Loss value and per-query score gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub value: f64,
    pub score_grads: Vec<Vec<f64>>,
}

/// Averaged per-query loss of a batch. Queries without a positive contribute
/// nothing (their gradient row is zero).
pub fn batch_loss(
    queries: &[QueryScores],
    kind: LossKind,
    margin: Margin,
    lambda: Lambda,
) -> Result<BatchLoss> {
    let included: Vec<usize> = (0..queries.len())
        .filter(|&q| queries[q].has_positive())
        .collect();
    if included.is_empty() {
        return Err(Error::UndefinedMetric(
            "no query in the batch has a positive".into(),
        ));
    }
    let mut score_grads: Vec<Vec<f64>> =
        queries.iter().map(|q| vec![0.0; q.scores.len()]).collect();

    let per_query = |f: &dyn Fn(&QueryScores) -> Result<LossResult>,
                     grads: &mut Vec<Vec<f64>>|
     -> Result<f64> {
        let scale = 1.0 / included.len() as f64;
        let mut value = 0.0;
        for &q in &included {
            let res = f(&queries[q])?;
            value += res.value * scale;
            for (dst, g) in grads[q].iter_mut().zip(res.grad) {
                *dst += g * scale;
            }
        }
        Ok(value)
    };

    let value = match kind {
        LossKind::RecallLog | LossKind::RecallLogLog => {
            let scheme = if kind == LossKind::RecallLog {
                WeightScheme::Log
            } else {
                WeightScheme::LogLog
            };
            let cfg = RecallLoss::new(scheme, margin, lambda);
            per_query(&|q| cfg.evaluate(&q.scores, &q.labels), &mut score_grads)?
        }
        LossKind::Ap => per_query(
            &|q| ap_loss(&q.scores, &q.labels, margin, lambda),
            &mut score_grads,
        )?,
        LossKind::MapPlusApc => {
            let scores: Vec<Vec<f64>> = queries.iter().map(|q| q.scores.clone()).collect();
            let labels: Vec<Vec<bool>> = queries.iter().map(|q| q.labels.clone()).collect();
            let map = map_loss(&scores, &labels, margin, lambda)?;
            let apc = apc_loss(&scores, &labels, margin, lambda)?;
            let width = scores[0].len();
            for (q, dst) in score_grads.iter_mut().enumerate() {
                let span = q * width..(q + 1) * width;
                for ((d, m), a) in dst
                    .iter_mut()
                    .zip(&map.grad[span.clone()])
                    .zip(&apc.grad[span])
                {
                    *d = (2.0 * m + a) / 3.0;
                }
            }
            (2.0 * map.value + apc.value) / 3.0
        }
    };
    Ok(BatchLoss { value, score_grads })
}

fn initial_model(config: &TrainConfig, input_dim: usize) -> Result<EmbeddingModel> {
    let seed = config.seed ^ 0x6d6f_64656c;
    match config.init {
        Init::Gaussian => EmbeddingModel::random(input_dim, config.embed_dim, seed),
        Init::NearTie { noise } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            let a = draw(input_dim);
            let b = draw(config.embed_dim);
            let jitter = draw(input_dim * config.embed_dim);
            let scale = 1.0 / (input_dim as f64).sqrt();
            let weights = (0..input_dim * config.embed_dim)
                .map(|k| {
                    let (i, j) = (k / config.embed_dim, k % config.embed_dim);
                    scale * (a[i] * b[j] + noise * jitter[k])
                })
                .collect();
            EmbeddingModel::from_weights(input_dim, config.embed_dim, weights)
        }
    }
}

/// Class-balanced batch: `batch_size / samples_per_class` distinct classes,
/// `samples_per_class` members of each.
fn sample_batch(
    rng: &mut ChaCha8Rng,
    members: &[Vec<usize>],
    config: &TrainConfig,
) -> Result<Vec<usize>> {
    let classes = config.batch_size / config.samples_per_class;
    let eligible: Vec<usize> = (0..members.len())
        .filter(|&c| members[c].len() >= config.samples_per_class)
        .collect();
    if eligible.len() < classes {
        return Err(Error::InvalidInput(format!(
            "batch needs {classes} classes with >= {} members, dataset has {}",
            config.samples_per_class,
            eligible.len()
        )));
    }
    let mut picked = Vec::with_capacity(config.batch_size);
    for ci in index::sample(rng, eligible.len(), classes) {
        let class = &members[eligible[ci]];
        for i in index::sample(rng, class.len(), config.samples_per_class) {
            picked.push(class[i]);
        }
    }
    picked.shuffle(rng);
    Ok(picked)
}

const EVAL_KS: [usize; 2] = [1, 4];

fn row(step: usize, loss: f64, m: &Metrics) -> HistoryRow {
    HistoryRow {
        step,
        loss,
        recall_at_1: m.recall_at(1).unwrap_or(f64::NAN),
        recall_at_4: m.recall_at(4).unwrap_or(f64::NAN),
        map: m.map,
    }
}

/// Trains a linear embedding with the configured rank loss and reports
/// held-out metrics every `eval_every` steps (plus step 0 and the last step).
///
/// Deterministic for a fixed config and dataset.
pub fn train(config: &TrainConfig, dataset: &SynthDataset) -> Result<TrainReport> {
    config.validate()?;
    let margin = Margin::new(config.alpha)?;
    let lambda = Lambda::new(config.lambda)?;
    let (train_set, eval_set) = dataset.split(config.train_per_class)?;
    let members = train_set.class_members();

    let mut model = initial_model(config, dataset.input_dim())?;
    let mut optimizer = Adam::new(config.optimizer.clone(), model.weights().len());
    let mut memory: Fifo<Vec<MemoryItem>> = Fifo::new(config.memory_batches);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::new();

    for step in 0..config.steps {
        let batch = sample_batch(&mut rng, &members, config)?;
        let inputs: Vec<Vec<f64>> = batch.iter().map(|&i| train_set.points[i].clone()).collect();
        let classes: Vec<usize> = batch.iter().map(|&i| train_set.class_ids[i]).collect();

        let emb = model.forward(&inputs)?;
        let queries = batch_similarities(&emb.unit, &classes, &memory)?;
        let loss = batch_loss(&queries, config.loss, margin, lambda)?;
        if !loss.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {} at step {step}",
                loss.value
            )));
        }
        if step == 0 {
            history.push(row(0, loss.value, &evaluate(&model, &eval_set, &EVAL_KS)?));
        }

        let grad_unit = embedding_gradient(&emb.unit, &queries, &loss.score_grads)?;
        let grad_w = model.backward(&inputs, &emb, &grad_unit);
        if grad_w.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("weight gradient at step {step}")));
        }
        optimizer.step(model.weights_mut(), &grad_w);

        memory.push(
            emb.unit
                .into_iter()
                .zip(classes)
                .map(|(unit, class)| MemoryItem { unit, class })
                .collect(),
        );

        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            history.push(row(
                done,
                loss.value,
                &evaluate(&model, &eval_set, &EVAL_KS)?,
            ));
        }
    }
    if history.is_empty() {
        history.push(row(0, f64::NAN, &evaluate(&model, &eval_set, &EVAL_KS)?));
    }
    Ok(TrainReport { history, model })
}

/// The same run with margin 0 and with margin `alpha`; everything else,
/// including the seed and initialization, is shared.
#[derive(Debug, Clone)]
pub struct MarginAblation {
    pub without_margin: TrainReport,
    pub with_margin: TrainReport,
}

pub fn margin_ablation(
    config: &TrainConfig,
    dataset: &SynthDataset,
    alpha: f64,
) -> Result<MarginAblation> {
    let without_margin = train(
        &TrainConfig {
            alpha: 0.0,
            ..config.clone()
        },
        dataset,
    )?;
    let with_margin = train(
        &TrainConfig {
            alpha,
            ..config.clone()
        },
        dataset,
    )?;
    Ok(MarginAblation {
        without_margin,
        with_margin,
    })
}
