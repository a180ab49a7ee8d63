//! Optimization: corrupted-attribute sampling, Adadelta, and the epoch loop
//! with validation-based early stopping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{WordEmbeddingTable, WordIds};
use crate::kb::{Dataset, PathSet};
use crate::model::{
    rank_attributes_for_entity, ModelCheckpoint, ModelConfig, ModelError, ModelGrads, TrainingMeta, TransAtt,
    FORMAT_VERSION,
};
use crate::numerics::{Param, SplitMix64};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("the training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no corrupted attribute available: every attribute is excluded")]
    NoNegative,
    #[error("non-finite gradient in `{param}` at index {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("training diverged at epoch {epoch}: mean loss {mean_loss}")]
    Divergence { epoch: usize, mean_loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minimum number of positive tuples per update. Batches are filled with
    /// whole entities, so a batch may exceed this.
    pub batch_size: usize,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub negatives_per_positive: usize,
    pub shuffle: bool,
    /// Epochs without a validation Hits@1 improvement before stopping.
    pub early_stop_patience: usize,
    /// Fraction of entities held out for validation.
    pub validation_fraction: f64,
    /// Draw corrupted attributes from all attributes except the positive,
    /// instead of excluding every attribute of the entity.
    pub allow_gold_negatives: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            negatives_per_positive: 1,
            shuffle: true,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            allow_gold_negatives: false,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.negatives_per_positive == 0 {
            return fail("negatives_per_positive must be at least 1".into());
        }
        if !(self.adadelta_rho > 0.0 && self.adadelta_rho < 1.0) {
            return fail(format!("adadelta_rho must lie in (0, 1), got {}", self.adadelta_rho));
        }
        if !(self.adadelta_eps > 0.0 && self.adadelta_eps.is_finite()) {
            return fail(format!("adadelta_eps must be positive, got {}", self.adadelta_eps));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

/// Uniform draw from `0..num_attributes` minus `excluded`, using exactly one
/// random number.
pub fn sample_corrupted(
    num_attributes: usize,
    excluded: &BTreeSet<usize>,
    rng: &mut SplitMix64,
) -> Result<usize, TrainError> {
    let blocked = excluded.range(..num_attributes).count();
    let available = num_attributes - blocked;
    if available == 0 {
        return Err(TrainError::NoNegative);
    }
    let mut skip = rng.below(available);
    for a in 0..num_attributes {
        if excluded.contains(&a) {
            continue;
        }
        if skip == 0 {
            return Ok(a);
        }
        skip -= 1;
    }
    unreachable!("available candidates were counted above")
}

/// Adadelta update of `value` in place. Every gradient is checked before any
/// scalar is touched, so a failing call leaves the tensor unchanged.
pub fn adadelta_update(
    name: &str,
    value: &mut [f64],
    grad: &[f64],
    acc: &mut Accumulators,
    rho: f64,
    eps: f64,
) -> Result<(), TrainError> {
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { param: name.into(), index });
    }
    let it = value.iter_mut().zip(grad).zip(acc.grad_sq.iter_mut().zip(acc.delta_sq.iter_mut()));
    for ((x, g), (eg, ed)) in it {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let dx = -(libm::sqrt(*ed + eps) / libm::sqrt(*eg + eps)) * g;
        *ed = rho * *ed + (1.0 - rho) * dx * dx;
        *x += dx;
    }
    Ok(())
}

/// The update for a zero gradient: the value stays put and both running
/// averages decay by `rho`. Bitwise identical to [`adadelta_update`] with
/// `g = 0`.
fn adadelta_decay(acc: &mut Accumulators, range: core::ops::Range<usize>, rho: f64) {
    for v in &mut acc.grad_sq[range.clone()] {
        *v *= rho;
    }
    for v in &mut acc.delta_sq[range] {
        *v *= rho;
    }
}

/// One Adadelta step on a standalone parameter; the gradient is zeroed.
pub fn adadelta_step(name: &str, param: &mut Param, rho: f64, eps: f64) -> Result<(), TrainError> {
    let mut acc = Accumulators {
        grad_sq: core::mem::take(&mut param.acc_grad_sq),
        delta_sq: core::mem::take(&mut param.acc_delta_sq),
    };
    let res = adadelta_update(name, &mut param.value, &param.grad, &mut acc, rho, eps);
    param.acc_grad_sq = acc.grad_sq;
    param.acc_delta_sq = acc.delta_sq;
    res?;
    param.grad.iter_mut().for_each(|g| *g = 0.0);
    Ok(())
}

/// Running averages E[g²] and E[Δx²] for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub grad_sq: Vec<f64>,
    pub delta_sq: Vec<f64>,
}

impl Accumulators {
    pub fn zeros(n: usize) -> Self {
        Accumulators { grad_sq: vec![0.0; n], delta_sq: vec![0.0; n] }
    }

    fn update_rows(
        &mut self,
        name: &str,
        value: &mut [f64],
        cols: usize,
        rows: Option<&BTreeMap<usize, Vec<f64>>>,
        rho: f64,
        eps: f64,
    ) -> Result<(), TrainError> {
        let n_rows = value.len() / cols.max(1);
        for r in 0..n_rows {
            let range = r * cols..(r + 1) * cols;
            match rows.and_then(|m| m.get(&r)) {
                Some(g) => {
                    let mut acc = Accumulators {
                        grad_sq: self.grad_sq[range.clone()].to_vec(),
                        delta_sq: self.delta_sq[range.clone()].to_vec(),
                    };
                    adadelta_update(name, &mut value[range.clone()], g, &mut acc, rho, eps)?;
                    self.grad_sq[range.clone()].copy_from_slice(&acc.grad_sq);
                    self.delta_sq[range].copy_from_slice(&acc.delta_sq);
                }
                None => adadelta_decay(self, range, rho),
            }
        }
        Ok(())
    }
}

/// Adadelta state for every trainable tensor of a [`TransAtt`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lstm: Vec<Accumulators>,
    /// `None` when the word table is frozen.
    pub words: Option<Accumulators>,
    pub attr_embeddings: Accumulators,
    pub mappings: Vec<Accumulators>,
    pub bilinear: Accumulators,
}

impl OptimizerState {
    pub fn for_model(model: &TransAtt) -> Self {
        let mut lstm = Vec::new();
        model.encoder.lstm.for_each(|_, _, s| lstm.push(Accumulators::zeros(s.len())));
        let table = &model.encoder.table;
        OptimizerState {
            lstm,
            words: table.trainable.then(|| Accumulators::zeros(table.vectors.as_slice().len())),
            attr_embeddings: Accumulators::zeros(model.attributes.embeddings.as_slice().len()),
            mappings: model
                .attributes
                .mappings
                .iter()
                .map(|m| Accumulators::zeros(m.as_slice().len()))
                .collect(),
            bilinear: Accumulators::zeros(model.attention.bilinear.as_slice().len()),
        }
    }

    /// Apply one Adadelta step to every trainable tensor. Tensors or rows
    /// absent from the sparse gradients take the zero-gradient step.
    pub fn apply(&mut self, model: &mut TransAtt, grads: &ModelGrads, rho: f64, eps: f64) -> Result<(), TrainError> {
        let mut values: Vec<(String, &mut [f64])> = Vec::new();
        model.encoder.lstm.for_each_mut(|name, _, s| values.push((name, s)));
        let mut lstm_grads: Vec<&[f64]> = Vec::new();
        grads.encoder.lstm.for_each(|_, _, s| lstm_grads.push(s));
        for (((name, v), g), acc) in values.into_iter().zip(lstm_grads).zip(&mut self.lstm) {
            adadelta_update(&name, v, g, acc, rho, eps)?;
        }

        if let Some(acc) = self.words.as_mut() {
            let table = &mut model.encoder.table;
            let cols = table.dim();
            acc.update_rows("words", table.vectors.as_mut_slice(), cols, grads.encoder.words.as_ref(), rho, eps)?;
        }

        let attrs = &mut model.attributes;
        let cols = attrs.embeddings.cols();
        self.attr_embeddings.update_rows(
            "attr.embeddings",
            attrs.embeddings.as_mut_slice(),
            cols,
            Some(&grads.head.attr_rows),
            rho,
            eps,
        )?;
        for (i, (m, acc)) in attrs.mappings.iter_mut().zip(&mut self.mappings).enumerate() {
            match grads.head.mappings.get(&i) {
                Some(g) => adadelta_update(&format!("attr.mapping.{i}"), m.as_mut_slice(), g.as_slice(), acc, rho, eps)?,
                None => adadelta_decay(acc, 0..m.as_slice().len(), rho),
            }
        }
        adadelta_update(
            "attention.bilinear",
            model.attention.bilinear.as_mut_slice(),
            grads.head.bilinear.as_slice(),
            &mut self.bilinear,
            rho,
            eps,
        )
    }
}

/// Maps a closure over a slice, returning results in input order.
///
/// Implementations may run items concurrently; the trainer reduces results
/// in index order, so any executor yields bitwise-identical models.
pub trait Executor {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

/// Progress after one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_hits1: Option<f64>,
}

/// Everything the optimizer carried besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub optimizer: OptimizerState,
    pub rng: SplitMix64,
    pub epoch: usize,
    /// Mean loss per completed epoch.
    pub loss_history: Vec<f64>,
    pub val_history: Vec<f64>,
    /// Best validation Hits@1 and the epoch it was reached.
    pub best: Option<(f64, usize)>,
    pub stopped_early: bool,
    pub train_entities: Vec<String>,
    pub validation_entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub state: TrainState,
}

/// All positive tuples of one entity.
struct EntityExample {
    paths: Arc<PathSet>,
    words: Vec<WordIds>,
    positives: Vec<usize>,
    gold: BTreeSet<usize>,
}

struct Job<'a> {
    example: &'a EntityExample,
    pairs: Vec<(usize, usize)>,
}

/// Class words occurring in the dataset's paths.
pub fn dataset_vocabulary(dataset: &Dataset) -> BTreeSet<String> {
    dataset
        .tuples
        .iter()
        .flat_map(|t| t.path_set.paths.iter())
        .flat_map(|p| p.classes().iter().cloned())
        .collect()
}

fn group_by_entity(dataset: &Dataset, model: &TransAtt) -> Result<Vec<EntityExample>, TrainError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_entity: BTreeMap<String, EntityExample> = BTreeMap::new();
    for t in &dataset.tuples {
        let attr = model.attributes.index_of(&t.attribute)?;
        let entry = by_entity.entry(t.path_set.entity.clone()).or_insert_with(|| {
            order.push(t.path_set.entity.clone());
            EntityExample {
                paths: t.path_set.clone(),
                words: t.path_set.paths.iter().map(|p| model.encoder.resolve(p)).collect(),
                positives: Vec::new(),
                gold: BTreeSet::new(),
            }
        });
        if entry.gold.insert(attr) {
            entry.positives.push(attr);
        }
    }
    Ok(order.into_iter().filter_map(|e| by_entity.remove(&e)).collect())
}

fn validation_hits1<E: Executor>(model: &TransAtt, val: &[&EntityExample], exec: &E) -> Result<f64, TrainError> {
    let none = BTreeSet::new();
    let hits = exec.map(val, |ex| {
        rank_attributes_for_entity(&ex.paths, model, 1, &none).map(|r| ex.gold.contains(&r.ranking[0].attribute))
    });
    let mut count = 0usize;
    for h in hits {
        count += usize::from(h?);
    }
    Ok(count as f64 / val.len() as f64)
}

/// Train a fresh model on `dataset`.
///
/// The attribute space is the dataset's retained attribute set; without a
/// pretrained table the vocabulary is the set of class words in the dataset.
/// `on_epoch` sees every completed epoch together with the model as it
/// stands after that epoch.
pub fn train<E: Executor>(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    pretrained: Option<WordEmbeddingTable>,
    exec: &E,
    mut on_epoch: impl FnMut(&EpochRecord, &TransAtt),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    model_config.validate()?;
    if dataset.tuples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let attributes: Vec<String> = dataset.attributes.iter().cloned().collect();
    let mut model = TransAtt::init(model_config.clone(), dataset_vocabulary(dataset), attributes, pretrained)?;
    let examples = group_by_entity(dataset, &model)?;
    let mut rng = SplitMix64::new(config.seed);

    let mut ids: Vec<usize> = (0..examples.len()).collect();
    let mut n_val = 0;
    if config.validation_fraction > 0.0 && examples.len() > 1 {
        rng.shuffle(&mut ids);
        n_val = libm::round(config.validation_fraction * examples.len() as f64) as usize;
        n_val = n_val.clamp(1, examples.len() - 1);
    }
    let (val_ids, train_ids) = ids.split_at(n_val);
    let mut val_ids = val_ids.to_vec();
    let mut train_ids = train_ids.to_vec();
    val_ids.sort_unstable();
    train_ids.sort_unstable();
    let val: Vec<&EntityExample> = val_ids.iter().map(|i| &examples[*i]).collect();

    let num_attrs = model.attributes.len();
    let mut state = TrainState {
        optimizer: OptimizerState::for_model(&model),
        rng,
        epoch: 0,
        loss_history: Vec::new(),
        val_history: Vec::new(),
        best: None,
        stopped_early: false,
        train_entities: train_ids.iter().map(|i| examples[*i].paths.entity.clone()).collect(),
        validation_entities: val.iter().map(|e| e.paths.entity.clone()).collect(),
    };
    let mut best_model: Option<TransAtt> = None;
    let mut since_improvement = 0;

    for epoch in 1..=config.epochs {
        let mut order = train_ids.clone();
        if config.shuffle {
            state.rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut pair_count = 0usize;
        let mut start = 0;
        while start < order.len() {
            let mut jobs: Vec<Job> = Vec::new();
            let mut tuples = 0;
            while start < order.len() && tuples < config.batch_size {
                let example = &examples[order[start]];
                let mut pairs = Vec::with_capacity(example.positives.len() * config.negatives_per_positive);
                for &pos in &example.positives {
                    let single;
                    let excluded = if config.allow_gold_negatives {
                        single = BTreeSet::from([pos]);
                        &single
                    } else {
                        &example.gold
                    };
                    for _ in 0..config.negatives_per_positive {
                        pairs.push((pos, sample_corrupted(num_attrs, excluded, &mut state.rng)?));
                    }
                }
                tuples += example.positives.len();
                jobs.push(Job { example, pairs });
                start += 1;
            }
            let results = exec.map(&jobs, |job| {
                let mut g = ModelGrads::zeros_for(&model);
                model
                    .accumulate_entity(&job.example.words, &job.pairs, &mut g)
                    .map(|loss| (loss, g))
            });
            let mut total: Option<ModelGrads> = None;
            for (job, r) in jobs.iter().zip(results) {
                let (loss, g) = r?;
                loss_sum += loss;
                pair_count += job.pairs.len();
                match total.as_mut() {
                    Some(t) => t.add_assign(&g),
                    None => total = Some(g),
                }
            }
            if let Some(g) = total {
                state
                    .optimizer
                    .apply(&mut model, &g, config.adadelta_rho, config.adadelta_eps)?;
                if model.config.renormalize_attrs {
                    model.attributes.renormalize();
                }
            }
        }
        let mean_loss = loss_sum / pair_count.max(1) as f64;
        state.epoch = epoch;
        state.loss_history.push(mean_loss);
        if !mean_loss.is_finite() {
            return Err(TrainError::Divergence { epoch, mean_loss });
        }

        let val_hits1 = if val.is_empty() { None } else { Some(validation_hits1(&model, &val, exec)?) };
        on_epoch(&EpochRecord { epoch, mean_loss, val_hits1 }, &model);
        if let Some(h) = val_hits1 {
            state.val_history.push(h);
            match state.best {
                Some((b, _)) if h < b => since_improvement += 1,
                Some((b, _)) => {
                    // Ties keep the later, longer-trained model but do not
                    // reset the patience counter.
                    if h > b {
                        since_improvement = 0;
                    } else {
                        since_improvement += 1;
                    }
                    state.best = Some((h, epoch));
                    best_model = Some(model.clone());
                }
                None => {
                    state.best = Some((h, epoch));
                    best_model = Some(model.clone());
                }
            }
            if since_improvement >= config.early_stop_patience && epoch < config.epochs {
                state.stopped_early = true;
                break;
            }
        }
    }

    let mut model = best_model.unwrap_or(model);
    if model.encoder.table.trainable {
        model.encoder.table.refresh_oov();
    }
    let meta = TrainingMeta {
        epochs: state.epoch,
        best_epoch: state.best.map(|(_, e)| e),
        final_loss: state.loss_history.last().copied(),
        best_val_hits1: state.best.map(|(h, _)| h),
    };
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint { format_version: FORMAT_VERSION, model, meta },
        state,
    })
}
