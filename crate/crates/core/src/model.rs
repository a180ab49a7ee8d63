//! TransAtt: bilinear selective attention over an entity's class-paths,
//! attention-weighted aggregation, per-attribute translation `p·M_a ≈ a`
//! and the margin ranking loss.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{
    encode_path, encode_path_backward, encode_words, EncoderGrads, EncoderParams, WordEmbeddingTable, WordIds,
};
use crate::kb::{ClassPath, PathSet};
use crate::numerics::{
    add_assign, distance, distance_grad, dot, softmax, LstmWeights, Matrix, Norm, NumericsError, SplitMix64,
};

/// Version tag written into every checkpoint.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("positive and corrupted attribute are the same (`{0}`)")]
    SameAttribute(String),
    #[error("an entity needs at least one class-path")]
    NoPaths,
    #[error("no candidate attributes remain after filtering")]
    EmptyCandidates,
    #[error("invalid model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub word_dim: usize,
    pub path_dim: usize,
    pub attr_dim: usize,
    /// Margin γ of the ranking loss.
    pub margin: f64,
    pub norm: Norm,
    /// Rescale attribute embeddings to unit L2 norm after every update.
    pub renormalize_attrs: bool,
    pub peepholes: bool,
    /// Reuse the positive attribute's attention for the corrupted term.
    pub shared_attention_neg: bool,
    /// Fine-tune class-word embeddings.
    pub trainable_embeddings: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            path_dim: 100,
            attr_dim: 100,
            margin: 1.0,
            norm: Norm::L2,
            renormalize_attrs: true,
            peepholes: false,
            shared_attention_neg: false,
            trainable_embeddings: true,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.word_dim == 0 || self.path_dim == 0 || self.attr_dim == 0 {
            return Err(ModelError::Config("dimensions must be at least 1".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(ModelError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Attribute embeddings `a` and their mapping matrices `M_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpace {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    /// num_attrs × attr_dim
    pub embeddings: Matrix,
    /// One path_dim × attr_dim matrix per attribute.
    pub mappings: Vec<Matrix>,
}

impl AttributeSpace {
    pub fn from_parts(names: Vec<String>, embeddings: Matrix, mappings: Vec<Matrix>) -> Result<Self, ModelError> {
        if names.len() != embeddings.rows() || names.len() != mappings.len() {
            return Err(ModelError::Config(format!(
                "{} attribute names, {} embeddings, {} mappings",
                names.len(),
                embeddings.rows(),
                mappings.len()
            )));
        }
        let index: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        if index.len() != names.len() {
            return Err(ModelError::Config("duplicate attribute names".into()));
        }
        Ok(AttributeSpace { names, index, embeddings, mappings })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, ModelError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownAttribute(name.into()))
    }

    pub fn embedding(&self, idx: usize) -> &[f64] {
        self.embeddings.row(idx)
    }

    fn check(&self, idx: usize) -> Result<(), ModelError> {
        if idx >= self.len() {
            return Err(ModelError::UnknownAttribute(format!("#{idx}")));
        }
        Ok(())
    }

    /// Scale every embedding row to unit L2 norm.
    pub fn renormalize(&mut self) {
        for r in 0..self.embeddings.rows() {
            let row = self.embeddings.row_mut(r);
            let n = crate::numerics::l2_norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

/// The bilinear attention matrix `A` (path_dim × attr_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub bilinear: Matrix,
}

/// A complete set of model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransAtt {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub attributes: AttributeSpace,
    pub attention: AttentionParams,
}

/// Training provenance stored with a model.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingMeta {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub final_loss: Option<f64>,
    pub best_val_hits1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model: TransAtt,
    pub meta: TrainingMeta,
}

impl TransAtt {
    /// Initialize all parameters from `config.seed`. Without a pretrained
    /// table, every word gets a small uniform random vector.
    pub fn init(
        config: ModelConfig,
        words: impl IntoIterator<Item = String>,
        attributes: Vec<String>,
        pretrained: Option<WordEmbeddingTable>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if attributes.is_empty() {
            return Err(ModelError::Config("no attributes".into()));
        }
        let mut rng = SplitMix64::new(config.seed);
        let mut table = match pretrained {
            Some(t) if t.dim() != config.word_dim => {
                return Err(ModelError::Config(format!(
                    "embedding file has dim {}, model expects {}",
                    t.dim(),
                    config.word_dim
                )))
            }
            Some(t) => t,
            None => {
                let vocab: BTreeSet<String> = words.into_iter().collect();
                WordEmbeddingTable::random(vocab, config.word_dim, &mut rng)
            }
        };
        table.trainable = config.trainable_embeddings;
        let lstm = LstmWeights::random(config.word_dim, config.path_dim, config.peepholes, &mut rng);

        let bound = libm::sqrt(6.0 / (config.path_dim + config.attr_dim) as f64);
        let uniform_matrix = |rng: &mut SplitMix64| {
            let data = (0..config.path_dim * config.attr_dim)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            Matrix::from_vec(config.path_dim, config.attr_dim, data).expect("shape")
        };
        let bilinear = uniform_matrix(&mut rng);
        let mappings: Vec<Matrix> = attributes.iter().map(|_| uniform_matrix(&mut rng)).collect();
        let mut embeddings = Matrix::zeros(attributes.len(), config.attr_dim);
        for r in 0..attributes.len() {
            let row = embeddings.row_mut(r);
            loop {
                row.iter_mut().for_each(|v| *v = rng.gaussian());
                let n = crate::numerics::l2_norm(row);
                if n > 1e-12 {
                    row.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
        }
        Ok(TransAtt {
            config,
            encoder: EncoderParams { lstm, table },
            attributes: AttributeSpace::from_parts(attributes, embeddings, mappings)?,
            attention: AttentionParams { bilinear },
        })
    }

    pub fn encode(&self, path: &ClassPath) -> Vec<f64> {
        encode_path(path, &self.encoder)
    }

    pub fn encode_all(&self, paths: &PathSet) -> Vec<Vec<f64>> {
        paths.paths.iter().map(|p| self.encode(p)).collect()
    }

    /// Visit every stored tensor by name: the LSTM, the word table and its
    /// OOV fallback, attribute embeddings, one mapping per attribute, and `A`.
    pub fn for_each_tensor<'a>(&'a self, mut f: impl FnMut(String, (usize, usize), &'a [f64])) {
        self.encoder.lstm.for_each(&mut f);
        let t = &self.encoder.table;
        f("words".into(), t.vectors.shape(), t.vectors.as_slice());
        f("words.oov".into(), (1, t.oov_vector.dim()), &t.oov_vector);
        let a = &self.attributes;
        f("attr.embeddings".into(), a.embeddings.shape(), a.embeddings.as_slice());
        for (i, m) in a.mappings.iter().enumerate() {
            f(format!("attr.mapping.{i}"), m.shape(), m.as_slice());
        }
        f("attention.bilinear".into(), self.attention.bilinear.shape(), self.attention.bilinear.as_slice());
    }

    pub fn for_each_tensor_mut<'a>(&'a mut self, mut f: impl FnMut(String, (usize, usize), &'a mut [f64])) {
        self.encoder.lstm.for_each_mut(&mut f);
        let t = &mut self.encoder.table;
        let shape = t.vectors.shape();
        f("words".into(), shape, t.vectors.as_mut_slice());
        let n = t.oov_vector.dim();
        f("words.oov".into(), (1, n), &mut t.oov_vector.0);
        let a = &mut self.attributes;
        let shape = a.embeddings.shape();
        f("attr.embeddings".into(), shape, a.embeddings.as_mut_slice());
        for (i, m) in a.mappings.iter_mut().enumerate() {
            let shape = m.shape();
            f(format!("attr.mapping.{i}"), shape, m.as_mut_slice());
        }
        let shape = self.attention.bilinear.shape();
        f("attention.bilinear".into(), shape, self.attention.bilinear.as_mut_slice());
    }

    /// Loss and parameter gradients for one positive tuple against each of
    /// `negatives`, accumulated into `grads`. Returns the summed hinge loss.
    pub fn accumulate_tuple(
        &self,
        paths: &[WordIds],
        positive: usize,
        negatives: &[usize],
        grads: &mut ModelGrads,
    ) -> Result<f64, ModelError> {
        let pairs: Vec<(usize, usize)> = negatives.iter().map(|n| (positive, *n)).collect();
        self.accumulate_entity(paths, &pairs, grads)
    }

    /// Like [`TransAtt::accumulate_tuple`] for every `(positive, negative)`
    /// pair of one entity; its paths are encoded and back-propagated once.
    pub fn accumulate_entity(
        &self,
        paths: &[WordIds],
        pairs: &[(usize, usize)],
        grads: &mut ModelGrads,
    ) -> Result<f64, ModelError> {
        if paths.is_empty() {
            return Err(ModelError::NoPaths);
        }
        let (vecs, caches): (Vec<Vec<f64>>, Vec<_>) = paths.iter().map(|w| encode_words(w, &self.encoder)).unzip();
        let mut d_paths = vec![vec![0.0; self.config.path_dim]; vecs.len()];
        let mut total = 0.0;
        for &(pos, neg) in pairs {
            let out = margin_loss_into(
                &vecs,
                pos,
                neg,
                &self.attributes,
                &self.attention,
                self.config.margin,
                self.config.norm,
                self.config.shared_attention_neg,
                &mut grads.head,
                &mut d_paths,
            )?;
            total += out.loss;
        }
        for (cache, d) in caches.iter().zip(&d_paths) {
            if d.iter().any(|v| *v != 0.0) {
                encode_path_backward(cache, &self.encoder, d, &mut grads.encoder)?;
            }
        }
        Ok(total)
    }
}

/// `α = softmax(s)` with `s_i = p_iᵀ A a`.
pub fn attention_weights(path_vecs: &[Vec<f64>], a: &[f64], attention: &AttentionParams) -> Result<Vec<f64>, ModelError> {
    if path_vecs.is_empty() {
        return Err(ModelError::NoPaths);
    }
    let q = query(a, attention)?;
    let scores = path_vecs
        .iter()
        .map(|p| {
            shape_check("attention_weights", q.len(), p.len())?;
            Ok(dot(p, &q))
        })
        .collect::<Result<Vec<f64>, ModelError>>()?;
    Ok(softmax(&scores)?)
}

fn query(a: &[f64], attention: &AttentionParams) -> Result<Vec<f64>, ModelError> {
    shape_check("attention_weights", attention.bilinear.cols(), a.len())?;
    Ok(attention.bilinear.mul_vec(a))
}

fn shape_check(op: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(NumericsError::Shape { op, expected, found }.into());
    }
    Ok(())
}

/// `p_e = Σ_i α_i p_i`.
pub fn aggregate(path_vecs: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>, ModelError> {
    shape_check("aggregate", path_vecs.len(), alpha.len())?;
    if path_vecs.is_empty() {
        return Err(ModelError::NoPaths);
    }
    if let [single] = path_vecs {
        if alpha[0] == 1.0 {
            return Ok(single.clone());
        }
    }
    let mut out = vec![0.0; path_vecs[0].len()];
    for (p, w) in path_vecs.iter().zip(alpha) {
        shape_check("aggregate", out.len(), p.len())?;
        crate::numerics::axpy(*w, p, &mut out);
    }
    Ok(out)
}

/// Translation energy `d(pᵀ M_a, a)`; lower is a better match.
pub fn score(p: &[f64], attr: usize, space: &AttributeSpace, norm: Norm) -> Result<f64, ModelError> {
    space.check(attr)?;
    let m = &space.mappings[attr];
    shape_check("score", m.rows(), p.len())?;
    let y = m.vec_mul(p);
    Ok(distance(&y, space.embedding(attr), norm)?)
}

/// Attention toward `attr`, aggregation, then the translation energy.
pub fn score_entity(
    path_vecs: &[Vec<f64>],
    attr: usize,
    space: &AttributeSpace,
    attention: &AttentionParams,
    norm: Norm,
) -> Result<(f64, Vec<f64>), ModelError> {
    space.check(attr)?;
    let alpha = attention_weights(path_vecs, space.embedding(attr), attention)?;
    let p_e = aggregate(path_vecs, &alpha)?;
    Ok((score(&p_e, attr, space, norm)?, alpha))
}

/// Sparse gradients of the attention/translation head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub attr_rows: BTreeMap<usize, Vec<f64>>,
    pub mappings: BTreeMap<usize, Matrix>,
    pub bilinear: Matrix,
}

impl HeadGrads {
    pub fn zeros(path_dim: usize, attr_dim: usize) -> Self {
        HeadGrads {
            attr_rows: BTreeMap::new(),
            mappings: BTreeMap::new(),
            bilinear: Matrix::zeros(path_dim, attr_dim),
        }
    }

    fn attr_row(&mut self, idx: usize, dim: usize) -> &mut Vec<f64> {
        self.attr_rows.entry(idx).or_insert_with(|| vec![0.0; dim])
    }

    fn mapping(&mut self, idx: usize, rows: usize, cols: usize) -> &mut Matrix {
        self.mappings.entry(idx).or_insert_with(|| Matrix::zeros(rows, cols))
    }

    pub fn add_assign(&mut self, other: &HeadGrads) {
        for (i, row) in &other.attr_rows {
            let dim = row.len();
            add_assign(self.attr_row(*i, dim), row);
        }
        for (i, m) in &other.mappings {
            self.mapping(*i, m.rows(), m.cols()).add_assign(m);
        }
        self.bilinear.add_assign(&other.bilinear);
    }
}

/// Gradients for every parameter of a [`TransAtt`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub head: HeadGrads,
}

impl ModelGrads {
    pub fn zeros_for(model: &TransAtt) -> Self {
        ModelGrads {
            encoder: EncoderGrads::zeros_for(&model.encoder),
            head: HeadGrads::zeros(model.config.path_dim, model.config.attr_dim),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        self.encoder.add_assign(&other.encoder);
        self.head.add_assign(&other.head);
    }
}

/// Result of [`margin_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoss {
    pub loss: f64,
    pub d_pos: f64,
    pub d_neg: f64,
    /// Gradient with respect to each path vector.
    pub d_paths: Vec<Vec<f64>>,
    pub head: HeadGrads,
}

/// One energy term: attention conditioned on `focus`, translation by `target`.
struct Term {
    focus: usize,
    target: usize,
    q: Vec<f64>,
    alpha: Vec<f64>,
    p_e: Vec<f64>,
    y: Vec<f64>,
    dist: f64,
}

fn forward_term(
    paths: &[Vec<f64>],
    focus: usize,
    target: usize,
    space: &AttributeSpace,
    attention: &AttentionParams,
    norm: Norm,
) -> Result<Term, ModelError> {
    let q = query(space.embedding(focus), attention)?;
    let scores: Vec<f64> = paths.iter().map(|p| dot(p, &q)).collect();
    let alpha = softmax(&scores)?;
    let p_e = aggregate(paths, &alpha)?;
    let y = space.mappings[target].vec_mul(&p_e);
    let dist = distance(&y, space.embedding(target), norm)?;
    Ok(Term { focus, target, q, alpha, p_e, y, dist })
}

#[allow(clippy::too_many_arguments)]
fn backward_term(
    coef: f64,
    term: &Term,
    paths: &[Vec<f64>],
    space: &AttributeSpace,
    attention: &AttentionParams,
    norm: Norm,
    out: &mut HeadGrads,
    d_paths: &mut [Vec<f64>],
) -> Result<(), ModelError> {
    let target_vec = space.embedding(term.target);
    let mut dy = distance_grad(&term.y, target_vec, norm)?;
    dy.iter_mut().for_each(|v| *v *= coef);
    let attr_dim = dy.len();

    // y = p_eᵀ M_t ;  distance(y, a_t)
    let m = &space.mappings[term.target];
    out.mapping(term.target, m.rows(), m.cols()).add_outer(&term.p_e, &dy);
    let row = out.attr_row(term.target, attr_dim);
    row.iter_mut().zip(&dy).for_each(|(r, d)| *r -= d);
    let dp_e = m.mul_vec(&dy);

    // p_e = Σ α_i p_i
    let d_alpha: Vec<f64> = paths.iter().map(|p| dot(p, &dp_e)).collect();
    for (dp, a) in d_paths.iter_mut().zip(&term.alpha) {
        crate::numerics::axpy(*a, &dp_e, dp);
    }
    if paths.len() == 1 {
        return Ok(());
    }

    // α = softmax(s), s_i = p_i · q, q = A a_focus
    let mean: f64 = term.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let ds: Vec<f64> = term.alpha.iter().zip(&d_alpha).map(|(a, d)| a * (d - mean)).collect();
    let mut dq = vec![0.0; term.q.len()];
    for ((p, dp), s) in paths.iter().zip(d_paths.iter_mut()).zip(&ds) {
        crate::numerics::axpy(*s, &term.q, dp);
        crate::numerics::axpy(*s, p, &mut dq);
    }
    let focus_vec = space.embedding(term.focus);
    out.bilinear.add_outer(&dq, focus_vec);
    let da = attention.bilinear.vec_mul(&dq);
    add_assign(out.attr_row(term.focus, attr_dim), &da);
    Ok(())
}

/// `max(0, γ + d(p_e M_a, a) − d(p_e' M_a', a'))` with exact gradients.
///
/// `p_e` attends toward `a` and `p_e'` toward `a'`, unless `shared_attention`
/// is set, in which case both terms use the attention toward `a`.
#[allow(clippy::too_many_arguments)]
pub fn margin_loss(
    path_vecs: &[Vec<f64>],
    positive: usize,
    negative: usize,
    space: &AttributeSpace,
    attention: &AttentionParams,
    margin: f64,
    norm: Norm,
    shared_attention: bool,
) -> Result<MarginLoss, ModelError> {
    let (rows, cols) = attention.bilinear.shape();
    let mut head = HeadGrads::zeros(rows, cols);
    let mut d_paths = vec![vec![0.0; rows]; path_vecs.len()];
    let (loss, d_pos, d_neg) = margin_loss_into(
        path_vecs,
        positive,
        negative,
        space,
        attention,
        margin,
        norm,
        shared_attention,
        &mut head,
        &mut d_paths,
    )
    .map(|o| (o.loss, o.d_pos, o.d_neg))?;
    Ok(MarginLoss { loss, d_pos, d_neg, d_paths, head })
}

pub(crate) struct LossValue {
    pub loss: f64,
    pub d_pos: f64,
    pub d_neg: f64,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn margin_loss_into(
    path_vecs: &[Vec<f64>],
    positive: usize,
    negative: usize,
    space: &AttributeSpace,
    attention: &AttentionParams,
    margin: f64,
    norm: Norm,
    shared_attention: bool,
    head: &mut HeadGrads,
    d_paths: &mut [Vec<f64>],
) -> Result<LossValue, ModelError> {
    space.check(positive)?;
    space.check(negative)?;
    if positive == negative {
        return Err(ModelError::SameAttribute(space.name(positive).into()));
    }
    if path_vecs.is_empty() {
        return Err(ModelError::NoPaths);
    }
    for p in path_vecs {
        shape_check("margin_loss", attention.bilinear.rows(), p.len())?;
    }
    let pos = forward_term(path_vecs, positive, positive, space, attention, norm)?;
    let focus = if shared_attention { positive } else { negative };
    let neg = forward_term(path_vecs, focus, negative, space, attention, norm)?;
    let raw = margin + pos.dist - neg.dist;
    if raw <= 0.0 {
        return Ok(LossValue { loss: 0.0, d_pos: pos.dist, d_neg: neg.dist });
    }
    backward_term(1.0, &pos, path_vecs, space, attention, norm, head, d_paths)?;
    backward_term(-1.0, &neg, path_vecs, space, attention, norm, head, d_paths)?;
    Ok(LossValue { loss: raw, d_pos: pos.dist, d_neg: neg.dist })
}

/// One ranked attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub attribute: usize,
    pub score: f64,
}

fn sort_ranking(items: &mut [Ranked]) {
    items.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.attribute.cmp(&b.attribute)));
}

/// Rank every attribute for a single class-path (no attention).
pub fn rank_attributes_for_path(path: &ClassPath, model: &TransAtt, k: usize) -> Vec<Ranked> {
    let p = model.encode(path);
    let mut all: Vec<Ranked> = (0..model.attributes.len())
        .map(|a| Ranked {
            attribute: a,
            score: score(&p, a, &model.attributes, model.config.norm).expect("consistent dimensions"),
        })
        .collect();
    sort_ranking(&mut all);
    all.truncate(k);
    all
}

/// Attribute ranking for an entity plus its attention matrix: one row per
/// returned attribute, one column per class-path.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRanking {
    pub ranking: Vec<Ranked>,
    pub attention: Vec<Vec<f64>>,
}

pub fn rank_attributes_for_entity(
    paths: &PathSet,
    model: &TransAtt,
    k: usize,
    filter: &BTreeSet<String>,
) -> Result<EntityRanking, ModelError> {
    if paths.is_empty() {
        return Err(ModelError::NoPaths);
    }
    let vecs = model.encode_all(paths);
    let mut scored: Vec<(Ranked, Vec<f64>)> = Vec::new();
    for a in 0..model.attributes.len() {
        if filter.contains(model.attributes.name(a)) {
            continue;
        }
        let (s, alpha) = score_entity(&vecs, a, &model.attributes, &model.attention, model.config.norm)?;
        scored.push((Ranked { attribute: a, score: s }, alpha));
    }
    if scored.is_empty() {
        return Err(ModelError::EmptyCandidates);
    }
    scored.sort_by(|(a, _), (b, _)| a.score.total_cmp(&b.score).then(a.attribute.cmp(&b.attribute)));
    scored.truncate(k);
    let (ranking, attention) = scored.into_iter().unzip();
    Ok(EntityRanking { ranking, attention })
}
