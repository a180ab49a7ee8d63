//! Class-path encoder: class-word embeddings fed root-first through an LSTM;
//! the final hidden state is the path representation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::kb::ClassPath;
use crate::numerics::{
    lstm_cell_backward, lstm_cell_forward, LstmCache, LstmWeights, Matrix, NumericsError,
    SplitMix64, Vector,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingParseError {
    #[error("line {line}: malformed header, expected `<vocab_size> <dim>`")]
    Header { line: usize },
    #[error("line {line}: expected {expected} values, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: `{token}` is not a finite number")]
    NotNumeric { line: usize, token: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
}

/// Class-word vectors plus the fallback used for unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    pub vectors: Matrix,
    /// Mean of the in-vocabulary rows when the table was built.
    pub oov_vector: Vector,
    pub trainable: bool,
}

impl WordEmbeddingTable {
    /// Build from rows; later duplicates of a word replace earlier ones.
    /// Returns the table and the duplicated words.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize) -> (Self, Vec<String>) {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut vocab: Vec<String> = Vec::new();
        let mut data: Vec<Vec<f64>> = Vec::new();
        let mut duplicates = Vec::new();
        for (word, row) in rows {
            debug_assert_eq!(row.len(), dim);
            match index.get(&word) {
                Some(&i) => {
                    duplicates.push(word);
                    data[i] = row;
                }
                None => {
                    index.insert(word.clone(), vocab.len());
                    vocab.push(word);
                    data.push(row);
                }
            }
        }
        let vectors = Matrix::from_vec(vocab.len(), dim, data.concat()).expect("rows have dim");
        let oov_vector = mean_row(&vectors);
        (
            WordEmbeddingTable { vocab, index, vectors, oov_vector, trainable: true },
            duplicates,
        )
    }

    /// Uniform(-0.5/dim, 0.5/dim) rows for the given words.
    pub fn random(words: impl IntoIterator<Item = String>, dim: usize, rng: &mut SplitMix64) -> Self {
        let bound = 0.5 / dim as f64;
        let rows = words
            .into_iter()
            .map(|w| (w, (0..dim).map(|_| rng.uniform(-bound, bound)).collect()))
            .collect();
        Self::from_rows(rows, dim).0
    }

    /// Parse the word2vec text format: a `vocab_size dim` header followed by
    /// `word v1 … v_dim` rows. Returns the table and any duplicated words.
    pub fn parse_word2vec(text: &str) -> Result<(Self, Vec<String>), EmbeddingParseError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(EmbeddingParseError::Header { line: 1 })?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (count, dim) = match nums.as_slice() {
            [a, b] => match (parse_usize(a), parse_usize(b)) {
                (Some(a), Some(b)) if b > 0 => (a, b),
                _ => return Err(EmbeddingParseError::Header { line: hline + 1 }),
            },
            _ => return Err(EmbeddingParseError::Header { line: hline + 1 }),
        };
        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines {
            let mut toks = line.split_whitespace();
            let word = toks.next().expect("non-empty line").to_string();
            let values: Vec<&str> = toks.collect();
            if values.len() != dim {
                return Err(EmbeddingParseError::Ragged {
                    line: i + 1,
                    expected: dim,
                    found: values.len(),
                });
            }
            let mut row = Vec::with_capacity(dim);
            for tok in values {
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        return Err(EmbeddingParseError::NotNumeric {
                            line: i + 1,
                            token: tok.to_string(),
                        })
                    }
                }
            }
            rows.push((word, row));
        }
        if rows.len() != count {
            return Err(EmbeddingParseError::RowCount { expected: count, found: rows.len() });
        }
        Ok(Self::from_rows(rows, dim))
    }

    /// Reassemble a table from stored parts, e.g. a checkpoint.
    pub fn from_parts(vocab: Vec<String>, vectors: Matrix, oov_vector: Vector, trainable: bool) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordEmbeddingTable { vocab, index, vectors, oov_vector, trainable }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: Option<usize>) -> &[f64] {
        match word {
            Some(i) => self.vectors.row(i),
            None => &self.oov_vector,
        }
    }

    /// Reset the out-of-vocabulary vector to the mean of the current rows,
    /// e.g. after the rows were fine-tuned.
    pub fn refresh_oov(&mut self) {
        self.oov_vector = mean_row(&self.vectors);
    }
}

fn mean_row(m: &Matrix) -> Vector {
    let mut mean = vec![0.0; m.cols()];
    if m.rows() == 0 {
        return Vector(mean);
    }
    for r in 0..m.rows() {
        crate::numerics::add_assign(&mut mean, m.row(r));
    }
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Vector(mean)
}

/// LSTM weights and the class-word table.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub lstm: LstmWeights,
    pub table: WordEmbeddingTable,
}

/// Path already resolved to vocabulary indices (`None` = out of vocabulary).
pub type WordIds = Vec<Option<usize>>;

impl EncoderParams {
    pub fn path_dim(&self) -> usize {
        self.lstm.hidden_dim
    }

    pub fn resolve(&self, path: &ClassPath) -> WordIds {
        path.classes().iter().map(|c| self.table.lookup(c)).collect()
    }

    pub fn is_all_oov(&self, path: &ClassPath) -> bool {
        self.resolve(path).iter().all(Option::is_none)
    }
}

/// Forward state of one encoded path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCache {
    words: WordIds,
    steps: Vec<LstmCache>,
}

/// Gradients produced by [`encode_path_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub lstm: LstmWeights,
    /// Sparse rows of the word table; `None` when the table is frozen.
    pub words: Option<BTreeMap<usize, Vec<f64>>>,
}

impl EncoderGrads {
    pub fn zeros_for(enc: &EncoderParams) -> Self {
        EncoderGrads {
            lstm: enc.lstm.zeros_like(),
            words: enc.table.trainable.then(BTreeMap::new),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        self.lstm.add_assign(&other.lstm);
        if let (Some(mine), Some(theirs)) = (self.words.as_mut(), other.words.as_ref()) {
            for (i, row) in theirs {
                match mine.get_mut(i) {
                    Some(acc) => crate::numerics::add_assign(acc, row),
                    None => {
                        mine.insert(*i, row.clone());
                    }
                }
            }
        }
    }
}

/// Run the LSTM over the path from zero state and return `h_n`.
pub fn encode_path(path: &ClassPath, enc: &EncoderParams) -> Vec<f64> {
    encode_words(&enc.resolve(path), enc).0
}

/// Encode a resolved path, keeping the per-step caches for backpropagation.
pub fn encode_words(words: &[Option<usize>], enc: &EncoderParams) -> (Vec<f64>, PathCache) {
    let n = enc.lstm.hidden_dim;
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut steps = Vec::with_capacity(words.len());
    for w in words {
        let x = enc.table.vector(*w);
        let (h2, c2, cache) = lstm_cell_forward(x, &h, &c, &enc.lstm).expect("encoder dimensions are consistent");
        h = h2;
        c = c2;
        steps.push(cache);
    }
    (h, PathCache { words: words.to_vec(), steps })
}

/// Backpropagation through time from `d_path` (gradient w.r.t. `h_n`).
pub fn encode_path_backward(
    cache: &PathCache,
    enc: &EncoderParams,
    d_path: &[f64],
    grads: &mut EncoderGrads,
) -> Result<(), NumericsError> {
    if cache.steps.is_empty() {
        return Err(NumericsError::Empty { op: "encode_path_backward" });
    }
    let n = enc.lstm.hidden_dim;
    if d_path.len() != n {
        return Err(NumericsError::Shape {
            op: "encode_path_backward",
            expected: n,
            found: d_path.len(),
        });
    }
    let mut dh = d_path.to_vec();
    let mut dc = vec![0.0; n];
    for (step, word) in cache.steps.iter().zip(&cache.words).rev() {
        let g = lstm_cell_backward(&dh, &dc, step, &enc.lstm, &mut grads.lstm)?;
        if let (Some(rows), Some(w)) = (grads.words.as_mut(), word) {
            let row = rows.entry(*w).or_insert_with(|| vec![0.0; enc.table.dim()]);
            crate::numerics::add_assign(row, &g.dx);
        }
        dh = g.dh_prev;
        dc = g.dc_prev;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, grad_check, lstm_cell_forward};
    use std::format;

    fn encoder(seed: u64, word_dim: usize, path_dim: usize, words: &[&str]) -> EncoderParams {
        let mut rng = SplitMix64::new(seed);
        let mut lstm = LstmWeights::zeros(word_dim, path_dim, false);
        lstm.for_each_mut(|_, _, s| s.iter_mut().for_each(|v| *v = rng.uniform(-0.8, 0.8)));
        let rows = words
            .iter()
            .map(|w| (w.to_string(), (0..word_dim).map(|_| rng.uniform(-1.0, 1.0)).collect()))
            .collect();
        EncoderParams { lstm, table: WordEmbeddingTable::from_rows(rows, word_dim).0 }
    }

    fn p(s: &str) -> ClassPath {
        ClassPath::parse(s).unwrap()
    }

    #[test]
    fn parses_word2vec_text() {
        let (t, dups) = WordEmbeddingTable::parse_word2vec("2 3\nfruit 1 2 3\nfilm 0.5 -1 2e-1\n").unwrap();
        assert!(dups.is_empty());
        assert_eq!(t.vocab().len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.vectors.row(t.lookup("film").unwrap()), &[0.5, -1.0, 0.2]);
    }

    #[test]
    fn word2vec_errors_carry_line_numbers() {
        assert_eq!(
            WordEmbeddingTable::parse_word2vec("2 3\nfruit 1 2 3\nfilm 1 2\n").unwrap_err(),
            EmbeddingParseError::Ragged { line: 3, expected: 3, found: 2 }
        );
        assert_eq!(
            WordEmbeddingTable::parse_word2vec("two 3\n").unwrap_err(),
            EmbeddingParseError::Header { line: 1 }
        );
        assert_eq!(
            WordEmbeddingTable::parse_word2vec("1 2\nx 1 abc\n").unwrap_err(),
            EmbeddingParseError::NotNumeric { line: 2, token: "abc".into() }
        );
        assert!(matches!(
            WordEmbeddingTable::parse_word2vec("3 1\nx 1\n"),
            Err(EmbeddingParseError::RowCount { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn duplicates_last_wins() {
        let (t, dups) = WordEmbeddingTable::parse_word2vec("2 1\nx 1\nx 5\n").unwrap();
        assert_eq!(dups, vec![String::from("x")]);
        assert_eq!(t.vocab().len(), 1);
        assert_eq!(t.vectors.row(0), &[5.0]);
    }

    #[test]
    fn oov_is_mean_of_rows() {
        let (t, _) = WordEmbeddingTable::parse_word2vec("2 2\na 1 0\nb 0 1\n").unwrap();
        assert_eq!(&*t.oov_vector, &[0.5, 0.5]);
        assert_eq!(t.vector(None), &[0.5, 0.5]);
    }

    #[test]
    fn random_init_bounds() {
        let mut rng = SplitMix64::new(1);
        let t = WordEmbeddingTable::random((0..20).map(|i| format!("w{i}")), 10, &mut rng);
        assert!(t.vectors.as_slice().iter().all(|v| v.abs() <= 0.05));
        assert_eq!(t.vocab().len(), 20);
    }

    #[test]
    fn single_step_equals_one_cell() {
        let enc = encoder(3, 3, 4, &["a"]);
        let h = encode_path(&p("a"), &enc);
        let (h1, _, _) = lstm_cell_forward(enc.table.vectors.row(0), &[0.0; 4], &[0.0; 4], &enc.lstm).unwrap();
        assert_eq!(h, h1);
        assert_eq!(encode_path(&p("a"), &enc), h);
    }

    #[test]
    fn three_step_unroll_matches_manual() {
        let enc = encoder(9, 3, 3, &["r", "x", "y"]);
        let got = encode_path(&p("r/x/y"), &enc);
        let (mut h, mut c) = (std::vec![0.0; 3], std::vec![0.0; 3]);
        for w in ["r", "x", "y"] {
            let (h2, c2, _) =
                lstm_cell_forward(enc.table.vectors.row(enc.table.lookup(w).unwrap()), &h, &c, &enc.lstm).unwrap();
            h = h2;
            c = c2;
        }
        for (a, b) in got.iter().zip(&h) {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_words_use_oov() {
        let enc = encoder(2, 3, 3, &["r", "x"]);
        assert!(enc.is_all_oov(&p("q/z")));
        assert!(!enc.is_all_oov(&p("r/z")));
        let mut table = enc.table.clone();
        let oov = table.oov_vector.clone();
        let (v, _) = WordEmbeddingTable::from_rows(std::vec![("q".into(), oov.0.clone())], 3);
        table = WordEmbeddingTable::from_parts(
            std::vec!["r".into(), "x".into(), "q".into()],
            Matrix::from_vec(3, 3, [table.vectors.as_slice(), v.vectors.as_slice()].concat()).unwrap(),
            oov,
            true,
        );
        let enc2 = EncoderParams { lstm: enc.lstm.clone(), table };
        assert_eq!(encode_path(&p("r/zzz"), &enc), encode_path(&p("r/q"), &enc2));
    }

    #[test]
    fn prefix_changes_representation() {
        for seed in 0..20 {
            let enc = encoder(seed, 4, 4, &["root", "x", "y"]);
            let full = encode_path(&p("root/x/y"), &enc);
            let leaf = encode_path(&p("y"), &enc);
            let diff: f64 = full.iter().zip(&leaf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff > 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let enc = encoder(4, 2, 2, &["a", "b"]);
        let (_, cache) = encode_words(&enc.resolve(&p("a/b")), &enc);
        let mut g = EncoderGrads::zeros_for(&enc);
        encode_path_backward(&cache, &enc, &[0.0, 0.0], &mut g).unwrap();
        let mut all = std::vec::Vec::new();
        g.lstm.for_each(|_, _, s| all.extend_from_slice(s));
        assert!(all.iter().all(|v| *v == 0.0));
        assert!(g.words.unwrap().values().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn frozen_table_omits_word_grads() {
        let mut enc = encoder(4, 2, 2, &["a", "b"]);
        enc.table.trainable = false;
        let (_, cache) = encode_words(&enc.resolve(&p("a/b")), &enc);
        let mut g = EncoderGrads::zeros_for(&enc);
        encode_path_backward(&cache, &enc, &[1.0, -1.0], &mut g).unwrap();
        assert!(g.words.is_none());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let enc = encoder(4, 2, 2, &["a"]);
        let (_, cache) = encode_words(&enc.resolve(&p("a")), &enc);
        let mut g = EncoderGrads::zeros_for(&enc);
        assert!(encode_path_backward(&cache, &enc, &[1.0], &mut g).is_err());
    }

    /// L = u·encode(path) over LSTM weights and every table row.
    fn check_bptt(path: &str, seed: u64, peepholes: bool) -> f64 {
        let words = ["a", "b", "c", "d", "e", "unused"];
        let mut enc = encoder(seed, 2, 2, &words);
        if peepholes {
            let mut rng = SplitMix64::new(seed + 1000);
            enc.lstm.peepholes = Some(core::array::from_fn(|_| {
                Vector((0..2).map(|_| rng.uniform(-0.5, 0.5)).collect())
            }));
        }
        let mut rng = SplitMix64::new(seed + 7);
        let u: std::vec::Vec<f64> = (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let path = p(path);
        let (_, cache) = encode_words(&enc.resolve(&path), &enc);
        let mut g = EncoderGrads::zeros_for(&enc);
        encode_path_backward(&cache, &enc, &u, &mut g).unwrap();

        let mut theta = std::vec::Vec::new();
        enc.lstm.for_each(|_, _, s| theta.extend_from_slice(s));
        let n_lstm = theta.len();
        theta.extend_from_slice(enc.table.vectors.as_slice());
        let mut analytic = std::vec::Vec::new();
        g.lstm.for_each(|_, _, s| analytic.extend_from_slice(s));
        let rows = g.words.unwrap();
        assert!(!rows.contains_key(&enc.table.lookup("unused").unwrap()));
        for r in 0..enc.table.vectors.rows() {
            match rows.get(&r) {
                Some(row) => analytic.extend_from_slice(row),
                None => analytic.extend_from_slice(&[0.0, 0.0]),
            }
        }
        grad_check(&theta, &analytic, 1e-5, |t| {
            let mut e2 = enc.clone();
            let mut pos = 0;
            e2.lstm.for_each_mut(|_, _, s| {
                s.copy_from_slice(&t[pos..pos + s.len()]);
                pos += s.len();
            });
            e2.table.vectors.as_mut_slice().copy_from_slice(&t[n_lstm..]);
            dot(&u, &encode_path(&path, &e2))
        })
        .unwrap()
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for (i, path) in ["a/b", "a", "a/b/c", "a/b/c/d", "a/b/c/d/e", "e/zzz/a"].iter().enumerate() {
            for peep in [false, true] {
                let err = check_bptt(path, i as u64, peep);
                assert!(err < 1e-6, "{path} peepholes={peep}: {err}");
            }
        }
    }
}
