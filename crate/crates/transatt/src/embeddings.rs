//! Pretrained class-word vectors in word2vec text format.

use std::fs;
use std::path::Path;

use transatt_core::encoder::WordEmbeddingTable;

use crate::DataError;

/// Load a word2vec text file. Duplicate words keep their last row and are
/// reported as warnings.
pub fn load_word2vec(path: &Path) -> Result<WordEmbeddingTable, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let (table, duplicates) = WordEmbeddingTable::parse_word2vec(&text)
        .map_err(|source| DataError::Embeddings { path: path.to_path_buf(), source })?;
    for word in &duplicates {
        log::warn!("{}: duplicate word `{word}`, keeping the last vector", path.display());
    }
    Ok(table)
}
