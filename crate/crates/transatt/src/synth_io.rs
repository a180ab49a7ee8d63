//! Writing generated KBs to disk and reading them back.
//!
//! Besides the KB files, a synthetic directory holds `split.tsv`
//! (`entity<TAB>train|test`), `holdout_paths.txt` (one class-path per line)
//! and `manifest.json` with the generator configuration and counts.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transatt_core::kb::{ClassPath, KbSubset};
use transatt_core::synth::{SynthConfig, SynthKb};

use crate::{tsv, DataError};

pub const SPLIT: &str = "split.tsv";
pub const HOLDOUT_PATHS: &str = "holdout_paths.txt";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub classes: usize,
    pub leaf_paths: usize,
    pub holdout_paths: usize,
    pub entities: usize,
    pub train_entities: usize,
    pub test_entities: usize,
    pub attributes: usize,
    pub entity_attribute_pairs: usize,
    pub planted_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub config: SynthConfig,
    pub counts: Counts,
}

impl Manifest {
    pub fn new(synth: &SynthKb, cfg: &SynthConfig) -> Self {
        let kb = &synth.kb;
        Manifest {
            generator: "transatt-synth".into(),
            seed: cfg.seed,
            config: cfg.clone(),
            counts: Counts {
                classes: kb.classes.len(),
                leaf_paths: synth.leaf_paths.len(),
                holdout_paths: synth.holdout_paths.len(),
                entities: kb.entities.len(),
                train_entities: synth.train_entities.len(),
                test_entities: synth.test_entities.len(),
                attributes: kb.attributes.len(),
                entity_attribute_pairs: kb.r2.len(),
                planted_pairs: kb.r3.as_ref().map_or(0, |r| r.len()),
            },
        }
    }
}

/// A synthetic KB read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDir {
    pub kb: KbSubset,
    pub train_entities: BTreeSet<String>,
    pub test_entities: BTreeSet<String>,
    pub holdout_paths: Vec<ClassPath>,
}

pub fn export(synth: &SynthKb, cfg: &SynthConfig, dir: &Path) -> Result<(), DataError> {
    assert!(
        synth.kb.r3.as_ref().is_some_and(|r| !r.is_empty()),
        "generated KBs always carry planted ground truth"
    );
    tsv::save_kb(&synth.kb, dir)?;
    let split = synth
        .train_entities
        .iter()
        .map(|e| (e.as_str(), "train"))
        .chain(synth.test_entities.iter().map(|e| (e.as_str(), "test")))
        .collect::<BTreeSet<_>>();
    tsv::write_pairs(&dir.join(SPLIT), split)?;

    let mut holdout = String::new();
    for p in &synth.holdout_paths {
        holdout.push_str(&p.to_string());
        holdout.push('\n');
    }
    let path = dir.join(HOLDOUT_PATHS);
    fs::write(&path, holdout).map_err(|e| DataError::io(&path, e))?;

    let path = dir.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&Manifest::new(synth, cfg)).map_err(|e| DataError::json(&path, e))?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| DataError::io(&path, e))
}

/// Entity split of a dataset directory, if it has one.
pub fn read_split(dir: &Path) -> Result<Option<(BTreeSet<String>, BTreeSet<String>)>, DataError> {
    let path = dir.join(SPLIT);
    if !path.exists() {
        return Ok(None);
    }
    let (mut train, mut test) = (BTreeSet::new(), BTreeSet::new());
    for (entity, side) in tsv::read_pairs(&path)? {
        match side.as_str() {
            "train" => train.insert(entity),
            "test" => test.insert(entity),
            other => return Err(DataError::parse(&path, 0, format!("entity `{entity}`: unknown split `{other}`"))),
        };
    }
    Ok(Some((train, test)))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::json(&path, e))
}

pub fn import(dir: &Path) -> Result<SynthDir, DataError> {
    let kb = tsv::load_kb(dir)?;
    let (train_entities, test_entities) = read_split(dir)?.unwrap_or_default();
    let holdout = dir.join(HOLDOUT_PATHS);
    let holdout_paths = if holdout.exists() { tsv::read_paths(&holdout)? } else { Vec::new() };
    Ok(SynthDir { kb, train_entities, test_entities, holdout_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use transatt_core::synth::generate;

    fn small() -> SynthConfig {
        SynthConfig { num_entities: 120, num_paths: 12, num_attributes: 45, seed: 3, ..Default::default() }
    }

    #[test]
    fn round_trip_reproduces_the_kb() {
        let cfg = small();
        let synth = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export(&synth, &cfg, dir.path()).unwrap();
        let back = import(dir.path()).unwrap();
        assert_eq!(back.kb, synth.kb);
        assert_eq!(back.train_entities, synth.train_entities);
        assert_eq!(back.test_entities, synth.test_entities);
        assert_eq!(back.holdout_paths, synth.holdout_paths);
        assert_eq!(read_manifest(dir.path()).unwrap(), Manifest::new(&synth, &cfg));
    }

    #[test]
    fn unwritable_destination_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let cfg = small();
        let synth = generate(&cfg).unwrap();
        assert!(matches!(export(&synth, &cfg, &blocker.join("sub")), Err(DataError::Io { .. })));
    }
}
