//! Tab-separated KB files. Lines starting with `#` are comments, blank lines
//! are skipped and duplicate lines collapse silently.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use transatt_core::kb::{ClassPath, KbSubset};

use crate::DataError;

pub const TAXONOMY: &str = "taxonomy.tsv";
pub const ENTITY_CLASS: &str = "entity_class.tsv";
pub const ENTITY_ATTR: &str = "entity_attr.tsv";
pub const GROUND_TRUTH: &str = "ground_truth_r3.tsv";

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .comment(Some(b'#'))
        .quoting(false)
        .flexible(true)
        .from_reader(file))
}

/// Read a two-column file into a deduplicated set of pairs.
pub fn read_pairs(path: &Path) -> Result<BTreeSet<(String, String)>, DataError> {
    let mut out = BTreeSet::new();
    for record in reader(path)?.records() {
        let record = record.map_err(|e| DataError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(DataError::parse(path, line, format!("expected 2 tab-separated fields, found {}", record.len())));
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(DataError::parse(path, line, "empty field".into()));
        }
        out.insert((record[0].to_string(), record[1].to_string()));
    }
    Ok(out)
}

/// Write pairs, one per line, in iteration order.
pub fn write_pairs<'a>(
    path: &Path,
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<(), DataError> {
    let mut buf = Vec::new();
    for (a, b) in pairs {
        writeln!(buf, "{a}\t{b}").expect("writing to memory");
    }
    fs::write(path, buf).map_err(|e| DataError::io(path, e))
}

/// Non-comment, non-blank lines of a one-item-per-line file.
pub fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn read_paths(path: &Path) -> Result<Vec<ClassPath>, DataError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| ClassPath::parse(l).map_err(|e| DataError::parse(path, i as u64 + 1, e.to_string())))
        .collect()
}

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Load `taxonomy.tsv`, `entity_class.tsv`, `entity_attr.tsv` and, when
/// present, `ground_truth_r3.tsv` from `dir`.
pub fn load_kb(dir: &Path) -> Result<KbSubset, DataError> {
    let taxonomy = read_pairs(&file(dir, TAXONOMY))?;
    let entity_class: BTreeSet<(String, String)> =
        read_pairs(&file(dir, ENTITY_CLASS))?.into_iter().map(|(e, c)| (c, e)).collect();
    let entity_attr = read_pairs(&file(dir, ENTITY_ATTR))?;
    let gt_path = file(dir, GROUND_TRUTH);
    let r3 = if gt_path.exists() {
        let mut set = BTreeSet::new();
        for (p, a) in read_pairs(&gt_path)? {
            let path = ClassPath::parse(&p).map_err(|e| DataError::parse(&gt_path, 0, format!("`{p}`: {e}")))?;
            set.insert((path, a));
        }
        Some(set)
    } else {
        None
    };
    Ok(KbSubset::from_relations(taxonomy, entity_class, entity_attr, r3))
}

/// Write the KB files into `dir`, creating it if needed. Output is sorted,
/// so it is byte-stable for equal KBs.
pub fn save_kb(kb: &KbSubset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    write_pairs(&file(dir, TAXONOMY), kb.r1_class_edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
    let entity_class: BTreeSet<(&str, &str)> =
        kb.r1_entity_edges.iter().map(|(c, e)| (e.as_str(), c.as_str())).collect();
    write_pairs(&file(dir, ENTITY_CLASS), entity_class)?;
    write_pairs(&file(dir, ENTITY_ATTR), kb.r2.iter().map(|(e, a)| (e.as_str(), a.as_str())))?;
    if let Some(r3) = &kb.r3 {
        let rendered: Vec<(String, &str)> = r3.iter().map(|(p, a)| (p.to_string(), a.as_str())).collect();
        write_pairs(&file(dir, GROUND_TRUTH), rendered.iter().map(|(p, a)| (p.as_str(), *a)))?;
    }
    Ok(())
}
