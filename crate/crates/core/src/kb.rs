//! Knowledge-base subset: entities, classes, attributes and the relations
//! between them, plus class-path extraction and training-tuple construction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Longest class-path accepted by [`KbSubset::validate`].
pub const DEFAULT_MAX_PATH_LEN: usize = 16;

/// Minimum number of distinct entities an attribute needs to be kept.
pub const DEFAULT_MIN_ATTR_SUPPORT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KbError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("invalid class-path: {0}")]
    InvalidPath(String),
    #[error("knowledge base failed validation ({} violation(s)), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("minimum attribute support must be at least 1")]
    ZeroSupport,
    #[error("no training tuples survive filtering")]
    EmptyDataset,
}

/// Root-first sequence of class ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassPath {
    classes: Vec<String>,
}

impl ClassPath {
    pub fn new(classes: Vec<String>) -> Result<Self, KbError> {
        if classes.is_empty() {
            return Err(KbError::InvalidPath("empty path".into()));
        }
        if classes.iter().any(|c| c.is_empty() || c.contains('/')) {
            return Err(KbError::InvalidPath(classes.join("/")));
        }
        let distinct: BTreeSet<&String> = classes.iter().collect();
        if distinct.len() != classes.len() {
            return Err(KbError::InvalidPath(alloc::format!(
                "repeated class in {}",
                classes.join("/")
            )));
        }
        Ok(ClassPath { classes })
    }

    /// Parse a slash-joined path; a leading slash is allowed.
    pub fn parse(s: &str) -> Result<Self, KbError> {
        let trimmed = s.trim();
        let trimmed = trimmed.strip_prefix('/').unwrap_or(trimmed);
        let parts: Vec<String> = trimmed.split('/').map(|p| p.to_string()).collect();
        Self::new(parts).map_err(|_| KbError::InvalidPath(s.to_string()))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.classes[0]
    }

    pub fn terminal(&self) -> &str {
        &self.classes[self.classes.len() - 1]
    }
}

impl fmt::Display for ClassPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.classes.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(c)?;
        }
        Ok(())
    }
}

/// The class-paths of one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    pub entity: String,
    pub paths: Vec<ClassPath>,
}

impl PathSet {
    /// An entity without any class yields an empty set.
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Root class of the first path; used as the evaluation category.
    pub fn category(&self) -> Option<&str> {
        self.paths.first().map(|p| p.root())
    }
}

/// One positive training example `(P_e, a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingTuple {
    pub path_set: Arc<PathSet>,
    pub attribute: String,
}

/// Output of [`build_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub tuples: Vec<TrainingTuple>,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    SelfLoop { class: String },
    Cycle { classes: Vec<String> },
    UnknownClass { relation: &'static str, class: String },
    UnknownEntity { relation: &'static str, entity: String },
    UnknownAttribute { relation: &'static str, attribute: String },
    PathTooLong { terminal: String, length: usize, max: usize },
    BrokenGroundTruthPath { path: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { class } => write!(f, "self-loop on class `{class}`"),
            Violation::Cycle { classes } => write!(f, "hypernym cycle through {}", classes.join(", ")),
            Violation::UnknownClass { relation, class } => {
                write!(f, "{relation} references unknown class `{class}`")
            }
            Violation::UnknownEntity { relation, entity } => {
                write!(f, "{relation} references unknown entity `{entity}`")
            }
            Violation::UnknownAttribute { relation, attribute } => {
                write!(f, "{relation} references unknown attribute `{attribute}`")
            }
            Violation::PathTooLong { terminal, length, max } => {
                write!(f, "class `{terminal}` has a path of length {length} (max {max})")
            }
            Violation::BrokenGroundTruthPath { path } => {
                write!(f, "ground-truth path `{path}` does not follow hypernym edges")
            }
        }
    }
}

/// The knowledge-base subset `{E, C, A, R1, R2, R3}`. R1 is split into its
/// class-class and class-entity halves; their union is the original relation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KbSubset {
    pub entities: BTreeSet<String>,
    pub classes: BTreeSet<String>,
    pub attributes: BTreeSet<String>,
    /// `(hyponym class, hypernym class)`
    pub r1_class_edges: BTreeSet<(String, String)>,
    /// `(class, entity)`
    pub r1_entity_edges: BTreeSet<(String, String)>,
    /// `(entity, attribute)`
    pub r2: BTreeSet<(String, String)>,
    /// Ground-truth `(class-path, attribute)` pairs, when known.
    pub r3: Option<BTreeSet<(ClassPath, String)>>,
}

impl KbSubset {
    /// Build a KB whose id sets are exactly the ids the relations mention.
    pub fn from_relations(
        class_edges: impl IntoIterator<Item = (String, String)>,
        entity_edges: impl IntoIterator<Item = (String, String)>,
        r2: impl IntoIterator<Item = (String, String)>,
        r3: Option<BTreeSet<(ClassPath, String)>>,
    ) -> Self {
        let mut kb = KbSubset {
            r1_class_edges: class_edges.into_iter().collect(),
            r1_entity_edges: entity_edges.into_iter().collect(),
            r2: r2.into_iter().collect(),
            ..Default::default()
        };
        for (a, b) in &kb.r1_class_edges {
            kb.classes.insert(a.clone());
            kb.classes.insert(b.clone());
        }
        for (c, e) in &kb.r1_entity_edges {
            kb.classes.insert(c.clone());
            kb.entities.insert(e.clone());
        }
        for (e, a) in &kb.r2 {
            kb.entities.insert(e.clone());
            kb.attributes.insert(a.clone());
        }
        if let Some(r3) = &r3 {
            for (p, a) in r3 {
                kb.classes.extend(p.classes().iter().cloned());
                kb.attributes.insert(a.clone());
            }
        }
        kb.r3 = r3;
        kb
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with(DEFAULT_MAX_PATH_LEN)
    }

    /// Report every invariant violation; empty iff the KB is well formed.
    pub fn validate_with(&self, max_path_len: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        for (hypo, hyper) in &self.r1_class_edges {
            if hypo == hyper {
                out.push(Violation::SelfLoop { class: hypo.clone() });
            }
            for c in [hypo, hyper] {
                if !self.classes.contains(c) {
                    out.push(Violation::UnknownClass { relation: "r1", class: c.clone() });
                }
            }
        }
        for (c, e) in &self.r1_entity_edges {
            if !self.classes.contains(c) {
                out.push(Violation::UnknownClass { relation: "r1", class: c.clone() });
            }
            if !self.entities.contains(e) {
                out.push(Violation::UnknownEntity { relation: "r1", entity: e.clone() });
            }
        }
        for (e, a) in &self.r2 {
            if !self.entities.contains(e) {
                out.push(Violation::UnknownEntity { relation: "r2", entity: e.clone() });
            }
            if !self.attributes.contains(a) {
                out.push(Violation::UnknownAttribute { relation: "r2", attribute: a.clone() });
            }
        }
        let cyclic = self.cyclic_classes();
        if !cyclic.is_empty() {
            out.push(Violation::Cycle { classes: cyclic });
        } else if out.iter().all(|v| !matches!(v, Violation::SelfLoop { .. })) {
            out.extend(self.overlong_paths(max_path_len));
        }
        if let Some(r3) = &self.r3 {
            for (path, a) in r3 {
                for c in path.classes() {
                    if !self.classes.contains(c) {
                        out.push(Violation::UnknownClass { relation: "r3", class: c.clone() });
                    }
                }
                if !self.attributes.contains(a) {
                    out.push(Violation::UnknownAttribute { relation: "r3", attribute: a.clone() });
                }
                let follows_edges = path
                    .classes()
                    .windows(2)
                    .all(|w| self.r1_class_edges.contains(&(w[1].clone(), w[0].clone())));
                if !follows_edges {
                    out.push(Violation::BrokenGroundTruthPath { path: path.to_string() });
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Classes left after repeatedly peeling sources and sinks: exactly the
    /// classes lying on (or between) hypernym cycles.
    fn cyclic_classes(&self) -> Vec<String> {
        let mut alive: BTreeSet<&str> = BTreeSet::new();
        for (a, b) in &self.r1_class_edges {
            if a != b {
                alive.insert(a);
                alive.insert(b);
            }
        }
        let edges: Vec<(&str, &str)> = self
            .r1_class_edges
            .iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        loop {
            let mut has_in: BTreeSet<&str> = BTreeSet::new();
            let mut has_out: BTreeSet<&str> = BTreeSet::new();
            for (a, b) in &edges {
                if alive.contains(a) && alive.contains(b) {
                    has_out.insert(a);
                    has_in.insert(b);
                }
            }
            let before = alive.len();
            alive.retain(|c| has_in.contains(c) && has_out.contains(c));
            if alive.len() == before {
                break;
            }
        }
        alive.into_iter().map(String::from).collect()
    }

    fn overlong_paths(&self, max: usize) -> Vec<Violation> {
        let tax = Taxonomy::new(self);
        let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for c in &self.classes {
            let d = tax.depth(c, &mut depth);
            if d > max {
                out.push(Violation::PathTooLong { terminal: c.clone(), length: d, max });
            }
        }
        out
    }

    /// Keep only the given entities (and their relations); the taxonomy,
    /// attribute set and ground truth are unchanged.
    pub fn restrict_entities(&self, keep: &BTreeSet<String>) -> KbSubset {
        KbSubset {
            entities: self.entities.intersection(keep).cloned().collect(),
            classes: self.classes.clone(),
            attributes: self.attributes.clone(),
            r1_class_edges: self.r1_class_edges.clone(),
            r1_entity_edges: self
                .r1_entity_edges
                .iter()
                .filter(|(_, e)| keep.contains(e))
                .cloned()
                .collect(),
            r2: self.r2.iter().filter(|(e, _)| keep.contains(e)).cloned().collect(),
            r3: self.r3.clone(),
        }
    }

    pub fn attributes_of(&self, entity: &str) -> BTreeSet<String> {
        self.r2
            .range((entity.to_string(), String::new())..)
            .take_while(|(e, _)| e == entity)
            .map(|(_, a)| a.clone())
            .collect()
    }

    /// Ground-truth attributes planted on `path`, empty when R3 is absent.
    pub fn ground_truth_of(&self, path: &ClassPath) -> BTreeSet<String> {
        match &self.r3 {
            Some(r3) => r3
                .range((path.clone(), String::new())..)
                .take_while(|(p, _)| p == path)
                .map(|(_, a)| a.clone())
                .collect(),
            None => BTreeSet::new(),
        }
    }

    /// Distinct class-paths appearing in R3.
    pub fn ground_truth_paths(&self) -> Vec<ClassPath> {
        let mut paths: Vec<ClassPath> = match &self.r3 {
            Some(r3) => r3.iter().map(|(p, _)| p.clone()).collect(),
            None => Vec::new(),
        };
        paths.dedup();
        paths
    }
}

/// Adjacency view over a [`KbSubset`] used for path enumeration.
pub struct Taxonomy<'a> {
    hypernyms: BTreeMap<&'a str, Vec<&'a str>>,
    classes_of: BTreeMap<&'a str, Vec<&'a str>>,
    entities: &'a BTreeSet<String>,
    max_path_len: usize,
}

impl<'a> Taxonomy<'a> {
    pub fn new(kb: &'a KbSubset) -> Self {
        let mut hypernyms: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (hypo, hyper) in &kb.r1_class_edges {
            hypernyms.entry(hypo.as_str()).or_default().push(hyper.as_str());
        }
        let mut classes_of: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (c, e) in &kb.r1_entity_edges {
            classes_of.entry(e.as_str()).or_default().push(c.as_str());
        }
        Taxonomy {
            hypernyms,
            classes_of,
            entities: &kb.entities,
            max_path_len: DEFAULT_MAX_PATH_LEN,
        }
    }

    pub fn with_max_path_len(mut self, max: usize) -> Self {
        self.max_path_len = max;
        self
    }

    pub fn is_root(&self, class: &str) -> bool {
        self.hypernyms.get(class).is_none_or(|h| h.is_empty())
    }

    /// Length of the longest root-to-`class` path; assumes acyclicity.
    fn depth(&self, class: &'a str, memo: &mut BTreeMap<&'a str, usize>) -> usize {
        if let Some(d) = memo.get(class) {
            return *d;
        }
        let d = 1 + self
            .hypernyms
            .get(class)
            .map(|hs| hs.iter().map(|h| self.depth(h, memo)).max().unwrap_or(0))
            .unwrap_or(0);
        memo.insert(class, d);
        d
    }

    /// Every root-to-`class` walk, sorted lexicographically.
    pub fn paths_to(&self, class: &str) -> Vec<ClassPath> {
        let mut out = Vec::new();
        // Stack of partial walks, stored terminal-first.
        let mut stack: Vec<Vec<&str>> = vec![vec![class]];
        while let Some(walk) = stack.pop() {
            let top = walk[walk.len() - 1];
            match self.hypernyms.get(top) {
                Some(hypers) if !hypers.is_empty() => {
                    if walk.len() >= self.max_path_len {
                        continue;
                    }
                    for h in hypers {
                        if walk.contains(h) {
                            continue;
                        }
                        let mut next = walk.clone();
                        next.push(h);
                        stack.push(next);
                    }
                }
                _ => {
                    let classes = walk.iter().rev().map(|c| c.to_string()).collect();
                    out.push(ClassPath { classes });
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn path_set(&self, entity: &str) -> Result<PathSet, KbError> {
        if !self.entities.contains(entity) {
            return Err(KbError::UnknownEntity(entity.to_string()));
        }
        let mut paths: Vec<ClassPath> = self
            .classes_of
            .get(entity)
            .into_iter()
            .flatten()
            .flat_map(|c| self.paths_to(c))
            .collect();
        paths.sort();
        paths.dedup();
        Ok(PathSet { entity: entity.to_string(), paths })
    }
}

/// All maximal root-to-direct-class paths of `entity`.
pub fn extract_class_paths(kb: &KbSubset, entity: &str) -> Result<PathSet, KbError> {
    Taxonomy::new(kb).path_set(entity)
}

/// Build the training set: drop attribute-less entities, drop attributes
/// held by fewer than `min_attr_support` distinct entities, then emit one
/// tuple per surviving `(entity, attribute)` pair with a non-empty path set.
pub fn build_dataset(kb: &KbSubset, min_attr_support: usize) -> Result<Dataset, KbError> {
    if min_attr_support == 0 {
        return Err(KbError::ZeroSupport);
    }
    let violations = kb.validate();
    if !violations.is_empty() {
        return Err(KbError::Invalid(violations));
    }
    let mut attrs_of: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (e, a) in &kb.r2 {
        attrs_of.entry(e.as_str()).or_default().push(a.as_str());
    }
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    for attrs in attrs_of.values() {
        for a in attrs {
            *support.entry(a).or_default() += 1;
        }
    }
    let attributes: BTreeSet<String> = support
        .iter()
        .filter(|(_, n)| **n >= min_attr_support)
        .map(|(a, _)| a.to_string())
        .collect();

    let tax = Taxonomy::new(kb);
    let mut tuples = Vec::new();
    for (entity, attrs) in &attrs_of {
        let kept: Vec<&&str> = attrs.iter().filter(|a| attributes.contains(**a)).collect();
        if kept.is_empty() {
            continue;
        }
        let path_set = tax.path_set(entity)?;
        if path_set.is_empty() {
            continue;
        }
        let shared = Arc::new(path_set);
        for a in kept {
            tuples.push(TrainingTuple {
                path_set: Arc::clone(&shared),
                attribute: a.to_string(),
            });
        }
    }
    if tuples.is_empty() {
        return Err(KbError::EmptyDataset);
    }
    Ok(Dataset { tuples, attributes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::format;

    fn s(x: &str) -> String {
        x.to_string()
    }

    fn edges(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (s(a), s(b))).collect()
    }

    fn chain_kb() -> KbSubset {
        KbSubset::from_relations(
            edges(&[("x", "root"), ("y", "x")]),
            edges(&[("y", "e")]),
            edges(&[("e", "color")]),
            None,
        )
    }

    fn path(p: &str) -> ClassPath {
        ClassPath::parse(p).unwrap()
    }

    #[test]
    fn class_path_parsing() {
        assert_eq!(path("/a/b/c"), path("a/b/c"));
        assert_eq!(path("a/b/c").to_string(), "a/b/c");
        assert_eq!(path("a/b/c").len(), 3);
        assert!(ClassPath::parse("").is_err());
        assert!(ClassPath::parse("a//b").is_err());
        assert!(ClassPath::parse("a/b/a").is_err());
    }

    #[test]
    fn two_cycle_is_reported() {
        let kb = KbSubset::from_relations(edges(&[("A", "B"), ("B", "A")]), [], [], None);
        let report = kb.validate();
        assert_eq!(report, vec![Violation::Cycle { classes: vec![s("A"), s("B")] }]);
    }

    #[test]
    fn cycle_members_only() {
        // root <- a <- b <- c <- b forms a cycle {b, c}; a and root are fine.
        let kb = KbSubset::from_relations(
            edges(&[("a", "root"), ("b", "a"), ("c", "b"), ("b", "c")]),
            [],
            [],
            None,
        );
        assert_eq!(kb.validate(), vec![Violation::Cycle { classes: vec![s("b"), s("c")] }]);
    }

    #[test]
    fn well_formed_chain_validates() {
        assert!(chain_kb().validate().is_empty());
    }

    #[test]
    fn dangling_and_self_loop() {
        let mut kb = chain_kb();
        kb.r2.insert((s("ghost"), s("color")));
        kb.r1_class_edges.insert((s("x"), s("x")));
        let report = kb.validate();
        assert!(report.contains(&Violation::UnknownEntity { relation: "r2", entity: s("ghost") }));
        assert!(report.contains(&Violation::SelfLoop { class: s("x") }));
        kb.r2.insert((s("e"), s("weight")));
        assert!(kb
            .validate()
            .contains(&Violation::UnknownAttribute { relation: "r2", attribute: s("weight") }));
    }

    #[test]
    fn overlong_paths_are_rejected() {
        let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let chain: Vec<(String, String)> =
            names.windows(2).map(|w| (w[1].clone(), w[0].clone())).collect();
        let kb = KbSubset::from_relations(chain, [], [], None);
        assert!(kb.validate_with(6).is_empty());
        let report = kb.validate_with(5);
        assert_eq!(
            report,
            vec![Violation::PathTooLong { terminal: s("c5"), length: 6, max: 5 }]
        );
    }

    #[test]
    fn ground_truth_paths_must_follow_edges() {
        let mut kb = chain_kb();
        let mut r3 = BTreeSet::new();
        r3.insert((path("root/x/y"), s("color")));
        kb.r3 = Some(r3.clone());
        assert!(kb.validate().is_empty());
        r3.insert((path("root/y"), s("color")));
        kb.r3 = Some(r3);
        assert_eq!(
            kb.validate(),
            vec![Violation::BrokenGroundTruthPath { path: s("root/y") }]
        );
    }

    #[test]
    fn chain_paths() {
        let kb = chain_kb();
        let ps = extract_class_paths(&kb, "e").unwrap();
        assert_eq!(ps.paths, vec![path("root/x/y")]);
        assert_eq!(ps.category(), Some("root"));
        assert_eq!(
            extract_class_paths(&kb, "nobody"),
            Err(KbError::UnknownEntity(s("nobody")))
        );
    }

    #[test]
    fn entity_without_class_gives_empty_set() {
        let mut kb = chain_kb();
        kb.entities.insert(s("floating"));
        let ps = extract_class_paths(&kb, "floating").unwrap();
        assert!(ps.is_empty());
        assert_eq!(ps.category(), None);
    }

    /// Independent oracle: enumerate every sequence of classes (by DFS from
    /// each root downward) and keep those that end at one of the entity's
    /// direct classes.
    fn oracle_paths(kb: &KbSubset, entity: &str) -> Vec<ClassPath> {
        let roots: Vec<&String> = kb
            .classes
            .iter()
            .filter(|c| !kb.r1_class_edges.iter().any(|(h, _)| h == *c))
            .collect();
        let direct: BTreeSet<&String> = kb
            .r1_entity_edges
            .iter()
            .filter(|(_, e)| e == entity)
            .map(|(c, _)| c)
            .collect();
        let mut out = Vec::new();
        fn walk(kb: &KbSubset, cur: Vec<String>, direct: &BTreeSet<&String>, out: &mut Vec<ClassPath>) {
            let last = cur.last().unwrap().clone();
            if direct.contains(&last) {
                out.push(ClassPath { classes: cur.clone() });
            }
            for (hypo, hyper) in &kb.r1_class_edges {
                if *hyper == last && !cur.contains(hypo) {
                    let mut next = cur.clone();
                    next.push(hypo.clone());
                    walk(kb, next, direct, out);
                }
            }
        }
        for r in roots {
            walk(kb, vec![r.clone()], &direct, &mut out);
        }
        out.sort();
        out
    }

    #[test]
    fn diamond_yields_one_path_per_walk() {
        let kb = KbSubset::from_relations(
            edges(&[("x1", "root"), ("x2", "root"), ("y", "x1"), ("y", "x2")]),
            edges(&[("y", "e")]),
            [],
            None,
        );
        let ps = extract_class_paths(&kb, "e").unwrap();
        assert_eq!(ps.paths, oracle_paths(&kb, "e"));
        assert_eq!(ps.paths, vec![path("root/x1/y"), path("root/x2/y")]);
    }

    #[test]
    fn two_direct_classes() {
        let kb = KbSubset::from_relations(
            edges(&[("a2", "a1"), ("a3", "a2"), ("b2", "b1"), ("b3", "b2")]),
            edges(&[("a3", "e"), ("b3", "e")]),
            [],
            None,
        );
        let ps = extract_class_paths(&kb, "e").unwrap();
        assert_eq!(ps.paths.len(), 2);
        assert_eq!(ps.paths, oracle_paths(&kb, "e"));
    }

    #[test]
    fn support_threshold_drops_rare_attributes() {
        let mut entity_edges = Vec::new();
        let mut r2 = Vec::new();
        for i in 0..20 {
            let e = format!("e{i}");
            entity_edges.push((s("y"), e.clone()));
            r2.push((e.clone(), s("common")));
            if i < 19 {
                r2.push((e, s("rare")));
            }
        }
        let kb = KbSubset::from_relations(edges(&[("y", "root")]), entity_edges, r2, None);
        let ds = build_dataset(&kb, DEFAULT_MIN_ATTR_SUPPORT).unwrap();
        assert_eq!(ds.attributes, [s("common")].into_iter().collect());
        assert_eq!(ds.tuples.len(), 20);
        assert!(ds.tuples.iter().all(|t| t.attribute == "common"));

        let ds = build_dataset(&kb, 1).unwrap();
        assert_eq!(ds.tuples.len(), 39);
        assert!(matches!(build_dataset(&kb, 21), Err(KbError::EmptyDataset)));
        assert_eq!(build_dataset(&kb, 0), Err(KbError::ZeroSupport));
    }

    #[test]
    fn tuples_share_one_path_set() {
        let kb = KbSubset::from_relations(
            edges(&[("a", "r1"), ("b", "r2")]),
            edges(&[("a", "e"), ("b", "e"), ("a", "lonely")]),
            edges(&[("e", "p"), ("e", "q"), ("e", "r")]),
            None,
        );
        let ds = build_dataset(&kb, 1).unwrap();
        // "lonely" has no attributes and is filtered out.
        assert_eq!(ds.tuples.len(), 3);
        assert_eq!(ds.tuples[0].path_set.paths.len(), 2);
        assert!(ds.tuples.windows(2).all(|w| Arc::ptr_eq(&w[0].path_set, &w[1].path_set)));
        let attrs: Vec<&str> = ds.tuples.iter().map(|t| t.attribute.as_str()).collect();
        assert_eq!(attrs, ["p", "q", "r"]);
    }

    #[test]
    fn invalid_kb_is_rejected_by_build() {
        let kb = KbSubset::from_relations(edges(&[("A", "B"), ("B", "A")]), [], [], None);
        assert!(matches!(build_dataset(&kb, 1), Err(KbError::Invalid(_))));
    }

    #[test]
    fn restrict_and_lookups() {
        let kb = KbSubset::from_relations(
            edges(&[("a", "r")]),
            edges(&[("a", "e1"), ("a", "e2")]),
            edges(&[("e1", "p"), ("e2", "q"), ("e1", "z")]),
            None,
        );
        let keep: BTreeSet<String> = [s("e1")].into_iter().collect();
        let small = kb.restrict_entities(&keep);
        assert_eq!(small.entities, keep);
        assert_eq!(small.attributes_of("e1"), [s("p"), s("z")].into_iter().collect());
        assert!(small.attributes_of("e2").is_empty());
        assert!(small.validate().is_empty());
    }

    /// Random DAG over `n` classes: edges only go from higher to lower index,
    /// which guarantees acyclicity.
    fn random_dag() -> impl Strategy<Value = KbSubset> {
        (3usize..12)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec((0..n, 0..n), 0..(2 * n)),
                    proptest::collection::vec(0..n, 1..4),
                )
            })
            .prop_map(|(_, raw, direct)| {
                let class_edges: Vec<(String, String)> = raw
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .map(|(a, b)| {
                        let (hypo, hyper) = if a > b { (a, b) } else { (b, a) };
                        (format!("c{hypo:02}"), format!("c{hyper:02}"))
                    })
                    .collect();
                let entity_edges: Vec<(String, String)> =
                    direct.into_iter().map(|c| (format!("c{c:02}"), s("e"))).collect();
                let mut kb = KbSubset::from_relations(class_edges, entity_edges, [], None);
                for i in 0..12 {
                    if kb.classes.len() < 3 {
                        kb.classes.insert(format!("c{i:02}"));
                    }
                }
                kb
            })
    }

    proptest! {
        #[test]
        fn extraction_is_complete_and_follows_edges(kb in random_dag()) {
            prop_assert!(kb.validate().is_empty());
            let ps = extract_class_paths(&kb, "e").unwrap();
            prop_assert_eq!(&ps.paths, &oracle_paths(&kb, "e"));
            for p in &ps.paths {
                prop_assert!(Taxonomy::new(&kb).is_root(p.root()));
                for w in p.classes().windows(2) {
                    prop_assert!(kb.r1_class_edges.contains(&(w[1].clone(), w[0].clone())));
                }
            }
        }
    }
}
