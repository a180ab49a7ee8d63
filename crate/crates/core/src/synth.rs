//! Synthetic knowledge bases with planted class-path → attribute ground
//! truth and multi-role entities.
//!
//! The taxonomy is a forest. Every root owns a thematic pool of attributes;
//! the leaf children of one parent class share a core set of attributes drawn
//! from that pool and additionally get attributes unique among siblings. An
//! entity attaches to one or more leaves and observes only the union of their
//! planted attributes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::kb::{ClassPath, KbSubset};
use crate::numerics::SplitMix64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
}

const ROOT_NAMES: [&str; 8] = ["thing", "abstraction", "person", "place", "event", "artifact", "organism", "substance"];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub num_root_classes: usize,
    pub branching_min: usize,
    pub branching_max: usize,
    /// Path length range, counted in classes from root to leaf.
    pub depth_min: usize,
    pub depth_max: usize,
    /// Target number of leaf paths; growth stops early if every leaf is at
    /// `depth_max`.
    pub num_paths: usize,
    pub num_attributes: usize,
    pub attrs_per_path_min: usize,
    pub attrs_per_path_max: usize,
    pub num_entities: usize,
    /// Mean of the truncated geometric number of paths per entity.
    pub paths_per_entity_mean: f64,
    pub paths_per_entity_max: usize,
    /// Fraction of a path's attributes shared with its sibling paths.
    pub attr_overlap_fraction: f64,
    /// Fraction of leaf paths attached to test entities only.
    pub holdout_path_fraction: f64,
    pub test_entity_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_root_classes: 3,
            branching_min: 2,
            branching_max: 4,
            depth_min: 3,
            depth_max: 4,
            num_paths: 60,
            num_attributes: 50,
            attrs_per_path_min: 6,
            attrs_per_path_max: 8,
            num_entities: 1000,
            paths_per_entity_mean: 2.0,
            paths_per_entity_max: 5,
            attr_overlap_fraction: 0.8,
            holdout_path_fraction: 0.1,
            test_entity_fraction: 0.2,
            seed: 42,
        }
    }
}

fn core_size(n: usize, overlap: f64) -> usize {
    (libm::round(overlap * n as f64) as usize).min(n)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::Config(msg));
        let counts = [
            ("num_root_classes", self.num_root_classes),
            ("branching_min", self.branching_min),
            ("num_paths", self.num_paths),
            ("num_attributes", self.num_attributes),
            ("attrs_per_path_min", self.attrs_per_path_min),
            ("num_entities", self.num_entities),
            ("paths_per_entity_max", self.paths_per_entity_max),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be at least 1"));
        }
        if self.branching_max < self.branching_min {
            return fail("branching_max is below branching_min".into());
        }
        if !(2..=8).contains(&self.depth_min) || !(2..=8).contains(&self.depth_max) || self.depth_max < self.depth_min {
            return fail(format!("depth range {}..={} must lie within 2..=8", self.depth_min, self.depth_max));
        }
        if self.attrs_per_path_max < self.attrs_per_path_min {
            return fail("attrs_per_path_max is below attrs_per_path_min".into());
        }
        for (name, v) in [
            ("attr_overlap_fraction", self.attr_overlap_fraction),
            ("holdout_path_fraction", self.holdout_path_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.test_entity_fraction) {
            return fail(format!("test_entity_fraction must lie in [0, 1), got {}", self.test_entity_fraction));
        }
        let max_mean = (self.paths_per_entity_max as f64 + 1.0) / 2.0;
        if !(self.paths_per_entity_mean >= 1.0 && self.paths_per_entity_mean <= max_mean) {
            return fail(format!(
                "paths_per_entity_mean must lie in [1, {max_mean}] for a maximum of {}",
                self.paths_per_entity_max
            ));
        }
        if self.num_root_classes > self.num_attributes {
            return fail("every root needs at least one attribute".into());
        }
        let pool = self.num_attributes / self.num_root_classes;
        for n in self.attrs_per_path_min..=self.attrs_per_path_max {
            let core = core_size(n, self.attr_overlap_fraction);
            let needed = core + self.branching_max * (n - core);
            if needed > pool {
                return fail(format!(
                    "{n} attributes per path with overlap {} need {needed} attributes per root pool, only {pool} available",
                    self.attr_overlap_fraction
                ));
            }
        }
        Ok(())
    }
}

/// Probability ratio `q` of a geometric distribution on `1..=max` with the
/// requested mean, found by bisection.
fn geometric_ratio(mean: f64, max: usize) -> f64 {
    let mean_of = |q: f64| {
        let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
        for k in 1..=max {
            num += k as f64 * w;
            den += w;
            w *= q;
        }
        num / den
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_of(mid) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sample_truncated_geometric(q: f64, max: usize, rng: &mut SplitMix64) -> usize {
    let mut weights = Vec::with_capacity(max);
    let mut w = 1.0;
    for _ in 0..max {
        weights.push(w);
        w *= q;
    }
    let total: f64 = weights.iter().sum();
    let mut u = rng.next_f64() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k + 1;
        }
        u -= w;
    }
    max
}

struct Node {
    name: String,
    parent: Option<usize>,
    depth: usize,
    children: Vec<usize>,
    root: usize,
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthKb {
    /// The KB with R3 populated.
    pub kb: KbSubset,
    pub train_entities: BTreeSet<String>,
    pub test_entities: BTreeSet<String>,
    /// Leaf paths attached to test entities only.
    pub holdout_paths: Vec<ClassPath>,
    /// All leaf paths, in generation order.
    pub leaf_paths: Vec<ClassPath>,
}

fn root_name(i: usize) -> String {
    match ROOT_NAMES.get(i) {
        Some(n) => String::from(*n),
        None => format!("root{i}"),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthKb, SynthError> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);

    // Forest growth.
    let mut nodes: Vec<Node> = (0..cfg.num_root_classes)
        .map(|r| Node { name: root_name(r), parent: None, depth: 1, children: Vec::new(), root: r })
        .collect();
    let mut leaves: Vec<usize> = (0..cfg.num_root_classes).collect();
    let expand = |leaf_pos: usize, nodes: &mut Vec<Node>, leaves: &mut Vec<usize>, rng: &mut SplitMix64| {
        let id = leaves.remove(leaf_pos);
        let b = rng.range_inclusive(cfg.branching_min, cfg.branching_max);
        for c in 1..=b {
            let child = Node {
                name: format!("{}-{c}", nodes[id].name),
                parent: Some(id),
                depth: nodes[id].depth + 1,
                children: Vec::new(),
                root: nodes[id].root,
            };
            nodes.push(child);
            let cid = nodes.len() - 1;
            nodes[id].children.push(cid);
            leaves.push(cid);
        }
    };
    while let Some(pos) = leaves.iter().position(|l| nodes[*l].depth < cfg.depth_min) {
        expand(pos, &mut nodes, &mut leaves, &mut rng);
    }
    while leaves.len() < cfg.num_paths {
        let open: Vec<usize> = (0..leaves.len()).filter(|p| nodes[leaves[*p]].depth < cfg.depth_max).collect();
        if open.is_empty() {
            break;
        }
        let pos = open[rng.below(open.len())];
        expand(pos, &mut nodes, &mut leaves, &mut rng);
    }
    leaves.sort_unstable();

    let path_of = |id: usize| {
        let mut classes = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            classes.push(nodes[c].name.clone());
            cur = nodes[c].parent;
        }
        classes.reverse();
        ClassPath::new(classes).expect("generated class names are distinct")
    };

    // Thematic attribute pools, one contiguous block per root.
    let pools: Vec<Vec<String>> = {
        let base = cfg.num_attributes / cfg.num_root_classes;
        let extra = cfg.num_attributes % cfg.num_root_classes;
        (0..cfg.num_root_classes)
            .map(|r| {
                let size = base + usize::from(r < extra);
                (0..size).map(|j| format!("{}_attr_{j:02}", root_name(r))).collect()
            })
            .collect()
    };

    // Planting: per parent, a core shared by its leaf children plus
    // attributes unique among those siblings.
    let mut planted: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for id in 0..nodes.len() {
        let leaf_children: Vec<usize> =
            nodes[id].children.iter().copied().filter(|c| nodes[*c].children.is_empty()).collect();
        if leaf_children.is_empty() {
            continue;
        }
        let n = rng.range_inclusive(cfg.attrs_per_path_min, cfg.attrs_per_path_max);
        let core = core_size(n, cfg.attr_overlap_fraction);
        let unique = n - core;
        let mut pool = pools[nodes[id].root].clone();
        rng.shuffle(&mut pool);
        let core_set: Vec<String> = pool[..core].to_vec();
        for (i, leaf) in leaf_children.iter().enumerate() {
            let start = core + i * unique;
            let mut set: BTreeSet<String> = core_set.iter().cloned().collect();
            set.extend(pool[start..start + unique].iter().cloned());
            planted.insert(*leaf, set);
        }
    }

    // Held-out leaves: each parent keeps at least one leaf child for training.
    let target = libm::round(cfg.holdout_path_fraction * leaves.len() as f64) as usize;
    let mut remaining: BTreeMap<usize, usize> = BTreeMap::new();
    for l in &leaves {
        *remaining.entry(nodes[*l].parent.expect("leaves have parents")).or_default() += 1;
    }
    let mut candidates = leaves.clone();
    rng.shuffle(&mut candidates);
    let mut holdout: BTreeSet<usize> = BTreeSet::new();
    for l in candidates {
        if holdout.len() >= target {
            break;
        }
        let parent = nodes[l].parent.expect("leaves have parents");
        let left = remaining.get_mut(&parent).expect("counted above");
        if *left > 1 {
            *left -= 1;
            holdout.insert(l);
        }
    }
    let seen_leaves: Vec<usize> = leaves.iter().copied().filter(|l| !holdout.contains(l)).collect();

    // Entities.
    let width = format!("{}", cfg.num_entities.saturating_sub(1)).len().max(4);
    let names: Vec<String> = (0..cfg.num_entities).map(|i| format!("e{i:0width$}")).collect();
    let mut order: Vec<usize> = (0..cfg.num_entities).collect();
    rng.shuffle(&mut order);
    let n_test = libm::round(cfg.test_entity_fraction * cfg.num_entities as f64) as usize;
    let test_ids: BTreeSet<usize> = order[..n_test.min(cfg.num_entities)].iter().copied().collect();
    let q = geometric_ratio(cfg.paths_per_entity_mean, cfg.paths_per_entity_max);

    let mut entity_edges = Vec::new();
    let mut r2 = BTreeSet::new();
    for (i, name) in names.iter().enumerate() {
        let is_test = test_ids.contains(&i);
        let mut choices = if is_test { leaves.clone() } else { seen_leaves.clone() };
        let k = if cfg.paths_per_entity_mean <= 1.0 {
            1
        } else {
            sample_truncated_geometric(q, cfg.paths_per_entity_max, &mut rng)
        }
        .min(choices.len());
        for j in 0..k {
            let pick = j + rng.below(choices.len() - j);
            choices.swap(j, pick);
            let leaf = choices[j];
            entity_edges.push((nodes[leaf].name.clone(), name.clone()));
            for a in &planted[&leaf] {
                r2.insert((name.clone(), a.clone()));
            }
        }
    }

    let class_edges = nodes
        .iter()
        .filter_map(|n| n.parent.map(|p| (n.name.clone(), nodes[p].name.clone())));
    let leaf_paths: Vec<ClassPath> = leaves.iter().map(|l| path_of(*l)).collect();
    let r3: BTreeSet<(ClassPath, String)> = leaves
        .iter()
        .zip(&leaf_paths)
        .flat_map(|(l, p)| planted[l].iter().map(move |a| (p.clone(), a.clone())))
        .collect();
    let kb = KbSubset::from_relations(class_edges, entity_edges, r2, Some(r3));

    Ok(SynthKb {
        kb,
        train_entities: (0..cfg.num_entities).filter(|i| !test_ids.contains(i)).map(|i| names[i].clone()).collect(),
        test_entities: test_ids.iter().map(|i| names[*i].clone()).collect(),
        holdout_paths: holdout.iter().map(|l| path_of(*l)).collect(),
        leaf_paths,
    })
}
