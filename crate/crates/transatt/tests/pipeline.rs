use std::collections::{BTreeMap, BTreeSet};

use transatt::checkpoint;
use transatt::exec::Rayon;
use transatt::synth_io;
use transatt_core::eval::{run_apc, run_ape, AttributeRanker, EntityQuery, DEFAULT_KS};
use transatt_core::kb::{build_dataset, ClassPath, Taxonomy};
use transatt_core::model::ModelConfig;
use transatt_core::synth::{generate, SynthConfig, SynthKb};
use transatt_core::train::{train, Sequential, TrainConfig, TrainOutcome};

fn small_synth() -> SynthKb {
    let cfg = SynthConfig { num_entities: 250, num_paths: 18, seed: 11, ..Default::default() };
    generate(&cfg).unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig { word_dim: 10, path_dim: 10, attr_dim: 10, seed: 2, ..Default::default() }
}

fn fit<E: transatt_core::train::Executor>(synth: &SynthKb, exec: &E) -> TrainOutcome {
    let kb = synth.kb.restrict_entities(&synth.train_entities);
    let ds = build_dataset(&kb, 5).unwrap();
    let cfg = TrainConfig { epochs: 6, batch_size: 16, seed: 4, ..Default::default() };
    train(&ds, &small_model(), &cfg, None, exec, |_, _| {}).unwrap()
}

fn queries(synth: &SynthKb) -> Vec<EntityQuery> {
    let tax = Taxonomy::new(&synth.kb);
    synth
        .test_entities
        .iter()
        .map(|e| EntityQuery { paths: tax.path_set(e).unwrap(), relevant: synth.kb.attributes_of(e) })
        .collect()
}

fn truth(synth: &SynthKb) -> BTreeMap<ClassPath, BTreeSet<String>> {
    let mut t: BTreeMap<ClassPath, BTreeSet<String>> = BTreeMap::new();
    for (p, a) in synth.kb.r3.iter().flatten() {
        t.entry(p.clone()).or_default().insert(a.clone());
    }
    t
}

#[test]
fn rayon_matches_sequential_bitwise() {
    let synth = small_synth();
    let seq = fit(&synth, &Sequential);
    let par = fit(&synth, &Rayon);
    assert_eq!(checkpoint::to_json(&seq.checkpoint).unwrap(), checkpoint::to_json(&par.checkpoint).unwrap());
    assert_eq!(seq.state.loss_history, par.state.loss_history);

    let model = &seq.checkpoint.model;
    let q = queries(&synth);
    let none = BTreeSet::new();
    assert_eq!(
        run_ape(model, &q, &DEFAULT_KS, &none, "planted", &Sequential).unwrap(),
        run_ape(model, &q, &DEFAULT_KS, &none, "planted", &Rayon).unwrap()
    );
    let t = truth(&synth);
    assert_eq!(
        run_apc(model, &synth.leaf_paths, &t, &DEFAULT_KS, "planted", &Sequential).unwrap(),
        run_apc(model, &synth.leaf_paths, &t, &DEFAULT_KS, "planted", &Rayon).unwrap()
    );
}

#[test]
fn reloaded_checkpoint_ranks_identically() {
    let synth = small_synth();
    let out = fit(&synth, &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.json");
    checkpoint::save(&out.checkpoint, &file).unwrap();
    let back = checkpoint::load(&file).unwrap();
    assert_eq!(back, out.checkpoint);

    let (a, b) = (&out.checkpoint.model, &back.model);
    let none = BTreeSet::new();
    for p in &synth.leaf_paths {
        let (x, y) = (a.rank_path(p, 20).unwrap(), b.rank_path(p, 20).unwrap());
        assert!(x.iter().zip(&y).all(|(u, v)| u.name == v.name && u.score.to_bits() == v.score.to_bits()));
    }
    for q in queries(&synth).iter().take(40) {
        assert_eq!(a.rank_entity(&q.paths, 20, &none).unwrap(), b.rank_entity(&q.paths, 20, &none).unwrap());
    }
}

#[test]
fn synthetic_directory_trains_like_memory() {
    let synth = small_synth();
    let dir = tempfile::tempdir().unwrap();
    synth_io::export(&synth, &SynthConfig { num_entities: 250, num_paths: 18, seed: 11, ..Default::default() }, dir.path())
        .unwrap();
    let back = synth_io::import(dir.path()).unwrap();
    let rebuilt = SynthKb {
        kb: back.kb,
        train_entities: back.train_entities,
        test_entities: back.test_entities,
        holdout_paths: back.holdout_paths,
        leaf_paths: synth.leaf_paths.clone(),
    };
    assert_eq!(
        checkpoint::to_json(&fit(&synth, &Sequential).checkpoint).unwrap(),
        checkpoint::to_json(&fit(&rebuilt, &Sequential).checkpoint).unwrap()
    );
}
