#![allow(dead_code)]

use std::path::PathBuf;

use kgic_core::ingest::{load_dataset, DatasetConfig, SplitRatios};
use kgic_core::{EntityMeta, KnowledgeGraph};

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

pub fn toy_config(seed: u64) -> DatasetConfig {
    DatasetConfig {
        triples_paths: vec![toy_dir().join("triples.tsv")],
        metadata_path: Some(toy_dir().join("metadata.tsv")),
        type_relation: None,
        split_ratios: SplitRatios::new(0.7, 0.15, 0.15).unwrap(),
        seed,
    }
}

pub fn toy_graph() -> KnowledgeGraph {
    load_dataset(&toy_config(0)).unwrap()
}

pub fn typed(types: &[&str], description: &str) -> EntityMeta {
    EntityMeta {
        types: types.iter().map(|t| t.to_string()).collect(),
        description: description.into(),
    }
}

/// A few hundred triples over people, cities and countries, typed and
/// described, for pipeline-level tests.
pub fn people_graph() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    let cities = ["Berlin", "Paris", "Rome", "Madrid", "Vienna", "Lisbon"];
    let countries = ["Germany", "France", "Italy", "Spain", "Austria", "Portugal"];
    let jobs = ["physicist", "painter", "writer", "composer"];
    for (c, k) in cities.iter().zip(&countries) {
        g.add_labeled(c, "country", k).unwrap();
        g.add_labeled(k, "capital", c).unwrap();
    }
    for i in 0..60 {
        let p = format!("person{i}");
        let city = cities[i % cities.len()];
        g.add_labeled(&p, "born_in", city).unwrap();
        g.add_labeled(&p, "citizen_of", countries[i % countries.len()]).unwrap();
        let job = jobs[i % jobs.len()];
        if i % 3 != 0 {
            g.add_labeled(&p, "occupation", job).unwrap();
        }
        if job == "composer" || job == "painter" {
            g.add_labeled(&p, "notable_work", &format!("work{i}")).unwrap();
        }
        let id = g.entity(&p).unwrap();
        g.set_meta(id, typed(&["human", job], &format!("{job} born in {city}")));
    }
    for c in cities {
        let id = g.entity(c).unwrap();
        g.set_meta(id, typed(&["city"], "city and capital"));
    }
    for k in countries {
        let id = g.entity(k).unwrap();
        g.set_meta(id, typed(&["country"], "sovereign state in Europe"));
    }
    g
}
