//! Recoin: class-frequency relevance of properties.
//!
//! For an entity with classes `C(e)`:
//!
//! ```text
//! score(p) = sum_{c in C(e)} freq(p, c) / sum_{c in C(e)} size(c)
//! ```
//!
//! `size(c)` counts every entity of class `c`; `freq(p, c)` counts those that
//! head at least one train triple with relation `p`.

use std::collections::HashMap;

use log::warn;

use super::{PropertyPredictor, PropertyScores};
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};

#[derive(Debug, Clone)]
pub struct ClassStats {
    class_index: HashMap<String, usize>,
    sizes: Vec<usize>,
    /// `freq[c][p]`
    freq: Vec<Vec<usize>>,
    num_relations: usize,
}

impl ClassStats {
    pub fn size(&self, class: &str) -> usize {
        self.class_index.get(class).map_or(0, |&c| self.sizes[c])
    }

    pub fn freq(&self, relation: usize, class: &str) -> usize {
        self.class_index
            .get(class)
            .map_or(0, |&c| self.freq[c][relation])
    }

    pub fn num_classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }
}

fn distinct_classes(graph: &KnowledgeGraph, e: EntityId) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for t in &graph.meta(e).types {
        if !out.contains(&t.as_str()) {
            out.push(t);
        }
    }
    out
}

pub fn build_class_stats(graph: &KnowledgeGraph, train: &[usize]) -> Result<ClassStats> {
    if train.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let props = graph.property_matrix(train);
    let mut stats = ClassStats {
        class_index: HashMap::new(),
        sizes: Vec::new(),
        freq: Vec::new(),
        num_relations: graph.num_relations(),
    };
    for e in graph.entity_ids() {
        let support = props.row_support(e.index());
        for class in distinct_classes(graph, e) {
            let next = stats.sizes.len();
            let c = *stats.class_index.entry(class.to_owned()).or_insert(next);
            if c == next {
                stats.sizes.push(0);
                stats.freq.push(vec![0; graph.num_relations()]);
            }
            stats.sizes[c] += 1;
            for &p in &support {
                stats.freq[c][p] += 1;
            }
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoinScores {
    pub scores: PropertyScores,
    /// Set when the entity has no class; scores are then all zero.
    pub classless: bool,
}

pub fn recoin_scores(graph: &KnowledgeGraph, entity: EntityId, stats: &ClassStats) -> RecoinScores {
    let classes = distinct_classes(graph, entity);
    let total: usize = classes.iter().map(|c| stats.size(c)).sum();
    if classes.is_empty() || total == 0 {
        return RecoinScores {
            scores: PropertyScores::zeros(stats.num_relations),
            classless: true,
        };
    }
    let scores = (0..stats.num_relations)
        .map(|p| {
            let hits: usize = classes.iter().map(|c| stats.freq(p, c)).sum();
            hits as f64 / total as f64
        })
        .collect::<Vec<_>>();
    RecoinScores {
        scores: scores.into(),
        classless: false,
    }
}

pub struct RecoinPredictor<'g> {
    graph: &'g KnowledgeGraph,
    stats: ClassStats,
}

impl<'g> RecoinPredictor<'g> {
    pub fn new(graph: &'g KnowledgeGraph, train: &[usize]) -> Result<Self> {
        Ok(Self {
            graph,
            stats: build_class_stats(graph, train)?,
        })
    }

    pub fn stats(&self) -> &ClassStats {
        &self.stats
    }
}

impl PropertyPredictor for RecoinPredictor<'_> {
    fn name(&self) -> &str {
        "recoin"
    }

    fn predict(&self, entity: EntityId) -> Result<PropertyScores> {
        let r = recoin_scores(self.graph, entity, &self.stats);
        if r.classless {
            warn!("recoin: entity `{}` has no class, scoring zeros", self.graph.entity_label(entity));
        }
        Ok(r.scores)
    }
}
