//! In-memory knowledge graph: interned entities and relations, deduplicated
//! triples, per-entity metadata and head indexes.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMeta {
    /// Class labels in source order; the first one is the primary type.
    pub types: Vec<String>,
    pub description: String,
}

impl EntityMeta {
    pub fn primary_type(&self) -> Option<&str> {
        self.types.first().map(String::as_str)
    }
}

/// Label <-> dense handle bijection.
#[derive(Debug, Clone, Default)]
struct Interner {
    labels: Vec<String>,
    handles: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&h) = self.handles.get(label) {
            return h;
        }
        let h = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.handles.insert(label.to_owned(), h);
        h
    }

    fn get(&self, label: &str) -> Option<u32> {
        self.handles.get(label).copied()
    }

    fn label(&self, handle: u32) -> &str {
        &self.labels[handle as usize]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut interner = Interner::default();
        for label in labels {
            if interner.handles.contains_key(&label) {
                return Err(Error::InvalidArgument(format!("duplicate label `{label}`")));
            }
            interner.intern(&label);
        }
        Ok(interner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Entity,
    Relation,
}

/// Binary `|E| x |R|` matrix of which relations each entity heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl PropertyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged property rows".into()));
        }
        let n = rows.len();
        Ok(Self {
            rows: n,
            cols,
            bits: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.cols + j] = value;
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    /// Column indices set in row `i`.
    pub fn row_support(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect()
    }
}

/// The graph `(E, R, F, C, D)`. Built single-threaded, then shared read-only.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    triple_index: HashMap<Triple, usize>,
    meta: Vec<EntityMeta>,
    by_head: Vec<Vec<usize>>,
    by_head_relation: HashMap<(EntityId, RelationId), Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str, kind: Kind) -> Result<u32> {
        match kind {
            Kind::Entity => self.intern_entity(label).map(|e| e.0),
            Kind::Relation => self.intern_relation(label).map(|r| r.0),
        }
    }

    pub fn intern_entity(&mut self, label: &str) -> Result<EntityId> {
        if label.is_empty() {
            return Err(Error::InvalidArgument("empty entity label".into()));
        }
        let h = self.entities.intern(label);
        if h as usize == self.meta.len() {
            self.meta.push(EntityMeta::default());
            self.by_head.push(Vec::new());
        }
        Ok(EntityId(h))
    }

    pub fn intern_relation(&mut self, label: &str) -> Result<RelationId> {
        if label.is_empty() {
            return Err(Error::InvalidArgument("empty relation label".into()));
        }
        Ok(RelationId(self.relations.intern(label)))
    }

    /// Adds a triple; returns its index, or `None` if it was already present.
    pub fn add_triple(&mut self, triple: Triple) -> Result<Option<usize>> {
        if triple.head.index() >= self.num_entities()
            || triple.tail.index() >= self.num_entities()
            || triple.relation.index() >= self.num_relations()
        {
            return Err(Error::InvalidArgument(format!(
                "triple ({}, {}, {}) references an unknown handle",
                triple.head, triple.relation, triple.tail
            )));
        }
        if self.triple_index.contains_key(&triple) {
            return Ok(None);
        }
        let idx = self.triples.len();
        self.triples.push(triple);
        self.triple_index.insert(triple, idx);
        self.by_head[triple.head.index()].push(idx);
        self.by_head_relation
            .entry((triple.head, triple.relation))
            .or_default()
            .push(idx);
        Ok(Some(idx))
    }

    pub fn add_labeled(&mut self, head: &str, relation: &str, tail: &str) -> Result<Option<usize>> {
        let h = self.intern_entity(head)?;
        let r = self.intern_relation(relation)?;
        let t = self.intern_entity(tail)?;
        self.add_triple(Triple::new(h, r, t))
    }

    pub fn set_meta(&mut self, entity: EntityId, meta: EntityMeta) {
        self.meta[entity.index()] = meta;
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, idx: usize) -> Triple {
        self.triples[idx]
    }

    pub fn triple_id(&self, triple: &Triple) -> Option<usize> {
        self.triple_index.get(triple).copied()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_index.contains_key(triple)
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entities.labels
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relations.labels
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.num_entities() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.num_relations() as u32).map(RelationId)
    }

    pub fn meta(&self, e: EntityId) -> &EntityMeta {
        &self.meta[e.index()]
    }

    /// Triple indices with `e` as head.
    pub fn by_head(&self, e: EntityId) -> &[usize] {
        &self.by_head[e.index()]
    }

    pub fn by_head_relation(&self, h: EntityId, r: RelationId) -> &[usize] {
        self.by_head_relation
            .get(&(h, r))
            .map_or(&[][..], Vec::as_slice)
    }

    /// Gold relevance vector of `entity` restricted to the triples in `subset`.
    pub fn property_vector(&self, entity: EntityId, subset: &[usize]) -> Result<Vec<bool>> {
        if entity.index() >= self.num_entities() {
            return Err(Error::UnknownEntity(entity.to_string()));
        }
        let mut v = vec![false; self.num_relations()];
        for &i in subset {
            let t = self.triples[i];
            if t.head == entity {
                v[t.relation.index()] = true;
            }
        }
        Ok(v)
    }

    pub fn property_matrix(&self, subset: &[usize]) -> PropertyMatrix {
        let mut m = PropertyMatrix::zeros(self.num_entities(), self.num_relations());
        for &i in subset {
            let t = self.triples[i];
            m.set(t.head.index(), t.relation.index(), true);
        }
        m
    }

    /// Writes the graph as a JSON snapshot.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let snapshot = Snapshot {
            entities: self.entities.labels.clone(),
            relations: self.relations.labels.clone(),
            triples: self
                .triples
                .iter()
                .map(|t| [t.head.0, t.relation.0, t.tail.0])
                .collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(writer, &snapshot)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_reader(reader)?;
        if snapshot.meta.len() != snapshot.entities.len() {
            return Err(Error::Shape("metadata rows do not match entity count".into()));
        }
        let mut g = KnowledgeGraph {
            entities: Interner::from_labels(snapshot.entities)?,
            relations: Interner::from_labels(snapshot.relations)?,
            ..Default::default()
        };
        g.by_head = vec![Vec::new(); g.entities.len()];
        g.meta = snapshot.meta;
        for [h, r, t] in snapshot.triples {
            g.add_triple(Triple::new(EntityId(h), RelationId(r), EntityId(t)))?;
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<[u32; 3]>,
    meta: Vec<EntityMeta>,
}

/// Disjoint train/valid/test partitions of a graph's triple indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSet {
    /// 64-bit FNV-1a over the sorted train indices (each as little-endian u64).
    pub fn fingerprint(&self) -> u64 {
        let mut sorted = self.train.clone();
        sorted.sort_unstable();
        fnv1a64(sorted.iter().flat_map(|&i| (i as u64).to_le_bytes()))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct heads of the given partition, ascending.
    pub fn heads(graph: &KnowledgeGraph, part: &[usize]) -> Vec<EntityId> {
        let mut seen = vec![false; graph.num_entities()];
        for &i in part {
            seen[graph.triple(i).head.index()] = true;
        }
        seen.iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(EntityId(i as u32)))
            .collect()
    }
}

pub fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

pub(crate) fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .into_iter()
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}
