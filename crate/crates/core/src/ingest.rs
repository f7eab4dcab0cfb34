//! Dataset parsing, seeded stratified splitting and split-leakage checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{fingerprint_hex, EntityMeta, KnowledgeGraph, SplitSet};

/// Stratum for heads that carry no type.
pub const UNTYPED_CLASS: &str = "⊥";

/// Groups smaller than this go wholly to train.
const MIN_STRATUM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = Self { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be positive: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad ratios `{s}`: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => SplitRatios::new(*a, *b, *c),
            _ => Err(Error::InvalidArgument(format!(
                "expected three comma-separated ratios, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub triples_paths: Vec<PathBuf>,
    pub metadata_path: Option<PathBuf>,
    /// Relation whose tails are promoted to leading entity types (e.g. occupation).
    #[serde(default)]
    pub type_relation: Option<String>,
    pub split_ratios: SplitRatios,
    pub seed: u64,
}

/// Parses `head<TAB>relation<TAB>tail` lines; blank lines are skipped.
pub fn parse_triples<R: BufRead>(reader: R) -> Result<Vec<LabelTriple>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let [h, r, t] = [fields[0].trim(), fields[1].trim(), fields[2].trim()];
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                message: "empty field".into(),
            });
        }
        out.push(LabelTriple {
            head: h.to_owned(),
            relation: r.to_owned(),
            tail: t.to_owned(),
        });
    }
    Ok(out)
}

/// Parses `entity<TAB>type1,type2,...<TAB>description` lines. Later lines win.
pub fn parse_metadata<R: BufRead>(reader: R) -> Result<HashMap<String, EntityMeta>> {
    let mut out = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() < 2 || fields[0].trim().is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                message: "expected entity<TAB>types<TAB>description".into(),
            });
        }
        let types = fields[1]
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect();
        let description = fields.get(2).map_or("", |d| d.trim()).to_owned();
        out.insert(fields[0].trim().to_owned(), EntityMeta { types, description });
    }
    Ok(out)
}

/// Puts the tails of `relation` (e.g. occupation) in front of each head's types.
pub fn promote_relation_to_type(
    triples: &[LabelTriple],
    meta: &mut HashMap<String, EntityMeta>,
    relation: &str,
) {
    let mut promoted: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in triples.iter().filter(|t| t.relation == relation) {
        let tails = promoted.entry(t.head.as_str()).or_default();
        if !tails.contains(&t.tail.as_str()) {
            tails.push(t.tail.as_str());
        }
    }
    for (head, tails) in promoted {
        let m = meta.entry(head.to_owned()).or_default();
        let mut types: Vec<String> = tails.iter().map(|s| s.to_string()).collect();
        types.extend(m.types.drain(..).filter(|t| !tails.contains(&t.as_str())));
        m.types = types;
    }
}

/// Interns triples in file order and attaches metadata to known entities.
pub fn build_graph(triples: &[LabelTriple], meta: &HashMap<String, EntityMeta>) -> Result<KnowledgeGraph> {
    let mut g = KnowledgeGraph::new();
    for t in triples {
        g.add_labeled(&t.head, &t.relation, &t.tail)?;
    }
    for e in g.entity_ids().collect::<Vec<_>>() {
        if let Some(m) = meta.get(g.entity_label(e)) {
            g.set_meta(e, m.clone());
        }
    }
    Ok(g)
}

pub fn load_dataset(config: &DatasetConfig) -> Result<KnowledgeGraph> {
    if config.triples_paths.is_empty() {
        return Err(Error::Empty("triples paths"));
    }
    let mut triples = Vec::new();
    for path in &config.triples_paths {
        let file = File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        triples.extend(parse_triples(BufReader::new(file))?);
    }
    let mut meta = match &config.metadata_path {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            parse_metadata(BufReader::new(file))?
        }
        None => HashMap::new(),
    };
    if let Some(rel) = &config.type_relation {
        promote_relation_to_type(&triples, &mut meta, rel);
    }
    build_graph(&triples, &meta)
}

/// Splits triples per head primary type; each stratum is shuffled and cut at
/// the ratio boundaries with valid/test rounded to nearest and the remainder
/// in train.
pub fn stratified_split(graph: &KnowledgeGraph, ratios: SplitRatios, seed: u64) -> Result<SplitSet> {
    ratios.validate()?;
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in graph.triples().iter().enumerate() {
        let key = graph.meta(t.head).primary_type().unwrap_or(UNTYPED_CLASS);
        strata.entry(key).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = SplitSet::default();
    for (_, mut group) in strata {
        let n = group.len();
        if n < MIN_STRATUM {
            split.train.extend(group);
            continue;
        }
        group.shuffle(&mut rng);
        let (n_valid, n_test) = stratum_cuts(n, ratios);
        let n_train = n - n_valid - n_test;
        split.train.extend_from_slice(&group[..n_train]);
        split.valid.extend_from_slice(&group[n_train..n_train + n_valid]);
        split.test.extend_from_slice(&group[n_train + n_valid..]);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn stratum_cuts(n: usize, ratios: SplitRatios) -> (usize, usize) {
    let n_valid = ((n as f64) * ratios.valid).round() as usize;
    let n_test = ((n as f64) * ratios.test).round() as usize;
    let n_valid = n_valid.min(n);
    let n_test = n_test.min(n - n_valid);
    (n_valid, n_test)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// Triple index present in two partitions.
    Overlap { triple: usize, first: &'static str, second: &'static str },
    /// Triple index present in no partition.
    Uncovered { triple: usize },
    OutOfRange { triple: usize },
    FingerprintMismatch { stage: String, expected: u64, found: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap {
                triple,
                first,
                second,
            } => write!(f, "triple {triple} is in both {first} and {second}"),
            Violation::Uncovered { triple } => write!(f, "triple {triple} is in no split"),
            Violation::OutOfRange { triple } => write!(f, "triple index {triple} out of range"),
            Violation::FingerprintMismatch {
                stage,
                expected,
                found,
            } => write!(
                f,
                "split fingerprint mismatch for {stage}: expected {}, found {}",
                fingerprint_hex(*expected),
                fingerprint_hex(*found)
            ),
        }
    }
}

/// Checks partition disjointness/coverage and that every stage's training
/// data was derived from this exact train split. Empty result means pass.
pub fn leakage_check(
    split: &SplitSet,
    num_triples: usize,
    stage_fingerprints: &[(&str, u64)],
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut owner: Vec<Option<&'static str>> = vec![None; num_triples];
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        for &i in part {
            match owner.get_mut(i) {
                None => violations.push(Violation::OutOfRange { triple: i }),
                Some(slot @ None) => *slot = Some(name),
                Some(Some(first)) => violations.push(Violation::Overlap {
                    triple: i,
                    first,
                    second: name,
                }),
            }
        }
    }
    violations.extend(
        owner
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_none())
            .map(|(triple, _)| Violation::Uncovered { triple }),
    );
    let expected = split.fingerprint();
    for &(stage, found) in stage_fingerprints {
        if found != expected {
            violations.push(Violation::FingerprintMismatch {
                stage: stage.to_owned(),
                expected,
                found,
            });
        }
    }
    violations
}
