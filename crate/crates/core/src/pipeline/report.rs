use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::candidates::{gold_pairs, CandidatePair};
use super::complete::{CompletionOutcome, InstancePrediction};
use crate::error::{Error, Result};
use crate::genlp::FieldMask;
use crate::graph::{fingerprint_hex, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::props::Prf;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Split fingerprints seen by each stage; all three must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    /// Split the gold triples come from.
    pub split: u64,
    pub stage_one: u64,
    pub stage_two: u64,
}

impl Fingerprints {
    pub fn same(fp: u64) -> Self {
        Self {
            split: fp,
            stage_one: fp,
            stage_two: fp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitsAt {
    pub k: usize,
    /// Uncovered gold triples count as misses.
    pub overall: f64,
    /// Restricted to gold triples whose pair was selected.
    pub conditional: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold_triples: usize,
    pub covered_triples: usize,
    pub gold_pairs: usize,
    pub predicted_pairs: usize,
    pub true_pairs: usize,
    pub completed_pairs: usize,
    pub failed_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub definitions: BTreeMap<String, String>,
    pub hits: Vec<HitsAt>,
    pub pair_precision: f64,
    pub coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_prediction: Option<Prf>,
    pub counts: Counts,
    pub split_fingerprint: String,
    pub config: serde_json::Value,
}

fn definitions() -> BTreeMap<String, String> {
    [
        (
            "coverage",
            "fraction of gold test triples whose (head, relation) pair was selected by stage one",
        ),
        (
            "pair_precision",
            "fraction of distinct selected (head, relation) pairs that occur in the gold test triples",
        ),
        (
            "hits_overall",
            "fraction of all gold test triples whose tail is in the top k for its pair; unselected pairs are misses",
        ),
        (
            "hits_conditional",
            "same as hits_overall, restricted to gold triples whose pair was selected",
        ),
        (
            "closed_world",
            "a predicted tail counts only when the triple is a gold test triple",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

/// Scores completed pairs against held-out gold triples.
///
/// Refuses to run when the stages were trained on different splits, or
/// when `gold` is empty.
pub fn eval_ic(
    pairs: &[CandidatePair],
    outcome: &CompletionOutcome,
    gold: &[Triple],
    ks: &[usize],
    fingerprints: Fingerprints,
) -> Result<EvalReport> {
    if fingerprints.stage_one != fingerprints.stage_two || fingerprints.split != fingerprints.stage_one {
        return Err(Error::Leakage(format!(
            "split fingerprint mismatch: evaluation {}, stage one {}, stage two {}",
            fingerprint_hex(fingerprints.split),
            fingerprint_hex(fingerprints.stage_one),
            fingerprint_hex(fingerprints.stage_two)
        )));
    }
    if gold.is_empty() {
        return Err(Error::Empty("gold test triples"));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }

    let selected: HashSet<(EntityId, RelationId)> = pairs.iter().map(|p| (p.head, p.relation)).collect();
    let mut tails: HashMap<(EntityId, RelationId), &[(EntityId, f64)]> = HashMap::new();
    for p in &outcome.predictions {
        tails.entry((p.pair.head, p.pair.relation)).or_insert(&p.tails);
    }

    let mut covered = 0usize;
    let mut hit_counts = vec![0usize; ks.len()];
    for t in gold {
        if !selected.contains(&(t.head, t.relation)) {
            continue;
        }
        covered += 1;
        let rank = tails
            .get(&(t.head, t.relation))
            .and_then(|list| list.iter().position(|(e, _)| *e == t.tail))
            .map(|i| i + 1);
        if let Some(rank) = rank {
            for (c, &k) in hit_counts.iter_mut().zip(ks) {
                if rank <= k {
                    *c += 1;
                }
            }
        }
    }

    let gp = gold_pairs(gold);
    let true_pairs = selected.intersection(&gp).count();
    let n = gold.len() as f64;
    let hits = ks
        .iter()
        .zip(&hit_counts)
        .map(|(&k, &c)| HitsAt {
            k,
            overall: c as f64 / n,
            conditional: if covered == 0 { 0.0 } else { c as f64 / covered as f64 },
        })
        .collect();
    Ok(EvalReport {
        definitions: definitions(),
        hits,
        pair_precision: if selected.is_empty() {
            0.0
        } else {
            true_pairs as f64 / selected.len() as f64
        },
        coverage: covered as f64 / n,
        property_prediction: None,
        counts: Counts {
            gold_triples: gold.len(),
            covered_triples: covered,
            gold_pairs: gp.len(),
            predicted_pairs: selected.len(),
            true_pairs,
            completed_pairs: outcome.predictions.len(),
            failed_pairs: outcome.failures.len(),
        },
        split_fingerprint: fingerprint_hex(fingerprints.split),
        config: serde_json::Value::Null,
    })
}

impl EvalReport {
    pub fn hits_at(&self, k: usize) -> Option<&HitsAt> {
        self.hits.iter().find(|h| h.k == k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut rows = Vec::new();
        if let Some(p) = &self.property_prediction {
            rows.push(("property_precision".into(), format!("{:.4}", p.precision)));
            rows.push(("property_recall".into(), format!("{:.4}", p.recall)));
            rows.push(("property_f1".into(), format!("{:.4}", p.f1)));
        }
        rows.push(("pair_precision".into(), format!("{:.4}", self.pair_precision)));
        rows.push(("coverage".into(), format!("{:.4}", self.coverage)));
        for h in &self.hits {
            rows.push((format!("hits@{}", h.k), format!("{:.4}", h.overall)));
        }
        for h in &self.hits {
            rows.push((format!("hits@{}_conditional", h.k), format!("{:.4}", h.conditional)));
        }
        let c = &self.counts;
        for (k, v) in [
            ("gold_triples", c.gold_triples),
            ("covered_triples", c.covered_triples),
            ("gold_pairs", c.gold_pairs),
            ("predicted_pairs", c.predicted_pairs),
            ("true_pairs", c.true_pairs),
            ("completed_pairs", c.completed_pairs),
            ("failed_pairs", c.failed_pairs),
        ] {
            rows.push((k.into(), v.to_string()));
        }
        rows
    }

    /// Aligned two-column table headed by the metric definitions.
    pub fn to_text(&self) -> String {
        let mut s = format!("instance completion (split {})\n", self.split_fingerprint);
        for (k, v) in &self.definitions {
            let _ = writeln!(s, "  {k}: {v}");
        }
        let rows = self.rows();
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<w$}  {v:>10}");
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }
}

/// `head<TAB>relation<TAB>tail<TAB>score<TAB>rank` rows.
pub fn write_predictions_tsv<W: Write>(mut out: W, graph: &KnowledgeGraph, predictions: &[InstancePrediction]) -> Result<()> {
    for p in predictions {
        for (i, (tail, score)) in p.tails.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                graph.entity_label(p.pair.head),
                graph.relation_label(p.pair.relation),
                graph.entity_label(*tail),
                score,
                i + 1
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: FieldMask,
    pub setting: String,
    pub report: EvalReport,
}

/// Runs `run` once per mask; everything except the mask must be held fixed
/// by the caller.
pub fn ablate<F>(masks: &[FieldMask], mut run: F) -> Result<Vec<AblationRow>>
where
    F: FnMut(FieldMask) -> Result<EvalReport>,
{
    masks
        .iter()
        .map(|&mask| {
            Ok(AblationRow {
                mask,
                setting: mask.label().to_owned(),
                report: run(mask).map_err(|e| e.context(mask.label()))?,
            })
        })
        .collect()
}

fn ablation_cells(rows: &[AblationRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let ks: Vec<usize> = rows.first().map(|r| r.report.hits.iter().map(|h| h.k).collect()).unwrap_or_default();
    let mut header: Vec<String> = ["setting", "prop_f1", "pair_precision", "coverage"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(ks.iter().map(|k| format!("hits@{k}")));
    let body = rows
        .iter()
        .map(|r| {
            let mut cells = vec![
                r.setting.clone(),
                r.report
                    .property_prediction
                    .map_or_else(|| "-".to_owned(), |p| format!("{:.4}", p.f1)),
                format!("{:.4}", r.report.pair_precision),
                format!("{:.4}", r.report.coverage),
            ];
            cells.extend(r.report.hits.iter().map(|h| format!("{:.4}", h.overall)));
            cells
        })
        .collect();
    (header, body)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let (header, body) = ablation_cells(rows);
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut s = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    s
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let (header, body) = ablation_cells(rows);
    let mut s = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let _ = writeln!(s, "{}", row.join("\t"));
    }
    s
}
