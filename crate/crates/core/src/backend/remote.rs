use std::collections::HashMap;
use std::sync::{Mutex, MutexGuard};

use super::client::{BackendClient, BackendConfig};
use crate::error::{Error, Result};
use crate::genlp::{check_distribution, log_sum_exp, render_entity_text, FieldMask, TokenId, TokenScorer, Vocabulary};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::props::{PropertyPredictor, PropertyScores};

/// Looser than the local check: remote models compute in lower precision.
pub const REMOTE_NORMALIZATION_TOL: f64 = 1e-4;

fn lock(m: &Mutex<BackendClient>) -> MutexGuard<'_, BackendClient> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Reorders `(label, value)` pairs into `order`, which must be matched
/// exactly: no missing, unknown or repeated labels.
fn align(pairs: Vec<(String, f64)>, index: &HashMap<String, usize>, what: &str) -> Result<Vec<f64>> {
    let payload = || format!("{pairs:?}");
    if pairs.len() != index.len() {
        return Err(Error::protocol(
            format!("expected {} {what} entries, got {}", index.len(), pairs.len()),
            payload(),
        ));
    }
    let mut out = vec![f64::NAN; index.len()];
    let mut seen = vec![false; index.len()];
    for (label, v) in &pairs {
        let i = *index
            .get(label)
            .ok_or_else(|| Error::protocol(format!("unknown {what} `{label}`"), payload()))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::protocol(format!("repeated {what} `{label}`"), payload()));
        }
        out[i] = *v;
    }
    Ok(out)
}

/// [`TokenScorer`] served by a backend. Calls are serialized through one
/// connection.
pub struct RemoteTokenScorer {
    client: Mutex<BackendClient>,
    vocab: Vocabulary,
    index: HashMap<String, usize>,
}

impl RemoteTokenScorer {
    pub fn connect(config: BackendConfig) -> Result<Self> {
        Self::new(BackendClient::connect(config)?)
    }

    pub fn new(client: BackendClient) -> Result<Self> {
        let tokens = client.session().vocab.clone();
        let vocab = Vocabulary::new(tokens)?;
        let index = vocab.tokens().iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            client: Mutex::new(client),
            vocab,
            index,
        })
    }

    pub fn into_client(self) -> BackendClient {
        self.client.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl TokenScorer for RemoteTokenScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Validates within [`REMOTE_NORMALIZATION_TOL`]; values already
    /// normalized to 1e-6 pass through untouched, others are shifted by
    /// their log-sum-exp.
    fn next_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let prefix: Vec<String> = prefix
            .iter()
            .map(|&t| {
                self.vocab
                    .token(t)
                    .map(str::to_owned)
                    .ok_or_else(|| Error::UnknownToken(format!("#{t}")))
            })
            .collect::<Result<_>>()?;
        let pairs = lock(&self.client).next_log_probs(prompt, &prefix)?;
        let raw = format!("{pairs:?}");
        let mut lp = align(pairs, &self.index, "token")?;
        check_distribution(&lp, self.vocab.len(), REMOTE_NORMALIZATION_TOL).map_err(|e| Error::protocol(e.to_string(), raw))?;
        let lse = log_sum_exp(&lp);
        if lse.abs() > 1e-6 {
            lp.iter_mut().for_each(|x| *x -= lse);
        }
        Ok(lp)
    }
}

/// Stage-one scores from a backend classifier.
pub struct RemotePropertyScorer<'g> {
    client: Mutex<BackendClient>,
    graph: &'g KnowledgeGraph,
    mask: FieldMask,
    index: HashMap<String, usize>,
}

impl<'g> RemotePropertyScorer<'g> {
    /// The handshake's relation list must be exactly the graph's relations.
    pub fn new(client: BackendClient, graph: &'g KnowledgeGraph, mask: FieldMask) -> Result<Self> {
        let index: HashMap<String, usize> = graph
            .relation_labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let session = client.session().relations.clone();
        align(session.iter().map(|r| (r.clone(), 0.0)).collect(), &index, "relation")?;
        Ok(Self {
            client: Mutex::new(client),
            graph,
            mask,
            index,
        })
    }

    pub fn into_client(self) -> BackendClient {
        self.client.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl PropertyPredictor for RemotePropertyScorer<'_> {
    fn name(&self) -> &str {
        "remote"
    }

    fn predict(&self, entity: EntityId) -> Result<PropertyScores> {
        let text = render_entity_text(self.graph.entity_label(entity), self.graph.meta(entity), self.mask);
        let pairs = lock(&self.client).property_scores(&text)?;
        let raw = format!("{pairs:?}");
        let scores = align(pairs, &self.index, "relation")?;
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(Error::protocol(
                format!("score {s} for `{}` outside [0, 1]", self.graph.relation_labels()[i]),
                raw,
            ));
        }
        Ok(scores.into())
    }
}
