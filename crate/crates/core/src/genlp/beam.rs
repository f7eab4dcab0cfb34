use std::cmp::Ordering;

use super::scorer::{check_distribution, log_sum_exp, TokenScorer, NORMALIZATION_TOL};
use super::tokenizer::{TokenId, Vocabulary};
use super::trie::{NameTrie, NodeId};
use crate::error::{Error, Result};
use crate::graph::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamOptions {
    pub width: usize,
    /// Maximum tokens per hypothesis, END included.
    pub max_len: usize,
    /// Rank by mean per-token log-prob instead of the sum.
    pub length_normalize: bool,
}

impl BeamOptions {
    pub fn new(width: usize, max_len: usize) -> Self {
        Self {
            width,
            max_len,
            length_normalize: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.max_len == 0 {
            return Err(Error::InvalidArgument("beam width and max length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    /// False only for hypotheses cut off at the length limit.
    pub finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityPrediction {
    pub entity: EntityId,
    pub log_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub total: f64,
    pub mean: f64,
}

fn rank_key(h: &Hypothesis, normalize: bool) -> f64 {
    if normalize && !h.tokens.is_empty() {
        h.log_prob / h.tokens.len() as f64
    } else {
        h.log_prob
    }
}

fn beam_order(a: &Hypothesis, b: &Hypothesis, normalize: bool) -> Ordering {
    rank_key(b, normalize)
        .total_cmp(&rank_key(a, normalize))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn scored<S: TokenScorer + ?Sized>(scorer: &S, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>> {
    let lp = scorer.next_log_probs(prompt, prefix)?;
    check_distribution(&lp, scorer.vocabulary().len(), NORMALIZATION_TOL)?;
    Ok(lp)
}

fn extend(h: &Hypothesis, token: TokenId, log_prob: f64, end: TokenId) -> Hypothesis {
    let mut tokens = h.tokens.clone();
    tokens.push(token);
    Hypothesis {
        tokens,
        log_prob: h.log_prob + log_prob,
        finished: token == end,
    }
}

/// Keeps the best `slots` candidates (ties by token order) and moves
/// finished ones to `done`. Returns the surviving live set.
fn prune<T>(mut cands: Vec<(Hypothesis, T)>, slots: usize, normalize: bool, done: &mut Vec<(Hypothesis, T)>) -> Vec<(Hypothesis, T)> {
    cands.sort_by(|a, b| beam_order(&a.0, &b.0, normalize));
    cands.truncate(slots);
    let mut live = Vec::new();
    for c in cands {
        if c.0.finished {
            done.push(c);
        } else {
            live.push(c);
        }
    }
    live
}

/// Unconstrained beam search. At the final step only END is considered, so
/// every returned hypothesis ends in END unless END had probability zero
/// there (such hypotheses are kept with `finished = false`).
pub fn beam_search<S: TokenScorer + ?Sized>(scorer: &S, prompt: &str, opts: &BeamOptions) -> Result<Vec<Hypothesis>> {
    opts.validate()?;
    let end = scorer.vocabulary().end();
    let v = scorer.vocabulary().len() as TokenId;
    let mut live = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        (),
    )];
    let mut done = Vec::new();
    for step in 1..=opts.max_len {
        let last = step == opts.max_len;
        let mut cands = Vec::new();
        for (h, ()) in &live {
            let lp = scored(scorer, prompt, &h.tokens)?;
            if last {
                if lp[end as usize] == f64::NEG_INFINITY {
                    done.push((h.clone(), ()));
                } else {
                    cands.push((extend(h, end, lp[end as usize], end), ()));
                }
                continue;
            }
            for tok in 0..v {
                if lp[tok as usize] > f64::NEG_INFINITY {
                    cands.push((extend(h, tok, lp[tok as usize], end), ()));
                }
            }
        }
        let slots = opts.width.saturating_sub(done.len());
        live = prune(cands, slots, opts.length_normalize, &mut done);
        if done.len() >= opts.width || live.is_empty() {
            break;
        }
    }
    let mut out: Vec<Hypothesis> = done.into_iter().map(|(h, ())| h).collect();
    out.sort_by(|a, b| beam_order(a, b, opts.length_normalize));
    out.truncate(opts.width);
    Ok(out)
}

/// Beam search restricted to trie paths. Each step's log-probs are
/// renormalized over the allowed tokens (children of the current node, plus
/// END at terminal nodes). Paths that reach the length limit without
/// finishing are dropped. A terminal shared by several entities yields all
/// of them with the same log-prob.
pub fn constrained_beam_search<S: TokenScorer + ?Sized>(
    scorer: &S,
    trie: &NameTrie,
    prompt: &str,
    opts: &BeamOptions,
) -> Result<Vec<EntityPrediction>> {
    opts.validate()?;
    if trie.is_empty() {
        return Err(Error::Empty("entity trie"));
    }
    let end = scorer.vocabulary().end();
    let mut live: Vec<(Hypothesis, NodeId)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        NameTrie::ROOT,
    )];
    let mut done = Vec::new();
    for step in 1..=opts.max_len {
        let last = step == opts.max_len;
        let mut cands = Vec::new();
        for (h, node) in &live {
            let mut allowed: Vec<(TokenId, NodeId)> = if last { Vec::new() } else { trie.children(*node).collect() };
            if trie.is_terminal(*node) {
                allowed.push((end, *node));
            }
            if allowed.is_empty() {
                continue;
            }
            let lp = scored(scorer, prompt, &h.tokens)?;
            let masked: Vec<f64> = allowed.iter().map(|&(t, _)| lp[t as usize]).collect();
            let lse = log_sum_exp(&masked);
            if lse == f64::NEG_INFINITY {
                continue;
            }
            for (&(tok, next), &x) in allowed.iter().zip(&masked) {
                if x > f64::NEG_INFINITY {
                    cands.push((extend(h, tok, x - lse, end), next));
                }
            }
        }
        let slots = opts.width.saturating_sub(done.len());
        live = prune(cands, slots, opts.length_normalize, &mut done);
        if done.len() >= opts.width || live.is_empty() {
            break;
        }
    }
    done.sort_by(|a, b| beam_order(&a.0, &b.0, opts.length_normalize));
    Ok(done
        .iter()
        .flat_map(|(h, node)| {
            trie.entities(*node).iter().map(move |&entity| EntityPrediction {
                entity,
                log_prob: h.log_prob,
            })
        })
        .collect())
}

/// Maps finished free-form hypotheses to entities by exact label match;
/// generations naming no entity are dropped.
pub fn resolve_entities(hyps: &[Hypothesis], trie: &NameTrie, vocab: &Vocabulary) -> Vec<EntityPrediction> {
    let mut out = Vec::new();
    for h in hyps.iter().filter(|h| h.finished) {
        let node = vocab
            .decode(&h.tokens)
            .and_then(|s| vocab.encode(&s))
            .ok()
            .and_then(|ids| trie.walk(&ids));
        if let Some(n) = node {
            out.extend(trie.entities(n).iter().map(|&entity| EntityPrediction {
                entity,
                log_prob: h.log_prob,
            }));
        }
    }
    out
}

/// Autoregressive negative log-likelihood of `target`, which must end in
/// END. Returns the sum and the per-token mean.
pub fn sequence_nll<S: TokenScorer + ?Sized>(scorer: &S, prompt: &str, target: &[TokenId]) -> Result<Nll> {
    let vocab = scorer.vocabulary();
    if target.last() != Some(&vocab.end()) {
        return Err(Error::InvalidArgument("target must end with the end token".into()));
    }
    if let Some(&bad) = target.iter().find(|&&t| t as usize >= vocab.len()) {
        return Err(Error::UnknownToken(format!("#{bad}")));
    }
    let mut total = 0.0;
    for i in 0..target.len() {
        let lp = scored(scorer, prompt, &target[..i])?;
        total -= lp[target[i] as usize];
    }
    Ok(Nll {
        total,
        mean: total / target.len() as f64,
    })
}
