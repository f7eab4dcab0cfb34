use std::collections::BTreeMap;

use super::tokenizer::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::EntityId;

pub type NodeId = usize;

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<TokenId, NodeId>,
    entities: Vec<EntityId>,
}

/// Prefix tree over tokenized entity labels. Terminal nodes hold every
/// entity carrying that label.
#[derive(Debug, Clone)]
pub struct NameTrie {
    nodes: Vec<Node>,
    terminals: usize,
    depth: usize,
}

impl NameTrie {
    pub const ROOT: NodeId = 0;

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        self.nodes[node].children.get(&token).copied()
    }

    /// Child tokens in ascending id order.
    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (TokenId, NodeId)> + '_ {
        self.nodes[node].children.iter().map(|(&t, &n)| (t, n))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        !self.nodes[node].entities.is_empty()
    }

    pub fn entities(&self, node: NodeId) -> &[EntityId] {
        &self.nodes[node].entities
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals
    }

    pub fn is_empty(&self) -> bool {
        self.terminals == 0
    }

    /// Token length of the longest label.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Follows `tokens` from the root.
    pub fn walk(&self, tokens: &[TokenId]) -> Option<NodeId> {
        tokens.iter().try_fold(Self::ROOT, |n, &t| self.child(n, t))
    }

    /// Every terminal path with its entities, depth-first in token order.
    pub fn paths(&self) -> Vec<(Vec<TokenId>, Vec<EntityId>)> {
        let mut out = Vec::new();
        let mut stack = vec![(Self::ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if self.is_terminal(node) {
                out.push((path.clone(), self.nodes[node].entities.clone()));
            }
            for (t, child) in self.children(node).collect::<Vec<_>>().into_iter().rev() {
                let mut p = path.clone();
                p.push(t);
                stack.push((child, p));
            }
        }
        out
    }
}

/// Builds the trie; a label the tokenizer cannot round-trip is an error
/// naming it. Empty labels are rejected.
pub fn build_trie<'a>(labels: impl IntoIterator<Item = (EntityId, &'a str)>, vocab: &Vocabulary) -> Result<NameTrie> {
    let mut trie = NameTrie {
        nodes: vec![Node::default()],
        terminals: 0,
        depth: 0,
    };
    for (entity, label) in labels {
        if label.is_empty() || !vocab.round_trips(label) {
            return Err(Error::RoundTrip(label.to_owned()));
        }
        let tokens = vocab.encode(label)?;
        let mut node = NameTrie::ROOT;
        for &t in &tokens {
            node = match trie.nodes[node].children.get(&t) {
                Some(&n) => n,
                None => {
                    trie.nodes.push(Node::default());
                    let n = trie.nodes.len() - 1;
                    trie.nodes[node].children.insert(t, n);
                    n
                }
            };
        }
        let ents = &mut trie.nodes[node].entities;
        if ents.is_empty() {
            trie.terminals += 1;
        }
        if !ents.contains(&entity) {
            ents.push(entity);
            ents.sort();
        }
        trie.depth = trie.depth.max(tokens.len());
    }
    if trie.terminals == 0 {
        return Err(Error::Empty("entity labels"));
    }
    Ok(trie)
}
