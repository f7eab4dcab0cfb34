use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EntityMeta;

/// Which optional fields to drop from prompts and entity text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMask {
    pub types: bool,
    pub description: bool,
}

impl FieldMask {
    pub const NONE: FieldMask = FieldMask {
        types: false,
        description: false,
    };

    /// The four combinations, unmasked first.
    pub fn all() -> [FieldMask; 4] {
        [
            FieldMask::NONE,
            FieldMask {
                types: true,
                description: false,
            },
            FieldMask {
                types: false,
                description: true,
            },
            FieldMask {
                types: true,
                description: true,
            },
        ]
    }

    pub fn label(&self) -> &'static str {
        match (self.types, self.description) {
            (false, false) => "full",
            (true, false) => "w/o types",
            (false, true) => "w/o description",
            (true, true) => "w/o types, w/o description",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub head: String,
    pub types: Vec<String>,
    pub description: Option<String>,
    pub relation: String,
    pub text: String,
}

fn entity_fields(head: &str, meta: &EntityMeta, mask: FieldMask) -> (Vec<String>, Option<String>, Vec<String>) {
    let mut parts = vec![format!("head: {head}")];
    let types = if mask.types { Vec::new() } else { meta.types.clone() };
    if !types.is_empty() {
        parts.push(format!("types: {}", types.join(", ")));
    }
    let description = (!mask.description && !meta.description.is_empty()).then(|| meta.description.clone());
    if let Some(d) = &description {
        parts.push(format!("description: {d}"));
    }
    (parts, description, types)
}

/// `head: {h}, types: {c}, description: {d}, relation: {r}, tail:` with
/// masked or empty fields left out entirely.
pub fn build_prompt(head: &str, meta: &EntityMeta, relation: &str, mask: FieldMask) -> Result<Prompt> {
    if head.is_empty() || relation.is_empty() {
        return Err(Error::InvalidArgument("prompt needs nonempty head and relation labels".into()));
    }
    let (mut parts, description, types) = entity_fields(head, meta, mask);
    parts.push(format!("relation: {relation}"));
    parts.push("tail:".to_owned());
    Ok(Prompt {
        head: head.to_owned(),
        types,
        description,
        relation: relation.to_owned(),
        text: parts.join(", "),
    })
}

/// Prompt rendering without the relation and tail fields; the text sent to
/// a remote property scorer.
pub fn render_entity_text(head: &str, meta: &EntityMeta, mask: FieldMask) -> String {
    entity_fields(head, meta, mask).0.join(", ")
}

/// Plain-text document for TF-IDF features: label, types, description.
pub fn entity_document(head: &str, meta: &EntityMeta, mask: FieldMask) -> String {
    let mut doc = head.to_owned();
    if !mask.types {
        for t in &meta.types {
            doc.push(' ');
            doc.push_str(t);
        }
    }
    if !mask.description && !meta.description.is_empty() {
        doc.push(' ');
        doc.push_str(&meta.description);
    }
    doc
}
