use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Reserved end-of-sequence token. Remote vocabularies must contain it.
pub const END_TOKEN: &str = "</s>";

/// Token inventory with greedy longest-match encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    end: TokenId,
    max_token_bytes: usize,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidArgument("empty token in vocabulary".into()));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token `{t}`")));
            }
        }
        let end = *index
            .get(END_TOKEN)
            .ok_or_else(|| Error::InvalidArgument(format!("vocabulary lacks the end token `{END_TOKEN}`")))?;
        let max_token_bytes = tokens.iter().map(String::len).max().unwrap_or(0);
        Ok(Self {
            tokens,
            index,
            end,
            max_token_bytes,
        })
    }

    /// One token per distinct character of `labels` (sorted), then END.
    pub fn char_level<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let chars: BTreeSet<char> = labels.into_iter().flat_map(str::chars).collect();
        let mut tokens: Vec<String> = chars.into_iter().map(String::from).collect();
        tokens.push(END_TOKEN.to_owned());
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn end(&self) -> TokenId {
        self.end
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Greedy longest match; END is never produced.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let mut len = self.max_token_bytes.min(rest.len());
            let found = loop {
                if len == 0 {
                    break None;
                }
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.index.get(&rest[..len]) {
                        if id != self.end {
                            break Some(id);
                        }
                    }
                }
                len -= 1;
            };
            match found {
                Some(id) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    let c = rest.chars().next().expect("nonempty rest");
                    return Err(Error::UnknownToken(c.to_string()));
                }
            }
        }
        Ok(out)
    }

    /// Concatenates token strings; END tokens are skipped.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut s = String::new();
        for &id in ids {
            if id == self.end {
                continue;
            }
            s.push_str(self.token(id).ok_or_else(|| Error::UnknownToken(format!("#{id}")))?);
        }
        Ok(s)
    }

    pub fn round_trips(&self, text: &str) -> bool {
        self.encode(text)
            .and_then(|ids| self.decode(&ids))
            .is_ok_and(|s| s == text)
    }
}
