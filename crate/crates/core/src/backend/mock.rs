use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::debug;

use super::protocol::{decode_request, encode_response, ErrorCode, Fixture, Request, Response};
use crate::error::{Error, Result};
use crate::genlp::TokenScorer;

/// In-process protocol server for tests and offline runs.
///
/// A request line that exactly matches a fixture gets the fixture's
/// response verbatim; anything else is answered from the configured token
/// scorer and property table.
#[derive(Clone)]
pub struct MockServer {
    vocab: Vec<String>,
    relations: Vec<String>,
    fixtures: HashMap<String, String>,
    scorer: Option<Arc<dyn TokenScorer>>,
    properties: HashMap<String, Vec<(String, f64)>>,
    silent: bool,
}

impl MockServer {
    pub fn new(vocab: Vec<String>, relations: Vec<String>) -> Self {
        Self {
            vocab,
            relations,
            fixtures: HashMap::new(),
            scorer: None,
            properties: HashMap::new(),
            silent: false,
        }
    }

    /// Vocabulary taken from the scorer.
    pub fn with_scorer(scorer: Arc<dyn TokenScorer>, relations: Vec<String>) -> Self {
        let mut s = Self::new(scorer.vocabulary().tokens().to_vec(), relations);
        s.scorer = Some(scorer);
        s
    }

    pub fn fixtures(mut self, fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        self.fixtures
            .extend(fixtures.into_iter().map(|f| (f.request, f.response)));
        self
    }

    pub fn property_scores(mut self, text: impl Into<String>, scores: Vec<(String, f64)>) -> Self {
        self.properties.insert(text.into(), scores);
        self
    }

    /// Reads requests but never answers; for timeout tests.
    pub fn silent(mut self) -> Self {
        self.silent = true;
        self
    }

    fn error(code: ErrorCode, message: impl Into<String>) -> String {
        encode_response(&Response::Error {
            code,
            message: message.into(),
        })
    }

    /// Response line for one request line; `None` when silent.
    pub fn respond(&self, line: &str) -> Option<String> {
        if self.silent {
            return None;
        }
        if let Some(r) = self.fixtures.get(line) {
            return Some(r.clone());
        }
        let req = match decode_request(line) {
            Ok(r) => r,
            Err(_) => return Some(Self::error(ErrorCode::BadRequest, bad_request_message(line))),
        };
        Some(match req {
            Request::Hello => encode_response(&Response::Hello {
                vocab: self.vocab.clone(),
                relations: self.relations.clone(),
            }),
            Request::Shutdown => encode_response(&Response::Ack),
            Request::NextLogProbs { prompt, prefix } => match &self.scorer {
                None => Self::error(ErrorCode::Unsupported, "no token scorer configured"),
                Some(s) => match self.score(s.as_ref(), &prompt, &prefix) {
                    Ok(r) => encode_response(&r),
                    Err(e) => Self::error(ErrorCode::BadRequest, e.to_string()),
                },
            },
            Request::PropertyScores { text } => match self.properties.get(&text) {
                Some(s) => encode_response(&Response::Scores(s.clone())),
                None => Self::error(ErrorCode::ModelError, format!("no scores for `{text}`")),
            },
        })
    }

    fn score(&self, scorer: &dyn TokenScorer, prompt: &str, prefix: &[String]) -> Result<Response> {
        let vocab = scorer.vocabulary();
        let ids = prefix
            .iter()
            .map(|t| vocab.id(t).ok_or_else(|| Error::UnknownToken(t.clone())))
            .collect::<Result<Vec<_>>>()?;
        let lp = scorer.next_log_probs(prompt, &ids)?;
        Ok(Response::LogProbs(vocab.tokens().iter().cloned().zip(lp).collect()))
    }

    /// Serves one stream until `shutdown` or EOF.
    pub fn serve<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> Result<()> {
        for line in reader.lines() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let Some(resp) = self.respond(line) else { continue };
            writer.write_all(resp.as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
            if matches!(decode_request(line), Ok(Request::Shutdown)) {
                break;
            }
        }
        Ok(())
    }

    /// Listens on `127.0.0.1` (ephemeral port) in a background thread.
    pub fn spawn_tcp(self) -> Result<(SocketAddr, JoinHandle<()>)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let handle = thread::spawn(move || self.serve_listener(listener));
        Ok((addr, handle))
    }

    /// Accepts connections forever, one thread each.
    pub fn serve_listener(self, listener: TcpListener) {
        let server = Arc::new(self);
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let server = Arc::clone(&server);
            thread::spawn(move || {
                let reader = match stream.try_clone() {
                    Ok(s) => BufReader::new(s),
                    Err(_) => return,
                };
                if let Err(e) = server.serve(reader, &stream) {
                    debug!("mock connection ended: {e}");
                }
            });
        }
    }
}

/// Implementation-independent description of an undecodable request, so
/// error responses are reproducible byte for byte.
fn bad_request_message(line: &str) -> String {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => return "malformed JSON".into(),
    };
    match value.get("op") {
        None if value.is_object() => "missing op".into(),
        None => "request must be a JSON object".into(),
        Some(serde_json::Value::String(op)) if KNOWN_OPS.contains(&op.as_str()) => format!("invalid fields for op `{op}`"),
        Some(serde_json::Value::String(op)) => format!("unknown op `{op}`"),
        Some(_) => "op must be a string".into(),
    }
}

const KNOWN_OPS: [&str; 4] = ["hello", "next_log_probs", "property_scores", "shutdown"];
