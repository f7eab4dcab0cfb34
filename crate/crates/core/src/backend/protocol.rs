//! Wire format: one compact JSON object per line, UTF-8.
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"ok":true,"vocab":[...],"relations":[...]}
//! -> {"op":"next_log_probs","prompt":"...","prefix":["t1","t2"]}
//! <- {"ok":true,"log_probs":{"<token>":-0.69,...}}
//! -> {"op":"property_scores","text":"..."}
//! <- {"ok":true,"scores":{"<relation>":0.83,...}}
//! -> {"op":"shutdown"}
//! <- {"ok":true}
//! <- {"ok":false,"error":"bad_request|model_error|unsupported","message":"..."}
//! ```
//!
//! Object keys keep their wire order, so decoding then encoding a message
//! reproduces it byte for byte when it was written in canonical form.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello,
    NextLogProbs { prompt: String, prefix: Vec<String> },
    PropertyScores { text: String },
    Shutdown,
}

impl Request {
    pub fn op(&self) -> Op {
        match self {
            Request::Hello => Op::Hello,
            Request::NextLogProbs { .. } => Op::NextLogProbs,
            Request::PropertyScores { .. } => Op::PropertyScores,
            Request::Shutdown => Op::Shutdown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Hello,
    NextLogProbs,
    PropertyScores,
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    BadRequest,
    ModelError,
    Unsupported,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::ModelError => "model_error",
            ErrorCode::Unsupported => "unsupported",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bad_request" => Ok(ErrorCode::BadRequest),
            "model_error" => Ok(ErrorCode::ModelError),
            "unsupported" => Ok(ErrorCode::Unsupported),
            _ => Err(Error::protocol(format!("unknown error code `{s}`"), s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Hello { vocab: Vec<String>, relations: Vec<String> },
    /// Token log-probs in wire order.
    LogProbs(Vec<(String, f64)>),
    /// Relation scores in wire order.
    Scores(Vec<(String, f64)>),
    Ack,
    Error { code: ErrorCode, message: String },
}

pub fn encode_request(req: &Request) -> String {
    serde_json::to_string(req).expect("requests always serialize")
}

pub fn decode_request(line: &str) -> Result<Request> {
    serde_json::from_str(line).map_err(|e| Error::protocol(format!("bad request: {e}"), line))
}

fn pairs_to_object(pairs: &[(String, f64)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.clone(), Value::from(*v));
    }
    Value::Object(m)
}

pub fn encode_response(resp: &Response) -> String {
    let mut m = Map::new();
    match resp {
        Response::Error { code, message } => {
            m.insert("ok".into(), Value::Bool(false));
            m.insert("error".into(), Value::from(code.as_str()));
            m.insert("message".into(), Value::from(message.as_str()));
        }
        other => {
            m.insert("ok".into(), Value::Bool(true));
            match other {
                Response::Hello { vocab, relations } => {
                    m.insert("vocab".into(), Value::from(vocab.clone()));
                    m.insert("relations".into(), Value::from(relations.clone()));
                }
                Response::LogProbs(p) => {
                    m.insert("log_probs".into(), pairs_to_object(p));
                }
                Response::Scores(p) => {
                    m.insert("scores".into(), pairs_to_object(p));
                }
                Response::Ack | Response::Error { .. } => {}
            }
        }
    }
    Value::Object(m).to_string()
}

fn strings(v: Option<&Value>, key: &str, line: &str) -> Result<Vec<String>> {
    v.and_then(Value::as_array)
        .and_then(|a| a.iter().map(|x| x.as_str().map(str::to_owned)).collect::<Option<Vec<_>>>())
        .ok_or_else(|| Error::protocol(format!("`{key}` must be an array of strings"), line))
}

fn number_map(v: Option<&Value>, key: &str, line: &str) -> Result<Vec<(String, f64)>> {
    let obj = v
        .and_then(Value::as_object)
        .ok_or_else(|| Error::protocol(format!("`{key}` must be an object"), line))?;
    obj.iter()
        .map(|(k, x)| {
            x.as_f64()
                .map(|f| (k.clone(), f))
                .ok_or_else(|| Error::protocol(format!("`{key}.{k}` is not a number"), line))
        })
        .collect()
}

/// Parses a response to a request of kind `op`. Malformed payloads become
/// protocol errors carrying the raw line.
pub fn decode_response(line: &str, op: Op) -> Result<Response> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::protocol(format!("invalid JSON: {e}"), line))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::protocol("response is not an object", line))?;
    match obj.get("ok").and_then(Value::as_bool) {
        Some(false) => {
            let code = obj
                .get("error")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::protocol("error response without `error`", line))?;
            let message = obj.get("message").and_then(Value::as_str).unwrap_or_default();
            Ok(Response::Error {
                code: code.parse().map_err(|_| Error::protocol(format!("unknown error code `{code}`"), line))?,
                message: message.to_owned(),
            })
        }
        Some(true) => match op {
            Op::Hello => Ok(Response::Hello {
                vocab: strings(obj.get("vocab"), "vocab", line)?,
                relations: strings(obj.get("relations"), "relations", line)?,
            }),
            Op::NextLogProbs => Ok(Response::LogProbs(number_map(obj.get("log_probs"), "log_probs", line)?)),
            Op::PropertyScores => Ok(Response::Scores(number_map(obj.get("scores"), "scores", line)?)),
            Op::Shutdown => Ok(Response::Ack),
        },
        None => Err(Error::protocol("missing boolean `ok`", line)),
    }
}

/// One request/response exchange from the conformance corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub request: String,
    pub response: String,
}

/// Reads a JSONL corpus of [`Fixture`]s; blank lines are skipped.
pub fn load_fixtures<R: BufRead>(reader: R) -> Result<Vec<Fixture>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_field_order() {
        let r = Request::NextLogProbs {
            prompt: "head: x, tail:".into(),
            prefix: vec!["a".into(), "b".into()],
        };
        let s = encode_request(&r);
        assert_eq!(s, r#"{"op":"next_log_probs","prompt":"head: x, tail:","prefix":["a","b"]}"#);
        assert_eq!(decode_request(&s).unwrap(), r);
        assert_eq!(encode_request(&Request::Hello), r#"{"op":"hello"}"#);
        assert!(decode_request(r#"{"op":"dance"}"#).is_err());
    }

    #[test]
    fn response_round_trip_keeps_order() {
        let line = r#"{"ok":true,"log_probs":{"b":-0.5108256237659907,"a":-0.916290731874155}}"#;
        let r = decode_response(line, Op::NextLogProbs).unwrap();
        assert_eq!(encode_response(&r), line);
        let err = r#"{"ok":false,"error":"unsupported","message":"no"}"#;
        assert_eq!(encode_response(&decode_response(err, Op::Hello).unwrap()), err);
    }

    #[test]
    fn malformed_responses_carry_payload() {
        for bad in ["nope", "[1]", r#"{"vocab":[]}"#, r#"{"ok":true,"log_probs":{"a":"x"}}"#] {
            match decode_response(bad, Op::NextLogProbs) {
                Err(Error::Protocol { payload, .. }) => assert_eq!(payload, bad),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
