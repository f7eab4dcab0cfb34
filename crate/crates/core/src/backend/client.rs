use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::protocol::{decode_response, encode_request, Op, Request, Response};
use crate::error::{Error, Result};

/// Environment variable that overrides the configured transport.
pub const BACKEND_ENV: &str = "KGIC_BACKEND";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transport {
    Subprocess { program: String, args: Vec<String> },
    Tcp { addr: String },
}

/// `tcp:host:port` or `stdio:program arg...` (whitespace separated).
impl FromStr for Transport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.is_empty() {
                return Err(Error::InvalidArgument("tcp transport needs host:port".into()));
            }
            return Ok(Transport::Tcp { addr: addr.to_owned() });
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let mut words = cmd.split_whitespace().map(str::to_owned);
            let program = words
                .next()
                .ok_or_else(|| Error::InvalidArgument("stdio transport needs a program".into()))?;
            return Ok(Transport::Subprocess {
                program,
                args: words.collect(),
            });
        }
        Err(Error::InvalidArgument(format!("unknown transport `{s}`; expected tcp:HOST:PORT or stdio:CMD")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub transport: Transport,
    /// Bound on one attempt, including reconnect and handshake.
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl BackendConfig {
    pub fn new(transport: Transport) -> Self {
        Self {
            transport,
            timeout: Duration::from_secs(30),
            max_retries: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::InvalidArgument("backend timeout must be positive".into()));
        }
        Ok(())
    }

    /// Replaces the transport with `KGIC_BACKEND` when that is set.
    pub fn with_env_override(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(BACKEND_ENV) {
            if !v.trim().is_empty() {
                self.transport = v.trim().parse()?;
            }
        }
        Ok(self)
    }

    /// Upper bound on how long any single client call can take.
    pub fn worst_case(&self) -> Duration {
        self.timeout * (self.max_retries + 1)
    }
}

/// Vocabulary and relation inventory fixed by the first handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub vocab: Vec<String>,
    pub relations: Vec<String>,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    tcp: Option<TcpStream>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(s) = &self.tcp {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(c) = &mut self.child {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn spawn_reader<R: io::Read + Send + 'static>(r: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(r);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => {
                    let _ = tx.send(Err(io::Error::new(io::ErrorKind::UnexpectedEof, "backend closed the stream")));
                    return;
                }
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        }
    });
    rx
}

fn remaining(deadline: Instant) -> Option<Duration> {
    deadline.checked_duration_since(Instant::now()).filter(|d| !d.is_zero())
}

fn open(transport: &Transport, deadline: Instant, timeout: Duration) -> Result<Connection> {
    match transport {
        Transport::Tcp { addr } => {
            let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
            let mut last = io::Error::new(io::ErrorKind::NotFound, format!("no address for {addr}"));
            for a in addrs {
                let left = remaining(deadline).ok_or(Error::Timeout(timeout))?;
                match TcpStream::connect_timeout(&a, left) {
                    Ok(stream) => {
                        stream.set_nodelay(true)?;
                        let reader = stream.try_clone()?;
                        let writer = stream.try_clone()?;
                        return Ok(Connection {
                            writer: Box::new(writer),
                            lines: spawn_reader(reader),
                            child: None,
                            tcp: Some(stream),
                        });
                    }
                    Err(e) => last = e,
                }
            }
            Err(last.into())
        }
        Transport::Subprocess { program, args } => {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok(Connection {
                writer: Box::new(stdin),
                lines: spawn_reader(stdout),
                child: Some(child),
                tcp: None,
            })
        }
    }
}

/// Synchronous client for one request stream. Retriable failures (timeouts,
/// I/O) drop the connection and retry up to `max_retries` times with a fresh
/// connection and handshake.
pub struct BackendClient {
    config: BackendConfig,
    conn: Option<Connection>,
    session: Option<Session>,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient")
            .field("config", &self.config)
            .field("connected", &self.conn.is_some())
            .field("session", &self.session)
            .finish()
    }
}

impl BackendClient {
    /// Connects and performs the handshake.
    pub fn connect(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let mut client = Self {
            config,
            conn: None,
            session: None,
        };
        client.with_retries(|c, deadline| c.ensure_connected(deadline))?;
        Ok(client)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn session(&self) -> &Session {
        self.session.as_ref().expect("connected clients have a session")
    }

    fn with_retries<T>(&mut self, mut f: impl FnMut(&mut Self, Instant) -> Result<T>) -> Result<T> {
        let mut last = None;
        // per-attempt deadlines never run past the overall bound
        let overall = Instant::now() + self.config.worst_case();
        for attempt in 0..=self.config.max_retries {
            let deadline = (Instant::now() + self.config.timeout).min(overall);
            match f(self, deadline) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() => {
                    warn!("backend attempt {} failed: {e}", attempt + 1);
                    self.conn = None;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn ensure_connected(&mut self, deadline: Instant) -> Result<()> {
        if self.conn.is_some() {
            return Ok(());
        }
        self.conn = Some(open(&self.config.transport, deadline, self.config.timeout)?);
        let line = self.exchange_line(&encode_request(&Request::Hello), deadline)?;
        let (vocab, relations) = match decode_response(&line, Op::Hello)? {
            Response::Hello { vocab, relations } => (vocab, relations),
            Response::Error { code, message } => {
                return Err(Error::Backend {
                    code: code.to_string(),
                    message,
                })
            }
            _ => return Err(Error::protocol("unexpected handshake response", line)),
        };
        let fresh = Session { vocab, relations };
        match &self.session {
            None => {
                debug!(
                    "backend session: {} tokens, {} relations",
                    fresh.vocab.len(),
                    fresh.relations.len()
                );
                self.session = Some(fresh);
            }
            Some(pinned) if *pinned != fresh => {
                self.conn = None;
                return Err(Error::protocol("vocabulary or relations changed since the first handshake", line));
            }
            Some(_) => {}
        }
        Ok(())
    }

    fn exchange_line(&mut self, request: &str, deadline: Instant) -> Result<String> {
        let timeout = self.config.timeout;
        let conn = self.conn.as_mut().expect("connection open");
        if let Some(s) = &conn.tcp {
            s.set_write_timeout(Some(remaining(deadline).ok_or(Error::Timeout(timeout))?))?;
        }
        conn.writer.write_all(request.as_bytes())?;
        conn.writer.write_all(b"\n")?;
        conn.writer.flush()?;
        let left = remaining(deadline).ok_or(Error::Timeout(timeout))?;
        match conn.lines.recv_timeout(left) {
            Ok(Ok(mut line)) => {
                while line.ends_with('\n') || line.ends_with('\r') {
                    line.pop();
                }
                Ok(line)
            }
            Ok(Err(e)) => Err(e.into()),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(io::Error::new(io::ErrorKind::BrokenPipe, "backend reader stopped").into())
            }
        }
    }

    /// Sends one raw line and returns the raw response line.
    pub fn exchange_raw(&mut self, request: &str) -> Result<String> {
        let request = request.to_owned();
        self.with_retries(|c, deadline| {
            c.ensure_connected(deadline)?;
            c.exchange_line(&request, deadline)
        })
    }

    pub fn call(&mut self, request: &Request) -> Result<Response> {
        let line = encode_request(request);
        let op = request.op();
        let raw = self.exchange_raw(&line)?;
        match decode_response(&raw, op)? {
            Response::Error { code, message } => Err(Error::Backend {
                code: code.to_string(),
                message,
            }),
            r => Ok(r),
        }
    }

    pub fn next_log_probs(&mut self, prompt: &str, prefix: &[String]) -> Result<Vec<(String, f64)>> {
        let req = Request::NextLogProbs {
            prompt: prompt.to_owned(),
            prefix: prefix.to_vec(),
        };
        match self.call(&req)? {
            Response::LogProbs(p) => Ok(p),
            other => Err(Error::protocol("expected log_probs", format!("{other:?}"))),
        }
    }

    pub fn property_scores(&mut self, text: &str) -> Result<Vec<(String, f64)>> {
        match self.call(&Request::PropertyScores { text: text.to_owned() })? {
            Response::Scores(s) => Ok(s),
            other => Err(Error::protocol("expected scores", format!("{other:?}"))),
        }
    }

    /// Asks the server to exit and closes the connection.
    pub fn shutdown(mut self) -> Result<()> {
        if self.conn.is_some() {
            let deadline = Instant::now() + self.config.timeout;
            let raw = self.exchange_line(&encode_request(&Request::Shutdown), deadline)?;
            if let Response::Error { code, message } = decode_response(&raw, Op::Shutdown)? {
                return Err(Error::Backend {
                    code: code.to_string(),
                    message,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transport_parsing() {
        assert_eq!(
            "tcp:127.0.0.1:9000".parse::<Transport>().unwrap(),
            Transport::Tcp {
                addr: "127.0.0.1:9000".into()
            }
        );
        assert_eq!(
            "stdio:python3 -m server --model x".parse::<Transport>().unwrap(),
            Transport::Subprocess {
                program: "python3".into(),
                args: vec!["-m".into(), "server".into(), "--model".into(), "x".into()],
            }
        );
        assert!("udp:1".parse::<Transport>().is_err());
        assert!("stdio:".parse::<Transport>().is_err());
    }

    #[test]
    fn zero_timeout_rejected() {
        let mut c = BackendConfig::new(Transport::Tcp { addr: "x:1".into() });
        c.timeout = Duration::ZERO;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unreachable_server_fails_after_retries() {
        // bind then drop to get a port nobody listens on
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = BackendConfig::new(Transport::Tcp {
            addr: format!("127.0.0.1:{port}"),
        });
        cfg.timeout = Duration::from_millis(200);
        cfg.max_retries = 2;
        let t = Instant::now();
        assert!(BackendClient::connect(cfg.clone()).is_err());
        assert!(t.elapsed() < cfg.worst_case() + Duration::from_millis(500));
    }
}
