//! Adapter for out-of-process segment scorers (embedding or learned
//! metrics).
//!
//! Line protocol, one exchange per segment:
//!
//! ```text
//! -> <id>\t<candidate>\t<reference>\n
//! <- <id>\t<float>\n
//! ```
//!
//! Backslash, tab, carriage return and newline inside fields are written as
//! `\\`, `\t`, `\r` and `\n`.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{MetricsError, Score};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerTransport {
    /// A child process speaking the protocol on stdin/stdout.
    Process {
        command: String,
        #[serde(default)]
        args: Vec<String>,
    },
    /// A TCP endpoint, e.g. `127.0.0.1:7070`.
    Socket { addr: String },
}

enum Connection {
    Process { child: Child, stdin: ChildStdin, stdout: BufReader<ChildStdout> },
    Socket { writer: TcpStream, reader: BufReader<TcpStream> },
}

impl Connection {
    fn writer(&mut self) -> &mut dyn Write {
        match self {
            Connection::Process { stdin, .. } => stdin,
            Connection::Socket { writer, .. } => writer,
        }
    }

    fn reader(&mut self) -> &mut dyn BufRead {
        match self {
            Connection::Process { stdout, .. } => stdout,
            Connection::Socket { reader, .. } => reader,
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Process { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// One scorer connection, opened on first use. Calls are serialized.
pub struct ExternalScorer {
    name: String,
    transport: ScorerTransport,
    conn: Mutex<Option<Connection>>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer").field("name", &self.name).field("transport", &self.transport).finish()
    }
}

impl ExternalScorer {
    pub fn new(name: impl Into<String>, transport: ScorerTransport) -> Self {
        Self { name: name.into(), transport, conn: Mutex::new(None) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn unavailable(&self, reason: impl std::fmt::Display) -> MetricsError {
        MetricsError::ScorerUnavailable { name: self.name.clone(), reason: reason.to_string() }
    }

    fn violation(&self, reason: impl Into<String>) -> MetricsError {
        MetricsError::ProtocolViolation { name: self.name.clone(), reason: reason.into() }
    }

    fn connect(&self) -> Result<Connection, MetricsError> {
        match &self.transport {
            ScorerTransport::Process { command, args } => {
                let mut child = Command::new(command)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| self.unavailable(format!("cannot start `{command}`: {e}")))?;
                let stdin = child.stdin.take().ok_or_else(|| self.unavailable("no stdin pipe"))?;
                let stdout = child.stdout.take().ok_or_else(|| self.unavailable("no stdout pipe"))?;
                Ok(Connection::Process { child, stdin, stdout: BufReader::new(stdout) })
            }
            ScorerTransport::Socket { addr } => {
                let writer = TcpStream::connect(addr).map_err(|e| self.unavailable(format!("{addr}: {e}")))?;
                let reader = writer.try_clone().map_err(|e| self.unavailable(e))?;
                Ok(Connection::Socket { writer, reader: BufReader::new(reader) })
            }
        }
    }

    /// Raw per-segment scores, in input order. Blocks on scorer I/O.
    pub fn score_segments<S: AsRef<str>>(&self, candidates: &[S], references: &[S]) -> Result<Vec<f64>, MetricsError> {
        if candidates.len() != references.len() {
            return Err(MetricsError::LengthMismatch { candidates: candidates.len(), references: references.len() });
        }
        let mut guard = self.conn.lock();
        if guard.is_none() {
            *guard = Some(self.connect()?);
        }
        let conn = guard.as_mut().expect("connection just opened");
        let result = self.exchange(conn, candidates, references);
        if matches!(result, Err(MetricsError::ScorerUnavailable { .. })) {
            // reconnect on the next call
            *guard = None;
        }
        result
    }

    fn exchange<S: AsRef<str>>(
        &self,
        conn: &mut Connection,
        candidates: &[S],
        references: &[S],
    ) -> Result<Vec<f64>, MetricsError> {
        let mut scores = Vec::with_capacity(candidates.len());
        let mut line = String::new();
        for (i, (cand, reference)) in candidates.iter().zip(references).enumerate() {
            let id = i.to_string();
            let request = format!("{id}\t{}\t{}\n", escape_field(cand.as_ref()), escape_field(reference.as_ref()));
            let w = conn.writer();
            w.write_all(request.as_bytes()).and_then(|_| w.flush()).map_err(|e| self.unavailable(e))?;

            line.clear();
            let read = conn.reader().read_line(&mut line).map_err(|e| self.unavailable(e))?;
            if read == 0 {
                return Err(self.unavailable("scorer closed the connection"));
            }
            let reply = line.trim_end_matches(['\n', '\r']);
            let (got_id, value) =
                reply.split_once('\t').ok_or_else(|| self.violation(format!("malformed line `{reply}`")))?;
            if got_id != id {
                return Err(self.violation(format!("expected id {id}, got `{got_id}`")));
            }
            let value: f64 = value
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| self.violation(format!("`{value}` is not a finite number")))?;
            scores.push(value);
        }
        Ok(scores)
    }
}

/// Mean segment score ×100. The value is passed through as-is and may be
/// negative.
pub fn external_score<S: AsRef<str>>(
    scorer: &ExternalScorer,
    candidates: &[S],
    references: &[S],
) -> Result<Score, MetricsError> {
    if candidates.is_empty() && references.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let scores = scorer.score_segments(candidates, references)?;
    Ok(Score(100.0 * scores.iter().sum::<f64>() / scores.len() as f64))
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape_field`]. Unknown escapes are kept verbatim.
pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}
