//! Request/response bridge to an external point tracker used as a
//! consistency oracle.
//!
//! The wire protocol is newline-delimited JSON over a child process's
//! stdin/stdout. On start the child prints a handshake line
//! `{"protocol":"kepic-oracle","version":1}`; afterwards each request line
//!
//! ```json
//! {"id":1,"frames":["a/0001.jpg",...],"width":456,"height":256,"queries":[{"point_id":"17","x":10.5,"y":20.0}]}
//! ```
//!
//! is answered by exactly one line
//!
//! ```json
//! {"id":1,"tracks":[{"point_id":"17","frames":[{"x":10.5,"y":20.0,"visibility":1.0},...]}]}
//! ```
//!
//! or `{"id":1,"error":"..."}`. All queries are in frame 0.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ImageSpace, Pixel};

pub const PROTOCOL: &str = "kepic-oracle";
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle did not answer within {0:?}")]
    Timeout(Duration),
    #[error("protocol mismatch: expected {PROTOCOL} v{PROTOCOL_VERSION}, got {0}")]
    Handshake(String),
    #[error("response id {found} does not match request id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("oracle reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("failed to launch oracle `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("oracle process closed its output")]
    Closed,
    #[error("oracle i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Handshake {
    pub protocol: String,
    pub version: u32,
}

impl Handshake {
    pub fn current() -> Self {
        Self {
            protocol: PROTOCOL.into(),
            version: PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleQuery {
    pub point_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRequest {
    pub id: u64,
    pub frames: Vec<String>,
    pub width: u32,
    pub height: u32,
    pub queries: Vec<OracleQuery>,
}

impl OracleRequest {
    pub fn validate(&self) -> Result<(), OracleError> {
        let space = ImageSpace::new(self.width, self.height)
            .map_err(|e| OracleError::InvalidRequest(e.to_string()))?;
        if self.frames.is_empty() {
            return Err(OracleError::InvalidRequest("no frames".into()));
        }
        for q in &self.queries {
            if !space.contains(Pixel::new(q.x, q.y)) {
                return Err(OracleError::InvalidRequest(format!(
                    "query {} at ({}, {}) outside {}x{}",
                    q.point_id, q.x, q.y, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSample {
    pub x: f64,
    pub y: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleTrack {
    pub point_id: String,
    pub frames: Vec<OracleSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleResponse {
    pub id: u64,
    pub tracks: Vec<OracleTrack>,
}

/// Either a response or an error report, as seen on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireReply {
    Tracks(OracleResponse),
    Error { id: u64, error: String },
}

impl WireReply {
    pub fn id(&self) -> u64 {
        match self {
            WireReply::Tracks(r) => r.id,
            WireReply::Error { id, .. } => *id,
        }
    }
}

/// Anything that answers tracking requests. One request is in flight at a
/// time per instance.
pub trait TrackerOracle {
    fn exchange(
        &mut self,
        request: &OracleRequest,
        timeout: Duration,
    ) -> Result<WireReply, OracleError>;
}

/// Sends a request and checks the reply against it: matching id, one track
/// per query, one sample per frame, finite coordinates and scores in [0, 1].
/// Tracks are returned in query order.
pub fn query_tracks(
    request: &OracleRequest,
    oracle: &mut dyn TrackerOracle,
    timeout: Duration,
) -> Result<OracleResponse, OracleError> {
    request.validate()?;
    let reply = oracle.exchange(request, timeout)?;
    if reply.id() != request.id {
        return Err(OracleError::IdMismatch {
            expected: request.id,
            found: reply.id(),
        });
    }
    let response = match reply {
        WireReply::Tracks(r) => r,
        WireReply::Error { id, error } => return Err(OracleError::Remote { id, message: error }),
    };
    check_response(request, response)
}

fn check_response(
    request: &OracleRequest,
    response: OracleResponse,
) -> Result<OracleResponse, OracleError> {
    if response.tracks.len() != request.queries.len() {
        return Err(OracleError::Malformed(format!(
            "{} tracks for {} queries",
            response.tracks.len(),
            request.queries.len()
        )));
    }
    let mut by_id: HashMap<String, OracleTrack> = HashMap::new();
    for t in response.tracks {
        if t.frames.len() != request.frames.len() {
            return Err(OracleError::Malformed(format!(
                "track {} has {} frames, request has {}",
                t.point_id,
                t.frames.len(),
                request.frames.len()
            )));
        }
        for s in &t.frames {
            if !s.x.is_finite() || !s.y.is_finite() {
                return Err(OracleError::Malformed(format!(
                    "track {} has non-finite coordinates",
                    t.point_id
                )));
            }
            if !(0.0..=1.0).contains(&s.visibility) {
                return Err(OracleError::Malformed(format!(
                    "track {} has visibility {} outside [0, 1]",
                    t.point_id, s.visibility
                )));
            }
        }
        let id = t.point_id.clone();
        if by_id.insert(id.clone(), t).is_some() {
            return Err(OracleError::Malformed(format!("duplicate track {id}")));
        }
    }
    let tracks = request
        .queries
        .iter()
        .map(|q| {
            by_id
                .remove(&q.point_id)
                .ok_or_else(|| OracleError::Malformed(format!("no track for query {}", q.point_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OracleResponse {
        id: response.id,
        tracks,
    })
}

/// Every point stays at its query position with visibility 1.0.
#[derive(Debug, Default, Clone)]
pub struct IdentityOracle;

impl IdentityOracle {
    pub fn answer(request: &OracleRequest) -> WireReply {
        WireReply::Tracks(OracleResponse {
            id: request.id,
            tracks: request
                .queries
                .iter()
                .map(|q| OracleTrack {
                    point_id: q.point_id.clone(),
                    frames: vec![
                        OracleSample {
                            x: q.x,
                            y: q.y,
                            visibility: 1.0
                        };
                        request.frames.len()
                    ],
                })
                .collect(),
        })
    }
}

impl TrackerOracle for IdentityOracle {
    fn exchange(&mut self, request: &OracleRequest, _: Duration) -> Result<WireReply, OracleError> {
        Ok(Self::answer(request))
    }
}

/// Recorded trajectories for a whole video, replayed on request.
///
/// File format: `{"frames": [names...], "tracks": [{"point_id", "frames": [{x, y, visibility}...]}]}`
/// with one sample per listed frame. Request frames are matched by file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaybackData {
    pub frames: Vec<String>,
    pub tracks: Vec<OracleTrack>,
}

#[derive(Debug, Clone)]
pub struct PlaybackOracle {
    frame_index: HashMap<String, usize>,
    tracks: HashMap<String, Vec<OracleSample>>,
}

impl PlaybackOracle {
    pub fn new(data: PlaybackData) -> Self {
        Self {
            frame_index: data
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| (f.clone(), i))
                .collect(),
            tracks: data
                .tracks
                .into_iter()
                .map(|t| (t.point_id, t.frames))
                .collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)?;
        let data: PlaybackData = serde_json::from_str(&text)
            .map_err(|e| OracleError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(data))
    }

    pub fn answer(&self, request: &OracleRequest) -> WireReply {
        let fail = |error: String| WireReply::Error {
            id: request.id,
            error,
        };
        let mut indices = Vec::with_capacity(request.frames.len());
        for f in &request.frames {
            let name = Path::new(f)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| f.clone());
            match self.frame_index.get(&name) {
                Some(&i) => indices.push(i),
                None => return fail(format!("unknown frame {f}")),
            }
        }
        let mut tracks = Vec::with_capacity(request.queries.len());
        for q in &request.queries {
            let Some(samples) = self.tracks.get(&q.point_id) else {
                return fail(format!("no recorded track for point {}", q.point_id));
            };
            let frames = indices
                .iter()
                .map(|&i| samples.get(i).copied())
                .collect::<Option<Vec<_>>>();
            match frames {
                Some(frames) => tracks.push(OracleTrack {
                    point_id: q.point_id.clone(),
                    frames,
                }),
                None => return fail(format!("recorded track {} is too short", q.point_id)),
            }
        }
        WireReply::Tracks(OracleResponse {
            id: request.id,
            tracks,
        })
    }
}

impl TrackerOracle for PlaybackOracle {
    fn exchange(&mut self, request: &OracleRequest, _: Duration) -> Result<WireReply, OracleError> {
        Ok(self.answer(request))
    }
}

/// Which built-in mock a server process should run.
pub enum MockBackend {
    Identity,
    Playback(PlaybackOracle),
}

impl MockBackend {
    fn answer(&self, request: &OracleRequest) -> WireReply {
        match self {
            MockBackend::Identity => IdentityOracle::answer(request),
            MockBackend::Playback(p) => p.answer(request),
        }
    }
}

/// Runs a mock oracle over a line stream until the input closes. Requests
/// that fail to parse get an error reply carrying their id when one can be
/// recovered.
pub fn serve_mock(
    backend: &MockBackend,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    writeln!(
        output,
        "{}",
        serde_json::to_string(&Handshake::current()).unwrap()
    )?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<OracleRequest>(&line) {
            Ok(req) => backend.answer(&req),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
                    .unwrap_or(0);
                WireReply::Error {
                    id,
                    error: format!("malformed request: {e}"),
                }
            }
        };
        writeln!(output, "{}", serde_json::to_string(&reply).unwrap())?;
        output.flush()?;
    }
    Ok(())
}

/// A tracker running as a child process speaking the NDJSON protocol.
pub struct ProcessOracle {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl ProcessOracle {
    /// Launches `command` (split with shell quoting rules) and completes the
    /// handshake.
    pub fn launch(command: &str, timeout: Duration) -> Result<Self, OracleError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| OracleError::Launch {
                command: command.into(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
            })?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| OracleError::Launch {
                command: command.into(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut oracle = Self {
            child,
            stdin,
            lines: rx,
        };
        let line = oracle.next_line(timeout)?;
        match serde_json::from_str::<Handshake>(&line) {
            Ok(h) if h == Handshake::current() => Ok(oracle),
            _ => Err(OracleError::Handshake(line)),
        }
    }

    fn next_line(&mut self, timeout: Duration) -> Result<String, OracleError> {
        match self.lines.recv_timeout(timeout) {
            Ok(line) => Ok(line?),
            Err(RecvTimeoutError::Timeout) => Err(OracleError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(OracleError::Closed),
        }
    }
}

impl TrackerOracle for ProcessOracle {
    fn exchange(
        &mut self,
        request: &OracleRequest,
        timeout: Duration,
    ) -> Result<WireReply, OracleError> {
        let line = serde_json::to_string(request).expect("request serialization");
        writeln!(self.stdin, "{line}")?;
        self.stdin.flush()?;
        let reply = self.next_line(timeout)?;
        serde_json::from_str(&reply).map_err(|e| OracleError::Malformed(e.to_string()))
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
