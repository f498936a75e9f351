//! JSON-lines protocol between the engine and external agents.
//!
//! Request (engine to agent), one line:
//!
//! ```text
//! {"id":"12:overworld.player.walking","tick":12,"world":"overworld","entity":"player",
//!  "process":"walking","transition":"walk","source":"...","view":{"overworld.player.loc":"(3,0)"}}
//! ```
//!
//! Response (agent to engine):
//!
//! ```text
//! {"id":"12:overworld.player.walking","updates":["set_data overworld.player.loc=(4,0)"],"wait":1,"cont":true}
//! ```
//!
//! Values and updates travel in canonical text. `wait` > 0 suspends the
//! process for that many ticks before the next request; `wait` 0 finishes
//! it with `cont`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};

use sbp_core::semantics::{
    ExternalDriver, ExternalRequest, ExternalResponse, NativeBehaviour, NativeCtx, NativeNext, NativeResult,
};
use sbp_core::text::{parse_update, parse_value};
use sbp_core::{Path, Update};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("protocol error: {0}")]
pub struct ProtocolError(pub String);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestLine {
    id: String,
    tick: u64,
    world: String,
    entity: String,
    process: String,
    transition: String,
    source: String,
    view: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseLine {
    id: String,
    #[serde(default)]
    updates: Vec<String>,
    #[serde(default)]
    wait: u64,
    #[serde(default = "yes")]
    cont: bool,
}

fn yes() -> bool {
    true
}

pub fn encode_request(r: &ExternalRequest) -> String {
    let line = RequestLine {
        id: r.id.clone(),
        tick: r.tick,
        world: r.process.world.to_string(),
        entity: r.process.entity.as_ref().map(|n| n.to_string()).unwrap_or_default(),
        process: r.process.property.as_ref().map(|n| n.to_string()).unwrap_or_default(),
        transition: r.transition.to_string(),
        source: r.source.to_string(),
        view: r.view.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
    };
    serde_json::to_string(&line).expect("requests always serialize")
}

pub fn decode_request(line: &str) -> Result<ExternalRequest, ProtocolError> {
    let r: RequestLine = serde_json::from_str(line).map_err(|e| ProtocolError(e.to_string()))?;
    let path = |s: &str| Path::parse(s).map_err(|e| ProtocolError(format!("bad path {s:?}: {e}")));
    let process = path(&format!("{}.{}.{}", r.world, r.entity, r.process))?;
    if process.depth() != 3 {
        return Err(ProtocolError("request must name world, entity and process".into()));
    }
    let mut view = BTreeMap::new();
    for (k, v) in r.view {
        let v = parse_value(&v).map_err(|e| ProtocolError(format!("bad value for {k}: {e}")))?;
        view.insert(k, v);
    }
    Ok(ExternalRequest {
        id: r.id,
        process,
        transition: sbp_core::Name::new(&r.transition).map_err(|e| ProtocolError(e.to_string()))?,
        source: Arc::from(r.source.as_str()),
        tick: r.tick,
        view,
    })
}

pub fn encode_response(r: &ExternalResponse) -> String {
    let line = ResponseLine {
        id: r.id.clone(),
        updates: r.updates.iter().map(|u| u.to_string()).collect(),
        wait: r.wait,
        cont: r.cont,
    };
    serde_json::to_string(&line).expect("responses always serialize")
}

pub fn decode_response(line: &str) -> Result<ExternalResponse, ProtocolError> {
    let r: ResponseLine = serde_json::from_str(line).map_err(|e| ProtocolError(e.to_string()))?;
    let mut updates = Vec::with_capacity(r.updates.len());
    for u in &r.updates {
        updates.push(parse_update(u).map_err(|e| ProtocolError(format!("bad update {u:?}: {e}")))?);
    }
    Ok(ExternalResponse {
        id: r.id,
        updates,
        wait: r.wait,
        cont: r.cont,
    })
}

/// Talks the protocol over a pair of byte streams. `poll` blocks until a
/// line arrives; responses for other ids are kept until asked for.
pub struct LineDriver<R, W> {
    reader: R,
    writer: W,
    stash: BTreeMap<String, ExternalResponse>,
}

impl<R: BufRead + Send, W: Write + Send> LineDriver<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineDriver {
            reader,
            writer,
            stash: BTreeMap::new(),
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> ExternalDriver for LineDriver<R, W> {
    fn submit(&mut self, request: ExternalRequest) -> Result<(), String> {
        writeln!(self.writer, "{}", encode_request(&request)).map_err(|e| e.to_string())?;
        self.writer.flush().map_err(|e| e.to_string())
    }

    fn poll(&mut self, id: &str) -> Result<Option<ExternalResponse>, String> {
        if let Some(r) = self.stash.remove(id) {
            return Ok(Some(r));
        }
        let mut line = String::new();
        loop {
            line.clear();
            let n = self.reader.read_line(&mut line).map_err(|e| e.to_string())?;
            if n == 0 {
                return Err("agent closed the channel".into());
            }
            if line.trim().is_empty() {
                continue;
            }
            let r = decode_response(line.trim()).map_err(|e| e.to_string())?;
            if r.id == id {
                return Ok(Some(r));
            }
            self.stash.insert(r.id.clone(), r);
        }
    }
}

/// Opens a channel: `stdio` (requests on stdout, responses on stdin) or
/// `tcp:<host>:<port>`.
pub fn connect(channel: &str) -> io::Result<Box<dyn ExternalDriver>> {
    if channel == "stdio" {
        return Ok(Box::new(LineDriver::new(BufReader::new(io::stdin()), io::stdout())));
    }
    let Some(addr) = channel.strip_prefix("tcp:") else {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("unknown channel `{channel}`"),
        ));
    };
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    Ok(Box::new(LineDriver::new(reader, stream)))
}

/// Agent side: answers each request line with `respond`. Stops at end of
/// input.
pub fn serve<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    mut respond: impl FnMut(ExternalRequest) -> Result<ExternalResponse, String>,
) -> Result<u64, String> {
    let mut served = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let request = decode_request(line.trim()).map_err(|e| e.to_string())?;
        let response = respond(request)?;
        writeln!(writer, "{}", encode_response(&response)).map_err(|e| e.to_string())?;
        writer.flush().map_err(|e| e.to_string())?;
        served += 1;
    }
    Ok(served)
}

/// A script of canned responses keyed by request id, as written by
/// [`Recorder`].
pub struct Script {
    responses: BTreeMap<String, ExternalResponse>,
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ProtocolError> {
        let mut responses = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = decode_response(line).map_err(|e| ProtocolError(format!("line {}: {}", i + 1, e.0)))?;
            responses.insert(r.id.clone(), r);
        }
        Ok(Script { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn respond(&self, request: &ExternalRequest) -> Result<ExternalResponse, String> {
        self.responses
            .get(&request.id)
            .cloned()
            .ok_or_else(|| format!("script has no response for `{}`", request.id))
    }
}

/// Wraps a native behaviour and logs what it did as external responses,
/// so a later run can replace the native with a scripted agent.
pub struct Recorder {
    pub inner: Arc<dyn NativeBehaviour>,
    pub log: Arc<Mutex<Vec<ExternalResponse>>>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn NativeBehaviour>) -> Self {
        Recorder {
            inner,
            log: Arc::default(),
        }
    }

    pub fn script(&self) -> String {
        let log = self.log.lock().expect("recorder lock");
        log.iter().map(|r| encode_response(r) + "\n").collect()
    }
}

impl NativeBehaviour for Recorder {
    fn step(&self, ctx: NativeCtx<'_>) -> Result<NativeResult, String> {
        let id = format!("{}:{}.{}.{}", ctx.tick, ctx.world, ctx.entity, ctx.process);
        let result = self.inner.step(ctx)?;
        let (wait, cont) = match result.next {
            NativeNext::Wait { ticks, .. } => (ticks.max(1), true),
            NativeNext::Finished { cont } => (0, cont),
        };
        let updates: Vec<Update> = result.updates.clone();
        self.log.lock().expect("recorder lock").push(ExternalResponse {
            id,
            updates,
            wait,
            cont,
        });
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sbp_core::name::name;
    use sbp_core::{CoreUpdate, Value};

    fn request() -> ExternalRequest {
        ExternalRequest {
            id: "3:w.p.walking".into(),
            process: Path::property(name("w"), name("p"), name("walking")),
            transition: name("walk"),
            source: Arc::from("[(0,0)]"),
            tick: 3,
            view: [("w.p.loc".to_string(), Value::Coord(1, 2))].into_iter().collect(),
        }
    }

    #[test]
    fn request_round_trip() {
        let r = request();
        assert_eq!(decode_request(&encode_request(&r)).unwrap(), r);
    }

    #[test]
    fn response_round_trip() {
        let r = ExternalResponse {
            id: "3:w.p.walking".into(),
            updates: vec![Update::Core(CoreUpdate::SetData {
                world: name("w"),
                entity: name("p"),
                key: name("loc"),
                value: Value::Coord(2, 2),
            })],
            wait: 1,
            cont: true,
        };
        assert_eq!(decode_response(&encode_response(&r)).unwrap(), r);
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(decode_response("{").is_err());
        assert!(decode_response(r#"{"id":"x","updates":["set_data w"]}"#).is_err());
        assert!(decode_response(r#"{"id":"x","extra":1}"#).is_err());
        assert!(decode_request(r#"{"id":"x"}"#).is_err());
    }

    #[test]
    fn line_driver_stashes_out_of_order_responses() {
        let input = concat!(
            r#"{"id":"b","updates":[],"wait":0,"cont":false}"#,
            "\n",
            r#"{"id":"a","updates":[],"wait":2,"cont":true}"#,
            "\n"
        );
        let mut d = LineDriver::new(input.as_bytes(), Vec::new());
        d.submit(request()).unwrap();
        assert_eq!(d.poll("a").unwrap().unwrap().wait, 2);
        assert!(!d.poll("b").unwrap().unwrap().cont);
        assert!(d.poll("c").is_err());
        let sent = String::from_utf8(d.writer).unwrap();
        assert_eq!(decode_request(sent.trim()).unwrap(), request());
    }

    #[test]
    fn serve_answers_every_line() {
        let input = encode_request(&request()) + "\n\n" + &encode_request(&request()) + "\n";
        let mut out = Vec::new();
        let n = serve(input.as_bytes(), &mut out, |r| {
            Ok(ExternalResponse {
                id: r.id,
                updates: vec![],
                wait: 0,
                cont: true,
            })
        })
        .unwrap();
        assert_eq!(n, 2);
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }
}
