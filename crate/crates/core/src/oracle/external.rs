use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

use super::protocol::{encode_pcm16_b64, Request, Response};
use super::Voiceprint;

#[derive(Debug)]
struct Connection {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Client for a scorer process speaking the stdio protocol. One request is
/// in flight at a time; concurrent callers queue on the connection lock.
#[derive(Debug)]
pub struct ExternalScorer {
    conn: Mutex<Connection>,
    dim: usize,
    rate: u32,
    origin: String,
}

impl ExternalScorer {
    pub fn spawn(argv: &[String]) -> Result<Self> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| Error::invalid("empty scorer command"))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ScorerUnreachable(format!("{prog}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut conn = Connection {
            child,
            stdin,
            stdout,
        };
        let hello = round_trip(&mut conn, &Request::Hello)?;
        let (dim, rate) = match (hello.dim, hello.rate) {
            (Some(d), Some(r)) if d > 0 && r > 0 => (d, r),
            _ => return Err(Error::Protocol("hello reply lacks dim/rate".into())),
        };
        Ok(Self {
            conn: Mutex::new(conn),
            dim,
            rate,
            origin: format!("cmd:{}", argv.join(" ")),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn embed(&self, x: &AudioClip) -> Result<Voiceprint> {
        let req = Request::Embed {
            rate: x.sample_rate(),
            pcm16_b64: encode_pcm16_b64(x),
        };
        let reply = {
            let mut conn = self
                .conn
                .lock()
                .map_err(|_| Error::ScorerUnreachable("connection lock poisoned".into()))?;
            round_trip(&mut conn, &req)?
        };
        let v = reply
            .embedding
            .ok_or_else(|| Error::Protocol("embed reply lacks `embedding`".into()))?;
        if v.len() != self.dim {
            return Err(Error::Protocol(format!(
                "embedding has {} entries, hello advertised {}",
                v.len(),
                self.dim
            )));
        }
        Voiceprint::from_raw(v, self.origin.clone())
            .map_err(|e| Error::Protocol(format!("unusable embedding: {e}")))
    }
}

fn round_trip(conn: &mut Connection, req: &Request) -> Result<Response> {
    let mut line = serde_json::to_string(req)?;
    line.push('\n');
    conn.stdin
        .write_all(line.as_bytes())
        .and_then(|_| conn.stdin.flush())
        .map_err(|e| Error::ScorerUnreachable(format!("write failed: {e}")))?;
    let mut reply = String::new();
    let n = conn
        .stdout
        .read_line(&mut reply)
        .map_err(|e| Error::ScorerUnreachable(format!("read failed: {e}")))?;
    if n == 0 {
        return Err(Error::ScorerUnreachable("scorer closed its output".into()));
    }
    let resp: Response = serde_json::from_str(reply.trim_end())
        .map_err(|e| Error::Protocol(format!("unparseable reply: {e}")))?;
    if !resp.ok {
        return Err(Error::ScorerFailed(
            resp.error.unwrap_or_else(|| "unspecified error".into()),
        ));
    }
    Ok(resp)
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            let _ = conn.child.kill();
            let _ = conn.child.wait();
        }
    }
}
