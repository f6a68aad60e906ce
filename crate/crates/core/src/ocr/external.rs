//! Adapter for out-of-process recognizers.
//!
//! The engine is a long-running child process speaking newline-delimited
//! JSON over its standard streams. For every request line
//!
//! ```text
//! {"id": 3, "kind": "latitude", "image_png_base64": "iVBORw0KGgo..."}
//! ```
//!
//! it must print exactly one response line
//!
//! ```text
//! {"id": 3, "text": "46.123456", "confidence": 0.97}
//! ```
//!
//! with the same `id` and `confidence` in `[0, 1]`. Any other output on
//! stdout is a protocol error. Stderr is collected for diagnostics only.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;

use super::{OcrError, Recognition};
use crate::raster::GrayImage;
use crate::roi::RoiKind;

const STDERR_TAIL: usize = 4096;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    id: u64,
    text: String,
    confidence: f64,
}

/// Formats one request line (without the trailing newline).
pub fn request_line(id: u64, kind: &RoiKind, png: &[u8]) -> String {
    let kind = serde_json::to_string(&kind.to_string()).expect("string serialises");
    let image = base64::engine::general_purpose::STANDARD.encode(png);
    format!("{{\"id\": {id}, \"kind\": {kind}, \"image_png_base64\": \"{image}\"}}")
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
}

impl Running {
    fn spawn(command: &[String]) -> Result<Self, OcrError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| OcrError::Spawn("empty engine command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OcrError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut err_pipe = child.stderr.take().expect("piped");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap();
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_TAIL {
                    let cut = s.len() - STDERR_TAIL;
                    let cut = (cut..s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(s.len());
                    s.drain(..cut);
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            stderr,
        })
    }

    fn crashed(&mut self) -> OcrError {
        // give the stderr reader a moment to drain
        let status = self.child.wait().ok();
        thread::sleep(Duration::from_millis(20));
        let stderr = self.stderr.lock().unwrap().trim().to_string();
        match status {
            Some(s) if s.success() => OcrError::Protocol("engine exited without responding".into()),
            Some(s) => OcrError::EngineCrashed {
                status: s.code(),
                stderr,
            },
            None => OcrError::EngineCrashed { status: None, stderr },
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One engine process. Requests are strictly serialised; use one instance
/// per worker. After a timeout, crash or protocol error the process is
/// discarded and the next request starts a fresh one.
pub struct ExternalEngine {
    command: Vec<String>,
    timeout: Duration,
    next_id: u64,
    running: Option<Running>,
}

impl ExternalEngine {
    pub fn new(command: Vec<String>, timeout_ms: u64) -> Result<Self, OcrError> {
        if command.is_empty() {
            return Err(OcrError::Spawn("empty engine command".into()));
        }
        if timeout_ms == 0 {
            return Err(OcrError::Spawn("timeout_ms must be positive".into()));
        }
        Ok(Self {
            command,
            timeout: Duration::from_millis(timeout_ms),
            next_id: 0,
            running: None,
        })
    }

    pub fn recognize(&mut self, img: &GrayImage, kind: &RoiKind) -> Result<Recognition, OcrError> {
        let result = self.exchange(img, kind);
        if result.is_err() {
            self.running = None;
        }
        result
    }

    fn exchange(&mut self, img: &GrayImage, kind: &RoiKind) -> Result<Recognition, OcrError> {
        if self.running.is_none() {
            self.running = Some(Running::spawn(&self.command)?);
        }
        let engine = self.running.as_mut().expect("just spawned");
        let id = self.next_id;
        self.next_id += 1;

        let mut line = request_line(id, kind, &img.to_png());
        line.push('\n');
        if engine
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| engine.stdin.flush())
            .is_err()
        {
            return Err(engine.crashed());
        }

        let reply = match engine.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(OcrError::Protocol(format!("unreadable engine output: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(OcrError::EngineTimeout {
                    timeout_ms: self.timeout.as_millis() as u64,
                })
            }
            Err(RecvTimeoutError::Disconnected) => return Err(engine.crashed()),
        };
        let resp: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| OcrError::Protocol(format!("malformed response {reply:?}: {e}")))?;
        if resp.id != id {
            return Err(OcrError::Protocol(format!(
                "response id {} does not match request id {id}",
                resp.id
            )));
        }
        if !(0.0..=1.0).contains(&resp.confidence) {
            return Err(OcrError::Protocol(format!(
                "confidence {} outside [0, 1]",
                resp.confidence
            )));
        }
        if resp.text.is_empty() && resp.confidence != 0.0 {
            return Err(OcrError::Protocol("empty text with non-zero confidence".into()));
        }
        Ok(Recognition {
            text: resp.text,
            confidence: resp.confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    /// Echoes each request id back with fixed text.
    const ECHO: &str = r#"while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/^{"id": \([0-9]*\),.*/\1/')
  printf '{"id": %s, "text": "1501", "confidence": 0.9}\n' "$id"
done"#;

    fn img() -> GrayImage {
        GrayImage::filled(4, 3, 255)
    }

    #[test]
    fn request_line_layout() {
        let line = request_line(7, &RoiKind::Latitude, &[1, 2, 3]);
        assert_eq!(line, r#"{"id": 7, "kind": "latitude", "image_png_base64": "AQID"}"#);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["id"], 7);
    }

    #[test]
    fn echo_stub_round_trips() {
        let mut engine = ExternalEngine::new(sh(ECHO), 5000).unwrap();
        for _ in 0..3 {
            let r = engine.recognize(&img(), &RoiKind::Altitude).unwrap();
            assert_eq!(r.text, "1501");
            assert_eq!(r.confidence, 0.9);
        }
    }

    #[test]
    fn slow_engine_times_out() {
        let mut engine = ExternalEngine::new(sh("read line; sleep 5"), 100).unwrap();
        let t = std::time::Instant::now();
        assert!(matches!(
            engine.recognize(&img(), &RoiKind::Altitude),
            Err(OcrError::EngineTimeout { timeout_ms: 100 })
        ));
        assert!(t.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn id_mismatch_is_protocol_error() {
        let script = r#"read line; echo '{"id": 99, "text": "1", "confidence": 0.5}'; sleep 1"#;
        let mut engine = ExternalEngine::new(sh(script), 5000).unwrap();
        let err = engine.recognize(&img(), &RoiKind::Altitude).unwrap_err();
        assert!(matches!(err, OcrError::Protocol(ref m) if m.contains("does not match")), "{err}");
    }

    #[test]
    fn garbage_and_bad_confidence_are_protocol_errors() {
        for reply in [
            "hello",
            r#"{"id": 0, "text": "1", "confidence": 1.5}"#,
            r#"{"id": 0, "text": "1", "confidence": 0.5, "extra": 1}"#,
        ] {
            let script = format!("read line; echo '{reply}'; sleep 1");
            let mut engine = ExternalEngine::new(sh(&script), 5000).unwrap();
            assert!(matches!(
                engine.recognize(&img(), &RoiKind::Altitude),
                Err(OcrError::Protocol(_))
            ));
        }
    }

    #[test]
    fn nonzero_exit_is_crash() {
        let mut engine = ExternalEngine::new(sh("read line; echo boom >&2; exit 3"), 5000).unwrap();
        match engine.recognize(&img(), &RoiKind::Altitude) {
            Err(OcrError::EngineCrashed { status, stderr }) => {
                assert_eq!(status, Some(3));
                assert!(stderr.contains("boom"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn engine_restarts_after_failure() {
        // first process answers with a wrong id, the respawned one behaves
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("seen");
        let script = format!(
            r#"if [ -e {m} ]; then {echo}; else touch {m}; read line; echo '{{"id": 42, "text": "x", "confidence": 1}}'; sleep 1; fi"#,
            m = marker.display(),
            echo = ECHO
        );
        let mut engine = ExternalEngine::new(sh(&script), 5000).unwrap();
        assert!(engine.recognize(&img(), &RoiKind::Altitude).is_err());
        assert_eq!(engine.recognize(&img(), &RoiKind::Altitude).unwrap().text, "1501");
    }
}
