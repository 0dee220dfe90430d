//! Controller behind a subprocess speaking one JSON line per decision.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use super::{Controller, ControllerFailure, Reply};
use crate::interpreter::DecisionPayload;

/// Writes each payload as a line to the child's stdin and reads one reply
/// line from its stdout. A timeout or a dead child disables the controller
/// for the rest of the episode.
pub struct ExternalProcess {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Option<Receiver<String>>,
    timeout: Duration,
    broken: Option<String>,
}

impl ExternalProcess {
    pub fn spawn(command: &str, timeout: Duration) -> Self {
        let spawned = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn();
        let mut child = match spawned {
            Ok(c) => c,
            Err(e) => {
                log::warn!("could not start controller `{command}`: {e}");
                return Self { child: None, stdin: None, lines: None, timeout, broken: Some(e.to_string()) };
            }
        };
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self { child: Some(child), stdin, lines: Some(rx), timeout, broken: None }
    }

    /// Checks that `command` starts at all: a shell that cannot find the
    /// program exits at once with 126 or 127.
    pub fn probe(command: &str) -> Result<(), String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let deadline = std::time::Instant::now() + Duration::from_millis(300);
        let verdict = loop {
            match child.try_wait() {
                Ok(Some(status)) if matches!(status.code(), Some(126 | 127)) => {
                    break Err(format!("`{command}` could not be started ({status})"))
                }
                Ok(Some(_)) => break Ok(()),
                Ok(None) if std::time::Instant::now() >= deadline => break Ok(()),
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => break Err(e.to_string()),
            }
        };
        drop(child.stdin.take());
        let _ = child.kill();
        let _ = child.wait();
        verdict
    }

    fn fail(&mut self, f: ControllerFailure) -> ControllerFailure {
        self.broken = Some(f.to_string());
        self.stdin = None;
        f
    }

    pub fn is_broken(&self) -> bool {
        self.broken.is_some()
    }
}

impl Controller for ExternalProcess {
    fn name(&self) -> &str {
        "external_process"
    }

    fn query(&mut self, payload: &DecisionPayload) -> Result<Reply, ControllerFailure> {
        if let Some(why) = &self.broken {
            return Err(ControllerFailure::Dead(why.clone()));
        }
        let stdin = self.stdin.as_mut().expect("live controller has stdin");
        let mut line = payload.to_line();
        line.push('\n');
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            return Err(self.fail(ControllerFailure::Dead(e.to_string())));
        }
        let rx = self.lines.as_ref().expect("live controller has a reader");
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => Ok(Reply::Text(reply)),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(ControllerFailure::Timeout(self.timeout.as_secs_f64()))),
            Err(RecvTimeoutError::Disconnected) => Err(self.fail(ControllerFailure::Dead("process closed its output".into()))),
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        // Closing stdin lets well-behaved controllers exit on their own.
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            if !matches!(child.try_wait(), Ok(Some(_))) {
                std::thread::sleep(Duration::from_millis(20));
                if !matches!(child.try_wait(), Ok(Some(_))) {
                    let _ = child.kill();
                }
            }
            let _ = child.wait();
        }
    }
}
