//! Whitelisted child-process checkers for the `external` verifier.
//!
//! The response goes to standard input; exit status 0 passes. On failure, a
//! single real number on standard output replaces the default soft score of 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use fmtcheck_core::verify::ExternalVerifier;
use fmtcheck_core::{ConstraintVerdict, MetaConstraint, Verifier, VerifyError, VerifyOptions};
use serde::{Deserialize, Serialize};

fn default_timeout_ms() -> u64 {
    5000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Allow concurrent invocations; otherwise calls are serialized.
    #[serde(default)]
    pub reentrant: bool,
}

/// Runs commands named in a whitelist. The `command` parameter of an
/// `external` constraint is a whitelist key, never a program path.
#[derive(Debug, Default)]
pub struct ProcessVerifier {
    commands: BTreeMap<String, (ExternalCommand, Arc<Mutex<()>>)>,
}

impl ProcessVerifier {
    pub fn new(whitelist: BTreeMap<String, ExternalCommand>) -> Self {
        ProcessVerifier {
            commands: whitelist
                .into_iter()
                .map(|(k, v)| (k, (v, Arc::new(Mutex::new(())))))
                .collect(),
        }
    }

    fn spawn_and_wait(cmd: &ExternalCommand, args: &[String], response: &str) -> ConstraintVerdict {
        let mut child = match Command::new(&cmd.program)
            .args(&cmd.args)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => return ConstraintVerdict::failed(0.0, format!("spawn failed: {e}")),
        };
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input = response.to_string();
        let writer = std::thread::spawn(move || {
            // A checker may exit without reading; a broken pipe is not an error.
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let deadline = Instant::now() + Duration::from_millis(cmd.timeout_ms);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                Err(e) => return ConstraintVerdict::failed(0.0, format!("wait failed: {e}")),
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        match status {
            None => ConstraintVerdict::failed(0.0, "timeout"),
            Some(s) if s.success() => ConstraintVerdict::passed(format!("{} exited 0", cmd.program)),
            Some(s) => {
                let soft = out.trim().parse::<f64>().ok().filter(|x| x.is_finite()).unwrap_or(0.0);
                ConstraintVerdict::failed(soft, format!("{} exited with {s}", cmd.program))
            }
        }
    }
}

impl ExternalVerifier for ProcessVerifier {
    fn run(&self, command: &str, args: &[String], response: &str) -> Result<ConstraintVerdict, VerifyError> {
        let (cmd, lock) = self
            .commands
            .get(command)
            .ok_or_else(|| VerifyError::External(format!("command {command:?} is not whitelisted")))?;
        if cmd.reentrant {
            Ok(Self::spawn_and_wait(cmd, args, response))
        } else {
            let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
            Ok(Self::spawn_and_wait(cmd, args, response))
        }
    }
}

/// A verifier with the given options and, when the whitelist is non-empty,
/// process-backed `external` checks.
pub fn build_verifier(library: &[MetaConstraint], options: VerifyOptions, whitelist: &BTreeMap<String, ExternalCommand>) -> Verifier {
    let v = Verifier::new(library).with_options(options);
    if whitelist.is_empty() {
        v
    } else {
        v.with_external(Arc::new(ProcessVerifier::new(whitelist.clone())))
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn sh(script: &str, timeout_ms: u64) -> ExternalCommand {
        ExternalCommand {
            program: "sh".into(),
            args: vec!["-c".into(), script.into(), "checker".into()],
            timeout_ms,
            reentrant: false,
        }
    }

    fn verifier() -> ProcessVerifier {
        ProcessVerifier::new(BTreeMap::from([
            ("true".to_string(), sh("exit 0", 2000)),
            ("slow".to_string(), sh("sleep 5", 100)),
            ("soft".to_string(), sh("echo 0.25; exit 3", 2000)),
            ("grep".to_string(), sh("grep -q \"$1\"", 2000)),
            ("missing".to_string(), ExternalCommand {
                program: "/nonexistent/checker".into(),
                args: vec![],
                timeout_ms: 100,
                reentrant: true,
            }),
        ]))
    }

    #[test]
    fn exit_status_decides() {
        let v = verifier();
        assert!(v.run("true", &[], "x").unwrap().pass);
        let s = v.run("soft", &[], "x").unwrap();
        assert!(!s.pass);
        assert_eq!(s.soft, 0.25);
        assert!(v.run("grep", &["needle".into()], "hay needle hay").unwrap().pass);
        assert!(!v.run("grep", &["needle".into()], "hay").unwrap().pass);
    }

    #[test]
    fn timeout_and_spawn_failures_are_verdicts() {
        let v = verifier();
        let t = v.run("slow", &[], "x").unwrap();
        assert!(!t.pass);
        assert_eq!(t.detail, "timeout");
        assert!(v.run("missing", &[], "x").unwrap().detail.starts_with("spawn failed"));
    }

    #[test]
    fn unlisted_command_is_an_error() {
        assert!(matches!(verifier().run("rm", &[], "x"), Err(VerifyError::External(_))));
    }
}
