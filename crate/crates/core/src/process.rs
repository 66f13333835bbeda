//! A child process that answers one JSON line per request line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

pub(crate) struct JsonLinesProcess {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl JsonLinesProcess {
    pub(crate) fn spawn(program: &str, args: &[String]) -> Result<Self, String> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start {program}: {e}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    /// Sends one request and returns the raw reply line.
    pub(crate) fn call(&mut self, request: &serde_json::Value) -> Result<String, String> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).map_err(|e| e.to_string())?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(|e| e.to_string())? == 0 {
            return Err("child process closed its output".into());
        }
        Ok(reply)
    }
}

impl Drop for JsonLinesProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
