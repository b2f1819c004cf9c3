//! Process-boundary adapter: the program goes to the child's stdin as JSON, a result comes
//! back on its stdout.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use super::{SolveResult, SolverSettings};
use crate::error::{Error, Result};
use crate::relaxation::ConicProgram;

/// Environment variable naming an adapter executable.
pub const ADAPTER_ENV: &str = "MOMENTSOS_SDP_ADAPTER";

pub(super) fn solve_external(path: &Path, prog: &ConicProgram) -> Result<SolveResult> {
    let mut child = Command::new(path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Adapter(format!("cannot start {}: {e}", path.display())))?;
    let input = prog.to_json()?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    // write on a separate thread so a chatty child cannot deadlock on a full stdout pipe
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child.wait_with_output()?;
    writer
        .join()
        .map_err(|_| Error::Adapter("writer thread panicked".into()))?
        .map_err(|e| Error::Adapter(format!("writing program: {e}")))?;
    if !output.status.success() {
        return Err(Error::Adapter(format!(
            "{} exited with {}: {}",
            path.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = String::from_utf8(output.stdout).map_err(|e| Error::Adapter(e.to_string()))?;
    SolveResult::from_json(&text).map_err(|e| Error::Adapter(format!("malformed result: {e}")))
}

/// Runs the bundled solver as an adapter: program JSON in, result JSON out.
pub fn serve_adapter(input: &mut impl Read, output: &mut impl Write) -> Result<()> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let prog = ConicProgram::from_json(&text)?;
    let res = super::solve(&prog, &SolverSettings::default())?;
    output.write_all(res.to_json()?.as_bytes())?;
    Ok(())
}
