//! The conic program and the solver result both have a JSON form. Any executable that reads a
//! program on stdin and writes a result on stdout can stand in for the bundled solver; point
//! `MOMENTSOS_SDP_ADAPTER` at it or pass `--solver adapter:PATH` to the binary. Here the
//! bundled adapter loop runs in-process.

use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;
use momentsos::relaxation::{build_qn, ConicProgram};
use momentsos::sdp::{serve_adapter, SolveResult, ADAPTER_ENV};

fn main() -> momentsos::Result<()> {
    let vars = vec!["x".to_string()];
    let pop = Pop::new(parse_polynomial("-x^2", &vars)?, vec![parse_polynomial("1 - x^2", &vars)?])?;
    let prog = build_qn(&pop, 2)?;
    let json = prog.to_json()?;
    println!("program: {} bytes of JSON, {} variables", json.len(), prog.num_variables());
    assert_eq!(ConicProgram::from_json(&json)?, prog);

    let mut out = Vec::new();
    serve_adapter(&mut json.as_bytes(), &mut out)?;
    let result = SolveResult::from_json(&String::from_utf8(out).expect("utf-8"))?;
    println!("adapter answered {} with value {:.9}", result.status.as_str(), result.value);
    println!("moments in original variables: {:?}", result.moments()?.values());
    println!("external solvers are selected with {ADAPTER_ENV}=/path/to/solver");
    Ok(())
}
