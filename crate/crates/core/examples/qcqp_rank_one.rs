//! A convex QCQP whose first relaxation is already exact: `min x1^2 + x2^2 s.t. x1 + x2 >= 1`.
//!
//! The optimal moment matrix of order one has rank one, so it is the moment vector of a
//! Dirac at the minimizer and the descent recovery reads the point off directly.

use momentsos::certify::{certify, CertifySettings};
use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;
use momentsos::relaxation::build_qn;
use momentsos::sdp::{solve, SolverSettings};

fn main() -> momentsos::Result<()> {
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let pop = Pop::new(
        parse_polynomial("x1^2 + x2^2", &vars)?,
        vec![parse_polynomial("x1 + x2 - 1", &vars)?],
    )?;

    let prog = build_qn(&pop, 1)?;
    println!("order-1 program: {} moment variables, {} PSD blocks", prog.num_variables(), prog.blocks.len());

    let result = solve(&prog, &SolverSettings::default())?;
    println!("status {}, rho_1 = {:.10}", result.status.as_str(), result.value);

    let cert = certify(&pop, 1, &result, &CertifySettings::default())?;
    for t in &cert.tests {
        println!("{:<14} {:<40} {}", t.name, t.inequality, if t.passed { "holds" } else { "fails" });
    }
    println!("certificate: {:?}", cert.kind);
    for d in &cert.descent {
        println!("descent at order {}: rank {} / below {} -> {:?}", d.order, d.rank, d.rank_below, d.action);
    }
    if let Some(mu) = &cert.measure {
        println!("minimizer {:?} (weight {:.6})", mu.points[0], mu.weights[0]);
    }
    Ok(())
}
