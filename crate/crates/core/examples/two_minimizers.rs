//! `min -x^2 s.t. 1 - x^2 >= 0` has the two global minimizers `x = -1` and `x = 1`.
//!
//! The order-one relaxation is not exact in the rank sense; at order two the moment matrix
//! has rank 2 = n - v + 1 and the descent recovers both atoms.

use momentsos::certify::{certify, rank_report, CertifySettings};
use momentsos::extract::{qcqp_recover, verify_support, ExtractOptions};
use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;
use momentsos::relaxation::build_qn;
use momentsos::sdp::{solve, SolverSettings};

fn main() -> momentsos::Result<()> {
    let vars = vec!["x".to_string()];
    let pop = Pop::new(parse_polynomial("-x^2", &vars)?, vec![parse_polynomial("1 - x^2", &vars)?])?;

    for n in 1..=3 {
        let result = solve(&build_qn(&pop, n)?, &SolverSettings::default())?;
        let phi = result.moments()?;
        let ranks: Vec<usize> = rank_report(phi, n, 1e-6)?.orders.iter().map(|o| o.rank).collect();
        let cert = certify(&pop, n, &result, &CertifySettings::default())?;
        println!("n = {n}: rho = {:.9}, ranks {:?}, {:?}", result.value, ranks, cert.kind);
    }

    let result = solve(&build_qn(&pop, 2)?, &SolverSettings::default())?;
    let rec = qcqp_recover(result.moments()?, &pop, 2, &ExtractOptions::default())?;
    for (x, w) in rec.measure.points.iter().zip(&rec.measure.weights) {
        println!("atom {:+.8} weight {:.8}", x[0], w);
    }
    let support = verify_support(&rec.measure, &pop, 1e-6)?;
    println!("support margins {:?} -> {}", support.margins, if support.passed { "inside K" } else { "outside K" });
    Ok(())
}
