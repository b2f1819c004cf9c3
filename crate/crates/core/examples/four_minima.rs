//! Unconstrained `f = (x1^2 - 1)^2 + (x2^2 - 1)^2`: one relaxation, four global minimizers.
//!
//! The moment matrix has rank 4 <= 6, which certifies the single relaxation; the atoms are
//! extracted through projective charts and filtered by `f(x) = rho`.

use momentsos::certify::{check_blekherman, certify, CertifySettings};
use momentsos::extract::{unconstrained_minimizers, ExtractOptions};
use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;
use momentsos::relaxation::build_unconstrained;
use momentsos::sdp::{solve, SolverSettings};

fn main() -> momentsos::Result<()> {
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let f = parse_polynomial("(x1^2 - 1)^2 + (x2^2 - 1)^2", &vars)?;
    let pop = Pop::unconstrained(f.clone())?;

    let result = solve(&build_unconstrained(&f)?, &SolverSettings::default())?;
    let phi = result.moments()?;
    let (passed, ranks) = check_blekherman(phi, 2, 1e-6)?;
    println!("rho = {:.3e}, rank M_2 = {}, rank test {}", result.value, ranks.top(), if passed { "holds" } else { "fails" });
    println!("singular values {:?}", ranks.orders[2].singular_values.iter().map(|s| format!("{s:.2e}")).collect::<Vec<_>>());

    let cert = certify(&pop, 2, &result, &CertifySettings::default())?;
    println!("certificate {:?}", cert.kind);

    let mu = unconstrained_minimizers(phi, &f, result.value, None, &ExtractOptions::default())?;
    for (x, w) in mu.points.iter().zip(&mu.weights) {
        println!("x = ({:+.6}, {:+.6})  weight {:.4}  f(x) = {:.2e}", x[0], x[1], w, f.eval(x)?);
    }
    Ok(())
}
