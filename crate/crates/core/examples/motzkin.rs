//! The Motzkin polynomial is nonnegative with minimum 0 at `(+-1, +-1)` but is not a sum of
//! squares, so its single relaxation is not exact.
//!
//! The moment program is unbounded below. The SOS side has no feasible point at any level,
//! which the interior-point solver shows as a failure to converge rather than a proof. The
//! oracle supplies the true value.

use momentsos::certify::{certify, CertifySettings};
use momentsos::oracle::{oracle, OracleSettings};
use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;
use momentsos::relaxation::{build_unconstrained, build_unconstrained_dual};
use momentsos::sdp::{solve, SolverSettings};

fn main() -> momentsos::Result<()> {
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let f = parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &vars)?;
    let pop = Pop::unconstrained(f.clone())?;
    let settings = SolverSettings::default();

    let primal = solve(&build_unconstrained(&f)?, &settings)?;
    println!("moment side: {} after {} iterations (objective {:.3e})", primal.status.as_str(), primal.iterations, primal.value);
    let cert = certify(&pop, 3, &primal, &CertifySettings::default())?;
    println!("certificate {:?}, value claim {:?}", cert.kind, cert.value_claim);

    let dual = solve(&build_unconstrained_dual(&f)?, &settings)?;
    println!(
        "SOS side: {} (best lambda {:.4}, Gram matrix min eigenvalue {:.2e})",
        dual.status.as_str(),
        dual.value,
        dual.block_min_eigenvalues[0]
    );

    let o = oracle(
        &pop,
        &OracleSettings {
            bounds: Some(vec![(-2.0, 2.0); 2]),
            ..OracleSettings::default()
        },
    )?;
    println!("oracle value {:.3e} at {:?}", o.value, o.points);
    Ok(())
}
