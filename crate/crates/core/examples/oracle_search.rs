//! Brute-force reference values: a feasible-grid scan and seeded local refinement.

use momentsos::oracle::{default_box, grid_min, multistart_local};
use momentsos::parse::parse_polynomial;
use momentsos::poly::Pop;

fn main() -> momentsos::Result<()> {
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let p = |s: &str| parse_polynomial(s, &vars);

    let qcqp = Pop::new(p("x1^2 + x2^2")?, vec![p("x1 + x2 - 1")?])?;
    let grid = grid_min(&qcqp, &[(-2.0, 2.0), (-2.0, 2.0)], 201)?;
    println!("QCQP grid: {:.8} at {:?}", grid.value, grid.points);
    let local = multistart_local(&qcqp, 16, &default_box(2), 1)?;
    println!("QCQP local: {:.12} at {:?} (KKT residual {:.1e})", local.value, local.points, local.kkt_residual.unwrap_or(0.0));

    let motzkin = Pop::unconstrained(p("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")?)?;
    let grid = grid_min(&motzkin, &[(-2.0, 2.0), (-2.0, 2.0)], 201)?;
    println!("Motzkin grid: {:.3e} at {:?}", grid.value, grid.points);
    let local = multistart_local(&motzkin, 64, &[(-2.0, 2.0), (-2.0, 2.0)], 7)?;
    println!("Motzkin local: {:.3e} at {} clustered point(s)", local.value, local.points.len());
    Ok(())
}
