//! Moments of a known atomic measure go in; the same atoms and weights come back out.

use momentsos::certify::numerical_rank;
use momentsos::extract::{extract_atoms, verify_moments};
use momentsos::moments::moments_of_atoms;

fn main() -> momentsos::Result<()> {
    let points = vec![vec![0.3, -1.2, 0.5], vec![-0.7, 0.4, 1.1], vec![1.5, 0.9, -0.2]];
    let weights = vec![0.2, 0.5, 0.3];
    let n = 3;
    let phi = moments_of_atoms(&points, &weights, n)?;

    let rank = numerical_rank(&phi.moment_matrix(n)?, 1e-6).rank;
    println!("M_{n} is {0}x{0} with rank {rank}", phi.moment_matrix(n)?.dim());

    let mu = extract_atoms(&phi, rank, 1e-6)?;
    for (x, w) in mu.points.iter().zip(&mu.weights) {
        println!("atom {:+.9?} weight {:.9}", x, w);
    }
    let check = verify_moments(&mu, &phi, 2 * n - 1, 1e-8)?;
    println!("moment residual up to degree {}: {:.2e} ({})", check.degree, check.residual, if check.passed { "ok" } else { "too large" });
    Ok(())
}
