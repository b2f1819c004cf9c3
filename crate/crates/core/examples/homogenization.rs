//! Homogenizing a sequence relabels its entries; the moment matrix is unchanged. Atoms found
//! in homogeneous coordinates map back through `x = y / x0`, weight `w * x0^(2n)`.

use momentsos::extract::{dehomogenize, AtomicMeasure, Provenance};
use momentsos::moments::{homogenize_sequence, moments_of_atoms};
use momentsos::parse::parse_polynomial;
use momentsos::poly::homogenize_poly;

fn main() -> momentsos::Result<()> {
    let phi = moments_of_atoms(&[vec![0.5, -1.0], vec![2.0, 0.25]], &[0.4, 0.6], 2)?;
    let hom = homogenize_sequence(&phi)?;
    let same = hom.moment_matrix() == phi.moment_matrix(2)?;
    println!("homogenized moment matrix equals M_2: {same}");
    println!("round trip restores the sequence: {}", hom.dehomogenize() == phi);

    let vars = vec!["x".to_string(), "y".to_string()];
    let f = parse_polynomial("x^2*y - 3*x + 1", &vars)?;
    // printed with (x0, x, y) named (x1, x2, x3)
    println!("f~ = {:?}", homogenize_poly(&f, 2)?);

    // the homogeneous atom (x0, x, y) = (2, 2, 4) of weight 1 is the point (1, 2) of weight 2^4
    let tilde = AtomicMeasure::new(vec![vec![2.0, 2.0, 4.0], vec![0.0, 1.0, 0.0]], vec![1.0, 0.5], Provenance::Given)?;
    let (mu, discarded) = dehomogenize(&tilde, 2, None)?;
    println!("affine atoms {:?} weights {:?}", mu.points, mu.weights);
    println!("discarded {} atom(s) at infinity carrying mass {}", discarded.discarded_atoms, discarded.discarded_mass);
    Ok(())
}
