//! The three rank inequalities evaluated on moment matrices of known atomic measures.

use momentsos::certify::{blekherman_threshold, check_blekherman, check_flatness, check_rank_bound, rank_bound_threshold};
use momentsos::moments::moments_of_atoms;

fn main() -> momentsos::Result<()> {
    let atoms = |r: usize| -> Vec<Vec<f64>> { (0..r).map(|i| vec![(1.3 * i as f64).sin(), 1.1 * (0.7 * i as f64 + 0.4).cos()]).collect() };
    for r in 1..=7 {
        let w = vec![1.0 / r as f64; r];
        let phi = moments_of_atoms(&atoms(r), &w, 3)?;
        let (bounded, rep) = check_rank_bound(&phi, 3, 1, 1e-6)?;
        let (flat, _) = check_flatness(&phi, 3, 1, 1e-6)?;
        let (blek, _) = check_blekherman(&phi, 3, 1e-6)?;
        println!(
            "{r} atoms: rank M_3 = {}, rank <= {} {bounded:5}, flat {flat:5}, rank <= {} {blek:5}",
            rep.top(),
            rank_bound_threshold(3, 1)?,
            blekherman_threshold(3)?
        );
    }
    Ok(())
}
