//! Pseudo-moment sequences, the Riesz functional, moment and localizing matrices.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{basis_size, binomial, monomial_basis, monomials_of_degree, Exponent, Polynomial};

/// Position of `alpha` in the graded-lex basis `monomial_basis(d, k)` for any `k >= |alpha|`.
pub fn monomial_rank(alpha: &Exponent) -> usize {
    let d = alpha.num_vars();
    let k = alpha.total_degree();
    let below = if k == 0 { 0 } else { basis_size(d, k - 1) };
    below + rank_within_degree(alpha.entries(), k)
}

fn rank_within_degree(entries: &[u32], degree: usize) -> usize {
    let d = entries.len();
    let mut r = degree;
    let mut pos = 0;
    for (i, &a) in entries.iter().enumerate() {
        let rest = d - i - 1;
        if rest == 0 {
            break;
        }
        let a = a as usize;
        // exponents sharing the prefix but with a larger entry here come first
        for b in (a + 1)..=r {
            pos += binomial(r - b + rest - 1, rest - 1);
        }
        r -= a;
    }
    pos
}

/// Dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after replacing it with `(m + m^T) / 2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetric matrices are square");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        SymMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// `trace(self * other)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// Lower triangle, row by row: `(0,0), (1,0), (1,1), (2,0), ...`.
    pub fn packed_lower(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn from_packed_lower(dim: usize, packed: &[f64]) -> Result<Self> {
        if packed.len() != dim * (dim + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * (dim + 1) / 2,
                got: packed.len(),
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                m[(i, j)] = packed[k];
                m[(j, i)] = packed[k];
                k += 1;
            }
        }
        Ok(SymMatrix(m))
    }
}

#[derive(Serialize, Deserialize)]
struct PackedSym {
    dim: usize,
    packed_lower: Vec<f64>,
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PackedSym {
            dim: self.dim(),
            packed_lower: self.packed_lower(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PackedSym::deserialize(d)?;
        SymMatrix::from_packed_lower(p.dim, &p.packed_lower).map_err(serde::de::Error::custom)
    }
}

/// Truncated pseudo-moment vector `(phi_alpha)` for `|alpha| <= degree`, graded-lex indexed.
///
/// A sequence built for relaxation order `n` has `degree = 2n`; truncation lowers the degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSequence {
    num_vars: usize,
    degree: usize,
    values: Vec<f64>,
}

impl MomentSequence {
    /// Sequence of order `n`, i.e. moments up to degree `2n`.
    pub fn new(num_vars: usize, order: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_degree(num_vars, 2 * order, values)
    }

    pub fn with_degree(num_vars: usize, degree: usize, values: Vec<f64>) -> Result<Self> {
        let expected = basis_size(num_vars, degree);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(MomentSequence {
            num_vars,
            degree,
            values,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Highest moment degree stored.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Largest `n` with `2n <= degree`.
    pub fn order(&self) -> usize {
        self.degree / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Exponents matching `values()` entry by entry.
    pub fn exponents(&self) -> Vec<Exponent> {
        monomial_basis(self.num_vars, self.degree)
    }

    /// `phi_alpha`.
    pub fn get(&self, alpha: &Exponent) -> Result<f64> {
        if alpha.num_vars() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: alpha.num_vars(),
            });
        }
        if alpha.total_degree() > self.degree {
            return Err(Error::MomentOutOfRange {
                degree: alpha.total_degree(),
                order: self.order(),
                max: self.degree,
            });
        }
        Ok(self.values[monomial_rank(alpha)])
    }

    fn at(&self, alpha: &Exponent) -> f64 {
        self.values[monomial_rank(alpha)]
    }

    /// Mass `phi(1)`.
    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    /// First-degree moments `(phi(x_1), ..., phi(x_d))`.
    pub fn first_moments(&self) -> Vec<f64> {
        (0..self.num_vars).map(|j| self.values.get(1 + j).copied().unwrap_or(0.0)).collect()
    }

    /// Riesz functional `p -> sum_alpha p_alpha phi_alpha`.
    pub fn riesz(&self, p: &Polynomial) -> Result<f64> {
        if p.num_vars() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: p.num_vars(),
            });
        }
        let mut acc = 0.0;
        for (e, c) in p.terms() {
            acc += c * self.get(e)?;
        }
        Ok(acc)
    }

    /// Moment matrix `M_k(phi)` with entry `(alpha, beta) = phi_{alpha + beta}`.
    pub fn moment_matrix(&self, k: usize) -> Result<SymMatrix> {
        if 2 * k > self.degree {
            return Err(Error::OrderTooHigh {
                k,
                order: self.order(),
            });
        }
        let basis = monomial_basis(self.num_vars, k);
        let s = basis.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in 0..=i {
                let v = self.at(&basis[i].add(&basis[j]));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Localizing matrix `M_k(g phi)` with entry `sum_gamma g_gamma phi_{alpha + beta + gamma}`.
    pub fn localizing_matrix(&self, g: &Polynomial, k: usize) -> Result<SymMatrix> {
        if g.num_vars() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: g.num_vars(),
            });
        }
        let need = 2 * k + g.degree();
        if need > self.degree {
            return Err(Error::DegreeTooHigh {
                degree: need,
                bound: self.degree,
            });
        }
        let basis = monomial_basis(self.num_vars, k);
        let s = basis.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in 0..=i {
                let ab = basis[i].add(&basis[j]);
                let v: f64 = g.terms().map(|(e, c)| c * self.at(&ab.add(e))).sum();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Drops the entries of top degree.
    pub fn truncate(&self) -> Result<MomentSequence> {
        if self.degree == 0 {
            return Err(Error::Invalid("cannot truncate a degree-0 sequence".into()));
        }
        self.restrict(self.degree - 1)
    }

    /// Keeps the moments of degree at most `degree`.
    pub fn restrict(&self, degree: usize) -> Result<MomentSequence> {
        if degree > self.degree {
            return Err(Error::MomentOutOfRange {
                degree,
                order: self.order(),
                max: self.degree,
            });
        }
        let len = basis_size(self.num_vars, degree);
        Ok(MomentSequence {
            num_vars: self.num_vars,
            degree,
            values: self.values[..len].to_vec(),
        })
    }

    /// Moments of the pushforward under `x -> s x`: `phi_alpha * s^|alpha|`.
    pub fn rescaled(&self, s: f64) -> MomentSequence {
        let values = self
            .exponents()
            .iter()
            .zip(&self.values)
            .map(|(e, v)| v * s.powi(e.total_degree() as i32))
            .collect();
        MomentSequence {
            num_vars: self.num_vars,
            degree: self.degree,
            values,
        }
    }

    /// The homogenized sequence `phi~_{(2n - |alpha|, alpha)} = phi_alpha` (requires even degree).
    pub fn homogenize(&self) -> Result<HomMomentSequence> {
        homogenize_sequence(self)
    }
}

/// Homogeneous sequence indexed by exponents `(i, alpha)` with `i + |alpha| = total_degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomMomentSequence {
    num_vars: usize,
    total_degree: usize,
    values: BTreeMap<Exponent, f64>,
}

impl HomMomentSequence {
    /// Number of variables including `x0`.
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn total_degree(&self) -> usize {
        self.total_degree
    }

    /// Entry at the homogeneous exponent `(i, alpha)`.
    pub fn get(&self, exponent: &Exponent) -> Option<f64> {
        self.values.get(exponent).copied()
    }

    /// Homogeneous moment matrix indexed by the degree-`n` monomials of `(x0, x)`,
    /// listed with the power of `x0` decreasing.
    pub fn moment_matrix(&self) -> SymMatrix {
        let n = self.total_degree / 2;
        let basis = monomials_of_degree(self.num_vars, n);
        let s = basis.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                m[(i, j)] = self.values[&basis[i].add(&basis[j])];
            }
        }
        SymMatrix(m)
    }

    /// Reads back `phi_alpha = phi~_{(2n - |alpha|, alpha)}`.
    pub fn dehomogenize(&self) -> MomentSequence {
        let d = self.num_vars - 1;
        let top = self.total_degree;
        let values = monomial_basis(d, top)
            .iter()
            .map(|a| self.values[&a.with_leading((top - a.total_degree()) as u32)])
            .collect();
        MomentSequence {
            num_vars: d,
            degree: top,
            values,
        }
    }
}

/// Homogenization of a sequence of even degree `2n`.
pub fn homogenize_sequence(phi: &MomentSequence) -> Result<HomMomentSequence> {
    if !phi.degree.is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "homogenization needs an even-degree sequence, got degree {}",
            phi.degree
        )));
    }
    let top = phi.degree;
    let values = phi
        .exponents()
        .into_iter()
        .zip(&phi.values)
        .map(|(a, v)| (a.with_leading((top - a.total_degree()) as u32), *v))
        .collect();
    Ok(HomMomentSequence {
        num_vars: phi.num_vars + 1,
        total_degree: top,
        values,
    })
}

/// Matrices `B^g_alpha` with `g(x) v_k(x) v_k(x)^T = sum_alpha B^g_alpha x^alpha`.
///
/// Only exponents with a nonzero matrix are present.
pub fn basis_matrices(num_vars: usize, k: usize, g: &Polynomial) -> Result<BTreeMap<Exponent, SymMatrix>> {
    if g.num_vars() != num_vars {
        return Err(Error::DimensionMismatch {
            expected: num_vars,
            got: g.num_vars(),
        });
    }
    let basis = monomial_basis(num_vars, k);
    let s = basis.len();
    let mut acc: BTreeMap<Exponent, DMatrix<f64>> = BTreeMap::new();
    for i in 0..s {
        for j in 0..=i {
            let ab = basis[i].add(&basis[j]);
            for (e, c) in g.terms() {
                let m = acc
                    .entry(ab.add(e))
                    .or_insert_with(|| DMatrix::zeros(s, s));
                m[(i, j)] += c;
                if i != j {
                    m[(j, i)] += c;
                }
            }
        }
    }
    Ok(acc
        .into_iter()
        .filter(|(_, m)| m.iter().any(|v| *v != 0.0))
        .map(|(e, m)| (e, SymMatrix(m)))
        .collect())
}

/// Moments `phi_alpha = sum_i w_i x(i)^alpha` for `|alpha| <= 2 order`.
pub fn moments_of_atoms(points: &[Vec<f64>], weights: &[f64], order: usize) -> Result<MomentSequence> {
    moments_of_atoms_to_degree(points, weights, 2 * order)
}

/// As [`moments_of_atoms`] with an arbitrary top degree.
pub fn moments_of_atoms_to_degree(points: &[Vec<f64>], weights: &[f64], degree: usize) -> Result<MomentSequence> {
    if points.is_empty() {
        return Err(Error::Invalid("moments_of_atoms needs at least one atom".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Invalid(format!("atom weights must be positive, got {w}")));
    }
    let values = monomial_basis(d, degree)
        .iter()
        .map(|a| points.iter().zip(weights).map(|(p, w)| w * a.eval(p)).sum())
        .collect();
    MomentSequence::with_degree(d, degree, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(d: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(d, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    fn rows(m: &SymMatrix) -> Vec<Vec<f64>> {
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
    }

    #[test]
    fn rank_matches_basis_position() {
        for d in 1..5 {
            for (i, e) in monomial_basis(d, 6).iter().enumerate() {
                assert_eq!(monomial_rank(e), i, "{e:?}");
            }
        }
    }

    #[test]
    fn riesz_examples() {
        let dirac2 = moments_of_atoms(&[vec![2.0]], &[1.0], 1).unwrap();
        assert_eq!(dirac2.riesz(&Polynomial::constant(1, 1.0)).unwrap(), 1.0);
        assert_eq!(dirac2.riesz(&poly(1, &[(&[2], 1.0)])).unwrap(), 4.0);

        let sym = moments_of_atoms(&[vec![-1.0], vec![1.0]], &[0.5, 0.5], 2).unwrap();
        let p = poly(1, &[(&[4], 1.0), (&[1], -1.0)]);
        assert_eq!(sym.riesz(&p).unwrap(), 1.0);
        assert!(matches!(
            sym.riesz(&poly(1, &[(&[5], 1.0)])),
            Err(Error::MomentOutOfRange { .. })
        ));
    }

    #[test]
    fn moment_matrix_layout_d2() {
        // phi indexed 00,10,01,20,11,02 -> values 1..=6
        let phi = MomentSequence::new(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let m = phi.moment_matrix(1).unwrap();
        assert_eq!(
            rows(&m),
            vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 5.0, 6.0]]
        );
        assert!(phi.moment_matrix(2).is_err());
    }

    #[test]
    fn moment_matrix_of_atoms() {
        let phi = moments_of_atoms(&[vec![1.0, 2.0]], &[1.0], 1).unwrap();
        assert_eq!(phi.values(), &[1.0, 1.0, 2.0, 1.0, 2.0, 4.0]);
        assert_eq!(
            rows(&phi.moment_matrix(1).unwrap()),
            vec![vec![1.0, 1.0, 2.0], vec![1.0, 1.0, 2.0], vec![2.0, 2.0, 4.0]]
        );
        let sym = moments_of_atoms(&[vec![-1.0], vec![1.0]], &[0.5, 0.5], 2).unwrap();
        assert_eq!(sym.values(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(
            rows(&sym.moment_matrix(2).unwrap()),
            vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn localizing_examples() {
        let g = poly(1, &[(&[0], 1.0), (&[2], -1.0)]);
        let at0 = moments_of_atoms(&[vec![0.0]], &[1.0], 2).unwrap();
        assert_eq!(
            rows(&at0.localizing_matrix(&g, 1).unwrap()),
            vec![vec![1.0, 0.0], vec![0.0, 0.0]]
        );
        let at2 = moments_of_atoms(&[vec![2.0]], &[1.0], 1).unwrap();
        assert_eq!(rows(&at2.localizing_matrix(&g, 0).unwrap()), vec![vec![-3.0]]);
        assert!(matches!(
            at2.localizing_matrix(&g, 1),
            Err(Error::DegreeTooHigh { .. })
        ));
        let one = Polynomial::constant(1, 1.0);
        assert_eq!(at0.localizing_matrix(&one, 2).unwrap(), at0.moment_matrix(2).unwrap());
    }

    #[test]
    fn basis_matrices_examples() {
        let one = Polynomial::constant(1, 1.0);
        let b = basis_matrices(1, 1, &one).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(rows(&b[&Exponent::new(vec![0])]), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(rows(&b[&Exponent::new(vec![1])]), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(rows(&b[&Exponent::new(vec![2])]), vec![vec![0.0, 0.0], vec![0.0, 1.0]]);

        let g = poly(1, &[(&[0], 1.0), (&[2], -1.0)]);
        let b = basis_matrices(1, 0, &g).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(rows(&b[&Exponent::new(vec![0])]), vec![vec![1.0]]);
        assert_eq!(rows(&b[&Exponent::new(vec![2])]), vec![vec![-1.0]]);
    }

    #[test]
    fn basis_matrices_reassemble_moment_matrix() {
        let phi = MomentSequence::new(2, 2, (0..15).map(|i| (i as f64).sin()).collect()).unwrap();
        let one = Polynomial::constant(2, 1.0);
        let b = basis_matrices(2, 1, &one).unwrap();
        let mut acc = DMatrix::zeros(3, 3);
        for (e, m) in &b {
            acc += m.as_matrix() * phi.get(e).unwrap();
        }
        assert_eq!(&acc, phi.moment_matrix(1).unwrap().as_matrix());
    }

    #[test]
    fn truncate_examples() {
        let phi = MomentSequence::new(1, 1, vec![1.0, 2.0, 5.0]).unwrap();
        assert_eq!(phi.truncate().unwrap().values(), &[1.0, 2.0]);
        let phi = MomentSequence::new(2, 1, vec![0.0; 6]).unwrap();
        assert_eq!(phi.truncate().unwrap().values().len(), 3);
        let phi = MomentSequence::new(2, 2, vec![0.0; 15]).unwrap();
        assert_eq!(phi.truncate().unwrap().values().len(), 10);
    }

    #[test]
    fn homogenized_matrix_matches_d2_n1() {
        let phi = MomentSequence::new(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let h = homogenize_sequence(&phi).unwrap();
        assert_eq!(h.get(&Exponent::new(vec![2, 0, 0])), Some(1.0));
        assert_eq!(h.get(&Exponent::new(vec![1, 1, 0])), Some(2.0));
        assert_eq!(h.get(&Exponent::new(vec![0, 1, 1])), Some(5.0));
        assert_eq!(h.moment_matrix(), phi.moment_matrix(1).unwrap());
        assert_eq!(h.dehomogenize(), phi);
    }

    #[test]
    fn moments_of_atoms_rejects_bad_input() {
        assert!(moments_of_atoms(&[], &[], 1).is_err());
        assert!(moments_of_atoms(&[vec![1.0], vec![1.0, 2.0]], &[0.5, 0.5], 1).is_err());
        assert!(moments_of_atoms(&[vec![1.0]], &[0.0], 1).is_err());
    }

    #[test]
    fn packed_lower_round_trip() {
        let m = SymMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]);
        let p = m.packed_lower();
        assert_eq!(p, vec![1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(SymMatrix::from_packed_lower(3, &p).unwrap(), m);
    }
}
