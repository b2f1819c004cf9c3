//! Sparse multivariate polynomials over `f64`, the graded-lex monomial basis and
//! polynomial optimization problems.
//!
//! Monomials are ordered graded-lexicographically everywhere in the crate: first by
//! total degree, then lexicographically with a larger power of `x1` first. For two
//! variables and degree two this gives `1, x1, x2, x1^2, x1 x2, x2^2`, which is the
//! row order of every moment matrix built here.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector `alpha` of a monomial `x^alpha`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        Exponent(entries)
    }

    pub fn zero(num_vars: usize) -> Self {
        Exponent(vec![0; num_vars])
    }

    /// The exponent of the single variable `x_{var+1}`.
    pub fn unit(num_vars: usize, var: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[var] = 1;
        Exponent(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.0.len(), other.0.len());
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when `other` divides `self`.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(Exponent(out))
    }

    pub fn divides(&self, other: &Exponent) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Prepends the power of a homogenizing variable `x0`.
    pub fn with_leading(&self, power: u32) -> Exponent {
        let mut e = Vec::with_capacity(self.0.len() + 1);
        e.push(power);
        e.extend_from_slice(&self.0);
        Exponent(e)
    }

    /// `x^alpha` evaluated at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&a, &xi)| if a == 0 { acc } else { acc * xi.powi(a as i32) })
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for Exponent {
    fn from(v: Vec<u32>) -> Self {
        Exponent(v)
    }
}

/// Binomial coefficient `C(n, k)` as `usize`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Dimension `s(k) = C(k + d, d)` of the space of polynomials of degree at most `k`.
pub fn basis_size(num_vars: usize, degree: usize) -> usize {
    binomial(degree + num_vars, num_vars)
}

/// All exponents of `num_vars` variables with total degree at most `degree`, in graded-lex order.
pub fn monomial_basis(num_vars: usize, degree: usize) -> Vec<Exponent> {
    let mut out = Vec::with_capacity(basis_size(num_vars, degree));
    for k in 0..=degree {
        out.extend(monomials_of_degree(num_vars, k));
    }
    out
}

/// Exponents of total degree exactly `degree`, larger first exponent first.
pub fn monomials_of_degree(num_vars: usize, degree: usize) -> Vec<Exponent> {
    fn rec(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<Exponent>) {
        if slots == 1 {
            prefix.push(left);
            out.push(Exponent(prefix.clone()));
            prefix.pop();
            return;
        }
        for a in (0..=left).rev() {
            prefix.push(a);
            rec(prefix, left - a, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if num_vars == 0 {
        if degree == 0 {
            out.push(Exponent(Vec::new()));
        }
        return out;
    }
    rec(&mut Vec::with_capacity(num_vars), degree as u32, num_vars, &mut out);
    out
}

/// Sparse polynomial: exponent to nonzero coefficient.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    num_vars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(num_vars);
        p.add_term(Exponent::zero(num_vars), c);
        p
    }

    /// The coordinate polynomial `x_{var+1}`.
    pub fn var(num_vars: usize, var: usize) -> Self {
        let mut p = Polynomial::zero(num_vars);
        p.add_term(Exponent::unit(num_vars, var), 1.0);
        p
    }

    pub fn monomial(exponent: Exponent, coefficient: f64) -> Self {
        let mut p = Polynomial::zero(exponent.num_vars());
        p.add_term(exponent, coefficient);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs; repeated exponents are summed.
    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(num_vars);
        for (e, c) in terms {
            if e.len() != num_vars {
                return Err(Error::DimensionMismatch {
                    expected: num_vars,
                    got: e.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::Invalid(format!("non-finite coefficient {c}")));
            }
            p.add_term(Exponent(e), c);
        }
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_term(&mut self, exponent: Exponent, coefficient: f64) {
        assert_eq!(exponent.num_vars(), self.num_vars, "exponent length");
        if coefficient == 0.0 {
            return;
        }
        match self.terms.entry(exponent) {
            Entry::Vacant(v) => {
                v.insert(coefficient);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += coefficient;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exponent: &Exponent) -> f64 {
        self.terms.get(exponent).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Exponent::total_degree).max().unwrap_or(0)
    }

    /// `ceil(deg / 2)`.
    pub fn half_degree(&self) -> usize {
        self.degree().div_ceil(2)
    }

    pub fn is_homogeneous_of_degree(&self, degree: usize) -> bool {
        self.terms.keys().all(|e| e.total_degree() == degree)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.eval(x)).sum()
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial::zero(self.num_vars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.num_vars, other.num_vars);
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.num_vars, other.num_vars);
        let mut acc: BTreeMap<Exponent, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                *acc.entry(a.add(b)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        Polynomial {
            num_vars: self.num_vars,
            terms: acc,
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.num_vars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to `x_{var+1}`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.num_vars);
        for (e, c) in &self.terms {
            let a = e.0[var];
            if a > 0 {
                let mut d = e.clone();
                d.0[var] -= 1;
                p.add_term(d, c * a as f64);
            }
        }
        p
    }

    /// `x -> p(s x)`: every coefficient of degree `k` is multiplied by `s^k`.
    pub fn rescale_variables(&self, s: f64) -> Polynomial {
        let mut p = Polynomial::zero(self.num_vars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s.powi(e.total_degree() as i32));
        }
        p
    }

    /// Sum of the terms of total degree exactly `degree`.
    pub fn homogeneous_part(&self, degree: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.num_vars);
        for (e, c) in &self.terms {
            if e.total_degree() == degree {
                p.add_term(e.clone(), *c);
            }
        }
        p
    }

    /// Sets the first variable to one; the inverse of [`homogenize_poly`] on its image.
    pub fn dehomogenize_first(&self) -> Result<Polynomial> {
        if self.num_vars == 0 {
            return Err(Error::Invalid("cannot dehomogenize a polynomial without variables".into()));
        }
        let mut p = Polynomial::zero(self.num_vars - 1);
        for (e, c) in &self.terms {
            p.add_term(Exponent(e.0[1..].to_vec()), *c);
        }
        Ok(p)
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if i == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let vars: Vec<String> = e
                .0
                .iter()
                .enumerate()
                .filter(|(_, a)| **a > 0)
                .map(|(j, a)| {
                    if *a == 1 {
                        format!("x{}", j + 1)
                    } else {
                        format!("x{}^{}", j + 1, a)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Homogenizes `f` (of degree at most `2 order`) to degree `2 order` in `(x0, x)`.
///
/// Each term `f_a x^a` becomes `f_a x0^(2n - |a|) x^a`; the new variable `x0` is the first.
pub fn homogenize_poly(f: &Polynomial, order: usize) -> Result<Polynomial> {
    let top = 2 * order;
    if f.degree() > top {
        return Err(Error::DegreeTooHigh {
            degree: f.degree(),
            bound: top,
        });
    }
    let mut out = Polynomial::zero(f.num_vars() + 1);
    for (e, c) in f.terms() {
        out.add_term(e.with_leading((top - e.total_degree()) as u32), c);
    }
    Ok(out)
}

/// Polynomial optimization problem `min f(x) s.t. g_j(x) >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pop {
    objective: Polynomial,
    constraints: Vec<Polynomial>,
}

impl Pop {
    pub fn new(objective: Polynomial, constraints: Vec<Polynomial>) -> Result<Self> {
        let d = objective.num_vars();
        if d == 0 {
            return Err(Error::Invalid("a problem needs at least one variable".into()));
        }
        for (j, g) in constraints.iter().enumerate() {
            if g.num_vars() != d {
                return Err(Error::Invalid(format!(
                    "constraint {} has {} variables, objective has {d}",
                    j + 1,
                    g.num_vars()
                )));
            }
        }
        Ok(Pop {
            objective,
            constraints,
        })
    }

    pub fn unconstrained(objective: Polynomial) -> Result<Self> {
        Pop::new(objective, Vec::new())
    }

    pub fn objective(&self) -> &Polynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.objective.num_vars()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `d_f = ceil(deg f / 2)`.
    pub fn objective_half_degree(&self) -> usize {
        self.objective.half_degree()
    }

    /// `d_j = ceil(deg g_j / 2)` for each constraint.
    pub fn constraint_half_degrees(&self) -> Vec<usize> {
        self.constraints.iter().map(Polynomial::half_degree).collect()
    }

    /// `v = max_j d_j`. Without constraints the value 1 is returned as a placeholder;
    /// the unconstrained pipeline never reads it.
    pub fn v(&self) -> usize {
        self.constraint_half_degrees().into_iter().max().unwrap_or(1)
    }

    /// Smallest order admissible for the relaxation: `max(v, d_f)`, and at least 1.
    pub fn min_order(&self) -> usize {
        let v = if self.is_unconstrained() { 0 } else { self.v() };
        v.max(self.objective_half_degree()).max(1)
    }

    /// Degree of `f` and every `g_j` at most two.
    pub fn is_qcqp(&self) -> bool {
        self.objective.degree() <= 2 && self.constraints.iter().all(|g| g.degree() <= 2)
    }

    /// Whether `x` satisfies every constraint up to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|g| g.eval_unchecked(x) >= -tol)
    }

    /// Substitutes `x = radius * u`, giving the problem in the scaled variables `u`.
    pub fn rescaled(&self, radius: f64) -> Pop {
        Pop {
            objective: self.objective.rescale_variables(radius),
            constraints: self
                .constraints
                .iter()
                .map(|g| g.rescale_variables(radius))
                .collect(),
        }
    }
}
