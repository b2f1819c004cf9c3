//! Semidefinite relaxations as standard-form conic programs.
//!
//! A [`ConicProgram`] optimizes a linear function of a decision vector `y` subject to
//! linear equalities and linear matrix inequalities `F_j(y) = F_j0 + sum_i y_i F_ji >= 0`.
//! For moment relaxations the decision vector is the pseudo-moment vector itself, indexed
//! by `monomial_basis(d, 2n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{basis_matrices, MomentSequence, SymMatrix};
use crate::poly::{basis_size, monomial_basis, Exponent, Polynomial, Pop};

/// Version tag written into the JSON exchange form.
pub const PROGRAM_FORMAT: &str = "momentsos-conic-program/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// What the decision vector means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProgramKind {
    /// Decision vector = pseudo-moments of order `order` in the scaled variables `x / scale`.
    MomentRelaxation { num_vars: usize, order: usize, scale: f64 },
    /// Decision vector = `(lambda, Gram entries)` for `f - lambda = v_n^T Q v_n`.
    SosGram { num_vars: usize, order: usize },
}

/// `sum_i coefficients[i].1 * y[coefficients[i].0] = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearEquality {
    pub coefficients: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// One linear matrix inequality `constant + sum_k y[terms[k].0] * terms[k].1 >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    pub constant: Option<SymMatrix>,
    pub terms: Vec<(usize, SymMatrix)>,
}

impl PsdBlock {
    /// Evaluates the affine map at `y`.
    pub fn evaluate(&self, y: &[f64]) -> SymMatrix {
        let mut m = match &self.constant {
            Some(c) => c.as_matrix().clone(),
            None => nalgebra::DMatrix::zeros(self.dim, self.dim),
        };
        for (i, a) in &self.terms {
            m += a.as_matrix() * y[*i];
        }
        SymMatrix::from_matrix(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub kind: ProgramKind,
    pub sense: Sense,
    /// Human-readable name of each decision variable.
    pub variables: Vec<String>,
    /// Exponent of each decision variable for moment programs.
    pub exponents: Option<Vec<Exponent>>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub equalities: Vec<LinearEquality>,
    pub blocks: Vec<PsdBlock>,
}

impl ConicProgram {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest absolute equality residual at `y`.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| (e.coefficients.iter().map(|(i, c)| c * y[*i]).sum::<f64>() - e.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Every block's matrix at `y`.
    pub fn block_values(&self, y: &[f64]) -> Vec<SymMatrix> {
        self.blocks.iter().map(|b| b.evaluate(y)).collect()
    }

    /// Interprets a decision vector of a moment program as moments in the original variables.
    pub fn moments_from(&self, y: &[f64]) -> Result<MomentSequence> {
        match self.kind {
            ProgramKind::MomentRelaxation { num_vars, order, scale } => {
                let phi = MomentSequence::new(num_vars, order, y.to_vec())?;
                Ok(if scale == 1.0 { phi } else { phi.rescaled(scale) })
            }
            ProgramKind::SosGram { .. } => Err(Error::Invalid(
                "the decision vector of an SOS program is not a moment sequence".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProgramJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: ProgramJson = serde_json::from_str(text)?;
        dto.try_into()
    }
}

/// Options shared by the builders.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub struct BuildOptions {
    /// Substitute `x = radius * u` before assembly; moments are mapped back after solving.
    pub scale_radius: Option<f64>,
}


fn moment_variables(d: usize, order: usize) -> (Vec<String>, Vec<Exponent>) {
    let exps = monomial_basis(d, 2 * order);
    let names = exps.iter().map(|e| format!("y{e:?}")).collect();
    (names, exps)
}

/// Localizing/moment block `M_k(g y)` as a linear map of the moment vector.
fn localizing_block(name: String, d: usize, k: usize, g: &Polynomial) -> Result<PsdBlock> {
    let mats = basis_matrices(d, k, g)?;
    let terms = mats
        .into_iter()
        .map(|(e, m)| (crate::moments::monomial_rank(&e), m))
        .collect();
    Ok(PsdBlock {
        name,
        dim: basis_size(d, k),
        constant: None,
        terms,
    })
}

fn moment_program(pop: &Pop, order: usize, scale: f64) -> Result<ConicProgram> {
    let d = pop.num_vars();
    let (variables, exponents) = moment_variables(d, order);
    let mut objective = vec![0.0; variables.len()];
    for (e, c) in pop.objective().terms() {
        objective[crate::moments::monomial_rank(e)] += c;
    }
    let mut blocks = vec![localizing_block(
        "moment".into(),
        d,
        order,
        &Polynomial::constant(d, 1.0),
    )?];
    for (j, g) in pop.constraints().iter().enumerate() {
        let dj = g.half_degree();
        blocks.push(localizing_block(format!("localizing[g{}]", j + 1), d, order - dj, g)?);
    }
    Ok(ConicProgram {
        kind: ProgramKind::MomentRelaxation {
            num_vars: d,
            order,
            scale,
        },
        sense: Sense::Minimize,
        variables,
        exponents: Some(exponents),
        objective,
        objective_constant: 0.0,
        equalities: vec![LinearEquality {
            coefficients: vec![(0, 1.0)],
            rhs: 1.0,
        }],
        blocks,
    })
}

/// The degree-`n` relaxation: minimize `phi(f)` s.t. `phi(1) = 1`, `M_{n-d_j}(g_j phi) >= 0`.
pub fn build_qn(pop: &Pop, order: usize) -> Result<ConicProgram> {
    build_qn_with(pop, order, BuildOptions::default())
}

pub fn build_qn_with(pop: &Pop, order: usize, options: BuildOptions) -> Result<ConicProgram> {
    let df = pop.objective_half_degree();
    let v = if pop.is_unconstrained() { 0 } else { pop.v() };
    let minimal = df.max(v).max(1);
    if order < minimal {
        let reason = if order < v {
            format!("n >= v = {v}")
        } else if order < df {
            format!("n >= d_f = {df}")
        } else {
            "n >= 1".to_string()
        };
        return Err(Error::OrderTooLow {
            order,
            minimal,
            reason,
        });
    }
    match options.scale_radius {
        Some(r) if r > 0.0 && r != 1.0 => moment_program(&pop.rescaled(r), order, r),
        Some(r) if !(r > 0.0) => Err(Error::Invalid(format!("scale radius must be positive, got {r}"))),
        _ => moment_program(pop, order, 1.0),
    }
}

fn unconstrained_order(f: &Polynomial) -> Result<usize> {
    let deg = f.degree();
    if deg % 2 == 1 {
        return Err(Error::OddDegree(deg));
    }
    if deg == 0 {
        return Err(Error::Invalid("a constant objective needs no relaxation".into()));
    }
    Ok(deg / 2)
}

/// The single relaxation of `inf f` over `R^d`: minimize `phi(f)` s.t. `phi(1) = 1`, `M_n(phi) >= 0`.
pub fn build_unconstrained(f: &Polynomial) -> Result<ConicProgram> {
    build_unconstrained_with(f, BuildOptions::default())
}

pub fn build_unconstrained_with(f: &Polynomial, options: BuildOptions) -> Result<ConicProgram> {
    let order = unconstrained_order(f)?;
    build_qn_with(&Pop::unconstrained(f.clone())?, order, options)
}

/// Its SOS dual: maximize `lambda` s.t. `f - lambda = v_n(x)^T Q v_n(x)`, `Q >= 0`.
///
/// Variable 0 is `lambda`; the rest are the lower-triangle entries of `Q`.
pub fn build_unconstrained_dual(f: &Polynomial) -> Result<ConicProgram> {
    let order = unconstrained_order(f)?;
    let d = f.num_vars();
    let basis = monomial_basis(d, order);
    let s = basis.len();
    let mut variables = vec!["lambda".to_string()];
    let mut pairs = Vec::new();
    for i in 0..s {
        for j in 0..=i {
            variables.push(format!("Q[{i},{j}]"));
            pairs.push((i, j));
        }
    }
    let nvar = variables.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); basis_size(d, 2 * order)];
    rows[0].push((0, 1.0));
    let mut terms = Vec::with_capacity(pairs.len());
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let alpha = basis[i].add(&basis[j]);
        let w = if i == j { 1.0 } else { 2.0 };
        rows[crate::moments::monomial_rank(&alpha)].push((k + 1, w));
        let mut e = nalgebra::DMatrix::zeros(s, s);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        terms.push((k + 1, SymMatrix::from_matrix(e)));
    }
    let equalities = monomial_basis(d, 2 * order)
        .iter()
        .zip(rows)
        .map(|(alpha, coefficients)| LinearEquality {
            coefficients,
            rhs: f.coefficient(alpha),
        })
        .collect();
    let mut objective = vec![0.0; nvar];
    objective[0] = 1.0;
    Ok(ConicProgram {
        kind: ProgramKind::SosGram { num_vars: d, order },
        sense: Sense::Maximize,
        variables,
        exponents: None,
        objective,
        objective_constant: 0.0,
        equalities,
        blocks: vec![PsdBlock {
            name: "gram".into(),
            dim: s,
            constant: None,
            terms,
        }],
    })
}

// JSON exchange form ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProgramJson {
    format: String,
    kind: ProgramKind,
    sense: Sense,
    variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponents: Option<Vec<Exponent>>,
    objective: Vec<f64>,
    objective_constant: f64,
    equalities: Vec<LinearEquality>,
    blocks: Vec<BlockJson>,
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    name: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant: Option<Vec<f64>>,
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    variable: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponent: Option<Exponent>,
    packed_lower: Vec<f64>,
}

impl From<&ConicProgram> for ProgramJson {
    fn from(p: &ConicProgram) -> Self {
        ProgramJson {
            format: PROGRAM_FORMAT.into(),
            kind: p.kind.clone(),
            sense: p.sense,
            variables: p.variables.clone(),
            exponents: p.exponents.clone(),
            objective: p.objective.clone(),
            objective_constant: p.objective_constant,
            equalities: p.equalities.clone(),
            blocks: p
                .blocks
                .iter()
                .map(|b| BlockJson {
                    name: b.name.clone(),
                    dim: b.dim,
                    constant: b.constant.as_ref().map(SymMatrix::packed_lower),
                    terms: b
                        .terms
                        .iter()
                        .map(|(i, m)| TermJson {
                            variable: *i,
                            exponent: p.exponents.as_ref().map(|e| e[*i].clone()),
                            packed_lower: m.packed_lower(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ProgramJson> for ConicProgram {
    type Error = Error;

    fn try_from(p: ProgramJson) -> Result<Self> {
        if p.format != PROGRAM_FORMAT {
            return Err(Error::Invalid(format!("unsupported program format '{}'", p.format)));
        }
        let n = p.variables.len();
        if p.objective.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.objective.len(),
            });
        }
        let check = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(Error::Invalid(format!("variable index {i} out of range")))
            }
        };
        for e in &p.equalities {
            for (i, _) in &e.coefficients {
                check(*i)?;
            }
        }
        let mut blocks = Vec::with_capacity(p.blocks.len());
        for b in p.blocks {
            let constant = b
                .constant
                .map(|c| SymMatrix::from_packed_lower(b.dim, &c))
                .transpose()?;
            let mut terms = Vec::with_capacity(b.terms.len());
            for t in b.terms {
                check(t.variable)?;
                terms.push((t.variable, SymMatrix::from_packed_lower(b.dim, &t.packed_lower)?));
            }
            blocks.push(PsdBlock {
                name: b.name,
                dim: b.dim,
                constant,
                terms,
            });
        }
        Ok(ConicProgram {
            kind: p.kind,
            sense: p.sense,
            variables: p.variables,
            exponents: p.exponents,
            objective: p.objective,
            objective_constant: p.objective_constant,
            equalities: p.equalities,
            blocks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moments_of_atoms;

    fn poly(d: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(d, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    fn qcqp() -> Pop {
        Pop::new(
            poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]),
            vec![poly(2, &[(&[1, 0], 1.0), (&[0, 1], 1.0), (&[0, 0], -1.0)])],
        )
        .unwrap()
    }

    fn interval() -> Pop {
        Pop::new(poly(1, &[(&[2], -1.0)]), vec![poly(1, &[(&[0], 1.0), (&[2], -1.0)])]).unwrap()
    }

    #[test]
    fn qcqp_order_one_layout() {
        let prog = build_qn(&qcqp(), 1).unwrap();
        assert_eq!(prog.num_variables(), 6);
        assert_eq!(prog.blocks.len(), 2);
        assert_eq!(prog.blocks[0].dim, 3);
        assert_eq!(prog.blocks[1].dim, 1);
        // localizing scalar = y10 + y01 - y00
        let y = [1.0, 0.25, 0.5, 0.0, 0.0, 0.0];
        assert_eq!(prog.blocks[1].evaluate(&y).get(0, 0), -0.25);
        assert_eq!(prog.equalities.len(), 1);
        assert_eq!(prog.objective, vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn interval_order_two_layout() {
        let prog = build_qn(&interval(), 2).unwrap();
        assert_eq!(prog.num_variables(), 5);
        assert_eq!(prog.blocks[0].dim, 3);
        assert_eq!(prog.blocks[1].dim, 2);
    }

    #[test]
    fn order_too_small_names_the_minimum() {
        let pop = Pop::new(poly(1, &[(&[4], 1.0)]), vec![]).unwrap();
        match build_qn(&pop, 1) {
            Err(Error::OrderTooLow { minimal, .. }) => assert_eq!(minimal, 2),
            other => panic!("{other:?}"),
        }
        let pop = Pop::new(poly(1, &[(&[1], 1.0)]), vec![poly(1, &[(&[4], -1.0), (&[0], 1.0)])]).unwrap();
        let err = build_qn(&pop, 1).unwrap_err().to_string();
        assert!(err.contains("n >= 2"), "{err}");
    }

    #[test]
    fn unconstrained_builders() {
        let p = build_unconstrained(&poly(1, &[(&[2], 1.0)])).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].dim, 2);
        let f = poly(
            2,
            &[(&[4, 0], 1.0), (&[2, 0], -2.0), (&[0, 4], 1.0), (&[0, 2], -2.0), (&[0, 0], 2.0)],
        );
        let p = build_unconstrained(&f).unwrap();
        assert_eq!(p.blocks[0].dim, 6);
        assert_eq!(p.num_variables(), 15);
        assert!(matches!(
            build_unconstrained(&poly(1, &[(&[3], 1.0)])),
            Err(Error::OddDegree(3))
        ));
    }

    #[test]
    fn sos_dual_layout() {
        let f = poly(1, &[(&[2], 1.0), (&[0], 1.0)]);
        let p = build_unconstrained_dual(&f).unwrap();
        assert_eq!(p.sense, Sense::Maximize);
        assert_eq!(p.num_variables(), 1 + 3);
        assert_eq!(p.equalities.len(), 3);
        // lambda = 1, Q = diag(0, 1) is feasible
        let y = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(p.equality_residual(&y), 0.0);
        assert!(p.blocks[0].evaluate(&y).min_eigenvalue() >= 0.0);
    }

    #[test]
    fn pushforward_of_feasible_atoms_is_feasible() {
        let pop = interval();
        for order in 1..4 {
            let prog = build_qn(&pop, order).unwrap();
            let phi = moments_of_atoms(&[vec![-0.3], vec![0.9]], &[0.4, 0.6], order).unwrap();
            assert!(prog.equality_residual(phi.values()) <= 1e-12);
            for m in prog.block_values(phi.values()) {
                assert!(m.min_eigenvalue() >= -1e-10);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let prog = build_qn(&qcqp(), 2).unwrap();
        let back = ConicProgram::from_json(&prog.to_json().unwrap()).unwrap();
        assert_eq!(back, prog);
        let dual = build_unconstrained_dual(&poly(1, &[(&[2], 1.0)])).unwrap();
        assert_eq!(ConicProgram::from_json(&dual.to_json().unwrap()).unwrap(), dual);
    }

    #[test]
    fn scaled_moments_map_back() {
        let pop = qcqp();
        let prog = build_qn_with(&pop, 1, BuildOptions { scale_radius: Some(4.0) }).unwrap();
        // atom at x = (2, 2) is u = (0.5, 0.5) in scaled variables
        let u = moments_of_atoms(&[vec![0.5, 0.5]], &[1.0], 1).unwrap();
        let phi = prog.moments_from(u.values()).unwrap();
        let x = moments_of_atoms(&[vec![2.0, 2.0]], &[1.0], 1).unwrap();
        assert_eq!(phi, x);
        // objective in scaled variables equals f at the unscaled atom
        assert_eq!(prog.objective_value(u.values()), 8.0);
    }
}
