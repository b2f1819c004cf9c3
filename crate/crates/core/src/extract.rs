//! Recovering atomic representing measures from pseudo-moment sequences.
//!
//! The affine route factors `M_n(phi)`, picks a monomial basis of its column space by
//! echelon reduction, builds multiplication matrices on that basis and diagonalizes a random
//! combination of them. The chart route runs the same procedure on the sequence seen through
//! a random affine chart of projective space, which also captures atoms at infinity;
//! dehomogenization then drops them.

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_multi, nnls, rank_from_singular_values, rref, sym_eigen, sym_singular_values};
use crate::moments::{monomial_rank, moments_of_atoms_to_degree, MomentSequence};
use crate::poly::{basis_size, monomial_basis, monomials_of_degree, Exponent, Polynomial, Pop};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Read off the first moments of a rank-one sequence.
    Dirac,
    /// Multiplication matrices on the column space of `M_n`.
    ShiftOperators,
    /// Shift operators in a random chart of projective space, then dehomogenized.
    GenericChart,
    /// Homogeneous atoms mapped to the affine chart `x0 = 1`.
    Dehomogenized,
    /// The descent through truncations for quadratic problems.
    QcqpDescent,
    /// Closed form for convex quadratics.
    Analytic,
    Given,
}

/// Verification data attached to a measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max |phi_a - sum_i w_i x_i^a| / (1 + |phi_a|)` over `|a| <= moment_degree`.
    pub moment_residual: Option<f64>,
    pub moment_degree: Option<usize>,
    /// `g_j(x_i)`, indexed `[atom][constraint]`.
    pub support_margins: Vec<Vec<f64>>,
    /// `|f(x_i) - rho|` per atom.
    pub objective_gaps: Vec<f64>,
    /// Total weight of atoms dropped for lying at infinity.
    pub discarded_mass: Option<f64>,
}

/// `sum_i weights[i] * delta_{points[i]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub mass: f64,
    pub provenance: Provenance,
    pub residuals: Residuals,
}

impl AtomicMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if let Some(p) = points.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("atom weights must be positive and finite, got {w}")));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("atom coordinates must be finite".into()));
        }
        let mass = weights.iter().sum();
        Ok(AtomicMeasure {
            points,
            weights,
            mass,
            provenance,
            residuals: Residuals::default(),
        })
    }

    pub fn num_atoms(&self) -> usize {
        self.points.len()
    }

    pub fn num_vars(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Moments of the measure up to `degree`.
    pub fn moments(&self, degree: usize) -> Result<MomentSequence> {
        moments_of_atoms_to_degree(&self.points, &self.weights, degree)
    }
}

/// Knobs of the extraction routines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Relative threshold for ranks and echelon pivots.
    pub rank_tol: f64,
    /// Acceptance threshold for moment residuals.
    pub moment_tol: f64,
    /// Random charts tried after the affine one.
    pub charts: usize,
    pub seed: u64,
    /// Atoms with `|x0|` at or below this are at infinity; default `1e-6 * max |x0|`.
    pub x0_tol: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            rank_tol: 1e-6,
            moment_tol: 1e-6,
            charts: 3,
            seed: 0x5eed,
            x0_tol: None,
        }
    }
}

/// Extracts `r` atoms from `M_n(phi)` through multiplication matrices.
pub fn extract_atoms(phi: &MomentSequence, r: usize, tol: f64) -> Result<AtomicMeasure> {
    extract_atoms_with(
        phi,
        r,
        &ExtractOptions {
            rank_tol: tol,
            ..ExtractOptions::default()
        },
    )
}

pub fn extract_atoms_with(phi: &MomentSequence, r: usize, opts: &ExtractOptions) -> Result<AtomicMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (points, weights) = affine_atoms(phi, r, opts, &mut rng)?;
    let provenance = if r == 1 { Provenance::Dirac } else { Provenance::ShiftOperators };
    let mut mu = AtomicMeasure::new(points, weights, provenance)?;
    let deg = phi.degree().saturating_sub(1).max(1).min(phi.degree());
    mu.residuals.moment_residual = Some(moment_residual(&mu, phi, deg)?);
    mu.residuals.moment_degree = Some(deg);
    Ok(mu)
}

/// Affine route first, then random charts; returns the first measure matching `phi` up to
/// degree `2n - 1` within `opts.moment_tol`.
pub fn extract_measure(phi: &MomentSequence, opts: &ExtractOptions) -> Result<AtomicMeasure> {
    let n = phi.order();
    let deg = (2 * n).saturating_sub(1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let radius = first_moment_radius(phi);
    let d = phi.num_vars();
    let mut last_err = Error::ExtractionFailed("no chart attempted".into());
    for attempt in 0..=opts.charts {
        let c: Vec<f64> = if attempt == 0 {
            vec![0.0; d]
        } else {
            let scale = 0.5 / ((1.0 + radius) * d as f64);
            (0..d).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
        };
        match chart_attempt(phi, &c, opts, &mut rng) {
            Ok(mu) => {
                let res = moment_residual(&mu, phi, deg)?;
                if res <= opts.moment_tol {
                    let mut mu = mu;
                    mu.residuals.moment_residual = Some(res);
                    mu.residuals.moment_degree = Some(deg);
                    return Ok(mu);
                }
                last_err = Error::ExtractionFailed(format!(
                    "chart {attempt}: moment residual {res:.3e} exceeds {:.1e}",
                    opts.moment_tol
                ));
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn first_moment_radius(phi: &MomentSequence) -> f64 {
    let d = phi.num_vars();
    let m0 = phi.mass().abs().max(f64::MIN_POSITIVE);
    if phi.degree() < 2 {
        return 0.0;
    }
    (0..d)
        .map(|j| {
            let e = Exponent::unit(d, j);
            let second = phi.get(&e.add(&e)).unwrap_or(0.0).abs();
            (second / m0).sqrt()
        })
        .fold(0.0, f64::max)
}

fn chart_attempt(phi: &MomentSequence, c: &[f64], opts: &ExtractOptions, rng: &mut ChaCha8Rng) -> Result<AtomicMeasure> {
    let n = phi.order();
    let affine = c.iter().all(|&v| v == 0.0);
    let psi = if affine { phi.clone() } else { chart_moments(phi, c)? };
    let m = psi.moment_matrix(n)?;
    let r = rank_from_singular_values(&sym_singular_values(m.as_matrix()), opts.rank_tol);
    let (ys, ws) = affine_atoms(&psi, r, opts, rng)?;
    if affine {
        let provenance = if r == 1 { Provenance::Dirac } else { Provenance::ShiftOperators };
        return AtomicMeasure::new(ys, ws, provenance);
    }
    // homogeneous atoms (1 - c.y, y)
    let hom: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| {
            let x0 = 1.0 - c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            std::iter::once(x0).chain(y.iter().copied()).collect()
        })
        .collect();
    let tilde = AtomicMeasure::new(hom, ws, Provenance::GenericChart)?;
    let (mut mu, _) = dehomogenize(&tilde, n, opts.x0_tol)?;
    mu.provenance = Provenance::GenericChart;
    Ok(mu)
}

/// `psi_a = phi((1 + c.x)^(2n - |a|) x^a)`: the moments seen in the chart `x0 + c.x = 1`.
pub fn chart_moments(phi: &MomentSequence, c: &[f64]) -> Result<MomentSequence> {
    let d = phi.num_vars();
    let deg = phi.degree();
    if c.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.len() });
    }
    let mut ell = Polynomial::constant(d, 1.0);
    for (j, &cj) in c.iter().enumerate() {
        ell = ell.add(&Polynomial::var(d, j).scale(cj));
    }
    let mut powers = vec![Polynomial::constant(d, 1.0)];
    for k in 1..=deg {
        powers.push(powers[k - 1].mul(&ell));
    }
    let values = monomial_basis(d, deg)
        .into_iter()
        .map(|a| {
            let k = deg - a.total_degree();
            phi.riesz(&powers[k].mul(&Polynomial::monomial(a, 1.0)))
        })
        .collect::<Result<Vec<f64>>>()?;
    MomentSequence::with_degree(d, deg, values)
}

/// Core shift-operator extraction. Returns points and NNLS weights.
fn affine_atoms(
    phi: &MomentSequence,
    r: usize,
    opts: &ExtractOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = phi.order();
    let d = phi.num_vars();
    if r == 0 {
        return Err(Error::ExtractionFailed("moment matrix has rank 0".into()));
    }
    let mn = phi.moment_matrix(n)?;
    let s = mn.dim();
    if r > s {
        return Err(Error::ExtractionFailed(format!("target rank {r} exceeds matrix size {s}")));
    }
    let (vals, vecs) = sym_eigen(mn.as_matrix());
    if !(vals[r - 1] > 0.0) {
        return Err(Error::ExtractionFailed(format!(
            "eigenvalue {} of the moment matrix is not positive",
            r
        )));
    }
    let points = if r == 1 {
        let m0 = phi.mass();
        if !(m0 > 0.0) {
            return Err(Error::ExtractionFailed("rank-one sequence with non-positive mass".into()));
        }
        vec![phi.first_moments().iter().map(|v| v / m0).collect::<Vec<f64>>()]
    } else {
        let mut l = DMatrix::zeros(s, r);
        for k in 0..r {
            l.set_column(k, &(vecs.column(k) * vals[k].sqrt()));
        }
        let (u, piv) = rref(&l.transpose(), opts.rank_tol);
        if piv.len() < r {
            return Err(Error::ExtractionFailed(format!(
                "column space has only {} independent monomials, expected {r}",
                piv.len()
            )));
        }
        let u = u.rows(0, r).into_owned();
        let basis = monomial_basis(d, n);
        let high = if piv.iter().any(|&p| basis[p].total_degree() == n) {
            Some(border_normal_forms(&u, &piv, &basis, d, n)?)
        } else {
            None
        };
        let mut mult = Vec::with_capacity(d);
        for j in 0..d {
            let mut nj = DMatrix::zeros(r, r);
            for (k, &p) in piv.iter().enumerate() {
                let beta = basis[p].add(&Exponent::unit(d, j));
                let nf: DVector<f64> = if beta.total_degree() <= n {
                    u.column(monomial_rank(&beta)).into_owned()
                } else {
                    let (exps, table) = high.as_ref().expect("computed when a basis element has degree n");
                    let idx = exps.iter().position(|e| *e == beta).expect("every border monomial is tabulated");
                    table.column(idx).into_owned()
                };
                nj.set_row(k, &nf.transpose());
            }
            mult.push(nj);
        }
        check_commuting(&mult, opts.rank_tol)?;
        simultaneous_points(&mult, rng)?
    };
    let weights = fit_weights(phi, &points)?;
    let keep: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 1e-8).collect();
    if keep.is_empty() {
        return Err(Error::ExtractionFailed("every fitted weight vanished".into()));
    }
    let (points, weights) = if keep.len() < points.len() {
        let pts: Vec<Vec<f64>> = keep.iter().map(|&i| points[i].clone()).collect();
        let w = fit_weights(phi, &pts)?;
        let keep2: Vec<usize> = (0..pts.len()).filter(|&i| w[i] > 1e-8).collect();
        (
            keep2.iter().map(|&i| pts[i].clone()).collect(),
            keep2.iter().map(|&i| w[i]).collect(),
        )
    } else {
        (points, weights)
    };
    Ok((points, weights))
}

/// Normal forms of the degree-`n+1` monomials on the basis, from the kernel polynomials
/// `x^g - sum_k U[k,g] b_k` and their multiples up to degree `n + 1`.
fn border_normal_forms(
    u: &DMatrix<f64>,
    piv: &[usize],
    basis: &[Exponent],
    d: usize,
    n: usize,
) -> Result<(Vec<Exponent>, DMatrix<f64>)> {
    let r = piv.len();
    let big = basis_size(d, n + 1);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for k in 0..r {
        let mut e = DVector::zeros(big);
        e[piv[k]] = 1.0;
        cols.push(e);
    }
    for (g, gamma) in basis.iter().enumerate() {
        if piv.contains(&g) {
            continue;
        }
        let room = n + 1 - gamma.total_degree();
        for delta in monomial_basis(d, room) {
            let mut q = DVector::zeros(big);
            q[monomial_rank(&gamma.add(&delta))] += 1.0;
            for k in 0..r {
                let coef = u[(k, g)];
                if coef != 0.0 {
                    q[monomial_rank(&basis[piv[k]].add(&delta))] -= coef;
                }
            }
            cols.push(q);
        }
    }
    let system = DMatrix::from_columns(&cols);
    let targets = monomials_of_degree(d, n + 1);
    let mut rhs = DMatrix::zeros(big, targets.len());
    for (t, beta) in targets.iter().enumerate() {
        rhs[(monomial_rank(beta), t)] = 1.0;
    }
    let sol = lstsq_multi(&system, &rhs);
    let resid = (&system * &sol - &rhs).amax();
    if !(resid <= 1e-6) {
        return Err(Error::ExtractionFailed(format!(
            "degree-{} monomials do not reduce onto the basis (residual {resid:.2e})",
            n + 1
        )));
    }
    Ok((targets, sol.rows(0, r).into_owned()))
}

fn check_commuting(mult: &[DMatrix<f64>], tol: f64) -> Result<()> {
    let scale = mult.iter().map(|m| m.norm()).fold(1.0, f64::max);
    for i in 0..mult.len() {
        for j in i + 1..mult.len() {
            let c = (&mult[i] * &mult[j] - &mult[j] * &mult[i]).norm();
            if c > tol.max(1e-8) * scale * scale {
                return Err(Error::ExtractionFailed(format!(
                    "shift operators {i} and {j} do not commute (defect {c:.2e})"
                )));
            }
        }
    }
    Ok(())
}

fn simultaneous_points(mult: &[DMatrix<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let r = mult[0].nrows();
    let mut coef: Vec<f64> = (0..mult.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = coef.iter().sum();
    coef.iter_mut().for_each(|c| *c /= total);
    let mut combo = DMatrix::zeros(r, r);
    for (c, m) in coef.iter().zip(mult) {
        combo += m * *c;
    }
    let schur = Schur::try_new(combo, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::ExtractionFailed("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.amax().max(1.0);
    for i in 0..r.saturating_sub(1) {
        if t[(i + 1, i)].abs() > 1e-8 * scale {
            return Err(Error::ExtractionFailed("shift operators have complex eigenvalues".into()));
        }
    }
    Ok((0..r)
        .map(|i| {
            let qi = q.column(i);
            mult.iter().map(|m| qi.dot(&(m * qi))).collect()
        })
        .collect())
}

/// Non-negative weights matching the moments of degree `<= max(1, 2n - 1)`.
fn fit_weights(phi: &MomentSequence, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let deg = phi.degree().saturating_sub(1).max(1).min(phi.degree());
    let exps = monomial_basis(phi.num_vars(), deg);
    let mut a = DMatrix::zeros(exps.len(), points.len());
    let mut b = DVector::zeros(exps.len());
    for (row, e) in exps.iter().enumerate() {
        let v = phi.get(e)?;
        let w = 1.0 / (1.0 + v.abs());
        b[row] = v * w;
        for (i, p) in points.iter().enumerate() {
            a[(row, i)] = e.eval(p) * w;
        }
    }
    Ok(nnls(&a, &b).iter().copied().collect())
}

fn moment_residual(mu: &AtomicMeasure, phi: &MomentSequence, degree: usize) -> Result<f64> {
    let exps = monomial_basis(phi.num_vars(), degree);
    let mut worst: f64 = 0.0;
    for e in &exps {
        let v = phi.get(e)?;
        let m: f64 = mu.points.iter().zip(&mu.weights).map(|(p, w)| w * e.eval(p)).sum();
        worst = worst.max((v - m).abs() / (1.0 + v.abs()));
    }
    Ok(worst)
}

/// Result of [`dehomogenize`] besides the affine measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscardReport {
    pub x0_tol: f64,
    pub discarded_atoms: usize,
    pub discarded_mass: f64,
}

/// Maps atoms `(x0, x)` with `|x0| > x0_tol` to `x / x0` with weight `w * x0^(2n)`.
///
/// `x0_tol` defaults to `1e-6 * max |x0|`.
pub fn dehomogenize(mu: &AtomicMeasure, order: usize, x0_tol: Option<f64>) -> Result<(AtomicMeasure, DiscardReport)> {
    if mu.num_vars() == 0 {
        return Err(Error::Invalid("homogeneous atoms need at least the coordinate x0".into()));
    }
    let max_x0 = mu.points.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
    let tol = x0_tol.unwrap_or(1e-6 * max_x0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut discarded = (0, 0.0);
    for (p, &w) in mu.points.iter().zip(&mu.weights) {
        let x0 = p[0];
        if x0.abs() > tol {
            points.push(p[1..].iter().map(|v| v / x0).collect());
            weights.push(w * x0.powi(2 * order as i32));
        } else {
            discarded.0 += 1;
            discarded.1 += w;
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut out = AtomicMeasure::new(points, weights, Provenance::Dehomogenized)?;
    out.residuals.discarded_mass = Some(discarded.1);
    Ok((
        out,
        DiscardReport {
            x0_tol: tol,
            discarded_atoms: discarded.0,
            discarded_mass: discarded.1,
        },
    ))
}

/// Per-atom constraint values and the pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// `g_j(x_i)`, indexed `[atom][constraint]`.
    pub margins: Vec<Vec<f64>>,
    pub min_scaled_margin: Option<f64>,
    pub passed: bool,
}

/// Passes iff `g_j(x_i) >= -tol * (1 + ||g_j||)` for every atom and constraint.
pub fn verify_support(mu: &AtomicMeasure, pop: &Pop, tol: f64) -> Result<SupportReport> {
    if mu.num_atoms() > 0 && mu.num_vars() != pop.num_vars() {
        return Err(Error::DimensionMismatch {
            expected: pop.num_vars(),
            got: mu.num_vars(),
        });
    }
    let mut margins = Vec::with_capacity(mu.num_atoms());
    let mut min_scaled: Option<f64> = None;
    for p in &mu.points {
        let row: Vec<f64> = pop.constraints().iter().map(|g| g.eval_unchecked(p)).collect();
        for (g, m) in pop.constraints().iter().zip(&row) {
            let s = m / (1.0 + g.coefficient_norm());
            min_scaled = Some(min_scaled.map_or(s, |v| v.min(s)));
        }
        margins.push(row);
    }
    let passed = min_scaled.is_none_or(|m| m >= -tol);
    Ok(SupportReport {
        margins,
        min_scaled_margin: min_scaled,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub degree: usize,
    pub residual: f64,
    pub passed: bool,
}

/// `max_{|a| <= degree} |phi_a - sum_i w_i x_i^a| / (1 + |phi_a|)`.
pub fn verify_moments(mu: &AtomicMeasure, phi: &MomentSequence, up_to_degree: usize, tol: f64) -> Result<MomentReport> {
    if up_to_degree > phi.degree() {
        return Err(Error::DegreeTooHigh {
            degree: up_to_degree,
            bound: phi.degree(),
        });
    }
    if mu.num_atoms() > 0 && mu.num_vars() != phi.num_vars() {
        return Err(Error::DimensionMismatch {
            expected: phi.num_vars(),
            got: mu.num_vars(),
        });
    }
    let residual = moment_residual(mu, phi, up_to_degree)?;
    Ok(MomentReport {
        degree: up_to_degree,
        residual,
        passed: residual <= tol,
    })
}

/// One step of the truncation descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub order: usize,
    pub rank: usize,
    pub rank_below: usize,
    pub action: DescentAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentAction {
    /// `rank M_{o-1} = rank M_o`: extract here.
    Flat,
    /// `rank M_{o-1} <= o - 1`: try the next truncation.
    Descend,
    Fail,
}

/// Measure plus the rank decisions that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub measure: AtomicMeasure,
    pub decisions: Vec<RankDecision>,
}

/// Minimizers of a quadratic problem from an optimal `phi` of `Q_n` with `rank M_n <= n`.
///
/// Walks down the truncations until a flat pair of moment matrices appears; at order one
/// this is the rank-one case and the atom is the vector of first moments.
pub fn qcqp_recover(phi: &MomentSequence, pop: &Pop, order: usize, opts: &ExtractOptions) -> Result<Recovery> {
    if pop.is_unconstrained() || pop.v() != 1 || pop.objective().degree() > 2 {
        return Err(Error::Precondition(
            "descent recovery needs v = 1 and deg(f) <= 2".into(),
        ));
    }
    if order > phi.order() {
        return Err(Error::OrderTooHigh {
            k: order,
            order: phi.order(),
        });
    }
    let ranks = crate::certify::rank_report(phi, order, opts.rank_tol)?;
    let rho = phi.riesz(pop.objective())?;
    let mut decisions = Vec::new();
    let mut o = order;
    loop {
        let rank = ranks.rank(o);
        let below = ranks.rank(o - 1);
        if rank == below {
            decisions.push(RankDecision {
                order: o,
                rank,
                rank_below: below,
                action: DescentAction::Flat,
            });
            let mu_o = phi.restrict(2 * o)?;
            let mut mu = extract_atoms_with(&mu_o, rank, opts)?;
            mu.provenance = Provenance::QcqpDescent;
            let report = verify_moments(&mu, &mu_o, 2 * o, opts.moment_tol.max(1e-6))?;
            if !report.passed {
                return Err(Error::RecoveryFailed(format!(
                    "atoms at order {o} miss the moments (residual {:.2e})",
                    report.residual
                )));
            }
            mu.residuals.moment_residual = Some(report.residual);
            mu.residuals.moment_degree = Some(2 * o);
            certify_minimizers(&mut mu, pop, rho, 1e-5).map_err(|e| Error::RecoveryFailed(e.to_string()))?;
            return Ok(Recovery { measure: mu, decisions });
        }
        if o >= 2 && below < o {
            decisions.push(RankDecision {
                order: o,
                rank,
                rank_below: below,
                action: DescentAction::Descend,
            });
            o -= 1;
            continue;
        }
        decisions.push(RankDecision {
            order: o,
            rank,
            rank_below: below,
            action: DescentAction::Fail,
        });
        return Err(Error::RecoveryFailed(format!(
            "at order {o}: rank {rank} is neither flat over rank {below} nor followed by a rank <= {}",
            o.saturating_sub(1)
        )));
    }
}

/// Fills support margins and objective gaps; fails unless every atom is feasible and
/// `|f(x_i) - rho| <= tol * (1 + |rho|)`.
pub fn certify_minimizers(mu: &mut AtomicMeasure, pop: &Pop, rho: f64, tol: f64) -> Result<()> {
    let support = verify_support(mu, pop, tol)?;
    mu.residuals.support_margins = support.margins;
    mu.residuals.objective_gaps = mu
        .points
        .iter()
        .map(|p| (pop.objective().eval_unchecked(p) - rho).abs())
        .collect();
    if !support.passed {
        return Err(Error::ExtractionFailed(format!(
            "an atom violates a constraint (scaled margin {:.2e})",
            support.min_scaled_margin.unwrap_or(0.0)
        )));
    }
    if let Some(g) = mu.residuals.objective_gaps.iter().find(|g| **g > tol * (1.0 + rho.abs())) {
        return Err(Error::ExtractionFailed(format!("an atom misses the optimal value by {g:.2e}")));
    }
    Ok(())
}

/// Global minimizers of `f` from an optimal `phi` of the single unconstrained relaxation.
///
/// Atoms are extracted as points of projective space, those at infinity are dropped, and
/// the rest are kept when `f(x) <= rho + tol * (1 + |rho|)`.
pub fn unconstrained_minimizers(
    phi: &MomentSequence,
    f: &Polynomial,
    rho: f64,
    x0_tol: Option<f64>,
    opts: &ExtractOptions,
) -> Result<AtomicMeasure> {
    if f.num_vars() != phi.num_vars() {
        return Err(Error::DimensionMismatch {
            expected: phi.num_vars(),
            got: f.num_vars(),
        });
    }
    let mut opts = *opts;
    opts.charts = opts.charts.max(1);
    opts.x0_tol = x0_tol.or(opts.x0_tol);
    let mu = extract_measure(phi, &opts)?;
    let tol = 1e-5 * (1.0 + rho.abs());
    let keep: Vec<usize> = (0..mu.num_atoms())
        .filter(|&i| f.eval_unchecked(&mu.points[i]) <= rho + tol)
        .collect();
    if keep.is_empty() {
        return Err(Error::ExtractionFailed("no extracted atom attains the relaxation value".into()));
    }
    let mut out = AtomicMeasure::new(
        keep.iter().map(|&i| mu.points[i].clone()).collect(),
        keep.iter().map(|&i| mu.weights[i]).collect(),
        mu.provenance,
    )?;
    out.residuals = mu.residuals.clone();
    out.residuals.objective_gaps = out.points.iter().map(|p| (f.eval_unchecked(p) - rho).abs()).collect();
    Ok(out)
}

/// `p(x) = prod_i ||x - x(i)||^2`, zero exactly on the listed points.
pub fn witness_polynomial(points: &[Vec<f64>]) -> Result<Polynomial> {
    let Some(first) = points.first() else {
        return Err(Error::Invalid("witness polynomial needs at least one point".into()));
    };
    let d = first.len();
    let mut p = Polynomial::constant(d, 1.0);
    for pt in points {
        if pt.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: pt.len() });
        }
        let mut sq = Polynomial::zero(d);
        for (j, &c) in pt.iter().enumerate() {
            let lin = Polynomial::var(d, j).sub(&Polynomial::constant(d, c));
            sq = sq.add(&lin.mul(&lin));
        }
        p = p.mul(&sq);
    }
    Ok(p)
}
