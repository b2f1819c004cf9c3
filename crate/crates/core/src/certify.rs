//! Numerical ranks and the exactness tests evaluated on an optimal pseudo-moment sequence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{
    certify_minimizers, extract_measure, qcqp_recover, unconstrained_minimizers, AtomicMeasure, ExtractOptions,
    Provenance, RankDecision,
};
use crate::linalg::{lstsq, rank_from_singular_values, sym_eigen, sym_singular_values};
use crate::moments::{MomentSequence, SymMatrix};
use crate::poly::{Exponent, Pop};
use crate::sdp::{SolveResult, SolveStatus};

/// Rank of a symmetric matrix with its singular values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericalRank {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// `rank = #{s_i > tol * s_max}`, `s_max = 0` giving rank 0.
pub fn numerical_rank(m: &SymMatrix, tol: f64) -> NumericalRank {
    let singular_values = sym_singular_values(m.as_matrix());
    NumericalRank {
        rank: rank_from_singular_values(&singular_values, tol),
        singular_values,
    }
}

/// Ranks of `M_k(phi)` for `k = 0..=n`.
///
/// Every sub-order is thresholded against the largest singular value of `M_n`, so the
/// ranks are non-decreasing in `k` (Cauchy interlacing).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub tolerance: f64,
    /// Absolute cutoff `tolerance * s_max(M_n)`.
    pub threshold: f64,
    pub orders: Vec<OrderRank>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRank {
    pub order: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    pub fn rank(&self, k: usize) -> usize {
        self.orders[k].rank
    }

    pub fn top(&self) -> usize {
        self.orders.last().map_or(0, |o| o.rank)
    }
}

pub fn rank_report(phi: &MomentSequence, n: usize, tol: f64) -> Result<RankReport> {
    if n > phi.order() {
        return Err(Error::OrderTooHigh { k: n, order: phi.order() });
    }
    let top = phi.moment_matrix(n)?;
    let top_sv = sym_singular_values(top.as_matrix());
    let smax = top_sv.first().copied().unwrap_or(0.0);
    let threshold = tol * smax;
    let orders = (0..=n)
        .map(|k| {
            let sv = if k == n {
                top_sv.clone()
            } else {
                let sub = top.as_matrix().view((0, 0), (phi_dim(phi, k), phi_dim(phi, k))).into_owned();
                sym_singular_values(&sub)
            };
            let rank = if smax > 0.0 { sv.iter().filter(|&&s| s > threshold).count() } else { 0 };
            OrderRank {
                order: k,
                rank,
                singular_values: sv,
            }
        })
        .collect();
    Ok(RankReport {
        tolerance: tol,
        threshold,
        orders,
    })
}

fn phi_dim(phi: &MomentSequence, k: usize) -> usize {
    crate::poly::basis_size(phi.num_vars(), k)
}

/// The rank bound `n - v + 1`.
pub fn rank_bound_threshold(n: usize, v: usize) -> Result<usize> {
    if n < v {
        return Err(Error::Precondition(format!("n >= v fails: n = {n}, v = {v}")));
    }
    Ok(n - v + 1)
}

/// The rank bound `3n - 3` for `n >= 3`, `6` for `n = 2`.
pub fn blekherman_threshold(n: usize) -> Result<usize> {
    match n {
        0 | 1 => Err(Error::Precondition(format!("the rank bound needs n >= 2, got n = {n}"))),
        2 => Ok(6),
        _ => Ok(3 * n - 3),
    }
}

/// `rank M_n(phi) <= n - v + 1`.
pub fn check_rank_bound(phi: &MomentSequence, n: usize, v: usize, tol: f64) -> Result<(bool, RankReport)> {
    let bound = rank_bound_threshold(n, v)?;
    let report = rank_report(phi, n, tol)?;
    Ok((report.top() <= bound, report))
}

/// `rank M_n(phi) = rank M_{n - gap}(phi)`.
pub fn check_flatness(phi: &MomentSequence, n: usize, gap: usize, tol: f64) -> Result<(bool, RankReport)> {
    if gap == 0 || n < gap {
        return Err(Error::Precondition(format!("n >= gap >= 1 fails: n = {n}, gap = {gap}")));
    }
    let report = rank_report(phi, n, tol)?;
    Ok((report.top() == report.rank(n - gap), report))
}

/// `rank M_n(phi) <= 3n - 3` (`n >= 3`) or `<= 6` (`n = 2`).
pub fn check_blekherman(phi: &MomentSequence, n: usize, tol: f64) -> Result<(bool, RankReport)> {
    let bound = blekherman_threshold(n)?;
    let report = rank_report(phi, n, tol)?;
    Ok((report.top() <= bound, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    ExactByRank,
    ExactByFlatness,
    UnconstrainedExact,
    Inconclusive,
}

impl CertificateKind {
    pub fn is_exact(self) -> bool {
        self != CertificateKind::Inconclusive
    }
}

/// What the relaxation value says about `f*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueClaim {
    /// `rho_n = f*`.
    Exact,
    /// `rho_n <= f*` only.
    LowerBound,
    /// The relaxation is unbounded; no finite bound.
    Unbounded,
    /// The relaxation is infeasible, hence so is the problem.
    Infeasible,
    /// The solver did not reach a usable point.
    Unavailable,
}

/// One evaluated rank inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub name: String,
    pub inequality: String,
    pub lhs: usize,
    pub rhs: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub order: usize,
    pub solver_status: SolveStatus,
    pub value: Option<f64>,
    pub value_claim: ValueClaim,
    pub ranks: Option<RankReport>,
    pub tests: Vec<RankTest>,
    /// Matrix rank `s` of `M_n`.
    pub moment_rank: Option<usize>,
    /// Number of recovered atoms `r`.
    pub atom_count: Option<usize>,
    /// Highest moment degree the recovered measure is claimed to represent.
    pub represented_degree: Option<usize>,
    pub measure: Option<AtomicMeasure>,
    pub minimizers_verified: bool,
    pub descent: Vec<RankDecision>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifySettings {
    pub rank_tol: f64,
    /// Tolerance on support margins and on `|f(x_i) - rho|`, relative to `1 + |rho|`.
    pub verify_tol: f64,
    pub extract: ExtractOptions,
}

impl Default for CertifySettings {
    fn default() -> Self {
        CertifySettings {
            rank_tol: 1e-6,
            verify_tol: 1e-5,
            extract: ExtractOptions::default(),
        }
    }
}

impl CertifySettings {
    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        self.rank_tol = tol;
        self.extract.rank_tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.extract.seed = seed;
        self
    }
}

fn inconclusive(order: usize, result: &SolveResult) -> Certificate {
    let (value, claim) = match result.status {
        SolveStatus::Optimal => (Some(result.value), ValueClaim::LowerBound),
        SolveStatus::UnboundedBelow => (None, ValueClaim::Unbounded),
        SolveStatus::Infeasible => (None, ValueClaim::Infeasible),
        SolveStatus::NumericalTrouble => (None, ValueClaim::Unavailable),
    };
    Certificate {
        kind: CertificateKind::Inconclusive,
        order,
        solver_status: result.status,
        value,
        value_claim: claim,
        ranks: None,
        tests: Vec::new(),
        moment_rank: None,
        atom_count: None,
        represented_degree: None,
        measure: None,
        minimizers_verified: false,
        descent: Vec::new(),
        notes: Vec::new(),
    }
}

/// Runs the exactness tests on the solution of the order-`n` relaxation and, when one fires,
/// recovers and verifies minimizers.
pub fn certify(pop: &Pop, order: usize, result: &SolveResult, settings: &CertifySettings) -> Result<Certificate> {
    let df = pop.objective().degree();
    if pop.is_unconstrained() {
        if df != 2 * order {
            return Err(Error::Precondition(format!(
                "deg(f) = 2n fails for the unconstrained relaxation: deg(f) = {df}, n = {order}"
            )));
        }
    } else {
        let v = pop.v();
        if order < v {
            return Err(Error::Precondition(format!("n >= v fails: n = {order}, v = {v}")));
        }
    }
    let mut cert = inconclusive(order, result);
    if result.status != SolveStatus::Optimal {
        cert.notes.push(format!("solver status {}: no rank test applies", result.status.as_str()));
        return Ok(cert);
    }
    let phi = result.moments()?;
    let rho = result.value;
    let report = rank_report(phi, order, settings.rank_tol)?;
    let s = report.top();
    cert.moment_rank = Some(s);
    let mut extract_opts = settings.extract;
    extract_opts.rank_tol = settings.rank_tol;

    if pop.is_unconstrained() {
        cert.ranks = Some(report);
        if order == 1 {
            return certify_quadratic(pop, rho, cert, settings);
        }
        let bound = blekherman_threshold(order)?;
        let passed = s <= bound;
        cert.tests.push(RankTest {
            name: "blekherman".into(),
            inequality: format!("rank M_{order} <= {bound}"),
            lhs: s,
            rhs: bound,
            passed,
        });
        if !passed {
            return Ok(cert);
        }
        cert.kind = CertificateKind::UnconstrainedExact;
        cert.value_claim = ValueClaim::Exact;
        cert.represented_degree = Some(2 * order - 1);
        match unconstrained_minimizers(phi, pop.objective(), rho, extract_opts.x0_tol, &extract_opts) {
            Ok(mu) => {
                cert.atom_count = Some(mu.num_atoms());
                cert.minimizers_verified = true;
                cert.measure = Some(mu);
            }
            Err(e) => cert.notes.push(format!("value exact, minimizers unverified: {e}")),
        }
        return Ok(cert);
    }

    let v = pop.v();
    let bound = rank_bound_threshold(order, v)?;
    // below 2n - 1 >= deg(f) only a rank-one matrix, a Dirac moment vector, certifies the value
    let degree_ok = 2 * order > df;
    let by_rank = s <= bound && (degree_ok || s == 1);
    cert.tests.push(RankTest {
        name: "rank_bound".into(),
        inequality: if degree_ok {
            format!("rank M_{order} <= n - v + 1 = {bound}")
        } else {
            format!("rank M_{order} = 1 (2n - 1 < deg(f) = {df})")
        },
        lhs: s,
        rhs: if degree_ok { bound } else { 1 },
        passed: by_rank,
    });
    let below = report.rank(order - v);
    let flat = s == below;
    cert.tests.push(RankTest {
        name: "flatness".into(),
        inequality: format!("rank M_{order} = rank M_{}", order - v),
        lhs: s,
        rhs: below,
        passed: flat,
    });
    cert.ranks = Some(report);
    cert.kind = if by_rank {
        CertificateKind::ExactByRank
    } else if flat {
        CertificateKind::ExactByFlatness
    } else {
        return Ok(cert);
    };
    cert.value_claim = ValueClaim::Exact;

    let recovered = if pop.is_qcqp() && by_rank {
        qcqp_recover(phi, pop, order, &extract_opts).map(|rec| {
            cert.descent = rec.decisions;
            rec.measure
        })
    } else {
        Err(Error::RecoveryFailed("descent not applicable".into()))
    };
    let measure = match recovered {
        Ok(mu) => Ok(mu),
        Err(first) => {
            if pop.is_qcqp() && by_rank {
                cert.notes.push(format!("descent recovery failed, trying direct extraction: {first}"));
            }
            extract_measure(phi, &extract_opts).and_then(|mut mu| {
                certify_minimizers(&mut mu, pop, rho, settings.verify_tol)?;
                Ok(mu)
            })
        }
    };
    match measure {
        Ok(mu) => {
            let r = mu.num_atoms();
            cert.atom_count = Some(r);
            cert.represented_degree = Some(if r == s { 2 * order } else { 2 * order - 1 });
            if r != s {
                cert.notes.push(format!(
                    "{r} atoms for matrix rank {s}: representation claimed up to degree {}",
                    2 * order - 1
                ));
            }
            cert.minimizers_verified = true;
            cert.measure = Some(mu);
        }
        Err(e) => cert.notes.push(format!("value exact, minimizers unverified: {e}")),
    }
    Ok(cert)
}

/// Degree-two objective without constraints: exact iff the Hessian is PSD and the gradient
/// equation is consistent.
fn certify_quadratic(pop: &Pop, rho: f64, mut cert: Certificate, settings: &CertifySettings) -> Result<Certificate> {
    let f = pop.objective();
    let d = f.num_vars();
    let mut h = DMatrix::zeros(d, d);
    let mut g = DVector::zeros(d);
    for i in 0..d {
        g[i] = f.coefficient(&Exponent::unit(d, i));
        for j in 0..d {
            let e = Exponent::unit(d, i).add(&Exponent::unit(d, j));
            h[(i, j)] = if i == j { 2.0 } else { 1.0 } * f.coefficient(&e);
        }
    }
    let (eig, _) = sym_eigen(&h);
    let scale = eig.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let psd = eig.last().is_none_or(|&l| l >= -settings.rank_tol * scale);
    cert.tests.push(RankTest {
        name: "hessian_psd".into(),
        inequality: "lambda_min(Hessian) >= 0".into(),
        lhs: psd as usize,
        rhs: 1,
        passed: psd,
    });
    if !psd {
        return Ok(cert);
    }
    let x = lstsq(&h, &(-&g));
    let point: Vec<f64> = x.iter().copied().collect();
    let fx = f.eval_unchecked(&point);
    if (fx - rho).abs() > settings.verify_tol * (1.0 + rho.abs()) {
        cert.notes.push(format!("stationary point value {fx} does not match the relaxation value {rho}"));
        return Ok(cert);
    }
    cert.kind = CertificateKind::UnconstrainedExact;
    cert.value_claim = ValueClaim::Exact;
    let mut mu = AtomicMeasure::new(vec![point], vec![1.0], Provenance::Analytic)?;
    mu.residuals.objective_gaps = vec![(fx - rho).abs()];
    cert.atom_count = Some(1);
    cert.minimizers_verified = true;
    cert.measure = Some(mu);
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moments_of_atoms;

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&SymMatrix::from_diagonal(&[1.0, 1e-12]), 1e-8).rank, 1);
        let phi = moments_of_atoms(&[vec![1.0, 2.0]], &[1.0], 1).unwrap();
        assert_eq!(numerical_rank(&phi.moment_matrix(1).unwrap(), 1e-8).rank, 1);
        let phi = moments_of_atoms(&[vec![-1.0], vec![1.0]], &[0.5, 0.5], 2).unwrap();
        assert_eq!(numerical_rank(&phi.moment_matrix(2).unwrap(), 1e-8).rank, 2);
        assert_eq!(numerical_rank(&SymMatrix::zeros(3), 1e-8).rank, 0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(rank_bound_threshold(3, 1).unwrap(), 3);
        assert_eq!(rank_bound_threshold(2, 2).unwrap(), 1);
        assert!(rank_bound_threshold(1, 2).is_err());
        assert_eq!(blekherman_threshold(2).unwrap(), 6);
        assert_eq!(blekherman_threshold(3).unwrap(), 6);
        assert_eq!(blekherman_threshold(4).unwrap(), 9);
        assert!(blekherman_threshold(1).is_err());
    }

    #[test]
    fn flatness_examples() {
        let phi = moments_of_atoms(&[vec![0.0], vec![1.0]], &[0.5, 0.5], 2).unwrap();
        assert!(check_flatness(&phi, 2, 1, 1e-6).unwrap().0);
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, 0.5],
            vec![-0.5, 1.5],
        ];
        let phi = moments_of_atoms(&pts, &[1.0 / 6.0; 6], 2).unwrap();
        let (flat, rep) = check_flatness(&phi, 2, 1, 1e-6).unwrap();
        assert!(!flat);
        assert_eq!((rep.rank(2), rep.rank(1)), (6, 3));
        // gap = n compares with the 1x1 block [phi_0]
        let phi = moments_of_atoms(&[vec![0.3]], &[1.0], 1).unwrap();
        assert!(check_flatness(&phi, 1, 1, 1e-6).unwrap().0);
        assert!(check_flatness(&phi, 1, 2, 1e-6).is_err());
    }

    #[test]
    fn ranks_are_monotone() {
        let pts = vec![vec![10.0, 0.0], vec![0.0, 0.1], vec![3.0, -2.0]];
        let phi = moments_of_atoms(&pts, &[0.2, 0.3, 0.5], 3).unwrap();
        let rep = rank_report(&phi, 3, 1e-6).unwrap();
        for k in 1..=3 {
            assert!(rep.rank(k) >= rep.rank(k - 1));
        }
    }
}
