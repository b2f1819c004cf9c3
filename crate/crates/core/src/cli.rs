//! Batch front end: problem file in, per-order report out.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::certify::{certify, Certificate, CertificateKind, CertifySettings, RankReport};
use crate::error::{Error, Result};
use crate::extract::AtomicMeasure;
use crate::moments::MomentSequence;
use crate::oracle::{oracle, OracleResult, OracleSettings};
use crate::parse::parse_polynomial;
use crate::poly::{Exponent, Polynomial, Pop};
use crate::relaxation::{build_qn_with, build_unconstrained_with, BuildOptions};
use crate::sdp::{solve, Achieved, Backend, SolveStatus, SolverSettings};

/// Version tag of the report JSON.
pub const REPORT_FORMAT: &str = "momentsos-report/1";

/// One `{exponents, coefficient}` entry of a polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

/// A polynomial given as a term list or in the restricted infix syntax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolySpec {
    Terms(Vec<TermSpec>),
    Infix(String),
}

/// Variable names, or a count `d` naming them `x1..xd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariablesSpec {
    Names(Vec<String>),
    Count(usize),
}

impl VariablesSpec {
    pub fn names(&self) -> Vec<String> {
        match self {
            VariablesSpec::Names(n) => n.clone(),
            VariablesSpec::Count(d) => (1..=*d).map(|i| format!("x{i}")).collect(),
        }
    }
}

/// `minimize objective subject to constraint >= 0` for every listed constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variables: VariablesSpec,
    pub objective: PolySpec,
    #[serde(default)]
    pub constraints: Vec<PolySpec>,
    /// Search box `[[lo, hi], ...]` for the oracle; `[-5, 5]^d` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_box: Option<Vec<(f64, f64)>>,
}

fn to_polynomial(spec: &PolySpec, vars: &[String], place: &str) -> Result<Polynomial> {
    let d = vars.len();
    match spec {
        PolySpec::Infix(text) => parse_polynomial(text, vars).map_err(|e| Error::Parse(format!("{place}: {e}"))),
        PolySpec::Terms(terms) => {
            let mut p = Polynomial::zero(d);
            for (i, t) in terms.iter().enumerate() {
                if t.exponents.len() != d {
                    return Err(Error::Parse(format!(
                        "{place}, term {}: {} exponents for {d} variables",
                        i + 1,
                        t.exponents.len()
                    )));
                }
                if !t.coefficient.is_finite() {
                    return Err(Error::Parse(format!("{place}, term {}: coefficient is not finite", i + 1)));
                }
                p.add_term(Exponent::new(t.exponents.clone()), t.coefficient);
            }
            Ok(p)
        }
    }
}

fn to_terms(p: &Polynomial) -> PolySpec {
    PolySpec::Terms(
        p.terms()
            .map(|(e, c)| TermSpec {
                exponents: e.entries().to_vec(),
                coefficient: c,
            })
            .collect(),
    )
}

impl ProblemFile {
    /// Parses the JSON text; errors carry the line and column or the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("problem file, line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.names()
    }

    pub fn to_pop(&self) -> Result<Pop> {
        let vars = self.variable_names();
        if vars.is_empty() {
            return Err(Error::Parse("variables: at least one variable is needed".into()));
        }
        let f = to_polynomial(&self.objective, &vars, "objective")?;
        let gs = self
            .constraints
            .iter()
            .enumerate()
            .map(|(j, g)| to_polynomial(g, &vars, &format!("constraint {}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(b) = &self.oracle_box {
            if b.len() != vars.len() {
                return Err(Error::Parse(format!(
                    "oracle_box: {} intervals for {} variables",
                    b.len(),
                    vars.len()
                )));
            }
        }
        Pop::new(f, gs)
    }

    /// The term-list form of a problem.
    pub fn from_pop(pop: &Pop, variables: Vec<String>) -> Self {
        ProblemFile {
            name: None,
            variables: VariablesSpec::Names(variables),
            objective: to_terms(pop.objective()),
            constraints: pop.constraints().iter().map(to_terms).collect(),
            oracle_box: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// First order; `max(v, d_f)` when absent.
    pub order: Option<usize>,
    /// Last order; `order` when only `order` is given, otherwise the first order plus two.
    pub max_order: Option<usize>,
    pub all_orders: bool,
    pub rank_tol: f64,
    pub solve_tol: f64,
    pub backend: Backend,
    pub oracle: bool,
    pub seed: u64,
    pub scale_radius: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            order: None,
            max_order: None,
            all_orders: false,
            rank_tol: 1e-6,
            solve_tol: 1e-9,
            backend: SolverSettings::from_env().backend,
            oracle: true,
            seed: 0x5eed,
            scale_radius: None,
        }
    }
}

/// Parses `bundled` or `adapter:PATH`.
pub fn parse_backend(text: &str) -> Result<Backend> {
    if text == "bundled" {
        return Ok(Backend::Bundled);
    }
    match text.strip_prefix("adapter:") {
        Some(path) if !path.is_empty() => Ok(Backend::External(PathBuf::from(path))),
        _ => Err(Error::Invalid(format!("solver must be 'bundled' or 'adapter:PATH', got '{text}'"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub name: Option<String>,
    pub variables: Vec<String>,
    pub objective: PolySpec,
    pub constraints: Vec<PolySpec>,
    pub objective_degree: usize,
    /// `max_j ceil(deg g_j / 2)`; absent without constraints.
    pub v: Option<usize>,
    pub unconstrained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingsSummary {
    pub first_order: usize,
    pub last_order: usize,
    pub all_orders: bool,
    pub rank_tol: f64,
    pub solve_tol: f64,
    pub solver: String,
    pub oracle: bool,
    pub seed: u64,
    pub scale_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub value: f64,
    pub bound: Option<f64>,
    pub iterations: usize,
    pub achieved: Achieved,
    pub block_min_eigenvalues: Vec<f64>,
    pub complementarity: Vec<f64>,
}

/// Relaxation value against the oracle value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub oracle_value: f64,
    /// `oracle_value - rho_n`; absent when the relaxation has no finite value.
    pub gap: Option<f64>,
    /// `rho_n <= oracle_value + 2 * solve_tol * (1 + |rho_n|)`.
    pub lower_bound_consistent: bool,
    /// Largest `|f(x_i) - oracle_value|` over recovered atoms.
    pub atom_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub solve: Option<SolveSummary>,
    pub ranks: Option<RankReport>,
    pub certificate: Option<Certificate>,
    pub measure: Option<AtomicMeasure>,
    pub moments: Option<MomentSequence>,
    pub oracle: Option<OracleComparison>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Exact,
    Inconclusive,
    Error,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Exact => 0,
            Outcome::Inconclusive => 2,
            Outcome::Error => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub problem: ProblemSummary,
    pub settings: SettingsSummary,
    pub orders: Vec<OrderReport>,
    pub oracle: Option<OracleResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
    pub outcome: Outcome,
    pub certified_order: Option<usize>,
    pub value: Option<f64>,
    pub minimizers: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT {
            return Err(Error::Parse(format!("unknown report format '{}'", r.format)));
        }
        Ok(r)
    }
}

fn solver_label(b: &Backend) -> String {
    match b {
        Backend::Bundled => "bundled".into(),
        Backend::External(p) => format!("adapter:{}", p.display()),
    }
}

/// The orders to solve; unconstrained problems use the single relaxation `n = deg f / 2`.
fn order_range(pop: &Pop, opts: &RunOptions, notes: &mut Vec<String>) -> Result<(usize, usize)> {
    if pop.is_unconstrained() {
        let deg = pop.objective().degree();
        if deg % 2 == 1 {
            return Err(Error::OddDegree(deg));
        }
        let n = (deg / 2).max(1);
        if opts.order.is_some_and(|o| o != n) || opts.max_order.is_some_and(|o| o != n) {
            notes.push(format!("unconstrained problem: the order range is ignored, single relaxation n = {n}"));
        }
        return Ok((n, n));
    }
    let minimal = pop.min_order();
    let first = opts.order.unwrap_or(minimal);
    if first < minimal {
        let (v, df) = (pop.v(), pop.objective_half_degree());
        return Err(Error::OrderTooLow {
            order: first,
            minimal,
            reason: format!("n >= max(v, d_f) = max({v}, {df})"),
        });
    }
    let last = match (opts.order, opts.max_order) {
        (_, Some(m)) => m,
        (Some(o), None) => o,
        (None, None) => first + 2,
    };
    if last < first {
        return Err(Error::Invalid(format!("max order {last} is below the first order {first}")));
    }
    Ok((first, last))
}

fn compare(oracle: &OracleResult, rho: Option<f64>, measure: Option<&AtomicMeasure>, pop: &Pop, tol: f64) -> OracleComparison {
    let o = oracle.value;
    let atom_gap = measure.map(|mu| {
        mu.points
            .iter()
            .map(|x| (pop.objective().eval_unchecked(x) - o).abs())
            .fold(0.0, f64::max)
    });
    OracleComparison {
        oracle_value: o,
        gap: rho.map(|r| o - r),
        lower_bound_consistent: rho.is_none_or(|r| r <= o + 2.0 * tol * (1.0 + r.abs())),
        atom_gap,
    }
}

fn run_order(pop: &Pop, n: usize, opts: &RunOptions, solver: &SolverSettings, certify_settings: &CertifySettings) -> Result<OrderReport> {
    let build = BuildOptions {
        scale_radius: opts.scale_radius,
    };
    let prog = if pop.is_unconstrained() {
        build_unconstrained_with(pop.objective(), build)?
    } else {
        build_qn_with(pop, n, build)?
    };
    let result = solve(&prog, solver)?;
    let cert = certify(pop, n, &result, certify_settings)?;
    Ok(OrderReport {
        order: n,
        error: None,
        solve: Some(SolveSummary {
            status: result.status,
            value: result.value,
            bound: result.bound,
            iterations: result.iterations,
            achieved: result.achieved.clone(),
            block_min_eigenvalues: result.block_min_eigenvalues.clone(),
            complementarity: result.complementarity.clone(),
        }),
        ranks: cert.ranks.clone(),
        measure: cert.measure.clone(),
        moments: result.moments.clone(),
        certificate: Some(cert),
        oracle: None,
    })
}

/// Builds, solves and certifies each order in turn, stopping at the first exact certificate
/// unless `all_orders` is set. The oracle, when enabled, runs on its own thread meanwhile.
pub fn run(problem: &ProblemFile, opts: &RunOptions) -> Result<Report> {
    let pop = problem.to_pop()?;
    if let Some(r) = opts.scale_radius {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Invalid(format!("scale radius must be positive, got {r}")));
        }
    }
    let mut notes = Vec::new();
    let (first, last) = order_range(&pop, opts, &mut notes)?;
    let solver = SolverSettings {
        backend: opts.backend.clone(),
        ..SolverSettings::default().with_tolerance(opts.solve_tol)
    };
    let certify_settings = CertifySettings::default().with_rank_tol(opts.rank_tol).with_seed(opts.seed);
    let oracle_settings = OracleSettings {
        bounds: problem.oracle_box.clone(),
        seed: opts.seed,
        ..OracleSettings::default()
    };

    let (mut orders, oracle_outcome) = std::thread::scope(|scope| {
        let handle = opts.oracle.then(|| scope.spawn(|| oracle(&pop, &oracle_settings)));
        let mut orders = Vec::new();
        for n in first..=last {
            let rep = run_order(&pop, n, opts, &solver, &certify_settings).unwrap_or_else(|e| OrderReport {
                order: n,
                error: Some(e.to_string()),
                solve: None,
                ranks: None,
                certificate: None,
                measure: None,
                moments: None,
                oracle: None,
            });
            let exact = rep.certificate.as_ref().is_some_and(|c| c.kind.is_exact());
            orders.push(rep);
            if exact && !opts.all_orders {
                break;
            }
        }
        let oracle_outcome = handle.map(|h| h.join().expect("oracle thread panicked"));
        (orders, oracle_outcome)
    });

    let (oracle_result, oracle_error) = match oracle_outcome {
        None => (None, None),
        Some(Ok(o)) => (Some(o), None),
        Some(Err(e)) => (None, Some(e.to_string())),
    };
    if let Some(o) = &oracle_result {
        notes.push("oracle: desk-scale search over a bounded box, not a certificate".into());
        for rep in &mut orders {
            let rho = rep.solve.as_ref().filter(|s| s.status == SolveStatus::Optimal).map(|s| s.value);
            if rep.solve.is_some() {
                rep.oracle = Some(compare(o, rho, rep.measure.as_ref(), &pop, opts.solve_tol));
            }
        }
    }

    let certified = orders
        .iter()
        .find(|r| r.certificate.as_ref().is_some_and(|c| c.kind.is_exact()));
    let outcome = if certified.is_some() {
        Outcome::Exact
    } else if orders.iter().any(|r| r.error.is_some()) {
        Outcome::Error
    } else {
        Outcome::Inconclusive
    };
    let certified_order = certified.map(|r| r.order);
    let value = certified.and_then(|r| r.certificate.as_ref()).and_then(|c| c.value);
    let minimizers = certified
        .and_then(|r| r.measure.as_ref())
        .map(|m| m.points.clone())
        .unwrap_or_default();

    Ok(Report {
        format: REPORT_FORMAT.into(),
        problem: ProblemSummary {
            name: problem.name.clone(),
            variables: problem.variable_names(),
            objective: to_terms(pop.objective()),
            constraints: pop.constraints().iter().map(to_terms).collect(),
            objective_degree: pop.objective().degree(),
            v: (!pop.is_unconstrained()).then(|| pop.v()),
            unconstrained: pop.is_unconstrained(),
        },
        settings: SettingsSummary {
            first_order: first,
            last_order: last,
            all_orders: opts.all_orders,
            rank_tol: opts.rank_tol,
            solve_tol: opts.solve_tol,
            solver: solver_label(&opts.backend),
            oracle: opts.oracle,
            seed: opts.seed,
            scale_radius: opts.scale_radius,
        },
        orders,
        oracle: oracle_result,
        oracle_error,
        outcome,
        certified_order,
        value,
        minimizers,
        notes,
    })
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn kind_label(k: CertificateKind) -> &'static str {
    match k {
        CertificateKind::ExactByRank => "exact (rank condition)",
        CertificateKind::ExactByFlatness => "exact (flat extension)",
        CertificateKind::UnconstrainedExact => "exact (unconstrained)",
        CertificateKind::Inconclusive => "inconclusive",
    }
}

/// Human-readable rendering of a report.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let p = &report.problem;
    let _ = writeln!(
        out,
        "problem {}: {} variables, deg f = {}, {}",
        p.name.as_deref().unwrap_or("(unnamed)"),
        p.variables.len(),
        p.objective_degree,
        match p.v {
            Some(v) => format!("{} constraints, v = {v}", p.constraints.len()),
            None => "unconstrained".into(),
        }
    );
    for rep in &report.orders {
        let _ = write!(out, "order {}: ", rep.order);
        if let Some(e) = &rep.error {
            let _ = writeln!(out, "error: {e}");
            continue;
        }
        if let Some(s) = &rep.solve {
            let _ = write!(out, "{} value {:.9e} ({} iterations)", s.status.as_str(), s.value, s.iterations);
        }
        if let Some(c) = &rep.certificate {
            let _ = write!(out, ", {}", kind_label(c.kind));
        }
        let _ = writeln!(out);
        if let Some(r) = &rep.ranks {
            let ranks: Vec<String> = r.orders.iter().map(|o| format!("M_{}:{}", o.order, o.rank)).collect();
            let _ = writeln!(out, "  ranks {}", ranks.join(" "));
        }
        if let Some(c) = &rep.certificate {
            for t in &c.tests {
                let _ = writeln!(
                    out,
                    "  {} {}: {} ({} vs {})",
                    t.name,
                    t.inequality,
                    if t.passed { "holds" } else { "fails" },
                    t.lhs,
                    t.rhs
                );
            }
            for n in &c.notes {
                let _ = writeln!(out, "  note: {n}");
            }
        }
        if let Some(m) = &rep.measure {
            for (x, w) in m.points.iter().zip(&m.weights) {
                let _ = writeln!(out, "  atom {} weight {:.6}", fmt_point(x), w);
            }
        }
        if let Some(o) = &rep.oracle {
            let _ = writeln!(
                out,
                "  oracle {:.9e}{}",
                o.oracle_value,
                if o.lower_bound_consistent { "" } else { " (relaxation value exceeds the oracle value)" }
            );
        }
    }
    if let Some(o) = &report.oracle {
        let pts: Vec<String> = o.points.iter().take(8).map(|x| fmt_point(x)).collect();
        let _ = writeln!(out, "oracle: value {:.9e} at {}", o.value, pts.join(" "));
    }
    if let Some(e) = &report.oracle_error {
        let _ = writeln!(out, "oracle: {e}");
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    let _ = match (report.outcome, report.certified_order, report.value) {
        (Outcome::Exact, Some(n), Some(v)) => writeln!(out, "result: exact at order {n}, f* = {v:.9e}"),
        (Outcome::Error, ..) => writeln!(out, "result: error"),
        _ => writeln!(out, "result: inconclusive up to order {}", report.settings.last_order),
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qcqp() -> ProblemFile {
        ProblemFile::from_json(
            r#"{"variables": ["x1", "x2"],
                "objective": [{"exponents": [2, 0], "coefficient": 1}, {"exponents": [0, 2], "coefficient": 1}],
                "constraints": ["x1 + x2 - 1"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn problem_forms_agree() {
        let a = qcqp().to_pop().unwrap();
        let b = ProblemFile::from_json(r#"{"variables": 2, "objective": "x1^2 + x2^2", "constraints": [[{"exponents": [1, 0], "coefficient": 1}, {"exponents": [0, 1], "coefficient": 1}, {"exponents": [0, 0], "coefficient": -1}]]}"#)
            .unwrap()
            .to_pop()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exponent_mismatch_is_located() {
        let f = ProblemFile::from_json(r#"{"variables": 2, "objective": [{"exponents": [2, 0, 1], "coefficient": 1}]}"#).unwrap();
        let e = f.to_pop().unwrap_err().to_string();
        assert!(e.contains("objective, term 1"), "{e}");
        let e = ProblemFile::from_json("{\"variables\": 2,\n \"objective\": [}").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn backend_flag() {
        assert_eq!(parse_backend("bundled").unwrap(), Backend::Bundled);
        assert_eq!(parse_backend("adapter:/bin/x").unwrap(), Backend::External("/bin/x".into()));
        assert!(parse_backend("adapter:").is_err());
    }

    #[test]
    fn order_floor_is_enforced() {
        let f = ProblemFile::from_json(r#"{"variables": 1, "objective": "x1^4", "constraints": ["1 - x1^2"]}"#).unwrap();
        let opts = RunOptions {
            order: Some(1),
            oracle: false,
            ..RunOptions::default()
        };
        assert!(matches!(run(&f, &opts), Err(Error::OrderTooLow { .. })));
    }

    #[test]
    fn qcqp_stops_at_first_order() {
        let opts = RunOptions {
            max_order: Some(3),
            backend: Backend::Bundled,
            ..RunOptions::default()
        };
        let rep = run(&qcqp(), &opts).unwrap();
        assert_eq!(rep.outcome, Outcome::Exact);
        assert_eq!(rep.orders.len(), 1);
        assert_eq!(rep.certified_order, Some(1));
        let back = Report::from_json(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
        assert!(render_text(&rep).contains("exact at order 1"));
    }
}
