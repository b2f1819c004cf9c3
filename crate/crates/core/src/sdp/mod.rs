//! Dense semidefinite programming: a bundled primal-dual interior-point solver and an
//! external-process adapter speaking the JSON program/result format.

mod adapter;
mod ipm;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{MomentSequence, SymMatrix};
use crate::relaxation::{ConicProgram, ProgramKind};

pub use adapter::{serve_adapter, ADAPTER_ENV};

/// Version tag written into the JSON result form.
pub const RESULT_FORMAT: &str = "momentsos-solve-result/1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    Bundled,
    /// Executable reading a program on stdin and writing a result on stdout.
    External(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Objective values below this (while feasible) are reported as unbounded.
    pub unbounded_floor: f64,
    pub backend: Backend,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-9,
            gap_tol: 1e-9,
            max_iterations: 200,
            unbounded_floor: -1e9,
            backend: Backend::Bundled,
        }
    }
}

impl SolverSettings {
    /// Defaults, with the backend taken from the adapter environment variable when set.
    pub fn from_env() -> Self {
        let backend = match std::env::var_os(ADAPTER_ENV) {
            Some(p) if !p.is_empty() => Backend::External(PathBuf::from(p)),
            _ => Backend::Bundled,
        };
        SolverSettings {
            backend,
            ..SolverSettings::default()
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.feasibility_tol = tol;
        self.gap_tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.feasibility_tol > 0.0 && self.gap_tol > 0.0) {
            return Err(Error::Invalid("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// The objective is unbounded in the optimizing direction.
    UnboundedBelow,
    Infeasible,
    NumericalTrouble,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::UnboundedBelow => "unbounded_below",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalTrouble => "numerical_trouble",
        }
    }
}

/// Residuals actually reached by the returned point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Achieved {
    pub equality_residual: f64,
    /// `max(0, -min eigenvalue)` over all blocks.
    pub block_infeasibility: f64,
    /// Relative residual of the multiplier equations.
    pub multiplier_residual: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective at `decision`, in the program's own sense.
    pub value: f64,
    /// Objective bound implied by the multipliers, when finite.
    pub bound: Option<f64>,
    pub decision: Vec<f64>,
    /// PSD multiplier of each block.
    pub multipliers: Vec<SymMatrix>,
    /// `<F_j(decision), X_j>` per block.
    pub complementarity: Vec<f64>,
    pub block_min_eigenvalues: Vec<f64>,
    pub achieved: Achieved,
    pub iterations: usize,
    /// Moments in the original variables, for moment programs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSequence>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Moments of a moment-program solution, in the original variables.
    pub fn moments(&self) -> Result<&MomentSequence> {
        self.moments
            .as_ref()
            .ok_or_else(|| Error::Invalid("result carries no moment sequence".into()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v.as_object_mut()
            .expect("struct serializes to an object")
            .insert("format".into(), RESULT_FORMAT.into());
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text)?;
        if let Some(obj) = v.as_object_mut() {
            match obj.remove("format") {
                Some(serde_json::Value::String(f)) if f == RESULT_FORMAT => {}
                Some(other) => return Err(Error::Invalid(format!("unsupported result format {other}"))),
                None => {}
            }
        }
        Ok(serde_json::from_value(v)?)
    }

    /// Recomputes every derived field from `decision` and `multipliers`.
    fn finalize(mut self, prog: &ConicProgram) -> Result<Self> {
        if self.decision.len() != prog.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: prog.num_variables(),
                got: self.decision.len(),
            });
        }
        if self.multipliers.len() != prog.blocks.len()
            || self.multipliers.iter().zip(&prog.blocks).any(|(x, b)| x.dim() != b.dim)
        {
            return Err(Error::Invalid("multiplier blocks do not match the program".into()));
        }
        let values = prog.block_values(&self.decision);
        self.value = prog.objective_value(&self.decision);
        self.block_min_eigenvalues = values.iter().map(SymMatrix::min_eigenvalue).collect();
        self.complementarity = values.iter().zip(&self.multipliers).map(|(m, x)| m.inner(x)).collect();
        self.achieved.equality_residual = prog.equality_residual(&self.decision);
        self.achieved.block_infeasibility = self
            .block_min_eigenvalues
            .iter()
            .fold(0.0, |acc: f64, &e| acc.max(-e));
        self.bound = self.bound.filter(|b| b.is_finite());
        self.moments = match prog.kind {
            ProgramKind::MomentRelaxation { .. } => Some(prog.moments_from(&self.decision)?),
            ProgramKind::SosGram { .. } => None,
        };
        Ok(self)
    }
}

/// Solves `prog` with the configured backend.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<SolveResult> {
    settings.validate()?;
    let raw = match &settings.backend {
        Backend::Bundled => ipm::solve(prog, settings),
        Backend::External(path) => adapter::solve_external(path, prog)?,
    };
    raw.finalize(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Polynomial, Pop};
    use crate::relaxation::{build_qn, build_unconstrained, build_unconstrained_dual};

    fn poly(d: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(d, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    #[test]
    fn qcqp_value() {
        let pop = Pop::new(
            poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]),
            vec![poly(2, &[(&[1, 0], 1.0), (&[0, 1], 1.0), (&[0, 0], -1.0)])],
        )
        .unwrap();
        let res = solve(&build_qn(&pop, 1).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.value - 0.5).abs() < 1e-6, "{}", res.value);
        let phi = res.moments().unwrap();
        assert!((phi.mass() - 1.0).abs() < 1e-8);
        for c in &res.complementarity {
            assert!(c.abs() <= 1e-8, "{c}");
        }
    }

    #[test]
    fn shifted_square() {
        let f = poly(1, &[(&[2], 1.0), (&[0], 1.0)]);
        let res = solve(&build_unconstrained(&f).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.value - 1.0).abs() < 1e-8);
        let dual = solve(&build_unconstrained_dual(&f).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(dual.status, SolveStatus::Optimal);
        assert!((dual.value - 1.0).abs() < 1e-8);
        // Q = diag(0, 1)
        let q = &dual.decision;
        assert!(q[1].abs() < 1e-6 && q[2].abs() < 1e-6 && (q[3] - 1.0).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn perfect_square_dual() {
        let f = poly(1, &[(&[2], 1.0), (&[1], -2.0), (&[0], 1.0)]);
        let dual = solve(&build_unconstrained_dual(&f).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(dual.status, SolveStatus::Optimal);
        assert!(dual.value.abs() < 1e-7, "{}", dual.value);
    }

    #[test]
    fn infeasible_relaxation() {
        // x^2 <= -1 has no real point and no pseudo-moment either
        let pop = Pop::new(poly(1, &[(&[1], 1.0)]), vec![poly(1, &[(&[2], -1.0), (&[0], -1.0)])]).unwrap();
        let res = solve(&build_qn(&pop, 1).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_linear_objective() {
        // min x over x >= 0 is fine, min -x over x >= 0 is unbounded
        let pop = Pop::new(poly(1, &[(&[1], -1.0)]), vec![poly(1, &[(&[1], 1.0)])]).unwrap();
        let res = solve(&build_qn(&pop, 1).unwrap(), &SolverSettings::default()).unwrap();
        assert_eq!(res.status, SolveStatus::UnboundedBelow);
    }

    #[test]
    fn deterministic() {
        let f = poly(2, &[(&[4, 0], 1.0), (&[2, 0], -2.0), (&[0, 4], 1.0), (&[0, 2], -2.0), (&[0, 0], 2.0)]);
        let prog = build_unconstrained(&f).unwrap();
        let a = solve(&prog, &SolverSettings::default()).unwrap();
        let b = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn result_json_round_trip() {
        let f = poly(1, &[(&[2], 1.0), (&[0], 1.0)]);
        let res = solve(&build_unconstrained(&f).unwrap(), &SolverSettings::default()).unwrap();
        let back = SolveResult::from_json(&res.to_json().unwrap()).unwrap();
        assert_eq!(back, res);
    }
}
