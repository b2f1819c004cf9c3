//! Infeasible-start primal-dual interior-point method with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector.
//!
//! Equalities are eliminated first (`y = y_p + N t`), leaving the pair
//!
//! ```text
//!   (X side)  min <C, X>   s.t. <A_k, X> = b_k,  X >= 0
//!   (t side)  max b^T t    s.t. Z = C - sum_k t_k A_k >= 0
//! ```
//!
//! where the t side is the user's program (its LMI blocks are `Z`) and `X` collects the
//! block multipliers. The program objective equals `offset - b^T t`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Achieved, SolveResult, SolveStatus, SolverSettings};
use crate::linalg::{lstsq, rref, sym_eigen};
use crate::moments::SymMatrix;
use crate::relaxation::{ConicProgram, Sense};

type Blocks = Vec<DMatrix<f64>>;

struct Standard {
    dims: Vec<usize>,
    c: Blocks,
    /// Per reduced variable: nonzero `(block, A_kj)` pairs.
    a: Vec<Vec<(usize, DMatrix<f64>)>>,
    b: DVector<f64>,
    /// `t_k(user) = t_k(scaled) / scale[k]`.
    scale: Vec<f64>,
    y_p: Vec<f64>,
    /// Sparse columns of `N`.
    null: Vec<Vec<(usize, f64)>>,
    offset: f64,
    /// A reduced variable improves the objective without entering any block.
    free_direction: bool,
}

enum Reduction {
    Ok(Standard),
    Inconsistent,
}

fn standardize(prog: &ConicProgram) -> Reduction {
    let nvar = prog.num_variables();
    let sign = match prog.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let c: Vec<f64> = prog.objective.iter().map(|v| sign * v).collect();
    let c0 = sign * prog.objective_constant;

    let p = prog.equalities.len();
    let mut aug = DMatrix::zeros(p, nvar + 1);
    for (r, e) in prog.equalities.iter().enumerate() {
        for &(i, v) in &e.coefficients {
            aug[(r, i)] += v;
        }
        aug[(r, nvar)] = e.rhs;
    }
    let (red, pivots) = rref(&aug, 1e-12);
    if pivots.last() == Some(&nvar) {
        return Reduction::Inconsistent;
    }
    let mut is_pivot = vec![false; nvar];
    let mut y_p = vec![0.0; nvar];
    for (r, &pc) in pivots.iter().enumerate() {
        is_pivot[pc] = true;
        y_p[pc] = red[(r, nvar)];
    }
    let free: Vec<usize> = (0..nvar).filter(|&i| !is_pivot[i]).collect();
    let null: Vec<Vec<(usize, f64)>> = free
        .iter()
        .map(|&f| {
            let mut col = vec![(f, 1.0)];
            for (r, &pc) in pivots.iter().enumerate() {
                let v = red[(r, f)];
                if v != 0.0 {
                    col.push((pc, -v));
                }
            }
            col
        })
        .collect();

    let dims: Vec<usize> = prog.blocks.iter().map(|b| b.dim).collect();
    // per user variable: (block, matrix) occurrences
    let mut occ: Vec<Vec<(usize, &DMatrix<f64>)>> = vec![Vec::new(); nvar];
    for (j, blk) in prog.blocks.iter().enumerate() {
        for (i, m) in &blk.terms {
            occ[*i].push((j, m.as_matrix()));
        }
    }
    let mut cmat: Blocks = prog
        .blocks
        .iter()
        .map(|b| match &b.constant {
            Some(m) => m.as_matrix().clone(),
            None => DMatrix::zeros(b.dim, b.dim),
        })
        .collect();
    for (i, &yi) in y_p.iter().enumerate() {
        if yi != 0.0 {
            for (j, m) in &occ[i] {
                cmat[*j] += *m * yi;
            }
        }
    }
    let offset = c0 + c.iter().zip(&y_p).map(|(a, b)| a * b).sum::<f64>();

    let mut a = Vec::with_capacity(free.len());
    let mut b = Vec::with_capacity(free.len());
    let mut scale = Vec::with_capacity(free.len());
    let mut kept_null = Vec::with_capacity(free.len());
    let mut free_direction = false;
    for col in null {
        let mut blocks: Vec<Option<DMatrix<f64>>> = vec![None; dims.len()];
        let mut bk = 0.0;
        for &(i, v) in &col {
            bk -= c[i] * v;
            for (j, m) in &occ[i] {
                let entry = blocks[*j].get_or_insert_with(|| DMatrix::zeros(dims[*j], dims[*j]));
                *entry -= *m * v;
            }
        }
        let terms: Vec<(usize, DMatrix<f64>)> = blocks
            .into_iter()
            .enumerate()
            .filter_map(|(j, m)| m.filter(|m| m.amax() > 0.0).map(|m| (j, m)))
            .collect();
        let norm = terms.iter().map(|(_, m)| m.norm_squared()).sum::<f64>().sqrt();
        if norm == 0.0 {
            if bk.abs() > 1e-12 * (1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                free_direction = true;
            }
            continue;
        }
        a.push(terms.into_iter().map(|(j, m)| (j, m / norm)).collect());
        b.push(bk / norm);
        scale.push(norm);
        kept_null.push(col);
    }
    Reduction::Ok(Standard {
        dims,
        c: cmat,
        a,
        b: DVector::from_vec(b),
        scale,
        y_p,
        null: kept_null,
        offset,
        free_direction,
    })
}

impl Standard {
    fn m(&self) -> usize {
        self.a.len()
    }

    fn a_op(&self, x: &Blocks) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.a
                .iter()
                .map(|terms| terms.iter().map(|(j, m)| m.dot(&x[*j])).sum::<f64>()),
        )
    }

    fn a_adj(&self, t: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, terms) in self.a.iter().enumerate() {
            if t[k] != 0.0 {
                for (j, m) in terms {
                    out[*j] += m * t[k];
                }
            }
        }
        out
    }

    fn decision(&self, t: &DVector<f64>) -> Vec<f64> {
        let mut y = self.y_p.clone();
        for (k, col) in self.null.iter().enumerate() {
            let tk = t[k] / self.scale[k];
            for &(i, v) in col {
                y[i] += v * tk;
            }
        }
        y
    }
}

fn inner(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &Blocks) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Per-block NT scaling `G` with `G^T Z G = G^{-1} X G^{-T} = diag(lambda)`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    lambda: DVector<f64>,
    w: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let lx = Cholesky::new(x.clone())?.unpack();
    let lz = Cholesky::new(z.clone())?.unpack();
    let svd = (lz.transpose() * &lx).svd(true, true);
    let v = svd.v_t?.transpose();
    let s = svd.singular_values;
    if s.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let n = s.len();
    let s_isqrt = DMatrix::from_diagonal(&s.map(|v| 1.0 / v.sqrt()));
    let s_sqrt = DMatrix::from_diagonal(&s.map(f64::sqrt));
    let g = &lx * &v * &s_isqrt;
    // G^{-1} = S^{1/2} V^T Lx^{-1}
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let g_inv = &s_sqrt * v.transpose() * lx_inv;
    let w = &g * g.transpose();
    Some(Scaling {
        g,
        g_inv,
        lambda: s,
        w,
    })
}

/// Largest `alpha` with `x + alpha * dx >= 0` (infinity when the direction stays inside).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(tmp) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&tmp.transpose()) else {
        return 0.0;
    };
    let lmin = sym_eigen(&m).0.last().copied().unwrap_or(0.0);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn blocks_max_step(x: &Blocks, dx: &Blocks) -> f64 {
    x.iter().zip(dx).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min)
}

struct Iterate {
    x: Blocks,
    z: Blocks,
    t: DVector<f64>,
}

struct Direction {
    dx: Blocks,
    dz: Blocks,
    dt: DVector<f64>,
}

enum SchurSolver {
    Chol(Cholesky<f64, Dyn>),
    Dense(DMatrix<f64>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Self {
        match Cholesky::new(m.clone()) {
            Some(c) => SchurSolver::Chol(c),
            None => SchurSolver::Dense(m),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurSolver::Chol(c) => c.solve(rhs),
            SchurSolver::Dense(m) => lstsq(m, rhs),
        }
    }
}

struct Metrics {
    pobj: f64,
    pinf: f64,
    dinf: f64,
    relgap: f64,
    mu: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        self.pinf.max(self.dinf).max(self.relgap)
    }
}

pub(super) fn solve(prog: &ConicProgram, settings: &SolverSettings) -> SolveResult {
    let std = match standardize(prog) {
        Reduction::Ok(s) => s,
        Reduction::Inconsistent => {
            return empty_result(prog, SolveStatus::Infeasible);
        }
    };
    let ntot: usize = std.dims.iter().sum();
    if ntot == 0 || std.m() == 0 {
        return trivial_result(prog, &std);
    }
    let m = std.m();
    let norm_b = std.b.norm();
    let norm_c = frob(&std.c);
    let sign = match prog.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let mut it = initial_point(&std);
    let mut best: Option<(f64, Iterate, Metrics, usize)> = None;
    let mut status = SolveStatus::NumericalTrouble;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut final_metrics = None;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let rp = &std.b - std.a_op(&it.x);
        let at = std.a_adj(&it.t);
        let rd: Blocks = (0..std.dims.len()).map(|j| &std.c[j] - &at[j] - &it.z[j]).collect();
        let pobj = inner(&std.c, &it.x);
        let dobj = std.b.dot(&it.t);
        let xz = inner(&it.x, &it.z);
        let met = Metrics {
            pobj,
            pinf: rp.norm() / (1.0 + norm_b),
            dinf: frob(&rd) / (1.0 + norm_c),
            relgap: (pobj - dobj).abs().max(xz.abs()) / (1.0 + pobj.abs() + dobj.abs()),
            mu: xz / ntot as f64,
        };
        if !met.merit().is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|(b, ..)| met.merit() < *b) {
            best = Some((met.merit(), clone_iterate(&it), copy_metrics(&met), iter));
        }
        if met.pinf <= settings.feasibility_tol
            && met.dinf <= settings.feasibility_tol
            && met.relgap <= settings.gap_tol
        {
            status = SolveStatus::Optimal;
            final_metrics = Some(met);
            break;
        }
        // program value tends to -infinity on a nearly feasible path
        if met.dinf <= settings.feasibility_tol && std.offset - dobj < settings.unbounded_floor {
            status = SolveStatus::UnboundedBelow;
            final_metrics = Some(met);
            break;
        }
        if dobj > 0.0 && ray_certified(&std, &it.t, dobj, settings.feasibility_tol) {
            status = SolveStatus::UnboundedBelow;
            final_metrics = Some(met);
            break;
        }
        // normalized X is an improving ray of the multiplier problem
        if pobj < 0.0 && std.a_op(&it.x).norm() <= settings.feasibility_tol * (-pobj) {
            status = SolveStatus::Infeasible;
            final_metrics = Some(met);
            break;
        }
        if iter == settings.max_iterations {
            break;
        }

        let Some(scal): Option<Vec<Scaling>> = it.x.iter().zip(&it.z).map(|(x, z)| nt_scaling(x, z)).collect()
        else {
            break;
        };
        let waw: Vec<Vec<(usize, DMatrix<f64>)>> = std
            .a
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|(j, a)| (*j, &scal[*j].w * a * &scal[*j].w))
                    .collect()
            })
            .collect();
        let mut schur = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in 0..=k {
                let mut v = 0.0;
                for (jk, ak) in &std.a[k] {
                    for (jl, wl) in &waw[l] {
                        if jk == jl {
                            v += ak.dot(wl);
                        }
                    }
                }
                schur[(k, l)] = v;
                schur[(l, k)] = v;
            }
        }
        let solver = SchurSolver::new(schur);
        let wrdw: Blocks = scal.iter().zip(&rd).map(|(s, r)| &s.w * r * &s.w).collect();
        let a_wrdw = std.a_op(&wrdw);

        let direction = |rc: Blocks| -> Direction {
            let rhs = &rp - std.a_op(&rc) + &a_wrdw;
            let dt = solver.solve(&rhs);
            let adt = std.a_adj(&dt);
            let dz: Blocks = rd.iter().zip(&adt).map(|(r, a)| r - a).collect();
            let dx: Blocks = rc
                .iter()
                .zip(&dz)
                .zip(&scal)
                .map(|((r, d), s)| sym(r - &s.w * d * &s.w))
                .collect();
            Direction { dx, dz, dt }
        };

        let pred = direction(it.x.iter().map(|x| -x).collect());
        let ap = blocks_max_step(&it.x, &pred.dx).min(1.0);
        let ad = blocks_max_step(&it.z, &pred.dz).min(1.0);
        let xa: Blocks = it.x.iter().zip(&pred.dx).map(|(x, d)| x + d * ap).collect();
        let za: Blocks = it.z.iter().zip(&pred.dz).map(|(z, d)| z + d * ad).collect();
        let mu_a = inner(&xa, &za) / ntot as f64;
        let expon = if met.mu > 1e-6 { (3.0 * ap.min(ad).powi(2)).max(1.0) } else { 3.0 };
        let sigma = (mu_a / met.mu).max(0.0).powf(expon).min(1.0);

        let rc: Blocks = scal
            .iter()
            .zip(pred.dx.iter().zip(&pred.dz))
            .map(|(s, (dx, dz))| {
                let dxs = &s.g_inv * dx * s.g_inv.transpose();
                let dzs = s.g.transpose() * dz * &s.g;
                let n = s.lambda.len();
                let so = sym(&dxs * &dzs);
                let mut d = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut r = -so[(i, j)];
                        if i == j {
                            r += sigma * met.mu - s.lambda[i] * s.lambda[i];
                        }
                        d[(i, j)] = 2.0 * r / (s.lambda[i] + s.lambda[j]);
                    }
                }
                sym(&s.g * d * s.g.transpose())
            })
            .collect();
        let corr = direction(rc);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let alpha_p = (gamma * blocks_max_step(&it.x, &corr.dx)).min(1.0);
        let alpha_d = (gamma * blocks_max_step(&it.z, &corr.dz)).min(1.0);
        if alpha_p < 1e-10 && alpha_d < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        for (x, d) in it.x.iter_mut().zip(&corr.dx) {
            *x = sym(&*x + d * alpha_p);
        }
        for (z, d) in it.z.iter_mut().zip(&corr.dz) {
            *z = sym(&*z + d * alpha_d);
        }
        it.t += &corr.dt * alpha_d;
    }

    let (it, met) = match (status, final_metrics) {
        (SolveStatus::NumericalTrouble, _) | (_, None) => match best {
            Some((_, b, m, _)) => (b, m),
            None => return empty_result(prog, SolveStatus::NumericalTrouble),
        },
        (_, Some(m)) => (it, m),
    };
    let decision = std.decision(&it.t);
    let value = prog.objective_value(&decision);
    let bound = sign * (std.offset - met.pobj);
    SolveResult {
        status,
        value,
        bound: Some(bound),
        decision,
        multipliers: it.x.into_iter().map(SymMatrix::from_matrix).collect(),
        complementarity: Vec::new(),
        block_min_eigenvalues: Vec::new(),
        achieved: Achieved {
            equality_residual: 0.0,
            block_infeasibility: 0.0,
            multiplier_residual: met.pinf,
            relative_gap: met.relgap,
        },
        iterations,
        moments: None,
    }
    .with_free_direction(std.free_direction)
}

impl SolveResult {
    fn with_free_direction(mut self, free: bool) -> Self {
        if free && self.status == SolveStatus::Optimal {
            self.status = SolveStatus::UnboundedBelow;
            self.bound = None;
        }
        self
    }
}

/// `-sum t_k A_k` is PSD up to `tol * b^T t`: `t` is an improving recession direction.
fn ray_certified(std: &Standard, t: &DVector<f64>, dobj: f64, tol: f64) -> bool {
    let scale = 1.0 + std.offset.abs() + frob(&std.c);
    if dobj < 1e6 * scale {
        return false;
    }
    let at = std.a_adj(t);
    at.iter().all(|m| {
        let lmin = sym_eigen(&(-m)).0.last().copied().unwrap_or(0.0);
        lmin >= -tol * dobj
    })
}

fn initial_point(std: &Standard) -> Iterate {
    let nb = std.dims.len();
    let mut xi = vec![0.0f64; nb];
    let mut eta = vec![0.0f64; nb];
    for j in 0..nb {
        let n = std.dims[j] as f64;
        let mut xr = 0.0f64;
        let mut an = 0.0f64;
        for (k, terms) in std.a.iter().enumerate() {
            for (jj, a) in terms {
                if *jj == j {
                    let na = a.norm();
                    xr = xr.max((1.0 + std.b[k].abs()) / (1.0 + na));
                    an = an.max(na);
                }
            }
        }
        xi[j] = 10.0f64.max(n.sqrt()).max(n * xr);
        eta[j] = 10.0f64.max(n.sqrt()).max(an).max(std.c[j].norm());
    }
    Iterate {
        x: std.dims.iter().zip(&xi).map(|(&n, &s)| DMatrix::identity(n, n) * s).collect(),
        z: std.dims.iter().zip(&eta).map(|(&n, &s)| DMatrix::identity(n, n) * s).collect(),
        t: DVector::zeros(std.m()),
    }
}

fn clone_iterate(it: &Iterate) -> Iterate {
    Iterate {
        x: it.x.clone(),
        z: it.z.clone(),
        t: it.t.clone(),
    }
}

fn copy_metrics(m: &Metrics) -> Metrics {
    Metrics { ..*m }
}

fn empty_result(prog: &ConicProgram, status: SolveStatus) -> SolveResult {
    SolveResult {
        status,
        value: 0.0,
        bound: None,
        decision: vec![0.0; prog.num_variables()],
        multipliers: prog.blocks.iter().map(|b| SymMatrix::zeros(b.dim)).collect(),
        complementarity: Vec::new(),
        block_min_eigenvalues: Vec::new(),
        achieved: Achieved::default(),
        iterations: 0,
        moments: None,
    }
}

/// No free variable or no block: the decision is fixed by the equalities.
fn trivial_result(prog: &ConicProgram, std: &Standard) -> SolveResult {
    let decision = std.decision(&DVector::zeros(std.m()));
    let feasible = prog
        .block_values(&decision)
        .iter()
        .all(|m| m.min_eigenvalue() >= -1e-12);
    let mut r = empty_result(prog, if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible });
    r.value = prog.objective_value(&decision);
    r.bound = feasible.then_some(r.value);
    r.decision = decision;
    r.with_free_direction(std.free_direction)
}
