//! Desk-scale ground truth: exhaustive grid search and multi-start local refinement over a box.
//!
//! Nothing here is a certificate. The box bounds the search, so a problem whose infimum is
//! approached outside the box (or only at infinity) reports the box-restricted minimum.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::poly::{Polynomial, Pop};

/// Largest dimension the grid accepts.
pub const MAX_GRID_VARS: usize = 4;
/// Grid points count as feasible when every `g_j >= -FEAS_TOL`.
pub const FEAS_TOL: f64 = 1e-9;
/// Points merge when their sup-distance is below this radius.
pub const CLUSTER_RADIUS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Grid,
    Multistart,
    GridAndMultistart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    /// Best objective value found.
    pub value: f64,
    /// Cluster representatives whose value is within `tolerance` of `value`.
    pub points: Vec<Vec<f64>>,
    pub point_values: Vec<f64>,
    /// `1e-6` for pure grid output, `1e-8` once local refinement ran.
    pub tolerance: f64,
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Option<usize>,
    pub starts: Option<usize>,
    /// Largest constraint violation among the listed points; positive only when no feasible
    /// point was found and the least-violating one is reported instead.
    pub max_violation: f64,
    /// Largest projected KKT residual among the listed points (local refinement only).
    pub kkt_residual: Option<f64>,
}

impl OracleResult {
    pub fn feasible(&self) -> bool {
        self.max_violation <= FEAS_TOL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSettings {
    /// `None` means `[-5, 5]` in every coordinate.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// `None` picks a resolution from the dimension.
    pub resolution: Option<usize>,
    pub starts: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            bounds: None,
            resolution: None,
            starts: 32,
            seed: 0x5eed,
        }
    }
}

pub fn default_box(num_vars: usize) -> Vec<(f64, f64)> {
    vec![(-5.0, 5.0); num_vars]
}

/// Grid size per axis keeping the grid near `10^5` points.
pub fn default_resolution(num_vars: usize) -> usize {
    match num_vars {
        0 | 1 => 2001,
        2 => 201,
        3 => 41,
        _ => 17,
    }
}

fn check_box(pop: &Pop, bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.len() != pop.num_vars() {
        return Err(Error::DimensionMismatch {
            expected: pop.num_vars(),
            got: bounds.len(),
        });
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Invalid(format!("box side {} is [{lo}, {hi}]", i + 1)));
        }
    }
    Ok(())
}

fn violation(pop: &Pop, x: &[f64]) -> f64 {
    pop.constraints()
        .iter()
        .map(|g| (-g.eval_unchecked(x)).max(0.0))
        .fold(0.0, f64::max)
}

/// Sorts by value then lexicographically, then keeps the best point of every
/// `CLUSTER_RADIUS` neighbourhood.
fn cluster(mut cands: Vec<(f64, Vec<f64>)>) -> Vec<(f64, Vec<f64>)> {
    cands.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut reps: Vec<(f64, Vec<f64>)> = Vec::new();
    for (v, x) in cands {
        let near = reps.iter().any(|(_, r)| {
            r.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < CLUSTER_RADIUS
        });
        if !near {
            reps.push((v, x));
        }
    }
    reps
}

/// Minimizes `f` over the feasible points of a uniform grid with `resolution` points per axis.
pub fn grid_min(pop: &Pop, bounds: &[(f64, f64)], resolution: usize) -> Result<OracleResult> {
    let d = pop.num_vars();
    if resolution < 2 {
        return Err(Error::Precondition(format!("resolution >= 2 fails: resolution = {resolution}")));
    }
    if d > MAX_GRID_VARS {
        return Err(Error::Precondition(format!("d <= {MAX_GRID_VARS} fails: d = {d}")));
    }
    check_box(pop, bounds)?;
    let tol = 1e-6;
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            (0..resolution)
                .map(|i| if i == resolution - 1 { hi } else { lo + (hi - lo) * i as f64 / (resolution - 1) as f64 })
                .collect()
        })
        .collect();
    let f = pop.objective();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best = f64::INFINITY;
    let mut near: Vec<(f64, Vec<f64>)> = Vec::new();
    loop {
        for k in 0..d {
            x[k] = axes[k][idx[k]];
        }
        if pop.is_feasible(&x, FEAS_TOL) {
            let v = f.eval_unchecked(&x);
            if v < best - tol {
                near.retain(|(w, _)| *w <= v + tol);
            }
            if v <= best + tol {
                best = best.min(v);
                near.push((v, x.clone()));
            }
        }
        // odometer increment; the grid is exhausted when the last axis wraps
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] < resolution {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    if !best.is_finite() {
        return Err(Error::NoFeasiblePoint);
    }
    near.retain(|(v, _)| *v <= best + tol);
    let reps = cluster(near);
    Ok(OracleResult {
        method: OracleMethod::Grid,
        value: best,
        point_values: reps.iter().map(|r| r.0).collect(),
        points: reps.into_iter().map(|r| r.1).collect(),
        tolerance: tol,
        bounds: bounds.to_vec(),
        resolution: Some(resolution),
        starts: None,
        max_violation: 0.0,
        kkt_residual: None,
    })
}

/// `f`, its gradient and Hessian as polynomials.
struct Smooth {
    p: Polynomial,
    grad: Vec<Polynomial>,
    hess: Vec<Vec<Polynomial>>,
}

impl Smooth {
    fn new(p: &Polynomial) -> Self {
        let d = p.num_vars();
        let grad: Vec<Polynomial> = (0..d).map(|i| p.derivative(i)).collect();
        let hess = grad.iter().map(|g| (0..d).map(|j| g.derivative(j)).collect()).collect();
        Smooth {
            p: p.clone(),
            grad,
            hess,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.p.eval_unchecked(x)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), self.grad.iter().map(|g| g.eval_unchecked(x)))
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        DMatrix::from_fn(d, d, |i, j| self.hess[i][j].eval_unchecked(x))
    }
}

struct Local<'a> {
    pop: &'a Pop,
    f: Smooth,
    g: Vec<Smooth>,
    bounds: &'a [(f64, f64)],
}

struct LocalPoint {
    x: Vec<f64>,
    value: f64,
    violation: f64,
    residual: f64,
}

impl<'a> Local<'a> {
    fn new(pop: &'a Pop, bounds: &'a [(f64, f64)]) -> Self {
        Local {
            pop,
            f: Smooth::new(pop.objective()),
            g: pop.constraints().iter().map(Smooth::new).collect(),
            bounds,
        }
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (xi, &(lo, hi)) in x.iter_mut().zip(self.bounds) {
            *xi = xi.clamp(lo, hi);
        }
    }

    /// Augmented Lagrangian value and gradient for multipliers `lam` and penalty `mu`.
    fn merit(&self, x: &[f64], lam: &[f64], mu: f64) -> (f64, DVector<f64>) {
        let mut val = self.f.value(x);
        let mut grad = self.f.gradient(x);
        for (g, &l) in self.g.iter().zip(lam) {
            let c = g.value(x);
            let s = (l - mu * c).max(0.0);
            val += (s * s - l * l) / (2.0 * mu);
            if s > 0.0 {
                grad -= g.gradient(x) * s;
            }
        }
        (val, grad)
    }

    /// Projected gradient with Barzilai–Borwein steps and Armijo backtracking.
    fn descend(&self, x: &mut DVector<f64>, lam: &[f64], mu: f64, iters: usize) {
        let (mut val, mut grad) = self.merit(x.as_slice(), lam, mu);
        let mut step = 1.0 / (1.0 + grad.amax());
        for _ in 0..iters {
            let mut trial_step = step;
            let mut accepted = None;
            for _ in 0..60 {
                let mut y = &*x - &grad * trial_step;
                self.project(&mut y);
                let dx = &y - &*x;
                let (v, gnew) = self.merit(y.as_slice(), lam, mu);
                if v <= val + 1e-4 * grad.dot(&dx) {
                    accepted = Some((y, dx, v, gnew));
                    break;
                }
                trial_step *= 0.5;
            }
            let Some((y, dx, v, gnew)) = accepted else { break };
            let dg = &gnew - &grad;
            let sy = dx.dot(&dg);
            *x = y;
            let moved = dx.amax();
            grad = gnew;
            let decrease = val - v;
            val = v;
            step = if sy > 0.0 { (dx.dot(&dx) / sy).clamp(1e-12, 1e12) } else { trial_step * 2.0 };
            if moved <= 1e-15 * (1.0 + x.amax()) || decrease.abs() <= 1e-18 * (1.0 + val.abs()) {
                break;
            }
        }
    }

    /// Multipliers of the active constraints by least squares on stationarity.
    fn multipliers(&self, x: &[f64], active: &[usize]) -> Vec<f64> {
        if active.is_empty() {
            return Vec::new();
        }
        let d = x.len();
        let j = DMatrix::from_fn(d, active.len(), |i, k| self.g[active[k]].gradient(x)[i]);
        lstsq(&j, &self.f.gradient(x)).iter().copied().collect()
    }

    /// Projected KKT residual: stationarity of the Lagrangian on the box, complementarity and
    /// primal violation, with multipliers fitted on the near-active constraints.
    fn kkt(&self, x: &[f64]) -> f64 {
        let scale = 1e-6;
        let active: Vec<usize> = (0..self.g.len()).filter(|&j| self.g[j].value(x) <= scale).collect();
        let lam = self.multipliers(x, &active);
        let mut grad = self.f.gradient(x);
        let mut comp = 0.0f64;
        for (&j, &l) in active.iter().zip(&lam) {
            let l = l.max(0.0);
            grad -= self.g[j].gradient(x) * l;
            comp = comp.max((l * self.g[j].value(x)).abs());
        }
        let xv = DVector::from_column_slice(x);
        let mut y = &xv - &grad;
        self.project(&mut y);
        (y - xv).amax().max(comp).max(violation(self.pop, x))
    }

    /// Newton iterations on the KKT system of the near-active constraints, ignoring the box.
    fn polish(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut x = x.to_vec();
        let mut active: Vec<usize> = (0..self.g.len()).filter(|&j| self.g[j].value(&x) <= 1e-5).collect();
        for _ in 0..60 {
            let lam = self.multipliers(&x, &active);
            if let Some(k) = lam.iter().position(|&l| l < -1e-10) {
                active.remove(k);
                continue;
            }
            let m = active.len();
            let mut jac = DMatrix::zeros(d + m, d + m);
            let mut rhs = DVector::zeros(d + m);
            let mut h = self.f.hessian(&x);
            let mut grad = self.f.gradient(&x);
            for (k, &j) in active.iter().enumerate() {
                h -= self.g[j].hessian(&x) * lam[k];
                let gj = self.g[j].gradient(&x);
                grad -= &gj * lam[k];
                for i in 0..d {
                    jac[(i, d + k)] = -gj[i];
                    jac[(d + k, i)] = gj[i];
                }
                rhs[d + k] = -self.g[j].value(&x);
            }
            jac.view_mut((0, 0), (d, d)).copy_from(&h);
            rhs.rows_mut(0, d).copy_from(&(-grad));
            if rhs.amax() <= 1e-15 {
                break;
            }
            let delta = lstsq(&jac, &rhs);
            let next: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if next.iter().any(|v| !v.is_finite()) {
                break;
            }
            x = next;
        }
        x
    }

    fn solve_from(&self, start: &[f64]) -> LocalPoint {
        let mut x = DVector::from_column_slice(start);
        self.project(&mut x);
        let mut lam = vec![0.0; self.g.len()];
        let mut mu = 10.0;
        if self.g.is_empty() {
            self.descend(&mut x, &lam, mu, 2000);
        } else {
            let mut last_viol = f64::INFINITY;
            for _ in 0..25 {
                self.descend(&mut x, &lam, mu, 800);
                let xs = x.as_slice();
                for (l, g) in lam.iter_mut().zip(&self.g) {
                    *l = (*l - mu * g.value(xs)).max(0.0);
                }
                let viol = violation(self.pop, xs);
                if viol <= 1e-12 && self.kkt(xs) <= 1e-9 {
                    break;
                }
                if viol > 0.25 * last_viol {
                    mu = (mu * 10.0).min(1e8);
                }
                last_viol = viol;
            }
        }
        let coarse: Vec<f64> = x.iter().copied().collect();
        let mut best = self.point(coarse);
        let polished = self.polish(&best.x);
        let inside = polished
            .iter()
            .zip(self.bounds)
            .all(|(v, &(lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12);
        if inside {
            let cand = self.point(polished);
            let better = cand.violation <= FEAS_TOL.max(best.violation)
                && cand.residual < best.residual
                && cand.value <= best.value + 1e-9 * (1.0 + best.value.abs());
            if better {
                best = cand;
            }
        }
        best
    }

    fn point(&self, x: Vec<f64>) -> LocalPoint {
        LocalPoint {
            value: self.f.value(&x),
            violation: violation(self.pop, &x),
            residual: self.kkt(&x),
            x,
        }
    }
}

fn run_local(pop: &Pop, bounds: &[(f64, f64)], starts: &[Vec<f64>]) -> Vec<LocalPoint> {
    let local = Local::new(pop, bounds);
    starts.iter().map(|s| local.solve_from(s)).collect()
}

fn random_starts(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
        .collect()
}

fn summarize(
    method: OracleMethod,
    bounds: &[(f64, f64)],
    found: Vec<LocalPoint>,
    resolution: Option<usize>,
    starts: usize,
) -> OracleResult {
    let tol = 1e-8;
    let feasible: Vec<&LocalPoint> = found.iter().filter(|p| p.violation <= FEAS_TOL).collect();
    let (pool, max_violation): (Vec<&LocalPoint>, f64) = if feasible.is_empty() {
        let least = found
            .iter()
            .min_by(|a, b| a.violation.total_cmp(&b.violation))
            .expect("at least one start");
        (vec![least], least.violation)
    } else {
        (feasible, 0.0)
    };
    let best = pool.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let kept: Vec<&LocalPoint> = pool.into_iter().filter(|p| p.value <= best + tol).collect();
    let residual = kept.iter().map(|p| p.residual).fold(0.0, f64::max);
    let reps = cluster(kept.iter().map(|p| (p.value, p.x.clone())).collect());
    OracleResult {
        method,
        value: best,
        point_values: reps.iter().map(|r| r.0).collect(),
        points: reps.into_iter().map(|r| r.1).collect(),
        tolerance: tol,
        bounds: bounds.to_vec(),
        resolution,
        starts: Some(starts),
        max_violation,
        kkt_residual: Some(residual),
    }
}

/// Local refinement from `starts` seeded uniform points of the box: an augmented Lagrangian
/// on the constraint violations, minimized by projected gradient, then Newton on the KKT
/// system of the active constraints.
///
/// Best effort: when no start ends feasible the least-violating point is reported and
/// `max_violation` is positive.
pub fn multistart_local(pop: &Pop, starts: usize, bounds: &[(f64, f64)], seed: u64) -> Result<OracleResult> {
    if starts == 0 {
        return Err(Error::Precondition("seeds >= 1 fails: seeds = 0".into()));
    }
    check_box(pop, bounds)?;
    let found = run_local(pop, bounds, &random_starts(bounds, starts, seed));
    Ok(summarize(OracleMethod::Multistart, bounds, found, None, starts))
}

/// Refines from the given points only.
pub fn refine_from(pop: &Pop, bounds: &[(f64, f64)], points: &[Vec<f64>]) -> Result<OracleResult> {
    check_box(pop, bounds)?;
    if points.is_empty() {
        return Err(Error::Precondition("at least one start point is needed".into()));
    }
    let found = run_local(pop, bounds, points);
    Ok(summarize(OracleMethod::Multistart, bounds, found, None, points.len()))
}

/// Grid search (when `d <= 4`) whose candidates, together with random starts, seed the local
/// refinement.
pub fn oracle(pop: &Pop, settings: &OracleSettings) -> Result<OracleResult> {
    let d = pop.num_vars();
    let bounds = settings.bounds.clone().unwrap_or_else(|| default_box(d));
    check_box(pop, &bounds)?;
    let mut starts = Vec::new();
    let mut resolution = None;
    if d <= MAX_GRID_VARS {
        let res = settings.resolution.unwrap_or_else(|| default_resolution(d));
        resolution = Some(res);
        match grid_min(pop, &bounds, res) {
            Ok(grid) => starts.extend(grid.points.into_iter().take(64)),
            Err(Error::NoFeasiblePoint) => {}
            Err(e) => return Err(e),
        }
    }
    let from_grid = !starts.is_empty();
    starts.extend(random_starts(&bounds, settings.starts.max(1), settings.seed));
    let count = starts.len();
    let found = run_local(pop, &bounds, &starts);
    let method = if from_grid { OracleMethod::GridAndMultistart } else { OracleMethod::Multistart };
    Ok(summarize(method, &bounds, found, resolution, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_polynomial;

    fn pop(vars: &[&str], f: &str, gs: &[&str]) -> Pop {
        let v: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let p = |s: &str| parse_polynomial(s, &v).unwrap();
        Pop::new(p(f), gs.iter().map(|g| p(g)).collect()).unwrap()
    }

    #[test]
    fn grid_square() {
        let r = grid_min(&pop(&["x"], "x^2", &[]), &[(-1.0, 1.0)], 101).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.points, vec![vec![0.0]]);
    }

    #[test]
    fn grid_interval_two_minimizers() {
        let r = grid_min(&pop(&["x"], "-x^2", &["1 - x^2"]), &[(-2.0, 2.0)], 401).unwrap();
        assert!((r.value + 1.0).abs() < 1e-12);
        assert_eq!(r.points.len(), 2);
        for p in &r.points {
            assert!((p[0].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        let p = pop(&["x"], "x^2", &["-1 - x^2"]);
        assert!(matches!(grid_min(&p, &[(-1.0, 1.0)], 11), Err(Error::NoFeasiblePoint)));
        assert!(grid_min(&p, &[(-1.0, 1.0)], 1).is_err());
        let p5 = pop(&["a", "b", "c", "d", "e"], "a^2", &[]);
        assert!(grid_min(&p5, &default_box(5), 3).is_err());
    }

    #[test]
    fn local_shifted_square() {
        let r = refine_from(&pop(&["x"], "(x - 1)^2", &[]), &default_box(1), &[vec![0.0]]).unwrap();
        assert!((r.points[0][0] - 1.0).abs() < 1e-8);
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn local_qcqp_kkt() {
        // stationarity 2x = lambda (1, 1) with x1 + x2 = 1 gives x = (1/2, 1/2)
        let r = multistart_local(&pop(&["x1", "x2"], "x1^2 + x2^2", &["x1 + x2 - 1"]), 8, &default_box(2), 1).unwrap();
        assert!((r.value - 0.5).abs() < 1e-10, "{r:?}");
        assert_eq!(r.points.len(), 1);
        assert!((r.points[0][0] - 0.5).abs() < 1e-8 && (r.points[0][1] - 0.5).abs() < 1e-8);
        assert!(r.kkt_residual.unwrap() <= 1e-8);
    }

    #[test]
    fn local_four_minima() {
        let p = pop(&["x1", "x2"], "(x1^2 - 1)^2 + (x2^2 - 1)^2", &[]);
        let r = multistart_local(&p, 64, &default_box(2), 7).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!(!r.points.is_empty());
        for x in &r.points {
            assert!((x[0].abs() - 1.0).abs() < 1e-6 && (x[1].abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn combined_is_deterministic() {
        let p = pop(&["x", "y"], "x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", &[]);
        let s = OracleSettings {
            bounds: Some(vec![(-2.0, 2.0); 2]),
            ..OracleSettings::default()
        };
        let a = oracle(&p, &s).unwrap();
        let b = oracle(&p, &s).unwrap();
        assert_eq!(a, b);
        assert!(a.value.abs() < 1e-12);
    }
}
