//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in decreasing order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Singular values of a symmetric matrix (absolute eigenvalues), decreasing.
pub fn sym_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = sym_eigen(m).0.into_iter().map(f64::abs).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `#{s_i > tol * s_max}`; zero when `s_max == 0`.
pub fn rank_from_singular_values(s: &[f64], tol: f64) -> usize {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Reduced row echelon form with largest-magnitude row pivoting.
///
/// Columns are scanned left to right; a column whose remaining entries are all below
/// `tol * max|m|` is treated as dependent. Returns the reduced matrix and the pivot columns.
pub fn rref(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (mut best, mut best_abs) = (r, a[(r, c)].abs());
        for i in r + 1..rows {
            if a[(i, c)].abs() > best_abs {
                best = i;
                best_abs = a[(i, c)].abs();
            }
        }
        if best_abs <= tol * scale {
            for i in r..rows {
                a[(i, c)] = 0.0;
            }
            continue;
        }
        a.swap_rows(r, best);
        let p = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(r, j)];
                    }
                    a[(i, c)] = 0.0;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Minimum-norm least-squares solution of `a X = b` for every column of `b`.
pub fn lstsq_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(0, b.ncols());
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps).unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

/// Non-negative least squares `min ||a x - b||, x >= 0` (Lawson–Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-14 * a.amax().max(1.0) * b.amax().max(1.0) * (n.max(1) as f64);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(idx.iter());
        let z = lstsq(&sub, b);
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _outer in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _inner in 0..3 * n + 10 {
            let z = solve_passive(&passive);
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && z[k] <= 0.0 {
                    let t = x[k] / (x[k] - z[k]);
                    if t < alpha {
                        alpha = t;
                    }
                }
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}
