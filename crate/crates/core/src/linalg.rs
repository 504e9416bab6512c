//! Small numerical kernels: Krylov solvers, dense symmetric eigensolver, rank.

use sprs::CsMat;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y = A x` for a CSR matrix.
pub fn csr_matvec(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    debug_assert!(a.is_csr());
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let indices = a.indices();
    let data = a.data();
    for (r, yr) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for p in indptr[r]..indptr[r + 1] {
            s += data[p] * x[indices[p]];
        }
        *yr = s;
    }
}

/// `y += A x` for a CSR matrix.
pub fn csr_matvec_add(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let indices = a.indices();
    let data = a.data();
    for (r, yr) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for p in indptr[r]..indptr[r + 1] {
            s += data[p] * x[indices[p]];
        }
        *yr += s;
    }
}

pub fn csr_diagonal(a: &CsMat<f64>) -> Vec<f64> {
    let mut d = vec![0.0; a.rows()];
    for (r, row) in a.outer_iterator().enumerate() {
        for (c, v) in row.iter() {
            if c == r {
                d[r] += v;
            }
        }
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `op`. `x` holds the initial guess
/// on entry and the solution on exit. Converged when `||b - A x|| <= tol ||b||`.
pub fn pcg<F>(op: F, diag: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = vec![0.0; n];
    op(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: res,
            });
        }
        op(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::LinearSolve {
                iterations: it,
                residual: res,
                reason: "operator is not positive definite",
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // refresh the recursive residual now and then to avoid drift
        if it % 200 == 199 {
            op(x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r) / bnorm;
    }
    if res <= tol {
        return Ok(SolveStats {
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: res,
        reason: "stagnation",
    })
}

/// MINRES for symmetric, possibly indefinite `op`. Converged when the recursive
/// residual estimate satisfies `||b - A x|| <= tol ||b||`.
pub fn minres<F>(op: F, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut v = vec![0.0; n];
    op(x, &mut v);
    for i in 0..n {
        v[i] = b[i] - v[i];
    }
    let mut beta = norm2(&v);
    if beta <= tol * bnorm {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: beta / bnorm,
        });
    }
    v.iter_mut().for_each(|vi| *vi /= beta);
    let mut v_old = vec![0.0; n];
    let mut w_old = vec![0.0; n];
    let mut w_older = vec![0.0; n];
    let mut av = vec![0.0; n];
    // rotations G_{k-1} = (c, s) and G_{k-2} = (c_old, s_old)
    let (mut c, mut s) = (1.0, 0.0);
    let (mut c_old, mut s_old) = (1.0, 0.0);
    let mut eta = beta;
    for it in 1..=max_iter {
        op(&v, &mut av);
        let alpha = dot(&v, &av);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_old[i];
        }
        let beta_next = norm2(&av);
        let eps = s_old * beta;
        let delta = c_old * c * beta + s * alpha;
        let gamma_bar = c * alpha - s * c_old * beta;
        let gamma = gamma_bar.hypot(beta_next);
        if gamma == 0.0 {
            return Err(Error::LinearSolve {
                iterations: it,
                residual: eta.abs() / bnorm,
                reason: "singular system",
            });
        }
        c_old = c;
        s_old = s;
        c = gamma_bar / gamma;
        s = beta_next / gamma;
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = (v[i] - delta * w_old[i] - eps * w_older[i]) / gamma;
            x[i] += c * eta * w[i];
        }
        eta = -s * eta;
        w_older = std::mem::replace(&mut w_old, w);
        let res = eta.abs() / bnorm;
        if res <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: res,
            });
        }
        if beta_next == 0.0 {
            break;
        }
        for i in 0..n {
            v_old[i] = v[i];
            v[i] = av[i] / beta_next;
        }
        beta = beta_next;
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: eta.abs() / bnorm,
        reason: "stagnation",
    })
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix stored row-major.
/// Returns ascending eigenvalues and the matching eigenvectors as columns
/// (`vectors[i * n + k]` is component `i` of eigenvector `k`).
pub fn sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
            .map(|(i, k)| m[i * n + k] * m[i * n + k])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &k| m[i * n + i].total_cmp(&m[k * n + k]));
    let vals = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (newk, &oldk) in order.iter().enumerate() {
        for i in 0..n {
            vecs[i * n + newk] = v[i * n + oldk];
        }
    }
    (vals, vecs)
}

/// Rank of a set of column vectors by column-pivoted Gram-Schmidt. A column is
/// dependent when its remaining norm falls below `tol` times the largest column norm.
pub fn column_rank(columns: &[Vec<f64>], tol: f64) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let mut cols: Vec<Vec<f64>> = columns.to_vec();
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let dim = cols[0].len();
    let mut rank = 0;
    while rank < dim.min(cols.len()) {
        let (best, best_norm) = cols[rank..]
            .iter()
            .enumerate()
            .map(|(i, c)| (i + rank, norm2(c)))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_norm <= tol * scale {
            break;
        }
        cols.swap(rank, best);
        let q: Vec<f64> = cols[rank].iter().map(|v| v / best_norm).collect();
        for c in cols[rank + 1..].iter_mut() {
            let d = dot(&q, c);
            for (ci, qi) in c.iter_mut().zip(&q) {
                *ci -= d * qi;
            }
        }
        rank += 1;
    }
    rank
}

/// Solves the small dense SPD system `a x = b` (row-major) by Cholesky, dropping
/// directions whose pivot is below `rel_tol` times the largest diagonal entry.
pub fn cholesky_solve_semidefinite(a: &[f64], b: &[f64], n: usize, rel_tol: f64) -> Vec<f64> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    let mut l = vec![0.0; n * n];
    let mut active = vec![true; n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= rel_tol * scale || !active[j] {
            active[j] = false;
            continue;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        if !active[i] {
            continue;
        }
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Dense LU solve with partial pivoting for small systems (row-major). Returns `None`
/// when the matrix is numerically singular.
pub fn lu_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = norm_inf(a).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &k| m[i * n + col].abs().total_cmp(&m[k * n + col].abs()))?;
        if m[piv * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for i in col + 1..n {
            let f = m[i * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[i * n + k] -= f * m[col * n + k];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 50;
        let op = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let st = pcg(&op, &vec![2.0; n], &b, &mut x, 1e-12, 500).unwrap();
        assert!(st.relative_residual <= 1e-12);
        let mut ax = vec![0.0; n];
        op(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn pcg_rejects_indefinite() {
        let op = |x: &[f64], y: &mut [f64]| {
            y[0] = x[0];
            y[1] = -x[1];
        };
        let mut x = vec![0.0; 2];
        assert!(pcg(op, &[1.0, 1.0], &[0.0, 1.0], &mut x, 1e-12, 10).is_err());
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let n = 40;
        let base = laplace_1d(n);
        // shift into the middle of the spectrum
        let op = |x: &[f64], y: &mut [f64]| {
            base(x, y);
            for i in 0..n {
                y[i] -= 1.3 * x[i];
            }
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut x = vec![0.0; n];
        minres(&op, &b, &mut x, 1e-11, 2000).unwrap();
        let mut ax = vec![0.0; n];
        op(&x, &mut ax);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-9 * norm2(&b));
    }

    #[test]
    fn jacobi_eigen_small() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let (vals, vecs) = sym_eigen(&a, 3);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i * 3 + j] * vecs[j * 3 + k]).sum();
                assert!((av - vals[k] * vecs[i * 3 + k]).abs() < 1e-12);
            }
        }
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        let trace: f64 = vals.iter().sum();
        assert!((trace - 9.0).abs() < 1e-12);
    }

    #[test]
    fn rank_with_tolerance() {
        let cols = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 1e-12], vec![0.0, 1.0, 0.0]];
        assert_eq!(column_rank(&cols, 1e-8), 2);
        let cols = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1e-3], vec![0.0, 1.0, 0.0]];
        assert_eq!(column_rank(&cols, 1e-8), 3);
        assert_eq!(column_rank(&[vec![0.0, 0.0]], 1e-8), 0);
    }

    #[test]
    fn semidefinite_cholesky_drops_null_directions() {
        let a = [1.0, 0.0, 0.0, 0.0];
        let x = cholesky_solve_semidefinite(&a, &[3.0, 5.0], 2, 1e-14);
        assert_eq!(x, vec![3.0, 0.0]);
        let x = lu_solve(&[2.0, 1.0, 1.0, 3.0], &[3.0, 4.0], 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(lu_solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }
}
