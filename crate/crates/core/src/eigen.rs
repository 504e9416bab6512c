//! Principal eigenpairs of `(K - V) u = lambda M u`, the weighted problem
//! `K u = lambda G u` with a possibly sign-changing weight, the regularization path and
//! domain monotonicity.
//!
//! The unweighted solver is block inverse subspace iteration with a fixed shift below
//! the spectrum, Jacobi-PCG inner solves and Rayleigh-Ritz on the block.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::VectorFieldFamily;
use crate::linalg::{dot, norm2, pcg, sym_eigen};
use crate::mesh::{GridDomain, GridField};
use crate::operators::{assemble_diagonal, assemble_stiffness, diagonal_operator, mass_matrix, SparseOperator};

#[derive(Clone, Debug, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    #[serde(skip)]
    pub eigenfield: GridField,
    pub residual: f64,
    pub iterations: usize,
    pub positive: bool,
    pub degenerate: bool,
    /// Second Ritz value of the final block, when the block had more than one vector.
    pub second_ritz: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub block: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            block: 4,
        }
    }
}

const DEGENERACY_GAP: f64 = 1e-6;
const INNER_TOL: f64 = 1e-11;
const INNER_MAX: usize = 20_000;

/// Smallest eigenpair of `(K - V) u = lambda M u` with residual at most `tol`.
pub fn principal_eigenpair(k: &SparseOperator, v: &SparseOperator, m: &SparseOperator, tol: f64) -> Result<EigenResult> {
    let opts = EigenOptions {
        tol,
        ..Default::default()
    };
    principal_eigenpair_with(k, v, m, &opts)
}

pub fn principal_eigenpair_with(k: &SparseOperator, v: &SparseOperator, m: &SparseOperator, opts: &EigenOptions) -> Result<EigenResult> {
    let (res, _) = solve_block(k, &v.diagonal(), &m.diagonal(), opts, None)?;
    Ok(res)
}

fn initial_block(grid: &GridDomain, b: usize) -> Vec<Vec<f64>> {
    let lo = grid.box_lo();
    let hi = grid.box_hi();
    let mut x = vec![0.0; grid.dim()];
    let first: Vec<f64> = grid
        .interior_nodes()
        .iter()
        .map(|&p| {
            grid.coords_into(p, &mut x);
            (0..grid.dim())
                .map(|k| (std::f64::consts::PI * (x[k] - lo[k]) / (hi[k] - lo[k])).sin())
                .product::<f64>()
                .max(1e-3)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let mut block = vec![first];
    for _ in 1..b {
        block.push((0..grid.interior_count()).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    block
}

/// Returns the result plus the final Ritz block (for warm starts).
fn solve_block(
    k: &SparseOperator,
    vdiag: &[f64],
    mdiag: &[f64],
    opts: &EigenOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<(EigenResult, Vec<Vec<f64>>)> {
    let grid = k.grid().clone();
    let n = k.size();
    if n == 0 {
        return Err(Error::EmptyInterior);
    }
    if vdiag.len() != n || mdiag.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: vdiag.len().min(mdiag.len()),
        });
    }
    if mdiag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("mass matrix must be positive diagonal".into()));
    }
    let b = opts.block.max(1).min(n);

    // shift below the spectrum: K + diag(-V - sigma M) is positive definite
    let floor = vdiag
        .iter()
        .zip(mdiag)
        .map(|(v, m)| -v / m)
        .fold(f64::INFINITY, f64::min);
    let delta = 1e-6 * (1.0 + floor.abs());
    let sigma = floor - delta;
    let shift: Vec<f64> = vdiag.iter().zip(mdiag).map(|(v, m)| -v - sigma * m).collect();
    let kdiag = k.diagonal();
    let pdiag: Vec<f64> = kdiag.iter().zip(&shift).map(|(a, s)| a + s).collect();
    let shifted = |x: &[f64], y: &mut [f64]| {
        k.apply(x, y);
        for i in 0..x.len() {
            y[i] += shift[i] * x[i];
        }
    };
    let a_op = |x: &[f64], y: &mut [f64]| {
        k.apply(x, y);
        for i in 0..x.len() {
            y[i] -= vdiag[i] * x[i];
        }
    };

    let mut q: Vec<Vec<f64>> = match warm {
        Some(w) if w.len() == b && w.iter().all(|c| c.len() == n) => w.to_vec(),
        _ => initial_block(&grid, b),
    };
    let mut theta = vec![f64::NAN; b];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    let mut az = vec![vec![0.0; n]; b];
    let mut last_res = f64::INFINITY;
    let mut ritz = vec![0.0; b];

    // Rayleigh-Ritz on the starting block so the first residual check is meaningful
    let mut first = true;
    for it in 0..=opts.max_iter {
        let mut z: Vec<Vec<f64>> = if first {
            q.clone()
        } else {
            let mut z = Vec::with_capacity(b);
            for (i, qi) in q.iter().enumerate() {
                let rhs: Vec<f64> = qi.iter().zip(mdiag).map(|(a, m)| a * m).collect();
                let mut x: Vec<f64> = if theta[i].is_finite() && theta[i] - sigma > 0.0 {
                    qi.iter().map(|v| v / (theta[i] - sigma)).collect()
                } else {
                    vec![0.0; n]
                };
                pcg(shifted, &pdiag, &rhs, &mut x, INNER_TOL, INNER_MAX)?;
                z.push(x);
            }
            z
        };
        first = false;

        // M-orthonormalize
        let mut kept = 0;
        for i in 0..b {
            for attempt in 0..3 {
                let orig = m_norm(&z[i], mdiag);
                for j in 0..i {
                    let c = m_dot(&z[j], &z[i], mdiag);
                    let (zj, zi) = split_pair(&mut z, j, i);
                    zi.iter_mut().zip(zj.iter()).for_each(|(a, b)| *a -= c * b);
                }
                let nrm = m_norm(&z[i], mdiag);
                if nrm > 1e-10 * orig && nrm > 0.0 {
                    z[i].iter_mut().for_each(|v| *v /= nrm);
                    kept += 1;
                    break;
                }
                if attempt == 2 {
                    return Err(Error::InvalidInput("eigen block collapsed".into()));
                }
                z[i] = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            }
        }
        debug_assert_eq!(kept, b);

        for i in 0..b {
            a_op(&z[i], &mut az[i]);
        }
        let mut proj = vec![0.0; b * b];
        for i in 0..b {
            for j in i..b {
                let s = dot(&z[i], &az[j]);
                proj[i * b + j] = s;
                proj[j * b + i] = s;
            }
        }
        let (vals, vecs) = sym_eigen(&proj, b);
        let mut newq = vec![vec![0.0; n]; b];
        let mut aq0 = vec![0.0; n];
        for c in 0..b {
            for r in 0..b {
                let w = vecs[r * b + c];
                if w == 0.0 {
                    continue;
                }
                newq[c].iter_mut().zip(&z[r]).for_each(|(a, zz)| *a += w * zz);
                if c == 0 {
                    aq0.iter_mut().zip(&az[r]).for_each(|(a, zz)| *a += w * zz);
                }
            }
        }
        q = newq;
        theta.copy_from_slice(&vals);
        ritz.copy_from_slice(&vals);
        let lambda = vals[0];
        let r: Vec<f64> = aq0
            .iter()
            .zip(&q[0])
            .zip(mdiag)
            .map(|((a, u), m)| a - lambda * m * u)
            .collect();
        let res = norm2(&r) / norm2(&q[0]);
        last_res = res;
        if res <= opts.tol {
            let u = normalize_sign(q[0].clone());
            let positive = u.iter().all(|&x| x > 0.0);
            let second = (b > 1).then(|| vals[1]);
            let degenerate = second.is_some_and(|s| (s - lambda).abs() <= DEGENERACY_GAP * lambda.abs().max(1.0));
            let eigenfield = GridField::from_interior(grid.clone(), &u, 0.0);
            return Ok((
                EigenResult {
                    lambda,
                    eigenfield,
                    residual: res,
                    iterations: it,
                    positive,
                    degenerate,
                    second_ritz: second,
                },
                q,
            ));
        }
    }
    Err(Error::EigenNotConverged {
        lambda: ritz[0],
        residual: last_res,
        iterations: opts.max_iter,
    })
}

fn split_pair(z: &mut [Vec<f64>], j: usize, i: usize) -> (&Vec<f64>, &mut Vec<f64>) {
    debug_assert!(j < i);
    let (a, b) = z.split_at_mut(i);
    (&a[j], &mut b[0])
}

fn m_dot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum()
}

fn m_norm(a: &[f64], m: &[f64]) -> f64 {
    m_dot(a, a, m).sqrt()
}

/// Flips the sign so the largest-magnitude entry is positive.
fn normalize_sign(mut u: Vec<f64>) -> Vec<f64> {
    let mut best = 0.0f64;
    for &x in &u {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    u
}

/// Positive principal eigenvalue of `K u = lambda G u` with `G = diag(gdiag)` (weighted).
///
/// Solved as the root of the concave, decreasing curve
/// `tau(lambda) = lambda_min(K - lambda G; M)`, whose slope is `-u^T G u`.
pub fn weighted_principal(k: &SparseOperator, gdiag: &SparseOperator, tol: f64) -> Result<EigenResult> {
    let g = gdiag.diagonal();
    if !g.iter().any(|&x| x > 0.0) {
        return Err(Error::NoPositivePrincipal);
    }
    let grid = k.grid().clone();
    let mdiag = mass_matrix(&grid).diagonal();
    let opts = EigenOptions {
        tol: tol * 0.1,
        ..Default::default()
    };
    let mut warm: Option<Vec<Vec<f64>>> = None;
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut lambda = 0.0;
    let mut total = 0;
    let mut last_res = f64::INFINITY;
    for _ in 0..200 {
        let v: Vec<f64> = g.iter().map(|x| lambda * x).collect();
        let (r, block) = solve_block(k, &v, &mdiag, &opts, warm.as_deref())?;
        warm = Some(block);
        total += r.iterations;
        let tau = r.lambda;
        let u = r.eigenfield.interior_values();
        let ku = k.apply_vec(&u);
        let resid: Vec<f64> = ku.iter().zip(&u).zip(&g).map(|((a, x), w)| a - lambda * w * x).collect();
        let res = norm2(&resid) / norm2(&u);
        last_res = res;
        if lambda > 0.0 && res <= tol {
            let positive = u.iter().all(|&x| x > 0.0);
            return Ok(EigenResult {
                lambda,
                residual: res,
                iterations: total,
                positive,
                ..r
            });
        }
        if tau > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let slope = -dot(&u, &u.iter().zip(&g).map(|(a, w)| a * w).collect::<Vec<_>>());
        let newton = if slope < 0.0 { lambda - tau / slope } else { f64::NAN };
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * lo.max(1.0)
        };
    }
    Err(Error::EigenNotConverged {
        lambda,
        residual: last_res,
        iterations: total,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonPoint {
    pub eps: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonPath {
    pub points: Vec<EpsilonPoint>,
    /// The unregularized value.
    pub base_lambda: f64,
    pub strictly_decreasing: bool,
    pub above_base: bool,
}

/// `lambda_1` of `K + eps K_euclid - V` for each `eps`, plus the `eps = 0` value.
pub fn epsilon_path(
    family: &VectorFieldFamily,
    grid: &Arc<GridDomain>,
    vdiag: &SparseOperator,
    eps_list: &[f64],
    tol: f64,
) -> Result<EpsilonPath> {
    if eps_list.is_empty() {
        return Err(Error::InvalidInput("empty eps list".into()));
    }
    if eps_list.iter().any(|&e| !(e >= 0.0)) || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("eps list must be non-negative and strictly decreasing".into()));
    }
    let k = assemble_stiffness(family, grid)?;
    let ke = assemble_stiffness(&VectorFieldFamily::euclidean(grid.dim()), grid)?;
    let m = mass_matrix(grid);
    let base = principal_eigenpair(&k, vdiag, &m, tol)?;
    let mut points = Vec::new();
    for &eps in eps_list {
        let r = if eps == 0.0 {
            base.clone()
        } else {
            principal_eigenpair(&k.add_scaled(&ke, eps)?, vdiag, &m, tol)?
        };
        points.push(EpsilonPoint {
            eps,
            lambda: r.lambda,
            residual: r.residual,
            iterations: r.iterations,
        });
    }
    let strictly_decreasing = points.windows(2).all(|w| w[1].lambda < w[0].lambda);
    let above_base = points.last().is_some_and(|p| p.lambda >= base.lambda - tol);
    Ok(EpsilonPath {
        points,
        base_lambda: base.lambda,
        strictly_decreasing,
        above_base,
    })
}

/// Whether every interior node of `inner` is an interior node of `outer` (matched by
/// coordinates).
pub fn is_nested(inner: &GridDomain, outer: &GridDomain) -> bool {
    let tol = 1e-9 * inner.h();
    inner.interior_nodes().iter().all(|&p| {
        let x = inner.coords(p);
        match outer.nearest_node(&x) {
            Some(q) => {
                outer.interior_position(q).is_some()
                    && outer.coords(q).iter().zip(&x).all(|(a, b)| (a - b).abs() <= tol)
            }
            None => false,
        }
    })
}

/// `lambda_1(D_i)` for nested domains with potential `v`.
pub fn domain_monotonicity<F>(family: &VectorFieldFamily, v: F, nested: &[Arc<GridDomain>], tol: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    for i in 1..nested.len() {
        if !is_nested(&nested[i - 1], &nested[i]) {
            return Err(Error::NotNested { index: i - 1, next: i });
        }
    }
    nested
        .iter()
        .map(|g| {
            let k = assemble_stiffness(family, g)?;
            let vd = assemble_diagonal(&GridField::from_fn(g.clone(), &v), g)?;
            Ok(principal_eigenpair(&k, &vd, &mass_matrix(g), tol)?.lambda)
        })
        .collect()
}

/// Zero potential on `grid`.
pub fn zero_potential(grid: &Arc<GridDomain>) -> SparseOperator {
    diagonal_operator(grid, &vec![0.0; grid.interior_count()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::rayleigh_quotient;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn square(h: f64) -> Arc<GridDomain> {
        Arc::new(GridDomain::build(&[0.0, 0.0], &[1.0, 1.0], h).unwrap())
    }

    fn dense_lambda(k: &SparseOperator, v: &[f64], m: &[f64]) -> Vec<f64> {
        let n = k.size();
        let d = k.to_dense();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let kk = d[i * n + j] - if i == j { v[i] } else { 0.0 };
            kk / (m[i] * m[j]).sqrt()
        });
        let mut e: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn euclidean_unit_square() {
        let g = square(1.0 / 64.0);
        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let m = mass_matrix(&g);
        let r = principal_eigenpair(&k, &zero_potential(&g), &m, 1e-8).unwrap();
        assert!((r.lambda - 2.0 * PI * PI).abs() < 0.01 * 2.0 * PI * PI);
        assert!(r.positive && !r.degenerate);
        let u = r.eigenfield.interior_values();
        assert!((m.quadratic_form(&u) - 1.0).abs() < 1e-10);
        // discrete closed form
        let h: f64 = 1.0 / 64.0;
        let exact = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((r.lambda - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn shift_identity() {
        let g = square(1.0 / 32.0);
        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let m = mass_matrix(&g);
        let base = principal_eigenpair(&k, &zero_potential(&g), &m, 1e-8).unwrap().lambda;
        for c in [-3.0, 5.0] {
            let v = assemble_diagonal(&GridField::constant(g.clone(), c), &g).unwrap();
            let l = principal_eigenpair(&k, &v, &m, 1e-8).unwrap().lambda;
            assert!((l - (base - c)).abs() < 1e-10, "{l} vs {}", base - c);
        }
    }

    #[test]
    fn heisenberg_matches_dense_and_is_positive() {
        let g = Arc::new(GridDomain::build(&[-1.0; 3], &[1.0; 3], 0.25).unwrap());
        let k = assemble_stiffness(&VectorFieldFamily::heisenberg(), &g).unwrap();
        let m = mass_matrix(&g);
        let r = principal_eigenpair(&k, &zero_potential(&g), &m, 1e-8).unwrap();
        let dense = dense_lambda(&k, &vec![0.0; k.size()], &m.diagonal());
        assert!((r.lambda - dense[0]).abs() < 1e-8 * dense[0]);
        assert!(r.residual <= 1e-8);
    }

    #[test]
    fn weighted_reduces_and_scales() {
        let g = square(1.0 / 16.0);
        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let m = mass_matrix(&g);
        let plain = principal_eigenpair(&k, &zero_potential(&g), &m, 1e-10).unwrap();
        let w1 = weighted_principal(&k, &assemble_diagonal(&GridField::constant(g.clone(), 1.0), &g).unwrap(), 1e-8).unwrap();
        assert!((w1.lambda - plain.lambda).abs() < 1e-8 * plain.lambda);
        let w2 = weighted_principal(&k, &assemble_diagonal(&GridField::constant(g.clone(), 2.0), &g).unwrap(), 1e-8).unwrap();
        assert!((w2.lambda - plain.lambda / 2.0).abs() < 1e-8 * plain.lambda);
    }

    #[test]
    fn sign_changing_weight_matches_dense_pencil() {
        let g = square(1.0 / 16.0);
        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let wf = GridField::from_fn(g.clone(), |x| if x[0] > 0.5 { -1.0 } else { 1.0 });
        let gd = assemble_diagonal(&wf, &g).unwrap();
        let r = weighted_principal(&k, &gd, 1e-10).unwrap();
        // oracle: K^{-1/2} G K^{-1/2}, largest positive eigenvalue mu = 1 / lambda
        let n = k.size();
        let kd = DMatrix::from_row_slice(n, n, &k.to_dense());
        let e = SymmetricEigen::new(kd);
        let isq = &e.eigenvectors
            * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * e.eigenvectors.transpose();
        let gm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gd.diagonal()));
        let p = &isq * gm * &isq;
        let p = (&p + p.transpose()) * 0.5;
        let mu = SymmetricEigen::new(p).eigenvalues.max();
        let oracle = 1.0 / mu;
        assert!((r.lambda - oracle).abs() < 1e-8 * oracle, "{} vs {oracle}", r.lambda);
        assert!(r.positive);

        let none = assemble_diagonal(&GridField::constant(g.clone(), -1.0), &g).unwrap();
        assert!(matches!(weighted_principal(&k, &none, 1e-8), Err(Error::NoPositivePrincipal)));
    }

    #[test]
    fn epsilon_path_euclidean_scaling() {
        let g = square(1.0 / 16.0);
        let path = epsilon_path(&VectorFieldFamily::euclidean(2), &g, &zero_potential(&g), &[0.5, 0.1, 0.0], 1e-9).unwrap();
        for p in &path.points {
            assert!((p.lambda - (1.0 + p.eps) * path.base_lambda).abs() < 1e-8 * path.base_lambda);
        }
        assert!(path.strictly_decreasing && path.above_base);
        assert_eq!(path.points[2].lambda, path.base_lambda);
        assert!(epsilon_path(&VectorFieldFamily::euclidean(2), &g, &zero_potential(&g), &[0.1, 0.5], 1e-9).is_err());
    }

    #[test]
    fn nested_squares_scale_by_four() {
        let h = 1.0 / 32.0;
        let big = square(h);
        let small = Arc::new(big.mask_domain(|x| x[0] > 0.25 - 1e-9 && x[0] < 0.75 + 1e-9 && x[1] > 0.25 - 1e-9 && x[1] < 0.75 + 1e-9).unwrap());
        let l = domain_monotonicity(&VectorFieldFamily::euclidean(2), |_| 0.0, &[small.clone(), big.clone()], 1e-8).unwrap();
        assert!((l[0] / l[1] - 4.0).abs() < 0.01);
        let same = domain_monotonicity(&VectorFieldFamily::euclidean(2), |_| 0.0, &[big.clone(), big.clone()], 1e-8).unwrap();
        assert!((same[0] - same[1]).abs() < 1e-10 * same[0]);
        assert!(matches!(
            domain_monotonicity(&VectorFieldFamily::euclidean(2), |_| 0.0, &[big, small], 1e-8),
            Err(Error::NotNested { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn rayleigh_quotient_bounded_below(vals in proptest::collection::vec(-1.0f64..1.0, 225)) {
            let g = square(1.0 / 16.0);
            let k = assemble_stiffness(&VectorFieldFamily::grushin(), &g).unwrap();
            let m = mass_matrix(&g);
            let z = zero_potential(&g);
            let r = principal_eigenpair(&k, &z, &m, 1e-8).unwrap();
            let f = GridField::from_interior(g.clone(), &vals, 0.0);
            prop_assume!(vals.iter().any(|v| v.abs() > 1e-3));
            prop_assert!(rayleigh_quotient(&k, &z, &m, &f).unwrap() >= r.lambda - 1e-8);
        }
    }
}
