//! Discrete first-order operators, the stiffness form of the sub-Laplacian, diagonal
//! potential/weight matrices and Rayleigh quotients.
//!
//! The stiffness matrix is built from the quadratic form
//! `f^T K f = sum_q sum_s (prod h_k / 2^n) sum_j (X_j^s f)(q)^2`, where `s` runs over the
//! `2^n` one-sided difference patterns at node `q` and
//! `X_j^s f(q) = sum_k A^{jk}(q) s_k (f(q + s_k e_k) - f(q)) / h_k`.
//! For constant coefficients this reduces to the standard `(2n+1)`-point stencil.

use std::io::Write;
use std::sync::Arc;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::fields::VectorFieldFamily;
use crate::linalg::{csr_matvec, csr_matvec_add, dot};
use crate::mesh::{GridDomain, GridField, NodeClass};

/// Sparse matrix over the interior nodes of a grid. `coupling` maps values on
/// non-interior nodes (indexed by global node number) into interior rows, which is how
/// Dirichlet data enters.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    grid: Arc<GridDomain>,
    matrix: CsMat<f64>,
    coupling: Option<CsMat<f64>>,
    symmetric: bool,
}

impl SparseOperator {
    pub fn new(grid: Arc<GridDomain>, matrix: CsMat<f64>, coupling: Option<CsMat<f64>>, symmetric: bool) -> Result<Self> {
        let n = grid.interior_count();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.rows(),
            });
        }
        if let Some(c) = &coupling {
            if c.rows() != n || c.cols() != grid.node_count() {
                return Err(Error::DimensionMismatch {
                    expected: grid.node_count(),
                    got: c.cols(),
                });
            }
        }
        Ok(Self {
            grid,
            matrix: matrix.to_csr(),
            coupling: coupling.map(|c| c.to_csr()),
            symmetric,
        })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn coupling(&self) -> Option<&CsMat<f64>> {
        self.coupling.as_ref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of rows (interior nodes).
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// `y = A x` on interior vectors.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        csr_matvec(&self.matrix, x, y);
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        self.apply(x, &mut y);
        y
    }

    /// `A u_int + C u_rest` for a field given on all nodes.
    pub fn apply_field(&self, field: &GridField) -> Vec<f64> {
        let mut y = self.apply_vec(&field.interior_values());
        if let Some(c) = &self.coupling {
            csr_matvec_add(c, field.values(), &mut y);
        }
        y
    }

    /// Contribution of the non-interior values of `field` to the interior rows.
    pub fn boundary_term(&self, field: &GridField) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        if let Some(c) = &self.coupling {
            csr_matvec_add(c, field.values(), &mut y);
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        crate::linalg::csr_diagonal(&self.matrix)
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply_vec(x))
    }

    /// Row-major dense copy; only meant for small grids.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut d = vec![0.0; n * n];
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                d[r * n + c] += v;
            }
        }
        d
    }

    /// `self + alpha * other` (same grid).
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        if *self.grid != *other.grid {
            return Err(Error::InvalidInput("operators live on different grids".into()));
        }
        let scaled = other.matrix.map(|v| alpha * v);
        let matrix = &self.matrix + &scaled;
        let coupling = match (&self.coupling, &other.coupling) {
            (Some(a), Some(b)) => Some(a + &b.map(|v| alpha * v)),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.map(|v| alpha * v)),
            (None, None) => None,
        };
        Self::new(
            self.grid.clone(),
            matrix,
            coupling,
            self.symmetric && other.symmetric,
        )
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.matrix.transpose_view().to_csr();
        let diff = &self.matrix - &t;
        let scale = self.matrix.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        diff.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    }

    /// Row-sum infinity norm of the interior block.
    pub fn norm_inf(&self) -> f64 {
        self.matrix
            .outer_iterator()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Coordinate-triplet export: a `%%MatrixMarket` header, `rows cols nnz`, then
    /// 1-based `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        let kind = if self.symmetric { "symmetric-stored-full" } else { "general" };
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "% {kind}")?;
        writeln!(w, "{} {} {}", self.matrix.rows(), self.matrix.cols(), self.matrix.nnz())?;
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

fn check_dims(family: &VectorFieldFamily, grid: &GridDomain) -> Result<()> {
    if family.n() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: family.n(),
        });
    }
    Ok(())
}

/// Centered-difference `X_j f` at node `p` for every field, when all axis neighbours exist.
pub fn horizontal_gradient_at(family: &VectorFieldFamily, grid: &GridDomain, values: &[f64], p: usize) -> Option<Vec<f64>> {
    let n = grid.dim();
    let m = family.m();
    let mut partial = vec![0.0; n];
    for (k, d) in partial.iter_mut().enumerate() {
        let a = grid.neighbor(p, k, 1)?;
        let b = grid.neighbor(p, k, -1)?;
        *d = (values[a] - values[b]) / (2.0 * grid.spacing()[k]);
    }
    let mut coef = vec![0.0; m * n];
    family.eval_into(&grid.coords(p), &mut coef);
    Some(
        (0..m)
            .map(|j| (0..n).map(|k| coef[j * n + k] * partial[k]).sum())
            .collect(),
    )
}

/// Centered-difference matrix of field `j` (0-based). Rows are interior nodes; columns of
/// non-interior neighbours go to the coupling block.
pub fn assemble_first_order(family: &VectorFieldFamily, grid: &Arc<GridDomain>, j: usize) -> Result<SparseOperator> {
    check_dims(family, grid)?;
    if j >= family.m() {
        return Err(Error::InvalidInput(format!(
            "field index {j} out of range for a family of {} fields",
            family.m()
        )));
    }
    let n = grid.dim();
    let ni = grid.interior_count();
    let mut inner = TriMat::new((ni, ni));
    let mut outer = TriMat::new((ni, grid.node_count()));
    let mut coef = vec![0.0; family.m() * n];
    let mut x = vec![0.0; n];
    for (row, &p) in grid.interior_nodes().iter().enumerate() {
        grid.coords_into(p, &mut x);
        family.eval_into(&x, &mut coef);
        for k in 0..n {
            let a = coef[j * n + k];
            if a == 0.0 {
                continue;
            }
            let w = a / (2.0 * grid.spacing()[k]);
            for (dir, sgn) in [(1i64, 1.0), (-1, -1.0)] {
                let q = grid.neighbor(p, k, dir).expect("interior nodes have all axis neighbours");
                match grid.interior_position(q) {
                    Some(c) => inner.add_triplet(row, c, sgn * w),
                    None => outer.add_triplet(row, q, sgn * w),
                }
            }
        }
    }
    SparseOperator::new(grid.clone(), inner.to_csr(), Some(outer.to_csr()), false)
}

/// Symmetric positive semidefinite stiffness matrix of `H = sum_j X_j^* X_j`.
pub fn assemble_stiffness(family: &VectorFieldFamily, grid: &Arc<GridDomain>) -> Result<SparseOperator> {
    check_dims(family, grid)?;
    let n = grid.dim();
    let m = family.m();
    let ni = grid.interior_count();
    let width = 3usize.pow(n as u32);
    let centre_code: usize = (0..n).map(|k| 3usize.pow(k as u32)).sum();
    // acc[row * width + code]: entry between interior row node and node row + offset(code)
    let mut acc = vec![0.0; ni * width];
    let weight = grid.cell_volume() / (1u64 << n) as f64;
    let h = grid.spacing().to_vec();

    let mut coef = vec![0.0; m * n];
    let mut x = vec![0.0; n];
    let mut stencil = vec![0usize; n + 1];
    let mut stencil_code = vec![0usize; n + 1];
    let mut local = vec![0.0; (n + 1) * (n + 1)];
    let mut c = vec![0.0; n + 1];
    let mut touches = vec![false; grid.node_count()];
    for &p in grid.interior_nodes() {
        touches[p] = true;
        for k in 0..n {
            for d in [-1, 1] {
                if let Some(q) = grid.neighbor(p, k, d) {
                    touches[q] = true;
                }
            }
        }
    }

    for q in 0..grid.node_count() {
        if !touches[q] {
            continue;
        }
        grid.coords_into(q, &mut x);
        family.eval_into(&x, &mut coef);
        'pattern: for s in 0..(1usize << n) {
            stencil[0] = q;
            stencil_code[0] = centre_code;
            let mut any_interior = grid.class(q) == NodeClass::Interior;
            for k in 0..n {
                let dir = if s >> k & 1 == 1 { 1 } else { -1 };
                match grid.neighbor(q, k, dir) {
                    Some(r) => {
                        stencil[k + 1] = r;
                        any_interior |= grid.class(r) == NodeClass::Interior;
                        stencil_code[k + 1] = (centre_code as i64 + dir * 3i64.pow(k as u32)) as usize;
                    }
                    None => continue 'pattern,
                }
            }
            if !any_interior {
                continue;
            }
            local.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..m {
                c[0] = 0.0;
                for k in 0..n {
                    let sk = if s >> k & 1 == 1 { 1.0 } else { -1.0 };
                    let v = coef[j * n + k] * sk / h[k];
                    c[k + 1] = v;
                    c[0] -= v;
                }
                for a in 0..=n {
                    if c[a] == 0.0 {
                        continue;
                    }
                    for b in 0..=n {
                        local[a * (n + 1) + b] += c[a] * c[b];
                    }
                }
            }
            for a in 0..=n {
                let Some(row) = grid.interior_position(stencil[a]) else { continue };
                for b in 0..=n {
                    let v = local[a * (n + 1) + b];
                    if v == 0.0 {
                        continue;
                    }
                    // offset from stencil[a] to stencil[b]
                    let code = stencil_code[b] + centre_code - stencil_code[a];
                    acc[row * width + code] += weight * v;
                }
            }
        }
    }

    let mut inner = TriMat::new((ni, ni));
    let mut outer = TriMat::new((ni, grid.node_count()));
    let strides: Vec<i64> = (0..n).map(|k| grid.stride(k) as i64).collect();
    for (row, &p) in grid.interior_nodes().iter().enumerate() {
        for code in 0..width {
            let v = acc[row * width + code];
            if v == 0.0 {
                continue;
            }
            let mut off = 0i64;
            let mut cc = code;
            for st in &strides {
                off += ((cc % 3) as i64 - 1) * st;
                cc /= 3;
            }
            let node = (p as i64 + off) as usize;
            match grid.interior_position(node) {
                Some(col) => inner.add_triplet(row, col, v),
                None => outer.add_triplet(row, node, v),
            }
        }
    }
    let mut inner = inner.to_csr::<usize>();
    symmetrize(&mut inner);
    SparseOperator::new(grid.clone(), inner, Some(outer.to_csr()), true)
}

/// Replaces `A` by `(A + A^T) / 2` entry by entry, removing round-off asymmetry.
fn symmetrize(a: &mut CsMat<f64>) {
    let t = a.transpose_view().to_csr();
    let s = &*a + &t;
    *a = s.map(|v| 0.5 * v);
}

/// Diagonal matrix with entries `prod h_k * field(p)` at interior nodes.
pub fn assemble_diagonal(field: &GridField, grid: &Arc<GridDomain>) -> Result<SparseOperator> {
    if field.grid().node_count() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.node_count(),
            got: field.grid().node_count(),
        });
    }
    let w = grid.cell_volume();
    let values: Vec<f64> = grid.interior_nodes().iter().map(|&p| w * field.value(p)).collect();
    Ok(diagonal_operator(grid, &values))
}

/// The mass matrix `prod h_k * I`.
pub fn mass_matrix(grid: &Arc<GridDomain>) -> SparseOperator {
    diagonal_operator(grid, &vec![grid.cell_volume(); grid.interior_count()])
}

/// Diagonal operator with the given (already weighted) entries.
pub fn diagonal_operator(grid: &Arc<GridDomain>, values: &[f64]) -> SparseOperator {
    let n = values.len();
    let indptr: Vec<usize> = (0..=n).collect();
    let indices: Vec<usize> = (0..n).collect();
    let matrix = CsMat::new((n, n), indptr, indices, values.to_vec());
    SparseOperator {
        grid: grid.clone(),
        matrix,
        coupling: None,
        symmetric: true,
    }
}

/// `(f^T K f - f^T V f) / f^T M f` over interior values of `f`.
pub fn rayleigh_quotient(k: &SparseOperator, v: &SparseOperator, m: &SparseOperator, f: &GridField) -> Result<f64> {
    rayleigh_quotient_vec(k, v, m, &f.interior_values())
}

pub fn rayleigh_quotient_vec(k: &SparseOperator, v: &SparseOperator, m: &SparseOperator, f: &[f64]) -> Result<f64> {
    let den = m.quadratic_form(f);
    if !(den > 0.0) {
        return Err(Error::InvalidInput("Rayleigh quotient of a zero-norm field".into()));
    }
    Ok((k.quadratic_form(f) - v.quadratic_form(f)) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_square(h: f64) -> Arc<GridDomain> {
        Arc::new(GridDomain::build(&[0.0, 0.0], &[1.0, 1.0], h).unwrap())
    }

    #[test]
    fn first_order_examples() {
        let g = Arc::new(GridDomain::build(&[0.0], &[1.0], 0.1).unwrap());
        let f = GridField::from_fn(g.clone(), |x| x[0]);
        let b = assemble_first_order(&VectorFieldFamily::euclidean(1), &g, 0).unwrap();
        for v in b.apply_field(&f) {
            assert!((v - 1.0).abs() < 1e-12);
        }

        let g = Arc::new(GridDomain::build(&[0.0, 1.0, -1.0], &[2.0, 3.0, 1.0], 0.25).unwrap());
        let t = GridField::from_fn(g.clone(), |x| x[2]);
        let fam = VectorFieldFamily::heisenberg();
        let b1 = assemble_first_order(&fam, &g, 0).unwrap().apply_field(&t);
        let b2 = assemble_first_order(&fam, &g, 1).unwrap().apply_field(&t);
        let p = g.nearest_node(&[1.0, 2.0, 0.0]).unwrap();
        let r = g.interior_position(p).unwrap();
        assert!((b1[r] + 1.0).abs() < 1e-12);
        assert!((b2[r] - 0.5).abs() < 1e-12);

        let g = Arc::new(GridDomain::build(&[-1.0, 0.0], &[1.0, 1.0], 0.125).unwrap());
        let y = GridField::from_fn(g.clone(), |x| x[1]);
        let b = assemble_first_order(&VectorFieldFamily::grushin(), &g, 1).unwrap().apply_field(&y);
        let p = g.nearest_node(&[0.0, 0.5]).unwrap();
        assert!(b[g.interior_position(p).unwrap()].abs() < 1e-14);
        assert!(assemble_first_order(&VectorFieldFamily::grushin(), &g, 2).is_err());
    }

    #[test]
    fn euclidean_stiffness_is_scaled_laplacian() {
        for (n, h) in [(1usize, 0.1), (2, 0.125), (3, 0.25)] {
            let g = Arc::new(GridDomain::build(&vec![0.0; n], &vec![1.0; n], h).unwrap());
            let k = assemble_stiffness(&VectorFieldFamily::euclidean(n), &g).unwrap();
            let scale = h.powi(n as i32 - 2);
            let dense = k.to_dense();
            let ni = g.interior_count();
            for (r, &p) in g.interior_nodes().iter().enumerate() {
                for (c, &q) in g.interior_nodes().iter().enumerate() {
                    let expected = if p == q {
                        2.0 * n as f64
                    } else if (0..n).any(|ax| [-1, 1].iter().any(|&d| g.neighbor(p, ax, d) == Some(q))) {
                        -1.0
                    } else {
                        0.0
                    };
                    let got = dense[r * ni + c];
                    assert!((got - scale * expected).abs() <= 1e-12 * scale * 2.0 * n as f64,
                        "n={n} ({r},{c}) {got} vs {}", scale * expected);
                }
            }
        }
    }

    #[test]
    fn euclidean_rayleigh_quotient_tends_to_two_pi_squared() {
        let mut prev = f64::INFINITY;
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let g = unit_square(h);
            let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
            let m = mass_matrix(&g);
            let zero = diagonal_operator(&g, &vec![0.0; g.interior_count()]);
            let f = GridField::from_fn(g.clone(), |x| (PI * x[0]).sin() * (PI * x[1]).sin());
            let q = rayleigh_quotient(&k, &zero, &m, &f).unwrap();
            let err = (q - 2.0 * PI * PI).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 0.01 * 2.0 * PI * PI);
    }

    #[test]
    fn heisenberg_constant_has_positive_energy_and_symmetric_stiffness() {
        let g = Arc::new(GridDomain::build(&[-1.0; 3], &[1.0; 3], 0.25).unwrap());
        let k = assemble_stiffness(&VectorFieldFamily::heisenberg(), &g).unwrap();
        assert!(k.symmetry_defect() <= 1e-12);
        let ones = vec![1.0; g.interior_count()];
        assert!(k.quadratic_form(&ones) > 0.0);
    }

    #[test]
    fn constants_are_annihilated_with_matching_boundary_data() {
        let g = Arc::new(GridDomain::build(&[-1.0; 3], &[1.0; 3], 0.25).unwrap());
        let k = assemble_stiffness(&VectorFieldFamily::heisenberg(), &g).unwrap();
        let c = GridField::constant(g.clone(), 0.4);
        for v in k.apply_field(&c) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn regularized_stiffness_splits() {
        let g = Arc::new(GridDomain::build(&[-1.0, 0.0], &[1.0, 1.0], 0.125).unwrap());
        let fam = VectorFieldFamily::grushin();
        let eps = 0.3;
        let a = assemble_stiffness(&fam.regularized(eps), &g).unwrap();
        let b = assemble_stiffness(&fam, &g)
            .unwrap()
            .add_scaled(&assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap(), eps)
            .unwrap();
        let (da, db) = (a.to_dense(), b.to_dense());
        for (x, y) in da.iter().zip(&db) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_examples_and_shift_identity() {
        let g = unit_square(0.125);
        let w = g.cell_volume();
        let one = assemble_diagonal(&GridField::constant(g.clone(), 1.0), &g).unwrap();
        assert!(one.diagonal().iter().all(|&d| (d - w).abs() < 1e-15));
        let zero = assemble_diagonal(&GridField::zeros(g.clone()), &g).unwrap();
        assert!(zero.diagonal().iter().all(|&d| d == 0.0));
        let s = assemble_diagonal(&GridField::from_fn(g.clone(), |x| 1.0 - 2.0 * (x[0] > 0.5) as u8 as f64), &g).unwrap();
        let d = s.diagonal();
        assert!(d.iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);
        assert!(d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 0.0);

        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let f = GridField::from_fn(g.clone(), |x| x[0] * (1.0 - x[0]) * x[1]);
        let c = 3.5;
        let vc = assemble_diagonal(&GridField::constant(g.clone(), c), &g).unwrap();
        let q0 = rayleigh_quotient(&k, &zero, &one, &f).unwrap();
        let qc = rayleigh_quotient(&k, &vc, &one, &f).unwrap();
        assert!((qc - (q0 - c)).abs() < 1e-12 * q0.abs());
        assert!(rayleigh_quotient(&k, &zero, &one, &GridField::zeros(g)).is_err());
    }

    #[test]
    fn divergence_form_consistency() {
        // f = bump with support inside the box; oracle via fine analytic quadrature
        let fam = VectorFieldFamily::grushin();
        let bump = |x: f64, y: f64| {
            let r2 = x * x + (y - 0.5).powi(2) * 4.0;
            if r2 < 0.25 { (0.25 - r2).powi(3) } else { 0.0 }
        };
        let grad = |x: f64, y: f64| {
            let r2 = x * x + (y - 0.5).powi(2) * 4.0;
            if r2 < 0.25 {
                let c = -3.0 * (0.25 - r2).powi(2);
                (c * 2.0 * x, c * 8.0 * (y - 0.5))
            } else {
                (0.0, 0.0)
            }
        };
        let exact = {
            let nq = 2000;
            let hq = 2.0 / nq as f64;
            let mut s = 0.0;
            for i in 0..nq {
                for j in 0..nq / 2 {
                    let x = -1.0 + (i as f64 + 0.5) * hq;
                    let y = (j as f64 + 0.5) * hq;
                    let (fx, fy) = grad(x, y);
                    s += (fx * fx + x * x * fy * fy) * hq * hq;
                }
            }
            s
        };
        let err = |h: f64| {
            let g = Arc::new(GridDomain::build(&[-1.0, 0.0], &[1.0, 1.0], h).unwrap());
            let k = assemble_stiffness(&fam, &g).unwrap();
            let f = GridField::from_fn(g, |x| bump(x[0], x[1]));
            (k.quadratic_form(&f.interior_values()) - exact).abs()
        };
        let (e1, e2) = (err(1.0 / 16.0), err(1.0 / 32.0));
        assert!(e2 < e1 && e2 < 0.02 * exact, "{e1} {e2} {exact}");
    }

    #[test]
    fn triplet_export() {
        let g = unit_square(0.5);
        let k = assemble_stiffness(&VectorFieldFamily::euclidean(2), &g).unwrap();
        let mut buf = Vec::new();
        k.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "1 1 1");
        assert_eq!(lines[3], "1 1 4e0");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn stiffness_is_psd(seed in proptest::collection::vec(-1.0f64..1.0, 7 * 7 * 7)) {
            let g = Arc::new(GridDomain::build(&[-1.0; 3], &[1.0; 3], 0.25).unwrap());
            let k = assemble_stiffness(&VectorFieldFamily::heisenberg(), &g).unwrap();
            let v = &seed[..g.interior_count()];
            prop_assert!(k.quadratic_form(v) >= -1e-10 * dot(v, v));
        }

        #[test]
        fn first_order_adjoint_consistency(f in proptest::collection::vec(-1.0f64..1.0, 49), gv in proptest::collection::vec(-1.0f64..1.0, 49)) {
            let g = Arc::new(GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.25).unwrap());
            let b = assemble_first_order(&VectorFieldFamily::grushin(), &g, 1).unwrap();
            let w = g.cell_volume();
            let bf = b.apply_vec(&f);
            let lhs = w * dot(&bf, &gv);
            let bt = b.matrix().transpose_view().to_csr();
            let mut btg = vec![0.0; 49];
            let wg: Vec<f64> = gv.iter().map(|v| w * v).collect();
            csr_matvec(&bt, &wg, &mut btg);
            let rhs = dot(&f, &btg);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
