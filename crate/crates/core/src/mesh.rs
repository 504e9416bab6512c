//! Uniform grids over boxes, node classification and grid fields.
//!
//! Nodes are stored row-major (last axis fastest). Every interior node has all `2n`
//! axis neighbours inside the grid; the boundary layer is every non-interior node that
//! shares a grid cell with an interior node.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{VectorFieldFamily, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    mask: Vec<NodeClass>,
    interior: Vec<usize>,
    interior_pos: Vec<usize>,
}

const NOT_INTERIOR: usize = usize::MAX;

impl GridDomain {
    /// Uniform grid over `[lo, hi]` with spacing `h` on every axis; the outermost layer
    /// is boundary, everything else interior.
    pub fn build(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        Self::build_with_spacing(lo, hi, &vec![h; lo.len()])
    }

    /// Like [`GridDomain::build`] with a separate spacing per axis.
    pub fn build_with_spacing(lo: &[f64], hi: &[f64], spacing: &[f64]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n || spacing.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: hi.len().min(spacing.len()),
            });
        }
        if n == 0 {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        let mut dims = Vec::with_capacity(n);
        for k in 0..n {
            let extent = hi[k] - lo[k];
            if !(extent > 0.0) {
                return Err(Error::InvalidInput(format!("empty box on axis {k}")));
            }
            if !(spacing[k] > 0.0) {
                return Err(Error::InvalidInput(format!("spacing on axis {k} must be positive")));
            }
            if spacing[k] > extent {
                return Err(Error::InvalidInput(format!(
                    "spacing {} exceeds box extent {extent} on axis {k}",
                    spacing[k]
                )));
            }
            dims.push((extent / spacing[k]).round() as usize + 1);
        }
        Ok(Self::from_parts(lo.to_vec(), spacing.to_vec(), dims, None))
    }

    /// Grid with a node at the origin, covering at least `[-half_extent, half_extent]`
    /// on every axis with node coordinates that are integer multiples of the spacing.
    pub fn centered(half_extent: &[f64], spacing: &[f64]) -> Result<Self> {
        if half_extent.len() != spacing.len() {
            return Err(Error::DimensionMismatch {
                expected: spacing.len(),
                got: half_extent.len(),
            });
        }
        let mut lo = Vec::new();
        let mut dims = Vec::new();
        for (&e, &h) in half_extent.iter().zip(spacing) {
            if !(e > 0.0 && h > 0.0) || h > e {
                return Err(Error::InvalidInput(format!(
                    "centered grid needs 0 < spacing <= half extent, got {h} and {e}"
                )));
            }
            let cells = (e / h - 1e-9).ceil() as usize;
            lo.push(-(cells as f64) * h);
            dims.push(2 * cells + 1);
        }
        Ok(Self::from_parts(lo, spacing.to_vec(), dims, None))
    }

    fn from_parts(origin: Vec<f64>, spacing: Vec<f64>, dims: Vec<usize>, mask: Option<Vec<NodeClass>>) -> Self {
        let n = dims.len();
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let mut g = Self {
            origin,
            spacing,
            dims,
            strides,
            mask: Vec::new(),
            interior: Vec::new(),
            interior_pos: Vec::new(),
        };
        let mask = mask.unwrap_or_else(|| {
            (0..g.node_count())
                .map(|p| {
                    let idx = g.multi_index(p);
                    if idx.iter().zip(&g.dims).all(|(&i, &d)| i > 0 && i + 1 < d) {
                        NodeClass::Interior
                    } else {
                        NodeClass::Boundary
                    }
                })
                .collect()
        });
        g.set_mask(mask);
        g
    }

    fn set_mask(&mut self, mask: Vec<NodeClass>) {
        self.interior_pos = vec![NOT_INTERIOR; mask.len()];
        self.interior.clear();
        for (p, c) in mask.iter().enumerate() {
            if *c == NodeClass::Interior {
                self.interior_pos[p] = self.interior.len();
                self.interior.push(p);
            }
        }
        self.mask = mask;
    }

    /// Re-classifies nodes: interior are predicate-true nodes whose axis neighbours are all
    /// predicate-true; boundary the remaining nodes sharing a cell with an interior node.
    pub fn mask_domain<F>(&self, predicate: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> bool,
    {
        let n = self.dim();
        let inside: Vec<bool> = (0..self.node_count()).map(|p| predicate(&self.coords(p))).collect();
        let mut mask = vec![NodeClass::Exterior; self.node_count()];
        let mut any = false;
        for p in 0..self.node_count() {
            if !inside[p] {
                continue;
            }
            let all = (0..n).all(|k| {
                [-1i64, 1].iter().all(|&d| self.neighbor(p, k, d).is_some_and(|q| inside[q]))
            });
            if all {
                mask[p] = NodeClass::Interior;
                any = true;
            }
        }
        if !any {
            return Err(Error::EmptyInterior);
        }
        let interior: Vec<usize> = (0..mask.len()).filter(|&p| mask[p] == NodeClass::Interior).collect();
        for p in interior {
            self.for_each_cell_neighbor(p, |q| {
                if mask[q] == NodeClass::Exterior {
                    mask[q] = NodeClass::Boundary;
                }
            });
        }
        Ok(Self::from_parts(
            self.origin.clone(),
            self.spacing.clone(),
            self.dims.clone(),
            Some(mask),
        ))
    }

    /// Calls `f` for every node in the `3^n` block around `p` (excluding `p`).
    fn for_each_cell_neighbor<F: FnMut(usize)>(&self, p: usize, mut f: F) {
        let n = self.dim();
        let base = self.multi_index(p);
        let total = 3usize.pow(n as u32);
        let mut idx = vec![0usize; n];
        'outer: for code in 0..total {
            let mut c = code;
            for k in 0..n {
                let off = (c % 3) as i64 - 1;
                c /= 3;
                let v = base[k] as i64 + off;
                if v < 0 || v >= self.dims[k] as i64 {
                    continue 'outer;
                }
                idx[k] = v as usize;
            }
            let q = self.index_of(&idx);
            if q != p {
                f(q);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest axis spacing.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Quadrature weight of one node, `prod_k h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn mask(&self) -> &[NodeClass] {
        &self.mask
    }

    pub fn class(&self, p: usize) -> NodeClass {
        self.mask[p]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Position of node `p` among the interior nodes.
    #[inline]
    pub fn interior_position(&self, p: usize) -> Option<usize> {
        let i = self.interior_pos[p];
        (i != NOT_INTERIOR).then_some(i)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&p| self.mask[p] == NodeClass::Boundary)
            .collect()
    }

    #[inline]
    pub fn index_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_index_into(p, &mut out);
        out
    }

    #[inline]
    pub fn multi_index_into(&self, mut p: usize, out: &mut [usize]) {
        for k in 0..self.dim() {
            out[k] = p / self.strides[k];
            p %= self.strides[k];
        }
    }

    #[inline]
    pub fn axis_index(&self, p: usize, k: usize) -> usize {
        (p / self.strides[k]) % self.dims[k]
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(p, &mut out);
        out
    }

    #[inline]
    pub fn coords_into(&self, p: usize, out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.origin[k] + self.axis_index(p, k) as f64 * self.spacing[k];
        }
    }

    /// Neighbour of `p` one step along axis `k` in direction `dir` (`+1` or `-1`).
    #[inline]
    pub fn neighbor(&self, p: usize, k: usize, dir: i64) -> Option<usize> {
        let i = self.axis_index(p, k) as i64 + dir;
        if i < 0 || i >= self.dims[k] as i64 {
            None
        } else {
            Some((p as i64 + dir * self.strides[k] as i64) as usize)
        }
    }

    #[inline]
    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    /// Node closest to `x`, if `x` lies within half a cell of the grid box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut p = 0;
        for k in 0..self.dim() {
            let f = ((x[k] - self.origin[k]) / self.spacing[k]).round();
            if !(f >= 0.0 && f < self.dims[k] as f64) {
                return None;
            }
            p += f as usize * self.strides[k];
        }
        Some(p)
    }

    /// Whether `p` lies on the outermost layer of the grid box.
    pub fn on_box_face(&self, p: usize) -> bool {
        (0..self.dim()).any(|k| {
            let i = self.axis_index(p, k);
            i == 0 || i + 1 == self.dims[k]
        })
    }

    pub fn box_lo(&self) -> Vec<f64> {
        self.origin.clone()
    }

    pub fn box_hi(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.origin[k] + (self.dims[k] - 1) as f64 * self.spacing[k])
            .collect()
    }

    /// Per boundary node: whether the diffusion tensor's normal component `a nu . nu`
    /// exceeds the rank tolerance, with `nu` estimated from the interior neighbours.
    pub fn noncharacteristic_diagnostic(&self, family: &VectorFieldFamily) -> Result<Vec<(usize, bool)>> {
        if family.n() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: family.n(),
            });
        }
        let n = self.dim();
        let mut out = Vec::new();
        for p in self.boundary_nodes() {
            let mut nu = vec![0.0; n];
            for (k, nk) in nu.iter_mut().enumerate() {
                for d in [-1i64, 1] {
                    if let Some(q) = self.neighbor(p, k, d) {
                        if self.mask[q] == NodeClass::Interior {
                            *nk -= d as f64;
                        }
                    }
                }
            }
            let len = crate::linalg::norm2(&nu);
            if len == 0.0 {
                continue;
            }
            nu.iter_mut().for_each(|v| *v /= len);
            let a = family.diffusion_tensor(&self.coords(p))?;
            let q: f64 = (0..n)
                .map(|i| (0..n).map(|k| a[i][k] * nu[i] * nu[k]).sum::<f64>())
                .sum();
            out.push((p, q > RANK_TOL));
        }
        Ok(out)
    }
}

/// One real value per grid node; exterior nodes carry 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        let mut f = Self { grid, values };
        f.zero_exterior();
        Ok(f)
    }

    pub fn zeros(grid: Arc<GridDomain>) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<GridDomain>, c: f64) -> Self {
        let n = grid.node_count();
        let mut f = Self {
            grid,
            values: vec![c; n],
        };
        f.zero_exterior();
        f
    }

    /// Samples `f` at every non-exterior node.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Arc<GridDomain>, f: F) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.node_count())
            .map(|p| {
                if grid.class(p) == NodeClass::Exterior {
                    0.0
                } else {
                    grid.coords_into(p, &mut x);
                    f(&x)
                }
            })
            .collect();
        Self { grid, values }
    }

    /// Scatters interior values and assigns `boundary` to every boundary node.
    pub fn from_interior(grid: Arc<GridDomain>, interior: &[f64], boundary: f64) -> Self {
        let mut values = vec![0.0; grid.node_count()];
        for (p, v) in values.iter_mut().enumerate() {
            match grid.class(p) {
                NodeClass::Interior => *v = interior[grid.interior_position(p).unwrap()],
                NodeClass::Boundary => *v = boundary,
                NodeClass::Exterior => {}
            }
        }
        Self { grid, values }
    }

    fn zero_exterior(&mut self) {
        for (p, v) in self.values.iter_mut().enumerate() {
            if self.grid.class(p) == NodeClass::Exterior {
                *v = 0.0;
            }
        }
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, p: usize) -> f64 {
        self.values[p]
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_nodes().iter().map(|&p| self.values[p]).collect()
    }

    pub fn set_boundary(&mut self, value: f64) {
        for p in 0..self.values.len() {
            if self.grid.class(p) == NodeClass::Boundary {
                self.values[p] = value;
            }
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out.zero_exterior();
        out
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    /// `prod_k h_k` times the sum over interior nodes.
    pub fn integrate(&self) -> f64 {
        let s: f64 = self.grid.interior_nodes().iter().map(|&p| self.values[p]).sum();
        s * self.grid.cell_volume()
    }

    pub fn max_interior(&self) -> f64 {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&p| self.values[p])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_interior(&self) -> f64 {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&p| self.values[p])
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `i1..in, x1..xn, value`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid.dim();
        let header: Vec<String> = (1..=n)
            .map(|k| format!("i{k}"))
            .chain((1..=n).map(|k| format!("x{k}")))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let mut idx = vec![0; n];
        let mut x = vec![0.0; n];
        for (p, v) in self.values.iter().enumerate() {
            self.grid.multi_index_into(p, &mut idx);
            self.grid.coords_into(p, &mut x);
            let mut line = String::new();
            for i in &idx {
                line.push_str(&format!("{i},"));
            }
            for xi in &x {
                line.push_str(&format!("{xi},"));
            }
            line.push_str(&format!("{v}"));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Flat little-endian dump: `u32` axis count, one `u64` per axis length, then the
    /// node values in row-major order as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        for &d in self.grid.dims() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`GridField::write_binary`] back onto `grid`.
    pub fn read_binary<R: Read>(grid: Arc<GridDomain>, mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        if n != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: n,
            });
        }
        let mut b8 = [0u8; 8];
        for k in 0..n {
            r.read_exact(&mut b8)?;
            let d = u64::from_le_bytes(b8) as usize;
            if d != grid.dims()[k] {
                return Err(Error::Parse(format!("axis {k} length {d} does not match grid")));
            }
        }
        let mut values = Vec::with_capacity(grid.node_count());
        for _ in 0..grid.node_count() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::new(grid, values)
    }
}
