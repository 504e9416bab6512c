//! Carnot-Caratheodory distance on grids, metric balls and the measure / functional
//! inequality probes built on them.
//!
//! The graph has one vertex per grid node. From node `x` an edge is tried for every
//! primitive integer control vector `v` of a small cube in `Z^m`: the Euler step
//! `x + h A(x)^T v` is snapped to the nearest node `y`, and the constant control `c`
//! solving `A(xbar)^T c = y - x` at the midpoint is computed by least squares. The edge
//! is kept only when that system is consistent; its duration is `|c|`. For families with
//! lattice-compatible grids (euclidean, Heisenberg on spacing `(h, h, h^2/2)`) every
//! edge is an exact horizontal segment.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Polynomial, VectorFieldFamily};
use crate::linalg::{lu_solve, norm2};
use crate::mesh::{GridDomain, GridField};
use crate::operators::horizontal_gradient_at;

pub const DEFAULT_DIRECTIONS: usize = 32;
pub const DEFAULT_SEGMENTS: usize = 64;
const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct PathResult {
    /// Horizontal duration.
    #[serde(rename = "T")]
    pub t: f64,
    pub waypoints: Vec<Vec<f64>>,
    /// Unit-ball controls, one per segment.
    pub controls: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
    /// Largest endpoint mismatch when each segment is re-integrated from its start.
    pub defect: f64,
    /// Distance between the queried points and the nodes they were snapped to.
    pub snap_error: f64,
    pub stalled: bool,
}

impl PathResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.waypoints.first().map_or(0, |p| p.len());
        let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.waypoints {
            let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Primitive integer vectors of `[-r, r]^m` for the smallest `r` giving at least
/// `count` of them, in lexicographic order.
pub fn control_directions(m: usize, count: usize) -> Vec<Vec<i64>> {
    let mut r = 1i64;
    loop {
        let side = (2 * r + 1) as usize;
        let total = side.pow(m as u32);
        let mut out = Vec::new();
        for code in 0..total {
            let mut c = code;
            let mut v = vec![0i64; m];
            for slot in v.iter_mut().rev() {
                *slot = (c % side) as i64 - r;
                c /= side;
            }
            if v.iter().all(|&x| x == 0) {
                continue;
            }
            let g = v.iter().fold(0i64, |g, &x| gcd(g, x.abs()));
            if g == 1 {
                out.push(v);
            }
        }
        if out.len() >= count || r >= 16 {
            return out;
        }
        r += 1;
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Binary min-heap over node indices keyed by an external distance array, with
/// decrease-key. Ties break on the node index so runs are deterministic.
struct NodeHeap {
    heap: Vec<usize>,
    pos: Vec<u32>,
}

impl NodeHeap {
    const ABSENT: u32 = u32::MAX;

    fn new(n: usize) -> Self {
        Self {
            heap: Vec::new(),
            pos: vec![Self::ABSENT; n],
        }
    }

    fn less(dist: &[f64], a: usize, b: usize) -> bool {
        match dist[a].total_cmp(&dist[b]) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a < b,
        }
    }

    fn place(&mut self, i: usize, node: usize) {
        self.heap[i] = node;
        self.pos[node] = i as u32;
    }

    fn sift_up(&mut self, dist: &[f64], mut i: usize) {
        let node = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::less(dist, node, self.heap[parent]) {
                break;
            }
            let pn = self.heap[parent];
            self.place(i, pn);
            i = parent;
        }
        self.place(i, node);
    }

    fn sift_down(&mut self, dist: &[f64], mut i: usize) {
        let node = self.heap[i];
        let len = self.heap.len();
        loop {
            let mut c = 2 * i + 1;
            if c >= len {
                break;
            }
            if c + 1 < len && Self::less(dist, self.heap[c + 1], self.heap[c]) {
                c += 1;
            }
            if !Self::less(dist, self.heap[c], node) {
                break;
            }
            let cn = self.heap[c];
            self.place(i, cn);
            i = c;
        }
        self.place(i, node);
    }

    /// Inserts `node` or restores order after its key decreased.
    fn push_or_decrease(&mut self, dist: &[f64], node: usize) {
        let i = match self.pos[node] {
            Self::ABSENT => {
                self.heap.push(node);
                self.heap.len() - 1
            }
            p => p as usize,
        };
        self.sift_up(dist, i);
    }

    fn pop(&mut self, dist: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("non-empty");
        self.pos[top] = Self::ABSENT;
        if !self.heap.is_empty() {
            self.place(0, last);
            self.sift_down(dist, 0);
        }
        Some(top)
    }
}

/// Shortest-path tree from one source.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub prev: Vec<usize>,
    /// Nodes in the order they were settled.
    pub settled: Vec<usize>,
}

impl ShortestPaths {
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut out = vec![target];
        let mut p = target;
        while p != self.source {
            p = self.prev[p];
            out.push(p);
        }
        out.reverse();
        Some(out)
    }
}

pub struct MetricGraph<'a> {
    family: &'a VectorFieldFamily,
    grid: &'a GridDomain,
    directions: Vec<Vec<f64>>,
    h_ref: f64,
    /// `d A_jk / d x_l` at `[(j n + k) n + l]` when every coefficient is affine.
    affine: Option<Vec<f64>>,
}

struct Scratch {
    coef: Vec<f64>,
    mid_coef: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    delta: Vec<f64>,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> MetricGraph<'a> {
    pub fn new(family: &'a VectorFieldFamily, grid: &'a GridDomain, directions: usize) -> Result<Self> {
        if family.n() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: family.n(),
            });
        }
        if directions == 0 {
            return Err(Error::InvalidInput("need at least one control direction".into()));
        }
        let directions = control_directions(family.m(), directions)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x as f64).collect())
            .collect();
        let n = family.n();
        let affine = family
            .fields()
            .iter()
            .all(|f| f.components().iter().all(|p| p.degree() <= 1))
            .then(|| {
                let origin = vec![0.0; n];
                let mut out = Vec::with_capacity(family.m() * n * n);
                for f in family.fields() {
                    for p in f.components() {
                        for l in 0..n {
                            out.push(p.derivative(l).eval(&origin));
                        }
                    }
                }
                out
            });
        Ok(Self {
            family,
            grid,
            directions,
            h_ref: grid.h(),
            affine,
        })
    }

    pub fn grid(&self) -> &GridDomain {
        self.grid
    }

    pub fn direction_count(&self) -> usize {
        self.directions.len()
    }

    fn scratch(&self) -> Scratch {
        let (n, m) = (self.family.n(), self.family.m());
        Scratch {
            coef: vec![0.0; m * n],
            mid_coef: vec![0.0; m * n],
            x: vec![0.0; n],
            y: vec![0.0; n],
            delta: vec![0.0; n],
            gram: vec![0.0; m * m],
            rhs: vec![0.0; m],
        }
    }

    /// Constant control moving `x` to `y` in unit time, evaluated at the midpoint, when
    /// the least-squares system is consistent. `s.coef` must hold `A(x)`; the control is
    /// left in `s.rhs` and its norm returned.
    fn segment_control(&self, s: &mut Scratch) -> Option<f64> {
        let (n, m) = (self.family.n(), self.family.m());
        for k in 0..n {
            s.delta[k] = s.y[k] - s.x[k];
        }
        if let Some(jac) = &self.affine {
            for (r, out) in s.mid_coef.iter_mut().enumerate() {
                let d: f64 = (0..n).map(|l| jac[r * n + l] * s.delta[l]).sum();
                *out = s.coef[r] + 0.5 * d;
            }
        } else {
            for k in 0..n {
                s.x[k] += 0.5 * s.delta[k];
            }
            self.family.eval_into(&s.x, &mut s.mid_coef);
            for k in 0..n {
                s.x[k] -= 0.5 * s.delta[k];
            }
        }
        let a = &s.mid_coef;
        for i in 0..m {
            s.rhs[i] = (0..n).map(|k| a[i * n + k] * s.delta[k]).sum();
            for j in 0..m {
                s.gram[i * m + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
            }
        }
        if !solve_small(&mut s.gram, &mut s.rhs, m) {
            return None;
        }
        let c = &s.rhs;
        let dn = norm2(&s.delta);
        let mut r2 = 0.0;
        for k in 0..n {
            let v: f64 = (0..m).map(|j| a[j * n + k] * c[j]).sum::<f64>() - s.delta[k];
            r2 += v * v;
        }
        (r2.sqrt() <= CONSISTENCY_TOL * dn.max(self.h_ref * 1e-3)).then(|| norm2(c))
    }

    /// Dijkstra from `source`, stopping when `target` is settled or distances exceed
    /// `cutoff`.
    pub fn shortest_paths(&self, source: usize, target: Option<usize>, cutoff: f64) -> ShortestPaths {
        let g = self.grid;
        let n = g.dim();
        let nn = g.node_count();
        let mut dist = vec![f64::INFINITY; nn];
        let mut prev = vec![usize::MAX; nn];
        let mut done = vec![false; nn];
        let mut settled = Vec::new();
        let mut heap = NodeHeap::new(nn);
        let mut s = self.scratch();
        dist[source] = 0.0;
        heap.push_or_decrease(&dist, source);
        while let Some(p) = heap.pop(&dist) {
            if dist[p] > cutoff {
                break;
            }
            let d = dist[p];
            done[p] = true;
            settled.push(p);
            if Some(p) == target {
                break;
            }
            g.coords_into(p, &mut s.x);
            self.family.eval_into(&s.x, &mut s.coef);
            for v in &self.directions {
                for k in 0..n {
                    let step: f64 = v.iter().enumerate().map(|(j, vj)| vj * s.coef[j * n + k]).sum();
                    s.y[k] = s.x[k] + self.h_ref * step;
                }
                let Some(q) = g.nearest_node(&s.y) else { continue };
                if q == p || done[q] {
                    continue;
                }
                g.coords_into(q, &mut s.y);
                let Some(len) = self.segment_control(&mut s) else { continue };
                let nd = d + len;
                if nd < dist[q] {
                    dist[q] = nd;
                    prev[q] = p;
                    heap.push_or_decrease(&dist, q);
                }
            }
        }
        ShortestPaths {
            source,
            dist,
            prev,
            settled,
        }
    }

    /// Rebuilds the controls of a node path and measures the re-integration defect.
    fn path_result(&self, nodes: &[usize], snap_error: f64) -> PathResult {
        let mut s = self.scratch();
        let mut controls = Vec::new();
        let mut durations = Vec::new();
        let mut defect = 0.0f64;
        let waypoints: Vec<Vec<f64>> = nodes.iter().map(|&p| self.grid.coords(p)).collect();
        for w in waypoints.windows(2) {
            s.x.copy_from_slice(&w[0]);
            s.y.copy_from_slice(&w[1]);
            self.family.eval_into(&s.x, &mut s.coef);
            let c = match self.segment_control(&mut s) {
                Some(_) => s.rhs.clone(),
                None => vec![0.0; self.family.m()],
            };
            let len = norm2(&c);
            let f: Vec<f64> = if len > 0.0 { c.iter().map(|v| v / len).collect() } else { c.clone() };
            let end = integrate(self.family, &w[0], &f, len, 8);
            let err = end.iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            defect = defect.max(err);
            controls.push(f);
            durations.push(len);
        }
        PathResult {
            t: durations.iter().sum(),
            waypoints,
            controls,
            durations,
            defect,
            snap_error,
            stalled: false,
        }
    }
}

/// Gaussian elimination with partial pivoting on an `m x m` system, solution left in
/// `b`; false if singular.
fn solve_small(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() <= 1e-13 * scale {
            return false;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            if f != 0.0 {
                for k in col..m {
                    a[r * m + k] -= f * a[col * m + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r * m + k] * b[k]).sum();
        b[r] = (b[r] - s) / a[r * m + r];
    }
    true
}

/// RK4 integration of `gamma' = sum_j f_j X_j(gamma)` with constant `f` over `duration`.
pub fn integrate(family: &VectorFieldFamily, x0: &[f64], f: &[f64], duration: f64, steps: usize) -> Vec<f64> {
    let n = family.n();
    let m = family.m();
    let mut coef = vec![0.0; m * n];
    let mut rhs = |x: &[f64], out: &mut [f64]| {
        family.eval_into(x, &mut coef);
        for k in 0..n {
            out[k] = (0..m).map(|j| f[j] * coef[j * n + k]).sum();
        }
    };
    let steps = steps.max(1);
    let dt = duration / steps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        rhs(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn snap(grid: &GridDomain, x: &[f64], what: &str) -> Result<(usize, f64)> {
    let p = grid
        .nearest_node(x)
        .ok_or_else(|| Error::InvalidInput(format!("{what} point lies outside the grid box")))?;
    let c = grid.coords(p);
    let e = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok((p, e))
}

/// Graph upper bound on `d(x, y)` and the realizing path.
pub fn cc_distance_graph(family: &VectorFieldFamily, grid: &GridDomain, x: &[f64], y: &[f64], directions: usize) -> Result<(f64, PathResult)> {
    let graph = MetricGraph::new(family, grid, directions)?;
    let (src, e1) = snap(grid, x, "start")?;
    let (dst, e2) = snap(grid, y, "end")?;
    let sp = graph.shortest_paths(src, Some(dst), f64::INFINITY);
    let Some(nodes) = sp.path_to(dst) else {
        let reached = sp.settled.iter().map(|&p| sp.dist[p]).fold(0.0, f64::max);
        return Err(Error::Unreachable { reached });
    };
    let path = graph.path_result(&nodes, e1.max(e2));
    Ok((sp.dist[dst], path))
}

/// Endpoint of `N` unit-time-fraction segments with controls `u` (row-major `N x m`).
fn shoot(family: &VectorFieldFamily, x0: &[f64], u: &[f64], segments: usize, sub: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = family.m();
    let mut x = x0.to_vec();
    let mut pts = vec![x.clone()];
    for i in 0..segments {
        x = integrate(family, &x, &u[i * m..(i + 1) * m], 1.0 / segments as f64, sub);
        pts.push(x.clone());
    }
    (x, pts)
}

/// Re-parameterizes `seed` as `segments` piecewise-constant controls on a common time
/// grid and minimizes the control energy under the endpoint constraint by damped
/// minimum-norm Gauss-Newton steps. The result is accepted only if its duration does
/// not exceed the seed's and the endpoint defect is within `tol`; otherwise the seed is
/// returned with `stalled` set.
pub fn cc_distance_refine(family: &VectorFieldFamily, seed: &PathResult, segments: usize, tol: f64) -> Result<PathResult> {
    let n = family.n();
    let m = family.m();
    if segments == 0 {
        return Err(Error::InvalidInput("need at least one segment".into()));
    }
    let (Some(x0), Some(target)) = (seed.waypoints.first(), seed.waypoints.last()) else {
        return Err(Error::InvalidInput("seed path has no waypoints".into()));
    };
    let stalled = || {
        let mut s = seed.clone();
        s.stalled = true;
        s
    };
    let total = seed.t;
    if !(total > 0.0) {
        return Ok(seed.clone());
    }
    let sub = 4;
    // resample the seed by arclength: u_i = T * (average unit control over slice i)
    let mut u = vec![0.0; segments * m];
    let bounds: Vec<f64> = std::iter::once(0.0)
        .chain(seed.durations.iter().scan(0.0, |acc, d| {
            *acc += d;
            Some(*acc)
        }))
        .collect();
    for i in 0..segments {
        let (a, b) = (total * i as f64 / segments as f64, total * (i + 1) as f64 / segments as f64);
        for (e, f) in seed.controls.iter().enumerate() {
            let overlap = (b.min(bounds[e + 1]) - a.max(bounds[e])).max(0.0);
            if overlap > 0.0 {
                for j in 0..m {
                    u[i * m + j] += f[j] * overlap * segments as f64;
                }
            }
        }
    }

    let energy = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>() / segments as f64;
    let endpoint_error = |u: &[f64]| -> Vec<f64> {
        let (end, _) = shoot(family, x0, u, segments, sub);
        end.iter().zip(target).map(|(a, b)| a - b).collect()
    };
    let scale = total.max(1e-12);
    let rho = 10.0 * scale;
    let merit = |u: &[f64], e: &[f64]| energy(u).sqrt() + rho * norm2(e) / scale;

    let mut e = endpoint_error(&u);
    let mut best: Option<Vec<f64>> = None;
    let nu = segments * m;
    for _ in 0..200 {
        // Jacobian by central differences
        let mut jac = vec![0.0; n * nu];
        for c in 0..nu {
            let d = 1e-6 * (1.0 + u[c].abs());
            let mut up = u.clone();
            up[c] += d;
            let ep = endpoint_error(&up);
            up[c] -= 2.0 * d;
            let em = endpoint_error(&up);
            for r in 0..n {
                jac[r * nu + c] = (ep[r] - em[r]) / (2.0 * d);
            }
        }
        // minimum-norm solution of J u_new = J u - e
        let mut jjt = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for r in 0..n {
            rhs[r] = (0..nu).map(|c| jac[r * nu + c] * u[c]).sum::<f64>() - e[r];
            for s in 0..n {
                jjt[r * n + s] = (0..nu).map(|c| jac[r * nu + c] * jac[s * nu + c]).sum();
            }
        }
        let tr: f64 = (0..n).map(|r| jjt[r * n + r]).sum();
        for r in 0..n {
            jjt[r * n + r] += 1e-14 * tr.max(1e-300);
        }
        let Some(y) = lu_solve(&jjt, &rhs, n) else { break };
        let target_u: Vec<f64> = (0..nu).map(|c| (0..n).map(|r| jac[r * nu + c] * y[r]).sum()).collect();
        let current = merit(&u, &e);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-4 {
            let cand: Vec<f64> = u.iter().zip(&target_u).map(|(a, b)| a + alpha * (b - a)).collect();
            let ec = endpoint_error(&cand);
            if merit(&cand, &ec) < current || norm2(&ec) < norm2(&e) * 0.5 {
                let change = cand.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                u = cand;
                e = ec;
                moved = change > 1e-12 * scale;
                break;
            }
            alpha *= 0.5;
        }
        if norm2(&e) <= tol {
            best = Some(u.clone());
            if !moved {
                break;
            }
        } else if !moved && alpha <= 1e-4 {
            break;
        }
    }
    let Some(u) = best else { return Ok(stalled()) };
    let speeds: Vec<f64> = (0..segments).map(|i| norm2(&u[i * m..(i + 1) * m])).collect();
    let t = speeds.iter().cloned().fold(0.0, f64::max);
    if !(t > 0.0) || t > seed.t + 1e-12 {
        return Ok(stalled());
    }
    // unit-ball controls on segments of duration t / N
    let controls: Vec<Vec<f64>> = (0..segments).map(|i| u[i * m..(i + 1) * m].iter().map(|v| v / t).collect()).collect();
    let dur = t / segments as f64;
    let mut x = x0.clone();
    let mut waypoints = vec![x.clone()];
    for f in &controls {
        x = integrate(family, &x, f, dur, sub);
        waypoints.push(x.clone());
    }
    let defect = x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if defect > tol {
        return Ok(stalled());
    }
    Ok(PathResult {
        t,
        waypoints,
        controls,
        durations: vec![dur; segments],
        defect,
        snap_error: seed.snap_error,
        stalled: false,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    pub volume: f64,
}

impl Ball {
    /// A ball given by an explicit node set (e.g. from another metric).
    pub fn from_nodes(grid: &GridDomain, center: usize, radius: f64, mut nodes: Vec<usize>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        let volume = grid.cell_volume() * nodes.len() as f64;
        Self {
            center,
            radius,
            nodes,
            volume,
        }
    }
}

fn ball_from_paths(grid: &GridDomain, sp: &ShortestPaths, radius: f64) -> Result<Ball> {
    let lim = radius * (1.0 + 1e-12);
    let nodes: Vec<usize> = sp.settled.iter().cloned().filter(|&p| sp.dist[p] <= lim).collect();
    if nodes.iter().any(|&p| grid.on_box_face(p)) {
        return Err(Error::BallClipped { radius });
    }
    Ok(Ball::from_nodes(grid, sp.source, radius, nodes))
}

/// Nodes with graph distance at most `radius` from `center`.
pub fn metric_ball(family: &VectorFieldFamily, grid: &GridDomain, center: &[f64], radius: f64) -> Result<Ball> {
    metric_ball_with(family, grid, center, radius, DEFAULT_DIRECTIONS)
}

pub fn metric_ball_with(family: &VectorFieldFamily, grid: &GridDomain, center: &[f64], radius: f64, directions: usize) -> Result<Ball> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput("radius must be non-negative".into()));
    }
    let graph = MetricGraph::new(family, grid, directions)?;
    let (c, _) = snap(grid, center, "center")?;
    let sp = graph.shortest_paths(c, None, radius * (1.0 + 1e-12));
    ball_from_paths(grid, &sp, radius)
}

#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    pub doubled_volumes: Vec<f64>,
    pub ratios: Vec<f64>,
    pub c1: f64,
}

/// `|B(2R)| / |B(R)|` for each radius from one Dijkstra run.
pub fn doubling_estimate(family: &VectorFieldFamily, grid: &GridDomain, center: &[f64], radii: &[f64], directions: usize) -> Result<DoublingReport> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let graph = MetricGraph::new(family, grid, directions)?;
    let (c, _) = snap(grid, center, "center")?;
    let sp = graph.shortest_paths(c, None, 2.0 * rmax * (1.0 + 1e-12));
    let mut volumes = Vec::new();
    let mut doubled = Vec::new();
    let mut ratios = Vec::new();
    for &r in radii {
        let b1 = ball_from_paths(grid, &sp, r)?;
        let b2 = ball_from_paths(grid, &sp, 2.0 * r)?;
        volumes.push(b1.volume);
        doubled.push(b2.volume);
        ratios.push(b2.volume / b1.volume);
    }
    let c1 = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(DoublingReport {
        radii: radii.to_vec(),
        volumes,
        doubled_volumes: doubled,
        ratios,
        c1,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    /// `None` where the function was skipped (zero horizontal gradient on the ball).
    pub ratios: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
    pub notes: Vec<String>,
    /// Largest ratio.
    pub c_est: f64,
}

fn gradient_norms(family: &VectorFieldFamily, grid: &GridDomain, ball: &Ball, u: &GridField) -> Result<Vec<f64>> {
    ball.nodes
        .iter()
        .map(|&p| {
            horizontal_gradient_at(family, grid, u.values(), p)
                .map(|g| norm2(&g))
                .ok_or(Error::BallClipped { radius: ball.radius })
        })
        .collect()
}

/// `int_B |u - u_B| / (R int_B |X u|)` per corpus function.
pub fn poincare_probe(family: &VectorFieldFamily, grid: &GridDomain, ball: &Ball, corpus: &[GridField]) -> Result<ProbeReport> {
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();
    for (i, u) in corpus.iter().enumerate() {
        let vals: Vec<f64> = ball.nodes.iter().map(|&p| u.value(p)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let num: f64 = vals.iter().map(|v| (v - mean).abs()).sum();
        let den: f64 = gradient_norms(family, grid, ball, u)?.iter().sum();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if den <= 1e-12 * scale * vals.len() as f64 {
            skipped.push(i);
            notes.push(format!("function {i}: zero horizontal gradient on the ball, skipped"));
            ratios.push(None);
            continue;
        }
        ratios.push(Some(num / (ball.radius * den)));
    }
    let c_est = ratios.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(ProbeReport {
        ratios,
        skipped,
        notes,
        c_est,
    })
}

/// `(avg_B |u|^q)^{1/q} / (R (avg_B |X u|^p)^{1/p})` per corpus function.
pub fn sobolev_probe(family: &VectorFieldFamily, grid: &GridDomain, ball: &Ball, corpus: &[GridField], q: f64, p: f64) -> Result<ProbeReport> {
    if !(p >= 1.0 && q > p) {
        return Err(Error::InvalidInput("need q > p >= 1".into()));
    }
    let w = grid.cell_volume();
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();
    for (i, u) in corpus.iter().enumerate() {
        let lhs = (ball.nodes.iter().map(|&n| u.value(n).abs().powf(q)).sum::<f64>() * w / ball.volume).powf(1.0 / q);
        let grads = gradient_norms(family, grid, ball, u)?;
        let rhs = (grads.iter().map(|g| g.powf(p)).sum::<f64>() * w / ball.volume).powf(1.0 / p);
        if !(rhs > 1e-14 * lhs.max(1e-300)) || rhs == 0.0 {
            skipped.push(i);
            notes.push(format!("function {i}: zero horizontal gradient on the ball, skipped"));
            ratios.push(None);
            continue;
        }
        ratios.push(Some(lhs / (ball.radius * rhs)));
    }
    let c_est = ratios.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(ProbeReport {
        ratios,
        skipped,
        notes,
        c_est,
    })
}

/// `count` random polynomials of total degree at most `degree` with coefficients in
/// `[-1, 1]`, without constant term.
pub fn polynomial_corpus(n: usize, count: usize, degree: u32, seed: u64) -> Vec<Polynomial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exps = Vec::new();
    let mut e = vec![0u32; n];
    loop {
        let d: u32 = e.iter().sum();
        if d >= 1 && d <= degree {
            exps.push(e.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                break;
            }
            e[k] += 1;
            if e[k] <= degree {
                break;
            }
            e[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    (0..count)
        .map(|_| {
            let terms = exps.iter().map(|ex| (rng.random_range(-1.0..1.0), ex.clone()));
            Polynomial::from_terms(n, terms).expect("valid terms")
        })
        .collect()
}

/// Grid centred at the origin with spacing `(h, h, h^2/2)` on which Heisenberg Euler
/// steps with integer controls land exactly on nodes.
pub fn heisenberg_lattice(half_xy: f64, t_range: (f64, f64), h: f64) -> Result<GridDomain> {
    let ht = h * h / 2.0;
    let lo_t = (t_range.0 / ht).floor() * ht;
    let hi_t = (t_range.1 / ht).ceil() * ht;
    let cells = (half_xy / h - 1e-9).ceil();
    let e = cells * h;
    GridDomain::build_with_spacing(&[-e, -e, lo_t], &[e, e, hi_t], &[h, h, ht])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn direction_counts() {
        assert_eq!(control_directions(2, 8).len(), 8);
        assert_eq!(control_directions(2, 32).len(), 32);
        assert_eq!(control_directions(3, 26).len(), 26);
    }

    #[test]
    fn euclidean_distance_and_refinement() {
        let fam = VectorFieldFamily::euclidean(2);
        let g = GridDomain::build(&[-0.5, -0.5], &[3.5, 4.5], 0.05).unwrap();
        let (d, path) = cc_distance_graph(&fam, &g, &[0.0, 0.0], &[3.0, 4.0], 32).unwrap();
        assert!((d - 5.0).abs() < 0.03 * 5.0, "{d}");
        assert!(path.defect < 1e-12);
        for f in &path.controls {
            assert!(norm2(f) <= 1.0 + 1e-9);
        }
        let r = cc_distance_refine(&fam, &path, 16, 1e-10).unwrap();
        assert!(!r.stalled && (r.t - 5.0).abs() < 1e-6 && r.t <= d + 1e-12);
    }

    #[test]
    fn staircase_refines_to_diagonal() {
        let fam = VectorFieldFamily::euclidean(2);
        let seed = PathResult {
            t: 2.0,
            waypoints: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            controls: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            durations: vec![1.0, 1.0],
            defect: 0.0,
            snap_error: 0.0,
            stalled: false,
        };
        let r = cc_distance_refine(&fam, &seed, 32, 1e-10).unwrap();
        assert!((r.t - 2f64.sqrt()).abs() < 0.005 * 2f64.sqrt());
    }

    #[test]
    fn heisenberg_planar_point() {
        let fam = VectorFieldFamily::heisenberg();
        let g = heisenberg_lattice(1.2, (-0.02, 0.02), 0.05).unwrap();
        let (d, path) = cc_distance_graph(&fam, &g, &[0.0; 3], &[1.0, 1.0, 0.0], 32).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 0.05 * 2f64.sqrt());
        assert!(path.defect < 1e-12);
    }

    #[test]
    fn heisenberg_vertical_refines_below_graph() {
        let fam = VectorFieldFamily::heisenberg();
        let tau = 0.1;
        let g = heisenberg_lattice(0.5, (-0.03, 0.13), 0.05).unwrap();
        let (d, path) = cc_distance_graph(&fam, &g, &[0.0; 3], &[0.0, 0.0, tau], 32).unwrap();
        let exact = (4.0 * PI * tau).sqrt();
        assert!(d >= exact - 1e-9);
        let r = cc_distance_refine(&fam, &path, 64, 1e-9).unwrap();
        assert!(!r.stalled);
        assert!(r.t < d && r.t >= exact * (1.0 - 1e-3), "{} {d} {exact}", r.t);
    }

    #[test]
    fn balls() {
        let fam = VectorFieldFamily::euclidean(2);
        let g = GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.01).unwrap();
        let b = metric_ball(&fam, &g, &[0.0, 0.0], 0.5).unwrap();
        assert!((b.volume - PI / 4.0).abs() < 0.05 * PI / 4.0);
        let b0 = metric_ball(&fam, &g, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(b0.nodes.len(), 1);
        assert!((b0.volume - 1e-4).abs() < 1e-15);
        assert!(matches!(metric_ball(&fam, &g, &[0.0, 0.0], 1.5), Err(Error::BallClipped { .. })));
    }

    #[test]
    fn doubling_in_euclidean_space() {
        let g = GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.01).unwrap();
        let r = doubling_estimate(&VectorFieldFamily::euclidean(2), &g, &[0.0, 0.0], &[0.2, 0.4], 32).unwrap();
        for x in &r.ratios {
            assert!((x - 4.0).abs() < 0.4);
        }
        let g = GridDomain::build(&[-1.0; 3], &[1.0; 3], 0.04).unwrap();
        let r = doubling_estimate(&VectorFieldFamily::euclidean(3), &g, &[0.0; 3], &[0.2, 0.4], 26).unwrap();
        for x in &r.ratios {
            assert!((x - 8.0).abs() < 0.8, "{x}");
        }
    }

    #[test]
    fn probes_skip_constants() {
        let fam = VectorFieldFamily::euclidean(2);
        let g = std::sync::Arc::new(GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.02).unwrap());
        let ball = metric_ball(&fam, &g, &[0.0, 0.0], 0.5).unwrap();
        let corpus = vec![GridField::constant(g.clone(), 2.0), GridField::from_fn(g.clone(), |x| x[0])];
        let r = poincare_probe(&fam, &g, &ball, &corpus).unwrap();
        assert_eq!(r.skipped, vec![0]);
        assert!(r.ratios[1].unwrap().is_finite());
        let s = sobolev_probe(&fam, &g, &ball, &[GridField::zeros(g.clone())], 4.0, 2.0).unwrap();
        assert_eq!(s.skipped, vec![0]);
    }

    #[test]
    fn poincare_euclidean_stable_under_refinement() {
        let fam = VectorFieldFamily::euclidean(2);
        let ratio = |h: f64| {
            let g = std::sync::Arc::new(GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], h).unwrap());
            let ball = metric_ball(&fam, &g, &[0.0, 0.0], 0.5).unwrap();
            let u = GridField::from_fn(g.clone(), |x| x[0]);
            poincare_probe(&fam, &g, &ball, &[u]).unwrap().c_est
        };
        let (a, b) = (ratio(0.02), ratio(0.01));
        assert!((a - b).abs() < 0.1 * b);
    }

    #[test]
    fn sobolev_matches_quadrature() {
        let fam = VectorFieldFamily::euclidean(2);
        let h = 0.0025;
        let rad: f64 = 0.5;
        let g = std::sync::Arc::new(GridDomain::build(&[-0.6, -0.6], &[0.6, 0.6], h).unwrap());
        let centre = g.nearest_node(&[0.0, 0.0]).unwrap();
        let disk: Vec<usize> = (0..g.node_count()).filter(|&p| norm2(&g.coords(p)) <= rad).collect();
        let ball = Ball::from_nodes(&g, centre, rad, disk);
        let bump = |r2: f64| if r2 < rad * rad { (1.0 - r2 / (rad * rad)).powi(3) } else { 0.0 };
        let u = GridField::from_fn(g.clone(), |x| bump(x[0] * x[0] + x[1] * x[1]));
        let r = sobolev_probe(&fam, &g, &ball, &[u], 4.0, 2.0).unwrap().ratios[0].unwrap();
        // radial quadrature of the analytic integrands over the exact disk
        let nq = 200_000;
        let (mut iq, mut ig) = (0.0, 0.0);
        for i in 0..nq {
            let s = (i as f64 + 0.5) / nq as f64 * rad;
            let w = 2.0 * PI * s * rad / nq as f64;
            let b = 1.0 - s * s / (rad * rad);
            iq += w * b.powi(12);
            let d = 6.0 * s / (rad * rad) * b * b;
            ig += w * d * d;
        }
        let area = PI * rad * rad;
        let oracle = (iq / area).powf(0.25) / (rad * (ig / area).sqrt());
        assert!((r - oracle).abs() < 1e-3 * oracle, "{r} vs {oracle}");
    }

    #[test]
    fn corpus_is_seeded() {
        let a = polynomial_corpus(3, 5, 2, 7);
        let b = polynomial_corpus(3, 5, 2, 7);
        assert_eq!(a, b);
        assert_eq!(a[0].terms().len(), 9);
        assert!(a.iter().all(|p| p.degree() <= 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn metric_axioms_on_heisenberg_lattice(
            a in proptest::collection::vec(-6i64..=6, 3),
            b in proptest::collection::vec(-6i64..=6, 3),
            c in proptest::collection::vec(-6i64..=6, 3),
        ) {
            let fam = VectorFieldFamily::heisenberg();
            let h = 0.05;
            let g = heisenberg_lattice(0.9, (-0.08, 0.08), h).unwrap();
            let pt = |v: &[i64]| vec![v[0] as f64 * h, v[1] as f64 * h, v[2] as f64 * 8.0 * h * h / 2.0];
            let (x, y, z) = (pt(&a), pt(&b), pt(&c));
            let graph = MetricGraph::new(&fam, &g, 32).unwrap();
            let node = |p: &[f64]| g.nearest_node(p).unwrap();
            let (px, py, pz) = (node(&x), node(&y), node(&z));
            let from_x = graph.shortest_paths(px, None, f64::INFINITY);
            let from_y = graph.shortest_paths(py, None, f64::INFINITY);
            let (dxy, dyx) = (from_x.dist[py], from_y.dist[px]);
            prop_assert!((dxy - dyx).abs() <= 1e-9);
            prop_assert!(from_x.dist[pz] <= dxy + from_y.dist[pz] + 1e-9);
            let eu = norm2(&x.iter().zip(&y).map(|(p, q)| p - q).collect::<Vec<_>>());
            prop_assert!(dxy >= 0.5 * eu);
        }

        #[test]
        fn balls_are_nested(r1 in 0.05f64..0.3, dr in 0.01f64..0.2) {
            let fam = VectorFieldFamily::grushin();
            let g = GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.05).unwrap();
            let b1 = metric_ball(&fam, &g, &[0.2, 0.0], r1).unwrap();
            let b2 = metric_ball(&fam, &g, &[0.2, 0.0], r1 + dr).unwrap();
            prop_assert!(b1.nodes.iter().all(|p| b2.nodes.binary_search(p).is_ok()));
        }

        #[test]
        fn refinement_never_lengthens(x in -0.6f64..0.6, y in -0.6f64..0.6) {
            let fam = VectorFieldFamily::grushin();
            let g = GridDomain::build(&[-1.0, -1.0], &[1.0, 1.0], 0.05).unwrap();
            let (_, seed) = cc_distance_graph(&fam, &g, &[0.3, -0.2], &[x, y], 32).unwrap();
            let r = cc_distance_refine(&fam, &seed, 16, 1e-9).unwrap();
            prop_assert!(r.t <= seed.t + 1e-12);
        }
    }
}
