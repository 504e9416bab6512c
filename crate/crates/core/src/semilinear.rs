//! Semilinear Dirichlet problems `H u = F(x, u)` solved by monotone iteration between
//! a sub- and a supersolution; the logistic and Yamabe-type specializations, Poisson
//! bracketing, the comparison check and the exhaustion construction on growing boxes.
//!
//! Discretely `H u = F` reads `K u = M F(u)` on interior nodes, with the boundary
//! values entering through the coupling block of `K`.

use std::sync::Arc;

use serde::Serialize;

use crate::eigen::{principal_eigenpair, weighted_principal};
use crate::error::{Error, Result};
use crate::linalg::{minres, norm2, norm_inf, pcg};
use crate::mesh::{GridDomain, GridField, NodeClass};
use crate::operators::{assemble_diagonal, diagonal_operator, mass_matrix, SparseOperator};

/// Relative tolerance of the plain linear solve.
pub const LINEAR_TOL: f64 = 1e-10;
/// Inner tolerance inside the monotone scheme; tighter so that round-off cannot show up
/// as a spurious increase between iterates.
const INNER_TOL: f64 = 1e-13;
const INNER_MAX: usize = 50_000;
pub const MONOTONE_MAX_ITER: usize = 1000;

/// Reaction terms with per-interior-node coefficients.
#[derive(Clone, Debug)]
pub enum Reaction {
    /// `mu u (a - b |u|^{p-1})`
    Logistic { a: Vec<f64>, b: Vec<f64>, mu: f64, p: f64 },
    /// `-k u + K |u|^{p-1} u`, the residual form of `H u + k u - K |u|^{p-1} u = 0`.
    Yamabe { k: Vec<f64>, big_k: Vec<f64>, p: f64 },
    /// `f(x)`
    Source(Vec<f64>),
    /// `sum_i c_i(x) u^i`
    Polynomial(Vec<Vec<f64>>),
}

impl Reaction {
    #[inline]
    pub fn eval(&self, i: usize, u: f64) -> f64 {
        match self {
            Reaction::Logistic { a, b, mu, p } => mu * u * (a[i] - b[i] * u.abs().powf(p - 1.0)),
            Reaction::Yamabe { k, big_k, p } => -k[i] * u + big_k[i] * u.abs().powf(p - 1.0) * u,
            Reaction::Source(f) => f[i],
            Reaction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ci| acc * u + ci[i]),
        }
    }

    /// `dF/du`.
    #[inline]
    pub fn derivative(&self, i: usize, u: f64) -> f64 {
        match self {
            Reaction::Logistic { a, b, mu, p } => mu * (a[i] - p * b[i] * u.abs().powf(p - 1.0)),
            Reaction::Yamabe { k, big_k, p } => -k[i] + p * big_k[i] * u.abs().powf(p - 1.0),
            Reaction::Source(_) => 0.0,
            Reaction::Polynomial(c) => {
                let mut acc = 0.0;
                for (d, ci) in c.iter().enumerate().skip(1).rev() {
                    acc = acc * u + d as f64 * ci[i];
                }
                acc
            }
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Reaction::Logistic { a, b, .. } => (a.len() == b.len()).then_some(a.len()),
            Reaction::Yamabe { k, big_k, .. } => (k.len() == big_k.len()).then_some(k.len()),
            Reaction::Source(f) => Some(f.len()),
            Reaction::Polynomial(c) => {
                let n = c.first().map_or(0, |v| v.len());
                c.iter().all(|v| v.len() == n).then_some(n)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SemilinearProblem {
    pub stiffness: SparseOperator,
    pub reaction: Reaction,
    /// Dirichlet data: values on the non-interior nodes are used.
    pub boundary: GridField,
    /// Declared bound on `|dF/du|` over the working bracket.
    pub lipschitz: f64,
}

impl SemilinearProblem {
    pub fn new(stiffness: SparseOperator, reaction: Reaction, boundary: GridField, lipschitz: f64) -> Result<Self> {
        let n = stiffness.size();
        if reaction.len() != Some(n) && !matches!(&reaction, Reaction::Polynomial(c) if c.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: reaction.len().unwrap_or(0),
            });
        }
        if boundary.grid().node_count() != stiffness.grid().node_count() {
            return Err(Error::DimensionMismatch {
                expected: stiffness.grid().node_count(),
                got: boundary.grid().node_count(),
            });
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidInput("Lipschitz bound must be non-negative".into()));
        }
        Ok(Self {
            stiffness,
            reaction,
            boundary,
            lipschitz,
        })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        self.stiffness.grid()
    }

    /// `M F(., u)` on interior nodes.
    fn mass_reaction(&self, u: &[f64]) -> Vec<f64> {
        let w = self.grid().cell_volume();
        u.iter().enumerate().map(|(i, &x)| w * self.reaction.eval(i, x)).collect()
    }

    /// `K u - M F(u)` where `u` carries its own boundary values.
    pub fn residual_vector(&self, u: &GridField) -> Vec<f64> {
        let ku = self.stiffness.apply_field(u);
        let mf = self.mass_reaction(&u.interior_values());
        ku.iter().zip(&mf).map(|(a, b)| a - b).collect()
    }

    /// `||K u - M F(u)|| / ||u||` on interior nodes.
    pub fn relative_residual(&self, u: &GridField) -> f64 {
        let r = norm2(&self.residual_vector(u));
        let un = norm2(&u.interior_values());
        if un == 0.0 {
            r
        } else {
            r / un
        }
    }

    /// Samples `|dF/du|` at `samples` deterministic (node, value) pairs between the
    /// bracket values and checks them against the declared bound.
    pub fn validate_lipschitz(&self, lower: &[f64], upper: &[f64], samples: usize) -> Result<f64> {
        let n = lower.len();
        if n == 0 {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        // nodes visited with a large odd stride, values on a golden-ratio sequence
        for s in 0..samples.max(n.min(samples * 4)) {
            let node = (s * 7919) % n;
            let t = (s as f64 * 0.618_033_988_749_894_9).fract();
            let u = lower[node] + t * (upper[node] - lower[node]);
            worst = worst.max(self.reaction.derivative(node, u).abs());
        }
        for node in [0, n - 1] {
            for u in [lower[node], upper[node]] {
                worst = worst.max(self.reaction.derivative(node, u).abs());
            }
        }
        if worst > self.lipschitz * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidInput(format!(
                "declared Lipschitz bound {} is below sampled |dF/du| = {worst}",
                self.lipschitz
            )));
        }
        Ok(worst)
    }
}

/// Subsolution slack `1e-8 ||K||_inf ||u||_inf`.
pub fn subsolution_slack(k: &SparseOperator, u: &GridField) -> f64 {
    1e-8 * k.norm_inf() * norm_inf(u.values())
}

/// Solves `(K + c M) u = M rhs` on interior nodes with the Dirichlet data of `boundary`.
pub fn linear_solve(k: &SparseOperator, c: f64, rhs: &GridField, boundary: &GridField) -> Result<GridField> {
    let w = k.grid().cell_volume();
    let b: Vec<f64> = rhs.interior_values().iter().map(|v| w * v).collect();
    let mut x = vec![0.0; k.size()];
    shifted_solve(k, c, &b, boundary, &mut x, LINEAR_TOL)?;
    Ok(with_boundary(boundary, &x))
}

/// `(K + c M) x = b - K_b g` by PCG; `x` is the warm start.
fn shifted_solve(k: &SparseOperator, c: f64, b: &[f64], boundary: &GridField, x: &mut [f64], tol: f64) -> Result<()> {
    if !(c >= 0.0) {
        return Err(Error::InvalidInput("shift must be non-negative".into()));
    }
    let cw = c * k.grid().cell_volume();
    let kb = k.boundary_term(boundary);
    let rhs: Vec<f64> = b.iter().zip(&kb).map(|(a, g)| a - g).collect();
    let diag: Vec<f64> = k.diagonal().iter().map(|d| d + cw).collect();
    pcg(
        |v, y| {
            k.apply(v, y);
            for i in 0..v.len() {
                y[i] += cw * v[i];
            }
        },
        &diag,
        &rhs,
        x,
        tol,
        INNER_MAX,
    )?;
    Ok(())
}

fn with_boundary(boundary: &GridField, interior: &[f64]) -> GridField {
    let grid = boundary.grid();
    let mut values = boundary.values().to_vec();
    for (i, &p) in grid.interior_nodes().iter().enumerate() {
        values[p] = interior[i];
    }
    GridField::new(grid.clone(), values).expect("sizes match")
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketSolveResult {
    #[serde(skip)]
    pub solution: GridField,
    #[serde(skip)]
    pub lower: GridField,
    #[serde(skip)]
    pub upper: GridField,
    pub residual: f64,
    pub iterations: usize,
    pub bracket_respected: bool,
    /// Every iterate was nodewise below its predecessor up to `monotone_slack`.
    pub monotone: bool,
    /// Largest nodewise increase between consecutive iterates (0 when descending).
    pub max_increase: f64,
    pub monotone_slack: f64,
    pub lower_is_subsolution: bool,
    pub upper_is_supersolution: bool,
    /// Worst violation of `K lower <= M F(lower)` (positive means violated).
    pub lower_defect: f64,
    pub upper_defect: f64,
    /// Set by the logistic solver when `mu <= mu_1` and the zero solution is returned.
    pub subcritical: bool,
    /// Relative residual after each iteration.
    pub history: Vec<f64>,
}

/// Largest value of `K u - M F(u)` (sub) or `M F(u) - K u` (super) over interior nodes.
fn inequality_defect(problem: &SemilinearProblem, u: &GridField, sub: bool) -> f64 {
    let r = problem.residual_vector(u);
    r.iter()
        .map(|&x| if sub { x } else { -x })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Monotone iteration `(K + cM) u_{k+1} = M (c u_k + F(u_k))` starting from `upper`.
pub fn monotone_iterate(problem: &SemilinearProblem, lower: &GridField, upper: &GridField, tol: f64) -> Result<BracketSolveResult> {
    let grid = problem.grid().clone();
    let n = grid.interior_count();
    let lo = lower.interior_values();
    let hi = upper.interior_values();
    if lower.grid().node_count() != grid.node_count() || upper.grid().node_count() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.node_count(),
            got: lower.grid().node_count(),
        });
    }
    if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
        return Err(Error::BracketViolation {
            node: grid.interior_nodes()[i],
            step: 0,
            detail: "lower exceeds upper".into(),
        });
    }
    problem.validate_lipschitz(&lo, &hi, 1000)?;

    let k = &problem.stiffness;
    let lower_defect = inequality_defect(problem, lower, true);
    let upper_defect = inequality_defect(problem, upper, false);
    let lower_ok = lower_defect <= subsolution_slack(k, lower) + 1e-300
        && boundary_order(&grid, lower, &problem.boundary, true);
    let upper_ok = upper_defect <= subsolution_slack(k, upper) + 1e-300
        && boundary_order(&grid, upper, &problem.boundary, false);

    let c = problem.lipschitz;
    let w = grid.cell_volume();
    let scale = norm_inf(&hi).max(norm_inf(&lo)).max(norm_inf(problem.boundary.values()));
    let slack = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut u = hi.clone();
    let mut max_increase = 0.0f64;
    let mut monotone = true;
    let mut history = Vec::new();
    let mut next = u.clone();
    for step in 1..=MONOTONE_MAX_ITER {
        let b: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, &x)| w * (c * x + problem.reaction.eval(i, x)))
            .collect();
        shifted_solve(k, c, &b, &problem.boundary, &mut next, INNER_TOL)?;
        for i in 0..n {
            let inc = next[i] - u[i];
            if inc > max_increase {
                max_increase = inc;
            }
            if inc > slack {
                monotone = false;
            }
            if next[i] < lo[i] - slack || next[i] > hi[i] + slack {
                return Err(Error::BracketViolation {
                    node: grid.interior_nodes()[i],
                    step,
                    detail: format!(
                        "iterate {:.6e} outside [{:.6e}, {:.6e}]",
                        next[i], lo[i], hi[i]
                    ),
                });
            }
        }
        u.copy_from_slice(&next);
        let field = with_boundary(&problem.boundary, &u);
        let res = problem.relative_residual(&field);
        history.push(res);
        if res <= tol {
            return Ok(BracketSolveResult {
                solution: field,
                lower: lower.clone(),
                upper: upper.clone(),
                residual: res,
                iterations: step,
                bracket_respected: true,
                monotone,
                max_increase,
                monotone_slack: slack,
                lower_is_subsolution: lower_ok,
                upper_is_supersolution: upper_ok,
                lower_defect,
                upper_defect,
                subcritical: false,
                history,
            });
        }
    }
    Err(Error::MonotoneNotConverged {
        iterations: MONOTONE_MAX_ITER,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// `lower <= g` (or `upper >= g`) on boundary nodes.
fn boundary_order(grid: &GridDomain, u: &GridField, g: &GridField, is_lower: bool) -> bool {
    let tol = 1e-12 * norm_inf(g.values()).max(1.0);
    (0..grid.node_count())
        .filter(|&p| grid.class(p) == NodeClass::Boundary)
        .all(|p| {
            if is_lower {
                u.value(p) <= g.value(p) + tol
            } else {
                u.value(p) >= g.value(p) - tol
            }
        })
}

/// Logistic problem `H u = mu u (a - b u^{p-1})`, `u = 0` on the boundary.
pub fn logistic_solve(k: &SparseOperator, a: &GridField, b: &GridField, mu: f64, p: f64, tol: f64) -> Result<BracketSolveResult> {
    logistic_solve_with(k, a, b, mu, p, tol, 1.0)
}

/// As [`logistic_solve`] with the constant supersolution scaled by `upper_factor >= 1`.
pub fn logistic_solve_with(
    k: &SparseOperator,
    a: &GridField,
    b: &GridField,
    mu: f64,
    p: f64,
    tol: f64,
    upper_factor: f64,
) -> Result<BracketSolveResult> {
    let grid = k.grid().clone();
    if !(p > 1.0) {
        return Err(Error::InvalidInput("logistic exponent must exceed 1".into()));
    }
    if !(upper_factor >= 1.0) {
        return Err(Error::InvalidInput("upper factor must be at least 1".into()));
    }
    let av = a.interior_values();
    let bv = b.interior_values();
    if av.iter().chain(&bv).any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput("logistic coefficients a, b must be positive".into()));
    }
    let zero = GridField::zeros(grid.clone());
    let ga = assemble_diagonal(a, &grid)?;
    let principal = weighted_principal(k, &ga, tol.min(1e-8))?;
    let mu1 = principal.lambda;
    let reaction = Reaction::Logistic {
        a: av.clone(),
        b: bv.clone(),
        mu,
        p,
    };
    let big_m = av
        .iter()
        .zip(&bv)
        .map(|(x, y)| (x / y).powf(1.0 / (p - 1.0)))
        .fold(0.0, f64::max);
    let top = upper_factor * big_m;
    let lipschitz = mu.abs()
        * av.iter()
            .zip(&bv)
            .map(|(x, y)| x + p * y * top.powf(p - 1.0))
            .fold(0.0, f64::max);
    let problem = SemilinearProblem::new(k.clone(), reaction, zero.clone(), lipschitz)?;

    if mu <= mu1 {
        let res = problem.relative_residual(&zero);
        return Ok(BracketSolveResult {
            solution: zero.clone(),
            lower: zero.clone(),
            upper: GridField::constant(grid.clone(), top),
            residual: res,
            iterations: 0,
            bracket_respected: true,
            monotone: true,
            max_increase: 0.0,
            monotone_slack: 0.0,
            lower_is_subsolution: true,
            upper_is_supersolution: true,
            lower_defect: 0.0,
            upper_defect: 0.0,
            subcritical: true,
            history: Vec::new(),
        });
    }

    let phi = principal.eigenfield.interior_values();
    let pmax = phi.iter().cloned().fold(0.0, f64::max);
    let phi: Vec<f64> = phi.iter().map(|v| v / pmax).collect();
    let upper = GridField::constant(grid.clone(), top);
    let mut eps = 1.0;
    let mut lower = None;
    for _ in 0..80 {
        let cand = GridField::from_interior(grid.clone(), &phi.iter().map(|v| eps * v).collect::<Vec<_>>(), 0.0);
        let fits = cand.values().iter().all(|&v| v <= top);
        if fits && inequality_defect(&problem, &cand, true) <= subsolution_slack(k, &cand) {
            lower = Some(cand);
            break;
        }
        eps *= 0.5;
    }
    let lower = lower.ok_or_else(|| Error::BracketConstruction("no dyadic multiple of the principal eigenfunction is a subsolution".into()))?;
    monotone_iterate(&problem, &lower, &upper, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// `-K u1 + M(a u1 - b u1^p) <= 0` within slack.
    pub u1_super: bool,
    pub u1_worst_node: Option<usize>,
    pub u1_worst: f64,
    /// `-K u2 + M(a u2 - b u2^p) >= 0` within slack.
    pub u2_sub: bool,
    pub u2_worst_node: Option<usize>,
    pub u2_worst: f64,
    /// `u2 <= u1` on boundary nodes.
    pub boundary: bool,
    pub boundary_worst_node: Option<usize>,
    /// `u2 <= u1` on interior nodes.
    pub conclusion: bool,
    pub conclusion_worst_node: Option<usize>,
    pub conclusion_worst: f64,
    pub hypotheses_hold: bool,
    pub pass: bool,
}

/// Discrete comparison for `-H u + a u - b u^p`: checks both inequalities, the boundary
/// order and then `u2 <= u1`. For the logistic equation pass `mu a` and `mu b`.
pub fn comparison_check(k: &SparseOperator, u1: &GridField, u2: &GridField, a: &GridField, b: &GridField, p: f64) -> Result<ComparisonReport> {
    let grid = k.grid().clone();
    let w = grid.cell_volume();
    let (av, bv) = (a.interior_values(), b.interior_values());
    let form = |u: &GridField| -> Vec<f64> {
        let ku = k.apply_field(u);
        u.interior_values()
            .iter()
            .enumerate()
            .map(|(i, &x)| -ku[i] + w * (av[i] * x - bv[i] * x.abs().powf(p)))
            .collect()
    };
    let worst = |vals: &[f64], sign: f64| -> (Option<usize>, f64) {
        let mut best = (None, f64::NEG_INFINITY);
        for (i, &v) in vals.iter().enumerate() {
            if sign * v > best.1 {
                best = (Some(grid.interior_nodes()[i]), sign * v);
            }
        }
        best
    };
    let f1 = form(u1);
    let f2 = form(u2);
    let (n1, w1) = worst(&f1, 1.0);
    let (n2, w2) = worst(&f2, -1.0);
    let u1_super = w1 <= subsolution_slack(k, u1);
    let u2_sub = w2 <= subsolution_slack(k, u2);
    let scale = norm_inf(u1.values()).max(norm_inf(u2.values())).max(1e-300);
    let tol = 1e-9 * scale;
    let mut bworst = (None, f64::NEG_INFINITY);
    let mut cworst = (None, f64::NEG_INFINITY);
    for p in 0..grid.node_count() {
        let d = u2.value(p) - u1.value(p);
        match grid.class(p) {
            NodeClass::Boundary if d > bworst.1 => bworst = (Some(p), d),
            NodeClass::Interior if d > cworst.1 => cworst = (Some(p), d),
            _ => {}
        }
    }
    let boundary = bworst.1 <= tol;
    let conclusion = cworst.1 <= tol;
    let hypotheses_hold = u1_super && u2_sub && boundary;
    Ok(ComparisonReport {
        u1_super,
        u1_worst_node: n1,
        u1_worst: w1,
        u2_sub,
        u2_worst_node: n2,
        u2_worst: w2,
        boundary,
        boundary_worst_node: bworst.0,
        conclusion,
        conclusion_worst_node: cworst.0,
        conclusion_worst: cworst.1,
        hypotheses_hold,
        pass: hypotheses_hold && conclusion,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonResult {
    #[serde(skip)]
    pub field: GridField,
    pub min: f64,
    pub max: f64,
    /// `0 < U <= eps` for sign -1, `eps <= U < 1` for sign +1.
    pub bounds_ok: bool,
    pub sign: i32,
    pub c: f64,
    pub eps: f64,
}

/// Solves `K U = sign C M f` with `U = eps` on the boundary and checks the bounds of the
/// far-field bracket.
pub fn poisson_solve(k: &SparseOperator, f: &GridField, c: f64, sign: i32, eps: f64) -> Result<PoissonResult> {
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidInput("sign must be +1 or -1".into()));
    }
    if !(c >= 0.0) {
        return Err(Error::InvalidInput("C must be non-negative".into()));
    }
    if !(eps > 1.0 / 3.0 && eps < 0.5) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside (1/3, 1/2)")));
    }
    let fv = f.interior_values();
    if fv.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("f must be non-negative".into()));
    }
    let grid = k.grid().clone();
    let rhs = GridField::from_interior(grid.clone(), &fv.iter().map(|x| sign as f64 * c * x).collect::<Vec<_>>(), 0.0);
    let boundary = GridField::constant(grid.clone(), eps);
    let field = linear_solve(k, 0.0, &rhs, &boundary)?;
    let iv = field.interior_values();
    let min = iv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = iv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // the bounds are checked up to the accuracy of the linear solve
    let tol = 10.0 * LINEAR_TOL * eps;
    let bounds_ok = if sign < 0 {
        min > 0.0 && max <= eps + tol
    } else {
        min >= eps - tol && max < 1.0
    };
    Ok(PoissonResult {
        field,
        min: min.min(eps),
        max: max.max(eps),
        bounds_ok,
        sign,
        c,
        eps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct YamabeResult {
    pub bracket: BracketSolveResult,
    pub lower: PoissonResult,
    pub upper: PoissonResult,
    pub c: f64,
    /// `V <= U <= W` nodewise.
    pub ordered: bool,
    /// Every boundary node carries exactly `eps`.
    pub boundary_exact: bool,
}

/// Yamabe-type problem `H u + k u - K |u|^{p-1} u = 0`, `u -> eps` at the box boundary,
/// bracketed by the Poisson solutions with `C = 2 theta`.
#[allow(clippy::too_many_arguments)]
pub fn yamabe_solve(
    k: &SparseOperator,
    kf: &GridField,
    big_k: &GridField,
    p: f64,
    f: &GridField,
    theta: f64,
    eps: f64,
    tol: f64,
) -> Result<YamabeResult> {
    if !(p > 1.0) {
        return Err(Error::InvalidInput("exponent must exceed 1".into()));
    }
    if !(theta >= 0.0) {
        return Err(Error::InvalidInput("theta must be non-negative".into()));
    }
    let grid = k.grid().clone();
    let (kv, bk, fv) = (kf.interior_values(), big_k.interior_values(), f.interior_values());
    for i in 0..kv.len() {
        let bound = theta * fv[i] * (1.0 + 1e-12) + 1e-300;
        if kv[i].abs() > bound || bk[i].abs() > bound {
            return Err(Error::InvalidInput(format!(
                "|k| or |K| exceeds theta f at node {}",
                grid.interior_nodes()[i]
            )));
        }
    }
    let c = 2.0 * theta;
    let lower = poisson_solve(k, f, c, -1, eps)?;
    let upper = poisson_solve(k, f, c, 1, eps)?;
    if !lower.bounds_ok {
        return Err(Error::BracketConstruction(format!(
            "theta too large for box: lower Poisson solution leaves (0, eps], range [{:.6e}, {:.6e}]",
            lower.min, lower.max
        )));
    }
    if !upper.bounds_ok {
        return Err(Error::BracketConstruction(format!(
            "theta too large for box: upper Poisson solution leaves [eps, 1), range [{:.6e}, {:.6e}]",
            upper.min, upper.max
        )));
    }
    let wmax = upper.max;
    let lipschitz = kv
        .iter()
        .zip(&bk)
        .map(|(a, b)| a.abs() + p * b.abs() * wmax.powf(p - 1.0))
        .fold(0.0, f64::max);
    let reaction = Reaction::Yamabe {
        k: kv,
        big_k: bk,
        p,
    };
    let boundary = GridField::constant(grid.clone(), eps);
    let problem = SemilinearProblem::new(k.clone(), reaction, boundary, lipschitz)?;
    let sub = inequality_defect(&problem, &lower.field, true);
    if sub > subsolution_slack(k, &lower.field) {
        return Err(Error::BracketConstruction(format!(
            "H V + k V - K V^p <= 0 fails by {sub:.3e}"
        )));
    }
    let sup = inequality_defect(&problem, &upper.field, false);
    if sup > subsolution_slack(k, &upper.field) {
        return Err(Error::BracketConstruction(format!(
            "H W + k W - K W^p >= 0 fails by {sup:.3e}"
        )));
    }
    let bracket = monotone_iterate(&problem, &lower.field, &upper.field, tol)?;
    let u = &bracket.solution;
    let slack = bracket.monotone_slack;
    let ordered = (0..grid.node_count()).all(|p| {
        grid.class(p) == NodeClass::Exterior
            || (lower.field.value(p) <= u.value(p) + slack && u.value(p) <= upper.field.value(p) + slack)
    });
    let boundary_exact = grid.boundary_nodes().iter().all(|&p| u.value(p) == eps);
    Ok(YamabeResult {
        bracket,
        lower,
        upper,
        c,
        ordered,
        boundary_exact,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionResult {
    #[serde(skip)]
    pub fields: Vec<GridField>,
    /// Principal value of `K - lambda G` on each box (positive: no resonance).
    pub principal_shift: Vec<f64>,
    pub positive: Vec<bool>,
    /// `u_k(0)` before normalization.
    pub center_values: Vec<f64>,
    /// Max difference of consecutive normalized solutions on the smallest box.
    pub differences: Vec<f64>,
    pub differences_decreasing: bool,
}

/// Solves `H u = lambda g u` on each box `D_k` with `u = k` (1-based index) on the
/// boundary and normalizes `u_k(0) = 1`.
pub fn exhaustion_construct<G>(
    family: &crate::fields::VectorFieldFamily,
    g: G,
    lambda: f64,
    boxes: &[Arc<GridDomain>],
    tol: f64,
) -> Result<ExhaustionResult>
where
    G: Fn(&[f64]) -> f64,
{
    if boxes.is_empty() {
        return Err(Error::InvalidInput("no boxes given".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let mut fields = Vec::new();
    let mut shifts = Vec::new();
    let mut positive = Vec::new();
    let mut centers = Vec::new();
    for (idx, grid) in boxes.iter().enumerate() {
        let origin = vec![0.0; grid.dim()];
        let centre = grid
            .nearest_node(&origin)
            .filter(|&p| grid.coords(p).iter().all(|c| c.abs() <= 1e-9 * grid.h()))
            .filter(|&p| grid.class(p) == NodeClass::Interior)
            .ok_or_else(|| Error::InvalidInput(format!("origin is not an interior node of box {idx}")))?;
        let k = crate::operators::assemble_stiffness(family, grid)?;
        let m = mass_matrix(grid);
        let gfield = GridField::from_fn(grid.clone(), &g);
        let gv = gfield.interior_values();
        let w = grid.cell_volume();
        let vdiag: Vec<f64> = gv.iter().map(|x| lambda * w * x).collect();
        let v = diagonal_operator(grid, &vdiag);
        let tau = principal_eigenpair(&k, &v, &m, tol.min(1e-8))?.lambda;
        let gmax = norm_inf(&gv);
        if tau.abs() <= 1e-7 * (1.0 + lambda * gmax) {
            return Err(Error::Resonance { box_index: idx, shift: tau });
        }
        shifts.push(tau);
        let kval = (idx + 1) as f64;
        let boundary = GridField::constant(grid.clone(), kval);
        let kb = k.boundary_term(&boundary);
        let rhs: Vec<f64> = kb.iter().map(|x| -x).collect();
        let op = |x: &[f64], y: &mut [f64]| {
            k.apply(x, y);
            for i in 0..x.len() {
                y[i] -= vdiag[i] * x[i];
            }
        };
        let mut x = vec![kval; k.size()];
        let solved = if tau > 0.0 {
            let diag: Vec<f64> = k.diagonal().iter().zip(&vdiag).map(|(a, b)| a - b).collect();
            pcg(op, &diag, &rhs, &mut x, LINEAR_TOL, INNER_MAX)
        } else {
            minres(op, &rhs, &mut x, LINEAR_TOL, INNER_MAX)
        };
        if solved.is_err() {
            return Err(Error::Resonance { box_index: idx, shift: tau });
        }
        let u = with_boundary(&boundary, &x);
        positive.push(x.iter().all(|&v| v > 0.0));
        let c = u.value(centre);
        centers.push(c);
        fields.push(if c != 0.0 { u.map(|v| v / c) } else { u });
    }

    // differences on the smallest box, matched by coordinates
    let small = &boxes[0];
    let mut differences = Vec::new();
    for pair in fields.windows(2) {
        let mut d = 0.0f64;
        for &p in small.interior_nodes() {
            let x = small.coords(p);
            let mut vals = [0.0; 2];
            for (slot, f) in vals.iter_mut().zip(pair) {
                let q = f
                    .grid()
                    .nearest_node(&x)
                    .filter(|&q| f.grid().coords(q).iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9 * small.h()))
                    .ok_or(Error::NotNested { index: 0, next: 1 })?;
                *slot = f.value(q);
            }
            d = d.max((vals[1] - vals[0]).abs());
        }
        differences.push(d);
    }
    let differences_decreasing = differences.windows(2).all(|w| w[1] <= w[0]);
    Ok(ExhaustionResult {
        fields,
        principal_shift: shifts,
        positive,
        center_values: centers,
        differences,
        differences_decreasing,
    })
}
