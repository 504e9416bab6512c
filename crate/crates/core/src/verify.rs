//! Executable verification suites with per-case margins and reproducible digests.
//!
//! Every case is described by a [`CaseConfig`] that records the family, grid and all
//! inputs; its digest is the SHA-256 of the config's canonical JSON, and
//! [`run_case`] on the same config reproduces the case bit-for-bit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigen::{principal_eigenpair, weighted_principal};
use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::fields::{FamilyFileSpec, VectorFieldFamily};
use crate::mesh::{GridDomain, GridField};
use crate::operators::{assemble_stiffness, diagonal_operator, mass_matrix};
use crate::semilinear::{comparison_check, exhaustion_construct, logistic_solve_with, yamabe_solve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStatus {
    Pass,
    Fail,
    /// Inputs outside the statement's hypotheses (reported, not counted as failures).
    Inadmissible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", deny_unknown_fields)]
pub enum CaseConfig {
    #[serde(rename = "thm1.2")]
    PositiveSupersolution {
        family: FamilyFileSpec,
        lo: Vec<f64>,
        hi: Vec<f64>,
        h: f64,
        u: String,
        sub_lo: Vec<f64>,
        sub_hi: Vec<f64>,
        /// Height of the bump subtracted from `V` in the strict variant.
        bump: f64,
        tol: f64,
    },
    #[serde(rename = "thm1.3")]
    Exhaustion {
        family: FamilyFileSpec,
        g: String,
        g_plus: String,
        mu: f64,
        lambda: f64,
        boxes: Vec<(Vec<f64>, Vec<f64>)>,
        h: f64,
        tol: f64,
    },
    #[serde(rename = "prop4.2")]
    Logistic {
        family: FamilyFileSpec,
        lo: Vec<f64>,
        hi: Vec<f64>,
        h: f64,
        a: String,
        b: String,
        p: f64,
        factor: f64,
        tol: f64,
    },
    #[serde(rename = "thm1.4")]
    Yamabe {
        family: FamilyFileSpec,
        lo: Vec<f64>,
        hi: Vec<f64>,
        h: f64,
        f: String,
        theta: f64,
        eps: f64,
        p: f64,
        tol: f64,
    },
}

impl CaseConfig {
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("case config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub digest: String,
    pub config: CaseConfig,
    pub margin: f64,
    pub pass: bool,
    pub status: CaseStatus,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub theorem: String,
    pub seed: u64,
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub failed: usize,
    pub inadmissible: usize,
    pub total: usize,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(theorem: &str, seed: u64, cases: Vec<CaseResult>, notes: Vec<String>) -> Self {
        let count = |s| cases.iter().filter(|c| c.status == s).count();
        Self {
            theorem: theorem.to_string(),
            seed,
            passed: count(CaseStatus::Pass),
            failed: count(CaseStatus::Fail),
            inadmissible: count(CaseStatus::Inadmissible),
            total: cases.len(),
            cases,
            notes,
        }
    }

    /// No case failed (inadmissible cases are informative only).
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn min_margin(&self) -> f64 {
        self.cases
            .iter()
            .filter(|c| c.status != CaseStatus::Inadmissible)
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn finish(config: CaseConfig, margin: f64, status: Option<CaseStatus>, notes: Vec<String>) -> CaseResult {
    let status = status.unwrap_or(if margin > 0.0 { CaseStatus::Pass } else { CaseStatus::Fail });
    CaseResult {
        digest: config.digest(),
        config,
        margin,
        pass: status == CaseStatus::Pass,
        status,
        notes,
    }
}

fn box_grid(lo: &[f64], hi: &[f64], h: f64) -> Result<Arc<GridDomain>> {
    Ok(Arc::new(GridDomain::build(lo, hi, h)?))
}

fn sample(expr: &str, grid: &Arc<GridDomain>) -> Result<GridField> {
    Ok(ScalarExpr::parse(expr, grid.dim())?.sample(grid))
}

/// Runs one case from its full description.
pub fn run_case(config: &CaseConfig) -> Result<CaseResult> {
    match config {
        CaseConfig::PositiveSupersolution { .. } => run_positive_supersolution(config),
        CaseConfig::Exhaustion { .. } => run_exhaustion(config),
        CaseConfig::Logistic { .. } => run_logistic(config),
        CaseConfig::Yamabe { .. } => run_yamabe(config),
    }
}

fn run_positive_supersolution(config: &CaseConfig) -> Result<CaseResult> {
    let CaseConfig::PositiveSupersolution {
        family,
        lo,
        hi,
        h,
        u,
        sub_lo,
        sub_hi,
        bump,
        tol,
    } = config
    else {
        unreachable!()
    };
    let family = VectorFieldFamily::from_file_spec(family)?;
    let grid = box_grid(lo, hi, *h)?;
    let ufield = sample(u, &grid)?;
    if ufield.values().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(format!("{u:?} is not positive on the box")));
    }
    let k = assemble_stiffness(&family, &grid)?;
    let ku = k.apply_field(&ufield);
    let w = grid.cell_volume();
    let ui = ufield.interior_values();
    // V := (K u) / (M u), so that the discrete H u - V u vanishes
    let v: Vec<f64> = ku.iter().zip(&ui).map(|(a, b)| a / (w * b)).collect();

    let sub = box_grid(sub_lo, sub_hi, *h)?;
    let mut vsub = Vec::with_capacity(sub.interior_count());
    let mut bumps = Vec::with_capacity(sub.interior_count());
    let (c, r): (Vec<f64>, Vec<f64>) = sub_lo
        .iter()
        .zip(sub_hi)
        .map(|(a, b)| (0.5 * (a + b), 0.5 * (b - a)))
        .unzip();
    for &p in sub.interior_nodes() {
        let x = sub.coords(p);
        let q = grid
            .nearest_node(&x)
            .and_then(|q| grid.interior_position(q))
            .ok_or_else(|| Error::InvalidInput("subdomain interior leaves the box interior".into()))?;
        vsub.push(v[q]);
        let s: f64 = x.iter().zip(&c).zip(&r).map(|((x, c), r)| ((x - c) / r).powi(2)).sum();
        bumps.push(if s < 1.0 { (1.0 - s).powi(2) } else { 0.0 });
    }
    let ksub = assemble_stiffness(&family, &sub)?;
    let msub = mass_matrix(&sub);
    let vop = diagonal_operator(&sub, &vsub.iter().map(|x| w * x).collect::<Vec<_>>());
    let eq = principal_eigenpair(&ksub, &vop, &msub, *tol)?;
    let strict_v: Vec<f64> = vsub.iter().zip(&bumps).map(|(v, b)| w * (v - bump * b)).collect();
    let strict = principal_eigenpair(&ksub, &diagonal_operator(&sub, &strict_v), &msub, *tol)?;
    let allowance = 10.0 * h;
    let margin = (eq.lambda + allowance).min(strict.lambda + allowance);
    let notes = vec![
        format!("lambda1 = {:.10e}", eq.lambda),
        format!("lambda1 with V - bump = {:.10e}", strict.lambda),
        format!("allowance = {allowance:e}"),
    ];
    Ok(finish(config.clone(), margin, None, notes))
}

fn run_exhaustion(config: &CaseConfig) -> Result<CaseResult> {
    let CaseConfig::Exhaustion {
        family,
        g,
        g_plus,
        mu,
        lambda,
        boxes,
        h,
        tol,
    } = config
    else {
        unreachable!()
    };
    let family = VectorFieldFamily::from_file_spec(family)?;
    let n = family.n();
    let gexpr = ScalarExpr::parse(g, n)?;
    ScalarExpr::parse(g_plus, n)?;
    if !(*lambda > 0.0 && *lambda <= *mu) {
        let notes = vec![format!("lambda = {lambda} outside (0, mu] with mu = {mu}")];
        return Ok(finish(config.clone(), 0.0, Some(CaseStatus::Inadmissible), notes));
    }
    let grids = boxes
        .iter()
        .map(|(lo, hi)| box_grid(lo, hi, *h))
        .collect::<Result<Vec<_>>>()?;
    match exhaustion_construct(&family, |x| gexpr.eval(x), *lambda, &grids, *tol) {
        Ok(res) => {
            let min_value = res
                .fields
                .iter()
                .map(|f| f.min_interior())
                .fold(f64::INFINITY, f64::min);
            let positivity = if res.positive.iter().all(|&p| p) { min_value } else { -min_value.abs().max(1e-300) };
            let decrease = res
                .differences
                .windows(2)
                .map(|w| if w[0] > 0.0 { (w[0] - w[1]) / w[0] } else { -1.0 })
                .fold(1.0, f64::min);
            let notes = vec![
                format!("principal shifts {:?}", res.principal_shift),
                format!("differences {:?}", res.differences),
                format!("minimum normalized value {min_value:.6e}"),
            ];
            Ok(finish(config.clone(), positivity.min(decrease), None, notes))
        }
        Err(Error::Resonance { box_index, shift }) => {
            let notes = vec![format!(
                "lambda is a Dirichlet eigenvalue of box {box_index} (principal shift {shift:.3e})"
            )];
            Ok(finish(config.clone(), -1.0, Some(CaseStatus::Fail), notes))
        }
        Err(e) => Err(e),
    }
}

fn run_logistic(config: &CaseConfig) -> Result<CaseResult> {
    let CaseConfig::Logistic {
        family,
        lo,
        hi,
        h,
        a,
        b,
        p,
        factor,
        tol,
    } = config
    else {
        unreachable!()
    };
    let family = VectorFieldFamily::from_file_spec(family)?;
    let grid = box_grid(lo, hi, *h)?;
    let (af, bf) = (sample(a, &grid)?, sample(b, &grid)?);
    if af.min_interior() <= 0.0 || bf.min_interior() <= 0.0 {
        return Err(Error::InvalidInput("a and b must be positive".into()));
    }
    let k = assemble_stiffness(&family, &grid)?;
    let w = grid.cell_volume();
    let gdiag = diagonal_operator(&grid, &af.interior_values().iter().map(|x| w * x).collect::<Vec<_>>());
    let mu1 = weighted_principal(&k, &gdiag, 1e-10)?.lambda;
    let mu = factor * mu1;
    let first = logistic_solve_with(&k, &af, &bf, mu, *p, *tol, 1.0)?;
    let mut notes = vec![format!("mu1 = {mu1:.10e}"), format!("mu = {mu:.10e}")];
    let umax = first.solution.max_interior();
    if *factor <= 1.0 {
        let zero = first.subcritical && first.solution.values().iter().all(|v| *v == 0.0);
        notes.push(format!("subcritical = {}", first.subcritical));
        return Ok(finish(config.clone(), if zero { 1.0 } else { -1.0 }, None, notes));
    }
    let second = logistic_solve_with(&k, &af, &bf, mu, *p, *tol, 2.0)?;
    let diff = first
        .solution
        .values()
        .iter()
        .zip(second.solution.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let agreement = diff / umax.max(1e-300);
    let cmp = comparison_check(
        &k,
        &first.upper,
        &first.solution,
        &af.map(|x| mu * x),
        &bf.map(|x| mu * x),
        *p,
    )?;
    let umin = first.solution.min_interior();
    notes.push(format!("max u = {umax:.10e}"));
    notes.push(format!("two-bracket agreement = {agreement:.3e}"));
    notes.push(format!("residual = {:.3e}", first.residual));
    notes.push(format!("comparison with upper solution: pass = {}", cmp.pass));
    let slacks = [
        umin / umax.max(1e-300),
        (1e-6 - agreement) / 1e-6,
        (tol - first.residual) / tol,
        if first.bracket_respected && cmp.pass { 1.0 } else { -1.0 },
    ];
    let margin = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(finish(config.clone(), margin, None, notes))
}

fn run_yamabe(config: &CaseConfig) -> Result<CaseResult> {
    let CaseConfig::Yamabe {
        family,
        lo,
        hi,
        h,
        f,
        theta,
        eps,
        p,
        tol,
    } = config
    else {
        unreachable!()
    };
    let family = VectorFieldFamily::from_file_spec(family)?;
    let grid = box_grid(lo, hi, *h)?;
    let ff = sample(f, &grid)?;
    if ff.values().iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("f must be non-negative".into()));
    }
    let k = assemble_stiffness(&family, &grid)?;
    let kf = ff.map(|x| theta * x);
    match yamabe_solve(&k, &kf, &kf, *p, &ff, *theta, *eps, *tol) {
        Ok(res) => {
            let u = &res.bracket.solution;
            let umin = u.min_interior();
            let notes = vec![
                format!("residual = {:.3e}", res.bracket.residual),
                format!("iterations = {}", res.bracket.iterations),
                format!("V range [{:.6e}, {:.6e}]", res.lower.min, res.lower.max),
                format!("W range [{:.6e}, {:.6e}]", res.upper.min, res.upper.max),
                format!("U range [{umin:.6e}, {:.6e}]", u.max_interior()),
            ];
            let slacks = [
                (tol - res.bracket.residual) / tol,
                umin / eps,
                if res.ordered && res.boundary_exact && res.bracket.bracket_respected { 1.0 } else { -1.0 },
            ];
            let margin = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(finish(config.clone(), margin, None, notes))
        }
        Err(Error::BracketConstruction(msg)) => {
            let notes = vec![msg];
            Ok(finish(config.clone(), 0.0, Some(CaseStatus::Inadmissible), notes))
        }
        Err(e) => Err(e),
    }
}

/// Random node-aligned sub-box with every side at least a quarter of the box side
/// (and at least four cells).
fn random_subbox(grid: &GridDomain, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let h = grid.h();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for k in 0..grid.dim() {
        let cells = grid.dims()[k] - 1;
        let min_w = (cells / 4).max(4).min(cells);
        let width = rng.random_range(min_w..=cells);
        let start = rng.random_range(0..=cells - width);
        lo.push(grid.origin()[k] + start as f64 * h);
        hi.push(grid.origin()[k] + (start + width) as f64 * h);
    }
    (lo, hi)
}

/// Positive supersolution criterion: with `V := K u / M u` every random subdomain has
/// `lambda_1 > -10 h`.
pub fn verify_thm_1_2(
    family: &VectorFieldFamily,
    lo: &[f64],
    hi: &[f64],
    h: f64,
    u_expr: &str,
    n_subdomains: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let grid = box_grid(lo, hi, h)?;
    let u = sample(u_expr, &grid)?;
    if u.values().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(format!("{u_expr:?} is not positive on the box")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = family.to_file_spec();
    let cases = (0..n_subdomains)
        .map(|_| {
            let (sub_lo, sub_hi) = random_subbox(&grid, &mut rng);
            run_case(&CaseConfig::PositiveSupersolution {
                family: spec.clone(),
                lo: lo.to_vec(),
                hi: hi.to_vec(),
                h,
                u: u_expr.to_string(),
                sub_lo,
                sub_hi,
                bump: 1.0,
                tol: 1e-8,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = VerificationReport::new("thm1.2", seed, cases, Vec::new());
    report.notes.push(format!("minimum margin {:.6e}", report.min_margin()));
    Ok(report)
}

/// Exhaustion criterion for `lambda in (0, mu]`. When `mu` is not supplied it is the
/// principal value of `(K, g_plus)` on the largest box doubled about the origin, so
/// that `lambda = mu` stays below every box's own principal value.
#[allow(clippy::too_many_arguments)]
pub fn verify_thm_1_3(
    family: &VectorFieldFamily,
    g: &str,
    g_plus: &str,
    mu: Option<f64>,
    lambda_samples: &[f64],
    boxes: &[(Vec<f64>, Vec<f64>)],
    h: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let (lo, hi) = boxes
        .last()
        .ok_or_else(|| Error::InvalidInput("no boxes given".into()))?;
    let n = family.n();
    let largest = box_grid(lo, hi, h)?;
    let (ge, gp) = (ScalarExpr::parse(g, n)?, ScalarExpr::parse(g_plus, n)?);
    for p in 0..largest.node_count() {
        let x = largest.coords(p);
        if ge.eval(&x) > gp.eval(&x) + 1e-12 {
            return Err(Error::InvalidInput(format!("g > g_plus at {x:?}")));
        }
    }
    let mut notes = Vec::new();
    let mu = match mu {
        Some(m) => m,
        None => {
            let (lo2, hi2): (Vec<f64>, Vec<f64>) = lo.iter().zip(hi).map(|(a, b)| (2.0 * a, 2.0 * b)).unzip();
            let big = box_grid(&lo2, &hi2, h)?;
            let k = assemble_stiffness(family, &big)?;
            let gv = gp.sample(&big).interior_values();
            let w = big.cell_volume();
            let gdiag = diagonal_operator(&big, &gv.iter().map(|x| w * x).collect::<Vec<_>>());
            let m = weighted_principal(&k, &gdiag, 1e-10)?.lambda;
            notes.push(format!("mu = {m:.10e} from g_plus on the doubled largest box"));
            m
        }
    };
    let spec = family.to_file_spec();
    let cases = lambda_samples
        .iter()
        .map(|&lambda| {
            run_case(&CaseConfig::Exhaustion {
                family: spec.clone(),
                g: g.to_string(),
                g_plus: g_plus.to_string(),
                mu,
                lambda,
                boxes: boxes.to_vec(),
                h,
                tol: 1e-9,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport::new("thm1.3", seed, cases, notes))
}

/// Logistic threshold: `c <= 1` gives the zero solution, `c > 1` a positive one that
/// two brackets agree on.
#[allow(clippy::too_many_arguments)]
pub fn verify_prop_4_2(
    family: &VectorFieldFamily,
    lo: &[f64],
    hi: &[f64],
    h: f64,
    a: &str,
    b: &str,
    p: f64,
    factors: &[f64],
    seed: u64,
) -> Result<VerificationReport> {
    let spec = family.to_file_spec();
    let cases = factors
        .iter()
        .map(|&factor| {
            run_case(&CaseConfig::Logistic {
                family: spec.clone(),
                lo: lo.to_vec(),
                hi: hi.to_vec(),
                h,
                a: a.to_string(),
                b: b.to_string(),
                p,
                factor,
                tol: 1e-9,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport::new("prop4.2", seed, cases, Vec::new()))
}

/// Yamabe-type family `U_eps` on a truncated box with `k = K = theta f`.
#[allow(clippy::too_many_arguments)]
pub fn verify_thm_1_4(
    family: &VectorFieldFamily,
    lo: &[f64],
    hi: &[f64],
    h: f64,
    f: &str,
    thetas: &[f64],
    epss: &[f64],
    p: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let spec = family.to_file_spec();
    let mut cases = Vec::new();
    for &theta in thetas {
        for &eps in epss {
            cases.push(run_case(&CaseConfig::Yamabe {
                family: spec.clone(),
                lo: lo.to_vec(),
                hi: hi.to_vec(),
                h,
                f: f.to_string(),
                theta,
                eps,
                p,
                tol: 1e-9,
            })?);
        }
    }
    Ok(VerificationReport::new("thm1.4", seed, cases, Vec::new()))
}

/// Max-norm change of the Yamabe solution on `inner` between the solves on `box_a` and
/// the larger `box_b`, relative to its max norm there.
#[allow(clippy::too_many_arguments)]
pub fn truncation_change(
    family: &VectorFieldFamily,
    f: &str,
    theta: f64,
    eps: f64,
    p: f64,
    h: f64,
    box_a: (&[f64], &[f64]),
    box_b: (&[f64], &[f64]),
    inner: (&[f64], &[f64]),
) -> Result<f64> {
    let solve = |lo: &[f64], hi: &[f64]| -> Result<GridField> {
        let grid = box_grid(lo, hi, h)?;
        let ff = sample(f, &grid)?;
        let k = assemble_stiffness(family, &grid)?;
        let kf = ff.map(|x| theta * x);
        Ok(yamabe_solve(&k, &kf, &kf, p, &ff, theta, eps, 1e-9)?.bracket.solution)
    };
    let ua = solve(box_a.0, box_a.1)?;
    let ub = solve(box_b.0, box_b.1)?;
    let (ga, gb) = (ua.grid().clone(), ub.grid().clone());
    let mut diff = 0.0f64;
    let mut size = 0.0f64;
    for p in 0..ga.node_count() {
        let x = ga.coords(p);
        let inside = x
            .iter()
            .zip(inner.0.iter().zip(inner.1))
            .all(|(x, (l, u))| *x >= l - 1e-12 && *x <= u + 1e-12);
        if !inside {
            continue;
        }
        let q = gb
            .nearest_node(&x)
            .ok_or_else(|| Error::InvalidInput("inner box not contained in the larger box".into()))?;
        diff = diff.max((ua.value(p) - ub.value(q)).abs());
        size = size.max(ub.value(q).abs());
    }
    Ok(diff / size.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_u_gives_dirichlet_eigenvalues() {
        let fam = VectorFieldFamily::euclidean(2);
        let r = verify_thm_1_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, "1", 4, 3).unwrap();
        assert_eq!(r.passed, 4);
        for c in &r.cases {
            assert!(c.margin > 10.0 / 16.0);
        }
    }

    #[test]
    fn reports_are_deterministic_and_replayable() {
        let fam = VectorFieldFamily::euclidean(2);
        let a = verify_thm_1_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, "exp(x+y)", 3, 9).unwrap();
        let b = verify_thm_1_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, "exp(x+y)", 3, 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = verify_thm_1_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, "exp(x+y)", 3, 10).unwrap();
        assert_ne!(a.to_json(), c.to_json());
        let replay = run_case(&a.cases[1].config).unwrap();
        assert_eq!(replay.digest, a.cases[1].digest);
        assert!((replay.margin - a.cases[1].margin).abs() <= 1e-12);
        let back: VerificationReport = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back.cases[0].config.digest(), a.cases[0].digest);
    }

    #[test]
    fn nonpositive_u_rejected() {
        let fam = VectorFieldFamily::euclidean(2);
        assert!(verify_thm_1_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 0.125, "x - 0.5", 2, 1).is_err());
    }

    #[test]
    fn zero_theta_is_trivial() {
        let fam = VectorFieldFamily::euclidean(2);
        let r = verify_thm_1_4(&fam, &[-1.0, -1.0], &[1.0, 1.0], 0.125, "exp(-(x^2+y^2))", &[0.0], &[0.35, 0.45], 3.0, 0).unwrap();
        assert_eq!(r.passed, 2, "{}", r.to_json());
    }

    #[test]
    fn lambda_outside_range_is_inadmissible() {
        let fam = VectorFieldFamily::euclidean(2);
        let boxes = vec![(vec![-1.0, -1.0], vec![1.0, 1.0]), (vec![-1.5, -1.5], vec![1.5, 1.5])];
        let r = verify_thm_1_3(&fam, "1", "1", Some(1.0), &[0.0, 2.0, 0.25], &boxes, 0.125, 0).unwrap();
        assert_eq!(r.inadmissible, 2);
        assert_eq!(r.cases[2].status, CaseStatus::Pass, "{}", r.to_json());
    }

    #[test]
    fn logistic_threshold() {
        let fam = VectorFieldFamily::euclidean(2);
        let r = verify_prop_4_2(&fam, &[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0, "1", "1", 2.0, &[0.5, 2.0], 0).unwrap();
        assert_eq!(r.passed, 2, "{}", r.to_json());
    }
}
