use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use hormander::ccmetric::{self, MetricGraph};
use hormander::eigen::{epsilon_path, principal_eigenpair_with, weighted_principal, EigenOptions};
use hormander::operators::{assemble_stiffness, diagonal_operator, mass_matrix};
use hormander::semilinear::{logistic_solve_with, yamabe_solve};
use hormander::verify;
use hormander::{GridDomain, GridField, VectorFieldFamily};

use crate::config::{config_err, expr, RunConfig};
use crate::plot::{emit_plot, SliceSpec};

#[derive(Clone, Copy, Debug)]
pub enum Command {
    FieldsInfo,
    Eigen,
    EpsPath,
    Logistic,
    Yamabe,
    Distance,
    Ball,
    Poincare,
    Sobolev,
    Doubling,
    Verify(Suite),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    #[value(name = "thm1.2", alias = "supersolution")]
    Thm12,
    #[value(name = "thm1.3", alias = "exhaustion")]
    Thm13,
    #[value(name = "prop4.2", alias = "logistic")]
    Prop42,
    #[value(name = "thm1.4", alias = "yamabe")]
    Thm14,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::FieldsInfo => "fields info".into(),
            Command::Eigen => "eigen".into(),
            Command::EpsPath => "epspath".into(),
            Command::Logistic => "solve logistic".into(),
            Command::Yamabe => "solve yamabe".into(),
            Command::Distance => "distance".into(),
            Command::Ball => "ball".into(),
            Command::Poincare => "probe poincare".into(),
            Command::Sobolev => "probe sobolev".into(),
            Command::Doubling => "probe doubling".into(),
            Command::Verify(s) => {
                let v = clap::ValueEnum::to_possible_value(s).expect("named");
                format!("verify {}", v.get_name())
            }
        }
    }
}

pub struct RunContext {
    pub config: RunConfig,
    pub out: PathBuf,
    pub plot: bool,
}

pub struct Outcome {
    pub result: Value,
    pub pass: bool,
}

fn ok(result: Value) -> Result<Outcome> {
    Ok(Outcome { result, pass: true })
}

fn solver_err(e: hormander::Error) -> anyhow::Error {
    anyhow::Error::new(e).context("solver error")
}

/// Errors from the numerical layer are part of the run's result, not config errors.
fn solver<T>(r: hormander::Result<T>) -> Result<T> {
    r.map_err(solver_err)
}

fn write_field(ctx: &RunContext, name: &str, field: &GridField) -> Result<()> {
    let path = ctx.out.join(format!("{name}.csv"));
    let w = BufWriter::new(File::create(&path).with_context(|| path.display().to_string())?);
    field.write_csv(w)?;
    if ctx.plot {
        let spec = match &ctx.config.plot {
            Some(p) => SliceSpec {
                axes: p.axes,
                at: p.at.clone(),
                cell_px: p.cell_px,
            },
            None => SliceSpec::default(),
        };
        if field.grid().dim() >= 2 {
            std::fs::write(ctx.out.join(format!("{name}.svg")), emit_plot(field, &spec)?)?;
        }
    }
    Ok(())
}

fn check_point(x: &[f64], n: usize, what: &str) -> Result<()> {
    if x.len() != n {
        return Err(config_err(format!("{what} needs {n} coordinates")));
    }
    Ok(())
}

fn potential(src: &str, grid: &Arc<GridDomain>) -> Result<hormander::SparseOperator> {
    let v = expr(src, grid.dim())?.sample(grid).interior_values();
    let w = grid.cell_volume();
    Ok(diagonal_operator(grid, &v.iter().map(|x| w * x).collect::<Vec<_>>()))
}

pub fn run(cmd: Command, ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let family = cfg.family()?;
    let n = family.n();
    match cmd {
        Command::FieldsInfo => fields_info(cfg, &family),
        Command::Eigen => {
            let grid = cfg.grid(n)?;
            let v = potential(cfg.eigen.as_ref().map_or("0", |e| e.potential.as_str()), &grid)?;
            let k = solver(assemble_stiffness(&family, &grid))?;
            let opts = EigenOptions {
                tol: cfg.tolerances.eigen,
                ..EigenOptions::default()
            };
            let res = solver(principal_eigenpair_with(&k, &v, &mass_matrix(&grid), &opts))?;
            write_field(ctx, "eigenfield", &res.eigenfield)?;
            ok(json!({ "eigen": res, "interior_nodes": grid.interior_count() }))
        }
        Command::EpsPath => {
            let sec = RunConfig::section(&cfg.epspath, "epspath")?;
            let grid = cfg.grid(n)?;
            let v = potential(&sec.potential, &grid)?;
            let path = solver(epsilon_path(&family, &grid, &v, &sec.eps, cfg.tolerances.eigen))?;
            ok(json!({ "path": path }))
        }
        Command::Logistic => {
            let sec = RunConfig::section(&cfg.logistic, "logistic")?;
            let grid = cfg.grid(n)?;
            let a = expr(&sec.a, n)?.sample(&grid);
            let b = expr(&sec.b, n)?.sample(&grid);
            let k = solver(assemble_stiffness(&family, &grid))?;
            let w = grid.cell_volume();
            let gdiag = diagonal_operator(&grid, &a.interior_values().iter().map(|x| w * x).collect::<Vec<_>>());
            let mu1 = solver(weighted_principal(&k, &gdiag, 1e-10))?.lambda;
            let mu = sec.mu_factor * mu1;
            let res = solver(logistic_solve_with(&k, &a, &b, mu, sec.p, cfg.tolerances.semilinear, sec.upper_factor))?;
            write_field(ctx, "solution", &res.solution)?;
            ok(json!({ "mu1": mu1, "mu": mu, "solve": res }))
        }
        Command::Yamabe => {
            let sec = RunConfig::section(&cfg.yamabe, "yamabe")?;
            let grid = cfg.grid(n)?;
            let f = expr(&sec.f, n)?.sample(&grid);
            let default = f.map(|x| sec.theta * x);
            let kf = match &sec.k {
                Some(s) => expr(s, n)?.sample(&grid),
                None => default.clone(),
            };
            let big_k = match &sec.big_k {
                Some(s) => expr(s, n)?.sample(&grid),
                None => default,
            };
            let k = solver(assemble_stiffness(&family, &grid))?;
            let res = solver(yamabe_solve(&k, &kf, &big_k, sec.p, &f, sec.theta, sec.eps, cfg.tolerances.semilinear))?;
            write_field(ctx, "solution", &res.bracket.solution)?;
            write_field(ctx, "lower", &res.lower.field)?;
            write_field(ctx, "upper", &res.upper.field)?;
            ok(json!({ "solve": res }))
        }
        Command::Distance => {
            let sec = RunConfig::section(&cfg.distance, "distance")?;
            check_point(&sec.from, n, "distance.from")?;
            check_point(&sec.to, n, "distance.to")?;
            let grid = cfg.grid(n)?;
            let (d, path) = solver(ccmetric::cc_distance_graph(&family, &grid, &sec.from, &sec.to, sec.directions))?;
            let refined = if sec.refine {
                Some(solver(ccmetric::cc_distance_refine(&family, &path, sec.segments, cfg.tolerances.refine))?)
            } else {
                None
            };
            let best = refined.as_ref().unwrap_or(&path);
            let file = ctx.out.join("path.csv");
            best.write_csv(BufWriter::new(File::create(&file)?))?;
            ok(json!({
                "graph_distance": d,
                "distance": best.t,
                "graph_path": { "T": path.t, "segments": path.durations.len(), "defect": path.defect, "snap_error": path.snap_error },
                "refined": refined.as_ref().map(|r| json!({ "T": r.t, "defect": r.defect, "stalled": r.stalled })),
            }))
        }
        Command::Ball => {
            let sec = RunConfig::section(&cfg.ball, "ball")?;
            check_point(&sec.center, n, "ball.center")?;
            let grid = cfg.grid(n)?;
            let ball = solver(ccmetric::metric_ball_with(&family, &grid, &sec.center, sec.radius, sec.directions))?;
            let mut ind = vec![0.0; grid.node_count()];
            for &p in &ball.nodes {
                ind[p] = 1.0;
            }
            write_field(ctx, "ball", &GridField::new(grid.clone(), ind)?)?;
            ok(json!({ "radius": ball.radius, "volume": ball.volume, "nodes": ball.nodes.len() }))
        }
        Command::Doubling => {
            let sec = RunConfig::section(&cfg.probe, "probe")?;
            check_point(&sec.center, n, "probe.center")?;
            let grid = cfg.grid(n)?;
            let rep = solver(ccmetric::doubling_estimate(&family, &grid, &sec.center, &sec.radii, sec.directions))?;
            let slope = (sec.radii.len() >= 2).then(|| ccmetric::log_log_slope(&sec.radii, &rep.volumes));
            ok(json!({ "doubling": rep, "volume_slope": slope }))
        }
        Command::Poincare | Command::Sobolev => {
            let sec = RunConfig::section(&cfg.probe, "probe")?;
            check_point(&sec.center, n, "probe.center")?;
            let grid = cfg.grid(n)?;
            let corpus: Vec<GridField> = if sec.functions.is_empty() {
                ccmetric::polynomial_corpus(n, sec.corpus_size, sec.degree, cfg.seed)
                    .iter()
                    .map(|p| GridField::from_fn(grid.clone(), |x| p.eval(x)))
                    .collect()
            } else {
                sec.functions
                    .iter()
                    .map(|s| expr(s, n).map(|e| e.sample(&grid)))
                    .collect::<Result<_>>()?
            };
            let graph = solver(MetricGraph::new(&family, &grid, sec.directions))?;
            let centre = grid
                .nearest_node(&sec.center)
                .ok_or_else(|| config_err("probe.center outside the grid"))?;
            let rmax = sec.radii.iter().cloned().fold(0.0, f64::max);
            let sp = graph.shortest_paths(centre, None, rmax * (1.0 + 1e-12));
            let mut per_radius = Vec::new();
            for &r in &sec.radii {
                let nodes = sp.settled.iter().cloned().filter(|&p| sp.dist[p] <= r * (1.0 + 1e-12)).collect::<Vec<_>>();
                if nodes.iter().any(|&p| grid.on_box_face(p)) {
                    return Err(solver_err(hormander::Error::BallClipped { radius: r }));
                }
                let ball = ccmetric::Ball::from_nodes(&grid, centre, r, nodes);
                let rep = if matches!(cmd, Command::Poincare) {
                    solver(ccmetric::poincare_probe(&family, &grid, &ball, &corpus))?
                } else {
                    solver(ccmetric::sobolev_probe(&family, &grid, &ball, &corpus, sec.q, sec.p))?
                };
                per_radius.push(json!({ "radius": r, "volume": ball.volume, "probe": rep }));
            }
            ok(json!({ "corpus_seed": cfg.seed, "corpus_size": corpus.len(), "radii": per_radius }))
        }
        Command::Verify(suite) => verify_suite(suite, cfg, &family),
    }
}

fn fields_info(cfg: &RunConfig, family: &VectorFieldFamily) -> Result<Outcome> {
    let sec = cfg.fields.clone().unwrap_or_default();
    let max_step = if sec.max_step == 0 { 4 } else { sec.max_step };
    let mut points = sec.points.clone();
    if points.is_empty() {
        points.push(vec![0.0; family.n()]);
    }
    let mut ranks = Vec::new();
    for x in &points {
        check_point(x, family.n(), "fields.points entry")?;
        let r = solver(family.hormander_rank(x, max_step))?;
        ranks.push(json!({ "point": x, "rank": r.rank, "step": r.step }));
    }
    let brackets: Vec<usize> = family.brackets_by_length(max_step).iter().map(|b| b.len()).collect();
    ok(json!({
        "name": family.name(),
        "n": family.n(),
        "m": family.m(),
        "brackets_per_length": brackets,
        "rank": ranks,
        "family": family.to_file_spec(),
    }))
}

fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| config_err(format!("verify.{key} is required for this suite")))
}

fn verify_suite(suite: Suite, cfg: &RunConfig, family: &VectorFieldFamily) -> Result<Outcome> {
    let sec = RunConfig::section(&cfg.verify, "verify")?;
    let seed = cfg.seed;
    let report = match suite {
        Suite::Thm12 => {
            let g = cfg.grid_spec()?;
            solver(verify::verify_thm_1_2(family, &g.lo, &g.hi, g.h, required(&sec.u, "u")?, sec.subdomains, seed))?
        }
        Suite::Thm13 => {
            let g = cfg.grid_spec()?;
            if sec.boxes.is_empty() {
                return Err(config_err("verify.boxes must list the nested boxes"));
            }
            let boxes: Vec<(Vec<f64>, Vec<f64>)> = sec.boxes.iter().map(|b| (b.lo.clone(), b.hi.clone())).collect();
            solver(verify::verify_thm_1_3(
                family,
                required(&sec.g, "g")?,
                required(&sec.g_plus, "g_plus")?,
                sec.mu,
                &sec.lambdas,
                &boxes,
                g.h,
                seed,
            ))?
        }
        Suite::Prop42 => {
            let g = cfg.grid_spec()?;
            solver(verify::verify_prop_4_2(
                family,
                &g.lo,
                &g.hi,
                g.h,
                required(&sec.a, "a")?,
                required(&sec.b, "b")?,
                sec.p.unwrap_or(2.0),
                &sec.factors,
                seed,
            ))?
        }
        Suite::Thm14 => {
            let g = cfg.grid_spec()?;
            solver(verify::verify_thm_1_4(
                family,
                &g.lo,
                &g.hi,
                g.h,
                required(&sec.f, "f")?,
                &sec.thetas,
                &sec.eps,
                sec.p.unwrap_or(3.0),
                seed,
            ))?
        }
    };
    Ok(Outcome {
        pass: report.all_pass(),
        result: serde_json::to_value(&report)?,
    })
}

pub fn write_report(out: &Path, cmd: Command, cfg: &RunConfig, outcome: Result<&Outcome, String>) -> Result<()> {
    let (result, pass, error) = match outcome {
        Ok(o) => (o.result.clone(), o.pass, None),
        Err(e) => (Value::Null, false, Some(e)),
    };
    let report = json!({
        "command": cmd.name(),
        "seed": cfg.seed,
        "config": cfg,
        "pass": pass,
        "error": error,
        "result": result,
    });
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(out.join("config.echo.toml"), cfg.to_toml())?;
    Ok(())
}
