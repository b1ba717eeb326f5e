//! `dmc` — command-line front end for the measure-coefficient Dirichlet
//! solver. Parses a strict TOML run config, dispatches one subcommand, and
//! writes machine-readable output (JSON, or CSV for sweeps) with the full
//! resolved config echoed for provenance.
//!
//! Exit codes: 0 success, 1 assertion/runtime failure, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use dirichlet_mc::config::{builtin_instance, Instance, OracleSpec, RunConfig};
use dirichlet_mc::domain::Domain;
use dirichlet_mc::error::Error;
use dirichlet_mc::feynman_kac::{estimate_gauge, estimate_u, probe_grid};
use dirichlet_mc::geom::Point;
use dirichlet_mc::green::{contraction_factor, contraction_solve, BallGreen};
use dirichlet_mc::measures::{classify_kato, eval_density, KatoVerdict, SignedMeasure};
use dirichlet_mc::sde::{Coefficients, SimConfig};
use dirichlet_mc::verification::{convergence_study, fd_oracle_solve, study_csv};

#[derive(Parser)]
#[command(
    name = "dmc",
    about = "Monte Carlo solver and verification suite for Dirichlet problems \
             with signed-measure coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (results are invariant to it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the solution at the configured probe points.
    Solve,
    /// Kato-class trend reports for each configured coefficient.
    Kato,
    /// Gauge and Khasminskii diagnostics.
    Gauge,
    /// Deterministic oracles: contraction solver or finite differences.
    Oracle,
    /// Run the built-in instance property table.
    Verify,
    /// Convergence study across refinement levels (CSV).
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml_str(&text)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }

    let instance = cfg.resolve()?;
    let sim = cfg.sim.sim_config();
    let echo = serde_json::to_value(&cfg).expect("config serializes");

    let (payload, code) = match cli.command {
        Command::Solve => (cmd_solve(&cfg, &instance, &sim, echo)?, ExitCode::SUCCESS),
        Command::Kato => (cmd_kato(&cfg, &instance, echo)?, ExitCode::SUCCESS),
        Command::Gauge => (cmd_gauge(&cfg, &instance, &sim, echo)?, ExitCode::SUCCESS),
        Command::Oracle => (cmd_oracle(&cfg, &instance, &sim, echo)?, ExitCode::SUCCESS),
        Command::Verify => cmd_verify(&cfg, &sim, echo)?,
        Command::Sweep => (cmd_sweep(&cfg, &instance, &sim)?, ExitCode::SUCCESS),
    };

    match &cli.out {
        Some(out) => std::fs::write(out, payload)?,
        None => print!("{payload}"),
    }
    Ok(code)
}

fn probes(cfg: &RunConfig, domain: &Domain) -> Vec<Point> {
    if !cfg.probes.is_empty() {
        return cfg.probes.clone();
    }
    let c = domain.bbox().center();
    if domain.contains(c) {
        vec![c]
    } else {
        vec![]
    }
}

fn cmd_solve(
    cfg: &RunConfig,
    instance: &Instance,
    sim: &SimConfig,
    echo: serde_json::Value,
) -> Result<String, Error> {
    let coeffs = Coefficients::build(&instance.mu, instance.nu.as_ref(), instance.rho.as_ref(), sim);
    let mut results = Vec::new();
    for x in probes(cfg, &instance.domain) {
        if !instance.domain.contains(x) {
            return Err(Error::Config(format!("probe {x:?} is not interior")));
        }
        let est = estimate_u(x, &instance.domain, &coeffs, &instance.phi, sim, cfg.sim.n_paths)?;
        results.push(json!({ "point": x, "estimate": est }));
    }
    render(json!({ "command": "solve", "instance": instance.name, "config": echo,
                   "results": results }))
}

fn coefficient_list(instance: &Instance) -> Vec<(&'static str, &SignedMeasure)> {
    let mut out: Vec<(&'static str, &SignedMeasure)> = Vec::new();
    let names = ["mu1", "mu2", "mu3"];
    for (name, m) in names.iter().zip(instance.mu.iter()) {
        if let Some(m) = m {
            out.push((name, m));
        }
    }
    if let Some(m) = &instance.nu {
        out.push(("nu", m));
    }
    if let Some(m) = &instance.rho {
        out.push(("rho", m));
    }
    out
}

fn cmd_kato(
    cfg: &RunConfig,
    instance: &Instance,
    echo: serde_json::Value,
) -> Result<String, Error> {
    let spec = cfg
        .kato
        .as_ref()
        .ok_or_else(|| Error::Config("kato command needs a [kato] block".into()))?;
    if spec.radii.len() < 4 {
        return Err(Error::Config("kato.radii needs at least 4 entries".into()));
    }
    let mut reports = Vec::new();
    for (name, m) in coefficient_list(instance) {
        let report = classify_kato(m, spec.alpha, &spec.radii, &cfg.quadrature);
        reports.push(json!({ "coefficient": name, "report": report }));
    }
    render(json!({ "command": "kato", "instance": instance.name, "config": echo,
                   "reports": reports }))
}

fn cmd_gauge(
    cfg: &RunConfig,
    instance: &Instance,
    sim: &SimConfig,
    echo: serde_json::Value,
) -> Result<String, Error> {
    let gauge_spec = cfg.gauge.clone().unwrap_or(dirichlet_mc::config::GaugeSpec {
        probe_per_axis: 7,
        probe_paths: 2_000,
    });
    let coeffs = Coefficients::build(&instance.mu, instance.nu.as_ref(), instance.rho.as_ref(), sim);
    let points = probes(cfg, &instance.domain);
    let x0 = *points
        .first()
        .ok_or_else(|| Error::Config("gauge needs at least one probe point".into()))?;
    let grid = probe_grid(&instance.domain, gauge_spec.probe_per_axis);
    let report = estimate_gauge(
        x0,
        &instance.domain,
        &coeffs,
        sim,
        cfg.sim.n_paths,
        &grid,
        gauge_spec.probe_paths,
    )?;
    render(json!({ "command": "gauge", "instance": instance.name, "config": echo,
                   "point": x0, "report": report }))
}

fn cmd_oracle(
    cfg: &RunConfig,
    instance: &Instance,
    sim: &SimConfig,
    echo: serde_json::Value,
) -> Result<String, Error> {
    let spec = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::Config("oracle command needs an [oracle] block".into()))?;
    match spec {
        OracleSpec::Contraction {
            r_list,
            tol,
            max_iter,
        } => {
            let Domain::Ball(ball) = &instance.domain else {
                return Err(Error::Config(
                    "contraction oracle needs a ball domain".into(),
                ));
            };
            let probe = instance.rho.clone().unwrap_or_else(|| {
                dirichlet_mc::measures::SignedMeasure::SmoothDensity {
                    density: dirichlet_mc::measures::Density::Constant(1.0),
                    support: dirichlet_mc::measures::Support::Ball(*ball),
                }
            });
            let report =
                contraction_factor(ball.center, &instance.mu, &probe, r_list, &cfg.quadrature)?;
            let mut solve = serde_json::Value::Null;
            if let Some(r0) = report.r0_estimate {
                let g = BallGreen::new(ball.center, r0.min(ball.radius));
                let sol = contraction_solve(
                    &g,
                    &instance.mu,
                    &probe,
                    *tol,
                    *max_iter,
                    &cfg.quadrature,
                )?;
                solve = json!({
                    "radius": g.radius,
                    "term_sup_grads": sol.term_sup_grads,
                    "center_value": sol.eval(ball.center),
                });
            }
            let _ = sim; // oracle path is fully deterministic
            render(json!({ "command": "oracle", "mode": "contraction",
                           "instance": instance.name, "config": echo,
                           "report": report, "solve": solve }))
        }
        OracleSpec::Fd { grid_n } => {
            let Domain::Box(bbox) = &instance.domain else {
                return Err(Error::Config("fd oracle needs a box domain".into()));
            };
            let density_of = |m: &Option<SignedMeasure>| {
                let m = m.clone();
                move |x: Point| -> f64 {
                    m.as_ref()
                        .map(|m| eval_density(m, x).unwrap_or(0.0))
                        .unwrap_or(0.0)
                }
            };
            let b1 = density_of(&instance.mu[0]);
            let b2 = density_of(&instance.mu[1]);
            let b3 = density_of(&instance.mu[2]);
            let q = density_of(&instance.nu);
            let f = density_of(&instance.rho);
            let phi = instance.phi.clone();
            let u = fd_oracle_solve(
                *bbox,
                &|x| [b1(x), b2(x), b3(x)],
                &q,
                &f,
                &|x| phi.eval(x),
                *grid_n,
                1e-10,
                40_000,
            )?;
            let center = bbox.center();
            render(json!({ "command": "oracle", "mode": "fd",
                           "instance": instance.name, "config": echo,
                           "grid_n": grid_n, "center": center,
                           "center_value": u.interp_clamped(center) }))
        }
    }
}

fn cmd_sweep(cfg: &RunConfig, instance: &Instance, sim: &SimConfig) -> Result<String, Error> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep command needs a [sweep] block".into()))?;
    let levels: Vec<_> = spec.levels.iter().map(|l| l.to_level_spec()).collect();
    let points = probes(cfg, &instance.domain);
    let x0 = *points
        .first()
        .ok_or_else(|| Error::Config("sweep needs at least one probe point".into()))?;
    let rows = convergence_study(
        x0,
        &instance.domain,
        &instance.mu,
        instance.nu.as_ref(),
        instance.rho.as_ref(),
        &instance.phi,
        sim,
        &levels,
    )?;
    Ok(study_csv(&rows))
}

struct Row {
    name: String,
    pass: bool,
    detail: String,
}

fn check(rows: &mut Vec<Row>, name: &str, pass: bool, detail: String) {
    rows.push(Row {
        name: name.into(),
        pass,
        detail,
    });
}

/// Desk-scale property table over the built-in instances.
fn cmd_verify(
    cfg: &RunConfig,
    sim: &SimConfig,
    echo: serde_json::Value,
) -> Result<(String, ExitCode), Error> {
    let n = cfg.sim.n_paths;
    let quad = &cfg.quadrature;
    let mut rows = Vec::new();

    // Closed-form values on the ball instances.
    let cases = [
        ("harmonic-ball", [0.2, 0.0, 0.0], 0.2),
        ("poisson-ball", [0.0; 3], 1.0 / 3.0),
        ("drift-exp", [0.0; 3], 1.0),
    ];
    for (name, x0, want) in cases {
        let inst = builtin_instance(name).unwrap();
        let coeffs = Coefficients::build(&inst.mu, inst.nu.as_ref(), inst.rho.as_ref(), sim);
        let est = estimate_u(x0, &inst.domain, &coeffs, &inst.phi, sim, n)?;
        let tol = 3.0 * est.stderr + 2e-3;
        check(
            &mut rows,
            name,
            (est.value - want).abs() <= tol,
            format!("value {:.5} target {want:.5} tol {tol:.2e}", est.value),
        );
    }

    // Gauge identities on killing-ball.
    {
        let inst = builtin_instance("killing-ball").unwrap();
        let coeffs = Coefficients::build(&inst.mu, inst.nu.as_ref(), inst.rho.as_ref(), sim);
        let report = estimate_gauge(
            [0.0; 3],
            &inst.domain,
            &coeffs,
            sim,
            n,
            &[[0.5, 0.0, 0.0], [0.0, -0.5, 0.0]],
            (n / 10).max(100),
        )?;
        check(
            &mut rows,
            "killing-gauge",
            report.gauge.value < 1.0 && report.gauge.value > 0.0,
            format!("gauge {:.5}", report.gauge.value),
        );
    }

    // Kato classification of the singular kinds.
    {
        let plane = SignedMeasure::HyperplaneSurface {
            level: 0.0,
            weight: dirichlet_mc::measures::Density::Constant(1.0),
            bbox: dirichlet_mc::geom::Aabb::new([-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]),
        };
        let radii = [0.5, 0.125, 0.03125, 0.0078125, 0.002];
        let rejected = classify_kato(&plane, 1.0, &radii, quad);
        let accepted = classify_kato(&plane, 1.5, &radii, quad);
        check(
            &mut rows,
            "hyperplane-kato",
            rejected.verdict == KatoVerdict::Rejected
                && accepted.verdict == KatoVerdict::KatoCandidate,
            format!("alpha 1.0: {:?}, alpha 1.5: {:?}", rejected.verdict, accepted.verdict),
        );

        let inst = builtin_instance("singular-graph-drift").unwrap();
        let graph = inst.mu[2].as_ref().unwrap();
        let radii = [0.512, 0.128, 0.032, 0.008, 0.002, 0.0005];
        let report = classify_kato(graph, 0.6, &radii, quad);
        check(
            &mut rows,
            "graph-singular-kato",
            report.verdict == KatoVerdict::KatoCandidate,
            format!("alpha 0.6: {:?}", report.verdict),
        );
    }

    let all_pass = rows.iter().all(|r| r.pass);
    let table = rows
        .iter()
        .map(|r| {
            json!({ "check": r.name, "pass": r.pass, "detail": r.detail })
        })
        .collect::<Vec<_>>();
    let payload = render(json!({ "command": "verify", "config": echo,
                                 "all_pass": all_pass, "table": table }))?;
    let code = if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    };
    Ok((payload, code))
}

fn render(v: serde_json::Value) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(&v).expect("json renders");
    s.push('\n');
    Ok(s)
}
