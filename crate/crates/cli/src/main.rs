//! `tradeq`: solve, inspect and simulate the defaultable-debt equilibrium.
//!
//! Exit codes: 0 success, 2 config validation failure, 3 non-convergence,
//! 4 verification failure.

mod artifacts;
mod verify;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tradeq_core::util::fmt_sig12;
use tradeq_core::{
    noncontraction_demo, simulate_paths, solve_equilibrium, solve_exogenous,
    solve_with_adjustment_costs, AdjustmentCostSpec, DemoParams, Equilibrium, ExogenousEquilibrium,
    Instance, SimStart,
};

#[derive(Parser)]
#[command(name = "tradeq", version, about = "Trade-off firm equilibrium solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and TRADEQ_OUTPUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the state sweeps; 0 picks the machine default.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct SolveOverrides {
    /// Stopping accuracy for the recovered value function (sup norm).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Growth allowance for the weighted norm.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Skip the second-seed uniqueness witness (halves the runtime).
    #[arg(long, default_value_t = false)]
    skip_uniqueness: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured model and emit every artifact.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        overrides: SolveOverrides,
    },
    /// Evaluate the closed-form two-point expansion of the naive value
    /// iteration and report whether it exceeded the input distance.
    DemoNoncontraction {
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        #[arg(long, default_value_t = 0.001)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        b_hi: f64,
        #[arg(long, default_value_t = 0.01)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        z: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.96)]
        beta: f64,
        /// Emit the report as JSON instead of aligned text.
        #[arg(long, default_value_t = false)]
        json: bool,
    },
    /// Emit the capital/debt target table.
    Targets {
        #[command(flatten)]
        common: CommonArgs,
        /// Reuse a solved equilibrium.json instead of solving.
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Emit the per-state policy table.
    Policy {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Simulate seeded firm paths under a converged equilibrium.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        artifact: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the property suite against a solved artifact.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Slack added to theta in the rate check.
        #[arg(long)]
        slack: Option<f64>,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<tradeq_core::Error>() {
        match e {
            tradeq_core::Error::Invalid { .. }
            | tradeq_core::Error::Domain(_)
            | tradeq_core::Error::Precondition(_) => 2,
            tradeq_core::Error::NoConvergence { .. } => 3,
            _ => 1,
        }
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_instance(common: &CommonArgs) -> anyhow::Result<(Instance, Vec<u8>)> {
    let bytes = fs::read(&common.config)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", common.config.display()))?;
    let inst = tradeq_core::parse_config(&bytes)?;
    Ok((inst, bytes))
}

fn out_dir(common: &CommonArgs, inst: &Instance) -> PathBuf {
    if let Some(d) = &common.out {
        return d.clone();
    }
    if let Ok(d) = std::env::var("TRADEQ_OUTPUT_DIR") {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    inst.output_dir()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn init_threads(cli_jobs: usize, cfg_jobs: usize) {
    let jobs = if cli_jobs > 0 { cli_jobs } else { cfg_jobs };
    if jobs > 0 {
        // ignore failure when a pool already exists (tests set their own)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

enum Solved {
    Base(Box<Equilibrium>),
    Exogenous(Box<ExogenousEquilibrium>),
}

fn solve_instance(inst: &Instance, ov: Option<&SolveOverrides>) -> anyhow::Result<Solved> {
    match inst {
        Instance::Base(b) => {
            let mut opts = b.solver.clone();
            if let Some(ov) = ov {
                if let Some(t) = ov.tol {
                    opts.tol = t;
                }
                if let Some(m) = ov.max_iter {
                    opts.max_iter = m;
                }
                if let Some(e) = ov.epsilon {
                    opts.epsilon = Some(e);
                }
                if ov.skip_uniqueness {
                    opts.check_uniqueness = false;
                }
            }
            let eq = if b.psi == 0.0 {
                solve_equilibrium(&b.params, &b.chain, &b.grids, &opts)?
            } else {
                solve_with_adjustment_costs(
                    &b.params,
                    &AdjustmentCostSpec { psi: b.psi },
                    &b.chain,
                    &b.grids,
                    &opts,
                )?
            };
            Ok(Solved::Base(Box::new(eq)))
        }
        Instance::Exogenous(e) => {
            let mut opts = e.solver.clone();
            if let Some(ov) = ov {
                if let Some(t) = ov.tol {
                    opts.tol = t;
                }
                if let Some(m) = ov.max_iter {
                    opts.max_iter = m;
                }
                if ov.skip_uniqueness {
                    opts.check_uniqueness = false;
                }
            }
            let eq = solve_exogenous(&e.params, &e.chain, &e.grids, &opts)?;
            Ok(Solved::Exogenous(Box::new(eq)))
        }
    }
}

fn load_or_solve(inst: &Instance, artifact: &Option<PathBuf>) -> anyhow::Result<Solved> {
    if let Some(path) = artifact {
        let bytes =
            fs::read(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        return match inst {
            Instance::Base(_) => {
                let eq: Equilibrium = serde_json::from_slice(&bytes).map_err(|e| {
                    anyhow::anyhow!("{} is not a base equilibrium: {e}", path.display())
                })?;
                Ok(Solved::Base(Box::new(eq)))
            }
            Instance::Exogenous(_) => {
                let eq: ExogenousEquilibrium = serde_json::from_slice(&bytes).map_err(|e| {
                    anyhow::anyhow!("{} is not an exogenous equilibrium: {e}", path.display())
                })?;
                Ok(Solved::Exogenous(Box::new(eq)))
            }
        };
    }
    solve_instance(inst, None)
}

fn print_diag(diag: &tradeq_core::ConvergenceDiagnostics) {
    println!(
        "converged in {} iterations, refinement {}, empirical rate {} (theta {})",
        diag.iterations,
        diag.polish_iterations,
        fmt_sig12(diag.empirical_rate),
        fmt_sig12(diag.theta_bound)
    );
    println!("bellman residual {}", fmt_sig12(diag.bellman_residual));
    if let Some(u) = diag.uniqueness_gap {
        println!("uniqueness witness gap {}", fmt_sig12(u));
    }
}

fn manifest_sizes(inst: &Instance) -> Vec<(&'static str, usize)> {
    match inst {
        Instance::Base(b) => vec![
            ("k", b.grids.nk()),
            ("b", b.grids.nb()),
            ("v", b.grids.nv()),
        ],
        Instance::Exogenous(e) => vec![("b", e.grids.nb()), ("v", e.grids.nv())],
    }
}

fn model_name(inst: &Instance) -> &'static str {
    match inst {
        Instance::Base(b) if b.psi != 0.0 => "adjustment",
        Instance::Base(_) => "base",
        Instance::Exogenous(_) => "exogenous",
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Solve { common, overrides } => {
            let (inst, bytes) = load_instance(&common)?;
            init_threads(common.jobs, inst.jobs());
            let dir = out_dir(&common, &inst);
            fs::create_dir_all(&dir)?;
            artifacts::write_manifest(&dir, &bytes, model_name(&inst), &manifest_sizes(&inst))?;
            match solve_instance(&inst, Some(&overrides))? {
                Solved::Base(eq) => {
                    artifacts::write_base_artifacts(&dir, &eq)?;
                    print_diag(&eq.diagnostics);
                }
                Solved::Exogenous(eq) => {
                    artifacts::write_exo_artifacts(&dir, &eq)?;
                    print_diag(&eq.diagnostics);
                }
            }
            println!("artifacts written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::DemoNoncontraction {
            nu,
            eps,
            b_hi,
            k,
            b,
            z,
            a,
            alpha,
            delta,
            rho,
            beta,
            json,
        } => {
            let params = DemoParams {
                nu,
                eps,
                b_hi,
                k,
                b,
                z,
                a,
                alpha,
                delta,
                rho,
                beta,
            };
            let report = noncontraction_demo(&params)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("two-point expansion of the naive value-iteration map");
                println!(
                    "  witness state (z, b, k)   ({}, {}, {})",
                    fmt_sig12(report.witness_state.0),
                    fmt_sig12(report.witness_state.1),
                    fmt_sig12(report.witness_state.2)
                );
                println!(
                    "  ||v2 - v1||               {}",
                    fmt_sig12(report.norm_v_diff)
                );
                println!(
                    "  ||S v2 - S v1||           {}",
                    fmt_sig12(report.norm_sv_diff)
                );
                println!(
                    "  S v1 at witness           {}",
                    fmt_sig12(report.sv1_at_witness)
                );
                println!(
                    "  S v2 at witness           {}",
                    fmt_sig12(report.sv2_at_witness)
                );
                println!(
                    "  inner maximizer k'        {}",
                    fmt_sig12(report.inner_k_opt)
                );
                println!(
                    "  positivity margin         {}",
                    fmt_sig12(report.positivity_margin)
                );
                println!(
                    "  verdict                   {}",
                    if report.verdict {
                        "expansion (not a contraction)"
                    } else {
                        "no expansion at these parameters"
                    }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Targets { common, artifact } => {
            let (inst, _) = load_instance(&common)?;
            init_threads(common.jobs, inst.jobs());
            let dir = out_dir(&common, &inst);
            fs::create_dir_all(&dir)?;
            match load_or_solve(&inst, &artifact)? {
                Solved::Base(eq) => {
                    artifacts::write_targets_csv(&dir, &eq)?;
                    for zi in 0..eq.chain.n() {
                        println!(
                            "z = {}: k* = {}, b* = {}, autarky k* = {}",
                            fmt_sig12(eq.chain.states[zi]),
                            fmt_sig12(eq.targets.k_star[zi]),
                            fmt_sig12(eq.targets.b_star[zi]),
                            fmt_sig12(eq.targets.k_star_autarky[zi])
                        );
                    }
                    println!("targets written to {}", dir.join("targets.csv").display());
                }
                Solved::Exogenous(_) => {
                    anyhow::bail!("the exogenous model has no capital targets");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Policy { common, artifact } => {
            let (inst, _) = load_instance(&common)?;
            init_threads(common.jobs, inst.jobs());
            let dir = out_dir(&common, &inst);
            fs::create_dir_all(&dir)?;
            match load_or_solve(&inst, &artifact)? {
                Solved::Base(eq) => {
                    artifacts::write_base_artifacts(&dir, &eq)?;
                    println!(
                        "policy written to {} ({} moderate, {} low, {} high states)",
                        dir.join("policy.csv").display(),
                        eq.policy.moderate_states,
                        eq.policy.low_states,
                        eq.policy.high_states
                    );
                }
                Solved::Exogenous(eq) => {
                    artifacts::write_exo_artifacts(&dir, &eq)?;
                    println!("policy written to {}", dir.join("policy.csv").display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            common,
            artifact,
            paths,
            horizon,
            seed,
        } => {
            let (inst, _) = load_instance(&common)?;
            init_threads(common.jobs, inst.jobs());
            let dir = out_dir(&common, &inst);
            let sim = match &inst {
                Instance::Base(b) => b.sim,
                Instance::Exogenous(_) => None,
            };
            let paths = paths.or(sim.map(|s| s.paths)).unwrap_or(100);
            let horizon = horizon.or(sim.map(|s| s.horizon)).unwrap_or(200);
            let seed = seed.or(sim.map(|s| s.seed)).unwrap_or(1);
            let start = sim.map(|s| s.start).unwrap_or(SimStart::default());
            match load_or_solve(&inst, &artifact)? {
                Solved::Base(eq) => {
                    let panel = simulate_paths(&eq, paths, horizon, seed, &start)?;
                    artifacts::write_panel(&dir, &panel)?;
                    let stats = tradeq_core::panel_stats(&panel)?;
                    println!(
                        "{} paths x {} periods, default frequency {}",
                        paths,
                        horizon,
                        fmt_sig12(stats.default_frequency)
                    );
                    println!("panel written to {}", dir.join("panel.csv").display());
                }
                Solved::Exogenous(_) => {
                    anyhow::bail!("simulation requires the capital models (base or adjustment)");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            common,
            artifact,
            slack,
        } => {
            let (inst, _) = load_instance(&common)?;
            init_threads(common.jobs, inst.jobs());
            let artifact = artifact.or_else(|| {
                let candidate = out_dir(&common, &inst).join("equilibrium.json");
                candidate.exists().then_some(candidate)
            });
            let mut checks = match load_or_solve(&inst, &artifact)? {
                Solved::Base(mut eq) => {
                    if let Some(s) = slack {
                        eq.diagnostics.slack = s;
                    }
                    verify::verify_base(&eq)
                }
                Solved::Exogenous(mut eq) => {
                    if let Some(s) = slack {
                        eq.diagnostics.slack = s;
                    }
                    verify::verify_exogenous(&eq)
                }
            };
            checks.sort_by_key(|c| c.name);
            let mut failed = 0usize;
            for c in &checks {
                println!(
                    "{} {:<20} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                if !c.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                println!("{failed} checks failed");
                return Ok(ExitCode::from(4));
            }
            println!("all {} checks passed", checks.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}
