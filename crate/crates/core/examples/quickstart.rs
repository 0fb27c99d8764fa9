//! Minimal end-to-end use of the library API: solve a small instance,
//! inspect targets and diagnostics, simulate a panel.

use tradeq_core::*;

fn main() -> Result<()> {
    let params = ModelParams {
        a: 1.0,
        alpha: 0.5,
        tau: 0.2,
        delta: 0.1,
        beta: 0.96,
        rho: 0.04,
        b_lo: -1.0,
        b_hi: 2.0,
        liquidation: LiquidationSpec::Proportional { lambda: 0.5 },
    };
    let chain = build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]])?;
    let grids = build_grids(
        &params,
        &chain,
        GridSizes {
            k: 30,
            b: 20,
            v: 20,
        },
        25.0,
        KSpacing::Uniform,
        None,
    )?;
    let opts = SolveOptions {
        tol: 1e-7,
        ..SolveOptions::default()
    };

    let eq = solve_equilibrium(&params, &chain, &grids, &opts)?;
    let d = &eq.diagnostics;
    println!(
        "converged in {} sweeps, empirical rate {:.4} (theta = {:.4})",
        d.iterations, d.empirical_rate, d.theta_bound
    );
    println!("bellman residual {:.3e}", d.bellman_residual);
    if let Some(gap) = d.uniqueness_gap {
        println!("second seed agrees within {gap:.3e}");
    }
    for z in 0..chain.n() {
        println!(
            "z = {:.2}: capital target {:.4}, debt target {:.4} (no-debt benchmark {:.4})",
            chain.states[z],
            eq.targets.k_star[z],
            eq.targets.b_star[z],
            eq.targets.k_star_autarky[z]
        );
    }

    let panel = simulate_paths(&eq, 100, 50, 7, &SimStart::default())?;
    let stats = panel_stats(&panel)?;
    println!(
        "simulated {} records: mean leverage {:.4}, default frequency {:.4}",
        stats.records, stats.leverage_mean, stats.default_frequency
    );
    Ok(())
}
