//! Shared fixtures for the benchmark targets.

use tradeq_core::*;

pub fn bench_params() -> ModelParams {
    ModelParams {
        a: 1.0,
        alpha: 0.5,
        tau: 0.2,
        delta: 0.1,
        beta: 0.96,
        rho: 0.04,
        b_lo: -1.0,
        b_hi: 2.0,
        liquidation: LiquidationSpec::Proportional { lambda: 0.5 },
    }
}

pub fn bench_chain() -> ShockChain {
    build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap()
}

pub fn bench_grids(p: &ModelParams, chain: &ShockChain, nk: usize, nb: usize, nv: usize) -> Grids {
    build_grids(
        p,
        chain,
        GridSizes {
            k: nk,
            b: nb,
            v: nv,
        },
        25.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap()
}

/// A mid-sized converged equilibrium for downstream benchmarks.
pub fn bench_equilibrium() -> Equilibrium {
    let p = bench_params();
    let chain = bench_chain();
    let grids = bench_grids(&p, &chain, 20, 16, 16);
    let opts = SolveOptions {
        tol: 1e-6,
        check_uniqueness: false,
        ..SolveOptions::default()
    };
    solve_equilibrium(&p, &chain, &grids, &opts).unwrap()
}

/// Autarky-capacity seed, the same shape the solver starts from.
pub fn seed_table(p: &ModelParams, chain: &ShockChain, grids: &Grids) -> BondTable {
    let vaut = autarky_value(p, chain, grids, 0.0);
    let mut t = BondTable::new_absent(chain.n(), grids.nk(), grids.nv());
    for z in 0..chain.n() {
        for ik in 0..grids.nk() {
            for iv in 0..grids.nv() {
                let c = vaut[z * grids.nk() + ik] - grids.v[iv];
                if c >= 0.0 {
                    let i = t.idx(z, ik, iv);
                    t.debt[i] = c;
                    t.present[i] = true;
                }
            }
        }
    }
    t
}
