//! Solver-level checks against independent oracles.

use tradeq_core::*;

fn params() -> ModelParams {
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

fn chain2() -> ShockChain {
    build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap()
}

/// Plain value iteration for the no-debt firm, written from scratch as the
/// oracle for the degenerate instance.
fn no_debt_vfi_oracle(p: &ModelParams, chain: &ShockChain, k_grid: &[f64]) -> Vec<f64> {
    let (nz, nk) = (chain.n(), k_grid.len());
    let mut v = vec![0.0; nz * nk];
    loop {
        let mut vn = vec![0.0; nz * nk];
        let mut gap = 0.0_f64;
        for z in 0..nz {
            let zv = chain.states[z];
            for ik in 0..nk {
                let k = k_grid[ik];
                let f = if k == 0.0 {
                    0.0
                } else {
                    zv * p.a * k.powf(p.alpha)
                };
                let r = (1.0 - p.tau) * f + (1.0 - p.delta * (1.0 - p.tau)) * k;
                let mut best = f64::NEG_INFINITY;
                for (jk, &kn) in k_grid.iter().enumerate() {
                    if kn < (1.0 - p.delta) * k {
                        continue;
                    }
                    let d = r - kn;
                    if d < 0.0 {
                        continue;
                    }
                    let mut e = 0.0;
                    for zn in 0..nz {
                        e += chain.prob(z, zn) * v[zn * nk + jk];
                    }
                    let c = d + p.beta * e;
                    if c > best {
                        best = c;
                    }
                }
                let val = if best > f64::NEG_INFINITY { best } else { 0.0 };
                gap = gap.max((val - v[z * nk + ik]).abs());
                vn[z * nk + ik] = val;
            }
        }
        v = vn;
        if gap <= 1e-12 {
            return v;
        }
    }
}

#[test]
fn degenerate_no_debt_instance_matches_plain_vfi() {
    let mut p = params();
    p.b_lo = 0.0;
    p.b_hi = 0.0;
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes { k: 30, b: 2, v: 30 },
        25.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap();
    let opts = SolveOptions {
        tol: 1e-9,
        check_uniqueness: true,
        ..SolveOptions::default()
    };
    let eq = solve_equilibrium(&p, &chain, &g, &opts).unwrap();

    // no debt means no promised payment, so no path ever defaults
    let panel = simulate_paths(&eq, 30, 30, 5, &SimStart::default()).unwrap();
    assert_eq!(panel.records.len(), 30 * 30);
    assert!(panel.records.iter().all(|r| !r.defaulted));
    assert_eq!(panel_stats(&panel).unwrap().default_frequency, 0.0);

    let oracle = no_debt_vfi_oracle(&p, &chain, &g.k);
    let mut worst = 0.0_f64;
    for z in 0..chain.n() {
        for ik in 0..g.nk() {
            let got = eq.value.at(z, g.b_zero_idx, ik);
            let want = oracle[z * g.nk() + ik];
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst < 1e-6, "solver vs plain VFI deviates by {worst:e}");
    // no debt means no default, ever: feasibility holds everywhere
    assert!(eq.value.v.iter().all(|x| *x > 0.0));
}

#[test]
fn dual_fixed_point_is_stable_under_reapplication() {
    // iterate the operator directly and re-apply at the fixed point
    let p = params();
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes {
            k: 12,
            b: 10,
            v: 12,
        },
        25.0,
        KSpacing::Uniform,
        Some(60.0),
    )
    .unwrap();
    let w = contraction_constants(0.015, &p, &chain).unwrap();
    let vaut = autarky_value(&p, &chain, &g, 0.0);
    let mut b = {
        // seed with the autarky capacity, as the solver does
        let mut t = BondTable::new_absent(chain.n(), g.nk(), g.nv());
        for z in 0..chain.n() {
            for ik in 0..g.nk() {
                for iv in 0..g.nv() {
                    let c = vaut[z * g.nk() + ik] - g.v[iv];
                    if c >= 0.0 {
                        let i = t.idx(z, ik, iv);
                        t.debt[i] = c;
                        t.present[i] = true;
                    }
                }
            }
        }
        t
    };
    let mut last_gap = f64::INFINITY;
    for _ in 0..3000 {
        let next = dual_operator(&b, &chain, &g, &p).unwrap();
        let mut gap = 0.0_f64;
        let mut churn = 0usize;
        for i in 0..b.debt.len() {
            match (b.present[i], next.present[i]) {
                (true, true) => {
                    gap =
                        gap.max((b.debt[i] - next.debt[i]).abs() / w.phi0(g.k[i / g.nv() % g.nk()]))
                }
                (false, false) => {}
                _ => churn += 1,
            }
        }
        b = next;
        last_gap = gap;
        if churn == 0 && gap <= 1e-12 {
            break;
        }
    }
    assert!(last_gap <= 1e-12, "iteration did not settle: {last_gap:e}");
    let re = dual_operator(&b, &chain, &g, &p).unwrap();
    for i in 0..b.debt.len() {
        assert_eq!(b.present[i], re.present[i], "presence flipped at {i}");
        if b.present[i] {
            assert!(
                (b.debt[i] - re.debt[i]).abs() <= 1e-10,
                "node {i} moved by {:e} on re-application",
                (b.debt[i] - re.debt[i]).abs()
            );
        }
    }
}

#[test]
fn unconverged_value_function_fails_the_certificate() {
    let p = params();
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes {
            k: 15,
            b: 10,
            v: 12,
        },
        25.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap();
    // one sweep from the autarky seed is far from converged
    let vaut = autarky_value(&p, &chain, &g, 0.0);
    let mut b0 = BondTable::new_absent(chain.n(), g.nk(), g.nv());
    for z in 0..chain.n() {
        for ik in 0..g.nk() {
            for iv in 0..g.nv() {
                let c = vaut[z * g.nk() + ik] - g.v[iv];
                if c >= 0.0 {
                    let i = b0.idx(z, ik, iv);
                    b0.debt[i] = c;
                    b0.present[i] = true;
                }
            }
        }
    }
    let b1 = dual_operator(&b0, &chain, &g, &p).unwrap();
    let v1 = monotone_invert(&b1, &g).unwrap();
    let q1 = price_schedule(&v1, &chain, &g, &p).unwrap();
    let (resid, witness) = bellman_residual(&v1, &q1, &chain, &g, &p, 0.0);
    assert!(
        resid > 1e-6,
        "one sweep cannot already certify: residual {resid:e}"
    );
    assert!(witness.is_some());
}

#[test]
fn residual_is_zero_when_nothing_is_feasible() {
    let p = params();
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes { k: 6, b: 6, v: 6 },
        10.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap();
    let v = ValueTable::zeros(chain.n(), g.nb(), g.nk());
    let q = price_schedule(&v, &chain, &g, &p).unwrap();
    let (resid, witness) = bellman_residual(&v, &q, &chain, &g, &p, 0.0);
    assert_eq!(resid, 0.0);
    assert!(witness.is_none());
}

#[test]
fn deterministic_chain_locks_near_targets() {
    // single shock state: starting at the targets, the path stays within one
    // grid cell of them and pays an almost-constant dividend
    let p = params();
    let chain = ShockChain::deterministic(1.0).unwrap();
    let g = build_grids(
        &p,
        &chain,
        GridSizes {
            k: 40,
            b: 20,
            v: 30,
        },
        25.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap();
    let opts = SolveOptions {
        tol: 1e-8,
        check_uniqueness: false,
        ..SolveOptions::default()
    };
    let eq = solve_equilibrium(&p, &chain, &g, &opts).unwrap();
    let start = SimStart {
        z_index: 0,
        b: None,
        k: None,
    };
    let panel = simulate_paths(&eq, 1, 40, 3, &start).unwrap();
    assert_eq!(
        panel.records.len(),
        40,
        "no default may occur at the targets"
    );
    let kcell = g.max_k_cell();
    let bcell = g.max_b_cell();
    for r in &panel.records {
        assert!((r.k - eq.targets.k_star[0]).abs() <= kcell + 1e-12);
        assert!((r.b - eq.targets.b_star[0]).abs() <= bcell + 1e-12);
    }
    // after the first step the path cycles among at most two states
    let states: std::collections::BTreeSet<(u64, u64)> = panel.records[1..]
        .iter()
        .map(|r| (r.b.to_bits(), r.k.to_bits()))
        .collect();
    assert!(
        states.len() <= 2,
        "path wanders over {} states instead of locking",
        states.len()
    );
    // dividends settle too
    let d0 = panel.records[5].dividend;
    for r in &panel.records[5..] {
        assert!((r.dividend - d0).abs() <= eq.policy.dividend_tol);
    }
}

#[test]
fn non_convergence_carries_the_gap_history() {
    let p = params();
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes { k: 10, b: 8, v: 8 },
        25.0,
        KSpacing::Uniform,
        None,
    )
    .unwrap();
    let opts = SolveOptions {
        tol: 1e-10,
        max_iter: 3,
        check_uniqueness: false,
        ..SolveOptions::default()
    };
    match solve_equilibrium(&p, &chain, &g, &opts) {
        Err(Error::NoConvergence {
            iterations, gaps, ..
        }) => {
            assert_eq!(iterations, 3);
            assert_eq!(gaps.len(), 3);
        }
        other => panic!("expected NoConvergence, got {other:?}"),
    }
}

#[test]
fn raw_dual_residual_shrinks_as_grids_refine() {
    // Before the price-frozen refinement stage, the inverted dual iterate
    // carries value-grid quantization; its Bellman residual must shrink as
    // the grids refine.
    let p = params();
    let chain = chain2();
    let mut residuals = Vec::new();
    for n in [8usize, 16, 32] {
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: n, b: n, v: n },
            25.0,
            KSpacing::Uniform,
            Some(60.0),
        )
        .unwrap();
        let vaut = autarky_value(&p, &chain, &g, 0.0);
        let mut b = BondTable::new_absent(chain.n(), g.nk(), g.nv());
        for z in 0..chain.n() {
            for ik in 0..g.nk() {
                for iv in 0..g.nv() {
                    let c = vaut[z * g.nk() + ik] - g.v[iv];
                    if c >= 0.0 {
                        let i = b.idx(z, ik, iv);
                        b.debt[i] = c;
                        b.present[i] = true;
                    }
                }
            }
        }
        // iterate the raw operator to a tight fixed point
        for _ in 0..4000 {
            let next = dual_operator(&b, &chain, &g, &p).unwrap();
            let mut gap = 0.0_f64;
            let mut churn = 0usize;
            for i in 0..b.debt.len() {
                match (b.present[i], next.present[i]) {
                    (true, true) => gap = gap.max((b.debt[i] - next.debt[i]).abs()),
                    (false, false) => {}
                    _ => churn += 1,
                }
            }
            b = next;
            if churn == 0 && gap <= 1e-11 {
                break;
            }
        }
        let v = monotone_invert(&b, &g).unwrap();
        let q = price_schedule(&v, &chain, &g, &p).unwrap();
        let (resid, _) = bellman_residual(&v, &q, &chain, &g, &p, 0.0);
        residuals.push(resid);
    }
    assert!(
        residuals[2] < residuals[0],
        "raw residual did not shrink across a 4x refinement: {residuals:?}"
    );
    println!("raw dual residuals across refinement: {residuals:?}");
}

#[test]
fn adjustment_operator_with_zero_cost_matches_base_bitwise() {
    let p = params();
    let chain = chain2();
    let g = build_grids(
        &p,
        &chain,
        GridSizes { k: 10, b: 8, v: 8 },
        20.0,
        KSpacing::Uniform,
        Some(40.0),
    )
    .unwrap();
    let vaut = autarky_value(&p, &chain, &g, 0.0);
    let mut seed = BondTable::new_absent(chain.n(), g.nk(), g.nv());
    for z in 0..chain.n() {
        for ik in 0..g.nk() {
            for iv in 0..g.nv() {
                let c = vaut[z * g.nk() + ik] - g.v[iv];
                if c >= 0.0 {
                    let i = seed.idx(z, ik, iv);
                    seed.debt[i] = c;
                    seed.present[i] = true;
                }
            }
        }
    }
    let base = dual_operator(&seed, &chain, &g, &p).unwrap();
    let zero = dual_operator_with_adjustment(&seed, &chain, &g, &p, 0.0).unwrap();
    assert_eq!(base.debt, zero.debt);
    assert_eq!(base.present, zero.present);

    // a positive cost weakly lowers supportable debt node by node
    let costly = dual_operator_with_adjustment(&seed, &chain, &g, &p, 2.0).unwrap();
    for i in 0..base.debt.len() {
        if base.present[i] && costly.present[i] {
            assert!(costly.debt[i] <= base.debt[i] + 1e-12);
        }
    }
}
