//! The dual fixed-point solver.
//!
//! Instead of iterating the value function directly (which need not
//! contract, see `primal`), the solver iterates the bond function
//! `B(z, k, v)`: the largest current debt consistent with delivering equity
//! value `v` at `(z, k)`, given that next-period promises are themselves
//! supportable under the current iterate. Under the weight
//! `phi0(k) = [(1-tau) z_bar A + tau delta] k + eta` the update is monotone,
//! bounded and discounting with modulus `theta < 1`, so plain iteration
//! converges geometrically to the unique fixed point from any seed.
//!
//! Per action `(b', k')` the update has a closed inner solution. Writing
//! `C = R(z,k) + proceeds(z,b',k') - k' - Psi` for the cash flow at zero
//! dividend and `W` for the expected continuation value at the action, the
//! supportable debt while delivering `v` is `min(C + beta W - v, C)`: the
//! first branch pays `d = v - beta W >= 0`, the second pays no dividend and
//! promises only part of the attainable continuation. Nodes where every
//! action fails `r >= 0` are absent; each `(z, k)` section is then trimmed
//! to its strictly decreasing upper envelope, which is exactly the valid
//! range of the inverse value function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, FeasibilityMask, Policy, Targets};
use crate::error::{Error, Result};
use crate::model::{Grids, ModelParams, ShockChain};
use crate::pricing::{price_schedule, PriceTable};
use crate::primal::{bellman_residual, ValueTable, VALUE_FLOOR};
use crate::sweep::{self, SweepContext};

// ---------------------------------------------------------------------------
// Bond table
// ---------------------------------------------------------------------------

/// Maximal supportable debt on the `(z, k, v)` grid with a presence mask;
/// absent nodes have an empty constraint set (the value `v` is not
/// deliverable at `(z, k)` with nonnegative debt). Present entries are
/// strictly decreasing in `v` within each `(z, k)` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondTable {
    pub nz: usize,
    pub nk: usize,
    pub nv: usize,
    pub debt: Vec<f64>,
    pub present: Vec<bool>,
}

impl BondTable {
    pub fn new_absent(nz: usize, nk: usize, nv: usize) -> Self {
        BondTable {
            nz,
            nk,
            nv,
            debt: vec![0.0; nz * nk * nv],
            present: vec![false; nz * nk * nv],
        }
    }

    pub fn full(nz: usize, nk: usize, nv: usize, x: f64) -> Self {
        BondTable {
            nz,
            nk,
            nv,
            debt: vec![x; nz * nk * nv],
            present: vec![true; nz * nk * nv],
        }
    }

    #[inline]
    pub fn idx(&self, z: usize, ik: usize, iv: usize) -> usize {
        (z * self.nk + ik) * self.nv + iv
    }

    #[inline]
    pub fn at(&self, z: usize, ik: usize, iv: usize) -> Option<f64> {
        let i = self.idx(z, ik, iv);
        if self.present[i] {
            Some(self.debt[i])
        } else {
            None
        }
    }
}

/// Drops every node that is dominated by a higher-`v` node with at least as
/// much debt capacity, leaving the strictly decreasing upper envelope.
pub(crate) fn trim_table(t: &mut BondTable) {
    let (nz, nk, nv) = (t.nz, t.nk, t.nv);
    for z in 0..nz {
        for ik in 0..nk {
            let base = (z * nk + ik) * nv;
            trim_section(
                &mut t.debt[base..base + nv],
                &mut t.present[base..base + nv],
            );
        }
    }
}

pub(crate) fn trim_section(debt: &mut [f64], present: &mut [bool]) {
    let mut run = f64::NEG_INFINITY;
    for iv in (0..debt.len()).rev() {
        if present[iv] && debt[iv] > run {
            run = debt[iv];
        } else {
            present[iv] = false;
            debt[iv] = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted norm and contraction constants
// ---------------------------------------------------------------------------

/// Weight function and the constants that make the dual update a
/// contraction: `phi0(k) = slope * k + eta` with
/// `slope = (1 - tau) z_bar A + tau delta` and
/// `theta = (1 + epsilon) [tau + (1 - tau)/(1 + rho)] < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiWeights {
    pub eta: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub m_eps: f64,
    pub slope: f64,
}

impl PhiWeights {
    #[inline]
    pub fn phi0(&self, k: f64) -> f64 {
        self.slope * k + self.eta
    }
}

/// The weight at capital level `k`.
pub fn phi(k: f64, weights: &PhiWeights) -> f64 {
    weights.phi0(k)
}

/// Largest admissible growth allowance: `theta < 1` iff
/// `epsilon < rho (1 - tau) / (1 + rho tau)`.
pub fn admissible_epsilon_sup(p: &ModelParams) -> f64 {
    p.rho * (1.0 - p.tau) / (1.0 + p.rho * p.tau)
}

/// 0.015 when admissible, otherwise the midpoint of the admissible
/// interval.
pub fn default_epsilon(p: &ModelParams) -> f64 {
    let sup = admissible_epsilon_sup(p);
    if 0.015 < sup {
        0.015
    } else {
        0.5 * sup
    }
}

/// Builds the weight constants for a growth allowance `epsilon`.
///
/// `eta1 = (1 + rho tau)/(1 + rho) * b_hi` bounds the cash any action can
/// raise; `m(epsilon)` is the (closed-form) minimum of
/// `[eps + delta(1-tau)] k - (1-tau) z_bar A k^alpha - eta1` over `k >= 0`;
/// `eta` is the smallest additive constant making both the reward bound and
/// the growth bound hold.
pub fn contraction_constants(
    epsilon: f64,
    p: &ModelParams,
    chain: &ShockChain,
) -> Result<PhiWeights> {
    let sup = admissible_epsilon_sup(p);
    if !(epsilon > 0.0 && epsilon < sup) {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} outside the admissible interval (0, {sup:.12}); \
             theta would reach 1"
        )));
    }
    let c = (1.0 - p.tau) * chain.z_bar * p.a; // coefficient on k^alpha
    let slope = c + p.tau * p.delta;
    let eta1 = (1.0 + p.rho * p.tau) / (1.0 + p.rho) * p.b_hi;
    let d = epsilon + p.delta * (1.0 - p.tau);
    let m_eps = if c == 0.0 {
        -eta1
    } else {
        let kstar = (p.alpha * c / d).powf(1.0 / (1.0 - p.alpha));
        d * kstar - c * kstar.powf(p.alpha) - eta1
    };
    let eta = f64::max(eta1 + c, -m_eps * slope / epsilon);
    let theta = (1.0 + epsilon) * p.debt_coef();
    Ok(PhiWeights {
        eta,
        epsilon,
        theta,
        m_eps,
        slope,
    })
}

/// Weighted supremum norm over present nodes: `sup |f| / phi0(k)`.
pub fn phi_norm(f: &BondTable, weights: &PhiWeights, k_grid: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for z in 0..f.nz {
        for ik in 0..f.nk {
            let w = weights.phi0(k_grid[ik]);
            let base = (z * f.nk + ik) * f.nv;
            for iv in 0..f.nv {
                if f.present[base + iv] {
                    worst = worst.max(f.debt[base + iv].abs() / w);
                }
            }
        }
    }
    worst
}

/// Weighted gap over mutually present nodes plus the number of nodes whose
/// presence flipped.
pub(crate) fn phi_gap(
    a: &BondTable,
    b: &BondTable,
    weights: &PhiWeights,
    k_grid: &[f64],
) -> (f64, usize) {
    let mut gap = 0.0_f64;
    let mut churn = 0usize;
    for z in 0..a.nz {
        for ik in 0..a.nk {
            let w = weights.phi0(k_grid[ik]);
            let base = (z * a.nk + ik) * a.nv;
            for iv in 0..a.nv {
                let i = base + iv;
                match (a.present[i], b.present[i]) {
                    (true, true) => gap = gap.max((a.debt[i] - b.debt[i]).abs() / w),
                    (false, false) => {}
                    _ => churn += 1,
                }
            }
        }
    }
    (gap, churn)
}

// ---------------------------------------------------------------------------
// Monotone inversion
// ---------------------------------------------------------------------------

/// Recovers the value function on the `(z, b, k)` grid from a bond table.
/// Within each section the inverse is piecewise linear in debt; debts above
/// the section's capacity map to exactly 0 (default), debts below its
/// lowest represented level clamp to the top value. Alive values are
/// floored at `VALUE_FLOOR`. Errors with witness indices if a section is
/// not strictly decreasing over its present nodes.
pub fn monotone_invert(bt: &BondTable, grids: &Grids) -> Result<ValueTable> {
    let (nz, nk, nv, nb) = (bt.nz, bt.nk, bt.nv, grids.nb());
    let mut out = ValueTable::zeros(nz, nb, nk);
    let mut sect: Vec<(f64, f64)> = Vec::with_capacity(nv);
    for z in 0..nz {
        for ik in 0..nk {
            sect.clear();
            let base = (z * nk + ik) * nv;
            for iv in 0..nv {
                if bt.present[base + iv] {
                    if let Some(&(_, prev)) = sect.last() {
                        if bt.debt[base + iv] >= prev {
                            return Err(Error::NonMonotone { z, k: ik, idx: iv });
                        }
                    }
                    sect.push((grids.v[iv], bt.debt[base + iv]));
                }
            }
            for ib in 0..nb {
                let val = invert_debt_section(&sect, grids.b[ib]);
                out.set(z, ib, ik, val);
            }
        }
    }
    Ok(out)
}

/// Value delivered at debt `b` for one `(z, k)` section given as
/// `(v, debt)` pairs with `v` ascending and `debt` strictly descending.
/// Empty sections default everywhere.
pub(crate) fn invert_debt_section(sect: &[(f64, f64)], b: f64) -> f64 {
    if sect.is_empty() {
        return 0.0;
    }
    let top = sect[0]; // lowest v, highest debt capacity
    if b > top.1 {
        return 0.0;
    }
    let bot = sect[sect.len() - 1];
    if b <= bot.1 {
        return f64::max(bot.0, VALUE_FLOOR);
    }
    // find segment s with sect[s].debt >= b > sect[s+1].debt
    let mut lo = 0;
    let mut hi = sect.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if sect[mid].1 >= b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (v_lo, d_lo) = sect[lo];
    let (v_hi, d_hi) = sect[hi];
    let t = (d_lo - b) / (d_lo - d_hi);
    f64::max(v_lo + t * (v_hi - v_lo), VALUE_FLOOR)
}

/// Inverse direction: bond table implied by a value table. Sections must be
/// non-increasing in `b` (exact-zero default tail allowed); the result is
/// trimmed to its strictly decreasing envelope.
pub fn monotone_invert_back(v: &ValueTable, grids: &Grids) -> Result<BondTable> {
    let (nz, nb, nk, nv) = (v.nz, v.nb, v.nk, grids.nv());
    let mut out = BondTable::new_absent(nz, nk, nv);
    for z in 0..nz {
        for ik in 0..nk {
            // validate monotonicity along b
            for ib in 1..nb {
                let prev = v.at(z, ib - 1, ik);
                let cur = v.at(z, ib, ik);
                if cur > prev + 1e-12 * (1.0 + prev.abs()) {
                    return Err(Error::NonMonotone { z, k: ik, idx: ib });
                }
            }
            for iv in 0..nv {
                let target = grids.v[iv].max(VALUE_FLOOR);
                if v.at(z, 0, ik) < target {
                    continue; // not deliverable at any debt
                }
                // largest b with V >= target
                let mut ib = nb - 1;
                while v.at(z, ib, ik) < target {
                    ib -= 1;
                }
                let debt = if ib == nb - 1 {
                    grids.b[nb - 1]
                } else {
                    let v0 = v.at(z, ib, ik);
                    let v1 = v.at(z, ib + 1, ik);
                    if v0 <= v1 {
                        grids.b[ib]
                    } else {
                        grids.b[ib] + (v0 - target) / (v0 - v1) * (grids.b[ib + 1] - grids.b[ib])
                    }
                };
                let i = out.idx(z, ik, iv);
                out.debt[i] = debt;
                out.present[i] = true;
            }
        }
    }
    trim_table(&mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// The dual update
// ---------------------------------------------------------------------------

/// One application of the dual update to a bond table satisfying the
/// monotonicity invariant.
pub fn dual_operator(
    bt: &BondTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
) -> Result<BondTable> {
    let vcont = monotone_invert(bt, grids)?;
    Ok(dual_sweep_given_value(&vcont, chain, grids, p, 0.0))
}

/// Adjustment-cost form of the update; `psi = 0` is bit-identical to the
/// base operator.
pub fn dual_operator_with_adjustment(
    bt: &BondTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
) -> Result<BondTable> {
    let vcont = monotone_invert(bt, grids)?;
    Ok(dual_sweep_given_value(&vcont, chain, grids, p, psi))
}

pub(crate) fn dual_sweep_given_value(
    vcont: &ValueTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
) -> BondTable {
    let (nz, nk, nv, nb) = (chain.n(), grids.nk(), grids.nv(), grids.nb());
    let ctx = SweepContext::new(chain, grids, p, psi);
    let mut out = BondTable::new_absent(nz, nk, nv);
    for z in 0..nz {
        let cont = sweep::continuation_tables(z, vcont, chain, grids);
        let pro = sweep::proceeds_from_default_mass(z, &cont.pi, grids, p);
        let mut g = vec![0.0; nb * nk];
        let mut h = vec![0.0; nb * nk];
        for a in 0..nb * nk {
            g[a] = pro[a] - grids.k[a % nk];
            h[a] = g[a] + p.beta * cont.w[a];
        }
        let start = z * nk * nv;
        let dslice = &mut out.debt[start..start + nk * nv];
        let pslice = &mut out.present[start..start + nk * nv];
        dslice
            .par_chunks_mut(nv)
            .zip(pslice.par_chunks_mut(nv))
            .enumerate()
            .for_each(|(ik, (drow, prow))| {
                let rk = sweep::resources_at(z, ik, chain, grids, p);
                let ps = ctx.psi_row(ik);
                let j0 = ctx.invest_floor[ik];
                for iv in 0..nv {
                    let v = grids.v[iv];
                    let mut best = f64::NEG_INFINITY;
                    for ibp in 0..nb {
                        let base = ibp * nk;
                        for jk in j0..nk {
                            let a = base + jk;
                            let m = f64::min(h[a] - v, g[a]) - ps[jk];
                            if m > best {
                                best = m;
                            }
                        }
                    }
                    let val = rk + best;
                    if val >= 0.0 {
                        drow[iv] = val;
                        prow[iv] = true;
                    } else {
                        drow[iv] = 0.0;
                        prow[iv] = false;
                    }
                }
                trim_section(drow, prow);
            });
    }
    out
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// Solver knobs. `tol` is the accuracy target for the recovered value
/// function in the supremum norm; the dual stage stops once the weighted
/// gap, scaled by the largest weight and the estimated geometric tail,
/// certifies that accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Growth allowance; `None` selects `default_epsilon`.
    pub epsilon: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Slack added to `theta` in the convergence-rate check.
    pub slack: f64,
    /// Re-solve from a second seed and record the sup-norm disagreement.
    pub check_uniqueness: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: None,
            tol: 1e-8,
            max_iter: 5000,
            slack: 0.02,
            check_uniqueness: true,
        }
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    pub iterations: usize,
    /// Weighted gap per iteration.
    pub phi_norm_gaps: Vec<f64>,
    /// Presence flips per iteration; rate statistics skip churning steps.
    pub mask_churn: Vec<usize>,
    /// Largest ratio of successive gaps after burn-in.
    pub empirical_rate: f64,
    pub theta_bound: f64,
    pub burn_in: usize,
    pub polish_iterations: usize,
    pub bellman_residual: f64,
    pub mask_rounds: usize,
    pub uniqueness_gap: Option<f64>,
    pub tol: f64,
    pub slack: f64,
}

/// Converged equilibrium bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equilibrium {
    pub params: ModelParams,
    pub chain: ShockChain,
    pub grids: Grids,
    /// Quadratic adjustment-cost coefficient; 0 for the base model.
    pub psi: f64,
    pub weights: PhiWeights,
    pub bonds: BondTable,
    pub value: ValueTable,
    pub prices: PriceTable,
    pub policy: Policy,
    pub targets: Targets,
    pub feasibility: FeasibilityMask,
    pub diagnostics: ConvergenceDiagnostics,
}

struct IterOutcome {
    table: BondTable,
    gaps: Vec<f64>,
    churns: Vec<usize>,
}

pub(crate) fn estimate_rate(gaps: &[f64], churns: &[usize]) -> f64 {
    let mut r = 0.0_f64;
    let mut cnt = 0;
    for i in (1..gaps.len()).rev() {
        if churns[i] == 0 && churns[i - 1] == 0 && gaps[i - 1] > 1e-300 {
            r = r.max(gaps[i] / gaps[i - 1]);
            cnt += 1;
            if cnt >= 10 {
                break;
            }
        }
    }
    if cnt == 0 {
        0.99
    } else {
        r.clamp(0.05, 0.999)
    }
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    b0: BondTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
    weights: &PhiWeights,
    tol: f64,
    max_iter: usize,
) -> Result<IterOutcome> {
    let phi_max = weights.phi0(*grids.k.last().unwrap());
    let mut bn = b0;
    let mut gaps = Vec::new();
    let mut churns = Vec::new();
    loop {
        let vcont = monotone_invert(&bn, grids)?;
        let bnext = dual_sweep_given_value(&vcont, chain, grids, p, psi);
        let (gap, churn) = phi_gap(&bn, &bnext, weights, &grids.k);
        gaps.push(gap);
        churns.push(churn);
        bn = bnext;
        if churn == 0 {
            if gap == 0.0 {
                break;
            }
            if gaps.len() >= 6 {
                let r = estimate_rate(&gaps, &churns);
                if gap * phi_max * r / (1.0 - r) <= tol * 0.25 {
                    break;
                }
            }
        }
        if gaps.len() >= max_iter {
            let last = *gaps.last().unwrap();
            return Err(Error::NoConvergence {
                iterations: gaps.len(),
                last_gap: last,
                gaps,
            });
        }
    }
    Ok(IterOutcome {
        table: bn,
        gaps,
        churns,
    })
}

fn seed_from_autarky(vaut: &[f64], chain: &ShockChain, grids: &Grids) -> BondTable {
    let (nz, nk, nv) = (chain.n(), grids.nk(), grids.nv());
    let mut b = BondTable::new_absent(nz, nk, nv);
    for z in 0..nz {
        for ik in 0..nk {
            let va = vaut[z * nk + ik];
            for iv in 0..nv {
                let c = va - grids.v[iv];
                if c >= 0.0 {
                    let i = b.idx(z, ik, iv);
                    b.debt[i] = c;
                    b.present[i] = true;
                }
            }
        }
    }
    b
}

/// Re-prices, applies the feasibility mask, and refines the value table
/// with the price-frozen update until the residual certificate clears.
fn recover(
    bstar: &BondTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
    tol: f64,
) -> Result<(ValueTable, PriceTable, usize, usize, f64)> {
    let mut v = monotone_invert(bstar, grids)?;
    let mut rounds = 0;
    let q = loop {
        let q = price_schedule(&v, chain, grids, p)?;
        let changed = apply_feasibility(&mut v, &q, chain, grids, p, psi);
        rounds += 1;
        if !changed {
            break q;
        }
        if rounds > 32 {
            return Err(Error::Precondition(
                "feasibility mask did not stabilize while re-pricing".into(),
            ));
        }
    };
    let ptol = tol * 0.01;
    let mut iters = 0usize;
    loop {
        let vnew = sweep::value_update_given_prices(&v, &q, chain, grids, p, psi);
        let gap = v.sup_diff(&vnew);
        v = vnew;
        iters += 1;
        if gap <= ptol {
            break;
        }
        if iters > 200_000 {
            return Err(Error::NoConvergence {
                iterations: iters,
                last_gap: gap,
                gaps: vec![gap],
            });
        }
    }
    let (resid, _) = bellman_residual(&v, &q, chain, grids, p, psi);
    Ok((v, q, rounds, iters, resid))
}

/// Rewrites `v` so its zero pattern equals the feasibility set implied by
/// `q`. Returns whether anything changed.
fn apply_feasibility(
    v: &mut ValueTable,
    q: &PriceTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
) -> bool {
    let (nz, nb, nk) = (v.nz, v.nb, v.nk);
    let ctx = SweepContext::new(chain, grids, p, psi);
    let mut changed = false;
    for z in 0..nz {
        let pro = sweep::proceeds_from_prices(z, q, grids, p);
        for ik in 0..nk {
            let rk = sweep::resources_at(z, ik, chain, grids, p);
            let smax = equilibrium::smax_given(&pro, ik, grids, &ctx);
            for ib in 0..nb {
                let feasible = rk - grids.b[ib] + smax >= 0.0;
                let alive = v.at(z, ib, ik) > 0.0;
                if feasible && !alive {
                    v.set(z, ib, ik, VALUE_FLOOR);
                    changed = true;
                } else if !feasible && alive {
                    v.set(z, ib, ik, 0.0);
                    changed = true;
                }
            }
        }
    }
    changed
}

/// Geometric decay sets in once the discrete argmax actions lock; before
/// that, sub-cell quantization can echo (the weighted contraction argument
/// shifts the debt action off-grid). Burn-in is therefore the start of the
/// trailing churn-free, non-increasing run of the gap sequence; the rate is
/// the largest successive ratio over that tail.
pub(crate) fn empirical_rate(gaps: &[f64], churns: &[usize]) -> (f64, usize) {
    let n = gaps.len();
    if n < 2 {
        return (0.0, n);
    }
    let mut burn_in = n - 1;
    while burn_in > 0 {
        let i = burn_in - 1;
        let ok = churns[i] == 0 && gaps[i] >= gaps[burn_in] && gaps[i].is_finite();
        if !ok {
            break;
        }
        burn_in = i;
    }
    let mut rate = 0.0_f64;
    for i in burn_in..n - 1 {
        if gaps[i] >= 1e-16 {
            rate = rate.max(gaps[i + 1] / gaps[i]);
        }
    }
    (rate, burn_in)
}

/// Solves the base model: dual iteration to the fixed point, inversion,
/// re-pricing, refinement, policy extraction and diagnostics. With
/// `check_uniqueness` the solve is repeated from a deliberately different
/// seed (capacity `b_hi` everywhere) and the sup-norm disagreement of the
/// two value functions is recorded.
pub fn solve_equilibrium(
    p: &ModelParams,
    chain: &ShockChain,
    grids: &Grids,
    opts: &SolveOptions,
) -> Result<Equilibrium> {
    solve_core(p, chain, grids, 0.0, opts)
}

pub(crate) fn solve_core(
    p: &ModelParams,
    chain: &ShockChain,
    grids: &Grids,
    psi: f64,
    opts: &SolveOptions,
) -> Result<Equilibrium> {
    p.validate("params")?;
    let eps = opts.epsilon.unwrap_or_else(|| default_epsilon(p));
    let weights = contraction_constants(eps, p, chain)?;

    let vaut = equilibrium::autarky_value(p, chain, grids, psi);
    let b0 = seed_from_autarky(&vaut, chain, grids);
    let out = iterate(b0, chain, grids, p, psi, &weights, opts.tol, opts.max_iter)?;
    let (v, q, mask_rounds, polish_iters, resid) =
        recover(&out.table, chain, grids, p, psi, opts.tol)?;

    let uniqueness_gap = if opts.check_uniqueness {
        let mut alt = BondTable::full(chain.n(), grids.nk(), grids.nv(), p.b_hi);
        trim_table(&mut alt);
        let out2 = iterate(alt, chain, grids, p, psi, &weights, opts.tol, opts.max_iter)?;
        let (v2, _, _, _, _) = recover(&out2.table, chain, grids, p, psi, opts.tol)?;
        Some(v.sup_diff(&v2))
    } else {
        None
    };

    let targets = equilibrium::compute_targets(&q, chain, grids, p);
    let policy = equilibrium::policy_extract(&v, &q, chain, grids, p, psi, &targets);
    let feasibility = equilibrium::feasible_set(&q, chain, grids, p, psi);
    let (rate, burn_in) = empirical_rate(&out.gaps, &out.churns);

    // the equilibrium bond function is the inverse of the refined value
    // function; the raw dual-stage iterate only steers the iteration
    let bonds = monotone_invert_back(&v, grids)?;

    let diagnostics = ConvergenceDiagnostics {
        iterations: out.gaps.len(),
        phi_norm_gaps: out.gaps,
        mask_churn: out.churns,
        empirical_rate: rate,
        theta_bound: weights.theta,
        burn_in,
        polish_iterations: polish_iters,
        bellman_residual: resid,
        mask_rounds,
        uniqueness_gap,
        tol: opts.tol,
        slack: opts.slack,
    };

    Ok(Equilibrium {
        params: p.clone(),
        chain: chain.clone(),
        grids: grids.clone(),
        psi,
        weights,
        bonds,
        value: v,
        prices: q,
        policy,
        targets,
        feasibility,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grids, build_shock_chain, GridSizes, KSpacing, LiquidationSpec};

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

    #[test]
    fn phi_examples() {
        let w = PhiWeights {
            eta: 3.0,
            epsilon: 0.015,
            theta: 0.98,
            m_eps: -1.0,
            slope: (1.0 - 0.2) * 1.1 * 1.0 + 0.2 * 0.1,
        };
        assert_eq!(phi(0.0, &w), 3.0);
        assert!((phi(10.0, &w) - 12.0).abs() < 1e-12);
        assert!(phi(11.0, &w) > phi(10.0, &w));
    }

    #[test]
    fn phi_norm_examples() {
        let w = PhiWeights {
            eta: 3.0,
            epsilon: 0.015,
            theta: 0.98,
            m_eps: -1.0,
            slope: 0.9,
        };
        let k_grid = vec![0.0, 1.0, 2.0];
        let zero = BondTable::full(1, 3, 2, 0.0);
        assert_eq!(phi_norm(&zero, &w, &k_grid), 0.0);

        // f = phi0 itself
        let mut f = BondTable::full(1, 3, 2, 0.0);
        for ik in 0..3 {
            for iv in 0..2 {
                let i = f.idx(0, ik, iv);
                f.debt[i] = w.phi0(k_grid[ik]);
            }
        }
        assert!((phi_norm(&f, &w, &k_grid) - 1.0).abs() < 1e-15);

        // 2 eta at k = 0 nodes, 0 elsewhere
        let mut g = BondTable::full(1, 3, 2, 0.0);
        for iv in 0..2 {
            let i = g.idx(0, 0, iv);
            g.debt[i] = 2.0 * w.eta;
        }
        assert!((phi_norm(&g, &w, &k_grid) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn contraction_constants_desk_values() {
        let p = params();
        let chain =
            build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let w = contraction_constants(0.015, &p, &chain).unwrap();
        assert!((w.theta - 0.9837692307692308).abs() < 1e-9);
        assert!(w.theta < 1.0);
        // eta >= eta1 + (1 - tau) z_bar A always
        let eta1 = (1.0 + 0.04 * 0.2) / 1.04 * 2.0;
        assert!(w.eta >= eta1 + 0.8 * 1.1 - 1e-12);
        assert!(w.m_eps <= 0.0);

        // the inadmissible allowance is rejected with the interval named
        match contraction_constants(0.05, &p, &chain) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("admissible")),
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn m_eps_matches_numeric_minimization() {
        let p = params();
        let chain =
            build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let w = contraction_constants(0.015, &p, &chain).unwrap();
        // golden-section search over k in [0, 1e4]
        let f = |k: f64| {
            (0.015 + 0.1 * 0.8) * k - 0.8 * 1.1 * k.powf(0.5) - (1.0 + 0.04 * 0.2) / 1.04 * 2.0
        };
        let (mut a, mut b) = (0.0_f64, 1e4_f64);
        let phi_r = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi_r * (b - a);
            let d = a + phi_r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let m_num = f(0.5 * (a + b));
        assert!(
            (w.m_eps - m_num).abs() < 1e-9,
            "closed form {} vs numeric {}",
            w.m_eps,
            m_num
        );
    }

    #[test]
    fn invert_affine_section_is_exact() {
        // B(z,k,v) = 10 - v on v in [0, 10]: inverse is v = 10 - b
        let p = params();
        let chain = build_shock_chain(vec![1.0], vec![vec![1.0]]).unwrap();
        let mut g = build_grids(
            &p,
            &chain,
            GridSizes { k: 2, b: 5, v: 11 },
            5.0,
            KSpacing::Uniform,
            Some(10.0),
        )
        .unwrap();
        g.b = vec![0.0, 2.5, 5.0, 7.5, 10.0];
        g.b_zero_idx = 0;
        let mut bt = BondTable::new_absent(1, 2, 11);
        for ik in 0..2 {
            for iv in 0..11 {
                let i = bt.idx(0, ik, iv);
                bt.debt[i] = 10.0 - g.v[iv];
                bt.present[i] = true;
            }
        }
        let v = monotone_invert(&bt, &g).unwrap();
        for ik in 0..2 {
            for ib in 0..g.nb() {
                let expect = 10.0 - g.b[ib];
                let got = v.at(0, ib, ik);
                if expect <= 0.0 {
                    assert!(got == VALUE_FLOOR || got == 0.0 || (got - expect).abs() < 1e-12);
                } else {
                    assert!((got - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invert_beyond_capacity_is_default() {
        let sect = vec![(0.0, 1.5), (1.0, 0.5)];
        assert_eq!(invert_debt_section(&sect, 2.0), 0.0);
        assert!((invert_debt_section(&sect, 1.0) - 0.5).abs() < 1e-15);
        // below the represented range clamps to the top value
        assert_eq!(invert_debt_section(&sect, 0.1), 1.0);
        assert_eq!(invert_debt_section(&sect, 1.5), VALUE_FLOOR.max(0.0));
    }

    #[test]
    fn invert_rejects_non_monotone_sections() {
        let p = params();
        let chain = build_shock_chain(vec![1.0], vec![vec![1.0]]).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: 2, b: 4, v: 4 },
            5.0,
            KSpacing::Uniform,
            Some(3.0),
        )
        .unwrap();
        let mut bt = BondTable::full(1, 2, 4, 1.0);
        for iv in 0..4 {
            let i = bt.idx(0, 1, iv);
            bt.debt[i] = match iv {
                0 => 3.0,
                1 => 2.0,
                2 => 2.5,
                _ => 1.0,
            };
        }
        // section (z=0, k=0) is constant: also non-monotone
        match monotone_invert(&bt, &g) {
            Err(Error::NonMonotone { .. }) => {}
            other => panic!("expected non-monotone error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_within_one_cell() {
        let p = params();
        let chain =
            build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: 6, b: 9, v: 12 },
            8.0,
            KSpacing::Uniform,
            Some(6.0),
        )
        .unwrap();
        // a curved strictly decreasing bond table
        let mut bt = BondTable::new_absent(chain.n(), g.nk(), g.nv());
        for z in 0..chain.n() {
            for ik in 0..g.nk() {
                for iv in 0..g.nv() {
                    let i = bt.idx(z, ik, iv);
                    bt.debt[i] = 1.8 - 0.3 * g.v[iv] - 0.01 * (g.v[iv] * g.v[iv]) + 0.05 * g.k[ik];
                    bt.present[i] = true;
                }
            }
        }
        // slope must be <= -(something); scale v to keep decreasing
        let v = monotone_invert(&bt, &g).unwrap();
        let back = monotone_invert_back(&v, &g).unwrap();
        let v2 = monotone_invert(&back, &g).unwrap();
        // one interpolation cell: the larger of the v spacing and the value
        // change across one b cell
        for z in 0..chain.n() {
            for ik in 0..g.nk() {
                let mut bound = g.max_v_cell();
                for ib in 1..g.nb() {
                    bound = bound.max((v.at(z, ib - 1, ik) - v.at(z, ib, ik)).abs());
                }
                for ib in 0..g.nb() {
                    let (a, b) = (v.at(z, ib, ik), v2.at(z, ib, ik));
                    if a > 0.0 && b > 0.0 {
                        assert!(
                            (a - b).abs() <= bound + 1e-9,
                            "round trip moved {a} -> {b} (bound {bound})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn operator_marks_unattainable_values_absent() {
        let p = params();
        let chain = build_shock_chain(vec![1.0], vec![vec![1.0]]).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: 5, b: 5, v: 8 },
            4.0,
            KSpacing::Uniform,
            Some(1e6), // absurdly high promises cannot be delivered
        )
        .unwrap();
        let bt = {
            let mut t = BondTable::full(1, g.nk(), g.nv(), p.b_hi);
            trim_table(&mut t);
            t
        };
        let out = dual_operator(&bt, &chain, &g, &p).unwrap();
        for ik in 0..g.nk() {
            let top = out.idx(0, ik, g.nv() - 1);
            assert!(!out.present[top], "v = 1e6 must be undeliverable");
            // something is always deliverable with nonnegative debt
            let any = (0..g.nv()).any(|iv| out.present[out.idx(0, ik, iv)]);
            assert!(any, "section (k index {ik}) lost every node");
        }
    }
}
