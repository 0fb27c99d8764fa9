//! Model variants solved with the same dual machinery: exogenous cash flow
//! (two-dimensional state, constant weight) and quadratic capital
//! adjustment costs (zero cost reproduces the base model bit for bit).

use serde::{Deserialize, Serialize};

use crate::dual::{
    self, invert_debt_section, trim_section, ConvergenceDiagnostics, Equilibrium, PhiWeights,
    SolveOptions,
};
use crate::error::{Error, Result};
use crate::model::{Grids, ModelParams, ShockChain};
use crate::primal::VALUE_FLOOR;
use crate::util::fmt_sig12;

// ---------------------------------------------------------------------------
// Quadratic adjustment costs
// ---------------------------------------------------------------------------

/// Quadratic cost `Psi(k, k') = 0.5 psi ((k' - (1-delta)k)/k)^2 k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentCostSpec {
    pub psi: f64,
}

/// Evaluates the adjustment cost. Zero investment costs nothing; positive
/// next-period capital from zero current capital is outside the domain.
pub fn adjustment_cost(k: f64, k_next: f64, delta: f64, spec: &AdjustmentCostSpec) -> Result<f64> {
    if k < 0.0 || k_next < 0.0 {
        return Err(Error::Domain("adjustment cost requires k, k' >= 0".into()));
    }
    if spec.psi == 0.0 {
        return Ok(0.0);
    }
    if k == 0.0 {
        if k_next > 0.0 {
            return Err(Error::Domain(
                "adjustment cost is undefined for k = 0 with k' > 0".into(),
            ));
        }
        return Ok(0.0);
    }
    let i = k_next - (1.0 - delta) * k;
    Ok(0.5 * spec.psi * (i / k) * (i / k) * k)
}

/// Solves the base model with quadratic adjustment costs subtracted in the
/// budget and in the revenue sweep. `psi = 0` runs the identical code path
/// as `solve_equilibrium`.
///
/// The weight constants of the base model stay valid unchanged: the cost is
/// nonnegative, so it only lowers per-period cash and tightens the bound on
/// feasible investment that the growth condition rests on.
pub fn solve_with_adjustment_costs(
    p: &ModelParams,
    spec: &AdjustmentCostSpec,
    chain: &ShockChain,
    grids: &Grids,
    opts: &SolveOptions,
) -> Result<Equilibrium> {
    if !(spec.psi >= 0.0) || !spec.psi.is_finite() {
        return Err(Error::invalid("psi", "adjustment coefficient must be >= 0"));
    }
    dual::solve_core(p, chain, grids, spec.psi, opts)
}

// ---------------------------------------------------------------------------
// Exogenous cash flow
// ---------------------------------------------------------------------------

/// Parameters of the exogenous cash-flow firm: the shock is the cash flow
/// itself, there is no capital, production or liquidation recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousParams {
    pub tau: f64,
    pub beta: f64,
    pub rho: f64,
    pub b_lo: f64,
    pub b_hi: f64,
}

impl ExogenousParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid(field("tau"), "tax rate must lie in [0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(
                field("beta"),
                "discount factor must lie in (0, 1)",
            ));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid(field("rho"), "risk-free rate must be > 0"));
        }
        if !(self.b_lo <= 0.0) || !self.b_lo.is_finite() {
            return Err(Error::invalid(
                field("b_lo"),
                "lower debt bound must be <= 0",
            ));
        }
        if !(self.b_hi >= 0.0) || !self.b_hi.is_finite() {
            return Err(Error::invalid(
                field("b_hi"),
                "upper debt bound must be finite and >= 0",
            ));
        }
        if self.debt_coef() < self.beta {
            return Err(Error::invalid(
                field("beta"),
                format!(
                    "tau + (1 - tau)/(1 + rho) = {:.12} must be >= beta",
                    self.debt_coef()
                ),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn risk_free_price(&self) -> f64 {
        1.0 / (1.0 + self.rho)
    }

    #[inline]
    pub fn debt_coef(&self) -> f64 {
        self.tau + (1.0 - self.tau) / (1.0 + self.rho)
    }
}

/// Grids of the two-dimensional state `(z, b)` plus the value axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoGrids {
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub b_zero_idx: usize,
}

impl ExoGrids {
    #[inline]
    pub fn nb(&self) -> usize {
        self.b.len()
    }
    #[inline]
    pub fn nv(&self) -> usize {
        self.v.len()
    }
    pub fn max_v_cell(&self) -> f64 {
        self.v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Default value cap: the richest per-period payout capitalized.
pub fn default_exo_v_max(p: &ExogenousParams, chain: &ShockChain) -> f64 {
    (chain.z_bar + p.b_hi + (-p.b_lo)) / (1.0 - p.beta)
}

pub fn build_exo_grids(
    p: &ExogenousParams,
    chain: &ShockChain,
    b_size: usize,
    v_size: usize,
    v_max: Option<f64>,
) -> Result<ExoGrids> {
    if v_size < 2 {
        return Err(Error::invalid(
            "grids.v_size",
            "need at least 2 value nodes",
        ));
    }
    let fake = ModelParams {
        a: 1.0,
        alpha: 0.5,
        tau: p.tau,
        delta: 1.0,
        beta: p.beta,
        rho: p.rho,
        b_lo: p.b_lo,
        b_hi: p.b_hi,
        liquidation: crate::model::LiquidationSpec::Proportional { lambda: 0.0 },
    };
    // reuse the b-axis construction (exact zero node, degenerate collapse)
    let g = crate::model::build_grids(
        &fake,
        chain,
        crate::model::GridSizes {
            k: 2,
            b: b_size,
            v: v_size,
        },
        1.0,
        crate::model::KSpacing::Uniform,
        Some(v_max.unwrap_or_else(|| default_exo_v_max(p, chain))),
    )?;
    Ok(ExoGrids {
        b: g.b,
        v: g.v,
        b_zero_idx: g.b_zero_idx,
    })
}

/// Bond table on `(z, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoBondTable {
    pub nz: usize,
    pub nv: usize,
    pub debt: Vec<f64>,
    pub present: Vec<bool>,
}

impl ExoBondTable {
    #[inline]
    pub fn idx(&self, z: usize, iv: usize) -> usize {
        z * self.nv + iv
    }
}

/// Price schedule `q(z, b')`; no liquidation recovery, so the break-even
/// price `E 1{V > 0} / (1 + rho)` never exceeds the risk-free price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoPriceTable {
    pub nz: usize,
    pub nb: usize,
    pub q: Vec<f64>,
    pub default_prob: Vec<f64>,
}

impl ExoPriceTable {
    #[inline]
    pub fn at(&self, z: usize, ib: usize) -> f64 {
        self.q[z * self.nb + ib]
    }

    pub fn write_csv<W: std::io::Write>(
        &self,
        out: &mut W,
        chain: &ShockChain,
        grids: &ExoGrids,
    ) -> Result<()> {
        writeln!(out, "z,b_next,q,default_prob")?;
        for z in 0..self.nz {
            for ib in 0..self.nb {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_sig12(chain.states[z]),
                    fmt_sig12(grids.b[ib]),
                    fmt_sig12(self.q[z * self.nb + ib]),
                    fmt_sig12(self.default_prob[z * self.nb + ib]),
                )?;
            }
        }
        Ok(())
    }
}

/// Per-state policy of the exogenous model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoPolicy {
    pub nz: usize,
    pub nb: usize,
    pub b_next: Vec<Option<f64>>,
    pub b_next_idx: Vec<Option<u32>>,
    pub dividend: Vec<Option<f64>>,
}

/// Converged exogenous-model equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExogenousEquilibrium {
    pub params: ExogenousParams,
    pub chain: ShockChain,
    pub grids: ExoGrids,
    pub weights: PhiWeights,
    pub bonds: ExoBondTable,
    /// `V(z, b)`, row-major, exactly 0 on default states.
    pub value: Vec<f64>,
    pub prices: ExoPriceTable,
    pub policy: ExoPolicy,
    pub diagnostics: ConvergenceDiagnostics,
}

impl ExogenousEquilibrium {
    #[inline]
    pub fn value_at(&self, z: usize, ib: usize) -> f64 {
        self.value[z * self.grids.nb() + ib]
    }
}

/// Constant weight `phi0 = z_bar + eta` with `eta` the cash-raising bound;
/// the growth condition is vacuous for a constant weight, so
/// `theta = tau + (1 - tau)/(1 + rho)` directly.
pub fn exo_constants(p: &ExogenousParams, chain: &ShockChain) -> Result<PhiWeights> {
    let eta1 = (1.0 + p.rho * p.tau) / (1.0 + p.rho) * p.b_hi;
    let phi0 = chain.z_bar + eta1;
    if !(phi0 > 0.0) {
        return Err(Error::Precondition(
            "degenerate economy: z_bar + eta = 0 leaves no weight".into(),
        ));
    }
    Ok(PhiWeights {
        eta: phi0,
        epsilon: 0.0,
        theta: p.debt_coef(),
        m_eps: 0.0,
        slope: 0.0,
    })
}

fn exo_proceeds(pi: &[f64], grids: &ExoGrids, p: &ExogenousParams) -> Vec<f64> {
    let disc = (1.0 - p.tau) / (1.0 + p.rho);
    grids
        .b
        .iter()
        .enumerate()
        .map(|(ib, &bp)| {
            if bp <= 0.0 {
                p.tau * bp + disc * bp
            } else {
                p.tau * bp + disc * (bp * (1.0 - pi[ib]))
            }
        })
        .collect()
}

fn exo_continuation(
    z: usize,
    value: &[f64],
    chain: &ShockChain,
    nb: usize,
) -> (Vec<f64>, Vec<f64>) {
    let nz = chain.n();
    let mut w = vec![0.0; nb];
    let mut pi = vec![0.0; nb];
    for zn in 0..nz {
        let pr = chain.prob(z, zn);
        if pr == 0.0 {
            continue;
        }
        for ib in 0..nb {
            let val = value[zn * nb + ib];
            w[ib] += pr * val;
            if val == 0.0 {
                pi[ib] += pr;
            }
        }
    }
    for x in pi.iter_mut() {
        if *x > 1.0 {
            *x = 1.0;
        }
    }
    (w, pi)
}

fn exo_sweep(
    bt: &ExoBondTable,
    chain: &ShockChain,
    grids: &ExoGrids,
    p: &ExogenousParams,
) -> Result<(ExoBondTable, Vec<f64>)> {
    let (nz, nv, nb) = (bt.nz, bt.nv, grids.nb());
    // invert current iterate onto the b grid
    let mut value = vec![0.0; nz * nb];
    let mut sect: Vec<(f64, f64)> = Vec::with_capacity(nv);
    for z in 0..nz {
        sect.clear();
        for iv in 0..nv {
            if bt.present[z * nv + iv] {
                if let Some(&(_, prev)) = sect.last() {
                    if bt.debt[z * nv + iv] >= prev {
                        return Err(Error::NonMonotone { z, k: 0, idx: iv });
                    }
                }
                sect.push((grids.v[iv], bt.debt[z * nv + iv]));
            }
        }
        for ib in 0..nb {
            value[z * nb + ib] = invert_debt_section(&sect, grids.b[ib]);
        }
    }
    let mut out = ExoBondTable {
        nz,
        nv,
        debt: vec![0.0; nz * nv],
        present: vec![false; nz * nv],
    };
    for z in 0..nz {
        let (w, pi) = exo_continuation(z, &value, chain, nb);
        let pro = exo_proceeds(&pi, grids, p);
        let zval = chain.states[z];
        let (ds, ps) = (
            &mut out.debt[z * nv..(z + 1) * nv],
            &mut out.present[z * nv..(z + 1) * nv],
        );
        for iv in 0..nv {
            let v = grids.v[iv];
            let mut best = f64::NEG_INFINITY;
            for ib in 0..nb {
                let c = zval + pro[ib];
                let m = f64::min(c + p.beta * w[ib] - v, c);
                if m > best {
                    best = m;
                }
            }
            if best >= 0.0 {
                ds[iv] = best;
                ps[iv] = true;
            }
        }
        trim_section(ds, ps);
    }
    Ok((out, value))
}

fn exo_prices(
    value: &[f64],
    chain: &ShockChain,
    grids: &ExoGrids,
    p: &ExogenousParams,
) -> ExoPriceTable {
    let (nz, nb) = (chain.n(), grids.nb());
    let mut q = vec![0.0; nz * nb];
    let mut dp = vec![0.0; nz * nb];
    for z in 0..nz {
        let (_, pi) = exo_continuation(z, value, chain, nb);
        for ib in 0..nb {
            dp[z * nb + ib] = pi[ib];
            q[z * nb + ib] = if grids.b[ib] <= 0.0 {
                p.risk_free_price()
            } else {
                (1.0 - pi[ib]) / (1.0 + p.rho)
            };
        }
    }
    ExoPriceTable {
        nz,
        nb,
        q,
        default_prob: dp,
    }
}

fn exo_apply_feasibility(
    value: &mut [f64],
    q: &ExoPriceTable,
    chain: &ShockChain,
    grids: &ExoGrids,
    p: &ExogenousParams,
) -> bool {
    let (nz, nb) = (chain.n(), grids.nb());
    let mut changed = false;
    for z in 0..nz {
        let mut smax = f64::NEG_INFINITY;
        for ib in 0..nb {
            let pro = (p.tau + (1.0 - p.tau) * q.at(z, ib)) * grids.b[ib];
            if pro > smax {
                smax = pro;
            }
        }
        let zval = chain.states[z];
        for ib in 0..nb {
            let feasible = zval - grids.b[ib] + smax >= 0.0;
            let alive = value[z * nb + ib] > 0.0;
            if feasible && !alive {
                value[z * nb + ib] = VALUE_FLOOR;
                changed = true;
            } else if !feasible && alive {
                value[z * nb + ib] = 0.0;
                changed = true;
            }
        }
    }
    changed
}

fn exo_value_update(
    value: &[f64],
    q: &ExoPriceTable,
    chain: &ShockChain,
    grids: &ExoGrids,
    p: &ExogenousParams,
) -> Vec<f64> {
    let (nz, nb) = (chain.n(), grids.nb());
    let mut out = vec![0.0; nz * nb];
    for z in 0..nz {
        let (w, _) = exo_continuation(z, value, chain, nb);
        let pro: Vec<f64> = (0..nb)
            .map(|ib| (p.tau + (1.0 - p.tau) * q.at(z, ib)) * grids.b[ib])
            .collect();
        let zval = chain.states[z];
        for ib in 0..nb {
            let b = grids.b[ib];
            let mut best = f64::NEG_INFINITY;
            for ibp in 0..nb {
                let d = zval - b + pro[ibp];
                if d >= 0.0 {
                    let cand = d + p.beta * w[ibp];
                    if cand > best {
                        best = cand;
                    }
                }
            }
            out[z * nb + ib] = if best > f64::NEG_INFINITY {
                f64::max(best, VALUE_FLOOR)
            } else {
                0.0
            };
        }
    }
    out
}

fn exo_iterate(
    mut bn: ExoBondTable,
    chain: &ShockChain,
    grids: &ExoGrids,
    p: &ExogenousParams,
    weights: &PhiWeights,
    tol: f64,
    max_iter: usize,
) -> Result<(ExoBondTable, Vec<f64>, Vec<usize>)> {
    let phi0 = weights.eta;
    let mut gaps = Vec::new();
    let mut churns = Vec::new();
    loop {
        let (bnext, _) = exo_sweep(&bn, chain, grids, p)?;
        let mut gap = 0.0_f64;
        let mut churn = 0usize;
        for i in 0..bn.debt.len() {
            match (bn.present[i], bnext.present[i]) {
                (true, true) => gap = gap.max((bn.debt[i] - bnext.debt[i]).abs() / phi0),
                (false, false) => {}
                _ => churn += 1,
            }
        }
        gaps.push(gap);
        churns.push(churn);
        bn = bnext;
        if churn == 0 {
            if gap == 0.0 {
                break;
            }
            if gaps.len() >= 6 {
                let r = dual::estimate_rate(&gaps, &churns);
                if gap * phi0 * r / (1.0 - r) <= tol * 0.25 {
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
    Ok((bn, gaps, churns))
}

/// Solves the exogenous cash-flow model. Same stages as the base solver:
/// dual iteration under the constant weight, inversion, re-pricing, mask
/// reconciliation, price-frozen refinement, policy extraction.
pub fn solve_exogenous(
    p: &ExogenousParams,
    chain: &ShockChain,
    grids: &ExoGrids,
    opts: &SolveOptions,
) -> Result<ExogenousEquilibrium> {
    p.validate("params")?;
    let weights = exo_constants(p, chain)?;
    let (nz, nb, nv) = (chain.n(), grids.nb(), grids.nv());

    // seed: present value of the no-debt stream
    let mut v0 = vec![0.0; nz];
    for _ in 0..200_000 {
        let mut gap = 0.0_f64;
        let mut vn = vec![0.0; nz];
        for z in 0..nz {
            let mut e = 0.0;
            for zn in 0..nz {
                e += chain.prob(z, zn) * v0[zn];
            }
            vn[z] = chain.states[z] + p.beta * e;
            gap = gap.max((vn[z] - v0[z]).abs());
        }
        v0 = vn;
        if gap <= 1e-13 {
            break;
        }
    }
    let mut b0 = ExoBondTable {
        nz,
        nv,
        debt: vec![0.0; nz * nv],
        present: vec![false; nz * nv],
    };
    for z in 0..nz {
        for iv in 0..nv {
            let c = v0[z] - grids.v[iv];
            if c >= 0.0 {
                b0.debt[z * nv + iv] = c;
                b0.present[z * nv + iv] = true;
            }
        }
    }

    type ExoSolveOut = (
        ExoBondTable,
        Vec<f64>,
        Vec<usize>,
        Vec<f64>,
        ExoPriceTable,
        usize,
        usize,
        f64,
    );
    let solve_from = |seed: ExoBondTable| -> Result<ExoSolveOut> {
        let (bstar, gaps, churns) =
            exo_iterate(seed, chain, grids, p, &weights, opts.tol, opts.max_iter)?;
        // recover the value function
        let mut value = vec![0.0; nz * nb];
        let mut sect: Vec<(f64, f64)> = Vec::new();
        for z in 0..nz {
            sect.clear();
            for iv in 0..nv {
                if bstar.present[z * nv + iv] {
                    sect.push((grids.v[iv], bstar.debt[z * nv + iv]));
                }
            }
            for ib in 0..nb {
                value[z * nb + ib] = invert_debt_section(&sect, grids.b[ib]);
            }
        }
        let mut rounds = 0;
        let q = loop {
            let q = exo_prices(&value, chain, grids, p);
            let changed = exo_apply_feasibility(&mut value, &q, chain, grids, p);
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
        let ptol = opts.tol * 0.01;
        let mut iters = 0usize;
        loop {
            let vnew = exo_value_update(&value, &q, chain, grids, p);
            let gap = value
                .iter()
                .zip(&vnew)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            value = vnew;
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
        // residual certificate
        let upd = exo_value_update(&value, &q, chain, grids, p);
        let resid = value
            .iter()
            .zip(&upd)
            .enumerate()
            .filter(|(i, _)| value[*i] > 0.0)
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max);
        Ok((bstar, gaps, churns, value, q, rounds, iters, resid))
    };

    let (bstar, gaps, churns, value, q, mask_rounds, polish_iters, resid) = solve_from(b0)?;

    let uniqueness_gap = if opts.check_uniqueness {
        let mut alt = ExoBondTable {
            nz,
            nv,
            debt: vec![p.b_hi; nz * nv],
            present: vec![true; nz * nv],
        };
        for z in 0..nz {
            trim_section(
                &mut alt.debt[z * nv..(z + 1) * nv],
                &mut alt.present[z * nv..(z + 1) * nv],
            );
        }
        let (_, _, _, v2, _, _, _, _) = solve_from(alt)?;
        Some(
            value
                .iter()
                .zip(&v2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };

    // policy extraction with the exact budget identity
    let mut policy = ExoPolicy {
        nz,
        nb,
        b_next: vec![None; nz * nb],
        b_next_idx: vec![None; nz * nb],
        dividend: vec![None; nz * nb],
    };
    for z in 0..nz {
        let (w, _) = exo_continuation(z, &value, chain, nb);
        let pro: Vec<f64> = (0..nb)
            .map(|ib| (p.tau + (1.0 - p.tau) * q.at(z, ib)) * grids.b[ib])
            .collect();
        let zval = chain.states[z];
        for ib in 0..nb {
            if value[z * nb + ib] == 0.0 {
                continue;
            }
            let b = grids.b[ib];
            let mut best = f64::NEG_INFINITY;
            let mut arg = None;
            for ibp in 0..nb {
                let d = zval - b + pro[ibp];
                if d >= 0.0 {
                    let cand = d + p.beta * w[ibp];
                    if cand > best {
                        best = cand;
                        arg = Some(ibp);
                    }
                }
            }
            if let Some(ibp) = arg {
                policy.b_next[z * nb + ib] = Some(grids.b[ibp]);
                policy.b_next_idx[z * nb + ib] = Some(ibp as u32);
                policy.dividend[z * nb + ib] = Some(zval - b + pro[ibp]);
            }
        }
    }

    let (rate, burn_in) = dual::empirical_rate(&gaps, &churns);
    let diagnostics = ConvergenceDiagnostics {
        iterations: gaps.len(),
        phi_norm_gaps: gaps,
        mask_churn: churns,
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

    Ok(ExogenousEquilibrium {
        params: p.clone(),
        chain: chain.clone(),
        grids: grids.clone(),
        weights,
        bonds: bstar,
        value,
        prices: q,
        policy,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_shock_chain;

    fn exo_params() -> ExogenousParams {
        ExogenousParams {
            tau: 0.2,
            beta: 0.96,
            rho: 0.04,
            b_lo: -0.5,
            b_hi: 2.0,
        }
    }

    #[test]
    fn adjustment_cost_examples() {
        let spec = AdjustmentCostSpec { psi: 2.0 };
        // zero investment
        assert_eq!(adjustment_cost(1.0, 0.9, 0.1, &spec).unwrap(), 0.0);
        // i = 0.1 at k = 1: 0.5 * 2 * 0.01 * 1
        assert!((adjustment_cost(1.0, 1.0, 0.1, &spec).unwrap() - 0.01).abs() < 1e-15);
        // linear in psi
        let spec4 = AdjustmentCostSpec { psi: 4.0 };
        let c2 = adjustment_cost(2.0, 3.0, 0.1, &spec).unwrap();
        let c4 = adjustment_cost(2.0, 3.0, 0.1, &spec4).unwrap();
        assert!((c4 - 2.0 * c2).abs() < 1e-12);
        // domain errors
        assert!(adjustment_cost(0.0, 1.0, 0.1, &spec).is_err());
        assert_eq!(adjustment_cost(0.0, 0.0, 0.1, &spec).unwrap(), 0.0);
    }

    #[test]
    fn exo_constants_shape() {
        let p = exo_params();
        let chain =
            build_shock_chain(vec![0.1, 1.0], vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let w = exo_constants(&p, &chain).unwrap();
        assert!(w.theta < 1.0);
        assert!((w.theta - p.debt_coef()).abs() < 1e-15);
        assert_eq!(w.slope, 0.0);
        assert!(w.eta > 0.0);
    }

    #[test]
    fn exo_no_debt_matches_present_value_oracle() {
        // i.i.d. chain, b locked at zero: V(z) = z + beta E z / (1 - beta)
        let p = ExogenousParams {
            tau: 0.2,
            beta: 0.96,
            rho: 0.04,
            b_lo: 0.0,
            b_hi: 0.0,
        };
        let chain =
            build_shock_chain(vec![0.5, 1.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let grids = build_exo_grids(&p, &chain, 2, 60, None).unwrap();
        let opts = SolveOptions {
            tol: 1e-9,
            check_uniqueness: false,
            ..SolveOptions::default()
        };
        let eq = solve_exogenous(&p, &chain, &grids, &opts).unwrap();
        let ez = 1.0;
        for z in 0..2 {
            let want = chain.states[z] + p.beta * ez / (1.0 - p.beta);
            let got = eq.value_at(z, grids.b_zero_idx);
            assert!(
                (got - want).abs() / want < 1e-6,
                "z={z}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn exo_deterministic_chain_prices_risk_free() {
        let p = exo_params();
        let chain = build_shock_chain(vec![1.0], vec![vec![1.0]]).unwrap();
        let grids = build_exo_grids(&p, &chain, 9, 40, None).unwrap();
        let opts = SolveOptions {
            tol: 1e-8,
            check_uniqueness: false,
            ..SolveOptions::default()
        };
        let eq = solve_exogenous(&p, &chain, &grids, &opts).unwrap();
        // no default is reachable: z + S > b_hi here
        for ib in 0..grids.nb() {
            assert!((eq.prices.at(0, ib) - p.risk_free_price()).abs() < 1e-12);
        }
        // value decreasing in b with slope <= -1
        for ib in 1..grids.nb() {
            let dv = eq.value_at(0, ib - 1) - eq.value_at(0, ib);
            let db = grids.b[ib] - grids.b[ib - 1];
            assert!(dv >= db - 1e-7, "slope check failed at {ib}: {dv} vs {db}");
        }
        // no saving at any state
        for ib in 0..grids.nb() {
            if let Some(bn) = eq.policy.b_next[ib] {
                assert!(bn >= -1e-12);
            }
        }
    }
}
