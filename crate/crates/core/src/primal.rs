//! The primal Bellman operator, the demonstration that it fails to contract,
//! and the Bellman-residual certificate for converged solutions.
//!
//! The operator recomputes debt prices from the candidate value function on
//! every application. That feedback is exactly what breaks the usual
//! sup-norm contraction argument; the demo reproduces the two-point
//! counterexample in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grids, ModelParams, ShockChain};
use crate::pricing::PriceTable;
use crate::sweep;

/// Strictly positive floor written on feasible states so that exact zero
/// marks default and nothing else.
pub const VALUE_FLOOR: f64 = 1e-12;

/// Equity value on the `(z, b, k)` grid. Exactly 0 on default states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub nz: usize,
    pub nb: usize,
    pub nk: usize,
    pub v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(nz: usize, nb: usize, nk: usize) -> Self {
        ValueTable {
            nz,
            nb,
            nk,
            v: vec![0.0; nz * nb * nk],
        }
    }

    pub fn constant(nz: usize, nb: usize, nk: usize, x: f64) -> Self {
        ValueTable {
            nz,
            nb,
            nk,
            v: vec![x; nz * nb * nk],
        }
    }

    #[inline]
    pub fn idx(&self, z: usize, ib: usize, ik: usize) -> usize {
        (z * self.nb + ib) * self.nk + ik
    }

    #[inline]
    pub fn at(&self, z: usize, ib: usize, ik: usize) -> f64 {
        self.v[self.idx(z, ib, ik)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, ib: usize, ik: usize, x: f64) {
        let i = self.idx(z, ib, ik);
        self.v[i] = x;
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_diff(&self, other: &ValueTable) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One application of the primal operator: maximize `d + beta E v(x')` over
/// grid policies, with the price of new debt recomputed from `v` itself.
/// States with an empty constraint set map to 0.
pub fn primal_operator(
    v: &ValueTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
) -> Result<ValueTable> {
    if v.v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::Precondition(
            "primal operator requires a finite nonnegative value table".into(),
        ));
    }
    let (nz, nb, nk) = (chain.n(), grids.nb(), grids.nk());
    let ctx = sweep::SweepContext::new(chain, grids, p, 0.0);
    let mut out = ValueTable::zeros(nz, nb, nk);
    for z in 0..nz {
        let cont = sweep::continuation_tables(z, v, chain, grids);
        let pro = sweep::proceeds_from_default_mass(z, &cont.pi, grids, p);
        for ik in 0..nk {
            let rk = sweep::resources_at(z, ik, chain, grids, p);
            for ib in 0..nb {
                let b = grids.b[ib];
                let mut best = f64::NEG_INFINITY;
                for ibp in 0..nb {
                    let base = ibp * nk;
                    for jk in ctx.invest_floor[ik]..nk {
                        let a = base + jk;
                        let cash = pro[a] - grids.k[jk] - ctx.psi_cost(ik, jk);
                        if rk - b + cash >= 0.0 {
                            let cand = cash + p.beta * cont.w[a];
                            if cand > best {
                                best = cand;
                            }
                        }
                    }
                }
                if best > f64::NEG_INFINITY {
                    out.set(z, ib, ik, rk - b + best);
                }
            }
        }
    }
    Ok(out)
}

/// Certificate for a converged pair `(V, q)`: the largest gap between `V`
/// and one Bellman update holding `q` fixed, over states with `V > 0`.
/// Returns the gap and a witness state `(z, ib, ik)`.
pub fn bellman_residual(
    v: &ValueTable,
    q: &PriceTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
) -> (f64, Option<(usize, usize, usize)>) {
    let updated = sweep::value_update_given_prices(v, q, chain, grids, p, psi);
    let mut worst = 0.0;
    let mut witness = None;
    for z in 0..v.nz {
        for ib in 0..v.nb {
            for ik in 0..v.nk {
                if v.at(z, ib, ik) == 0.0 {
                    continue;
                }
                let r = (v.at(z, ib, ik) - updated.at(z, ib, ik)).abs();
                if r > worst {
                    worst = r;
                    witness = Some((z, ib, ik));
                }
            }
        }
    }
    (worst, witness)
}

// ---------------------------------------------------------------------------
// Non-contraction demonstration
// ---------------------------------------------------------------------------

/// Inputs of the two-point counterexample: a deterministic shock, zero
/// taxes, square-root liquidation `L(k) = 2 nu sqrt(k)`, and the pair of
/// candidate functions `v1 = 0`, `v2 = eps`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DemoParams {
    pub nu: f64,
    pub eps: f64,
    pub b_hi: f64,
    pub k: f64,
    pub b: f64,
    pub z: f64,
    pub a: f64,
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            nu: 0.1,
            eps: 0.001,
            b_hi: 1.0,
            k: 0.01,
            b: 0.0,
            z: 1.0,
            a: 1.0,
            alpha: 0.5,
            delta: 0.1,
            rho: 0.0,
            beta: 0.96,
        }
    }
}

/// Outcome of the counterexample evaluation at the witness state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonContractionReport {
    /// `||v2 - v1||`, equal to eps by construction.
    pub norm_v_diff: f64,
    /// `||S v2 - S v1||` evaluated at the witness state (a lower bound on
    /// the uniform norm, which is all the argument needs).
    pub norm_sv_diff: f64,
    pub sv1_at_witness: f64,
    pub sv2_at_witness: f64,
    /// `(z, b, k)` attaining the gap.
    pub witness_state: (f64, f64, f64),
    /// The inner maximizer `(nu / (1 + rho))^2` of the all-default problem.
    pub inner_k_opt: f64,
    /// `S v1` at the witness; must be strictly positive for the feasible
    /// set to be non-empty. Reported so callers can see the margin.
    pub positivity_margin: f64,
    /// True when the gap exceeds eps, i.e. the operator expanded the pair.
    pub verdict: bool,
}

/// Evaluates both closed forms off-grid and reports the gap.
///
/// `S v1` prices all debt against liquidation only (every continuation
/// defaults), so the inner problem is `sup_k' { L(k')/(1+rho) - k' }` with
/// maximizer `(nu/(1+rho))^2`. `S v2` prices all debt risk-free and issues
/// at the cap. Preconditions mirror the side conditions of the example and
/// name the violated inequality.
pub fn noncontraction_demo(d: &DemoParams) -> Result<NonContractionReport> {
    if !(d.nu > 0.0) {
        return Err(Error::Precondition("nu must be > 0".into()));
    }
    if !(d.eps > 0.0) {
        return Err(Error::Precondition("eps must be > 0".into()));
    }
    if !(d.b_hi > 0.0) {
        return Err(Error::Precondition("b_hi must be > 0".into()));
    }
    if !(d.k >= 0.0 && d.z >= 0.0 && d.a > 0.0) {
        return Err(Error::Precondition("need k >= 0, z >= 0, a > 0".into()));
    }
    if !(d.alpha > 0.0 && d.alpha < 1.0) {
        return Err(Error::Precondition("alpha must lie in (0, 1)".into()));
    }
    if !(d.delta > 0.0 && d.delta <= 1.0) {
        return Err(Error::Precondition("delta must lie in (0, 1]".into()));
    }
    if !(d.rho >= 0.0) {
        return Err(Error::Precondition("rho must be >= 0".into()));
    }
    if !(d.beta > 0.0 && d.beta < 1.0) {
        return Err(Error::Precondition("beta must lie in (0, 1)".into()));
    }

    let kopt = (d.nu / (1.0 + d.rho)).powi(2);
    let carry = (1.0 - d.delta) * d.k;
    if kopt < carry {
        return Err(Error::Precondition(format!(
            "(nu/(1+rho))^2 = {kopt:e} < (1-delta)k = {carry:e}; \
             the all-default inner maximizer must clear the irreversibility floor"
        )));
    }

    let f = if d.k == 0.0 {
        0.0
    } else {
        d.z * d.a * d.k.powf(d.alpha)
    };
    let sv1 = f + carry - d.b + kopt;
    if sv1 <= 0.0 {
        return Err(Error::Precondition(format!(
            "S v1 = {sv1:e} <= 0 at the witness; decrease b to keep the \
             constraint set non-empty"
        )));
    }
    let sv2 = f + carry - d.b + d.beta * d.eps + d.b_hi / (1.0 + d.rho) - carry;
    let gap = sv2 - sv1;

    Ok(NonContractionReport {
        norm_v_diff: d.eps,
        norm_sv_diff: gap,
        sv1_at_witness: sv1,
        sv2_at_witness: sv2,
        witness_state: (d.z, d.b, d.k),
        inner_k_opt: kopt,
        positivity_margin: sv1,
        verdict: gap > d.eps,
    })
}
