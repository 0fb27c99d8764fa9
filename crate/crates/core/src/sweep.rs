//! Low-level grid kernels shared by the operators.
//!
//! Action tables are laid out per current shock state `z` as flat arrays
//! over `(b', k')` with index `a = ib * nk + jk`, contiguous in `k'` so the
//! inner loops stay in cache.

use rayon::prelude::*;

use crate::model::{liquidation_value, Grids, ModelParams, ShockChain};
use crate::primal::{ValueTable, VALUE_FLOOR};

/// Per-solve constants: the irreversibility floor index per capital node and
/// the adjustment-cost table. `psi == 0` keeps every cost entry exactly 0.0
/// so the base model and the zero-cost variant share one code path bit for
/// bit.
pub(crate) struct SweepContext {
    pub nk: usize,
    pub invest_floor: Vec<usize>,
    psi_tab: Vec<f64>,
}

impl SweepContext {
    pub fn new(chain: &ShockChain, grids: &Grids, _p: &ModelParams, psi: f64) -> Self {
        let _ = chain;
        let nk = grids.nk();
        let delta = _p.delta;
        let invest_floor = (0..nk)
            .map(|ik| {
                let target = (1.0 - delta) * grids.k[ik];
                let mut j = grids.k.partition_point(|&x| x < target);
                // the node itself always satisfies k' >= (1 - delta) k
                if j > ik {
                    j = ik;
                }
                j
            })
            .collect();
        let mut psi_tab = vec![0.0; nk * nk];
        if psi != 0.0 {
            for ik in 0..nk {
                let k = grids.k[ik];
                for jk in 0..nk {
                    let kn = grids.k[jk];
                    psi_tab[ik * nk + jk] = if k == 0.0 {
                        if kn > 0.0 {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    } else {
                        let i = kn - (1.0 - delta) * k;
                        0.5 * psi * (i / k) * (i / k) * k
                    };
                }
            }
        }
        SweepContext {
            nk,
            invest_floor,
            psi_tab,
        }
    }

    #[inline]
    pub fn psi_cost(&self, ik: usize, jk: usize) -> f64 {
        self.psi_tab[ik * self.nk + jk]
    }

    #[inline]
    pub fn psi_row(&self, ik: usize) -> &[f64] {
        &self.psi_tab[ik * self.nk..(ik + 1) * self.nk]
    }
}

/// Net resources `R(z, k)` at grid nodes; inputs are validated nonnegative
/// at construction so this cannot fail.
#[inline]
pub(crate) fn resources_at(
    z: usize,
    ik: usize,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
) -> f64 {
    let zv = chain.states[z];
    let k = grids.k[ik];
    let f = if k == 0.0 {
        0.0
    } else {
        zv * p.a * k.powf(p.alpha)
    };
    (1.0 - p.tau) * f + (1.0 - p.delta * (1.0 - p.tau)) * k
}

/// One-step continuation expectation and default mass per action, from the
/// exact-zero pattern of `v`.
pub(crate) struct Continuation {
    /// `w[a] = E_z[ v(z', b', k') ]`
    pub w: Vec<f64>,
    /// `pi[a] = E_z[ 1{ v(z', b', k') = 0 } ]`
    pub pi: Vec<f64>,
}

pub(crate) fn continuation_tables(
    z: usize,
    v: &ValueTable,
    chain: &ShockChain,
    grids: &Grids,
) -> Continuation {
    let (nz, nb, nk) = (chain.n(), grids.nb(), grids.nk());
    let mut w = vec![0.0; nb * nk];
    let mut pi = vec![0.0; nb * nk];
    for zn in 0..nz {
        let pr = chain.prob(z, zn);
        if pr == 0.0 {
            continue;
        }
        let row = &v.v[zn * nb * nk..(zn + 1) * nb * nk];
        for a in 0..nb * nk {
            let val = row[a];
            w[a] += pr * val;
            if val == 0.0 {
                pi[a] += pr;
            }
        }
    }
    for x in pi.iter_mut() {
        if *x > 1.0 {
            *x = 1.0;
        }
    }
    Continuation { w, pi }
}

/// Cash raised per action from the lender's break-even price, written in the
/// capped form `tau b' + (1-tau)/(1+rho) * min{b', b'(1-pi) + L(k') pi}` for
/// positive issues and `[tau + (1-tau)/(1+rho)] b'` otherwise.
pub(crate) fn proceeds_from_default_mass(
    z: usize,
    pi: &[f64],
    grids: &Grids,
    p: &ModelParams,
) -> Vec<f64> {
    let _ = z;
    let (nb, nk) = (grids.nb(), grids.nk());
    let disc = (1.0 - p.tau) / (1.0 + p.rho);
    let mut pro = vec![0.0; nb * nk];
    for ib in 0..nb {
        let bp = grids.b[ib];
        for jk in 0..nk {
            let a = ib * nk + jk;
            let j = if bp <= 0.0 {
                bp
            } else {
                let l = liquidation_value(grids.k[jk], &p.liquidation);
                f64::min(bp, bp * (1.0 - pi[a]) + l * pi[a])
            };
            pro[a] = p.tau * bp + disc * j;
        }
    }
    pro
}

/// Cash raised per action from a frozen price table:
/// `[tau + (1 - tau) q(z, b', k')] b'`.
pub(crate) fn proceeds_from_prices(
    z: usize,
    q: &crate::pricing::PriceTable,
    grids: &Grids,
    p: &ModelParams,
) -> Vec<f64> {
    let (nb, nk) = (grids.nb(), grids.nk());
    let mut pro = vec![0.0; nb * nk];
    for ib in 0..nb {
        let bp = grids.b[ib];
        for jk in 0..nk {
            let a = ib * nk + jk;
            pro[a] = (p.tau + (1.0 - p.tau) * q.at(z, ib, jk)) * bp;
        }
    }
    pro
}

/// One Bellman update of `v` holding the price table fixed. This map is a
/// plain beta-contraction; iterating it is the refinement stage of the
/// solver and a single application is the residual certificate.
///
/// A state maps to exactly 0 when no action satisfies `d >= 0`, and feasible
/// values are floored at `VALUE_FLOOR`, so the zero pattern equals the
/// feasibility mask implied by `q` and is invariant under iteration.
pub(crate) fn value_update_given_prices(
    v: &ValueTable,
    q: &crate::pricing::PriceTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
    psi: f64,
) -> ValueTable {
    let (nz, nb, nk) = (chain.n(), grids.nb(), grids.nk());
    let ctx = SweepContext::new(chain, grids, p, psi);
    let mut out = ValueTable::zeros(nz, nb, nk);
    for z in 0..nz {
        let cont = continuation_tables(z, v, chain, grids);
        let pro = proceeds_from_prices(z, q, grids, p);
        // g[a] = cash at zero dividend excluding R(z,k) and psi
        let mut g = vec![0.0; nb * nk];
        let mut h = vec![0.0; nb * nk];
        for a in 0..nb * nk {
            g[a] = pro[a] - grids.k[a % nk];
            h[a] = g[a] + p.beta * cont.w[a];
        }
        let slice = &mut out.v[z * nb * nk..(z + 1) * nb * nk];
        // rows indexed by b; each row fills all k nodes
        slice.par_chunks_mut(nk).enumerate().for_each(|(ib, row)| {
            let b = grids.b[ib];
            for (ik, cell) in row.iter_mut().enumerate() {
                let rk = resources_at(z, ik, chain, grids, p);
                let head = rk - b;
                let ps = ctx.psi_row(ik);
                let mut best = f64::NEG_INFINITY;
                for ibp in 0..nb {
                    let base = ibp * nk;
                    for jk in ctx.invest_floor[ik]..nk {
                        let a = base + jk;
                        let cash = g[a] - ps[jk];
                        if head + cash >= 0.0 {
                            let cand = h[a] - ps[jk];
                            if cand > best {
                                best = cand;
                            }
                        }
                    }
                }
                *cell = if best > f64::NEG_INFINITY {
                    f64::max(rk - b + best, VALUE_FLOOR)
                } else {
                    0.0
                };
            }
        });
    }
    out
}
