//! Break-even debt pricing implied by a candidate value function.
//!
//! The lender prices one-period debt so that expected repayment plus
//! liquidation recovery earns the risk-free rate, and never pays more than
//! the risk-free price.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{liquidation_value, Grids, ModelParams, ShockChain};
use crate::primal::ValueTable;
use crate::util::fmt_sig12;

/// Price schedule `q(z, b', k')` with the default mass and cap flag per cell.
/// Layout is row-major over `(z, b', k')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub nz: usize,
    pub nb: usize,
    pub nk: usize,
    pub q: Vec<f64>,
    pub default_prob: Vec<f64>,
    pub capped: Vec<bool>,
}

impl PriceTable {
    #[inline]
    pub fn idx(&self, z: usize, ib: usize, ik: usize) -> usize {
        (z * self.nb + ib) * self.nk + ik
    }

    #[inline]
    pub fn at(&self, z: usize, ib: usize, ik: usize) -> f64 {
        self.q[self.idx(z, ib, ik)]
    }

    /// Writes the schedule as CSV with columns
    /// `(z, b_next, k_next, q, default_prob, capped)`.
    pub fn write_csv<W: Write>(
        &self,
        out: &mut W,
        chain: &ShockChain,
        grids: &Grids,
    ) -> Result<()> {
        writeln!(out, "z,b_next,k_next,q,default_prob,capped")?;
        for z in 0..self.nz {
            for ib in 0..self.nb {
                for ik in 0..self.nk {
                    let i = self.idx(z, ib, ik);
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        fmt_sig12(chain.states[z]),
                        fmt_sig12(grids.b[ib]),
                        fmt_sig12(grids.k[ik]),
                        fmt_sig12(self.q[i]),
                        fmt_sig12(self.default_prob[i]),
                        self.capped[i]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Break-even price of one unit of face value, given the one-step default
/// mass at `(b_next, k_next)`. Non-positive issues trade at the risk-free
/// price. Returns the price and whether the risk-free cap was binding.
pub fn break_even_price(
    b_next: f64,
    k_next: f64,
    default_prob: f64,
    p: &ModelParams,
) -> Result<(f64, bool)> {
    if !(0.0..=1.0).contains(&default_prob) {
        return Err(Error::Domain(format!(
            "default probability {default_prob} outside [0, 1]"
        )));
    }
    let rf = p.risk_free_price();
    if b_next <= 0.0 {
        return Ok((rf, false));
    }
    let recovery = liquidation_value(k_next, &p.liquidation);
    let raw = (b_next * (1.0 - default_prob) + recovery * default_prob) / (b_next * (1.0 + p.rho));
    if raw > rf {
        Ok((rf, true))
    } else {
        Ok((raw, false))
    }
}

/// Prices every `(z, b', k')` cell against the default pattern of `v`.
/// Default states are read by exact-zero comparison; the solver stores 0
/// only on default states.
pub fn price_schedule(
    v: &ValueTable,
    chain: &ShockChain,
    grids: &Grids,
    p: &ModelParams,
) -> Result<PriceTable> {
    let (nz, nb, nk) = (chain.n(), grids.nb(), grids.nk());
    let mut q = vec![0.0; nz * nb * nk];
    let mut default_prob = vec![0.0; nz * nb * nk];
    let mut capped = vec![false; nz * nb * nk];
    for z in 0..nz {
        for ib in 0..nb {
            for ik in 0..nk {
                let mut pi = 0.0;
                for zn in 0..nz {
                    if v.at(zn, ib, ik) == 0.0 {
                        pi += chain.prob(z, zn);
                    }
                }
                let pi = pi.min(1.0);
                let (price, cap) = break_even_price(grids.b[ib], grids.k[ik], pi, p)?;
                let i = (z * nb + ib) * nk + ik;
                q[i] = price;
                default_prob[i] = pi;
                capped[i] = cap;
            }
        }
    }
    Ok(PriceTable {
        nz,
        nb,
        nk,
        q,
        default_prob,
        capped,
    })
}
