//! Structural primitives: parameters, the exogenous shock chain, grids, and
//! the per-period functions (production, net resources, liquidation value).
//!
//! Everything here is immutable after construction and safe to share across
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Liquidation payoff handed to debt holders on default, as a function of
/// next-period capital.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiquidationSpec {
    /// `L(k) = lambda * k` with `lambda` in [0, 1].
    Proportional { lambda: f64 },
    /// `L(k) = 2 * nu * sqrt(k)` with `nu > 0`.
    SqrtForm { nu: f64 },
}

impl LiquidationSpec {
    pub fn value(&self, k_next: f64) -> f64 {
        match *self {
            LiquidationSpec::Proportional { lambda } => lambda * k_next,
            LiquidationSpec::SqrtForm { nu } => 2.0 * nu * k_next.sqrt(),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        match *self {
            LiquidationSpec::Proportional { lambda } => {
                if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
                    return Err(Error::invalid(
                        format!("{path}.lambda"),
                        "recovery fraction must lie in [0, 1]",
                    ));
                }
            }
            LiquidationSpec::SqrtForm { nu } => {
                if !(nu > 0.0) || !nu.is_finite() {
                    return Err(Error::invalid(format!("{path}.nu"), "scale must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Structural constants of the firm problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Productivity scale, > 0.
    pub a: f64,
    /// Production curvature, in (0, 1).
    pub alpha: f64,
    /// Corporate tax rate, in [0, 1).
    pub tau: f64,
    /// Depreciation rate, in (0, 1].
    pub delta: f64,
    /// Discount factor, in (0, 1).
    pub beta: f64,
    /// Risk-free rate, > 0.
    pub rho: f64,
    /// Lower debt bound (savings), <= 0.
    pub b_lo: f64,
    /// Upper debt bound, the finite no-Ponzi cap, >= 0.
    pub b_hi: f64,
    pub liquidation: LiquidationSpec,
}

impl ModelParams {
    /// Validates every invariant, reporting the first failure with the JSON
    /// path of the offending field under `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid(field("A"), "productivity scale must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                field("alpha"),
                "curvature must lie in (0, 1)",
            ));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid(field("tau"), "tax rate must lie in [0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(
                field("delta"),
                "depreciation must lie in (0, 1]",
            ));
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
        // Needed for the no-saving result: issuing at the risk-free price
        // must weakly dominate discounting.
        if self.debt_coef() < self.beta {
            return Err(Error::invalid(
                field("beta"),
                format!(
                    "tau + (1 - tau)/(1 + rho) = {:.12} must be >= beta",
                    self.debt_coef()
                ),
            ));
        }
        self.liquidation
            .validate(&format!("{prefix}.liquidation"))?;
        Ok(())
    }

    /// Price of risk-free one-period debt, `1/(1 + rho)`.
    #[inline]
    pub fn risk_free_price(&self) -> f64 {
        1.0 / (1.0 + self.rho)
    }

    /// Revenue per unit of face value issued at the risk-free price,
    /// `tau + (1 - tau)/(1 + rho)`.
    #[inline]
    pub fn debt_coef(&self) -> f64 {
        self.tau + (1.0 - self.tau) / (1.0 + self.rho)
    }
}

/// Revenue `F(z, k) = z * A * k^alpha`.
pub fn production(z: f64, k: f64, p: &ModelParams) -> Result<f64> {
    if z < 0.0 || k < 0.0 {
        return Err(Error::Domain(format!(
            "production requires z >= 0 and k >= 0 (got z={z}, k={k})"
        )));
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    Ok(z * p.a * k.powf(p.alpha))
}

/// Per-period net resources apart from debt,
/// `R(z, k) = (1 - tau) F(z, k) + [1 - delta (1 - tau)] k`.
pub fn resources(z: f64, k: f64, p: &ModelParams) -> Result<f64> {
    let f = production(z, k, p)?;
    Ok((1.0 - p.tau) * f + (1.0 - p.delta * (1.0 - p.tau)) * k)
}

/// Recovery paid to debt holders on default.
pub fn liquidation_value(k_next: f64, spec: &LiquidationSpec) -> f64 {
    spec.value(k_next)
}

// ---------------------------------------------------------------------------
// Shock chain
// ---------------------------------------------------------------------------

/// Finite bounded Markov chain for the productivity shock. `transition` is
/// row-major: `transition[i * n + j] = Pr(z' = states[j] | z = states[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockChain {
    pub states: Vec<f64>,
    pub transition: Vec<f64>,
    pub z_bar: f64,
}

/// Row-stochasticity tolerance used at construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Validates and assembles a shock chain.
pub fn build_shock_chain(states: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<ShockChain> {
    if states.is_empty() {
        return Err(Error::invalid(
            "shocks.states",
            "state list must be non-empty",
        ));
    }
    for (i, z) in states.iter().enumerate() {
        if !z.is_finite() || *z < 0.0 {
            return Err(Error::invalid(
                format!("shocks.states[{i}]"),
                "shock values must be finite and >= 0",
            ));
        }
    }
    let n = states.len();
    if transition.len() != n {
        return Err(Error::invalid(
            "shocks.transition",
            format!("expected {n} rows, got {}", transition.len()),
        ));
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in transition.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid(
                format!("shocks.transition[{i}]"),
                format!("expected {n} entries, got {}", row.len()),
            ));
        }
        let mut sum = 0.0;
        for (j, pij) in row.iter().enumerate() {
            if !pij.is_finite() || *pij < 0.0 {
                return Err(Error::invalid(
                    format!("shocks.transition[{i}][{j}]"),
                    "transition probabilities must be finite and >= 0",
                ));
            }
            sum += pij;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(
                format!("shocks.transition[{i}]"),
                format!("row sums to {sum:.15}, expected 1 within {ROW_SUM_TOL:e}"),
            ));
        }
        flat.extend_from_slice(row);
    }
    let z_bar = states.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ShockChain {
        states,
        transition: flat,
        z_bar,
    })
}

impl ShockChain {
    #[inline]
    pub fn n(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n() + to]
    }

    /// One-step conditional mean of the shock, `E[z' | z_i]`.
    pub fn expected_shock(&self, from: usize) -> f64 {
        let n = self.n();
        let mut e = 0.0;
        for j in 0..n {
            e += self.transition[from * n + j] * self.states[j];
        }
        e
    }

    /// A one-state deterministic chain.
    pub fn deterministic(z: f64) -> Result<ShockChain> {
        build_shock_chain(vec![z], vec![vec![1.0]])
    }
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Spacing rule for the capital grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KSpacing {
    #[default]
    Uniform,
    /// Quadratic stretch toward `k_max`, concentrating nodes at low capital
    /// where the production function is steep.
    Geometric,
}

/// Requested grid sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSizes {
    pub k: usize,
    pub b: usize,
    pub v: usize,
}

/// Discretization of the state space. Invariants: `b` contains 0 as an exact
/// node, `v[0] == 0`, all axes strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub k: Vec<f64>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    /// Index of the exact-zero node in `b`.
    pub b_zero_idx: usize,
}

impl Grids {
    #[inline]
    pub fn nk(&self) -> usize {
        self.k.len()
    }
    #[inline]
    pub fn nb(&self) -> usize {
        self.b.len()
    }
    #[inline]
    pub fn nv(&self) -> usize {
        self.v.len()
    }

    /// Largest spacing of the v axis, the interpolation-cell bound used by
    /// the duality checks.
    pub fn max_v_cell(&self) -> f64 {
        self.v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn max_b_cell(&self) -> f64 {
        if self.b.len() < 2 {
            return 0.0;
        }
        self.b.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn max_k_cell(&self) -> f64 {
        self.k.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Default upper bound for the value grid: an affine bound on per-period
/// payouts capitalized at `1/(1 - beta)`. Dominates any attainable value on
/// the capital grid.
pub fn default_v_max(p: &ModelParams, chain: &ShockChain, k_max: f64) -> f64 {
    ((1.0 - p.tau) * chain.z_bar * p.a * k_max.powf(p.alpha) + p.tau * p.delta * k_max + p.b_hi)
        / (1.0 - p.beta)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    out[n - 1] = hi;
    out
}

/// Builds validated grids. The b axis always carries an exact zero node; it
/// collapses to the single node 0 when `b_lo == b_hi == 0` (the no-debt
/// instance). `v_max = None` selects the default bound.
pub fn build_grids(
    p: &ModelParams,
    chain: &ShockChain,
    sizes: GridSizes,
    k_max: f64,
    k_spacing: KSpacing,
    v_max: Option<f64>,
) -> Result<Grids> {
    if sizes.k < 2 {
        return Err(Error::invalid(
            "grids.k_size",
            "need at least 2 capital nodes",
        ));
    }
    if sizes.v < 2 {
        return Err(Error::invalid(
            "grids.v_size",
            "need at least 2 value nodes",
        ));
    }
    if !(k_max > 0.0) || !k_max.is_finite() {
        return Err(Error::invalid(
            "grids.k_max",
            "capital upper bound must be > 0",
        ));
    }
    let k = match k_spacing {
        KSpacing::Uniform => linspace(0.0, k_max, sizes.k),
        KSpacing::Geometric => {
            let n = sizes.k;
            (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    k_max * t * t
                })
                .collect()
        }
    };

    let b = if p.b_lo == 0.0 && p.b_hi == 0.0 {
        vec![0.0]
    } else {
        if sizes.b < 2 {
            return Err(Error::invalid("grids.b_size", "need at least 2 bond nodes"));
        }
        if p.b_lo == 0.0 {
            linspace(0.0, p.b_hi, sizes.b)
        } else if p.b_hi == 0.0 {
            linspace(p.b_lo, 0.0, sizes.b)
        } else {
            // Split the node budget across the sign change so 0 is exact.
            let range = p.b_hi - p.b_lo;
            let n_seg = sizes.b - 1;
            let mut left = ((-p.b_lo / range) * n_seg as f64).round() as usize;
            left = left.clamp(1, n_seg - 1);
            let mut nodes = linspace(p.b_lo, 0.0, left + 1);
            nodes.extend_from_slice(&linspace(0.0, p.b_hi, n_seg - left + 1)[1..]);
            nodes
        }
    };
    let b_zero_idx = b
        .iter()
        .position(|&x| x == 0.0)
        .expect("b grid always contains an exact zero node");

    let vm = match v_max {
        Some(x) => {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::invalid(
                    "grids.v_max",
                    "value upper bound must be > 0",
                ));
            }
            x
        }
        None => default_v_max(p, chain, k_max),
    };
    let v = linspace(0.0, vm, sizes.v);

    Ok(Grids {
        k,
        b,
        v,
        b_zero_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base_params() -> ModelParams {
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
    fn production_matches_examples() {
        let mut p = base_params();
        p.tau = 0.0;
        assert!((production(1.0, 4.0, &p).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(production(0.9, 0.0, &p).unwrap(), 0.0);
        // high-precision oracle: 1.1 * sqrt(10)
        assert!((production(1.1, 10.0, &p).unwrap() - 3.478505426185217).abs() < 1e-12);
        assert!(production(-1.0, 4.0, &p).is_err());
        assert!(production(1.0, -0.5, &p).is_err());
    }

    #[test]
    fn resources_matches_examples() {
        let mut p = base_params();
        p.tau = 0.0;
        assert!((resources(1.0, 4.0, &p).unwrap() - 5.6).abs() < 1e-12);
        assert_eq!(resources(1.0, 0.0, &p).unwrap(), 0.0);
        let p2 = base_params();
        assert!((resources(1.0, 4.0, &p2).unwrap() - 5.28).abs() < 1e-12);
    }

    #[test]
    fn liquidation_matches_examples() {
        assert_eq!(
            liquidation_value(10.0, &LiquidationSpec::Proportional { lambda: 0.5 }),
            5.0
        );
        let sq = LiquidationSpec::SqrtForm { nu: 0.1 };
        assert!((liquidation_value(0.01, &sq) - 0.02).abs() < 1e-15);
        assert_eq!(liquidation_value(0.0, &sq), 0.0);
    }

    #[test]
    fn liquidation_non_decreasing_on_grid() {
        for spec in [
            LiquidationSpec::Proportional { lambda: 0.3 },
            LiquidationSpec::SqrtForm { nu: 0.2 },
        ] {
            let mut prev = -1.0;
            for i in 0..50 {
                let k = i as f64 * 0.5;
                let l = liquidation_value(k, &spec);
                assert!(l >= prev);
                prev = l;
            }
        }
    }

    #[test]
    fn production_increasing_concave_in_k() {
        let p = base_params();
        let ks: Vec<f64> = (1..60).map(|i| i as f64 * 0.4).collect();
        let f: Vec<f64> = ks
            .iter()
            .map(|&k| production(1.0, k, &p).unwrap())
            .collect();
        for w in f.windows(2) {
            assert!(w[1] > w[0], "production must be strictly increasing");
        }
        let diffs: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
        for w in diffs.windows(2) {
            assert!(w[1] < w[0], "first differences must shrink (concavity)");
        }
        // resources strictly increasing too
        let r: Vec<f64> = ks.iter().map(|&k| resources(1.0, k, &p).unwrap()).collect();
        for w in r.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn chain_construction_and_errors() {
        let c = ShockChain::deterministic(1.0).unwrap();
        assert_eq!(c.n(), 1);
        assert_eq!(c.z_bar, 1.0);

        let c2 = build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        assert_eq!(c2.z_bar, 1.1);
        assert!((c2.expected_shock(0) - (0.8 * 0.9 + 0.2 * 1.1)).abs() < 1e-15);

        assert!(build_shock_chain(vec![1.0], vec![vec![0.99]]).is_err());
        assert!(build_shock_chain(vec![-0.1], vec![vec![1.0]]).is_err());
        assert!(build_shock_chain(vec![1.0, 2.0], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn params_validation() {
        let p = base_params();
        assert!(p.validate("params").is_ok());

        let mut bad = base_params();
        bad.alpha = 1.2;
        match bad.validate("params") {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "params.alpha"),
            other => panic!("expected validation error, got {other:?}"),
        }

        // debt coefficient below beta must be rejected
        let mut bad2 = base_params();
        bad2.rho = 0.5;
        bad2.beta = 0.99;
        assert!(bad2.validate("params").is_err());
    }

    #[test]
    fn grids_contract() {
        let p = base_params();
        let chain =
            build_shock_chain(vec![0.9, 1.1], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes {
                k: 50,
                b: 40,
                v: 40,
            },
            25.0,
            KSpacing::Uniform,
            None,
        )
        .unwrap();
        assert_eq!(g.b[g.b_zero_idx], 0.0);
        assert_eq!(g.v[0], 0.0);
        assert_eq!(g.k[0], 0.0);
        assert!((g.v[g.nv() - 1] - 172.5).abs() < 1e-9, "default v_max");
        for axis in [&g.k, &g.b, &g.v] {
            for w in axis.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
        // b grid spans [-1, 2]
        assert_eq!(g.b[0], -1.0);
        assert_eq!(g.b[g.nb() - 1], 2.0);
    }

    #[test]
    fn degenerate_no_debt_grid() {
        let mut p = base_params();
        p.b_lo = 0.0;
        p.b_hi = 0.0;
        let chain = ShockChain::deterministic(1.0).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: 10, b: 8, v: 10 },
            10.0,
            KSpacing::Uniform,
            None,
        )
        .unwrap();
        assert_eq!(g.nb(), 1);
        assert_eq!(g.b[0], 0.0);
    }

    #[test]
    fn geometric_spacing_concentrates_low_k() {
        let p = base_params();
        let chain = ShockChain::deterministic(1.0).unwrap();
        let g = build_grids(
            &p,
            &chain,
            GridSizes { k: 20, b: 5, v: 5 },
            16.0,
            KSpacing::Geometric,
            None,
        )
        .unwrap();
        assert_eq!(g.k[0], 0.0);
        assert_eq!(g.k[19], 16.0);
        let first = g.k[1] - g.k[0];
        let last = g.k[19] - g.k[18];
        assert!(first < last);
    }
}
