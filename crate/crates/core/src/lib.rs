//! Equilibrium solver for a trade-off theory firm that issues one-period
//! defaultable debt, invests in capital, and pays dividends.
//!
//! The lender's break-even requirement feeds the value function back into
//! the price of debt, so the textbook Bellman iteration need not contract
//! (module [`primal`] reproduces the failure). The solver instead iterates
//! the inverse problem, the supportable-debt function `B(z, k, v)`, which
//! contracts under a capital-weighted supremum norm ([`dual`]). From the
//! unique fixed point it recovers the value function, break-even price
//! schedule, state-dependent capital/debt/dividend targets ([`equilibrium`]),
//! two model variants ([`variants`]), and seeded panel simulation ([`sim`]).

// Negated comparisons (`!(x > 0.0)`) are load-bearing: they reject NaN,
// which `x <= 0.0` lets through. Index loops over parallel flat arrays are
// the house style for the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dual;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod pricing;
pub mod primal;
pub mod sim;
mod sweep;
pub mod util;
pub mod variants;

pub use config::{parse_config, BaseInstance, ExoInstance, Instance, ModelKind, SimSettings};
pub use dual::{
    contraction_constants, default_epsilon, dual_operator, dual_operator_with_adjustment,
    monotone_invert, monotone_invert_back, phi, phi_norm, solve_equilibrium, BondTable,
    ConvergenceDiagnostics, Equilibrium, PhiWeights, SolveOptions,
};
pub use equilibrium::{
    autarky_target, autarky_target_grid, autarky_value, bond_revenue_n, capital_target,
    classify_state, compute_targets, dividend_target, feasible_set, max_debt_revenue_s,
    policy_extract, CaseLabel, FeasibilityMask, Policy, Targets,
};
pub use error::{Error, Result};
pub use model::{
    build_grids, build_shock_chain, default_v_max, liquidation_value, production, resources,
    GridSizes, Grids, KSpacing, LiquidationSpec, ModelParams, ShockChain,
};
pub use pricing::{break_even_price, price_schedule, PriceTable};
pub use primal::{
    bellman_residual, noncontraction_demo, primal_operator, DemoParams, NonContractionReport,
    ValueTable, VALUE_FLOOR,
};
pub use sim::{panel_stats, simulate_paths, Panel, PanelStats, PathRecord, SimStart, RNG_ID};
pub use variants::{
    adjustment_cost, build_exo_grids, exo_constants, solve_exogenous, solve_with_adjustment_costs,
    AdjustmentCostSpec, ExoGrids, ExogenousEquilibrium, ExogenousParams,
};
