//! Config ingestion: one JSON document with `model`, `params`, `shocks`,
//! `grids`, and optional `solver` / `simulate` / `output_dir` sections.
//! Unknown keys are rejected; the first failure is reported with the JSON
//! path of the offending field.

use serde::Deserialize;

use crate::dual::SolveOptions;
use crate::error::{Error, Result};
use crate::model::{
    build_grids, build_shock_chain, GridSizes, Grids, KSpacing, LiquidationSpec, ModelParams,
    ShockChain,
};
use crate::sim::SimStart;
use crate::variants::{build_exo_grids, ExoGrids, ExogenousParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Base,
    Exogenous,
    Adjustment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    #[serde(default)]
    psi: Option<f64>,
    params: RawParams,
    shocks: RawShocks,
    grids: RawGrids,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    simulate: Option<RawSim>,
    #[serde(default)]
    output_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "A", default)]
    a: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    tau: f64,
    #[serde(default)]
    delta: Option<f64>,
    beta: f64,
    rho: f64,
    b_lo: f64,
    b_hi: f64,
    #[serde(default)]
    liquidation: Option<LiquidationSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShocks {
    states: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrids {
    #[serde(default)]
    k_size: Option<usize>,
    #[serde(default)]
    k_max: Option<f64>,
    #[serde(default)]
    k_spacing: Option<KSpacing>,
    b_size: usize,
    v_size: usize,
    #[serde(default)]
    v_max: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    epsilon: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    slack: Option<f64>,
    jobs: Option<usize>,
    check_uniqueness: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    paths: usize,
    horizon: usize,
    seed: u64,
    #[serde(default)]
    start: Option<RawStart>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawStart {
    z_index: usize,
    b: Option<f64>,
    k: Option<f64>,
}

/// Simulation request carried in the config.
#[derive(Debug, Clone, Copy)]
pub struct SimSettings {
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
    pub start: SimStart,
}

/// Validated base or adjustment-cost instance.
#[derive(Debug, Clone)]
pub struct BaseInstance {
    pub params: ModelParams,
    pub chain: ShockChain,
    pub grids: Grids,
    /// 0 for the base model.
    pub psi: f64,
    pub solver: SolveOptions,
    pub jobs: usize,
    pub sim: Option<SimSettings>,
    pub output_dir: Option<String>,
}

/// Validated exogenous cash-flow instance.
#[derive(Debug, Clone)]
pub struct ExoInstance {
    pub params: ExogenousParams,
    pub chain: ShockChain,
    pub grids: ExoGrids,
    pub solver: SolveOptions,
    pub jobs: usize,
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone)]
pub enum Instance {
    Base(BaseInstance),
    Exogenous(ExoInstance),
}

impl Instance {
    pub fn jobs(&self) -> usize {
        match self {
            Instance::Base(b) => b.jobs,
            Instance::Exogenous(e) => e.jobs,
        }
    }

    pub fn output_dir(&self) -> Option<&str> {
        match self {
            Instance::Base(b) => b.output_dir.as_deref(),
            Instance::Exogenous(e) => e.output_dir.as_deref(),
        }
    }
}

fn require<T>(x: Option<T>, path: &str) -> Result<T> {
    x.ok_or_else(|| Error::invalid(path, "field is required for this model"))
}

fn forbid<T>(x: &Option<T>, path: &str, kind: &str) -> Result<()> {
    if x.is_some() {
        return Err(Error::invalid(
            path,
            format!("not used by the {kind} model"),
        ));
    }
    Ok(())
}

/// Parses and validates a config document.
pub fn parse_config(bytes: &[u8]) -> Result<Instance> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::invalid(e.path().to_string(), e.inner().to_string()))?;

    let chain = build_shock_chain(raw.shocks.states, raw.shocks.transition)?;

    let solver = SolveOptions {
        epsilon: raw.solver.epsilon,
        tol: raw.solver.tol.unwrap_or(1e-8),
        max_iter: raw.solver.max_iter.unwrap_or(5000),
        slack: raw.solver.slack.unwrap_or(0.02),
        check_uniqueness: raw.solver.check_uniqueness.unwrap_or(true),
    };
    if !(solver.tol > 0.0) {
        return Err(Error::invalid("solver.tol", "tolerance must be > 0"));
    }
    if solver.max_iter == 0 {
        return Err(Error::invalid(
            "solver.max_iter",
            "need at least one iteration",
        ));
    }
    if !(solver.slack >= 0.0) {
        return Err(Error::invalid("solver.slack", "slack must be >= 0"));
    }
    let jobs = raw.solver.jobs.unwrap_or(0);

    let sim = match raw.simulate {
        None => None,
        Some(s) => {
            if s.paths == 0 {
                return Err(Error::invalid("simulate.paths", "need at least one path"));
            }
            if s.horizon == 0 {
                return Err(Error::invalid(
                    "simulate.horizon",
                    "need a horizon of at least 1",
                ));
            }
            let start = s.start.unwrap_or_default();
            if start.z_index >= chain.n() {
                return Err(Error::invalid(
                    "simulate.start.z_index",
                    format!("chain has {} states", chain.n()),
                ));
            }
            Some(SimSettings {
                paths: s.paths,
                horizon: s.horizon,
                seed: s.seed,
                start: SimStart {
                    z_index: start.z_index,
                    b: start.b,
                    k: start.k,
                },
            })
        }
    };

    match raw.model {
        ModelKind::Base | ModelKind::Adjustment => {
            let psi = match raw.model {
                ModelKind::Adjustment => {
                    let psi = require(raw.psi, "psi")?;
                    if !(psi >= 0.0) || !psi.is_finite() {
                        return Err(Error::invalid("psi", "adjustment coefficient must be >= 0"));
                    }
                    psi
                }
                _ => {
                    forbid(&raw.psi, "psi", "base")?;
                    0.0
                }
            };
            let params = ModelParams {
                a: require(raw.params.a, "params.A")?,
                alpha: require(raw.params.alpha, "params.alpha")?,
                tau: raw.params.tau,
                delta: require(raw.params.delta, "params.delta")?,
                beta: raw.params.beta,
                rho: raw.params.rho,
                b_lo: raw.params.b_lo,
                b_hi: raw.params.b_hi,
                liquidation: require(raw.params.liquidation, "params.liquidation")?,
            };
            params.validate("params")?;
            let sizes = GridSizes {
                k: require(raw.grids.k_size, "grids.k_size")?,
                b: raw.grids.b_size,
                v: raw.grids.v_size,
            };
            let grids = build_grids(
                &params,
                &chain,
                sizes,
                require(raw.grids.k_max, "grids.k_max")?,
                raw.grids.k_spacing.unwrap_or_default(),
                raw.grids.v_max,
            )?;
            Ok(Instance::Base(BaseInstance {
                params,
                chain,
                grids,
                psi,
                solver,
                jobs,
                sim,
                output_dir: raw.output_dir,
            }))
        }
        ModelKind::Exogenous => {
            forbid(&raw.psi, "psi", "exogenous")?;
            forbid(&raw.params.a, "params.A", "exogenous")?;
            forbid(&raw.params.alpha, "params.alpha", "exogenous")?;
            forbid(&raw.params.delta, "params.delta", "exogenous")?;
            forbid(&raw.params.liquidation, "params.liquidation", "exogenous")?;
            forbid(&raw.grids.k_size, "grids.k_size", "exogenous")?;
            forbid(&raw.grids.k_max, "grids.k_max", "exogenous")?;
            forbid(&raw.grids.k_spacing, "grids.k_spacing", "exogenous")?;
            if sim.is_some() {
                return Err(Error::invalid(
                    "simulate",
                    "simulation requires the capital models (base or adjustment)",
                ));
            }
            let params = ExogenousParams {
                tau: raw.params.tau,
                beta: raw.params.beta,
                rho: raw.params.rho,
                b_lo: raw.params.b_lo,
                b_hi: raw.params.b_hi,
            };
            params.validate("params")?;
            let grids = build_exo_grids(
                &params,
                &chain,
                raw.grids.b_size,
                raw.grids.v_size,
                raw.grids.v_max,
            )?;
            Ok(Instance::Exogenous(ExoInstance {
                params,
                chain,
                grids,
                solver,
                jobs,
                output_dir: raw.output_dir,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> String {
        r#"{
            "model": "base",
            "params": {
                "A": 1.0, "alpha": 0.5, "tau": 0.2, "delta": 0.1,
                "beta": 0.96, "rho": 0.04, "b_lo": -1.0, "b_hi": 2.0,
                "liquidation": {"kind": "proportional", "lambda": 0.5}
            },
            "shocks": {
                "states": [0.9, 1.1],
                "transition": [[0.8, 0.2], [0.2, 0.8]]
            },
            "grids": {"k_size": 20, "k_max": 25.0, "b_size": 12, "v_size": 12}
        }"#
        .to_string()
    }

    #[test]
    fn parses_base_config() {
        let inst = parse_config(base_json().as_bytes()).unwrap();
        match inst {
            Instance::Base(b) => {
                assert_eq!(b.psi, 0.0);
                assert_eq!(b.grids.nk(), 20);
                assert!(b.solver.check_uniqueness);
            }
            _ => panic!("expected base instance"),
        }
    }

    #[test]
    fn bad_alpha_reports_field_path() {
        let cfg = base_json().replace("\"alpha\": 0.5", "\"alpha\": 1.2");
        match parse_config(cfg.as_bytes()) {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "params.alpha"),
            other => panic!("expected invalid error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = base_json().replace("\"grids\"", "\"typo_section\": 1, \"grids\"");
        assert!(parse_config(cfg.as_bytes()).is_err());
    }

    #[test]
    fn exogenous_rejects_capital_fields() {
        let cfg = r#"{
            "model": "exogenous",
            "params": {"tau": 0.2, "beta": 0.96, "rho": 0.04, "b_lo": -0.5, "b_hi": 2.0},
            "shocks": {"states": [0.1, 1.0], "transition": [[0.9, 0.1], [0.1, 0.9]]},
            "grids": {"b_size": 10, "v_size": 10}
        }"#;
        assert!(matches!(
            parse_config(cfg.as_bytes()),
            Ok(Instance::Exogenous(_))
        ));

        let bad = cfg.replace("\"b_size\"", "\"k_size\": 5, \"b_size\"");
        match parse_config(bad.as_bytes()) {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "grids.k_size"),
            other => panic!("expected invalid error, got {other:?}"),
        }
    }

    #[test]
    fn adjustment_requires_psi() {
        let cfg = base_json().replace("\"model\": \"base\"", "\"model\": \"adjustment\"");
        match parse_config(cfg.as_bytes()) {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "psi"),
            other => panic!("expected invalid error, got {other:?}"),
        }
        let cfg2 = cfg.replace("\"params\"", "\"psi\": 1.5, \"params\"");
        assert!(matches!(parse_config(cfg2.as_bytes()), Ok(Instance::Base(b)) if b.psi == 1.5));
    }
}
