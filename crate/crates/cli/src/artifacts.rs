//! Artifact emission: manifest, equilibrium JSON, and the CSV tables.
//! Everything is written with 12 significant digits and no timestamps, so
//! re-running a config reproduces byte-identical bodies.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use tradeq_core::util::{fmt_opt_sig12, fmt_sig12};
use tradeq_core::{CaseLabel, Equilibrium, ExogenousEquilibrium, Panel};

pub fn config_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn write_manifest(
    dir: &Path,
    config_bytes: &[u8],
    model: &str,
    grid_sizes: &[(&str, usize)],
) -> Result<()> {
    let sizes: serde_json::Map<String, serde_json::Value> = grid_sizes
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let manifest = json!({
        "tool": "tradeq",
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config_sha256(config_bytes),
        "model": model,
        "grid_sizes": sizes,
    });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )
    .context("writing manifest.json")?;
    Ok(())
}

fn case_name(c: CaseLabel) -> &'static str {
    match c {
        CaseLabel::HighCapital => "high_capital",
        CaseLabel::ModerateCapital => "moderate_capital",
        CaseLabel::LowCapital => "low_capital",
        CaseLabel::Default => "default",
    }
}

pub fn write_base_artifacts(dir: &Path, eq: &Equilibrium) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("equilibrium.json"), serde_json::to_vec(eq)?)?;

    let mut price = Vec::new();
    eq.prices.write_csv(&mut price, &eq.chain, &eq.grids)?;
    fs::write(dir.join("price.csv"), price)?;

    let mut value = Vec::new();
    writeln!(value, "z,b,k,value")?;
    for z in 0..eq.value.nz {
        for ib in 0..eq.value.nb {
            for ik in 0..eq.value.nk {
                writeln!(
                    value,
                    "{},{},{},{}",
                    fmt_sig12(eq.chain.states[z]),
                    fmt_sig12(eq.grids.b[ib]),
                    fmt_sig12(eq.grids.k[ik]),
                    fmt_sig12(eq.value.at(z, ib, ik)),
                )?;
            }
        }
    }
    fs::write(dir.join("value.csv"), value)?;

    let mut pol = Vec::new();
    writeln!(pol, "z,b,k,b_next,k_next,dividend,investment,case")?;
    for z in 0..eq.value.nz {
        for ib in 0..eq.value.nb {
            for ik in 0..eq.value.nk {
                let i = eq.policy.idx(z, ib, ik);
                writeln!(
                    pol,
                    "{},{},{},{},{},{},{},{}",
                    fmt_sig12(eq.chain.states[z]),
                    fmt_sig12(eq.grids.b[ib]),
                    fmt_sig12(eq.grids.k[ik]),
                    fmt_opt_sig12(eq.policy.b_next[i]),
                    fmt_opt_sig12(eq.policy.k_next[i]),
                    fmt_opt_sig12(eq.policy.dividend[i]),
                    fmt_opt_sig12(eq.policy.investment[i]),
                    case_name(eq.policy.case[i]),
                )?;
            }
        }
    }
    fs::write(dir.join("policy.csv"), pol)?;

    write_targets_csv(dir, eq)?;
    Ok(())
}

pub fn write_targets_csv(dir: &Path, eq: &Equilibrium) -> Result<()> {
    let mut t = Vec::new();
    writeln!(t, "z,k_star,b_star,k_star_autarky")?;
    for z in 0..eq.chain.n() {
        writeln!(
            t,
            "{},{},{},{}",
            fmt_sig12(eq.chain.states[z]),
            fmt_sig12(eq.targets.k_star[z]),
            fmt_sig12(eq.targets.b_star[z]),
            fmt_sig12(eq.targets.k_star_autarky[z]),
        )?;
    }
    fs::write(dir.join("targets.csv"), t)?;
    Ok(())
}

pub fn write_exo_artifacts(dir: &Path, eq: &ExogenousEquilibrium) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("equilibrium.json"), serde_json::to_vec(eq)?)?;

    let mut price = Vec::new();
    eq.prices.write_csv(&mut price, &eq.chain, &eq.grids)?;
    fs::write(dir.join("price.csv"), price)?;

    let mut value = Vec::new();
    writeln!(value, "z,b,value")?;
    for z in 0..eq.chain.n() {
        for ib in 0..eq.grids.nb() {
            writeln!(
                value,
                "{},{},{}",
                fmt_sig12(eq.chain.states[z]),
                fmt_sig12(eq.grids.b[ib]),
                fmt_sig12(eq.value_at(z, ib)),
            )?;
        }
    }
    fs::write(dir.join("value.csv"), value)?;

    let mut pol = Vec::new();
    writeln!(pol, "z,b,b_next,dividend")?;
    for z in 0..eq.chain.n() {
        for ib in 0..eq.grids.nb() {
            let i = z * eq.grids.nb() + ib;
            writeln!(
                pol,
                "{},{},{},{}",
                fmt_sig12(eq.chain.states[z]),
                fmt_sig12(eq.grids.b[ib]),
                fmt_opt_sig12(eq.policy.b_next[i]),
                fmt_opt_sig12(eq.policy.dividend[i]),
            )?;
        }
    }
    fs::write(dir.join("policy.csv"), pol)?;
    Ok(())
}

pub fn write_panel(dir: &Path, panel: &Panel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    panel.write_csv(&mut csv)?;
    fs::write(dir.join("panel.csv"), csv)?;
    let stats = tradeq_core::panel_stats(panel)?;
    fs::write(
        dir.join("panel_stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    Ok(())
}
