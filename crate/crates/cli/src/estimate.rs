//! `plugeff estimate`: plug-in and one-step estimates with Wald intervals
//! from a saved fit, appended to a CSV under `--out`.

use std::path::Path;

use clap::builder::PossibleValuesParser;
use clap::{Arg, Command};
use plugeff::store::{load_fit, write_atomic};
use plugeff::summaries::{one_step, plug_in, Aux, AuxRequirement, EstimateReport};
use plugeff::{Error, Result};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::input;

pub fn command() -> Command {
    Command::new("estimate")
        .about("Estimate a summary from a saved fit, with a 95% Wald interval")
        .arg(Arg::new("fit").long("fit").value_name("FILE").help("Saved fit of the regression function"))
        .args(input::data_args())
        .arg(input::summary_arg())
        .arg(
            Arg::new("estimator")
                .long("estimator")
                .value_parser(PossibleValuesParser::new(["plug-in", "one-step", "both"]))
                .default_value("plug-in")
                .help("Plug-in estimate, one-step correction, or both"),
        )
        .arg(
            Arg::new("propensity")
                .long("propensity")
                .value_name("FILE")
                .help("Saved propensity fit (needed by mean_counterfactual and hte_variance)"),
        )
        .arg(
            Arg::new("truncation")
                .long("truncation")
                .value_name("T")
                .default_value("0.01")
                .help("Clip propensities to [T, 1 - T]"),
        )
        .arg(
            Arg::new("output")
                .long("output")
                .value_name("NAME")
                .default_value("estimates.csv")
                .help("CSV file under --out that rows are appended to"),
        )
}

/// `<file name>#<first 12 hex digits of the SHA-256 of the fit file>`.
fn provenance(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(format!("{name}#{hex}"))
}

/// Appends rows (writing the header first for a new file) through an
/// atomic rewrite.
fn append_reports(path: &Path, reports: &[EstimateReport]) -> Result<()> {
    let mut fresh = Vec::new();
    EstimateReport::write_csv(reports, &mut fresh)?;
    let fresh = String::from_utf8(fresh).expect("csv output is utf-8");
    let combined = match std::fs::read_to_string(path) {
        Ok(existing) if !existing.trim().is_empty() => {
            let (header, rows) = fresh.split_once('\n').expect("header line");
            if existing.lines().next() != Some(header) {
                return Err(Error::data(format!("{} has a different header; refusing to append", path.display())));
            }
            let sep = if existing.ends_with('\n') { "" } else { "\n" };
            format!("{existing}{sep}{rows}")
        }
        Ok(_) => fresh,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => fresh,
        Err(e) => return Err(e.into()),
    };
    write_atomic(path, combined.as_bytes())
}

pub fn run(settings: &Settings, out: &Path) -> Result<()> {
    let fit_path = input::input_path(settings, "fit")?.ok_or_else(|| Error::config("missing required setting `fit`"))?;
    let summary = input::summary(settings)?;
    let propensity_path = input::input_path(settings, "propensity")?;
    let output = input::file_name(settings, "output")?;
    let truncation: f64 = settings.parse("truncation")?.expect("truncation has a default");
    if !(0.0..0.5).contains(&truncation) {
        return Err(Error::config(format!("truncation must lie in [0, 0.5), got {truncation}")));
    }
    let kinds: &[&str] = match settings.require("estimator")?.as_str() {
        "plug-in" => &["plug-in"],
        "one-step" => &["one-step"],
        "both" => &["plug-in", "one-step"],
        other => return Err(Error::config(format!("unknown estimator `{other}` (expected plug-in, one-step or both)"))),
    };
    let mut aux = Aux::none();
    match summary.requires() {
        AuxRequirement::Propensity => {
            let p = propensity_path.ok_or_else(|| {
                Error::config(format!("summary {} needs a propensity fit: set `propensity`", summary.name()))
            })?;
            aux.propensity = Some(load_fit(&p)?);
        }
        AuxRequirement::DensityScore => {
            return Err(Error::config(format!("summary {} needs a density score, which the CLI cannot supply", summary.name())))
        }
        AuxRequirement::None => {
            if propensity_path.is_some() {
                return Err(Error::config(format!("summary {} does not use a propensity fit", summary.name())));
            }
        }
    }
    aux.truncation = truncation;

    let fit = load_fit(&fit_path)?;
    let (s, seed) = input::sample(settings)?;
    let id = provenance(&fit_path)?;
    input::ensure_out_dir(out)?;

    let mut reports = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut r = if kind == "plug-in" { plug_in(&summary, &fit, &s, &aux)? } else { one_step(&summary, &fit, &s, &aux)? };
        r.provenance = id.clone();
        r.seed = seed;
        println!(
            "{:<9} {}  n = {}  psi_hat = {:.6}  se = {:.6}  95% CI [{:.6}, {:.6}]{}",
            r.estimator.name(),
            r.summary,
            r.n,
            r.psi_hat,
            r.se(),
            r.ci_lo(),
            r.ci_hi(),
            if r.ci.degenerate { "  (degenerate: zero estimated variance)" } else { "" }
        );
        if r.truncated > 0 {
            println!("          {} propensity values clipped to [{truncation}, {}]", r.truncated, 1.0 - truncation);
        }
        reports.push(r);
    }
    let path = out.join(output);
    append_reports(&path, &reports)?;
    println!("fit {id}; appended {} row(s) to {}", reports.len(), path.display());
    Ok(())
}
