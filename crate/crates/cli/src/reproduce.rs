//! `plugeff reproduce`: Monte Carlo runs of the published tables and
//! figures.

use std::path::Path;

use clap::builder::PossibleValuesParser;
use clap::{Arg, Command};
use plugeff::simlab::{run_monte_carlo, write_figure_csv, ReproId, Scale};
use plugeff::store::write_atomic;
use plugeff::{Error, Result};

use crate::config::Settings;
use crate::input;

pub fn command() -> Command {
    Command::new("reproduce")
        .about("Run the Monte Carlo study behind a table or figure")
        .arg(Arg::new("id").value_name("ID").help("table1..table5 or fig2..fig6"))
        .arg(
            Arg::new("scale")
                .long("scale")
                .value_parser(PossibleValuesParser::new(["desk", "full"]))
                .default_value("desk")
                .help("desk: 200 replicates on two sample sizes; full: 1000 replicates on the full grid"),
        )
        .arg(Arg::new("replicates").long("replicates").value_name("R").help("Override the number of replicates"))
}

fn buffer(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn run(settings: &Settings, out: &Path) -> Result<()> {
    let id = ReproId::from_name(&settings.get("id").ok_or_else(|| Error::config("missing table or figure id"))?)?;
    let scale = Scale::from_name(&settings.require("scale")?)?;
    let mut cfg = id.config(scale);
    if let Some(r) = settings.parse::<usize>("replicates")? {
        cfg.replicates = r;
    }
    cfg.base_seed = input::seed(settings)?;
    cfg.exec = input::exec(settings)?;
    cfg.validate()?;
    input::ensure_out_dir(out)?;

    println!(
        "{}: {} replicates, n in {:?}, {} estimator(s), base seed {}",
        id.name(),
        cfg.replicates,
        cfg.n_grid,
        cfg.roster.len(),
        cfg.base_seed
    );
    let result = run_monte_carlo(&cfg)?;
    println!("psi0 = {:.6}, xi^2 = {:.6}", result.targets.psi, result.targets.xi2);
    println!(
        "{:<14} {:>6} {:>6} {:>10} {:>12} {:>9} {:>8}",
        "estimator", "n", "R", "n*MSE/xi2", "sqrt(n)|b/psi|", "coverage", "mc_se"
    );
    for c in &result.cells {
        println!(
            "{:<14} {:>6} {:>6} {:>10.4} {:>12.4} {:>9.3} {:>8.3}",
            c.estimator, c.n, c.replicates, c.relative_mse, c.rel_abs_bias, c.coverage, c.coverage_mc_se
        );
    }

    let mut files = vec![(format!("{}.csv", id.name()), buffer(|b| result.write_csv(b))?)];
    files.push((format!("{}.replicates.csv", id.name()), buffer(|b| result.write_records_csv(b))?));
    if id.is_figure() {
        files.push((format!("{}.plot.csv", id.name()), buffer(|b| write_figure_csv(id, &result, b))?));
    }
    for (name, bytes) in files {
        let path = out.join(name);
        write_atomic(&path, &bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
