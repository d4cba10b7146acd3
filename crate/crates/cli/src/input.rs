//! Settings shared by the subcommands: data source, seed, execution mode and
//! output files.

use std::path::{Path, PathBuf};

use clap::Arg;
use plugeff::simlab::Dgp;
use plugeff::summaries::Summary;
use plugeff::{Error, Exec, Result, Sample};

use crate::config::Settings;

pub fn data_args() -> [Arg; 3] {
    [
        Arg::new("data").long("data").value_name("CSV").help("Data file with columns x1..xd, z and optionally a"),
        Arg::new("dgp")
            .long("dgp")
            .value_name("NAME")
            .help("Simulate from a built-in process instead of reading --data (hal_exp, step_trig, rough_f, hte_step, hte_rough_g, constant:c:sigma)"),
        Arg::new("n").long("n").value_name("N").help("Sample size for --dgp"),
    ]
}

pub fn summary_arg() -> Arg {
    Arg::new("summary")
        .long("summary")
        .value_name("NAME")
        .default_value("moment2")
        .help("Summary functional: moment<k>, mean_counterfactual or hte_variance")
}

pub fn seed(settings: &Settings) -> Result<u64> {
    Ok(settings.parse("seed")?.expect("seed has a default"))
}

pub fn exec(settings: &Settings) -> Result<Exec> {
    match settings.require("exec")?.as_str() {
        "parallel" => Ok(Exec::Parallel),
        "sequential" => Ok(Exec::Sequential),
        other => Err(Error::config(format!("invalid value `{other}` for `exec` (expected parallel or sequential)"))),
    }
}

pub fn summary(settings: &Settings) -> Result<Summary> {
    Summary::from_name(&settings.require("summary")?)
}

/// Existing input file, checked before any work starts.
pub fn input_path(settings: &Settings, id: &str) -> Result<Option<PathBuf>> {
    let Some(p) = settings.get(id) else { return Ok(None) };
    let path = PathBuf::from(p);
    if !path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{id} file {} does not exist", path.display()),
        )));
    }
    Ok(Some(path))
}

/// Reads `--data`, or simulates `--n` draws from `--dgp`. Returns the
/// sample and, for simulated data, the seed used.
pub fn sample(settings: &Settings) -> Result<(Sample, Option<u64>)> {
    let data = input_path(settings, "data")?;
    match (data, settings.get("dgp")) {
        (Some(_), Some(_)) => Err(Error::config("set either `data` or `dgp`, not both")),
        (None, None) => Err(Error::config("no input: set `data` to a CSV file or `dgp` with `n`")),
        (Some(path), None) => {
            if settings.get("n").is_some() {
                return Err(Error::config("`n` only applies to simulated data (`dgp`)"));
            }
            let s = Sample::read_csv_path(&path).map_err(|e| match e {
                Error::DataAt { line, message } => Error::data(format!("{}:{line}: {message}", path.display())),
                other => other,
            })?;
            Ok((s, None))
        }
        (None, Some(name)) => {
            let dgp = Dgp::from_name(&name)?;
            let n: usize = settings.parse("n")?.ok_or_else(|| Error::config("`dgp` needs a sample size `n`"))?;
            let seed = seed(settings)?;
            Ok((dgp.sample(n, seed)?, Some(seed)))
        }
    }
}

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", out.display()))))
}

/// A bare file name: outputs always land directly under `--out`.
pub fn file_name(settings: &Settings, id: &str) -> Result<String> {
    let name = settings.require(id)?;
    if name.is_empty() || name.contains(['/', '\\']) || name.chars().any(char::is_whitespace) || name.starts_with('.') {
        return Err(Error::config(format!("`{id}` must be a plain file name without directories, got `{name}`")));
    }
    Ok(name)
}
