//! Loading and saving fit files. Every format starts with a one-line header
//! naming it; series and arm files refer to their component fits by paths
//! relative to their own directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fitted::{ArmFit, FittedFunction, SharedFit};
use crate::hal::HalFit;
use crate::ml_init::{BoostingFit, KernelFit, PolyFit};
use crate::series::read_series_text;
use crate::textio::{header_of, Records};

const ARMS_MAGIC: &str = "plugeff-arms 1";

/// Series fits may stack on other series fits; this bounds the chain.
const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFormat {
    Hal,
    Series,
    Poly,
    Kernel,
    Boosting,
    Arms,
}

impl FitFormat {
    pub fn from_header(line: &str) -> Result<FitFormat> {
        match line.trim() {
            "plugeff-hal 1" => Ok(FitFormat::Hal),
            "plugeff-series 1" => Ok(FitFormat::Series),
            "plugeff-poly 1" => Ok(FitFormat::Poly),
            "plugeff-kernel 1" => Ok(FitFormat::Kernel),
            "plugeff-boosting 1" => Ok(FitFormat::Boosting),
            ARMS_MAGIC => Ok(FitFormat::Arms),
            other => Err(Error::DataAt { line: 1, message: format!("unrecognised fit header `{other}`") }),
        }
    }
}

/// Writes a pair of per-arm fits as references to two other fit files.
pub fn write_arms_text<W: Write>(fit: &ArmFit, arm0_ref: &str, arm1_ref: &str, mut w: W) -> Result<()> {
    for r in [arm0_ref, arm1_ref] {
        if r.is_empty() || r.chars().any(char::is_whitespace) {
            return Err(Error::config("fit references must be non-empty and contain no whitespace"));
        }
    }
    writeln!(w, "{ARMS_MAGIC}")?;
    for (a, r) in [arm0_ref, arm1_ref].into_iter().enumerate() {
        let (lo, hi) = fit.fitted_range()[a];
        writeln!(w, "arm {a} {r} {lo:.16e} {hi:.16e}")?;
    }
    Ok(())
}

/// Reads any fit file, following references relative to its directory.
pub fn load_fit(path: &Path) -> Result<SharedFit> {
    load_at_depth(path, 0)
}

/// Header-detected format of a fit file.
pub fn fit_format(path: &Path) -> Result<FitFormat> {
    let text = read(path)?;
    FitFormat::from_header(header_of(&text)).map_err(|e| in_file(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::DataAt { line, message } => Error::data(format!("{}:{line}: {message}", path.display())),
        Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_at_depth(path: &Path, depth: usize) -> Result<SharedFit> {
    if depth > MAX_DEPTH {
        return Err(Error::data(format!("{}: fit references nest deeper than {MAX_DEPTH}", path.display())));
    }
    let text = read(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |r: &str| -> Result<SharedFit> { load_at_depth(&resolve_ref(&dir, r), depth + 1) };
    let parsed: Result<SharedFit> = match FitFormat::from_header(header_of(&text)) {
        Err(e) => Err(e),
        Ok(FitFormat::Hal) => HalFit::from_text(&text).map(|f| Arc::new(f) as SharedFit),
        Ok(FitFormat::Poly) => PolyFit::read_text(text.as_bytes()).map(|f| Arc::new(f) as SharedFit),
        Ok(FitFormat::Kernel) => KernelFit::read_text(text.as_bytes()).map(|f| Arc::new(f) as SharedFit),
        Ok(FitFormat::Boosting) => BoostingFit::read_text(text.as_bytes()).map(|f| Arc::new(f) as SharedFit),
        Ok(FitFormat::Series) => read_series_text(text.as_bytes(), resolve).map(|f| Arc::new(f) as SharedFit),
        Ok(FitFormat::Arms) => read_arms(&text, resolve).map(|f| Arc::new(f) as SharedFit),
    };
    parsed.map_err(|e| in_file(path, e))
}

fn resolve_ref(dir: &Path, r: &str) -> PathBuf {
    let p = Path::new(r);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn read_arms(text: &str, resolve: impl Fn(&str) -> Result<SharedFit>) -> Result<ArmFit> {
    let mut recs = Records::read(text.as_bytes(), ARMS_MAGIC, "arm fit")?;
    let mut arms = Vec::with_capacity(2);
    let mut ranges = [(0.0, 0.0); 2];
    for a in 0..2 {
        let rec = recs.expect("arm", Some(4))?;
        if rec.num::<usize>(0)? != a {
            return Err(crate::textio::at(rec.no, "arms must appear in order 0, 1"));
        }
        let fit = resolve(&rec.args()[1])
            .map_err(|e| crate::textio::at(rec.no, &format!("cannot load arm {a}: {e}")))?;
        arms.push(fit);
        ranges[a] = (rec.num(2)?, rec.num(3)?);
    }
    recs.finish()?;
    let mu1 = arms.pop().expect("two arms");
    let mu0 = arms.pop().expect("two arms");
    ArmFit::from_parts(mu0, mu1, ranges).map_err(|e| Error::data(e.to_string()))
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::config(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))));
    }
    Ok(())
}
