//! Plain-text series fit format (see FORMATS.md).

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fitted::SharedFit;
use crate::loss::Loss;

use super::fit::SeriesFit;
use super::space::{RangeTransform, SeriesKind, SeriesSpace, TensorLayout};

const MAGIC: &str = "plugeff-series 1";

/// Writes `fit`; the initial fit (and the gradient fit of a targeted span)
/// are recorded only by the reference strings supplied here, typically
/// file names.
pub fn write_series_text<W: Write>(fit: &SeriesFit, init_ref: &str, gradient_ref: Option<&str>, mut w: W) -> Result<()> {
    let sp = fit.space();
    for r in std::iter::once(init_ref).chain(gradient_ref) {
        if r.is_empty() || r.chars().any(char::is_whitespace) {
            return Err(Error::config("fit references must be non-empty and contain no whitespace"));
        }
    }
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "kind {}", sp.kind().name())?;
    writeln!(w, "k {}", sp.k())?;
    writeln!(w, "loss {}", fit.loss().name())?;
    writeln!(w, "outputs {}", fit.coefficients.len())?;
    writeln!(w, "risk {:.16e}", fit.risk())?;
    writeln!(w, "init {init_ref}")?;
    if sp.kind() == SeriesKind::TargetedSpan {
        let g = gradient_ref.ok_or_else(|| Error::config("targeted span needs a gradient fit reference"))?;
        writeln!(w, "gradient {g}")?;
    }
    match sp.layout() {
        TensorLayout::TotalDegree => writeln!(w, "layout total_degree")?,
        TensorLayout::Full { k_u, k_x } => writeln!(w, "layout full {k_u} {k_x}")?,
    }
    for (c, t) in sp.init_transforms().iter().enumerate() {
        writeln!(w, "init_transform {c} {:.16e} {:.16e}", t.lo(), t.hi())?;
    }
    for (j, t) in sp.x_transforms().iter().enumerate() {
        writeln!(w, "x_transform {j} {:.16e} {:.16e}", t.lo(), t.hi())?;
    }
    for term in sp.tensor_terms() {
        write!(w, "term")?;
        for m in term {
            write!(w, " {m}")?;
        }
        writeln!(w)?;
    }
    for (c, &(lo, hi)) in fit.range.iter().enumerate() {
        writeln!(w, "range {c} {lo:.16e} {hi:.16e}")?;
    }
    for (c, coef) in fit.coefficients.iter().enumerate() {
        write!(w, "coef {c}")?;
        for v in coef {
            write!(w, " {v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a series fit; `resolve` maps the stored references back to fits.
pub fn read_series_text<R, F>(r: R, resolve: F) -> Result<SeriesFit>
where
    R: BufRead,
    F: Fn(&str) -> Result<SharedFit>,
{
    let mut kind = None;
    let mut k = None;
    let mut loss = None;
    let mut outputs: Option<usize> = None;
    let mut risk = f64::NAN;
    let mut init = None;
    let mut gradient = None;
    let mut layout = TensorLayout::TotalDegree;
    let mut init_transforms = Vec::new();
    let mut x_transforms = Vec::new();
    let mut terms: Vec<Vec<u16>> = Vec::new();
    let mut range = Vec::new();
    let mut coefficients: Vec<Vec<f64>> = Vec::new();
    let mut seen_magic = false;

    for (i, line) in r.lines().enumerate() {
        let no = i as u64 + 1;
        let line = line?;
        if !seen_magic {
            if line.trim() != MAGIC {
                return Err(at(no, &format!("expected `{MAGIC}` header")));
            }
            seen_magic = true;
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some(&key) = toks.first() else { continue };
        let args = &toks[1..];
        let one = || -> Result<&str> {
            if args.len() == 1 {
                Ok(args[0])
            } else {
                Err(at(no, &format!("`{key}` takes one value")))
            }
        };
        match key {
            "kind" => kind = Some(SeriesKind::from_name(one()?).map_err(|e| at(no, &e.to_string()))?),
            "k" => k = Some(num::<usize>(no, one()?)?),
            "loss" => loss = Some(Loss::from_name(one()?).map_err(|e| at(no, &e.to_string()))?),
            "outputs" => outputs = Some(num(no, one()?)?),
            "risk" => risk = num(no, one()?)?,
            "init" => init = Some(resolve(one()?).map_err(|e| at(no, &format!("cannot load initial fit: {e}")))?),
            "gradient" => {
                gradient = Some(resolve(one()?).map_err(|e| at(no, &format!("cannot load gradient fit: {e}")))?)
            }
            "layout" => {
                layout = match args {
                    ["total_degree"] => TensorLayout::TotalDegree,
                    ["full", ku, kx] => TensorLayout::Full { k_u: num(no, ku)?, k_x: num(no, kx)? },
                    _ => return Err(at(no, "layout must be `total_degree` or `full <k_u> <k_x>`")),
                }
            }
            "init_transform" | "x_transform" | "range" => {
                if args.len() != 3 {
                    return Err(at(no, &format!("`{key}` needs an index and two endpoints")));
                }
                let idx: usize = num(no, args[0])?;
                let lo: f64 = num(no, args[1])?;
                let hi: f64 = num(no, args[2])?;
                let list_len = match key {
                    "init_transform" => init_transforms.len(),
                    "x_transform" => x_transforms.len(),
                    _ => range.len(),
                };
                if idx != list_len {
                    return Err(at(no, &format!("`{key}` records must appear in order")));
                }
                match key {
                    "init_transform" => {
                        init_transforms.push(RangeTransform::new(lo, hi).map_err(|e| at(no, &e.to_string()))?)
                    }
                    "x_transform" => x_transforms.push(RangeTransform::new(lo, hi).map_err(|e| at(no, &e.to_string()))?),
                    _ => range.push((lo, hi)),
                }
            }
            "term" => terms.push(args.iter().map(|t| num(no, t)).collect::<Result<Vec<u16>>>()?),
            "coef" => {
                let (c, vals) = args.split_first().ok_or_else(|| at(no, "`coef` needs an index"))?;
                if num::<usize>(no, c)? != coefficients.len() {
                    return Err(at(no, "`coef` records must appear in order"));
                }
                coefficients.push(vals.iter().map(|t| num(no, t)).collect::<Result<Vec<f64>>>()?);
            }
            other => return Err(at(no, &format!("unknown record `{other}`"))),
        }
    }
    if !seen_magic {
        return Err(Error::data("empty series fit file"));
    }
    let missing = |what: &str| Error::data(format!("series fit file has no `{what}` record"));
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let k = k.ok_or_else(|| missing("k"))?;
    let loss = loss.ok_or_else(|| missing("loss"))?;
    let outputs = outputs.ok_or_else(|| missing("outputs"))?;
    let init: SharedFit = init.ok_or_else(|| missing("init"))?;
    if init.arity() != outputs || coefficients.len() != outputs || range.len() != outputs {
        return Err(Error::data("series fit file has inconsistent output counts"));
    }
    let space = SeriesSpace {
        kind,
        k,
        init,
        gradient,
        init_transforms,
        x_transforms,
        layout,
        tensor_terms: terms,
    };
    let expected_transforms = if kind == SeriesKind::TargetedSpan { 0 } else { outputs };
    let consistent = space.init_transforms.len() == expected_transforms
        && match kind {
            SeriesKind::TrigComposed => space.tensor_terms.is_empty(),
            SeriesKind::TargetedSpan => space.gradient.is_some(),
            SeriesKind::TrigTensorGeneralized => {
                let vars = outputs + space.x_transforms.len();
                !space.tensor_terms.is_empty() && space.tensor_terms.iter().all(|t| t.len() == vars)
            }
        }
        && coefficients.iter().all(|c| c.len() == space.n_columns());
    if !consistent {
        return Err(Error::data("series fit file is inconsistent with its declared kind"));
    }
    Ok(SeriesFit { space: Arc::new(space), coefficients, loss, risk, range })
}

fn at(line: u64, msg: &str) -> Error {
    Error::DataAt { line, message: msg.to_string() }
}

fn num<T: std::str::FromStr>(line: u64, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| at(line, &format!("cannot parse `{tok}`")))
}
