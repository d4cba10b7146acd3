//! Plain-text HAL fit format (see FORMATS.md).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::loss::Loss;

use super::fit::{HalComponent, HalFit, HalTerm};

const MAGIC: &str = "plugeff-hal 1";

impl HalFit {
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "d {}", self.d)?;
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "bound_m {:.16e}", self.bound_m)?;
        writeln!(w, "loss {}", self.loss.name())?;
        writeln!(w, "components {}", self.components.len())?;
        for (c, comp) in self.components.iter().enumerate() {
            let (lo, hi) = self.range[c];
            writeln!(w, "component {c} beta0 {:.16e} range {:.16e} {:.16e}", comp.beta0, lo, hi)?;
            for (t, term) in comp.terms.iter().enumerate() {
                write!(w, "term {c} {} {} {:.16e}", term.subset, term.knot, term.beta)?;
                for v in comp.knot_point(t, self.d) {
                    write!(w, " {v:.16e}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<HalFit> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
        let mut next = |what: &str| -> Result<(u64, String)> {
            match lines.next() {
                Some((no, Ok(l))) => Ok((no, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::data(format!("HAL fit file ended before `{what}`"))),
            }
        };
        let (no, magic) = next("header")?;
        if magic.trim() != MAGIC {
            return Err(Error::DataAt { line: no, message: format!("expected `{MAGIC}` header") });
        }
        let d: usize = keyed(next("d")?, "d")?;
        let n: usize = keyed(next("n")?, "n")?;
        let bound_m: f64 = keyed(next("bound_m")?, "bound_m")?;
        let (no, l) = next("loss")?;
        let loss_name = l.strip_prefix("loss ").ok_or_else(|| at(no, "expected `loss <name>`"))?;
        let loss = Loss::from_name(loss_name.trim()).map_err(|e| at(no, &e.to_string()))?;
        let q: usize = keyed(next("components")?, "components")?;
        if d == 0 || q == 0 || q != loss.arity() {
            return Err(Error::data("HAL fit header has inconsistent dimension or component count"));
        }

        let mut comps: Vec<(f64, Vec<HalTerm>, Vec<f64>)> = Vec::with_capacity(q);
        let mut range = Vec::with_capacity(q);
        for (no, line) in lines {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first().copied() {
                None => continue,
                Some("component") => {
                    if toks.len() != 7 || toks[2] != "beta0" || toks[4] != "range" {
                        return Err(at(no, "malformed component line"));
                    }
                    let c: usize = num(no, toks[1])?;
                    if c != comps.len() || c >= q {
                        return Err(at(no, "components must appear in order"));
                    }
                    comps.push((num(no, toks[3])?, Vec::new(), Vec::new()));
                    range.push((num(no, toks[5])?, num(no, toks[6])?));
                }
                Some("term") => {
                    if toks.len() != 5 + d {
                        return Err(at(no, &format!("term line needs {} fields", 5 + d)));
                    }
                    let c: usize = num(no, toks[1])?;
                    let subset: u32 = num(no, toks[2])?;
                    if subset == 0 || (d < 32 && subset >> d != 0) {
                        return Err(at(no, "subset mask out of range"));
                    }
                    if c + 1 != comps.len() {
                        return Err(at(no, "term refers to an undeclared component"));
                    }
                    let comp = &mut comps[c];
                    comp.1.push(HalTerm { subset, knot: num(no, toks[3])?, beta: num(no, toks[4])? });
                    for t in &toks[5..] {
                        comp.2.push(num(no, t)?);
                    }
                }
                Some(other) => return Err(at(no, &format!("unknown record `{other}`"))),
            }
        }
        if comps.len() != q {
            return Err(Error::data(format!("expected {q} components, found {}", comps.len())));
        }
        let components = comps
            .into_iter()
            .map(|(b0, terms, points)| HalComponent::new(b0, terms, points, d))
            .collect();
        Ok(HalFit { d, n, loss, bound_m, components, range })
    }

    pub fn from_text(text: &str) -> Result<HalFit> {
        HalFit::read_text(text.as_bytes())
    }
}

fn at(line: u64, msg: &str) -> Error {
    Error::DataAt { line, message: msg.to_string() }
}

fn num<T: std::str::FromStr>(line: u64, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| at(line, &format!("cannot parse `{tok}`")))
}

fn keyed<T: std::str::FromStr>((no, line): (u64, String), key: &str) -> Result<T> {
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| at(no, &format!("expected `{key} <value>`")))?;
    num(no, rest.trim())
}
