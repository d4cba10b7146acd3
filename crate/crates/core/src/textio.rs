//! Shared helpers for the line-oriented fit formats.

use std::io::BufRead;

use crate::error::{Error, Result};

pub(crate) fn at(line: u64, msg: &str) -> Error {
    Error::DataAt { line, message: msg.to_string() }
}

pub(crate) fn num<T: std::str::FromStr>(line: u64, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| at(line, &format!("cannot parse `{tok}`")))
}

/// One non-blank line split on whitespace.
pub(crate) struct Record {
    pub no: u64,
    pub toks: Vec<String>,
}

impl Record {
    pub fn key(&self) -> &str {
        &self.toks[0]
    }

    pub fn args(&self) -> &[String] {
        &self.toks[1..]
    }

    pub fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        num(self.no, &self.toks[i + 1])
    }

    pub fn nums<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.args().iter().map(|t| num(self.no, t)).collect()
    }
}

/// Non-blank lines after the header, which must equal `magic`.
pub(crate) struct Records {
    lines: std::vec::IntoIter<Record>,
    what: &'static str,
}

impl Records {
    pub fn read<R: BufRead>(r: R, magic: &str, what: &'static str) -> Result<Records> {
        let mut out = Vec::new();
        let mut seen_magic = false;
        for (i, line) in r.lines().enumerate() {
            let no = i as u64 + 1;
            let line = line?;
            if !seen_magic {
                if line.trim() != magic {
                    return Err(at(no, &format!("expected `{magic}` header")));
                }
                seen_magic = true;
                continue;
            }
            let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if !toks.is_empty() {
                out.push(Record { no, toks });
            }
        }
        if !seen_magic {
            return Err(Error::data(format!("empty {what} file")));
        }
        Ok(Records { lines: out.into_iter(), what })
    }

    /// The next record, which must be `key` followed by `n_args` values.
    pub fn expect(&mut self, key: &str, n_args: Option<usize>) -> Result<Record> {
        let rec = self
            .lines
            .next()
            .ok_or_else(|| Error::data(format!("{} file ended before `{key}`", self.what)))?;
        if rec.key() != key {
            return Err(at(rec.no, &format!("expected `{key}`, found `{}`", rec.key())));
        }
        if let Some(n) = n_args {
            if rec.args().len() != n {
                return Err(at(rec.no, &format!("`{key}` takes {n} values")));
            }
        }
        Ok(rec)
    }

    pub fn finish(mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some(rec) => Err(at(rec.no, &format!("unexpected record `{}`", rec.key()))),
        }
    }
}

/// First line of a text stream with surrounding whitespace removed.
pub(crate) fn header_of(text: &str) -> &str {
    text.lines().next().unwrap_or("").trim()
}
