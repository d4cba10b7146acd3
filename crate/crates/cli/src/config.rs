//! Sectioned `key = value` config files merged under command-line flags.

use std::collections::HashMap;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use plugeff::{Error, Result};

/// Keys per section, as read from a config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: HashMap<String, HashMap<String, String>>,
}

impl ConfigFile {
    /// Parses `[section]` headers and `key = value` lines; `#` starts a
    /// comment. Keys before the first header belong to `[general]`.
    pub fn parse(text: &str, valid: &HashMap<String, Vec<String>>) -> Result<ConfigFile> {
        let mut sections: HashMap<String, HashMap<String, String>> = HashMap::new();
        let mut current = "general".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let no = i + 1;
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !valid.contains_key(name) {
                    let mut known: Vec<&str> = valid.keys().map(String::as_str).collect();
                    known.sort_unstable();
                    return Err(Error::config(format!(
                        "config line {no}: unknown section [{name}] (expected one of {})",
                        known.join(", ")
                    )));
                }
                current = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {no}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !valid[&current].iter().any(|k| k == key) {
                return Err(Error::config(format!(
                    "config line {no}: unknown key `{key}` in [{current}] (expected one of {})",
                    valid[&current].join(", ")
                )));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(format!("config line {no}: `{key}` set twice in [{current}]")));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn read(path: &Path, valid: &HashMap<String, Vec<String>>) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config file {}: {e}", path.display())))?;
        ConfigFile::parse(&text, valid)
    }
}

/// Config keys accepted in each section: the long flag ids of the global
/// arguments for `[general]` and of each subcommand's own arguments.
pub fn valid_keys(cmd: &Command) -> HashMap<String, Vec<String>> {
    let mut out = HashMap::new();
    let general: Vec<String> = cmd
        .get_arguments()
        .filter(|a| a.is_global_set() && a.get_id() != "config")
        .map(|a| a.get_id().to_string())
        .collect();
    for sub in cmd.get_subcommands() {
        let keys = sub
            .get_arguments()
            .filter(|a| !general.iter().any(|g| g == a.get_id().as_str()) && a.get_id() != "config")
            .filter(|a| a.get_id() != "help")
            .map(|a| a.get_id().to_string())
            .collect();
        out.insert(sub.get_name().to_string(), keys);
    }
    out.insert("general".to_string(), general);
    out
}

/// Effective settings for one subcommand: a flag given on the command line
/// wins, then the config file, then the flag's default.
pub struct Settings<'a> {
    matches: &'a ArgMatches,
    general: HashMap<String, String>,
    section: HashMap<String, String>,
}

impl<'a> Settings<'a> {
    pub fn new(matches: &'a ArgMatches, file: &ConfigFile, section: &str) -> Settings<'a> {
        Settings {
            matches,
            general: file.sections.get("general").cloned().unwrap_or_default(),
            section: file.sections.get(section).cloned().unwrap_or_default(),
        }
    }

    pub fn get(&self, id: &str) -> Option<String> {
        let from_flag = self.matches.try_get_one::<String>(id).ok().flatten().cloned();
        if self.matches.value_source(id) == Some(ValueSource::CommandLine) {
            return from_flag;
        }
        self.section.get(id).or_else(|| self.general.get(id)).cloned().or(from_flag)
    }

    pub fn require(&self, id: &str) -> Result<String> {
        self.get(id).ok_or_else(|| Error::config(format!("missing required setting `{id}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, id: &str) -> Result<Option<T>> {
        self.get(id)
            .map(|v| v.parse::<T>().map_err(|_| Error::config(format!("invalid value `{v}` for `{id}`"))))
            .transpose()
    }
}
