//! Plain-text `key=value` configuration with command-line overrides.
//!
//! Precedence is flag, then config file, then built-in default. Every value
//! that was consulted is recorded so the run can be echoed and replayed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: Vec<(String, String)>,
}

impl Resolver {
    pub fn from_file(path: Option<&Path>) -> Result<Self, CliError> {
        let mut r = Self::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::missing(format!("cannot read config {}: {e}", path.display())))?;
            r.file = parse(&text).map_err(|(line, msg)| CliError::usage(format!("{}:{line}: {msg}", path.display())))?;
        }
        Ok(r)
    }

    /// Resolved value of `key`, recorded in the echo.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match self.optional(key, flag)? {
            Some(v) => v,
            None => {
                self.echo.push((key.to_string(), default.to_string()));
                default
            }
        };
        Ok(v)
    }

    /// Like [`Resolver::value`] but without a default; absent keys are not echoed.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| CliError::usage(format!("config key {key}: cannot parse {text:?}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.echo.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required setting `{key}`")))
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let flag = flag.map(|p| p.to_string_lossy().into_owned());
        self.required::<String>(key, flag).map(PathBuf::from)
    }

    /// Rejects unknown config keys and returns the echo text.
    pub fn finish(self, command: &str) -> Result<String, CliError> {
        if let Some(cmd) = self.file.get("command") {
            if cmd != command {
                return Err(CliError::usage(format!("config file is for `{cmd}`, not `{command}`")));
            }
        }
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| k.as_str() != "command" && !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::usage(format!("unknown config keys for `{command}`: {unknown:?}")));
        }
        let mut out = format!("command={command}\n");
        for (k, v) in &self.echo {
            out.push_str(&format!("{k}={v}\n"));
        }
        Ok(out)
    }
}

fn parse(text: &str) -> Result<BTreeMap<String, String>, (usize, String)> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or((i + 1, format!("expected key=value, got {line:?}")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err((i + 1, "empty key".into()));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err((i + 1, format!("duplicate key {k}")));
        }
    }
    Ok(map)
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Rate grid `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got {s:?}"));
        }
        let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Sweep {
            start: p(parts[0])?,
            stop: p(parts[1])?,
            step: p(parts[2])?,
        })
    }
}

impl Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut r = Resolver {
            file: parse("# c\nepochs = 5\nlr=0.01\n").unwrap(),
            ..Default::default()
        };
        assert_eq!(r.value("epochs", Some(7usize), 300).unwrap(), 7);
        assert_eq!(r.value("lr", None, 1e-3).unwrap(), 0.01);
        assert_eq!(r.value("batch_size", None, 16usize).unwrap(), 16);
        let echo = r.finish("train").unwrap();
        assert_eq!(echo, "command=train\nepochs=7\nlr=0.01\nbatch_size=16\n");
    }

    #[test]
    fn unknown_and_malformed_keys_are_usage_errors() {
        let r = Resolver {
            file: parse("bogus=1").unwrap(),
            ..Default::default()
        };
        assert_eq!(r.finish("gen").unwrap_err().code, 2);
        assert!(parse("novalue").is_err());
        assert!(parse("a=1\na=2").is_err());
        let mut r = Resolver {
            file: parse("epochs=many").unwrap(),
            ..Default::default()
        };
        assert_eq!(r.value("epochs", None, 1usize).unwrap_err().code, 2);
    }

    #[test]
    fn lists_and_sweeps_round_trip() {
        let l: List<f64> = "7.5, 4,2.5".parse().unwrap();
        assert_eq!(l.0, vec![7.5, 4.0, 2.5]);
        assert_eq!(l.to_string(), "7.5,4,2.5");
        let s: Sweep = "0.0:1.0:0.1".parse().unwrap();
        assert_eq!(s.to_string().parse::<Sweep>().unwrap(), s);
        assert!("0:1".parse::<Sweep>().is_err());
    }
}
