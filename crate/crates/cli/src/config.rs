//! Flat `key = value` config files. Flags override file values, which
//! override built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected 'key = value'", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            if let Some((first, _)) = entries.insert(k.to_string(), (i + 1, v.to_string())) {
                return Err(format!("line {}: '{k}' already set on line {first}", i + 1));
            }
        }
        Ok(Self { entries })
    }

    /// Rejects keys the current command does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {line}: unknown key '{k}' for this command"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// The flag value if given, else the parsed file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                CliError::Usage(format!(
                    "config line {line}: bad value '{v}' for '{key}': {e}"
                ))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_errors() {
        let f = FileConfig::parse("# run\nepochs = 5\nlr=0.01  # tuned\n\n").unwrap();
        assert_eq!(f.pick(Some(9usize), "epochs").unwrap(), Some(9));
        assert_eq!(f.pick(None::<usize>, "epochs").unwrap(), Some(5));
        assert_eq!(f.pick(None::<f64>, "lr").unwrap(), Some(0.01));
        assert_eq!(f.pick(None::<u64>, "seed").unwrap(), None);
        assert!(f.pick(None::<bool>, "epochs").is_err());
        assert!(f.check_keys(&["epochs"]).is_err());
        assert!(f.check_keys(&["epochs", "lr"]).is_ok());
        assert!(FileConfig::parse("a = 1\na = 2").is_err());
        assert!(FileConfig::parse("novalue").is_err());
    }
}
