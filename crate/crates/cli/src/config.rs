//! Flat INI configuration: `[section]` headers, `key = value` lines and
//! `#` or `;` comments. Every section and key must be known to the command
//! set, so typos fail loudly instead of silently falling back to defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in `[global]`.
pub const GLOBAL_KEYS: &[&str] = &["seed", "output_dir"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, Section>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut ini = Ini::default();
        let mut current = String::from("global");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", i + 1)))?;
                current = name.trim().to_string();
                ini.section_mut(&current);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            let section = ini.section_mut(&current);
            if section.entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("[{current}] key `{key}` given twice")));
            }
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn section_mut(&mut self, name: &str) -> &mut Section {
        self.sections.entry(name.to_string()).or_insert_with(|| Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        })
    }

    /// Checks that only `known` sections appear.
    pub fn check_sections(&self, known: &[&str]) -> Result<(), CliError> {
        match self.sections.keys().find(|s| !known.contains(&s.as_str())) {
            Some(s) => Err(CliError::Config(format!("unknown section `[{s}]`"))),
            None => Ok(()),
        }
    }

    /// The named section, empty if absent.
    pub fn section(&self, name: &str) -> Section {
        self.sections.get(name).cloned().unwrap_or_else(|| Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        })
    }
}

impl Section {
    /// Rejects any key outside `known`, naming the first offender.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("unknown key `{k}` in section [{}]", self.name))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn bad(&self, key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("[{}] key `{key}`: cannot use `{value}`: {why}", self.name))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.bad(key, v, e)))
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.raw(key) else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|item| !item.is_empty())
            .map(|item| item.parse::<T>().map_err(|e| self.bad(key, item, e)))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn require<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("[{}] key `{key}` is required", self.name)))
    }

    /// Fails with a message naming `key` unless `ok`.
    pub fn ensure(&self, ok: bool, key: &str, what: &str) -> Result<(), CliError> {
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("[{}] key `{key}`: {what}", self.name)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# top-level keys belong to [global]
seed = 3

[estimate]
source = gaussian
rho=0.5
; comment
rhos = -0.2, 0 ,0.4,
";

    #[test]
    fn parses_sections_and_values() {
        let ini = Ini::parse(SAMPLE).unwrap();
        assert_eq!(ini.section("global").get::<u64>("seed").unwrap(), Some(3));
        let est = ini.section("estimate");
        assert_eq!(est.raw("source"), Some("gaussian"));
        assert_eq!(est.get::<f64>("rho").unwrap(), Some(0.5));
        assert_eq!(est.get_list::<f64>("rhos").unwrap(), Some(vec![-0.2, 0.0, 0.4]));
        assert_eq!(est.get::<f64>("missing").unwrap(), None);
        assert!(ini.section("train").raw("csv").is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let ini = Ini::parse("[estimate]\nrho = 0.1\nrhoo = 2\n").unwrap();
        let err = ini.section("estimate").check_keys(&["rho"]).unwrap_err();
        assert!(err.to_string().contains("`rhoo`"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_section_rejected() {
        let ini = Ini::parse("[estimat]\nrho = 1\n").unwrap();
        assert!(ini.check_sections(&["global", "estimate"]).unwrap_err().to_string().contains("[estimat]"));
    }

    #[test]
    fn malformed_lines_rejected() {
        for text in ["[open\n", "just words\n", " = 3\n", "a = 1\na = 2\n"] {
            assert!(matches!(Ini::parse(text), Err(CliError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn bad_value_names_key() {
        let ini = Ini::parse("[s]\nn = ten\n").unwrap();
        let err = ini.section("s").get::<usize>("n").unwrap_err().to_string();
        assert!(err.contains("`n`") && err.contains("ten"), "{err}");
        let err = ini.section("s").require::<usize>("m").unwrap_err().to_string();
        assert!(err.contains("`m`"), "{err}");
    }
}
