//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! The full key set is fixed by [`SCHEMA`]; unknown sections or keys are
//! rejected with their line number. Every run writes the fully resolved
//! configuration (defaults expanded, CLI overrides applied) beside its
//! outputs, and feeding that file back reproduces the run byte-identically.

use std::collections::BTreeMap;
use std::fmt;

/// `(section, key, default)`; `None` marks a key that must be set explicitly
/// by whichever command reads it.
pub const SCHEMA: &[(&str, &str, Option<&str>)] = &[
    ("run", "seed", Some("42")),
    ("run", "out", Some("out")),
    ("run", "threads", Some("1")),
    ("data", "source", Some("synthetic")),
    ("data", "images", Some("")),
    ("data", "labels", Some("")),
    ("data", "classes", Some("10")),
    ("data", "dim", Some("784")),
    ("data", "n_per_class", Some("200")),
    ("data", "separation", Some("6")),
    ("data", "subset", Some("0")),
    ("model", "layers", Some("784,256,128,10")),
    ("schedule", "variant", Some("linear")),
    ("schedule", "k_min", Some("2")),
    ("schedule", "k_max", Some("10")),
    ("schedule", "tau", Some("0.4")),
    ("schedule", "eta", Some("1")),
    ("schedule", "theta0", Some("1")),
    ("schedule", "explicit", Some("")),
    ("train", "epochs", None),
    ("train", "batch_size", Some("100")),
    ("train", "lr", Some("0.1")),
    ("train", "momentum", Some("0.9")),
    ("train", "weight_decay", Some("0.0005")),
    ("train", "lr_milestones", Some("")),
    ("train", "lr_decay_factor", Some("0.1")),
    ("train", "eps", Some("0.3")),
    ("train", "domain_clip", Some("true")),
    ("train", "attack_eval", Some("false")),
    ("train", "wall_clock", Some("false")),
    ("attack", "eps", Some("0.3")),
    ("attack", "alpha", Some("0.01")),
    ("attack", "k_steps", Some("40")),
    ("attack", "init", Some("clean")),
    ("attack", "restarts", Some("1")),
    ("criterion", "gamma", Some("0.04")),
    ("criterion", "tau", Some("0.4")),
    ("criterion", "candidate_k", Some("1,2,5,10,20,40")),
    ("criterion", "probe", Some("256")),
    ("criterion", "current_k", Some("40")),
    ("criterion", "current_alpha", Some("")),
    ("landscape", "extent", Some("")),
    ("landscape", "resolution", Some("100")),
    ("landscape", "example_index", Some("0")),
    ("landscape", "trajectory_steps", Some("2,40")),
    ("landscape", "probe", Some("128")),
    ("landscape", "orthogonalize", Some("false")),
    ("toy", "theta0", Some("1")),
    ("toy", "tau", Some("10")),
    ("toy", "gamma", Some("0.04")),
    ("toy", "t_end", Some("3")),
    ("toy", "dt", Some("0.001")),
    ("toy", "grid_resolution", Some("0.0001")),
];

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at_line(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            key: None,
            message: message.into(),
        }
    }

    pub fn for_key(section: &str, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            key: Some(format!("{section}.{key}")),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " for key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed configuration: explicitly set values layered over the schema
/// defaults.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at_line(line_no, "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _, _)| *s == name) {
                    return Err(ConfigError::at_line(
                        line_no,
                        format!("unknown section `{name}`"),
                    ));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::at_line(line_no, "expected `key = value` or `[section]`")
            })?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(ConfigError::at_line(
                    line_no,
                    format!("key `{key}` appears before any [section] header"),
                ));
            }
            if !SCHEMA
                .iter()
                .any(|(s, k, _)| *s == section && *k == key)
            {
                return Err(ConfigError::at_line(
                    line_no,
                    format!("unknown key `{key}` in section [{section}]"),
                ));
            }
            values.insert((section.clone(), key.to_string()), value.to_string());
        }
        Ok(Config { values })
    }

    /// Sets a value programmatically (CLI flag overrides).
    pub fn set(&mut self, section: &str, key: &str, value: String) {
        self.values
            .insert((section.to_string(), key.to_string()), value);
    }

    fn lookup(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        let default = SCHEMA
            .iter()
            .find(|(s, k, _)| *s == section && *k == key)
            .map(|(_, _, d)| *d)
            .unwrap_or(None);
        if let Some(v) = self
            .values
            .get(&(section.to_string(), key.to_string()))
        {
            // Keys without a default are only satisfied by a non-empty value.
            if !(v.is_empty() && default.is_none()) {
                return Ok(v.clone());
            }
        }
        match default {
            Some(d) => Ok(d.to_string()),
            None => Err(ConfigError::for_key(
                section,
                key,
                "missing required key",
            )),
        }
    }

    pub fn get_str(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        self.lookup(section, key)
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<u64, ConfigError> {
        let raw = self.lookup(section, key)?;
        raw.parse()
            .map_err(|_| ConfigError::for_key(section, key, format!("`{raw}` is not an integer")))
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        let raw = self.lookup(section, key)?;
        raw.parse()
            .map_err(|_| ConfigError::for_key(section, key, format!("`{raw}` is not an integer")))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let raw = self.lookup(section, key)?;
        raw.parse()
            .map_err(|_| ConfigError::for_key(section, key, format!("`{raw}` is not a number")))
    }

    pub fn get_bool(&self, section: &str, key: &str) -> Result<bool, ConfigError> {
        let raw = self.lookup(section, key)?;
        match raw.as_str() {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(ConfigError::for_key(
                section,
                key,
                format!("`{raw}` is not a boolean"),
            )),
        }
    }

    /// Comma-separated list of integers; empty string is the empty list.
    pub fn get_usize_list(&self, section: &str, key: &str) -> Result<Vec<usize>, ConfigError> {
        let raw = self.lookup(section, key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| {
                    ConfigError::for_key(section, key, format!("`{item}` is not an integer"))
                })
            })
            .collect()
    }

    /// Semicolon-separated `K:alpha` pairs.
    pub fn get_pair_list(&self, section: &str, key: &str) -> Result<Vec<(usize, f64)>, ConfigError> {
        let raw = self.lookup(section, key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(';')
            .map(|item| {
                let (k, a) = item.split_once(':').ok_or_else(|| {
                    ConfigError::for_key(section, key, format!("`{item}` is not `K:alpha`"))
                })?;
                let k = k.trim().parse().map_err(|_| {
                    ConfigError::for_key(section, key, format!("`{k}` is not an integer"))
                })?;
                let a = a.trim().parse().map_err(|_| {
                    ConfigError::for_key(section, key, format!("`{a}` is not a number"))
                })?;
                Ok((k, a))
            })
            .collect()
    }

    /// The fully resolved configuration: every schema key with its final
    /// value, in schema order, normalized so re-parsing is idempotent.
    pub fn resolved_text(&self) -> Result<String, ConfigError> {
        let mut out = String::new();
        let mut current_section = "";
        for (section, key, default) in SCHEMA {
            if *section != current_section {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current_section = section;
            }
            // Required-but-unset keys resolve to an empty value; commands
            // that read them still fail with the missing-key diagnostic.
            let value = match self.values.get(&(section.to_string(), key.to_string())) {
                Some(v) => normalize(section, key, v)?,
                None => default.unwrap_or("").to_string(),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        Ok(out)
    }
}

/// Canonical text for a value so that resolve(parse(resolve(c))) == resolve(c).
fn normalize(section: &str, key: &str, value: &str) -> Result<String, ConfigError> {
    // Numeric-looking values rewrite through f64/u64 Display (shortest
    // round-trip); everything else passes through verbatim.
    if value.is_empty() {
        return Ok(String::new());
    }
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v.to_string());
    }
    if let Ok(v) = value.parse::<f64>() {
        if v.is_finite() {
            return Ok(format!("{v}"));
        }
        return Err(ConfigError::for_key(
            section,
            key,
            format!("`{value}` is not finite"),
        ));
    }
    Ok(value.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg = Config::parse("[train]\nepochs = 3\nlr = 0.5\n").unwrap();
        assert_eq!(cfg.get_usize("train", "epochs").unwrap(), 3);
        assert_eq!(cfg.get_f64("train", "lr").unwrap(), 0.5);
        // Defaults fill unset keys.
        assert_eq!(cfg.get_usize("train", "batch_size").unwrap(), 100);

        let err = Config::parse("[train]\nepoch = 3\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = Config::parse("[nope]\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        let err = Config::parse("epochs = 3\n").unwrap_err();
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn missing_required_key_names_it() {
        let cfg = Config::parse("[run]\nseed = 1\n").unwrap();
        let err = cfg.get_usize("train", "epochs").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("train.epochs"));
    }

    #[test]
    fn resolved_text_is_idempotent() {
        let mut cfg = Config::parse("[train]\nepochs = 3\nlr = 5e-1\n").unwrap();
        cfg.set("run", "seed", "9".to_string());
        let once = cfg.resolved_text().unwrap();
        let twice = Config::parse(&once).unwrap().resolved_text().unwrap();
        assert_eq!(once, twice);
        assert!(once.contains("lr = 0.5"));
        assert!(once.contains("seed = 9"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = Config::parse("# top comment\n\n[train]\n# inner\nepochs = 2\n").unwrap();
        assert_eq!(cfg.get_usize("train", "epochs").unwrap(), 2);
    }

    #[test]
    fn pair_lists_parse() {
        let mut cfg = Config::default();
        cfg.set("schedule", "explicit", "2:0.2;5:0.08".to_string());
        assert_eq!(
            cfg.get_pair_list("schedule", "explicit").unwrap(),
            vec![(2, 0.2), (5, 0.08)]
        );
    }
}
