//! Flat `key = value` configuration files with bracketed `[section]` headers.
//!
//! Parsing is fail-fast: malformed lines, duplicate keys, unknown sections and
//! unknown keys are all errors, each reported with its line number.

use crate::error::CliError;
use std::collections::BTreeSet;

#[derive(Debug)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug)]
pub struct Section {
    pub name: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug)]
pub struct RawConfig {
    pub sections: Vec<Section>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, CliError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(CliError::Usage(format!(
                        "line {line_no}: malformed section header `{line}`"
                    )));
                };
                let name = name.trim();
                if name.is_empty() {
                    return Err(CliError::Usage(format!("line {line_no}: empty section name")));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(CliError::Usage(format!(
                        "line {line_no}: duplicate section [{name}]"
                    )));
                }
                sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let Some(section) = sections.last_mut() else {
                return Err(CliError::Usage(format!(
                    "line {line_no}: key `{key}` appears before any [section]"
                )));
            };
            if section.entries.iter().any(|e| e.key == key) {
                return Err(CliError::Usage(format!(
                    "line {line_no}: duplicate key `{key}` in [{}]",
                    section.name
                )));
            }
            section.entries.push(Entry {
                key,
                value,
                line: line_no,
            });
        }
        Ok(RawConfig { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Reject sections outside the allowed set.
    pub fn expect_sections(&self, allowed: &[&str]) -> Result<(), CliError> {
        for s in &self.sections {
            if !allowed.contains(&s.name.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown section [{}] (expected one of: {})",
                    s.name,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Typed accessor over one section; keys left unread when [`finish`] is called
/// are an error.
///
/// [`finish`]: SectionReader::finish
pub struct SectionReader<'a> {
    section: &'a Section,
    taken: BTreeSet<&'a str>,
}

impl<'a> SectionReader<'a> {
    pub fn new(section: &'a Section) -> Self {
        Self {
            section,
            taken: BTreeSet::new(),
        }
    }

    pub fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let entry = self.section.entries.iter().find(|e| e.key == key)?;
        self.taken.insert(entry.key.as_str());
        Some(entry)
    }

    pub fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        let Some(entry) = self.take(key) else {
            return Ok(None);
        };
        entry.value.parse::<T>().map(Some).map_err(|_| {
            CliError::Usage(format!(
                "line {}: could not parse `{}` as {} for key `{key}`",
                entry.line,
                entry.value,
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn parsed_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.parsed(key)?.ok_or_else(|| {
            CliError::Usage(format!(
                "missing key `{key}` in [{}]",
                self.section.name
            ))
        })
    }

    pub fn string_or(&mut self, key: &str, default: &str) -> String {
        self.take(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    /// Comma-separated list parsed element-wise with `parse_item`.
    pub fn list<T>(
        &mut self,
        key: &str,
        parse_item: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<Vec<T>>, CliError> {
        let Some(entry) = self.take(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in entry.value.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            out.push(parse_item(item).map_err(|e| {
                CliError::Usage(format!("line {}: key `{key}`: {e}", entry.line))
            })?);
        }
        Ok(Some(out))
    }

    pub fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<String> = self
            .section
            .entries
            .iter()
            .filter(|e| !self.taken.contains(e.key.as_str()))
            .map(|e| format!("`{}` (line {})", e.key, e.line))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "unknown keys in [{}]: {}",
                self.section.name,
                unknown.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg = RawConfig::parse("# comment\n[a]\nx = 1\ny = two\n[b]\nz = 3.5\n").unwrap();
        assert_eq!(cfg.sections.len(), 2);
        let mut reader = SectionReader::new(cfg.section("a").unwrap());
        assert_eq!(reader.parsed::<u32>("x").unwrap(), Some(1));
        assert!(reader.finish().is_err()); // y untouched
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(RawConfig::parse("x = 1\n").is_err()); // key before section
        assert!(RawConfig::parse("[a\nx = 1\n").is_err());
        assert!(RawConfig::parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(RawConfig::parse("[a]\njust words\n").is_err());
        assert!(RawConfig::parse("[a]\n[a]\n").is_err());
    }

    #[test]
    fn lists_and_defaults() {
        let cfg = RawConfig::parse("[s]\ngrid = 1, 2, 3\n").unwrap();
        let mut reader = SectionReader::new(cfg.section("s").unwrap());
        let grid = reader
            .list("grid", |s| s.parse::<usize>().map_err(|e| e.to_string()))
            .unwrap()
            .unwrap();
        assert_eq!(grid, vec![1, 2, 3]);
        assert_eq!(reader.parsed_or("missing", 7u64).unwrap(), 7);
        assert!(reader.finish().is_ok());
    }
}
