//! Text and JSON report emission.

use crate::error::{CliError, CliResult};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
pub const TEXT_FILE: &str = "report.txt";
pub const JSON_FILE: &str = "report.json";

/// Display format shared by every number in the text report, so each one
/// can be recovered from the JSON report by formatting the stored value.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        format!("{x}")
    } else if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.6e}")
    }
}

pub struct Report {
    command: String,
    text: String,
    warnings: Vec<String>,
    sections: serde_json::Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report {
            command: command.to_string(),
            text: String::new(),
            warnings: Vec::new(),
            sections: serde_json::Map::new(),
        };
        r.line(format!("mfpkit {command} report"));
        r
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.text, "{}", s.as_ref());
    }

    pub fn blank(&mut self) {
        self.text.push('\n');
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn section<T: Serialize>(&mut self, key: &str, value: &T) -> CliResult<()> {
        let v = serde_json::to_value(value)
            .map_err(|e| CliError::Numerical(format!("cannot encode `{key}`: {e}")))?;
        self.sections.insert(key.to_string(), v);
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut t = self.text.clone();
        if !self.warnings.is_empty() {
            t.push_str("\nwarnings:\n");
            for w in &self.warnings {
                let _ = writeln!(t, "  - {w}");
            }
        }
        t
    }

    pub fn json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "warnings": self.warnings,
            "report": Value::Object(self.sections.clone()),
        })
    }

    pub fn json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json()).expect("JSON values always encode");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(TEXT_FILE), self.text()).map_err(io)?;
        std::fs::write(dir.join(JSON_FILE), self.json_string()).map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_switches_to_exponent() {
        assert_eq!(num(0.05), "0.050000");
        assert_eq!(num(0.0), "0.000000");
        assert_eq!(num(3.2e-7), "3.200000e-7");
        assert_eq!(num(-12.5), "-12.500000");
        assert_eq!(num(2.5e7), "2.500000e7");
    }

    #[test]
    fn keys_are_sorted_and_warnings_deduplicated() {
        let mut r = Report::new("fit");
        r.section("zeta", &1).unwrap();
        r.section("alpha", &2).unwrap();
        r.warn("w");
        r.warn("w");
        let s = r.json_string();
        assert!(s.find("\"alpha\"").unwrap() < s.find("\"zeta\"").unwrap());
        assert_eq!(r.json()["warnings"].as_array().unwrap().len(), 1);
        assert!(r.text().contains("warnings:\n  - w"));
    }
}
