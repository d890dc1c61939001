//! Plain-text certificate reports.
//!
//! Gating checks print as `CONDITION <name>: PASS|FAIL worst=<value>`,
//! informational ones as `INFO <name>: ...`, and the last line is
//! `RESULT: PASS|FAIL`.

use pcons_core::synthesis::Certificate;

#[derive(Debug, Clone, Default)]
pub struct Report {
    lines: Vec<String>,
    failed: bool,
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

impl Report {
    pub fn new(command: &str, scenario: &str) -> Self {
        Self {
            lines: vec![format!("COMMAND {command}"), format!("SCENARIO {scenario}")],
            failed: false,
        }
    }

    pub fn field(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} {value}"));
    }

    pub fn condition(&mut self, name: &str, passed: bool, worst: f64, normative: bool) {
        let tag = if normative { "CONDITION" } else { "INFO" };
        self.lines.push(format!("{tag} {name}: {} worst={worst:.6e}", verdict(passed)));
        if normative && !passed {
            self.failed = true;
        }
    }

    pub fn certificates(&mut self, certs: &[Certificate]) {
        for c in certs {
            self.condition(c.name, c.passed, c.worst, c.normative);
        }
    }

    pub fn fail(&mut self) {
        self.failed = true;
    }

    pub fn passed(&self) -> bool {
        !self.failed
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push_str(&format!("\nRESULT: {}\n", verdict(!self.failed)));
        out
    }
}

/// One parsed `CONDITION`/`INFO` line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionLine {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub normative: bool,
}

pub fn parse_conditions(text: &str) -> Vec<ConditionLine> {
    text.lines()
        .filter_map(|line| {
            let (normative, rest) = if let Some(r) = line.strip_prefix("CONDITION ") {
                (true, r)
            } else {
                (false, line.strip_prefix("INFO ")?)
            };
            let (name, rest) = rest.split_once(": ")?;
            let (status, worst) = rest.split_once(" worst=")?;
            Some(ConditionLine {
                name: name.into(),
                passed: status == "PASS",
                worst: worst.parse().ok()?,
                normative,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let mut r = Report::new("verify", "demo");
        r.condition("a", true, -1.5, true);
        r.condition("b", false, 2e-3, false);
        assert!(r.passed());
        r.condition("c", false, 0.25, true);
        let text = r.render();
        assert!(text.contains("CONDITION c: FAIL worst=2.500000e-1"));
        assert!(text.ends_with("RESULT: FAIL\n"));
        let parsed = parse_conditions(&text);
        assert_eq!(parsed.len(), 3);
        assert!(!parsed[1].normative && !parsed[1].passed);
        assert_eq!(parsed[0].worst, -1.5);
    }
}
