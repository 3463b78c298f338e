//! Acceptance checks and report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One acceptance line: `PASS|FAIL <id> measured=<v> threshold=<t>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub measured: String,
    pub threshold: String,
    pub pass: bool,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6e}")
}

impl Check {
    pub fn new(id: impl Into<String>, pass: bool, measured: impl Into<String>, threshold: impl Into<String>) -> Self {
        Self { id: id.into(), measured: measured.into(), threshold: threshold.into(), pass }
    }

    pub fn at_least(id: impl Into<String>, value: f64, min: f64) -> Self {
        Self::new(id, value >= min, fmt_num(value), format!(">={}", fmt_num(min)))
    }

    pub fn at_most(id: impl Into<String>, value: f64, max: f64) -> Self {
        Self::new(id, value <= max, fmt_num(value), format!("<={}", fmt_num(max)))
    }

    pub fn within(id: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(id, (lo..=hi).contains(&value), fmt_num(value), format!("[{},{}]", fmt_num(lo), fmt_num(hi)))
    }

    /// Combines sub-checks into one line; measured and threshold fields
    /// list `name:value` pairs separated by `;`.
    pub fn all(id: impl Into<String>, parts: &[Check]) -> Self {
        let join = |f: &dyn Fn(&Check) -> String| parts.iter().map(|c| format!("{}:{}", c.id, f(c))).collect::<Vec<_>>().join(";");
        Self::new(id, parts.iter().all(|c| c.pass), join(&|c| c.measured.clone()), join(&|c| c.threshold.clone()))
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} measured={} threshold={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.measured,
            self.threshold
        )
    }
}

/// Output of one experiment run: CSV files, free-form notes, the acceptance
/// checks and the echoed configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub config_echo: String,
    pub notes: Vec<String>,
    /// Detail checks, printed as notes.
    pub details: Vec<Check>,
    /// One per acceptance criterion covered by the run.
    pub checks: Vec<Check>,
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn new(experiment: impl Into<String>, config_echo: impl Into<String>) -> Self {
        Self { experiment: experiment.into(), config_echo: config_echo.into(), ..Self::default() }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn add_file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, id_prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id.starts_with(id_prefix))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# experiment: {}", self.experiment);
        let _ = writeln!(s, "# config");
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "#   {line}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        for d in &self.details {
            let _ = writeln!(s, "  detail {}", d.line());
        }
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        s
    }

    /// Writes every file plus `summary.txt` into `dir`, returning the paths.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, contents) in self.files.iter().chain(std::iter::once(&("summary.txt".to_string(), self.summary()))) {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        assert_eq!(Check::at_least("X", 2.0, 1.0).line(), "PASS X measured=2.000000e0 threshold=>=1.000000e0");
        assert!(!Check::within("Y", 1.5, 0.8, 1.3).pass);
        let all = Check::all("Z", &[Check::at_most("a", 1.0, 2.0), Check::at_most("b", 3.0, 2.0)]);
        assert!(!all.pass);
        assert!(all.line().starts_with("FAIL Z measured=a:1.000000e0;b:3.000000e0 threshold=a:<="));
        assert!(!all.line().contains(' ') || all.line().split(' ').count() == 4);
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("demo", "seed = 1\n");
        r.add_file("a.csv", "x\n1\n".into());
        r.checks.push(Check::at_most("C0", 0.0, 1.0));
        let paths = r.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("#   seed = 1"));
        assert!(summary.ends_with("PASS C0 measured=0.000000e0 threshold=<=1.000000e0\n"));
    }
}
