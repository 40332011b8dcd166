use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::CliError;

/// `report.txt`: inputs, effective settings and metrics of one command.
pub struct Report {
    command: &'static str,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
    metrics: Vec<(String, String)>,
    settings: String,
}

impl Report {
    pub fn new(command: &'static str, cfg: &PipelineConfig) -> Self {
        Report {
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: Vec::new(),
            settings: cfg.effective_text(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.push((name.into(), path.display().to_string()));
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.push((name.into(), path.display().to_string()));
        self
    }

    pub fn metric(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.metrics.push((name.into(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        for (title, items) in [("inputs", &self.inputs), ("outputs", &self.outputs), ("metrics", &self.metrics)] {
            let _ = writeln!(s, "\n[{title}]");
            for (k, v) in items {
                let _ = writeln!(s, "{k}: {v}");
            }
        }
        let _ = write!(s, "\n[settings]\n{}", self.settings);
        s
    }

    /// `dir/report.txt`, for commands whose output is a directory.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, CliError> {
        self.write_file(&dir.join("report.txt"))
    }

    /// `<output>.report.txt`, for commands whose output is one file or
    /// one file prefix.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf, CliError> {
        self.write_file(&suffixed(output, ".report.txt"))
    }

    /// Evaluation commands: `dir/report.txt` when a report directory is
    /// given, `<input>.<command>.report.txt` otherwise.
    pub fn write_eval(&self, dir: Option<&Path>, input: &Path) -> Result<PathBuf, CliError> {
        match dir {
            Some(d) => self.write_to(d),
            None => self.write_file(&suffixed(input, &format!(".{}.report.txt", self.command))),
        }
    }

    fn write_file(&self, path: &Path) -> Result<PathBuf, CliError> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        }
        pivotsmt::io::write_atomic(path, &self.render())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path.to_owned())
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
