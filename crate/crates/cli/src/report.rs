use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use doctra::pipeline::RunConfig;
use doctra::Result;
use serde_json::{json, Value};

/// Line-delimited JSON report in `<out>/report.jsonl`. The first line records
/// the command and the resolved config.
pub struct Report {
    out: PathBuf,
    file: BufWriter<File>,
}

impl Report {
    pub fn open(cfg: &RunConfig, command: &str) -> Result<Self> {
        let out = out_dir(cfg);
        fs::create_dir_all(&out)?;
        let config = serde_json::to_value(cfg).expect("config serializes");
        fs::write(out.join("config.json"), serde_json::to_string_pretty(&config).expect("json") + "\n")?;
        let file = BufWriter::new(File::create(out.join("report.jsonl"))?);
        let mut r = Report { out, file };
        r.line(json!({ "command": command, "config": config }))?;
        Ok(r)
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn line(&mut self, v: Value) -> Result<()> {
        writeln!(self.file, "{v}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

pub fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("doctra-out"))
}
