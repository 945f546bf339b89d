use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::run::{read_step_records, STEPS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(Error::Usage(format!("unknown export format `{other}` (csv or jsonl)"))),
        }
    }
}

/// Re-emits a run's step records in the requested format.
pub fn export<W: Write>(run_dir: &Path, format: ExportFormat, out: W) -> Result<()> {
    let path = run_dir.join(STEPS_FILE);
    let records = read_step_records(&path)?;
    let io_err = |e: std::io::Error| Error::io("<export output>", e);
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &records {
                w.serialize(r).map_err(|e| Error::Parse {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
            }
            w.flush().map_err(io_err)?;
        }
        ExportFormat::Jsonl => {
            let mut out = out;
            for r in &records {
                serde_json::to_writer(&mut out, r).map_err(|e| io_err(e.into()))?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
        }
    }
    Ok(())
}
