use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::sim::RunSummary;
use crate::qkdsim::write_telemetry_csv;

/// Paths written by [`write_run_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub telemetry: PathBuf,
    pub sessions: PathBuf,
    pub efficiency: PathBuf,
    pub summary: PathBuf,
    pub transcripts: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Writes `telemetry.csv`, `sessions.json`, `efficiency.json`,
/// `summary.json` and, when captured, `transcripts.jsonl` into `dir`.
pub fn write_run_outputs(summary: &RunSummary, dir: &Path) -> io::Result<RunFiles> {
    fs::create_dir_all(dir)?;
    let files = RunFiles {
        telemetry: dir.join("telemetry.csv"),
        sessions: dir.join("sessions.json"),
        efficiency: dir.join("efficiency.json"),
        summary: dir.join("summary.json"),
        transcripts: (!summary.transcripts.is_empty()).then(|| dir.join("transcripts.jsonl")),
    };
    let mut csv = BufWriter::new(File::create(&files.telemetry)?);
    write_telemetry_csv(&summary.telemetry, &mut csv)?;
    csv.flush()?;
    write_json(&files.sessions, &summary.sessions)?;
    write_json(&files.efficiency, &summary.stats.efficiency)?;
    write_json(&files.summary, &summary.stats)?;
    if let Some(path) = &files.transcripts {
        let mut out = BufWriter::new(File::create(path)?);
        for t in &summary.transcripts {
            t.write_jsonl(&mut out)?;
        }
        out.flush()?;
    }
    Ok(files)
}
