//! Metrics CSV: one row per reported update.

use std::fs::{File, OpenOptions};
use std::path::Path;

use transferlab_core::agent::Progress;

use crate::error::{FormatError, Result};

pub const COLUMNS: [&str; 6] = ["wall_time_s", "frames", "updates", "mean_reward", "std_reward", "episodes"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub wall_time_s: f64,
    pub frames: u64,
    pub updates: u64,
    pub mean_reward: f32,
    pub std_reward: f32,
    pub episodes: u64,
}

impl MetricsRecord {
    pub fn from_progress(wall_time_s: f64, p: &Progress) -> Self {
        MetricsRecord {
            wall_time_s,
            frames: p.frames,
            updates: p.updates,
            mean_reward: p.mean_reward,
            std_reward: p.std_reward,
            episodes: p.episodes,
        }
    }
}

/// Appends rows to a metrics file, writing the header only when the file is new or empty.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            inner.write_record(COLUMNS)?;
            inner.flush()?;
        }
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> Result<()> {
        self.inner.write_record([
            r.wall_time_s.to_string(),
            r.frames.to_string(),
            r.updates.to_string(),
            r.mean_reward.to_string(),
            r.std_reward.to_string(),
            r.episodes.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes a whole stream of records.
pub fn write_metrics<'a>(path: &Path, records: impl IntoIterator<Item = &'a MetricsRecord>) -> Result<()> {
    let mut w = MetricsWriter::open(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(FormatError::Metrics(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| FormatError::Metrics(format!("bad `{}` value `{}`", COLUMNS[i], field(i)));
        out.push(MetricsRecord {
            wall_time_s: field(0).parse().map_err(|_| bad(0))?,
            frames: field(1).parse().map_err(|_| bad(1))?,
            updates: field(2).parse().map_err(|_| bad(2))?,
            mean_reward: field(3).parse().map_err(|_| bad(3))?,
            std_reward: field(4).parse().map_err(|_| bad(4))?,
            episodes: field(5).parse().map_err(|_| bad(5))?,
        });
    }
    Ok(out)
}

pub const REPORT_COLUMNS: [&str; 5] = ["checkpoint", "episodes", "mean_score", "frames", "scores"];

/// One row per evaluation; per-episode scores are space separated.
pub fn write_eval_reports(path: &Path, reports: &[transferlab_core::transfer::EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        let scores: Vec<String> = r.scores.iter().map(f32::to_string).collect();
        w.write_record([r.checkpoint.to_string(), r.episodes().to_string(), r.mean.to_string(), r.frames.to_string(), scores.join(" ")])?;
    }
    w.flush()?;
    Ok(())
}
