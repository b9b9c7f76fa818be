//! CSV streams and run metadata.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::Measurement;
use crate::tdvp::Diagnostics;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_BIN: &str = "checkpoint.bin";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";

const DIAGNOSTIC_COLUMNS: [&str; 13] = [
    "step",
    "t",
    "tau",
    "tau_next",
    "err",
    "rejected",
    "l2",
    "l2_per_site",
    "min_eig_s",
    "effective_rank",
    "acceptance",
    "trace_error",
    "n_samples",
];

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn stream_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

struct Stream {
    name: String,
    writer: csv::Writer<BufWriter<File>>,
    max_im: f64,
}

/// Writes one `t,value,im_residual` CSV per observable plus a diagnostics
/// CSV. Files are only ever appended to, so a checkpoint can record their
/// lengths and a resume can cut them back.
pub struct Recorder {
    dir: PathBuf,
    streams: Vec<Stream>,
    diagnostics: Option<csv::Writer<BufWriter<File>>>,
}

impl Recorder {
    /// Creates fresh files (truncating old ones).
    pub fn create(dir: &Path, names: &[String], with_diagnostics: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |path: PathBuf, header: &[&str]| -> Result<csv::Writer<BufWriter<File>>> {
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
            w.write_record(header).map_err(csv_err)?;
            Ok(w)
        };
        let streams = names
            .iter()
            .map(|n| {
                Ok(Stream {
                    name: n.clone(),
                    writer: open(stream_path(dir, n), &["t", "value", "im_residual"])?,
                    max_im: 0.0,
                })
            })
            .collect::<Result<_>>()?;
        let diagnostics = if with_diagnostics {
            Some(open(dir.join(DIAGNOSTICS_FILE), &DIAGNOSTIC_COLUMNS)?)
        } else {
            None
        };
        Ok(Recorder {
            dir: dir.to_path_buf(),
            streams,
            diagnostics,
        })
    }

    /// Reopens existing files for appending after cutting each back to the
    /// recorded length.
    pub fn reopen(
        dir: &Path,
        names: &[String],
        with_diagnostics: bool,
        lengths: &BTreeMap<String, u64>,
        max_im: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let append = |file: &str| -> Result<csv::Writer<BufWriter<File>>> {
            let len = *lengths
                .get(file)
                .ok_or_else(|| Error::Checkpoint(format!("no recorded length for {file}")))?;
            let f = OpenOptions::new().write(true).open(dir.join(file))?;
            f.set_len(len)?;
            drop(f);
            let f = OpenOptions::new().append(true).open(dir.join(file))?;
            Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(f)))
        };
        let streams = names
            .iter()
            .map(|n| {
                Ok(Stream {
                    name: n.clone(),
                    writer: append(&format!("{n}.csv"))?,
                    max_im: max_im.get(n).copied().unwrap_or(0.0),
                })
            })
            .collect::<Result<_>>()?;
        let diagnostics = if with_diagnostics {
            Some(append(DIAGNOSTICS_FILE)?)
        } else {
            None
        };
        Ok(Recorder {
            dir: dir.to_path_buf(),
            streams,
            diagnostics,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.streams.iter().map(|s| s.name.clone()).collect()
    }

    /// Appends one value per stream, in the order the streams were created.
    pub fn record(&mut self, t: f64, values: &[Measurement]) -> Result<()> {
        if values.len() != self.streams.len() {
            return Err(Error::invalid("one measurement per stream expected"));
        }
        for (s, m) in self.streams.iter_mut().zip(values) {
            s.writer
                .write_record([t.to_string(), m.value.to_string(), m.im_residual.to_string()])
                .map_err(csv_err)?;
            if m.im_residual.abs() > s.max_im {
                s.max_im = m.im_residual.abs();
            }
        }
        Ok(())
    }

    pub fn record_diagnostics(&mut self, d: &Diagnostics) -> Result<()> {
        if let Some(w) = &mut self.diagnostics {
            w.write_record([
                d.step.to_string(),
                d.t.to_string(),
                d.tau.to_string(),
                d.tau_next.to_string(),
                d.err.to_string(),
                d.rejected.to_string(),
                d.l2.to_string(),
                d.l2_per_site.to_string(),
                d.min_eig_s.to_string(),
                d.effective_rank.to_string(),
                d.acceptance.to_string(),
                d.trace_error.to_string(),
                d.n_samples.to_string(),
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        for s in &mut self.streams {
            s.writer.flush()?;
        }
        if let Some(w) = &mut self.diagnostics {
            w.flush()?;
        }
        Ok(())
    }

    /// Flushes and returns the byte length of every file.
    pub fn lengths(&mut self) -> Result<BTreeMap<String, u64>> {
        self.flush()?;
        let mut out = BTreeMap::new();
        let mut files: Vec<String> = self.streams.iter().map(|s| format!("{}.csv", s.name)).collect();
        if self.diagnostics.is_some() {
            files.push(DIAGNOSTICS_FILE.to_string());
        }
        for f in files {
            out.insert(f.clone(), std::fs::metadata(self.dir.join(&f))?.len());
        }
        Ok(out)
    }

    /// Largest `|im_residual|` written per stream.
    pub fn max_im_residuals(&self) -> BTreeMap<String, f64> {
        self.streams.iter().map(|s| (s.name.clone(), s.max_im)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Error,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub backend: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub streams: Vec<String>,
    pub t_final: f64,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub wall_time_s: f64,
    pub mean_iteration_s: f64,
    pub resumes: usize,
    /// Largest `|tr ρ - 1|` after any accepted step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_trace_error: Option<f64>,
    /// Smallest metric eigenvalue over all assemblies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_min_eig_s: Option<f64>,
    pub max_im_residual: BTreeMap<String, f64>,
    /// First failure of each observable, if any were recorded as NaN.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observable_errors: BTreeMap<String, String>,
    /// Fully resolved configuration.
    pub config: String,
}

impl RunMetadata {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        write_atomic(&dir.join(METADATA_FILE), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(METADATA_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{METADATA_FILE}: {e}")))
    }
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// A stream file read back: `(t, value)` rows.
pub fn read_stream(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::invalid(format!("{}: malformed row", path.display())))
        };
        rows.push((field(0)?, field(1)?));
    }
    Ok(rows)
}
