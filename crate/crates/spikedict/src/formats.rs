//! On-disk formats: raw `f32` signals with a JSON sidecar, JSON dictionaries
//! and CSV event lists, histories and reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use spikedict_core::cksvd::IterationRecord;
use spikedict_core::eval::SortReport;
use spikedict_core::signal::{normalize_template, Dictionary, Event, EventList, Signal};

use crate::error::{Error, Result};

/// Accepted deviation of a stored template's norm from 1 (rows are renormalized).
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalMeta {
    pub sampling_rate_hz: f64,
    pub num_samples: usize,
    pub units: String,
}

/// `rec.f32` → `rec.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Writes the samples as little-endian `f32` plus the metadata sidecar.
pub fn save_signal(path: &Path, signal: &Signal, units: &str) -> Result<()> {
    let mut w = create(path)?;
    for &v in signal.samples() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(
        &sidecar_path(path),
        &SignalMeta {
            sampling_rate_hz: signal.sampling_rate_hz(),
            num_samples: signal.len(),
            units: units.to_string(),
        },
    )
}

pub fn load_signal(path: &Path) -> Result<(Signal, SignalMeta)> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(Error::Format(format!("missing sidecar {}", meta_path.display())));
    }
    let meta: SignalMeta = read_json(&meta_path)?;
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * meta.num_samples {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, sidecar declares {} samples",
            path.display(),
            bytes.len(),
            meta.num_samples
        )));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite sample", path.display())));
    }
    let signal = Signal::new(samples, meta.sampling_rate_hz).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((signal, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryFile {
    pub template_length: usize,
    pub templates: Vec<Vec<f64>>,
}

impl DictionaryFile {
    pub fn from_dictionary(d: &Dictionary) -> Self {
        Self {
            template_length: d.template_length(),
            templates: d.templates().iter().map(|t| t.values().to_vec()).collect(),
        }
    }

    pub fn into_dictionary(self) -> Result<Dictionary> {
        if self.templates.is_empty() {
            return Err(Error::Format("dictionary has no templates".into()));
        }
        let mut out = Vec::with_capacity(self.templates.len());
        for (c, row) in self.templates.iter().enumerate() {
            if row.len() != self.template_length {
                return Err(Error::Format(format!(
                    "template {c} has {} samples, expected {}",
                    row.len(),
                    self.template_length
                )));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(Error::Format(format!("template {c} has norm {norm}, expected 1")));
            }
            out.push(normalize_template(row).map_err(|e| Error::Format(format!("template {c}: {e}")))?);
        }
        Ok(Dictionary::new(out)?)
    }
}

pub fn save_dictionary(path: &Path, d: &Dictionary) -> Result<()> {
    write_json(path, &DictionaryFile::from_dictionary(d))
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    read_json::<DictionaryFile>(path)?.into_dictionary()
}

pub fn parse_dictionary(json: &str) -> Result<Dictionary> {
    serde_json::from_str::<DictionaryFile>(json)
        .map_err(|e| Error::Format(e.to_string()))?
        .into_dictionary()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub neuron_id: usize,
    pub sample_index: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub error_distance_to_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Neuron index, or `pooled`.
    pub neuron_id: String,
    pub threshold: f64,
    pub true_miss: f64,
    pub false_alarm: f64,
}

pub fn write_csv_to<W: Write, T: Serialize>(w: W, rows: &[T]) -> std::result::Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = create(path)?;
    if rows.is_empty() {
        writeln!(w, "{}", header.join(",")).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    write_csv_to(w, rows).map_err(|source| Error::Csv {
        path: path.into(),
        source,
    })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let found = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Format(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|source| Error::Csv {
                path: path.into(),
                source,
            })
        })
        .collect()
}

pub const EVENTS_HEADER: [&str; 3] = ["neuron_id", "sample_index", "amplitude"];
pub const HISTORY_HEADER: [&str; 3] = ["iteration", "objective", "error_distance_to_init"];
pub const REPORT_HEADER: [&str; 4] = ["neuron_id", "threshold", "true_miss", "false_alarm"];

pub fn write_events(path: &Path, events: &EventList) -> Result<()> {
    let rows: Vec<EventRow> = events
        .iter()
        .map(|e| EventRow {
            neuron_id: e.neuron,
            sample_index: e.position,
            amplitude: e.amplitude,
        })
        .collect();
    write_csv(path, &rows, &EVENTS_HEADER)
}

pub fn read_events(path: &Path) -> Result<EventList> {
    let rows: Vec<EventRow> = read_csv(path, &EVENTS_HEADER)?;
    EventList::new(
        rows.into_iter()
            .map(|r| Event::new(r.neuron_id, r.sample_index, r.amplitude))
            .collect(),
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let rows: Vec<HistoryRow> = history
        .iter()
        .map(|h| HistoryRow {
            iteration: h.iteration,
            objective: h.objective,
            error_distance_to_init: h.error_distance_to_init,
        })
        .collect();
    write_csv(path, &rows, &HISTORY_HEADER)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    read_csv(path, &HISTORY_HEADER)
}

/// Per-neuron rows followed by a pooled row, for each report.
pub fn report_rows(reports: &[SortReport]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for r in reports {
        let threshold = r.threshold.unwrap_or(0.0);
        for (c, n) in r.per_neuron.iter().enumerate() {
            rows.push(ReportRow {
                neuron_id: c.to_string(),
                threshold,
                true_miss: n.true_miss,
                false_alarm: n.false_alarm,
            });
        }
        rows.push(ReportRow {
            neuron_id: "pooled".into(),
            threshold,
            true_miss: r.pooled.true_miss,
            false_alarm: r.pooled.false_alarm,
        });
    }
    rows
}

pub fn write_report(path: &Path, reports: &[SortReport]) -> Result<()> {
    write_csv(path, &report_rows(reports), &REPORT_HEADER)
}
