//! On-disk artifact formats.
//!
//! Tables are plain CSV with a header row. Lines starting with `#` are
//! comments and are skipped by every reader. Floats are written in their
//! shortest round-trip form, so a written snapshot reads back bit-identical.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainTrajectory, FluidTrajectory};
use crate::heuristics::SweepRow;
use crate::network_state::{Link, LinkConfiguration};
use crate::simulator::{EventKind, EventRecord, RunMetrics};
use crate::spatial_stats::{LaplacePoint, RipleyPoint};
use crate::torus::{Point, TorusDomain};
use crate::{Error, Result};

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse(format!("{other:?}")),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

/// Writes `# key=value ...` as the first line of an artifact.
pub fn write_comment<W: Write>(mut w: W, fields: &[(&str, String)]) -> Result<()> {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(w, "# {}", body.join(" "))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRow {
    link_id: u64,
    rx_x: f64,
    rx_y: f64,
    tx_x: f64,
    tx_y: f64,
    residual_bits: f64,
    birth_time: f64,
}

pub fn write_snapshot_csv<W: Write>(w: W, cfg: &LinkConfiguration) -> Result<()> {
    let mut out = writer(w);
    for l in cfg.links() {
        out.serialize(SnapshotRow {
            link_id: l.id,
            rx_x: l.rx.x,
            rx_y: l.rx.y,
            tx_x: l.tx.x,
            tx_y: l.tx.y,
            residual_bits: l.residual_bits,
            birth_time: l.birth_time,
        })?;
    }
    if cfg.is_empty() {
        out.write_record(["link_id", "rx_x", "rx_y", "tx_x", "tx_y", "residual_bits", "birth_time"])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a snapshot; the torus and link length are not stored in the file.
pub fn read_snapshot_csv<R: Read>(r: R, domain: TorusDomain, link_length: f64) -> Result<LinkConfiguration> {
    let mut cfg = LinkConfiguration::new(domain, link_length)?;
    for row in reader(r).deserialize::<SnapshotRow>() {
        let row = row?;
        cfg.push(Link {
            id: row.link_id,
            rx: Point::new(row.rx_x, row.rx_y),
            tx: Point::new(row.tx_x, row.tx_y),
            residual_bits: row.residual_bits,
            birth_time: row.birth_time,
        })?;
    }
    Ok(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    kind: String,
    time: f64,
    link_id: u64,
    rx_x: f64,
    rx_y: f64,
    tx_x: f64,
    tx_y: f64,
}

/// Event log; `kind` is `B` for a birth and `D` for a death.
pub fn write_events_csv<W: Write>(w: W, events: &[EventRecord]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["kind", "time", "link_id", "rx_x", "rx_y", "tx_x", "tx_y"])?;
    for e in events {
        let kind = match e.kind {
            EventKind::Birth => "B",
            EventKind::Death => "D",
        };
        out.serialize((kind, e.time, e.link_id, e.rx.x, e.rx.y, e.tx.x, e.tx.y))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<EventRecord>> {
    reader(r)
        .deserialize::<EventRow>()
        .map(|row| {
            let row = row?;
            let kind = match row.kind.as_str() {
                "B" => EventKind::Birth,
                "D" => EventKind::Death,
                other => return Err(Error::Parse(format!("unknown event kind {other:?}"))),
            };
            Ok(EventRecord {
                kind,
                time: row.time,
                link_id: row.link_id,
                rx: Point::new(row.rx_x, row.rx_y),
                tx: Point::new(row.tx_x, row.tx_y),
            })
        })
        .collect()
}

/// Scalar summary of a run as written to the metrics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub beta_hat: f64,
    pub beta_std_error: f64,
    pub w_hat: f64,
    pub w_std_error: f64,
    pub throughput: f64,
    pub births: u64,
    pub deaths: u64,
    pub truncated: bool,
    pub end_time: f64,
    pub max_workload_error: f64,
    pub delay_samples: Vec<f64>,
    pub n_trajectory: Vec<(f64, usize)>,
}

impl MetricsRecord {
    pub fn new(m: &RunMetrics, config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            seed: m.seed,
            lambda: m.lambda,
            horizon: m.horizon,
            warmup: m.warmup,
            beta_hat: m.beta_hat,
            beta_std_error: m.beta_std_error,
            w_hat: m.w_hat,
            w_std_error: m.w_std_error,
            throughput: m.throughput,
            births: m.births,
            deaths: m.deaths,
            truncated: m.truncated,
            end_time: m.end_time,
            max_workload_error: m.max_workload_error,
            delay_samples: m.delay_samples.clone(),
            n_trajectory: m.n_trajectory.clone(),
        }
    }
}

pub fn write_metrics_json<W: Write>(mut w: W, m: &RunMetrics, config_hash: &str) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &MetricsRecord::new(m, config_hash))?;
    writeln!(w)?;
    Ok(())
}

pub fn read_metrics_json<R: Read>(r: R) -> Result<MetricsRecord> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_trajectory_csv<W: Write>(w: W, trajectory: &[(f64, usize)]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["time", "n_links"])?;
    for row in trajectory {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "lambda", "beta_f", "beta_s", "beta_l", "lambda_c", "status_f", "status_s", "defect_f", "defect_s",
    ])?;
    for r in rows {
        out.serialize((
            r.lambda,
            r.beta_f,
            r.beta_s,
            r.beta_l,
            r.lambda_c,
            r.status_f.as_str(),
            r.status_s.as_str(),
            r.defect_f,
            r.defect_s,
        ))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ripley_csv<W: Write>(w: W, rows: &[RipleyPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["r", "k_hat", "k_ppp", "ci_lo", "ci_hi"])?;
    for p in rows {
        out.serialize((p.r, p.k_hat, p.k_ppp, p.ci_lo, p.ci_hi))?;
    }
    out.flush()?;
    Ok(())
}

/// Laplace curves of the process and its Poisson surrogate on the same grid.
pub fn write_laplace_csv<W: Write>(w: W, phi: &[LaplacePoint], ppp: &[LaplacePoint]) -> Result<()> {
    if phi.len() != ppp.len() || phi.iter().zip(ppp).any(|(a, b)| a.s != b.s) {
        return Err(Error::Parameter("Laplace curves are on different grids".into()));
    }
    let mut out = writer(w);
    out.write_record(["s", "laplace_phi", "laplace_ppp", "ci_phi_lo", "ci_phi_hi", "ci_ppp_lo", "ci_ppp_hi"])?;
    for (a, b) in phi.iter().zip(ppp) {
        let (alo, ahi) = a.estimate.ci95();
        let (blo, bhi) = b.estimate.ci95();
        out.serialize((a.s, a.estimate.value, b.estimate.value, alo, ahi, blo, bhi))?;
    }
    out.flush()?;
    Ok(())
}

fn cell_header(n: usize) -> Vec<String> {
    std::iter::once("time".to_string()).chain((0..n).map(|i| format!("cell_{i}"))).collect()
}

/// Chain path as `time,cell_0,...,cell_{n-1}`, one row per jump.
pub fn write_chain_csv<W: Write>(w: W, trajectory: &ChainTrajectory) -> Result<()> {
    let mut out = writer(w);
    out.write_record(cell_header(trajectory.initial.len()))?;
    let mut failure = None;
    trajectory.replay(|t, x| {
        if failure.is_none() {
            let row: Vec<String> = std::iter::once(t.to_string()).chain(x.iter().map(|v| v.to_string())).collect();
            failure = out.write_record(&row).err();
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

/// Fluid path in the same layout as [`write_chain_csv`].
pub fn write_fluid_csv<W: Write>(w: W, trajectory: &FluidTrajectory) -> Result<()> {
    let mut out = writer(w);
    let n = trajectory.states.first().map_or(0, |s| s.len());
    out.write_record(cell_header(n))?;
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        let row: Vec<String> = std::iter::once(t.to_string()).chain(x.iter().map(|v| v.to_string())).collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Generic numeric table.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Parameter(format!("row has {} columns, header has {}", r.len(), header.len())));
        }
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
