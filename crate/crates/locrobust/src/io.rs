//! File formats: the line-delimited dataset record file and the CSV
//! artifacts.
//!
//! Every file starts with a provenance header carrying the run seed and
//! tool version. Floats are written with Rust's shortest round-trip
//! formatting, so identical inputs produce byte-identical files.
//!
//! Schemas:
//! - map CSV: `id,class,easting,northing`
//! - dataset records: one JSON object per line, `type` tag in
//!   {meta, truth, odom, gps, frame}, merged in time order
//! - state log CSV: `t,arc_length,easting,northing,heading,cov00..cov22,source_of_last_update`
//! - event log CSV: `t,arc_length,source,accepted`
//! - VPT lattice CSV: `arc_length,dx,dy,dtheta,valid`
//! - PAU CSV: `l,probability`
//! - margin CSV: `arc_length,vpt_radius,bound,margin,flagged`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{StateLogEntry, UpdateEvent, UpdateSource};
use crate::metrics::{MarginReport, PauCurve, VptBoundary};
use crate::pose::{Point2, Pose2D};
use crate::sim::{Dataset, GpsFix, OdomSample};
use crate::world::{
    FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Trajectory, TrajectorySample,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn header(seed: u64) -> String {
    format!("# locrobust v{TOOL_VERSION} seed={seed}\n")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

/// Lines of a file minus `#` comment lines, with 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        lines.push((i + 1, line));
    }
    Ok(lines)
}

// --- map CSV ---

pub fn write_map_csv(path: &Path, map: &FeatureMap, seed: u64) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "id,class,easting,northing")?;
        for f in map.features() {
            writeln!(w, "{},{},{},{}", f.id, f.class, f.position.x, f.position.y)?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn read_map_csv(path: &Path) -> Result<FeatureMap, IoError> {
    let mut features = Vec::new();
    for (line_no, line) in data_lines(path)? {
        if line.starts_with("id,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(parse_err(path, line_no, "expected 4 columns"));
        }
        let id = cols[0]
            .parse::<u32>()
            .map_err(|e| parse_err(path, line_no, format!("bad id: {e}")))?;
        let class = cols[1]
            .parse::<FeatureClass>()
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let x = cols[2]
            .parse::<f64>()
            .map_err(|e| parse_err(path, line_no, format!("bad easting: {e}")))?;
        let y = cols[3]
            .parse::<f64>()
            .map_err(|e| parse_err(path, line_no, format!("bad northing: {e}")))?;
        features.push(MapFeature {
            id,
            class,
            position: Point2::new(x, y),
        });
    }
    FeatureMap::new(features).map_err(|e| IoError::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

// --- dataset record file ---

#[derive(Serialize, Deserialize)]
struct PoseRec {
    easting: f64,
    northing: f64,
    heading: f64,
}

impl From<&Pose2D> for PoseRec {
    fn from(p: &Pose2D) -> Self {
        PoseRec {
            easting: p.easting,
            northing: p.northing,
            heading: p.heading,
        }
    }
}

impl PoseRec {
    fn pose(&self) -> Pose2D {
        Pose2D::new(self.easting, self.northing, self.heading)
    }
}

#[derive(Serialize, Deserialize)]
struct ObsRec {
    class: FeatureClass,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Meta {
        seed: u64,
        version: String,
    },
    Truth {
        t: f64,
        easting: f64,
        northing: f64,
        heading: f64,
        arc_length: f64,
    },
    Odom {
        t: f64,
        delta_distance: f64,
        delta_heading: f64,
    },
    Gps {
        t: f64,
        easting: f64,
        northing: f64,
        sigma: f64,
    },
    Frame {
        t: f64,
        true_pose: Option<PoseRec>,
        observations: Vec<ObsRec>,
    },
}

pub fn write_dataset_records(path: &Path, dataset: &Dataset, seed: u64) -> Result<(), IoError> {
    // merge all streams chronologically, truth first at equal timestamps
    let mut records: Vec<(f64, u8, Record)> = Vec::new();
    for s in dataset.ground_truth.samples() {
        records.push((
            s.timestamp,
            0,
            Record::Truth {
                t: s.timestamp,
                easting: s.pose.easting,
                northing: s.pose.northing,
                heading: s.pose.heading,
                arc_length: s.arc_length,
            },
        ));
    }
    for o in &dataset.odometry {
        records.push((
            o.timestamp,
            1,
            Record::Odom {
                t: o.timestamp,
                delta_distance: o.delta_distance,
                delta_heading: o.delta_heading,
            },
        ));
    }
    for g in &dataset.gps {
        records.push((
            g.timestamp,
            2,
            Record::Gps {
                t: g.timestamp,
                easting: g.easting,
                northing: g.northing,
                sigma: g.sigma,
            },
        ));
    }
    for f in &dataset.frames {
        records.push((
            f.timestamp,
            3,
            Record::Frame {
                t: f.timestamp,
                true_pose: f.true_pose.as_ref().map(PoseRec::from),
                observations: f
                    .observations
                    .iter()
                    .map(|o| ObsRec {
                        class: o.class,
                        x: o.point.x,
                        y: o.point.y,
                    })
                    .collect(),
            },
        ));
    }
    records.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut w = create(path)?;
    let meta = Record::Meta {
        seed,
        version: TOOL_VERSION.to_string(),
    };
    let mut write_line = |rec: &Record| -> Result<(), IoError> {
        let json = serde_json::to_string(rec).map_err(|e| IoError::Format {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        writeln!(w, "{json}").map_err(|e| io_err(path, e))
    };
    write_line(&meta)?;
    for (_, _, rec) in &records {
        write_line(rec)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_dataset_records(path: &Path) -> Result<(Dataset, u64), IoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut seed = 0u64;
    let mut truth: Vec<TrajectorySample> = Vec::new();
    let mut odometry: Vec<OdomSample> = Vec::new();
    let mut gps: Vec<GpsFix> = Vec::new();
    let mut frames: Vec<FeatureFrame> = Vec::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        match rec {
            Record::Meta { seed: s, .. } => seed = s,
            Record::Truth {
                t,
                easting,
                northing,
                heading,
                arc_length,
            } => truth.push(TrajectorySample {
                timestamp: t,
                pose: Pose2D::new(easting, northing, heading),
                arc_length,
            }),
            Record::Odom {
                t,
                delta_distance,
                delta_heading,
            } => odometry.push(OdomSample {
                timestamp: t,
                delta_distance,
                delta_heading,
            }),
            Record::Gps {
                t,
                easting,
                northing,
                sigma,
            } => gps.push(GpsFix {
                timestamp: t,
                easting,
                northing,
                sigma,
            }),
            Record::Frame {
                t,
                true_pose,
                observations,
            } => frames.push(FeatureFrame {
                timestamp: t,
                observations: observations
                    .into_iter()
                    .map(|o| Observation {
                        class: o.class,
                        point: Point2::new(o.x, o.y),
                    })
                    .collect(),
                true_pose: true_pose.map(|p| p.pose()),
            }),
        }
    }

    let ground_truth = Trajectory::from_samples(truth).map_err(|e| IoError::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok((
        Dataset {
            ground_truth,
            odometry,
            gps,
            frames,
        },
        seed,
    ))
}

// --- state log CSV ---

fn source_str(src: Option<UpdateSource>) -> &'static str {
    match src {
        None => "none",
        Some(UpdateSource::Gps) => "gps",
        Some(UpdateSource::Icp) => "icp",
    }
}

fn parse_source(s: &str) -> Result<Option<UpdateSource>, String> {
    match s {
        "none" => Ok(None),
        "gps" => Ok(Some(UpdateSource::Gps)),
        "icp" => Ok(Some(UpdateSource::Icp)),
        other => Err(format!("unknown update source '{other}'")),
    }
}

pub fn write_state_log_csv(path: &Path, states: &[StateLogEntry], seed: u64) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(
            w,
            "t,arc_length,easting,northing,heading,cov00,cov01,cov02,cov10,cov11,cov12,cov20,cov21,cov22,source_of_last_update"
        )?;
        for s in states {
            write!(
                w,
                "{},{},{},{},{}",
                s.timestamp, s.arc_length, s.pose.easting, s.pose.northing, s.pose.heading
            )?;
            for r in 0..3 {
                for c in 0..3 {
                    write!(w, ",{}", s.covariance[(r, c)])?;
                }
            }
            writeln!(w, ",{}", source_str(s.last_source))?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn read_state_log_csv(path: &Path) -> Result<Vec<StateLogEntry>, IoError> {
    let mut states = Vec::new();
    for (line_no, line) in data_lines(path)? {
        if line.starts_with("t,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 15 {
            return Err(parse_err(path, line_no, "expected 15 columns"));
        }
        let f = |i: usize| -> Result<f64, IoError> {
            cols[i]
                .parse::<f64>()
                .map_err(|e| parse_err(path, line_no, format!("column {i}: {e}")))
        };
        let mut covariance = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                covariance[(r, c)] = f(5 + r * 3 + c)?;
            }
        }
        states.push(StateLogEntry {
            timestamp: f(0)?,
            arc_length: f(1)?,
            pose: Pose2D::new(f(2)?, f(3)?, f(4)?),
            covariance,
            last_source: parse_source(cols[14]).map_err(|e| parse_err(path, line_no, e))?,
        });
    }
    Ok(states)
}

// --- event log CSV ---

pub fn write_event_log_csv(path: &Path, events: &[UpdateEvent], seed: u64) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "t,arc_length,source,accepted")?;
        for e in events {
            writeln!(
                w,
                "{},{},{},{}",
                e.timestamp,
                e.arc_length,
                e.source.as_str(),
                e.accepted
            )?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn read_event_log_csv(path: &Path) -> Result<Vec<UpdateEvent>, IoError> {
    let mut events = Vec::new();
    for (line_no, line) in data_lines(path)? {
        if line.starts_with("t,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(parse_err(path, line_no, "expected 4 columns"));
        }
        let source = match parse_source(cols[2]) {
            Ok(Some(s)) => s,
            _ => return Err(parse_err(path, line_no, "bad source")),
        };
        events.push(UpdateEvent {
            timestamp: cols[0]
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad t: {e}")))?,
            arc_length: cols[1]
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad arc: {e}")))?,
            source,
            accepted: cols[3]
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad accepted: {e}")))?,
        });
    }
    Ok(events)
}

// --- metric CSVs (write-only artifacts) ---

pub fn write_vpt_lattice_csv(
    path: &Path,
    boundaries: &[VptBoundary],
    seed: u64,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "arc_length,dx,dy,dtheta,valid")?;
        for b in boundaries {
            for (ix, iy, ih, valid) in b.cells() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    b.arc_length,
                    ix as f64 * b.grid.xy_step,
                    iy as f64 * b.grid.xy_step,
                    ih as f64 * b.grid.heading_step,
                    valid
                )?;
            }
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn write_pau_csv(path: &Path, curve: &PauCurve, seed: u64) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "l,probability")?;
        for (l, p) in curve.lengths.iter().zip(&curve.probabilities) {
            writeln!(w, "{l},{p}")?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn write_margin_csv(path: &Path, report: &MarginReport, seed: u64) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "arc_length,vpt_radius,bound,margin,flagged")?;
        for p in &report.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.arc_length, p.vpt_radius, p.bound, p.margin, p.flagged
            )?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn write_vpt_profile_csv(
    path: &Path,
    radii: &[(f64, f64)],
    seed: u64,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let body = (|| -> std::io::Result<()> {
        w.write_all(header(seed).as_bytes())?;
        writeln!(w, "arc_length,radius")?;
        for (arc, r) in radii {
            writeln!(w, "{arc},{r}")?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}
