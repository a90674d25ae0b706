//! CSV ingestion of trajectory logs and JSON-lines window caches.
//!
//! The CSV header is required and must read
//! `agent_id,frame,x,y[,vx,vy][,ax,ay][,lane_id]` with the optional groups in
//! that order. Missing velocity or acceleration columns are derived by
//! finite differences.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::types::{AgentState, SceneWindow, TrajectoryTable, Vec2};

pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Meters,
    Feet,
}

impl LengthUnit {
    pub fn scale(self) -> f64 {
        match self {
            LengthUnit::Meters => 1.0,
            LengthUnit::Feet => FEET_TO_METERS,
        }
    }
}

impl std::str::FromStr for LengthUnit {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meters" | "m" => Ok(LengthUnit::Meters),
            "feet" | "ft" => Ok(LengthUnit::Feet),
            other => Err(DataError::Invalid(format!("unknown length unit {other:?}"))),
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Columns {
    velocity: bool,
    acceleration: bool,
    lane: bool,
}

fn parse_header(fields: &[&str]) -> Result<Columns> {
    let mut rest: &[&str] = fields;
    let base = ["agent_id", "frame", "x", "y"];
    if rest.len() < 4 || rest[..4] != base {
        return Err(DataError::BadHeader(format!(
            "expected to start with agent_id,frame,x,y, got {}",
            fields.join(",")
        )));
    }
    rest = &rest[4..];
    let mut cols = Columns::default();
    if rest.len() >= 2 && rest[..2] == ["vx", "vy"] {
        cols.velocity = true;
        rest = &rest[2..];
    }
    if rest.len() >= 2 && rest[..2] == ["ax", "ay"] {
        cols.acceleration = true;
        rest = &rest[2..];
    }
    if rest.first() == Some(&"lane_id") {
        cols.lane = true;
        rest = &rest[1..];
    }
    if !rest.is_empty() {
        return Err(DataError::BadHeader(format!("unexpected columns: {}", rest.join(","))));
    }
    Ok(cols)
}

pub fn parse_trajectory_csv(path: &Path, unit: LengthUnit, dt: f64) -> Result<TrajectoryTable> {
    let file = std::fs::File::open(path)?;
    read_trajectory_csv(file, unit, dt)
}

pub fn read_trajectory_csv<R: Read>(reader: R, unit: LengthUnit, dt: f64) -> Result<TrajectoryTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    if header_refs.iter().all(|h| h.is_empty()) {
        return Err(DataError::NoRecords);
    }
    let cols = parse_header(&header_refs)?;
    let scale = unit.scale();

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| DataError::MalformedRow { row: line, msg: e.to_string() })?;
        if row.len() != header.len() {
            return Err(DataError::MalformedRow {
                row: line,
                msg: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            row[idx].parse::<f64>().map_err(|_| DataError::MalformedRow {
                row: line,
                msg: format!("column {} is not a number: {:?}", header[idx], &row[idx]),
            })
        };
        let int = |idx: usize| -> Result<i64> {
            row[idx].parse::<i64>().map_err(|_| DataError::MalformedRow {
                row: line,
                msg: format!("column {} is not an integer: {:?}", header[idx], &row[idx]),
            })
        };
        let mut idx = 4;
        let mut state = AgentState {
            agent_id: int(0)?,
            frame: int(1)?,
            position: Vec2::new(num(2)? * scale, num(3)? * scale),
            velocity: Vec2::ZERO,
            acceleration: Vec2::ZERO,
            lane_id: -1,
        };
        if cols.velocity {
            state.velocity = Vec2::new(num(idx)? * scale, num(idx + 1)? * scale);
            idx += 2;
        }
        if cols.acceleration {
            state.acceleration = Vec2::new(num(idx)? * scale, num(idx + 1)? * scale);
            idx += 2;
        }
        if cols.lane {
            state.lane_id = int(idx)?;
        }
        if !state.is_finite() {
            return Err(DataError::MalformedRow { row: line, msg: "non-finite value".into() });
        }
        if state.frame < 0 {
            return Err(DataError::MalformedRow { row: line, msg: "negative frame".into() });
        }
        records.push(state);
    }
    if records.is_empty() {
        return Err(DataError::NoRecords);
    }

    let mut table = TrajectoryTable::new(records, dt)?;
    if !cols.velocity || !cols.acceleration {
        table = derive_kinematics(&table, !cols.velocity, !cols.acceleration)?;
    }
    Ok(table)
}

/// Central differences in the interior, one-sided at both ends of a track.
pub fn finite_difference(values: &[Vec2], dt: f64) -> Vec<Vec2> {
    let n = values.len();
    if n < 2 {
        return vec![Vec2::ZERO; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (values[1] - values[0]) * (1.0 / dt)
            } else if k == n - 1 {
                (values[n - 1] - values[n - 2]) * (1.0 / dt)
            } else {
                (values[k + 1] - values[k - 1]) * (0.5 / dt)
            }
        })
        .collect()
}

fn derive_kinematics(table: &TrajectoryTable, velocity: bool, acceleration: bool) -> Result<TrajectoryTable> {
    let dt = table.dt();
    let mut out = Vec::with_capacity(table.len());
    for track in table.tracks().values() {
        let mut states: Vec<AgentState> = track.to_vec();
        if velocity {
            let p: Vec<Vec2> = states.iter().map(|s| s.position).collect();
            for (s, v) in states.iter_mut().zip(finite_difference(&p, dt)) {
                s.velocity = v;
            }
        }
        if acceleration {
            let v: Vec<Vec2> = states.iter().map(|s| s.velocity).collect();
            for (s, a) in states.iter_mut().zip(finite_difference(&v, dt)) {
                s.acceleration = a;
            }
        }
        out.extend(states);
    }
    TrajectoryTable::new(out, dt)
}

/// Writes a table with the full column set, in meters.
pub fn write_trajectory_csv<W: Write>(writer: W, table: &TrajectoryTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["agent_id", "frame", "x", "y", "vx", "vy", "ax", "ay", "lane_id"])?;
    for r in table.records() {
        w.write_record([
            r.agent_id.to_string(),
            r.frame.to_string(),
            r.position.x.to_string(),
            r.position.y.to_string(),
            r.velocity.x.to_string(),
            r.velocity.y.to_string(),
            r.acceleration.x.to_string(),
            r.acceleration.y.to_string(),
            r.lane_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windows_jsonl<W: Write>(mut writer: W, windows: &[SceneWindow]) -> Result<()> {
    for w in windows {
        serde_json::to_writer(&mut writer, w)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_windows_jsonl<R: BufRead>(reader: R) -> Result<Vec<SceneWindow>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let w: SceneWindow = serde_json::from_str(&line)
            .map_err(|e| DataError::MalformedRow { row: i + 1, msg: e.to_string() })?;
        out.push(w);
    }
    Ok(out)
}
