//! Per-control-tick flight log as CSV.
//!
//! The file starts with one comment line `# pvrow-trace v1 cruise=<m/s>`
//! followed by a header row and one record per control tick.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

const MAGIC: &str = "# pvrow-trace v1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Simulation time, seconds.
    pub t: f64,
    pub phase: String,
    pub row: usize,
    /// True pose.
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub gps_x: f64,
    pub gps_y: f64,
    /// True ground speed, m/s.
    pub speed: f64,
    /// Filtered midline estimate and its covariance trace.
    pub ekf_a: f64,
    pub ekf_b: f64,
    pub p_trace: f64,
    /// Ground-truth midline of the row being flown.
    pub true_a: f64,
    pub true_b: f64,
    /// Cross-track error the follower acted on, meters.
    pub e: f64,
    /// True signed distance to the row midline, meters.
    pub xi: f64,
    pub cmd_vx: f64,
    pub cmd_vy: f64,
    /// Lines detected and accepted since the previous record.
    pub obs: u32,
    pub accepted: u32,
}

/// A trace with the cruise speed it was flown at.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub cruise_speed: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC} cruise={}", self.cruise_speed).map_err(|e| HarnessError::io("<trace>", e))?;
        let mut csv = csv::Writer::from_writer(w);
        for r in &self.rows {
            csv.serialize(r)?;
        }
        csv.flush().map_err(|e| HarnessError::io("<trace>", e))?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first).map_err(|e| HarnessError::io("<trace>", e))?;
        let rest = first
            .trim_end()
            .strip_prefix(MAGIC)
            .ok_or_else(|| HarnessError::Trace("missing pvrow-trace v1 header".into()))?;
        let cruise_speed = rest
            .trim()
            .strip_prefix("cruise=")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v > 0.0)
            .ok_or_else(|| HarnessError::Trace(format!("bad cruise field in header {:?}", first.trim_end())))?;
        let mut csv = csv::Reader::from_reader(r);
        let rows = csv.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { cruise_speed, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read(f)
    }
}
