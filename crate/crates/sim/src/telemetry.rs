//! Telemetry CSV: `t,px,py,pz,vx,vy,vz,phi,theta,psi,p,q,r,rho`.

use crate::trajectory::TrajectorySample;
use crate::SimError;
use nalgebra::Vector3;
use ofnav_core::{AngularRates, Attitude};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// One telemetry row: the sample plus the rangefinder reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub rho: f64,
}

impl TelemetryRow {
    pub fn new(s: &TrajectorySample, rho: f64) -> Self {
        Self {
            t: s.t,
            px: s.position.x,
            py: s.position.y,
            pz: s.position.z,
            vx: s.velocity.x,
            vy: s.velocity.y,
            vz: s.velocity.z,
            phi: s.attitude.roll,
            theta: s.attitude.pitch,
            psi: s.attitude.yaw,
            p: s.rates.p,
            q: s.rates.q,
            r: s.rates.r,
            rho,
        }
    }

    pub fn sample(&self) -> TrajectorySample {
        TrajectorySample {
            t: self.t,
            position: Vector3::new(self.px, self.py, self.pz),
            velocity: Vector3::new(self.vx, self.vy, self.vz),
            attitude: Attitude::new(self.phi, self.theta, self.psi),
            rates: AngularRates::new(self.p, self.q, self.r),
        }
    }
}

pub fn write_telemetry<W: Write>(w: W, rows: &[TelemetryRow]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record([
            "t", "px", "py", "pz", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r", "rho",
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_telemetry<R: Read>(r: R) -> Result<Vec<TelemetryRow>, SimError> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<TelemetryRow>, _>>()?;
    if rows.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(SimError::InvalidScenario(
            "telemetry times must increase".into(),
        ));
    }
    Ok(rows)
}

pub fn save_telemetry(path: impl AsRef<Path>, rows: &[TelemetryRow]) -> Result<(), SimError> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    write_telemetry(std::io::BufWriter::new(f), rows)
}

pub fn load_telemetry(path: impl AsRef<Path>) -> Result<Vec<TelemetryRow>, SimError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
    read_telemetry(f)
}
