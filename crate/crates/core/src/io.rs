//! CSV tables with a header row and 17-significant-digit floats, plus the
//! readers for wavepackets, flux curves and emission records.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::EmissionRecord;
use crate::error::{Error, Result};
use crate::shaping::{FluxTrajectory, Wavepacket};

const NS: f64 = 1e-9;
const MHZ: f64 = 2.0 * std::f64::consts::PI * 1e6;

/// Column-major numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_error(what: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        what: what.into(),
        message: message.into(),
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn require(&self, name: &str, what: &str) -> Result<Vec<f64>> {
        self.column(name)
            .ok_or_else(|| parse_error(what, format!("missing column `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn from_reader<R: Read>(reader: R, what: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| parse_error(what, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| parse_error(what, e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| parse_error(what, format!("row {}: `{s}`: {e}", line + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_reader(File::open(path)?, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }
}

/// Record columns: time (ns), rotated quadratures, photon flux (1/ns),
/// Γ₁/2π (MHz), flux (Φ₀) and one population column per level.
pub fn record_table(record: &EmissionRecord) -> Table {
    let levels = record.populations.first().map_or(0, Vec::len);
    let mut columns: Vec<String> = ["t_ns", "i", "q", "power_per_ns", "gamma1_mhz", "flux"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((0..levels).map(|k| format!("p{k}")));
    let rows = (0..record.len())
        .map(|k| {
            let mut row = vec![
                record.t[k] / NS,
                record.i[k],
                record.q[k],
                record.power[k] * NS,
                record.gamma1[k] / MHZ,
                record.flux[k],
            ];
            row.extend(&record.populations[k]);
            row
        })
        .collect();
    Table { columns, rows }
}

/// Sampled channels of a record read back from its table. Integrated
/// totals and markers are not part of the table.
pub fn record_from_table(table: &Table) -> Result<EmissionRecord> {
    let what = "record";
    let t = table.require("t_ns", what)?;
    let levels = (0..).take_while(|k| table.column(&format!("p{k}")).is_some()).count();
    let pops: Vec<Vec<f64>> = (0..levels).map(|k| table.column(&format!("p{k}")).unwrap()).collect();
    Ok(EmissionRecord {
        t: t.iter().map(|v| v * NS).collect(),
        i: table.require("i", what)?,
        q: table.require("q", what)?,
        power: table.require("power_per_ns", what)?.iter().map(|v| v / NS).collect(),
        populations: (0..t.len()).map(|n| pops.iter().map(|c| c[n]).collect()).collect(),
        gamma1: table.require("gamma1_mhz", what)?.iter().map(|v| v * MHZ).collect(),
        flux: table.require("flux", what)?,
        markers: Vec::new(),
        emitted_photons: 0.0,
        intrinsic_loss: 0.0,
        rotation: 0.0,
        steps: 0,
    })
}

/// Two columns: t_ns and amplitude in √(1/ns).
pub fn wavepacket_table(w: &Wavepacket) -> Table {
    let mut t = Table::new(&["t_ns", "amplitude"]);
    for (s, a) in w.t.iter().zip(&w.amplitude) {
        t.push(vec![s / NS, a * NS.sqrt()]);
    }
    t
}

pub fn wavepacket_from_table(table: &Table) -> Result<Wavepacket> {
    let t = table.require("t_ns", "wavepacket")?;
    let a = table.require("amplitude", "wavepacket")?;
    Wavepacket::new(
        t.iter().map(|v| v * NS).collect(),
        a.iter().map(|v| v / NS.sqrt()).collect(),
    )
}

pub fn trajectory_table(traj: &FluxTrajectory) -> Table {
    let mut t = Table::new(&["t_ns", "flux", "current_ua"]);
    for k in 0..traj.t.len() {
        t.push(vec![traj.t[k] / NS, traj.flux[k], traj.current[k] * 1e6]);
    }
    t
}

pub fn trajectory_from_table(table: &Table) -> Result<FluxTrajectory> {
    let what = "trajectory";
    Ok(FluxTrajectory {
        t: table.require("t_ns", what)?.iter().map(|v| v * NS).collect(),
        flux: table.require("flux", what)?,
        current: table.require("current_ua", what)?.iter().map(|v| v * 1e-6).collect(),
    })
}

/// Flux curve points (Φ/Φ₀, Γ₁ in rad/s) as flux, gamma1_mhz.
pub fn flux_curve_table(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(&["flux", "gamma1_mhz"]);
    for &(f, g) in points {
        t.push(vec![f, g / MHZ]);
    }
    t
}

pub fn flux_curve_from_table(table: &Table) -> Result<Vec<(f64, f64)>> {
    let f = table.require("flux", "flux curve")?;
    let g = table.require("gamma1_mhz", "flux curve")?;
    Ok(f.into_iter().zip(g).map(|(f, g)| (f, g * MHZ)).collect())
}
