//! Velocity snapshots: one line of JSON metadata followed by the raw samples
//! as little-endian `f64`, component by component, each in row-major order.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, SnapshotError};
use crate::field::{Grid, ScalarField, VectorField};
use crate::flow::{FlowState, InitialCondition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub n: usize,
    pub nu: f64,
    pub t: f64,
    pub seed: Option<u64>,
    pub condition: String,
}

impl SnapshotHeader {
    pub fn new(state: &FlowState, ic: &InitialCondition) -> Self {
        let g = state.grid();
        Self {
            dim: g.dim(),
            n: g.n(),
            nu: state.nu(),
            t: state.time(),
            seed: ic.seed(),
            condition: ic.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    /// Not flagged divergence-free; see [`Snapshot::state`].
    pub velocity: VectorField,
}

impl Snapshot {
    /// Flow state with the velocity flagged divergence-free when it measures so.
    /// A non-solenoidal velocity is kept, unflagged, for the caller to reject.
    pub fn state(&self) -> Result<FlowState, FlowError> {
        let v = self.velocity.clone();
        match v.clone().mark_divergence_free() {
            Ok(flagged) => FlowState::new(flagged, self.header.nu, self.header.t),
            Err(_) => FlowState::new_unchecked(v, self.header.nu, self.header.t),
        }
    }
}

pub fn write_snapshot<W: Write>(mut w: W, header: &SnapshotHeader, v: &VectorField) -> io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for c in v.components() {
        for x in c.values() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_snapshot<R: Read>(r: R) -> Result<Snapshot, SnapshotError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end()).map_err(|e| SnapshotError::Header(e.to_string()))?;
    let grid = Grid::new(header.dim, header.n)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = header.dim * grid.len() * 8;
    if payload.len() != expected {
        return Err(SnapshotError::Payload {
            expected,
            got: payload.len(),
        });
    }
    let samples: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let components = samples
        .chunks_exact(grid.len())
        .map(|c| ScalarField::from_values(grid, c.to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Snapshot {
        header,
        velocity: VectorField::new(components)?,
    })
}

pub fn save_snapshot(path: impl AsRef<Path>, header: &SnapshotHeader, v: &VectorField) -> io::Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), header, v)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Snapshot, SnapshotError> {
    read_snapshot(File::open(path)?)
}
