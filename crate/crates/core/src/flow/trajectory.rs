//! Trajectory storage: a columnar little-endian binary file of
//! `(t, theta unwrapped, I, H)` with a JSON sidecar for metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MAX_DIM;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"EFSTRJ01";
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub d: usize,
    pub dt: f64,
    pub stride: u64,
    pub n_rows: u64,
    pub columns: Vec<String>,
    pub steps_taken: u64,
    pub escape_step: Option<u64>,
    /// `max |H(z(t)) - H(z0)|` over the recorded rows, and the same divided
    /// by `|H(z0)|`.
    pub max_energy_error: f64,
    pub relative_energy_error: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub t: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub action: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
}

impl Trajectory {
    pub fn empty(d: usize) -> Self {
        Trajectory {
            meta: TrajectoryMeta {
                d,
                columns: Self::column_names(d),
                ..Default::default()
            },
            t: Vec::new(),
            theta: vec![Vec::new(); d],
            action: vec![Vec::new(); d],
            energy: Vec::new(),
        }
    }

    pub fn column_names(d: usize) -> Vec<String> {
        let mut c = vec!["t".to_string()];
        c.extend((1..=d).map(|j| format!("theta_{j}")));
        c.extend((1..=d).map(|j| format!("I_{j}")));
        c.push("H".into());
        c
    }

    pub fn push(&mut self, t: f64, theta: &[f64], action: &[f64], energy: f64) {
        self.t.push(t);
        for j in 0..self.theta.len() {
            self.theta[j].push(theta[j]);
            self.action[j].push(action[j]);
        }
        self.energy.push(energy);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.theta.len();
        let n = self.t.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * (2 * d + 2));
        out.extend_from_slice(TRAJECTORY_MAGIC);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let cols = std::iter::once(&self.t)
            .chain(&self.theta)
            .chain(&self.action)
            .chain(std::iter::once(&self.energy));
        for col in cols {
            for v in col {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary layout. Metadata other than `d` and the row count is
    /// left at its defaults; it lives in the sidecar.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Trajectory(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..8] != TRAJECTORY_MAGIC {
            return Err(Error::Trajectory("bad magic".into()));
        }
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if d == 0 || d > MAX_DIM {
            return Err(Error::Trajectory(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n_cols = 2 * d + 2;
        let body = bytes.len() - HEADER_LEN;
        let expected = n.checked_mul(8 * n_cols as u64);
        if expected != Some(body as u64) {
            return Err(Error::Trajectory(format!(
                "body has {body} bytes, header promises {n} rows of {n_cols} columns"
            )));
        }
        let n = n as usize;
        let mut cols: Vec<Vec<f64>> = (0..n_cols)
            .map(|c| {
                let start = HEADER_LEN + 8 * n * c;
                bytes[start..start + 8 * n]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect();
        let energy = cols.pop().unwrap();
        let action = cols.split_off(1 + d);
        let theta = cols.split_off(1);
        let t = cols.pop().unwrap();
        let mut traj = Trajectory::empty(d);
        traj.meta.n_rows = n as u64;
        traj.t = t;
        traj.theta = theta;
        traj.action = action;
        traj.energy = energy;
        Ok(traj)
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.bin")), self.to_bytes())?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let mut traj = Self::from_bytes(&std::fs::read(dir.join(format!("{stem}.bin")))?)?;
        let meta: TrajectoryMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        if meta.d != traj.meta.d || meta.n_rows != traj.meta.n_rows {
            return Err(Error::Trajectory("sidecar disagrees with the binary header".into()));
        }
        traj.meta = meta;
        Ok(traj)
    }
}
