//! Output plumbing: canonical JSON and config hashing, NDJSON and CSV
//! writers, the binary trajectory framing, and run manifests.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{EdgeEnvironment, ModelParams, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::{neighbor_offset, PathKind, PathSeq, Point};

/// Canonical JSON: `serde_json::Value` keeps object keys sorted, so
/// serializing through it normalizes field order.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v: serde_json::Value = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Hash of the canonical form of a config.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(config)?.as_bytes()))
}

/// Line-buffered NDJSON writer.
pub struct NdjsonWriter {
    out: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl NdjsonWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        Ok(NdjsonWriter {
            out: std::io::BufWriter::new(std::fs::File::create(&path)?),
            path,
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = canonical_json(record)?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

/// Write a CSV file from a header and rows of cells.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf> {
    let path = path.as_ref().to_path_buf();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(path)
}

const TRAJECTORY_MAGIC: &[u8; 4] = b"ORW1";

/// Binary trajectory framing, little-endian throughout: magic `ORW1`, then
/// the header `{d: u32, a: f64, steps: u64, seed: u64}`, the start position
/// as `d` i64 coordinates, and one byte per step holding the neighbor index
/// `0..2d-1` in the fixed order. Strict paths only.
pub fn write_trajectory_binary(
    w: &mut impl Write,
    traj: &Trajectory,
    seed: u64,
) -> Result<()> {
    if !matches!(traj.positions.kind(), PathKind::Strict) {
        return Err(Error::Precondition(
            "binary framing stores strict paths only".into(),
        ));
    }
    let verts = traj.vertices();
    let start = verts
        .first()
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    let d = traj.params.d;
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&traj.params.a.to_le_bytes())?;
    w.write_all(&(traj.len_steps() as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for &c in start.coords() {
        w.write_all(&c.to_le_bytes())?;
    }
    for pair in verts.windows(2) {
        let mut index = None;
        for i in 0..2 * d {
            let (axis, delta) = neighbor_offset(i);
            if pair[1].coords()[axis] - pair[0].coords()[axis] == delta
                && pair[0]
                    .coords()
                    .iter()
                    .zip(pair[1].coords())
                    .enumerate()
                    .all(|(k, (x, y))| k == axis || x == y)
            {
                index = Some(i as u8);
                break;
            }
        }
        let index =
            index.ok_or_else(|| Error::Precondition("non-neighbor step in path".into()))?;
        w.write_all(&[index])?;
    }
    Ok(())
}

/// Read back a binary trajectory. Exponents are not stored in the framing,
/// so the returned parameters carry the defaults for `(d, a)`.
pub fn read_trajectory_binary(r: &mut impl Read) -> Result<(Trajectory, u64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Precondition("bad trajectory magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let a = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let steps = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut coords = Vec::with_capacity(d);
    for _ in 0..d {
        r.read_exact(&mut b8)?;
        coords.push(i64::from_le_bytes(b8));
    }
    let mut pos = Point::new(coords);
    let mut verts = Vec::with_capacity(steps as usize + 1);
    verts.push(pos.clone());
    let mut byte = [0u8; 1];
    for _ in 0..steps {
        r.read_exact(&mut byte)?;
        let i = byte[0] as usize;
        if i >= 2 * d {
            return Err(Error::Precondition(format!("step index {i} out of range")));
        }
        let (axis, delta) = neighbor_offset(i);
        pos = pos.shifted(axis, delta);
        verts.push(pos.clone());
    }
    let params = ModelParams::new(d, a);
    let positions = PathSeq::strict(verts)?;
    let mut env = EdgeEnvironment::new();
    for e in positions.crossed_edges() {
        env.insert(e);
    }
    let mut visit_counts = std::collections::BTreeMap::new();
    for v in positions.vertices() {
        *visit_counts.entry(v.clone()).or_insert(0) += 1;
    }
    Ok((
        Trajectory { params, positions, env, env0: EdgeEnvironment::new(), visit_counts },
        seed,
    ))
}

/// Manifest describing one experiment run. Timestamps and wall time live
/// here, not in the statistic streams, which must be byte-identical across
/// re-runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub wall_time_ms: u128,
    /// Replica seeds are `mix64(mix64(master ^ tag) + index * GAMMA)`; see
    /// the randomness module docs.
    pub seed_derivation: String,
    pub outputs: Vec<OutputChecksum>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputChecksum {
    pub path: String,
    pub sha256: String,
}

pub fn checksum_file(path: impl AsRef<Path>) -> Result<OutputChecksum> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    Ok(OutputChecksum {
        path: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn now_unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
