//! On-disk formats: field dumps, the absorption ledger, trajectories and the
//! run manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::fmt17;
use crate::error::{Error, Result};
use crate::flowmap::TrajectoryRow;
use crate::geometry::{PhaseBoundaryClass, Point, ZERO};
use crate::grid::{CellField, FaceField, MacGrid};
use crate::kinetic::AbsorptionRecord;

/// Sidecar header of a field dump. The payload is the row-major array of
/// `shape` as little-endian `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub component: String,
    pub time: f64,
    pub dx: Vec<f64>,
}

impl FieldHeader {
    pub fn validate(&self) -> Result<usize> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::parse("field dump dim must be 2 or 3"));
        }
        if self.shape.len() != self.dim || self.dx.len() != self.dim {
            return Err(Error::parse(
                "field dump shape and dx must have dim entries",
            ));
        }
        if self.dx.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::parse("field dump spacing must be positive"));
        }
        self.shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| Error::parse("field dump shape overflows"))
    }
}

pub fn parse_field_header(text: &str) -> Result<FieldHeader> {
    let h: FieldHeader = serde_json::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
    h.validate()?;
    Ok(h)
}

pub fn encode_field(data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(header: &FieldHeader, bytes: &[u8]) -> Result<Vec<f64>> {
    let n = header.validate()?;
    if bytes.len() != n * 8 {
        return Err(Error::parse(format!(
            "field payload has {} bytes, expected {}",
            bytes.len(),
            n * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Write `<stem>.bin` and `<stem>.json` into `dir`; returns both paths.
pub fn write_field(
    dir: &Path,
    stem: &str,
    header: &FieldHeader,
    data: &[f64],
) -> Result<[PathBuf; 2]> {
    if header.validate()? != data.len() {
        return Err(Error::validation(
            "field data does not match its header shape",
        ));
    }
    let bin = dir.join(format!("{stem}.bin"));
    let json = sidecar(&bin);
    write_bytes(&bin, &encode_field(data))?;
    let text = serde_json::to_string_pretty(header).map_err(|e| Error::parse(e.to_string()))?;
    write_bytes(&json, text.as_bytes())?;
    Ok([bin, json])
}

/// Read a dump given the path of its `.bin` payload.
pub fn read_field(bin: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let text = fs::read_to_string(sidecar(bin)).map_err(|e| Error::io(sidecar(bin), e))?;
    let header = parse_field_header(&text)?;
    let data = decode_field(&header, &read_bytes(bin)?)?;
    Ok((header, data))
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn grid_dx(grid: &MacGrid) -> Vec<f64> {
    grid.h[..grid.dim].to_vec()
}

/// One dump per velocity component, `<stem>_u<axis>`.
pub fn write_face_field(dir: &Path, stem: &str, u: &FaceField, time: f64) -> Result<Vec<PathBuf>> {
    let g = u.grid;
    let mut paths = Vec::new();
    for a in 0..g.dim {
        let header = FieldHeader {
            dim: g.dim,
            shape: g.face_shape(a)[..g.dim].to_vec(),
            component: format!("u{}", AXES[a]),
            time,
            dx: grid_dx(&g),
        };
        paths.extend(write_field(
            dir,
            &format!("{stem}_u{}", AXES[a]),
            &header,
            &u.comps[a],
        )?);
    }
    Ok(paths)
}

/// Inverse of [`write_face_field`], checked against `grid`.
pub fn read_face_field(grid: &MacGrid, bins: &[PathBuf]) -> Result<(FaceField, f64)> {
    if bins.len() != grid.dim {
        return Err(Error::validation(
            "one dump per velocity component expected",
        ));
    }
    let mut u = FaceField::zeros(*grid);
    let mut time = f64::NAN;
    for (a, bin) in bins.iter().enumerate() {
        let (h, data) = read_field(bin)?;
        if h.dim != grid.dim || h.shape != grid.face_shape(a)[..grid.dim] {
            return Err(Error::validation(format!(
                "{} does not match the fluid grid",
                bin.display()
            )));
        }
        if h.dx
            .iter()
            .zip(&grid.h)
            .any(|(x, y)| (x - y).abs() > 1e-12 * y)
        {
            return Err(Error::validation(format!(
                "{} has a different spacing",
                bin.display()
            )));
        }
        u.comps[a] = data;
        time = h.time;
    }
    Ok((u, time))
}

pub fn write_cell_field(
    dir: &Path,
    stem: &str,
    f: &CellField,
    component: &str,
    time: f64,
) -> Result<[PathBuf; 2]> {
    let g = f.grid;
    let header = FieldHeader {
        dim: g.dim,
        shape: g.cell_shape()[..g.dim].to_vec(),
        component: component.into(),
        time,
        dx: grid_dx(&g),
    };
    write_field(dir, stem, &header, &f.data)
}

/// One absorption event as read back from `ledger.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub t_exit: f64,
    pub x: Point,
    pub v: Point,
    pub weight: f64,
    pub class: PhaseBoundaryClass,
}

fn ledger_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t_exit".to_string()];
    h.extend((0..dim).map(|a| format!("x{a}")));
    h.extend((0..dim).map(|a| format!("v{a}")));
    h.push("weight".into());
    h.push("boundary_class".into());
    h
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse(e.to_string())
}

pub fn write_ledger<W: Write>(out: W, dim: usize, ledger: &[AbsorptionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ledger_header(dim)).map_err(csv_err)?;
    for r in ledger {
        let mut row = vec![fmt17(r.t_exit)];
        row.extend((0..dim).map(|a| fmt17(r.x[a])));
        row.extend((0..dim).map(|a| fmt17(r.v[a])));
        row.push(fmt17(r.weight()));
        row.push(r.class.label().into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::parse(e.to_string()))
}

fn parse_class(s: &str) -> Result<PhaseBoundaryClass> {
    match s {
        "outgoing" => Ok(PhaseBoundaryClass::Outgoing),
        "incoming" => Ok(PhaseBoundaryClass::Incoming),
        "grazing" => Ok(PhaseBoundaryClass::Grazing),
        _ => Err(Error::parse(format!("unknown boundary class {s:?}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(format!("not a number: {s:?}")))
}

pub fn read_ledger<R: Read>(input: R) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let dim = match header.len() {
        7 => 2,
        9 => 3,
        n => return Err(Error::parse(format!("ledger has {n} columns"))),
    };
    if header != ledger_header(dim) {
        return Err(Error::parse("unexpected ledger header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(Error::parse("ragged ledger row"));
        }
        let (mut x, mut v) = (ZERO, ZERO);
        for a in 0..dim {
            x[a] = parse_f64(&rec[1 + a])?;
            v[a] = parse_f64(&rec[1 + dim + a])?;
        }
        rows.push(LedgerRow {
            t_exit: parse_f64(&rec[0])?,
            x,
            v,
            weight: parse_f64(&rec[1 + 2 * dim])?,
            class: parse_class(&rec[2 + 2 * dim])?,
        });
    }
    Ok(rows)
}

pub fn write_trajectory<W: Write>(out: W, dim: usize, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut h = vec!["s".to_string()];
    h.extend((0..dim).map(|a| format!("x{a}")));
    h.extend((0..dim).map(|a| format!("v{a}")));
    h.push("detJ".into());
    w.write_record(&h).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![fmt17(r.s)];
        row.extend((0..dim).map(|a| fmt17(r.z.x[a])));
        row.extend((0..dim).map(|a| fmt17(r.z.v[a])));
        row.push(fmt17(r.det));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::parse(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub t: f64,
    pub dt: f64,
    /// Component dumps, relative paths of the `.bin` payloads.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub wall_seconds: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<ManifestFile>,
    #[serde(default)]
    pub snapshots: Vec<SnapshotEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
        for f in &m.files {
            check_relative(&f.path)?;
            if f.sha256.len() != 64 || !f.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::parse(format!("bad checksum for {}", f.path)));
            }
        }
        for s in &m.snapshots {
            if !(s.t.is_finite() && s.dt > 0.0 && s.dt.is_finite()) {
                return Err(Error::parse(
                    "snapshot times must be finite with positive dt",
                ));
            }
            for f in &s.files {
                check_relative(f)?;
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse(e.to_string()))
    }

    pub fn file(&self, rel: &str) -> Option<&ManifestFile> {
        self.files.iter().find(|f| f.path == rel)
    }

    /// Read a listed file from `dir`, checking its recorded checksum.
    pub fn read_checked(&self, dir: &Path, rel: &str) -> Result<Vec<u8>> {
        let entry = self
            .file(rel)
            .ok_or_else(|| Error::validation(format!("{rel} is not listed in the manifest")))?;
        let bytes = read_bytes(&dir.join(rel))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::validation(format!("checksum mismatch for {rel}")));
        }
        Ok(bytes)
    }
}

/// Paths in a manifest must stay inside the output directory.
fn check_relative(p: &str) -> Result<()> {
    let path = Path::new(p);
    let ok = !p.is_empty()
        && path
            .components()
            .all(|c| matches!(c, std::path::Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::parse(format!(
            "manifest path {p:?} is not a plain relative path"
        )))
    }
}

/// Checksummed listing of files written under `root`.
#[derive(Debug, Default)]
pub struct FileLog {
    root: PathBuf,
    pub files: Vec<ManifestFile>,
}

impl FileLog {
    pub fn new(root: &Path) -> Self {
        FileLog {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Record a file already on disk.
    pub fn add(&mut self, path: &Path) -> Result<String> {
        let bytes = read_bytes(path)?;
        let rel = self.relative(path);
        self.files.retain(|f| f.path != rel);
        self.files.push(ManifestFile {
            path: rel.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(rel)
    }

    /// Write `bytes` to `rel` under the root and record it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_bytes(&path, bytes)?;
        self.add(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn field_dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = MacGrid::new(&Domain::unit(2), &[5, 4]).unwrap();
        let u = FaceField::from_fn(g, |p| [p[0] * p[1], -p[1], 0.0]);
        let paths = write_face_field(dir.path(), "u", &u, 0.25).unwrap();
        let bins: Vec<PathBuf> = paths
            .iter()
            .filter(|p| p.extension().unwrap() == "bin")
            .cloned()
            .collect();
        let (back, t) = read_face_field(&g, &bins).unwrap();
        assert_eq!(back, u);
        assert_eq!(t, 0.25);
        let bytes = fs::read(&bins[0]).unwrap();
        assert_eq!(bytes.len(), 6 * 4 * 8);
        assert_eq!(&bytes[..8], &u.comps[0][0].to_le_bytes());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let h = FieldHeader {
            dim: 2,
            shape: vec![2, 2],
            component: "rho".into(),
            time: 0.0,
            dx: vec![0.5, 0.5],
        };
        assert!(decode_field(&h, &[0u8; 31]).is_err());
        assert_eq!(
            decode_field(&h, &encode_field(&[1.0, 2.0, 3.0, 4.0])).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn ledger_roundtrip() {
        let rec = AbsorptionRecord {
            t_exit: 0.125,
            x: [1.0, 0.3, 0.0],
            v: [2.0, -0.5, 0.0],
            units: crate::kinetic::MASS_UNITS / 4,
            class: PhaseBoundaryClass::Outgoing,
            particle: 3,
        };
        let mut buf = Vec::new();
        write_ledger(&mut buf, 2, &[rec]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_exit,x0,x1,v0,v1,weight,boundary_class\n"));
        let rows = read_ledger(&buf[..]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].x, rec.x);
        assert_eq!(rows[0].weight, 0.25);
        assert_eq!(rows[0].class, PhaseBoundaryClass::Outgoing);
    }

    #[test]
    fn manifest_rejects_escaping_paths() {
        let m = RunManifest {
            config_hash: "0".repeat(64),
            code_version: "0.1.0".into(),
            started: 0.0,
            finished: 1.0,
            wall_seconds: 1.0,
            status: RunStatus::Ok,
            error: None,
            files: vec![ManifestFile {
                path: "../etc/passwd".into(),
                sha256: "0".repeat(64),
                bytes: 0,
            }],
            snapshots: vec![],
        };
        assert!(RunManifest::parse(&m.to_json().unwrap()).is_err());
    }
}
