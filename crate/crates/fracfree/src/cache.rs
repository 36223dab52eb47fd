//! On-disk cache of kernel tables.
//!
//! A file holds a magic tag, a little-endian `u32` header length, a JSON
//! header and then the packed arrays: box offsets and rectangle weights as
//! little-endian `f64`, methods as one byte each. The file name is the
//! SHA-256 of the header, so any change of grid, exponent, tolerance or
//! format version lands in a different file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracfree_core::energy::{Discretization, Tables};
use fracfree_core::model::{ExteriorDatum, FractionalParams, Grid};
use fracfree_core::quadrature::{assemble_table, KernelTable, PairMethod};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 4] = b"FFKT";
pub const CACHE_VERSION: u32 = 1;

const METHODS: [PairMethod; 6] = [
    PairMethod::SameCell,
    PairMethod::ClosedForm,
    PairMethod::MomentMatched,
    PairMethod::Polar,
    PairMethod::Gauss,
    PairMethod::Midpoint,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    n: usize,
    m: usize,
    half_width: f64,
    truncation_radius: f64,
    domain_radius: f64,
    alpha: f64,
    tol: f64,
    offsets: usize,
    rect_weights: usize,
}

impl Header {
    fn new(grid: &Grid, alpha: f64, tol: f64) -> Self {
        let spec = grid.spec();
        Self {
            version: CACHE_VERSION,
            n: spec.dimension,
            m: spec.cells_per_side,
            half_width: spec.half_width,
            truncation_radius: spec.truncation_radius,
            domain_radius: spec.domain_radius,
            alpha,
            tol,
            offsets: 0,
            rect_weights: 0,
        }
    }

    fn key(&self) -> String {
        let bare = Header { offsets: 0, rect_weights: 0, ..self.clone() };
        let json = serde_json::to_vec(&bare).expect("header serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, grid: &Grid, alpha: f64, tol: f64) -> PathBuf {
        self.dir.join(format!("{}.fft", Header::new(grid, alpha, tol).key()))
    }

    /// Loads the table if a valid file exists, otherwise assembles and stores it.
    pub fn table(&self, grid: &Arc<Grid>, alpha: f64, tol: f64) -> fracfree_core::Result<Arc<KernelTable>> {
        let path = self.path_for(grid, alpha, tol);
        if let Some(t) = read(&path, grid, alpha, tol) {
            return Ok(Arc::new(t));
        }
        let table = assemble_table(grid, alpha, tol)?;
        // A failed write only costs a rebuild next time.
        let _ = write(&path, &table);
        Ok(Arc::new(table))
    }
}

fn read(path: &Path, grid: &Arc<Grid>, alpha: f64, tol: f64) -> Option<KernelTable> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return None;
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let header: Header = serde_json::from_slice(bytes.get(8..8 + hlen)?).ok()?;
    let expect = Header::new(grid, alpha, tol);
    if (Header { offsets: 0, rect_weights: 0, ..header.clone() }) != expect {
        return None;
    }
    let mut at = 8 + hlen;
    let mut floats = |count: usize| -> Option<Vec<f64>> {
        let raw = bytes.get(at..at + 8 * count)?;
        at += 8 * count;
        Some(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let offsets = floats(header.offsets)?;
    let rect_weights = floats(header.rect_weights)?;
    let methods = bytes
        .get(at..at + header.offsets)?
        .iter()
        .map(|&b| METHODS.get(b as usize).copied())
        .collect::<Option<Vec<_>>>()?;
    if at + header.offsets != bytes.len() {
        return None;
    }
    KernelTable::from_parts(grid, alpha, tol, offsets, methods, rect_weights).ok()
}

fn write(path: &Path, table: &KernelTable) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut header = Header::new(table.grid(), table.alpha(), table.tol());
    header.offsets = table.offset_weights().len();
    header.rect_weights = table.rect_weights().len();
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 9 * header.offsets + 8 * header.rect_weights);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for w in table.offset_weights().iter().chain(table.rect_weights()) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for m in table.offset_methods() {
        out.push(METHODS.iter().position(|x| x == m).expect("known method") as u8);
    }
    // write-then-rename keeps concurrent readers from seeing partial files
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::File::create(&tmp)?.write_all(&out)?;
    fs::rename(tmp, path)
}

/// Table source: the on-disk cache when configured, fresh assembly otherwise.
#[derive(Debug, Clone, Default)]
pub struct TableSource {
    cache: Option<TableCache>,
}

impl TableSource {
    pub fn new(cache: Option<TableCache>) -> Self {
        Self { cache }
    }

    pub fn table(&self, grid: &Arc<Grid>, alpha: f64, tol: f64) -> fracfree_core::Result<Arc<KernelTable>> {
        match &self.cache {
            Some(c) => c.table(grid, alpha, tol),
            None => assemble_table(grid, alpha, tol).map(Arc::new),
        }
    }

    pub fn discretization(
        &self,
        grid: &Arc<Grid>,
        datum: &Arc<ExteriorDatum>,
        alpha: f64,
        tol: f64,
    ) -> fracfree_core::Result<Discretization> {
        Discretization::new(self.table(grid, alpha, tol)?, datum)
    }

    pub fn tables(
        &self,
        grid: &Arc<Grid>,
        datum: &Arc<ExteriorDatum>,
        params: &FractionalParams,
        tol: f64,
    ) -> fracfree_core::Result<Tables> {
        params.validate()?;
        let s = self.discretization(grid, datum, 2.0 * params.s, tol)?;
        let sigma = if (2.0 * params.s - params.sigma).abs() < 1e-15 {
            s.clone()
        } else {
            self.discretization(grid, datum, params.sigma, tol)?
        };
        Ok(Tables { s, sigma })
    }
}
