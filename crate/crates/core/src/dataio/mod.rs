//! Portable granule and label formats, dataset manifests and synthetic data.
//!
//! A granule is stored as `<name>.granule.json` (header) next to
//! `<name>.granule.bin`, a flat blob of little-endian `f32` pixels, row-major,
//! bands concatenated in header order.

mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{
    default_norm_max, label_from_hotspots, synth_granule, write_synthetic_dataset, BandNoise, Hotspot, SynthParams,
    EVENT_MIN_PIXELS,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: blob holds {actual} bytes, header expects {expected}")]
    BlobLength { path: PathBuf, expected: u64, actual: u64 },
    #[error("band {band}: byte range {offset}+{len} does not match a {height}x{width} f32 raster")]
    BandLayout { band: BandId, offset: u64, len: u64, height: usize, width: usize },
    #[error("unknown dtype {0:?}, only \"f32le\" is supported")]
    UnknownDtype(String),
    #[error("granule {granule} has no {band} band")]
    MissingBand { granule: String, band: BandId },
    #[error("band {band} has {got} pixels, expected {expected}")]
    BandSize { band: BandId, expected: usize, got: usize },
    #[error("band {band} pixel {index} is {value}, expected a finite non-negative value")]
    InvalidPixel { band: BandId, index: usize, value: f32 },
    #[error("label grid is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    LabelDims { rows: usize, cols: usize, got_rows: usize, got_cols: usize },
    #[error("invalid synthesis parameters: {0}")]
    InvalidSynth(String),
    #[error("manifest entry {index}: {source}")]
    Manifest { index: usize, source: Box<DataError> },
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn json(path: &Path, source: serde_json::Error) -> Self {
        Self::Json { path: path.to_path_buf(), source }
    }

    /// Innermost error, looking through manifest wrapping.
    pub fn root(&self) -> &DataError {
        match self {
            Self::Manifest { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    B8A,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 2] = [BandId::B8A, BandId::B12];
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandId::B8A => "B8A",
            BandId::B12 => "B12",
        })
    }
}

/// Processing level of a granule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Raw,
    L1c,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Granule {
    pub id: String,
    pub level: Level,
    pub height: usize,
    pub width: usize,
    /// Row-major rasters in raw units.
    pub bands: BTreeMap<BandId, Vec<f32>>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Granule {
    pub fn band(&self, band: BandId) -> Result<&[f32], DataError> {
        self.bands
            .get(&band)
            .map(Vec::as_slice)
            .ok_or_else(|| DataError::MissingBand { granule: self.id.clone(), band })
    }

    /// Checks that both bands are present, sized `height × width`, and hold
    /// finite non-negative values.
    pub fn validate(&self) -> Result<(), DataError> {
        let expected = self.height * self.width;
        for band in BandId::ALL {
            let data = self.band(band)?;
            if data.len() != expected {
                return Err(DataError::BandSize { band, expected, got: data.len() });
            }
            if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(DataError::InvalidPixel { band, index, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BandEntry {
    band_id: BandId,
    dtype: String,
    offset: u64,
    byte_length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GranuleHeader {
    id: String,
    level: Level,
    height: usize,
    width: usize,
    bands: Vec<BandEntry>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

const DTYPE: &str = "f32le";

/// Blob path paired with a header path: `x.granule.json` → `x.granule.bin`.
pub fn blob_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    crate::json::to_writer_exact(file, value).map_err(|e| DataError::json(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| DataError::json(path, e))
}

/// Writes the header to `path` and the pixel blob next to it.
pub fn save_granule(granule: &Granule, path: &Path) -> Result<(), DataError> {
    granule.validate()?;
    let mut blob = Vec::with_capacity(granule.height * granule.width * 4 * granule.bands.len());
    let mut entries = Vec::new();
    for (&band_id, data) in &granule.bands {
        let offset = blob.len() as u64;
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(BandEntry { band_id, dtype: DTYPE.into(), offset, byte_length: blob.len() as u64 - offset });
    }
    let header = GranuleHeader {
        id: granule.id.clone(),
        level: granule.level,
        height: granule.height,
        width: granule.width,
        bands: entries,
        metadata: granule.metadata.clone(),
    };
    let bin = blob_path(path);
    fs::write(&bin, &blob).map_err(|e| DataError::io(&bin, e))?;
    write_json(path, &header)
}

pub fn load_granule(path: &Path) -> Result<Granule, DataError> {
    let header: GranuleHeader = read_json(path)?;
    let bin = blob_path(path);
    let blob = fs::read(&bin).map_err(|e| DataError::io(&bin, e))?;
    let expected: u64 = header.bands.iter().map(|b| b.byte_length).sum();
    if expected != blob.len() as u64 {
        return Err(DataError::BlobLength { path: bin, expected, actual: blob.len() as u64 });
    }
    let raster_bytes = (header.height * header.width * 4) as u64;
    let mut bands = BTreeMap::new();
    for entry in &header.bands {
        if entry.dtype != DTYPE {
            return Err(DataError::UnknownDtype(entry.dtype.clone()));
        }
        let end = entry.offset.checked_add(entry.byte_length).filter(|&e| e <= blob.len() as u64);
        let Some(end) = end.filter(|_| entry.byte_length == raster_bytes) else {
            return Err(DataError::BandLayout {
                band: entry.band_id,
                offset: entry.offset,
                len: entry.byte_length,
                height: header.height,
                width: header.width,
            });
        };
        let data = blob[entry.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        bands.insert(entry.band_id, data);
    }
    let granule = Granule {
        id: header.id,
        level: header.level,
        height: header.height,
        width: header.width,
        bands,
        metadata: header.metadata,
    };
    granule.validate()?;
    Ok(granule)
}

/// Per-tile ground truth aligned with the detection tiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMask {
    pub rows: usize,
    pub cols: usize,
    /// Row-major grid of 0 (non-event) / 1 (event).
    pub grid: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_pixel_counts: Option<Vec<Vec<u32>>>,
}

impl LabelMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, grid: vec![vec![0; cols]; rows], event_pixel_counts: None }
    }

    pub fn is_event(&self, row: usize, col: usize) -> bool {
        self.grid[row][col] != 0
    }

    pub fn event_count(&self) -> usize {
        self.grid.iter().flatten().filter(|&&v| v != 0).count()
    }

    /// Labels flattened in row-major order.
    pub fn flat(&self) -> Vec<bool> {
        self.grid.iter().flatten().map(|&v| v != 0).collect()
    }

    /// Checks the grid against its declared dimensions.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |got_rows, got_cols| DataError::LabelDims { rows: self.rows, cols: self.cols, got_rows, got_cols };
        if self.grid.len() != self.rows {
            return Err(bad(self.grid.len(), self.grid.first().map_or(0, Vec::len)));
        }
        if let Some(row) = self.grid.iter().find(|r| r.len() != self.cols) {
            return Err(bad(self.rows, row.len()));
        }
        if let Some(counts) = &self.event_pixel_counts {
            if counts.len() != self.rows || counts.iter().any(|r| r.len() != self.cols) {
                return Err(bad(counts.len(), counts.first().map_or(0, Vec::len)));
            }
        }
        Ok(())
    }

    pub fn expect_dims(&self, rows: usize, cols: usize) -> Result<(), DataError> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(DataError::LabelDims { rows, cols, got_rows: self.rows, got_cols: self.cols });
        }
        Ok(())
    }
}

pub fn load_labels(path: &Path) -> Result<LabelMask, DataError> {
    let mask: LabelMask = read_json(path)?;
    mask.validate()?;
    Ok(mask)
}

pub fn write_labels(mask: &LabelMask, path: &Path) -> Result<(), DataError> {
    mask.validate()?;
    write_json(path, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Granule header path, relative to the manifest's directory.
    pub granule: String,
    pub labels: String,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub event_tiles: usize,
    pub non_event_tiles: usize,
}

impl DatasetManifest {
    pub fn event_fraction(&self) -> f64 {
        let total = self.event_tiles + self.non_event_tiles;
        if total == 0 {
            0.0
        } else {
            self.event_tiles as f64 / total as f64
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Loads a manifest file, or `manifest.json` inside a directory.
    pub fn open(path: &Path) -> Result<Self, DataError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let manifest = read_json(&file)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn granule_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.manifest.entries[index].granule)
    }

    pub fn labels_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.manifest.entries[index].labels)
    }

    pub fn load_granule(&self, index: usize) -> Result<Granule, DataError> {
        load_granule(&self.granule_path(index)).map_err(|e| DataError::Manifest { index, source: Box::new(e) })
    }

    pub fn load_labels(&self, index: usize) -> Result<LabelMask, DataError> {
        load_labels(&self.labels_path(index)).map_err(|e| DataError::Manifest { index, source: Box::new(e) })
    }

    /// Checks that every referenced file exists and parses.
    pub fn verify(&self) -> Result<(), DataError> {
        for index in 0..self.len() {
            self.load_granule(index)?;
            self.load_labels(index)?;
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<PathBuf, DataError> {
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, manifest)?;
    Ok(path)
}
