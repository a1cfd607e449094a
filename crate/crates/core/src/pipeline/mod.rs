//! Two-band detection flow: normalize, tile, pool, drive the reservoir, and
//! compare the per-band feature vectors with the spanning-norm distance.

mod detect;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{default_norm_max, BandId, DataError, Level};
use crate::dynamics::{DynParams, DynamicsError, JunctionState, Reservoir, TileWorkspace};
use crate::netgen::DeviceGraph;

pub use detect::{BandPair, Detection, Detector, EventMap, TileFeature, TileResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("{height}x{width} raster is smaller than one {tile}x{tile} tile")]
    TooSmall { height: usize, width: usize, tile: usize },
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("{size}x{size} patch cannot be pooled with window {pool} and stride {stride}")]
    PoolShape { size: usize, pool: usize, stride: usize },
    #[error("pooled grid has {pooled} cells but the device has {inputs} input electrodes")]
    InputMismatch { pooled: usize, inputs: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// What to do with the strip left over when the raster is not a whole
/// number of tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PartialTilePolicy {
    #[default]
    Drop,
    /// Keep the partial tiles, filling them by mirroring the raster edge.
    PadReflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub band_id: BandId,
    /// Raw value mapped to the top of the drive range.
    pub norm_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tile_size: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub threshold: f64,
    pub band_configs: [BandConfig; 2],
    pub partial_tile_policy: PartialTilePolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_level(Level::Raw)
    }
}

impl PipelineConfig {
    pub fn for_level(level: Level) -> Self {
        let band = |band_id| BandConfig { band_id, norm_max: default_norm_max(level, band_id) };
        Self {
            tile_size: 128,
            pool_size: 16,
            pool_stride: 16,
            threshold: match level {
                Level::Raw => 1.68,
                Level::L1c => 0.92,
            },
            band_configs: [band(BandId::B8A), band(BandId::B12)],
            partial_tile_policy: PartialTilePolicy::Drop,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.tile_size == 0 || self.pool_size == 0 || self.pool_stride == 0 {
            return bad("tile, pool and stride sizes must be positive".into());
        }
        if !self.tile_size.is_multiple_of(self.pool_stride) {
            return bad(format!("tile size {} is not divisible by pool stride {}", self.tile_size, self.pool_stride));
        }
        if self.pool_size > self.tile_size {
            return bad(format!("pool size {} exceeds tile size {}", self.pool_size, self.tile_size));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold {} must be finite and non-negative", self.threshold));
        }
        if self.band_configs[0].band_id == self.band_configs[1].band_id {
            return bad("band configs must name two different bands".into());
        }
        for b in &self.band_configs {
            if !(b.norm_max > 0.0 && b.norm_max.is_finite()) {
                return bad(format!("{} norm_max must be positive", b.band_id));
            }
        }
        Ok(())
    }

    /// Side of the pooled grid produced from one tile.
    pub fn pooled_side(&self) -> usize {
        (self.tile_size - self.pool_size) / self.pool_stride + 1
    }

    /// Tile rows and columns for a `height × width` raster.
    pub fn tile_grid(&self, height: usize, width: usize) -> (usize, usize) {
        let t = self.tile_size;
        match self.partial_tile_policy {
            PartialTilePolicy::Drop => (height / t, width / t),
            PartialTilePolicy::PadReflect => (height.div_ceil(t), width.div_ceil(t)),
        }
    }
}

/// Maps one raw value into the drive range `[-0.4, 0.8]`.
#[inline]
pub fn normalize_value(x: f64, norm_max: f64) -> f64 {
    // scaled by ten so both endpoints come out exact
    (12.0 * (x.clamp(0.0, norm_max) / norm_max) - 4.0) / 10.0
}

pub fn normalize_band(pixels: &[f32], norm_max: f64) -> Vec<f64> {
    pixels.iter().map(|&x| normalize_value(f64::from(x), norm_max)).collect()
}

/// A square tile cut from a band, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let k = i % period;
    if k < n { k } else { period - k }
}

fn cut_patch(band: &[f64], width: usize, height: usize, row: usize, col: usize, size: usize) -> Patch {
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        let y = reflect(row * size + r, height);
        let x0 = col * size;
        if x0 + size <= width {
            data.extend_from_slice(&band[y * width + x0..y * width + x0 + size]);
        } else {
            data.extend((0..size).map(|c| band[y * width + reflect(x0 + c, width)]));
        }
    }
    Patch { row, col, size, data }
}

/// Cuts a normalized band into non-overlapping tiles, row-major.
pub fn tile_granule(
    band: &[f64],
    height: usize,
    width: usize,
    config: &PipelineConfig,
) -> Result<Vec<Patch>, PipelineError> {
    check_raster(band, height, width, config)?;
    let (rows, cols) = config.tile_grid(height, width);
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            out.push(cut_patch(band, width, height, row, col, config.tile_size));
        }
    }
    Ok(out)
}

fn check_raster(band: &[f64], height: usize, width: usize, config: &PipelineConfig) -> Result<(), PipelineError> {
    if band.len() != height * width {
        return Err(PipelineError::Length { what: "band raster", expected: height * width, got: band.len() });
    }
    if height < config.tile_size || width < config.tile_size {
        return Err(PipelineError::TooSmall { height, width, tile: config.tile_size });
    }
    Ok(())
}

/// Max pooling of a `size × size` patch with a square window.
pub fn max_pool(patch: &[f64], size: usize, pool: usize, stride: usize) -> Result<Vec<f64>, PipelineError> {
    if patch.len() != size * size {
        return Err(PipelineError::Length { what: "patch", expected: size * size, got: patch.len() });
    }
    if pool == 0 || stride == 0 || pool > size || !(size - pool).is_multiple_of(stride) {
        return Err(PipelineError::PoolShape { size, pool, stride });
    }
    let side = (size - pool) / stride + 1;
    let mut out = vec![f64::NEG_INFINITY; side * side];
    for (i, cell) in out.iter_mut().enumerate() {
        let (r0, c0) = ((i / side) * stride, (i % side) * stride);
        for r in r0..r0 + pool {
            for &v in &patch[r * size + c0..r * size + c0 + pool] {
                *cell = cell.max(v);
            }
        }
    }
    Ok(out)
}

/// Runs one pooled tile through the reservoir and prepends the pooled input
/// to the readout.
pub fn extract_features_with(
    reservoir: &Reservoir,
    pooled: &[f64],
    state: &mut JunctionState,
    ws: &mut TileWorkspace,
) -> Result<Vec<f64>, PipelineError> {
    let readout = reservoir.run_tile_in_place(pooled, state, ws, None)?;
    let mut feature = Vec::with_capacity(pooled.len() + readout.len());
    feature.extend_from_slice(pooled);
    feature.extend_from_slice(&readout);
    Ok(feature)
}

/// One-off feature extraction from a fresh device state.
pub fn extract_features(graph: &DeviceGraph, pooled: &[f64], params: &DynParams) -> Result<Vec<f64>, PipelineError> {
    let reservoir = Reservoir::new(std::sync::Arc::new(graph.clone()), params.clone())?;
    let mut state = reservoir.fresh_state();
    let mut ws = reservoir.workspace();
    extract_features_with(&reservoir, pooled, &mut state, &mut ws)
}

/// Range of the elementwise difference `x − y`.
pub fn span_norm(x: &[f64], y: &[f64]) -> Result<f64, PipelineError> {
    if x.len() != y.len() {
        return Err(PipelineError::Length { what: "feature vector", expected: x.len(), got: y.len() });
    }
    let (lo, hi) = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    Ok(if x.is_empty() { 0.0 } else { hi - lo })
}
