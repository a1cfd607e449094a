use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_raster, cut_patch, extract_features_with, max_pool, normalize_band, span_norm, PipelineConfig, PipelineError,
};
use crate::dataio::Granule;
use crate::dynamics::{write_trace_header, ResetPolicy, Reservoir};

/// Per-tile values for both bands.
pub type BandPair = [Vec<f64>; 2];

/// Per-tile intermediate results, band order as in `PipelineConfig::band_configs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileFeature {
    pub tile_row: usize,
    pub tile_col: usize,
    pub pooled: BandPair,
    pub feature: BandPair,
    pub distance: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileResult {
    pub row: usize,
    pub col: usize,
    pub distance: f64,
    pub predicted: bool,
}

/// Tile-level detections for one granule. `tiles` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMap {
    pub granule_id: String,
    pub rows: usize,
    pub cols: usize,
    pub threshold: f64,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
    pub tiles: Vec<TileResult>,
}

impl EventMap {
    pub fn distances(&self) -> Vec<f64> {
        self.tiles.iter().map(|t| t.distance).collect()
    }

    pub fn predicted(&self) -> Vec<bool> {
        self.tiles.iter().map(|t| t.predicted).collect()
    }

    pub fn event_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.predicted).count()
    }

    /// Index of the tile with the largest distance; the first one on ties.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<&TileResult> = None;
        for t in &self.tiles {
            if best.is_none_or(|b| t.distance > b.distance) {
                best = Some(t);
            }
        }
        best.map(|t| (t.row, t.col))
    }

    /// Re-classifies every tile against a new threshold.
    pub fn with_threshold(&self, threshold: f64) -> EventMap {
        let mut out = self.clone();
        out.threshold = threshold;
        for t in &mut out.tiles {
            t.predicted = t.distance > threshold;
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<(), PipelineError> {
        let file = fs::File::create(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        crate::json::to_writer_exact(file, self).map_err(|source| PipelineError::Json { path: path.into(), source })
    }

    pub fn read_json(path: &Path) -> Result<Self, PipelineError> {
        let file = fs::File::open(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|source| PipelineError::Json { path: path.into(), source })
    }

    /// Writes the distance grid as row-major little-endian `f64`.
    pub fn write_distance_blob(&self, path: &Path) -> Result<(), PipelineError> {
        let bytes: Vec<u8> = self.tiles.iter().flat_map(|t| t.distance.to_le_bytes()).collect();
        fs::write(path, bytes).map_err(|source| PipelineError::Io { path: path.into(), source })
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub event_map: EventMap,
    pub features: Vec<TileFeature>,
}

/// Runs the detection flow with a fixed device and a private worker pool.
///
/// Both bands go through clones of the same reservoir. Every tile and band is
/// an independent job under the per-tile reset policy; with persistent state
/// each band is a sequential chain over the tiles in row-major order.
pub struct Detector {
    reservoir: Reservoir,
    config: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl Detector {
    /// `workers == 0` uses one worker per available core.
    pub fn new(reservoir: Reservoir, config: PipelineConfig, workers: usize) -> Result<Self, PipelineError> {
        config.validate()?;
        let side = config.pooled_side();
        if side * side != reservoir.input_count() {
            return Err(PipelineError::InputMismatch { pooled: side * side, inputs: reservoir.input_count() });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("nwn-worker-{i}"))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        Ok(Self { reservoir, config, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Normalized, tiled and pooled drive for every tile and band.
    fn pooled_inputs(&self, granule: &Granule) -> Result<(usize, usize, Vec<BandPair>), PipelineError> {
        let c = &self.config;
        let (h, w) = (granule.height, granule.width);
        let bands = c
            .band_configs
            .iter()
            .map(|b| {
                let raw = granule.band(b.band_id)?;
                let norm = normalize_band(raw, b.norm_max);
                check_raster(&norm, h, w, c)?;
                Ok(norm)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let (rows, cols) = c.tile_grid(h, w);
        let pooled = self.pool.install(|| {
            (0..rows * cols)
                .into_par_iter()
                .map(|t| {
                    let pool_band = |band: &[f64]| {
                        let patch = cut_patch(band, w, h, t / cols, t % cols, c.tile_size);
                        max_pool(&patch.data, c.tile_size, c.pool_size, c.pool_stride)
                    };
                    Ok([pool_band(&bands[0])?, pool_band(&bands[1])?])
                })
                .collect::<Result<Vec<_>, PipelineError>>()
        })?;
        Ok((rows, cols, pooled))
    }

    fn features(&self, pooled: &[BandPair]) -> Result<Vec<BandPair>, PipelineError> {
        let res = &self.reservoir;
        let flat: Vec<Vec<f64>> = match res.params().reset_policy {
            ResetPolicy::PerTile => self.pool.install(|| {
                (0..pooled.len() * 2)
                    .into_par_iter()
                    .map_init(
                        || (res.workspace(), res.fresh_state()),
                        |(ws, state), job| extract_features_with(res, &pooled[job / 2][job % 2], state, ws),
                    )
                    .collect::<Result<Vec<_>, _>>()
            })?,
            ResetPolicy::Persistent => {
                let chains = self.pool.install(|| {
                    (0..2)
                        .into_par_iter()
                        .map(|band| {
                            let (mut ws, mut state) = (res.workspace(), res.fresh_state());
                            pooled
                                .iter()
                                .map(|p| extract_features_with(res, &p[band], &mut state, &mut ws))
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()
                })?;
                let [a, b]: [Vec<Vec<f64>>; 2] = chains.try_into().expect("two bands");
                a.into_iter().zip(b).flat_map(|(x, y)| [x, y]).collect()
            }
        };
        let mut it = flat.into_iter();
        Ok(std::iter::from_fn(|| Some([it.next()?, it.next()?])).collect())
    }

    pub fn detect(&self, granule: &Granule) -> Result<Detection, PipelineError> {
        let start = Instant::now();
        let (rows, cols, pooled) = self.pooled_inputs(granule)?;
        let features = self.features(&pooled)?;
        let threshold = self.config.threshold;
        let mut tiles = Vec::with_capacity(rows * cols);
        let mut out = Vec::with_capacity(rows * cols);
        for (t, (pooled, feature)) in pooled.into_iter().zip(features).enumerate() {
            let distance = span_norm(&feature[0], &feature[1])?;
            let (row, col) = (t / cols, t % cols);
            let predicted = distance > threshold;
            tiles.push(TileResult { row, col, distance, predicted });
            out.push(TileFeature { tile_row: row, tile_col: col, pooled, feature, distance, predicted });
        }
        log::debug!("granule {}: {} tiles in {:.3?}", granule.id, tiles.len(), start.elapsed());
        let event_map = EventMap {
            granule_id: granule.id.clone(),
            rows,
            cols,
            threshold,
            config: self.config.clone(),
            run_config: None,
            tiles,
        };
        Ok(Detection { event_map, features: out })
    }

    /// Writes the per-step junction trace of one tile and band as CSV.
    /// Earlier tiles are replayed first under the persistent policy.
    pub fn trace_tile(
        &self,
        granule: &Granule,
        row: usize,
        col: usize,
        band: usize,
        out: &mut dyn Write,
    ) -> Result<(), PipelineError> {
        let (rows, cols, pooled) = self.pooled_inputs(granule)?;
        if row >= rows || col >= cols || band > 1 {
            return Err(PipelineError::InvalidConfig(format!(
                "tile ({row}, {col}) band {band} outside the {rows}x{cols} grid"
            )));
        }
        let res = &self.reservoir;
        let (mut ws, mut state) = (res.workspace(), res.fresh_state());
        let target = row * cols + col;
        if res.params().reset_policy == ResetPolicy::Persistent {
            for p in &pooled[..target] {
                res.run_tile_in_place(&p[band], &mut state, &mut ws, None)?;
            }
        }
        write_trace_header(out).map_err(crate::dynamics::DynamicsError::from)?;
        res.run_tile_in_place(&pooled[target][band], &mut state, &mut ws, Some(out))?;
        Ok(())
    }
}
