//! Labelled synthetic granules: Gaussian background per band plus flat-top
//! disk hotspots that lift B12 strongly and B8A mildly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_granule, write_labels, write_manifest, BandId, DataError, DatasetManifest, Granule, LabelMask, Level, ManifestEntry};

/// Pixels a hotspot must cover in a tile for the tile to count as an event.
pub const EVENT_MIN_PIXELS: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandNoise {
    pub mean: f64,
    pub std: f64,
}

/// A disk in pixel coordinates; pixel `(r, c)` belongs to it when its centre
/// `(r + 0.5, c + 0.5)` lies within `radius` of `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub row: f64,
    pub col: f64,
    pub radius: f64,
}

impl Hotspot {
    fn contains(&self, r: usize, c: usize) -> bool {
        let dy = r as f64 + 0.5 - self.row;
        let dx = c as f64 + 0.5 - self.col;
        dy * dy + dx * dx <= self.radius * self.radius
    }

    /// Pixel rows and columns the disk can touch, clipped to the raster.
    fn bounds(&self, height: usize, width: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lo = |x: f64| (x - self.radius - 0.5).floor().max(0.0) as usize;
        let hi = |x: f64, n: usize| ((x + self.radius + 0.5).ceil().max(0.0) as usize).min(n);
        (lo(self.row)..hi(self.row, height), lo(self.col)..hi(self.col, width))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub level: Level,
    pub height: usize,
    pub width: usize,
    pub b8a: BandNoise,
    pub b12: BandNoise,
    /// Hotspots placed at random, each fully inside its own tile.
    pub hotspot_count: usize,
    pub radius_range: (f64, f64),
    pub b12_amplitude: f64,
    pub b8a_amplitude: f64,
    /// Tiling used for the label mask.
    pub tile_size: usize,
    /// Explicit hotspots; when non-empty they replace random placement.
    pub hotspots: Vec<Hotspot>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self::for_level(Level::Raw)
    }
}

impl SynthParams {
    pub fn for_level(level: Level) -> Self {
        let (b8a, b12) = match level {
            Level::Raw => (BandNoise { mean: 1500.0, std: 100.0 }, BandNoise { mean: 1200.0, std: 100.0 }),
            Level::L1c => (BandNoise { mean: 0.30, std: 0.02 }, BandNoise { mean: 0.20, std: 0.02 }),
        };
        Self {
            level,
            height: 1152,
            width: 1296,
            b8a,
            b12,
            hotspot_count: 0,
            radius_range: (3.0, 8.0),
            b12_amplitude: 5.0 * b12.std,
            b8a_amplitude: 1.5 * b8a.std,
            tile_size: 128,
            hotspots: Vec::new(),
            seed: 0,
        }
    }

    pub fn tile_grid(&self) -> (usize, usize) {
        (self.height / self.tile_size, self.width / self.tile_size)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSynth(m));
        if self.height == 0 || self.width == 0 || self.tile_size == 0 {
            return bad("dimensions and tile size must be positive".into());
        }
        for (band, noise) in [(BandId::B8A, self.b8a), (BandId::B12, self.b12)] {
            if !(noise.std >= 0.0 && noise.mean >= 0.0 && noise.mean <= default_norm_max(self.level, band)) {
                return bad(format!("{band} noise must have mean in [0, norm_max] and std >= 0"));
            }
        }
        let (r0, r1) = self.radius_range;
        if !(r0 > 0.0 && r1 >= r0) {
            return bad("radius range must satisfy 0 < min <= max".into());
        }
        if self.hotspots.is_empty() {
            let (rows, cols) = self.tile_grid();
            if self.hotspot_count > rows * cols {
                return bad(format!("{} hotspots do not fit in {} tiles", self.hotspot_count, rows * cols));
            }
            if 2.0 * (r1 + 1.0) > self.tile_size as f64 {
                return bad("hotspot radius too large for one tile".into());
            }
        }
        for h in &self.hotspots {
            let inside = |x: f64, n: usize| x - h.radius >= 0.0 && x + h.radius <= n as f64;
            if !(h.radius > 0.0 && inside(h.row, self.height) && inside(h.col, self.width)) {
                return bad(format!("hotspot at ({}, {}) radius {} overflows the raster", h.row, h.col, h.radius));
            }
        }
        Ok(())
    }
}

/// Upper clip value of each band at each level, in raw units.
pub fn default_norm_max(level: Level, band: BandId) -> f64 {
    match (level, band) {
        (Level::Raw, _) => 3000.0,
        (Level::L1c, BandId::B8A) => 4.0,
        (Level::L1c, BandId::B12) => 2.0,
    }
}

fn place_hotspots(params: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Hotspot> {
    let (rows, cols) = params.tile_grid();
    let ts = params.tile_size as f64;
    let mut tiles = sample(rng, rows * cols, params.hotspot_count).into_vec();
    tiles.sort_unstable();
    tiles
        .into_iter()
        .map(|t| {
            let (r0, r1) = params.radius_range;
            let radius = if r1 > r0 { rng.random_range(r0..=r1) } else { r0 };
            let margin = radius + 1.0;
            let row = (t / cols) as f64 * ts + rng.random_range(margin..=ts - margin);
            let col = (t % cols) as f64 * ts + rng.random_range(margin..=ts - margin);
            Hotspot { row, col, radius }
        })
        .collect()
}

/// Per-tile hotspot pixel counts and the resulting mask.
pub fn label_from_hotspots(hotspots: &[Hotspot], height: usize, width: usize, tile_size: usize) -> LabelMask {
    let (rows, cols) = (height / tile_size, width / tile_size);
    let mut counts = vec![vec![0u32; cols]; rows];
    let mut covered = std::collections::HashSet::new();
    for h in hotspots {
        let (rr, cc) = h.bounds(height, width);
        for r in rr {
            for c in cc.clone() {
                if h.contains(r, c) && covered.insert((r, c)) {
                    let (tr, tc) = (r / tile_size, c / tile_size);
                    if tr < rows && tc < cols {
                        counts[tr][tc] += 1;
                    }
                }
            }
        }
    }
    let grid = counts.iter().map(|row| row.iter().map(|&n| u8::from(n >= EVENT_MIN_PIXELS)).collect()).collect();
    LabelMask { rows, cols, grid, event_pixel_counts: Some(counts) }
}

pub fn synth_granule(params: &SynthParams) -> Result<(Granule, LabelMask), DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let hotspots = if params.hotspots.is_empty() { place_hotspots(params, &mut rng) } else { params.hotspots.clone() };
    let (h, w) = (params.height, params.width);
    let mut bands = BTreeMap::new();
    for (band, noise, amplitude) in [
        (BandId::B8A, params.b8a, params.b8a_amplitude),
        (BandId::B12, params.b12, params.b12_amplitude),
    ] {
        let max = default_norm_max(params.level, band);
        let normal = Normal::new(noise.mean, noise.std).map_err(|e| DataError::InvalidSynth(e.to_string()))?;
        let mut data: Vec<f64> = (0..h * w).map(|_| normal.sample(&mut rng)).collect();
        for spot in &hotspots {
            let (rr, cc) = spot.bounds(h, w);
            for r in rr {
                for c in cc.clone() {
                    if spot.contains(r, c) {
                        data[r * w + c] += amplitude;
                    }
                }
            }
        }
        bands.insert(band, data.into_iter().map(|v| v.clamp(0.0, max) as f32).collect());
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), serde_json::json!("synthetic"));
    metadata.insert("seed".into(), serde_json::json!(params.seed));
    metadata.insert("hotspots".into(), serde_json::to_value(&hotspots).expect("hotspots serialize"));
    let granule = Granule { id: format!("synth-{}", params.seed), level: params.level, height: h, width: w, bands, metadata };
    let mask = label_from_hotspots(&hotspots, h, w, params.tile_size);
    Ok((granule, mask))
}

/// Writes `count` granules with label masks plus `manifest.json` into `dir`.
///
/// Granule `i` uses seed `base.seed + i`. Hotspot counts are spread so that
/// the first `i` granules together hold `floor(i · fraction · tiles)` events,
/// which keeps the dataset's event fraction within one tile of the target.
pub fn write_synthetic_dataset(
    dir: &Path,
    count: usize,
    base: &SynthParams,
    event_fraction: f64,
) -> Result<DatasetManifest, DataError> {
    if !(0.0..=1.0).contains(&event_fraction) {
        return Err(DataError::InvalidSynth(format!("event fraction {event_fraction} outside [0, 1]")));
    }
    base.validate()?;
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let (rows, cols) = base.tile_grid();
    let per_granule = event_fraction * (rows * cols) as f64;
    let mut manifest = DatasetManifest::default();
    for i in 0..count {
        let hotspot_count = ((i + 1) as f64 * per_granule).floor() as usize - (i as f64 * per_granule).floor() as usize;
        let params = SynthParams { seed: base.seed.wrapping_add(i as u64), hotspot_count, hotspots: Vec::new(), ..base.clone() };
        let (granule, mask) = synth_granule(&params)?;
        let name = format!("g{i:04}");
        let granule_file = format!("{name}.granule.json");
        let labels_file = format!("{name}.labels.json");
        save_granule(&granule, &dir.join(&granule_file))?;
        write_labels(&mask, &dir.join(&labels_file))?;
        let events = mask.event_count();
        manifest.event_tiles += events;
        manifest.non_event_tiles += rows * cols - events;
        manifest.entries.push(ManifestEntry { granule: granule_file, labels: labels_file, level: base.level });
    }
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams { height: 256, width: 384, ..SynthParams::default() }
    }

    #[test]
    fn no_hotspots_no_events() {
        let (g, mask) = synth_granule(&small()).unwrap();
        assert_eq!((mask.rows, mask.cols), (2, 3));
        assert_eq!(mask.event_count(), 0);
        g.validate().unwrap();
    }

    #[test]
    fn centred_hotspot_marks_its_tile() {
        let spot = Hotspot { row: 3.0 * 128.0 + 64.0, col: 4.0 * 128.0 + 64.0, radius: 10.0 };
        let params = SynthParams { hotspots: vec![spot], ..SynthParams::default() };
        let (_, mask) = synth_granule(&params).unwrap();
        assert_eq!((mask.rows, mask.cols), (9, 10));
        for r in 0..9 {
            for c in 0..10 {
                assert_eq!(mask.is_event(r, c), (r, c) == (3, 4));
            }
        }
        // brute-force pixel count of the disk
        let mut n = 0;
        for r in 0..1152usize {
            for c in 0..1296usize {
                let (dy, dx) = (r as f64 + 0.5 - spot.row, c as f64 + 0.5 - spot.col);
                n += u32::from(dy * dy + dx * dx <= 100.0);
            }
        }
        assert_eq!(mask.event_pixel_counts.as_ref().unwrap()[3][4], n);
    }

    #[test]
    fn small_corner_overlap_is_not_an_event() {
        // a disk straddling a tile corner leaves fewer than 9 pixels in some tiles
        let spot = Hotspot { row: 128.0, col: 128.0, radius: 2.5 };
        let mask = label_from_hotspots(&[spot], 256, 256, 128);
        let counts = mask.event_pixel_counts.clone().unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(mask.is_event(r, c), counts[r][c] >= 9);
                assert!(counts[r][c] > 0);
            }
        }
    }

    #[test]
    fn overflowing_hotspot_rejected() {
        let params = SynthParams { hotspots: vec![Hotspot { row: 2.0, col: 50.0, radius: 5.0 }], ..small() };
        assert!(matches!(synth_granule(&params), Err(DataError::InvalidSynth(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams { hotspot_count: 2, seed: 7, ..small() };
        assert_eq!(synth_granule(&p).unwrap(), synth_granule(&p).unwrap());
        let q = SynthParams { seed: 8, ..p.clone() };
        assert_ne!(synth_granule(&p).unwrap().0, synth_granule(&q).unwrap().0);
    }

    #[test]
    fn background_moments_match() {
        for seed in [1, 2] {
            let (g, _) = synth_granule(&SynthParams { seed, ..small() }).unwrap();
            for (band, noise) in [(BandId::B8A, small().b8a), (BandId::B12, small().b12)] {
                let data = &g.bands[&band];
                let n = data.len() as f64;
                let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
                let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
                assert!((mean - noise.mean).abs() < 0.01 * noise.std * 10.0, "{band} mean {mean}");
                assert!((var.sqrt() / noise.std - 1.0).abs() < 0.02, "{band} std {}", var.sqrt());
            }
        }
    }

    #[test]
    fn random_hotspots_each_label_one_tile() {
        let p = SynthParams { hotspot_count: 5, seed: 3, ..small() };
        let (g, mask) = synth_granule(&p).unwrap();
        assert_eq!(mask.event_count(), 5);
        let spots: Vec<Hotspot> = serde_json::from_value(g.metadata["hotspots"].clone()).unwrap();
        assert_eq!(label_from_hotspots(&spots, p.height, p.width, p.tile_size), mask);
    }

    #[test]
    fn dataset_hits_event_fraction() {
        let dir = tempfile::tempdir().unwrap();
        let base = SynthParams { height: 128 * 4, width: 128 * 5, radius_range: (3.0, 4.0), ..SynthParams::default() };
        let manifest = write_synthetic_dataset(dir.path(), 30, &base, 0.1).unwrap();
        assert_eq!(manifest.entries.len(), 30);
        assert!((manifest.event_fraction() - 0.1).abs() <= 0.005);
        let ds = super::super::Dataset::open(dir.path()).unwrap();
        ds.verify().unwrap();
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_dataset(dir.path(), 0, &SynthParams::default(), 0.02).unwrap();
        assert!(manifest.entries.is_empty());
        assert!(dir.path().join("manifest.json").exists());
    }
}
