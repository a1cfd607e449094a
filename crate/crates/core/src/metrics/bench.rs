use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataio::Dataset;
use crate::dynamics::DynParams;
use crate::pipeline::Detector;

/// Device time and power used to project the cost of one granule on
/// physical hardware.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareProjection {
    pub simulated_seconds_per_tile: f64,
    pub tiles_per_granule: usize,
    /// Average device power in watts.
    pub device_power: f64,
}

impl Default for HardwareProjection {
    fn default() -> Self {
        Self { simulated_seconds_per_tile: 0.129 / 90.0, tiles_per_granule: 90, device_power: 25e-6 }
    }
}

impl HardwareProjection {
    /// Projection using the simulated time actually spent per tile.
    pub fn from_dynamics(params: &DynParams, tiles_per_granule: usize) -> Self {
        Self { simulated_seconds_per_tile: params.seconds_per_tile(), tiles_per_granule, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.simulated_seconds_per_tile > 0.0 && self.simulated_seconds_per_tile.is_finite()) {
            return Err(MetricsError::InvalidProjection("seconds per tile must be positive".into()));
        }
        if !(self.device_power > 0.0 && self.device_power.is_finite()) {
            return Err(MetricsError::InvalidProjection("device power must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareEstimate {
    pub seconds_per_granule: f64,
    pub joules_per_granule: f64,
}

pub fn project_hardware(p: &HardwareProjection) -> HardwareEstimate {
    let seconds = p.simulated_seconds_per_tile * p.tiles_per_granule as f64;
    HardwareEstimate { seconds_per_granule: seconds, joules_per_granule: seconds * p.device_power }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub granule_ids: Vec<String>,
    pub runs: usize,
    /// Wall time of every detection, indexed `[run][granule]`.
    pub seconds: Vec<Vec<f64>>,
    /// Per-granule time averaged within each run.
    pub run_means: Vec<f64>,
    pub mean_seconds: f64,
    /// Standard error of `mean_seconds` across runs.
    pub sem_seconds: f64,
    pub baseline_rss_bytes: u64,
    pub peak_rss_bytes: u64,
    pub peak_rss_gibibits: f64,
    pub workers: usize,
}

/// Peak resident set size of this process so far.
pub fn peak_rss_bytes() -> u64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage only writes into the provided struct
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return 0;
    }
    // SAFETY: initialized by the successful call above
    let maxrss = unsafe { usage.assume_init() }.ru_maxrss.max(0) as u64;
    if cfg!(target_os = "macos") { maxrss } else { maxrss * 1024 }
}

fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Times `detect(i)` for every granule index, serially, `runs` times.
pub fn benchmark<F>(granule_ids: &[String], runs: usize, workers: usize, mut detect: F) -> Result<BenchReport, MetricsError>
where
    F: FnMut(usize) -> Result<(), MetricsError>,
{
    if runs < 2 {
        return Err(MetricsError::TooFewRuns(runs));
    }
    let baseline = peak_rss_bytes();
    let mut seconds = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut run = Vec::with_capacity(granule_ids.len());
        for i in 0..granule_ids.len() {
            let start = Instant::now();
            detect(i)?;
            run.push(start.elapsed().as_secs_f64());
        }
        seconds.push(run);
    }
    let run_means: Vec<f64> = if granule_ids.is_empty() {
        vec![0.0; runs]
    } else {
        seconds.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect()
    };
    let (mean_seconds, sem_seconds) = mean_sem(&run_means);
    let peak = peak_rss_bytes().max(baseline);
    Ok(BenchReport {
        granule_ids: granule_ids.to_vec(),
        runs,
        seconds,
        run_means,
        mean_seconds,
        sem_seconds,
        baseline_rss_bytes: baseline,
        peak_rss_bytes: peak,
        peak_rss_gibibits: peak as f64 * 8.0 / (1u64 << 30) as f64,
        workers,
    })
}

/// Loads every granule of the dataset once, then benchmarks detection.
pub fn benchmark_dataset(dataset: &Dataset, detector: &Detector, runs: usize) -> Result<BenchReport, MetricsError> {
    if runs < 2 {
        return Err(MetricsError::TooFewRuns(runs));
    }
    let granules = (0..dataset.len()).map(|i| dataset.load_granule(i)).collect::<Result<Vec<_>, _>>()?;
    let ids: Vec<String> = granules.iter().map(|g| g.id.clone()).collect();
    benchmark(&ids, runs, detector.workers(), |i| {
        detector.detect(&granules[i])?;
        Ok(())
    })
}
