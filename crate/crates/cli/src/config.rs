use std::fs;
use std::path::{Path, PathBuf};

use nwn_core::dataio::SynthParams;
use nwn_core::dynamics::DynParams;
use nwn_core::netgen::GenParams;
use nwn_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub net: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run depends on. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenParams,
    #[serde(rename = "dyn")]
    pub dynamics: DynParams,
    pub pipe: PipelineConfig,
    pub synth: SynthParams,
    pub paths: Paths,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gen: GenParams::default(),
            dynamics: DynParams::default(),
            pipe: PipelineConfig::default(),
            synth: SynthParams::default(),
            paths: Paths::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, workers: Option<usize>, out: Option<&Path>) {
        if let Some(seed) = seed {
            self.gen.seed = seed;
            self.synth.seed = seed;
        }
        if let Some(w) = workers {
            self.workers = w;
        }
        if let Some(out) = out {
            self.paths.out = Some(out.to_path_buf());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        self.gen.validate()?;
        self.dynamics.validate()?;
        self.pipe.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// The resolved config as written into output files. Settings that cannot
    /// change results (worker count, output location) are left out so that
    /// outputs compare byte-for-byte across them.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("workers");
            if let Some(paths) = obj.get_mut("paths").and_then(|p| p.as_object_mut()) {
                paths.remove("out");
            }
        }
        v
    }

    pub fn out_dir(&self, default: &str) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"gen": {"seed": 9}, "dyn": {"dt": 2e-4}, "workers": 3}"#).unwrap();
        assert_eq!(cfg.gen.seed, 9);
        assert_eq!(cfg.gen.wire_count, 1520);
        assert_eq!(cfg.dynamics.dt, 2e-4);
        assert_eq!(cfg.pipe, PipelineConfig::default());
        assert_eq!(cfg.workers, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"gen": {}, "typo": 1}"#).is_err());
    }

    #[test]
    fn overrides_and_echo() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(Some(4), Some(2), Some(Path::new("o")));
        assert_eq!((cfg.gen.seed, cfg.synth.seed, cfg.workers), (4, 4, 2));
        let echo = cfg.echo();
        assert!(echo.get("workers").is_none());
        assert!(echo["paths"].get("out").is_none());
        assert_eq!(echo["gen"]["seed"], 4);
    }

    #[test]
    fn zero_workers_invalid() {
        let cfg = RunConfig { workers: 0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
