use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use nwn_core::dataio::{self, BandId, Dataset, Granule, LabelMask, Level, SynthParams};
use nwn_core::dynamics::Reservoir;
use nwn_core::metrics::{
    self, benchmark_dataset, collect_scores, project_hardware, ConfusionMatrix, EvalReport, HardwareProjection, Scores,
};
use nwn_core::netgen::{generate, read_device, write_device, DeviceGraph, ElectrodeRole};
use nwn_core::pipeline::{Detector, EventMap};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{BandArg, BenchArgs, DetectArgs, EvalArgs, GenNetArgs, LevelArg, NetArg, SweepArgs, SynthArgs};

const DEFAULT_GRID_POINTS: usize = 200;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn load_device(cfg: &RunConfig, net: &NetArg) -> Result<DeviceGraph, CliError> {
    match net.net.as_ref().or(cfg.paths.net.as_ref()) {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::MissingNet { path: path.clone(), reason: e.to_string() })?;
            read_device(file).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
        }
        None => {
            info!("no device file given, generating with seed {}", cfg.gen.seed);
            Ok(generate(&cfg.gen)?)
        }
    }
}

fn detector(cfg: &RunConfig, net: &NetArg) -> Result<Detector, CliError> {
    let graph = Arc::new(load_device(cfg, net)?);
    let reservoir = Reservoir::new(graph, cfg.dynamics.clone())?;
    Ok(Detector::new(reservoir, cfg.pipe.clone(), cfg.workers)?)
}

fn open_dataset(cfg: &RunConfig, manifest: Option<&PathBuf>) -> Result<Dataset, CliError> {
    let path = manifest
        .or(cfg.paths.manifest.as_ref())
        .ok_or_else(|| CliError::Config("a manifest is required (--manifest or paths.manifest)".into()))?;
    let dataset = Dataset::open(path)?;
    if dataset.is_empty() {
        return Err(CliError::EmptyManifest(path.clone()));
    }
    Ok(dataset)
}

fn write_report(report: &EvalReport, path: &Path) -> Result<(), CliError> {
    Ok(report.write_json(path)?)
}

pub fn gen_net(mut cfg: RunConfig, args: GenNetArgs) -> Result<Value, CliError> {
    if let Some(n) = args.grid_n {
        cfg.gen.grid_n = n;
    }
    if let Some(n) = args.wire_count {
        cfg.gen.wire_count = n;
    }
    let graph = generate(&cfg.gen)?;
    let out = cfg.out_dir("device.json");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = fs::File::create(&out).map_err(|e| CliError::output(&out, e))?;
    write_device(&graph, file).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    let inputs = graph.electrodes.iter().filter(|e| e.role == ElectrodeRole::Input).count();
    Ok(json!({
        "device": out,
        "seed": cfg.gen.seed,
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "junctions": graph.junctions.len(),
        "wire_wire_junctions": graph.wire_wire_count(),
        "electrodes": graph.electrodes.len(),
        "inputs": inputs,
        "readouts": graph.electrodes.len() - inputs,
        "components": graph.component_count(),
    }))
}

/// Synthesis defaults for `level`, with the config file's `synth` section on top.
pub fn synth_defaults(level: LevelArg, config: Option<&Path>) -> Result<SynthParams, CliError> {
    let level = match level {
        LevelArg::Raw => Level::Raw,
        LevelArg::L1c => Level::L1c,
    };
    let mut base = serde_json::to_value(SynthParams::for_level(level)).expect("synth params serialize");
    if let Some(path) = config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(section) = file.get("synth") {
            merge(&mut base, section);
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("synth: {e}")))
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

pub fn synth(mut cfg: RunConfig, args: SynthArgs) -> Result<Value, CliError> {
    if let Some(h) = args.height {
        cfg.synth.height = h;
    }
    if let Some(w) = args.width {
        cfg.synth.width = w;
    }
    cfg.synth.validate()?;
    let out = cfg.out_dir("data");
    create_dir(&out)?;
    let manifest = dataio::write_synthetic_dataset(&out, args.count, &cfg.synth, args.event_fraction).map_err(|e| {
        match e {
            dataio::DataError::Io { path, source } => CliError::Output { path, source },
            other => other.into(),
        }
    })?;
    Ok(json!({
        "manifest": out.join(dataio::MANIFEST_FILE),
        "granules": manifest.entries.len(),
        "event_tiles": manifest.event_tiles,
        "non_event_tiles": manifest.non_event_tiles,
        "event_fraction": manifest.event_fraction(),
    }))
}

fn event_map_path(dir: &Path, granule_id: &str) -> PathBuf {
    dir.join(format!("{granule_id}.events.json"))
}

fn detect_one(det: &Detector, cfg: &RunConfig, granule: &Granule) -> Result<EventMap, CliError> {
    let mut map = det.detect(granule)?.event_map;
    map.run_config = Some(cfg.echo());
    Ok(map)
}

pub fn detect(mut cfg: RunConfig, args: DetectArgs) -> Result<Value, CliError> {
    if let Some(t) = args.threshold {
        cfg.pipe.threshold = t;
    }
    let det = detector(&cfg, &args.net)?;
    let granules: Vec<Box<dyn Fn() -> Result<Granule, CliError>>> = match (&args.input.manifest, &args.input.granule) {
        (_, Some(path)) => {
            let path = path.clone();
            vec![Box::new(move || Ok(dataio::load_granule(&path)?))]
        }
        (manifest, None) => {
            let ds = Arc::new(open_dataset(&cfg, manifest.as_ref())?);
            (0..ds.len())
                .map(|i| {
                    let ds = Arc::clone(&ds);
                    Box::new(move || Ok(ds.load_granule(i)?)) as Box<dyn Fn() -> _>
                })
                .collect()
        }
    };
    let out = cfg.out_dir("events");
    create_dir(&out)?;
    let mut summary = Vec::new();
    for (i, load) in granules.iter().enumerate() {
        let granule = load()?;
        if i == 0 {
            if let Some((row, col)) = args.trace_tile {
                let band = match args.trace_band {
                    BandArg::B8a => BandId::B8A,
                    BandArg::B12 => BandId::B12,
                };
                let index = cfg.pipe.band_configs.iter().position(|b| b.band_id == band).unwrap_or(0);
                let path = out.join(format!("{}.trace-{row}-{col}-{band}.csv", granule.id));
                let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| CliError::output(&path, e))?);
                det.trace_tile(&granule, row, col, index, &mut file)?;
                std::io::Write::flush(&mut file).map_err(|e| CliError::output(&path, e))?;
            }
        }
        let map = detect_one(&det, &cfg, &granule)?;
        let path = event_map_path(&out, &granule.id);
        map.write_json(&path)?;
        if args.distances {
            map.write_distance_blob(&path.with_extension("bin"))?;
        }
        info!("{}: {} of {} tiles flagged", granule.id, map.event_count(), map.tiles.len());
        summary.push(json!({
            "granule": granule.id,
            "event_map": path,
            "events": map.event_count(),
            "tiles": map.tiles.len(),
            "argmax": map.argmax(),
        }));
    }
    Ok(json!({ "threshold": cfg.pipe.threshold, "granules": summary }))
}

pub fn sweep(cfg: RunConfig, args: SweepArgs) -> Result<Value, CliError> {
    let ds = open_dataset(&cfg, args.manifest.as_ref())?;
    let det = detector(&cfg, &args.net)?;
    let mut pairs = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let granule = ds.load_granule(i)?;
        let labels = ds.load_labels(i)?;
        pairs.push((detect_one(&det, &cfg, &granule)?, labels));
    }
    let (distances, labels) = collect_scores(&pairs)?;
    let grid = match args.grid {
        Some(g) => g,
        None => metrics::default_grid(&distances, args.grid_points.unwrap_or(DEFAULT_GRID_POINTS)),
    };
    let result = metrics::sweep(&distances, &labels, &grid)?;
    let best = result.argmax_mcc_threshold;
    let confusion: ConfusionMatrix = pairs.iter().map(|(m, l)| metrics::confusion(&m.with_threshold(best), l)).sum::<Result<_, _>>()?;
    let out = cfg.out_dir("sweep");
    create_dir(&out)?;
    if args.save_events {
        for (map, _) in &pairs {
            map.with_threshold(best).write_json(&event_map_path(&out, &map.granule_id))?;
        }
    }
    let csv = out.join("sweep.csv");
    let mut file = fs::File::create(&csv).map_err(|e| CliError::output(&csv, e))?;
    result.write_csv(&mut file).map_err(|e| CliError::output(&csv, e))?;
    let report = EvalReport {
        confusion: Some(confusion),
        scores: Some(Scores::of(&confusion)),
        sweep: Some(result.clone()),
        run_config: Some(cfg.echo()),
        ..Default::default()
    };
    let path = out.join("sweep.json");
    write_report(&report, &path)?;
    Ok(json!({
        "report": path,
        "csv": csv,
        "thresholds": result.len(),
        "argmax_mcc_threshold": best,
        "max_mcc": result.max_mcc,
        "confusion": confusion,
    }))
}

pub fn bench(cfg: RunConfig, args: BenchArgs) -> Result<Value, CliError> {
    if args.runs < 2 {
        return Err(CliError::TooFewRuns(args.runs));
    }
    let ds = open_dataset(&cfg, args.manifest.as_ref())?;
    let det = detector(&cfg, &args.net)?;
    let report = benchmark_dataset(&ds, &det, args.runs)?;
    let first = ds.load_granule(0)?;
    let (rows, cols) = cfg.pipe.tile_grid(first.height, first.width);
    let nominal = HardwareProjection::default();
    let simulated = HardwareProjection::from_dynamics(&cfg.dynamics, rows * cols);
    let hardware = vec![
        ("nominal".to_string(), nominal, project_hardware(&nominal)),
        ("simulated".to_string(), simulated, project_hardware(&simulated)),
    ];
    let summary = json!({
        "granules": report.granule_ids.len(),
        "runs": report.runs,
        "workers": report.workers,
        "mean_seconds": report.mean_seconds,
        "sem_seconds": report.sem_seconds,
        "peak_rss_bytes": report.peak_rss_bytes,
        "peak_rss_gibibits": report.peak_rss_gibibits,
        "hardware": hardware.iter().map(|(name, _, e)| json!({
            "projection": name,
            "seconds_per_granule": e.seconds_per_granule,
            "joules_per_granule": e.joules_per_granule,
        })).collect::<Vec<_>>(),
    });
    let out = cfg.out_dir("bench");
    create_dir(&out)?;
    let eval = EvalReport { bench: Some(report), hardware: Some(hardware), run_config: Some(cfg.echo()), ..Default::default() };
    let path = out.join("bench.json");
    write_report(&eval, &path)?;
    let mut summary = summary;
    summary["report"] = json!(path);
    Ok(summary)
}

fn read_map(path: &Path, threshold: Option<f64>) -> Result<EventMap, CliError> {
    let map = EventMap::read_json(path).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(match threshold {
        Some(t) => map.with_threshold(t),
        None => map,
    })
}

pub fn eval(cfg: RunConfig, args: EvalArgs) -> Result<Value, CliError> {
    let pairs: Vec<(EventMap, LabelMask)> = match (&args.event_map, &args.labels, &args.events) {
        (Some(map), Some(labels), _) => vec![(read_map(map, args.threshold)?, dataio::load_labels(labels)?)],
        (None, _, Some(dir)) => {
            let ds = open_dataset(&cfg, args.manifest.as_ref())?;
            let mut pairs = Vec::with_capacity(ds.len());
            for i in 0..ds.len() {
                let id = ds.load_granule(i)?.id;
                pairs.push((read_map(&event_map_path(dir, &id), args.threshold)?, ds.load_labels(i)?));
            }
            pairs
        }
        _ => return Err(CliError::Config("give --event-map with --labels, or --events with a manifest".into())),
    };
    let confusion: ConfusionMatrix = pairs.iter().map(|(m, l)| metrics::confusion(m, l)).sum::<Result<_, _>>()?;
    let scores = Scores::of(&confusion);
    let out = cfg.out_dir("eval");
    create_dir(&out)?;
    let path = out.join("eval.json");
    let report = EvalReport { confusion: Some(confusion), scores: Some(scores), run_config: Some(cfg.echo()), ..Default::default() };
    write_report(&report, &path)?;
    Ok(json!({
        "report": path,
        "granules": pairs.len(),
        "confusion": confusion,
        "mcc": scores.mcc,
        "precision": scores.precision_defined.then_some(scores.precision),
        "recall": scores.recall_defined.then_some(scores.recall),
    }))
}
