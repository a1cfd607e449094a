//! JSON persistence of generated devices.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{build_graph, DeviceGraph, Electrode, GenParams, Junction, NetgenError, Wire};
use crate::json;

pub const DEVICE_FORMAT_VERSION: u32 = 1;

/// On-disk layout of a device. The adjacency and component labels are
/// rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFile {
    pub version: u32,
    pub params: GenParams,
    pub wires: Vec<Wire>,
    pub electrodes: Vec<Electrode>,
    pub junctions: Vec<Junction>,
}

impl From<&DeviceGraph> for DeviceFile {
    fn from(g: &DeviceGraph) -> Self {
        Self {
            version: DEVICE_FORMAT_VERSION,
            params: g.params.clone(),
            wires: g.wires.clone(),
            electrodes: g.electrodes.clone(),
            junctions: g.junctions.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DeviceIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed device file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported device format version {0}")]
    Version(u32),
    #[error(transparent)]
    Graph(#[from] NetgenError),
}

/// Writes `graph` as a single JSON document with 17 significant digits per real.
pub fn write_device<W: Write>(graph: &DeviceGraph, out: W) -> Result<(), DeviceIoError> {
    json::to_writer_exact(out, &DeviceFile::from(graph))?;
    Ok(())
}

pub fn read_device<R: Read>(input: R) -> Result<DeviceGraph, DeviceIoError> {
    let file: DeviceFile = serde_json::from_reader(io::BufReader::new(input))?;
    if file.version != DEVICE_FORMAT_VERSION {
        return Err(DeviceIoError::Version(file.version));
    }
    Ok(build_graph(file.params, file.wires, file.electrodes, file.junctions)?)
}
