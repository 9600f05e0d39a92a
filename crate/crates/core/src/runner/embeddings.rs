use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::nn::Network;
use crate::{Error, Result};

/// Writes one CSV row per sample: `r0..r{k-1},y,z` where `r*` are the
/// representation-layer activations.
pub fn dump_embeddings(net: &Network, data: &Dataset, path: &Path) -> Result<()> {
    let reps = net.represent(&data.features)?;
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = (0..reps.ncols()).map(|k| format!("r{k}")).collect();
    writeln!(out, "{},y,z", header.join(",")).map_err(io)?;
    for ((row, y), z) in reps.rows().into_iter().zip(&data.targets).zip(&data.groups) {
        for v in row {
            write!(out, "{v},").map_err(io)?;
        }
        writeln!(out, "{y},{z}").map_err(io)?;
    }
    out.flush().map_err(io)
}
