//! `.cidx` sidecar for the center index.

use std::path::Path;

use ssjoin_core::hnsw::{CenterIndex, IndexParams};

use crate::codec::{open_decoder, write_atomic};
use crate::error::Result;

const MAGIC: &[u8; 8] = b"SSJCIDX\0";
const VERSION: u32 = 1;

pub fn save_index(index: &CenterIndex, path: &Path) -> Result<()> {
    write_atomic(path, |e| {
        e.bytes(MAGIC)?;
        e.u32(VERSION)?;
        e.u64(index.len() as u64)?;
        e.u32(index.dim() as u32)?;
        e.u32(index.params().graph_degree as u32)?;
        e.u32(index.params().ef_construction as u32)?;
        e.u32(index.layers().len() as u32)?;
        e.u32(index.entry_point())?;
        e.f32s(index.centers())?;
        e.bytes(index.levels())?;
        for layer in index.layers() {
            for list in layer {
                e.u32(list.len() as u32)?;
                e.u32s(list)?;
            }
        }
        Ok(())
    })
}

pub fn load_index(path: &Path) -> Result<CenterIndex> {
    let mut d = open_decoder(path)?;
    d.header(MAGIC, VERSION)?;
    let m = d.u64()? as usize;
    let dim = d.u32()? as usize;
    let params = IndexParams {
        graph_degree: d.u32()? as usize,
        ef_construction: d.u32()? as usize,
    };
    let num_layers = d.u32()? as usize;
    let entry = d.u32()?;
    if m == 0 || dim == 0 || num_layers == 0 || num_layers > 64 {
        return Err(d.bad("empty or implausible index header"));
    }
    let centers = d.f32s(m * dim)?;
    let levels = (0..m).map(|_| d.u8()).collect::<Result<Vec<u8>>>()?;
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let mut layer = Vec::with_capacity(m);
        for _ in 0..m {
            let len = d.u32()? as usize;
            if len > m {
                return Err(d.bad("adjacency list longer than the node count"));
            }
            layer.push(d.u32s(len)?);
        }
        layers.push(layer);
    }
    let path = d.path().to_path_buf();
    d.finish()?;
    CenterIndex::from_parts(dim, centers, levels, layers, entry, params).map_err(|e| {
        crate::error::Error::BadHeader { path, reason: e.to_string() }
    })
}
