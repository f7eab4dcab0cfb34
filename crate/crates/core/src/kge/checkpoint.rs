//! Binary checkpoint: an 8-byte magic, seven little-endian u64 header
//! fields (model, norm, dim, entities, relations, seed, split fingerprint),
//! then the entity and relation matrices as row-major little-endian f64.

use std::io::{Read, Write};

use super::{EmbeddingTable, ModelKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KGICKGE1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub table: EmbeddingTable,
    pub seed: u64,
    pub split_fingerprint: u64,
}

pub fn save_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let t = &ckpt.table;
    w.write_all(MAGIC)?;
    let model = match t.model {
        ModelKind::TransE => 0u64,
        ModelKind::RotatE => 1,
    };
    for v in [
        model,
        t.norm as u64,
        t.dim as u64,
        t.num_entities as u64,
        t.num_relations as u64,
        ckpt.seed,
        ckpt.split_fingerprint,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in t.entities.iter().chain(&t.relations) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let model = match read_u64(&mut r)? {
        0 => ModelKind::TransE,
        1 => ModelKind::RotatE,
        m => return Err(Error::Checkpoint(format!("unknown model tag {m}"))),
    };
    let norm = read_u64(&mut r)? as u8;
    let dim = read_u64(&mut r)? as usize;
    let num_entities = read_u64(&mut r)? as usize;
    let num_relations = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let split_fingerprint = read_u64(&mut r)?;
    if dim == 0 || (model == ModelKind::RotatE && dim % 2 != 0) {
        return Err(Error::Checkpoint(format!("invalid dim {dim} for {model}")));
    }
    let rel_width = match model {
        ModelKind::TransE => dim,
        ModelKind::RotatE => dim / 2,
    };
    let entities = read_f64s(&mut r, num_entities * dim)?;
    let relations = read_f64s(&mut r, num_relations * rel_width)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(Checkpoint {
        table: EmbeddingTable {
            model,
            norm,
            dim,
            num_entities,
            num_relations,
            entities,
            relations,
        },
        seed,
        split_fingerprint,
    })
}
