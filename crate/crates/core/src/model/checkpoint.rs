//! Checkpoint file format.
//!
//! A text header of `key = value` lines between the magic line and
//! `end_header`, followed by every parameter tensor in model order:
//! a little-endian `u32` rank, `rank` little-endian `u64` extents, then the
//! values as little-endian `f64`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::NonlinearityKind;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &str = "MUSTCNN-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;
const END_HEADER: &str = "end_header";

pub fn checkpoint_write<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    let params = model.params();
    let header = format!(
        "{CHECKPOINT_MAGIC}\nversion = {CHECKPOINT_VERSION}\n{}tag = {}\nparam_groups = {}\n{END_HEADER}\n",
        model.config(),
        model.tag.as_deref().unwrap_or("joint"),
        params.len()
    );
    buf.extend_from_slice(header.as_bytes());
    for (_, p) in params {
        let shape = p.value.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &e in shape {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
        .and_then(|_| out.flush())
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

pub fn checkpoint_save(model: &Model, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    checkpoint_write(model, std::io::BufWriter::new(file))
}

pub fn checkpoint_read<R: Read>(mut input: R) -> Result<Model> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let marker = format!("\n{END_HEADER}\n");
    let end = find(&bytes, marker.as_bytes())
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut kv = BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed header line '{line}'")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("header lacks '{k}'")))
    };
    let version: u32 = parse(get("version")?, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = ModelConfig {
        conv_layers: parse(get("conv_layers")?, "conv_layers")?,
        hidden_units: parse(get("hidden_units")?, "hidden_units")?,
        kernel_size: parse(get("kernel_size")?, "kernel_size")?,
        pool_size: parse(get("pool_size")?, "pool_size")?,
        input_dropout: parse(get("input_dropout")?, "input_dropout")?,
        dropout: parse(get("dropout")?, "dropout")?,
        nonlinearity: get("nonlinearity")?
            .parse::<NonlinearityKind>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?,
        embed_dim: parse(get("embed_dim")?, "embed_dim")?,
        tasks: ModelConfig::parse_tasks(get("tasks")?).map_err(|e| Error::Checkpoint(e.to_string()))?,
    };
    let tag = get("tag")?;
    let groups: usize = parse(get("param_groups")?, "param_groups")?;

    let mut model =
        Model::build(config, &mut Rng::new(0)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    model.tag = (tag != "joint").then(|| tag.to_string());
    let mut cursor = &bytes[end + marker.len()..];
    let params = model.params_mut();
    if params.len() != groups {
        return Err(Error::Checkpoint(format!(
            "header declares {groups} parameter groups, configuration implies {}",
            params.len()
        )));
    }
    for (name, p) in params {
        let rank = take_u32(&mut cursor, &name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(take_u64(&mut cursor, &name)? as usize);
        }
        if shape != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {shape:?}, expected {:?}",
                p.value.shape()
            )));
        }
        let mut data = Vec::with_capacity(p.value.len());
        for _ in 0..p.value.len() {
            data.push(f64::from_bits(take_u64(&mut cursor, &name)?));
        }
        p.value = Tensor::from_vec(&shape, data)?;
        p.zero_grad();
    }
    if !cursor.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} unexpected trailing bytes",
            cursor.len()
        )));
    }
    Ok(model)
}

pub fn checkpoint_load(path: &Path) -> Result<Model> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    checkpoint_read(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("bad value '{s}' for {key}")))
}

fn take<'a>(cursor: &mut &'a [u8], n: usize, name: &str) -> Result<&'a [u8]> {
    if cursor.len() < n {
        return Err(Error::Checkpoint(format!("truncated inside {name}")));
    }
    let (head, rest) = cursor.split_at(n);
    *cursor = rest;
    Ok(head)
}

fn take_u32(cursor: &mut &[u8], name: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(cursor, 4, name)?.try_into().expect("4 bytes")))
}

fn take_u64(cursor: &mut &[u8], name: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(cursor, 8, name)?.try_into().expect("8 bytes")))
}
