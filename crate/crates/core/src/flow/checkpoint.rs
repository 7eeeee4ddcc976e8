//! Checkpoint container: magic string "FANSv1", the config block as
//! little-endian integers, then every parameter tensor in declared order as
//! 64-bit little-endian floats. A JSON sidecar (`<path>.json`) duplicates
//! the config for human inspection.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

use super::{FansConfig, FansModel};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"FANSv1";

pub fn write_checkpoint(model: &FansModel, path: &Path) -> Result<()> {
    let cfg = model.config();
    let params = model.param_vector();
    let mut buf = Vec::with_capacity(64 + params.len() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        cfg.d,
        cfg.m,
        cfg.hidden_layers,
        cfg.blocks_per_hidden,
        cfg.output_blocks,
        cfg.dsf_dim,
        cfg.flow_layers,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(cfg.compact as u8);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;

    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(&sidecar, json + "\n")
        .map_err(|e| CoreError::io(sidecar.display().to_string(), e))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, p: &str) -> Result<&'a [u8]> {
    if *pos + n > buf.len() {
        return Err(CoreError::malformed(p, "truncated checkpoint"));
    }
    let s = &buf[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn take_u32(buf: &[u8], pos: &mut usize, p: &str) -> Result<usize> {
    let b = take(buf, pos, 4, p)?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
}

pub fn read_checkpoint(path: &Path) -> Result<FansModel> {
    let p = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| CoreError::io(&p, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| CoreError::io(&p, e))?;
    let mut pos = 0usize;
    if take(&buf, &mut pos, 6, &p)? != CHECKPOINT_MAGIC {
        return Err(CoreError::malformed(&p, "bad magic (expected FANSv1)"));
    }
    let d = take_u32(&buf, &mut pos, &p)?;
    let m = take_u32(&buf, &mut pos, &p)?;
    let hidden_layers = take_u32(&buf, &mut pos, &p)?;
    let blocks_per_hidden = take_u32(&buf, &mut pos, &p)?;
    let output_blocks = take_u32(&buf, &mut pos, &p)?;
    let dsf_dim = take_u32(&buf, &mut pos, &p)?;
    let flow_layers = take_u32(&buf, &mut pos, &p)?;
    let compact = take(&buf, &mut pos, 1, &p)?[0] != 0;
    let config = FansConfig {
        d,
        m,
        hidden_layers,
        blocks_per_hidden,
        output_blocks,
        compact,
        dsf_dim,
        flow_layers,
    };
    config.validate()?;
    let count = u64::from_le_bytes(take(&buf, &mut pos, 8, &p)?.try_into().unwrap()) as usize;
    let mut model = FansModel::init(config, 0)?;
    if count != model.param_count() {
        return Err(CoreError::malformed(
            &p,
            format!(
                "checkpoint has {count} parameters, config implies {}",
                model.param_count()
            ),
        ));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(f64::from_le_bytes(
            take(&buf, &mut pos, 8, &p)?.try_into().unwrap(),
        ));
    }
    if pos != buf.len() {
        return Err(CoreError::malformed(&p, "trailing bytes after parameters"));
    }
    model.set_param_vector(&params)?;
    Ok(model)
}
