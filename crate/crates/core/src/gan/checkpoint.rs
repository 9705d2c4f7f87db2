//! Versioned binary checkpoints: a header echoing the training
//! configuration and normalization statistics, then every parameter and
//! batch-norm state block in declaration order as little-endian f32 with
//! shape prefixes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Scalar;
use super::{GanConfig, GanModel};
use crate::error::{Error, Result};
use crate::spectral::NormalizationMeta;

const MAGIC: &[u8; 4] = b"CSGN";
const VERSION: u32 = 1;

struct Block {
    name: String,
    dims: Vec<u32>,
    data: Vec<f32>,
}

fn collect_blocks<T: Scalar>(model: &GanModel<T>) -> Vec<Block> {
    let as_f32 = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<f32>>();
    let mut blocks = Vec::new();
    for (i, s) in model.gen.stages.iter().enumerate() {
        let w = &s.deconv.weight;
        blocks.push(Block {
            name: format!("gen.{i}.weight"),
            dims: w.shape.iter().map(|&d| d as u32).collect(),
            data: as_f32(&w.data),
        });
        if let Some(bn) = &s.bn {
            for (suffix, values) in [
                ("bn.gamma", &bn.gamma),
                ("bn.beta", &bn.beta),
                ("bn.running_mean", &bn.running_mean),
                ("bn.running_var", &bn.running_var),
            ] {
                blocks.push(Block {
                    name: format!("gen.{i}.{suffix}"),
                    dims: vec![values.len() as u32],
                    data: as_f32(values),
                });
            }
        }
    }
    for (i, s) in model.disc.stages.iter().enumerate() {
        let w = &s.conv.weight;
        blocks.push(Block {
            name: format!("disc.{i}.weight"),
            dims: w.shape.iter().map(|&d| d as u32).collect(),
            data: as_f32(&w.data),
        });
        if let Some(bn) = &s.bn {
            for (suffix, values) in [
                ("bn.gamma", &bn.gamma),
                ("bn.beta", &bn.beta),
                ("bn.running_mean", &bn.running_mean),
                ("bn.running_var", &bn.running_var),
            ] {
                blocks.push(Block {
                    name: format!("disc.{i}.{suffix}"),
                    dims: vec![values.len() as u32],
                    data: as_f32(values),
                });
            }
        }
    }
    blocks
}

pub fn save_checkpoint<T: Scalar>(
    model: &GanModel<T>,
    cfg: &GanConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cfg.latent_dim as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cfg.base_channels as u32).to_le_bytes()).map_err(io_err)?;
    for f in [cfg.lr, cfg.beta1, cfg.beta2] {
        w.write_all(&f.to_le_bytes()).map_err(io_err)?;
    }
    for u in [cfg.batch_size as u32, cfg.epochs as u32, cfg.iterations_per_set as u32] {
        w.write_all(&u.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&cfg.seed.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cfg.checkpoint_every as u32).to_le_bytes()).map_err(io_err)?;
    for f in [model.meta.log_epsilon, model.meta.min_log, model.meta.max_log] {
        w.write_all(&f.to_le_bytes()).map_err(io_err)?;
    }
    let blocks = collect_blocks(model);
    w.write_all(&(blocks.len() as u32).to_le_bytes()).map_err(io_err)?;
    for b in &blocks {
        let name = b.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        w.write_all(&[b.dims.len() as u8]).map_err(io_err)?;
        for d in &b.dims {
            w.write_all(&d.to_le_bytes()).map_err(io_err)?;
        }
        for v in &b.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes::<2>()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes::<4>()?))
    }
}

/// Load a checkpoint saved by [`save_checkpoint`]; parameters come back in
/// f32 (convert with [`GanModel::cast`] if f64 is needed).
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GanModel<f32>, GanConfig)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let magic = r.bytes::<4>()?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, not a cyclospec checkpoint"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (supported: {VERSION})"
        )));
    }
    let latent_dim = r.u32()? as usize;
    let base_channels = r.u32()? as usize;
    let lr = r.f64()?;
    let beta1 = r.f64()?;
    let beta2 = r.f64()?;
    let batch_size = r.u32()? as usize;
    let epochs = r.u32()? as usize;
    let iterations_per_set = r.u32()? as usize;
    let seed = r.u64()?;
    let checkpoint_every = r.u32()? as usize;
    let cfg = GanConfig {
        latent_dim,
        base_channels,
        lr,
        beta1,
        beta2,
        batch_size,
        epochs,
        iterations_per_set,
        seed,
        checkpoint_every,
    };
    let meta = NormalizationMeta {
        log_epsilon: r.f64()?,
        min_log: r.f64()?,
        max_log: r.f64()?,
    };
    let mut model: GanModel<f32> = super::init_model(&cfg)?;
    model.meta = meta;
    let n_blocks = r.u32()? as usize;
    let expected = collect_blocks(&model);
    if n_blocks != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {n_blocks} blocks, model expects {}",
            expected.len()
        )));
    }
    let mut loaded: Vec<(String, Vec<u32>, Vec<f32>)> = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name_len = r.u16()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.inner
            .read_exact(&mut name_bytes)
            .map_err(|e| Error::Checkpoint(format!("truncated block name: {e}")))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("block name is not utf-8".into()))?;
        let ndim = r.bytes::<1>()?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()?);
        }
        let numel: usize = dims.iter().map(|&d| d as usize).product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f32()?);
        }
        loaded.push((name, dims, data));
    }
    for (slot, (name, dims, data)) in expected.iter().zip(&loaded) {
        if &slot.name != name || &slot.dims != dims {
            return Err(Error::Checkpoint(format!(
                "block mismatch: expected {} {:?}, found {} {:?}",
                slot.name, slot.dims, name, dims
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint(format!("block {name} has non-finite values")));
        }
    }
    // write the loaded values into the model in declaration order
    let mut it = loaded.into_iter();
    for s in &mut model.gen.stages {
        s.deconv.weight.data = it.next().unwrap().2;
        if let Some(bn) = &mut s.bn {
            bn.gamma = it.next().unwrap().2;
            bn.beta = it.next().unwrap().2;
            bn.running_mean = it.next().unwrap().2;
            bn.running_var = it.next().unwrap().2;
        }
    }
    for s in &mut model.disc.stages {
        s.conv.weight.data = it.next().unwrap().2;
        if let Some(bn) = &mut s.bn {
            bn.gamma = it.next().unwrap().2;
            bn.beta = it.next().unwrap().2;
            bn.running_mean = it.next().unwrap().2;
            bn.running_var = it.next().unwrap().2;
        }
    }
    Ok((model, cfg))
}

#[cfg(test)]
mod tests {
    use super::super::{init_model, GanConfig, GanModel};
    use super::*;

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let cfg = GanConfig {
            latent_dim: 8,
            base_channels: 4,
            batch_size: 2,
            seed: 77,
            ..GanConfig::default()
        };
        let mut model: GanModel<f32> = init_model(&cfg).unwrap();
        model.meta.min_log = -12.5;
        model.meta.max_log = 3.25;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &cfg, &path).unwrap();
        let (back, cfg_back) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg_back);
        assert_eq!(model, back);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());

        let cfg = GanConfig {
            latent_dim: 4,
            base_channels: 4,
            ..GanConfig::default()
        };
        let model: GanModel<f32> = init_model(&cfg).unwrap();
        let good = dir.path().join("good.ckpt");
        save_checkpoint(&model, &cfg, &good).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(Error::Checkpoint(_))));
    }
}
