//! Checkpoint container.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"FRIDUCKP"
//! 8       4     format version (currently 1), u32
//! 12      8     metadata length L, u64
//! 20      L     metadata, UTF-8 JSON (CheckpointMeta)
//! 20+L    ...   payload: raw f32 values, little-endian, concatenated in
//!               the exact order of `meta.tensors`
//! ```
//!
//! The tensor list names every parameter four times: live weights
//! (`param/...`), EMA weights (`ema/...`), and Adam moments
//! (`adam_m/...`, `adam_v/...`), each in the network's canonical
//! parameter-visit order. Writes go to a temp file in the target directory
//! followed by an atomic rename.

use super::train::{TrainConfig, Trainer};
use super::unet::{DenoiserNetwork, UNetConfig};
use super::{DatasetScale, EDMConfig};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"FRIDUCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub edm: EDMConfig,
    pub unet: UNetConfig,
    pub train: TrainConfig,
    pub scale: DatasetScale,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn save(trainer: &mut Trainer, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<f32> = Vec::new();
    {
        let mut push = |name: String, values: &[f32]| {
            tensors.push(TensorEntry {
                name,
                len: values.len(),
            });
            payload.extend_from_slice(values);
        };
        let mut order = Vec::new();
        trainer.net.visit_params(&mut |name, p| order.push((name.to_string(), p.value.clone())));
        for (name, values) in &order {
            push(format!("param/{name}"), values);
        }
        for ((name, _), ema) in order.iter().zip(&trainer.ema) {
            push(format!("ema/{name}"), ema);
        }
        for ((name, _), m) in order.iter().zip(&trainer.adam_m) {
            push(format!("adam_m/{name}"), m);
        }
        for ((name, _), v) in order.iter().zip(&trainer.adam_v) {
            push(format!("adam_v/{name}"), v);
        }
    }
    let meta = CheckpointMeta {
        edm: trainer.edm.clone(),
        unet: trainer.net.config.clone(),
        train: trainer.cfg.clone(),
        scale: trainer.scale,
        step: trainer.step,
        tensors,
    };
    let meta_json = serde_json::to_vec(&meta).map_err(|e| Error::Io(std::io::Error::other(e)))?;

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(meta_json.len() as u64).to_le_bytes())?;
        f.write_all(&meta_json)?;
        let mut bytes = Vec::with_capacity(payload.len() * 4);
        for v in &payload {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Trainer> {
    let mut f = std::fs::File::open(path)?;
    let mut header = [0u8; 20];
    f.read_exact(&mut header)
        .map_err(|_| Error::Parse(format!("{} is not a checkpoint: truncated header", path.display())))?;
    if &header[0..8] != MAGIC {
        return Err(Error::Parse(format!("{} is not a checkpoint: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    let mut meta_json = vec![0u8; meta_len];
    f.read_exact(&mut meta_json)
        .map_err(|_| Error::Parse("checkpoint truncated in metadata".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&meta_json).map_err(|e| Error::Parse(format!("bad checkpoint metadata: {e}")))?;

    let total: usize = meta.tensors.iter().map(|t| t.len).sum();
    let mut bytes = vec![0u8; total * 4];
    f.read_exact(&mut bytes)
        .map_err(|_| Error::Parse("checkpoint truncated in payload".into()))?;
    let mut values = Vec::with_capacity(total);
    for chunk in bytes.chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }

    // rebuild the trainer and pour tensors back in canonical order
    let mut net = DenoiserNetwork::new(meta.unet.clone(), meta.train.seed);
    let mut param_names = Vec::new();
    net.visit_params(&mut |name, p| param_names.push((name.to_string(), p.value.len())));

    let expected: Vec<(String, usize)> = ["param", "ema", "adam_m", "adam_v"]
        .iter()
        .flat_map(|prefix| {
            param_names
                .iter()
                .map(move |(name, len)| (format!("{prefix}/{name}"), *len))
        })
        .collect();
    if expected.len() != meta.tensors.len()
        || expected
            .iter()
            .zip(&meta.tensors)
            .any(|((en, el), t)| *en != t.name || *el != t.len)
    {
        return Err(Error::Parse("checkpoint tensor manifest does not match the architecture".into()));
    }

    let mut offset = 0usize;
    let mut take = |len: usize| {
        let v = values[offset..offset + len].to_vec();
        offset += len;
        v
    };
    let mut params = Vec::new();
    for (_, len) in &param_names {
        params.push(take(*len));
    }
    let mut ema = Vec::new();
    for (_, len) in &param_names {
        ema.push(take(*len));
    }
    let mut adam_m = Vec::new();
    for (_, len) in &param_names {
        adam_m.push(take(*len));
    }
    let mut adam_v = Vec::new();
    for (_, len) in &param_names {
        adam_v.push(take(*len));
    }

    let mut idx = 0;
    net.visit_params(&mut |_, p| {
        p.value.copy_from_slice(&params[idx]);
        idx += 1;
    });

    Ok(Trainer {
        net,
        edm: meta.edm,
        cfg: meta.train,
        scale: meta.scale,
        step: meta.step,
        ema,
        adam_m,
        adam_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::train::Trainer;
    use crate::diffusion::{dataset_scale, randn_matrix, TrainingExample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vec<TrainingExample>, Trainer) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = randn_matrix(&mut rng, 8, 8);
        let init = &gt + randn_matrix(&mut rng, 8, 8) * 0.2;
        let scale = dataset_scale(std::slice::from_ref(&gt), 0.5).unwrap();
        let examples = vec![TrainingExample::new_scaled("p", &init, &gt, &scale).unwrap()];
        let unet = UNetConfig {
            model_channels: 4,
            channel_mult: vec![1, 2],
            num_blocks: 1,
            ..Default::default()
        };
        let edm = EDMConfig {
            image_size: 8,
            ..Default::default()
        };
        let cfg = TrainConfig {
            batch_size: 2,
            total_steps: 100,
            seed: 11,
            probe_interval: 0,
            ..Default::default()
        };
        (examples, Trainer::new(unet, edm, cfg, scale))
    }

    #[test]
    fn save_load_roundtrip_preserves_everything() {
        let (examples, mut trainer) = setup();
        for _ in 0..7 {
            trainer.train_step(&examples).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&mut trainer, &path).unwrap();
        let mut loaded = load(&path).unwrap();
        assert_eq!(loaded.step, 7);
        assert_eq!(loaded.scale, trainer.scale);

        let mut wa = Vec::new();
        trainer.net.visit_params(&mut |_, p| wa.push(p.value.clone()));
        let mut wb = Vec::new();
        loaded.net.visit_params(&mut |_, p| wb.push(p.value.clone()));
        assert_eq!(wa, wb);
        assert_eq!(trainer.ema, loaded.ema);
        assert_eq!(trainer.adam_m, loaded.adam_m);
        assert_eq!(trainer.adam_v, loaded.adam_v);
    }

    #[test]
    fn resume_from_checkpoint_matches_uninterrupted_run() {
        let (examples, mut reference) = setup();
        let mut fresh_losses = Vec::new();
        for _ in 0..10 {
            fresh_losses.push(reference.train_step(&examples).unwrap());
        }

        let (_, mut first_half) = setup();
        for _ in 0..5 {
            first_half.train_step(&examples).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        save(&mut first_half, &path).unwrap();
        let mut resumed = load(&path).unwrap();
        let mut resumed_losses = Vec::new();
        for _ in 5..10 {
            resumed_losses.push(resumed.train_step(&examples).unwrap());
        }
        assert_eq!(&fresh_losses[5..], resumed_losses.as_slice());
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPT............").unwrap();
        assert!(matches!(load(&path), Err(Error::Parse(_))));
    }
}
