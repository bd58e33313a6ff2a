//! Checkpoint format: an ASCII header line `GRBASNET v1`, then per parameter a
//! line `param <name> <d0>x<d1>... <count>` followed by `count` little-endian
//! f32 values, then `end`. Training metadata goes to a `<path>.meta` sidecar
//! of `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::features::FeatureStats;
use crate::nn::Tensor;
use crate::Scalar;

use super::{GrbasNet, NetError};

const MAGIC: &str = "GRBASNET v1";

/// Everything besides weights that a trained model needs at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub stats: FeatureStats,
}

fn err(path: &Path, reason: impl Into<String>) -> NetError {
    NetError::Checkpoint { path: path.display().to_string(), reason: reason.into() }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &GrbasNet<T>, meta: &CheckpointMeta) -> Result<(), NetError> {
    let mut buf = Vec::new();
    writeln!(buf, "{MAGIC}").unwrap();
    for (name, t) in net.named_params() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(buf, "param {name} {} {}", dims.join("x"), t.len()).unwrap();
        for v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        buf.push(b'\n');
    }
    writeln!(buf, "end").unwrap();
    fs::write(path, buf).map_err(|e| err(path, e.to_string()))?;

    let sidecar = format!(
        "seed={}\nepoch={}\nfeature_mean={:?}\nfeature_std={:?}\nparams={}\n",
        meta.seed,
        meta.epoch,
        meta.stats.mean,
        meta.stats.std,
        net.param_count()
    );
    let mp = meta_path(path);
    fs::write(&mp, sidecar).map_err(|e| err(&mp, e.to_string()))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(GrbasNet<T>, CheckpointMeta), NetError> {
    let file = fs::File::open(path).map_err(|e| err(path, e.to_string()))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<fs::File>| -> Result<String, NetError> {
        line.clear();
        r.read_line(&mut line).map_err(|e| err(path, e.to_string()))?;
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut r)? != MAGIC {
        return Err(err(path, format!("missing {MAGIC:?} header")));
    }

    let mut tensors = BTreeMap::new();
    loop {
        let header = next_line(&mut r)?;
        if header == "end" {
            break;
        }
        let fields: Vec<&str> = header.split(' ').collect();
        let [tag, name, dims, count] = fields[..] else {
            return Err(err(path, format!("bad parameter header {header:?}")));
        };
        if tag != "param" {
            return Err(err(path, format!("bad parameter header {header:?}")));
        }
        let shape: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| err(path, format!("bad dims {dims:?} for {name}")))?;
        let count: usize = count.parse().map_err(|_| err(path, format!("bad count for {name}")))?;
        if shape.iter().product::<usize>() != count {
            return Err(err(path, format!("dims {dims} do not match count {count} for {name}")));
        }
        let mut bytes = vec![0u8; count * 4 + 1];
        r.read_exact(&mut bytes).map_err(|_| err(path, format!("truncated data for {name}")))?;
        if bytes[count * 4] != b'\n' {
            return Err(err(path, format!("missing terminator after {name}")));
        }
        let data = bytes[..count * 4]
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        tensors.insert(name.to_string(), Tensor::from_parts(shape, data));
    }

    let mut net = GrbasNet::<T>::init(0);
    let names: Vec<(String, Vec<usize>)> =
        net.named_params().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    if tensors.len() != names.len() {
        return Err(err(path, format!("expected {} parameters, found {}", names.len(), tensors.len())));
    }
    for ((name, shape), slot) in names.into_iter().zip(net.params_mut()) {
        let t = tensors.remove(&name).ok_or_else(|| err(path, format!("missing parameter {name}")))?;
        if t.shape() != shape.as_slice() {
            return Err(err(path, format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
        }
        *slot = t;
    }

    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| err(&mp, e.to_string()))?;
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| err(&mp, format!("missing key {k}")));
    let bad = |k: &str| err(&mp, format!("bad value for {k}"));
    let meta = CheckpointMeta {
        seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
        epoch: get("epoch")?.parse().map_err(|_| bad("epoch"))?,
        stats: FeatureStats::new(
            get("feature_mean")?.parse().map_err(|_| bad("feature_mean"))?,
            get("feature_std")?.parse().map_err(|_| bad("feature_std"))?,
        )
        .map_err(|e| err(&mp, e.to_string()))?,
    };
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta { seed: 42, epoch: 17, stats: FeatureStats::new(-3.25, 0.123456789).unwrap() }
    }

    #[test]
    fn round_trip_is_exact_in_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = GrbasNet::<f32>::init(5);
        save_checkpoint(&path, &net, &meta()).unwrap();
        let (back, m) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(m, meta());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &GrbasNet::<f32>::init(5), &meta()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
        fs::write(&path, b"NOTANET\n").unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
    }
}
