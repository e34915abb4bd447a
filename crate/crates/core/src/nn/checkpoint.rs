//! Checkpoint format (see `docs/formats.md` for the byte-exact layout).
//!
//! Header: magic `PCMK`, format version, mode, training seed, input
//! dimension, hidden sizes and activations, and in mask mode the
//! threshold plus the bit vector. Body: every parameter tensor in
//! declared order (input kernel first in pre-mask mode, then hidden
//! layers, then output; weights row-major before bias), little-endian
//! 64-bit reals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::masking::BinaryMask;
use crate::matrix::Matrix;
use crate::nn::{Activation, DenseLayer, Mode, Network, NnError};

const MAGIC: &[u8; 4] = b"PCMK";
const FORMAT_VERSION: u32 = 1;

/// Header fields that are not part of the network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub seed: u64,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    Ok(read_exact::<_, 1>(r)?[0])
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

fn write_activation<W: Write>(w: &mut W, act: Activation) -> std::io::Result<()> {
    match act {
        Activation::Linear => {
            w.write_all(&[0])?;
            write_f64(w, 0.0)
        }
        Activation::LeakyRelu { slope } => {
            w.write_all(&[1])?;
            write_f64(w, slope)
        }
    }
}

fn read_activation<R: Read>(r: &mut R) -> Result<Activation, NnError> {
    let tag = read_u8(r)?;
    let slope = read_f64(r)?;
    match tag {
        0 => Ok(Activation::Linear),
        1 => Ok(Activation::LeakyRelu { slope }),
        other => Err(NnError::CheckpointFormat(format!(
            "unknown activation tag {other}"
        ))),
    }
}

fn write_layer_params<W: Write>(w: &mut W, layer: &DenseLayer) -> std::io::Result<()> {
    for &v in layer.weights().values() {
        write_f64(w, v)?;
    }
    for &v in layer.bias() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_layer_params<R: Read>(
    r: &mut R,
    out_dim: usize,
    in_dim: usize,
    activation: Activation,
) -> Result<DenseLayer, NnError> {
    let mut values = vec![0.0; out_dim * in_dim];
    for v in &mut values {
        *v = read_f64(r)?;
    }
    let mut bias = vec![0.0; out_dim];
    for b in &mut bias {
        *b = read_f64(r)?;
    }
    let weights = Matrix::from_values(out_dim, in_dim, values)
        .map_err(|e| NnError::CheckpointFormat(format!("weight tensor: {e}")))?;
    DenseLayer::new(weights, bias, activation)
}

/// Write `net` (plus the seed it was trained with) to `path`.
pub fn save_checkpoint(path: &Path, net: &Network, seed: u64) -> Result<(), NnError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(&[match net.mode() {
        Mode::PreMask => 0u8,
        Mode::Mask => 1u8,
    }])?;
    write_u64(&mut w, seed)?;
    write_u32(&mut w, net.input_dim() as u32)?;
    write_u32(&mut w, net.hidden_layers().len() as u32)?;
    for layer in net.hidden_layers() {
        write_u32(&mut w, layer.out_dim() as u32)?;
    }
    for layer in net.hidden_layers() {
        write_activation(&mut w, layer.activation())?;
    }
    if let Some(mask) = net.mask() {
        write_f64(&mut w, mask.threshold())?;
        for &bit in mask.bits() {
            w.write_all(&[bit as u8])?;
        }
    }
    for layer in net.stage_layers() {
        write_layer_params(&mut w, layer)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back. Validates magic, version, activation tags,
/// and finiteness of every parameter.
pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta), NnError> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let magic = read_exact::<_, 4>(&mut r)?;
    if &magic != MAGIC {
        return Err(NnError::CheckpointFormat(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let format_version = read_u32(&mut r)?;
    if format_version != FORMAT_VERSION {
        return Err(NnError::CheckpointFormat(format!(
            "unsupported format version {format_version}"
        )));
    }
    let mode = match read_u8(&mut r)? {
        0 => Mode::PreMask,
        1 => Mode::Mask,
        other => {
            return Err(NnError::CheckpointFormat(format!(
                "unknown mode byte {other}"
            )))
        }
    };
    let seed = read_u64(&mut r)?;
    let d = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    let mut sizes = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        sizes.push(read_u32(&mut r)? as usize);
    }
    let mut activations = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        activations.push(read_activation(&mut r)?);
    }
    let mask = if mode == Mode::Mask {
        let threshold = read_f64(&mut r)?;
        let mut bits = Vec::with_capacity(d);
        for _ in 0..d {
            bits.push(match read_u8(&mut r)? {
                0 => false,
                1 => true,
                other => {
                    return Err(NnError::CheckpointFormat(format!(
                        "mask bit byte {other} is not 0 or 1"
                    )))
                }
            });
        }
        Some(BinaryMask::new(bits, threshold))
    } else {
        None
    };

    let kernel = if mode == Mode::PreMask {
        Some(read_layer_params(&mut r, d, d, Activation::Linear)?)
    } else {
        None
    };
    let mut hidden = Vec::with_capacity(n_hidden);
    let mut width = d;
    for (i, &size) in sizes.iter().enumerate() {
        hidden.push(read_layer_params(&mut r, size, width, activations[i])?);
        width = size;
    }
    let output = read_layer_params(&mut r, 1, width, Activation::Linear)?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NnError::CheckpointFormat(
            "trailing bytes after parameter block".into(),
        ));
    }

    let net = match mode {
        Mode::PreMask => {
            Network::from_premask_parts(kernel.expect("read above"), hidden, output)?
        }
        Mode::Mask => Network::from_mask_parts(mask.expect("read above"), hidden, output)?,
    };
    Ok((
        net,
        CheckpointMeta {
            format_version,
            seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkArch;

    #[test]
    fn premask_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Network::premask(6, &NetworkArch::new(vec![7, 5], 0.3), 42).unwrap();
        save_checkpoint(&path, &net, 42).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(meta.seed, 42);
        assert_eq!(meta.format_version, 1);
    }

    #[test]
    fn mask_round_trip_preserves_bits_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Network::premask(4, &NetworkArch::new(vec![5], 0.3), 1).unwrap();
        let mask = BinaryMask::new(vec![true, false, false, true], 0.125);
        let masked = net.to_mask_mode(mask).unwrap();
        save_checkpoint(&path, &masked, 7).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, masked);
        assert_eq!(meta.seed, 7);
        assert_eq!(loaded.mask().unwrap().threshold(), 0.125);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(NnError::CheckpointFormat(_))
        ));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Network::premask(4, &NetworkArch::new(vec![4], 0.3), 3).unwrap();
        save_checkpoint(&path, &net, 3).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
