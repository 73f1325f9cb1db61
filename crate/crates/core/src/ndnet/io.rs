//! Network checkpoint layout.
//!
//! Flat binary, little-endian, versioned:
//!
//! ```text
//! magic  b"NDN1"
//! u32    format version (currently 1)
//! u32    layer count L
//! L x { u32 in_dim, u32 out_dim, u8 activation tag,
//!       u64 weight count + f64 weights (row-major out x in),
//!       u64 bias count + f64 biases }
//! ```
//!
//! Round trips are bit-exact.

use std::io::{Read, Write};

use super::{Activation, Layer, Mlp};
use crate::binio::*;
use crate::error::FrontierError;

const MAGIC: &[u8; 4] = b"NDN1";
const VERSION: u32 = 1;

pub fn save_mlp<W: Write>(w: &mut W, mlp: &Mlp) -> Result<(), FrontierError> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, mlp.layers.len() as u32)?;
    for layer in &mlp.layers {
        write_u32(w, layer.in_dim as u32)?;
        write_u32(w, layer.out_dim as u32)?;
        write_u8(w, layer.activation.tag())?;
        write_f64_slice(w, &layer.weights)?;
        write_f64_slice(w, &layer.bias)?;
    }
    Ok(())
}

pub fn load_mlp<R: Read>(r: &mut R) -> Result<Mlp, FrontierError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FrontierError::Checkpoint(format!(
            "bad network magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(FrontierError::Checkpoint(format!(
            "unsupported network format version {version}, this build reads {VERSION}"
        )));
    }
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    let mut prev_out: Option<usize> = None;
    for k in 0..n_layers {
        let in_dim = read_u32(r)? as usize;
        let out_dim = read_u32(r)? as usize;
        let tag = read_u8(r)?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| FrontierError::Checkpoint(format!("unknown activation tag {tag}")))?;
        let weights = read_f64_vec(r)?;
        let bias = read_f64_vec(r)?;
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(FrontierError::Checkpoint(format!(
                "layer {k} shape header ({in_dim}x{out_dim}) disagrees with payload"
            )));
        }
        if let Some(prev) = prev_out {
            if prev != in_dim {
                return Err(FrontierError::Checkpoint(format!(
                    "layer {k} in_dim {in_dim} does not chain from previous out_dim {prev}"
                )));
            }
        }
        prev_out = Some(out_dim);
        layers.push(Layer { weights, bias, in_dim, out_dim, activation });
    }
    if layers.is_empty() {
        return Err(FrontierError::Checkpoint("network has no layers".into()));
    }
    Ok(Mlp { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mlp = Mlp::new(&[5, 16, 3], Activation::Logistic, &mut ChaCha8Rng::seed_from_u64(3));
        let mut buf = Vec::new();
        save_mlp(&mut buf, &mlp).unwrap();
        let loaded = load_mlp(&mut buf.as_slice()).unwrap();
        assert_eq!(mlp, loaded);
    }

    #[test]
    fn rejects_wrong_magic() {
        let err = load_mlp(&mut &b"XXXX\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
