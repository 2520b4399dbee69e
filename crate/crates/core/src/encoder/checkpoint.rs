//! Binary parameter checkpoints.
//!
//! Layout: the 8 bytes `IDMRENC1`; four little-endian `u32` dims
//! (`image_dim`, `text_dim`, `hidden_dim`, `embed_dim`); then `w1`, `b1`,
//! `w2`, `b2` as row-major little-endian `f64`.

use std::path::Path;

use crate::encoder::model::EncoderParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IDMRENC1";
const HEADER_LEN: usize = 8 + 4 * 4;

pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + params.num_params() * 8);
    out.extend_from_slice(MAGIC);
    for d in [params.image_dim, params.text_dim, params.hidden_dim, params.embed_dim] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for block in params.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Format("not an encoder checkpoint (bad magic)".into()));
    }
    let dim = |i: usize| {
        let o = 8 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
    };
    let mut params = EncoderParams::zeros(dim(0), dim(1), dim(2), dim(3));
    let expected = HEADER_LEN + params.num_params() * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint length {} does not match {} expected from its dims",
            bytes.len(),
            expected
        )));
    }
    let mut chunks = bytes[HEADER_LEN..].chunks_exact(8);
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = EncoderParams::init(3, 2, 4, 3, &mut rng);
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..8], b"IDMRENC1");
        assert_eq!(bytes.len(), 24 + 8 * p.num_params());
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = EncoderParams::zeros(1, 1, 1, 1);
        let mut bytes = encode_checkpoint(&p);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    }
}
