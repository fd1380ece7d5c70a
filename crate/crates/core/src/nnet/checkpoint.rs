//! Flat binary parameter checkpoints.
//!
//! Layout: the 8 magic bytes `PDLABCK1`, a little-endian `u32` descriptor
//! length, the UTF-8 architecture descriptor, a little-endian `u64`
//! parameter count, then every parameter in storage order as a
//! little-endian `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::arch::ArchitectureSpec;
use super::network::Network;

pub const MAGIC: &[u8; 8] = b"PDLABCK1";

pub fn encode<S: Scalar>(net: &Network<S>) -> Vec<u8> {
    let desc = net.spec().descriptor();
    let mut out = Vec::with_capacity(8 + 4 + desc.len() + 8 + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.wide().to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn decode<S: Scalar>(mut bytes: &[u8]) -> Result<Network<S>> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let len = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes")) as usize;
    let desc = std::str::from_utf8(take(&mut bytes, len)?)
        .map_err(|_| Error::Checkpoint("descriptor is not UTF-8".into()))?;
    let spec = ArchitectureSpec::parse_descriptor(desc)?;
    let count = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    if bytes.len() != count * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Network::from_params(spec, params)
}

pub fn save<S: Scalar>(net: &Network<S>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load<S: Scalar>(path: &Path) -> Result<Network<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, ArchKind};
    use crate::rng::stream;

    #[test]
    fn header_layout() {
        let net = Network::<f64>::zeros(ArchitectureSpec::linear()).unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..8], MAGIC);
        let desc = "linear;identity";
        assert_eq!(&bytes[8..12], &(desc.len() as u32).to_le_bytes());
        assert_eq!(&bytes[12..12 + desc.len()], desc.as_bytes());
        assert_eq!(bytes.len(), 12 + desc.len() + 8 + 33 * 8);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec =
            ArchitectureSpec::new(ArchKind::wide(), Activation::smelu(0.75).unwrap()).unwrap();
        let net = Network::<f64>::init(spec, &mut stream(2)).unwrap();
        let back: Network<f64> = decode(&encode(&net)).unwrap();
        assert_eq!(net, back);
        let single: Network<f32> = net.cast();
        assert_eq!(decode::<f32>(&encode(&single)).unwrap(), single);
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::<f64>::zeros(ArchitectureSpec::linear()).unwrap();
        let mut bytes = encode(&net);
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode::<f64>(&bytes).is_err());
    }
}
