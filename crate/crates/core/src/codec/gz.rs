//! gzip (RFC 1952) members over flate2's DEFLATE implementation.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::CodecError;

pub fn compress(input: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::with_capacity(input.len() / 3 + 64), Compression::default());
    enc.write_all(input).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn decompress(stream: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut dec = GzDecoder::new(stream);
    let mut out = Vec::with_capacity(stream.len() * 4);
    dec.read_to_end(&mut out)
        .map_err(|e| CodecError::CorruptStream(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = b"hello hello hello gzip".repeat(50);
        assert_eq!(decompress(&compress(&data)).unwrap(), data);
        assert_eq!(decompress(&compress(b"")).unwrap(), b"");
    }

    #[test]
    fn header_is_gzip() {
        let out = compress(b"hello");
        assert_eq!(&out[..3], &[0x1f, 0x8b, 0x08]);
    }

    #[test]
    fn flipped_crc_is_corrupt() {
        let mut out = compress(b"hello");
        let crc_at = out.len() - 8;
        out[crc_at] ^= 0xff;
        assert!(matches!(decompress(&out), Err(CodecError::CorruptStream(_))));
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(decompress(b"not gzip at all"), Err(CodecError::CorruptStream(_))));
    }
}
