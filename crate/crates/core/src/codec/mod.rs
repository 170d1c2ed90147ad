//! Named block codecs: the MLZO1 LZ codec, gzip, and the identity codec.

pub mod gz;
pub mod mlzo1;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

pub use mlzo1::Mlzo1Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("mlzo1: {0}")]
    Mlzo1(#[from] Mlzo1Error),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("unknown codec '{0}'")]
    UnknownCodec(String),
}

/// A stateless compress/decompress pair registered under a name.
pub trait Codec: Send + Sync {
    fn name(&self) -> &str;

    fn version(&self) -> &str {
        "1"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8>;

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError>;
}

pub struct IdentityCodec;

impl Codec for IdentityCodec {
    fn name(&self) -> &str {
        "none"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8> {
        input.to_vec()
    }

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError> {
        Ok(input.to_vec())
    }
}

pub struct LzoCodec;

impl Codec for LzoCodec {
    fn name(&self) -> &str {
        "lzo"
    }

    fn version(&self) -> &str {
        "mlzo1"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8> {
        mlzo1::compress(input)
    }

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError> {
        Ok(mlzo1::decompress(input)?)
    }
}

pub struct GzCodec;

impl Codec for GzCodec {
    fn name(&self) -> &str {
        "gz"
    }

    fn version(&self) -> &str {
        "rfc1952-deflate6"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8> {
        gz::compress(input)
    }

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError> {
        gz::decompress(input)
    }
}

/// Name → codec table. Unregistered names fail closed.
#[derive(Default)]
pub struct CodecRegistry {
    codecs: RwLock<BTreeMap<String, Arc<dyn Codec>>>,
}

impl CodecRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `none`, `lzo` and `gz`.
    pub fn with_defaults() -> Self {
        let reg = Self::empty();
        reg.register(Arc::new(IdentityCodec));
        reg.register(Arc::new(LzoCodec));
        reg.register(Arc::new(GzCodec));
        reg
    }

    pub fn register(&self, codec: Arc<dyn Codec>) {
        self.codecs.write().insert(codec.name().to_string(), codec);
    }

    pub fn deregister(&self, name: &str) -> Option<Arc<dyn Codec>> {
        self.codecs.write().remove(name)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Codec>, CodecError> {
        self.codecs
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| CodecError::UnknownCodec(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.codecs.read().contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.codecs.read().keys().cloned().collect()
    }
}

/// Compress then decompress `probe`, failing unless the bytes come back intact.
pub fn self_test(codec: &dyn Codec, probe: &[u8]) -> Result<(), CodecError> {
    let restored = codec.decompress(&codec.compress(probe))?;
    if restored != probe {
        return Err(CodecError::CorruptStream(format!(
            "{} round trip altered the probe",
            codec.name()
        )));
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CompressionTestError {
    #[error("Could not load codec '{0}': not registered")]
    UnknownCodec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("codec '{codec}' failed: {source}")]
    Codec {
        codec: String,
        #[source]
        source: CodecError,
    },
    #[error("codec '{0}' round trip produced different bytes")]
    MismatchAfterRoundTrip(String),
}

/// Round-trips a local file through a named codec, writing diagnostics and a
/// final `SUCCESS` line to `out`. Accepts `file://` URLs.
pub fn compression_test(
    registry: &CodecRegistry,
    location: &str,
    codec_name: &str,
    out: &mut dyn Write,
) -> Result<(), CompressionTestError> {
    let path = location.strip_prefix("file://").unwrap_or(location);
    let codec = registry
        .get(codec_name)
        .map_err(|_| CompressionTestError::UnknownCodec(codec_name.to_string()))?;
    let data = std::fs::read(Path::new(path)).map_err(|source| CompressionTestError::Io {
        path: path.to_string(),
        source,
    })?;
    let _ = writeln!(out, "INFO codec: loaded '{}' (version {})", codec.name(), codec.version());
    let compressed = codec.compress(&data);
    let _ = writeln!(
        out,
        "INFO codec: compressed {} bytes to {} bytes",
        data.len(),
        compressed.len()
    );
    let restored = codec
        .decompress(&compressed)
        .map_err(|source| CompressionTestError::Codec {
            codec: codec_name.to_string(),
            source,
        })?;
    if restored != data {
        return Err(CompressionTestError::MismatchAfterRoundTrip(codec_name.to_string()));
    }
    let _ = writeln!(out, "INFO codec: decompressed {} bytes", restored.len());
    let _ = writeln!(out, "SUCCESS");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_registered() {
        let reg = CodecRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["gz", "lzo", "none"]);
        for name in reg.names() {
            self_test(reg.get(&name).unwrap().as_ref(), b"probe probe probe").unwrap();
        }
    }

    #[test]
    fn unregistered_fails_closed() {
        let reg = CodecRegistry::with_defaults();
        assert_eq!(
            reg.get("snappy").err(),
            Some(CodecError::UnknownCodec("snappy".into()))
        );
        reg.deregister("lzo");
        assert!(reg.get("lzo").is_err());
    }

    #[test]
    fn compression_test_reports_success() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data2.txt");
        std::fs::write(&path, b"some text some text some text").unwrap();
        let reg = CodecRegistry::with_defaults();
        for codec in ["lzo", "gz", "none"] {
            let mut out = Vec::new();
            let url = format!("file://{}", path.display());
            compression_test(&reg, &url, codec, &mut out).unwrap();
            let text = String::from_utf8(out).unwrap();
            assert_eq!(text.lines().last(), Some("SUCCESS"));
        }
        let mut out = Vec::new();
        let err = compression_test(&reg, path.to_str().unwrap(), "snappy", &mut out).unwrap_err();
        assert!(matches!(err, CompressionTestError::UnknownCodec(ref c) if c == "snappy"));
        assert!(err.to_string().contains("snappy"));
    }

    struct Lossy;

    impl Codec for Lossy {
        fn name(&self) -> &str {
            "lossy"
        }
        fn compress(&self, input: &[u8]) -> Vec<u8> {
            input[..input.len() / 2].to_vec()
        }
        fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError> {
            Ok(input.to_vec())
        }
    }

    #[test]
    fn mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, b"0123456789").unwrap();
        let reg = CodecRegistry::empty();
        reg.register(Arc::new(Lossy));
        let err = compression_test(&reg, path.to_str().unwrap(), "lossy", &mut Vec::new()).unwrap_err();
        assert!(matches!(err, CompressionTestError::MismatchAfterRoundTrip(_)));
        assert!(self_test(&Lossy, b"abcd").is_err());
    }
}
