//! A single-process Hadoop-style stack: a write-once block filesystem, a
//! MapReduce engine, a column-family table store with per-family compression,
//! an LZO-family codec, a compression benchmark and a read-only status server.

pub mod clock;
pub mod codec;
pub mod config;
pub mod blockfs;
pub mod mrengine;
pub mod kvtable;
pub mod bench;
pub mod statusd;
pub mod cluster;
