//! MLZO1: a byte-oriented LZ77 format in the LZO family.
//!
//! A stream is the 4-byte magic `MLZ1`, the original length as a little-endian
//! `u64`, then a sequence of tokens. Each token starts with a control byte `C`:
//!
//! * `C >> 4` is the literal run length. The value 15 means "15 plus the sum of
//!   the continuation bytes that follow", where continuation stops at the first
//!   byte below 255.
//! * the literal bytes follow.
//! * unless the literals complete the output, a little-endian `u16` distance and
//!   a match of `(C & 15) + 4` bytes follow, the length using the same
//!   15-extension scheme.
//!
//! The final token carries `C & 15 == 0` and no distance. Streams are only
//! decodable from offset zero.

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"MLZ1";
pub const HEADER_LEN: usize = 12;
pub const MIN_MATCH: usize = 4;
pub const MAX_DISTANCE: usize = 65_535;

const HASH_BITS: u32 = 15;
const HASH_SIZE: usize = 1 << HASH_BITS;
const HASH_MULTIPLIER: u32 = 2_654_435_761;
const EXTEND: usize = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Mlzo1Error {
    #[error("stream does not start with MLZ1 magic")]
    BadMagic,
    #[error("stream truncated at byte {0}")]
    TruncatedStream(usize),
    #[error("match distance {distance} invalid with {produced} bytes produced")]
    BadDistance { distance: usize, produced: usize },
    #[error("decoded length disagrees with header length {expected}")]
    LengthMismatch { expected: u64 },
}

/// Largest stream `compress` can emit for an input of `len` bytes.
pub fn max_compressed_len(len: usize) -> usize {
    len + len.div_ceil(255) + 16
}

#[inline]
fn hash(seq: u32) -> usize {
    (seq.wrapping_mul(HASH_MULTIPLIER) >> (32 - HASH_BITS)) as usize
}

#[inline]
fn read_u32(buf: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]])
}

/// Length of the common prefix of `input[a..]` and `input[b..]`, with `a < b`.
#[inline]
fn common_prefix(input: &[u8], a: usize, b: usize) -> usize {
    let tail = input.len() - b;
    let mut len = 0;
    while len + 8 <= tail {
        let x = u64::from_le_bytes(input[a + len..a + len + 8].try_into().unwrap());
        let y = u64::from_le_bytes(input[b + len..b + len + 8].try_into().unwrap());
        let diff = x ^ y;
        if diff != 0 {
            return len + (diff.trailing_zeros() / 8) as usize;
        }
        len += 8;
    }
    while len < tail && input[a + len] == input[b + len] {
        len += 1;
    }
    len
}

fn push_extension(out: &mut Vec<u8>, mut rest: usize) {
    while rest >= 255 {
        out.push(255);
        rest -= 255;
    }
    out.push(rest as u8);
}

fn emit_token(out: &mut Vec<u8>, literals: &[u8], matched: Option<(usize, usize)>) {
    let lit_nibble = literals.len().min(EXTEND);
    let match_code = matched.map_or(0, |(_, len)| len - MIN_MATCH);
    let match_nibble = match_code.min(EXTEND);
    out.push(((lit_nibble as u8) << 4) | match_nibble as u8);
    if literals.len() >= EXTEND {
        push_extension(out, literals.len() - EXTEND);
    }
    out.extend_from_slice(literals);
    if let Some((distance, _)) = matched {
        out.extend_from_slice(&(distance as u16).to_le_bytes());
        if match_code >= EXTEND {
            push_extension(out, match_code - EXTEND);
        }
    }
}

/// Greedy single-probe compressor. Pure: equal inputs give equal streams.
pub fn compress(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(max_compressed_len(input.len()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(input.len() as u64).to_le_bytes());

    let mut anchor = 0;
    if input.len() >= MIN_MATCH {
        // slot holds position + 1; zero marks an empty slot
        let mut table = vec![0usize; HASH_SIZE];
        let last = input.len() - MIN_MATCH;
        let mut pos = 0;
        while pos <= last {
            let seq = read_u32(input, pos);
            let slot = hash(seq);
            let candidate = table[slot];
            table[slot] = pos + 1;
            if candidate != 0 {
                let cand = candidate - 1;
                if pos - cand <= MAX_DISTANCE && read_u32(input, cand) == seq {
                    let len = MIN_MATCH + common_prefix(input, cand + MIN_MATCH, pos + MIN_MATCH);
                    emit_token(&mut out, &input[anchor..pos], Some((pos - cand, len)));
                    pos += len;
                    anchor = pos;
                    // seed the table with the tail of the match
                    if pos - 2 <= last {
                        table[hash(read_u32(input, pos - 2))] = pos - 1;
                    }
                    continue;
                }
            }
            pos += 1;
        }
    }
    emit_token(&mut out, &input[anchor..], None);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    #[inline]
    fn byte(&mut self) -> Result<u8, Mlzo1Error> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or(Mlzo1Error::TruncatedStream(self.pos))?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    fn length(&mut self, nibble: u8) -> Result<usize, Mlzo1Error> {
        let mut len = nibble as usize;
        if len == EXTEND {
            loop {
                let b = self.byte()?;
                len += b as usize;
                if b != 255 {
                    break;
                }
            }
        }
        Ok(len)
    }

    #[inline]
    fn slice(&mut self, len: usize) -> Result<&[u8], Mlzo1Error> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.buf.len())
            .ok_or(Mlzo1Error::TruncatedStream(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

const FAST: usize = 16;

pub fn decompress(stream: &[u8]) -> Result<Vec<u8>, Mlzo1Error> {
    if stream.len() < MAGIC.len() || stream[..4] != MAGIC {
        return Err(Mlzo1Error::BadMagic);
    }
    if stream.len() < HEADER_LEN {
        return Err(Mlzo1Error::TruncatedStream(stream.len()));
    }
    let expected = u64::from_le_bytes(stream[4..12].try_into().unwrap());
    let mismatch = Mlzo1Error::LengthMismatch { expected };
    let total = usize::try_from(expected).map_err(|_| mismatch.clone())?;

    // a stream byte never decodes to more than 255 output bytes
    if total > (stream.len() - HEADER_LEN).saturating_mul(256) {
        return Err(mismatch);
    }
    let mut out = vec![0u8; total];
    let mut op = 0;
    let mut rd = Reader { buf: stream, pos: HEADER_LEN };
    loop {
        let control = rd.byte()?;
        let lit_len = rd.length(control >> 4)?;
        if lit_len > total - op {
            return Err(mismatch);
        }
        // Short runs copy a fixed 16 bytes; the surplus lands past `op` and is
        // overwritten by later tokens.
        if lit_len <= FAST && op + FAST <= total && rd.pos + FAST <= stream.len() {
            out[op..op + FAST].copy_from_slice(&stream[rd.pos..rd.pos + FAST]);
            rd.pos += lit_len;
        } else {
            out[op..op + lit_len].copy_from_slice(rd.slice(lit_len)?);
        }
        op += lit_len;
        if op == total {
            if control & 0x0f != 0 || rd.pos != stream.len() {
                return Err(mismatch);
            }
            return Ok(out);
        }

        let lo = rd.byte()?;
        let hi = rd.byte()?;
        let distance = u16::from_le_bytes([lo, hi]) as usize;
        if distance == 0 || distance > op {
            return Err(Mlzo1Error::BadDistance { distance, produced: op });
        }
        let match_len = rd.length(control & 0x0f)? + MIN_MATCH;
        if match_len > total - op {
            return Err(mismatch);
        }
        let start = op - distance;
        if distance >= FAST && match_len <= FAST && op + FAST <= total {
            out.copy_within(start..start + FAST, op);
            op += match_len;
            continue;
        }
        let mut remaining = match_len;
        // overlapping copies replicate the period; each pass doubles the window
        while remaining > 0 {
            let chunk = remaining.min(op - start);
            out.copy_within(start..start + chunk, op);
            op += chunk;
            remaining -= chunk;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(len: u64, tokens: &[u8]) -> Vec<u8> {
        let mut s = MAGIC.to_vec();
        s.extend_from_slice(&len.to_le_bytes());
        s.extend_from_slice(tokens);
        s
    }

    #[test]
    fn empty_input_is_header_plus_one_token() {
        assert_eq!(compress(b""), stream(0, &[0x00]));
        assert_eq!(decompress(&stream(0, &[0x00])).unwrap(), b"");
    }

    #[test]
    fn hand_assembled_overlapping_match() {
        // literals "ab", then distance 2 length 6, then an empty final token
        let s = stream(8, &[0x22, b'a', b'b', 0x02, 0x00, 0x00]);
        assert_eq!(decompress(&s).unwrap(), b"abababab");
    }

    #[test]
    fn zero_distance_is_rejected() {
        let s = stream(8, &[0x22, b'a', b'b', 0x00, 0x00, 0x00]);
        assert_eq!(
            decompress(&s),
            Err(Mlzo1Error::BadDistance { distance: 0, produced: 2 })
        );
    }

    #[test]
    fn distance_past_start_is_rejected() {
        let s = stream(8, &[0x22, b'a', b'b', 0x03, 0x00, 0x00]);
        assert!(matches!(decompress(&s), Err(Mlzo1Error::BadDistance { distance: 3, .. })));
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert_eq!(decompress(b"LZ4!\0\0\0\0\0\0\0\0\0"), Err(Mlzo1Error::BadMagic));
        assert_eq!(decompress(b"ML"), Err(Mlzo1Error::BadMagic));
        assert!(matches!(decompress(b"MLZ1\x05\0\0"), Err(Mlzo1Error::TruncatedStream(_))));
        let full = compress(b"hello hello hello hello");
        for cut in HEADER_LEN..full.len() {
            assert!(decompress(&full[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn header_length_must_match() {
        let mut s = compress(b"abcdefgh");
        s[4] = 9;
        assert!(matches!(decompress(&s), Err(Mlzo1Error::TruncatedStream(_))));
        s[4] = 7;
        assert_eq!(decompress(&s), Err(Mlzo1Error::LengthMismatch { expected: 7 }));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut s = compress(b"abc");
        s.push(0);
        assert_eq!(decompress(&s), Err(Mlzo1Error::LengthMismatch { expected: 3 }));
    }

    #[test]
    fn repeated_pair_compresses_to_a_few_tokens() {
        let input: Vec<u8> = b"ab".iter().copied().cycle().take(4096).collect();
        let out = compress(&input);
        // header 12, token 1 + "ab" 2 + distance 2 + 16 extension bytes, final token 1
        assert_eq!(out.len(), 34);
        assert_eq!(decompress(&out).unwrap(), input);
    }

    #[test]
    fn long_literal_runs_use_extension_bytes() {
        let input: Vec<u8> = (0..=255u8).collect();
        let out = compress(&input);
        // 256 literals: nibble 15, extension 241, no 255 bytes
        assert_eq!(out[HEADER_LEN], 0xf0);
        assert_eq!(out[HEADER_LEN + 1], 241);
        assert_eq!(out.len(), HEADER_LEN + 2 + 256);
        assert_eq!(decompress(&out).unwrap(), input);
    }

    #[test]
    fn matches_respect_window() {
        let mut input = b"0123456789abcdef".to_vec();
        input.extend(std::iter::repeat_n(b'x', MAX_DISTANCE));
        input.extend_from_slice(b"0123456789abcdef");
        let out = compress(&input);
        assert_eq!(decompress(&out).unwrap(), input);
    }
}
