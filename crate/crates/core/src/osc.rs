//! OSC 1.0 message codec (messages only, no bundles).
//!
//! Layout: NUL-terminated address padded to a 4-byte boundary, a type-tag
//! string starting with `,` padded the same way, then big-endian arguments.
//! Strings are NUL-terminated and padded; blobs carry an int32 length prefix
//! and are zero-padded.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("address is empty")]
    EmptyAddress,
    #[error("address {0:?} does not start with '/'")]
    AddressNoSlash(String),
    #[error("address {0:?} contains non-printable characters")]
    AddressNotPrintable(String),
    #[error("string argument contains a NUL byte")]
    NulInString,
    #[error("blob of {0} bytes does not fit an int32 length")]
    BlobTooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("buffer truncated: needed {needed} bytes at offset {offset}, {len} available")]
    Truncated {
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("non-zero padding byte at offset {0}")]
    BadPadding(usize),
    #[error("type tag string does not start with ','")]
    MissingTypeTagPrefix,
    #[error("unknown type tag {0:?}")]
    UnknownTypeTag(char),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("string at offset {0} is not valid UTF-8")]
    InvalidString(usize),
    #[error("negative blob length {0}")]
    NegativeBlobLength(i32),
    #[error("{0} trailing bytes after the last argument")]
    TrailingBytes(usize),
}

/// A typed OSC argument. Floats compare by bit pattern.
#[derive(Clone, Debug)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
    Blob(Vec<u8>),
}

impl OscArg {
    pub fn tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
            OscArg::Blob(_) => b'b',
        }
    }
}

impl PartialEq for OscArg {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (OscArg::Int(a), OscArg::Int(b)) => a == b,
            (OscArg::Float(a), OscArg::Float(b)) => a.to_bits() == b.to_bits(),
            (OscArg::Str(a), OscArg::Str(b)) => a == b,
            (OscArg::Blob(a), OscArg::Blob(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for OscArg {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        Self {
            address: address.into(),
            args,
        }
    }

    pub fn type_tags(&self) -> String {
        std::iter::once(',')
            .chain(self.args.iter().map(|a| a.tag() as char))
            .collect()
    }
}

impl fmt::Display for OscMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.address, self.type_tags())?;
        for arg in &self.args {
            match arg {
                OscArg::Int(v) => write!(f, " {v}")?,
                OscArg::Float(v) => write!(f, " {v}")?,
                OscArg::Str(v) => write!(f, " {v:?}")?,
                OscArg::Blob(v) => write!(f, " <{} bytes>", v.len())?,
            }
        }
        Ok(())
    }
}

fn padded_len(len: usize) -> usize {
    (len + 3) & !3
}

fn validate_address(address: &str) -> Result<(), EncodeError> {
    if address.is_empty() {
        return Err(EncodeError::EmptyAddress);
    }
    if !address.starts_with('/') {
        return Err(EncodeError::AddressNoSlash(address.to_owned()));
    }
    if !address.bytes().all(|b| b.is_ascii_graphic()) {
        return Err(EncodeError::AddressNotPrintable(address.to_owned()));
    }
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &[u8]) {
    out.extend_from_slice(s);
    out.resize(out.len() + padded_len(s.len() + 1) - s.len(), 0);
}

pub fn encode_osc(msg: &OscMessage) -> Result<Vec<u8>, EncodeError> {
    validate_address(&msg.address)?;
    let mut out = Vec::with_capacity(32);
    put_str(&mut out, msg.address.as_bytes());
    put_str(&mut out, msg.type_tags().as_bytes());
    for arg in &msg.args {
        match arg {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Str(s) => {
                if s.as_bytes().contains(&0) {
                    return Err(EncodeError::NulInString);
                }
                put_str(&mut out, s.as_bytes());
            }
            OscArg::Blob(b) => {
                let len = i32::try_from(b.len()).map_err(|_| EncodeError::BlobTooLarge(b.len()))?;
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(b);
                out.resize(out.len() + padded_len(b.len()) - b.len(), 0);
            }
        }
    }
    debug_assert_eq!(out.len() % 4, 0);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(DecodeError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.buf.len(),
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn word(&mut self) -> Result<[u8; 4], DecodeError> {
        let b = self.take(4)?;
        Ok([b[0], b[1], b[2], b[3]])
    }

    fn padding(&mut self, n: usize) -> Result<(), DecodeError> {
        let start = self.pos;
        let pad = self.take(n)?;
        match pad.iter().position(|&b| b != 0) {
            Some(i) => Err(DecodeError::BadPadding(start + i)),
            None => Ok(()),
        }
    }

    /// A NUL-terminated, 4-byte padded string.
    fn string(&mut self) -> Result<&'a [u8], DecodeError> {
        let start = self.pos;
        let rest = &self.buf[start..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or(DecodeError::Truncated {
                offset: start,
                needed: rest.len() + 1,
                len: self.buf.len(),
            })?;
        let body = self.take(nul)?;
        self.padding(padded_len(nul + 1) - nul)?;
        Ok(body)
    }
}

pub fn decode_osc(bytes: &[u8]) -> Result<OscMessage, DecodeError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(DecodeError::Truncated {
            offset: bytes.len() - bytes.len() % 4,
            needed: 4,
            len: bytes.len(),
        });
    }
    let mut r = Reader { buf: bytes, pos: 0 };

    let address = r.string()?;
    let address = std::str::from_utf8(address)
        .map_err(|_| DecodeError::InvalidAddress("not UTF-8".into()))?
        .to_owned();
    validate_address(&address).map_err(|e| DecodeError::InvalidAddress(e.to_string()))?;

    if r.pos == bytes.len() {
        return Err(DecodeError::Truncated {
            offset: r.pos,
            needed: 4,
            len: bytes.len(),
        });
    }
    let tags = r.string()?;
    let tags = match tags.split_first() {
        Some((b',', rest)) => rest,
        _ => return Err(DecodeError::MissingTypeTagPrefix),
    };
    if let Some(&bad) = tags
        .iter()
        .find(|t| !matches!(t, b'i' | b'f' | b's' | b'b'))
    {
        return Err(DecodeError::UnknownTypeTag(bad as char));
    }

    let mut args = Vec::with_capacity(tags.len());
    for &tag in tags {
        let arg = match tag {
            b'i' => OscArg::Int(i32::from_be_bytes(r.word()?)),
            b'f' => OscArg::Float(f32::from_be_bytes(r.word()?)),
            b's' => {
                let at = r.pos;
                let s = r.string()?;
                OscArg::Str(
                    std::str::from_utf8(s)
                        .map_err(|_| DecodeError::InvalidString(at))?
                        .to_owned(),
                )
            }
            b'b' => {
                let len = i32::from_be_bytes(r.word()?);
                let len = usize::try_from(len).map_err(|_| DecodeError::NegativeBlobLength(len))?;
                let data = r.take(len)?.to_vec();
                r.padding(padded_len(len) - len)?;
                OscArg::Blob(data)
            }
            _ => unreachable!("tags validated above"),
        };
        args.push(arg);
    }
    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(OscMessage { address, args })
}

/// Space-separated lowercase hex, one group per 32-bit word.
pub fn hex_words(bytes: &[u8]) -> String {
    bytes
        .chunks(4)
        .map(|w| w.iter().map(|b| format!("{b:02x}")).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}
