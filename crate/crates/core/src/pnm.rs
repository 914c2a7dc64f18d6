//! Binary Netpbm frames: grayscale PGM (P5) and color PPM (P6), 8-bit only.
//!
//! Headers are parsed leniently (arbitrary whitespace and `#` comments), but the
//! raster must be exactly `width * height * channels` bytes and `maxval` must be
//! 255. Writers always emit the canonical header `P5\n<w> <h>\n255\n`, so a
//! write/read/write cycle is byte-stable.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("unsupported magic number {0:?} (expected P5 or P6)")]
    BadMagic(String),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("invalid header field {field}: {value:?}")]
    BadHeaderField { field: &'static str, value: String },
    #[error("maxval must be 255, found {0}")]
    UnsupportedMaxval(u32),
    #[error("zero-sized frame ({width}x{height})")]
    ZeroSized { width: usize, height: usize },
    #[error("raster holds {found} bytes, expected {expected}")]
    RasterLength { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Samples per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }

    fn magic(self) -> &'static [u8; 2] {
        match self {
            Channels::Gray => b"P5",
            Channels::Rgb => b"P6",
        }
    }

    /// Conventional file extension for this channel layout.
    pub fn extension(self) -> &'static str {
        match self {
            Channels::Gray => "pgm",
            Channels::Rgb => "ppm",
        }
    }
}

/// A raw 8-bit screen capture, row-major, channels interleaved.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: Channels, data: Vec<u8>) -> Result<Self, PnmError> {
        if width == 0 || height == 0 {
            return Err(PnmError::ZeroSized { width, height });
        }
        let expected = width * height * channels.count();
        if data.len() != expected {
            return Err(PnmError::RasterLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PnmError> {
        Self::new(width, height, Channels::Gray, data)
    }

    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PnmError> {
        Self::new(width, height, Channels::Rgb, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Encodes as P5 or P6 depending on the channel layout.
    pub fn encode(&self) -> Vec<u8> {
        let header = format!("{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(3 + header.len() + self.data.len());
        out.extend_from_slice(self.channels.magic());
        out.push(b'\n');
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PnmError> {
        let mut cursor = HeaderCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        let channels = match magic {
            b"P5" => Channels::Gray,
            b"P6" => Channels::Rgb,
            other => return Err(PnmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
        };
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        if maxval != 255 {
            return Err(PnmError::UnsupportedMaxval(maxval));
        }
        // Exactly one whitespace byte separates maxval from the raster.
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(PnmError::TruncatedHeader),
        }
        Self::new(width as usize, height as usize, channels, bytes[cursor.pos..].to_vec())
    }

    pub fn read(path: &Path) -> Result<Self, PnmError> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), PnmError> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], PnmError> {
        self.skip_separators();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::TruncatedHeader);
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &'static str) -> Result<u32, PnmError> {
        let raw = self.token()?;
        std::str::from_utf8(raw)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PnmError::BadHeaderField {
                field,
                value: String::from_utf8_lossy(raw).into_owned(),
            })
    }
}
