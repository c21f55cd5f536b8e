//! PNG image blobs.
//!
//! Every image that enters a session (user inputs, kernel figures) is held as
//! PNG bytes. Other formats are transcoded once at load time so hashing and the
//! wire protocol only ever see one codec.

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

/// The 8-byte signature that starts every PNG stream.
pub const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("not a PNG stream (bad signature)")]
    BadSignature,
    #[error("PNG header is truncated or missing IHDR")]
    BadHeader,
    #[error("PNG has zero width or height")]
    ZeroDimension,
    #[error("invalid base64 image payload: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to decode image: {0}")]
    Decode(#[from] image::ImageError),
}

/// A PNG-encoded image together with the dimensions from its IHDR chunk.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ImageBlob {
    bytes: Vec<u8>,
    width: u32,
    height: u32,
}

impl ImageBlob {
    /// Wraps PNG bytes, validating the signature and reading the header.
    pub fn from_png(bytes: Vec<u8>) -> Result<Self, ImageError> {
        let (width, height) = png_dimensions(&bytes)?;
        Ok(Self {
            bytes,
            width,
            height,
        })
    }

    /// Decodes a base64 string holding PNG bytes.
    pub fn from_base64(text: &str) -> Result<Self, ImageError> {
        Self::from_png(STANDARD.decode(text.trim())?)
    }

    /// Loads an image from disk. Non-PNG inputs are transcoded to PNG.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if bytes.starts_with(&PNG_SIGNATURE) {
            return Self::from_png(bytes);
        }
        let decoded = image::load_from_memory(&bytes)?;
        let mut out = Cursor::new(Vec::new());
        decoded.write_to(&mut out, image::ImageFormat::Png)?;
        Self::from_png(out.into_inner())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn to_base64(&self) -> String {
        STANDARD.encode(&self.bytes)
    }
}

impl fmt::Debug for ImageBlob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBlob")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("len", &self.bytes.len())
            .finish()
    }
}

impl TryFrom<String> for ImageBlob {
    type Error = ImageError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::from_base64(&value)
    }
}

impl From<ImageBlob> for String {
    fn from(value: ImageBlob) -> Self {
        value.to_base64()
    }
}

/// Reads width and height from the IHDR chunk, which must come first.
pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), ImageError> {
    if !bytes.starts_with(&PNG_SIGNATURE) {
        return Err(ImageError::BadSignature);
    }
    if bytes.len() < 24 || &bytes[12..16] != b"IHDR" {
        return Err(ImageError::BadHeader);
    }
    let width = u32::from_be_bytes(bytes[16..20].try_into().expect("4 bytes"));
    let height = u32::from_be_bytes(bytes[20..24].try_into().expect("4 bytes"));
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    Ok((width, height))
}

/// Encodes a solid-colour RGB image as PNG. Used for canned figures and test data.
pub fn solid_png(width: u32, height: u32, rgb: [u8; 3]) -> ImageBlob {
    let img = image::RgbImage::from_pixel(width.max(1), height.max(1), image::Rgb(rgb));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    ImageBlob::from_png(out.into_inner()).expect("freshly encoded PNG is valid")
}
