//! Mask rasters, PGM codec and dataset manifests.
//!
//! Masks are stored as 8-bit grayscale PGM. Both the ASCII (`P2`) and binary
//! (`P5`) variants are accepted on read; writes always emit `P5` with
//! foreground at 255 and background at 0. Only `maxval = 255` is supported.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::ReplayBundle;
use crate::error::{Error, Result};

/// Pixels at or above this value are foreground unless told otherwise.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// An H×W grid of foreground (1) / background (0) labels in row-major order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMask(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::InvalidMask(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMask(format!(
                "label {} at index {pos} is not 0 or 1",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An all-background mask.
    pub fn zeros(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![0; width as usize * height as usize])
    }

    /// Builds a mask from a predicate over `(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Label at `(x, y)`. Panics when out of bounds.
    pub fn get(&self, x: u32, y: u32) -> u8 {
        assert!(
            x < self.width && y < self.height,
            "({x}, {y}) out of bounds"
        );
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.get(x, y) == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        for row in self.data.chunks(self.width as usize) {
            let line: String = row
                .iter()
                .map(|&v| if v == 1 { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Reference to the natural image a mask was produced from. Pixel payloads
/// are never decoded here; remote adapters forward the file if a path is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceImageRef {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub width: u32,
    pub height: u32,
}

impl SourceImageRef {
    pub fn for_mask(image_id: impl Into<String>, path: Option<PathBuf>, mask: &BinaryMask) -> Self {
        Self {
            image_id: image_id.into(),
            path,
            width: mask.width(),
            height: mask.height(),
        }
    }
}

// ---------------------------------------------------------------------------
// PGM codec
// ---------------------------------------------------------------------------

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    /// Next decimal token, or `None` at end of input.
    fn next_uint(&mut self, what: &str) -> Result<Option<(usize, u64)>> {
        self.skip_whitespace_and_comments();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(self.bytes[self.pos] - b'0')))
                .ok_or_else(|| Error::format(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(
                start,
                format!("expected {what}, found byte 0x{:02x}", self.bytes[start]),
            ));
        }
        if self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            return Err(Error::format(
                self.pos,
                format!(
                    "unexpected byte 0x{:02x} after {what}",
                    self.bytes[self.pos]
                ),
            ));
        }
        Ok(Some((start, value)))
    }

    fn require_uint(&mut self, what: &str) -> Result<(usize, u64)> {
        self.next_uint(what)?
            .ok_or_else(|| Error::format(self.bytes.len(), format!("missing {what}")))
    }
}

/// Decodes an 8-bit PGM and binarizes it: `pixel >= threshold` is foreground.
pub fn decode_pgm(bytes: &[u8], threshold: u8) -> Result<BinaryMask> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(Error::format(0, "expected magic number P2 or P5"));
    }
    let binary = bytes[1] == b'5';
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(
            cur.pos,
            "magic number must be followed by whitespace",
        ));
    }

    let (w_off, width) = cur.require_uint("width")?;
    let (h_off, height) = cur.require_uint("height")?;
    let (_, maxval) = cur.require_uint("maxval")?;
    if width == 0 || width > u64::from(u32::MAX) {
        return Err(Error::format(w_off, format!("width {width} out of range")));
    }
    if height == 0 || height > u64::from(u32::MAX) {
        return Err(Error::format(
            h_off,
            format!("height {height} out of range"),
        ));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    let (width, height) = (width as u32, height as u32);
    let expected = width as usize * height as usize;
    let binarize = |v: u8| u8::from(v >= threshold);

    let data = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        if cur.pos >= bytes.len() {
            return Err(Error::Truncated { expected, found: 0 });
        }
        let start = cur.pos + 1;
        let payload = &bytes[start.min(bytes.len())..];
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].iter().map(|&v| binarize(v)).collect()
    } else {
        let mut data = Vec::with_capacity(expected);
        while data.len() < expected {
            match cur.next_uint("sample")? {
                Some((off, v)) if v > 255 => {
                    return Err(Error::format(off, format!("sample {v} exceeds maxval 255")));
                }
                Some((_, v)) => data.push(binarize(v as u8)),
                None => {
                    return Err(Error::Truncated {
                        expected,
                        found: data.len(),
                    })
                }
            }
        }
        data
    };
    BinaryMask::new(width, height, data)
}

/// Reads a mask from a PGM file.
pub fn read_mask(path: impl AsRef<Path>, threshold: u8) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, threshold)
}

/// Encodes a mask as binary PGM (`P5`, maxval 255).
pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", mask.width(), mask.height());
    let mut out = Vec::with_capacity(header.len() + mask.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(mask.data().iter().map(|&v| if v == 1 { 255 } else { 0 }));
    out
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// One image of an evaluation manifest (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub mask_path: PathBuf,
    pub ground_truth: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded: Option<ReplayBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    /// Natural image forwarded to remote adapters when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

/// Parses manifest text. Relative paths are resolved against `base_dir`.
///
/// Blank lines carry no record and are skipped; every other line must parse
/// or the whole manifest is rejected with the 1-based line number.
pub fn parse_manifest(text: &str, base_dir: Option<&Path>) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::ManifestLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(entry.image_id.clone()) {
            return Err(Error::DuplicateId(entry.image_id));
        }
        if let Some(base) = base_dir {
            entry.mask_path = resolve(base, &entry.mask_path);
            entry.embeddings_path = entry.embeddings_path.map(|p| resolve(base, &p));
            entry.image_path = entry.image_path.map(|p| resolve(base, &p));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent())
}

/// Serializes entries back to manifest text, one record per line.
pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("manifest entries always serialize"));
        out.push('\n');
    }
    out
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p2_threshold() {
        let m = decode_pgm(b"P2\n2 2\n255\n0 255\n255 0\n", 128).unwrap();
        assert_eq!(m.data(), &[0, 1, 1, 0]);
        assert_eq!((m.width(), m.height()), (2, 2));
    }

    #[test]
    fn threshold_zero_is_all_foreground() {
        let m = decode_pgm(b"P2\n2 2\n255\n0 255\n255 0\n", 0).unwrap();
        assert_eq!(m.data(), &[1, 1, 1, 1]);
    }

    #[test]
    fn p5_boundary_values() {
        // Hand-assembled: magic, dims, maxval, single separator, three raw bytes.
        let bytes = [
            b'P', b'5', b'\n', b'3', b' ', b'1', b'\n', b'2', b'5', b'5', b'\n', 127, 128, 200,
        ];
        let m = decode_pgm(&bytes, 128).unwrap();
        assert_eq!(m.data(), &[0, 1, 1]);
    }

    #[test]
    fn comments_in_header() {
        let m = decode_pgm(b"P2\n# made by hand\n2 # width\n1\n255\n9 200\n", 128).unwrap();
        assert_eq!(m.data(), &[0, 1]);
    }

    #[test]
    fn single_pixel_encoding() {
        let fg = BinaryMask::new(1, 1, vec![1]).unwrap();
        let mut expected = b"P5\n1 1\n255\n".to_vec();
        expected.push(255);
        assert_eq!(encode_pgm(&fg), expected);

        let bg = BinaryMask::new(1, 1, vec![0]).unwrap();
        assert_eq!(*encode_pgm(&bg).last().unwrap(), 0);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        match decode_pgm(b"P6\n1 1\n255\n\0", 128) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_width_reports_offset() {
        match decode_pgm(b"P2\nxx 1\n255\n0", 128) {
            Err(Error::Format { offset: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn maxval_other_than_255_is_unsupported() {
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n15\n0\n", 128),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn truncated_payloads() {
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x00\xff", 128),
            Err(Error::Truncated {
                expected: 4,
                found: 2
            })
        ));
        assert!(matches!(
            decode_pgm(b"P2\n2 2\n255\n0 1 2", 128),
            Err(Error::Truncated {
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn mask_invariants() {
        assert!(BinaryMask::new(0, 3, vec![]).is_err());
        assert!(BinaryMask::new(2, 2, vec![0, 1, 0]).is_err());
        assert!(BinaryMask::new(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn manifest_basics() {
        assert!(parse_manifest("", None).unwrap().is_empty());

        let text = concat!(
            r#"{"image_id":"a","mask_path":"a.pgm","ground_truth":["exit"]}"#,
            "\n",
            r#"{"image_id":"b","mask_path":"/abs/b.pgm","ground_truth":[]}"#,
            "\n"
        );
        let entries = parse_manifest(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].image_id, "a");
        assert_eq!(entries[0].mask_path, PathBuf::from("/data/a.pgm"));
        assert_eq!(entries[1].mask_path, PathBuf::from("/abs/b.pgm"));
    }

    #[test]
    fn manifest_duplicate_id() {
        let text = concat!(
            r#"{"image_id":"dup","mask_path":"a.pgm","ground_truth":[]}"#,
            "\n",
            r#"{"image_id":"dup","mask_path":"b.pgm","ground_truth":[]}"#,
        );
        match parse_manifest(text, None) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "dup"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_missing_field_names_line() {
        let text = concat!(
            r#"{"image_id":"a","mask_path":"a.pgm","ground_truth":[]}"#,
            "\n",
            r#"{"image_id":"b","ground_truth":[]}"#,
        );
        match parse_manifest(text, None) {
            Err(Error::ManifestLine { line: 2, message }) => assert!(message.contains("mask_path")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0u8..=1, (w * h) as usize)
                .prop_map(move |data| BinaryMask::new(w, h, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pgm_round_trip(mask in arb_mask()) {
            let back = decode_pgm(&encode_pgm(&mask), DEFAULT_THRESHOLD).unwrap();
            prop_assert_eq!(back, mask);
        }

        #[test]
        fn threshold_monotone(pixels in proptest::collection::vec(any::<u8>(), 1..40), t in any::<u8>(), dt in any::<u8>()) {
            let mut bytes = format!("P5\n{} 1\n255\n", pixels.len()).into_bytes();
            bytes.extend_from_slice(&pixels);
            let lo = decode_pgm(&bytes, t).unwrap();
            let hi = decode_pgm(&bytes, t.saturating_add(dt)).unwrap();
            for (a, b) in lo.data().iter().zip(hi.data()) {
                prop_assert!(b <= a);
            }
        }
    }
}
