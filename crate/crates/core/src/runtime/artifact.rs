//! Alert clip container.
//!
//! ```text
//! magic        8 bytes   "EGCLIP01"
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON (ClipHeader)
//! frames       frame_count records:
//!                frame_index  u64 LE
//!                ts_ms        i64 LE
//!                png_len      u32 LE
//!                png          png_len bytes (RGB8 PNG)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskLevel;
use crate::tracking::TrackId;

pub const MAGIC: &[u8; 8] = b"EGCLIP01";
pub const CLIP_EXT: &str = "egclip";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipHeader {
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_ts_ms: i64,
    pub end_ts_ms: i64,
    /// Stream timestamps the capture asked for.
    pub requested_ts_ms: (i64, i64),
    /// Set when the ring buffer no longer (or never) covered the requested span.
    pub truncated: bool,
    pub level: RiskLevel,
    pub track_ids: Vec<TrackId>,
    pub event_frame: u64,
    pub peak_frame: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFrame {
    pub frame_index: u64,
    pub ts_ms: i64,
    pub png: Vec<u8>,
}

pub fn write_clip(path: &Path, header: &ClipHeader, frames: &[ClipFrame]) -> Result<()> {
    if header.frame_count != frames.len() {
        return Err(Error::Shape(format!(
            "header says {} frames, got {}",
            header.frame_count,
            frames.len()
        )));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for f in frames {
        w.write_all(&f.frame_index.to_le_bytes()).map_err(io)?;
        w.write_all(&f.ts_ms.to_le_bytes()).map_err(io)?;
        w.write_all(&(f.png.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&f.png).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn parse_clip(bytes: &[u8]) -> Result<(ClipHeader, Vec<ClipFrame>)> {
    let bad = |m: &str| Error::UnsupportedFormat(format!("clip container: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|e| *e <= bytes.len()).ok_or_else(|| bad("unexpected end of data"))?;
        let out = &bytes[pos..end];
        pos = end;
        Ok(out)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let header: ClipHeader = serde_json::from_slice(take(hlen)?)?;
    let mut frames = Vec::with_capacity(header.frame_count.min(10_000));
    for _ in 0..header.frame_count {
        let frame_index = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let ts_ms = i64::from_le_bytes(take(8)?.try_into().unwrap());
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        frames.push(ClipFrame { frame_index, ts_ms, png: take(len)?.to_vec() });
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((header, frames))
}

pub fn read_clip(path: &Path) -> Result<(ClipHeader, Vec<ClipFrame>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_clip(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(n: usize) -> ClipHeader {
        ClipHeader {
            version: 1,
            width: 4,
            height: 4,
            fps: 30.0,
            frame_count: n,
            start_frame: 10,
            end_frame: 10 + n as u64,
            start_ts_ms: 333,
            end_ts_ms: 400,
            requested_ts_ms: (300, 400),
            truncated: true,
            level: RiskLevel::Danger,
            track_ids: vec![1, 2],
            event_frame: 11,
            peak_frame: 11,
        }
    }

    #[test]
    fn round_trip() {
        let frames: Vec<ClipFrame> = (0..3)
            .map(|i| ClipFrame { frame_index: 10 + i, ts_ms: 333 + i as i64, png: vec![i as u8; 5 + i as usize] })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.egclip");
        write_clip(&p, &header(3), &frames).unwrap();
        let (h, f) = read_clip(&p).unwrap();
        assert_eq!(h, header(3));
        assert_eq!(f, frames);
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        assert!(parse_clip(b"NOTACLIP").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.egclip");
        write_clip(&p, &header(0), &[]).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        assert!(parse_clip(&bytes).is_ok());
        bytes.push(0);
        assert!(parse_clip(&bytes).is_err());
        assert!(write_clip(&p, &header(2), &[]).is_err());
    }
}
