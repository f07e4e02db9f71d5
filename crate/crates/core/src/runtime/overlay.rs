//! Skeleton overlay rendering: joint discs, COCO limb segments, track id
//! labels at the box top, and a HUD line. Pure function of its inputs.

use std::collections::BTreeMap;
use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};

use super::font::{glyph, text_width, GLYPH_H, GLYPH_W};
use super::source::PoseFrame;
use crate::error::{Error, Result};
use crate::geometry::layout::COCO_LIMBS;
use crate::risk::RiskLevel;
use crate::tracking::{Detection, TrackId};

pub const BACKGROUND: Rgb<u8> = Rgb([18, 18, 22]);
pub const HUD: Rgb<u8> = Rgb([235, 235, 235]);
pub const UNLABELED: Rgb<u8> = Rgb([56, 189, 248]);
pub const JOINT: Rgb<u8> = Rgb([250, 250, 250]);

/// Style token per risk level: red, amber, green.
pub fn level_color(level: RiskLevel) -> Rgb<u8> {
    match level {
        RiskLevel::Danger => Rgb([220, 38, 38]),
        RiskLevel::Warning => Rgb([245, 158, 11]),
        RiskLevel::Safe => Rgb([34, 197, 94]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas { width: 1280, height: 720 }
    }
}

/// A tracked person to draw on this frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayTrack {
    pub track_id: TrackId,
    pub detection: Detection,
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn disc(img: &mut RgbImage, cx: f64, cy: f64, r: i64, c: Rgb<u8>) {
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, x0 + dx, y0 + dy, c);
            }
        }
    }
}

/// Bresenham segment, two pixels thick.
fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let steep = dx < -dy;
    // clamp absurd coordinates so a corrupt pose cannot stall rendering
    let limit = 4 * (img.width() + img.height()) as i64;
    for _ in 0..=limit {
        put(img, x0, y0, c);
        if steep {
            put(img, x0 + 1, y0, c);
        } else {
            put(img, x0, y0 + 1, c);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn rect_outline(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Rgb<u8>) {
    line(img, (x0, y0), (x1, y0), c);
    line(img, (x1, y0), (x1, y1), c);
    line(img, (x1, y1), (x0, y1), c);
    line(img, (x0, y1), (x0, y0), c);
}

fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, c: Rgb<u8>) {
    for yy in y..y + h {
        for xx in x..x + w {
            put(img, xx, yy, c);
        }
    }
}

pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, c: Rgb<u8>) {
    let s = scale as i64;
    for (k, ch) in text.chars().enumerate() {
        let ox = x + k as i64 * (GLYPH_W as i64 + 1) * s;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..GLYPH_W as i64 {
                if bits & (1 << (GLYPH_W as i64 - 1 - col)) != 0 {
                    fill_rect(img, ox + col * s, y + row as i64 * s, s, s, c);
                }
            }
        }
    }
}

/// Draws onto the frame's raw image when present, otherwise a blank canvas.
pub fn render_overlay(
    frame: &PoseFrame,
    tracks: &[OverlayTrack],
    labels: &BTreeMap<TrackId, RiskLevel>,
    canvas: Canvas,
) -> RgbImage {
    let mut img = match &frame.image {
        Some(raw) => (**raw).clone(),
        None => RgbImage::from_pixel(canvas.width, canvas.height, BACKGROUND),
    };

    for t in tracks {
        let color = labels.get(&t.track_id).map_or(UNLABELED, |l| level_color(*l));
        let p = &t.detection.pose;
        for &(a, b) in COCO_LIMBS.iter() {
            let (ja, jb) = (&p.joints[a], &p.joints[b]);
            if !ja.is_missing() && !jb.is_missing() {
                line(&mut img, (ja.x, ja.y), (jb.x, jb.y), color);
            }
        }
        for j in p.joints.iter().filter(|j| !j.is_missing()) {
            disc(&mut img, j.x, j.y, 3, JOINT);
        }
        let [x0, y0, x1, y1] = t.detection.bbox.corners();
        rect_outline(&mut img, x0, y0, x1, y1, color);
        let text = match labels.get(&t.track_id) {
            Some(l) => format!("ID {} {}", t.track_id, l),
            None => format!("ID {}", t.track_id),
        };
        let th = (GLYPH_H * 2) as i64;
        let ty = (y0.round() as i64 - th - 4).max(0);
        fill_rect(&mut img, x0.round() as i64, ty, text_width(&text, 2) as i64 + 4, th + 4, color);
        draw_text(&mut img, x0.round() as i64 + 2, ty + 2, &text, 2, BACKGROUND);
    }

    let worst = labels.values().max().copied();
    let hud = format!("FRAME {}  TRACKS {}", frame.frame_index, tracks.len());
    draw_text(&mut img, 8, 8, &hud, 2, HUD);
    if let Some(level) = worst {
        let x = 8 + text_width(&hud, 2) as i64 + 16;
        draw_text(&mut img, x, 8, level.as_str(), 2, level_color(level));
    }
    img
}

/// Untracked view of a frame: every detection drawn unlabeled.
pub fn render_scene(frame: &PoseFrame, canvas: Canvas) -> RgbImage {
    let tracks: Vec<OverlayTrack> = frame
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| OverlayTrack { track_id: i as TrackId + 1, detection: d.clone() })
        .collect();
    render_overlay(frame, &tracks, &BTreeMap::new(), canvas)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(Cursor::new(&mut out), CompressionType::Fast, FilterType::Sub)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::UnsupportedFormat(format!("png encode: {e}")))?;
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| Error::UnsupportedFormat(format!("png decode: {e}")))
}

pub fn render_overlay_png(
    frame: &PoseFrame,
    tracks: &[OverlayTrack],
    labels: &BTreeMap<TrackId, RiskLevel>,
    canvas: Canvas,
) -> Result<Vec<u8>> {
    encode_png(&render_overlay(frame, tracks, labels, canvas))
}
