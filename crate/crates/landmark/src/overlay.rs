//! Prediction overlays: predicted landmarks in red, ground truth in green,
//! the mean radial error printed in the top-left corner.

use std::path::Path;

use image::{Rgb, RgbImage};
use landmark_core::data::Raster;
use landmark_core::heatmap::Point;

use crate::error::{Error, Result};

pub const RED: Rgb<u8> = Rgb([230, 30, 30]);
pub const GREEN: Rgb<u8> = Rgb([30, 210, 60]);

/// 3x5 glyphs, one row per entry, most significant of 3 bits leftmost.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'M' => [5, 7, 7, 5, 5],
        'R' => [6, 5, 6, 5, 5],
        'E' => [7, 4, 6, 4, 7],
        'p' => [0, 6, 5, 6, 4],
        'x' => [0, 5, 2, 5, 0],
        'm' => [0, 6, 7, 5, 5],
        _ => [0; 5],
    }
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, color: Rgb<u8>) {
    for y in y0.max(0)..(y0 + h).min(img.height() as i64) {
        for x in x0.max(0)..(x0 + w).min(img.width() as i64) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Draws `text` on a black box at the top-left corner.
pub fn draw_label(img: &mut RgbImage, text: &str, scale: i64) {
    let advance = 4 * scale;
    fill_rect(
        img,
        0,
        0,
        advance * text.chars().count() as i64 + 2 * scale,
        7 * scale,
        Rgb([0, 0, 0]),
    );
    for (i, c) in text.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    let x = scale + i as i64 * advance + col * scale;
                    let y = scale + row as i64 * scale;
                    fill_rect(img, x, y, scale, scale, Rgb([255, 255, 255]));
                }
            }
        }
    }
}

/// Filled disc of `radius` around the pixel nearest to `p`.
pub fn draw_marker(img: &mut RgbImage, p: Point, radius: i64, color: Rgb<u8>) {
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                fill_rect(img, cx + dx, cy + dy, 1, 1, color);
            }
        }
    }
}

/// Mean Euclidean distance between corresponding points.
pub fn mean_radial_error(pred: &[Point], truth: &[Point]) -> f64 {
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p.x - t.x).hypot(p.y - t.y)).sum();
    sum / pred.len().max(1) as f64
}

/// Renders the overlay. Small images are enlarged by an integer factor so
/// markers and text stay legible; coordinates are native pixels.
pub fn render(image: &Raster, pred: &[Point], truth: Option<&[Point]>) -> Result<RgbImage> {
    if let Some(t) = truth {
        if t.len() != pred.len() {
            return Err(Error::Validation(format!(
                "{} predicted points but {} ground-truth points",
                pred.len(),
                t.len()
            )));
        }
    }
    let (w, h) = (image.width, image.height);
    let factor = (512 / w.max(h)).max(1);
    let mut img = RgbImage::new((w * factor) as u32, (h * factor) as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let (x, y) = (i % (w * factor) / factor, i / (w * factor) / factor);
        let v = (image.data[y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
        *px = Rgb([v, v, v]);
    }
    let scale_pt = |p: &Point| Point::new((p.x + 0.5) * factor as f64 - 0.5, (p.y + 0.5) * factor as f64 - 0.5);
    let radius = ((w.max(h) * factor) as i64 / 160).max(2);
    if let Some(t) = truth {
        for p in t {
            draw_marker(&mut img, scale_pt(p), radius, GREEN);
        }
    }
    for p in pred {
        draw_marker(&mut img, scale_pt(p), radius, RED);
    }
    if let Some(t) = truth {
        let scale = ((w.max(h) * factor) as i64 / 170).max(1);
        draw_label(&mut img, &format!("MRE {:.2} px", mean_radial_error(pred, t)), scale);
    }
    Ok(img)
}

pub fn write(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| Error::io(path, e))
}
