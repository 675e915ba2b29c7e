//! Raster images and landmark CSV files.

use std::fs;
use std::path::Path;

use landmark_core::data::Raster;
use landmark_core::heatmap::Point;

use crate::error::{Error, Result};

/// Loads any supported raster as one luminance channel scaled by the
/// container's maximum value (255 for 8-bit, 65535 for 16-bit).
pub fn read_image(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    let luma = img.to_luma32f();
    let (w, h) = luma.dimensions();
    let data = luma
        .into_raw()
        .into_iter()
        .map(|v| f64::from(v).clamp(0.0, 1.0))
        .collect();
    Ok(Raster::new(1, h as usize, w as usize, data))
}

/// Writes channel 0 as an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, raster: &Raster) -> Result<()> {
    let plane = &raster.data[..raster.height * raster.width];
    let bytes: Vec<u8> = plane
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::GrayImage::from_raw(raster.width as u32, raster.height as u32, bytes)
        .expect("buffer matches dimensions")
        .save(path)
        .map_err(|e| Error::io(path, e))
}

/// Reads landmark coordinates. Accepts the annotation layout (`x,y`) and
/// the prediction layout (`index,x,y`).
pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let bad = |m: String| Error::Validation(format!("{}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(xi), Some(yi)) = (col("x"), col("y")) else {
        return Err(bad("expected a header with `x` and `y` columns".into()));
    };
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: unreadable coordinate", row + 1)))
        };
        points.push(Point::new(field(xi)?, field(yi)?));
    }
    Ok(points)
}

/// Writes `index,x,y` rows.
pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    let mut out = String::from("index,x,y\n");
    for (i, p) in points.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", p.x, p.y));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `x,y` rows, the annotation layout.
pub fn write_annotation(path: &Path, points: &[Point]) -> Result<()> {
    let mut out = String::from("x,y\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{what} {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
