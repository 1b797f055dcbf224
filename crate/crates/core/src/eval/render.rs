use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const BASE_COLOR: [u8; 3] = [0, 0, 0];
pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Viewport {
    /// Square viewport centred on the origin.
    pub fn centered(half_width: f64) -> Self {
        Self {
            xmin: -half_width,
            xmax: half_width,
            ymin: -half_width,
            ymax: half_width,
        }
    }

    /// Maps a point to a pixel: `round(u * size)` across, `round((1 - v) * size)` down,
    /// clamped to the last row/column. Points outside the viewport map to `None`.
    fn pixel(&self, p: &[f64], size: usize) -> Option<(usize, usize)> {
        let (x, y) = (*p.first()?, *p.get(1)?);
        let u = (x - self.xmin) / (self.xmax - self.xmin);
        let v = (y - self.ymin) / (self.ymax - self.ymin);
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return None;
        }
        let last = size - 1;
        let col = ((u * size as f64).round() as usize).min(last);
        let row = (((1.0 - v) * size as f64).round() as usize).min(last);
        Some((col, row))
    }
}

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Pixmap {
    fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            rgb: color.repeat(width * height),
        }
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn set(&mut self, col: usize, row: usize, color: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.rgb[i..i + 3].copy_from_slice(&color);
    }

    /// Binary `P6` encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm())?;
        Ok(())
    }
}

/// Draws the first two coordinates of each point; overlay points are drawn last.
pub fn render_scatter<P: AsRef<[f64]>>(
    points: &[P],
    overlay: Option<&[P]>,
    viewport: Viewport,
    size: usize,
) -> Result<Pixmap> {
    if size < 16 {
        return Err(Error::invalid(format!("pixmap size must be >= 16, got {size}")));
    }
    let finite = [viewport.xmin, viewport.xmax, viewport.ymin, viewport.ymax]
        .iter()
        .all(|v| v.is_finite());
    if !finite || viewport.xmax <= viewport.xmin || viewport.ymax <= viewport.ymin {
        return Err(Error::invalid(format!("empty viewport {viewport:?}")));
    }
    let mut img = Pixmap::filled(size, size, BACKGROUND);
    for p in points {
        if let Some((c, r)) = viewport.pixel(p.as_ref(), size) {
            img.set(c, r, BASE_COLOR);
        }
    }
    for p in overlay.unwrap_or(&[]) {
        if let Some((c, r)) = viewport.pixel(p.as_ref(), size) {
            img.set(c, r, OVERLAY_COLOR);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_canvas() {
        let none: [[f64; 2]; 0] = [];
        let img = render_scatter(&none, None, Viewport::centered(1.0), 32).unwrap();
        let ppm = img.to_ppm();
        assert_eq!(ppm.len(), "P6\n32 32\n255\n".len() + 3 * 32 * 32);
        assert!(img.rgb.iter().all(|b| *b == 255));
    }

    #[test]
    fn center_point() {
        let img = render_scatter(&[[0.0, 0.0]], None, Viewport::centered(2.0), 64).unwrap();
        assert_eq!(img.pixel(32, 32), BASE_COLOR);
        assert_eq!(img.rgb.iter().filter(|b| **b == 0).count(), 3);
    }

    #[test]
    fn overlay_wins() {
        let pts = [[0.5, 0.5]];
        let img = render_scatter(&pts, Some(&pts[..]), Viewport::centered(1.0), 16).unwrap();
        assert_eq!(img.pixel(12, 4), OVERLAY_COLOR);
    }

    #[test]
    fn corners_clamp_and_outside_is_skipped() {
        let img = render_scatter(&[[1.0, -1.0], [5.0, 0.0]], None, Viewport::centered(1.0), 16).unwrap();
        assert_eq!(img.pixel(15, 15), BASE_COLOR);
        assert_eq!(img.rgb.iter().filter(|b| **b == 0).count(), 3);
    }

    #[test]
    fn rejects_bad_arguments() {
        let pts = [[0.0, 0.0]];
        assert!(render_scatter(&pts, None, Viewport::centered(1.0), 8).is_err());
        let flat = Viewport {
            xmin: 1.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        };
        assert!(render_scatter(&pts, None, flat, 32).is_err());
    }
}
