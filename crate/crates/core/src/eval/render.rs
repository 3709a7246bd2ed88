use std::path::Path;

use image::{Rgb, RgbImage};

use super::scenario::Rect;
use crate::error::{Error, Result};
use crate::sim::{propagate_arc, TrajectoryRow, WorldMap};

const PATH: Rgb<u8> = Rgb([255, 215, 0]);
const MARKER: Rgb<u8> = Rgb([230, 160, 0]);
const START: Rgb<u8> = Rgb([0, 170, 0]);
const GOAL: Rgb<u8> = Rgb([0, 60, 230]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    /// Image pixels per map cell.
    pub scale: u32,
    pub marker_radius: i64,
}

impl RenderStyle {
    /// Scales small worlds up to roughly 600 pixels across.
    pub fn for_world(world: &WorldMap) -> Self {
        let side = world.cols().max(world.rows()).max(1) as u32;
        Self {
            scale: (600 / side).max(1),
            marker_radius: 2,
        }
    }
}

fn to_pixel(world: &WorldMap, style: &RenderStyle, p: [f64; 2]) -> (i64, i64) {
    let s = style.scale as f64 / world.resolution();
    let h = (world.rows() as u32 * style.scale) as f64;
    ((p[0] * s).floor() as i64, (h - p[1] * s).floor() as i64)
}

/// Pixels covered by the executed path, sampled along each arc finely
/// enough that consecutive samples are at most half a pixel apart.
pub fn trajectory_pixels(world: &WorldMap, style: &RenderStyle, rows: &[TrajectoryRow]) -> Vec<(i64, i64)> {
    let pixel_m = world.resolution() / style.scale as f64;
    let mut out = Vec::new();
    for row in rows {
        let (pose, action) = (row.pose(), row.action());
        let length = (action.v * row.tau).abs();
        let n = ((length / (0.5 * pixel_m)).ceil() as usize).max(1);
        for k in 0..=n {
            let p = propagate_arc(pose, &action, row.tau * k as f64 / n as f64);
            let px = to_pixel(world, style, p.position());
            if out.last() != Some(&px) {
                out.push(px);
            }
        }
    }
    out
}

fn put(img: &mut RgbImage, (x, y): (i64, i64), color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_box(img: &mut RgbImage, world: &WorldMap, style: &RenderStyle, rect: &Rect, color: Rgb<u8>) {
    let (x0, y1) = to_pixel(world, style, rect.min);
    let (x1, y0) = to_pixel(world, style, rect.max);
    for x in x0..=x1 {
        put(img, (x, y0), color);
        put(img, (x, y1), color);
    }
    for y in y0..=y1 {
        put(img, (x0, y), color);
        put(img, (x1, y), color);
    }
}

/// World raster with the path, one marker per decision and the start and
/// goal boxes. Returns the image and the number of markers drawn.
pub fn render_trajectory_image(world: &WorldMap, rows: &[TrajectoryRow], start: &Rect, goal: &Rect) -> (RgbImage, usize) {
    let style = RenderStyle::for_world(world);
    let gray = world.to_image();
    let s = style.scale;
    let mut img = RgbImage::from_fn(gray.width() * s, gray.height() * s, |x, y| {
        let v = gray.get_pixel(x / s, y / s).0[0];
        Rgb([v, v, v])
    });
    draw_box(&mut img, world, &style, start, START);
    draw_box(&mut img, world, &style, goal, GOAL);
    for px in trajectory_pixels(world, &style, rows) {
        put(&mut img, px, PATH);
    }
    let r = style.marker_radius;
    for row in rows {
        let (cx, cy) = to_pixel(world, &style, [row.x, row.y]);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    put(&mut img, (cx + dx, cy + dy), MARKER);
                }
            }
        }
    }
    (img, rows.len())
}

/// Writes the rendering as PNG and returns the number of decision markers.
pub fn render_trajectory(world: &WorldMap, rows: &[TrajectoryRow], start: &Rect, goal: &Rect, path: &Path) -> Result<usize> {
    let (img, markers) = render_trajectory_image(world, rows, start, goal);
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(markers)
}
