use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rasterized obstacle world. Cell `(ix, iy)` covers
/// `[ix * res, (ix + 1) * res) x [iy * res, (iy + 1) * res)`; `iy` grows with
/// world `y`. Everything outside the raster counts as occupied.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldMap {
    resolution_bits: u64,
    cols: usize,
    rows: usize,
    occupied: Vec<bool>,
}

fn positive(v: f64) -> bool {
    v.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater)
}

impl WorldMap {
    pub fn empty(width: f64, height: f64, resolution: f64) -> Result<Self> {
        if [resolution, width, height].iter().any(|v| !positive(*v)) {
            return Err(Error::InvalidConfig(format!(
                "world {width} x {height} at resolution {resolution}"
            )));
        }
        let cols = (width / resolution).round() as usize;
        let rows = (height / resolution).round() as usize;
        Self::from_cells(cols, rows, resolution, vec![false; cols * rows])
    }

    pub fn from_cells(cols: usize, rows: usize, resolution: f64, occupied: Vec<bool>) -> Result<Self> {
        if cols == 0 || rows == 0 || occupied.len() != cols * rows || !positive(resolution) {
            return Err(Error::InvalidConfig(format!(
                "raster {cols} x {rows} with {} cells at resolution {resolution}",
                occupied.len()
            )));
        }
        Ok(Self {
            resolution_bits: resolution.to_bits(),
            cols,
            rows,
            occupied,
        })
    }

    pub fn resolution(&self) -> f64 {
        f64::from_bits(self.resolution_bits)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.resolution()
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.resolution()
    }

    fn index(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix as usize >= self.cols || iy as usize >= self.rows {
            None
        } else {
            Some(iy as usize * self.cols + ix as usize)
        }
    }

    pub fn is_occupied(&self, ix: i64, iy: i64) -> bool {
        self.index(ix, iy).is_none_or(|i| self.occupied[i])
    }

    pub fn set(&mut self, ix: i64, iy: i64, occupied: bool) {
        if let Some(i) = self.index(ix, iy) {
            self.occupied[i] = occupied;
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        let res = self.resolution();
        ((x / res).floor() as i64, (y / res).floor() as i64)
    }

    pub fn cell_center(&self, ix: i64, iy: i64) -> [f64; 2] {
        let res = self.resolution();
        [(ix as f64 + 0.5) * res, (iy as f64 + 0.5) * res]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| ((i % self.cols) as i64, (i / self.cols) as i64))
    }

    /// Marks every cell whose center lies inside the axis-aligned rectangle.
    pub fn fill_rect(&mut self, min: [f64; 2], max: [f64; 2]) {
        let (x0, y0) = self.cell_of(min[0], min[1]);
        let (x1, y1) = self.cell_of(max[0], max[1]);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = self.cell_center(ix, iy);
                if c[0] >= min[0] && c[0] <= max[0] && c[1] >= min[1] && c[1] <= max[1] {
                    self.set(ix, iy, true);
                }
            }
        }
    }

    /// Marks every cell whose center lies inside the disc.
    pub fn fill_disc(&mut self, center: [f64; 2], radius: f64) {
        let (x0, y0) = self.cell_of(center[0] - radius, center[1] - radius);
        let (x1, y1) = self.cell_of(center[0] + radius, center[1] + radius);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = self.cell_center(ix, iy);
                if (c[0] - center[0]).hypot(c[1] - center[1]) <= radius {
                    self.set(ix, iy, true);
                }
            }
        }
    }

    /// Distance from `(x, y)` to the nearest occupied cell square, capped at
    /// `cap`. Zero when the point lies inside an occupied cell.
    pub fn clearance(&self, x: f64, y: f64, cap: f64) -> f64 {
        let res = self.resolution();
        let (x0, y0) = self.cell_of(x - cap, y - cap);
        let (x1, y1) = self.cell_of(x + cap, y + cap);
        let mut best_sq = cap * cap;
        for iy in y0..=y1 {
            let ly = iy as f64 * res;
            let dy = (ly - y).max(0.0).max(y - (ly + res));
            if dy * dy >= best_sq {
                continue;
            }
            for ix in x0..=x1 {
                if !self.is_occupied(ix, iy) {
                    continue;
                }
                let lx = ix as f64 * res;
                let dx = (lx - x).max(0.0).max(x - (lx + res));
                let d_sq = dx * dx + dy * dy;
                if d_sq < best_sq {
                    best_sq = d_sq;
                }
            }
        }
        best_sq.sqrt()
    }

    /// Whether a disc at `(x, y)` overlaps any occupied cell.
    pub fn disc_collides(&self, x: f64, y: f64, radius: f64) -> bool {
        self.clearance(x, y, radius) < radius
    }

    /// Grayscale raster with occupied cells black; image row 0 is the top of
    /// the world (largest `y`).
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.cols as u32, self.rows as u32, |col, row| {
            let iy = (self.rows - 1 - row as usize) as i64;
            if self.is_occupied(col as i64, iy) {
                Luma([0])
            } else {
                Luma([255])
            }
        })
    }
}

/// Builds a world from a grayscale raster: pixels darker than `threshold`
/// are obstacles. Image row 0 maps to the top of the world.
pub fn load_world(image: &GrayImage, resolution: f64, threshold: u8) -> Result<WorldMap> {
    let (cols, rows) = image.dimensions();
    if cols == 0 || rows == 0 {
        return Err(Error::EmptyImage);
    }
    let (cols, rows) = (cols as usize, rows as usize);
    let mut occupied = vec![false; cols * rows];
    for (col, row, pixel) in image.enumerate_pixels() {
        let iy = rows - 1 - row as usize;
        occupied[iy * cols + col as usize] = pixel.0[0] < threshold;
    }
    WorldMap::from_cells(cols, rows, resolution, occupied)
}

pub const DEFAULT_THRESHOLD: u8 = 128;

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

/// Sidecar document describing how to interpret a world image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    /// Image path, relative to the sidecar file.
    pub image: PathBuf,
    /// Meters per pixel.
    pub resolution: f64,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
}

pub fn read_gray_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_luma8())
}

/// Loads a world from a TOML sidecar (`image`, `resolution`, `threshold`).
pub fn load_world_file(sidecar: &Path) -> Result<WorldMap> {
    let text = std::fs::read_to_string(sidecar)?;
    let spec: WorldFile = toml::from_str(&text)?;
    let image_path = sidecar
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&spec.image);
    load_world(&read_gray_image(&image_path)?, spec.resolution, spec.threshold)
}

/// Writes `world` as `<stem>.png` plus a `<stem>.toml` sidecar.
pub fn save_world_file(world: &WorldMap, sidecar: &Path) -> Result<()> {
    let image_path = sidecar.with_extension("png");
    world
        .to_image()
        .save(&image_path)
        .map_err(|source| Error::Image {
            path: image_path.clone(),
            source,
        })?;
    let spec = WorldFile {
        image: PathBuf::from(image_path.file_name().expect("file name")),
        resolution: world.resolution(),
        threshold: DEFAULT_THRESHOLD,
    };
    std::fs::write(sidecar, toml::to_string(&spec)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_images() {
        let white = GrayImage::from_pixel(8, 6, Luma([255]));
        assert_eq!(load_world(&white, 0.1, 128).unwrap().occupied_count(), 0);
        let black = GrayImage::from_pixel(8, 6, Luma([0]));
        assert_eq!(load_world(&black, 0.1, 128).unwrap().occupied_count(), 48);
        assert!(matches!(
            load_world(&GrayImage::new(0, 0), 0.1, 128),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn single_cell_maps_to_world_coordinate() {
        let mut img = GrayImage::from_pixel(10, 8, Luma([255]));
        // Column 3, image row 1: second row from the top.
        img.put_pixel(3, 1, Luma([10]));
        let world = load_world(&img, 0.5, 128).unwrap();
        let cells: Vec<_> = world.occupied_cells().collect();
        assert_eq!(cells, vec![(3, 6)]);
        let c = world.cell_center(3, 6);
        assert_abs_diff_eq!(c[0], 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 3.25, epsilon = 1e-12);
        assert_eq!(world.cell_of(1.75, 3.25), (3, 6));
        // Threshold is strict.
        let mut edge = GrayImage::from_pixel(2, 2, Luma([255]));
        edge.put_pixel(0, 0, Luma([128]));
        assert_eq!(load_world(&edge, 0.5, 128).unwrap().occupied_count(), 0);
    }

    #[test]
    fn image_round_trip() {
        let mut world = WorldMap::empty(2.0, 1.0, 0.1).unwrap();
        world.fill_rect([0.5, 0.2], [0.9, 0.6]);
        let back = load_world(&world.to_image(), 0.1, 128).unwrap();
        assert_eq!(back, world);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut world = WorldMap::empty(3.0, 2.0, 0.05).unwrap();
        world.fill_disc([1.0, 1.0], 0.3);
        let sidecar = dir.path().join("room.toml");
        save_world_file(&world, &sidecar).unwrap();
        assert_eq!(load_world_file(&sidecar).unwrap(), world);
        assert!(load_world_file(&dir.path().join("missing.toml")).is_err());
    }

    #[test]
    fn clearance_and_boundary() {
        let mut world = WorldMap::empty(4.0, 4.0, 0.1).unwrap();
        world.set(20, 20, true);
        // Cell (20, 20) spans [2.0, 2.1]^2.
        assert_abs_diff_eq!(world.clearance(1.5, 2.05, 5.0), 0.5, epsilon = 1e-12);
        assert_eq!(world.clearance(2.05, 2.05, 5.0), 0.0);
        assert!(world.disc_collides(1.85, 2.05, 0.17));
        assert!(!world.disc_collides(1.8, 2.05, 0.17));
        // Outside the raster is an obstacle.
        assert_abs_diff_eq!(world.clearance(0.1, 1.0, 1.0), 0.1, epsilon = 1e-12);
        assert!(world.is_occupied(-1, 0));
    }
}
