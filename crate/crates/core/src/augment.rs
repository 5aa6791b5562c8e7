//! Raster augmentations of table images: ruling-line removal (NLT), line
//! addition (HLT, VLT, both) and intensity masking.
//!
//! Images are 8-bit grayscale with 0 = black and 255 = white.

use std::path::Path;

pub use image::GrayImage;

use crate::error::{Error, Result};
use crate::table::{Cell, TablePage};

/// A binary raster with the same shape as an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: u32, height: u32) -> Self {
        BitMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.idx(x, y);
        self.bits[i] = v;
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Number of pixels set in both masks.
    pub fn overlap(&self, other: &BitMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union_with(&mut self, other: &BitMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Set pixels become 255, clear pixels 0.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Nonzero pixels are set.
    pub fn from_image(img: &GrayImage) -> Self {
        let mut m = BitMask::new(img.width(), img.height());
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] != 0 {
                m.set(x, y, true);
            }
        }
        m
    }
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    image::open(path)
        .map(|img| img.to_luma8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineDetectParams {
    /// Pixels strictly darker than this count as ink.
    pub binarize_threshold: u8,
    /// Minimum run length as a fraction of the image dimension along the run.
    pub min_run_fraction: f64,
    /// Thickest band, in pixels, still treated as a ruling line.
    pub max_thickness: u32,
    pub background_value: u8,
}

impl Default for LineDetectParams {
    fn default() -> Self {
        LineDetectParams {
            binarize_threshold: 128,
            min_run_fraction: 0.3,
            max_thickness: 5,
            background_value: 255,
        }
    }
}

impl LineDetectParams {
    pub fn validate(&self) -> Result<()> {
        if self.binarize_threshold == 0 || self.binarize_threshold == 255 {
            return Err(Error::InvalidArgument(
                "binarize_threshold must be in (0, 255)".into(),
            ));
        }
        if !(self.min_run_fraction > 0.0 && self.min_run_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "min_run_fraction must be in (0, 1]".into(),
            ));
        }
        if self.max_thickness == 0 {
            return Err(Error::InvalidArgument(
                "max_thickness must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A run of ink along one scan line: `lane` is the row (or column) index and
/// `[start, end)` the extent along it.
#[derive(Debug, Clone, Copy)]
struct Run {
    lane: u32,
    start: u32,
    end: u32,
}

/// Finds long ink runs along `lanes` scan lines of length `len`, groups runs
/// in neighbouring lanes that overlap into bands, and keeps the runs of bands
/// no thicker than `max_thickness` lanes.
fn thin_bands(
    lanes: u32,
    len: u32,
    min_len: u32,
    max_thickness: u32,
    dark: impl Fn(u32, u32) -> bool,
) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    let mut lane_start = Vec::with_capacity(lanes as usize + 1);
    for lane in 0..lanes {
        lane_start.push(runs.len());
        let mut pos = 0;
        while pos < len {
            if !dark(lane, pos) {
                pos += 1;
                continue;
            }
            let start = pos;
            while pos < len && dark(lane, pos) {
                pos += 1;
            }
            if pos - start >= min_len {
                runs.push(Run {
                    lane,
                    start,
                    end: pos,
                });
            }
        }
    }
    lane_start.push(runs.len());

    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for lane in 1..lanes as usize {
        for a in lane_start[lane - 1]..lane_start[lane] {
            for b in lane_start[lane]..lane_start[lane + 1] {
                if runs[a].start < runs[b].end && runs[b].start < runs[a].end {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                }
            }
        }
    }

    let mut span: Vec<(u32, u32)> = vec![(u32::MAX, 0); runs.len()];
    for (i, run) in runs.iter().enumerate() {
        let r = find(&mut parent, i);
        span[r].0 = span[r].0.min(run.lane);
        span[r].1 = span[r].1.max(run.lane);
    }
    (0..runs.len())
        .filter(|&i| {
            let (lo, hi) = span[find(&mut parent, i)];
            hi - lo < max_thickness
        })
        .map(|i| runs[i])
        .collect()
}

/// Marks horizontal and vertical ruling lines: long thin bands of ink.
pub fn detect_ruling_lines(img: &GrayImage, p: &LineDetectParams) -> BitMask {
    let (w, h) = img.dimensions();
    let mut mask = BitMask::new(w, h);
    if w == 0 || h == 0 {
        return mask;
    }
    let t = p.binarize_threshold;
    let dark = |x: u32, y: u32| img.get_pixel(x, y).0[0] < t;
    let min_len = |dim: u32| ((p.min_run_fraction * dim as f64).ceil() as u32).max(1);

    for run in thin_bands(h, w, min_len(w), p.max_thickness, |y, x| dark(x, y)) {
        for x in run.start..run.end {
            mask.set(x, run.lane, true);
        }
    }
    for run in thin_bands(w, h, min_len(h), p.max_thickness, dark) {
        for y in run.start..run.end {
            mask.set(run.lane, y, true);
        }
    }
    mask
}

/// Paints every detected ruling-line pixel with the background value.
pub fn remove_lines(img: &GrayImage, p: &LineDetectParams) -> GrayImage {
    let mask = detect_ruling_lines(img, p);
    let mut out = img.clone();
    for (x, y) in mask.iter_set() {
        out.put_pixel(x, y, image::Luma([p.background_value]));
    }
    out
}

/// Where to draw table lines. Separators are continuous coordinates; a line
/// of width `line_width` occupies pixel rows (or columns) starting at
/// `floor(separator)`, limited to the table extent on the other axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub row_separators: Vec<f64>,
    pub col_separators: Vec<f64>,
    pub line_width: u32,
    pub line_value: u8,
    /// Horizontal extent `[x_from, x_to)` of the table in pixels.
    pub x_extent: (u32, u32),
    /// Vertical extent `[y_from, y_to)` of the table in pixels.
    pub y_extent: (u32, u32),
}

impl GridSpec {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let check = |seps: &[f64], limit: u32, what: &str| -> Result<()> {
            for (i, &s) in seps.iter().enumerate() {
                if !s.is_finite() || s < 0.0 || s >= limit as f64 {
                    return Err(Error::validation(format!(
                        "{what} separator {s} outside image (0..{limit})"
                    )));
                }
                if i > 0 && seps[i - 1] >= s {
                    return Err(Error::validation(format!(
                        "{what} separators not strictly increasing"
                    )));
                }
            }
            Ok(())
        };
        check(&self.row_separators, height, "row")?;
        check(&self.col_separators, width, "column")?;
        if self.line_width == 0 {
            return Err(Error::validation("line_width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineMode {
    Horizontal,
    Vertical,
    Both,
}

/// Draws lines on the grid separators; returns the new image and the drawn pixels.
pub fn add_lines_with_mask(
    img: &GrayImage,
    grid: &GridSpec,
    mode: LineMode,
) -> Result<(GrayImage, BitMask)> {
    let (w, h) = img.dimensions();
    grid.validate(w, h)?;
    let mut out = img.clone();
    let mut drawn = BitMask::new(w, h);
    let value = image::Luma([grid.line_value]);
    let (x_from, x_to) = (grid.x_extent.0.min(w), grid.x_extent.1.min(w));
    let (y_from, y_to) = (grid.y_extent.0.min(h), grid.y_extent.1.min(h));

    if matches!(mode, LineMode::Horizontal | LineMode::Both) {
        for &sep in &grid.row_separators {
            let y0 = sep.floor() as u32;
            for y in y0..(y0 + grid.line_width).min(h) {
                for x in x_from..x_to {
                    out.put_pixel(x, y, value);
                    drawn.set(x, y, true);
                }
            }
        }
    }
    if matches!(mode, LineMode::Vertical | LineMode::Both) {
        for &sep in &grid.col_separators {
            let x0 = sep.floor() as u32;
            for x in x0..(x0 + grid.line_width).min(w) {
                for y in y_from..y_to {
                    out.put_pixel(x, y, value);
                    drawn.set(x, y, true);
                }
            }
        }
    }
    Ok((out, drawn))
}

pub fn add_lines(img: &GrayImage, grid: &GridSpec, mode: LineMode) -> Result<GrayImage> {
    add_lines_with_mask(img, grid, mode).map(|(out, _)| out)
}

/// Derives line positions from ground-truth cells.
///
/// The separator between rows `r` and `r + 1` sits midway between the lowest
/// bottom edge of cells ending on row `r` and the highest top edge of cells
/// starting on row `r + 1`; cells spanning that boundary take no part. A
/// boundary with no such cells on one side gets no separator. Columns are
/// handled the same way.
pub fn grid_from_cells(page: &TablePage) -> Result<GridSpec> {
    let cells = &page.cells;
    let (x_extent, y_extent) = if cells.is_empty() {
        ((0, 0), (0, 0))
    } else {
        let x_from = cells
            .iter()
            .map(|c| c.bbox.x1())
            .fold(f64::INFINITY, f64::min);
        let x_to = cells.iter().map(|c| c.bbox.x2()).fold(0.0, f64::max);
        let y_from = cells
            .iter()
            .map(|c| c.bbox.y1())
            .fold(f64::INFINITY, f64::min);
        let y_to = cells.iter().map(|c| c.bbox.y2()).fold(0.0, f64::max);
        (
            (x_from.floor() as u32, x_to.ceil() as u32),
            (y_from.floor() as u32, y_to.ceil() as u32),
        )
    };
    let row_separators = separators(
        cells,
        |c| (c.grid.start_row, c.grid.end_row),
        |c| (c.bbox.y1(), c.bbox.y2()),
        "row",
    )?;
    let col_separators = separators(
        cells,
        |c| (c.grid.start_col, c.grid.end_col),
        |c| (c.bbox.x1(), c.bbox.x2()),
        "column",
    )?;
    Ok(GridSpec {
        row_separators,
        col_separators,
        line_width: 1,
        line_value: 0,
        x_extent,
        y_extent,
    })
}

fn separators(
    cells: &[Cell],
    range: impl Fn(&Cell) -> (u32, u32),
    extent: impl Fn(&Cell) -> (f64, f64),
    what: &str,
) -> Result<Vec<f64>> {
    let Some(last) = cells.iter().map(|c| range(c).1).max() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for r in 0..last {
        let upper = cells
            .iter()
            .filter(|c| range(c).1 == r)
            .map(|c| extent(c).1)
            .fold(f64::NEG_INFINITY, f64::max);
        let lower = cells
            .iter()
            .filter(|c| range(c).0 == r + 1)
            .map(|c| extent(c).0)
            .fold(f64::INFINITY, f64::min);
        if !upper.is_finite() || !lower.is_finite() {
            continue;
        }
        if lower < upper {
            let ids: Vec<u32> = cells
                .iter()
                .filter(|c| range(c).1 == r || range(c).0 == r + 1)
                .map(|c| c.id)
                .collect();
            return Err(Error::Validation {
                message: format!("{what} {r} overlaps {what} {} by {}", r + 1, upper - lower),
                ids,
            });
        }
        out.push((upper + lower) / 2.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskScope {
    #[default]
    WholeImage,
    PerCell,
}

/// Multiplies pixel values by `factor`, rounding and clamping to 255. With
/// [`MaskScope::PerCell`] only pixels whose centre lies in a cell are touched.
pub fn mask_intensity(
    img: &GrayImage,
    factor: f64,
    scope: MaskScope,
    cells: Option<&[Cell]>,
) -> Result<GrayImage> {
    if !factor.is_finite() || factor < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "mask factor must be >= 1, got {factor}"
        )));
    }
    let scale = |v: u8| -> u8 { (v as f64 * factor).round().min(255.0) as u8 };
    let mut out = img.clone();
    match scope {
        MaskScope::WholeImage => {
            for p in out.pixels_mut() {
                p.0[0] = scale(p.0[0]);
            }
        }
        MaskScope::PerCell => {
            let cells = cells
                .ok_or_else(|| Error::InvalidArgument("per-cell masking needs cells".into()))?;
            let (w, h) = img.dimensions();
            let mut in_scope = BitMask::new(w, h);
            for c in cells {
                let b = &c.bbox;
                // pixel x is in scope when x + 0.5 lies in [x1, x2)
                let x_from = (b.x1() - 0.5).ceil().max(0.0) as u32;
                let x_to = ((b.x2() - 0.5).ceil().max(0.0) as u32).min(w);
                let y_from = (b.y1() - 0.5).ceil().max(0.0) as u32;
                let y_to = ((b.y2() - 0.5).ceil().max(0.0) as u32).min(h);
                for y in y_from..y_to {
                    for x in x_from..x_to {
                        in_scope.set(x, y, true);
                    }
                }
            }
            for (x, y) in in_scope.iter_set() {
                let p = out.get_pixel_mut(x, y);
                p.0[0] = scale(p.0[0]);
            }
        }
    }
    Ok(out)
}

/// The named augmentations exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    /// Unmodified image.
    Original,
    /// All ruling lines removed.
    Nlt,
    /// Lines removed, then horizontal separators drawn.
    Hlt,
    /// Lines removed, then vertical separators drawn.
    Vlt,
    /// Lines removed, then both separator families drawn.
    Hvlt,
    Mask2,
    Mask3,
}

impl Augmentation {
    /// Parses a command-line name (`nlt`, `hlt`, `vlt`, `hvlt`, `mask2`, `mask3`, `original`).
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "original" | "none" => Augmentation::Original,
            "nlt" => Augmentation::Nlt,
            "hlt" => Augmentation::Hlt,
            "vlt" => Augmentation::Vlt,
            "hvlt" | "hlt+vlt" => Augmentation::Hvlt,
            "mask2" => Augmentation::Mask2,
            "mask3" => Augmentation::Mask3,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown augmentation {other:?}"
                )))
            }
        })
    }

    /// Maps a predictor label (`original`, `NLT`, `HLT`, `VLT`, `HLT+VLT`) to
    /// the augmentation its inputs receive. Unknown labels see the original image.
    pub fn for_model_label(label: &str) -> Self {
        match Augmentation::from_name(label) {
            Ok(
                a
                @ (Augmentation::Nlt | Augmentation::Hlt | Augmentation::Vlt | Augmentation::Hvlt),
            ) => a,
            _ => Augmentation::Original,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Augmentation::Original => "original",
            Augmentation::Nlt => "nlt",
            Augmentation::Hlt => "hlt",
            Augmentation::Vlt => "vlt",
            Augmentation::Hvlt => "hvlt",
            Augmentation::Mask2 => "mask2",
            Augmentation::Mask3 => "mask3",
        }
    }

    pub fn apply(
        &self,
        img: &GrayImage,
        page: &TablePage,
        p: &LineDetectParams,
    ) -> Result<GrayImage> {
        let redraw = |mode| -> Result<GrayImage> {
            let grid = grid_from_cells(page)?;
            add_lines(&remove_lines(img, p), &grid, mode)
        };
        match self {
            Augmentation::Original => Ok(img.clone()),
            Augmentation::Nlt => Ok(remove_lines(img, p)),
            Augmentation::Hlt => redraw(LineMode::Horizontal),
            Augmentation::Vlt => redraw(LineMode::Vertical),
            Augmentation::Hvlt => redraw(LineMode::Both),
            Augmentation::Mask2 => mask_intensity(img, 2.0, MaskScope::WholeImage, None),
            Augmentation::Mask3 => mask_intensity(img, 3.0, MaskScope::WholeImage, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::table::GridCoord;

    fn white(w: u32, h: u32) -> GrayImage {
        GrayImage::from_pixel(w, h, image::Luma([255]))
    }

    fn cell(id: u32, b: [f64; 4], g: [u32; 4]) -> Cell {
        Cell::new(
            id,
            BBox::try_from(b).unwrap(),
            GridCoord::try_from(g).unwrap(),
        )
    }

    #[test]
    fn full_width_band_detected_exactly() {
        let mut img = white(100, 60);
        for y in 20..22 {
            for x in 0..100 {
                img.put_pixel(x, y, image::Luma([0]));
            }
        }
        let mask = detect_ruling_lines(&img, &LineDetectParams::default());
        let mut expected = BitMask::new(100, 60);
        for y in 20..22 {
            for x in 0..100 {
                expected.set(x, y, true);
            }
        }
        assert_eq!(mask, expected);
    }

    #[test]
    fn short_text_block_not_a_line() {
        let mut img = white(100, 60);
        for y in 10..30 {
            for x in 40..50 {
                img.put_pixel(x, y, image::Luma([0]));
            }
        }
        assert!(detect_ruling_lines(&img, &LineDetectParams::default()).is_empty());
    }

    #[test]
    fn thick_band_not_a_line() {
        let mut img = white(100, 60);
        for y in 10..20 {
            for x in 0..100 {
                img.put_pixel(x, y, image::Luma([0]));
            }
        }
        // ten rows thick horizontally; its columns are 10 px long, below 0.3 * 60
        assert!(detect_ruling_lines(&img, &LineDetectParams::default()).is_empty());
    }

    #[test]
    fn vertical_line_detected() {
        let mut img = white(80, 50);
        for y in 5..45 {
            img.put_pixel(30, y, image::Luma([10]));
        }
        let mask = detect_ruling_lines(&img, &LineDetectParams::default());
        assert_eq!(mask.count(), 40);
        assert!(mask.get(30, 5) && mask.get(30, 44));
    }

    #[test]
    fn remove_lines_identity_cases() {
        let p = LineDetectParams::default();
        let img = white(50, 40);
        assert_eq!(remove_lines(&img, &p), img);
        let mut dots = white(50, 40);
        dots.put_pixel(3, 3, image::Luma([0]));
        assert_eq!(remove_lines(&dots, &p), dots);
    }

    #[test]
    fn remove_lines_touches_only_mask() {
        let mut img = white(100, 60);
        for x in 0..100 {
            img.put_pixel(x, 30, image::Luma([0]));
        }
        img.put_pixel(5, 5, image::Luma([0]));
        let p = LineDetectParams::default();
        let mask = detect_ruling_lines(&img, &p);
        let out = remove_lines(&img, &p);
        for (x, y, px) in out.enumerate_pixels() {
            if mask.get(x, y) {
                assert_eq!(px.0[0], 255);
            } else {
                assert_eq!(px, img.get_pixel(x, y));
            }
        }
        assert_eq!(out.get_pixel(5, 5).0[0], 0);
    }

    fn two_by_two() -> TablePage {
        TablePage::new(
            "t",
            100,
            100,
            vec![
                cell(0, [0.0, 0.0, 40.0, 40.0], [0, 0, 0, 0]),
                cell(1, [50.0, 0.0, 90.0, 40.0], [0, 0, 1, 1]),
                cell(2, [0.0, 50.0, 40.0, 90.0], [1, 1, 0, 0]),
                cell(3, [50.0, 50.0, 90.0, 90.0], [1, 1, 1, 1]),
            ],
        )
    }

    #[test]
    fn grid_midpoints() {
        let g = grid_from_cells(&two_by_two()).unwrap();
        assert_eq!(g.row_separators, vec![45.0]);
        assert_eq!(g.col_separators, vec![45.0]);
        assert_eq!(g.x_extent, (0, 90));
    }

    #[test]
    fn grid_of_single_cell_is_empty() {
        let page = TablePage::new(
            "t",
            50,
            50,
            vec![cell(0, [5.0, 5.0, 45.0, 45.0], [0, 0, 0, 0])],
        );
        let g = grid_from_cells(&page).unwrap();
        assert!(g.row_separators.is_empty() && g.col_separators.is_empty());
    }

    #[test]
    fn grid_ignores_spanning_cells() {
        let page = TablePage::new(
            "t",
            100,
            100,
            vec![
                cell(0, [0.0, 0.0, 40.0, 90.0], [0, 1, 0, 0]),
                cell(1, [50.0, 0.0, 90.0, 40.0], [0, 0, 1, 1]),
                cell(2, [50.0, 50.0, 90.0, 90.0], [1, 1, 1, 1]),
            ],
        );
        let g = grid_from_cells(&page).unwrap();
        assert_eq!(g.row_separators, vec![45.0]);
        assert_eq!(g.col_separators, vec![45.0]);
    }

    #[test]
    fn grid_overlap_rejected() {
        let page = TablePage::new(
            "t",
            100,
            100,
            vec![
                cell(0, [0.0, 0.0, 40.0, 60.0], [0, 0, 0, 0]),
                cell(1, [0.0, 50.0, 40.0, 90.0], [1, 1, 0, 0]),
            ],
        );
        assert!(matches!(
            grid_from_cells(&page),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn add_lines_draws_one_band_per_separator() {
        let page = two_by_two();
        let g = grid_from_cells(&page).unwrap();
        let img = white(100, 100);
        let h = add_lines(&img, &g, LineMode::Horizontal).unwrap();
        for x in 0..90 {
            assert_eq!(h.get_pixel(x, 45).0[0], 0);
        }
        assert_eq!(h.get_pixel(95, 45).0[0], 255);
        let dark_rows = (0..100).filter(|&y| h.get_pixel(10, y).0[0] == 0).count();
        assert_eq!(dark_rows, 1);

        let (_, drawn) = add_lines_with_mask(&img, &g, LineMode::Both).unwrap();
        assert_eq!(drawn.count(), 90 + 90 - 1);
    }

    #[test]
    fn add_lines_without_separators_is_identity() {
        let page = TablePage::new(
            "t",
            60,
            40,
            vec![cell(0, [0.0, 0.0, 60.0, 40.0], [0, 0, 0, 0])],
        );
        let g = grid_from_cells(&page).unwrap();
        let img = white(60, 40);
        for mode in [LineMode::Horizontal, LineMode::Vertical, LineMode::Both] {
            assert_eq!(add_lines(&img, &g, mode).unwrap(), img);
        }
    }

    #[test]
    fn add_lines_rejects_out_of_image_separator() {
        let g = GridSpec {
            row_separators: vec![150.0],
            col_separators: vec![],
            line_width: 1,
            line_value: 0,
            x_extent: (0, 10),
            y_extent: (0, 10),
        };
        assert!(add_lines(&white(20, 20), &g, LineMode::Horizontal).is_err());
    }

    #[test]
    fn masking_examples() {
        let img = GrayImage::from_raw(3, 1, vec![100, 150, 90]).unwrap();
        let m2 = mask_intensity(&img, 2.0, MaskScope::WholeImage, None).unwrap();
        assert_eq!(m2.as_raw(), &vec![200, 255, 180]);
        let m3 = mask_intensity(&img, 3.0, MaskScope::WholeImage, None).unwrap();
        assert_eq!(m3.as_raw()[2], 255);
        assert_eq!(
            mask_intensity(&img, 1.0, MaskScope::WholeImage, None).unwrap(),
            img
        );
    }

    #[test]
    fn masking_per_cell_scope() {
        let img = GrayImage::from_pixel(10, 10, image::Luma([50]));
        let cells = vec![cell(0, [0.0, 0.0, 5.0, 5.0], [0, 0, 0, 0])];
        let out = mask_intensity(&img, 2.0, MaskScope::PerCell, Some(&cells)).unwrap();
        assert_eq!(out.get_pixel(4, 4).0[0], 100);
        assert_eq!(out.get_pixel(5, 5).0[0], 50);
        assert!(matches!(
            mask_intensity(&img, 2.0, MaskScope::PerCell, None),
            Err(Error::InvalidArgument(_))
        ));
        assert!(mask_intensity(&img, 0.5, MaskScope::WholeImage, None).is_err());
    }

    #[test]
    fn augmentation_names() {
        for n in ["nlt", "hlt", "vlt", "hvlt", "mask2", "mask3"] {
            assert_eq!(Augmentation::from_name(n).unwrap().name(), n);
        }
        assert!(Augmentation::from_name("blur").is_err());
        assert_eq!(Augmentation::for_model_label("HLT+VLT"), Augmentation::Hvlt);
        assert_eq!(
            Augmentation::for_model_label("original"),
            Augmentation::Original
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn masking_is_monotone(pixels in prop::collection::vec(any::<u8>(), 16)) {
                let img = GrayImage::from_raw(4, 4, pixels).unwrap();
                let m2 = mask_intensity(&img, 2.0, MaskScope::WholeImage, None).unwrap();
                let m3 = mask_intensity(&img, 3.0, MaskScope::WholeImage, None).unwrap();
                for ((a, b), c) in img.as_raw().iter().zip(m2.as_raw()).zip(m3.as_raw()) {
                    prop_assert!(a <= b && b <= c);
                }
            }
        }
    }
}
