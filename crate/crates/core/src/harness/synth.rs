use rand::Rng;

use super::keyed_rng;
use crate::augment::{add_lines_with_mask, BitMask, GrayImage, GridSpec, LineMode};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::table::{Cell, Dataset, GridCoord, TablePage};

const GLYPH_HEIGHT: u32 = 6;
const GLYPH_LEADING: u32 = 3;
const WORD_SPACE: u32 = 3;
const CELL_PADDING: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub rows: u32,
    pub cols: u32,
    /// Chance that a free slot merges with its right or bottom neighbour.
    pub span_prob: f64,
    pub cell_w: u32,
    pub cell_h: u32,
    /// Space between neighbouring cells; ruling lines run down its middle.
    pub gap: u32,
    /// Space between the table and the image border.
    pub margin: u32,
    pub draw_lines: bool,
    pub line_width: u32,
    /// Chance that each text line of a cell carries pseudo-glyphs (the first
    /// line always does).
    pub glyph_density: f64,
    /// Inclusive range of glyph intensities, drawn once per cell.
    pub ink_range: (u8, u8),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rows: 4,
            cols: 4,
            span_prob: 0.15,
            cell_w: 80,
            cell_h: 30,
            gap: 8,
            margin: 12,
            draw_lines: true,
            line_width: 1,
            glyph_density: 0.8,
            ink_range: (20, 100),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be positive");
        }
        if !(0.0..=1.0).contains(&self.span_prob) || !(0.0..=1.0).contains(&self.glyph_density) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.cell_w <= 2 * CELL_PADDING + 4 || self.cell_h <= 2 * CELL_PADDING + GLYPH_HEIGHT {
            return bad("cells too small to hold glyphs");
        }
        if self.gap < 2 || self.margin < 2 || self.line_width == 0 {
            return bad("gap and margin must be at least 2 px, line_width at least 1");
        }
        if self.draw_lines && (self.line_width >= self.gap || self.line_width >= self.margin) {
            return bad("ruling lines must fit inside the gap and margin");
        }
        if self.ink_range.0 > self.ink_range.1 {
            return bad("ink_range is inverted");
        }
        let (w, h) = self.image_size();
        if w > 20_000 || h > 20_000 {
            return bad("table image exceeds 20000 px");
        }
        Ok(())
    }

    pub fn image_size(&self) -> (u32, u32) {
        let w = 2 * self.margin + self.cols * self.cell_w + (self.cols - 1) * self.gap;
        let h = 2 * self.margin + self.rows * self.cell_h + (self.rows - 1) * self.gap;
        (w, h)
    }

    fn slot_x(&self, col: u32) -> u32 {
        self.margin + col * (self.cell_w + self.gap)
    }

    fn slot_y(&self, row: u32) -> u32 {
        self.margin + row * (self.cell_h + self.gap)
    }
}

/// A generated table with its raster products.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTable {
    pub page: TablePage,
    pub image: GrayImage,
    pub line_mask: BitMask,
    pub text_mask: BitMask,
}

/// Tiles a `rows x cols` grid into 1x1, 1x2 or 2x1 cells.
fn layout(p: &SynthParams, rng: &mut impl Rng) -> Vec<GridCoord> {
    let (rows, cols) = (p.rows as usize, p.cols as usize);
    let mut taken = vec![vec![false; cols]; rows];
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let merge = rng.random::<f64>() < p.span_prob;
            let rightward = rng.random::<bool>();
            if taken[r][c] {
                continue;
            }
            let (mut er, mut ec) = (r, c);
            if merge {
                if rightward && c + 1 < cols && !taken[r][c + 1] {
                    ec = c + 1;
                } else if !rightward && r + 1 < rows {
                    er = r + 1;
                }
            }
            for row in taken.iter_mut().take(er + 1).skip(r) {
                for slot in row.iter_mut().take(ec + 1).skip(c) {
                    *slot = true;
                }
            }
            out.push(GridCoord {
                start_row: r as u32,
                end_row: er as u32,
                start_col: c as u32,
                end_col: ec as u32,
            });
        }
    }
    out
}

/// Renders one synthetic table. The output depends only on `(p, seed, table_id)`.
pub fn generate_table(p: &SynthParams, seed: u64, table_id: &str) -> Result<SyntheticTable> {
    p.validate()?;
    let mut rng = keyed_rng("synth", &[&seed.to_le_bytes(), table_id.as_bytes()]);
    let (w, h) = p.image_size();
    let mut image = GrayImage::from_pixel(w, h, image::Luma([255]));
    let mut text_mask = BitMask::new(w, h);

    let grids = layout(p, &mut rng);
    let mut cells = Vec::with_capacity(grids.len());
    for (id, grid) in grids.into_iter().enumerate() {
        let x1 = p.slot_x(grid.start_col);
        let y1 = p.slot_y(grid.start_row);
        let x2 = p.slot_x(grid.end_col) + p.cell_w;
        let y2 = p.slot_y(grid.end_row) + p.cell_h;
        let bbox = BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)?;

        // Glyphs stay inside the top-left slot, clear of every separator band.
        let ink = rng.random_range(p.ink_range.0..=p.ink_range.1);
        let gx1 = x1 + CELL_PADDING;
        let gx2 = x1 + p.cell_w - CELL_PADDING;
        let mut ty = y1 + CELL_PADDING;
        let mut first = true;
        while ty + GLYPH_HEIGHT <= y1 + p.cell_h - CELL_PADDING {
            let used = first || rng.random::<f64>() < p.glyph_density;
            let line_end = gx1 + ((gx2 - gx1) as f64 * rng.random_range(0.4..=1.0)) as u32;
            if used {
                let mut x = gx1;
                loop {
                    let word = rng.random_range(4..=14u32);
                    if x + word > line_end {
                        break;
                    }
                    for yy in ty..ty + GLYPH_HEIGHT {
                        for xx in x..x + word {
                            image.put_pixel(xx, yy, image::Luma([ink]));
                            text_mask.set(xx, yy, true);
                        }
                    }
                    x += word + WORD_SPACE;
                }
            }
            first = false;
            ty += GLYPH_HEIGHT + GLYPH_LEADING;
        }
        cells.push(Cell::new(id as u32, bbox, grid));
    }

    let mut line_mask = BitMask::new(w, h);
    if p.draw_lines {
        let half = |v: u32| v / 2;
        let mut rows = vec![half(p.margin) as f64];
        rows.extend((1..p.rows).map(|r| (p.slot_y(r) - p.gap + half(p.gap)) as f64));
        rows.push((h - 1 - half(p.margin)) as f64);
        let mut cols = vec![half(p.margin) as f64];
        cols.extend((1..p.cols).map(|c| (p.slot_x(c) - p.gap + half(p.gap)) as f64));
        cols.push((w - 1 - half(p.margin)) as f64);
        let frame = GridSpec {
            row_separators: rows,
            col_separators: cols,
            line_width: p.line_width,
            line_value: 0,
            x_extent: (half(p.margin), w - half(p.margin)),
            y_extent: (half(p.margin), h - half(p.margin)),
        };
        let (lined, drawn) = add_lines_with_mask(&image, &frame, LineMode::Both)?;
        image = lined;
        line_mask = drawn;
    }

    let page = TablePage::new(table_id, w, h, cells);
    page.validate()?;
    Ok(SyntheticTable {
        page,
        image,
        line_mask,
        text_mask,
    })
}

/// `n` tables with ids `t0000`, `t0001`, ...
pub fn generate_dataset(p: &SynthParams, n: usize, seed: u64) -> Result<Vec<SyntheticTable>> {
    (0..n)
        .map(|i| generate_table(p, seed, &format!("t{i:04}")))
        .collect()
}

/// Wraps generated tables as a dataset (without image paths).
pub fn to_dataset(tables: &[SyntheticTable], split_label: &str) -> Dataset {
    Dataset::new(split_label, tables.iter().map(|t| t.page.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_adjacency;

    #[test]
    fn one_by_one() {
        let p = SynthParams {
            rows: 1,
            cols: 1,
            ..Default::default()
        };
        let t = generate_table(&p, 1, "a").unwrap();
        assert_eq!(t.page.cells.len(), 1);
        let g = build_adjacency(&t.page.cells).unwrap();
        assert_eq!(g.degree(0).unwrap(), 0);
    }

    #[test]
    fn regular_grid_without_spans() {
        let p = SynthParams {
            rows: 3,
            cols: 3,
            span_prob: 0.0,
            ..Default::default()
        };
        let t = generate_table(&p, 5, "a").unwrap();
        assert_eq!(t.page.cells.len(), 9);
        assert!(t
            .page
            .cells
            .iter()
            .all(|c| !c.grid.spans_rows() && !c.grid.spans_cols()));
    }

    #[test]
    fn deterministic() {
        let p = SynthParams {
            span_prob: 0.4,
            ..Default::default()
        };
        let a = generate_table(&p, 9, "x").unwrap();
        let b = generate_table(&p, 9, "x").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.image, generate_table(&p, 10, "x").unwrap().image);
    }

    #[test]
    fn spans_tile_the_grid() {
        let p = SynthParams {
            rows: 5,
            cols: 5,
            span_prob: 0.5,
            ..Default::default()
        };
        for seed in 0..20 {
            let t = generate_table(&p, seed, "s").unwrap();
            let slots: u32 = t
                .page
                .cells
                .iter()
                .map(|c| {
                    (c.grid.end_row - c.grid.start_row + 1)
                        * (c.grid.end_col - c.grid.start_col + 1)
                })
                .sum();
            assert_eq!(slots, 25);
            t.page.validate().unwrap();
        }
    }

    #[test]
    fn masks_are_disjoint_and_populated() {
        let t = generate_table(&SynthParams::default(), 3, "m").unwrap();
        assert!(t.line_mask.count() > 0);
        assert!(t.text_mask.count() > 0);
        assert_eq!(t.line_mask.overlap(&t.text_mask), 0);
        for (x, y) in t.line_mask.iter_set() {
            assert_eq!(t.image.get_pixel(x, y).0[0], 0);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = SynthParams {
            rows: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_table(&p, 0, "z"),
            Err(Error::InvalidArgument(_))
        ));
        let p = SynthParams {
            span_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_table(&p, 0, "z").is_err());
    }
}
