//! Tables, cells, predictions and datasets, plus their JSON files.
//!
//! Struct fields are declared in alphabetical order so that serialization
//! emits sorted keys; together with serde_json's shortest round-trip float
//! printing this makes saved files canonical.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Inclusive row and column ranges of a cell. Serialized as
/// `[start_row, end_row, start_col, end_col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct GridCoord {
    pub start_row: u32,
    pub end_row: u32,
    pub start_col: u32,
    pub end_col: u32,
}

impl GridCoord {
    pub fn new(start_row: u32, end_row: u32, start_col: u32, end_col: u32) -> Result<Self> {
        if start_row > end_row || start_col > end_col {
            return Err(Error::validation(format!(
                "grid range inverted: rows {start_row}..={end_row}, cols {start_col}..={end_col}"
            )));
        }
        Ok(GridCoord {
            start_row,
            end_row,
            start_col,
            end_col,
        })
    }

    /// A single-slot cell at `(row, col)`.
    pub fn at(row: u32, col: u32) -> Self {
        GridCoord {
            start_row: row,
            end_row: row,
            start_col: col,
            end_col: col,
        }
    }

    pub fn rows_overlap(&self, other: &GridCoord) -> bool {
        self.start_row <= other.end_row && other.start_row <= self.end_row
    }

    pub fn cols_overlap(&self, other: &GridCoord) -> bool {
        self.start_col <= other.end_col && other.start_col <= self.end_col
    }

    pub fn overlaps(&self, other: &GridCoord) -> bool {
        self.rows_overlap(other) && self.cols_overlap(other)
    }

    pub fn spans_rows(&self) -> bool {
        self.end_row > self.start_row
    }

    pub fn spans_cols(&self) -> bool {
        self.end_col > self.start_col
    }
}

impl TryFrom<[u32; 4]> for GridCoord {
    type Error = Error;

    fn try_from(g: [u32; 4]) -> Result<Self> {
        GridCoord::new(g[0], g[1], g[2], g[3])
    }
}

impl From<GridCoord> for [u32; 4] {
    fn from(g: GridCoord) -> Self {
        [g.start_row, g.end_row, g.start_col, g.end_col]
    }
}

/// A ground-truth table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub bbox: BBox,
    pub content: Option<String>,
    pub grid: GridCoord,
    pub id: u32,
}

impl Cell {
    pub fn new(id: u32, bbox: BBox, grid: GridCoord) -> Self {
        Cell {
            bbox,
            content: None,
            grid,
            id,
        }
    }
}

/// One cropped table image and its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePage {
    pub cells: Vec<Cell>,
    pub height: u32,
    pub image_path: Option<PathBuf>,
    /// Ruling-line pixel mask, written only by the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_mask_path: Option<PathBuf>,
    pub table_id: String,
    /// Glyph pixel mask, written only by the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_mask_path: Option<PathBuf>,
    pub width: u32,
}

impl TablePage {
    pub fn new(table_id: impl Into<String>, width: u32, height: u32, cells: Vec<Cell>) -> Self {
        TablePage {
            cells,
            height,
            image_path: None,
            line_mask_path: None,
            table_id: table_id.into(),
            text_mask_path: None,
            width,
        }
    }

    pub fn cell(&self, id: u32) -> Option<&Cell> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// Checks id uniqueness, image bounds and grid disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let dup: Vec<u32> = self
            .cells
            .iter()
            .filter(|c| !seen.insert(c.id))
            .map(|c| c.id)
            .collect();
        if !dup.is_empty() {
            return Err(Error::Validation {
                message: format!("table {}: duplicate cell ids", self.table_id),
                ids: dup,
            });
        }

        let (w, h) = (self.width as f64, self.height as f64);
        let outside: Vec<u32> = self
            .cells
            .iter()
            .filter(|c| c.bbox.x2() > w || c.bbox.y2() > h)
            .map(|c| c.id)
            .collect();
        if !outside.is_empty() {
            return Err(Error::Validation {
                message: format!(
                    "table {}: cell bbox exceeds image bounds {}x{}",
                    self.table_id, self.width, self.height
                ),
                ids: outside,
            });
        }

        check_grid_disjoint(&self.cells).map_err(|ids| Error::Validation {
            message: format!(
                "table {}: cells occupy the same grid position",
                self.table_id
            ),
            ids,
        })
    }
}

/// Returns the ids of every cell whose grid rectangle overlaps another's.
pub(crate) fn check_grid_disjoint(cells: &[Cell]) -> std::result::Result<(), Vec<u32>> {
    let mut bad = BTreeSet::new();
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            if a.grid.overlaps(&b.grid) {
                bad.insert(a.id);
                bad.insert(b.id);
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.into_iter().collect())
    }
}

/// One model's boxes for one table image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub boxes: Vec<BBox>,
    pub model_index: u32,
    pub model_label: String,
}

impl PredictionSet {
    pub fn new(model_index: u32, model_label: impl Into<String>, boxes: Vec<BBox>) -> Self {
        PredictionSet {
            boxes,
            model_index,
            model_label: model_label.into(),
        }
    }
}

/// All models' predictions for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePredictions {
    pub predictions: Vec<PredictionSet>,
    pub table_id: String,
}

impl TablePredictions {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in &self.predictions {
            if !seen.insert(p.model_index) {
                return Err(Error::InvalidInput(format!(
                    "table {}: duplicate model_index {}",
                    self.table_id, p.model_index
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub pages: Vec<TablePage>,
    pub split_label: String,
}

impl Dataset {
    pub fn new(split_label: impl Into<String>, pages: Vec<TablePage>) -> Self {
        Dataset {
            pages,
            split_label: split_label.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in &self.pages {
            if !seen.insert(p.table_id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate table_id {}",
                    p.table_id
                )));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn page(&self, table_id: &str) -> Option<&TablePage> {
        self.pages.iter().find(|p| p.table_id == table_id)
    }

    pub fn total_cells(&self) -> usize {
        self.pages.iter().map(|p| p.cells.len()).sum()
    }
}

/// Reads and validates a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let ds: Dataset = read_json(path.as_ref())?;
    ds.validate()?;
    Ok(ds)
}

/// Writes a dataset in canonical form: identical datasets give identical bytes.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_json(ds, path.as_ref())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<TablePredictions> {
    let p: TablePredictions = read_json(path.as_ref())?;
    p.validate()?;
    Ok(p)
}

pub fn save_predictions(p: &TablePredictions, path: impl AsRef<Path>) -> Result<()> {
    write_json(p, path.as_ref())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let location = format!("{}: {}", path.display(), e.path());
        Error::parse(location, e.into_inner().to_string())
    })
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
