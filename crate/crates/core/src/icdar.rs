//! Import of cTDaR-style ground-truth XML.
//!
//! ```xml
//! <document filename="cTDaR_t10001.jpg">
//!   <table>
//!     <Coords points="0,0 200,0 200,80 0,80"/>
//!     <cell start-row="0" end-row="0" start-col="0" end-col="0">
//!       <Coords points="10,20 110,20 110,60 10,60"/>
//!     </cell>
//!   </table>
//! </document>
//! ```
//!
//! Cell polygons are collapsed to their axis-aligned min/max envelope. The
//! page size is not stored in the XML, so it is taken as the ceiling of the
//! largest coordinate seen in the table.

use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::table::{Cell, GridCoord, TablePage};

/// Imports a file holding exactly one table.
pub fn import_icdar_xml(path: impl AsRef<Path>) -> Result<TablePage> {
    let path = path.as_ref();
    let mut pages = import_icdar_tables(path)?;
    match pages.len() {
        1 => Ok(pages.remove(0)),
        n => Err(Error::InvalidInput(format!(
            "{}: expected exactly one <table>, found {n}",
            path.display()
        ))),
    }
}

/// Imports every table in the file. A single table takes the file stem as its
/// id; several tables are suffixed `-t0`, `-t1`, ... in document order.
pub fn import_icdar_tables(path: impl AsRef<Path>) -> Result<Vec<TablePage>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".to_string());
    parse_icdar_str(&text, &stem)
}

#[derive(Default)]
struct RawTable {
    outline: Vec<(f64, f64)>,
    cells: Vec<(GridCoord, Vec<(f64, f64)>)>,
}

/// A `<cell>` being read: its grid position and, once seen, its points.
type OpenCell = (GridCoord, Option<Vec<(f64, f64)>>);

/// Parses XML text; `stem` seeds the table ids.
pub fn parse_icdar_str(text: &str, stem: &str) -> Result<Vec<TablePage>> {
    let mut reader = Reader::from_str(text);
    let mut tables: Vec<RawTable> = Vec::new();
    let mut in_table = false;
    let mut open_cell: Option<OpenCell> = None;

    loop {
        let event = reader.read_event().map_err(|e| {
            Error::parse(
                format!("xml byte {}", reader.buffer_position()),
                e.to_string(),
            )
        })?;
        let (e, self_closing) = match event {
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(e) => {
                match e.name().as_ref() {
                    b"cell" => {
                        if let Some((grid, pts)) = open_cell.take() {
                            let table = tables.last_mut().expect("inside a table");
                            let cell_no = table.cells.len();
                            let pts = pts.ok_or_else(|| {
                                Error::parse(format!("cell {cell_no}"), "cell has no Coords")
                            })?;
                            table.cells.push((grid, pts));
                        }
                    }
                    b"table" => in_table = false,
                    _ => {}
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        match e.name().as_ref() {
            b"table" => {
                tables.push(RawTable::default());
                in_table = !self_closing;
            }
            b"cell" if in_table => {
                let cell_no = tables.last().map_or(0, |t| t.cells.len());
                let grid = grid_attrs(&e, cell_no)?;
                if self_closing {
                    return Err(Error::parse(
                        format!("cell {cell_no}"),
                        "cell has no Coords",
                    ));
                }
                open_cell = Some((grid, None));
            }
            b"Coords" if in_table => {
                let raw = attr(&e, "points")?
                    .ok_or_else(|| Error::parse("Coords", "missing points attribute"))?;
                let table = tables.last_mut().expect("inside a table");
                match open_cell.as_mut() {
                    Some((_, pts)) => {
                        let cell_no = table.cells.len();
                        let parsed = parse_points(&raw)
                            .map_err(|m| Error::parse(format!("cell {cell_no} points"), m))?;
                        *pts = Some(parsed);
                    }
                    None => {
                        table.outline = parse_points(&raw)
                            .map_err(|m| Error::parse("table Coords points", m))?;
                    }
                }
            }
            _ => {}
        }
    }

    let multi = tables.len() > 1;
    tables
        .into_iter()
        .enumerate()
        .map(|(k, raw)| {
            let id = if multi {
                format!("{stem}-t{k}")
            } else {
                stem.to_string()
            };
            build_page(id, raw)
        })
        .collect()
}

fn attr(e: &BytesStart, name: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::parse("xml attribute", err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a
                .unescape_value()
                .map_err(|err| Error::parse(format!("attribute {name}"), err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn grid_attrs(e: &BytesStart, cell_no: usize) -> Result<GridCoord> {
    let get = |name: &str| -> Result<u32> {
        let raw = attr(e, name)?.ok_or_else(|| {
            Error::parse(
                format!("cell {cell_no}"),
                format!("missing attribute {name}"),
            )
        })?;
        raw.trim().parse().map_err(|_| {
            Error::parse(
                format!("cell {cell_no}"),
                format!("bad {name} value {raw:?}"),
            )
        })
    };
    let (sr, er, sc, ec) = (
        get("start-row")?,
        get("end-row")?,
        get("start-col")?,
        get("end-col")?,
    );
    GridCoord::new(sr, er, sc, ec)
}

fn parse_points(raw: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let pts = raw
        .split_whitespace()
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| format!("point {pair:?} is not of the form x,y"))?;
            let x: f64 = x.trim().parse().map_err(|_| format!("bad x in {pair:?}"))?;
            let y: f64 = y.trim().parse().map_err(|_| format!("bad y in {pair:?}"))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(format!("non-finite point {pair:?}"));
            }
            Ok((x, y))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    if pts.is_empty() {
        return Err("no points".to_string());
    }
    Ok(pts)
}

fn envelope(pts: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    pts.iter().fold(
        (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ),
        |(x1, y1, x2, y2), &(x, y)| (x1.min(x), y1.min(y), x2.max(x), y2.max(y)),
    )
}

fn build_page(table_id: String, raw: RawTable) -> Result<TablePage> {
    let mut max_x: f64 = 0.0;
    let mut max_y: f64 = 0.0;
    if !raw.outline.is_empty() {
        let (_, _, x2, y2) = envelope(&raw.outline);
        max_x = max_x.max(x2);
        max_y = max_y.max(y2);
    }
    let mut cells = Vec::with_capacity(raw.cells.len());
    for (id, (grid, pts)) in raw.cells.into_iter().enumerate() {
        let id = id as u32;
        let (x1, y1, x2, y2) = envelope(&pts);
        let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| Error::Validation {
            message: format!("table {table_id}: {e}"),
            ids: vec![id],
        })?;
        max_x = max_x.max(x2);
        max_y = max_y.max(y2);
        cells.push(Cell::new(id, bbox, grid));
    }
    let page = TablePage::new(table_id, max_x.ceil() as u32, max_y.ceil() as u32, cells);
    page.validate()?;
    Ok(page)
}
