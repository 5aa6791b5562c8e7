//! Axis-aligned rectangle arithmetic.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner,
//! x growing rightward and y downward. Areas are `width * height` with no
//! inclusive-pixel `+1` terms, so IoU does not depend on image resolution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slack for [`contains`].
pub const CONTAINS_EPS: f64 = 1e-9;

/// A non-degenerate axis-aligned box. Serialized as `[x1, y1, x2, y2]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite, negative or zero-area geometry.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite coordinate in ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "negative coordinate in ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::InvalidGeometry(format!(
                "degenerate box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Total order on `(y1, x1, y2, x2)`, the reading order used for output sorting.
    pub fn reading_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.y1
            .total_cmp(&other.y1)
            .then(self.x1.total_cmp(&other.x1))
            .then(self.y2.total_cmp(&other.y2))
            .then(self.x2.total_cmp(&other.x2))
    }
}

impl fmt::Debug for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BBox({}, {}, {}, {})",
            self.x1, self.y1, self.x2, self.y2
        )
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

pub fn area(b: &BBox) -> f64 {
    b.width() * b.height()
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = area(a) + area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// True iff `inner` lies inside `outer`, allowing each edge to overshoot by `eps`.
pub fn contains(outer: &BBox, inner: &BBox, eps: f64) -> bool {
    outer.x1 - eps <= inner.x1
        && inner.x2 <= outer.x2 + eps
        && outer.y1 - eps <= inner.y1
        && inner.y2 <= outer.y2 + eps
}

/// IoU estimated by point counting on a lattice of spacing `step` laid over
/// the union's bounding rectangle (sample points at lattice-cell centres).
///
/// Membership in an axis-aligned box factorises into an x test and a y test,
/// so the lattice is enumerated one axis at a time: every column is classified
/// by which boxes its x falls in, every row likewise, and the 2-D counts are
/// products of class sizes. The result equals enumerating every lattice point,
/// and uses no area formula.
pub fn raster_iou_oracle(a: &BBox, b: &BBox, step: f64) -> Result<f64> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "raster step must be positive, got {step}"
        )));
    }
    let x_classes = classify_axis(
        a.x1.min(b.x1),
        a.x2.max(b.x2),
        step,
        (a.x1, a.x2),
        (b.x1, b.x2),
    );
    let y_classes = classify_axis(
        a.y1.min(b.y1),
        a.y2.max(b.y2),
        step,
        (a.y1, a.y2),
        (b.y1, b.y2),
    );

    // class bit 0: inside a, bit 1: inside b
    let mut in_a = 0u64;
    let mut in_b = 0u64;
    let mut in_both = 0u64;
    for (xc, &nx) in x_classes.iter().enumerate() {
        for (yc, &ny) in y_classes.iter().enumerate() {
            let n = nx * ny;
            let mask = xc & yc;
            if mask & 1 != 0 {
                in_a += n;
            }
            if mask & 2 != 0 {
                in_b += n;
            }
            if mask == 3 {
                in_both += n;
            }
        }
    }
    let union = in_a + in_b - in_both;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(in_both as f64 / union as f64)
}

fn classify_axis(lo: f64, hi: f64, step: f64, a: (f64, f64), b: (f64, f64)) -> [u64; 4] {
    let mut counts = [0u64; 4];
    let n = ((hi - lo) / step).ceil() as u64;
    for i in 0..n {
        let p = lo + (i as f64 + 0.5) * step;
        let mut class = 0;
        if a.0 <= p && p < a.1 {
            class |= 1;
        }
        if b.0 <= p && p < b.1 {
            class |= 2;
        }
        counts[class] += 1;
    }
    counts
}
