use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::keyed_rng;
use crate::augment::GrayImage;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::graph::build_adjacency;
use crate::table::{PredictionSet, TablePage};

/// Behaviour of one simulated cell detector.
///
/// Each ground-truth cell is missed with probability
/// `p_drop_base + degree_drop_gain * degree + intensity_drop_gain * faint^intensity_gamma`
/// (capped at 1), where `faint` in `[0, 1]` is the mean intensity of the
/// cell's ink. Detected cells are reported with Gaussian corner noise of
/// standard deviation `jitter_sigma + intensity_jitter_gain * faint^intensity_gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorParams {
    pub jitter_sigma: f64,
    pub p_drop_base: f64,
    pub degree_drop_gain: f64,
    pub intensity_gamma: f64,
    pub intensity_drop_gain: f64,
    pub intensity_jitter_gain: f64,
    /// Chance of an extra box covering at most a quarter of a detected cell.
    pub p_spurious: f64,
    pub seed: u64,
}

impl Default for PredictorParams {
    /// The identity predictor: every cell reported exactly.
    fn default() -> Self {
        PredictorParams {
            jitter_sigma: 0.0,
            p_drop_base: 0.0,
            degree_drop_gain: 0.0,
            intensity_gamma: 1.0,
            intensity_drop_gain: 0.0,
            intensity_jitter_gain: 0.0,
            p_spurious: 0.0,
            seed: 0,
        }
    }
}

impl PredictorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.p_drop_base) || !unit(self.p_spurious) {
            return Err(Error::InvalidArgument(
                "predictor probabilities must lie in [0, 1]".into(),
            ));
        }
        let nonneg = [
            self.jitter_sigma,
            self.degree_drop_gain,
            self.intensity_gamma,
            self.intensity_drop_gain,
            self.intensity_jitter_gain,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "predictor gains and sigma must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Mean ink intensity inside `bbox`, scaled to `[0, 1]`. Ink is any pixel
/// below white; a cell with no ink left is fully faint.
pub fn cell_faintness(img: &GrayImage, bbox: &BBox) -> f64 {
    let (w, h) = img.dimensions();
    let x_from = bbox.x1().floor() as u32;
    let y_from = bbox.y1().floor() as u32;
    let x_to = (bbox.x2().ceil() as u32).min(w);
    let y_to = (bbox.y2().ceil() as u32).min(h);
    let (mut sum, mut n) = (0u64, 0u64);
    for y in y_from..y_to {
        for x in x_from..x_to {
            let v = img.get_pixel(x, y).0[0];
            if v < 255 {
                sum += v as u64;
                n += 1;
            }
        }
    }
    if n == 0 {
        1.0
    } else {
        sum as f64 / (n as f64 * 255.0)
    }
}

fn jitter_box(b: &BBox, noise: [f64; 4], w: f64, h: f64) -> BBox {
    let clamp_axis = |lo: f64, hi: f64, limit: f64| -> (f64, f64) {
        let mut lo = lo.clamp(0.0, limit);
        let mut hi = hi.clamp(0.0, limit);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if hi - lo < 1.0 {
            let mid = ((lo + hi) / 2.0).clamp(0.5, limit - 0.5);
            lo = mid - 0.5;
            hi = mid + 0.5;
        }
        (lo, hi)
    };
    let (x1, x2) = clamp_axis(b.x1() + noise[0], b.x2() + noise[2], w);
    let (y1, y2) = clamp_axis(b.y1() + noise[1], b.y2() + noise[3], h);
    BBox::new(x1, y1, x2, y2).expect("clamped box is valid")
}

/// Simulates one model's detections on `image` (the page image as that model
/// sees it, after augmentation and masking).
///
/// Randomness for each cell comes from a generator keyed by
/// `(seed, model_index, table_id, cell_id)`, and each cell consumes a fixed
/// number of draws, so outputs do not depend on evaluation order and
/// changing one model's seed leaves other models untouched.
pub fn mock_predict(
    page: &TablePage,
    image: &GrayImage,
    p: &PredictorParams,
    model_index: u32,
    model_label: &str,
) -> Result<PredictionSet> {
    p.validate()?;
    if image.dimensions() != (page.width, page.height) {
        return Err(Error::InvalidInput(format!(
            "image is {}x{} but table {} is {}x{}",
            image.width(),
            image.height(),
            page.table_id,
            page.width,
            page.height
        )));
    }
    let degrees = build_adjacency(&page.cells)?.degrees();
    let (w, h) = (page.width as f64, page.height as f64);
    let mut boxes = Vec::new();
    for cell in &page.cells {
        let mut rng = keyed_rng(
            "predict",
            &[
                &p.seed.to_le_bytes(),
                &model_index.to_le_bytes(),
                page.table_id.as_bytes(),
                &cell.id.to_le_bytes(),
            ],
        );
        let u_drop: f64 = rng.random();
        let noise: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let u_spur: f64 = rng.random();
        let spur: [f64; 4] = std::array::from_fn(|_| rng.random());

        let faint_term = cell_faintness(image, &cell.bbox).powf(p.intensity_gamma);
        let p_drop = (p.p_drop_base
            + p.degree_drop_gain * degrees[&cell.id] as f64
            + p.intensity_drop_gain * faint_term)
            .min(1.0);
        let sigma = p.jitter_sigma + p.intensity_jitter_gain * faint_term;

        let detected = if u_drop < p_drop {
            None
        } else if sigma == 0.0 {
            Some(cell.bbox)
        } else {
            Some(jitter_box(&cell.bbox, noise.map(|z| z * sigma), w, h))
        };
        if let Some(b) = detected {
            boxes.push(b);
        }
        if u_spur < p.p_spurious {
            // each side 20-50% of the host, so at most a quarter of its area
            let host = detected.unwrap_or(cell.bbox);
            let sw = host.width() * (0.2 + 0.3 * spur[0]);
            let sh = host.height() * (0.2 + 0.3 * spur[1]);
            let sx = host.x1() + (host.width() - sw) * spur[2];
            let sy = host.y1() + (host.height() - sh) * spur[3];
            boxes.push(BBox::new(
                sx,
                sy,
                (sx + sw).min(host.x2()),
                (sy + sh).min(host.y2()),
            )?);
        }
    }
    Ok(PredictionSet::new(model_index, model_label, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::small_cell_filter;
    use crate::geometry::{self, contains, CONTAINS_EPS};
    use crate::harness::{generate_table, SynthParams};

    fn table() -> crate::harness::SyntheticTable {
        generate_table(&SynthParams::default(), 4, "p").unwrap()
    }

    #[test]
    fn identity_predictor_reproduces_gt() {
        let t = table();
        let out = mock_predict(
            &t.page,
            &t.image,
            &PredictorParams::default(),
            0,
            "original",
        )
        .unwrap();
        let gt: Vec<BBox> = t.page.cells.iter().map(|c| c.bbox).collect();
        assert_eq!(out.boxes, gt);
    }

    #[test]
    fn full_drop_is_empty() {
        let t = table();
        let p = PredictorParams {
            p_drop_base: 1.0,
            ..Default::default()
        };
        assert!(mock_predict(&t.page, &t.image, &p, 0, "x")
            .unwrap()
            .boxes
            .is_empty());
    }

    #[test]
    fn spurious_boxes_are_filtered_true_boxes_kept() {
        let t = table();
        let n = t.page.cells.len();
        let p = PredictorParams {
            jitter_sigma: 1.5,
            p_spurious: 1.0,
            seed: 3,
            ..Default::default()
        };
        let sets: Vec<PredictionSet> = (0..3)
            .map(|i| mock_predict(&t.page, &t.image, &p, i, "m").unwrap())
            .collect();
        for s in &sets {
            assert_eq!(s.boxes.len(), 2 * n);
            for pair in s.boxes.chunks(2) {
                assert!(contains(&pair[0], &pair[1], CONTAINS_EPS));
                assert!(geometry::area(&pair[1]) / geometry::area(&pair[0]) <= 0.25 + 1e-12);
            }
        }
        let out = small_cell_filter(&sets, 0.5).unwrap();
        assert_eq!(out.removed.len(), 3 * n);
        assert!(out.removed.iter().all(|r| r.box_index % 2 == 1));
        assert!(out.sets.iter().all(|s| s.boxes.len() == n));
    }

    #[test]
    fn streams_are_per_model() {
        let t = table();
        let p = PredictorParams {
            jitter_sigma: 2.0,
            p_drop_base: 0.2,
            seed: 1,
            ..Default::default()
        };
        let a0 = mock_predict(&t.page, &t.image, &p, 0, "a").unwrap();
        let a1 = mock_predict(&t.page, &t.image, &p, 1, "b").unwrap();
        assert_ne!(a0.boxes, a1.boxes);
        let reseeded = PredictorParams {
            seed: 99,
            ..p.clone()
        };
        assert_ne!(
            mock_predict(&t.page, &t.image, &reseeded, 0, "a")
                .unwrap()
                .boxes,
            a0.boxes
        );
        assert_eq!(mock_predict(&t.page, &t.image, &p, 1, "b").unwrap(), a1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = table();
        let small = GrayImage::new(5, 5);
        assert!(matches!(
            mock_predict(&t.page, &small, &PredictorParams::default(), 0, "x"),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn faintness_tracks_ink() {
        let mut img = GrayImage::from_pixel(10, 10, image::Luma([255]));
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(cell_faintness(&img, &b), 1.0);
        img.put_pixel(2, 2, image::Luma([51]));
        assert!((cell_faintness(&img, &b) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn jittered_boxes_stay_valid() {
        let b = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let j = jitter_box(&b, [5.0, 5.0, -5.0, -5.0], 10.0, 10.0);
        assert!(j.width() >= 1.0 - 1e-12 && j.x2() <= 10.0);
        let j = jitter_box(&b, [-9.0, -9.0, 30.0, 30.0], 10.0, 10.0);
        assert_eq!(j.to_array(), [0.0, 0.0, 10.0, 10.0]);
    }
}
