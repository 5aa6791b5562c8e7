//! Detection metrics and confidence analyses against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::MergedTable;
use crate::error::{Error, Result};
use crate::geometry::{self, BBox};
use crate::graph::build_adjacency;
use crate::table::Cell;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(pred_index, gt_cell_id, iou)`, in acceptance order.
    pub pairs: Vec<(usize, u32, f64)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<u32>,
    pub theta0: f64,
}

impl MatchResult {
    /// Prediction index matched to each ground-truth id.
    pub fn gt_to_pred(&self) -> BTreeMap<u32, usize> {
        self.pairs.iter().map(|&(p, g, _)| (g, p)).collect()
    }
}

/// Greedy one-to-one matching: candidate pairs with IoU >= `theta0` are taken
/// in descending IoU order (ties: lower prediction index, then lower gt id)
/// whenever both sides are still free.
pub fn match_cells(pred: &[BBox], gt: &[Cell], theta0: f64) -> MatchResult {
    let mut candidates: Vec<(usize, u32, f64)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for g in gt {
            let v = geometry::iou(p, &g.bbox);
            if v >= theta0 && v > 0.0 {
                candidates.push((pi, g.id, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut pred_used = vec![false; pred.len()];
    let mut gt_used: BTreeMap<u32, bool> = gt.iter().map(|g| (g.id, false)).collect();
    let mut pairs = Vec::new();
    for (pi, gid, v) in candidates {
        let g = gt_used.get_mut(&gid).expect("candidate gt id exists");
        if pred_used[pi] || *g {
            continue;
        }
        pred_used[pi] = true;
        *g = true;
        pairs.push((pi, gid, v));
    }
    MatchResult {
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gt: gt
            .iter()
            .filter(|g| !gt_used[&g.id])
            .map(|g| g.id)
            .collect(),
        pairs,
        theta0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    /// Scores from raw counts; empty denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

pub fn prf(m: &MatchResult, n_pred: usize, n_gt: usize) -> Result<Prf> {
    let tp = m.pairs.len();
    if tp > n_pred || tp > n_gt {
        return Err(Error::Consistency(format!(
            "{tp} matches exceed {n_pred} predictions or {n_gt} ground-truth cells"
        )));
    }
    Ok(Prf::from_counts(tp, n_pred - tp, n_gt - tp))
}

/// Micro-averaging accumulator: sums tp/fp/fn over tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PrfCounts {
    pub fn add(&mut self, p: &Prf) {
        self.tp += p.tp;
        self.fp += p.fp;
        self.fn_ += p.fn_;
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(self.tp, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBucket {
    pub level: f64,
    pub n_cells: usize,
    pub n_correct: usize,
    pub fraction_correct: f64,
}

/// Lattice index `k` of a confidence `k / m_plus_1`.
fn lattice_index(confidence: f64, m_plus_1: usize) -> Result<usize> {
    let scaled = confidence * m_plus_1 as f64;
    let k = scaled.round();
    if (scaled - k).abs() > 1e-6 || k < 1.0 || k > m_plus_1 as f64 {
        return Err(Error::InvalidInput(format!(
            "confidence {confidence} is not a multiple of 1/{m_plus_1}"
        )));
    }
    Ok(k as usize)
}

/// Accumulates per-level correctness of merged cells over many tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTally {
    m_plus_1: usize,
    n_cells: Vec<usize>,
    n_correct: Vec<usize>,
}

impl ConfidenceTally {
    pub fn new(m_plus_1: usize) -> Self {
        ConfidenceTally {
            m_plus_1,
            n_cells: vec![0; m_plus_1 + 1],
            n_correct: vec![0; m_plus_1 + 1],
        }
    }

    /// A merged cell counts as correct when it is matched to a ground-truth cell.
    pub fn add_table(&mut self, merged: &MergedTable, gt: &[Cell], theta0: f64) -> Result<()> {
        if merged.m_plus_1 != self.m_plus_1 {
            return Err(Error::InvalidInput(format!(
                "table {} was ensembled from {} models, expected {}",
                merged.table_id, merged.m_plus_1, self.m_plus_1
            )));
        }
        let levels = merged
            .cells
            .iter()
            .map(|c| lattice_index(c.confidence, self.m_plus_1))
            .collect::<Result<Vec<_>>>()?;
        let m = match_cells(&merged.boxes(), gt, theta0);
        let mut correct = vec![false; merged.cells.len()];
        for &(p, _, _) in &m.pairs {
            correct[p] = true;
        }
        for (k, ok) in levels.into_iter().zip(correct) {
            self.n_cells[k] += 1;
            if ok {
                self.n_correct[k] += 1;
            }
        }
        Ok(())
    }

    /// One bucket per occupied level `k / m_plus_1`, ascending.
    pub fn buckets(&self) -> Vec<ConfidenceBucket> {
        (1..=self.m_plus_1)
            .filter(|&k| self.n_cells[k] > 0)
            .map(|k| ConfidenceBucket {
                level: k as f64 / self.m_plus_1 as f64,
                n_cells: self.n_cells[k],
                n_correct: self.n_correct[k],
                fraction_correct: self.n_correct[k] as f64 / self.n_cells[k] as f64,
            })
            .collect()
    }
}

pub fn confidence_accuracy(
    merged: &MergedTable,
    gt: &[Cell],
    theta0: f64,
) -> Result<Vec<ConfidenceBucket>> {
    let mut tally = ConfidenceTally::new(merged.m_plus_1);
    tally.add_table(merged, gt, theta0)?;
    Ok(tally.buckets())
}

/// Mean of `fraction_correct` over the occupied buckets.
pub fn mean_fraction_correct(curve: &[ConfidenceBucket]) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    curve.iter().map(|b| b.fraction_correct).sum::<f64>() / curve.len() as f64
}

/// Confidence assigned to each ground-truth cell: that of the merged cell
/// matched to it, or 0 when it went undetected.
pub fn gt_confidences(merged: &MergedTable, gt: &[Cell], theta0: f64) -> BTreeMap<u32, f64> {
    let m = match_cells(&merged.boxes(), gt, theta0);
    let matched = m.gt_to_pred();
    gt.iter()
        .map(|c| {
            (
                c.id,
                matched
                    .get(&c.id)
                    .map_or(0.0, |&p| merged.cells[p].confidence),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub degree: usize,
    pub n_cells: usize,
    pub percent: f64,
    pub mean_confidence: f64,
}

/// Accumulates ground-truth cell confidences grouped by adjacency degree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DegreeTally {
    by_degree: BTreeMap<usize, (usize, f64)>,
}

impl DegreeTally {
    pub fn add_table(&mut self, merged: &MergedTable, gt: &[Cell], theta0: f64) -> Result<()> {
        let degrees = build_adjacency(gt)?.degrees();
        let conf = gt_confidences(merged, gt, theta0);
        for c in gt {
            let entry = self.by_degree.entry(degrees[&c.id]).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += conf[&c.id];
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<DegreeRow> {
        let total: usize = self.by_degree.values().map(|v| v.0).sum();
        self.by_degree
            .iter()
            .map(|(&degree, &(n, sum))| DegreeRow {
                degree,
                n_cells: n,
                percent: 100.0 * n as f64 / total as f64,
                mean_confidence: sum / n as f64,
            })
            .collect()
    }
}

/// Per-degree cell counts and mean confidences over a set of tables, given as
/// `(ground-truth cells, merged cells)` pairs.
pub fn degree_confidence_report<'a>(
    tables: impl IntoIterator<Item = (&'a [Cell], &'a MergedTable)>,
    theta0: f64,
) -> Result<Vec<DegreeRow>> {
    let mut tally = DegreeTally::default();
    for (gt, merged) in tables {
        tally.add_table(merged, gt, theta0)?;
    }
    Ok(tally.rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::MergedCellRecord;
    use crate::table::GridCoord;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn grid_cells(rows: u32, cols: u32) -> Vec<Cell> {
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let b = bb(
                    c as f64 * 20.0,
                    r as f64 * 20.0,
                    c as f64 * 20.0 + 18.0,
                    r as f64 * 20.0 + 18.0,
                );
                out.push(Cell::new(out.len() as u32, b, GridCoord::at(r, c)));
            }
        }
        out
    }

    fn merged(m_plus_1: usize, cells: &[(BBox, f64)]) -> MergedTable {
        MergedTable {
            cells: cells
                .iter()
                .map(|&(bbox, confidence)| MergedCellRecord {
                    bbox,
                    confidence,
                    models: vec![],
                })
                .collect(),
            m_plus_1,
            table_id: "t".into(),
            theta0: 0.5,
        }
    }

    #[test]
    fn identical_predictions_all_match() {
        let gt = grid_cells(2, 3);
        let pred: Vec<BBox> = gt.iter().map(|c| c.bbox).collect();
        let m = match_cells(&pred, &gt, 0.5);
        assert_eq!(m.pairs.len(), 6);
        assert!(m.pairs.iter().all(|p| p.2 == 1.0));
        assert!(m.unmatched_gt.is_empty() && m.unmatched_pred.is_empty());
    }

    #[test]
    fn empty_predictions() {
        let gt = grid_cells(1, 2);
        let m = match_cells(&[], &gt, 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![0, 1]);
    }

    #[test]
    fn greedy_prefers_higher_iou() {
        let gt = vec![Cell::new(0, bb(0.0, 0.0, 10.0, 10.0), GridCoord::at(0, 0))];
        let pred = vec![bb(0.0, 0.0, 10.0, 6.0), bb(0.0, 0.0, 10.0, 9.0)];
        let m = match_cells(&pred, &gt, 0.5);
        assert_eq!(m.pairs, vec![(1, 0, 0.9)]);
        assert_eq!(m.unmatched_pred, vec![0]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let gt = vec![Cell::new(0, bb(0.0, 0.0, 10.0, 10.0), GridCoord::at(0, 0))];
        assert_eq!(
            match_cells(&[bb(0.0, 0.0, 5.0, 10.0)], &gt, 0.5)
                .pairs
                .len(),
            1
        );
        assert_eq!(
            match_cells(&[bb(0.0, 0.0, 4.9, 10.0)], &gt, 0.5)
                .pairs
                .len(),
            0
        );
    }

    #[test]
    fn prf_examples() {
        let gt = grid_cells(2, 2);
        let pred: Vec<BBox> = gt.iter().map(|c| c.bbox).collect();
        let p = prf(&match_cells(&pred, &gt, 0.5), 4, 4).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));

        let p = Prf::from_counts(8, 2, 2);
        assert!(
            (p.precision - 0.8).abs() < 1e-15
                && (p.recall - 0.8).abs() < 1e-15
                && (p.f1 - 0.8).abs() < 1e-15
        );

        let p = prf(&match_cells(&[], &gt, 0.5), 0, 4).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_rejects_inconsistent_counts() {
        let gt = grid_cells(1, 2);
        let pred: Vec<BBox> = gt.iter().map(|c| c.bbox).collect();
        let m = match_cells(&pred, &gt, 0.5);
        assert!(matches!(prf(&m, 1, 2), Err(Error::Consistency(_))));
    }

    #[test]
    fn buckets_single_full_level() {
        let gt = grid_cells(2, 2);
        let m = merged(5, &gt.iter().map(|c| (c.bbox, 1.0)).collect::<Vec<_>>());
        let b = confidence_accuracy(&m, &gt, 0.5).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(
            (b[0].level, b[0].n_cells, b[0].fraction_correct),
            (1.0, 4, 1.0)
        );
    }

    #[test]
    fn empty_buckets_omitted() {
        let gt = grid_cells(1, 3);
        let m = merged(
            5,
            &[
                (gt[0].bbox, 0.4),
                (gt[1].bbox, 1.0),
                (bb(200.0, 0.0, 210.0, 5.0), 0.4),
            ],
        );
        let b = confidence_accuracy(&m, &gt, 0.5).unwrap();
        assert_eq!(
            b.iter().map(|b| b.level).collect::<Vec<_>>(),
            vec![0.4, 1.0]
        );
        assert_eq!((b[0].n_cells, b[0].n_correct), (2, 1));
    }

    #[test]
    fn off_lattice_confidence_rejected() {
        let gt = grid_cells(1, 1);
        let m = merged(5, &[(gt[0].bbox, 0.5)]);
        assert!(matches!(
            confidence_accuracy(&m, &gt, 0.5),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn degree_report_two_by_two() {
        let gt = grid_cells(2, 2);
        let m = merged(5, &gt.iter().map(|c| (c.bbox, 0.8)).collect::<Vec<_>>());
        let rows = degree_confidence_report([(gt.as_slice(), &m)], 0.5).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(
            (rows[0].degree, rows[0].n_cells, rows[0].percent),
            (2, 4, 100.0)
        );
        assert!((rows[0].mean_confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degree_report_unmatched_counts_zero() {
        let gt = grid_cells(1, 3);
        let m = merged(2, &[(gt[0].bbox, 1.0), (gt[1].bbox, 1.0)]);
        let rows = degree_confidence_report([(gt.as_slice(), &m)], 0.5).unwrap();
        // ends have degree 1 (one matched at 1.0, one missed), middle degree 2
        assert_eq!(rows[0].degree, 1);
        assert_eq!(rows[0].mean_confidence, 0.5);
        assert_eq!(rows[1].mean_confidence, 1.0);
        let total: f64 = rows.iter().map(|r| r.percent).sum();
        assert!((total - 100.0).abs() < 0.1);
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<BBox>, Vec<Cell>)> {
        let b = (0.0..60.0f64, 0.0..60.0f64, 2.0..30.0f64, 2.0..30.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h));
        (
            prop::collection::vec(b.clone(), 0..15),
            prop::collection::vec(b, 0..15),
        )
            .prop_map(|(p, g)| {
                let gt = g
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| Cell::new(i as u32, b, GridCoord::at(i as u32, 0)))
                    .collect();
                (p, gt)
            })
    }

    proptest! {
        #[test]
        fn matching_one_to_one((pred, gt) in arb_instance(), theta in 0.1..1.0f64) {
            let m = match_cells(&pred, &gt, theta);
            let mut ps = std::collections::BTreeSet::new();
            let mut gs = std::collections::BTreeSet::new();
            for &(p, g, v) in &m.pairs {
                prop_assert!(ps.insert(p));
                prop_assert!(gs.insert(g));
                prop_assert!(v >= theta);
            }
            prop_assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
            prop_assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
            let p = prf(&m, pred.len(), gt.len()).unwrap();
            if p.precision + p.recall > 0.0 {
                prop_assert!(p.f1 >= p.precision.min(p.recall) - 1e-12);
                prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-12);
            }
        }

        #[test]
        fn micro_average_is_sum_of_counts(tables in prop::collection::vec(arb_instance(), 1..5)) {
            let mut acc = PrfCounts::default();
            let (mut tp, mut np, mut ng) = (0, 0, 0);
            for (pred, gt) in &tables {
                let m = match_cells(pred, gt, 0.5);
                acc.add(&prf(&m, pred.len(), gt.len()).unwrap());
                tp += m.pairs.len();
                np += pred.len();
                ng += gt.len();
            }
            prop_assert_eq!(acc.prf(), Prf::from_counts(tp, np - tp, ng - tp));
        }

        #[test]
        fn buckets_conserve_cells((pred, gt) in arb_instance(), ks in prop::collection::vec(1usize..=5, 15)) {
            let cells: Vec<(BBox, f64)> = pred.iter().zip(&ks).map(|(b, &k)| (*b, k as f64 / 5.0)).collect();
            let m = merged(5, &cells);
            let b = confidence_accuracy(&m, &gt, 0.5).unwrap();
            prop_assert_eq!(b.iter().map(|b| b.n_cells).sum::<usize>(), cells.len());
            prop_assert!(b.iter().all(|b| b.n_correct <= b.n_cells));
        }
    }
}
