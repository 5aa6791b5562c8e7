//! Ensembling of per-model cell predictions into merged cells with confidences.
//!
//! Boxes from `M + 1` models are grouped into clusters: each cluster is seeded
//! by a box of a base model and gathers at most one box from every other model
//! whose IoU with the seed reaches `theta0`. The confidence of a cluster is
//! the number of distinct contributing models divided by `M + 1`.
//!
//! Optionally a small-cell filter first drops boxes that sit inside a much
//! larger box predicted by any model.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BBox, CONTAINS_EPS};
use crate::table::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionRule {
    /// Coordinate-wise arithmetic mean of the members.
    #[default]
    Mean,
    /// Smallest box enclosing every member.
    Union,
    /// The seed member's box.
    Base,
}

impl std::str::FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(FusionRule::Mean),
            "union" => Ok(FusionRule::Union),
            "base" => Ok(FusionRule::Base),
            other => Err(Error::InvalidArgument(format!(
                "unknown fusion rule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// IoU needed to merge a candidate into a cluster.
    pub theta0: f64,
    pub apply_small_cell_filter: bool,
    /// Largest small/large area ratio at which a contained box is dropped.
    pub kappa: f64,
    pub fusion_rule: FusionRule,
    /// When set, base models are visited in a seeded random order instead of
    /// ascending model index.
    pub shuffle_seed: Option<u64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            theta0: 0.5,
            apply_small_cell_filter: false,
            kappa: 0.5,
            fusion_rule: FusionRule::Mean,
            shuffle_seed: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > 0.0 && self.theta0 <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta0 must be in (0, 1], got {}",
                self.theta0
            )));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be in (0, 1], got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub model_index: u32,
    pub box_index: usize,
    pub bbox: BBox,
    /// IoU with the seed at merge time; 1.0 for the seed itself.
    pub iou_with_seed: f64,
}

/// Predictions judged to be the same physical cell. The first member is the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<ClusterMember>,
}

impl Cluster {
    pub fn seed(&self) -> &ClusterMember {
        &self.members[0]
    }

    pub fn models(&self) -> BTreeSet<u32> {
        self.members.iter().map(|m| m.model_index).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedCell {
    pub bbox: BBox,
    pub confidence: f64,
    pub contributing_models: BTreeSet<u32>,
    pub cluster: Cluster,
}

/// A box dropped by the small-cell filter, with the box that contains it.
/// Indices refer to the unfiltered input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovedBox {
    pub model_index: u32,
    pub box_index: usize,
    pub container_model: u32,
    pub container_index: usize,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Input sets with the removed boxes taken out; surviving boxes keep
    /// their relative order.
    pub sets: Vec<PredictionSet>,
    pub removed: Vec<RemovedBox>,
}

/// Drops every box that lies inside another box of the pooled predictions
/// with `area(small) / area(large) <= kappa`.
///
/// Removal decisions are all taken against the unfiltered pool and applied
/// at once, so running the filter on its own output changes nothing.
pub fn small_cell_filter(sets: &[PredictionSet], kappa: f64) -> Result<FilterOutcome> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be in (0, 1], got {kappa}"
        )));
    }
    let pool: Vec<(u32, usize, BBox, f64)> = sets
        .iter()
        .flat_map(|s| {
            s.boxes
                .iter()
                .enumerate()
                .map(move |(i, b)| (s.model_index, i, *b, geometry::area(b)))
        })
        .collect();

    let mut removed = Vec::new();
    for (si, &(model, index, small, small_area)) in pool.iter().enumerate() {
        let container = pool
            .iter()
            .enumerate()
            .find(|&(li, &(_, _, large, large_area))| {
                li != si
                    && small_area / large_area <= kappa
                    && geometry::contains(&large, &small, CONTAINS_EPS)
            });
        if let Some((_, &(cm, ci, _, _))) = container {
            removed.push(RemovedBox {
                model_index: model,
                box_index: index,
                container_model: cm,
                container_index: ci,
            });
        }
    }

    let dropped: BTreeSet<(u32, usize)> = removed
        .iter()
        .map(|r| (r.model_index, r.box_index))
        .collect();
    let sets = sets
        .iter()
        .map(|s| PredictionSet {
            boxes: s
                .boxes
                .iter()
                .enumerate()
                .filter(|(i, _)| !dropped.contains(&(s.model_index, *i)))
                .map(|(_, b)| *b)
                .collect(),
            model_index: s.model_index,
            model_label: s.model_label.clone(),
        })
        .collect();
    Ok(FilterOutcome { sets, removed })
}

/// Model indices must be exactly `0..sets.len()` in some order.
fn check_model_indices(sets: &[PredictionSet]) -> Result<()> {
    let mut seen = vec![false; sets.len()];
    for s in sets {
        let i = s.model_index as usize;
        if i >= sets.len() {
            return Err(Error::InvalidInput(format!(
                "model_index {} out of range for {} prediction sets",
                s.model_index,
                sets.len()
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInput(format!(
                "duplicate model_index {}",
                s.model_index
            )));
        }
    }
    Ok(())
}

/// Partitions every input box into clusters.
///
/// Base models are visited in ascending model index (or a seeded shuffle of
/// it). Each still-unclustered box of the base seeds a cluster; every other
/// model then contributes its unclustered box of highest IoU with the seed,
/// provided that IoU is at least `theta0` (ties go to the lower box index).
/// Clustered boxes leave their pools for good.
pub fn merge_predictions(sets: &[PredictionSet], cfg: &EnsembleConfig) -> Result<Vec<Cluster>> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no prediction sets".into()));
    }
    cfg.validate()?;
    check_model_indices(sets)?;

    let mut ordered: Vec<&PredictionSet> = sets.iter().collect();
    ordered.sort_by_key(|s| s.model_index);
    let mut base_order: Vec<usize> = (0..ordered.len()).collect();
    if let Some(seed) = cfg.shuffle_seed {
        base_order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    let mut available: Vec<Vec<bool>> = ordered.iter().map(|s| vec![true; s.boxes.len()]).collect();
    let mut clusters = Vec::new();

    for &b in &base_order {
        let base = ordered[b];
        for (ci, seed_box) in base.boxes.iter().enumerate() {
            if !available[b][ci] {
                continue;
            }
            available[b][ci] = false;
            let mut members = vec![ClusterMember {
                model_index: base.model_index,
                box_index: ci,
                bbox: *seed_box,
                iou_with_seed: 1.0,
            }];
            for (j, other) in ordered.iter().enumerate() {
                if j == b {
                    continue;
                }
                let mut best: Option<(usize, f64)> = None;
                for (k, cand) in other.boxes.iter().enumerate() {
                    if !available[j][k] {
                        continue;
                    }
                    let v = geometry::iou(seed_box, cand);
                    if v >= cfg.theta0 && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((k, v));
                    }
                }
                if let Some((k, v)) = best {
                    available[j][k] = false;
                    members.push(ClusterMember {
                        model_index: other.model_index,
                        box_index: k,
                        bbox: other.boxes[k],
                        iou_with_seed: v,
                    });
                }
            }
            clusters.push(Cluster { members });
        }
    }
    Ok(clusters)
}

pub fn fuse_bbox(cluster: &Cluster, rule: FusionRule) -> BBox {
    let boxes = cluster.members.iter().map(|m| m.bbox);
    match rule {
        FusionRule::Base => cluster.seed().bbox,
        FusionRule::Union => boxes
            .reduce(|a, b| {
                BBox::new(
                    a.x1().min(b.x1()),
                    a.y1().min(b.y1()),
                    a.x2().max(b.x2()),
                    a.y2().max(b.y2()),
                )
                .expect("envelope of valid boxes is valid")
            })
            .expect("cluster is nonempty"),
        FusionRule::Mean => {
            let n = cluster.members.len() as f64;
            let mut sum = [0.0f64; 4];
            for b in boxes {
                for (s, c) in sum.iter_mut().zip(b.to_array()) {
                    *s += c;
                }
            }
            // The mean of boxes with x1 < x2 keeps x1 < x2, barring rounding.
            let [x1, y1, x2, y2] = sum.map(|s| s / n);
            BBox::new(x1, y1, x2, y2).unwrap_or(cluster.seed().bbox)
        }
    }
}

/// Full ensemble: optional small-cell filter, clustering, fusion and scoring.
/// Output is sorted in reading order of the fused boxes.
pub fn ensemble(sets: &[PredictionSet], cfg: &EnsembleConfig) -> Result<Vec<MergedCell>> {
    Ok(ensemble_detailed(sets, cfg)?.cells)
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub cells: Vec<MergedCell>,
    pub removed: Vec<RemovedBox>,
    pub m_plus_1: usize,
}

/// [`ensemble`], also reporting the boxes removed by the small-cell filter.
pub fn ensemble_detailed(sets: &[PredictionSet], cfg: &EnsembleConfig) -> Result<EnsembleOutput> {
    if sets.is_empty() {
        return Err(Error::InvalidInput(
            "ensemble needs at least one prediction set".into(),
        ));
    }
    cfg.validate()?;
    let (filtered, removed) = if cfg.apply_small_cell_filter {
        let out = small_cell_filter(sets, cfg.kappa)?;
        (out.sets, out.removed)
    } else {
        (sets.to_vec(), Vec::new())
    };
    let m_plus_1 = sets.len();
    let clusters = merge_predictions(&filtered, cfg)?;
    let mut cells: Vec<MergedCell> = clusters
        .into_iter()
        .map(|cluster| {
            let models = cluster.models();
            MergedCell {
                bbox: fuse_bbox(&cluster, cfg.fusion_rule),
                confidence: models.len() as f64 / m_plus_1 as f64,
                contributing_models: models,
                cluster,
            }
        })
        .collect();
    cells.sort_by(|a, b| {
        a.bbox
            .reading_cmp(&b.bbox)
            .then_with(|| a.contributing_models.cmp(&b.contributing_models))
            .then_with(|| {
                let sa = a.cluster.seed();
                let sb = b.cluster.seed();
                (sa.model_index, sa.box_index).cmp(&(sb.model_index, sb.box_index))
            })
    });
    Ok(EnsembleOutput {
        cells,
        removed,
        m_plus_1,
    })
}

/// Merged-cell file for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTable {
    pub cells: Vec<MergedCellRecord>,
    pub m_plus_1: usize,
    pub table_id: String,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedCellRecord {
    pub bbox: BBox,
    pub confidence: f64,
    pub models: Vec<u32>,
}

impl MergedTable {
    pub fn from_cells(
        table_id: impl Into<String>,
        m_plus_1: usize,
        theta0: f64,
        cells: &[MergedCell],
    ) -> Self {
        MergedTable {
            cells: cells
                .iter()
                .map(|c| MergedCellRecord {
                    bbox: c.bbox,
                    confidence: c.confidence,
                    models: c.contributing_models.iter().copied().collect(),
                })
                .collect(),
            m_plus_1,
            table_id: table_id.into(),
            theta0,
        }
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.cells.iter().map(|c| c.bbox).collect()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.confidence).collect()
    }
}

pub fn load_merged(path: impl AsRef<std::path::Path>) -> Result<MergedTable> {
    crate::table::read_json(path.as_ref())
}

pub fn save_merged(m: &MergedTable, path: impl AsRef<std::path::Path>) -> Result<()> {
    crate::table::write_json(m, path.as_ref())
}
