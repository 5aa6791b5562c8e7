//! End-to-end runs: mask, augment, predict, ensemble and evaluate a set of
//! tables, then write the report bundle.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{
    load_gray, mask_intensity, Augmentation, GrayImage, LineDetectParams, MaskScope,
};
use crate::ensemble::{ensemble_detailed, save_merged, EnsembleConfig, MergedTable};
use crate::error::{Error, Result};
use crate::eval::{
    match_cells, prf, ConfidenceBucket, ConfidenceTally, DegreeRow, DegreeTally, Prf, PrfCounts,
};
use crate::harness::{mock_predict, PredictorSpec, SyntheticTable};
use crate::report::{self, write_text};
use crate::table::{
    save_predictions, write_json, Dataset, PredictionSet, TablePage, TablePredictions,
};

/// A table together with its rendered page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageImage {
    pub page: TablePage,
    pub image: GrayImage,
}

impl From<SyntheticTable> for PageImage {
    fn from(t: SyntheticTable) -> Self {
        PageImage {
            page: t.page,
            image: t.image,
        }
    }
}

/// Loads every page image of `ds`; relative image paths resolve against `base_dir`.
pub fn load_page_images(ds: &Dataset, base_dir: &Path) -> Result<Vec<PageImage>> {
    ds.pages
        .iter()
        .map(|page| {
            let rel = page.image_path.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("table {} has no image_path", page.table_id))
            })?;
            let image = load_gray(base_dir.join(rel))?;
            if image.dimensions() != (page.width, page.height) {
                return Err(Error::InvalidInput(format!(
                    "image of table {} is {}x{}, page says {}x{}",
                    page.table_id,
                    image.width(),
                    image.height(),
                    page.width,
                    page.height
                )));
            }
            Ok(PageImage {
                page: page.clone(),
                image,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Intensity factor applied before augmentation; 1 leaves images as is.
    pub mask_factor: f64,
    pub mask_scope: MaskScope,
    pub line_params: LineDetectParams,
    /// Worker threads; never changes results.
    pub parallel: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mask_factor: 1.0,
            mask_scope: MaskScope::WholeImage,
            line_params: LineDetectParams::default(),
            parallel: 1,
        }
    }
}

/// Everything produced for one table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableOutcome {
    pub predictions: TablePredictions,
    pub merged: MergedTable,
    pub removed_boxes: usize,
    pub model_prf: Vec<Prf>,
    pub ensemble_prf: Prf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub tables: Vec<TableOutcome>,
    pub model_labels: Vec<String>,
    pub model_prf: Vec<Prf>,
    pub ensemble_prf: Prf,
    pub confidence_curve: Vec<ConfidenceBucket>,
    pub degree_table: Vec<DegreeRow>,
    /// Entry `k`: ground-truth cells whose matched merged cell came from `k`
    /// models (`k = 0` for undetected cells).
    pub gt_level_counts: Vec<usize>,
    pub m_plus_1: usize,
    pub theta0: f64,
}

impl PipelineReport {
    /// Rows of `prf.csv`: every model, then the ensemble.
    pub fn prf_rows(&self) -> Vec<(String, Prf)> {
        self.model_labels
            .iter()
            .cloned()
            .zip(self.model_prf.iter().copied())
            .chain(std::iter::once(("ensemble".to_string(), self.ensemble_prf)))
            .collect()
    }
}

/// Every model's predictions for one table: the page is masked once, then
/// each model sees it through the augmentation named by its label.
pub fn predict_table(
    t: &PageImage,
    bank: &[PredictorSpec],
    opts: &PipelineOptions,
) -> Result<Vec<PredictionSet>> {
    let page = &t.page;
    let masked = if opts.mask_factor == 1.0 {
        t.image.clone()
    } else {
        mask_intensity(
            &t.image,
            opts.mask_factor,
            opts.mask_scope,
            Some(&page.cells),
        )?
    };
    bank.iter()
        .enumerate()
        .map(|(i, spec)| {
            let seen = Augmentation::for_model_label(&spec.label).apply(
                &masked,
                page,
                &opts.line_params,
            )?;
            mock_predict(page, &seen, &spec.params, i as u32, &spec.label)
        })
        .collect()
}

fn run_table(
    t: &PageImage,
    bank: &[PredictorSpec],
    cfg: &EnsembleConfig,
    opts: &PipelineOptions,
) -> Result<TableOutcome> {
    let page = &t.page;
    let sets = predict_table(t, bank, opts)?;
    let model_prf = sets
        .iter()
        .map(|s| {
            prf(
                &match_cells(&s.boxes, &page.cells, cfg.theta0),
                s.boxes.len(),
                page.cells.len(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let out = ensemble_detailed(&sets, cfg)?;
    let merged =
        MergedTable::from_cells(page.table_id.clone(), out.m_plus_1, cfg.theta0, &out.cells);
    let boxes = merged.boxes();
    let ensemble_prf = prf(
        &match_cells(&boxes, &page.cells, cfg.theta0),
        boxes.len(),
        page.cells.len(),
    )?;
    Ok(TableOutcome {
        predictions: TablePredictions {
            predictions: sets,
            table_id: page.table_id.clone(),
        },
        merged,
        removed_boxes: out.removed.len(),
        model_prf,
        ensemble_prf,
    })
}

fn for_each_table<T: Send>(
    tables: &[PageImage],
    parallel: usize,
    f: impl Fn(&PageImage) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel == 0 {
        return Err(Error::InvalidArgument(
            "parallelism must be at least 1".into(),
        ));
    }
    if parallel == 1 {
        return tables.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start thread pool: {e}")))?;
    // collect keeps input order
    pool.install(|| tables.par_iter().map(f).collect())
}

/// Runs every predictor of `bank` on every table, ensembles and evaluates.
/// Results are aggregated in input order, so they do not depend on `opts.parallel`.
pub fn run_pipeline(
    tables: &[PageImage],
    bank: &[PredictorSpec],
    cfg: &EnsembleConfig,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    if tables.is_empty() {
        return Err(Error::InvalidInput("no tables to run".into()));
    }
    if bank.is_empty() {
        return Err(Error::InvalidInput("predictor bank is empty".into()));
    }
    cfg.validate()?;
    opts.line_params.validate()?;
    let outcomes = for_each_table(tables, opts.parallel, |t| run_table(t, bank, cfg, opts))?;

    let m_plus_1 = bank.len();
    let mut model_counts = vec![PrfCounts::default(); m_plus_1];
    let mut ensemble_counts = PrfCounts::default();
    let mut confidence = ConfidenceTally::new(m_plus_1);
    let mut degrees = DegreeTally::default();
    let mut gt_level_counts = vec![0usize; m_plus_1 + 1];
    for (t, o) in tables.iter().zip(&outcomes) {
        for (acc, p) in model_counts.iter_mut().zip(&o.model_prf) {
            acc.add(p);
        }
        ensemble_counts.add(&o.ensemble_prf);
        confidence.add_table(&o.merged, &t.page.cells, cfg.theta0)?;
        degrees.add_table(&o.merged, &t.page.cells, cfg.theta0)?;
        for c in crate::eval::gt_confidences(&o.merged, &t.page.cells, cfg.theta0).values() {
            gt_level_counts[(c * m_plus_1 as f64).round() as usize] += 1;
        }
    }
    Ok(PipelineReport {
        tables: outcomes,
        model_labels: bank.iter().map(|s| s.label.clone()).collect(),
        model_prf: model_counts.iter().map(PrfCounts::prf).collect(),
        ensemble_prf: ensemble_counts.prf(),
        confidence_curve: confidence.buckets(),
        degree_table: degrees.rows(),
        gt_level_counts,
        m_plus_1,
        theta0: cfg.theta0,
    })
}

/// Confidence-accuracy curves with the whole pipeline rerun at each masking factor.
pub fn masking_sweep(
    tables: &[PageImage],
    factors: &[f64],
    bank: &[PredictorSpec],
    cfg: &EnsembleConfig,
    opts: &PipelineOptions,
) -> Result<Vec<(f64, Vec<ConfidenceBucket>)>> {
    factors
        .iter()
        .map(|&f| {
            let o = PipelineOptions {
                mask_factor: f,
                ..opts.clone()
            };
            Ok((f, run_pipeline(tables, bank, cfg, &o)?.confidence_curve))
        })
        .collect()
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    label: &'a str,
    prf: Prf,
}

#[derive(Serialize)]
struct MaskingSummary<'a> {
    curve: &'a [ConfidenceBucket],
    factor: f64,
}

// Fields in alphabetical order so the JSON is canonical.
#[derive(Serialize)]
struct Summary<'a> {
    confidence_curve: &'a [ConfidenceBucket],
    degree_table: &'a [DegreeRow],
    ensemble: Prf,
    gt_level_counts: &'a [usize],
    m_plus_1: usize,
    masking_curve: Vec<MaskingSummary<'a>>,
    models: Vec<ModelSummary<'a>>,
    n_tables: usize,
    removed_boxes: usize,
    theta0: f64,
}

fn check_file_stem(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(Error::InvalidInput(format!(
            "table id {id:?} cannot be used as a file name"
        )));
    }
    Ok(())
}

/// Writes `prf.csv`, `confidence_curve.csv`, `degree_table.csv`,
/// `summary.json`, `masking_curve.csv` (when a sweep is given) and the
/// per-table `predictions/<id>.json` and `merged/<id>.json` files.
pub fn write_report_bundle(
    report: &PipelineReport,
    masking: Option<&[(f64, Vec<ConfidenceBucket>)]>,
    dir: &Path,
) -> Result<()> {
    for t in &report.tables {
        check_file_stem(&t.merged.table_id)?;
    }
    write_text(
        &dir.join(report::PRF_CSV),
        &report::prf_csv(&report.prf_rows()),
    )?;
    write_text(
        &dir.join(report::CONFIDENCE_CSV),
        &report::confidence_csv(&report.confidence_curve),
    )?;
    write_text(
        &dir.join(report::DEGREE_CSV),
        &report::degree_csv(&report.degree_table),
    )?;
    if let Some(curves) = masking {
        write_text(&dir.join(report::MASKING_CSV), &report::masking_csv(curves))?;
    }
    for t in &report.tables {
        let id = &t.merged.table_id;
        save_predictions(
            &t.predictions,
            dir.join("predictions").join(format!("{id}.json")),
        )?;
        save_merged(&t.merged, dir.join("merged").join(format!("{id}.json")))?;
    }
    let summary = Summary {
        confidence_curve: &report.confidence_curve,
        degree_table: &report.degree_table,
        ensemble: report.ensemble_prf,
        gt_level_counts: &report.gt_level_counts,
        m_plus_1: report.m_plus_1,
        masking_curve: masking
            .unwrap_or_default()
            .iter()
            .map(|(factor, curve)| MaskingSummary {
                curve,
                factor: *factor,
            })
            .collect(),
        models: report
            .model_labels
            .iter()
            .zip(&report.model_prf)
            .map(|(label, prf)| ModelSummary { label, prf: *prf })
            .collect(),
        n_tables: report.tables.len(),
        removed_boxes: report.tables.iter().map(|t| t.removed_boxes).sum(),
        theta0: report.theta0,
    };
    write_json(&summary, &dir.join("summary.json"))
}
