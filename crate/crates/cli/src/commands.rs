use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use tabuq_core::augment::{mask_intensity, save_gray, LineDetectParams};
use tabuq_core::ensemble::{ensemble_detailed, load_merged, save_merged};
use tabuq_core::eval::{match_cells, prf, ConfidenceTally, DegreeTally, PrfCounts};
use tabuq_core::harness::{
    default_bank, generate_dataset, load_bank, to_dataset, PredictorSpec, SynthParams,
};
use tabuq_core::icdar::import_icdar_tables;
use tabuq_core::pipeline::{
    load_page_images, masking_sweep, predict_table, run_pipeline, write_report_bundle, PageImage,
    PipelineOptions,
};
use tabuq_core::report;
use tabuq_core::table::{
    load_dataset, load_predictions, save_dataset, save_predictions, Dataset, TablePredictions,
};
use tabuq_core::{Augmentation, EnsembleConfig, MaskScope, MergedTable};

use super::{
    AugmentArgs, BankArgs, Cli, Command, EnsembleArgs, EnsembleOpts, EvalArgs, ImportArgs,
    MaskEvalArgs, PredictArgs, RunArgs, SynthArgs,
};

struct Globals {
    theta0: f64,
    seed: u64,
    parallel: usize,
    out: Option<PathBuf>,
}

impl Globals {
    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .context("--out is required for this command")
    }

    fn ensemble_config(&self, o: &EnsembleOpts) -> EnsembleConfig {
        EnsembleConfig {
            theta0: self.theta0,
            apply_small_cell_filter: o.filter,
            kappa: o.kappa,
            fusion_rule: o.fusion.into(),
            ..Default::default()
        }
    }

    fn bank(&self, b: &BankArgs) -> Result<Vec<PredictorSpec>> {
        match &b.bank {
            Some(path) => Ok(load_bank(path)?),
            None => Ok(default_bank(self.seed)),
        }
    }

    fn options(&self, mask_factor: f64, mask_scope: MaskScope) -> PipelineOptions {
        PipelineOptions {
            mask_factor,
            mask_scope,
            parallel: self.parallel,
            ..Default::default()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let g = Globals {
        theta0: cli.theta0,
        seed: cli.seed,
        parallel: cli.parallel as usize,
        out: cli.out,
    };
    match cli.command {
        Command::Synth(a) => synth(&g, a),
        Command::Augment(a) => augment(&g, a),
        Command::ImportIcdar(a) => import_icdar(&g, a),
        Command::PredictMock(a) => predict_mock(&g, a),
        Command::Ensemble(a) => ensemble(&g, a),
        Command::Eval(a) => eval(&g, a),
        Command::Run(a) => run(&g, a),
        Command::MaskEval(a) => mask_eval(&g, a),
    }
}

fn dataset_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn load_pages(path: &Path) -> Result<(Dataset, Vec<PageImage>)> {
    let ds = load_dataset(path)?;
    let pages = load_page_images(&ds, dataset_dir(path))?;
    Ok((ds, pages))
}

fn synth(g: &Globals, a: SynthArgs) -> Result<()> {
    let out = g.out()?;
    let p = SynthParams {
        rows: a.rows,
        cols: a.cols,
        span_prob: a.span_prob,
        cell_w: a.cell_w,
        cell_h: a.cell_h,
        gap: a.gap,
        margin: a.margin,
        draw_lines: !a.no_lines,
        glyph_density: a.glyph_density,
        ..Default::default()
    };
    let tables = generate_dataset(&p, a.n, g.seed)?;
    let mut ds = to_dataset(&tables, "synthetic");
    for (page, t) in ds.pages.iter_mut().zip(&tables) {
        let id = &page.table_id;
        let image = PathBuf::from(format!("images/{id}.png"));
        let lines = PathBuf::from(format!("masks/{id}.lines.png"));
        let text = PathBuf::from(format!("masks/{id}.text.png"));
        save_gray(&t.image, out.join(&image))?;
        save_gray(&t.line_mask.to_image(), out.join(&lines))?;
        save_gray(&t.text_mask.to_image(), out.join(&text))?;
        page.image_path = Some(image);
        page.line_mask_path = Some(lines);
        page.text_mask_path = Some(text);
    }
    save_dataset(&ds, out.join("dataset.json"))?;
    info!(
        "wrote {} tables with {} cells to {}",
        ds.pages.len(),
        ds.total_cells(),
        out.display()
    );
    Ok(())
}

fn augment(g: &Globals, a: AugmentArgs) -> Result<()> {
    let out = g.out()?.join(a.aug.name());
    let (ds, pages) = load_pages(&a.dataset)?;
    let scope: MaskScope = a.mask_scope.into();
    let line_params = LineDetectParams::default();
    for (page, p) in ds.pages.iter().zip(&pages) {
        let image = match (a.aug, scope) {
            (Augmentation::Mask2, MaskScope::PerCell) => {
                mask_intensity(&p.image, 2.0, scope, Some(&page.cells))?
            }
            (Augmentation::Mask3, MaskScope::PerCell) => {
                mask_intensity(&p.image, 3.0, scope, Some(&page.cells))?
            }
            (aug, _) => aug.apply(&p.image, page, &line_params)?,
        };
        let name = page
            .image_path
            .as_ref()
            .and_then(|p| p.file_name())
            .context("page image has no file name")?;
        save_gray(&image, out.join(name))?;
    }
    info!(
        "wrote {} {} images to {}",
        pages.len(),
        a.aug.name(),
        out.display()
    );
    Ok(())
}

fn import_icdar(g: &Globals, a: ImportArgs) -> Result<()> {
    let out = g.out()?;
    let mut pages = Vec::new();
    for input in &a.inputs {
        pages.extend(import_icdar_tables(input)?);
    }
    let ds = Dataset::new(a.split, pages);
    ds.validate()?;
    save_dataset(&ds, out.join("dataset.json"))?;
    info!(
        "imported {} tables with {} cells",
        ds.pages.len(),
        ds.total_cells()
    );
    Ok(())
}

fn predict_mock(g: &Globals, a: PredictArgs) -> Result<()> {
    let out = g.out()?;
    let bank = g.bank(&a.bank)?;
    let (_, pages) = load_pages(&a.dataset)?;
    let opts = g.options(a.mask_factor, a.mask_scope.into());
    for p in &pages {
        let predictions = predict_table(p, &bank, &opts)?;
        let tp = TablePredictions {
            predictions,
            table_id: p.page.table_id.clone(),
        };
        save_predictions(&tp, out.join(format!("{}.json", tp.table_id)))?;
    }
    info!(
        "wrote predictions of {} models for {} tables",
        bank.len(),
        pages.len()
    );
    Ok(())
}

/// The `.json` files of a directory in name order, or the path itself.
fn json_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .json files in {}", path.display());
    }
    Ok(files)
}

fn ensemble(g: &Globals, a: EnsembleArgs) -> Result<()> {
    let out = g.out()?;
    let cfg = g.ensemble_config(&a.opts);
    let to_dir = a.predictions.is_dir();
    for input in json_inputs(&a.predictions)? {
        let tp = load_predictions(&input)?;
        let mut sets = tp.predictions;
        sets.sort_by_key(|s| s.model_index);
        let result = ensemble_detailed(&sets, &cfg)?;
        if cfg.apply_small_cell_filter {
            info!(
                "{}: small-cell filter removed {} boxes",
                tp.table_id,
                result.removed.len()
            );
        }
        let merged =
            MergedTable::from_cells(tp.table_id, result.m_plus_1, cfg.theta0, &result.cells);
        let target = if to_dir {
            out.join(input.file_name().expect("listed file has a name"))
        } else {
            out.to_path_buf()
        };
        save_merged(&merged, target)?;
    }
    Ok(())
}

fn check_ids<'a>(
    what: &str,
    found: impl Iterator<Item = &'a str>,
    expected: &BTreeSet<&str>,
) -> Result<()> {
    let found: BTreeSet<&str> = found.collect();
    let extra: Vec<&str> = found.difference(expected).copied().collect();
    let missing: Vec<&str> = expected.difference(&found).copied().collect();
    if !extra.is_empty() || !missing.is_empty() {
        bail!(
            "table ids of {what} do not match the ground truth (unknown: [{}], missing: [{}])",
            extra.join(", "),
            missing.join(", ")
        );
    }
    Ok(())
}

fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let out = g.out()?;
    let gt = load_dataset(&a.gt)?;
    let merged = json_inputs(&a.merged)?
        .iter()
        .map(load_merged)
        .collect::<tabuq_core::Result<Vec<_>>>()?;
    let gt_ids: BTreeSet<&str> = gt.pages.iter().map(|p| p.table_id.as_str()).collect();
    check_ids(
        "merged cells",
        merged.iter().map(|m| m.table_id.as_str()),
        &gt_ids,
    )?;

    let m_plus_1 = merged[0].m_plus_1;
    let mut confidence = ConfidenceTally::new(m_plus_1);
    let mut degrees = DegreeTally::default();
    let mut ensemble_counts = PrfCounts::default();
    for m in &merged {
        let page = gt.page(&m.table_id).expect("ids checked");
        let boxes = m.boxes();
        ensemble_counts.add(&prf(
            &match_cells(&boxes, &page.cells, g.theta0),
            boxes.len(),
            page.cells.len(),
        )?);
        confidence.add_table(m, &page.cells, g.theta0)?;
        degrees.add_table(m, &page.cells, g.theta0)?;
    }

    let mut rows = Vec::new();
    if let Some(path) = &a.predictions {
        let tables = json_inputs(path)?
            .iter()
            .map(load_predictions)
            .collect::<tabuq_core::Result<Vec<_>>>()?;
        check_ids(
            "predictions",
            tables.iter().map(|t| t.table_id.as_str()),
            &gt_ids,
        )?;
        let mut per_model: std::collections::BTreeMap<u32, (String, PrfCounts)> =
            Default::default();
        for t in &tables {
            let page = gt.page(&t.table_id).expect("ids checked");
            for s in &t.predictions {
                let p = prf(
                    &match_cells(&s.boxes, &page.cells, g.theta0),
                    s.boxes.len(),
                    page.cells.len(),
                )?;
                per_model
                    .entry(s.model_index)
                    .or_insert_with(|| (s.model_label.clone(), PrfCounts::default()))
                    .1
                    .add(&p);
            }
        }
        rows.extend(per_model.into_values().map(|(label, c)| (label, c.prf())));
    }
    rows.push(("ensemble".to_string(), ensemble_counts.prf()));

    write(out.join(report::PRF_CSV), &report::prf_csv(&rows))?;
    write(
        out.join(report::CONFIDENCE_CSV),
        &report::confidence_csv(&confidence.buckets()),
    )?;
    write(
        out.join(report::DEGREE_CSV),
        &report::degree_csv(&degrees.rows()),
    )?;
    Ok(())
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(g: &Globals, a: RunArgs) -> Result<()> {
    let out = g.out()?;
    let pages = match &a.dataset {
        Some(path) => load_pages(path)?.1,
        None => generate_dataset(&SynthParams::default(), a.n, g.seed)?
            .into_iter()
            .map(PageImage::from)
            .collect(),
    };
    let bank = g.bank(&a.bank)?;
    let cfg = g.ensemble_config(&a.opts);
    let scope: MaskScope = a.mask_scope.into();
    let report = run_pipeline(&pages, &bank, &cfg, &g.options(1.0, scope))?;
    let sweep = masking_sweep(&pages, &a.factors, &bank, &cfg, &g.options(1.0, scope))?;
    write_report_bundle(&report, Some(&sweep), out)?;
    let e = report.ensemble_prf;
    info!(
        "{} tables, ensemble P={:.3} R={:.3} F1={:.3}",
        pages.len(),
        e.precision,
        e.recall,
        e.f1
    );
    Ok(())
}

fn mask_eval(g: &Globals, a: MaskEvalArgs) -> Result<()> {
    let out = g.out()?;
    let (_, pages) = load_pages(&a.dataset)?;
    let bank = g.bank(&a.bank)?;
    let cfg = g.ensemble_config(&a.opts);
    let sweep = masking_sweep(
        &pages,
        &a.factors,
        &bank,
        &cfg,
        &g.options(1.0, a.mask_scope.into()),
    )?;
    write(out.join(report::MASKING_CSV), &report::masking_csv(&sweep))
}
