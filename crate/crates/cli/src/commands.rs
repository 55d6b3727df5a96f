use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use oralscreen_core::aggregation::{subject_consensus, ImageAnnotation, SiteMark};
use oralscreen_core::io::{ingest as ingest_paths, read_image_manifest, write_dataset, Dataset, DatasetPaths, ImageEntry};
use oralscreen_core::masks::{
    baseline_score_map, baseline_segment, bound_annotations_in, color_threshold_mask, ColorThresholdConfig, RgbImage,
};
use oralscreen_core::reference_cohort::write_reference;
use oralscreen_core::report::{
    emit_curves, emit_grids, format_cell, grid_cells_csv, grid_table_csv, OperatingPoint, ReportBundle, ReportConfig,
};
use oralscreen_core::segmetrics::{evaluate, BinaryMask, ProbabilityMap};
use oralscreen_core::stats::calibration::{headline_comparisons, supplementary_comparisons};
use oralscreen_core::stats::calibrate as run_calibration;
use oralscreen_service::{cors_layer, AnnotationStore, AppState, ImageCatalog};
use serde::Serialize;

use crate::config::{FileConfig, ResolvedGrid};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write(path, json)
}

fn load(paths: &DatasetPaths) -> Result<Dataset> {
    ingest_paths(paths).context("ingesting dataset")
}

#[derive(Debug, Serialize)]
struct DatasetSummary<'a> {
    subjects: usize,
    annotations: usize,
    images: usize,
    annotators: usize,
    scored_subjects: usize,
    unscored_subjects: &'a [String],
    digests: &'a BTreeMap<String, String>,
}

fn with_summary<R>(dataset: &Dataset, f: impl FnOnce(&DatasetSummary) -> R) -> R {
    let mgis = dataset.subject_mgis();
    let images: std::collections::BTreeSet<&str> = dataset.annotations.iter().map(|a| a.image_id.as_str()).collect();
    let annotators: std::collections::BTreeSet<&str> =
        dataset.annotations.iter().map(|a| a.annotator_id.as_str()).collect();
    f(&DatasetSummary {
        subjects: dataset.subjects.len(),
        annotations: dataset.annotations.len(),
        images: images.len(),
        annotators: annotators.len(),
        scored_subjects: mgis.mgis.len(),
        unscored_subjects: &mgis.missing,
        digests: &dataset.provenance.digests,
    })
}

pub fn ingest(paths: &DatasetPaths, out: &Path) -> Result<()> {
    let dataset = load(paths)?;
    create_dir(out)?;
    write_dataset(&dataset, out)?;
    write_json(&out.join("provenance.json"), &dataset.provenance)?;
    with_summary(&dataset, |s| -> Result<()> {
        println!("{}", serde_json::to_string_pretty(s)?);
        Ok(())
    })
}

pub fn validate(paths: &DatasetPaths) -> Result<()> {
    let dataset = load(paths)?;
    with_summary(&dataset, |s| {
        println!(
            "ok: {} subjects, {} annotations over {} images by {} annotators",
            s.subjects, s.annotations, s.images, s.annotators
        );
        if !s.unscored_subjects.is_empty() {
            println!(
                "note: {} subjects have no annotated images: {}",
                s.unscored_subjects.len(),
                s.unscored_subjects.join(", ")
            );
        }
    });
    Ok(())
}

fn by_subject(annotations: &[ImageAnnotation]) -> BTreeMap<&str, Vec<ImageAnnotation>> {
    let mut map: BTreeMap<&str, Vec<ImageAnnotation>> = BTreeMap::new();
    for a in annotations {
        map.entry(a.subject_id.as_str()).or_default().push(a.clone());
    }
    map
}

pub fn aggregate_mgi(paths: &DatasetPaths, out: Option<&Path>) -> Result<()> {
    let dataset = load(paths)?;
    let grouped = by_subject(&dataset.annotations);
    let mut csv = String::from("subject_id,mgi,n_images,n_agree\n");
    let mut consensus = Vec::new();
    let mut missing = Vec::new();
    for subject in &dataset.subjects {
        let Some(anns) = grouped.get(subject.subject_id.as_str()) else {
            missing.push(subject.subject_id.clone());
            continue;
        };
        let c = subject_consensus(&subject.subject_id, anns)?;
        writeln!(csv, "{},{},{},{}", c.subject_id, c.mgi.label, c.mgi.n_annotators, c.mgi.n_agree)?;
        consensus.push(c);
    }
    if !missing.is_empty() {
        eprintln!("warning: no annotated images for {}", missing.join(", "));
    }
    match out {
        Some(dir) => {
            create_dir(dir)?;
            write(&dir.join("subject_mgi.csv"), &csv)?;
            write_json(&dir.join("consensus.json"), &consensus)?;
            println!("{} subjects scored, {} without images", consensus.len(), missing.len());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn manifest(path: &Path) -> Result<Vec<ImageEntry>> {
    read_image_manifest(path).with_context(|| format!("reading image manifest {}", path.display()))
}

pub fn masks(paths: &DatasetPaths, images: &Path, out: &Path, file: &FileConfig) -> Result<()> {
    let config = file.mask_config();
    config.validate()?;
    let dataset = load(paths)?;
    let mut marks: BTreeMap<&str, Vec<SiteMark>> = BTreeMap::new();
    for a in &dataset.annotations {
        marks.entry(a.image_id.as_str()).or_default().extend(a.marks.iter().cloned());
    }
    create_dir(out)?;
    let (mut written, mut skipped) = (0usize, Vec::new());
    for entry in manifest(images)? {
        let (Some(path), Some(image_marks)) = (&entry.file, marks.get(entry.image_id.as_str())) else {
            skipped.push(entry.image_id);
            continue;
        };
        let image = RgbImage::read_png(path)?;
        let region = bound_annotations_in(image_marks, config.dilation_radius_px, image.width(), image.height());
        let mask = color_threshold_mask(&image, &region, &config)?;
        mask.write_png(&out.join(format!("{}.png", entry.image_id)))?;
        written += 1;
    }
    println!("{written} ground-truth masks written to {}", out.display());
    if !skipped.is_empty() {
        println!("skipped {} images without a file or annotations", skipped.len());
    }
    Ok(())
}

pub fn segment(images: &Path, out: &Path, file: &FileConfig) -> Result<()> {
    let config: ColorThresholdConfig = file.mask_config();
    config.validate()?;
    create_dir(out)?;
    let mut written = 0usize;
    for entry in manifest(images)? {
        let Some(path) = &entry.file else { continue };
        let image = RgbImage::read_png(path)?;
        baseline_segment(&image, &config)?.write_png(&out.join(format!("{}.png", entry.image_id)))?;
        baseline_score_map(&image).write(&out.join(format!("{}.pmap", entry.image_id)))?;
        written += 1;
    }
    println!("{written} images segmented into {}", out.display());
    Ok(())
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    Ok(out)
}

pub fn seg_eval(pred: &Path, truth: &Path, threshold: f32, out: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!(oralscreen_core::Error::Validation {
            field: "threshold",
            reason: format!("{threshold} outside [0, 1]"),
        });
    }
    let truths = files_with_extension(truth, "png")?;
    if truths.is_empty() {
        bail!(oralscreen_core::Error::Empty("ground-truth directory"));
    }
    let soft = files_with_extension(pred, "pmap")?;
    let hard = files_with_extension(pred, "png")?;
    let mut preds = Vec::with_capacity(truths.len());
    let mut masks = Vec::with_capacity(truths.len());
    for (id, truth_path) in &truths {
        let p = match (soft.get(id), hard.get(id)) {
            (Some(path), _) => ProbabilityMap::read(path)?,
            (None, Some(path)) => ProbabilityMap::from_mask(&BinaryMask::read_png(path)?),
            (None, None) => bail!(oralscreen_core::Error::Validation {
                field: "predictions",
                reason: format!("no prediction for `{id}` in {}", pred.display()),
            }),
        };
        preds.push(p);
        masks.push(BinaryMask::read_png(truth_path)?);
    }
    let (summary, roc, pr) = evaluate(&preds, &masks, threshold)?;
    create_dir(out)?;
    write_json(&out.join("summary.json"), &summary)?;
    match &roc {
        Some(roc) => {
            let op = match (summary.fpr, summary.tpr) {
                (Some(fpr), Some(tpr)) => Some(OperatingPoint {
                    fpr,
                    tpr,
                    precision: summary.precision,
                }),
                _ => None,
            };
            emit_curves(roc, pr.as_ref(), op, out, "")?;
        }
        None => eprintln!("warning: curves undefined (ground truth has no positive or no negative pixels)"),
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} images: tpr {} fpr {} precision {} auc {} mean iou {:.4} (sd {:.4})",
        summary.n_images,
        fmt(summary.tpr),
        fmt(summary.fpr),
        fmt(summary.precision),
        fmt(summary.auc),
        summary.mean_iou,
        summary.sd_iou
    );
    Ok(())
}

fn bundle(paths: &DatasetPaths, grid: &ResolvedGrid, mask: Option<ColorThresholdConfig>) -> Result<ReportBundle> {
    let dataset = load(paths)?;
    let config = ReportConfig {
        grid: grid.grid,
        bp_precedence: grid.bp_precedence,
        strata: grid.strata.clone(),
        mask_config: mask,
    };
    Ok(emit_grids(&dataset, &config)?)
}

fn print_significant(bundle: &ReportBundle) {
    for (name, grid) in [
        ("questionnaire", &bundle.questionnaire_grid),
        ("screening", &bundle.screening_grid),
    ] {
        let cells = grid.significant_cells();
        println!("{name}: {} significant cells at alpha {}", cells.len(), grid.alpha);
        for c in cells {
            let cell = grid.cell(c.mgi_level, c.condition).expect("cell exists");
            println!(
                "  MGI {} x {}: {} p={:.4}",
                c.mgi_level,
                c.condition,
                format_cell(cell),
                c.result.p_value
            );
        }
    }
}

#[derive(Serialize)]
struct GridsOutput<'a> {
    metadata: &'a oralscreen_core::report::ReportMetadata,
    questionnaire_grid: &'a oralscreen_core::cooccurrence::CorrelationGrid,
    screening_grid: &'a oralscreen_core::cooccurrence::CorrelationGrid,
    stratified: &'a [oralscreen_core::report::StratifiedReport],
}

pub fn correlate(paths: &DatasetPaths, grid: &ResolvedGrid, out: &Path) -> Result<()> {
    let b = bundle(paths, grid, None)?;
    create_dir(out)?;
    let mut grids = vec![
        ("questionnaire".to_string(), &b.questionnaire_grid),
        ("screening".to_string(), &b.screening_grid),
    ];
    for s in &b.stratified {
        for (kind, set) in [("questionnaire", &s.questionnaire), ("screening", &s.screening)] {
            grids.extend(set.grids.iter().map(|g| (format!("{kind}_{}", g.filter.label()), g)));
        }
    }
    for (stem, g) in grids {
        write(&out.join(format!("{stem}_grid.csv")), grid_table_csv(g))?;
        write(&out.join(format!("{stem}_cells.csv")), grid_cells_csv(g))?;
    }
    write_json(
        &out.join("grids.json"),
        &GridsOutput {
            metadata: &b.metadata,
            questionnaire_grid: &b.questionnaire_grid,
            screening_grid: &b.screening_grid,
            stratified: &b.stratified,
        },
    )?;
    print_significant(&b);
    Ok(())
}

pub fn report(
    paths: &DatasetPaths,
    grid: &ResolvedGrid,
    mask: Option<ColorThresholdConfig>,
    out: &Path,
) -> Result<()> {
    let b = bundle(paths, grid, mask)?;
    let written = b.write(out)?;
    print_significant(&b);
    println!("{} files written to {}", written.len(), out.display());
    Ok(())
}

pub fn calibrate(out: Option<&Path>) -> Result<()> {
    let mut comparisons = headline_comparisons();
    comparisons.extend(supplementary_comparisons());
    let report = run_calibration(&comparisons)?;
    let text = report.render_text();
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write(&dir.join("calibration.txt"), &text)?;
        write_json(&dir.join("calibration.json"), &report)?;
    }
    Ok(())
}

pub fn synth(out: &Path, images: bool) -> Result<()> {
    create_dir(out)?;
    let dataset = write_reference(out, images)?;
    println!(
        "reference cohort: {} subjects, {} annotations written to {}",
        dataset.subjects.len(),
        dataset.annotations.len(),
        out.display()
    );
    Ok(())
}

pub fn serve(images: &Path, log: &Path, addr: SocketAddr, cors_origin: Option<&str>) -> Result<()> {
    let catalog = ImageCatalog::new(manifest(images)?);
    let store = AnnotationStore::open(log).with_context(|| format!("opening annotation log {}", log.display()))?;
    let cors = cors_layer(cors_origin).context("invalid --cors-origin")?;
    eprintln!(
        "serving {} images on http://{addr} ({} log records replayed)",
        catalog.len(),
        store.log_len()
    );
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime
        .block_on(oralscreen_service::serve(addr, AppState::new(store, catalog), cors))
        .with_context(|| format!("serving on {addr}"))
}
