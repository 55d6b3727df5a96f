use std::collections::BTreeSet;

use oralscreen_core::cooccurrence::{CorrelationGrid, GridCell, GridOptions, Strata};
use oralscreen_core::model::BpPrecedence;
use oralscreen_core::reference_cohort::reference_dataset;
use oralscreen_core::report::{emit_curves, emit_grids, emit_table1, format_cell, ReportConfig};
use oralscreen_core::segmetrics::RocCurve;
use oralscreen_core::stats::{TableEntry, TailMode};
use oralscreen_core::Error;

fn config(entry: TableEntry) -> ReportConfig {
    ReportConfig {
        grid: GridOptions {
            alpha: 0.05,
            tail: TailMode::TwoSided,
            entry,
        },
        bp_precedence: BpPrecedence::HighFirst,
        strata: vec![Strata::Gender, Strata::Age],
        mask_config: None,
    }
}

/// round(100 k / n, 1) with halves away from zero, via floating point.
fn expected_percent(k: u64, n: u64) -> String {
    if k == 0 {
        return "0".into();
    }
    if k == n {
        return "100".into();
    }
    let tenths = (1000.0 * k as f64 / n as f64).round();
    format!("{:.1}", tenths / 10.0)
}

fn all_grids(bundle: &oralscreen_core::report::ReportBundle) -> Vec<&CorrelationGrid> {
    let mut grids = vec![&bundle.questionnaire_grid, &bundle.screening_grid];
    for s in &bundle.stratified {
        grids.extend(&s.questionnaire.grids);
        grids.extend(&s.screening.grids);
    }
    grids
}

#[test]
fn every_percentage_matches_rounded_ratio() {
    let bundle = emit_grids(&reference_dataset(), &config(TableEntry::RatioEntry)).unwrap();
    let mut checked = 0;
    for grid in all_grids(&bundle) {
        for cell in &grid.cells {
            if let GridCell::Computed(c) = cell {
                let want = format!("{} ({})", c.table.a, expected_percent(c.table.a, c.table.row1()));
                let got = format_cell(cell);
                assert_eq!(got.trim_end_matches('*'), want, "{} x {}", c.mgi_level, c.condition);
                checked += 1;
            }
        }
    }
    // 6 levels x 36 conditions in the overall grids, plus the strata
    assert!(checked > 6 * 36, "{checked}");
}

#[test]
fn grid_rows_partition_the_population() {
    let bundle = emit_grids(&reference_dataset(), &config(TableEntry::Complement)).unwrap();
    for grid in all_grids(&bundle) {
        for cell in grid.cells.iter().filter_map(GridCell::computed) {
            let t = cell.table;
            assert_eq!(t.total(), grid.population_size);
            assert_eq!(t.row1(), grid.mgi_histogram[cell.mgi_level.value() as usize]);
        }
    }
}

#[test]
fn table1_counts_only_annotated_subjects() {
    let mut dataset = reference_dataset();
    let dropped: BTreeSet<String> = dataset.subjects.iter().step_by(7).map(|s| s.subject_id.clone()).collect();
    dataset.annotations.retain(|a| !dropped.contains(&a.subject_id));
    let table = emit_table1(&dataset, BpPrecedence::HighFirst);
    assert_eq!(table.total() as usize, dataset.subjects.len() - dropped.len());
    let bundle = emit_grids(&dataset, &config(TableEntry::Complement)).unwrap();
    assert_eq!(bundle.metadata.unscored_subjects.len(), dropped.len());
    assert_eq!(bundle.metadata.n_scored_subjects as u64, table.total());
}

#[test]
fn empty_dataset_gives_zero_table() {
    let mut dataset = reference_dataset();
    dataset.subjects.clear();
    dataset.annotations.clear();
    let table = emit_table1(&dataset, BpPrecedence::HighFirst);
    assert_eq!(table.total(), 0);
    assert_eq!(table.level_totals(), [0; 6]);
}

#[test]
fn report_files_are_byte_identical_across_runs() {
    let dataset = reference_dataset();
    let cfg = config(TableEntry::RatioEntry);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = emit_grids(&dataset, &cfg).unwrap().write(a.path()).unwrap();
    let files_b = emit_grids(&dataset, &cfg).unwrap().write(b.path()).unwrap();
    assert_eq!(files_a.len(), files_b.len());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.file_name(), fb.file_name());
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
    }
    let json = std::fs::read_to_string(a.path().join("report.json")).unwrap();
    assert!(json.contains(&cfg.digest()));
}

#[test]
fn published_roc_curve_files() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("fresh").join("curves");
    let roc = RocCurve::from_points(&[(0.0, 0.0), (0.075, 0.429), (1.0, 1.0)]);
    let summary = emit_curves(&roc, None, None, &target, "fig2a_").unwrap();
    assert!((summary.auc - 0.677).abs() < 1e-12);
    let csv = std::fs::read_to_string(target.join("fig2a_roc.csv")).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows, vec![(0.0, 0.0), (0.075, 0.429), (1.0, 1.0)]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(target.join("fig2a_curves.json")).unwrap()).unwrap();
    assert!((json["auc"].as_f64().unwrap() - 0.677).abs() < 1e-12);
}

#[test]
fn diagonal_curve_has_half_auc() {
    let dir = tempfile::tempdir().unwrap();
    let roc = RocCurve::from_points(&[(0.0, 0.0), (1.0, 1.0)]);
    assert_eq!(emit_curves(&roc, None, None, dir.path(), "").unwrap().auc, 0.5);
    assert!(dir.path().join("roc.csv").exists());
}

#[test]
fn unwritable_curve_target_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let roc = RocCurve::from_points(&[(0.0, 0.0), (1.0, 1.0)]);
    let err = emit_curves(&roc, None, None, &blocker.join("sub"), "").unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(!err.is_validation());
}
