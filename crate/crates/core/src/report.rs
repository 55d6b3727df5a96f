//! Regenerated study tables and curve data as CSV and JSON.
//!
//! Outputs carry no timestamps, so identical inputs and configuration give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cooccurrence::{
    run_grid, run_stratified_grids, CohortFilter, CorrelationGrid, GridCell, GridOptions,
    Population, StratifiedGrids, Strata, MGI_LEVELS,
};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, Dataset};
use crate::masks::ColorThresholdConfig;
use crate::model::{AgeCohort, BpPrecedence, Condition, Gender};
use crate::segmetrics::{auc_trapezoid, CurvePoint, PrCurve, RocCurve};

/// Subjects per MGI level, age cohort and gender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1 {
    /// `[mgi][cohort][female, male]`
    pub counts: [[[u64; 2]; 4]; MGI_LEVELS],
}

impl Table1 {
    pub fn from_population(population: &Population) -> Self {
        let mut counts = [[[0u64; 2]; 4]; MGI_LEVELS];
        for s in population.subjects() {
            let c = AgeCohort::ALL.iter().position(|&c| c == s.cohort).unwrap();
            let g = Gender::ALL.iter().position(|&g| g == s.gender).unwrap();
            counts[s.mgi.value() as usize][c][g] += 1;
        }
        Self { counts }
    }

    pub fn level_total(&self, mgi: usize) -> u64 {
        self.counts[mgi].iter().flatten().sum()
    }

    pub fn level_totals(&self) -> [u64; MGI_LEVELS] {
        std::array::from_fn(|m| self.level_total(m))
    }

    pub fn gender_total(&self, gender: Gender) -> u64 {
        let g = Gender::ALL.iter().position(|&x| x == gender).unwrap();
        self.counts.iter().flatten().map(|cell| cell[g]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mgi");
        for c in AgeCohort::ALL {
            for g in Gender::ALL {
                write!(out, ",{}_{}", c.name(), g.name()).unwrap();
            }
        }
        out.push_str(",female_total,male_total,total\n");
        let mut col_totals = [0u64; 8];
        for (m, row) in self.counts.iter().enumerate() {
            write!(out, "{m}").unwrap();
            let mut by_gender = [0u64; 2];
            for (c, cell) in row.iter().enumerate() {
                for g in 0..2 {
                    write!(out, ",{}", cell[g]).unwrap();
                    by_gender[g] += cell[g];
                    col_totals[c * 2 + g] += cell[g];
                }
            }
            writeln!(out, ",{},{},{}", by_gender[0], by_gender[1], by_gender[0] + by_gender[1])
                .unwrap();
        }
        out.push_str("total");
        for t in col_totals {
            write!(out, ",{t}").unwrap();
        }
        writeln!(
            out,
            ",{},{},{}",
            self.gender_total(Gender::Female),
            self.gender_total(Gender::Male),
            self.total()
        )
        .unwrap();
        out
    }
}

/// Table 1 over subjects with at least one annotated image.
pub fn emit_table1(dataset: &Dataset, precedence: BpPrecedence) -> Table1 {
    Table1::from_population(&dataset.population(precedence))
}

/// `100·k/n` rounded half away from zero to one decimal, in the tables'
/// style: "0" and "100" are written without a decimal.
pub fn format_percent(k: u64, n: u64) -> String {
    if n == 0 {
        return "-".to_string();
    }
    if k == 0 {
        return "0".to_string();
    }
    if k == n {
        return "100".to_string();
    }
    // tenths of a percent, exact integer rounding
    let tenths = (2000 * k + n) / (2 * n);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// "k (pct)" with a trailing `*` for significant cells.
pub fn format_cell(cell: &GridCell) -> String {
    match cell {
        GridCell::Computed(c) => format!(
            "{} ({}){}",
            c.table.a,
            format_percent(c.table.a, c.table.row1()),
            if c.significant { "*" } else { "" }
        ),
        GridCell::NotComputable { .. } => "n/a".to_string(),
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The grid in the published layout: one row per MGI level with its
/// subject count, one column per condition.
pub fn grid_table_csv(grid: &CorrelationGrid) -> String {
    let mut out = String::from("mgi,n");
    for c in &grid.conditions {
        write!(out, ",{}", c.name()).unwrap();
    }
    out.push('\n');
    for (m, n) in grid.mgi_histogram.iter().enumerate() {
        write!(out, "{m},{n}").unwrap();
        for cell in grid.cells.iter().filter(|c| c.mgi_level().value() as usize == m) {
            write!(out, ",{}", csv_quote(&format_cell(cell))).unwrap();
        }
        out.push('\n');
    }
    out
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

/// One line per cell with counts, the tested table, p-value and flags.
pub fn grid_cells_csv(grid: &CorrelationGrid) -> String {
    let mut out = String::from(
        "mgi,condition,a,b,c,d,percent,tested_a,tested_b,tested_c,tested_d,p_value,odds_ratio,significant,higher_rate,note\n",
    );
    for cell in &grid.cells {
        let m = cell.mgi_level().value();
        let cond = cell.condition().name();
        match cell {
            GridCell::Computed(c) => {
                let t = c.table;
                let tested = grid.entry.apply(&t);
                writeln!(
                    out,
                    "{m},{cond},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    t.a,
                    t.b,
                    t.c,
                    t.d,
                    format_percent(t.a, t.row1()),
                    tested.a,
                    tested.b,
                    tested.c,
                    tested.d,
                    fmt_f64(c.result.p_value),
                    fmt_f64(c.result.statistic),
                    c.significant,
                    c.higher_rate
                )
                .unwrap();
            }
            GridCell::NotComputable { reason, .. } => {
                writeln!(out, "{m},{cond},,,,,,,,,,,,,,{}", csv_quote(reason)).unwrap();
            }
        }
    }
    out
}

/// Everything that influences a report's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub grid: GridOptions,
    pub bp_precedence: BpPrecedence,
    pub strata: Vec<Strata>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_config: Option<ColorThresholdConfig>,
}

impl ReportConfig {
    /// SHA-256 of the configuration's canonical JSON.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config: ReportConfig,
    pub config_digest: String,
    pub source_digests: BTreeMap<String, String>,
    pub n_subjects: usize,
    pub n_scored_subjects: usize,
    /// Subjects left out because none of their images were annotated.
    pub unscored_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub strata: Strata,
    pub questionnaire: StratifiedGrids,
    pub screening: StratifiedGrids,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: ReportMetadata,
    pub table1: Table1,
    pub questionnaire_grid: CorrelationGrid,
    pub screening_grid: CorrelationGrid,
    pub stratified: Vec<StratifiedReport>,
}

/// Questionnaire and screening grids over the whole cohort, plus the
/// requested stratified grids.
pub fn emit_grids(dataset: &Dataset, config: &ReportConfig) -> Result<ReportBundle> {
    config.grid.validate()?;
    let population = dataset.population(config.bp_precedence);
    let mgis = dataset.subject_mgis();
    let questionnaire = Condition::questionnaire();
    let screenings = Condition::screenings();
    let all = CohortFilter::all();
    let stratified = config
        .strata
        .iter()
        .map(|&strata| {
            Ok(StratifiedReport {
                strata,
                questionnaire: run_stratified_grids(&population, &questionnaire, strata, &config.grid)?,
                screening: run_stratified_grids(&population, &screenings, strata, &config.grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportBundle {
        metadata: ReportMetadata {
            config: config.clone(),
            config_digest: config.digest(),
            source_digests: dataset.provenance.digests.clone(),
            n_subjects: dataset.subjects.len(),
            n_scored_subjects: population.len(),
            unscored_subjects: mgis.missing,
        },
        table1: Table1::from_population(&population),
        questionnaire_grid: run_grid(&population, &questionnaire, &all, &config.grid)?,
        screening_grid: run_grid(&population, &screenings, &all, &config.grid)?,
        stratified,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl ReportBundle {
    /// Writes every table into `dir` and returns the paths written, in a
    /// fixed order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(String, String)> = vec![
            ("table1.csv".into(), self.table1.to_csv()),
            ("questionnaire_grid.csv".into(), grid_table_csv(&self.questionnaire_grid)),
            ("questionnaire_cells.csv".into(), grid_cells_csv(&self.questionnaire_grid)),
            ("screening_grid.csv".into(), grid_table_csv(&self.screening_grid)),
            ("screening_cells.csv".into(), grid_cells_csv(&self.screening_grid)),
        ];
        for s in &self.stratified {
            for (kind, grids) in [("questionnaire", &s.questionnaire), ("screening", &s.screening)] {
                for g in &grids.grids {
                    let stem = format!("{kind}_{}", g.filter.label());
                    files.push((format!("{stem}_grid.csv"), grid_table_csv(g)));
                    files.push((format!("{stem}_cells.csv"), grid_cells_csv(g)));
                }
            }
        }
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        files.push(("report.json".into(), json));

        let mut written = Vec::with_capacity(files.len());
        for (name, contents) in files {
            let path = dir.join(name);
            write_file(&path, &contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub roc_points: usize,
    pub pr_points: usize,
    /// The highlighted (fpr, tpr) / (recall, precision) operating point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<OperatingPoint>,
    pub zero_prediction_precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
}

fn curve_csv(header: &str, points: &[CurvePoint]) -> String {
    let mut out = format!("{header},threshold\n");
    for p in points {
        let thr = p.threshold.map_or_else(|| "inf".to_string(), fmt_f64);
        writeln!(out, "{},{},{thr}", fmt_f64(p.x), fmt_f64(p.y)).unwrap();
    }
    out
}

/// Writes `<prefix>roc.csv`, `<prefix>pr.csv` and `<prefix>curves.json`
/// into `dir`, creating it if needed.
pub fn emit_curves(
    roc: &RocCurve,
    pr: Option<&PrCurve>,
    operating_point: Option<OperatingPoint>,
    dir: &Path,
    prefix: &str,
) -> Result<CurveSummary> {
    let auc = auc_trapezoid(roc)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(format!("{prefix}roc.csv")), &curve_csv("fpr,tpr", &roc.points))?;
    if let Some(pr) = pr {
        write_file(
            &dir.join(format!("{prefix}pr.csv")),
            &curve_csv("recall,precision", &pr.points),
        )?;
    }
    let summary = CurveSummary {
        auc,
        roc_points: roc.points.len(),
        pr_points: pr.map_or(0, |p| p.points.len()),
        operating_point,
        zero_prediction_precision: pr.map_or(1.0, |p| p.zero_prediction_precision),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_file(&dir.join(format!("{prefix}curves.json")), &json)?;
    Ok(summary)
}
