//! Recovering the test convention behind a set of reported p-values.
//!
//! A convention is a tail (two-sided, greater, less) together with the way
//! the 2×2 table is filled in. Every candidate is evaluated against every
//! reported comparison, and the report records which candidates reproduce
//! which values. Nothing is assumed in advance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fisher::{fisher_exact, ContingencyTable, TailMode};
use crate::error::{Error, Result};

/// How a group/condition comparison is written into the 2×2 table handed
/// to Fisher's test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableEntry {
    /// Standard layout: (with, without) counts per group.
    #[default]
    Complement,
    /// (with, group size) per group, i.e. the numerators and denominators
    /// of the two rates side by side.
    RatioEntry,
}

impl TableEntry {
    pub const ALL: [TableEntry; 2] = [TableEntry::Complement, TableEntry::RatioEntry];

    pub fn name(self) -> &'static str {
        match self {
            TableEntry::Complement => "complement",
            TableEntry::RatioEntry => "ratio-entry",
        }
    }

    pub fn apply(self, table: &ContingencyTable) -> ContingencyTable {
        match self {
            TableEntry::Complement => *table,
            TableEntry::RatioEntry => table.ratio_entry(),
        }
    }
}

impl fmt::Display for TableEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableEntry::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::validation("table entry", format!("`{s}` is not complement/ratio-entry")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    /// MGI level vs other levels, on a condition flag.
    MgiCondition,
    /// Demographic group vs group, on an MGI level.
    Demographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportedP {
    Approx { value: f64, tolerance: f64 },
    Below { bound: f64 },
}

impl ReportedP {
    pub fn matches(&self, p: f64) -> bool {
        match *self {
            ReportedP::Approx { value, tolerance } => (p - value).abs() <= tolerance,
            ReportedP::Below { bound } => p < bound,
        }
    }
}

impl fmt::Display for ReportedP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportedP::Approx { value, tolerance } => write!(f, "{value} ± {tolerance}"),
            ReportedP::Below { bound } => write!(f, "< {bound}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedComparison {
    pub label: String,
    pub kind: ComparisonKind,
    pub table: ContingencyTable,
    pub reported: ReportedP,
}

impl ReportedComparison {
    pub fn new(
        label: &str,
        kind: ComparisonKind,
        (a, b, c, d): (u64, u64, u64, u64),
        reported: ReportedP,
    ) -> Self {
        Self {
            label: label.to_string(),
            kind,
            table: ContingencyTable { a, b, c, d },
            reported,
        }
    }
}

const PUBLISHED_TOLERANCE: f64 = 0.0005;

fn approx(value: f64) -> ReportedP {
    ReportedP::Approx {
        value,
        tolerance: PUBLISHED_TOLERANCE,
    }
}

/// The five headline comparisons with published counts and p-values.
/// Tables use the standard (with, without) layout.
pub fn headline_comparisons() -> Vec<ReportedComparison> {
    use ComparisonKind::*;
    vec![
        ReportedComparison::new("MGI 4 x swollen joints", MgiCondition, (14, 16, 56, 198), approx(0.0422)),
        ReportedComparison::new("MGI 4 x FH eye disease", MgiCondition, (2, 28, 1, 253), approx(0.0337)),
        ReportedComparison::new(
            "MGI 1 x retinal",
            MgiCondition,
            (5, 34, 0, 245),
            ReportedP::Below { bound: 0.0001 },
        ),
        ReportedComparison::new("male vs female, MGI 3", Demographic, (67, 100, 25, 92), approx(0.0012)),
        ReportedComparison::new("female vs male, MGI 2", Demographic, (58, 59, 62, 105), approx(0.0389)),
    ]
}

/// Stratified and cohort comparisons whose counts can be read off the
/// supplementary and cohort tables; used as extra calibration evidence.
pub fn supplementary_comparisons() -> Vec<ReportedComparison> {
    use ComparisonKind::*;
    vec![
        ReportedComparison::new("female: MGI 4 x swollen joints", MgiCondition, (7, 3, 20, 87), approx(0.0195)),
        ReportedComparison::new("female: MGI 4 x hearing", MgiCondition, (5, 5, 12, 95), approx(0.0245)),
        ReportedComparison::new("female: MGI 4 x difficulty walking", MgiCondition, (4, 6, 7, 100), approx(0.0193)),
        ReportedComparison::new("male: MGI 4 x FH eye disease", MgiCondition, (2, 18, 0, 147), approx(0.0163)),
        ReportedComparison::new("middle age: MGI 1 x asthma", MgiCondition, (3, 5, 6, 85), approx(0.0475)),
        ReportedComparison::new("young adult: MGI 4 x FH eye disease", MgiCondition, (2, 3, 0, 86), approx(0.0049)),
        ReportedComparison::new("male: MGI 1 x retinal", MgiCondition, (4, 13, 0, 150), approx(0.0002)),
        ReportedComparison::new("middle age vs adolescent, MGI 4", Demographic, (16, 83, 0, 52), approx(0.0013)),
        ReportedComparison::new("middle age vs young adult, MGI 4", Demographic, (16, 83, 5, 86), approx(0.0213)),
        ReportedComparison::new("old age vs adolescent, MGI 3", Demographic, (18, 24, 10, 42), approx(0.0224)),
        ReportedComparison::new("old age vs adolescent, MGI 4", Demographic, (9, 33, 0, 52), approx(0.0004)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Convention {
    pub tail: TailMode,
    pub entry: TableEntry,
}

impl Convention {
    pub fn all() -> impl Iterator<Item = Convention> {
        TailMode::ALL
            .into_iter()
            .flat_map(|tail| TableEntry::ALL.into_iter().map(move |entry| Convention { tail, entry }))
    }

    pub fn p_value(&self, table: &ContingencyTable) -> Result<f64> {
        Ok(fisher_exact(&self.entry.apply(table), self.tail)?.p_value)
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tail, self.entry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub label: String,
    pub kind: ComparisonKind,
    pub table: ContingencyTable,
    pub reported: ReportedP,
    pub p_value: f64,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub convention: Convention,
    pub evaluations: Vec<Evaluation>,
    pub n_matched: usize,
}

impl CandidateOutcome {
    pub fn reproduces_all(&self) -> bool {
        self.n_matched == self.evaluations.len()
    }

    pub fn reproduces_kind(&self, kind: ComparisonKind) -> bool {
        self.evaluations.iter().filter(|e| e.kind == kind).all(|e| e.matches)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSelection {
    pub kind: ComparisonKind,
    pub conventions: Vec<Convention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub candidates: Vec<CandidateOutcome>,
    /// Conventions reproducing every comparison at once.
    pub uniform: Vec<Convention>,
    /// Conventions reproducing every comparison of a given kind.
    pub per_kind: Vec<KindSelection>,
    /// A tail that, with some table entry per kind, reproduces everything.
    pub selected_tail: Option<TailMode>,
}

impl CalibrationReport {
    /// The convention that reproduces all comparisons of `kind` using the
    /// selected tail, if there is one.
    pub fn convention_for(&self, kind: ComparisonKind) -> Option<Convention> {
        let tail = self.selected_tail?;
        self.per_kind
            .iter()
            .find(|k| k.kind == kind)?
            .conventions
            .iter()
            .copied()
            .find(|c| c.tail == tail)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for cand in &self.candidates {
            out.push_str(&format!(
                "{:<24} {}/{} reproduced\n",
                cand.convention.to_string(),
                cand.n_matched,
                cand.evaluations.len()
            ));
            for e in &cand.evaluations {
                out.push_str(&format!(
                    "    [{}] {:<40} {:<20} p={:.5} reported {}\n",
                    if e.matches { "ok" } else { "--" },
                    e.label,
                    e.table.to_string(),
                    e.p_value,
                    e.reported
                ));
            }
        }
        let list = |cs: &[Convention]| {
            if cs.is_empty() {
                "none".to_string()
            } else {
                cs.iter().map(Convention::to_string).collect::<Vec<_>>().join(", ")
            }
        };
        out.push_str(&format!("uniform convention: {}\n", list(&self.uniform)));
        for k in &self.per_kind {
            out.push_str(&format!("{:?}: {}\n", k.kind, list(&k.conventions)));
        }
        out.push_str(&format!(
            "selected tail: {}\n",
            self.selected_tail.map_or("none".to_string(), |t| t.to_string())
        ));
        out
    }
}

pub fn calibrate(comparisons: &[ReportedComparison]) -> Result<CalibrationReport> {
    let candidates = Convention::all()
        .map(|convention| {
            let evaluations = comparisons
                .iter()
                .map(|c| {
                    let p = convention.p_value(&c.table)?;
                    Ok(Evaluation {
                        label: c.label.clone(),
                        kind: c.kind,
                        table: c.table,
                        reported: c.reported,
                        p_value: p,
                        matches: c.reported.matches(p),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let n_matched = evaluations.iter().filter(|e| e.matches).count();
            Ok(CandidateOutcome {
                convention,
                evaluations,
                n_matched,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let uniform = candidates
        .iter()
        .filter(|c| c.reproduces_all())
        .map(|c| c.convention)
        .collect();

    let mut kinds: Vec<ComparisonKind> = comparisons.iter().map(|c| c.kind).collect();
    kinds.sort();
    kinds.dedup();
    let per_kind: Vec<KindSelection> = kinds
        .iter()
        .map(|&kind| KindSelection {
            kind,
            conventions: candidates
                .iter()
                .filter(|c| c.reproduces_kind(kind))
                .map(|c| c.convention)
                .collect(),
        })
        .collect();

    let selected_tail = TailMode::ALL.into_iter().find(|&tail| {
        per_kind
            .iter()
            .all(|k| k.conventions.iter().any(|c| c.tail == tail))
    });

    Ok(CalibrationReport {
        candidates,
        uniform,
        per_kind,
        selected_tail,
    })
}
