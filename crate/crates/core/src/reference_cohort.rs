//! A deterministic synthetic cohort of 284 subjects and 1215 annotated
//! images whose marginal counts equal the published study tables: the MGI
//! distribution by gender and age cohort, and condition positives per MGI
//! level overall, by gender and by age cohort.
//!
//! Within each (MGI, condition) the gender-by-cohort positives are solved as
//! a small transport problem against cell capacities, so every published
//! marginal holds at once. Where the per-gender and per-age splits disagree
//! on the total, the per-age (and overall) total is kept and the gender
//! split nearest the published one is used.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::aggregation::{ImageAnnotation, MgiScore, Point, Site, SiteMark};
use crate::error::{Error, Result};
use crate::io::{
    images_from_annotations, write_dataset, write_image_manifest, Dataset, Provenance, IMAGES_FILE,
};
use crate::masks::RgbImage;
use crate::model::{
    AgeCohort, EcgLabel, Gender, QuestionnaireResponse, RoutineScreenings,
    ScreeningFlag, SubjectRecord, TesResults, QUESTIONNAIRE_LEN,
};
use crate::{FRAME_HEIGHT, FRAME_WIDTH};

/// Subjects per MGI level, age cohort and (female, male).
pub const MGI_BY_GENDER_COHORT: [[[u16; 2]; 4]; 6] = [
    [[1, 0], [0, 0], [0, 1], [0, 0]],
    [[9, 4], [10, 5], [3, 5], [0, 3]],
    [[20, 8], [17, 23], [19, 21], [2, 10]],
    [[3, 7], [10, 21], [9, 24], [3, 15]],
    [[0, 0], [0, 5], [8, 8], [2, 7]],
    [[0, 0], [0, 0], [1, 0], [0, 0]],
];

pub const SUBJECT_COUNT: usize = 284;
pub const IMAGE_COUNT: usize = 1215;
/// Subjects contributing five images; the rest contribute four.
pub const FIVE_IMAGE_SUBJECTS: usize = 79;
pub const ANNOTATORS: [&str; 3] = ["expert_a", "expert_b", "expert_c"];

/// Screening flags in report column order (atrial fibrillation is not
/// reported).
pub const SCREENING_COLUMNS: [ScreeningFlag; 9] = [
    ScreeningFlag::HighBpMeasured,
    ScreeningFlag::LowBpMeasured,
    ScreeningFlag::HighBmi,
    ScreeningFlag::LowBmi,
    ScreeningFlag::LowO2,
    ScreeningFlag::Retinal,
    ScreeningFlag::Tm,
    ScreeningFlag::FingerNose,
    ScreeningFlag::Gait,
];

/// Questionnaire positives per MGI level, in item order.
pub const QUESTIONNAIRE_TOTALS: [[u16; QUESTIONNAIRE_LEN]; 6] = [
    [1, 0, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [23, 11, 4, 7, 13, 7, 1, 3, 1, 1, 1, 3, 1, 3, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0],
    [59, 27, 23, 17, 30, 22, 7, 8, 6, 8, 5, 5, 3, 2, 2, 1, 1, 2, 0, 0, 0, 1, 0, 0, 1, 0],
    [43, 25, 29, 22, 12, 12, 11, 12, 8, 7, 6, 2, 2, 3, 3, 1, 2, 1, 1, 2, 0, 1, 0, 0, 0, 0],
    [15, 8, 14, 11, 5, 2, 3, 5, 2, 4, 1, 1, 3, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 1],
    [0; QUESTIONNAIRE_LEN],
];

/// Screening positives per MGI level, in [`SCREENING_COLUMNS`] order. MGI 3
/// high BMI and tympanic membrane use the values implied by the per-gender
/// and per-age breakdowns (33 and 11).
pub const SCREENING_TOTALS: [[u16; 9]; 6] = [
    [1, 0, 2, 0, 0, 0, 0, 0, 0],
    [4, 1, 18, 5, 1, 5, 3, 0, 0],
    [24, 0, 55, 19, 6, 0, 8, 0, 0],
    [14, 2, 33, 18, 4, 0, 11, 2, 1],
    [9, 0, 11, 7, 1, 0, 2, 0, 1],
    [0; 9],
];

/// Questionnaire positives per MGI level and item, as (female, male).
const QUESTIONNAIRE_BY_GENDER: [[[u16; 2]; 26]; 6] = [
    [[0, 1], [0, 0], [0, 0], [0, 0], [1, 0], [0, 0], [0, 1], [0, 0], [0, 0], [0, 1], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0]],
    [[15, 8], [4, 7], [1, 3], [2, 5], [8, 5], [5, 2], [0, 1], [0, 3], [0, 1], [0, 1], [0, 1], [1, 2], [0, 1], [1, 2], [0, 0], [0, 0], [0, 0], [1, 0], [0, 0], [0, 0], [0, 1], [0, 0], [0, 0], [0, 0], [0, 1], [0, 0]],
    [[18, 31], [10, 17], [10, 13], [6, 11], [11, 11], [14, 8], [1, 6], [5, 3], [2, 4], [3, 5], [2, 3], [2, 3], [0, 3], [0, 2], [0, 2], [0, 1], [1, 0], [1, 1], [0, 0], [0, 0], [0, 0], [0, 1], [0, 0], [0, 0], [1, 0], [0, 0]],
    [[15, 28], [6, 19], [9, 20], [4, 18], [4, 18], [4, 8], [0, 11], [2, 10], [3, 5], [2, 5], [1, 5], [0, 2], [0, 2], [2, 1], [0, 3], [0, 1], [2, 0], [1, 0], [1, 0], [0, 2], [0, 0], [0, 1], [0, 0], [0, 0], [0, 0], [0, 0]],
    [[6, 9], [3, 5], [7, 7], [5, 6], [1, 6], [0, 2], [0, 3], [4, 1], [0, 2], [0, 3], [1, 0], [1, 0], [0, 3], [0, 0], [1, 0], [0, 0], [0, 0], [0, 0], [0, 2], [0, 0], [0, 0], [0, 0], [1, 0], [0, 0], [0, 0], [0, 1]],
    [[0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0]],
];

/// Questionnaire positives per MGI level and item, by age cohort.
const QUESTIONNAIRE_BY_AGE: [[[u16; 4]; 26]; 6] = [
    [[0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
    [[7, 7, 8, 1], [1, 3, 5, 2], [0, 1, 1, 2], [0, 2, 3, 2], [4, 7, 2, 0], [3, 4, 0, 0], [0, 1, 0, 0], [0, 0, 0, 3], [0, 0, 1, 0], [0, 0, 1, 0], [0, 0, 1, 0], [0, 0, 3, 0], [0, 0, 1, 0], [0, 2, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0]],
    [[10, 13, 29, 7], [1, 8, 14, 4], [0, 5, 13, 5], [1, 1, 9, 6], [7, 9, 13, 1], [6, 8, 8, 0], [0, 3, 2, 2], [0, 1, 4, 3], [0, 0, 5, 1], [0, 1, 6, 1], [0, 0, 4, 1], [0, 1, 3, 1], [0, 1, 1, 1], [0, 1, 1, 0], [0, 0, 2, 0], [0, 0, 1, 0], [1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0]],
    [[3, 12, 16, 12], [2, 6, 12, 5], [0, 1, 18, 10], [0, 2, 14, 6], [3, 6, 3, 0], [2, 6, 2, 2], [0, 1, 5, 5], [0, 0, 9, 3], [0, 0, 2, 6], [0, 0, 4, 3], [0, 0, 1, 5], [0, 0, 2, 0], [0, 0, 2, 0], [0, 2, 0, 1], [0, 0, 0, 3], [0, 0, 1, 0], [0, 1, 1, 0], [1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 1, 1], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
    [[0, 1, 10, 4], [0, 1, 5, 2], [0, 1, 7, 6], [0, 0, 7, 4], [0, 3, 2, 0], [0, 1, 1, 0], [0, 1, 1, 1], [0, 0, 4, 1], [0, 0, 1, 1], [0, 0, 3, 1], [0, 0, 1, 0], [0, 0, 1, 0], [0, 0, 1, 2], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 2, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [0, 1, 0, 0]],
    [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
];

/// Screening positives per MGI level and flag, as (female, male).
const SCREENING_BY_GENDER: [[[u16; 2]; 9]; 6] = [
    [[0, 1], [0, 0], [1, 1], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0]],
    [[1, 3], [1, 0], [11, 7], [3, 2], [1, 0], [1, 4], [2, 1], [0, 0], [0, 0]],
    [[7, 17], [0, 0], [24, 31], [12, 7], [1, 5], [0, 0], [5, 3], [0, 0], [0, 0]],
    [[1, 13], [1, 1], [8, 25], [6, 12], [1, 3], [0, 0], [1, 10], [0, 2], [0, 1]],
    [[2, 7], [0, 0], [4, 7], [2, 5], [1, 0], [0, 0], [1, 1], [0, 0], [0, 1]],
    [[0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0]],
];

/// Screening positives per MGI level and flag, by age cohort.
const SCREENING_BY_AGE: [[[u16; 4]; 9]; 6] = [
    [[0, 0, 1, 0], [0, 0, 0, 0], [1, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
    [[0, 3, 1, 0], [0, 1, 0, 0], [5, 6, 6, 1], [4, 1, 0, 0], [0, 0, 1, 0], [1, 1, 1, 2], [0, 2, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
    [[1, 6, 12, 5], [0, 0, 0, 0], [8, 16, 28, 3], [7, 9, 1, 2], [2, 1, 2, 1], [0, 0, 0, 0], [1, 2, 3, 2], [0, 0, 0, 0], [0, 0, 0, 0]],
    [[0, 1, 9, 4], [1, 0, 1, 0], [2, 8, 16, 7], [3, 4, 5, 6], [0, 1, 1, 2], [0, 0, 0, 0], [2, 2, 4, 3], [0, 0, 2, 0], [0, 0, 0, 1]],
    [[0, 1, 6, 2], [0, 0, 0, 0], [0, 2, 8, 1], [0, 2, 3, 2], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 1, 1], [0, 0, 0, 0], [0, 1, 0, 0]],
    [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
];

/// (female, male) by cohort.
type Split = [[u16; 4]; 2];

fn capacity(mgi: usize) -> Split {
    let mut cap = [[0; 4]; 2];
    for (c, cell) in MGI_BY_GENDER_COHORT[mgi].iter().enumerate() {
        cap[0][c] = cell[0];
        cap[1][c] = cell[1];
    }
    cap
}

/// Every split with the given gender and cohort totals that fits within
/// `cap`, closest to the proportional allocation first.
fn transport_solutions(by_gender: [u16; 2], by_age: [u16; 4], cap: &Split) -> Vec<Split> {
    let total: u16 = by_age.iter().sum();
    if by_gender[0] + by_gender[1] != total {
        return Vec::new();
    }
    let lo = |c: usize| by_age[c].saturating_sub(cap[1][c]);
    let hi = |c: usize| by_age[c].min(cap[0][c]);
    let mut out = Vec::new();
    for f0 in lo(0)..=hi(0) {
        for f1 in lo(1)..=hi(1) {
            for f2 in lo(2)..=hi(2) {
                let used = f0 + f1 + f2;
                if used > by_gender[0] {
                    continue;
                }
                let f3 = by_gender[0] - used;
                if f3 < lo(3) || f3 > hi(3) {
                    continue;
                }
                let f = [f0, f1, f2, f3];
                let m = [0, 1, 2, 3].map(|c| by_age[c] - f[c]);
                out.push([f, m]);
            }
        }
    }
    let cost = |x: &Split| -> f64 {
        let mut s = 0.0;
        for g in 0..2 {
            for c in 0..4 {
                let want = by_age[c] as f64 * by_gender[g] as f64 / total.max(1) as f64;
                s += (x[g][c] as f64 - want).powi(2);
            }
        }
        s
    };
    out.sort_by(|a, b| cost(a).total_cmp(&cost(b)));
    out
}

/// The published gender split when it is consistent with the cohort
/// totals, otherwise the feasible split nearest to it (L1, then closest to
/// the published female share).
fn resolve_gender(published: [u16; 2], by_age: [u16; 4], cap: &Split) -> [u16; 2] {
    let total: u16 = by_age.iter().sum();
    if published[0] + published[1] == total {
        return published;
    }
    let share = if published[0] + published[1] == 0 {
        0.5
    } else {
        published[0] as f64 / (published[0] + published[1]) as f64
    };
    (0..=total)
        .map(|f| [f, total - f])
        .filter(|g| !transport_solutions(*g, by_age, cap).is_empty())
        .min_by(|a, b| {
            let l1 = |g: &[u16; 2]| g[0].abs_diff(published[0]) + g[1].abs_diff(published[1]);
            let prop = |g: &[u16; 2]| (g[0] as f64 - share * total as f64).abs();
            l1(a).cmp(&l1(b)).then(prop(a).total_cmp(&prop(b)))
        })
        .expect("some gender split is feasible")
}

/// The gender-by-cohort positives used for one (MGI level, column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSplit {
    pub by_gender: [u16; 2],
    pub by_age: [u16; 4],
    pub cells: Split,
}

fn solve(published_gender: [u16; 2], by_age: [u16; 4], cap: &Split) -> ColumnSplit {
    let by_gender = resolve_gender(published_gender, by_age, cap);
    let cells = transport_solutions(by_gender, by_age, cap)[0];
    ColumnSplit {
        by_gender,
        by_age,
        cells,
    }
}

/// Two mutually exclusive columns (high/low readings) solved so that the
/// pair fits in every cell.
fn solve_pair(
    gender: [[u16; 2]; 2],
    age: [[u16; 4]; 2],
    cap: &Split,
) -> (ColumnSplit, ColumnSplit) {
    let g_hi = resolve_gender(gender[0], age[0], cap);
    for hi in transport_solutions(g_hi, age[0], cap) {
        let mut rest = *cap;
        for g in 0..2 {
            for c in 0..4 {
                rest[g][c] -= hi[g][c];
            }
        }
        let g_lo = resolve_gender(gender[1], age[1], &rest);
        if let Some(lo) = transport_solutions(g_lo, age[1], &rest).first() {
            return (
                ColumnSplit {
                    by_gender: g_hi,
                    by_age: age[0],
                    cells: hi,
                },
                ColumnSplit {
                    by_gender: g_lo,
                    by_age: age[1],
                    cells: *lo,
                },
            );
        }
    }
    panic!("exclusive columns do not fit the cohort")
}

/// Column splits for the 26 questionnaire items at every MGI level.
pub fn questionnaire_splits() -> [[ColumnSplit; QUESTIONNAIRE_LEN]; 6] {
    std::array::from_fn(|m| {
        let cap = capacity(m);
        std::array::from_fn(|j| {
            solve(QUESTIONNAIRE_BY_GENDER[m][j], QUESTIONNAIRE_BY_AGE[m][j], &cap)
        })
    })
}

/// Column splits for the nine reported screening flags at every MGI level.
pub fn screening_splits() -> [[ColumnSplit; 9]; 6] {
    std::array::from_fn(|m| {
        let cap = capacity(m);
        let g = &SCREENING_BY_GENDER[m];
        let a = &SCREENING_BY_AGE[m];
        let (bp_hi, bp_lo) = solve_pair([g[0], g[1]], [a[0], a[1]], &cap);
        let (bmi_hi, bmi_lo) = solve_pair([g[2], g[3]], [a[2], a[3]], &cap);
        let mut out = [bp_hi; 9];
        out[1] = bp_lo;
        out[2] = bmi_hi;
        out[3] = bmi_lo;
        for j in 4..9 {
            out[j] = solve(g[j], a[j], &cap);
        }
        out
    })
}

/// Published per-gender split for a questionnaire column.
pub fn published_questionnaire_gender(mgi: usize, item: usize) -> [u16; 2] {
    QUESTIONNAIRE_BY_GENDER[mgi][item]
}

/// Published per-age split for a questionnaire column.
pub fn published_questionnaire_age(mgi: usize, item: usize) -> [u16; 4] {
    QUESTIONNAIRE_BY_AGE[mgi][item]
}

pub fn published_screening_gender(mgi: usize, column: usize) -> [u16; 2] {
    SCREENING_BY_GENDER[mgi][column]
}

pub fn published_screening_age(mgi: usize, column: usize) -> [u16; 4] {
    SCREENING_BY_AGE[mgi][column]
}

struct Slot {
    mgi: usize,
    gender: usize,
    questionnaire: [bool; QUESTIONNAIRE_LEN],
    screening: [bool; 9],
    age: u32,
}

/// Marks `count` members of a cell, starting `offset` places in and
/// wrapping, skipping the first `skip` positions of that rotation.
fn rotation(n: usize, offset: usize, skip: usize, count: usize) -> impl Iterator<Item = usize> {
    (skip..skip + count).map(move |t| (offset + t) % n)
}

fn build_slots() -> Vec<Slot> {
    let q = questionnaire_splits();
    let s = screening_splits();
    let mut slots = Vec::with_capacity(SUBJECT_COUNT);
    for (m, by_cohort) in MGI_BY_GENDER_COHORT.iter().enumerate() {
        for (c, cell) in by_cohort.iter().enumerate() {
            let cohort = AgeCohort::ALL[c];
            let (lo, hi) = cohort.bounds();
            for (g, &n) in cell.iter().enumerate() {
                let n = n as usize;
                if n == 0 {
                    continue;
                }
                let start = slots.len();
                for k in 0..n {
                    slots.push(Slot {
                        mgi: m,
                        gender: g,
                        questionnaire: [false; QUESTIONNAIRE_LEN],
                        screening: [false; 9],
                        age: lo + ((k * 7 + m + g) as u32) % (hi - lo + 1),
                    });
                }
                let members = &mut slots[start..];
                for (j, split) in q[m].iter().enumerate() {
                    let x = split.cells[g][c] as usize;
                    for i in rotation(n, j * 5 + m, 0, x) {
                        members[i].questionnaire[j] = true;
                    }
                }
                for (j, split) in s[m].iter().enumerate() {
                    let x = split.cells[g][c] as usize;
                    // exclusive pairs share a rotation: the low column
                    // continues where the high one stopped
                    let (offset, skip) = match j {
                        1 | 3 => ((j - 1) * 3 + m, s[m][j - 1].cells[g][c] as usize),
                        _ => (j * 3 + m, 0),
                    };
                    for i in rotation(n, offset, skip, x) {
                        members[i].screening[j] = true;
                    }
                }
            }
        }
    }
    slots
}

/// Subject ids are a fixed permutation of S001..S284 so that id order does
/// not track MGI.
fn subject_id(slot_index: usize) -> String {
    format!("S{:03}", (slot_index * 97) % SUBJECT_COUNT + 1)
}

fn record_for(id: String, slot: &Slot) -> SubjectRecord {
    let sc = &slot.screening;
    let (systolic, diastolic) = if sc[0] {
        (150.0, 95.0)
    } else if sc[1] {
        (85.0, 55.0)
    } else {
        (120.0, 80.0)
    };
    let bmi = if sc[2] {
        27.0
    } else if sc[3] {
        17.5
    } else {
        22.0
    };
    let spo2 = if sc[4] { 88.0 } else { 97.0 };
    SubjectRecord::new(
        id,
        slot.age,
        Gender::ALL[slot.gender],
        QuestionnaireResponse::new(slot.questionnaire),
        RoutineScreenings::new(systolic, diastolic, bmi).expect("fixed readings are valid"),
        TesResults::new(spo2, sc[5], sc[6], sc[7], sc[8], EcgLabel::Normal)
            .expect("fixed readings are valid"),
    )
    .expect("cohort ages are in range")
}

/// The 284 subject records, sorted by id.
pub fn reference_subjects() -> Vec<SubjectRecord> {
    let mut out: Vec<SubjectRecord> = build_slots()
        .iter()
        .enumerate()
        .map(|(i, slot)| record_for(subject_id(i), slot))
        .collect();
    out.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    out
}

/// Target subject MGI for every reference subject id.
pub fn reference_mgis() -> BTreeMap<String, MgiScore> {
    build_slots()
        .iter()
        .enumerate()
        .map(|(i, s)| (subject_id(i), MgiScore::new(s.mgi as u8).expect("0..=5")))
        .collect()
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 3, 1, 9, 0, 0).unwrap()
}

fn jitter(seed: usize) -> (i64, i64) {
    ((seed * 13 % 9) as i64 - 4, (seed * 7 % 9) as i64 - 4)
}

fn site_points(site: Site, seed: usize) -> Vec<Point> {
    let base: &[(i64, i64)] = match site {
        Site::GingivalMargin => &[(200, 318), (260, 305), (320, 300), (380, 305), (440, 318)],
        Site::LeftPapilla => &[(250, 262), (262, 248), (274, 262)],
        Site::RightPapilla => &[(390, 262), (402, 248), (414, 262)],
    };
    let (dx, dy) = jitter(seed);
    base.iter()
        .map(|&(x, y)| Point::new((x + dx) as u32, (y + dy) as u32))
        .collect()
}

/// Sites an annotator marks as diseased for a given score.
fn diseased_sites(score: u8) -> [bool; 3] {
    [score >= 1, score >= 2, score >= 4]
}

fn marks_for(score: u8, seed: usize) -> Vec<SiteMark> {
    if score == 0 {
        return Vec::new();
    }
    Site::ALL
        .into_iter()
        .zip(diseased_sites(score))
        .map(|(site, diseased)| SiteMark {
            site,
            points: if diseased {
                site_points(site, seed)
            } else {
                Vec::new()
            },
            diseased,
        })
        .collect()
}

/// Three annotations per image. Annotators agree on each image's target by
/// majority; for even-indexed subjects with MGI ≥ 1 the last two images
/// target one level lower, so the subject MGI comes out of a greater-tie
/// (4 images) or a plain majority (5 images).
pub fn reference_annotations(subjects: &[SubjectRecord]) -> Result<Vec<ImageAnnotation>> {
    let mgis = reference_mgis();
    let mut out = Vec::with_capacity(IMAGE_COUNT * ANNOTATORS.len());
    let mut image_index = 0usize;
    for (i, subject) in subjects.iter().enumerate() {
        let m = mgis
            .get(&subject.subject_id)
            .ok_or_else(|| Error::Orphans(vec![subject.subject_id.clone()]))?
            .value();
        let n_images = if (FIVE_IMAGE_SUBJECTS * i) % SUBJECT_COUNT < FIVE_IMAGE_SUBJECTS {
            5
        } else {
            4
        };
        for j in 0..n_images {
            let target = if m >= 1 && i % 2 == 0 && j >= n_images - 2 {
                m - 1
            } else {
                m
            };
            let up = (target + 1).min(MgiScore::MAX);
            let down = target.saturating_sub(1);
            let scores = match (i + j) % 3 {
                0 => [target, target, target],
                1 => [target, target, up],
                _ => [down, target, target],
            };
            let image_id = format!("{}_img{}", subject.subject_id, j + 1);
            for (k, (&annotator, score)) in ANNOTATORS.iter().zip(scores).enumerate() {
                out.push(ImageAnnotation {
                    image_id: image_id.clone(),
                    subject_id: subject.subject_id.clone(),
                    annotator_id: annotator.to_string(),
                    mgi: MgiScore::new(score)?,
                    marks: marks_for(score, image_index * 3 + k),
                    timestamp: base_time()
                        + Duration::seconds((image_index * ANNOTATORS.len() + k) as i64 * 90),
                });
            }
            image_index += 1;
        }
    }
    Ok(out)
}

/// The full reference dataset. Provenance carries no file digests and a
/// fixed timestamp so the value is reproducible.
pub fn reference_dataset() -> Dataset {
    let subjects = reference_subjects();
    let annotations = reference_annotations(&subjects).expect("reference subjects are complete");
    Dataset {
        subjects,
        annotations,
        provenance: Provenance {
            digests: BTreeMap::new(),
            ingested_at: base_time(),
        },
    }
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

const LESION_RADIUS: i64 = 14;

/// A synthetic fluorescence image for one image's annotations: muted gum
/// tissue, red lesions around every diseased point any annotator marked,
/// and on some images a red decoy patch away from the gums.
pub fn render_image(annotations: &[&ImageAnnotation]) -> RgbImage {
    let image_id = annotations.first().map_or("", |a| a.image_id.as_str());
    let h = fnv(image_id);
    let mut img = RgbImage::from_fn(FRAME_WIDTH, FRAME_HEIGHT, |x, y| {
        let n = ((x * 31 + y * 17 + h as usize) % 11) as u8;
        [140 + n, 105 + n / 2, 110]
    });
    let mut paint = |cx: i64, cy: i64, r: i64, rgb: [u8; 3]| {
        for y in (cy - r).max(0)..=(cy + r).min(FRAME_HEIGHT as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(FRAME_WIDTH as i64 - 1) {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    img.set(x as usize, y as usize, rgb);
                }
            }
        }
    };
    for a in annotations {
        for mark in a.marks.iter().filter(|m| m.diseased) {
            for p in &mark.points {
                paint(p.x as i64, p.y as i64, LESION_RADIUS, [210, 52, 48]);
            }
        }
    }
    if h.is_multiple_of(3) {
        let cx = 60 + (h >> 8) as i64 % 120;
        paint(cx, 60, 22, [205, 60, 70]);
    }
    img
}

/// Groups annotations by image id, preserving input order within a group.
pub fn annotations_by_image(annotations: &[ImageAnnotation]) -> BTreeMap<&str, Vec<&ImageAnnotation>> {
    let mut map: BTreeMap<&str, Vec<&ImageAnnotation>> = BTreeMap::new();
    for a in annotations {
        map.entry(a.image_id.as_str()).or_default().push(a);
    }
    map
}

/// Writes the reference dataset to `dir` in the ingest schemas plus an
/// image manifest, and optionally every rendered image to
/// `dir/images/<image_id>.png`.
pub fn write_reference(dir: &Path, with_images: bool) -> Result<Dataset> {
    let dataset = reference_dataset();
    write_dataset(&dataset, dir)?;
    let mut entries = images_from_annotations(&dataset.annotations);
    if with_images {
        for e in &mut entries {
            e.file = Some(Path::new("images").join(format!("{}.png", e.image_id)));
        }
    }
    write_image_manifest(&entries, &dir.join(IMAGES_FILE))?;
    if with_images {
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for (id, anns) in annotations_by_image(&dataset.annotations) {
            render_image(&anns).write_png(&images.join(format!("{id}.png")))?;
        }
    }
    Ok(dataset)
}
