//! MGI-level by condition co-occurrence analysis.
//!
//! For each MGI level and condition the population splits into subjects at
//! that level and subjects at any other level; a Fisher test compares the
//! condition rate between the two groups. Grids repeat this for every
//! (level, condition) pair, optionally inside a gender or age stratum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregation::MgiScore;
use crate::error::{Error, Result};
use crate::model::{
    derive_condition_flags_with, AgeCohort, BpPrecedence, Condition, ConditionFlags, Gender,
    SubjectRecord,
};
use crate::stats::{fisher_exact, ContingencyTable, TableEntry, TailMode, TestResult};

pub const MGI_LEVELS: usize = MgiScore::MAX as usize + 1;

/// A subject reduced to what the co-occurrence analysis needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredSubject {
    pub subject_id: String,
    pub gender: Gender,
    pub cohort: AgeCohort,
    pub mgi: MgiScore,
    pub flags: ConditionFlags,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Population {
    subjects: Vec<ScoredSubject>,
}

impl Population {
    /// Joins records with their MGIs. Records without an MGI are skipped.
    pub fn new(
        records: &[SubjectRecord],
        mgis: &BTreeMap<String, MgiScore>,
        precedence: BpPrecedence,
    ) -> Self {
        let subjects = records
            .iter()
            .filter_map(|r| {
                mgis.get(&r.subject_id).map(|&mgi| ScoredSubject {
                    subject_id: r.subject_id.clone(),
                    gender: r.gender,
                    cohort: r.cohort(),
                    mgi,
                    flags: derive_condition_flags_with(r, precedence),
                })
            })
            .collect();
        Self { subjects }
    }

    pub fn from_pairs(pairs: &[(SubjectRecord, MgiScore)]) -> Self {
        let mgis = pairs.iter().map(|(r, m)| (r.subject_id.clone(), *m)).collect();
        let records: Vec<SubjectRecord> = pairs.iter().map(|(r, _)| r.clone()).collect();
        Self::new(&records, &mgis, BpPrecedence::default())
    }

    pub fn from_scored(subjects: Vec<ScoredSubject>) -> Self {
        Self { subjects }
    }

    pub fn subjects(&self) -> &[ScoredSubject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn filter(&self, filter: &CohortFilter) -> Population {
        Population {
            subjects: self
                .subjects
                .iter()
                .filter(|s| filter.matches(s))
                .cloned()
                .collect(),
        }
    }

    pub fn mgi_histogram(&self) -> [u64; MGI_LEVELS] {
        let mut h = [0u64; MGI_LEVELS];
        for s in &self.subjects {
            h[s.mgi.value() as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CohortFilter {
    pub gender: Option<Gender>,
    pub age_cohort: Option<AgeCohort>,
}

impl CohortFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn gender(g: Gender) -> Self {
        Self {
            gender: Some(g),
            age_cohort: None,
        }
    }

    pub fn cohort(c: AgeCohort) -> Self {
        Self {
            gender: None,
            age_cohort: Some(c),
        }
    }

    pub fn matches(&self, s: &ScoredSubject) -> bool {
        self.gender.is_none_or(|g| g == s.gender) && self.age_cohort.is_none_or(|c| c == s.cohort)
    }

    pub fn label(&self) -> String {
        match (self.gender, self.age_cohort) {
            (None, None) => "all".to_string(),
            (Some(g), None) => g.name().to_string(),
            (None, Some(c)) => c.name().to_string(),
            (Some(g), Some(c)) => format!("{}_{}", g.name(), c.name()),
        }
    }
}

/// (a, b, c, d) = (level ∧ flag, level ∧ ¬flag, ¬level ∧ flag, ¬level ∧ ¬flag)
/// over the filtered population.
pub fn build_mgi_condition_table(
    population: &Population,
    mgi_level: MgiScore,
    condition: Condition,
    filter: &CohortFilter,
) -> Result<ContingencyTable> {
    let mut t = ContingencyTable {
        a: 0,
        b: 0,
        c: 0,
        d: 0,
    };
    let mut n = 0;
    for s in population.subjects.iter().filter(|s| filter.matches(s)) {
        n += 1;
        let flag = s.flags.get(condition);
        match (s.mgi == mgi_level, flag) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    if n == 0 {
        return Err(Error::EmptyGroup(format!("no subjects in filter `{}`", filter.label())));
    }
    if t.row1() == 0 {
        return Err(Error::EmptyGroup(format!(
            "no subjects with MGI {mgi_level} in filter `{}`",
            filter.label()
        )));
    }
    Ok(t)
}

/// Which two demographic groups to compare on an MGI level. The first
/// named group is the table's group 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicSplit {
    Gender(Gender),
    CohortVsRest(AgeCohort),
    CohortPair(AgeCohort, AgeCohort),
}

impl DemographicSplit {
    fn side(&self, s: &ScoredSubject) -> Option<bool> {
        match *self {
            DemographicSplit::Gender(g) => Some(s.gender == g),
            DemographicSplit::CohortVsRest(c) => Some(s.cohort == c),
            DemographicSplit::CohortPair(x, y) => {
                if s.cohort == x {
                    Some(true)
                } else if s.cohort == y {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DemographicSplit::Gender(g) => format!("{} vs {}", g.name(), g.other().name()),
            DemographicSplit::CohortVsRest(c) => format!("{} vs rest", c.name()),
            DemographicSplit::CohortPair(x, y) => format!("{} vs {}", x.name(), y.name()),
        }
    }
}

/// (a, b, c, d) = (in-group ∧ level, in-group ∧ ¬level, out-group ∧ level,
/// out-group ∧ ¬level).
pub fn build_demographic_table(
    population: &Population,
    mgi_level: MgiScore,
    split: DemographicSplit,
) -> Result<ContingencyTable> {
    let mut t = ContingencyTable {
        a: 0,
        b: 0,
        c: 0,
        d: 0,
    };
    for s in &population.subjects {
        let at_level = s.mgi == mgi_level;
        match (split.side(s), at_level) {
            (Some(true), true) => t.a += 1,
            (Some(true), false) => t.b += 1,
            (Some(false), true) => t.c += 1,
            (Some(false), false) => t.d += 1,
            (None, _) => {}
        }
    }
    if t.row1() == 0 || t.row2() == 0 {
        return Err(Error::EmptyGroup(format!("one side of `{}` is empty", split.label())));
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub alpha: f64,
    pub tail: TailMode,
    pub entry: TableEntry,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            tail: TailMode::TwoSided,
            entry: TableEntry::Complement,
        }
    }
}

impl GridOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::validation("alpha", format!("{} outside (0, 1]", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mgi_level: MgiScore,
    pub condition: Condition,
    /// Counts in the standard (with, without) layout.
    pub table: ContingencyTable,
    pub result: TestResult,
    pub significant: bool,
    /// Whether the level's condition rate exceeds the other levels' rate.
    pub higher_rate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GridCell {
    Computed(CellResult),
    NotComputable {
        mgi_level: MgiScore,
        condition: Condition,
        reason: String,
    },
}

impl GridCell {
    pub fn mgi_level(&self) -> MgiScore {
        match self {
            GridCell::Computed(c) => c.mgi_level,
            GridCell::NotComputable { mgi_level, .. } => *mgi_level,
        }
    }

    pub fn condition(&self) -> Condition {
        match self {
            GridCell::Computed(c) => c.condition,
            GridCell::NotComputable { condition, .. } => *condition,
        }
    }

    pub fn computed(&self) -> Option<&CellResult> {
        match self {
            GridCell::Computed(c) => Some(c),
            GridCell::NotComputable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGrid {
    pub filter: CohortFilter,
    pub alpha: f64,
    pub tail: TailMode,
    pub entry: TableEntry,
    pub population_size: u64,
    pub mgi_histogram: [u64; MGI_LEVELS],
    pub conditions: Vec<Condition>,
    /// Ordered by MGI level, then condition in the order given.
    pub cells: Vec<GridCell>,
}

impl CorrelationGrid {
    pub fn cell(&self, level: MgiScore, condition: Condition) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.mgi_level() == level && c.condition() == condition)
    }

    pub fn significant_cells(&self) -> Vec<&CellResult> {
        self.cells
            .iter()
            .filter_map(GridCell::computed)
            .filter(|c| c.significant)
            .collect()
    }
}

fn evaluate_cell(
    population: &Population,
    level: MgiScore,
    condition: Condition,
    opts: &GridOptions,
) -> GridCell {
    let outcome = build_mgi_condition_table(population, level, condition, &CohortFilter::all())
        .and_then(|table| {
            let result = fisher_exact(&opts.entry.apply(&table), opts.tail)?;
            let higher_rate = match table.rates() {
                (Some(r1), Some(r2)) => r1 > r2,
                (Some(r1), None) => r1 > 0.0,
                _ => false,
            };
            Ok(CellResult {
                mgi_level: level,
                condition,
                table,
                significant: result.p_value < opts.alpha,
                result,
                higher_rate,
            })
        });
    match outcome {
        Ok(cell) => GridCell::Computed(cell),
        Err(e) => GridCell::NotComputable {
            mgi_level: level,
            condition,
            reason: e.to_string(),
        },
    }
}

/// One cell per (MGI 0-5, condition). Levels without subjects in the
/// filtered population become `NotComputable` rather than aborting.
pub fn run_grid(
    population: &Population,
    conditions: &[Condition],
    filter: &CohortFilter,
    opts: &GridOptions,
) -> Result<CorrelationGrid> {
    opts.validate()?;
    let filtered = population.filter(filter);
    let cells = MgiScore::all()
        .flat_map(|level| conditions.iter().map(move |&c| (level, c)))
        .map(|(level, c)| evaluate_cell(&filtered, level, c, opts))
        .collect();
    Ok(CorrelationGrid {
        filter: *filter,
        alpha: opts.alpha,
        tail: opts.tail,
        entry: opts.entry,
        population_size: filtered.len() as u64,
        mgi_histogram: filtered.mgi_histogram(),
        conditions: conditions.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strata {
    Gender,
    Age,
}

impl std::str::FromStr for Strata {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gender" => Ok(Strata::Gender),
            "age" => Ok(Strata::Age),
            _ => Err(Error::validation("strata", format!("`{s}` is not gender/age"))),
        }
    }
}

impl Strata {
    pub fn filters(self) -> Vec<CohortFilter> {
        match self {
            Strata::Gender => Gender::ALL.into_iter().map(CohortFilter::gender).collect(),
            Strata::Age => AgeCohort::ALL.into_iter().map(CohortFilter::cohort).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedGrids {
    pub strata: Strata,
    pub grids: Vec<CorrelationGrid>,
    /// Strata skipped because no subject fell in them.
    pub omitted: Vec<String>,
}

pub fn run_stratified_grids(
    population: &Population,
    conditions: &[Condition],
    strata: Strata,
    opts: &GridOptions,
) -> Result<StratifiedGrids> {
    opts.validate()?;
    let mut grids = Vec::new();
    let mut omitted = Vec::new();
    for filter in strata.filters() {
        if population.filter(&filter).is_empty() {
            omitted.push(format!("stratum `{}` has no subjects", filter.label()));
            continue;
        }
        grids.push(run_grid(population, conditions, &filter, opts)?);
    }
    Ok(StratifiedGrids {
        strata,
        grids,
        omitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        EcgLabel, QuestionnaireItem, QuestionnaireResponse, RoutineScreenings, TesResults,
    };

    fn subj(id: usize, gender: Gender, age: u32, yes: &[QuestionnaireItem]) -> SubjectRecord {
        SubjectRecord::new(
            format!("s{id}"),
            age,
            gender,
            QuestionnaireResponse::with_yes(yes),
            RoutineScreenings::new(120.0, 80.0, 22.0).unwrap(),
            TesResults::new(97.0, false, false, false, false, EcgLabel::Normal).unwrap(),
        )
        .unwrap()
    }

    fn small_population() -> Population {
        use QuestionnaireItem::SwollenJoints as SJ;
        let specs: &[(Gender, u32, u8, bool)] = &[
            (Gender::Female, 25, 2, false),
            (Gender::Female, 45, 2, true),
            (Gender::Male, 45, 3, true),
            (Gender::Male, 70, 3, false),
            (Gender::Male, 70, 4, true),
            (Gender::Female, 30, 4, true),
        ];
        let pairs: Vec<_> = specs
            .iter()
            .enumerate()
            .map(|(i, &(g, age, mgi, sj))| {
                let yes: &[QuestionnaireItem] = if sj { &[SJ] } else { &[] };
                (subj(i, g, age, yes), MgiScore::new(mgi).unwrap())
            })
            .collect();
        Population::from_pairs(&pairs)
    }

    fn sj() -> Condition {
        Condition::Questionnaire(QuestionnaireItem::SwollenJoints)
    }

    #[test]
    fn condition_table_counts() {
        let pop = small_population();
        let t = build_mgi_condition_table(&pop, MgiScore::new(4).unwrap(), sj(), &CohortFilter::all())
            .unwrap();
        assert_eq!((t.a, t.b, t.c, t.d), (2, 0, 2, 2));
        let t = build_mgi_condition_table(
            &pop,
            MgiScore::new(2).unwrap(),
            sj(),
            &CohortFilter::gender(Gender::Female),
        )
        .unwrap();
        assert_eq!((t.a, t.b, t.c, t.d), (1, 1, 1, 0));
    }

    #[test]
    fn empty_level_and_filter_errors() {
        let pop = small_population();
        let five = MgiScore::new(5).unwrap();
        assert!(matches!(
            build_mgi_condition_table(&pop, five, sj(), &CohortFilter::all()),
            Err(Error::EmptyGroup(_))
        ));
        let none = CohortFilter::cohort(AgeCohort::Adolescent);
        assert!(build_mgi_condition_table(&pop, MgiScore::new(2).unwrap(), sj(), &none).is_err());
    }

    #[test]
    fn demographic_tables() {
        let pop = small_population();
        let three = MgiScore::new(3).unwrap();
        let t = build_demographic_table(&pop, three, DemographicSplit::Gender(Gender::Male)).unwrap();
        assert_eq!((t.a, t.b, t.c, t.d), (2, 1, 0, 3));
        let t = build_demographic_table(
            &pop,
            three,
            DemographicSplit::CohortPair(AgeCohort::OldAge, AgeCohort::MiddleAge),
        )
        .unwrap();
        assert_eq!((t.a, t.b, t.c, t.d), (1, 1, 1, 1));
        assert!(build_demographic_table(
            &pop,
            three,
            DemographicSplit::CohortVsRest(AgeCohort::Adolescent)
        )
        .is_err());
    }

    #[test]
    fn grid_shape_and_margins() {
        let pop = small_population();
        let conds = Condition::questionnaire();
        let grid = run_grid(&pop, &conds, &CohortFilter::all(), &GridOptions::default()).unwrap();
        assert_eq!(grid.cells.len(), MGI_LEVELS * conds.len());
        assert_eq!(grid.population_size, 6);
        for cell in grid.cells.iter().filter_map(GridCell::computed) {
            assert_eq!(cell.table.row1(), grid.mgi_histogram[cell.mgi_level.value() as usize]);
            assert_eq!(cell.table.total(), grid.population_size);
        }
        // MGI 0, 1, 5 absent
        let absent = grid
            .cells
            .iter()
            .filter(|c| matches!(c, GridCell::NotComputable { .. }))
            .count();
        assert_eq!(absent, 3 * conds.len());
    }

    #[test]
    fn alpha_one_stars_everything_below_one() {
        let pop = small_population();
        let opts = GridOptions {
            alpha: 1.0,
            ..GridOptions::default()
        };
        let grid = run_grid(&pop, &[sj()], &CohortFilter::all(), &opts).unwrap();
        for c in grid.cells.iter().filter_map(GridCell::computed) {
            assert_eq!(c.significant, c.result.p_value < 1.0);
        }
        let bad = GridOptions {
            alpha: 0.0,
            ..GridOptions::default()
        };
        assert!(run_grid(&pop, &[sj()], &CohortFilter::all(), &bad).is_err());
    }

    #[test]
    fn stratified_partition_sums() {
        let pop = small_population();
        let opts = GridOptions::default();
        let whole = run_grid(&pop, &[sj()], &CohortFilter::all(), &opts).unwrap();
        for strata in [Strata::Gender, Strata::Age] {
            let s = run_stratified_grids(&pop, &[sj()], strata, &opts).unwrap();
            for level in MgiScore::all() {
                let Some(GridCell::Computed(w)) = whole.cell(level, sj()) else { continue };
                // Within-stratum tables compare level vs other levels inside the
                // stratum, so a and b add up; c and d add up too.
                let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
                for g in &s.grids {
                    let fp = pop.filter(&g.filter);
                    for subj in fp.subjects() {
                        let flag = subj.flags.get(sj());
                        match (subj.mgi == level, flag) {
                            (true, true) => a += 1,
                            (true, false) => b += 1,
                            (false, true) => c += 1,
                            (false, false) => d += 1,
                        }
                    }
                    if let Some(GridCell::Computed(cell)) = g.cell(level, sj()) {
                        assert_eq!(cell.table.total(), g.population_size);
                    }
                }
                assert_eq!((a, b, c, d), (w.table.a, w.table.b, w.table.c, w.table.d));
            }
            if strata == Strata::Age {
                assert_eq!(s.grids.len(), 3);
                assert_eq!(s.omitted.len(), 1);
            }
        }
    }
}
