//! Subject-level domain types and the categorical coding of raw screening
//! measurements.
//!
//! Every type here is immutable once constructed; constructors validate
//! ranges so downstream analysis can assume well-formed records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_AGE: u32 = 18;
pub const MAX_AGE: u32 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn name(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            other => Err(Error::validation("gender", format!("`{other}` is not female/male"))),
        }
    }
}

/// Age bands used for stratification. Bounds are inclusive integer years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeCohort {
    Adolescent,
    YoungAdult,
    MiddleAge,
    OldAge,
}

impl AgeCohort {
    pub const ALL: [AgeCohort; 4] = [
        AgeCohort::Adolescent,
        AgeCohort::YoungAdult,
        AgeCohort::MiddleAge,
        AgeCohort::OldAge,
    ];

    pub fn bounds(self) -> (u32, u32) {
        match self {
            AgeCohort::Adolescent => (18, 19),
            AgeCohort::YoungAdult => (20, 39),
            AgeCohort::MiddleAge => (40, 64),
            AgeCohort::OldAge => (65, 90),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeCohort::Adolescent => "adolescent",
            AgeCohort::YoungAdult => "young_adult",
            AgeCohort::MiddleAge => "middle_age",
            AgeCohort::OldAge => "old_age",
        }
    }

    pub fn label(self) -> String {
        let (lo, hi) = self.bounds();
        let title = match self {
            AgeCohort::Adolescent => "Adolescent",
            AgeCohort::YoungAdult => "Young adult",
            AgeCohort::MiddleAge => "Middle age",
            AgeCohort::OldAge => "Old age",
        };
        format!("{title} ({lo}-{hi})")
    }
}

impl fmt::Display for AgeCohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgeCohort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgeCohort::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::validation("age_cohort", format!("unknown cohort `{s}`")))
    }
}

pub fn assign_age_cohort(age: u32) -> Result<AgeCohort> {
    AgeCohort::ALL
        .into_iter()
        .find(|c| {
            let (lo, hi) = c.bounds();
            (lo..=hi).contains(&age)
        })
        .ok_or_else(|| {
            Error::validation("age", format!("{age} outside study range {MIN_AGE}-{MAX_AGE}"))
        })
}

macro_rules! questionnaire_items {
    ($($variant:ident => $name:literal, $label:literal;)*) => {
        /// Medical-history questionnaire items, in report column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum QuestionnaireItem {
            $($variant,)*
        }

        impl QuestionnaireItem {
            pub const ALL: [QuestionnaireItem; QUESTIONNAIRE_LEN] = [$(QuestionnaireItem::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(QuestionnaireItem::$variant => $name,)*
                }
            }

            pub fn label(self) -> &'static str {
                match self {
                    $(QuestionnaireItem::$variant => $label,)*
                }
            }
        }
    };
}

pub const QUESTIONNAIRE_LEN: usize = 26;

questionnaire_items! {
    Glasses => "glasses", "Glasses";
    Dental => "dental", "Dental";
    SwollenJoints => "swollen_joints", "Swollen joints";
    Hearing => "hearing", "Hearing";
    FhDiabetes => "fh_diabetes", "FH diabetes";
    FhHighBp => "fh_high_bp", "FH high BP";
    Tobacco => "tobacco", "Tobacco";
    DifficultyWalking => "difficulty_walking", "Difficulty walking";
    HighBp => "high_bp", "High BP";
    Diabetes => "diabetes", "Diabetes";
    HighBpRx => "high_bp_rx", "High BP Rx";
    Asthma => "asthma", "Asthma";
    Smoking => "smoking", "Smoking";
    FhCardiac => "fh_cardiac", "FH cardiac";
    CardiacRx => "cardiac_rx", "Cardiac Rx";
    Cardiovascular => "cardiovascular", "Cardiovascular";
    LowBp => "low_bp", "Low BP";
    FhStroke => "fh_stroke", "FH stroke";
    FhEyeDisease => "fh_eye_disease", "FH eye disease";
    HeartAttack => "heart_attack", "Heart attack";
    CoronaryBypass => "coronary_bypass", "Coronary bypass";
    Drinking => "drinking", "Drinking";
    EyeTreatment => "eye_treatment", "Eye treatment";
    MemoryLoss => "memory_loss", "Memory loss";
    EarTreatment => "ear_treatment", "Ear treatment";
    FhEarDisease => "fh_ear_disease", "FH ear disease";
}

/// Flags derived from routine and technology-enabled screenings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScreeningFlag {
    HighBpMeasured,
    LowBpMeasured,
    HighBmi,
    LowBmi,
    LowO2,
    Retinal,
    Tm,
    FingerNose,
    Gait,
    Afib,
}

pub const SCREENING_LEN: usize = 10;

impl ScreeningFlag {
    pub const ALL: [ScreeningFlag; SCREENING_LEN] = [
        ScreeningFlag::HighBpMeasured,
        ScreeningFlag::LowBpMeasured,
        ScreeningFlag::HighBmi,
        ScreeningFlag::LowBmi,
        ScreeningFlag::LowO2,
        ScreeningFlag::Retinal,
        ScreeningFlag::Tm,
        ScreeningFlag::FingerNose,
        ScreeningFlag::Gait,
        ScreeningFlag::Afib,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScreeningFlag::HighBpMeasured => "high_bp_measured",
            ScreeningFlag::LowBpMeasured => "low_bp_measured",
            ScreeningFlag::HighBmi => "high_bmi",
            ScreeningFlag::LowBmi => "low_bmi",
            ScreeningFlag::LowO2 => "low_o2",
            ScreeningFlag::Retinal => "retinal",
            ScreeningFlag::Tm => "tm",
            ScreeningFlag::FingerNose => "finger_nose",
            ScreeningFlag::Gait => "gait",
            ScreeningFlag::Afib => "afib",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScreeningFlag::HighBpMeasured => "High BP",
            ScreeningFlag::LowBpMeasured => "Low BP",
            ScreeningFlag::HighBmi => "High BMI",
            ScreeningFlag::LowBmi => "Low BMI",
            ScreeningFlag::LowO2 => "Low O2",
            ScreeningFlag::Retinal => "Retinal",
            ScreeningFlag::Tm => "TM",
            ScreeningFlag::FingerNose => "Finger-nose",
            ScreeningFlag::Gait => "Gait",
            ScreeningFlag::Afib => "AFib",
        }
    }

    /// Routine screenings are BP and BMI; the rest come from device exams.
    pub fn is_routine(self) -> bool {
        matches!(
            self,
            ScreeningFlag::HighBpMeasured
                | ScreeningFlag::LowBpMeasured
                | ScreeningFlag::HighBmi
                | ScreeningFlag::LowBmi
        )
    }
}

/// Any condition a subject can be flagged with. The canonical order is the
/// questionnaire columns followed by the screening columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Questionnaire(QuestionnaireItem),
    Screening(ScreeningFlag),
}

pub const CONDITION_COUNT: usize = QUESTIONNAIRE_LEN + SCREENING_LEN;

impl Condition {
    pub fn all() -> impl Iterator<Item = Condition> {
        QuestionnaireItem::ALL
            .into_iter()
            .map(Condition::Questionnaire)
            .chain(ScreeningFlag::ALL.into_iter().map(Condition::Screening))
    }

    pub fn questionnaire() -> Vec<Condition> {
        QuestionnaireItem::ALL.into_iter().map(Condition::Questionnaire).collect()
    }

    /// Routine + device screenings as reported together (AFib excluded, it
    /// has no report column).
    pub fn screenings() -> Vec<Condition> {
        ScreeningFlag::ALL
            .into_iter()
            .filter(|f| *f != ScreeningFlag::Afib)
            .map(Condition::Screening)
            .collect()
    }

    pub fn index(self) -> usize {
        match self {
            Condition::Questionnaire(q) => q as usize,
            Condition::Screening(s) => QUESTIONNAIRE_LEN + s as usize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Questionnaire(q) => q.name(),
            Condition::Screening(s) => s.name(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Condition::Questionnaire(q) => q.label(),
            Condition::Screening(s) => s.label(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::all()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One yes/no answer per questionnaire item. Always complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct QuestionnaireResponse {
    answers: [bool; QUESTIONNAIRE_LEN],
}

impl QuestionnaireResponse {
    pub fn new(answers: [bool; QUESTIONNAIRE_LEN]) -> Self {
        Self { answers }
    }

    pub fn with_yes(items: &[QuestionnaireItem]) -> Self {
        let mut r = Self::default();
        for &item in items {
            r.answers[item as usize] = true;
        }
        r
    }

    pub fn get(&self, item: QuestionnaireItem) -> bool {
        self.answers[item as usize]
    }

    pub fn set(&mut self, item: QuestionnaireItem, yes: bool) {
        self.answers[item as usize] = yes;
    }

    pub fn answers(&self) -> &[bool; QUESTIONNAIRE_LEN] {
        &self.answers
    }
}

/// Routine measurements in mmHg and kg/m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutineScreenings {
    systolic: f64,
    diastolic: f64,
    bmi: f64,
}

impl RoutineScreenings {
    pub fn new(systolic: f64, diastolic: f64, bmi: f64) -> Result<Self> {
        check_positive("systolic", systolic)?;
        check_positive("diastolic", diastolic)?;
        check_positive("bmi", bmi)?;
        if systolic <= diastolic {
            return Err(Error::validation(
                "blood pressure",
                format!("systolic {systolic} must exceed diastolic {diastolic}"),
            ));
        }
        Ok(Self {
            systolic,
            diastolic,
            bmi,
        })
    }

    pub fn systolic(&self) -> f64 {
        self.systolic
    }

    pub fn diastolic(&self) -> f64 {
        self.diastolic
    }

    pub fn bmi(&self) -> f64 {
        self.bmi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EcgLabel {
    Normal,
    PossibleAtrialFibrillation,
}

impl EcgLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EcgLabel::Normal => "Normal",
            EcgLabel::PossibleAtrialFibrillation => "Possible atrial fibrillation",
        }
    }
}

impl FromStr for EcgLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "normal" => Ok(EcgLabel::Normal),
            "possibleatrialfibrillation" => Ok(EcgLabel::PossibleAtrialFibrillation),
            _ => Err(Error::validation("ecg_label", format!("unrecognised label `{s}`"))),
        }
    }
}

/// Technology-enabled screening outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TesResults {
    spo2_percent: f64,
    pub retinal_abnormal: bool,
    pub tympanic_abnormal: bool,
    pub finger_nose_abnormal: bool,
    pub gait_abnormal: bool,
    pub ecg_label: EcgLabel,
}

impl TesResults {
    pub fn new(
        spo2_percent: f64,
        retinal_abnormal: bool,
        tympanic_abnormal: bool,
        finger_nose_abnormal: bool,
        gait_abnormal: bool,
        ecg_label: EcgLabel,
    ) -> Result<Self> {
        check_spo2(spo2_percent)?;
        Ok(Self {
            spo2_percent,
            retinal_abnormal,
            tympanic_abnormal,
            finger_nose_abnormal,
            gait_abnormal,
            ecg_label,
        })
    }

    pub fn spo2_percent(&self) -> f64 {
        self.spo2_percent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CategoricalLevel {
    Low,
    Normal,
    High,
}

/// Which label wins when a blood-pressure reading meets both the low and
/// the high criteria (e.g. 85/95).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpPrecedence {
    #[default]
    HighFirst,
    LowFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    age: u32,
    pub gender: Gender,
    pub questionnaire: QuestionnaireResponse,
    pub routine: RoutineScreenings,
    pub tes: TesResults,
}

impl SubjectRecord {
    pub fn new(
        subject_id: impl Into<String>,
        age: u32,
        gender: Gender,
        questionnaire: QuestionnaireResponse,
        routine: RoutineScreenings,
        tes: TesResults,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if subject_id.trim().is_empty() {
            return Err(Error::validation("subject_id", "must not be empty"));
        }
        assign_age_cohort(age)?;
        Ok(Self {
            subject_id,
            age,
            gender,
            questionnaire,
            routine,
            tes,
        })
    }

    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn cohort(&self) -> AgeCohort {
        assign_age_cohort(self.age).expect("age validated at construction")
    }
}

// QuestionnaireResponse serializes as a name -> bool map.
impl Serialize for QuestionnaireResponse {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(QUESTIONNAIRE_LEN))?;
        for item in QuestionnaireItem::ALL {
            map.serialize_entry(item.name(), &self.get(item))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for QuestionnaireResponse {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, bool>::deserialize(d)?;
        let mut r = QuestionnaireResponse::default();
        for item in QuestionnaireItem::ALL {
            let v = map
                .get(item.name())
                .ok_or_else(|| serde::de::Error::missing_field(item.name()))?;
            r.set(item, *v);
        }
        if map.len() != QUESTIONNAIRE_LEN {
            return Err(serde::de::Error::custom("unexpected questionnaire fields"));
        }
        Ok(r)
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::validation(field, format!("{v} must be finite and > 0")));
    }
    Ok(())
}

fn check_spo2(v: f64) -> Result<()> {
    if !v.is_finite() || !(0.0..=100.0).contains(&v) {
        return Err(Error::validation("spo2", format!("{v} outside [0, 100]")));
    }
    Ok(())
}

pub fn categorize_bmi(bmi: f64) -> Result<CategoricalLevel> {
    check_positive("bmi", bmi)?;
    Ok(if bmi < 19.0 {
        CategoricalLevel::Low
    } else if bmi < 25.0 {
        CategoricalLevel::Normal
    } else {
        CategoricalLevel::High
    })
}

pub fn categorize_bp(systolic: f64, diastolic: f64) -> Result<CategoricalLevel> {
    categorize_bp_with(systolic, diastolic, BpPrecedence::default())
}

/// High: systolic > 140 or diastolic > 90. Low: systolic < 90 or
/// diastolic < 60. Readings on the 90/140 and 60/90 boundaries are Normal.
pub fn categorize_bp_with(
    systolic: f64,
    diastolic: f64,
    precedence: BpPrecedence,
) -> Result<CategoricalLevel> {
    RoutineScreenings::new(systolic, diastolic, 20.0)?;
    let high = systolic > 140.0 || diastolic > 90.0;
    let low = systolic < 90.0 || diastolic < 60.0;
    Ok(match (high, low, precedence) {
        (true, true, BpPrecedence::HighFirst) => CategoricalLevel::High,
        (true, true, BpPrecedence::LowFirst) => CategoricalLevel::Low,
        (true, false, _) => CategoricalLevel::High,
        (false, true, _) => CategoricalLevel::Low,
        (false, false, _) => CategoricalLevel::Normal,
    })
}

/// SpO2 is only ever Low (≤ 90 %) or Normal.
pub fn categorize_spo2(spo2: f64) -> Result<CategoricalLevel> {
    check_spo2(spo2)?;
    Ok(if spo2 <= 90.0 {
        CategoricalLevel::Low
    } else {
        CategoricalLevel::Normal
    })
}

/// Fixed-key set of boolean condition flags for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConditionFlags {
    flags: [bool; CONDITION_COUNT],
}

impl ConditionFlags {
    pub fn get(&self, condition: Condition) -> bool {
        self.flags[condition.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Condition, bool)> + '_ {
        Condition::all().map(move |c| (c, self.get(c)))
    }

    pub fn to_map(&self) -> BTreeMap<&'static str, bool> {
        self.iter().map(|(c, v)| (c.name(), v)).collect()
    }
}

pub fn derive_condition_flags(subject: &SubjectRecord) -> ConditionFlags {
    derive_condition_flags_with(subject, BpPrecedence::default())
}

pub fn derive_condition_flags_with(
    subject: &SubjectRecord,
    precedence: BpPrecedence,
) -> ConditionFlags {
    let mut flags = [false; CONDITION_COUNT];
    flags[..QUESTIONNAIRE_LEN].copy_from_slice(subject.questionnaire.answers());

    // Inputs were validated when the record was built.
    let r = &subject.routine;
    let bp = categorize_bp_with(r.systolic(), r.diastolic(), precedence)
        .expect("validated routine screenings");
    let bmi = categorize_bmi(r.bmi()).expect("validated bmi");
    let o2 = categorize_spo2(subject.tes.spo2_percent()).expect("validated spo2");

    let mut set = |f: ScreeningFlag, v: bool| flags[Condition::Screening(f).index()] = v;
    set(ScreeningFlag::HighBpMeasured, bp == CategoricalLevel::High);
    set(ScreeningFlag::LowBpMeasured, bp == CategoricalLevel::Low);
    set(ScreeningFlag::HighBmi, bmi == CategoricalLevel::High);
    set(ScreeningFlag::LowBmi, bmi == CategoricalLevel::Low);
    set(ScreeningFlag::LowO2, o2 == CategoricalLevel::Low);
    set(ScreeningFlag::Retinal, subject.tes.retinal_abnormal);
    set(ScreeningFlag::Tm, subject.tes.tympanic_abnormal);
    set(ScreeningFlag::FingerNose, subject.tes.finger_nose_abnormal);
    set(ScreeningFlag::Gait, subject.tes.gait_abnormal);
    set(
        ScreeningFlag::Afib,
        subject.tes.ecg_label == EcgLabel::PossibleAtrialFibrillation,
    );
    ConditionFlags { flags }
}
