//! Dataset ingestion and export.
//!
//! A dataset directory holds four files:
//!
//! * `subjects.csv`: `subject_id,age,gender`
//! * `questionnaire.csv`: `subject_id` then the 26 questionnaire items as 0/1
//! * `screenings.csv`: `subject_id,systolic,diastolic,bmi,spo2,retinal,tm,finger_nose,gait,ecg_label`
//! * `annotations.jsonl`: one [`ImageAnnotation`] per line
//!
//! Headers must match exactly. Parse failures name the file, line and
//! column.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{subject_mgi_table_for, ImageAnnotation, MgiTable};
use crate::cooccurrence::Population;
use crate::error::{Error, Result};
use crate::model::{
    BpPrecedence, EcgLabel, Gender, QuestionnaireItem, QuestionnaireResponse, RoutineScreenings,
    SubjectRecord, TesResults, QUESTIONNAIRE_LEN,
};

pub const SUBJECTS_FILE: &str = "subjects.csv";
pub const QUESTIONNAIRE_FILE: &str = "questionnaire.csv";
pub const SCREENINGS_FILE: &str = "screenings.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

const SUBJECT_HEADER: [&str; 3] = ["subject_id", "age", "gender"];
const SCREENING_HEADER: [&str; 10] = [
    "subject_id",
    "systolic",
    "diastolic",
    "bmi",
    "spo2",
    "retinal",
    "tm",
    "finger_nose",
    "gait",
    "ecg_label",
];

fn questionnaire_header() -> Vec<&'static str> {
    std::iter::once("subject_id")
        .chain(QuestionnaireItem::ALL.iter().map(|q| q.name()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// File name to lowercase hex SHA-256 of its bytes.
    pub digests: BTreeMap<String, String>,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<SubjectRecord>,
    pub annotations: Vec<ImageAnnotation>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn subject_mgis(&self) -> MgiTable {
        subject_mgi_table_for(
            self.subjects.iter().map(|s| s.subject_id.as_str()),
            &self.annotations,
        )
    }

    /// Subjects with at least one annotated image, with their MGIs and
    /// condition flags.
    pub fn population(&self, precedence: BpPrecedence) -> Population {
        Population::new(&self.subjects, &self.subject_mgis().mgis, precedence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub subjects: PathBuf,
    pub questionnaire: PathBuf,
    pub screenings: PathBuf,
    pub annotations: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            subjects: dir.join(SUBJECTS_FILE),
            questionnaire: dir.join(QUESTIONNAIRE_FILE),
            screenings: dir.join(SCREENINGS_FILE),
            annotations: dir.join(ANNOTATIONS_FILE),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn ingest(paths: &DatasetPaths) -> Result<Dataset> {
    let [s, q, sc, a] = [
        &paths.subjects,
        &paths.questionnaire,
        &paths.screenings,
        &paths.annotations,
    ]
    .map(|p| read(p).map(|bytes| (file_name(p), bytes)));
    let (s, q, sc, a) = (s?, q?, sc?, a?);
    parse_dataset((&s.0, &s.1), (&q.0, &q.1), (&sc.0, &sc.1), (&a.0, &a.1))
}

pub fn ingest_dir(dir: &Path) -> Result<Dataset> {
    ingest(&DatasetPaths::in_dir(dir))
}

struct Row {
    file: String,
    line: u64,
    header: Vec<String>,
    record: csv::StringRecord,
}

impl Row {
    fn err(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.clone(),
            line: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn get(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("").trim()
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(i)
            .parse()
            .map_err(|e: T::Err| self.err(&self.header[i], format!("`{}`: {e}", self.get(i))))
    }

    fn flag(&self, i: usize) -> Result<bool> {
        match self.get(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(self.err(&self.header[i], format!("`{v}` is not 0/1"))),
        }
    }

    /// Maps domain validation failures onto this row.
    fn lift<T>(&self, column: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.err(column, e.to_string()))
    }
}

fn read_csv(file: &str, bytes: &[u8], expected: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let schema_err = |line: u64, column: &str, message: String| Error::Schema {
        file: file.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| schema_err(1, "header", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != expected {
        let col = header
            .iter()
            .zip(expected)
            .position(|(h, e)| h != e)
            .unwrap_or(header.len().min(expected.len()));
        return Err(schema_err(
            1,
            expected.get(col).copied().unwrap_or("header"),
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema_err(line, "record", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != expected.len() {
            let col = expected.get(rec.len()).copied().unwrap_or("record");
            return Err(schema_err(
                line,
                col,
                format!("expected {} columns, found {}", expected.len(), rec.len()),
            ));
        }
        rows.push(Row {
            file: file.to_string(),
            line,
            header: header.clone(),
            record: rec,
        });
    }
    Ok(rows)
}

struct ScreeningRow {
    routine: RoutineScreenings,
    tes: TesResults,
}

fn unique_ids<'a>(rows: &'a [Row], kind: &'static str) -> Result<BTreeMap<&'a str, &'a Row>> {
    let mut by_id = BTreeMap::new();
    for row in rows {
        let id = row.get(0);
        if id.is_empty() {
            return Err(row.err("subject_id", "empty id"));
        }
        if by_id.insert(id, row).is_some() {
            return Err(Error::Duplicate {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(by_id)
}

/// Parses the four dataset sources, given as (file name, bytes) pairs.
/// Provenance digests are filled in; the timestamp is the current time.
pub fn parse_dataset(
    subjects: (&str, &[u8]),
    questionnaire: (&str, &[u8]),
    screenings: (&str, &[u8]),
    annotations: (&str, &[u8]),
) -> Result<Dataset> {
    let s_rows = read_csv(subjects.0, subjects.1, &SUBJECT_HEADER)?;
    let q_rows = read_csv(questionnaire.0, questionnaire.1, &questionnaire_header())?;
    let sc_rows = read_csv(screenings.0, screenings.1, &SCREENING_HEADER)?;

    let s_by_id = unique_ids(&s_rows, "subject")?;
    let q_by_id = unique_ids(&q_rows, "questionnaire row")?;
    let sc_by_id = unique_ids(&sc_rows, "screening row")?;

    let known: BTreeSet<&str> = s_by_id.keys().copied().collect();
    let orphans: BTreeSet<String> = q_by_id
        .keys()
        .chain(sc_by_id.keys())
        .filter(|id| !known.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Orphans(orphans.into_iter().collect()));
    }

    let mut records = Vec::with_capacity(s_rows.len());
    for row in &s_rows {
        let id = row.get(0);
        let age: u32 = row.parse(1)?;
        let gender: Gender = row.parse(2)?;

        let q = q_by_id.get(id).ok_or_else(|| Error::Schema {
            file: questionnaire.0.to_string(),
            line: 0,
            column: "subject_id".into(),
            message: format!("no row for subject `{id}`"),
        })?;
        let mut answers = [false; QUESTIONNAIRE_LEN];
        for (i, a) in answers.iter_mut().enumerate() {
            *a = q.flag(i + 1)?;
        }

        let sc = sc_by_id.get(id).ok_or_else(|| Error::Schema {
            file: screenings.0.to_string(),
            line: 0,
            column: "subject_id".into(),
            message: format!("no row for subject `{id}`"),
        })?;
        let sr = parse_screening_row(sc)?;
        let rec = SubjectRecord::new(
            id,
            age,
            gender,
            QuestionnaireResponse::new(answers),
            sr.routine,
            sr.tes,
        );
        records.push(row.lift("age", rec)?);
    }

    let annotations_src = annotations;
    let annotations = parse_annotations(annotations.0, annotations.1)?;
    let orphans: BTreeSet<String> = annotations
        .iter()
        .filter(|a| !known.contains(a.subject_id.as_str()))
        .map(|a| a.subject_id.clone())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Orphans(orphans.into_iter().collect()));
    }

    Ok(Dataset {
        subjects: records,
        annotations,
        provenance: Provenance {
            digests: [subjects, questionnaire, screenings, annotations_src]
                .iter()
                .map(|(n, b)| (n.to_string(), sha256_hex(b)))
                .collect(),
            ingested_at: Utc::now(),
        },
    })
}

fn parse_screening_row(row: &Row) -> Result<ScreeningRow> {
    let systolic: f64 = row.parse(1)?;
    let diastolic: f64 = row.parse(2)?;
    let bmi: f64 = row.parse(3)?;
    let spo2: f64 = row.parse(4)?;
    let routine = row.lift("systolic", RoutineScreenings::new(systolic, diastolic, bmi))?;
    let ecg: EcgLabel = row.parse(9)?;
    let tes = row.lift(
        "spo2",
        TesResults::new(
            spo2,
            row.flag(5)?,
            row.flag(6)?,
            row.flag(7)?,
            row.flag(8)?,
            ecg,
        ),
    )?;
    Ok(ScreeningRow { routine, tes })
}

/// One annotation per non-blank line; each is validated. Duplicate
/// (image, annotator) pairs are rejected.
pub fn parse_annotations(file: &str, bytes: &[u8]) -> Result<Vec<ImageAnnotation>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Schema {
        file: file.to_string(),
        line: 0,
        column: "encoding".into(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let err = |column: String, message: String| Error::Schema {
            file: file.to_string(),
            line: line_no,
            column,
            message,
        };
        let ann: ImageAnnotation = serde_json::from_str(line)
            .map_err(|e| err(format!("char {}", e.column()), e.to_string()))?;
        ann.validate().map_err(|e| err("record".into(), e.to_string()))?;
        if !seen.insert((ann.image_id.clone(), ann.annotator_id.clone())) {
            return Err(Error::Duplicate {
                kind: "annotation",
                id: format!("{}/{}", ann.image_id, ann.annotator_id),
            });
        }
        out.push(ann);
    }
    Ok(out)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            format: "CSV",
            reason: format!("{other:?}"),
        },
    }
}

/// Writes the dataset in the ingest schemas. Records are written in their
/// stored order.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);

    let open = |p: &Path| csv::Writer::from_path(p).map_err(|e| csv_err(p, e));
    let mut s = open(&paths.subjects)?;
    let mut q = open(&paths.questionnaire)?;
    let mut sc = open(&paths.screenings)?;
    s.write_record(SUBJECT_HEADER)
        .map_err(|e| csv_err(&paths.subjects, e))?;
    q.write_record(questionnaire_header())
        .map_err(|e| csv_err(&paths.questionnaire, e))?;
    sc.write_record(SCREENING_HEADER)
        .map_err(|e| csv_err(&paths.screenings, e))?;
    for r in &dataset.subjects {
        s.write_record([
            r.subject_id.as_str(),
            &r.age().to_string(),
            r.gender.name(),
        ])
        .map_err(|e| csv_err(&paths.subjects, e))?;
        let mut row = vec![r.subject_id.clone()];
        row.extend(r.questionnaire.answers().iter().map(|&a| bit(a).to_string()));
        q.write_record(&row)
            .map_err(|e| csv_err(&paths.questionnaire, e))?;
        sc.write_record([
            r.subject_id.as_str(),
            &r.routine.systolic().to_string(),
            &r.routine.diastolic().to_string(),
            &r.routine.bmi().to_string(),
            &r.tes.spo2_percent().to_string(),
            bit(r.tes.retinal_abnormal),
            bit(r.tes.tympanic_abnormal),
            bit(r.tes.finger_nose_abnormal),
            bit(r.tes.gait_abnormal),
            r.tes.ecg_label.as_str(),
        ])
        .map_err(|e| csv_err(&paths.screenings, e))?;
    }
    s.flush().map_err(|e| Error::io(&paths.subjects, e))?;
    q.flush().map_err(|e| Error::io(&paths.questionnaire, e))?;
    sc.flush().map_err(|e| Error::io(&paths.screenings, e))?;

    write_annotations(&dataset.annotations, &paths.annotations)
}

pub fn write_annotations(annotations: &[ImageAnnotation], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for a in annotations {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of `images.csv`: an image, its subject and (optionally) the
/// image file relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub subject_id: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub file: Option<PathBuf>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<PathBuf>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.trim().is_empty()).map(PathBuf::from))
}

pub const IMAGES_FILE: &str = "images.csv";

/// Reads an image manifest; relative file paths are resolved against the
/// manifest's directory.
pub fn read_image_manifest(path: &Path) -> Result<Vec<ImageEntry>> {
    let bytes = read(path)?;
    let name = file_name(path);
    let rows = read_csv(&name, &bytes, &["image_id", "subject_id", "file"])?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let image_id = row.get(0).to_string();
        if image_id.is_empty() || row.get(1).is_empty() {
            return Err(row.err("image_id", "empty id"));
        }
        if !seen.insert(image_id.clone()) {
            return Err(Error::Duplicate {
                kind: "image",
                id: image_id,
            });
        }
        let file = Some(row.get(2))
            .filter(|f| !f.is_empty())
            .map(|f| base.join(f));
        out.push(ImageEntry {
            image_id,
            subject_id: row.get(1).to_string(),
            file,
        });
    }
    Ok(out)
}

/// Writes a manifest; file paths are written as given.
pub fn write_image_manifest(entries: &[ImageEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["image_id", "subject_id", "file"])
        .map_err(|e| csv_err(path, e))?;
    for e in entries {
        let file = e
            .file
            .as_ref()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        w.write_record([e.image_id.as_str(), e.subject_id.as_str(), file.as_str()])
            .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Image entries implied by a set of annotations, without files.
pub fn images_from_annotations(annotations: &[ImageAnnotation]) -> Vec<ImageEntry> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for a in annotations {
        map.entry(a.image_id.as_str()).or_insert(a.subject_id.as_str());
    }
    map.into_iter()
        .map(|(i, s)| ImageEntry {
            image_id: i.to_string(),
            subject_id: s.to_string(),
            file: None,
        })
        .collect()
}
