//! Expert annotations and their aggregation into image-level and
//! subject-level consensus.
//!
//! MGI consensus is the modal score; when several scores tie for the
//! highest count the greatest of them wins, so prevalence is never
//! understated. Boolean conditions use a strict majority.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{FRAME_HEIGHT, FRAME_WIDTH};

/// Modified gingival index, 0 (healthy) to 5 (severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MgiScore(u8);

impl MgiScore {
    pub const MAX: u8 = 5;

    pub fn new(value: u8) -> Result<Self> {
        if value > Self::MAX {
            return Err(Error::validation("mgi", format!("{value} outside 0-5")));
        }
        Ok(MgiScore(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = MgiScore> {
        (0..=Self::MAX).map(MgiScore)
    }
}

impl TryFrom<u8> for MgiScore {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        MgiScore::new(v)
    }
}

impl From<MgiScore> for u8 {
    fn from(m: MgiScore) -> u8 {
        m.0
    }
}

impl std::fmt::Display for MgiScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    GingivalMargin,
    LeftPapilla,
    RightPapilla,
}

impl Site {
    pub const ALL: [Site; 3] = [Site::GingivalMargin, Site::LeftPapilla, Site::RightPapilla];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }

    pub fn in_frame(self) -> bool {
        (self.x as usize) < FRAME_WIDTH && (self.y as usize) < FRAME_HEIGHT
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMark {
    pub site: Site,
    pub points: Vec<Point>,
    pub diseased: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub subject_id: String,
    pub annotator_id: String,
    pub mgi: MgiScore,
    #[serde(default)]
    pub marks: Vec<SiteMark>,
    pub timestamp: DateTime<Utc>,
}

impl ImageAnnotation {
    /// Checks ids, one mark per site, point bounds and non-empty diseased
    /// marks. The MGI range is enforced by [`MgiScore`] itself.
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("image_id", &self.image_id),
            ("subject_id", &self.subject_id),
            ("annotator_id", &self.annotator_id),
        ] {
            if v.trim().is_empty() {
                return Err(Error::validation(field, "must not be empty"));
            }
        }
        let mut seen = BTreeSet::new();
        for mark in &self.marks {
            if !seen.insert(mark.site) {
                return Err(Error::validation("marks", format!("duplicate site {:?}", mark.site)));
            }
            if mark.diseased && mark.points.is_empty() {
                return Err(Error::validation(
                    "marks",
                    format!("diseased {:?} mark has no points", mark.site),
                ));
            }
            if let Some(p) = mark.points.iter().find(|p| !p.in_frame()) {
                return Err(Error::validation(
                    "marks",
                    format!("point ({}, {}) outside {FRAME_WIDTH}x{FRAME_HEIGHT}", p.x, p.y),
                ));
            }
        }
        Ok(())
    }

    pub fn site_diseased(&self, site: Site) -> bool {
        self.marks.iter().any(|m| m.site == site && m.diseased)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusResult<T> {
    pub label: T,
    pub n_annotators: usize,
    pub n_agree: usize,
}

/// Modal MGI with the greater-tie rule, plus agreement counts.
pub fn mgi_consensus(scores: &[MgiScore]) -> Result<ConsensusResult<MgiScore>> {
    if scores.is_empty() {
        return Err(Error::Empty("no MGI scores to aggregate"));
    }
    let mut counts = [0usize; MgiScore::MAX as usize + 1];
    for s in scores {
        counts[s.value() as usize] += 1;
    }
    // Scanning from the top means the first maximum found is the greatest
    // tied value.
    let (value, n_agree) = counts
        .iter()
        .enumerate()
        .rev()
        .fold((0usize, 0usize), |best, (v, &c)| if c > best.1 { (v, c) } else { best });
    Ok(ConsensusResult {
        label: MgiScore(value as u8),
        n_annotators: scores.len(),
        n_agree,
    })
}

pub fn aggregate_subject_mgi(image_mgis: &[MgiScore]) -> Result<MgiScore> {
    if image_mgis.is_empty() {
        return Err(Error::NoImages("<unspecified>".into()));
    }
    Ok(mgi_consensus(image_mgis)?.label)
}

/// Strict majority: true only when more than half the votes are true.
pub fn consensus_condition(votes: &[bool]) -> Result<ConsensusResult<bool>> {
    if votes.is_empty() {
        return Err(Error::Empty("no votes"));
    }
    let yes = votes.iter().filter(|v| **v).count();
    let label = 2 * yes > votes.len();
    Ok(ConsensusResult {
        label,
        n_annotators: votes.len(),
        n_agree: if label { yes } else { votes.len() - yes },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteConsensus {
    pub site: Site,
    pub diseased: ConsensusResult<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageConsensus {
    pub image_id: String,
    pub mgi: ConsensusResult<MgiScore>,
    pub sites: Vec<SiteConsensus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectConsensus {
    pub subject_id: String,
    /// Aggregate over image-level consensus MGIs; `n_annotators` here
    /// counts images.
    pub mgi: ConsensusResult<MgiScore>,
    pub images: Vec<ImageConsensus>,
}

fn image_consensus(image_id: &str, annotations: &[&ImageAnnotation]) -> Result<ImageConsensus> {
    let scores: Vec<MgiScore> = annotations.iter().map(|a| a.mgi).collect();
    let mgi = mgi_consensus(&scores)?;
    let sites = Site::ALL
        .into_iter()
        .map(|site| {
            let votes: Vec<bool> = annotations.iter().map(|a| a.site_diseased(site)).collect();
            Ok(SiteConsensus {
                site,
                diseased: consensus_condition(&votes)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImageConsensus {
        image_id: image_id.to_string(),
        mgi,
        sites,
    })
}

/// Full consensus for one subject: per-image MGI and site labels across
/// annotators, then the subject MGI across images. Input order is
/// irrelevant.
pub fn subject_consensus(
    subject_id: &str,
    annotations: &[ImageAnnotation],
) -> Result<SubjectConsensus> {
    let mut by_image: BTreeMap<&str, Vec<&ImageAnnotation>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.subject_id == subject_id) {
        by_image.entry(a.image_id.as_str()).or_default().push(a);
    }
    if by_image.is_empty() {
        return Err(Error::NoImages(subject_id.to_string()));
    }
    let images = by_image
        .into_iter()
        .map(|(id, anns)| image_consensus(id, &anns))
        .collect::<Result<Vec<_>>>()?;
    let image_mgis: Vec<MgiScore> = images.iter().map(|i| i.mgi.label).collect();
    Ok(SubjectConsensus {
        subject_id: subject_id.to_string(),
        mgi: mgi_consensus(&image_mgis)?,
        images,
    })
}

/// Subject MGIs for every subject that has at least one annotated image.
pub fn subject_mgi_table(annotations: &[ImageAnnotation]) -> BTreeMap<String, MgiScore> {
    let subjects: BTreeSet<&str> = annotations.iter().map(|a| a.subject_id.as_str()).collect();
    let mut grouped: BTreeMap<&str, Vec<ImageAnnotation>> = BTreeMap::new();
    for a in annotations {
        grouped.entry(a.subject_id.as_str()).or_default().push(a.clone());
    }
    subjects
        .into_iter()
        .filter_map(|s| {
            subject_consensus(s, &grouped[s])
                .ok()
                .map(|c| (s.to_string(), c.mgi.label))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MgiTable {
    pub mgis: BTreeMap<String, MgiScore>,
    /// Subjects excluded because no image of theirs was annotated.
    pub missing: Vec<String>,
}

pub fn subject_mgi_table_for<'a>(
    subject_ids: impl IntoIterator<Item = &'a str>,
    annotations: &[ImageAnnotation],
) -> MgiTable {
    let mgis = subject_mgi_table(annotations);
    let missing = subject_ids
        .into_iter()
        .filter(|id| !mgis.contains_key(*id))
        .map(str::to_string)
        .collect();
    MgiTable { mgis, missing }
}

/// Keeps the latest record per (image, annotator). Later timestamps win;
/// equal timestamps fall back to input order.
pub fn latest_per_pair(annotations: &[ImageAnnotation]) -> Vec<ImageAnnotation> {
    let mut latest: BTreeMap<(&str, &str), (usize, &ImageAnnotation)> = BTreeMap::new();
    for (i, a) in annotations.iter().enumerate() {
        let key = (a.image_id.as_str(), a.annotator_id.as_str());
        match latest.get(&key) {
            Some((_, prev)) if prev.timestamp > a.timestamp => {}
            _ => {
                latest.insert(key, (i, a));
            }
        }
    }
    let mut kept: Vec<_> = latest.into_values().collect();
    kept.sort_by_key(|(i, _)| *i);
    kept.into_iter().map(|(_, a)| a.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn m(v: u8) -> MgiScore {
        MgiScore::new(v).unwrap()
    }

    fn mgis(vs: &[u8]) -> Vec<MgiScore> {
        vs.iter().map(|v| m(*v)).collect()
    }

    fn ann(image: &str, subject: &str, annotator: &str, mgi: u8, secs: i64) -> ImageAnnotation {
        ImageAnnotation {
            image_id: image.into(),
            subject_id: subject.into(),
            annotator_id: annotator.into(),
            mgi: m(mgi),
            marks: vec![],
            timestamp: Utc.timestamp_opt(1_500_000_000 + secs, 0).unwrap(),
        }
    }

    #[test]
    fn subject_mgi_examples() {
        assert_eq!(aggregate_subject_mgi(&mgis(&[2, 2, 3])).unwrap(), m(2));
        assert_eq!(aggregate_subject_mgi(&mgis(&[2, 3])).unwrap(), m(3));
        assert_eq!(aggregate_subject_mgi(&mgis(&[4])).unwrap(), m(4));
        assert!(matches!(aggregate_subject_mgi(&[]), Err(Error::NoImages(_))));
    }

    #[test]
    fn three_way_tie_takes_greatest() {
        let c = mgi_consensus(&mgis(&[1, 4, 2])).unwrap();
        assert_eq!(c.label, m(4));
        assert_eq!((c.n_annotators, c.n_agree), (3, 1));
    }

    #[test]
    fn mgi_range_enforced() {
        assert!(MgiScore::new(5).is_ok());
        assert!(MgiScore::new(6).is_err());
        assert!(serde_json::from_str::<MgiScore>("7").is_err());
        assert_eq!(serde_json::from_str::<MgiScore>("3").unwrap(), m(3));
    }

    #[test]
    fn condition_majority() {
        let c = consensus_condition(&[true, true, false]).unwrap();
        assert!(c.label);
        assert_eq!((c.n_agree, c.n_annotators), (2, 3));

        let c = consensus_condition(&[true, false]).unwrap();
        assert!(!c.label);
        assert_eq!(c.n_agree, 1);

        assert!(!consensus_condition(&[false, false, false]).unwrap().label);
        assert!(consensus_condition(&[]).is_err());
    }

    #[test]
    fn table_per_image_then_subject() {
        // Image-level consensus over annotators, then subject-level.
        let anns = vec![
            ann("i1", "s1", "a", 2, 0),
            ann("i1", "s1", "b", 2, 0),
            ann("i1", "s1", "c", 4, 0),
            ann("i2", "s1", "a", 2, 0),
            ann("i3", "s1", "a", 3, 0),
            ann("j1", "s2", "a", 1, 0),
            ann("j2", "s2", "a", 3, 0),
        ];
        let t = subject_mgi_table(&anns);
        assert_eq!(t.len(), 2);
        assert_eq!(t["s1"], m(2));
        assert_eq!(t["s2"], m(3));

        let t = subject_mgi_table_for(["s1", "s2", "s3"], &anns);
        assert_eq!(t.missing, vec!["s3".to_string()]);
    }

    #[test]
    fn subject_consensus_reports_sites() {
        let mut a = ann("i1", "s1", "a", 2, 0);
        a.marks.push(SiteMark {
            site: Site::LeftPapilla,
            points: vec![Point::new(10, 10)],
            diseased: true,
        });
        let mut b = ann("i1", "s1", "b", 2, 0);
        b.marks = a.marks.clone();
        let c = ann("i1", "s1", "c", 3, 0);
        let sc = subject_consensus("s1", &[a, b, c]).unwrap();
        let img = &sc.images[0];
        assert_eq!(img.mgi.label, m(2));
        assert_eq!(img.mgi.n_agree, 2);
        let left = img.sites.iter().find(|s| s.site == Site::LeftPapilla).unwrap();
        assert!(left.diseased.label);
        assert_eq!(left.diseased.n_agree, 2);
        assert!(matches!(subject_consensus("nobody", &[]), Err(Error::NoImages(_))));
    }

    #[test]
    fn last_write_wins() {
        let anns = vec![ann("i1", "s1", "a", 2, 0), ann("i1", "s1", "a", 4, 10)];
        let kept = latest_per_pair(&anns);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].mgi, m(4));
        // Older record arriving later does not override.
        let anns = vec![ann("i1", "s1", "a", 4, 10), ann("i1", "s1", "a", 2, 0)];
        assert_eq!(latest_per_pair(&anns)[0].mgi, m(4));
    }

    #[test]
    fn validation_rejects_bad_marks() {
        let mut a = ann("i1", "s1", "a", 2, 0);
        a.marks.push(SiteMark {
            site: Site::GingivalMargin,
            points: vec![Point::new(640, 0)],
            diseased: true,
        });
        assert!(a.validate().is_err());
        a.marks[0].points = vec![];
        assert!(a.validate().is_err());
        a.marks[0].diseased = false;
        assert!(a.validate().is_ok());
        a.marks.push(a.marks[0].clone());
        assert!(a.validate().is_err());
    }

    proptest! {
        #[test]
        fn output_is_member_and_order_free(vs in prop::collection::vec(0u8..=5, 1..20), seed in any::<u64>()) {
            let scores = mgis(&vs);
            let out = aggregate_subject_mgi(&scores).unwrap();
            prop_assert!(scores.contains(&out));
            let mut shuffled = scores.clone();
            // deterministic rotation + reversal permutation
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(aggregate_subject_mgi(&shuffled).unwrap(), out);
            // adding another copy of the winner keeps it the winner
            let mut more = scores.clone();
            more.push(out);
            prop_assert_eq!(aggregate_subject_mgi(&more).unwrap(), out);
        }

        #[test]
        fn condition_reversal_invariant(votes in prop::collection::vec(any::<bool>(), 1..15)) {
            let mut rev = votes.clone();
            rev.reverse();
            prop_assert_eq!(consensus_condition(&votes).unwrap(), consensus_condition(&rev).unwrap());
        }
    }
}
