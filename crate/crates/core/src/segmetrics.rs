//! Pixel-level segmentation metrics and mask file formats.
//!
//! ROC and PR curves pool every pixel of every image; IOU is computed per
//! image and then averaged.
//!
//! Probability maps use a small binary format: a 16-byte header
//! (`b"PMAP"`, width as u32 LE, height as u32 LE, 4 reserved zero bytes)
//! followed by `width * height` f32 LE scores in row-major order.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{FRAME_HEIGHT, FRAME_WIDTH};

pub(crate) fn encode_png(
    path: &Path,
    data: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<()> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive).write_image(
        data,
        width as u32,
        height as u32,
        color,
    )?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::validation("mask dimensions", format!("{width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::validation(
            "mask data",
            format!("{len} values for {width}x{height}"),
        ));
    }
    Ok(())
}

fn dims_match(lw: usize, lh: usize, rw: usize, rh: usize) -> Result<()> {
    if (lw, lh) != (rw, rh) {
        return Err(Error::DimensionMismatch {
            left_w: lw,
            left_h: lh,
            right_w: rw,
            right_h: rh,
        });
    }
    Ok(())
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn empty_frame() -> Self {
        Self::empty(FRAME_WIDTH, FRAME_HEIGHT)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_full_frame(&self) -> bool {
        self.width == FRAME_WIDTH && self.height == FRAME_HEIGHT
    }

    /// Errors unless the mask has the 640×480 model frame size.
    pub fn require_frame(&self) -> Result<()> {
        dims_match(self.width, self.height, FRAME_WIDTH, FRAME_HEIGHT)
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// 8-bit grayscale PNG: 0 background, 255 disease.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_png(path, &data, self.width, self.height, image::ExtendedColorType::L8)
    }

    /// Reads any PNG; pixels with luma ≥ 128 are disease.
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::new(
            w as usize,
            h as usize,
            img.into_raw().into_iter().map(|v| v >= 128).collect(),
        )
    }

    /// Binary portable graymap (P5, maxval 255).
    pub fn write_pgm(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let data: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        out.write_all(&data)
    }

    pub fn read_pgm(input: impl Read) -> Result<Self> {
        let mut input = std::io::BufReader::new(input);
        let fmt_err = |reason: &str| Error::Format {
            format: "PGM",
            reason: reason.to_string(),
        };
        let mut tokens: Vec<String> = Vec::new();
        // header: magic, width, height, maxval; '#' comments allowed
        while tokens.len() < 4 {
            let mut line = String::new();
            let n = input
                .read_line(&mut line)
                .map_err(|e| fmt_err(&e.to_string()))?;
            if n == 0 {
                return Err(fmt_err("truncated header"));
            }
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_string));
        }
        if tokens.len() > 4 {
            return Err(fmt_err("pixel data on header line"));
        }
        if tokens[0] != "P5" {
            return Err(fmt_err("magic is not P5"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| fmt_err("bad header number"));
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(fmt_err("maxval must be 1..=255"));
        }
        let mut data = vec![0u8; w * h];
        input
            .read_exact(&mut data)
            .map_err(|_| fmt_err("truncated pixel data"))?;
        let cut = maxval.div_ceil(2);
        Self::new(w, h, data.into_iter().map(|v| v as usize >= cut).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    scores: Vec<f32>,
}

const PMAP_MAGIC: &[u8; 4] = b"PMAP";
const PMAP_HEADER: usize = 16;

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, scores: Vec<f32>) -> Result<Self> {
        check_dims(width, height, scores.len())?;
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::validation("score", format!("{s} outside [0, 1]")));
        }
        // fold -0.0 into 0.0 so bit patterns order like values
        let scores = scores.into_iter().map(|s| s + 0.0).collect();
        Ok(Self {
            width,
            height,
            scores,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            scores: mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    /// Pixels with score ≥ `threshold`.
    pub fn threshold(&self, threshold: f32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.scores.iter().map(|&s| s >= threshold).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PMAP_HEADER + 4 * self.scores.len());
        out.extend_from_slice(PMAP_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&[0u8; 4]);
        for s in &self.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt_err = |reason: String| Error::Format {
            format: "PMAP",
            reason,
        };
        if bytes.len() < PMAP_HEADER || &bytes[..4] != PMAP_MAGIC {
            return Err(fmt_err("missing PMAP header".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (w, h) = (u32_at(4), u32_at(8));
        let body = &bytes[PMAP_HEADER..];
        if Some(body.len()) != w.checked_mul(h).and_then(|n| n.checked_mul(4)) {
            return Err(fmt_err(format!("{} body bytes for {w}x{h}", body.len())));
        }
        let scores = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(w, h, scores)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `None` when there are no positive truth pixels.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `None` when there are no negative truth pixels.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        self.tpr()
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

pub fn confusion_counts(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    dims_match(pred.width, pred.height, truth.width, truth.height)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Score threshold (predict positive when score ≥ threshold); the
    /// (0, 0) anchor uses +∞, serialized as null.
    pub threshold: Option<f64>,
}

/// Points are (fpr, tpr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<CurvePoint>,
}

/// Points are (recall, precision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<CurvePoint>,
    /// Precision reported for thresholds with no predicted positives.
    pub zero_prediction_precision: f64,
}

impl RocCurve {
    pub fn from_points(points: &[(f64, f64)]) -> Self {
        Self {
            points: points
                .iter()
                .map(|&(x, y)| CurvePoint {
                    x,
                    y,
                    threshold: None,
                })
                .collect(),
        }
    }
}

/// Per-unique-score (positives, negatives), keyed by f32 bit pattern. Scores
/// are non-negative so bit order is value order.
type ScoreHistogram = BTreeMap<u32, (u64, u64)>;

fn pooled_histogram(preds: &[ProbabilityMap], truths: &[BinaryMask]) -> Result<ScoreHistogram> {
    if preds.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    if preds.len() != truths.len() {
        return Err(Error::validation(
            "inputs",
            format!("{} predictions vs {} ground truths", preds.len(), truths.len()),
        ));
    }
    // Hash first, order once: far fewer unique scores than pixels.
    let mut counts: HashMap<u32, (u64, u64)> = HashMap::new();
    for (p, t) in preds.iter().zip(truths) {
        dims_match(p.width, p.height, t.width, t.height)?;
        for (&s, &pos) in p.scores.iter().zip(&t.bits) {
            // + 0.0 folds -0.0 into 0.0, whose bits would otherwise sort last
            let e = counts.entry((s + 0.0).to_bits()).or_default();
            if pos {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    Ok(counts.into_iter().collect())
}

/// Cumulative (tp, fp) per descending unique threshold.
fn sweep(hist: &ScoreHistogram) -> Vec<(f32, u64, u64)> {
    let (mut tp, mut fp) = (0, 0);
    hist.iter()
        .rev()
        .map(|(&bits, &(pos, neg))| {
            tp += pos;
            fp += neg;
            (f32::from_bits(bits), tp, fp)
        })
        .collect()
}

/// ROC over all pixels of all images, one point per unique score plus the
/// (0, 0) and (1, 1) anchors. Tied pixels enter together.
pub fn pooled_roc(preds: &[ProbabilityMap], truths: &[BinaryMask]) -> Result<RocCurve> {
    let hist = pooled_histogram(preds, truths)?;
    let (p, n) = hist
        .values()
        .fold((0, 0), |(p, n), &(a, b)| (p + a, n + b));
    if p == 0 || n == 0 {
        return Err(Error::validation(
            "ground truth",
            "ROC needs both positive and negative pixels",
        ));
    }
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        threshold: None,
    }];
    for (thr, tp, fp) in sweep(&hist) {
        points.push(CurvePoint {
            x: fp as f64 / n as f64,
            y: tp as f64 / p as f64,
            threshold: Some(thr as f64),
        });
    }
    // The lowest threshold predicts everything positive, which is the (1, 1)
    // anchor itself.
    Ok(RocCurve { points })
}

pub fn auc_trapezoid(curve: &RocCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::validation("ROC curve", "fewer than 2 points"));
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.x < a.x || b.y < a.y {
            return Err(Error::validation("ROC curve", "points are not monotone"));
        }
        area += (b.x - a.x) * (a.y + b.y) / 2.0;
    }
    Ok(area)
}

/// Precision for thresholds that predict nothing positive.
pub const ZERO_PREDICTION_PRECISION: f64 = 1.0;

/// Pooled precision/recall, starting from the zero-prediction point
/// (0, 1.0 by convention).
pub fn pr_curve(preds: &[ProbabilityMap], truths: &[BinaryMask]) -> Result<PrCurve> {
    let hist = pooled_histogram(preds, truths)?;
    let p: u64 = hist.values().map(|v| v.0).sum();
    if p == 0 {
        return Err(Error::validation("ground truth", "no positive pixels"));
    }
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: ZERO_PREDICTION_PRECISION,
        threshold: None,
    }];
    for (thr, tp, fp) in sweep(&hist) {
        points.push(CurvePoint {
            x: tp as f64 / p as f64,
            y: ratio(tp, tp + fp).unwrap_or(ZERO_PREDICTION_PRECISION),
            threshold: Some(thr as f64),
        });
    }
    Ok(PrCurve {
        points,
        zero_prediction_precision: ZERO_PREDICTION_PRECISION,
    })
}

/// Intersection over union; two empty masks score 1.0.
pub fn iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    dims_match(pred.width, pred.height, truth.width, truth.height)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        inter += (p && t) as u64;
        union += (p || t) as u64;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Sample mean and (n − 1) standard deviation of per-image IOU.
pub fn mean_iou(pairs: &[(BinaryMask, BinaryMask)]) -> Result<(f64, f64)> {
    let ious = pairs
        .iter()
        .map(|(p, t)| iou(p, t))
        .collect::<Result<Vec<_>>>()?;
    mean_sd(&ious)
}

pub(crate) fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("IOU list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Positive-pixel prevalence π consistent with a pooled operating point:
/// precision = tpr·π / (tpr·π + fpr·(1 − π)).
pub fn implied_prevalence(tpr: f64, fpr: f64, precision: f64) -> Result<f64> {
    for (name, v) in [("tpr", tpr), ("fpr", fpr), ("precision", precision)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::validation(name, format!("{v} outside (0, 1)")));
        }
    }
    let num = precision * fpr;
    let pi = num / (tpr * (1.0 - precision) + num);
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::validation(
            "operating point",
            format!("implied prevalence {pi} outside (0, 1)"),
        ));
    }
    Ok(pi)
}

/// Everything the segmentation evaluation reports for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub n_images: usize,
    pub counts: ConfusionCounts,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub auc: Option<f64>,
    pub mean_iou: f64,
    pub sd_iou: f64,
    /// Images where both prediction and truth are empty (IOU taken as 1.0).
    pub empty_pairs: usize,
    pub empty_iou_convention: f64,
    pub zero_prediction_precision: f64,
}

/// Pooled confusion counts and curves plus per-image IOU statistics.
pub fn evaluate(
    preds: &[ProbabilityMap],
    truths: &[BinaryMask],
    threshold: f32,
) -> Result<(SegmentationSummary, Option<RocCurve>, Option<PrCurve>)> {
    if preds.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    if preds.len() != truths.len() {
        return Err(Error::validation(
            "inputs",
            format!("{} predictions vs {} ground truths", preds.len(), truths.len()),
        ));
    }
    let mut counts = ConfusionCounts::default();
    let mut ious = Vec::with_capacity(preds.len());
    let mut empty_pairs = 0;
    for (p, t) in preds.iter().zip(truths) {
        let hard = p.threshold(threshold);
        let c = confusion_counts(&hard, t)?;
        if c.tp + c.fp + c.fn_ == 0 {
            empty_pairs += 1;
        }
        counts = counts.merge(c);
        ious.push(iou(&hard, t)?);
    }
    let (mean, sd) = mean_sd(&ious)?;
    let roc = pooled_roc(preds, truths).ok();
    let pr = pr_curve(preds, truths).ok();
    let auc = roc.as_ref().map(auc_trapezoid).transpose()?;
    Ok((
        SegmentationSummary {
            n_images: preds.len(),
            counts,
            tpr: counts.tpr(),
            fpr: counts.fpr(),
            precision: counts.precision(),
            auc,
            mean_iou: mean,
            sd_iou: sd,
            empty_pairs,
            empty_iou_convention: 1.0,
            zero_prediction_precision: ZERO_PREDICTION_PRECISION,
        },
        roc,
        pr,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn four_pixel_confusion() {
        let c = confusion_counts(&mask(4, 1, &[1, 1, 0, 0]), &mask(4, 1, &[1, 0, 1, 0])).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
        assert_eq!(c.tpr(), Some(0.5));
        let none = confusion_counts(&mask(2, 1, &[0, 0]), &mask(2, 1, &[0, 0])).unwrap();
        assert_eq!(none.tpr(), None);
        assert_eq!(none.precision(), None);
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::empty(4, 1);
        let b = BinaryMask::empty(2, 2);
        assert!(matches!(confusion_counts(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(iou(&a, &b).is_err());
        assert!(BinaryMask::new(3, 3, vec![false; 8]).is_err());
    }

    #[test]
    fn iou_examples() {
        let full = BinaryMask::full(FRAME_WIDTH, FRAME_HEIGHT);
        let left = BinaryMask::from_fn(FRAME_WIDTH, FRAME_HEIGHT, |x, _| x < FRAME_WIDTH / 2);
        assert_eq!(iou(&left, &full).unwrap(), 0.5);
        assert_eq!(iou(&left, &left).unwrap(), 1.0);
        assert_eq!(iou(&left, &left.complement()).unwrap(), 0.0);
        let e = BinaryMask::empty_frame();
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn mean_iou_examples() {
        let a = mask(2, 1, &[1, 0]);
        let b = mask(2, 1, &[0, 1]);
        let (m, s) = mean_iou(&[(a.clone(), a.clone()), (a.clone(), b)]).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(mean_iou(&[(a.clone(), a)]).unwrap(), (1.0, 0.0));
        assert!(mean_iou(&[]).is_err());
    }

    #[test]
    fn roc_edge_cases() {
        let truth = mask(4, 1, &[1, 1, 0, 0]);
        let perfect = ProbabilityMap::new(4, 1, vec![0.9, 0.8, 0.1, 0.2]).unwrap();
        let roc = pooled_roc(std::slice::from_ref(&perfect), std::slice::from_ref(&truth)).unwrap();
        assert!(roc.points.iter().any(|p| p.x == 0.0 && p.y == 1.0));
        assert_eq!(auc_trapezoid(&roc).unwrap(), 1.0);

        let constant = ProbabilityMap::new(4, 1, vec![0.5; 4]).unwrap();
        let roc = pooled_roc(&[constant], std::slice::from_ref(&truth)).unwrap();
        let xy: Vec<_> = roc.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc_trapezoid(&roc).unwrap(), 0.5);

        let pr = pr_curve(&[perfect], std::slice::from_ref(&truth)).unwrap();
        assert!(pr.points.iter().any(|p| p.x == 1.0 && p.y == 1.0));
        let all = ProbabilityMap::from_mask(&BinaryMask::full(4, 1));
        let pr = pr_curve(&[all], &[truth]).unwrap();
        let last = pr.points.last().unwrap();
        assert_eq!((last.x, last.y), (1.0, 0.5));
        assert!(pooled_roc(&[], &[]).is_err());
    }

    #[test]
    fn negative_zero_is_lowest_score() {
        let truth = mask(3, 1, &[1, 0, 0]);
        let p = ProbabilityMap::new(3, 1, vec![0.7, -0.0, 0.0]).unwrap();
        let roc = pooled_roc(&[p], &[truth]).unwrap();
        let thresholds: Vec<_> = roc.points.iter().filter_map(|p| p.threshold).collect();
        assert_eq!(thresholds, vec![0.7f32 as f64, 0.0]);
        assert_eq!(auc_trapezoid(&roc).unwrap(), 1.0);
    }

    #[test]
    fn auc_closed_forms() {
        let c = RocCurve::from_points(&[(0.0, 0.0), (0.075, 0.429), (1.0, 1.0)]);
        let auc = auc_trapezoid(&c).unwrap();
        assert!((auc - (0.429 - 0.075 + 1.0) / 2.0).abs() < 1e-12);
        assert!((auc - 0.677).abs() < 0.0005);
        assert!(auc_trapezoid(&RocCurve::from_points(&[(0.0, 0.0)])).is_err());
        let perfect = RocCurve::from_points(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(auc_trapezoid(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn prevalence_examples() {
        let pi = implied_prevalence(0.429, 0.075, 0.271).unwrap();
        assert!((pi - 0.061_023_941).abs() < 1e-8);
        let (t, f) = (0.6, 0.2);
        let p = t * 0.5 / (t * 0.5 + f * 0.5);
        assert!((implied_prevalence(t, f, p).unwrap() - 0.5).abs() < 1e-12);
        let near_one = implied_prevalence(0.5, 0.3, 1.0 - 1e-12).unwrap();
        assert!(near_one < 1.0 && near_one > 0.999);
        assert!(implied_prevalence(0.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn pgm_and_pmap_round_trip() {
        let m = BinaryMask::from_fn(5, 3, |x, y| (x + y) % 2 == 0);
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert_eq!(BinaryMask::read_pgm(&buf[..]).unwrap(), m);
        let commented = b"P5\n# made by hand\n2 1\n255\n\xff\x00";
        assert_eq!(BinaryMask::read_pgm(&commented[..]).unwrap(), mask(2, 1, &[1, 0]));
        assert!(BinaryMask::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());

        let p = ProbabilityMap::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"PMAP");
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(ProbabilityMap::from_bytes(&bytes).unwrap(), p);
        assert!(ProbabilityMap::from_bytes(&bytes[..30]).is_err());
        assert!(ProbabilityMap::new(1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = BinaryMask::from_fn(7, 4, |x, y| x > y);
        m.write_png(&path).unwrap();
        assert_eq!(BinaryMask::read_png(&path).unwrap(), m);
    }

    fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(any::<bool>(), w * h),
                proptest::collection::vec(any::<bool>(), w * h),
            )
                .prop_map(move |(a, b)| {
                    (BinaryMask::new(w, h, a).unwrap(), BinaryMask::new(w, h, b).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded((a, b) in mask_pair()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            let c = confusion_counts(&a, &b).unwrap();
            prop_assert_eq!(c.total() as usize, a.width() * a.height());
        }

        #[test]
        fn auc_rank_invariant(scores in proptest::collection::vec(0u8..=20, 16),
                              truth in proptest::collection::vec(any::<bool>(), 16)) {
            prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
            let t = BinaryMask::new(4, 4, truth).unwrap();
            let lin = ProbabilityMap::new(4, 4, scores.iter().map(|&s| s as f32 / 20.0).collect()).unwrap();
            let sq = ProbabilityMap::new(4, 4, scores.iter().map(|&s| (s as f32 / 20.0).powi(3)).collect()).unwrap();
            let a1 = auc_trapezoid(&pooled_roc(&[lin], std::slice::from_ref(&t)).unwrap()).unwrap();
            let a2 = auc_trapezoid(&pooled_roc(&[sq], &[t]).unwrap()).unwrap();
            prop_assert!((a1 - a2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a1));
        }

        #[test]
        fn binary_roc_three_points((p, t) in mask_pair()) {
            let c = confusion_counts(&p, &t).unwrap();
            prop_assume!(c.tp + c.fn_ > 0 && c.fp + c.tn > 0);
            // both 0 and 1 scores present, else the interior point is an anchor
            prop_assume!(p.count() > 0 && p.count() < p.bits().len());
            let roc = pooled_roc(&[ProbabilityMap::from_mask(&p)], &[t]).unwrap();
            prop_assert_eq!(roc.points.len(), 3);
            let auc = auc_trapezoid(&roc).unwrap();
            let closed = (c.tpr().unwrap() - c.fpr().unwrap() + 1.0) / 2.0;
            prop_assert!((auc - closed).abs() < 1e-12);
        }
    }
}
