//! Detection metrics: accuracy, average precision, per-generator confusion
//! matrices and the unweighted mAcc/mAP aggregation.

use serde::Serialize;
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no samples")]
    EmptyInput,
    #[error("average precision needs both classes")]
    SingleClassInput,
    #[error("unknown generator tag {0:?}")]
    UnknownTag(String),
}

/// Classifier output for one image. Label 1 = fake (positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: u8,
    pub generator: String,
}

impl ScoredSample {
    pub fn new(score: f64, label: u8, generator: impl Into<String>) -> Self {
        Self { score, label, generator: generator.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_samples(samples: &[ScoredSample], threshold: f64) -> Self {
        let mut m = Self::default();
        for s in samples {
            match (s.label == 1, s.score >= threshold) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (false, false) => m.tn += 1,
                (true, false) => m.fn_ += 1,
            }
        }
        m
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Percentage of samples whose thresholded score (`score >= threshold` is
/// fake) matches the label.
pub fn accuracy(samples: &[ScoredSample], threshold: f64) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let correct = samples.iter().filter(|s| (s.score >= threshold) == (s.label == 1)).count();
    Ok(100.0 * correct as f64 / samples.len() as f64)
}

/// Non-interpolated AP in percent: mean of precision@k over the ranks k of
/// positive samples, ranking by score descending with ties kept in input order.
pub fn average_precision(samples: &[ScoredSample]) -> Result<f64, EvalError> {
    let positives = samples.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == samples.len() {
        return Err(EvalError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if samples[i].label == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(100.0 * (sum / positives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub generator: String,
    pub n_real: usize,
    pub n_fake: usize,
    pub accuracy: f64,
    pub ap: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Per-generator metrics; groups appear in first-seen order.
pub fn group_report(samples: &[ScoredSample], threshold: f64) -> Vec<GroupReport> {
    let mut tags: Vec<&str> = Vec::new();
    for s in samples {
        if !tags.contains(&s.generator.as_str()) {
            tags.push(&s.generator);
        }
    }
    tags.into_iter()
        .map(|tag| {
            let group: Vec<ScoredSample> = samples.iter().filter(|s| s.generator == tag).cloned().collect();
            let n_fake = group.iter().filter(|s| s.label == 1).count();
            GroupReport {
                generator: tag.to_string(),
                n_real: group.len() - n_fake,
                n_fake,
                accuracy: accuracy(&group, threshold).expect("group is nonempty"),
                ap: average_precision(&group).ok(),
                confusion: ConfusionMatrix::from_samples(&group, threshold),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanMetrics {
    #[serde(rename = "mAcc")]
    pub macc: f64,
    /// `None` when no included group has an AP.
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
}

/// Unweighted means over the included groups (all groups when `include` is
/// empty). Groups without AP are skipped for mAP.
pub fn mean_metrics(reports: &[GroupReport], include: &[String]) -> Result<MeanMetrics, EvalError> {
    let known: HashSet<&str> = reports.iter().map(|r| r.generator.as_str()).collect();
    if let Some(bad) = include.iter().find(|t| !known.contains(t.as_str())) {
        return Err(EvalError::UnknownTag(bad.clone()));
    }
    let selected: Vec<&GroupReport> =
        reports.iter().filter(|r| include.is_empty() || include.contains(&r.generator)).collect();
    if selected.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let macc = selected.iter().map(|r| r.accuracy).sum::<f64>() / selected.len() as f64;
    let aps: Vec<f64> = selected.iter().filter_map(|r| r.ap).collect();
    let map = (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64);
    Ok(MeanMetrics { macc, map })
}

/// Fixed significant-digit formatting used by every CSV writer.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.99.. -> 10.0)
    let carried = s.parse::<f64>().map_or(false, |r| r.abs() >= 10f64.powi(magnitude as i32 + 1));
    if decimals > 0 && carried {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

pub const REPORT_CSV_HEADER: &str = "generator,n_real,n_fake,accuracy,ap,tp,fp,tn,fn";

pub fn reports_csv(reports: &[GroupReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let c = &r.confusion;
        let ap = r.ap.map(|v| fmt_sig(v, 9)).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.generator),
            r.n_real,
            r.n_fake,
            fmt_sig(r.accuracy, 9),
            ap,
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        )
        .expect("writing to String");
    }
    out
}

/// Long-format confusion counts, one row per (generator, actual, predicted).
pub fn confusion_csv(reports: &[GroupReport]) -> String {
    let mut out = String::from("generator,actual,predicted,count\n");
    for r in reports {
        let c = &r.confusion;
        let g = csv_field(&r.generator);
        for (actual, predicted, n) in [("real", "real", c.tn), ("real", "fake", c.fp), ("fake", "real", c.fn_), ("fake", "fake", c.tp)] {
            writeln!(out, "{g},{actual},{predicted},{n}").expect("writing to String");
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    #[serde(rename = "mAcc")]
    macc: f64,
    #[serde(rename = "mAP")]
    map: Option<f64>,
    include: &'a [String],
    groups: &'a [GroupReport],
}

pub fn summary_json(reports: &[GroupReport], include: &[String], means: &MeanMetrics) -> String {
    let s = Summary { macc: means.macc, map: means.map, include, groups: reports };
    serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(score: f64, label: u8) -> ScoredSample {
        ScoredSample::new(score, label, "g")
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[s(0.9, 1), s(0.1, 0)], 0.5).unwrap(), 100.0);
        assert_eq!(accuracy(&[s(0.5, 1), s(0.5, 1)], 0.5).unwrap(), 100.0);
        assert_eq!(accuracy(&[s(0.9, 1), s(0.1, 0), s(0.7, 1), s(0.8, 0)], 0.5).unwrap(), 75.0);
        assert_eq!(accuracy(&[], 0.5), Err(EvalError::EmptyInput));
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[s(0.9, 1), s(0.8, 1), s(0.3, 0)]).unwrap(), 100.0);
        assert_eq!(average_precision(&[s(0.9, 0), s(0.1, 1)]).unwrap(), 50.0);
        assert_eq!(average_precision(&[s(0.9, 1)]), Err(EvalError::SingleClassInput));
        assert_eq!(average_precision(&[s(0.9, 0), s(0.2, 0)]), Err(EvalError::SingleClassInput));
    }

    #[test]
    fn ties_follow_input_order() {
        assert_eq!(average_precision(&[s(0.5, 1), s(0.5, 0)]).unwrap(), 100.0);
        assert_eq!(average_precision(&[s(0.5, 0), s(0.5, 1)]).unwrap(), 50.0);
    }

    #[test]
    fn groups_and_means() {
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(ScoredSample::new(0.9, 1, "A"));
            samples.push(ScoredSample::new(0.1 + i as f64 * 0.01, 0, "A"));
        }
        samples.push(ScoredSample::new(0.2, 1, "B"));
        samples.push(ScoredSample::new(0.8, 1, "B"));
        let reports = group_report(&samples, 0.5);
        assert_eq!(reports.iter().map(|r| r.generator.as_str()).collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!((reports[0].accuracy, reports[0].ap), (100.0, Some(100.0)));
        assert_eq!((reports[1].accuracy, reports[1].ap), (50.0, None));
        assert_eq!(reports[1].confusion, ConfusionMatrix { tp: 1, fp: 0, tn: 0, fn_: 1 });
        let m = mean_metrics(&reports, &[]).unwrap();
        assert_eq!(m.macc, 75.0);
        assert_eq!(m.map, Some(100.0));
        let only_b = mean_metrics(&reports, &["B".to_string()]).unwrap();
        assert_eq!((only_b.macc, only_b.map), (50.0, None));
        assert_eq!(mean_metrics(&reports, &["C".into()]), Err(EvalError::UnknownTag("C".into())));
    }

    #[test]
    fn mean_of_two() {
        let mk = |acc| GroupReport { generator: format!("{acc}"), n_real: 0, n_fake: 1, accuracy: acc, ap: None, confusion: Default::default() };
        assert_eq!(mean_metrics(&[mk(90.0), mk(92.0)], &[]).unwrap().macc, 91.0);
    }

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(91.36333333333, 9), "91.3633333");
        assert_eq!(fmt_sig(100.0, 9), "100.000000");
        assert_eq!(fmt_sig(0.000123456789123, 9), "0.000123456789");
        assert_eq!(fmt_sig(-2.5, 3), "-2.50");
        assert_eq!(fmt_sig(9.9999999999, 9), "10.0000000");
        assert_eq!(fmt_sig(0.0, 9), "0");
    }

    #[test]
    fn csv_layout() {
        let reports = group_report(&[ScoredSample::new(0.7, 1, "X"), ScoredSample::new(0.2, 0, "X")], 0.5);
        let csv = reports_csv(&reports);
        assert_eq!(csv, "generator,n_real,n_fake,accuracy,ap,tp,fp,tn,fn\nX,1,1,100.000000,100.000000,1,0,1,0\n");
        let fake_only = group_report(&[ScoredSample::new(0.7, 1, "Y")], 0.5);
        assert!(reports_csv(&fake_only).ends_with("Y,0,1,100.000000,,1,0,0,0\n"));
        assert_eq!(confusion_csv(&reports).lines().count(), 5);
    }
}
