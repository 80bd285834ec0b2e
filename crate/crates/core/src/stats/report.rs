use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{turn_pairs_sorted, EnvLabel, Manifest};
use crate::error::{Error, Result};
use crate::features::{Feature, UtteranceFeatures};
use crate::seed::derive_seed;

use super::{pearson, permutation_test, welch_t_test, CorrelationResult, TestResult};

/// One utterance's features with its speaker and session label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub speaker: String,
    pub label: EnvLabel,
    pub features: UtteranceFeatures,
}

fn session_label(manifest: &Manifest, session_id: &str) -> Result<EnvLabel> {
    let session = manifest
        .session(session_id)
        .ok_or_else(|| Error::invalid("session_id", format!("unknown session `{session_id}`")))?;
    session.env_label.ok_or_else(|| {
        Error::invalid(
            "env_label",
            format!("session `{session_id}` has no environment label; assign labels first"),
        )
    })
}

/// Feature records of every utterance; utterances without features count
/// as undefined for every feature.
pub fn feature_records(manifest: &Manifest) -> Result<Vec<FeatureRecord>> {
    manifest
        .utterances
        .iter()
        .map(|u| {
            Ok(FeatureRecord {
                speaker: u.speaker_id.clone(),
                label: session_label(manifest, &u.session_id)?,
                features: u.features.unwrap_or_default(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum TestMethod {
    Welch,
    /// Seeded permutation test; each comparison derives its own seed.
    Permutation { resamples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvEffectConfig {
    pub alpha: f64,
    pub method: TestMethod,
    pub features: Vec<Feature>,
}

impl Default for EnvEffectConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            method: TestMethod::Welch,
            features: Feature::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub speaker: String,
    pub feature: Feature,
    pub label: EnvLabel,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub dropped_undefined: usize,
}

/// Welch (or permutation) comparison of two labels; the statistic and
/// `difference` are positive when `to` has the larger mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub speaker: String,
    pub feature: Feature,
    pub from: EnvLabel,
    pub to: EnvLabel,
    pub n_from: usize,
    pub n_to: usize,
    pub mean_from: f64,
    pub mean_to: f64,
    pub difference: f64,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvEffectReport {
    pub alpha: f64,
    pub method: TestMethod,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

impl EnvEffectReport {
    pub fn comparison(&self, speaker: &str, feature: Feature, from: EnvLabel, to: EnvLabel) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.speaker == speaker && c.feature == feature && c.from == from && c.to == to)
    }
}

const LABEL_PAIRS: [(EnvLabel, EnvLabel); 3] = [
    (EnvLabel::Quiet, EnvLabel::Moderate),
    (EnvLabel::Moderate, EnvLabel::Noisy),
    (EnvLabel::Quiet, EnvLabel::Noisy),
];

fn mean_std(x: &[f64]) -> (Option<f64>, Option<f64>) {
    match x.len() {
        0 => (None, None),
        1 => (Some(x[0]), None),
        _ => {
            let (m, v) = super::hypothesis::mean_var(x);
            (Some(m), Some(v.sqrt()))
        }
    }
}

/// Per-speaker, per-feature label means and pairwise label tests.
pub fn env_effect_report(records: &[FeatureRecord], config: &EnvEffectConfig) -> Result<EnvEffectReport> {
    type Key<'a> = (&'a str, Feature, EnvLabel);
    let mut values: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut dropped: BTreeMap<Key, usize> = BTreeMap::new();
    for r in records {
        for &f in &config.features {
            let key = (r.speaker.as_str(), f, r.label);
            match r.features.get(f) {
                Some(v) => values.entry(key).or_default().push(v),
                None => *dropped.entry(key).or_default() += 1,
            }
        }
    }

    let mut speakers: Vec<&str> = records.iter().map(|r| r.speaker.as_str()).collect();
    speakers.sort_unstable();
    speakers.dedup();

    let mut cells = Vec::new();
    let mut notes = Vec::new();
    let mut jobs = Vec::new();
    let empty = Vec::new();
    for &speaker in &speakers {
        for &feature in &config.features {
            let get = |l: EnvLabel| values.get(&(speaker, feature, l)).unwrap_or(&empty);
            for label in EnvLabel::ALL {
                let x = get(label);
                let d = dropped.get(&(speaker, feature, label)).copied().unwrap_or(0);
                if x.is_empty() && d == 0 {
                    continue;
                }
                let (mean, std) = mean_std(x);
                cells.push(CellSummary {
                    speaker: speaker.to_string(),
                    feature,
                    label,
                    n: x.len(),
                    mean,
                    std,
                    dropped_undefined: d,
                });
                if d > 0 {
                    notes.push(format!("{speaker} {feature} {label}: {d} utterance(s) with undefined value dropped"));
                }
            }
            for (from, to) in LABEL_PAIRS {
                let (a, b) = (get(from), get(to));
                if a.len() < 2 || b.len() < 2 {
                    notes.push(format!(
                        "{speaker} {feature} {from}-{to}: skipped, need 2 values per label (have {} and {})",
                        a.len(),
                        b.len()
                    ));
                    continue;
                }
                jobs.push((speaker, feature, from, to, a, b));
            }
        }
    }

    let comparisons = jobs
        .par_iter()
        .map(|&(speaker, feature, from, to, a, b)| {
            let test = match config.method {
                TestMethod::Welch => welch_t_test(b, a, config.alpha)?,
                TestMethod::Permutation { resamples, seed } => {
                    let key = format!("{speaker}/{feature}/{from}/{to}");
                    permutation_test(b, a, resamples, derive_seed(seed, &key), config.alpha)?
                }
            };
            let mean_from = a.iter().sum::<f64>() / a.len() as f64;
            let mean_to = b.iter().sum::<f64>() / b.len() as f64;
            Ok(Comparison {
                speaker: speaker.to_string(),
                feature,
                from,
                to,
                n_from: a.len(),
                n_to: b.len(),
                mean_from,
                mean_to,
                difference: mean_to - mean_from,
                test,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EnvEffectReport {
        alpha: config.alpha,
        method: config.method,
        cells,
        comparisons,
        notes,
    })
}

/// A turn pair's features, keyed by the (sorted) speaker pair and label.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRecord {
    pub speakers: (String, String),
    pub label: EnvLabel,
    pub target: UtteranceFeatures,
    pub previous: UtteranceFeatures,
}

/// Turn pairs of every session, in session order.
pub fn turn_records(manifest: &Manifest) -> Result<Vec<TurnRecord>> {
    let mut out = Vec::new();
    for (session_id, utterances) in manifest.by_session() {
        let label = session_label(manifest, session_id)?;
        for p in turn_pairs_sorted(&utterances) {
            let (a, b) = (&p.target.speaker_id, &p.previous.speaker_id);
            let speakers = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            out.push(TurnRecord {
                speakers,
                label,
                target: p.target.features.unwrap_or_default(),
                previous: p.previous.features.unwrap_or_default(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentRow {
    pub speaker_a: String,
    pub speaker_b: String,
    pub feature: Feature,
    pub label: EnvLabel,
    pub n: usize,
    pub dropped_undefined: usize,
    /// `None` with fewer than 3 pairs or a constant series.
    pub result: Option<CorrelationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentReport {
    pub alpha: f64,
    pub rows: Vec<EntrainmentRow>,
    pub notes: Vec<String>,
}

impl EntrainmentReport {
    pub fn row(&self, a: &str, b: &str, feature: Feature, label: EnvLabel) -> Option<&EntrainmentRow> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.rows
            .iter()
            .find(|r| r.speaker_a == a && r.speaker_b == b && r.feature == feature && r.label == label)
    }
}

/// Correlation of target against previous-interlocutor feature values,
/// per speaker pair, feature and label.
pub fn entrainment_report(records: &[TurnRecord], features: &[Feature], alpha: f64) -> Result<EntrainmentReport> {
    type Key<'a> = (&'a str, &'a str, Feature, EnvLabel);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let (a, b) = (r.speakers.0.as_str(), r.speakers.1.as_str());
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        for &f in features {
            let g = groups.entry((a, b, f, r.label)).or_default();
            match (r.target.get(f), r.previous.get(f)) {
                (Some(t), Some(p)) => {
                    g.0.push(t);
                    g.1.push(p);
                }
                _ => g.2 += 1,
            }
        }
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for ((a, b, feature, label), (target, previous, dropped)) in groups {
        let result = if target.len() < 3 {
            notes.push(format!("{a}-{b} {feature} {label}: {} pair(s), need 3", target.len()));
            None
        } else {
            let r = pearson(&target, &previous, alpha)?;
            if r.is_none() {
                notes.push(format!("{a}-{b} {feature} {label}: constant values, correlation undefined"));
            }
            r
        };
        if dropped > 0 {
            notes.push(format!("{a}-{b} {feature} {label}: {dropped} pair(s) with undefined value dropped"));
        }
        rows.push(EntrainmentRow {
            speaker_a: a.to_string(),
            speaker_b: b.to_string(),
            feature,
            label,
            n: target.len(),
            dropped_undefined: dropped,
            result,
        });
    }
    Ok(EntrainmentReport { alpha, rows, notes })
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: "<csv>".into(),
            source,
        },
        other => Error::invalid("csv", format!("{other:?}")),
    }
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    speaker: &'a str,
    feature: Feature,
    from: EnvLabel,
    to: EnvLabel,
    n_from: usize,
    n_to: usize,
    mean_from: f64,
    mean_to: f64,
    difference: f64,
    statistic: f64,
    dof: f64,
    p_value: f64,
    significant: bool,
    alpha: f64,
}

#[derive(Serialize)]
struct CorrelationRow<'a> {
    speaker_a: &'a str,
    speaker_b: &'a str,
    feature: Feature,
    label: EnvLabel,
    n: usize,
    dropped_undefined: usize,
    r: Option<f64>,
    p_value: Option<f64>,
    significant: Option<bool>,
    alpha: f64,
}

/// One row per speaker, feature and label.
pub fn write_cells_csv(report: &EnvEffectReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &report.cells {
        w.serialize(c).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

/// One row per speaker, feature and label pair.
pub fn write_comparisons_csv(report: &EnvEffectReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &report.comparisons {
        w.serialize(ComparisonRow {
            speaker: &c.speaker,
            feature: c.feature,
            from: c.from,
            to: c.to,
            n_from: c.n_from,
            n_to: c.n_to,
            mean_from: c.mean_from,
            mean_to: c.mean_to,
            difference: c.difference,
            statistic: c.test.statistic,
            dof: c.test.dof,
            p_value: c.test.p_value,
            significant: c.test.significant,
            alpha: c.test.alpha,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

/// One row per speaker pair, feature and label.
pub fn write_entrainment_csv(report: &EntrainmentReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.rows {
        w.serialize(CorrelationRow {
            speaker_a: &r.speaker_a,
            speaker_b: &r.speaker_b,
            feature: r.feature,
            label: r.label,
            n: r.n,
            dropped_undefined: r.dropped_undefined,
            r: r.result.map(|c| c.r),
            p_value: r.result.map(|c| c.p_value),
            significant: r.result.map(|c| c.significant),
            alpha: report.alpha,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(speaker: &str, label: EnvLabel, rms: Option<f64>) -> FeatureRecord {
        FeatureRecord {
            speaker: speaker.into(),
            label,
            features: UtteranceFeatures {
                rms_db: rms,
                ..Default::default()
            },
        }
    }

    fn rms_only() -> EnvEffectConfig {
        EnvEffectConfig {
            features: vec![Feature::Rms],
            ..Default::default()
        }
    }

    #[test]
    fn single_utterance_cell_is_skipped_with_note() {
        let records = vec![
            rec("a", EnvLabel::Quiet, Some(-30.0)),
            rec("a", EnvLabel::Quiet, Some(-31.0)),
            rec("a", EnvLabel::Noisy, Some(-20.0)),
        ];
        let report = env_effect_report(&records, &rms_only()).unwrap();
        assert!(report.comparisons.is_empty());
        assert!(report.notes.iter().any(|n| n.contains("quiet-noisy: skipped")));
        assert_eq!(report.cells.len(), 2);
        assert_eq!(report.cells[1].std, None);
    }

    #[test]
    fn undefined_values_are_counted() {
        let records = vec![
            rec("a", EnvLabel::Quiet, Some(-30.0)),
            rec("a", EnvLabel::Quiet, None),
            rec("a", EnvLabel::Quiet, Some(-29.0)),
        ];
        let report = env_effect_report(&records, &rms_only()).unwrap();
        assert_eq!(report.cells[0].n, 2);
        assert_eq!(report.cells[0].dropped_undefined, 1);
    }

    #[test]
    fn direction_is_to_minus_from() {
        let mut records = Vec::new();
        for i in 0..10 {
            let jitter = (i as f64 * 0.37).sin();
            records.push(rec("a", EnvLabel::Quiet, Some(-30.0 + jitter)));
            records.push(rec("a", EnvLabel::Noisy, Some(-24.0 + jitter)));
        }
        let report = env_effect_report(&records, &rms_only()).unwrap();
        let c = report.comparison("a", Feature::Rms, EnvLabel::Quiet, EnvLabel::Noisy).unwrap();
        assert!(c.test.statistic > 0.0 && c.test.significant);
        assert!((c.difference - 6.0).abs() < 1e-9);
    }

    #[test]
    fn identity_coupling_gives_unit_correlation() {
        let records: Vec<TurnRecord> = (0..12)
            .map(|i| {
                let f = UtteranceFeatures {
                    rms_db: Some(-30.0 + (i as f64).sqrt()),
                    f0_mean_hz: Some(100.0 + 7.0 * i as f64),
                    ..Default::default()
                };
                TurnRecord {
                    speakers: ("a".into(), "b".into()),
                    label: EnvLabel::ALL[i % 3],
                    target: f,
                    previous: f,
                }
            })
            .collect();
        let report = entrainment_report(&records, &[Feature::Rms, Feature::F0], 0.05).unwrap();
        assert_eq!(report.rows.len(), 6);
        for row in &report.rows {
            assert_eq!(row.result.unwrap().r, 1.0);
        }
    }

    #[test]
    fn small_groups_are_undefined() {
        let f = UtteranceFeatures {
            rms_db: Some(-20.0),
            ..Default::default()
        };
        let records = vec![
            TurnRecord {
                speakers: ("a".into(), "b".into()),
                label: EnvLabel::Quiet,
                target: f,
                previous: f,
            };
            2
        ];
        let report = entrainment_report(&records, &[Feature::Rms], 0.05).unwrap();
        assert_eq!(report.rows[0].result, None);
        assert!(!report.notes.is_empty());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut records = Vec::new();
        for i in 0..4 {
            records.push(rec("a", EnvLabel::Quiet, Some(i as f64)));
            records.push(rec("a", EnvLabel::Moderate, Some(2.0 * i as f64)));
        }
        let report = env_effect_report(&records, &rms_only()).unwrap();
        let mut buf = Vec::new();
        write_comparisons_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("speaker,feature,from,to,"));
        assert!(lines[1].starts_with("a,rms,quiet,moderate,4,4,"));
        let mut buf = Vec::new();
        write_cells_csv(&report, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("speaker,feature,label,n,mean,std,dropped_undefined\n"));
    }
}
