//! Robustness metrics computed from prediction and score files.
//!
//! Corruption error normalizes a model's summed error over five severities
//! by a reference model's summed error; mCE averages it over corruptions.
//! OOD metrics use the max-softmax score: AUROC is the rank statistic with
//! ties worth one half; CCR and FPR are evaluated at a confidence threshold
//! and OSCR is the area under the CCR-vs-FPR curve swept over all thresholds.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};

pub const SEVERITIES: usize = 5;
/// Tolerance on a probability vector's sum.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

pub fn corruption_error(errors: &[f64], reference: &[f64]) -> Result<f64> {
    if errors.len() != SEVERITIES || reference.len() != SEVERITIES {
        return Err(Error::dim(format!(
            "need {SEVERITIES} severities, got {} and {}",
            errors.len(),
            reference.len()
        )));
    }
    let denom: f64 = reference.iter().sum();
    if denom == 0.0 {
        return Err(Error::domain("reference errors sum to zero"));
    }
    Ok(errors.iter().sum::<f64>() / denom)
}

pub fn mean_corruption_error(ce_values: &[f64]) -> Result<f64> {
    if ce_values.is_empty() {
        return Err(Error::invalid("no corruption errors to average"));
    }
    Ok(ce_values.iter().sum::<f64>() / ce_values.len() as f64)
}

/// Per-corruption error rates, five severities each, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionTable {
    pub rows: Vec<(String, [f64; SEVERITIES])>,
}

impl CorruptionTable {
    /// CSV with header `corruption,s1,s2,s3,s4,s5`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse("corruption table", e))?;
            if rec.len() != SEVERITIES + 1 {
                return Err(Error::parse(
                    "corruption table",
                    format!("expected {} columns, got {}", SEVERITIES + 1, rec.len()),
                ));
            }
            let mut errs = [0.0; SEVERITIES];
            for (k, e) in errs.iter_mut().enumerate() {
                *e = rec[k + 1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse("corruption table", e))?;
                if !(0.0..=1.0).contains(e) {
                    return Err(Error::domain(format!(
                        "error rate {e} for {} outside [0, 1]",
                        &rec[0]
                    )));
                }
            }
            rows.push((rec[0].trim().to_string(), errs));
        }
        Ok(Self { rows })
    }

    /// CE per corruption, matched by name against `reference`.
    pub fn corruption_errors(&self, reference: &CorruptionTable) -> Result<Vec<(String, f64)>> {
        let lookup: HashMap<&str, &[f64; SEVERITIES]> = reference
            .rows
            .iter()
            .map(|(n, e)| (n.as_str(), e))
            .collect();
        self.rows
            .iter()
            .map(|(name, errs)| {
                let r = lookup.get(name.as_str()).ok_or_else(|| {
                    Error::invalid(format!("reference table has no '{name}' row"))
                })?;
                Ok((name.clone(), corruption_error(errs, *r)?))
            })
            .collect()
    }
}

/// `P(in > out) + 0.5 P(in == out)` over all cross pairs.
pub fn auroc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(Error::invalid("AUROC needs scores on both sides"));
    }
    if in_scores.iter().chain(out_scores).any(|s| s.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    // Mann-Whitney U via mid-ranks.
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, true))
        .chain(out_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_in = 0.0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        while end + 1 < all.len() && all[end + 1].0 == all[k].0 {
            end += 1;
        }
        let mid_rank = (k + end) as f64 / 2.0 + 1.0;
        rank_sum_in += mid_rank * all[k..=end].iter().filter(|x| x.1).count() as f64;
        k = end + 1;
    }
    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    let u = rank_sum_in - n_in * (n_in + 1.0) / 2.0;
    Ok(u / (n_in * n_out))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Probabilities(Vec<f64>),
    Top { label: u32, score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub id: String,
    /// `None` for out-of-distribution samples.
    pub true_label: Option<u32>,
    pub prediction: Prediction,
}

impl ScoredRecord {
    pub fn top(id: impl Into<String>, true_label: Option<u32>, label: u32, score: f64) -> Self {
        Self {
            id: id.into(),
            true_label,
            prediction: Prediction::Top { label, score },
        }
    }

    pub fn with_probabilities(
        id: impl Into<String>,
        true_label: Option<u32>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        validate_probabilities(&probs)?;
        Ok(Self {
            id: id.into(),
            true_label,
            prediction: Prediction::Probabilities(probs),
        })
    }

    pub fn is_ood(&self) -> bool {
        self.true_label.is_none()
    }

    /// Arg-max class; the first index wins ties.
    pub fn predicted_label(&self) -> u32 {
        match &self.prediction {
            Prediction::Top { label, .. } => *label,
            Prediction::Probabilities(p) => {
                p.iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0 as u32
            }
        }
    }

    /// Max class probability.
    pub fn score(&self) -> f64 {
        match &self.prediction {
            Prediction::Top { score, .. } => *score,
            Prediction::Probabilities(p) => p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.true_label == Some(self.predicted_label())
    }
}

pub fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::domain("negative or NaN probability"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::domain(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

fn split_populations(records: &[ScoredRecord]) -> Result<(Vec<&ScoredRecord>, Vec<&ScoredRecord>)> {
    let (ood, id): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.is_ood());
    if id.is_empty() || ood.is_empty() {
        return Err(Error::invalid(
            "need at least one in-distribution and one OOD record",
        ));
    }
    Ok((id, ood))
}

/// `(CCR, FPR)` at threshold `delta`; a record passes when its score `>= delta`.
pub fn ccr_fpr_at(records: &[ScoredRecord], delta: f64) -> Result<(f64, f64)> {
    let (id, ood) = split_populations(records)?;
    let correct = id
        .iter()
        .filter(|r| r.is_correct() && r.score() >= delta)
        .count();
    let false_pos = ood.iter().filter(|r| r.score() >= delta).count();
    Ok((
        correct as f64 / id.len() as f64,
        false_pos as f64 / ood.len() as f64,
    ))
}

/// Area under CCR vs FPR, trapezoidal, over thresholds at every distinct
/// score plus sentinels above the max (FPR 0) and below the min (FPR 1).
pub fn oscr(records: &[ScoredRecord]) -> Result<f64> {
    let (id, ood) = split_populations(records)?;
    // (score, counts-as-correct, is-ood), descending score.
    let mut events: Vec<(f64, bool, bool)> = id
        .iter()
        .map(|r| (r.score(), r.is_correct(), false))
        .chain(ood.iter().map(|r| (r.score(), false, true)))
        .collect();
    if events.iter().any(|e| e.0.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Integer trapezoid numerator: sum of dFP * (CC_prev + CC_next).
    let (mut cc, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    let mut k = 0;
    while k < events.len() {
        let (prev_cc, prev_fp) = (cc, fp);
        let s = events[k].0;
        while k < events.len() && events[k].0 == s {
            cc += u64::from(events[k].1);
            fp += u64::from(events[k].2);
            k += 1;
        }
        area2 += u128::from(fp - prev_fp) * u128::from(cc + prev_cc);
    }
    Ok(area2 as f64 / (2.0 * id.len() as f64 * ood.len() as f64))
}

/// `lambda * p_phase + (1 - lambda) * p_amp`.
pub fn blend_predictions(p_phase: &[f64], p_amp: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if p_phase.len() != p_amp.len() {
        return Err(Error::dim(format!(
            "probability vectors of length {} and {}",
            p_phase.len(),
            p_amp.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda {lambda} outside [0, 1]")));
    }
    validate_probabilities(p_phase)?;
    validate_probabilities(p_amp)?;
    Ok(p_phase
        .iter()
        .zip(p_amp)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect())
}

/// Read a score CSV in either layout:
/// `id,is_ood,true_label,p0,p1,...` or `id,is_ood,true_label,pred_label,score`.
/// OOD rows may leave `true_label` empty or set it to `-1`.
pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoredRecord>> {
    let ctx = "score csv";
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| Error::parse(ctx, e))?.clone();
    if header.len() < 4 {
        return Err(Error::parse(
            ctx,
            "need id, is_ood, true_label and predictions",
        ));
    }
    let top_layout = header.len() == 5 && &header[3] == "pred_label" && &header[4] == "score";
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(ctx, e))?;
        let at = |k: usize| rec.get(k).unwrap_or("").trim();
        let row = line + 2;
        let is_ood = match at(1) {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(ctx, format!("row {row}: is_ood '{other}'"))),
        };
        let true_label = if is_ood {
            None
        } else {
            Some(
                at(2)
                    .parse::<u32>()
                    .map_err(|e| Error::parse(ctx, format!("row {row}: {e}")))?,
            )
        };
        let num = |k: usize| -> Result<f64> {
            at(k)
                .parse::<f64>()
                .map_err(|e| Error::parse(ctx, format!("row {row}: {e}")))
        };
        let record = if top_layout {
            let label = at(3)
                .parse::<u32>()
                .map_err(|e| Error::parse(ctx, format!("row {row}: {e}")))?;
            ScoredRecord::top(at(0), true_label, label, num(4)?)
        } else {
            let probs = (3..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
            ScoredRecord::with_probabilities(at(0), true_label, probs)?
        };
        out.push(record);
    }
    Ok(out)
}

/// Write probability-vector records as `id,is_ood,true_label,p0,...`.
pub fn write_prob_scores<W: std::io::Write>(records: &[ScoredRecord], out: W) -> Result<()> {
    let ctx = "score csv";
    let width = records
        .iter()
        .map(|r| match &r.prediction {
            Prediction::Probabilities(p) => Ok(p.len()),
            Prediction::Top { .. } => Err(Error::invalid("record has no probability vector")),
        })
        .try_fold(0, |m, n| n.map(|n| m.max(n)))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "is_ood".into(), "true_label".into()];
    header.extend((0..width).map(|k| format!("p{k}")));
    w.write_record(&header).map_err(|e| Error::parse(ctx, e))?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            if r.is_ood() { "1" } else { "0" }.to_string(),
            r.true_label
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-1".into()),
        ];
        if let Prediction::Probabilities(p) = &r.prediction {
            row.extend(p.iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(|e| Error::parse(ctx, e))?;
    }
    w.flush().map_err(|e| Error::parse(ctx, e))
}
