//! Automatic curation of raw labeled examples: match predicted labels
//! against catalog candidates by text similarity, check call-number
//! ordering, and accept or reject each example.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::callnum::parse_call_number;
use crate::catalog::{BookRecord, Catalog};
use crate::gestalt::gestalt_similarity;
use crate::recognizer::LabelEntry;
use crate::scanner::{RawDataset, RawExample};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    /// Minimum mean match score against the candidate set.
    pub theta_sim: f64,
    /// Minimum fraction of adjacent label pairs in catalog order.
    pub theta_ord: f64,
    /// Replace accepted labels with their matched catalog entries.
    pub snap_to_catalog: bool,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            theta_sim: 0.8,
            theta_ord: 0.9,
            snap_to_catalog: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("invalid curation config: {0}")]
    InvalidConfig(String),
    #[error("empty candidate set for section {0:?}")]
    EmptyCandidates(String),
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        for (name, v) in [("theta_sim", self.theta_sim), ("theta_ord", self.theta_ord)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CurationError::InvalidConfig(format!(
                    "{name} must be in [0,1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowMatch,
    OrderViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurationOutcome {
    /// Labels (snapped if configured), match score, order score.
    Accepted {
        labels: Vec<LabelEntry>,
        match_score: f64,
        ord_score: f64,
    },
    Rejected {
        reason: RejectReason,
        match_score: f64,
        ord_score: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub raw: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub acceptance_ratio: f64,
    pub rejections: BTreeMap<String, usize>,
}

/// Best catalog candidate for one predicted label: mean of title and
/// call-number gestalt similarity, ties to the lowest index.
pub fn best_match(label: &LabelEntry, candidates: &[BookRecord]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, cand) in candidates.iter().enumerate() {
        let s_title = gestalt_similarity(&label.title, &cand.title);
        let s_call = gestalt_similarity(&label.call_number, &cand.call_number.to_string());
        let s = 0.5 * (s_title + s_call);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Fraction of adjacent label pairs that are non-decreasing in call-number
/// order; unparseable labels count as violations with their neighbors.
/// Sequences of length < 2 are trivially consistent.
pub fn order_consistency(labels: &[LabelEntry]) -> f64 {
    if labels.len() < 2 {
        return 1.0;
    }
    let parsed: Vec<_> = labels
        .iter()
        .map(|l| parse_call_number(&l.call_number).ok())
        .collect();
    let mut ok = 0usize;
    for pair in parsed.windows(2) {
        if let (Some(a), Some(b)) = (&pair[0], &pair[1]) {
            if a <= b {
                ok += 1;
            }
        }
    }
    ok as f64 / (labels.len() - 1) as f64
}

/// Accept or reject one raw example against its section's candidate set.
pub fn curate_example(
    example: &RawExample,
    candidates: &[BookRecord],
    cfg: &CurationConfig,
) -> Result<CurationOutcome, CurationError> {
    if candidates.is_empty() {
        return Err(CurationError::EmptyCandidates(String::new()));
    }
    let labels = &example.predicted;
    let ord_score = order_consistency(labels);
    let (match_score, snapped) = if labels.is_empty() {
        // nothing predicted on a populated shelf is a mismatch; on an empty
        // shelf it is vacuously correct
        if example.observation.visible.is_empty() {
            (1.0, Vec::new())
        } else {
            (0.0, Vec::new())
        }
    } else {
        let mut total = 0.0;
        let mut snapped = Vec::with_capacity(labels.len());
        for label in labels {
            let (idx, score) = best_match(label, candidates);
            total += score;
            let cand = &candidates[idx];
            snapped.push(LabelEntry {
                title: cand.title.clone(),
                call_number: cand.call_number.to_string(),
            });
        }
        (total / labels.len() as f64, snapped)
    };

    if match_score < cfg.theta_sim {
        return Ok(CurationOutcome::Rejected {
            reason: RejectReason::LowMatch,
            match_score,
            ord_score,
        });
    }
    if ord_score < cfg.theta_ord {
        return Ok(CurationOutcome::Rejected {
            reason: RejectReason::OrderViolation,
            match_score,
            ord_score,
        });
    }
    let labels = if cfg.snap_to_catalog {
        snapped
    } else {
        labels.clone()
    };
    Ok(CurationOutcome::Accepted {
        labels,
        match_score,
        ord_score,
    })
}

/// Curated dataset: accepted examples (labels possibly snapped) plus the
/// rejected sidecar and counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CuratedDataset {
    pub accepted: Vec<RawExample>,
    pub rejected: Vec<(RawExample, RejectReason)>,
    pub report: CurationReport,
}

/// Curate a whole raw dataset; candidate sets come from each window's
/// section.
pub fn curate_dataset(
    raw: &RawDataset,
    catalog: &Catalog,
    sections: &BTreeMap<(usize, usize, usize, u64), String>,
    cfg: &CurationConfig,
) -> Result<CuratedDataset, CurationError> {
    cfg.validate()?;
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
    for ex in raw {
        let section = sections
            .get(&ex.observation.window.key())
            .cloned()
            .or_else(|| catalog.sections.first().map(|s| s.id.clone()))
            .unwrap_or_default();
        let candidates = catalog
            .candidate_set(&section)
            .map_err(|_| CurationError::EmptyCandidates(section.clone()))?;
        match curate_example(ex, candidates, cfg)? {
            CurationOutcome::Accepted { labels, .. } => {
                let mut ex = ex.clone();
                ex.predicted = labels;
                accepted.push(ex);
            }
            CurationOutcome::Rejected { reason, .. } => {
                let key = match reason {
                    RejectReason::LowMatch => "low_match",
                    RejectReason::OrderViolation => "order_violation",
                };
                *rejections.entry(key.to_string()).or_default() += 1;
                rejected.push((ex.clone(), reason));
            }
        }
    }
    let report = CurationReport {
        raw: raw.len(),
        accepted: accepted.len(),
        rejected: rejected.len(),
        acceptance_ratio: if raw.is_empty() {
            0.0
        } else {
            accepted.len() as f64 / raw.len() as f64
        },
        rejections,
    };
    Ok(CuratedDataset {
        accepted,
        rejected,
        report,
    })
}
