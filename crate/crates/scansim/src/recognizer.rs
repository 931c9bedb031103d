//! Recognizer surrogate: a saturating learning curve per task plus a seeded
//! error model standing in for a fine-tuned VLM. Skill is fully summarized
//! by the number of curated examples the model was tuned on.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::BookRecord;
use crate::gestalt::gestalt_similarity;
use crate::scanner::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Shelf,
    OcrEn,
    OcrZh,
}

/// Saturating accuracy curve `r(n) = cap - (cap - a0) * exp(-n / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub a0: f64,
    pub cap: f64,
    pub tau: f64,
}

impl Curve {
    pub fn at(&self, n: usize) -> f64 {
        self.cap - (self.cap - self.a0) * (-(n as f64) / self.tau).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskCurves {
    pub shelf: Curve,
    pub ocr_en: Curve,
    pub ocr_zh: Curve,
}

impl Default for TaskCurves {
    fn default() -> Self {
        TaskCurves {
            shelf: Curve { a0: 0.324, cap: 0.718, tau: 450.0 },
            ocr_en: Curve { a0: 0.248, cap: 0.466, tau: 450.0 },
            ocr_zh: Curve { a0: 0.308, cap: 0.380, tau: 450.0 },
        }
    }
}

impl TaskCurves {
    pub fn get(&self, task: Task) -> &Curve {
        match task {
            Task::Shelf => &self.shelf,
            Task::OcrEn => &self.ocr_en,
            Task::OcrZh => &self.ocr_zh,
        }
    }
}

/// Reference mean degradations; per-book accuracy at `d == d_ref` equals the
/// curve value, so evaluation on a set with that mean recovers `r(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationRefs {
    pub shelf: f64,
    pub ocr_en: f64,
    pub ocr_zh: f64,
}

impl Default for DegradationRefs {
    fn default() -> Self {
        DegradationRefs { shelf: 0.3, ocr_en: 0.3, ocr_zh: 0.3 }
    }
}

impl DegradationRefs {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Shelf => self.shelf,
            Task::OcrEn => self.ocr_en,
            Task::OcrZh => self.ocr_zh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Degradation weight in the per-book success probability.
    pub w: f64,
    /// Error-mode mixture; must sum to 1.
    pub q_sub: f64,
    pub q_omit: f64,
    pub q_hall: f64,
    /// Fraction of characters replaced in a hallucinated label.
    pub edit_rate: f64,
    pub d_ref: DegradationRefs,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            w: 0.5,
            q_sub: 0.6,
            q_omit: 0.2,
            q_hall: 0.2,
            edit_rate: 0.3,
            d_ref: DegradationRefs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecognizerModel {
    /// Count of curated examples this model was tuned on.
    pub n_examples: usize,
    pub curves: TaskCurves,
    pub noise: NoiseParams,
    pub seed: u64,
}

impl Default for RecognizerModel {
    fn default() -> Self {
        RecognizerModel {
            n_examples: 0,
            curves: TaskCurves::default(),
            noise: NoiseParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RecognizerError {
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("empty eval set")]
    EmptySet,
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub title: String,
    pub call_number: String,
}

/// Ordered left-to-right labels for one image.
pub type LabelSequence = Vec<LabelEntry>;

impl RecognizerModel {
    pub fn validate(&self) -> Result<(), RecognizerError> {
        for (name, c) in [
            ("shelf", self.curves.shelf),
            ("ocr_en", self.curves.ocr_en),
            ("ocr_zh", self.curves.ocr_zh),
        ] {
            if !(0.0 <= c.a0 && c.a0 <= c.cap && c.cap <= 1.0) {
                return Err(RecognizerError::InvalidModel(format!(
                    "{name}: need 0 <= a0 <= cap <= 1"
                )));
            }
            if c.tau <= 0.0 {
                return Err(RecognizerError::InvalidModel(format!("{name}: tau <= 0")));
            }
        }
        let q = self.noise.q_sub + self.noise.q_omit + self.noise.q_hall;
        if (q - 1.0).abs() > 1e-9 {
            return Err(RecognizerError::InvalidModel(
                "q_sub + q_omit + q_hall must equal 1".into(),
            ));
        }
        Ok(())
    }
}

/// Accuracy of the surrogate on `task` after `n` curated examples.
pub fn accuracy_curve(model: &RecognizerModel, task: Task, n: usize) -> f64 {
    model.curves.get(task).at(n)
}

/// Fine-tune from the base curves on a dataset of the given size. Algorithm
/// state is `(curves, n)`, so this is idempotent for equal sizes.
pub fn finetune(base: &RecognizerModel, dataset_size: usize) -> RecognizerModel {
    RecognizerModel {
        n_examples: dataset_size,
        ..base.clone()
    }
}

const MUTATION_POOL: &[char] = &[
    'A', 'B', 'C', 'D', 'E', 'K', 'M', 'Q', 'X', 'Z', '0', '1', '3', '5', '7', '9',
    '中', '文', '史', '学', '研', '書', '漢', '한',
];

fn mutate_text(text: &str, edit_rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return "~".to_string();
    }
    let n_edits = ((edit_rate * chars.len() as f64).ceil() as usize).max(1);
    let mut positions: Vec<usize> = (0..chars.len()).collect();
    positions.shuffle(rng);
    for &pos in positions.iter().take(n_edits.min(chars.len())) {
        loop {
            let c = MUTATION_POOL[rng.random_range(0..MUTATION_POOL.len())];
            if c != chars[pos] {
                chars[pos] = c;
                break;
            }
        }
    }
    chars.into_iter().collect()
}

/// Predict ordered book labels for an observation given a candidate set.
/// Deterministic per seed.
pub fn predict_labels(
    model: &RecognizerModel,
    obs: &Observation,
    candidates: &[BookRecord],
    seed: u64,
) -> Result<LabelSequence, RecognizerError> {
    if candidates.is_empty() {
        return Err(RecognizerError::EmptyCandidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E10_60F1);
    let r = accuracy_curve(model, Task::Shelf, model.n_examples);
    let noise = &model.noise;
    let mut out = Vec::new();
    for book in &obs.visible {
        let p = (r + noise.w * (noise.d_ref.shelf - book.effective_degradation)).clamp(0.0, 1.0);
        if rng.random_bool(p) {
            out.push(LabelEntry {
                title: book.title.clone(),
                call_number: book.call_number_text.clone(),
            });
            continue;
        }
        let mode: f64 = rng.random();
        if mode < noise.q_sub {
            // substitution: non-true candidate with the highest title
            // similarity to the truth
            let mut best: Option<(f64, &BookRecord)> = None;
            for cand in candidates {
                if cand.book_id == book.book_id {
                    continue;
                }
                let s = gestalt_similarity(&book.title, &cand.title);
                if best.map_or(true, |(bs, _)| s > bs) {
                    best = Some((s, cand));
                }
            }
            if let Some((_, cand)) = best {
                out.push(LabelEntry {
                    title: cand.title.clone(),
                    call_number: cand.call_number.to_string(),
                });
                continue;
            }
            // the only candidate is the true book; fall through to
            // hallucination
        } else if mode < noise.q_sub + noise.q_omit {
            continue;
        }
        // hallucination: corrupted truth, guaranteed not a candidate
        let mut entry;
        let mut attempts = 0;
        loop {
            entry = LabelEntry {
                title: mutate_text(&book.title, noise.edit_rate, &mut rng),
                call_number: mutate_text(&book.call_number_text, noise.edit_rate, &mut rng),
            };
            let member = candidates.iter().any(|c| {
                c.title == entry.title && c.call_number.to_string() == entry.call_number
            });
            if !member {
                break;
            }
            attempts += 1;
            if attempts > 8 {
                entry.title.push('~');
                break;
            }
        }
        out.push(entry);
    }
    Ok(out)
}

/// Number of positions matched by the longest common subsequence over exact
/// call-number equality.
pub fn lcs_call_number_matches(pred: &LabelSequence, truth: &LabelSequence) -> usize {
    let n = pred.len();
    let m = truth.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in 0..n {
        for j in 0..m {
            dp[i + 1][j + 1] = if pred[i].call_number == truth[j].call_number {
                dp[i][j] + 1
            } else {
                dp[i][j + 1].max(dp[i + 1][j])
            };
        }
    }
    dp[n][m]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShelfEvalItem {
    pub observation: Observation,
    pub ground_truth: LabelSequence,
    pub candidates: Vec<BookRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcrEvalItem {
    pub text: String,
    pub degradation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum EvalSet {
    Shelf { items: Vec<ShelfEvalItem> },
    OcrEn { items: Vec<OcrEvalItem> },
    OcrZh { items: Vec<OcrEvalItem> },
}

impl EvalSet {
    pub fn task(&self) -> Task {
        match self {
            EvalSet::Shelf { .. } => Task::Shelf,
            EvalSet::OcrEn { .. } => Task::OcrEn,
            EvalSet::OcrZh { .. } => Task::OcrZh,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EvalSet::Shelf { items } => items.len(),
            EvalSet::OcrEn { items } | EvalSet::OcrZh { items } => items.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Monte-Carlo evaluation: mean accuracy over items, averaged over trials,
/// with the standard error of the trial means.
pub fn evaluate(
    model: &RecognizerModel,
    eval_set: &EvalSet,
    seed: u64,
    trials: usize,
) -> Result<EvalResult, RecognizerError> {
    if eval_set.is_empty() || trials == 0 {
        return Err(RecognizerError::EmptySet);
    }
    let mut trial_means = Vec::with_capacity(trials);
    for t in 0..trials {
        let trial_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(t as u64);
        let mean = match eval_set {
            EvalSet::Shelf { items } => {
                let mut accs = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    if item.ground_truth.is_empty() {
                        continue;
                    }
                    let pred = predict_labels(
                        model,
                        &item.observation,
                        &item.candidates,
                        trial_seed.wrapping_add((i as u64) << 20),
                    )?;
                    let matched = lcs_call_number_matches(&pred, &item.ground_truth);
                    accs.push(matched as f64 / item.ground_truth.len() as f64);
                }
                if accs.is_empty() {
                    return Err(RecognizerError::EmptySet);
                }
                accs.iter().sum::<f64>() / accs.len() as f64
            }
            EvalSet::OcrEn { items } | EvalSet::OcrZh { items } => {
                let task = eval_set.task();
                let r = accuracy_curve(model, task, model.n_examples);
                let d_ref = model.noise.d_ref.get(task);
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                let hits = items
                    .iter()
                    .filter(|item| {
                        let p = (r + model.noise.w * (d_ref - item.degradation)).clamp(0.0, 1.0);
                        rng.random_bool(p)
                    })
                    .count();
                hits as f64 / items.len() as f64
            }
        };
        trial_means.push(mean);
    }
    let mean = trial_means.iter().sum::<f64>() / trials as f64;
    let var = trial_means
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / trials as f64;
    let stderr = (var / trials as f64).sqrt();
    Ok(EvalResult {
        mean,
        stderr,
        trials,
    })
}
