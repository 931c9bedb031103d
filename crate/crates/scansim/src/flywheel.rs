//! Data-flywheel orchestration: deploy, curate, aggregate, fine-tune,
//! evaluate; plus metrics accounting and report serialization.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{curate_dataset, CurationConfig, CurationError};
use crate::recognizer::{
    evaluate, finetune, EvalResult, EvalSet, OcrEvalItem, RecognizerError, RecognizerModel,
    ShelfEvalItem,
};
use crate::scanner::{
    capture, run_deployment, DeploymentConfig, DeploymentLog, Observation, Pose, RawDataset,
    RawExample, ScannerError,
};
use crate::catalog::Language;
use crate::world::ShelfWorld;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlywheelConfig {
    pub iterations: usize,
    /// Librarian time replaced per scanned shelf, seconds.
    pub manual_seconds_per_shelf: f64,
    /// Monte-Carlo trials per evaluation.
    pub eval_trials: usize,
}

impl Default for FlywheelConfig {
    fn default() -> Self {
        FlywheelConfig {
            iterations: 2,
            manual_seconds_per_shelf: 32.0,
            eval_trials: 32,
        }
    }
}

#[derive(Debug, Error)]
pub enum FlywheelError {
    #[error("invalid flywheel config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scanner(#[from] ScannerError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl FlywheelConfig {
    pub fn validate(&self) -> Result<(), FlywheelError> {
        if self.iterations < 1 {
            return Err(FlywheelError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.eval_trials < 1 {
            return Err(FlywheelError::InvalidConfig("eval_trials must be >= 1".into()));
        }
        if !(self.manual_seconds_per_shelf >= 0.0) {
            return Err(FlywheelError::InvalidConfig(
                "manual_seconds_per_shelf must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAccuracies {
    pub shelf: Option<EvalResult>,
    pub ocr_en: Option<EvalResult>,
    pub ocr_zh: Option<EvalResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub t: usize,
    pub images_raw: usize,
    pub images_accepted: usize,
    pub dataset_size: usize,
    pub shelves_scanned_cum: usize,
    pub interventions: usize,
    pub eval: EvalAccuracies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub shelves: usize,
    pub images: usize,
    pub interventions: usize,
    pub hours_saved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlywheelReport {
    pub rows: Vec<IterationRow>,
    pub totals: Totals,
    pub manual_seconds_per_shelf: f64,
}

/// Mutable loop state; `dataset` is the accumulated curated pool.
#[derive(Debug, Clone)]
pub struct FlywheelState {
    pub t: usize,
    pub dataset: Vec<RawExample>,
    pub model: RecognizerModel,
    pub logs: Vec<DeploymentLog>,
}

fn example_key(ex: &RawExample) -> ((usize, usize, usize, u64), u64) {
    (ex.observation.window.key(), ex.observation.timestamp_s.to_bits())
}

/// Keyed union: previous examples, then new ones whose (window, timestamp)
/// key is unseen. Input order preserved.
pub fn aggregate(prev: &[RawExample], new: &[RawExample]) -> Vec<RawExample> {
    let mut seen: BTreeSet<_> = prev.iter().map(example_key).collect();
    let mut out = prev.to_vec();
    for ex in new {
        if seen.insert(example_key(ex)) {
            out.push(ex.clone());
        }
    }
    out
}

/// Sum deployment logs into report totals; labor saved is a flat per-shelf
/// librarian rate.
pub fn compute_metrics(logs: &[DeploymentLog], manual_seconds_per_shelf: f64) -> Totals {
    let shelves: usize = logs.iter().map(|l| l.shelves_scanned).sum();
    Totals {
        shelves,
        images: logs.iter().map(|l| l.images_captured).sum(),
        interventions: logs.iter().map(|l| l.interventions.len()).sum(),
        hours_saved: shelves as f64 * manual_seconds_per_shelf / 3600.0,
    }
}

/// Held-out evaluation sets built from the world's reserved shelves:
/// one shelf-reading set over the held-out windows and one OCR set per
/// language drawn from the books on those shelves.
pub struct EvalSets {
    pub shelf: Option<EvalSet>,
    pub ocr_en: Option<EvalSet>,
    pub ocr_zh: Option<EvalSet>,
    /// Mean label degradation of each set, for noise-reference calibration.
    pub mean_degradation: crate::recognizer::DegradationRefs,
}

pub fn build_eval_sets(world: &ShelfWorld) -> Result<EvalSets, FlywheelError> {
    let quiet = DeploymentConfig {
        c_blur: 0.0,
        c_skew: 0.0,
        ..DeploymentConfig::default()
    };
    let mut shelf_items = Vec::new();
    let mut degradations = Vec::new();
    for window in world.held_out_windows() {
        let obs: Observation = capture(world, &window, &Pose::default(), &quiet, 0.0)?;
        if obs.visible.is_empty() {
            continue;
        }
        let section = world.section_for_window(&window).unwrap_or_default().to_string();
        let candidates = world
            .catalog
            .candidate_set(&section)
            .map(<[_]>::to_vec)
            .unwrap_or_default();
        if candidates.is_empty() {
            continue;
        }
        let ground_truth = obs
            .visible
            .iter()
            .map(|v| crate::recognizer::LabelEntry {
                title: v.title.clone(),
                call_number: v.call_number_text.clone(),
            })
            .collect();
        degradations.extend(obs.visible.iter().map(|v| v.effective_degradation));
        shelf_items.push(ShelfEvalItem {
            observation: obs,
            ground_truth,
            candidates,
        });
    }

    let mut ocr_en_items = Vec::new();
    let mut ocr_zh_items = Vec::new();
    for inst in &world.instances {
        if !world.held_out.contains(&inst.slot.shelf()) {
            continue;
        }
        let Some(rec) = world.catalog.lookup(&inst.book_id) else {
            continue;
        };
        let item = OcrEvalItem {
            text: rec.title.clone(),
            degradation: inst.degradation,
        };
        match rec.language {
            Language::En => ocr_en_items.push(item),
            Language::Zh => ocr_zh_items.push(item),
            _ => {}
        }
    }

    let mean = |items: &[OcrEvalItem]| -> f64 {
        if items.is_empty() {
            crate::recognizer::DegradationRefs::default().ocr_en
        } else {
            items.iter().map(|i| i.degradation).sum::<f64>() / items.len() as f64
        }
    };
    let mean_degradation = crate::recognizer::DegradationRefs {
        shelf: if degradations.is_empty() {
            crate::recognizer::DegradationRefs::default().shelf
        } else {
            degradations.iter().sum::<f64>() / degradations.len() as f64
        },
        ocr_en: mean(&ocr_en_items),
        ocr_zh: mean(&ocr_zh_items),
    };

    Ok(EvalSets {
        shelf: (!shelf_items.is_empty()).then_some(EvalSet::Shelf { items: shelf_items }),
        ocr_en: (!ocr_en_items.is_empty()).then_some(EvalSet::OcrEn { items: ocr_en_items }),
        ocr_zh: (!ocr_zh_items.is_empty()).then_some(EvalSet::OcrZh { items: ocr_zh_items }),
        mean_degradation,
    })
}

/// Run the full loop: for each iteration, deploy the current model, curate
/// the raw data, fold it into the accumulated pool, fine-tune from the base
/// model on the pool, and evaluate on the held-out sets.
pub fn run_flywheel(
    world: &ShelfWorld,
    base: &RecognizerModel,
    deployment: &DeploymentConfig,
    curation: &CurationConfig,
    cfg: &FlywheelConfig,
    seed: u64,
) -> Result<(FlywheelReport, FlywheelState), FlywheelError> {
    run_flywheel_with(world, base, deployment, curation, cfg, seed, |_, _, _| Ok(()))
}

/// [`run_flywheel`] with a per-iteration observer (e.g. to persist raw and
/// curated datasets); an observer error aborts the loop.
pub fn run_flywheel_with(
    world: &ShelfWorld,
    base: &RecognizerModel,
    deployment: &DeploymentConfig,
    curation: &CurationConfig,
    cfg: &FlywheelConfig,
    seed: u64,
    mut observer: impl FnMut(usize, &RawDataset, &crate::curation::CuratedDataset) -> Result<(), FlywheelError>,
) -> Result<(FlywheelReport, FlywheelState), FlywheelError> {
    cfg.validate()?;
    deployment.validate()?;
    curation.validate()?;
    base.validate()?;

    let eval_sets = build_eval_sets(world)?;
    // pin the noise reference to the eval population so measured accuracy is
    // an unbiased estimate of the curve
    let mut base = base.clone();
    base.noise.d_ref = eval_sets.mean_degradation;

    let held_keys: BTreeSet<_> = world
        .held_out_windows()
        .iter()
        .map(|w| w.key())
        .collect();
    let sections: std::collections::BTreeMap<_, _> = world
        .enumerate_windows()
        .iter()
        .filter_map(|w| {
            world
                .section_for_window(w)
                .map(|s| (w.key(), s.to_string()))
        })
        .collect();

    let mut state = FlywheelState {
        t: 0,
        dataset: Vec::new(),
        model: finetune(&base, 0),
        logs: Vec::new(),
    };
    let mut rows = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let seed_t = seed ^ (t as u64).wrapping_mul(0xA24B_AED4_963E_E407);
        let start_s = (t - 1) as f64 * deployment.horizon_s;
        let (raw, log): (RawDataset, DeploymentLog) =
            run_deployment(world, &state.model, deployment, seed_t, start_s)?;

        for ex in &raw {
            debug_assert!(!held_keys.contains(&ex.observation.window.key()));
        }
        let curated = curate_dataset(&raw, &world.catalog, &sections, curation)?;
        observer(t, &raw, &curated)?;
        state.dataset = aggregate(&state.dataset, &curated.accepted);
        state.model = finetune(&base, state.dataset.len());
        state.t = t;

        let eval_one = |set: &Option<EvalSet>, salt: u64| -> Result<Option<EvalResult>, FlywheelError> {
            set.as_ref()
                .map(|s| evaluate(&state.model, s, seed ^ salt ^ t as u64, cfg.eval_trials))
                .transpose()
                .map_err(FlywheelError::from)
        };
        let eval = EvalAccuracies {
            shelf: eval_one(&eval_sets.shelf, 0x5E1F)?,
            ocr_en: eval_one(&eval_sets.ocr_en, 0x0C4E)?,
            ocr_zh: eval_one(&eval_sets.ocr_zh, 0x0C42)?,
        };

        let shelves_cum: usize = state
            .logs
            .iter()
            .map(|l| l.shelves_scanned)
            .sum::<usize>()
            + log.shelves_scanned;
        rows.push(IterationRow {
            t,
            images_raw: raw.len(),
            images_accepted: curated.accepted.len(),
            dataset_size: state.dataset.len(),
            shelves_scanned_cum: shelves_cum,
            interventions: log.interventions.len(),
            eval,
        });
        state.logs.push(log);
    }

    let totals = compute_metrics(&state.logs, cfg.manual_seconds_per_shelf);
    Ok((
        FlywheelReport {
            rows,
            totals,
            manual_seconds_per_shelf: cfg.manual_seconds_per_shelf,
        },
        state,
    ))
}

pub fn write_report_json(report: &FlywheelReport, path: &Path) -> Result<(), FlywheelError> {
    let mut f = std::fs::File::create(path)?;
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    f.write_all(body.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn fmt_acc(r: &Option<EvalResult>) -> String {
    r.as_ref().map(|e| format!("{:.6}", e.mean)).unwrap_or_default()
}

pub fn write_report_csv(report: &FlywheelReport, path: &Path) -> Result<(), FlywheelError> {
    let mut out = String::from(
        "t,images_raw,images_accepted,dataset_size,shelf_acc,ocr_en_acc,ocr_zh_acc,interventions,shelves_cum,hours_saved_cum\n",
    );
    for row in &report.rows {
        let hours_cum =
            row.shelves_scanned_cum as f64 * report.manual_seconds_per_shelf / 3600.0;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.6}\n",
            row.t,
            row.images_raw,
            row.images_accepted,
            row.dataset_size,
            fmt_acc(&row.eval.shelf),
            fmt_acc(&row.eval.ocr_en),
            fmt_acc(&row.eval.ocr_zh),
            row.interventions,
            row.shelves_scanned_cum,
            hours_cum,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_catalog, CatalogConfig};
    use crate::world::{build_world, WorldConfig};

    fn tiny_world() -> ShelfWorld {
        let catalog = generate_catalog(
            &CatalogConfig {
                num_books: 280,
                num_sections: 4,
                ..CatalogConfig::default()
            },
            1,
        )
        .unwrap();
        let cfg = WorldConfig {
            num_aisles: 1,
            columns_per_side: 3,
            shelves_per_column: 5,
            books_per_shelf_mean: 10.0,
            holdout_shelves: 4,
            ..WorldConfig::default()
        };
        build_world(&catalog, &cfg, 2).unwrap()
    }

    fn example_at(ts: f64, x_lo: f64) -> RawExample {
        use crate::scanner::{ImageMeta, Observation, Pose};
        use crate::world::ScanWindow;
        RawExample {
            observation: Observation {
                window: ScanWindow {
                    aisle: 0,
                    side: 0,
                    column: 0,
                    level: 0,
                    x_lo_m: x_lo,
                    x_hi_m: x_lo + 0.6,
                },
                visible: Vec::new(),
                capture_pose: Pose::default(),
                timestamp_s: ts,
                meta: ImageMeta::default(),
            },
            predicted: Vec::new(),
        }
    }

    #[test]
    fn aggregate_union_properties() {
        let a = vec![example_at(0.0, 0.0), example_at(1.0, 0.3)];
        let b = vec![example_at(2.0, 0.6), example_at(3.0, 0.9)];
        assert_eq!(aggregate(&[], &a), a);
        assert_eq!(aggregate(&a, &a), a);
        assert_eq!(aggregate(&a, &b).len(), a.len() + b.len());
        // order preserved: prev then new
        let both = aggregate(&a, &b);
        assert_eq!(both[..2], a[..]);
        assert_eq!(both[2..], b[..]);
    }

    #[test]
    fn metrics_arithmetic() {
        let log = |shelves: usize, ints: usize| DeploymentLog {
            shelves_scanned: shelves,
            images_captured: shelves * 3,
            interventions: (0..ints)
                .map(|i| crate::scanner::InterventionEvent {
                    timestamp_s: i as f64,
                    pose_before: Pose::default(),
                    cause: crate::scanner::InterventionCause::DriftExceeded,
                })
                .collect(),
            elapsed_s: 0.0,
            seed: 0,
        };
        let totals = compute_metrics(&[log(2000, 20), log(103, 6)], 32.01);
        assert_eq!(totals.shelves, 2103);
        assert_eq!(totals.interventions, 26);
        assert!((totals.hours_saved - 18.7).abs() < 0.01);
        assert_eq!(compute_metrics(&[], 32.0).hours_saved, 0.0);
    }

    #[test]
    fn zero_horizon_iteration_keeps_base_accuracy() {
        let world = tiny_world();
        let base = RecognizerModel::default();
        let deployment = DeploymentConfig {
            horizon_s: 0.0,
            ..DeploymentConfig::default()
        };
        let (report, state) = run_flywheel(
            &world,
            &base,
            &deployment,
            &CurationConfig::default(),
            &FlywheelConfig {
                iterations: 1,
                eval_trials: 64,
                ..FlywheelConfig::default()
            },
            7,
        )
        .unwrap();
        assert_eq!(state.dataset.len(), 0);
        let row = &report.rows[0];
        assert_eq!(row.dataset_size, 0);
        let shelf = row.eval.shelf.as_ref().unwrap();
        assert!((shelf.mean - 0.324).abs() < 0.05, "shelf {shelf:?}");
    }

    #[test]
    fn dataset_monotone_and_isolation() {
        let world = tiny_world();
        let (report, state) = run_flywheel(
            &world,
            &RecognizerModel::default(),
            &DeploymentConfig::default(),
            &CurationConfig::default(),
            &FlywheelConfig {
                iterations: 2,
                ..FlywheelConfig::default()
            },
            9,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[1].dataset_size >= report.rows[0].dataset_size);
        let held: BTreeSet<_> = world.held_out_windows().iter().map(|w| w.key()).collect();
        for ex in &state.dataset {
            assert!(!held.contains(&ex.observation.window.key()));
        }
        // totals match the logs
        assert_eq!(
            report.totals.interventions,
            state.logs.iter().map(|l| l.interventions.len()).sum::<usize>()
        );
    }

    #[test]
    fn report_files_are_deterministic() {
        let world = tiny_world();
        let run = || {
            run_flywheel(
                &world,
                &RecognizerModel::default(),
                &DeploymentConfig::default(),
                &CurationConfig::default(),
                &FlywheelConfig::default(),
                42,
            )
            .unwrap()
            .0
        };
        let dir = tempfile::tempdir().unwrap();
        let (j1, c1) = (dir.path().join("a.json"), dir.path().join("a.csv"));
        let (j2, c2) = (dir.path().join("b.json"), dir.path().join("b.csv"));
        let r1 = run();
        let r2 = run();
        write_report_json(&r1, &j1).unwrap();
        write_report_json(&r2, &j2).unwrap();
        write_report_csv(&r1, &c1).unwrap();
        write_report_csv(&r2, &c2).unwrap();
        assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
        assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
        let csv = std::fs::read_to_string(&c1).unwrap();
        assert!(csv.starts_with("t,images_raw,"));
        assert_eq!(csv.lines().count(), 1 + r1.rows.len());
    }
}
