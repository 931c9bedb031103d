//! Mobile-base deployment simulation: drift dynamics, LiDAR point-cloud
//! synthesis, parallel-line aisle estimation, drift correction, scan
//! scheduling, and intervention/time bookkeeping.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recognizer::{predict_labels, LabelSequence, RecognizerModel};
use crate::world::{ScanWindow, ShelfKey, ShelfWorld, WorldError, ADVANCE_M};

/// Robot pose in the aisle frame: distance along the aisle, lateral offset
/// from the centerline, heading relative to the aisle direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub psi_rad: f64,
}

/// 3D points in the robot frame, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentConfig {
    /// Simulated seconds per deployment iteration (default 4 h).
    pub horizon_s: f64,
    /// Per-advance lateral drift noise.
    pub sigma_y_m: f64,
    /// Per-advance heading drift noise.
    pub sigma_psi_rad: f64,
    /// Isotropic LiDAR point noise.
    pub sigma_pc_m: f64,
    /// Points per scan for a reference 7-shelf column; actual counts are
    /// height-proportional.
    pub points_per_scan: usize,
    pub intervention_threshold_m: f64,
    pub intervention_cost_s: f64,
    pub t_image_s: f64,
    pub t_move_s: f64,
    pub t_correct_s: f64,
    /// Pose-error -> legibility coupling.
    pub c_blur: f64,
    pub c_skew: f64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            horizon_s: 14_400.0,
            sigma_y_m: 0.051,
            sigma_psi_rad: 0.02,
            sigma_pc_m: 0.01,
            points_per_scan: 2000,
            intervention_threshold_m: 0.15,
            intervention_cost_s: 300.0,
            t_image_s: 2.0,
            t_move_s: 3.0,
            t_correct_s: 1.0,
            c_blur: 0.5,
            c_skew: 0.3,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScannerError {
    #[error("invalid deployment config: {0}")]
    InvalidConfig(String),
    #[error("one side of the cloud has fewer than {min} points ({left} left, {right} right)")]
    OneSidedCloud { min: usize, left: usize, right: usize },
    #[error("degenerate cloud geometry")]
    DegenerateGeometry,
    #[error(transparent)]
    World(#[from] WorldError),
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<(), ScannerError> {
        if self.horizon_s < 0.0 {
            return Err(ScannerError::InvalidConfig("horizon_s must be >= 0".into()));
        }
        if self.intervention_threshold_m <= 0.0 || self.intervention_cost_s < 0.0 {
            return Err(ScannerError::InvalidConfig(
                "intervention parameters out of range".into(),
            ));
        }
        for (name, v) in [
            ("sigma_y_m", self.sigma_y_m),
            ("sigma_psi_rad", self.sigma_psi_rad),
            ("sigma_pc_m", self.sigma_pc_m),
            ("t_image_s", self.t_image_s),
            ("t_move_s", self.t_move_s),
            ("t_correct_s", self.t_correct_s),
            ("c_blur", self.c_blur),
            ("c_skew", self.c_skew),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(ScannerError::InvalidConfig(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if self.points_per_scan == 0 {
            return Err(ScannerError::InvalidConfig(
                "points_per_scan must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One visible book in an observation. The wire format keeps only
/// `(book_id, effective_degradation)`; title and call-number text ride along
/// in memory so the recognizer can read the physical label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleBook {
    pub book_id: String,
    pub effective_degradation: f64,
    pub title: String,
    pub call_number_text: String,
}

/// Image dimensions recorded for fidelity with the captured RGB frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl Default for ImageMeta {
    fn default() -> Self {
        ImageMeta {
            height: 810,
            width: 1080,
            channels: 3,
        }
    }
}

/// Structured surrogate for one captured shelf image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub window: ScanWindow,
    pub visible: Vec<VisibleBook>,
    pub capture_pose: Pose,
    pub timestamp_s: f64,
    pub meta: ImageMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionCause {
    DriftExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub timestamp_s: f64,
    pub pose_before: Pose,
    pub cause: InterventionCause,
}

/// One raw labeled example: observation plus the recognizer's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExample {
    pub observation: Observation,
    pub predicted: LabelSequence,
}

pub type RawDataset = Vec<RawExample>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentLog {
    pub shelves_scanned: usize,
    pub images_captured: usize,
    pub interventions: Vec<InterventionEvent>,
    pub elapsed_s: f64,
    pub seed: u64,
}

/// Sample a LiDAR cloud of the two shelf-face planes in the robot frame.
/// Point count is proportional to the column height (7 shelves = the
/// configured `points_per_scan`).
pub fn synthesize_point_cloud(
    world: &ShelfWorld,
    true_pose: &Pose,
    cfg: &DeploymentConfig,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let half_width = world.config.aisle_width_m / 2.0;
    let height = world.column_height_m();
    let n = ((cfg.points_per_scan as f64) * world.config.shelves_per_column as f64 / 7.0)
        .round()
        .max(1.0) as usize;
    let (sin_psi, cos_psi) = true_pose.psi_rad.sin_cos();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        // each return hits one of the two faces at random
        let y_w = if rng.random_bool(0.5) { half_width } else { -half_width };
        let x_w = true_pose.x_m + rng.random_range(-1.0..1.0);
        let z = rng.random_range(0.0..height);
        // world -> robot frame
        let dx = x_w - true_pose.x_m;
        let dy = y_w - true_pose.y_m;
        let mut p = [
            cos_psi * dx + sin_psi * dy,
            -sin_psi * dx + cos_psi * dy,
            z,
        ];
        if cfg.sigma_pc_m > 0.0 {
            let normal = Normal::new(0.0, cfg.sigma_pc_m).unwrap();
            for v in &mut p {
                *v += normal.sample(rng);
            }
        }
        p[2] = p[2].max(0.0);
        points.push(p);
    }
    PointCloud { points }
}

const MIN_SIDE_POINTS: usize = 30;

/// Estimate (lateral offset, heading error) from the two shelf-face
/// clusters: project to the horizontal plane, split by sign of the lateral
/// coordinate, and fit two parallel lines by total least squares on the
/// pooled centered clusters.
pub fn fit_aisle_planes(
    cloud: &PointCloud,
    aisle_width_m: f64,
) -> Result<(f64, f64), ScannerError> {
    let mut left: Vec<[f64; 2]> = Vec::new();
    let mut right: Vec<[f64; 2]> = Vec::new();
    for p in &cloud.points {
        if p[1] < 0.0 {
            left.push([p[0], p[1]]);
        } else {
            right.push([p[0], p[1]]);
        }
    }
    if left.len() < MIN_SIDE_POINTS || right.len() < MIN_SIDE_POINTS {
        return Err(ScannerError::OneSidedCloud {
            min: MIN_SIDE_POINTS,
            left: left.len(),
            right: right.len(),
        });
    }

    let centroid = |pts: &[[f64; 2]]| -> [f64; 2] {
        let n = pts.len() as f64;
        [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ]
    };
    let c_left = centroid(&left);
    let c_right = centroid(&right);

    // pooled scatter of per-cluster-centered points
    let (mut sxx, mut sxy, mut syy) = (0.0f64, 0.0f64, 0.0f64);
    for (pts, c) in [(&left, c_left), (&right, c_right)] {
        for p in pts.iter() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
    }

    // principal eigenvector of [[sxx, sxy], [sxy, syy]]
    let half_trace = 0.5 * (sxx + syy);
    let det_term = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let lambda_max = half_trace + det_term;
    if lambda_max <= 1e-12 {
        return Err(ScannerError::DegenerateGeometry);
    }
    let mut dir = if sxy.abs() > 1e-15 {
        [sxy, lambda_max - sxx]
    } else if sxx >= syy {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    if norm <= 1e-12 {
        return Err(ScannerError::DegenerateGeometry);
    }
    dir[0] /= norm;
    dir[1] /= norm;
    if dir[0] < 0.0 {
        dir[0] = -dir[0];
        dir[1] = -dir[1];
    }

    // the two fits must be roughly an aisle apart or the split is corrupted
    let normal = [-dir[1], dir[0]];
    let separation =
        (normal[0] * (c_right[0] - c_left[0]) + normal[1] * (c_right[1] - c_left[1])).abs();
    if separation < aisle_width_m / 4.0 {
        return Err(ScannerError::DegenerateGeometry);
    }

    let psi_hat = -dir[1].atan2(dir[0]);
    let mid = [
        0.5 * (c_left[0] + c_right[0]),
        0.5 * (c_left[1] + c_right[1]),
    ];
    let y_hat = -(normal[0] * mid[0] + normal[1] * mid[1]);
    Ok((y_hat, psi_hat))
}

/// Apply a drift estimate; the residual equals the estimator error.
pub fn correct_drift(pose: &Pose, estimate: (f64, f64)) -> Pose {
    Pose {
        x_m: pose.x_m,
        y_m: pose.y_m - estimate.0,
        psi_rad: pose.psi_rad - estimate.1,
    }
}

/// Advance 0.3 m along the aisle with Gaussian drift in (y, psi).
pub fn step_advance(pose: &Pose, cfg: &DeploymentConfig, rng: &mut ChaCha8Rng) -> Pose {
    let dy = if cfg.sigma_y_m > 0.0 {
        Normal::new(0.0, cfg.sigma_y_m).unwrap().sample(rng)
    } else {
        0.0
    };
    let dpsi = if cfg.sigma_psi_rad > 0.0 {
        Normal::new(0.0, cfg.sigma_psi_rad).unwrap().sample(rng)
    } else {
        0.0
    };
    Pose {
        x_m: pose.x_m + ADVANCE_M,
        y_m: pose.y_m + dy,
        psi_rad: pose.psi_rad + dpsi,
    }
}

/// Capture one window; navigation error degrades legibility.
pub fn capture(
    world: &ShelfWorld,
    window: &ScanWindow,
    pose: &Pose,
    cfg: &DeploymentConfig,
    timestamp_s: f64,
) -> Result<Observation, ScannerError> {
    let gt = world.ground_truth(window)?;
    let blur = cfg.c_blur * pose.y_m.abs() + cfg.c_skew * pose.psi_rad.abs();
    let visible = gt
        .iter()
        .map(|inst| {
            let rec = world
                .catalog
                .lookup(&inst.book_id)
                .expect("placed instance has a catalog record");
            VisibleBook {
                book_id: inst.book_id.clone(),
                effective_degradation: (inst.degradation + blur).clamp(0.0, 1.0),
                title: rec.title.clone(),
                call_number_text: rec.call_number.to_string(),
            }
        })
        .collect();
    Ok(Observation {
        window: window.clone(),
        visible,
        capture_pose: *pose,
        timestamp_s,
        meta: ImageMeta::default(),
    })
}

/// Traverse all scan stops: move (accumulating drift), estimate drift from a
/// fresh scan, self-correct or call for help, then capture each shelf level
/// and predict labels. A human intervenes (recenters the base) whenever the
/// estimated offset exceeds the threshold or the fit fails; all failure
/// modes become interventions. Held-out shelves are skipped. `start_s`
/// offsets the simulation clock so timestamps stay unique across flywheel
/// iterations.
pub fn run_deployment(
    world: &ShelfWorld,
    model: &RecognizerModel,
    cfg: &DeploymentConfig,
    seed: u64,
    start_s: f64,
) -> Result<(RawDataset, DeploymentLog), ScannerError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEB1_0CA7);
    let mut raw: RawDataset = Vec::new();
    let mut interventions: Vec<InterventionEvent> = Vec::new();
    let mut shelves: std::collections::BTreeSet<ShelfKey> = std::collections::BTreeSet::new();
    let mut images = 0usize;
    let mut elapsed = 0.0f64;

    // group windows into stops: consecutive runs share (aisle, side, x_lo)
    let windows = world.enumerate_windows();
    let mut stops: Vec<Vec<ScanWindow>> = Vec::new();
    for w in windows {
        let same_stop = stops.last().is_some_and(|s: &Vec<ScanWindow>| {
            let f = &s[0];
            f.aisle == w.aisle && f.side == w.side && f.x_lo_m == w.x_lo_m
        });
        if same_stop {
            stops.last_mut().unwrap().push(w);
        } else {
            stops.push(vec![w]);
        }
    }

    let mut pose = Pose::default();
    let mut prev_lane: Option<(usize, usize)> = None;
    'stops: for stop in &stops {
        if elapsed >= cfg.horizon_s {
            break;
        }
        let first = &stop[0];
        let lane = (first.aisle, first.side);
        if prev_lane != Some(lane) {
            // the robot is placed at the head of each aisle side
            pose = Pose::default();
            prev_lane = Some(lane);
        }
        // every move drifts, including the move into the first stop
        pose = step_advance(&pose, cfg, &mut rng);
        pose.x_m = first.x_lo_m;
        elapsed += cfg.t_move_s;

        // estimate drift from a fresh scan; self-correct only when the
        // estimated offset is small enough to trust
        let cloud = synthesize_point_cloud(world, &pose, cfg, &mut rng);
        let fit = fit_aisle_planes(&cloud, world.config.aisle_width_m);
        elapsed += cfg.t_correct_s;
        let needs_help = match fit {
            Ok((y_hat, _)) => y_hat.abs() > cfg.intervention_threshold_m,
            Err(_) => true,
        };
        if needs_help {
            interventions.push(InterventionEvent {
                timestamp_s: start_s + elapsed,
                pose_before: pose,
                cause: InterventionCause::DriftExceeded,
            });
            pose.y_m = 0.0;
            pose.psi_rad = 0.0;
            elapsed += cfg.intervention_cost_s;
        } else if let Ok(estimate) = fit {
            pose = correct_drift(&pose, estimate);
        }

        // vertical scan, bottom to top
        for window in stop {
            if elapsed >= cfg.horizon_s {
                break 'stops;
            }
            if world.held_out.contains(&window.shelf()) {
                continue;
            }
            let obs = capture(world, window, &pose, cfg, start_s + elapsed)?;
            elapsed += cfg.t_image_s;
            images += 1;
            shelves.insert(window.shelf());
            let section = world
                .section_for_window(window)
                .map(str::to_string)
                .unwrap_or_default();
            let candidates = world
                .catalog
                .candidate_set(&section)
                .map(<[_]>::to_vec)
                .unwrap_or_default();
            let predicted = if candidates.is_empty() {
                Vec::new()
            } else {
                predict_labels(model, &obs, &candidates, rng.random()).unwrap_or_default()
            };
            raw.push(RawExample {
                observation: obs,
                predicted,
            });
        }
    }

    let log = DeploymentLog {
        shelves_scanned: shelves.len(),
        images_captured: images,
        interventions,
        elapsed_s: elapsed,
        seed,
    };
    Ok((raw, log))
}

/// Wire form of one raw example: only what downstream consumers need.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawExampleWire {
    window: ScanWindow,
    capture_pose: Pose,
    visible: Vec<VisibleWire>,
    predicted: LabelSequence,
    timestamp_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VisibleWire {
    book_id: String,
    eff_degradation: f64,
}

/// One JSON object per line.
pub fn write_raw_jsonl<W: std::io::Write>(raw: &RawDataset, mut w: W) -> std::io::Result<()> {
    for ex in raw {
        let wire = RawExampleWire {
            window: ex.observation.window.clone(),
            capture_pose: ex.observation.capture_pose,
            visible: ex
                .observation
                .visible
                .iter()
                .map(|v| VisibleWire {
                    book_id: v.book_id.clone(),
                    eff_degradation: v.effective_degradation,
                })
                .collect(),
            predicted: ex.predicted.clone(),
            timestamp_s: ex.observation.timestamp_s,
        };
        serde_json::to_writer(&mut w, &wire)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Inverse of [`write_raw_jsonl`]; label text of visible books is not on the
/// wire, so those fields come back empty. Reports 1-based line numbers on
/// parse failures.
pub fn read_raw_jsonl<R: std::io::BufRead>(r: R) -> Result<RawDataset, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: RawExampleWire =
            serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?;
        out.push(RawExample {
            observation: Observation {
                window: wire.window,
                visible: wire
                    .visible
                    .into_iter()
                    .map(|v| VisibleBook {
                        book_id: v.book_id,
                        effective_degradation: v.eff_degradation,
                        title: String::new(),
                        call_number_text: String::new(),
                    })
                    .collect(),
                capture_pose: wire.capture_pose,
                timestamp_s: wire.timestamp_s,
                meta: ImageMeta::default(),
            },
            predicted: wire.predicted,
        });
    }
    Ok(out)
}
