//! Synthetic physical library: aisles, shelf columns, book placement with
//! absences/swaps/degradation, scan-window enumeration, and ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Beta;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Status};

/// The base advances this far between stops.
pub const ADVANCE_M: f64 = 0.3;
/// Camera coverage per window; twice the advance step, so consecutive
/// windows at one level overlap by 50%.
pub const COVERAGE_M: f64 = 2.0 * ADVANCE_M;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// ADA minimum is 36 in = 0.9144 m.
    pub aisle_width_m: f64,
    pub num_aisles: usize,
    pub columns_per_side: usize,
    pub shelves_per_column: usize,
    pub shelf_width_m: f64,
    pub shelf_pitch_m: f64,
    pub books_per_shelf_mean: f64,
    /// World-level absence on top of catalog status; the catalog does not
    /// know about these missing books.
    pub p_absent: f64,
    pub p_swap: f64,
    pub degradation_mean: f64,
    pub degradation_concentration: f64,
    /// Shelves reserved for held-out evaluation; never scanned in
    /// deployments.
    pub holdout_shelves: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            aisle_width_m: 0.9144,
            num_aisles: 2,
            columns_per_side: 8,
            shelves_per_column: 7,
            shelf_width_m: 0.9,
            shelf_pitch_m: 0.35,
            books_per_shelf_mean: 25.0,
            p_absent: 0.05,
            p_swap: 0.02,
            degradation_mean: 0.3,
            degradation_concentration: 10.0,
            holdout_shelves: 10,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("catalog on-shelf count {books} exceeds total capacity {capacity}")]
    CapacityExceeded { books: usize, capacity: usize },
    #[error("scan window out of world bounds")]
    OutOfBounds,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.aisle_width_m < 0.9144 {
            return Err(WorldError::InvalidConfig(
                "aisle_width_m must be >= 0.9144 (36 in)".into(),
            ));
        }
        if self.num_aisles < 1 || self.columns_per_side < 1 || self.shelves_per_column < 1 {
            return Err(WorldError::InvalidConfig(
                "aisle/column/shelf counts must be >= 1".into(),
            ));
        }
        if self.shelf_width_m <= 0.0 || self.shelf_pitch_m <= 0.0 {
            return Err(WorldError::InvalidConfig(
                "shelf dimensions must be positive".into(),
            ));
        }
        if self.books_per_shelf_mean < 1.0 {
            return Err(WorldError::InvalidConfig(
                "books_per_shelf_mean must be >= 1".into(),
            ));
        }
        for (name, p) in [("p_absent", self.p_absent), ("p_swap", self.p_swap)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorldError::InvalidConfig(format!("{name} must be in [0,1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.degradation_mean) || self.degradation_concentration <= 0.0
        {
            return Err(WorldError::InvalidConfig(
                "degradation params out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Identifies one shelf: (aisle, side, column, level).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ShelfKey {
    pub aisle: usize,
    pub side: usize,
    pub column: usize,
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub aisle: usize,
    pub side: usize,
    pub column: usize,
    pub level: usize,
    pub position: usize,
}

impl Slot {
    pub fn shelf(&self) -> ShelfKey {
        ShelfKey {
            aisle: self.aisle,
            side: self.side,
            column: self.column,
            level: self.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookInstance {
    pub book_id: String,
    pub slot: Slot,
    /// Slot center along the aisle, meters from the aisle start.
    pub x_center_m: f64,
    /// 0 = pristine label, 1 = unreadable.
    pub degradation: f64,
}

/// One camera window: a shelf level at a base stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub aisle: usize,
    pub side: usize,
    /// Column under the window's left edge.
    pub column: usize,
    pub level: usize,
    pub x_lo_m: f64,
    pub x_hi_m: f64,
}

impl ScanWindow {
    /// Stable identity for dedup and held-out bookkeeping.
    pub fn key(&self) -> (usize, usize, usize, u64) {
        (self.aisle, self.side, self.level, self.x_lo_m.to_bits())
    }

    pub fn shelf(&self) -> ShelfKey {
        ShelfKey {
            aisle: self.aisle,
            side: self.side,
            column: self.column,
            level: self.level,
        }
    }
}

/// Immutable synthetic library; all queries are pure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShelfWorld {
    pub config: WorldConfig,
    pub catalog: Catalog,
    pub seed: u64,
    pub instances: Vec<BookInstance>,
    /// Shelf -> section id, derived from the median book on the shelf.
    /// Serialized as a list of pairs (JSON object keys must be strings).
    #[serde(with = "shelf_sections_serde")]
    pub shelf_sections: BTreeMap<ShelfKey, String>,
    /// Shelves reserved for evaluation.
    pub held_out: BTreeSet<ShelfKey>,
    /// (aisle, side, level) -> indices into `instances`, sorted by x.
    #[serde(skip)]
    lane_index: BTreeMap<(usize, usize, usize), Vec<usize>>,
}

impl ShelfWorld {
    pub fn aisle_length_m(&self) -> f64 {
        self.config.columns_per_side as f64 * self.config.shelf_width_m
    }

    pub fn column_height_m(&self) -> f64 {
        self.config.shelves_per_column as f64 * self.config.shelf_pitch_m
    }

    fn build_lane_index(&mut self) {
        let mut index: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, inst) in self.instances.iter().enumerate() {
            index
                .entry((inst.slot.aisle, inst.slot.side, inst.slot.level))
                .or_default()
                .push(i);
        }
        for v in index.values_mut() {
            v.sort_by(|&a, &b| {
                self.instances[a]
                    .x_center_m
                    .total_cmp(&self.instances[b].x_center_m)
            });
        }
        self.lane_index = index;
    }

    /// Rebuild the transient index after deserialization.
    pub fn reindex(&mut self) {
        self.build_lane_index();
    }

    /// Instances whose slot center lies in the window, left to right.
    pub fn ground_truth(&self, w: &ScanWindow) -> Result<Vec<&BookInstance>, WorldError> {
        let len = self.aisle_length_m();
        if w.aisle >= self.config.num_aisles
            || w.side > 1
            || w.level >= self.config.shelves_per_column
            || w.x_lo_m < 0.0
            || w.x_lo_m >= len
        {
            return Err(WorldError::OutOfBounds);
        }
        let Some(lane) = self.lane_index.get(&(w.aisle, w.side, w.level)) else {
            return Ok(Vec::new());
        };
        Ok(lane
            .iter()
            .map(|&i| &self.instances[i])
            .filter(|inst| inst.x_center_m >= w.x_lo_m && inst.x_center_m < w.x_hi_m)
            .collect())
    }

    /// All scan windows in deterministic traversal order:
    /// aisle, side, stop, level bottom-to-top.
    pub fn enumerate_windows(&self) -> Vec<ScanWindow> {
        let mut out = Vec::new();
        let len = self.aisle_length_m();
        for aisle in 0..self.config.num_aisles {
            for side in 0..2 {
                let mut stop = 0usize;
                loop {
                    let x = stop as f64 * ADVANCE_M;
                    if x >= len - 1e-9 {
                        break;
                    }
                    let column = ((x + 1e-9) / self.config.shelf_width_m) as usize;
                    let column = column.min(self.config.columns_per_side - 1);
                    for level in 0..self.config.shelves_per_column {
                        out.push(ScanWindow {
                            aisle,
                            side,
                            column,
                            level,
                            x_lo_m: x,
                            x_hi_m: x + COVERAGE_M,
                        });
                    }
                    stop += 1;
                }
            }
        }
        out
    }

    /// Section a window's shelf maps to, falling back to the nearest mapped
    /// shelf in the same lane, then to the first section.
    pub fn section_for_window(&self, w: &ScanWindow) -> Option<&str> {
        if let Some(id) = self.shelf_sections.get(&w.shelf()) {
            return Some(id);
        }
        // nearest mapped column in the same (aisle, side, level)
        let mut best: Option<(usize, &str)> = None;
        for (key, id) in &self.shelf_sections {
            if key.aisle == w.aisle && key.side == w.side && key.level == w.level {
                let dist = key.column.abs_diff(w.column);
                if best.map_or(true, |(d, _)| dist < d) {
                    best = Some((dist, id));
                }
            }
        }
        best.map(|(_, id)| id)
            .or_else(|| self.catalog.sections.first().map(|s| s.id.as_str()))
    }

    /// Windows whose shelf is held out, in traversal order.
    pub fn held_out_windows(&self) -> Vec<ScanWindow> {
        self.enumerate_windows()
            .into_iter()
            .filter(|w| self.held_out.contains(&w.shelf()))
            .collect()
    }
}

mod shelf_sections_serde {
    use super::ShelfKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<ShelfKey, String>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<ShelfKey, String>, D::Error> {
        Ok(Vec::<(ShelfKey, String)>::deserialize(d)?.into_iter().collect())
    }
}

/// Lay out the catalog's on-shelf books across the world's shelves.
pub fn build_world(
    catalog: &Catalog,
    cfg: &WorldConfig,
    seed: u64,
) -> Result<ShelfWorld, WorldError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E1F_0A15);

    // survivors: on-shelf books minus world-level absences, in catalog order
    let survivors: Vec<&str> = catalog
        .records
        .iter()
        .filter(|r| r.status == Status::OnShelf)
        .filter(|_| !rng.random_bool(cfg.p_absent))
        .map(|r| r.book_id.as_str())
        .collect();

    // per-shelf capacities around the mean, in traversal order
    let mut shelves: Vec<(ShelfKey, usize)> = Vec::new();
    let mean = cfg.books_per_shelf_mean;
    let lo = (0.7 * mean).round().max(1.0) as usize;
    let hi = (1.3 * mean).round().max(1.0) as usize;
    for aisle in 0..cfg.num_aisles {
        for side in 0..2 {
            for column in 0..cfg.columns_per_side {
                for level in 0..cfg.shelves_per_column {
                    let cap = rng.random_range(lo..=hi);
                    shelves.push((
                        ShelfKey {
                            aisle,
                            side,
                            column,
                            level,
                        },
                        cap,
                    ));
                }
            }
        }
    }
    let capacity: usize = shelves.iter().map(|(_, c)| c).sum();
    if survivors.len() > capacity {
        return Err(WorldError::CapacityExceeded {
            books: survivors.len(),
            capacity,
        });
    }

    // fill shelves sequentially in catalog order
    let beta = Beta::new(
        cfg.degradation_mean * cfg.degradation_concentration,
        (1.0 - cfg.degradation_mean) * cfg.degradation_concentration,
    )
    .map_err(|e| WorldError::InvalidConfig(format!("degradation distribution: {e}")))?;
    let mut instances: Vec<BookInstance> = Vec::with_capacity(survivors.len());
    let mut cursor = 0usize;
    for (key, cap) in &shelves {
        if cursor >= survivors.len() {
            break;
        }
        let take = (*cap).min(survivors.len() - cursor);
        let mut shelf_ids: Vec<&str> = survivors[cursor..cursor + take].to_vec();
        cursor += take;
        // adjacent swaps (misordered books), non-overlapping
        let mut i = 0;
        while i + 1 < shelf_ids.len() {
            if rng.random_bool(cfg.p_swap) {
                shelf_ids.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
        let col_x0 = key.column as f64 * cfg.shelf_width_m;
        let pitch_x = cfg.shelf_width_m / take as f64;
        for (pos, id) in shelf_ids.iter().enumerate() {
            let degradation = if cfg.degradation_mean == 0.0 {
                0.0
            } else {
                beta.sample(&mut rng).clamp(0.0, 1.0)
            };
            instances.push(BookInstance {
                book_id: id.to_string(),
                slot: Slot {
                    aisle: key.aisle,
                    side: key.side,
                    column: key.column,
                    level: key.level,
                    position: pos,
                },
                x_center_m: col_x0 + (pos as f64 + 0.5) * pitch_x,
                degradation,
            });
        }
    }

    // shelf -> section from the shelf's median book
    let mut by_shelf: BTreeMap<ShelfKey, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_shelf.entry(inst.slot.shelf()).or_default().push(i);
    }
    let mut shelf_sections = BTreeMap::new();
    for (key, idxs) in &by_shelf {
        let mid = &instances[idxs[idxs.len() / 2]];
        if let Some(rec) = catalog.lookup(&mid.book_id) {
            if let Some(section) = catalog.section_of(&rec.call_number) {
                shelf_sections.insert(*key, section.id.clone());
            }
        }
    }

    // held-out shelves, sampled from populated shelves
    let populated: Vec<ShelfKey> = by_shelf.keys().copied().collect();
    let mut held_out = BTreeSet::new();
    if cfg.holdout_shelves > 0 && !populated.is_empty() {
        let n = cfg.holdout_shelves.min(populated.len());
        let mut picks: Vec<usize> = (0..populated.len()).collect();
        picks.shuffle(&mut rng);
        for &p in picks.iter().take(n) {
            held_out.insert(populated[p]);
        }
    }

    let mut world = ShelfWorld {
        config: cfg.clone(),
        catalog: catalog.clone(),
        seed,
        instances,
        shelf_sections,
        held_out,
        lane_index: BTreeMap::new(),
    };
    world.build_lane_index();
    Ok(world)
}
