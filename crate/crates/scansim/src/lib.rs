//! Desk-scale simulator of a shelf-scanning robot data flywheel.
//!
//! A synthetic library catalog and shelf world are generated from a seed, a
//! simulated mobile base scans aisles (with LiDAR drift correction), a
//! recognizer surrogate predicts book labels, predictions are curated against
//! the catalog, and the accumulated curated dataset drives a saturating
//! learning curve — closing the loop.

pub mod callnum;
pub mod catalog;
pub mod config;
pub mod curation;
pub mod flywheel;
pub mod gestalt;
pub mod recognizer;
pub mod scanner;
pub mod world;

pub use callnum::CallNumber;
pub use catalog::{BookRecord, Catalog, CatalogConfig, Language, Status};
pub use recognizer::{LabelSequence, RecognizerModel, Task};
pub use world::{ScanWindow, ShelfWorld, WorldConfig};
