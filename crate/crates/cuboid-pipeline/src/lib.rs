//! Standard-library companion to `cuboid-core`: JSONL persistence, synthetic
//! dataset generation with planted refinement parameters, SVG overlays, and
//! before/after evaluation. The `cuboid` binary in this crate ties them into
//! a reproducible pipeline.

pub mod dataset;
pub mod eval;
pub mod render;
