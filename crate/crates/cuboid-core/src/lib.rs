//! Core geometry and optimization for refining Lidar-annotated 3D boxes into
//! image-tight cuboids.
//!
//! The crate is organized around four pieces:
//!
//! - [`geometry`]: oriented boxes, pinhole projection with near-plane clipping
//!   and per-edge legality flags, and the 2D / BEV / 3D IoU family.
//! - [`anchor`]: view-category classification, anchor point/edge construction
//!   and the four-parameter refinement that rescales anchor edges while
//!   keeping the sensor-facing surface fixed.
//! - [`solver`]: edge-wise Huber losses and a bounded Nelder-Mead solver that
//!   recovers refinement parameters from a target 2D box.
//! - [`matching`]: Hungarian assignment between projected proposals and 2D
//!   ground-truth boxes with an IoU gate.
//!
//! Everything here is pure computation on value types; no IO, no global state.
//! The crate is `no_std` (with `alloc`) so it can be embedded in tooling or
//! on-vehicle targets alike.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod anchor;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod solver;

mod math;

pub use anchor::{AnchorEdge, AnchorSpec, RefineParams, ViewCategory, ViewKind};
pub use error::Error;
pub use geometry::{Box2D, Box3D, CameraModel, EdgeLegality, RigidTransform, Vec3};
pub use matching::MatchResult;
pub use solver::{LossWeights, RefineResult, SolverConfig};
