//! Isolation forests compiled into explicit specifications of the anomalous
//! space.
//!
//! A forest of random partitioning trees scores points by cumulative path
//! depth. Because every tree partitions the space into half-open boxes, the
//! set of points at or below a depth cutoff is a finite union of boxes. This
//! crate builds forests, estimates the cutoff without labels, computes that
//! union exactly (ranges in 1-D, grid-aligned boxes in n-D) and classifies
//! points from it.

pub mod analysis;
pub mod cutoff;
pub mod data;
pub mod datagen;
pub mod error;
pub mod forest;
pub mod knn;
pub mod pipeline;
pub mod spec1d;
pub mod spec_model;
pub mod specnd;

pub use cutoff::{greedy_gap_cutoff, Confidence, CutoffEstimate, DepthProfile, ProfileSource};
pub use data::Dataset;
pub use error::{Error, Result};
pub use forest::{Depth, Forest, ForestConfig, IsolationTree, Node};
pub use spec_model::{compile_spec, AnomalySpec, CompileOptions, Provenance};
pub use specnd::Region;
