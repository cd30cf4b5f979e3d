//! Exhaustive graph-based clustering of super-voxel volumes.
//!
//! The crate covers the whole offline pipeline as pure computation:
//! volumes and phantoms ([`volume`]), 3D SLIC super-voxels ([`slic`]), the
//! super-voxel adjacency graph ([`graph`]), exhaustive enumeration of every
//! distinct Felzenszwalb–Huttenlocher clustering over the scale parameter
//! ([`fh`]), region deduplication and reverse-delete meta-clustering
//! ([`metacluster`]), the containment tree with filtering and brushing search
//! ([`tree`]), and transfer-function and preview rendering ([`viz`]).
//!
//! It is `no_std` with `alloc`. The `std` feature (on by default) only adds a
//! thread pool for the k-range sweep; results are identical either way.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod fh;
pub mod graph;
pub mod metacluster;
pub mod slic;
pub mod tree;
mod unionfind;
pub mod viz;
pub mod volume;

pub use error::{Error, Result};
pub use fh::{exhaustive_cluster, IntervalClustering, SweepConfig, ThresholdRule};
pub use graph::{AdjacencyGraph, SizeUnits, SvHistogram};
pub use metacluster::{MetaCluster, RegionCatalog};
pub use slic::{SlicParams, SuperVoxelLabeling};
pub use tree::{FilterSpec, MetaClusterTree, SearchQuery};
pub use volume::{Axis, ScalarVolume, VolumeMeta};
