use alloc::string::String;

/// Errors produced by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("raw data has {actual} bytes, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for axis with {len} voxels")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("voxel ({x}, {y}, {z}) lies outside the volume")]
    VoxelOutOfBounds { x: i64, y: i64, z: i64 },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },

    #[error("tree expansion exceeded {limit} instances")]
    TreeTooLarge { limit: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
