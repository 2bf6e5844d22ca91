//! Geometry clean-up after garment extraction: border smoothing, pushing
//! garments out of the body, and garment transfer between bodies through
//! per-vertex offsets.

pub mod border;
pub mod depenetrate;
pub mod offsets;

pub use border::{detect_borders, smooth_borders, smooth_borders_in_place, Borders, SmoothReport};
pub use depenetrate::{depenetrate, BodySurface, DepenetrateReport, DEFAULT_MARGIN, MAX_PASSES};
pub use offsets::{register_offsets, retarget, vertex_frames, Offset, OffsetMap, OffsetMode};

/// Default number of border smoothing rounds.
pub const DEFAULT_ROUNDS: usize = 5;
