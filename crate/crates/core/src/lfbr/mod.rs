//! Decoder-side reconstruction: key-EIA synthesis from block models and
//! prediction of the remaining EIs from their key neighbours.

pub mod reconstruct;
pub mod synthesize;

pub use reconstruct::{reconstruct_full_eia, Axis, Gap, ReconstructionPlan};
pub use synthesize::{
    deblock, post_filter, regress_frames, synthesize_full_resolution, synthesize_key_eia, KeyLayout,
    SynthesisOptions, DEBLOCK_WIDTH, POSTFILTER_STRENGTH,
};
