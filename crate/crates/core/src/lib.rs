//! Elemental-image-array (EIA) light-field codec built on 4-D Epanechnikov
//! mixture regression.
//!
//! The encoder samples a key-EIA at a fixed interval, scans it into a
//! pseudo video sequence, fits per-block 4-D kernel mixtures with a
//! rate-distortion model-count search, and entropy codes the quantized
//! parameters. The decoder regresses the key-EIA back from the models and
//! predicts every other elemental image from its key neighbours using the
//! detected parallax and corner-shadow models.

pub mod amls;
pub mod codec;
pub mod color;
pub mod emr;
pub mod error;
pub mod geometry;
pub mod image_io;
pub mod kernel;
pub mod lfbr;
pub mod pipeline;
pub mod preprocess;
pub mod quality;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Channel, CodecConfig, EiaGrid, KeyEia, Plane, PvsBlock, Sample4D};
pub use kernel::{ExpertParams, KernelKind, MixtureModel};
pub use pipeline::{decode, encode, DecodeOptions, EncodeOutput, EncodeStats};
pub use quality::QualityReport;
