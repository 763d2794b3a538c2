//! Encoder-side analysis: corner-shadow line models, parallax offsets
//! between neighbouring EIs, and their side-information encodings.

pub mod parallax;
pub mod shadow;
pub mod side_info;

pub use parallax::{check_interval, detect_parallax, max_interval, median_correct, ParallaxMap};
pub use shadow::{fit_shadow_model, EiShadow, QuadrantShadow, ShadowLine, ShadowModel};
pub use side_info::{decode_parallax, decode_shadow, encode_parallax, encode_shadow};
