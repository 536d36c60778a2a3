//! Single-image classification shared by the sweep, the CLI and the service.

use crate::imaging::{self, Image, ResolutionTier};
use crate::network::{Model, NetworkError, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub prediction: Prediction,
    /// Geometry after optional tier degradation, before the input resize.
    pub width: u32,
    pub height: u32,
    /// A tier was requested but the source was already at or below it.
    pub native: bool,
}

/// Optional `degrade_to_tier`, then `to_input_tensor`, then `predict`.
pub fn classify(model: &Model, img: &Image, tier: Option<ResolutionTier>) -> Result<Classification, NetworkError> {
    let (degraded, native) = match tier {
        Some(t) => (
            imaging::degrade_to_tier(img, t),
            imaging::tier_geometry(img.width(), img.height(), t).is_none(),
        ),
        None => (img.clone(), false),
    };
    let input = imaging::to_input_tensor(&degraded, model.config().input_size as u32);
    Ok(Classification {
        prediction: model.predict(&input)?,
        width: degraded.width(),
        height: degraded.height(),
        native,
    })
}
