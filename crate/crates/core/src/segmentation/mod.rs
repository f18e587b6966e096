//! Segmentation strategies: ROI cropping, seeded region growing,
//! probability-map binarization with largest-component clean-up, and the
//! predictor dispatch used by the pipeline and the navigation service.

mod components;
mod predictor;
mod region;
mod roi;

pub use components::{binarize, label_components, postprocess, Connectivity};
pub use predictor::{
    crop_grid, prepare_input, run_predictor, run_predictor_with_hint, segment, Polarity, PredictorHandle,
    PredictorKind, Segmentation, Tolerance, DEFAULT_PREDICTOR_SPACING_MM, DEFAULT_THRESHOLD, DEFAULT_TIMEOUT_S,
    TIMEOUT_ENV,
};
pub use region::{region_grow, SeedPoint};
pub use roi::{embed_mask, roi_with_margin, ROI_MARGIN_MM};
