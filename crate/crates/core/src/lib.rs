//! Bayesian image segmentation with a Potts smoothness prior, sped up by a
//! renormalization-group treatment of the coupling.
//!
//! Hyperparameters (the Potts coupling and per-label Gaussian color models)
//! are estimated on a decimated copy of the image, the coupling is mapped
//! back to full resolution through a closed-form inverse recursion, and the
//! final labeling is the per-site posterior-marginal maximizer computed by
//! loopy belief propagation.

pub mod colormodel;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod io;
pub mod lbp;
mod par;
pub mod pipeline;
pub mod rgflow;
pub mod rng;
pub mod synth;

pub use colormodel::GaussianLabelModel;
pub use error::{Error, Result};
pub use grid::{ColorImage, LabelField, Torus};
