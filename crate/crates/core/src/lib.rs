//! Cryo-EM grid-square screening: montage assembly, square extraction,
//! automatic labels, and an attention-guided semi-supervised scoring network
//! built on a small differentiable array engine.

pub mod autolabel;
pub mod diff;
pub mod extract;
pub mod imageio;
pub mod model;
pub mod montage;
pub mod mrc;
pub mod score;
pub mod synth;
pub mod train;

pub use extract::{ExtractConfig, SquareImage};
pub use montage::Montage;
pub use mrc::{MrcError, MrcVolume};
pub use score::{Attribute, LabelRecord, ScoreVector};
