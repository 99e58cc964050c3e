//! Differentiable marker-gene selection for single-cell expression data.
//!
//! The crate is layered bottom-up: [`tensor`] provides a dense matrix and a
//! reverse-mode tape, [`nn`] builds layers and optimizers on it,
//! [`selector`] implements Gumbel-Softmax subset selection, [`model`]
//! couples the selector with a classifier and a VAE, and [`eval`] scores the
//! resulting marker sets. [`experiment`] wires them into the end-to-end
//! protocols used by the command-line tool.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod rng;
pub mod selector;
pub mod tensor;

pub use data::{Dataset, PreprocessMode, SplitIndices, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{ClassificationMetrics, ReconReport};
pub use model::{MarkerModel, Method, TrainConfig, TrainReport};
pub use rng::Rng;
pub use selector::{SelectorState, TemperatureSchedule};
pub use tensor::{Graph, Matrix, Var};
