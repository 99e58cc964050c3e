//! Dense matrices and the reverse-mode tape.

mod graph;
mod matrix;

pub use graph::{softmax_rows, Graph, Var};
pub use matrix::Matrix;
