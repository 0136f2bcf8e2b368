//! Dense-array computation graphs with reverse-mode gradients and
//! graph-resident forward-mode tangents for coordinate derivatives.

mod array;
mod graph;
mod params;

pub use array::Array;
pub use graph::{coordinate_derivative, Graph, Unary, Var};
pub use params::{Gradients, ParamSet};

#[cfg(test)]
mod tests;
