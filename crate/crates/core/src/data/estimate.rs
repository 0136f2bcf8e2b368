use serde::{Deserialize, Serialize};

use super::domain::QueryCoordinate;
use super::units::UnitSystem;
use crate::error::{Error, Result};

/// Tensor-product grid of normalized query coordinates.
///
/// Point `(i, j)` is `(xs[j], ts[i])`; row-major flattening runs over `xs`
/// fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Lattice {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || ts.is_empty() {
            return Err(Error::InvalidArgument("lattice needs at least one x and one t".into()));
        }
        if let Some(bad) = xs.iter().chain(&ts).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "lattice coordinate {bad} outside the unit square"
            )));
        }
        Ok(Self { xs, ts })
    }

    /// `n` evenly spaced values covering `[0, 1]`.
    pub fn uniform(nx: usize, nt: usize) -> Result<Self> {
        let even = |n: usize| -> Vec<f64> {
            if n == 1 {
                vec![0.0]
            } else {
                (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
            }
        };
        Self::new(even(nx), even(nt))
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<QueryCoordinate> {
        self.ts
            .iter()
            .flat_map(|&t| self.xs.iter().map(move |&x| QueryCoordinate { x, t }))
            .collect()
    }
}

/// Estimated speed and flow, in physical units, over a [`Lattice`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateField {
    pub units: UnitSystem,
    pub lattice: Lattice,
    pub speed: Vec<f64>,
    pub flow: Vec<f64>,
}

impl EstimateField {
    pub fn new(units: UnitSystem, lattice: Lattice, speed: Vec<f64>, flow: Vec<f64>) -> Result<Self> {
        for v in [&speed, &flow] {
            if v.len() != lattice.len() {
                return Err(Error::ShapeMismatch {
                    op: "estimate",
                    lhs: vec![lattice.ts.len(), lattice.xs.len()],
                    rhs: vec![v.len()],
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { op: "estimate" });
            }
        }
        Ok(Self {
            units,
            lattice,
            speed,
            flow,
        })
    }

    pub fn rows(&self) -> usize {
        self.lattice.ts.len()
    }

    pub fn cols(&self) -> usize {
        self.lattice.xs.len()
    }

    pub fn speed_at(&self, row: usize, col: usize) -> f64 {
        self.speed[row * self.cols() + col]
    }

    pub fn flow_at(&self, row: usize, col: usize) -> f64 {
        self.flow[row * self.cols() + col]
    }
}
