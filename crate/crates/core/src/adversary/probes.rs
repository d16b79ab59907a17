//! Hand-built classifiers with known attack surfaces.

use crate::decoder::Classifier;
use crate::error::Result;
use crate::graph::SyndromeGraph;

/// Logit `+magnitude` iff the bit at `(node, time)` is set, `-magnitude` otherwise.
#[derive(Clone, Copy, Debug)]
pub struct PlantedTrigger {
    pub node: usize,
    pub time: usize,
    pub magnitude: f64,
}

impl PlantedTrigger {
    pub fn new(node: usize, time: usize) -> Self {
        PlantedTrigger { node, time, magnitude: 10.0 }
    }
}

impl Classifier for PlantedTrigger {
    fn logit(&self, g: &SyndromeGraph) -> Result<f64> {
        Ok(if g.feature(self.node, self.time) != 0.0 { self.magnitude } else { -self.magnitude })
    }
}

/// Ignores its input.
#[derive(Clone, Copy, Debug)]
pub struct ConstantLogit(pub f64);

impl Classifier for ConstantLogit {
    fn logit(&self, _: &SyndromeGraph) -> Result<f64> {
        Ok(self.0)
    }
}
