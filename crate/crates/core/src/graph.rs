//! Time-flattened syndrome graphs and the action-index layout.
//!
//! A syndrome over `n_s` detectors and `t` rounds becomes a graph with one
//! node per detector whose feature vector holds that detector's `t` event
//! bits. Edges form the complete digraph including self-loops. Bit `b`,
//! action `b` and heatmap cell `b` all refer to `(node, time) = (b / t, b % t)`.

use crate::codesim::SyndromeRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionIndex(pub usize);

impl ActionIndex {
    pub fn encode(node: usize, time: usize, t: usize) -> Self {
        ActionIndex(node * t + time)
    }

    /// `(node, time)` for rounds-per-node `t`.
    pub fn decode(self, t: usize) -> (usize, usize) {
        (self.0 / t, self.0 % t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyndromeGraph {
    n_s: usize,
    t: usize,
    /// `n_s × t` row-major, entries in {0.0, 1.0}.
    features: Vec<f64>,
}

impl SyndromeGraph {
    pub fn from_bits(bits: &[u8], n_s: usize, t: usize) -> Result<Self> {
        if bits.len() != n_s * t {
            return Err(Error::Dimension(format!(
                "syndrome has {} bits, graph needs {n_s}x{t}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Contract("syndrome bits must be 0 or 1".into()));
        }
        Ok(SyndromeGraph { n_s, t, features: bits.iter().map(|&b| f64::from(b)).collect() })
    }

    pub fn zeros(n_s: usize, t: usize) -> Self {
        SyndromeGraph { n_s, t, features: vec![0.0; n_s * t] }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_s
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn n_actions(&self) -> usize {
        self.n_s * self.t
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn node_features(&self, node: usize) -> &[f64] {
        &self.features[node * self.t..(node + 1) * self.t]
    }

    pub fn feature(&self, node: usize, time: usize) -> f64 {
        self.features[node * self.t + time]
    }

    /// Complete digraph with self-loops as `(target, source)` pairs, grouped by target.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        complete_edges(self.n_s)
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.features.iter().map(|&f| u8::from(f != 0.0)).collect()
    }

    /// Bits packed little-endian into an integer (bit `b` of the key is bit `b` of the syndrome).
    pub fn key(&self) -> u64 {
        self.features
            .iter()
            .enumerate()
            .fold(0u64, |k, (b, &f)| if f != 0.0 { k | (1 << b) } else { k })
    }

    /// Returns a copy with the bit at `a` toggled.
    pub fn apply_flip(&self, a: ActionIndex) -> Result<Self> {
        if a.0 >= self.features.len() {
            return Err(Error::Contract(format!(
                "action {} outside [0, {})",
                a.0,
                self.features.len()
            )));
        }
        let mut out = self.clone();
        out.features[a.0] = 1.0 - out.features[a.0];
        Ok(out)
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_s];
        if perm.len() != self.n_s || perm.iter().any(|&p| p >= self.n_s || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract(format!("{perm:?} is not a permutation of {} nodes", self.n_s)));
        }
        let features = perm.iter().flat_map(|&p| self.node_features(p).to_vec()).collect();
        Ok(SyndromeGraph { n_s: self.n_s, t: self.t, features })
    }
}

pub fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

pub fn to_graph(record: &SyndromeRecord, n_s: usize, t: usize) -> Result<SyndromeGraph> {
    SyndromeGraph::from_bits(&record.bits, n_s, t)
}
