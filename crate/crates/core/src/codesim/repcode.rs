use rand::Rng;

/// Data bits of the distance-5 repetition code.
pub const DATA_QUBITS: usize = 5;
/// Parity checks `d_i ⊕ d_{i+1}`, one detector node each.
pub const DETECTORS: usize = DATA_QUBITS - 1;

/// One realization of phenomenological noise over `rounds` rounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorConfig {
    pub rounds: usize,
    /// `data_flips[r * DATA_QUBITS + i]`: data bit `i` flips in round `r + 1`.
    pub data_flips: Vec<bool>,
    /// `meas_flips[r * DETECTORS + i]`: check `i` is misread in round `r + 1`.
    pub meas_flips: Vec<bool>,
}

impl ErrorConfig {
    pub fn n_locations(rounds: usize) -> usize {
        (DATA_QUBITS + DETECTORS) * rounds
    }

    pub fn sample<R: Rng>(p: f64, q: f64, rounds: usize, rng: &mut R) -> Self {
        let data_flips = (0..DATA_QUBITS * rounds).map(|_| rng.gen::<f64>() < p).collect();
        let meas_flips = (0..DETECTORS * rounds).map(|_| rng.gen::<f64>() < q).collect();
        ErrorConfig { rounds, data_flips, meas_flips }
    }

    /// Configuration number `index`; bit `k` of the index is fault location
    /// `k`, data flips first then measurement flips.
    pub fn from_index(index: u64, rounds: usize) -> Self {
        let nd = DATA_QUBITS * rounds;
        let nm = DETECTORS * rounds;
        ErrorConfig {
            rounds,
            data_flips: (0..nd).map(|k| index >> k & 1 == 1).collect(),
            meas_flips: (0..nm).map(|k| index >> (nd + k) & 1 == 1).collect(),
        }
    }

    pub fn probability(&self, p: f64, q: f64) -> f64 {
        let d = self.data_flips.iter().filter(|&&f| f).count() as i32;
        let m = self.meas_flips.iter().filter(|&&f| f).count() as i32;
        let nd = self.data_flips.len() as i32;
        let nm = self.meas_flips.len() as i32;
        p.powi(d) * (1.0 - p).powi(nd - d) * q.powi(m) * (1.0 - q).powi(nm - m)
    }

    /// Node-major detection events and the final value of data bit 0.
    pub fn outcome(&self) -> (Vec<u8>, u8) {
        let t = self.rounds;
        let mut data = [false; DATA_QUBITS];
        let mut prev = [false; DETECTORS];
        let mut bits = vec![0u8; DETECTORS * t];
        for r in 0..t {
            for (i, d) in data.iter_mut().enumerate() {
                *d ^= self.data_flips[r * DATA_QUBITS + i];
            }
            for i in 0..DETECTORS {
                let m = data[i] ^ data[i + 1] ^ self.meas_flips[r * DETECTORS + i];
                bits[i * t + r] = u8::from(m ^ prev[i]);
                prev[i] = m;
            }
        }
        (bits, u8::from(data[0]))
    }
}
