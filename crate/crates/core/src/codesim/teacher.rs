use rand::Rng;

use super::repcode::{ErrorConfig, DETECTORS};
use super::NoiseModel;
use crate::autodiff::logistic;
use crate::error::Result;
use crate::seeding::{rng, stage_seed, stream_rng};

const HIDDEN: usize = 16;
const TARGET_POSITIVE_RATE: f64 = 0.08;
const CALIBRATION_SAMPLES: u64 = 4096;

/// Fixed random two-layer network whose sigmoid output is the label posterior.
#[derive(Clone, Debug)]
pub struct Teacher {
    inputs: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    bias: f64,
}

impl Teacher {
    /// Weights drawn from `teacher_seed`; the output bias is bisected so that
    /// the mean posterior over syndromes of the model hits 8%.
    pub fn calibrated(model: &NoiseModel) -> Result<Self> {
        model.validate()?;
        let inputs = DETECTORS * model.rounds;
        let mut r = rng(stage_seed(model.teacher_seed, "teacher-weights"));
        let w1 = (0..HIDDEN * inputs).map(|_| r.gen_range(-2.0..2.0)).collect();
        let b1 = (0..HIDDEN).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w2 = (0..HIDDEN).map(|_| r.gen_range(-2.0..2.0)).collect();
        let mut teacher = Teacher { inputs, w1, b1, w2, bias: 0.0 };

        let calib_seed = stage_seed(model.teacher_seed, "teacher-calibration");
        let raw: Vec<f64> = (0..CALIBRATION_SAMPLES)
            .map(|i| {
                let cfg = ErrorConfig::sample(model.p, model.q, model.rounds, &mut stream_rng(calib_seed, i));
                teacher.raw_logit(&cfg.outcome().0)
            })
            .collect();
        let rate = |b: f64| raw.iter().map(|z| logistic(z + b)).sum::<f64>() / raw.len() as f64;
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < TARGET_POSITIVE_RATE {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        teacher.bias = 0.5 * (lo + hi);
        Ok(teacher)
    }

    fn raw_logit(&self, bits: &[u8]) -> f64 {
        let mut out = 0.0;
        for h in 0..HIDDEN {
            let pre: f64 = self.b1[h]
                + (0..self.inputs).map(|i| self.w1[h * self.inputs + i] * f64::from(bits[i])).sum::<f64>();
            out += self.w2[h] * pre.tanh();
        }
        out
    }

    pub fn logit(&self, bits: &[u8]) -> f64 {
        self.raw_logit(bits) + self.bias
    }

    pub fn posterior(&self, bits: &[u8]) -> f64 {
        logistic(self.logit(bits))
    }
}
