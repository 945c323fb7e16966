//! Data-generating process and random-number streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::link::expit;
use crate::randomization::assign_cir;
use crate::types::{Arm, AssignmentMechanism, PatientRecord, PilotData, PopulationSpec};

/// Stream holding the shared patient pool of a replication.
pub const POOL_STREAM: u64 = 0;
/// Stream holding the preliminary dataset of a replication.
pub const PILOT_STREAM: u64 = 1;

/// Independent generator for `(seed, replication, stream)`.
pub fn substream(seed: u64, replication: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Assignment stream of a named design; disjoint from the data streams.
pub fn design_stream(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h | (1 << 63)
}

/// One multivariate normal draw `mean + L z`.
pub fn draw_covariates<R: Rng + ?Sized>(pop: &PopulationSpec, rng: &mut R) -> Vec<f64> {
    let d = pop.dim();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let factor = pop.factor();
    (0..d).map(|i| pop.mean()[i] + (0..=i).map(|j| factor[i][j] * z[j]).sum::<f64>()).collect()
}

/// `(Y(1), Y(0))` from independent uniforms, treated arm first.
pub fn draw_potential_outcomes<R: Rng + ?Sized>(pop: &PopulationSpec, w: &[f64], rng: &mut R) -> (f64, f64) {
    let p1 = expit(pop.linear_predictor(Arm::Treatment, w));
    let p0 = expit(pop.linear_predictor(Arm::Control, w));
    let y1 = (rng.random::<f64>() < p1) as u8 as f64;
    let y0 = (rng.random::<f64>() < p0) as u8 as f64;
    (y1, y0)
}

/// A patient with both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub w: Vec<f64>,
    pub y1: f64,
    pub y0: f64,
}

impl Patient {
    pub fn outcome(&self, arm: Arm) -> f64 {
        if arm.is_treatment() {
            self.y1
        } else {
            self.y0
        }
    }
}

pub fn draw_patient<R: Rng + ?Sized>(pop: &PopulationSpec, rng: &mut R) -> Patient {
    let w = draw_covariates(pop, rng);
    let (y1, y0) = draw_potential_outcomes(pop, &w, rng);
    Patient { w, y1, y0 }
}

pub fn draw_pool<R: Rng + ?Sized>(pop: &PopulationSpec, n: usize, rng: &mut R) -> Vec<Patient> {
    (0..n).map(|_| draw_patient(pop, rng)).collect()
}

/// Preliminary dataset of `n` patients under 1:1 randomization.
pub fn draw_pilot<R: Rng + ?Sized>(pop: &PopulationSpec, n: usize, rng: &mut R) -> PilotData {
    let mechanism = AssignmentMechanism::Fixed { pi: 0.5 };
    let records = (0..n)
        .map(|_| {
            let p = draw_patient(pop, rng);
            let arm = assign_cir(0.5, rng).expect("0.5 is a valid probability");
            PatientRecord { stage: 0, y: p.outcome(arm), w: p.w, arm }
        })
        .collect();
    PilotData { records, mechanism }
}
