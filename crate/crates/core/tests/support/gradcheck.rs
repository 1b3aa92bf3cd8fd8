//! Central finite differences of the complete stage-2 hybrid objective with
//! respect to model parameters. Coordinates whose ±step interval contains a
//! ReLU kink are detected from disagreeing one-sided differences and excluded.
//! Shared with the workspace acceptance target.

#![allow(dead_code)]

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgbt_core::data::{generate_pairs, make_batch, SynthConfig};
use rgbt_core::losses::{total_loss, LossConfig, Objective, Stage};
use rgbt_core::model::{Batch, Model, ModelConfig};
use rgbt_core::tensor::{Graph, Var};

pub const SIZE: usize = 32;
pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
pub const MIN_CHECKED: usize = 50;
pub const MAX_KINK_FRACTION: f64 = 0.2;
const KINK: f64 = 1e-3;
const PER_TENSOR: usize = 3;

#[derive(Debug, Default)]
pub struct Summary {
    pub checked: usize,
    pub kinks: usize,
    pub worst: f64,
    /// Parameter prefixes that received a gradient.
    pub prefixes: Vec<String>,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn verdict(&self) -> Result<(), String> {
        if let Some(f) = self.failures.first() {
            return Err(format!("{} of {} coordinates off, first: {f}", self.failures.len(), self.checked));
        }
        if self.checked < MIN_CHECKED {
            return Err(format!("only {} coordinates checked", self.checked));
        }
        if self.kinks as f64 > MAX_KINK_FRACTION * (self.checked + self.kinks) as f64 {
            return Err(format!("{} of {} coordinates straddle a kink", self.kinks, self.checked + self.kinks));
        }
        Ok(())
    }
}

fn batch() -> Batch<f64> {
    let synth = SynthConfig {
        n_samples: 2,
        n_test: 0,
        size: SIZE,
        ..SynthConfig::default()
    };
    let (train, _, _) = generate_pairs(&synth).unwrap();
    make_batch(&train.iter().collect::<Vec<_>>()).unwrap()
}

fn loss(model: &mut Model<f64>, batch: &Batch<f64>) -> (f64, Graph<f64>, Var) {
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch.rgb, Some(&batch.thermal), Stage::Stage2, true).unwrap();
    let (l, _) =
        total_loss(&mut g, &out.loss_inputs(), &batch.gt, Stage::Stage2, Objective::Hybrid, &LossConfig::default())
            .unwrap();
    (g.value(l).data()[0], g, l)
}

/// Checks up to three random coordinates of every parameter tensor.
pub fn run(seed: u64) -> Summary {
    let batch = batch();
    let mut model = Model::<f64>::new(&ModelConfig::new(SIZE), seed).unwrap();
    let (base, g, l) = loss(&mut model, &batch);
    let grads = g.backward(l);
    let analytic: Vec<_> = model
        .store
        .weight_ids()
        .filter_map(|id| grads.param(id).map(|t| (id, t.clone())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(11));
    let mut s = Summary::default();
    for (id, grad) in &analytic {
        let name = model.store.name(*id).to_string();
        let prefix = name.split('.').next().unwrap_or("").to_string();
        if !s.prefixes.contains(&prefix) {
            s.prefixes.push(prefix);
        }
        let n = grad.len();
        for i in sample(&mut rng, n, n.min(PER_TENSOR)) {
            let orig = model.store.get(*id).data()[i];
            model.store.get_mut(*id).data_mut()[i] = orig + STEP;
            let (plus, _, _) = loss(&mut model, &batch);
            model.store.get_mut(*id).data_mut()[i] = orig - STEP;
            let (minus, _, _) = loss(&mut model, &batch);
            model.store.get_mut(*id).data_mut()[i] = orig;
            let forward = (plus - base) / STEP;
            let backward = (base - minus) / STEP;
            if (forward - backward).abs() > KINK * forward.abs().max(backward.abs()).max(1e-6) {
                s.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            s.worst = s.worst.max(err);
            if err >= TOLERANCE {
                s.failures.push(format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"));
            }
            s.checked += 1;
        }
    }
    s
}
