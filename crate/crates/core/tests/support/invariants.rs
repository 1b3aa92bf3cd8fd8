//! Loss identities and fusion consistency on seeded random inputs. Shared
//! with the workspace acceptance target.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgbt_core::fusion::{fuse_stage1, fuse_stage2, HfmParams};
use rgbt_core::losses::self_supervised_loss;
use rgbt_core::tensor::nn::Init;
use rgbt_core::tensor::{Graph, ParamStore, Scalar, Tensor};

pub type Check = Result<(), String>;

pub fn self_sup(u: &[f64], v: &[f64]) -> f64 {
    let mut g = Graph::<f64>::new();
    let a = g.input(Tensor::from_vec(&[1, u.len()], u.to_vec()).unwrap());
    let b = g.input(Tensor::from_vec(&[1, v.len()], v.to_vec()).unwrap());
    let l = self_supervised_loss(&mut g, a, b).unwrap();
    g.value(l).data()[0]
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

/// Component of `v` orthogonal to `u` (one Gram-Schmidt step).
pub fn orthogonal_to(u: &[f64], v: &[f64]) -> Vec<f64> {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    v.iter().zip(u).map(|(b, a)| b - dot / uu * a).collect()
}

fn expect(got: f64, want: f64, tol: f64, what: &str) -> Check {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, expected {want} ± {tol:e}"))
    }
}

/// Identical, orthogonal and antipodal pairs give 0, 2 and 4 to 1e-12;
/// positive rescaling of either vector leaves the loss unchanged to 1e-9.
pub fn check_loss_identities(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..cases {
        let n = rng.random_range(2..64);
        let u = random_vec(&mut rng, n);
        let w = random_vec(&mut rng, n);
        let v = orthogonal_to(&u, &w);
        let c = rng.random_range(0.1..10.0);
        let minus: Vec<f64> = u.iter().map(|x| -c * x).collect();
        expect(self_sup(&u, &u), 0.0, 1e-12, &format!("case {k} identical"))?;
        expect(self_sup(&u, &v), 2.0, 1e-12, &format!("case {k} orthogonal"))?;
        expect(self_sup(&u, &minus), 4.0, 1e-12, &format!("case {k} antipodal"))?;
        let (a, b) = (rng.random_range(1e-3..1e3), rng.random_range(1e-3..1e3));
        let au: Vec<f64> = u.iter().map(|x| a * x).collect();
        let bw: Vec<f64> = w.iter().map(|x| b * x).collect();
        expect(self_sup(&au, &bw), self_sup(&u, &w), 1e-9, &format!("case {k} scale a={a} b={b}"))?;
    }
    Ok(())
}

pub fn random_features<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-4.0..4.0)))
}

/// `fuse_stage2(R, R, w)` and `fuse_stage1(R, w)` as raw values.
pub fn fused_pair<T: Scalar>(r: &Tensor<T>, w: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let mut g = Graph::<T>::new();
    let rv = g.input(r.clone());
    let wv = g.input(w.clone());
    let one = fuse_stage1(&mut g, rv, wv).unwrap();
    let two = fuse_stage2(&mut g, rv, rv, wv).unwrap();
    (g.value(one).data().to_vec(), g.value(two).data().to_vec())
}

/// Gate output for descriptors `p` with a freshly initialised module.
pub fn gate_values(channels: usize, ratio: usize, init: Init, p: &Tensor<f64>, seed: u64) -> Vec<f64> {
    let mut store = ParamStore::<f64>::new();
    let hfm = HfmParams::new(&mut store, 1, channels, ratio, init, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut g = Graph::new();
    let pv = g.input(p.clone());
    let w = hfm.gate(&mut g, &store, pv).unwrap();
    g.value(w).data().to_vec()
}

fn bitwise<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
}

/// Stage consistency in both precisions, gates strictly inside (0, 1), and a
/// zero-initialised gate giving exactly 1.5·R in stage 1.
pub fn check_fusion(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..cases {
        let (b, c) = (rng.random_range(1..4), 4 * rng.random_range(1..8));
        let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
        let r64 = random_features::<f64>(&mut rng, &[b, c, h, w]);
        let w64 = Tensor::from_fn(&[b, c], |_| rng.random_range(0.0..1.0));
        let (one, two) = fused_pair(&r64, &w64);
        if !bitwise(&one, &two) {
            return Err(format!("case {k}: f64 stage 2 with T = R differs from stage 1"));
        }
        let (one, two) = fused_pair(&r64.cast::<f32>(), &w64.cast::<f32>());
        if !bitwise(&one, &two) {
            return Err(format!("case {k}: f32 stage 2 with T = R differs from stage 1"));
        }
        let p = random_features::<f64>(&mut rng, &[b, c]);
        let gates = gate_values(c, 4, Init::UniformFanIn, &p, seed + k as u64);
        if let Some(v) = gates.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(format!("case {k}: gate value {v} outside (0, 1)"));
        }
        let zero = gate_values(c, 4, Init::Zeros, &p, 0);
        let mut g = Graph::<f64>::new();
        let rv = g.input(r64.clone());
        let wv = g.input(Tensor::from_vec(&[b, c], zero).unwrap());
        let y = fuse_stage1(&mut g, rv, wv).unwrap();
        let want: Vec<f64> = r64.data().iter().map(|x| 1.5 * x).collect();
        if !bitwise(g.value(y).data(), &want) {
            return Err(format!("case {k}: zero-initialised gate does not give 1.5·R"));
        }
    }
    Ok(())
}
