#![allow(dead_code)]

use pdlab::datagen::{Example, Label, FEATURES};
use pdlab::nnet::{Activation, ArchKind, ArchitectureSpec, Network};
use pdlab::rng::stream;
use rand::seq::index::sample;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;
/// Below this magnitude relative error is measured against the floor.
pub const REL_FLOOR: f64 = 1e-2;

/// The six architectures, with the quadratic tower narrowed and the wide
/// model checked on a parameter subset to keep finite differences cheap.
pub fn gradcheck_archs() -> Vec<ArchKind> {
    vec![
        ArchKind::Linear,
        ArchKind::SingleHidden,
        ArchKind::DoubleHidden,
        ArchKind::tower(),
        ArchKind::wide(),
        ArchKind::QuadTower(vec![24, 12]),
    ]
}

pub fn activations() -> Vec<Activation> {
    vec![
        Activation::IDENTITY,
        Activation::RELU,
        Activation::smelu(1.0).unwrap(),
        Activation::swish(1.0).unwrap(),
    ]
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel: f64,
}

fn random_example<R: Rng>(rng: &mut R) -> Example {
    let mut x = [0u8; FEATURES];
    for v in &mut x {
        *v = rng.random_bool(0.5) as u8;
    }
    let y = if rng.random_bool(0.5) { Label::Pos } else { Label::Neg };
    Example { x, y }
}

fn near_kink(act: &Activation, pre: &[f64]) -> Vec<bool> {
    pre.iter().map(|&u| act.kink_distance(u) < KINK_MARGIN).collect()
}

/// Central-difference check of `backward` on `inputs` random examples.
/// At most `per_input` parameters are checked per example (all when the
/// network is smaller). A parameter is skipped when it moves a
/// pre-activation that sits within the kink margin.
pub fn gradient_check(spec: ArchitectureSpec, seed: u64, inputs: usize, per_input: usize) -> GradCheck {
    let mut rng = stream(seed);
    let mut net: Network<f64> = Network::init(spec.clone(), &mut rng).unwrap();
    // Nonzero biases so that every code path sees generic values.
    for v in net.params_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    let act = spec.activation;
    let n = net.param_count();
    let mut out = GradCheck::default();
    for _ in 0..inputs {
        let ex = random_example(&mut rng);
        let grad = net.backward(&ex);
        let base_pre = net.pre_activations(&ex.x);
        let risky = near_kink(&act, &base_pre);
        let idx: Vec<usize> = if n <= per_input {
            (0..n).collect()
        } else {
            sample(&mut rng, n, per_input).into_vec()
        };
        for i in idx {
            let w = net.params()[i];
            net.params_mut()[i] = w + FD_STEP;
            let lp = net.loss(&ex);
            let pre_p = net.pre_activations(&ex.x);
            net.params_mut()[i] = w - FD_STEP;
            let lm = net.loss(&ex);
            let pre_m = net.pre_activations(&ex.x);
            net.params_mut()[i] = w;
            let moves_risky = risky
                .iter()
                .enumerate()
                .any(|(k, &r)| r && (pre_p[k] != base_pre[k] || pre_m[k] != base_pre[k]));
            if moves_risky {
                out.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let analytic = grad.values()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            out.max_rel = out.max_rel.max(rel);
            out.checked += 1;
        }
    }
    out
}
