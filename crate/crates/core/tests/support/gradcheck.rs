//! Central finite-difference gradient checks over small random networks.
//! Shared by the core gradient tests and the acceptance suite.

#![allow(dead_code)]

use genrl::empolicy::{estep_surrogate, states_matrix, LatentPolicy, RolloutBatch};
use genrl::genmodels::{infogan_gradients, vae_gradients, vae_loss_with_noise, Architecture, InfoGanModel, TrajShape, VaeModel};
use genrl::numkit::{Matrix, Mlp, RngStream, StreamRng};
use genrl::trajenv::GoalState;

pub const H: f64 = 1e-5;

/// Denominator floor of the relative error; keeps gradients that are zero
/// in both computations (dead ReLUs) from dividing by zero.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Max relative error between `analytic` and central differences of `f`
/// around `params`.
pub fn check(params: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let x = p[i];
        p[i] = x + H;
        let up = f(&p);
        p[i] = x - H;
        let down = f(&p);
        p[i] = x;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn with_params(net: &Mlp, p: &[f64]) -> Mlp {
    let mut n = net.clone();
    n.set_params(p).unwrap();
    n
}

/// Random widths in `[2, 16]` for a net of `depth` hidden layers.
pub fn widths(r: &mut StreamRng, depth: usize) -> Vec<usize> {
    (0..depth).map(|_| 2 + r.below(15)).collect()
}

pub fn random_arch(r: &mut StreamRng) -> Architecture {
    Architecture {
        decoder_hidden: widths(r, 2),
        batch_norm: true,
        encoder_hidden: widths(r, 2),
        disc_trunk: widths(r, 2),
        q_hidden: 2 + r.below(15),
    }
}

fn random_matrix(r: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * r.normal())
}

/// Max relative error of the ELBO gradient (encoder and decoder) on net `i`.
pub fn elbo_case(i: u64) -> f64 {
    let rng = RngStream::new(100 + i);
    let mut r = rng.named("case").rng();
    let shape = TrajShape::new(3 + r.below(4), 2);
    let k = 1 + r.below(3);
    let mut model = VaeModel::new(shape, k, &random_arch(&mut r), 2.0, &rng).unwrap();
    model.beta = 0.3 + r.uniform(0.0, 1.0);
    let n = 6;
    let batch = random_matrix(&mut r, n, shape.len(), 0.5);
    let noise = random_matrix(&mut r, n, k, 1.0);
    let (_, g) = vae_gradients(&model, &batch, &noise).unwrap();
    let enc = model.encoder.params();
    let e = check(&enc, &g.encoder, |p| {
        let mut m = model.clone();
        m.encoder = with_params(&model.encoder, p);
        vae_loss_with_noise(&m, &batch, &noise).unwrap().total
    });
    let dec = model.decoder.params();
    let d = check(&dec, &g.decoder, |p| {
        let mut m = model.clone();
        m.decoder = with_params(&model.decoder, p);
        vae_loss_with_noise(&m, &batch, &noise).unwrap().total
    });
    e.max(d)
}

/// Max relative error over `d_loss`, `g_loss` and `info_loss`, each against
/// every parameter group, on net `i`.
pub fn infogan_case(i: u64) -> [f64; 3] {
    let rng = RngStream::new(200 + i);
    let mut r = rng.named("case").rng();
    let shape = TrajShape::new(3 + r.below(4), 2);
    let k = 1 + r.below(3);
    let model = InfoGanModel::new(shape, k, &random_arch(&mut r), 1.5, &rng).unwrap();
    let n = 6;
    let real = random_matrix(&mut r, n, shape.len(), 0.5);
    let latents = Matrix::from_fn(n, k, |_, _| r.uniform(-1.0, 1.0));
    let (_, g) = infogan_gradients(&model, &real, &latents).unwrap();

    type Setter = fn(&mut InfoGanModel, &[f64]);
    let groups: [(Vec<f64>, Setter); 4] = [
        (model.generator.params(), |m, p| m.generator.set_params(p).unwrap()),
        (model.trunk.params(), |m, p| m.trunk.set_params(p).unwrap()),
        (model.d_head.params(), |m, p| m.d_head.set_params(p).unwrap()),
        (model.q_head.params(), |m, p| m.q_head.set_params(p).unwrap()),
    ];
    let per_loss = [&g.d_loss, &g.g_loss, &g.info_loss];
    let mut out = [0.0f64; 3];
    for (li, grads) in per_loss.iter().enumerate() {
        let analytic = [&grads.generator, &grads.trunk, &grads.d_head, &grads.q_head];
        for (gi, (params, set)) in groups.iter().enumerate() {
            let e = check(params, analytic[gi], |p| {
                let mut m = model.clone();
                set(&mut m, p);
                let (l, _) = infogan_gradients(&m, &real, &latents).unwrap();
                [l.d_loss, l.g_loss, l.info_loss][li]
            });
            out[li] = out[li].max(e);
        }
    }
    out
}

/// Max relative error of the E-step surrogate gradient on net `i`.
pub fn estep_case(i: u64) -> f64 {
    let rng = RngStream::new(300 + i);
    let mut r = rng.named("case").rng();
    let k = 1 + r.below(3);
    let depth = 1 + r.below(2);
    let hidden = widths(&mut r, depth);
    let pi = LatentPolicy::new(k, &hidden, &mut r).unwrap();
    let mut q = pi.clone();
    let displaced: Vec<f64> = q.net.params().iter().map(|x| x + 0.05 * r.normal()).collect();
    q.net.set_params(&displaced).unwrap();
    let n = 12;
    let states: Vec<GoalState> = (0..n)
        .map(|_| GoalState {
            target: [r.uniform(0.65, 1.3), r.uniform(-0.4, 0.4)],
        })
        .collect();
    let (latents, log_pi) = pi.sample(&states_matrix(&states), &mut r).unwrap();
    let batch = RolloutBatch {
        states,
        latents,
        trajectories: Matrix::zeros(0, 0),
        rewards: vec![0.0; n],
        advantages: (0..n).map(|_| r.normal()).collect(),
        log_pi,
    };
    let w = 0.5 + r.uniform(0.0, 1.0);
    let (_, g) = estep_surrogate(&q, &pi, &batch, w).unwrap();
    check(&q.net.params(), &g, |p| {
        let mut qq = q.clone();
        qq.net.set_params(p).unwrap();
        estep_surrogate(&qq, &pi, &batch, w).unwrap().0.value
    })
}
