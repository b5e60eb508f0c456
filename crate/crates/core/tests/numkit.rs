//! numkit against independent oracles.

mod support;

use genrl::numkit::{lstsq, Activation, BnMode, LayerSpec, Matrix, Mlp, RngStream};
use support::gradcheck::check;

/// Solves the normal equations `(XᵀX) c = Xᵀy` by Gauss-Jordan elimination.
fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..x.rows()).map(|r| x.get(r, i) * x.get(r, j)).sum();
        }
        a[i][p] = (0..x.rows()).map(|r| x.get(r, i) * y[r]).sum();
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let row_c = a[c].clone();
                for (v, w) in a[r].iter_mut().zip(&row_c) {
                    *v -= f * w;
                }
            }
        }
    }
    a.iter().map(|row| row[p]).collect()
}

#[test]
fn lstsq_matches_normal_equations() {
    let mut r = RngStream::new(11).rng();
    let x = Matrix::from_fn(20, 4, |_, _| r.normal());
    let truth = [0.7, -1.3, 2.0, 0.25];
    let y: Vec<f64> = (0..20).map(|i| (0..4).map(|j| x.get(i, j) * truth[j]).sum()).collect();
    let coef = lstsq(&x, &Matrix::from_vec(20, 1, y.clone()).unwrap()).unwrap();
    let oracle = normal_equations(&x, &y);
    for j in 0..4 {
        assert!((coef.get(j, 0) - truth[j]).abs() < 1e-10);
        assert!((coef.get(j, 0) - oracle[j]).abs() < 1e-10);
    }
}

#[test]
fn three_layer_net_matches_finite_differences() {
    let mut r = RngStream::new(12).rng();
    let specs = [
        LayerSpec::new(7, Activation::Tanh),
        LayerSpec::bn(6, Activation::Sigmoid),
        LayerSpec::new(3, Activation::Identity),
    ];
    let net = Mlp::new(4, &specs, &mut r).unwrap();
    let x = Matrix::from_fn(5, 4, |_, _| r.normal());
    let up = Matrix::from_fn(5, 3, |_, _| r.normal());
    let loss = |n: &Mlp| {
        let out = n.forward_cached(&x, BnMode::Batch).unwrap();
        out.output().as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    };
    let cache = net.forward_cached(&x, BnMode::Batch).unwrap();
    let g = net.backward(&cache, &up).unwrap();
    let err = check(&net.params(), &g.params, |p| {
        let mut n = net.clone();
        n.set_params(p).unwrap();
        loss(&n)
    });
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn same_stream_same_draws() {
    let s = RngStream::new(5).descend(&[3, 1]);
    let a: Vec<f64> = s.rng().normal_vec(16);
    let b: Vec<f64> = s.rng().normal_vec(16);
    assert_eq!(a, b);
    let net1 = Mlp::new(3, &[LayerSpec::new(4, Activation::ReLU)], &mut s.rng()).unwrap();
    let net2 = Mlp::new(3, &[LayerSpec::new(4, Activation::ReLU)], &mut s.rng()).unwrap();
    assert_eq!(net1.to_json().unwrap(), net2.to_json().unwrap());
}
