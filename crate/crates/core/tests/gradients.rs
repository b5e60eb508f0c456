//! Analytic gradients against central finite differences on ten random
//! small networks per loss.

mod support;

use support::gradcheck::{elbo_case, estep_case, infogan_case};

const TOL: f64 = 1e-4;

#[test]
fn elbo_gradients() {
    for i in 0..10 {
        let e = elbo_case(i);
        assert!(e < TOL, "net {i}: max relative error {e:e}");
    }
}

#[test]
fn infogan_gradients_all_three_losses() {
    for i in 0..10 {
        let [d, g, info] = infogan_case(i);
        assert!(d < TOL && g < TOL && info < TOL, "net {i}: d {d:e} g {g:e} info {info:e}");
    }
}

#[test]
fn estep_surrogate_gradient() {
    for i in 0..10 {
        let e = estep_case(i);
        assert!(e < TOL, "net {i}: max relative error {e:e}");
    }
}
