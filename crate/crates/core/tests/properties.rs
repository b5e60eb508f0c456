//! Property tests for the metric, environment and distance invariants.

use proptest::prelude::*;

use genrl::evalmetrics::{mmd2_unbiased, pearson_r, precision_recall};
use genrl::numkit::{pairwise_sq_dists, Matrix};
use genrl::trajenv::{reward_from_end_state, Environment, ExeKind, GoalState};

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    rows.prop_flat_map(move |r| {
        prop::collection::vec(-scale..scale, r * cols).prop_map(move |v| Matrix::from_vec(r, cols, v).unwrap())
    })
}

/// Points on an integer lattice, so rotations by 90° and integer shifts are
/// exact in floating point.
fn lattice(rows: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Matrix> {
    rows.prop_flat_map(|r| {
        prop::collection::vec(-20i32..=20, r * 2)
            .prop_map(move |v| Matrix::from_vec(r, 2, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn reversed(m: &Matrix) -> Matrix {
    m.select_rows(&(0..m.rows()).rev().collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_transpose_symmetry(a in matrix(1..=8, 3, 2.0), b in matrix(1..=8, 3, 2.0)) {
        let ab = pairwise_sq_dists(&a, &b).unwrap();
        let ba = pairwise_sq_dists(&b, &a).unwrap().transpose();
        for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn mmd_symmetric_and_permutation_invariant(a in matrix(2..=12, 2, 1.0), b in matrix(2..=12, 2, 1.0)) {
        let m = mmd2_unbiased(&a, &b, 15.0).unwrap();
        prop_assert!((m - mmd2_unbiased(&b, &a, 15.0).unwrap()).abs() <= 1e-12);
        prop_assert!((m - mmd2_unbiased(&reversed(&a), &reversed(&b), 15.0).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn pr_invariant_to_row_order(r in lattice(3..=15), g in lattice(3..=15), k in 1usize..=2) {
        let pr = precision_recall(&r, &g, k).unwrap();
        let pr2 = precision_recall(&reversed(&r), &reversed(&g), k).unwrap();
        prop_assert_eq!(pr, pr2);
    }

    #[test]
    fn pr_invariant_to_shared_isometry(
        r in lattice(3..=15),
        g in lattice(3..=15),
        quarter_turns in 0usize..4,
        shift in (-50i32..=50, -50i32..=50),
    ) {
        let iso = |m: &Matrix| {
            Matrix::from_fn(m.rows(), 2, |i, j| {
                let (mut x, mut y) = (m.get(i, 0), m.get(i, 1));
                for _ in 0..quarter_turns {
                    (x, y) = (-y, x);
                }
                if j == 0 { x + f64::from(shift.0) } else { y + f64::from(shift.1) }
            })
        };
        prop_assert_eq!(precision_recall(&r, &g, 1).unwrap(), precision_recall(&iso(&r), &iso(&g), 1).unwrap());
    }

    /// Adding generated points that leave every existing k-NN radius
    /// unchanged cannot shrink recall.
    #[test]
    fn recall_monotone_under_radius_preserving_additions(
        r in lattice(3..=15),
        g in lattice(3..=12),
        extra in prop::collection::vec((-5i32..=5, -5i32..=5), 2..6),
    ) {
        // A far cluster: its points are their own nearest neighbours and sit
        // beyond every original radius.
        let far: Vec<[f64; 2]> = extra.iter().map(|&(x, y)| [1e4 + f64::from(x), 1e4 + f64::from(y)]).collect();
        let grown = g.vstack(&Matrix::from_rows(&far).unwrap()).unwrap();
        let before = precision_recall(&r, &g, 1).unwrap().recall;
        let after = precision_recall(&r, &grown, 1).unwrap().recall;
        prop_assert!(after >= before);
    }

    #[test]
    fn pearson_affine_equivariance(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        b in -10.0f64..10.0,
    ) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r = pearson_r(&xs, &ys).unwrap();
        prop_assert!((r - a.signum()).abs() < 1e-9, "r = {}", r);
    }

    #[test]
    fn linear_exe_is_linear(
        t1 in prop::collection::vec(-1.0f64..1.0, 40),
        t2 in prop::collection::vec(-1.0f64..1.0, 40),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let env = Environment::linear();
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let s = env.exe(&mix).unwrap();
        let (s1, s2) = (env.exe(&t1).unwrap(), env.exe(&t2).unwrap());
        for j in 0..2 {
            prop_assert!((s[j] - (a * s1[j] + b * s2[j])).abs() <= 1e-12);
        }
    }

    #[test]
    fn reward_translation_consistent(
        s in (-2.0f64..2.0, -2.0f64..2.0),
        goal in (-2.0f64..2.0, -2.0f64..2.0),
        shift in (-3.0f64..3.0, -3.0f64..3.0),
    ) {
        let r0 = reward_from_end_state(&[s.0, s.1], &GoalState { target: [goal.0, goal.1] });
        let r1 = reward_from_end_state(
            &[s.0 + shift.0, s.1 + shift.1],
            &GoalState { target: [goal.0 + shift.0, goal.1 + shift.1] },
        );
        prop_assert!((r0 - r1).abs() <= 1e-12);
    }
}

/// Recorded witness: additivity fails for the arm by well over 1e-3.
#[test]
fn arm_exe_nonlinearity_witness() {
    let env = Environment {
        kind: ExeKind::TwoLinkArm { l1: 0.5, l2: 0.5 },
        ..Environment::arm()
    };
    let t1: Vec<f64> = (0..env.traj_len()).map(|i| if i % 2 == 0 { 0.5 } else { 0.0 }).collect();
    let t2: Vec<f64> = (0..env.traj_len()).map(|i| if i % 2 == 1 { 0.5 } else { 0.0 }).collect();
    let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
    let (s1, s2, s) = (env.exe(&t1).unwrap(), env.exe(&t2).unwrap(), env.exe(&sum).unwrap());
    let zero = env.exe(&vec![0.0; env.traj_len()]).unwrap();
    // Exe(τ1 + τ2) − Exe(0) vs (Exe(τ1) − Exe(0)) + (Exe(τ2) − Exe(0))
    let gap = (0..2)
        .map(|j| ((s[j] - zero[j]) - (s1[j] - zero[j]) - (s2[j] - zero[j])).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-3, "gap {gap}");
}

/// Recall is not monotone under arbitrary additions: a new point next to an
/// existing one shrinks that point's radius and can uncover real samples.
#[test]
fn recall_can_drop_when_radii_shrink() {
    let real = Matrix::from_rows(&[[-0.8], [0.5], [0.9]]).unwrap();
    let g = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
    let grown = Matrix::from_rows(&[[0.0], [1.0], [0.05]]).unwrap();
    let before = precision_recall(&real, &g, 1).unwrap().recall;
    let after = precision_recall(&real, &grown, 1).unwrap().recall;
    assert_eq!(before, 1.0);
    assert!(after < before, "after {after}");
}
