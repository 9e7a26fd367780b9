mod common;

use common::*;
use nalgebra::DVector;
use richq_core::belief::{
    joint_update_vectors, label_update, ranking_update_vectors, selection_update_vectors, GaussianBelief, UpdateSettings,
};
use richq_core::response::Label;

fn prior() -> GaussianBelief<f64> {
    GaussianBelief::isotropic(2, 1.0).unwrap()
}

#[test]
fn single_label_matches_grid_posterior() {
    let s = UpdateSettings::default();
    for (angle, positive, w) in [(0.4, true, -1.0), (2.5, false, -1.0), (4.0, true, -0.5), (1.1, false, 1.0)] {
        let x = circle_item(angle);
        let y = if positive { Label::Positive } else { Label::Negative };
        let q = label_update(&prior(), &x, y, w, &s).unwrap();
        let p = grid_posterior(|a, b| log_label(x[0] * a + x[1] * b, w, positive));
        let kl = kl_gaussian_to_grid(q.mu(), q.sigma(), &p);
        assert!(kl <= 0.05, "angle {angle}: KL {kl}");
    }
}

#[test]
fn pairwise_selection_matches_grid_posterior() {
    let s = UpdateSettings::default();
    for (a0, a1, chosen) in [(0.3, 2.0, 0), (1.0, 4.0, 1), (5.5, 3.0, 0)] {
        let xs = [circle_item(a0), circle_item(a1)];
        let refs: Vec<_> = xs.iter().collect();
        let q = selection_update_vectors(&prior(), &refs, chosen, 1.0, &s).unwrap().belief;
        let p = grid_posterior(|a, b| {
            let z: Vec<f64> = xs.iter().map(|x| x[0] * a + x[1] * b).collect();
            log_choice(&z, chosen, 1.0)
        });
        let kl = kl_gaussian_to_grid(q.mu(), q.sigma(), &p);
        assert!(kl <= 0.15, "KL {kl}");
    }
}

#[test]
fn trivial_selections_leave_the_prior() {
    let s = UpdateSettings::default();
    let x = circle_item(0.9);
    let one = selection_update_vectors(&prior(), &[&x], 0, 2.0, &s).unwrap().belief;
    let y = circle_item(2.2);
    let zero_k = selection_update_vectors(&prior(), &[&x, &y], 1, 0.0, &s).unwrap().belief;
    for b in [one, zero_k] {
        assert!((b.mu() - prior().mu()).amax() < 1e-9);
        assert!((b.sigma() - prior().sigma()).amax() < 1e-9);
    }
}

#[test]
fn two_item_ranking_is_a_selection_then_a_label() {
    let s = UpdateSettings::default();
    let (w, k) = (-1.2, 1.5);
    let xs = [circle_item(0.7), circle_item(2.9)];
    let refs: Vec<_> = xs.iter().collect();
    for (order, ell) in [([0, 1], 1), ([1, 0], 0), ([1, 0], 2)] {
        let ranked = ranking_update_vectors(&prior(), &refs, &order, ell, w, k, &s).unwrap();
        let lab = |j: usize| if j < ell { Label::Positive } else { Label::Negative };
        let first = joint_update_vectors(&prior(), &refs, order[0], lab(0), w, k, &s).unwrap();
        let both = label_update(&first, &xs[order[1]], lab(1), w, &s).unwrap();
        assert!((ranked.mu() - both.mu()).amax() < 1e-9);
        assert!((ranked.sigma() - both.sigma()).amax() < 1e-9);
    }
}

#[test]
fn symmetric_ranking_moves_mean_along_the_winner() {
    let s = UpdateSettings::default();
    let x = DVector::from_vec(vec![0.6, 0.8]);
    let neg = -&x;
    let b = ranking_update_vectors(&prior(), &[&x, &neg], &[0, 1], 1, -1.0, 1.0, &s).unwrap();
    let along = b.mu().dot(&x);
    let across = b.mu()[0] * x[1] - b.mu()[1] * x[0];
    assert!(along > 0.0);
    assert!(across.abs() < 1e-9 * (1.0 + along));
}

#[test]
fn all_positive_threshold_pulls_toward_the_items() {
    let s = UpdateSettings::default();
    let xs = [circle_item(0.2), circle_item(1.0), circle_item(1.6)];
    let refs: Vec<_> = xs.iter().collect();
    let order = [1, 0, 2];
    let high = ranking_update_vectors(&prior(), &refs, &order, 3, -1.0, 1.0, &s).unwrap();
    let low = ranking_update_vectors(&prior(), &refs, &order, 0, -1.0, 1.0, &s).unwrap();
    let direction = xs.iter().fold(DVector::zeros(2), |acc, x| acc + prior().sigma() * x);
    assert!(high.mu().dot(&direction) > low.mu().dot(&direction));
}

#[test]
fn updates_never_widen_along_the_item() {
    let s = UpdateSettings::default();
    let mut b = prior();
    for (i, angle) in [0.1, 1.7, 3.3, 4.9, 0.8].iter().enumerate() {
        let x = circle_item(*angle);
        let y = if i % 2 == 0 { Label::Positive } else { Label::Negative };
        let next = label_update(&b, &x, y, -2.0, &s).unwrap();
        assert!(x.dot(&(next.sigma() * &x)) <= x.dot(&(b.sigma() * &x)) + 1e-12);
        b = next;
    }
}
