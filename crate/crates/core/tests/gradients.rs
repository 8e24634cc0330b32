use passby::neural::{Batch, Fcnn};

mod common;
use common::{gradient_check, random_net_and_batch};

#[test]
fn backprop_matches_finite_differences_on_small_net() {
    let (net, batch) = random_net_and_batch(&[3, 4, 1], 0.0, 1, 5);
    let err = gradient_check(&net, &batch, 1e-5, 1e-4);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn backprop_matches_finite_differences_with_penalty() {
    for (seed, layers) in [(2, vec![5, 6, 1]), (3, vec![4, 3, 3, 2]), (4, vec![10, 8, 8, 1])] {
        let (net, batch) = random_net_and_batch(&layers, 1e-2, seed, 7);
        let err = gradient_check(&net, &batch, 1e-5, 1e-4);
        assert!(err < 1e-5, "{layers:?}: max relative error {err}");
    }
}

#[test]
fn small_step_along_negative_gradient_does_not_increase_loss() {
    let (mut net, batch) = random_net_and_batch(&[6, 5, 1], 1e-3, 9, 16);
    let before = net.loss(&batch).unwrap();
    let g = net.backward(&batch).unwrap();
    net.add_scaled(-1e-4, &g);
    assert!(net.loss(&batch).unwrap() <= before);
}

#[test]
fn shape_mismatch_is_rejected() {
    let net = Fcnn::new(&[3, 2, 1], 0.0, 0).unwrap();
    let batch = Batch::scalar(ndarray::Array2::zeros((2, 4)), &[0.0, 1.0]).unwrap();
    assert!(matches!(net.backward(&batch), Err(passby::Error::Shape(_))));
}
