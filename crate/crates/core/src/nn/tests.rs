use super::*;
use crate::test_util::{central_diff, dot, random_tensor, random_vec, rel_err, rng};
use crate::tensor::Tensor;

const TOL: f64 = 1e-4;

/// Checks input and parameter gradients of `net` against central differences
/// of the scalar `sum(forward(x) * g)` for a random projection `g`.
fn check_net(net: &FeatureNet, batch_shape: Vec<usize>, seed: u64) {
    let mut r = rng(seed);
    let batch = random_tensor(&mut r, batch_shape.clone());
    let mut graph = Graph::new(net);
    let out = graph.forward(&batch).unwrap();
    let proj = random_tensor(&mut r, out.shape().to_vec());
    let back = graph.backward(&proj, true, true).unwrap();

    let objective = |n: &FeatureNet, x: &[f64]| {
        let t = Tensor::new(batch_shape.clone(), x.to_vec()).unwrap();
        dot(n.infer(&t).unwrap().data(), proj.data())
    };
    let fd_in = central_diff(batch.data(), |x| objective(net, x));
    let e_in = rel_err(back.input.as_ref().unwrap().data(), &fd_in);
    assert!(e_in < TOL, "input gradient rel err {e_in:e}");

    if net.param_count() > 0 {
        let mut probe = net.clone();
        let fd_p = central_diff(net.params(), |p| {
            probe.params_mut().copy_from_slice(p);
            objective(&probe, batch.data())
        });
        let e_p = rel_err(back.params.as_ref().unwrap(), &fd_p);
        assert!(e_p < TOL, "param gradient rel err {e_p:e}");
    }
}

fn randomize(net: &mut FeatureNet, seed: u64) {
    let mut r = rng(seed);
    let n = net.param_count();
    net.params_mut().copy_from_slice(&random_vec(&mut r, n, -0.8, 0.8));
}

#[test]
fn conv_gradients_match_finite_differences() {
    let net = FeatureNet::new(
        vec![2, 5, 4],
        vec![Layer::Conv3x3 {
            in_channels: 2,
            out_channels: 3,
        }],
        1,
    )
    .unwrap();
    check_net(&net, vec![2, 2, 5, 4], 10);
}

#[test]
fn dense_gradients_match_finite_differences() {
    let net = FeatureNet::new(
        vec![2, 3],
        vec![Layer::Dense {
            in_features: 6,
            out_features: 4,
        }],
        2,
    )
    .unwrap();
    check_net(&net, vec![3, 2, 3], 11);
}

#[test]
fn instance_norm_gradients_match_finite_differences() {
    let mut net = FeatureNet::new(vec![3, 4, 4], vec![Layer::InstanceNorm { channels: 3 }], 3).unwrap();
    randomize(&mut net, 33);
    check_net(&net, vec![2, 3, 4, 4], 12);
}

#[test]
fn relu_gradients_match_finite_differences() {
    let net = FeatureNet::new(vec![10], vec![Layer::Relu], 4).unwrap();
    check_net(&net, vec![4, 10], 13);
}

#[test]
fn pool_gradients_match_finite_differences() {
    let net = FeatureNet::new(vec![2, 4, 6], vec![Layer::AvgPool2], 5).unwrap();
    check_net(&net, vec![3, 2, 4, 6], 14);
}

#[test]
fn full_convnet_gradients_match_finite_differences() {
    let mut net = FeatureNet::convnet_classifier([3, 8, 8], 4, 2, 5, 6).unwrap();
    randomize(&mut net, 66);
    check_net(&net, vec![2, 3, 8, 8], 15);
}

#[test]
fn identity_net_passes_batch_through() {
    let net = FeatureNet::new(vec![5], vec![], 0).unwrap();
    let batch = random_tensor(&mut rng(1), vec![3, 5]);
    let out = net.infer(&batch).unwrap();
    assert_eq!(out.data(), batch.data());
}

#[test]
fn zero_dense_gives_zero_embeddings() {
    let mut net = FeatureNet::new(
        vec![4],
        vec![Layer::Dense {
            in_features: 4,
            out_features: 3,
        }],
        0,
    )
    .unwrap();
    net.params_mut().fill(0.0);
    let out = net.infer(&random_tensor(&mut rng(2), vec![5, 4])).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn mlp_forward_matches_hand_expanded_products() {
    let net = FeatureNet::mlp(vec![4], 3, 2, 7).unwrap();
    let batch = random_tensor(&mut rng(3), vec![5, 4]);
    let out = net.infer(&batch).unwrap();
    let p = net.params();
    let (w1, rest) = p.split_at(12);
    let (b1, rest) = rest.split_at(3);
    let (w2, b2) = rest.split_at(6);
    for n in 0..5 {
        let x = batch.sample(n);
        let mut h = [0.0; 3];
        for k in 0..3 {
            let mut s = b1[k];
            for i in 0..4 {
                s += w1[k * 4 + i] * x[i];
            }
            h[k] = if s > 0.0 { s } else { 0.0 };
        }
        for c in 0..2 {
            let mut s = b2[c];
            for k in 0..3 {
                s += w2[c * 3 + k] * h[k];
            }
            assert!((out.data()[n * 2 + c] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_map_input_gradient_is_adjoint() {
    let mut net = FeatureNet::new(
        vec![3],
        vec![Layer::Dense {
            in_features: 3,
            out_features: 2,
        }],
        0,
    )
    .unwrap();
    net.params_mut()
        .copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0]);
    let batch = Tensor::new(vec![1, 3], vec![0.3, -0.1, 0.7]).unwrap();
    let mut g = Graph::new(&net);
    g.forward(&batch).unwrap();
    let gin = g
        .backward_inputs(&Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap())
        .unwrap();
    // W^T g = [1 - 8, 2 - 10, 3 - 12]
    assert_eq!(gin.data(), &[-7.0, -8.0, -9.0]);
}

#[test]
fn zero_out_grad_gives_zero_input_grad() {
    let net = FeatureNet::convnet([3, 8, 8], 4, 2, 1).unwrap();
    let batch = random_tensor(&mut rng(4), vec![2, 3, 8, 8]);
    let mut g = Graph::new(&net);
    let out = g.forward(&batch).unwrap();
    let gin = g.backward_inputs(&Tensor::zeros(out.shape().to_vec())).unwrap();
    assert!(gin.data().iter().all(|v| *v == 0.0));
}

#[test]
fn backward_without_forward_is_an_error() {
    let net = FeatureNet::mlp(vec![4], 3, 2, 0).unwrap();
    let g = Graph::new(&net);
    assert!(matches!(
        g.backward_inputs(&Tensor::zeros(vec![1, 2])),
        Err(crate::Error::MissingGraph)
    ));
}

#[test]
fn instance_norm_standardizes_each_channel() {
    let net = FeatureNet::new(vec![3, 6, 6], vec![Layer::InstanceNorm { channels: 3 }], 0).unwrap();
    let mut r = rng(5);
    let mut batch = random_tensor(&mut r, vec![4, 3, 6, 6]);
    for v in batch.data_mut() {
        *v = *v * 3.0 + 2.0;
    }
    let out = net.infer(&batch).unwrap();
    for plane in out.data().chunks_exact(36) {
        let mean = plane.iter().sum::<f64>() / 36.0;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 36.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let net = FeatureNet::convnet([3, 8, 8], 4, 2, 3).unwrap();
    let batch = random_tensor(&mut rng(6), vec![3, 3, 8, 8]);
    let run = || {
        let mut g = Graph::new(&net);
        let out = g.forward(&batch).unwrap();
        let b = g.backward(&out, true, true).unwrap();
        (out, b.input.unwrap(), b.params.unwrap())
    };
    let (o1, i1, p1) = run();
    let (o2, i2, p2) = run();
    assert_eq!(o1, o2);
    assert_eq!(i1, i2);
    assert_eq!(p1, p2);
}

fn small_mlp() -> (FeatureNet, Tensor, Vec<usize>) {
    let net = FeatureNet::mlp(vec![6], 5, 3, 8).unwrap();
    let batch = random_tensor(&mut rng(7), vec![4, 6]);
    (net, batch, vec![0, 2, 1, 2])
}

fn per_sample_gradient(net: &FeatureNet, batch: &Tensor, labels: &[usize], i: usize) -> Vec<f64> {
    let x = Tensor::new(vec![1, batch.sample_len()], batch.sample(i).to_vec()).unwrap();
    param_gradient(net, &x, &labels[i..=i], &[1.0], GradientSource::Real)
        .unwrap()
        .values
}

#[test]
fn uniform_weights_match_mean_gradient() {
    let (net, batch, labels) = small_mlp();
    let w = vec![0.25; 4];
    let a = param_gradient(&net, &batch, &labels, &w, GradientSource::Real).unwrap();
    let b = mean_param_gradient(&net, &batch, &labels, GradientSource::Real).unwrap();
    assert!(rel_err(&a.values, &b.values) < 1e-14);
}

#[test]
fn one_hot_weight_selects_sample() {
    let (net, batch, labels) = small_mlp();
    let a = param_gradient(&net, &batch, &labels, &[0.0, 0.0, 1.0, 0.0], GradientSource::Real).unwrap();
    let b = per_sample_gradient(&net, &batch, &labels, 2);
    assert!(rel_err(&a.values, &b) < 1e-14);
}

#[test]
fn weighted_gradient_matches_per_sample_loop() {
    let (net, batch, labels) = small_mlp();
    let w = [0.1, 0.4, 0.2, 0.3];
    let a = param_gradient(&net, &batch, &labels, &w, GradientSource::Real).unwrap();
    let mut expect = vec![0.0; net.param_count()];
    for (i, wi) in w.iter().enumerate() {
        for (e, g) in expect.iter_mut().zip(per_sample_gradient(&net, &batch, &labels, i)) {
            *e += wi * g;
        }
    }
    assert!(rel_err(&a.values, &expect) < 1e-12);
}

#[test]
fn label_out_of_range_is_rejected() {
    let (net, batch, _) = small_mlp();
    let err = param_gradient(&net, &batch, &[0, 1, 3, 0], &[0.25; 4], GradientSource::Real);
    assert!(matches!(err, Err(crate::Error::LabelOutOfRange { label: 3, classes: 3 })));
}

#[test]
fn param_gradient_matches_finite_differences_of_weighted_loss() {
    let (net, batch, labels) = small_mlp();
    let w = [0.1, 0.4, 0.2, 0.3];
    let g = param_gradient(&net, &batch, &labels, &w, GradientSource::Real).unwrap();
    let mut probe = net.clone();
    let fd = central_diff(net.params(), |p| {
        probe.params_mut().copy_from_slice(p);
        let (losses, _) = cross_entropy(&probe.infer(&batch).unwrap(), &labels).unwrap();
        dot(&losses, &w)
    });
    assert!(rel_err(&g.values, &fd) < TOL);
}

fn matching_instance() -> (FeatureNet, GradientVector, Tensor, Vec<usize>) {
    let net = FeatureNet::mlp(vec![2, 3, 3], 7, 4, 21).unwrap();
    let mut r = rng(22);
    let real = random_tensor(&mut r, vec![6, 2, 3, 3]);
    let real_labels = vec![1, 1, 1, 1, 1, 1];
    let real_grad = mean_param_gradient(&net, &real, &real_labels, GradientSource::Real).unwrap();
    let syn = random_tensor(&mut r, vec![3, 2, 3, 3]);
    (net, real_grad, syn, vec![1, 1, 1])
}

#[test]
fn second_order_matches_finite_differences() {
    let (net, real_grad, syn, labels) = matching_instance();
    let analytic = second_order_grad(&net, &real_grad, &syn, &labels).unwrap();
    let fd = central_diff(syn.data(), |x| {
        let t = Tensor::new(syn.shape().to_vec(), x.to_vec()).unwrap();
        let g = mean_param_gradient(&net, &t, &labels, GradientSource::Synthetic).unwrap();
        gradient_distance(&real_grad, &g).unwrap()
    });
    let e = rel_err(analytic.data(), &fd);
    assert!(e < TOL, "second-order rel err {e:e}");
}

#[test]
fn second_order_vanishes_at_matched_gradient() {
    let (net, _, syn, labels) = matching_instance();
    let own = mean_param_gradient(&net, &syn, &labels, GradientSource::Real).unwrap();
    let m = match_gradients(&net, &own, &syn, &labels, 1.0).unwrap();
    assert!(m.distance.abs() < 1e-12);
    let norm = m.pixel_grad.squared_norm().sqrt();
    assert!(norm < 1e-10, "gradient norm {norm:e}");
}

#[test]
fn second_order_scales_linearly() {
    let (net, real_grad, syn, labels) = matching_instance();
    let one = match_gradients(&net, &real_grad, &syn, &labels, 1.0).unwrap();
    let two = match_gradients(&net, &real_grad, &syn, &labels, 2.0).unwrap();
    for (a, b) in one.pixel_grad.data().iter().zip(two.pixel_grad.data()) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn second_order_rejects_conv_surrogate() {
    let net = FeatureNet::convnet_classifier([3, 8, 8], 4, 1, 3, 0).unwrap();
    let syn = Tensor::zeros(vec![1, 3, 8, 8]);
    let real = mean_param_gradient(&net, &syn, &[0], GradientSource::Real).unwrap();
    let err = second_order_grad(&net, &real, &syn, &[0]).unwrap_err();
    assert!(matches!(err, crate::Error::Unsupported(_)));
    assert!(err.to_string().contains("dense-relu-dense"));
}
