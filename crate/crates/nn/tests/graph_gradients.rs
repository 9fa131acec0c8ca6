//! Central-difference verification of every graph op, in f64.

use ndarray::{ArrayD, IxDyn};
use trajmia_nn::{check_gradients, Graph, ParamSet};

fn rand_tensor(shape: &[usize], seed: u64, scale: f64) -> ArrayD<f64> {
    let mut state = seed;
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            state = trajmia_core::seeding::splitmix64(state);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * scale
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

fn targets(n: usize) -> ArrayD<f64> {
    ArrayD::from_shape_vec(IxDyn(&[n]), (0..n).map(|i| (i % 2) as f64).collect()).unwrap()
}

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

#[test]
fn dense_tanh_relu_chain_with_bce() {
    let mut params = ParamSet::<f64>::new();
    let w1 = params.add("w1", rand_tensor(&[3, 8], 1, 0.6));
    let b1 = params.add("b1", rand_tensor(&[8], 2, 0.3));
    let w2 = params.add("w2", rand_tensor(&[8, 1], 3, 0.6));
    let b2 = params.add("b2", rand_tensor(&[1], 4, 0.3));
    let x = rand_tensor(&[5, 3], 5, 1.0);
    let y = targets(5);

    let forward = |p: &ParamSet<f64>, g: &mut Graph<f64>| {
        let bound = p.bind(g, true);
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let h = g.matmul(xv, bound.var(w1));
        let h = g.add_bias(h, bound.var(b1));
        let h = g.relu(h);
        let h = g.matmul(h, bound.var(w2));
        let h = g.add_bias(h, bound.var(b2));
        let h = g.tanh(h);
        let logits_2d = g.scale(h, 3.0);
        let z = g.squeeze_col(logits_2d);
        let loss = g.bce_with_logits(z, yv);
        (bound, loss)
    };

    let analytic = {
        let mut g = Graph::new();
        let (bound, loss) = forward(&params, &mut g);
        g.backward(loss);
        bound.take_grads(&mut g)
    };
    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let (_, loss) = forward(p, &mut g);
            g.scalar_value(loss)
        },
        &analytic,
        200,
        STEP,
        7,
    );
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn conv1d_dilated_chain_with_bce() {
    let mut params = ParamSet::<f64>::new();
    let w1 = params.add("conv1.w", rand_tensor(&[4, 2, 3], 11, 0.5));
    let b1 = params.add("conv1.b", rand_tensor(&[4], 12, 0.2));
    let w2 = params.add("conv2.w", rand_tensor(&[3, 4, 3], 13, 0.5));
    let b2 = params.add("conv2.b", rand_tensor(&[3], 14, 0.2));
    let wh = params.add("head.w", rand_tensor(&[3, 1], 15, 0.7));
    let bh = params.add("head.b", rand_tensor(&[1], 16, 0.3));
    let x = rand_tensor(&[4, 2, 6], 17, 1.0);
    let y = targets(4);

    let build = |p: &ParamSet<f64>, g: &mut Graph<f64>| {
        let bound = p.bind(g, true);
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let h = g.conv1d_causal(xv, bound.var(w1), bound.var(b1), 1);
        let h = g.relu(h);
        let h = g.conv1d_causal(h, bound.var(w2), bound.var(b2), 2);
        let h = g.relu(h);
        let pooled = g.global_avg_pool(h); // (4, 3)
        let z2 = g.matmul(pooled, bound.var(wh));
        let z2 = g.add_bias(z2, bound.var(bh)); // (4, 1)
        let z = g.squeeze_col(z2);
        let loss = g.bce_with_logits(z, yv);
        (bound, loss)
    };

    let analytic = {
        let mut g = Graph::new();
        let (bound, loss) = build(&params, &mut g);
        g.backward(loss);
        bound.take_grads(&mut g)
    };
    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let (_, loss) = build(p, &mut g);
            g.scalar_value(loss)
        },
        &analytic,
        200,
        STEP,
        21,
    );
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn conv2d_chain_with_bce() {
    let mut params = ParamSet::<f64>::new();
    let w1 = params.add("conv.w", rand_tensor(&[3, 2, 3, 3], 31, 0.4));
    let b1 = params.add("conv.b", rand_tensor(&[3], 32, 0.2));
    let wh = params.add("head.w", rand_tensor(&[3, 1], 33, 0.7));
    let bh = params.add("head.b", rand_tensor(&[1], 34, 0.3));
    let x = rand_tensor(&[3, 2, 4, 5], 35, 1.0);
    let y = targets(3);

    let build = |p: &ParamSet<f64>, g: &mut Graph<f64>| {
        let bound = p.bind(g, true);
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let h = g.conv2d_same(xv, bound.var(w1), bound.var(b1));
        let h = g.relu(h);
        let pooled = g.global_avg_pool(h);
        let z2 = g.matmul(pooled, bound.var(wh));
        let z2 = g.add_bias(z2, bound.var(bh));
        let z = g.squeeze_col(z2);
        let loss = g.bce_with_logits(z, yv);
        (bound, loss)
    };

    let analytic = {
        let mut g = Graph::new();
        let (bound, loss) = build(&params, &mut g);
        g.backward(loss);
        bound.take_grads(&mut g)
    };
    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let (_, loss) = build(p, &mut g);
            g.scalar_value(loss)
        },
        &analytic,
        200,
        STEP,
        41,
    );
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn elementwise_composite_like_a_kl_term() {
    let mut params = ParamSet::<f64>::new();
    let mu = params.add("mu", rand_tensor(&[4, 3], 51, 0.8));
    let log_std = params.add("log_std", rand_tensor(&[4, 3], 52, 0.4));

    let build = |p: &ParamSet<f64>, g: &mut Graph<f64>| {
        let bound = p.bind(g, true);
        let m = bound.var(mu);
        let l = bound.var(log_std);
        let clamped = g.clamp(l, -0.7, 0.7);
        let two_l = g.scale(clamped, 2.0);
        let e2l = g.exp(two_l);
        let mu2 = g.mul(m, m);
        let a = g.sub(two_l, mu2);
        let b = g.sub(a, e2l);
        let c = g.add_scalar(b, 1.0);
        let s = g.sum_all(c);
        let loss = g.scale(s, -0.5 / 4.0);
        (bound, loss)
    };

    let analytic = {
        let mut g = Graph::new();
        let (bound, loss) = build(&params, &mut g);
        g.backward(loss);
        bound.take_grads(&mut g)
    };
    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let (_, loss) = build(p, &mut g);
            g.scalar_value(loss)
        },
        &analytic,
        150,
        STEP,
        61,
    );
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn concat_routes_gradients_to_both_sides() {
    let mut params = ParamSet::<f64>::new();
    let a = params.add("a", rand_tensor(&[4, 2], 71, 0.9));
    let b = params.add("b", rand_tensor(&[4, 3], 72, 0.9));
    let w = params.add("w", rand_tensor(&[5, 1], 73, 0.8));

    let build = |p: &ParamSet<f64>, g: &mut Graph<f64>| {
        let bound = p.bind(g, true);
        let cat = g.concat_cols(bound.var(a), bound.var(b));
        let z = g.matmul(cat, bound.var(w));
        let z = g.tanh(z);
        let loss = g.mean_all(z);
        (bound, loss)
    };

    let analytic = {
        let mut g = Graph::new();
        let (bound, loss) = build(&params, &mut g);
        g.backward(loss);
        bound.take_grads(&mut g)
    };
    assert_eq!(analytic.len(), 3, "all three leaves receive gradients");
    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let (_, loss) = build(p, &mut g);
            g.scalar_value(loss)
        },
        &analytic,
        100,
        STEP,
        81,
    );
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn dilated_conv_gradients_match_the_unrolled_dense_oracle() {
    // With constant inputs and loss = mean(y), the weight gradient of a
    // causal dilated conv has the closed form
    //   d loss / d w[o,c,k] = (1 / (c_out * len)) * sum_t xp[c, t + k*d]
    // which is exactly the unrolled dense-layer expression. Computed here
    // independently and compared against the graph.
    let (c_in, c_out, len, kernel, dilation) = (2usize, 3usize, 6usize, 3usize, 2usize);
    let x = rand_tensor(&[1, c_in, len], 91, 1.0);

    let mut params = ParamSet::<f64>::new();
    let w = params.add("w", rand_tensor(&[c_out, c_in, kernel], 92, 0.5));
    let b = params.add("b", rand_tensor(&[c_out], 93, 0.2));

    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let y = g.conv1d_causal(xv, bound.var(w), bound.var(b), dilation);
    let loss = g.mean_all(y);
    g.backward(loss);
    let grads = bound.take_grads(&mut g);
    let dw = &grads.iter().find(|(id, _)| *id == w).unwrap().1;
    let db = &grads.iter().find(|(id, _)| *id == b).unwrap().1;

    let pad = (kernel - 1) * dilation;
    let numel = (c_out * len) as f64;
    for o in 0..c_out {
        for c in 0..c_in {
            for k in 0..kernel {
                let mut acc = 0.0;
                for t in 0..len {
                    let src = (t + k * dilation) as isize - pad as isize;
                    if src >= 0 {
                        acc += x[[0, c, src as usize]];
                    }
                }
                let expected = acc / numel;
                let got = dw[[o, c, k]];
                assert!((got - expected).abs() < 1e-12, "w[{o},{c},{k}]: {got} vs {expected}");
            }
        }
    }
    for o in 0..c_out {
        let expected = len as f64 / numel;
        assert!((db[[o]] - expected).abs() < 1e-12);
    }
}

#[test]
fn bce_gradient_of_a_bare_logit_is_sigmoid_minus_target() {
    // Zero-weight final layer oracle: when the logit is the bias itself,
    // d loss / d bias = mean(p - y) with p = sigmoid(bias). At bias = 0,
    // p = 0.5 exactly.
    let y = targets(6);
    let mut params = ParamSet::<f64>::new();
    let bias = params.add("bias", ArrayD::zeros(IxDyn(&[6])));

    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let yv = g.constant(y.clone());
    let loss = g.bce_with_logits(bound.var(bias), yv);
    g.backward(loss);
    let grads = bound.take_grads(&mut g);
    let db = &grads[0].1;
    for i in 0..6 {
        let expected = (0.5 - y[[i]]) / 6.0;
        assert!((db[[i]] - expected).abs() < 1e-15);
    }
}
