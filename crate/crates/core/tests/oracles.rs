//! Layer and normalization outputs against literal dense evaluations.

use egnn_core::data::{encode_undirected_single_channel, TaskKind};
use egnn_core::layers::{
    attention_scores, egnn_a_backward, egnn_a_forward, egnn_c_backward, egnn_c_forward, elu,
    leaky_relu, Activation, ForwardOptions, LayerParameters,
};
use egnn_core::model::{init_params, Architecture, PassOptions};
use egnn_core::normalize::{ds_normalize, normalize, prepare};
use egnn_core::rng::{seeded, ModelRng};
use egnn_core::{Dense, EdgeTensor, NormScheme, SparseMatrix};
use rand::Rng;

fn random_dense(rows: usize, cols: usize, rng: &mut ModelRng) -> Dense {
    Dense::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `A X Wᵀ` with `A` dense `n x n`.
fn dense_aggregate(a: &[f64], x: &Dense, w: &Dense) -> Dense {
    let n = x.rows();
    let h = Dense::from_fn(n, w.rows(), |i, o| (0..x.cols()).map(|k| x.get(i, k) * w.get(o, k)).sum());
    Dense::from_fn(n, w.rows(), |i, o| (0..n).map(|j| a[i * n + j] * h.get(j, o)).sum())
}

#[test]
fn ds_matches_two_step_dense_oracle() {
    let n = 3;
    let raw = [[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [4.0, 0.0, 1.0]];
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if raw[i][j] > 0.0 {
                trip.push((i, j, raw[i][j]));
            }
        }
    }
    let e = EdgeTensor::new(vec![SparseMatrix::from_triplets(n, &trip).unwrap()]).unwrap();
    let got = ds_normalize(&e).unwrap().channel(0).to_dense();

    let mut tilde = [[0.0; 3]; 3];
    for i in 0..n {
        let s: f64 = raw[i].iter().sum();
        for j in 0..n {
            tilde[i][j] = raw[i][j] / s;
        }
    }
    let mut want = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            want[i * n + j] = (0..n)
                .map(|k| {
                    let col: f64 = (0..n).map(|v| tilde[v][k]).sum();
                    tilde[i][k] * tilde[j][k] / col
                })
                .sum();
        }
    }
    assert!(max_diff(&got, &want) < 1e-12);
}

#[test]
fn convolution_matches_concatenated_dense_products() {
    let mut rng = seeded(1);
    let n = 3;
    let x = random_dense(n, 4, &mut rng);
    let w = random_dense(2, 4, &mut rng);
    let chans: Vec<SparseMatrix> = (0..2)
        .map(|_| {
            let d: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
            SparseMatrix::from_dense(n, &d).unwrap()
        })
        .collect();
    let e = EdgeTensor::new(chans).unwrap();
    let params = LayerParameters::convolution(w.clone());
    let out = egnn_c_forward(&x, &e, &params, Activation::Elu, &ForwardOptions::exact(), &mut rng)
        .unwrap();
    for p in 0..2 {
        let want = dense_aggregate(&e.channel(p).to_dense(), &x, &w).map(elu);
        let got = out.x_out.column_block(2 * p, 2);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
}

#[test]
fn convolution_with_identity_edges_is_linear_map() {
    let mut rng = seeded(2);
    let x = random_dense(4, 3, &mut rng);
    let w = random_dense(2, 3, &mut rng);
    let e = EdgeTensor::new(vec![SparseMatrix::identity(4)]).unwrap();
    let out = egnn_c_forward(
        &x,
        &e,
        &LayerParameters::convolution(w.clone()),
        Activation::Identity,
        &ForwardOptions::exact(),
        &mut rng,
    )
    .unwrap();
    assert!(out.x_out.max_abs_diff(&x.matmul_t(&w).unwrap()) < 1e-15);

    let same = EdgeTensor::new(vec![e.channel(0).clone(), e.channel(0).clone()]).unwrap();
    let out2 = egnn_c_forward(
        &x,
        &same,
        &LayerParameters::convolution(w),
        Activation::Elu,
        &ForwardOptions::exact(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(out2.x_out.column_block(0, 2), out2.x_out.column_block(2, 2));
}

#[test]
fn gcn_reduction() {
    let mut rng = seeded(3);
    let n = 6;
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)];
    let e = prepare(&encode_undirected_single_channel(&edges, n).unwrap(), NormScheme::Sym).unwrap();

    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for &(i, j) in &edges {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j]).sum()).collect();
    let a_hat: Vec<f64> = (0..n * n)
        .map(|k| a[k] / (deg[k / n] * deg[k % n]).sqrt())
        .collect();

    let x = random_dense(n, 5, &mut rng);
    let w = random_dense(3, 5, &mut rng);
    let out = egnn_c_forward(
        &x,
        &e,
        &LayerParameters::convolution(w.clone()),
        Activation::Elu,
        &ForwardOptions::exact(),
        &mut rng,
    )
    .unwrap();
    let want = dense_aggregate(&a_hat, &x, &w).map(elu);
    assert!(out.x_out.max_abs_diff(&want) < 1e-12);
}

#[test]
fn gat_reduction_with_row_normalization() {
    let mut rng = seeded(4);
    let n = 5;
    let edges = [(0, 1), (1, 2), (2, 0), (3, 4), (0, 3)];
    let mut trip: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
    trip.extend((0..n).map(|i| (i, i, 1.0)));
    let e = EdgeTensor::new(vec![SparseMatrix::from_triplets(n, &trip).unwrap()]).unwrap();

    let x = random_dense(n, 4, &mut rng);
    let w = random_dense(3, 4, &mut rng);
    let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = LayerParameters::attention(w.clone(), a.clone()).unwrap();
    let opts = ForwardOptions::exact().with_norm(NormScheme::Row);
    let out = egnn_a_forward(&x, &e, &params, Activation::Elu, &opts, &mut rng).unwrap();

    let h = x.matmul_t(&w).unwrap();
    let adj = e.channel(0).to_dense();
    let mut alpha = vec![0.0; n * n];
    for i in 0..n {
        let mut logits = Vec::new();
        for j in 0..n {
            if adj[i * n + j] > 0.0 {
                let s: f64 = (0..3).map(|c| a[c] * h.get(i, c) + a[3 + c] * h.get(j, c)).sum();
                logits.push((j, leaky_relu(s, 0.2)));
            }
        }
        let m = logits.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l.1 - m).exp()).sum();
        for (j, l) in logits {
            alpha[i * n + j] = (l - m).exp() / z;
        }
    }
    assert!(max_diff(&out.e_out.channel(0).to_dense(), &alpha) < 1e-12);
    let want = Dense::from_fn(n, 3, |i, c| elu((0..n).map(|j| alpha[i * n + j] * h.get(j, c)).sum()));
    assert!(out.x_out.max_abs_diff(&want) < 1e-12);
}

#[test]
fn attention_scores_match_direct_evaluation() {
    let mut rng = seeded(5);
    let x = random_dense(3, 2, &mut rng);
    let w = random_dense(2, 2, &mut rng);
    let a = vec![0.4, -0.7, 1.1, 0.3];
    let params = LayerParameters::attention(w.clone(), a.clone()).unwrap();
    let s = attention_scores(&x, &params).unwrap();
    let h = x.matmul_t(&w).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let concat = [h.get(i, 0), h.get(i, 1), h.get(j, 0), h.get(j, 1)];
            let logit: f64 = concat.iter().zip(&a).map(|(u, v)| u * v).sum();
            let want = leaky_relu(logit, 0.2).exp();
            assert!(((s.score(i, j) - want) / want).abs() < 1e-12);
        }
    }

    let zero = LayerParameters::attention(w, vec![0.0; 4]).unwrap();
    let s0 = attention_scores(&x, &zero).unwrap();
    assert!((0..3).all(|i| (0..3).all(|j| s0.score(i, j) == 1.0)));
}

#[test]
fn attention_scores_symmetric_for_equal_features() {
    let x = Dense::from_rows(&[[0.3, -0.2], [0.3, -0.2], [1.0, 0.5]]);
    let w = Dense::from_rows(&[[1.0, 0.5], [-0.4, 0.9]]);
    let params = LayerParameters::attention(w, vec![0.6, -0.1, 0.6, -0.1]).unwrap();
    let s = attention_scores(&x, &params).unwrap();
    assert_eq!(s.score(0, 1), s.score(1, 0));
}

#[test]
fn zero_attention_identity_weights_identity_edges() {
    let mut rng = seeded(6);
    let x = random_dense(4, 3, &mut rng);
    let e = EdgeTensor::new(vec![SparseMatrix::identity(4); 3]).unwrap();
    let params = LayerParameters::attention(Dense::identity(3), vec![0.0; 6]).unwrap();
    for norm in NormScheme::all() {
        let opts = ForwardOptions::exact().with_norm(norm);
        let out = egnn_a_forward(&x, &e, &params, Activation::Elu, &opts, &mut rng).unwrap();
        for p in 0..3 {
            assert_eq!(out.e_out.channel(p), &SparseMatrix::identity(4));
            assert!(out.x_out.column_block(3 * p, 3).max_abs_diff(&x.map(elu)) < 1e-15);
        }
    }
}

#[test]
fn two_node_attention_by_hand() {
    // one directed edge 0 -> 1 plus self-loops
    let e = EdgeTensor::new(vec![SparseMatrix::from_triplets(
        2,
        &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)],
    )
    .unwrap()])
    .unwrap();
    let x = Dense::from_rows(&[[1.0], [2.0]]);
    let params = LayerParameters::attention(Dense::from_rows(&[[1.0]]), vec![0.5, -1.0]).unwrap();
    let out = egnn_a_forward(
        &x,
        &e,
        &params,
        Activation::Identity,
        &ForwardOptions::exact().with_norm(NormScheme::Ds),
        &mut seeded(0),
    )
    .unwrap();
    // scores f = exp(LeakyReLU(0.5 h_i - h_j)) with h = (1, 2)
    let f00 = leaky_relu(-0.5, 0.2).exp();
    let f01 = leaky_relu(-1.5, 0.2).exp();
    // row-normalize, then T diag(colsum)^-1 Tᵀ
    let t00 = f00 / (f00 + f01);
    let t01 = f01 / (f00 + f01);
    let c0 = t00;
    let c1 = t01 + 1.0;
    let a00 = t00 * t00 / c0 + t01 * t01 / c1;
    let a01 = t01 / c1;
    let a11 = 1.0 / c1;
    let want = [a00, a01, a01, a11];
    let got = out.e_out.channel(0).to_dense();
    assert!(max_diff(&got, &want) < 1e-12);
    let y = [a00 * 1.0 + a01 * 2.0, a01 * 1.0 + a11 * 2.0];
    assert!(max_diff(out.x_out.as_slice(), &y) < 1e-12);
}

#[test]
fn attention_coefficients_match_normalize_module_and_are_scale_invariant() {
    let mut rng = seeded(7);
    let n = 5;
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || rng.gen_bool(0.5) {
                trip.push((i, j, rng.gen_range(0.2..2.0)));
            }
        }
    }
    let ch = SparseMatrix::from_triplets(n, &trip).unwrap();
    let e = EdgeTensor::new(vec![ch.clone()]).unwrap();
    let x = random_dense(n, 3, &mut rng);
    let params = LayerParameters::attention(
        random_dense(2, 3, &mut rng),
        (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    )
    .unwrap();
    let scores = attention_scores(&x, &params).unwrap();
    for norm in NormScheme::all() {
        let opts = ForwardOptions::exact().with_norm(norm);
        let got = egnn_a_forward(&x, &e, &params, Activation::Elu, &opts, &mut rng)
            .unwrap()
            .e_out;
        for c in [1.0, 1e-3, 37.5] {
            let raw = ch.hadamard_dense(|i, j| c * scores.score(i, j));
            let want = normalize(&EdgeTensor::new(vec![raw]).unwrap(), norm).unwrap();
            let d = max_diff(&got.channel(0).to_dense(), &want.channel(0).to_dense());
            assert!(d < 1e-12, "{norm}: c={c} diff {d:e}");
        }
        let scaled = EdgeTensor::new(vec![ch.scale(4.25)]).unwrap();
        let again = egnn_a_forward(&x, &scaled, &params, Activation::Elu, &opts, &mut rng)
            .unwrap()
            .e_out;
        assert!(max_diff(&got.channel(0).to_dense(), &again.channel(0).to_dense()) < 1e-12);
    }
}

#[test]
fn linear_weight_gradient_closed_form() {
    let mut rng = seeded(8);
    let n = 4;
    let d: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let e = EdgeTensor::new(vec![SparseMatrix::from_dense(n, &d).unwrap()]).unwrap();
    let x = random_dense(n, 3, &mut rng);
    let params = LayerParameters::convolution(random_dense(2, 3, &mut rng));
    let out = egnn_c_forward(&x, &e, &params, Activation::Identity, &ForwardOptions::exact(), &mut rng)
        .unwrap();
    let g = random_dense(n, 2, &mut rng);
    let bundle = egnn_c_backward(&params, &out, &g, false).unwrap();
    // (Eᵀ G)ᵀ X
    let etg = Dense::from_fn(n, 2, |j, o| (0..n).map(|i| d[i * n + j] * g.get(i, o)).sum());
    let want = Dense::from_fn(2, 3, |o, k| (0..n).map(|j| etg.get(j, o) * x.get(j, k)).sum());
    assert!(bundle.d_w.max_abs_diff(&want) < 1e-12);
    assert!(bundle.d_x_in.is_none());
}

#[test]
fn attention_backward_reports_edge_gradient_shapes() {
    let mut rng = seeded(9);
    let e = EdgeTensor::new(vec![SparseMatrix::identity(3), SparseMatrix::identity(3)]).unwrap();
    let x = random_dense(3, 2, &mut rng);
    let params = LayerParameters::attention(random_dense(2, 2, &mut rng), vec![0.1; 4]).unwrap();
    let out = egnn_a_forward(&x, &e, &params, Activation::Elu, &ForwardOptions::exact(), &mut rng)
        .unwrap();
    let b = egnn_a_backward(&params, &out, &Dense::zeros(3, 4), None, false).unwrap();
    assert_eq!(b.d_e_in.len(), 2);
    assert!(b.d_e_in.iter().all(|g| g.len() == 3));
}

#[test]
fn model_forward_is_deterministic() {
    let arch = Architecture {
        task: TaskKind::NodeClassification,
        layer_kind: egnn_core::layers::LayerKind::Attention,
        layers: 2,
        input_dim: 3,
        hidden_dim: 4,
        channels: 1,
        output_dim: 2,
        attention_norm: NormScheme::Ds,
        adaptive_edges: true,
    };
    let m = init_params(&arch, 42).unwrap();
    let mut rng = seeded(10);
    let x = random_dense(5, 3, &mut rng);
    let e = prepare(
        &encode_undirected_single_channel(&[(0, 1), (1, 2), (3, 4)], 5).unwrap(),
        NormScheme::Ds,
    )
    .unwrap();
    let run = || {
        let pass = m.forward(&x, &e, &PassOptions::train(0.5), &mut seeded(99)).unwrap();
        pass.node_logits().unwrap().clone()
    };
    let (a, b) = (run(), run());
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
}
