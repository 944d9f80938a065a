mod common;

use common::{random_data, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use spsvc::data::generate_blobs;
use spsvc::embedding::{embed_eigenvectors, embed_smoothed, gauss_seidel_sweep, similarity, spectral_similarity, Embedding};
use spsvc::graph::{build_knn_graph, connected_components, laplacian, Edge, Graph, Weighting};

fn random_graph(seed: u64) -> Graph {
    let mut r = rng(seed);
    let n = r.random_range(1..=50);
    let density = r.random_range(0.0..0.15);
    let mut edges = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            if r.random_bool(density) {
                edges.push(Edge {
                    p,
                    q,
                    w: r.random_range(0.01..5.0),
                });
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// `D - W` assembled straight from the edge list.
fn dense_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.num_vertices();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        l[(e.p, e.q)] -= e.w;
        l[(e.q, e.p)] -= e.w;
        l[(e.p, e.p)] += e.w;
        l[(e.q, e.q)] += e.w;
    }
    l
}

#[test]
fn laplacian_matches_dense_oracle() {
    for seed in 0..50 {
        let g = random_graph(seed);
        let lap = laplacian(&g);
        let oracle = dense_laplacian(&g);
        assert!((lap.to_dense() - &oracle).amax() <= 1e-12, "seed {seed}");
        for i in 0..lap.n() {
            let row_sum: f64 = lap.row(i).map(|(_, v)| v).sum();
            assert!(row_sum.abs() <= 1e-12, "seed {seed} row {i}");
        }

        let eig = oracle.symmetric_eigenvalues();
        let scale = eig.amax().max(1.0);
        assert!(eig.iter().all(|&l| l >= -1e-10 * scale), "seed {seed}: not PSD");
        let zeros = eig.iter().filter(|l| l.abs() <= 1e-9 * scale).count();
        let comps = connected_components(&g);
        let count = comps.iter().max().map_or(0, |&c| c + 1);
        assert_eq!(zeros, count, "seed {seed}");
    }
}

#[test]
fn eigenvector_residuals() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let data = random_data(&mut r, 80, 3, 1.0);
        let lap = laplacian(&build_knn_graph(&data, 6, Weighting::Gaussian).unwrap());
        let emb = embed_eigenvectors(&lap, 5).unwrap();
        let vals = emb.eigenvalues().unwrap().to_vec();
        for (k, lambda) in vals.into_iter().enumerate() {
            let col = emb.column(k);
            let lx = lap.mul_vec(&col);
            let res: f64 = lx.iter().zip(&col).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-6, "seed {seed} column {k}: {res}");
        }
    }
}

#[test]
fn gauss_seidel_energy_is_monotone() {
    for seed in 0..10 {
        let g = random_graph(100 + seed);
        let lap = laplacian(&g);
        let mut r = rng(seed);
        let mut x: Vec<f64> = (0..lap.n()).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut energy = lap.quadratic_form(&x);
        for _ in 0..20 {
            gauss_seidel_sweep(&lap, &mut x);
            let next = lap.quadratic_form(&x);
            assert!(next <= energy + 1e-12 * energy.abs().max(1.0), "seed {seed}: {next} > {energy}");
            energy = next;
        }
    }
}

fn within_vs_cross(emb: &Embedding, truth: &[i64]) -> (f64, f64) {
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for u in 0..truth.len() {
        for v in u + 1..truth.len() {
            let s = spectral_similarity(emb, u, v);
            if truth[u] == truth[v] {
                within += s;
                nw += 1;
            } else {
                cross += s;
                nc += 1;
            }
        }
    }
    (within / nw as f64, cross / nc as f64)
}

#[test]
fn blobs_are_spectrally_coherent_for_both_backends() {
    let centers = vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![3.0, 5.0]];
    let data = generate_blobs(40, &centers, 0.8, 21).unwrap();
    let truth = data.truth_labels().unwrap().to_vec();
    let lap = laplacian(&build_knn_graph(&data, 8, Weighting::Gaussian).unwrap());
    for (name, emb) in [
        ("eigen", embed_eigenvectors(&lap, 6).unwrap()),
        ("smoothed", embed_smoothed(&lap, 6, 10, 5).unwrap()),
    ] {
        let (w, c) = within_vs_cross(&emb, &truth);
        assert!(w > c, "{name}: within {w} cross {c}");
    }
}

#[test]
fn knn_graph_is_deterministic_without_isolated_vertices() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = r.random_range(2..60);
        let k = r.random_range(1..n.min(12));
        let data = random_data(&mut r, n, 3, 1.0);
        let a = build_knn_graph(&data, k, Weighting::Gaussian).unwrap();
        let b = build_knn_graph(&data, k, Weighting::Gaussian).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!((0..n).all(|v| a.degree(v) >= k));
    }
}

fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..8)
}

proptest! {
    #[test]
    fn similarity_is_symmetric_and_bounded(x in vec_strategy(), y in vec_strategy()) {
        let d = x.len().min(y.len());
        let (x, y) = (&x[..d], &y[..d]);
        let s = similarity(x, y);
        prop_assert_eq!(s, similarity(y, x));
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn similarity_ignores_scaling(x in vec_strategy(), y in vec_strategy(), c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
        let d = x.len().min(y.len());
        let (x, y) = (&x[..d], &y[..d]);
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!((similarity(&scaled, y) - similarity(x, y)).abs() <= 1e-12);
    }

    #[test]
    fn self_similarity_is_one(x in vec_strategy()) {
        prop_assume!(x.iter().any(|&v| v != 0.0));
        prop_assert!((similarity(&x, &x) - 1.0).abs() <= 1e-12);
    }
}
