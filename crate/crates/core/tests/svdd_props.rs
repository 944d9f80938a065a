mod common;

use common::{gram, random_data, rng, svdd_dual_oracle};
use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use spsvc::data::DataSet;
use spsvc::svdd::{train, KernelParams, PointRole, SvddModel, TrainOptions};

fn fuzz_model(seed: u64) -> (DataSet, SvddModel) {
    let mut r = rng(seed);
    let n = r.random_range(2..=60);
    let d = r.random_range(1..=5);
    let data = random_data(&mut r, n, d, 2.0);
    let q = r.random_range(0.1..3.0);
    let c = match seed % 3 {
        0 => 1.0,
        1 => r.random_range(1.0 / n as f64..1.0),
        _ => (1.5 / n as f64).min(1.0),
    };
    let model = train(&data, KernelParams::new(q, c).unwrap(), &TrainOptions::default()).unwrap();
    (data, model)
}

#[test]
fn dual_feasibility_and_kkt_on_fuzzed_data() {
    for seed in 0..100 {
        let (data, model) = fuzz_model(seed);
        let c = model.params().c();
        let beta = model.beta();
        assert!((beta.iter().sum::<f64>() - 1.0).abs() <= 1e-8, "seed {seed}");
        assert!(beta.iter().all(|&b| (0.0..=c).contains(&b)), "seed {seed}");
        assert!(model.converged(), "seed {seed}");

        let tau = model.tol();
        let r2 = model.r_squared();
        for i in 0..data.n() {
            let f = model.radius2(data.row(i)).unwrap();
            match model.point_role(i) {
                PointRole::Inside => assert!(f <= r2 + tau, "seed {seed} point {i}: {f} > {r2}"),
                PointRole::SupportVector => assert!((f - r2).abs() <= tau, "seed {seed} point {i}: {f} vs {r2}"),
                PointRole::BoundedSupportVector => assert!(f >= r2 - tau, "seed {seed} point {i}: {f} < {r2}"),
            }
        }
    }
}

#[test]
fn objective_matches_qp_oracle() {
    let opts = TrainOptions {
        tol: 1e-8,
        ..TrainOptions::default()
    };
    (0..100u64).into_par_iter().for_each(|seed| {
        let (data, model) = fuzz_model(seed);
        let model = train(&data, *model.params(), &opts).unwrap();
        let k = gram(&data, model.params().q());
        let (_, w_oracle) = svdd_dual_oracle(&k, model.params().c());
        let w = model.objective();
        assert!(
            (w - w_oracle).abs() <= 1e-6 * w_oracle.abs(),
            "seed {seed}: solver {w} oracle {w_oracle}"
        );
    });
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..10 {
        let (data, model) = fuzz_model(1000 + seed);
        let mut r = rng(seed);
        for _ in 0..100 {
            let i = r.random_range(0..data.n());
            let x: Vec<f64> = data.row(i).iter().map(|v| v + r.random_range(-1.0..1.0)).collect();
            let g = model.radius2_gradient(&x).unwrap();
            let fd: Vec<f64> = (0..x.len())
                .map(|k| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    (model.radius2(&xp).unwrap() - model.radius2(&xm).unwrap()) / (2.0 * h)
                })
                .collect();
            let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-5 * scale.max(1e-6), "seed {seed}: {g:?} vs {fd:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn radius_is_nonnegative(seed in 0u64..10_000, probe in prop::collection::vec(-5.0f64..5.0, 5)) {
        let (data, model) = fuzz_model(seed);
        let x = &probe[..data.d()];
        prop_assert!(model.radius2(x).unwrap() >= -1e-9);
    }

    #[test]
    fn power_of_two_scaling_keeps_beta_exactly(seed in 0u64..10_000, exp in -4i32..4) {
        // scaling by 2^e is exact, so the kernel matrix is bitwise unchanged
        let (data, model) = fuzz_model(seed);
        let scale = 2f64.powi(exp);
        let p = model.params();
        let params = KernelParams::new(p.q() / (scale * scale), p.c()).unwrap();
        let other = train(&data.scaled(scale).unwrap(), params, &TrainOptions::default()).unwrap();
        prop_assert_eq!(model.beta(), other.beta());
    }

    #[test]
    fn arbitrary_scaling_keeps_the_optimum(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let opts = TrainOptions { tol: 1e-10, ..TrainOptions::default() };
        let (data, model) = fuzz_model(seed);
        let p = *model.params();
        let base = train(&data, p, &opts).unwrap();
        let params = KernelParams::new(p.q() / (scale * scale), p.c()).unwrap();
        let other = train(&data.scaled(scale).unwrap(), params, &opts).unwrap();
        prop_assert!((base.objective() - other.objective()).abs() <= 1e-9 * base.objective());
    }
}
