use ordpool::pooling::{
    classic_pool_forward, init_kernels, ordinal_pool_backward, ordinal_pool_forward, project_simplex, InitScheme,
    OrdinalKernelSet, PoolKind, PoolMode,
};
use ordpool::{RngStream, Tensor};
use proptest::prelude::*;

/// `[1, oh*m, ow*n, c]` input, kernels and an output gradient.
fn case() -> impl Strategy<Value = (Tensor<f64>, OrdinalKernelSet, Tensor<f64>)> {
    (1usize..4, 1usize..4, 1usize..3, 1usize..3, 1usize..4, any::<u64>()).prop_flat_map(|(m, n, oh, ow, c, seed)| {
        let (h, w) = (oh * m, ow * n);
        (
            prop::collection::vec(-5.0f64..5.0, h * w * c),
            prop::collection::vec(-1.0f64..1.0, oh * ow * c),
        )
            .prop_map(move |(x, g)| {
                let mut rng = RngStream::new(seed);
                let k = init_kernels(InitScheme::Uniform, m, n, c, &mut rng).unwrap();
                (
                    Tensor::from_vec(&[1, h, w, c], x).unwrap(),
                    k,
                    Tensor::from_vec(&[1, oh, ow, c], g).unwrap(),
                )
            })
    })
}

fn window_values(t: &Tensor<f64>, m: usize, n: usize, wy: usize, wx: usize, ch: usize) -> Vec<f64> {
    let [_, _, w, c] = t.nhwc().unwrap();
    let mut v = Vec::new();
    for dy in 0..m {
        for dx in 0..n {
            v.push(t.data()[((wy * m + dy) * w + wx * n + dx) * c + ch]);
        }
    }
    v
}

proptest! {
    #[test]
    fn output_lies_in_window_hull((x, k, _) in case()) {
        let (m, n) = k.window();
        let out = ordinal_pool_forward(&x, &k).unwrap().out;
        let [_, oh, ow, c] = out.nhwc().unwrap();
        for wy in 0..oh {
            for wx in 0..ow {
                for ch in 0..c {
                    let v = window_values(&x, m, n, wy, wx, ch);
                    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let y = out.data()[(wy * ow + wx) * c + ch];
                    prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn window_gradient_sums_to_output_gradient((x, k, g) in case()) {
        let (m, n) = k.window();
        let fwd = ordinal_pool_forward(&x, &k).unwrap();
        let (gi, gk) = ordinal_pool_backward(&g, &k, &fwd.trace).unwrap();
        let [_, oh, ow, c] = g.nhwc().unwrap();
        for wy in 0..oh {
            for wx in 0..ow {
                for ch in 0..c {
                    let s: f64 = window_values(&gi, m, n, wy, wx, ch).iter().sum();
                    prop_assert!((s - g.data()[(wy * ow + wx) * c + ch]).abs() < 1e-12);
                }
            }
        }
        prop_assert_eq!(gk.len(), k.parameter_count());
    }

    #[test]
    fn kernel_gradient_is_the_sorted_values((x, k, g) in case()) {
        // d out / d w_r is the rank-r value of the window.
        let (m, n) = k.window();
        let fwd = ordinal_pool_forward(&x, &k).unwrap();
        let (_, gk) = ordinal_pool_backward(&g, &k, &fwd.trace).unwrap();
        let [_, oh, ow, c] = g.nhwc().unwrap();
        let mut expected = vec![0.0; k.parameter_count()];
        for wy in 0..oh {
            for wx in 0..ow {
                for ch in 0..c {
                    let mut v = window_values(&x, m, n, wy, wx, ch);
                    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    for (r, val) in v.iter().enumerate() {
                        expected[ch * m * n + r] += val * g.data()[(wy * ow + wx) * c + ch];
                    }
                }
            }
        }
        for (a, b) in gk.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn one_hot_kernels_select_order_statistics(x in prop::collection::vec(-5.0f64..5.0, 36), rank in 0usize..9) {
        let t = Tensor::from_vec(&[1, 6, 6, 1], x).unwrap();
        let mut w = vec![0.0; 9];
        w[rank] = 1.0;
        let k = OrdinalKernelSet::from_kernels(3, 3, vec![w]).unwrap();
        let out = ordinal_pool_forward(&t, &k).unwrap().out;
        for wy in 0..2 {
            for wx in 0..2 {
                let mut v = window_values(&t, 3, 3, wy, wx, 0);
                v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                prop_assert_eq!(out.data()[wy * 2 + wx], v[rank]);
            }
        }
        if rank == 0 || rank == 8 {
            let kind = if rank == 0 { PoolKind::Max } else { PoolKind::Min };
            let classic = classic_pool_forward(&t, &PoolMode::new(kind, 3, 3)).unwrap().out;
            prop_assert_eq!(classic.data(), out.data());
        }
    }

    #[test]
    fn projection_lands_on_simplex_and_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let p = project_simplex(&v).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q = project_simplex(&p).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn average_kernel_matches_average_pooling_in_f32() {
    let mut rng = RngStream::new(5);
    let x: Vec<f32> = rng.uniform(8 * 8 * 4, -1.0, 1.0).unwrap().into_iter().map(|v| v as f32).collect();
    let t = Tensor::from_vec(&[1, 8, 8, 4], x).unwrap();
    let k = OrdinalKernelSet::average(2, 2, 4).unwrap();
    let ord = ordinal_pool_forward(&t, &k).unwrap().out;
    let avg = classic_pool_forward(&t, &PoolMode::new(PoolKind::Avg, 2, 2)).unwrap().out;
    for (a, b) in ord.data().iter().zip(avg.data()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn ties_route_gradient_to_the_first_position() {
    let t = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0f64, 3.0, 3.0, 1.0]).unwrap();
    let k = OrdinalKernelSet::from_kernels(2, 2, vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
    let fwd = ordinal_pool_forward(&t, &k).unwrap();
    assert_eq!(fwd.trace.permutation(0), &[1, 2, 0, 3]);
    let g = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let (gi, _) = ordinal_pool_backward(&g, &k, &fwd.trace).unwrap();
    assert_eq!(gi.data(), &[0.0, 1.0, 0.0, 0.0]);
}
