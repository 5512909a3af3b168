use std::path::Path;

use proptest::prelude::*;

use ekvnet::core_model::ids_core;
use ekvnet::dataset::{read_csv, write_csv, CorrectionSample};
use ekvnet::network::{eps_grad, eps_predict, ids_full, init_weights};
use ekvnet::training::{loss_grad, loss_j, TrainConfig};
use ekvnet::validation::{gummel_sweep, GummelConfig};
use ekvnet::veriloga::{emit_veriloga, format_constant, round_trip_error, TanhStyle};
use ekvnet::{BiasPoint, CoreParams, IVSample, TrainedModel};

fn volt() -> impl Strategy<Value = f64> {
    -0.5f64..1.0
}

fn arch() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..8, 1..4).prop_map(|hidden| {
        let mut s = vec![2];
        s.extend(hidden);
        s.push(1);
        s
    })
}

fn core() -> impl Strategy<Value = CoreParams> {
    (1e-6f64..1e-3, 0.02f64..0.1, 0.1f64..0.5).prop_map(|(p, v_ss, v_t)| CoreParams::new(p, v_ss, v_t, 2.0).unwrap())
}

fn model() -> impl Strategy<Value = TrainedModel> {
    (core(), arch(), any::<u64>())
        .prop_map(|(c, sizes, seed)| TrainedModel::new(c, init_weights(&sizes, seed).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn current_is_antisymmetric_and_eps_symmetric(m in model(), a in volt(), b in volt()) {
        let fwd = BiasPoint::new(a, b);
        let e1 = eps_predict(&fwd, &m.network);
        let e2 = eps_predict(&fwd.swapped(), &m.network);
        prop_assert_eq!(e1.to_bits(), e2.to_bits());
        let i1 = ids_full(&fwd, &m).i_ds;
        let i2 = ids_full(&fwd.swapped(), &m).i_ds;
        prop_assert_eq!(i1, -i2);
        prop_assert_eq!(ids_full(&BiasPoint::new(a, a), &m).i_ds, 0.0);
    }

    #[test]
    fn eps_source_and_drain_derivatives_swap(m in model(), a in volt(), b in volt()) {
        let g = eps_grad(&BiasPoint::new(a, b), &m.network);
        let s = eps_grad(&BiasPoint::new(b, a), &m.network);
        // Terminal roles exchange when the bias is mirrored.
        prop_assert_eq!(g.d_vd, s.d_vs);
        prop_assert_eq!(g.d_vg, s.d_vg);
        prop_assert!((g.d_vg + g.d_vd + g.d_vs).abs() <= 1e-12 * (g.d_vd.abs() + g.d_vs.abs()).max(1e-300));
    }

    #[test]
    fn core_current_is_positive_in_forward_bias(c in core(), a in volt(), d in 1e-3f64..0.5) {
        let b = BiasPoint::from_vgs_vds(a, d);
        prop_assert!(ids_core(&b, &c) >= 0.0);
    }

    #[test]
    fn csv_round_trip_is_stable(rows in prop::collection::vec((volt(), volt(), -1e-3f64..1e-3), 1..40)) {
        let samples: Vec<IVSample> = rows.iter().map(|&(g, d, i)| IVSample::new(BiasPoint::from_vgs_vds(g, d), i)).collect();
        let mut first = Vec::new();
        write_csv(&mut first, &samples).unwrap();
        let back = read_csv(first.as_slice(), Path::new("mem")).unwrap();
        prop_assert_eq!(back.len(), samples.len());
        for (x, y) in back.iter().zip(&samples) {
            prop_assert_eq!(x.bias.v_gs, y.bias.v_gs);
            prop_assert_eq!(x.i_ds, y.i_ds);
        }
        let mut second = Vec::new();
        write_csv(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn model_json_is_lossless(m in model()) {
        let text = m.to_json().unwrap();
        let back = TrainedModel::from_json(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn printed_constants_parse_back_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_constant(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn loss_is_nonnegative_and_gradient_consistent(
        seed in 0u64..1000,
        targets in prop::collection::vec((0.0f64..0.7, 0.001f64..0.7, 0.5f64..1.5, -1.0f64..1.0, -1.0f64..1.0), 1..12),
    ) {
        let net = init_weights(&[2, 3, 2, 1], seed).unwrap();
        let samples: Vec<CorrectionSample> = targets
            .iter()
            .map(|&(g, d, e, dg, dd)| CorrectionSample { bias: BiasPoint::from_vgs_vds(g, d), eps: e, d_eps_dvg: dg, d_eps_dvd: dd })
            .collect();
        let cfg = TrainConfig::default();
        let j = loss_j(&samples, &net, &cfg).unwrap();
        let (j2, grad) = loss_grad(&samples, &net, &cfg).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert!((j - j2).abs() <= 1e-12 * j.max(1e-300));
        // A small step against the gradient lowers the cost.
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        prop_assume!(norm2 > 1e-20);
        let step = 1e-4 * j / norm2;
        let p: Vec<f64> = net.params().iter().zip(&grad).map(|(p, g)| p - step * g).collect();
        let mut moved = net.clone();
        moved.set_params(&p).unwrap();
        prop_assert!(loss_j(&samples, &moved, &cfg).unwrap() < j);
    }

    #[test]
    fn gummel_current_is_odd(m in model(), v_g in 0.0f64..0.8) {
        let g = gummel_sweep(&m, &GummelConfig { v_g, v_x_max: 0.1, points: 21 }).unwrap();
        prop_assert!(g.oddness < 1e-14);
        prop_assert!(g.d2_zero_ratio < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn veriloga_round_trip(m in model(), exp in any::<bool>(), biases in prop::collection::vec((volt(), volt()), 1..50)) {
        let style = if exp { TanhStyle::ExpFallback } else { TanhStyle::Builtin };
        let program = emit_veriloga(&m, "prop", style).unwrap().parse().unwrap();
        let biases: Vec<BiasPoint> = biases.into_iter().map(|(a, b)| BiasPoint::new(a, b)).collect();
        prop_assert!(round_trip_error(&m, &program, &biases).unwrap() < 1e-9);
    }
}
