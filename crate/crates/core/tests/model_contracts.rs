mod common;

use common::*;
use landmark_core::data::DomainSpec;
use landmark_core::error::Error;
use landmark_core::heatmap::decode_planes;
use landmark_core::model::SeparableBlock;
use landmark_core::model::{fuse, receptive_field, ModelConfig, Variant};
use landmark_core::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;

#[test]
fn every_variant_produces_probabilities_of_the_right_shape() {
    for variant in Variant::ALL {
        let model = build(variant, toy_config(&[3, 5], 32, 3, 4), 2);
        for (d, k) in [(0, 3), (1, 5)] {
            let (x, _) = random_batch(d as u64, 2, k, 32);
            let y = model.infer(&x, d).unwrap();
            assert_eq!(y.shape(), [2, k, 32, 32], "{variant}");
            assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0), "{variant}");
        }
    }
}

#[test]
fn training_and_inference_agree_after_statistics_settle() {
    // With momentum 1 the running statistics equal the last batch's, so a
    // single-image train pass and an eval pass see identical normalization.
    let mut config = toy_config(&[2], 16, 2, 4);
    config.norm_momentum = 1.0;
    let mut model = build(Variant::Gu2net, config, 8);
    let (x, _) = random_batch(3, 1, 2, 16);
    // Running variance is unbiased, batch variance biased; n/(n-1) differs
    // from 1 so compare with tolerance on a large plane.
    let train = model.forward(&x, 0).unwrap();
    let eval = model.infer(&x, 0).unwrap();
    let diff = train
        .data()
        .iter()
        .zip(eval.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 0.05, "{diff}");
}

#[test]
fn input_validation() {
    let model = build(Variant::Gu2net, toy_config(&[2], 16, 2, 4), 0);
    let x = Tensor::zeros([1, 1, 16, 16]);
    assert!(matches!(
        model.infer(&x, 1),
        Err(Error::DomainOutOfRange { index: 1, count: 1 })
    ));
    assert!(matches!(
        model.infer(&Tensor::zeros([1, 1, 18, 16]), 0),
        Err(Error::Indivisible { .. })
    ));
    assert!(matches!(
        model.infer(&Tensor::zeros([1, 2, 16, 16]), 0),
        Err(Error::ShapeMismatch(_))
    ));
    assert!(model.global_heatmap(&x, None, 0).is_err());
    let local = build(Variant::LocalOnly, toy_config(&[2], 16, 2, 4), 0);
    assert!(local.global_heatmap(&x, None, 0).is_err());
}

#[test]
fn config_validation() {
    let mut c = toy_config(&[2], 16, 2, 4);
    c.domains[0].resize_to = (18, 16);
    assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    let mut c = toy_config(&[2, 2], 16, 2, 4);
    c.domains[1].domain_id = "d0".into();
    assert!(c.validate().is_err());
    assert!(ModelConfig::default().validate().is_err());
    assert!("resnet".parse::<Variant>().is_err());
    for v in Variant::ALL {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
    }
}

#[test]
fn fusion_identities() {
    let model = build(Variant::LocalOnly, toy_config(&[4], 16, 2, 4), 6);
    let (x, _) = random_batch(1, 1, 4, 16);
    let l = model.infer(&x, 0).unwrap();
    let ones = Tensor::filled(l.shape(), 1.0);
    assert_eq!(fuse(&l, &ones), l);
    let g = build(Variant::GlobalOnly, toy_config(&[4], 16, 2, 4), 7)
        .infer(&x, 0)
        .unwrap();
    let base = decode_planes(fuse(&l, &g).data(), 4, 16, 16).unwrap();
    for c in [0.1, 1.0, 10.0] {
        let scaled = g.map(|v| v * c);
        assert_eq!(decode_planes(fuse(&l, &scaled).data(), 4, 16, 16).unwrap(), base);
    }
}

#[test]
fn fused_output_is_product_of_branches() {
    let model = build(Variant::Gu2net, toy_config(&[3], 32, 3, 4), 4);
    let (x, _) = random_batch(5, 2, 3, 32);
    let l = model.local_heatmap(&x, 0).unwrap();
    let g = model.global_heatmap(&x, Some(&l), 0).unwrap();
    assert_eq!(model.infer(&x, 0).unwrap(), fuse(&l, &g));
}

#[test]
fn state_round_trip_is_bit_exact() {
    let a = build(Variant::Gu2net, toy_config(&[2, 3], 16, 2, 4), 1);
    let mut b = build(Variant::Gu2net, toy_config(&[2, 3], 16, 2, 4), 2);
    let (x, _) = random_batch(0, 2, 3, 16);
    assert_ne!(a.infer(&x, 1).unwrap(), b.infer(&x, 1).unwrap());
    b.load_state(&a.state()).unwrap();
    assert_eq!(a.infer(&x, 1).unwrap(), b.infer(&x, 1).unwrap());
    let mut c = build(Variant::LocalOnly, toy_config(&[2, 3], 16, 2, 4), 2);
    assert!(matches!(c.load_state(&a.state()), Err(Error::ParamMismatch(_))));
}

#[test]
fn parameter_names_are_unique_and_scoped() {
    for variant in Variant::ALL {
        let m = build(variant, toy_config(&[2, 3, 4], 16, 3, 4), 0);
        let ps = params(&m);
        let names: std::collections::BTreeSet<_> = ps.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.len(), ps.len(), "{variant}");
        for p in &ps {
            let suffix = p.name.rsplit_once(':').map(|(_, d)| d);
            match p.scope {
                landmark_core::model::Scope::Shared => assert!(suffix.is_none(), "{}", p.name),
                landmark_core::model::Scope::Domain(i) => {
                    assert_eq!(suffix, Some(format!("d{i}").as_str()), "{}", p.name)
                }
            }
        }
    }
}

#[test]
fn global_receptive_field_spans_the_coarse_grid() {
    assert_eq!(receptive_field(&[1, 2, 5, 2, 1]), 23);
}

#[test]
fn accounting_ordering_at_default_width() {
    let config = ModelConfig::with_domains(vec![DomainSpec::head(), DomainSpec::hand(), DomainSpec::chest()]);
    let count = |v| build(v, config.clone(), 0).count_params();
    let (g, u, t) = (count(Variant::Gu2net), count(Variant::Unet), count(Variant::TriUnet));
    assert!(
        g.total < u.total && u.total < t.total,
        "{} {} {}",
        g.total,
        u.total,
        t.total
    );
    assert_eq!(t.conv_weights, 3 * u.conv_weights);
    assert_eq!(u.domain_specific, u.head);
    assert_eq!(t.shared, 0);
    for v in Variant::ALL {
        let a = count(v);
        assert_eq!(a.total, a.shared + a.domain_specific);
    }
    let audit = build(Variant::Gu2net, config, 0).separable_audit();
    assert_eq!(audit.len(), 14);
    assert!(audit.iter().all(|b| b.matches_formula() && b.domains == 3));
}

#[test]
fn single_domain_separable_is_cheaper_than_dense() {
    for (n, m) in [(1, 2), (8, 16), (64, 64), (3, 128)] {
        assert!(9 * n + n * m < 9 * n * m);
    }
    let audit = build(Variant::LocalOnly, toy_config(&[2], 16, 3, 8), 0).separable_audit();
    assert!(audit
        .iter()
        .all(|b| b.domains == 1 && b.conv_weights == 9 * b.in_channels + b.in_channels * b.out_channels));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn separable_blocks_follow_the_weight_formula(n in 1usize..=64, m in 1usize..=64, t in 1usize..=5) {
        let ids: Vec<String> = (0..t).map(|i| format!("d{i}")).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64((n * 1000 + m * 10 + t) as u64);
        let block = SeparableBlock::with_defaults("block", n, m, &ids, &mut rng);
        prop_assert_eq!(block.conv_weight_count(), 9 * n * t + n * m);
    }
}
