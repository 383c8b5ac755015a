use candle_core::{DType, Device, Tensor, Var};
use hypsam_core::data::{prepare, synthetic::synthetic_sample, Normalization};
use hypsam_dfnet::backbone::BackboneKind;
use hypsam_dfnet::decoder::Pyramid;
use hypsam_dfnet::{DfNet, DfNetConfig, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEV: Device = Device::Cpu;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f32> = (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    Tensor::from_vec(v, shape, &DEV).unwrap()
}

fn max_abs(a: &Tensor, b: &Tensor) -> f32 {
    (a - b)
        .unwrap()
        .abs()
        .unwrap()
        .max_all()
        .unwrap()
        .to_scalar::<f32>()
        .unwrap()
}

fn tiny(res: usize, seed: u64) -> DfNet {
    DfNet::new(DfNetConfig::tiny(res), seed, DType::F32, &DEV, None).unwrap()
}

#[test]
fn pyramid_strides_at_384() {
    let net = tiny(384, 0);
    let x = Tensor::zeros((1, 3, 384, 384), DType::F32, &DEV).unwrap();
    let (r, t) = net.extract_features(&x, &x, false).unwrap();
    for p in [&r, &t] {
        let sizes: Vec<usize> = p.0.iter().map(|l| l.dim(2).unwrap()).collect();
        assert_eq!(sizes, vec![96, 48, 24, 12]);
        assert!(p.0.iter().all(|l| l.dim(1).unwrap() == 16));
    }
    let f = net.features(&x, &x, false).unwrap();
    assert_eq!(f.decoded_fused.dims(), &[1, 16, 96, 96]);
    assert_eq!(f.decoded_boundary.dims(), &[1, 16, 96, 96]);
}

#[test]
fn identically_initialized_streams_agree_on_identical_inputs() {
    let net = tiny(64, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = randn(&mut rng, &[2, 3, 64, 64]);
    let (r, t) = net.extract_features(&x, &x, false).unwrap();
    for (a, b) in r.0.iter().zip(&t.0) {
        assert_eq!(max_abs(a, b), 0.0);
    }
    // Distinct parameter tensors, not a shared stream.
    let s = net.store();
    let a = s.get("backbone.rgb.stem.conv.weight").unwrap();
    let b = s.get("backbone.thermal.stem.conv.weight").unwrap();
    assert_eq!(max_abs(&a, &b), 0.0);
    assert_ne!(a.id(), b.id());
}

#[test]
fn level_five_features_have_gradients_matching_differences() {
    let net = tiny(64, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Var::from_tensor(&randn(&mut rng, &[1, 3, 64, 64])).unwrap();
    let thermal = randn(&mut rng, &[1, 3, 64, 64]);
    let objective = |x: &Tensor| {
        net.extract_features(x, &thermal, false)
            .unwrap()
            .0
            .level(5)
            .sum_all()
            .unwrap()
    };
    let grads = objective(x.as_tensor()).backward().unwrap();
    let g = grads
        .get(x.as_tensor())
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1::<f32>()
        .unwrap();
    assert!(g.iter().any(|&v| v != 0.0));
    let base = x
        .as_tensor()
        .flatten_all()
        .unwrap()
        .to_vec1::<f32>()
        .unwrap();
    // Pick coordinates with clearly nonzero gradient and use a step small
    // relative to the input scale.
    let mut idx: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() > 1e-2).collect();
    idx.sort_by_key(|&i| (i * 2_654_435_761) % 1_000_003);
    let mut checked = 0;
    for &i in idx.iter().take(3) {
        let eval = |d: f32| {
            let mut v = base.clone();
            v[i] += d;
            let t = Tensor::from_vec(v, (1, 3, 64, 64), &DEV).unwrap();
            objective(&t).to_scalar::<f32>().unwrap() as f64
        };
        let h = 1e-2f32;
        let fd = (eval(h) - eval(-h)) / (2.0 * h as f64);
        let rel = (fd - g[i] as f64).abs() / (g[i] as f64).abs();
        assert!(rel < 1e-2, "coordinate {i}: fd {fd} analytic {}", g[i]);
        checked += 1;
    }
    assert_eq!(checked, 3);
}

#[test]
fn eval_mode_is_deterministic_and_maps_are_probabilities() {
    let net = tiny(64, 3);
    let sample = synthetic_sample("a", 80, 3);
    let pair = prepare(&sample, 64, &Normalization::default());
    let a = net.predict(&pair).unwrap();
    let b = net.predict(&pair).unwrap();
    assert_eq!(a, b);
    for m in [
        &a.sal_mixed,
        &a.sal_rgb,
        &a.sal_thermal,
        &a.sal_boundary,
        &a.sal_fused,
    ] {
        assert_eq!(m.dim(), (64, 64));
        assert!(m.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let wild = (randn(&mut rng, &[1, 3, 64, 64]) * 1e3).unwrap();
    let out = net.forward_t(&wild, &wild, false).unwrap();
    for t in [&out.mixed, &out.fused, &out.boundary] {
        let v = t.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
    }
}

#[test]
fn decoders_use_the_last_skip_and_report_bad_strides() {
    let net = tiny(64, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let levels = |rng: &mut ChaCha8Rng| Pyramid([16, 8, 4, 2].map(|s| randn(rng, &[1, 16, s, s])));
    let p = levels(&mut rng);
    let dec = net.decoder('m').unwrap();
    let a = dec.forward_t(&p, false).unwrap();
    assert_eq!(a.dims(), &[1, 16, 16, 16]);
    assert_eq!(max_abs(&a, &dec.forward_t(&p, false).unwrap()), 0.0);
    let mut q = p.clone();
    q.0[0] = (&q.0[0] + 0.5).unwrap();
    assert!(max_abs(&a, &dec.forward_t(&q, false).unwrap()) > 0.0);

    let bad = Pyramid([16, 8, 5, 2].map(|s| randn(&mut rng, &[1, 16, s, s])));
    assert!(matches!(
        dec.forward_t(&bad, false),
        Err(Error::ShapeMismatch { .. })
    ));

    let bd = net
        .boundary_decoder()
        .forward_t(p.level(5), p.level(2), false)
        .unwrap();
    assert_eq!(bd.dims(), &[1, 16, 16, 16]);
}

#[test]
fn fusion_of_zero_features_has_zero_pre_activation() {
    let net = tiny(64, 5);
    let z = Tensor::zeros((1, 16, 16, 16), DType::F32, &DEV).unwrap();
    let pre = net.fusion().pre_activation(&z, &z, &z, &z).unwrap();
    assert_eq!(
        pre.abs()
            .unwrap()
            .max_all()
            .unwrap()
            .to_scalar::<f32>()
            .unwrap(),
        0.0
    );
    let out = net.fusion().forward_t(&z, &z, &z, &z, false).unwrap();
    assert_eq!(out.dims(), &[1, 16, 16, 16]);
    let odd = Tensor::zeros((1, 16, 8, 8), DType::F32, &DEV).unwrap();
    assert!(net.fusion().forward_t(&z, &z, &z, &odd, false).is_err());
}

#[test]
fn same_seed_same_model() {
    let a = tiny(64, 6);
    let b = tiny(64, 6);
    let c = tiny(64, 7);
    let x = Tensor::ones((1, 3, 64, 64), DType::F32, &DEV).unwrap();
    let (pa, pb, pc) = (
        a.forward_t(&x, &x, false).unwrap().fused,
        b.forward_t(&x, &x, false).unwrap().fused,
        c.forward_t(&x, &x, false).unwrap().fused,
    );
    assert_eq!(max_abs(&pa, &pb), 0.0);
    assert!(max_abs(&pa, &pc) > 0.0);
}

#[test]
fn wrong_input_size_is_rejected() {
    let net = tiny(64, 8);
    let x = Tensor::zeros((1, 3, 32, 32), DType::F32, &DEV).unwrap();
    assert!(matches!(
        net.forward_t(&x, &x, false),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(DfNet::new(DfNetConfig::tiny(50), 0, DType::F32, &DEV, None).is_err());
}

#[test]
fn swin_backbone_produces_the_same_pyramid_geometry() {
    let cfg = DfNetConfig {
        backbone: BackboneKind::Swinv2Micro,
        pretrained: false,
        channels: 16,
        resolution: 64,
        ..DfNetConfig::default()
    };
    let net = DfNet::new(cfg, 9, DType::F32, &DEV, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = randn(&mut rng, &[2, 3, 64, 64]);
    let (r, _) = net.extract_features(&x, &x, false).unwrap();
    let sizes: Vec<usize> = r.0.iter().map(|l| l.dim(2).unwrap()).collect();
    assert_eq!(sizes, vec![16, 8, 4, 2]);
    let out = net.forward_t(&x, &x, false).unwrap();
    assert_eq!(out.fused.dims(), &[2, 1, 64, 64]);
    // Swapping the two samples in the batch swaps the predictions.
    let swapped = Tensor::cat(
        &[
            x.get(1).unwrap().unsqueeze(0).unwrap(),
            x.get(0).unwrap().unsqueeze(0).unwrap(),
        ],
        0,
    )
    .unwrap();
    let out2 = net.forward_t(&swapped, &swapped, false).unwrap();
    assert!(max_abs(&out.fused.get(0).unwrap(), &out2.fused.get(1).unwrap()) < 1e-5);
}

#[test]
fn swin_shifted_windows_are_exercised() {
    // 128² input: stage-one resolution 32 exceeds window 4, so odd blocks shift.
    let cfg = DfNetConfig {
        backbone: BackboneKind::Swinv2Micro,
        pretrained: false,
        channels: 8,
        resolution: 128,
        ..DfNetConfig::default()
    };
    let net = DfNet::new(cfg, 10, DType::F32, &DEV, None).unwrap();
    let x = Tensor::ones((1, 3, 128, 128), DType::F32, &DEV).unwrap();
    let out = net.forward_t(&x, &x, false).unwrap();
    assert_eq!(out.mixed.dims(), &[1, 1, 128, 128]);
}
