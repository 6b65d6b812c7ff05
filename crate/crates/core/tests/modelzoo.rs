use onedatum::modelzoo::{build_audio_cnn, build_model, vgg, ModelSpec};
use tch::{Kind, Tensor};

// Independent layer-by-layer parameter arithmetic.
fn conv(cin: usize, cout: usize, kh: usize, kw: usize, bias: bool) -> usize {
    cin * cout * kh * kw + if bias { cout } else { 0 }
}

fn norm(c: usize) -> usize {
    2 * c
}

fn fc(cin: usize, classes: usize) -> usize {
    cin * classes + classes
}

fn resnet_params(depth: usize, classes: usize) -> usize {
    let n = (depth - 2) / 6;
    let mut total = conv(3, 16, 3, 3, false) + norm(16);
    let mut cin = 16;
    for cout in [16, 32, 64] {
        for _ in 0..n {
            total += conv(cin, cout, 3, 3, false) + norm(cout) + conv(cout, cout, 3, 3, false) + norm(cout);
            cin = cout;
        }
    }
    total + fc(64, classes)
}

fn wrn_params(depth: usize, k: usize, classes: usize) -> usize {
    let n = (depth - 4) / 6;
    let mut total = conv(3, 16, 3, 3, false);
    let mut cin = 16;
    for cout in [16 * k, 32 * k, 64 * k] {
        for _ in 0..n {
            total += norm(cin) + conv(cin, cout, 3, 3, false) + norm(cout) + conv(cout, cout, 3, 3, false);
            if cin != cout {
                total += conv(cin, cout, 1, 1, false);
            }
            cin = cout;
        }
    }
    total + norm(cin) + fc(cin, classes)
}

fn vgg_params(depth: usize, classes: usize) -> usize {
    let mut cin = 3;
    let mut total = 0;
    for &c in vgg::plan(depth).unwrap() {
        if c > 0 {
            total += conv(cin, c as usize, 3, 3, true) + norm(c as usize);
            cin = c as usize;
        }
    }
    total + fc(cin, classes)
}

fn audio_params(classes: usize) -> usize {
    let mut cin = 1;
    let mut total = 0;
    for c in [24, 32, 64, 128] {
        total += conv(cin, c, 4, 1, true) + conv(cin, c, 1, 4, true) + conv(2 * c, c, 1, 1, true) + norm(c);
        cin = c;
    }
    total + fc(cin, classes)
}

#[test]
fn golden_parameter_counts() {
    let cases: [(&str, usize, usize, usize); 9] = [
        ("resnet20", 10, resnet_params(20, 10), 269_722),
        ("resnet56", 10, resnet_params(56, 10), 853_018),
        ("resnet56", 100, resnet_params(56, 100), 858_868),
        ("vgg11", 10, vgg_params(11, 10), 9_231_114),
        ("vgg19", 10, vgg_params(19, 10), 20_040_522),
        ("wrn16-4", 10, wrn_params(16, 4, 10), 2_748_890),
        ("wrn40-4", 10, wrn_params(40, 4, 10), 8_949_210),
        ("wrn16-2", 10, wrn_params(16, 2, 10), 691_674),
        ("audio-cnn", 35, audio_params(35), 138_171),
    ];
    for (name, classes, oracle, golden) in cases {
        let m = build_model(&ModelSpec::preset(name, classes).unwrap(), 0).unwrap();
        assert_eq!(m.num_params(), oracle, "{name}: built vs analytic");
        if golden > 0 {
            assert_eq!(oracle, golden, "{name}: analytic vs pinned");
        }
    }
}

#[test]
fn wrn16_4_is_about_2_75m() {
    let m = build_model(&ModelSpec::wideresnet(16, 4, 10), 0).unwrap();
    let p = m.num_params() as f64;
    assert!((p / 2.75e6 - 1.0).abs() < 0.01, "{p}");
}

#[test]
fn logits_have_class_width() {
    let x = Tensor::randn([2, 3, 32, 32], (Kind::Float, tch::Device::Cpu));
    for name in ["wrn40-4", "resnet20", "vgg11"] {
        let m = build_model(&ModelSpec::preset(name, 10).unwrap(), 1).unwrap();
        assert_eq!(m.predict(&x).size(), vec![2, 10], "{name}");
    }
}

#[test]
fn audio_cnn_shapes() {
    let m = build_audio_cnn(35, 0).unwrap();
    let x = Tensor::zeros([2, 1, 98, 64], (Kind::Float, tch::Device::Cpu));
    let (logits, taps) = m.forward_taps(&x);
    assert_eq!(logits.size(), vec![2, 35]);
    assert_eq!(taps.last().unwrap().size(), vec![2, 128, 7, 4]);
    let dims: Vec<Vec<i64>> = taps.iter().map(|t| t.size()[2..].to_vec()).collect();
    assert_eq!(dims, vec![vec![49, 32], vec![25, 16], vec![13, 8], vec![7, 4]]);
    assert!(bool::try_from(logits.isfinite().all()).unwrap());
    assert!(m.regularization().is_some());
    assert!(build_audio_cnn(1, 0).is_err());
}

#[test]
fn same_seed_same_weights() {
    let spec = ModelSpec::cifar_resnet(20, 10);
    let a = build_model(&spec, 7).unwrap();
    let b = build_model(&spec, 7).unwrap();
    let c = build_model(&spec, 8).unwrap();
    assert_eq!(a.weight_hash(), b.weight_hash());
    assert_ne!(a.weight_hash(), c.weight_hash());
}

#[test]
fn inference_is_pure() {
    let m = build_model(&ModelSpec::wideresnet(16, 2, 10), 2).unwrap();
    let x = Tensor::randn([4, 3, 32, 32], (Kind::Float, tch::Device::Cpu));
    let before = m.weight_hash();
    let a = m.predict(&x);
    let b = m.predict(&x);
    assert!(a.equal(&b));
    assert_eq!(m.weight_hash(), before);
}

#[test]
fn clone_is_deep_and_equal() {
    let m = build_model(&ModelSpec::cifar_resnet(8, 10), 4).unwrap();
    let c = m.try_clone().unwrap();
    assert_eq!(m.weight_hash(), c.weight_hash());
    let (name, t) = &c.params()[0];
    tch::no_grad(|| {
        let _ = t.shallow_clone().fill_(1.0);
    });
    assert_ne!(m.weight_hash(), c.weight_hash(), "{name} shared storage");
}

#[test]
fn final_bias_is_zero() {
    let m = build_model(&ModelSpec::cifar_resnet(8, 10), 4).unwrap();
    let (_, bias) = m.params().iter().find(|(n, _)| n == "fc.bias").unwrap();
    assert_eq!(bias.abs().sum(Kind::Float).double_value(&[]), 0.0);
}
