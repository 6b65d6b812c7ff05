use std::sync::Mutex;

use onedatum::data::{FlipCrop, ImageSource, LabeledData, Normalization, PackedImages};
use onedatum::distillery::loss::{kd_loss_batch, soften_batch};
use onedatum::distillery::{
    cutmix, cutmix_with, degrade_signal, distill, kd_grad, kd_loss, mixup, soften, Budget, CutBox, DistillConfig,
    MixKind, SignalMode, Student,
};
use onedatum::modelzoo::{build_model, Classifier, Model, ModelSpec};
use onedatum::run::RunDir;
use onedatum::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

fn random_logits(rng: &mut ChaCha8Rng, c: usize, scale: f64) -> Vec<f64> {
    (0..c).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
}

#[test]
fn kd_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = random_logits(&mut rng, 10, 5.0);
        let s = random_logits(&mut rng, 10, 5.0);
        let tau = 0.5 + 10.0 * rng.random::<f64>();
        let g = kd_grad(&t, &s, tau).unwrap();
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for j in 0..10 {
            let mut up = s.clone();
            up[j] += h;
            let mut dn = s.clone();
            dn[j] -= h;
            let fd = (kd_loss(&t, &up, tau).unwrap() - kd_loss(&t, &dn, tau).unwrap()) / (2.0 * h);
            num += (g[j] - fd).powi(2);
            den = den.max(g[j].abs()).max(fd.abs());
        }
        let rel = num.sqrt() / den.max(1e-12);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn kd_closed_form_two_classes() {
    // Direct summation of p_t * (log p_t - log p_s).
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let pt = [sig(2.0), sig(-2.0)];
    let ps = [sig(-2.0), sig(2.0)];
    let oracle: f64 = pt.iter().zip(&ps).map(|(a, b)| a * (a.ln() - b.ln())).sum();
    let v = kd_loss(&[2.0, 0.0], &[0.0, 2.0], 1.0).unwrap();
    assert!((v - oracle).abs() < 1e-12);
    assert!((v - 1.523188).abs() < 1e-5, "{v}");
}

#[test]
fn kd_loss_of_identical_logits_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = random_logits(&mut rng, 10, 20.0);
        assert_eq!(kd_loss(&t, &t, 4.0).unwrap(), 0.0);
    }
}

#[test]
fn batch_loss_and_autograd_match_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, c, tau) = (6usize, 10usize, 3.0);
    let t: Vec<Vec<f64>> = (0..n).map(|_| random_logits(&mut rng, c, 4.0)).collect();
    let s: Vec<Vec<f64>> = (0..n).map(|_| random_logits(&mut rng, c, 4.0)).collect();
    let flat = |v: &[Vec<f64>]| Tensor::from_slice(&v.concat()).view([n as i64, c as i64]).to_kind(Kind::Double);
    let tt = flat(&t);
    let st = flat(&s).set_requires_grad(true);
    let loss = kd_loss_batch(&soften_batch(&tt, tau).to_kind(Kind::Double), &st, tau);
    let want: f64 = t.iter().zip(&s).map(|(a, b)| kd_loss(a, b, tau).unwrap()).sum::<f64>() / n as f64;
    assert!((loss.double_value(&[]) - want).abs() < 1e-6);
    loss.backward();
    let grad = st.grad();
    for i in 0..n {
        let g = kd_grad(&t[i], &s[i], tau).unwrap();
        for j in 0..c {
            let auto = grad.double_value(&[i as i64, j as i64]);
            assert!((auto - g[j] / n as f64).abs() < 1e-6, "({i},{j}) {auto} vs {}", g[j]);
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #[test]
    fn temperature_preserves_argmax(l in prop::collection::vec(-50.0f64..50.0, 2..20)) {
        let want = argmax(&l);
        for tau in [0.5, 1.0, 8.0, 64.0] {
            prop_assert_eq!(argmax(&soften(&l, tau).unwrap()), want);
        }
    }

    #[test]
    fn kd_loss_nonnegative(
        t in prop::collection::vec(-30.0f64..30.0, 10),
        s in prop::collection::vec(-30.0f64..30.0, 10),
        tau in 0.25f64..64.0,
    ) {
        prop_assert!(kd_loss(&t, &s, tau).unwrap() >= 0.0);
    }

    #[test]
    fn degraded_signals_are_distributions(l in prop::collection::vec(-10.0f64..10.0, 10), k in 1usize..=10) {
        let p = soften(&l, 2.0).unwrap();
        let top = degrade_signal(&p, SignalMode::TopK(k)).unwrap().probs;
        prop_assert!((top.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(top.iter().filter(|v| **v > 0.0).count(), k);
        prop_assert_eq!(argmax(&top), argmax(&p));
        let hard = degrade_signal(&p, SignalMode::Hard).unwrap().probs;
        prop_assert_eq!(hard.iter().filter(|v| **v == 1.0).count(), 1);
        prop_assert_eq!(hard[argmax(&p)], 1.0);
        prop_assert_eq!(degrade_signal(&p, SignalMode::Full).unwrap().probs, p);
    }
}

#[test]
fn hard_signal_breaks_ties_toward_lower_index() {
    let s = degrade_signal(&[0.1, 0.4, 0.4, 0.1], SignalMode::Hard).unwrap();
    assert_eq!(s.probs, vec![0.0, 1.0, 0.0, 0.0]);
}

fn to_vec(t: &Tensor) -> Vec<f64> {
    let t = t.to_kind(Kind::Double).contiguous().view([-1]);
    Vec::<f64>::try_from(&t).unwrap()
}

#[test]
fn cutmix_partitions_pixels_on_random_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (c, s) = (3i64, 16i64);
    for trial in 0..256 {
        let n = 2 + (trial % 7) as i64;
        let x = Tensor::rand([n, c, s, s], (Kind::Double, tch::Device::Cpu));
        let alpha = [0.25, 1.0][trial % 2];
        let m = cutmix(&x, alpha, alpha, &mut rng).unwrap();
        let (xs, out) = (to_vec(&x), to_vec(&m.inputs));
        let hw = (s * s) as usize;
        for i in 0..n as usize {
            let j = m.pairing[i];
            let mut from_partner = vec![false; hw];
            for p in 0..hw {
                for ch in 0..c as usize {
                    let at = |k: usize| ((k * c as usize + ch) * hw) + p;
                    let v = out[at(i)];
                    assert!(v == xs[at(i)] || v == xs[at(j)], "pixel from neither input");
                    if v != xs[at(i)] {
                        from_partner[p] = true;
                    }
                }
            }
            if i == j {
                continue;
            }
            // Partner pixels form one axis-aligned box.
            let cells: Vec<(usize, usize)> =
                (0..hw).filter(|&p| from_partner[p]).map(|p| (p / s as usize, p % s as usize)).collect();
            let area = cells.len();
            if area > 0 {
                let (y0, y1) = (cells.iter().map(|c| c.0).min().unwrap(), cells.iter().map(|c| c.0).max().unwrap());
                let (x0, x1) = (cells.iter().map(|c| c.1).min().unwrap(), cells.iter().map(|c| c.1).max().unwrap());
                assert_eq!(area, (y1 - y0 + 1) * (x1 - x0 + 1), "partner region is not a box");
            }
            assert_eq!(m.lambda[i], 1.0 - area as f64 / hw as f64);
        }
    }
}

#[test]
fn cutmix_lambda_is_exact_area_fraction() {
    let x = Tensor::rand([3, 1, 8, 8], (Kind::Float, tch::Device::Cpu));
    let boxes = [
        CutBox { y0: 0, y1: 8, x0: 0, x1: 8 },
        CutBox { y0: 2, y1: 5, x0: 1, x1: 4 },
        CutBox { y0: 3, y1: 3, x0: 0, x1: 8 },
    ];
    let m = cutmix_with(&x, &boxes, &[1, 2, 0]).unwrap();
    assert_eq!(m.lambda, vec![0.0, 1.0 - 9.0 / 64.0, 1.0]);
}

#[test]
fn cutmix_rejects_non_square_inputs() {
    let x = Tensor::zeros([4, 1, 98, 64], (Kind::Float, tch::Device::Cpu));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(cutmix(&x, 1.0, 1.0, &mut rng), Err(Error::UnsupportedMix(_))));
}

#[test]
fn mixup_matches_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let x = Tensor::rand([5, 3, 6, 6], (Kind::Float, tch::Device::Cpu));
        let m = mixup(&x, &mut rng).unwrap();
        let (xs, out) = (to_vec(&x), to_vec(&m.inputs));
        let per = 3 * 36;
        for i in 0..5 {
            let (l, j) = (m.lambda[i], m.pairing[i]);
            for k in 0..per {
                let want = l * xs[i * per + k] + (1.0 - l) * xs[j * per + k];
                assert!((out[i * per + k] - want).abs() <= 1e-6);
            }
        }
    }
}

fn random_images(n: usize, seed: u64) -> ImageSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = PackedImages::with_capacity(32, 32, 3, n);
    let mut rec = vec![0u8; 32 * 32 * 3];
    for _ in 0..n {
        rng.fill(&mut rec[..]);
        images.push(&rec);
    }
    ImageSource::new(images, Normalization::cifar10(), FlipCrop::default()).unwrap()
}

fn tiny_config(epochs: u64) -> DistillConfig {
    let mut c = DistillConfig::small_scale(Budget::Pilot);
    c.train.epochs = epochs;
    c.train.batch_size = 8;
    c.train.steps_per_epoch = Some(3);
    c.train.eval_batch_size = 32;
    c.train.seed = 4;
    c
}

fn resnet8(classes: usize, seed: u64) -> Model {
    build_model(&ModelSpec::cifar_resnet(8, classes), seed).unwrap()
}

fn teacher() -> Model {
    let mut t = resnet8(10, 1);
    t.freeze();
    t
}

#[test]
fn teacher_state_is_unchanged_by_distillation() {
    let t = teacher();
    let before = t.weight_hash();
    let student = resnet8(10, 2);
    let patches = random_images(40, 1);
    let eval = LabeledData::new(Box::new(random_images(20, 2)), (0..20).map(|i| i % 10).collect(), 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    let out = distill(&t, &student, &patches, Some(&eval), &tiny_config(2), &run, None).unwrap();
    assert_eq!(t.weight_hash(), before);
    assert_eq!(out.teacher_hash_before.as_deref(), Some(before.as_str()));
    assert_eq!(out.teacher_hash_before, out.teacher_hash_after);
    assert_eq!(out.train.records.len(), 2);
    assert!(run.best_checkpoint().exists());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let t = teacher();
    let student = resnet8(10, 2);
    let before: Vec<Tensor> = student.params().iter().map(|(_, p)| p.detach().copy()).collect();
    let mut cfg = tiny_config(1);
    cfg.train.optimizer.lr = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    distill(&t, &student, &random_images(24, 3), None, &cfg, &run, None).unwrap();
    for ((name, p), b) in student.params().iter().zip(&before) {
        assert!(p.equal(b), "{name} moved at lr 0");
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let t = teacher();
    let patches = random_images(40, 5);
    let dir = tempfile::tempdir().unwrap();

    let straight = resnet8(10, 7);
    let run_a = RunDir::create(dir.path().join("a")).unwrap();
    distill(&t, &straight, &patches, None, &tiny_config(3), &run_a, None).unwrap();

    let run_b = RunDir::create(dir.path().join("b")).unwrap();
    distill(&t, &resnet8(10, 7), &patches, None, &tiny_config(1), &run_b, None).unwrap();
    let resumed = resnet8(10, 7);
    let out = distill(&t, &resumed, &patches, None, &tiny_config(3), &run_b, None).unwrap();

    assert_eq!(out.train.resumed_from_epoch, Some(1));
    assert_eq!(resumed.weight_hash(), straight.weight_hash());
    let a = run_a.read_epochs().unwrap();
    let b = run_b.read_epochs().unwrap();
    assert_eq!(b.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.train_loss, y.train_loss);
        assert_eq!(x.step, y.step);
    }
}

#[test]
fn non_finite_loss_aborts_with_divergence_record() {
    let t = teacher();
    let (name, p) = &t.params()[0];
    t.set_tensor(name, &p.full_like(f64::NAN)).unwrap();
    let student = resnet8(10, 2);
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    let err = distill(&t, &student, &random_images(16, 3), None, &tiny_config(1), &run, None).unwrap_err();
    assert!(matches!(err, Error::Diverged(_)), "{err}");
    let log = std::fs::read_to_string(run.metrics()).unwrap();
    let rec: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(rec["event"], "diverged");
    // JSON has no NaN; non-finite values are written as null.
    assert!(rec["teacher_logit_absmax"].is_null());
    assert!(rec["loss"].is_null());
}

#[test]
fn mismatched_heads_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    let err = distill(&teacher(), &resnet8(100, 2), &random_images(16, 3), None, &tiny_config(1), &run, None)
        .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn regression_losses_require_full_signal() {
    let mut cfg = tiny_config(1);
    cfg.loss = onedatum::distillery::LossKind::L2;
    cfg.signal = SignalMode::Hard;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

// Wrappers that record every training-time input each model receives.
struct Recording<'a> {
    model: &'a Model,
    seen: Mutex<Vec<Tensor>>,
}

impl<'a> Recording<'a> {
    fn new(model: &'a Model) -> Self {
        Self { model, seen: Mutex::new(Vec::new()) }
    }
}

impl Classifier for Recording<'_> {
    fn logits(&self, x: &Tensor, train: bool) -> Tensor {
        self.seen.lock().unwrap().push(x.detach().copy());
        self.model.forward(x, train)
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }
}

impl Student for Recording<'_> {
    fn model(&self) -> &Model {
        self.model
    }
}

#[test]
fn teacher_and_student_see_identical_mixed_inputs() {
    let t = teacher();
    let s = resnet8(10, 2);
    let (rt, rs) = (Recording::new(&t), Recording::new(&s));
    let mut cfg = tiny_config(1);
    cfg.mix = MixKind::Cutmix;
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    distill(&rt, &rs, &random_images(24, 8), None, &cfg, &run, None).unwrap();
    let (a, b) = (rt.seen.into_inner().unwrap(), rs.seen.into_inner().unwrap());
    assert_eq!(a.len(), 3);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.equal(y));
    }
}
