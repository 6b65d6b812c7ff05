//! Acceptance suite: one PASS/FAIL/BLOCKED line per criterion.
//!
//! Criteria 6 and 7 need CIFAR-10, a trained teacher checkpoint and the City
//! photo; they run only when all of these are supplied:
//!
//! - `ONEDATUM_DATA`: data root holding `cifar/cifar-10-batches-bin`
//! - `ONEDATUM_TEACHER`: teacher checkpoint (`.safetensors`)
//! - `ONEDATUM_CITY`: path to the City source image
//!
//! Without them those lines report BLOCKED and do not fail the suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::Array2;
use onedatum::audioforge::{compute_logmel, SpectrogramConfig};
use onedatum::compress::{
    compress_with_self_distillation, dequantize_values, is_compressible, magnitude_prune, quantize_values,
    CompressionMethod, CompressionPlan,
};
use onedatum::data::cifar::{load_cifar, CifarKind, Split};
use onedatum::data::{FlipCrop, ImageSource, LabeledData, Normalization};
use onedatum::distillery::mix::{cutmix, mixup};
use onedatum::distillery::{distill, kd_grad, kd_loss, soften, Budget, DistillConfig, SignalMode};
use onedatum::lens::{gist_distance_histogram, histogram_rows, linear_cka, plot, write_table, Gist, GistConfig};
use onedatum::modelzoo::{build_model, load_checkpoint, to_vec_f32, Model, ModelSpec};
use onedatum::patchforge::{
    generate_dataset, generate_patch, make_noise_image, GenerateOptions, LoadOptions, PatchConfig, SourceImage,
};
use onedatum::run::RunDir;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tch::{Kind, Tensor};

// Tolerances and thresholds.
const FD_REL_TOL: f64 = 1e-5;
const CLOSED_FORM: f64 = 1.523188;
const CLOSED_FORM_TOL: f64 = 1e-5;
const MIXUP_TOL: f64 = 1e-6;
const CKA_SELF_TOL: f64 = 1e-6;
const CKA_INVARIANCE_TOL: f64 = 1e-6;
const CKA_SYMMETRY_TOL: f64 = 1e-9;
const PILOT_MIN_TOP1: f64 = 0.50;
const PILOT_NOISE_GAP: f64 = 0.20;
const ORDERING_SLACK: f64 = 0.01;
const PATCH0_SHA256: &str = "35be983fd3809722da56318c4d81d256732e91c994e190499eb777442221d814";

enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
}

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn out_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).expect("create acceptance output dir");
    d
}

fn astronaut() -> std::result::Result<SourceImage, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/astronaut.png");
    SourceImage::load(path, LoadOptions::default()).map_err(err)
}

fn patch_config(count: usize) -> PatchConfig {
    PatchConfig { count, patch_size: 32, ..Default::default() }
}

fn c1_loss() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let s: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let tau = 0.5 + 10.0 * rng.random::<f64>();
        let g = kd_grad(&t, &s, tau).map_err(err)?;
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for j in 0..10 {
            let (mut up, mut dn) = (s.clone(), s.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (kd_loss(&t, &up, tau).map_err(err)? - kd_loss(&t, &dn, tau).map_err(err)?) / (2.0 * h);
            num += (g[j] - fd).powi(2);
            den = den.max(g[j].abs()).max(fd.abs());
        }
        worst = worst.max(num.sqrt() / den.max(1e-12));
        ensure(kd_loss(&t, &t, tau).map_err(err)? == 0.0, || "kd_loss(t, t) != 0".into())?;
    }
    ensure(worst <= FD_REL_TOL, || format!("worst relative gradient error {worst:.2e}"))?;
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (pt, ps) = ([sig(2.0), sig(-2.0)], [sig(-2.0), sig(2.0)]);
    let oracle: f64 = pt.iter().zip(&ps).map(|(a, b)| a * (a.ln() - b.ln())).sum();
    let v = kd_loss(&[2.0, 0.0], &[0.0, 2.0], 1.0).map_err(err)?;
    ensure((v - oracle).abs() <= CLOSED_FORM_TOL && (v - CLOSED_FORM).abs() <= CLOSED_FORM_TOL, || {
        format!("two-class value {v:.7}, oracle {oracle:.7}")
    })?;
    Ok(format!("max rel grad err {worst:.1e}; two-class {v:.6}"))
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn c2_temperature() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let l: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect();
        let want = argmax(&l);
        for tau in [0.5, 1.0, 8.0, 64.0] {
            let got = argmax(&soften(&l, tau).map_err(err)?);
            ensure(got == want, || format!("vector {i} at tau {tau}: argmax {got} != {want}"))?;
        }
    }
    Ok("1000 vectors x 4 temperatures".into())
}

fn c3_patches() -> Check {
    let (src, label) = match std::env::var_os("ONEDATUM_CITY") {
        Some(p) => (SourceImage::load(&p, LoadOptions::default()).map_err(err)?, "City"),
        None => (astronaut()?, "bundled stand-in photo"),
    };
    let cfg = patch_config(1000);
    let dir = tempfile::tempdir().map_err(err)?;
    let mut data = Vec::new();
    for (i, workers) in [1usize, 4, 1, 4].into_iter().enumerate() {
        let d = generate_dataset(&src, &cfg, dir.path().join(format!("{i}")), &GenerateOptions {
            workers: Some(workers),
            png: false,
        })
        .map_err(err)?;
        let r = &d.records;
        ensure(r.len() == 1000 && (r.height, r.width, r.channels) == (32, 32, 3), || {
            format!("got {} records of {}x{}x{}", r.len(), r.height, r.width, r.channels)
        })?;
        data.push(d.records.data);
    }
    ensure(data.windows(2).all(|w| w[0] == w[1]), || "outputs differ across runs or worker counts".into())?;
    if label == "City" {
        return Ok(format!("{label}: 1000 patches reproducible over workers {{1, 4}}; golden pinned for stand-in only"));
    }
    let p0 = generate_patch(&src, 0, &cfg).map_err(err)?;
    let hash = hex::encode(Sha256::digest(&p0));
    ensure(hash == PATCH0_SHA256, || format!("patch 0 hash {hash}"))?;
    Ok(format!("{label}: 1000 patches reproducible over workers {{1, 4}}; patch 0 golden"))
}

fn to_vec(t: &Tensor) -> Vec<f64> {
    Vec::<f64>::try_from(&t.to_kind(Kind::Double).contiguous().view([-1])).unwrap()
}

fn c4_mix() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (c, s) = (3usize, 32usize);
    let hw = s * s;
    for b in 0..256 {
        let n = 2 + b % 15;
        let x = Tensor::rand([n as i64, c as i64, s as i64, s as i64], (Kind::Double, tch::Device::Cpu));
        let m = cutmix(&x, 1.0, 1.0, &mut rng).map_err(err)?;
        let (xs, out) = (to_vec(&x), to_vec(&m.inputs));
        for i in 0..n {
            let j = m.pairing[i];
            let mut partner = 0usize;
            for p in 0..hw {
                let own = (0..c).all(|ch| out[(i * c + ch) * hw + p] == xs[(i * c + ch) * hw + p]);
                let other = (0..c).all(|ch| out[(i * c + ch) * hw + p] == xs[(j * c + ch) * hw + p]);
                ensure(own || other, || format!("batch {b} sample {i} pixel {p} from neither input"))?;
                if !own {
                    partner += 1;
                }
            }
            if i != j {
                let want = 1.0 - partner as f64 / hw as f64;
                ensure(m.lambda[i] == want, || format!("batch {b} sample {i}: lambda {} != {want}", m.lambda[i]))?;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..32 {
        let x = Tensor::rand([8, 3, 16, 16], (Kind::Float, tch::Device::Cpu));
        let m = mixup(&x, &mut rng).map_err(err)?;
        let (xs, out) = (to_vec(&x), to_vec(&m.inputs));
        let per = 3 * 256;
        for i in 0..8 {
            for k in 0..per {
                let want = m.lambda[i] * xs[i * per + k] + (1.0 - m.lambda[i]) * xs[m.pairing[i] * per + k];
                worst = worst.max((out[i * per + k] - want).abs());
            }
        }
    }
    ensure(worst <= MIXUP_TOL, || format!("mixup max deviation {worst:.2e}"))?;
    Ok(format!("256 cutmix batches partitioned, lambda exact; mixup max dev {worst:.1e}"))
}

fn c5_logmel() -> Check {
    let cfg = SpectrogramConfig::default();
    let n = cfg.sample_rate as usize;
    let (w, h) = (
        (cfg.window_ms * cfg.sample_rate as f64 / 1000.0) as usize,
        (cfg.hop_ms * cfg.sample_rate as f64 / 1000.0) as usize,
    );
    let frames = 1 + (n - w) / h;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tone: Vec<f32> = (0..n).map(|_| rng.random::<f32>() - 0.5).collect();
    let s = compute_logmel(&tone, &cfg).map_err(err)?;
    ensure((s.frames, s.bins) == (frames, 64) && frames == 98, || format!("shape {}x{}", s.frames, s.bins))?;
    let silent = compute_logmel(&vec![0.0; n], &cfg).map_err(err)?;
    let floor = cfg.log_floor.ln() as f32;
    ensure(silent.data.iter().all(|&v| v == floor), || "silence is not constant log(eps)".into())?;
    Ok(format!("{}x{}; silence = ln({:e})", s.frames, s.bins, cfg.log_floor))
}

fn patch_source(n: usize, seed: u64) -> std::result::Result<ImageSource, String> {
    let cfg = PatchConfig { global_seed: seed, ..patch_config(n) };
    let dir = tempfile::tempdir().map_err(err)?;
    let d = generate_dataset(&astronaut()?, &cfg, dir.path(), &GenerateOptions::default()).map_err(err)?;
    ImageSource::new(d.records, Normalization::cifar10(), FlipCrop::default()).map_err(err)
}

fn short_finetune(steps: u64) -> DistillConfig {
    let mut c = DistillConfig::small_scale(Budget::Pilot);
    c.train.epochs = 1;
    c.train.steps_per_epoch = Some(steps);
    c.train.batch_size = 16;
    c
}

fn c8_compress() -> Check {
    let spec = ModelSpec::cifar_resnet(20, 10);
    for s in [0.25, 0.5, 0.75, 0.85] {
        let model = build_model(&spec, 8).map_err(err)?;
        let masks = magnitude_prune(&model, s).map_err(err)?;
        for (name, total, pruned) in masks.summary() {
            let off = (pruned as f64 - s * total as f64).abs();
            ensure(off <= 1.0, || format!("{name}: {pruned}/{total} at {s}"))?;
        }
    }

    let dense = build_model(&ModelSpec::cifar_resnet(8, 10), 8).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let run = RunDir::create(dir.path().join("prune")).map_err(err)?;
    let plan = CompressionPlan { method: CompressionMethod::Prune { sparsity: 0.5 }, finetune: short_finetune(100) };
    let patches = patch_source(512, 0)?;
    compress_with_self_distillation(&dense, &plan, &patches, None, &run).map_err(err)?;
    let ck = load_checkpoint(&run.last_checkpoint()).map_err(err)?;
    ensure(ck.meta.step == 100, || format!("finetune ran {} steps", ck.meta.step))?;
    for (name, p) in ck.model.params() {
        if let Some(mask) = ck.aux.get(&format!("mask.{name}")) {
            let keep = Vec::<bool>::try_from(&mask.contiguous().view([-1])).map_err(err)?;
            let w = to_vec_f32(p);
            ensure(w.iter().zip(&keep).all(|(v, k)| *k || *v == 0.0), || format!("{name}: masked weight moved"))?;
        }
    }

    // A trained checkpoint: the finetuned student above.
    let mut tensors = 0;
    for (name, p) in ck.model.params() {
        if !is_compressible(p) {
            continue;
        }
        let w = to_vec_f32(p);
        let (scale, q) = quantize_values(&w);
        let dq = dequantize_values(&q, scale);
        let bad = w.iter().zip(&dq).any(|(a, b)| (a - b).abs() > scale / 2.0 * (1.0 + 1e-6));
        ensure(!bad, || format!("{name}: quantization error exceeds scale/2"))?;
        tensors += 1;
    }
    Ok(format!("sparsity exact at 25/50/75/85%; masks held over 100 steps; {tensors} tensors within scale/2"))
}

fn c9_cka() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = Array2::from_shape_fn((100, 32), |_| rng.random::<f64>() - 0.5);
        let noise = Array2::from_shape_fn((100, 32), |_| rng.random::<f64>() - 0.5);
        let y = x.mapv(|v| v * v) + noise;
        let a = DMatrix::<f64>::from_fn(32, 32, |_, _| rng.random::<f64>() - 0.5);
        let qm = a.qr().q();
        let q = Array2::from_shape_fn((32, 32), |(i, j)| qm[(i, j)]);
        let base = linear_cka(&x, &y).map_err(err)?;
        worst.0 = worst.0.max((linear_cka(&x, &x).map_err(err)? - 1.0).abs());
        let inv = [linear_cka(&x.dot(&q), &y), linear_cka(&(&x * 13.0), &(&y * 1e-3)), linear_cka(&x, &y.dot(&q))];
        for v in inv {
            worst.1 = worst.1.max((v.map_err(err)? - base).abs());
        }
        worst.2 = worst.2.max((linear_cka(&y, &x).map_err(err)? - base).abs());
    }
    ensure(worst.0 <= CKA_SELF_TOL, || format!("self-similarity off by {:.1e}", worst.0))?;
    ensure(worst.1 <= CKA_INVARIANCE_TOL, || format!("invariance off by {:.1e}", worst.1))?;
    ensure(worst.2 <= CKA_SYMMETRY_TOL, || format!("asymmetry {:.1e}", worst.2))?;
    Ok(format!("self {:.0e}, invariance {:.0e}, symmetry {:.0e}", worst.0, worst.1, worst.2))
}

fn c10_gist() -> Check {
    let gist = Gist::new(GistConfig::default()).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let d = generate_dataset(&astronaut()?, &patch_config(1000), dir.path(), &GenerateOptions::default())
        .map_err(err)?;
    let r = &d.records;
    let descs: Vec<Vec<f32>> = (0..r.len())
        .map(|i| gist.describe_u8(r.record(i), 32, 32, 3))
        .collect::<onedatum::Result<_>>()
        .map_err(err)?;
    ensure(descs.iter().all(|v| v.len() == 512), || "descriptor length is not 512".into())?;
    let (_, same) = gist_distance_histogram(&[descs[0].clone(), descs[0].clone()], 10).map_err(err)?;
    ensure(same == [0.0], || format!("identical-image distance {same:?}"))?;
    let (h, dists) = gist_distance_histogram(&descs, 50).map_err(err)?;
    let out = out_dir();
    write_table(&out.join("gist_hist.tsv"), &["lo", "hi", "count"], &histogram_rows(&h)).map_err(err)?;
    plot::render_histograms(&[&h], &out.join("gist_hist.png")).map_err(err)?;
    let (lo, hi) = dists.iter().fold((f64::MAX, f64::MIN), |(a, b), &d| (a.min(d), b.max(d)));
    ensure(lo > 0.0 && hi < 2.0, || format!("support [{lo}, {hi}]"))?;
    let modes = h.mode_count(0.05, 0.1);
    ensure(modes == 1, || format!("{modes} modes"))?;
    Ok(format!("len 512; support [{lo:.3}, {hi:.3}]; unimodal; written to {}", out.join("gist_hist.tsv").display()))
}

fn c11_synthetic() -> Check {
    let mut teacher = build_model(&ModelSpec::cifar_resnet(8, 10), 11).map_err(err)?;
    // Non-default normalization statistics so any write would show.
    let warm = patch_source(64, 1)?;
    for k in 0..4 {
        let idx: Vec<usize> = (k * 16..(k + 1) * 16).collect();
        let x = onedatum::data::InputSource::batch(&warm, &idx, None).map_err(err)?;
        let _ = teacher.forward(&x, true);
    }
    teacher.freeze();
    let before = teacher.weight_hash();
    let student = build_model(&ModelSpec::cifar_resnet(8, 10), 12).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let run = RunDir::create(dir.path().join("run")).map_err(err)?;
    let mut cfg = short_finetune(5);
    cfg.train.epochs = 2;
    let out = distill(&teacher, &student, &patch_source(128, 2)?, None, &cfg, &run, None).map_err(err)?;
    ensure(teacher.weight_hash() == before && out.teacher_hash_after.as_deref() == Some(before.as_str()), || {
        "teacher hash changed".into()
    })?;
    Ok(format!("weights+BN stats hash {} unchanged over 10 steps", &before[..12]))
}

struct Pilot {
    teacher: Model,
    eval: LabeledData,
    city: SourceImage,
    root: PathBuf,
}

fn pilot_inputs() -> std::result::Result<Pilot, String> {
    let data = std::env::var_os("ONEDATUM_DATA").ok_or("ONEDATUM_DATA not set")?;
    let teacher = std::env::var_os("ONEDATUM_TEACHER").ok_or("ONEDATUM_TEACHER not set")?;
    let city = std::env::var_os("ONEDATUM_CITY").ok_or("ONEDATUM_CITY not set")?;
    let test = load_cifar(&Path::new(&data).join("cifar"), CifarKind::Cifar10, Split::Test, false).map_err(err)?;
    let source = ImageSource::new(test.images, Normalization::cifar10(), FlipCrop::none()).map_err(err)?;
    let eval = LabeledData::new(Box::new(source), test.labels, 10).map_err(err)?;
    let mut teacher = load_checkpoint(Path::new(&teacher)).map_err(err)?.model;
    teacher.freeze();
    let city = SourceImage::load(&city, LoadOptions::default()).map_err(err)?;
    Ok(Pilot { teacher, eval, city, root: out_dir().join("pilot") })
}

fn pilot_patches(src: &SourceImage, dir: &Path) -> std::result::Result<ImageSource, String> {
    let d = generate_dataset(src, &patch_config(50_000), dir, &GenerateOptions::default()).map_err(err)?;
    ImageSource::new(d.records, Normalization::cifar10(), FlipCrop::default()).map_err(err)
}

fn pilot_run(p: &Pilot, patches: &ImageSource, signal: SignalMode, name: &str) -> std::result::Result<(f64, bool), String> {
    let mut cfg = DistillConfig::small_scale(Budget::Pilot);
    cfg.signal = signal;
    let student = build_model(p.teacher.spec(), onedatum::seed::derive_named(0, "student-init", 0)).map_err(err)?;
    let run = RunDir::create(p.root.join(name)).map_err(err)?;
    let out = distill(&p.teacher, &student, patches, Some(&p.eval), &cfg, &run, None).map_err(err)?;
    let top1 = out.train.final_val_top1.ok_or("no validation result")?;
    Ok((top1, out.teacher_hash_before == out.teacher_hash_after && out.teacher_hash_before.is_some()))
}

struct PilotResults {
    c6: Verdict,
    c7: Verdict,
    c11: Verdict,
}

fn pilot() -> PilotResults {
    let p = match pilot_inputs() {
        Ok(p) => p,
        Err(why) => {
            return PilotResults {
                c6: Verdict::Blocked(why.clone()),
                c7: Verdict::Blocked(why),
                c11: Verdict::Blocked("full check needs criterion 6; synthetic check below".into()),
            }
        }
    };
    let run = || -> std::result::Result<PilotResults, String> {
        let city = pilot_patches(&p.city, &p.root.join("patches-city"))?;
        let noise = pilot_patches(&make_noise_image(1024, 1024, 0).map_err(err)?, &p.root.join("patches-noise"))?;
        let (full, frozen) = pilot_run(&p, &city, SignalMode::Full, "city-full")?;
        let (noise_top1, frozen_noise) = pilot_run(&p, &noise, SignalMode::Full, "noise-full")?;
        let c6 = if full > PILOT_MIN_TOP1 && full - noise_top1 >= PILOT_NOISE_GAP {
            Verdict::Pass(format!("city {:.1}%, noise {:.1}%", 100.0 * full, 100.0 * noise_top1))
        } else {
            Verdict::Fail(format!("city {:.1}%, noise {:.1}%", 100.0 * full, 100.0 * noise_top1))
        };
        let (top5, _) = pilot_run(&p, &city, SignalMode::TopK(5), "city-top5")?;
        let (hard, _) = pilot_run(&p, &city, SignalMode::Hard, "city-hard")?;
        let line = format!("full {:.1}% / top5 {:.1}% / hard {:.1}%", 100.0 * full, 100.0 * top5, 100.0 * hard);
        let c7 = if full + ORDERING_SLACK >= top5 && top5 + ORDERING_SLACK >= hard {
            Verdict::Pass(line)
        } else {
            Verdict::Fail(line)
        };
        let c11 = if frozen && frozen_noise {
            Verdict::Pass("teacher hash identical before/after pilot runs".into())
        } else {
            Verdict::Fail("teacher hash changed during a pilot run".into())
        };
        Ok(PilotResults { c6, c7, c11 })
    };
    run().unwrap_or_else(|e| PilotResults {
        c6: Verdict::Fail(e.clone()),
        c7: Verdict::Fail(e.clone()),
        c11: Verdict::Fail(e),
    })
}

fn verdict(r: Check) -> Verdict {
    match r {
        Ok(s) => Verdict::Pass(s),
        Err(s) => Verdict::Fail(s),
    }
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; only run on a plain invocation.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let started = Instant::now();
    let pilot = pilot();
    let synthetic = verdict(c11_synthetic());
    let c11 = match pilot.c11 {
        Verdict::Blocked(_) => synthetic,
        other => other,
    };
    let results: Vec<(u32, &str, Verdict)> = vec![
        (1, "loss correctness", verdict(c1_loss())),
        (2, "temperature invariance", verdict(c2_temperature())),
        (3, "patch pipeline", verdict(c3_patches())),
        (4, "mix augmentations", verdict(c4_mix())),
        (5, "log-mel shape", verdict(c5_logmel())),
        (6, "pilot distillation", pilot.c6),
        (7, "signal-degradation ordering", pilot.c7),
        (8, "compression mechanics", verdict(c8_compress())),
        (9, "cka", verdict(c9_cka())),
        (10, "gist", verdict(c10_gist())),
        (11, "teacher immutability", c11),
    ];
    let mut failed = 0;
    for (id, name, v) in &results {
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Blocked(d) => ("BLOCKED", d),
        };
        println!("criterion {id:>2} {name:<28} {tag:<7} {detail}");
    }
    println!("acceptance finished in {:.0}s, {failed} failed", started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
