//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines appear in order
//! and the process exits non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use gaitworks_core::classifier::*;
use gaitworks_core::explain::{class_score, grad_cam, input_gradient, saliency};
use gaitworks_core::gait_repr::{
    compute_gei, cycle_energy_images, cycle_records, load_samples, resample_grid, EnergyImage, EnergyKind,
    PipelineInput, ENERGY_SIZE,
};
use gaitworks_core::silhouette::{extract_silhouette, learn_background};
use gaitworks_core::synthkit::*;
use gaitworks_core::tensor::*;
use gaitworks_core::{GaitClass, Representation, Severity, NUM_CLASSES};
use gaitworks_service::{spawn_local, AppState, Config};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn probes(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut r = rng(seed);
    (0..count).map(|_| r.random_range(0..len)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- budget

/// Per-layer arithmetic for the five stride-2 conv blocks and two dense layers.
fn oracle_parameters(side: usize) -> (usize, usize) {
    let (mut learnable, mut running, mut cin, mut s) = (0, 0, 1, side);
    for f in [32, 32, 32, 64, 64] {
        learnable += 3 * 3 * cin * f + f + 2 * f;
        running += 2 * f;
        cin = f;
        s = s.div_ceil(2);
    }
    learnable += s * s * cin * 512 + 512 + 512 * NUM_CLASSES + NUM_CLASSES;
    (learnable, running)
}

fn parameter_budget() -> Outcome {
    let net = Network::<f32>::build(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let (learnable, running) = oracle_parameters(224);
    let total = net.parameter_count();
    ensure!(net.learnable_count() == learnable, "learnable {} vs oracle {learnable}", net.learnable_count());
    ensure!(net.running_stat_count() == running, "running {} vs oracle {running}", net.running_stat_count());
    ensure!(total == learnable + running, "total {total}");
    let table: usize = net.config().parameter_table().unwrap().iter().map(|l| l.learnable + l.running).sum();
    ensure!(table == total, "layer table sums to {table}");
    let dev = (total as f64 - 1_684_421.0).abs() / 1_684_421.0;
    ensure!(dev < 5e-4, "{total} deviates {:.4}% from 1,684,421", dev * 100.0);
    Ok(format!("{total} parameters, oracle exact, {:.3}% from 1,684,421", dev * 100.0))
}

fn model_size() -> Outcome {
    let net = Network::build(ModelConfig::default(), 0).unwrap();
    let model = GaitModel::new(Representation::Gei, net);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.gw");
    save_model(&model, &path).map_err(|e| e.to_string())?;
    let on_disk = std::fs::metadata(&path).unwrap().len() as usize;
    let expected = header_len(model.network.config()).unwrap() + 4 * model.network.parameter_count() + TRAILER_LEN;
    ensure!(on_disk == expected, "file is {on_disk} bytes, layout says {expected}");
    let rel = (on_disk as f64 - 6.8e6).abs() / 6.8e6;
    ensure!(rel <= 0.15, "{on_disk} bytes is {:.1}% from 6.8 MB", rel * 100.0);
    ensure!(load_model(&path).unwrap() == model, "reloaded model differs");
    Ok(format!("{on_disk} bytes ({:.2} MB, {:.1}% from 6.8 MB), layout exact", on_disk as f64 / 1e6, rel * 100.0))
}

// ------------------------------------------------------------- gradients

const H: f64 = 1e-3;
const TOL: f64 = 1e-3;

/// Compares `analytic[i]` with the central difference of `f` at the probe
/// indices and returns the number of coordinates checked.
fn compare(
    what: &str,
    x: &Tensor<f64>,
    analytic: &[f64],
    idx: &[usize],
    f: impl Fn(&Tensor<f64>) -> f64,
) -> Result<usize, String> {
    for &i in idx {
        let mut up = x.clone();
        up.data_mut()[i] += H;
        let mut down = x.clone();
        down.data_mut()[i] -= H;
        let numeric = (f(&up) - f(&down)) / (2.0 * H);
        ensure!(rel_err(analytic[i], numeric) < TOL, "{what}[{i}]: {} vs {numeric}", analytic[i]);
    }
    Ok(idx.len())
}

fn conv_grads(seed: u64) -> Result<usize, String> {
    let x = random_tensor(vec![2, 7, 6, 2], seed);
    let k = random_tensor(vec![3, 3, 2, 3], seed + 1);
    let b = random_tensor(vec![3], seed + 2);
    let y = conv2d_forward(&x, &k, &b, 2).unwrap();
    let r = random_tensor(y.shape().to_vec(), seed + 3);
    let g = conv2d_backward(&r, Some(&x), &k, 2).unwrap();
    let mut n = compare("conv dx", &x, g.input.data(), &probes(x.len(), 12, seed), |x| {
        dot(conv2d_forward(x, &k, &b, 2).unwrap().data(), r.data())
    })?;
    n += compare("conv dk", &k, g.kernel.data(), &probes(k.len(), 12, seed + 4), |k| {
        dot(conv2d_forward(&x, k, &b, 2).unwrap().data(), r.data())
    })?;
    n += compare("conv db", &b, g.bias.data(), &[0, 1, 2], |b| {
        dot(conv2d_forward(&x, &k, b, 2).unwrap().data(), r.data())
    })?;
    Ok(n)
}

fn batchnorm_grads(seed: u64) -> Result<usize, String> {
    let mut bn = BatchNorm::<f64>::new(2);
    bn.gamma = random_tensor(vec![2], seed + 1);
    bn.beta = random_tensor(vec![2], seed + 2);
    let x = random_tensor(vec![3, 4, 3, 2], seed);
    let (y, cache) = bn.forward_train(&x).unwrap();
    let r = random_tensor(y.shape().to_vec(), seed + 3);
    let (dx, dgamma, dbeta) = bn.backward_train(&r, &cache).unwrap();
    let mut n = compare("bn dx", &x, dx.data(), &probes(x.len(), 12, seed), |x| {
        dot(bn.forward_train(x).unwrap().0.data(), r.data())
    })?;
    n += compare("bn dgamma", &bn.gamma, &dgamma, &[0, 1], |g| {
        let mut b = bn.clone();
        b.gamma = g.clone();
        dot(b.forward_train(&x).unwrap().0.data(), r.data())
    })?;
    n += compare("bn dbeta", &bn.beta, &dbeta, &[0, 1], |be| {
        let mut b = bn.clone();
        b.beta = be.clone();
        dot(b.forward_train(&x).unwrap().0.data(), r.data())
    })?;
    Ok(n)
}

fn dense_grads(seed: u64) -> Result<usize, String> {
    let x = random_tensor(vec![3, 5], seed);
    let w = random_tensor(vec![5, 4], seed + 1);
    let b = random_tensor(vec![4], seed + 2);
    let r = random_tensor(vec![3, 4], seed + 3);
    let g = dense_backward(&r, &x, &w).unwrap();
    let all = |t: &Tensor<f64>| (0..t.len()).collect::<Vec<_>>();
    let mut n = compare("dense dx", &x, g.input.data(), &all(&x), |x| {
        dot(dense_forward(x, &w, &b).unwrap().data(), r.data())
    })?;
    n += compare("dense dw", &w, g.weights.data(), &all(&w), |w| {
        dot(dense_forward(&x, w, &b).unwrap().data(), r.data())
    })?;
    n += compare("dense db", &b, g.bias.data(), &all(&b), |b| {
        dot(dense_forward(&x, &w, b).unwrap().data(), r.data())
    })?;
    Ok(n)
}

fn relu_dropout_grads(seed: u64) -> Result<usize, String> {
    let mut r0 = rng(seed);
    let data = (0..24)
        .map(|_| {
            let v: f64 = r0.random_range(0.1..1.0);
            if r0.random::<bool>() { v } else { -v }
        })
        .collect();
    let x = Tensor::new(vec![2, 12], data).unwrap();
    let r = random_tensor(vec![2, 12], seed + 1);
    let idx: Vec<usize> = (0..24).collect();
    let dx = relu_backward(&r, &x).unwrap();
    let mut n = compare("relu dx", &x, dx.data(), &idx, |x| dot(relu_forward(x).data(), r.data()))?;
    let (_, mask) = dropout_forward(&x, 0.5, Some(seed)).unwrap();
    let dx = dropout_backward(&r, mask.as_ref());
    n += compare("dropout dx", &x, dx.data(), &idx, |x| {
        dot(dropout_forward(x, 0.5, Some(seed)).unwrap().0.data(), r.data())
    })?;
    Ok(n)
}

fn mean_ce(logits: &Tensor<f64>, targets: &[usize]) -> f64 {
    let p = softmax(logits);
    let k = logits.shape()[1];
    targets
        .iter()
        .enumerate()
        .map(|(n, &c)| cross_entropy_loss(&p.data()[n * k..(n + 1) * k], c).unwrap())
        .sum::<f64>()
        / targets.len() as f64
}

fn softmax_ce_grads(seed: u64) -> Result<usize, String> {
    let z = random_tensor(vec![3, NUM_CLASSES], seed);
    let targets = [(seed % 5) as usize, ((seed + 1) % 5) as usize, ((seed + 3) % 5) as usize];
    let g = softmax_cross_entropy_grad(&softmax(&z), &targets).unwrap();
    compare("softmax-ce dz", &z, g.data(), &(0..z.len()).collect::<Vec<_>>(), |z| mean_ce(z, &targets))
}

/// Whole 32×32 network. The step is tiny and any probe whose two evaluations
/// disagree on some ReLU sign is skipped, since the loss is not
/// differentiable there.
fn network_grads(seed: u64) -> Result<(usize, usize), String> {
    const NET_H: f64 = 1e-6;
    let net = Network::<f32>::build(ModelConfig::with_input(32, 32), seed).unwrap().cast::<f64>();
    let x = random_tensor(vec![2, 32, 32, 1], seed + 7);
    let targets = [(seed % 5) as usize, ((seed + 2) % 5) as usize];
    let mode = Mode::Train { seed: seed + 11 };
    let eval = |n: &Network<f64>, x: &Tensor<f64>| {
        let tr = n.forward(x, mode).unwrap();
        let signs: Vec<bool> = n
            .layers()
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .flat_map(|(k, _)| tr.activations[k].data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect();
        (mean_ce(tr.logits(), &targets), signs)
    };
    let diff = |pm: &dyn Fn(f64) -> (Network<f64>, Tensor<f64>)| {
        let (nu, xu) = pm(NET_H);
        let (nd, xd) = pm(-NET_H);
        let (lu, su) = eval(&nu, &xu);
        let (ld, sd) = eval(&nd, &xd);
        (su == sd).then(|| (lu - ld) / (2.0 * NET_H))
    };
    let trace = net.forward(&x, mode).unwrap();
    let up = softmax_cross_entropy_grad(trace.output(), &targets).unwrap();
    let back = net.backward_from(&trace, net.logits_index(), up).unwrap();
    let grads: Vec<&Tensor<f64>> = back.param_grads.iter().flatten().collect();
    let (mut checked, mut skipped) = (0, 0);
    let mut judge = |what: String, analytic: f64, numeric: Option<f64>| -> Result<(), String> {
        match numeric {
            Some(n) => {
                ensure!(rel_err(analytic, n) < TOL || (analytic - n).abs() < 1e-7, "{what}: {analytic} vs {n}");
                checked += 1;
            }
            None => skipped += 1,
        }
        Ok(())
    };
    for (pi, g) in grads.iter().enumerate() {
        for i in probes(g.len(), 3, seed * 31 + pi as u64) {
            let numeric = diff(&|h| {
                let mut n = net.clone();
                n.params_mut()[pi].data_mut()[i] += h;
                (n, x.clone())
            });
            judge(format!("seed {seed} param {pi}[{i}]"), g.data()[i], numeric)?;
        }
    }
    let dx = back.activation_grads[0].as_ref().unwrap();
    for i in probes(x.len(), 10, seed + 99) {
        let numeric = diff(&|h| {
            let mut xx = x.clone();
            xx.data_mut()[i] += h;
            (net.clone(), xx)
        });
        judge(format!("seed {seed} input[{i}]"), dx.data()[i], numeric)?;
    }
    Ok((checked, skipped))
}

fn gradients() -> Outcome {
    let mut layer_probes = 0;
    for seed in 0..20 {
        layer_probes += conv_grads(seed)?;
        layer_probes += batchnorm_grads(seed)?;
        layer_probes += dense_grads(seed)?;
        layer_probes += relu_dropout_grads(seed)?;
        layer_probes += softmax_ce_grads(seed)?;
    }
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20 {
        let (c, s) = network_grads(seed)?;
        checked += c;
        skipped += s;
    }
    ensure!(skipped < 20, "{skipped} network probes straddled a ReLU kink");
    Ok(format!(
        "20 seeds: {layer_probes} layer probes (conv, batch norm, dense, ReLU, dropout, softmax-CE), \
         {checked} whole-network probes at 32x32 ({skipped} skipped at kinks)"
    ))
}

// ------------------------------------------------------------------- GEI

fn gei_oracle() -> Outcome {
    const N: usize = ENERGY_SIZE * ENERGY_SIZE;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let frames = r.random_range(1..=12);
        let density = r.random_range(0.05..0.95);
        let stack: Vec<Vec<f32>> = (0..frames)
            .map(|_| (0..N).map(|_| if r.random_bool(density) { 1.0 } else { 0.0 }).collect())
            .collect();
        let gei = compute_gei(&stack).map_err(|e| e.to_string())?;
        for p in 0..N {
            let mut acc = 0.0f64;
            for f in &stack {
                acc += f[p] as f64;
            }
            worst = worst.max((gei.data()[p] as f64 - acc / frames as f64).abs());
        }
        if frames == 1 || seed == 0 {
            let one = compute_gei(&stack[..1]).unwrap();
            ensure!(one.data() == &stack[0][..], "N=1 GEI differs from its frame (seed {seed})");
        }
    }
    ensure!(worst <= 1e-6, "max deviation {worst:e}");
    Ok(format!("100 stacks, max deviation {worst:.1e}, N=1 bit-exact"))
}

// ----------------------------------------------------------------- folds

fn fold_protocol() -> Outcome {
    let plan = make_folds(21).map_err(|e| e.to_string())?;
    ensure!(plan.folds.len() == 10, "{} folds", plan.folds.len());
    for (k, f) in plan.folds.iter().enumerate() {
        let i = 2 * (k as u32 + 1) - 1;
        ensure!(*f == [i, i + 1, i + 2], "fold {}: {f:?}", k + 1);
    }
    ensure!(plan.all_subjects() == (1..=21).collect(), "union is not S1..S21");

    let mut r = rng(3);
    let mut samples = Vec::new();
    for subject in 1..=21u32 {
        for j in 0..5 {
            samples.push(Sample {
                pixels: (0..256).map(|_| r.random::<f32>()).collect(),
                label: j % NUM_CLASSES,
                subject,
                repeat: false,
            });
        }
    }
    let cfg = TrainConfig { max_epochs: 1, batch_size: 16, seed: 1, ..TrainConfig::default() };
    let report = cross_validate(&samples, &ModelConfig::with_input(16, 16), &cfg, &plan).map_err(|e| e.to_string())?;
    for (k, f) in report.folds.iter().enumerate() {
        ensure!(f.test_subjects == plan.folds[k].to_vec(), "fold {} tested {:?}", k + 1, f.test_subjects);
        ensure!(
            f.train_subjects.iter().all(|s| !f.test_subjects.contains(s)),
            "fold {} leaks a test subject into training",
            k + 1
        );
        ensure!(f.train_samples + f.test_samples == samples.len(), "fold {} loses samples", k + 1);
    }
    Ok("10 overlapping triples S(2k-1)..S(2k+1), union S1..S21, no leakage in any fold".into())
}

// ---------------------------------------------------------- desk learning

struct Desk {
    _dir: tempfile::TempDir,
    model: GaitModel,
    held_out_png: Vec<u8>,
}

fn desk_learning(slot: &mut Option<Desk>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let opts = DatasetOptions {
        n_subjects: 10,
        seqs_per_class: 2,
        seed: 2024,
        write_energy: true,
        ..DatasetOptions::default()
    };
    generate_dataset(dir.path(), &opts).map_err(|e| e.to_string())?;
    let samples = load_samples(dir.path(), EnergyKind::Gei).map_err(|e| e.to_string())?;
    let (train_set, test_set) = split_by_subject(&samples, &[9, 10]).map_err(|e| e.to_string())?;
    let mut net = Network::build(ModelConfig::default(), 7).unwrap();
    let cfg = TrainConfig {
        max_epochs: 30,
        batch_size: 16,
        patience: 5,
        min_delta: 1e-3,
        seed: 7,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &train_set, &cfg).map_err(|e| e.to_string())?;
    let train_acc = evaluate(&net, &train_set).unwrap().metrics.accuracy;
    let test_acc = evaluate(&net, &test_set).unwrap().metrics.accuracy;
    let held_out = EnergyImage::from_data(EnergyKind::Gei, test_set[0].pixels.clone()).unwrap();
    *slot = Some(Desk {
        _dir: dir,
        model: GaitModel::new(Representation::Gei, net),
        held_out_png: held_out.to_png_bytes().unwrap(),
    });
    let epochs = report.history.len();
    ensure!(epochs <= 30, "{epochs} epochs");
    ensure!(train_acc >= 0.95, "train accuracy {train_acc:.3}");
    ensure!(test_acc >= 0.80, "held-out accuracy {test_acc:.3}");
    Ok(format!(
        "224x224, {} train / {} held-out cycles (subjects 9, 10): train {:.1}%, held-out {:.1}% after {epochs} epochs",
        train_set.len(),
        test_set.len(),
        100.0 * train_acc,
        100.0 * test_acc
    ))
}

// ---------------------------------------------------------- silhouettes

fn segmentation() -> Outcome {
    let mut worst: f64 = 1.0;
    let mut frames = 0;
    for (i, class) in GaitClass::ALL.into_iter().enumerate() {
        let severity = if class == GaitClass::Normal { Severity::Na } else { Severity::Sev2 };
        let seq = generate_sequence(&preset(class, severity), 30, (360, 128), 500 + i as u64, 0.5).unwrap();
        let model = learn_background(&seq.background(2.0, 60 + i as u64)).map_err(|e| e.to_string())?;
        for (frame, truth) in seq.color_frames(2.0, 70 + i as u64).iter().zip(&seq.masks.masks) {
            worst = worst.min(extract_silhouette(frame, &model).intersection_over_union(truth));
            frames += 1;
        }
    }
    ensure!(worst >= 0.99, "worst IoU {worst:.4}");
    Ok(format!("{frames} frames at sigma 2, worst IoU {worst:.4}"))
}

fn cycle_cadence() -> Outcome {
    let mut presets = vec![(GaitClass::Normal, Severity::Na)];
    for c in GaitClass::ALL.into_iter().filter(|&c| c != GaitClass::Normal) {
        presets.extend([(c, Severity::Sev1), (c, Severity::Sev2)]);
    }
    let mut cycles = 0;
    let mut worst: f64 = 0.0;
    for (class, severity) in &presets {
        let p = preset(*class, *severity);
        for seed in 0..3 {
            let seq = generate_sequence(&p, 80, (360, 128), 300 + seed, 0.0).unwrap();
            let records = cycle_records(&seq.masks).map_err(|e| e.to_string())?;
            ensure!(!records.is_empty(), "{class:?} {severity:?}: no cycle found");
            for r in &records {
                let off = (r.frames.len() as f64 - p.cadence_frames).abs();
                worst = worst.max(off);
                ensure!(off <= 1.0, "{class:?} {severity:?}: {} frames vs cadence {}", r.frames.len(), p.cadence_frames);
                cycles += 1;
            }
        }
    }
    Ok(format!("{} presets x 3 seeds, {cycles} cycles, worst offset {worst:.1} frames", presets.len()))
}

// --------------------------------------------------------- explanations

fn walk_geis(params: &GaitStyleParams, body: Anthropometrics, seed: u64) -> Vec<Vec<f32>> {
    let opts = SequenceOptions { n_frames: 50, seed, jitter: 0.5, body, ..SequenceOptions::default() };
    let seq = generate_sequence_with(params, &opts).unwrap();
    cycle_energy_images(&PipelineInput::silhouettes(seq.masks))
        .unwrap()
        .into_iter()
        .map(|e| e.into_data())
        .collect()
}

// Upper half always from a plain walk; the lower half is either another
// plain walk (normal) or a high-knee walk of the same body (neuropathic).
fn legs_only_samples(per_class: usize, seed: u64, side: usize) -> Vec<Sample> {
    let plain = preset(GaitClass::Normal, Severity::Na);
    let mut lifted = plain.clone();
    lifted.knee_lift = 0.9;
    let mut r = rng(seed);
    let half = ENERGY_SIZE * ENERGY_SIZE / 2;
    let mut out = Vec::new();
    for i in 0..per_class {
        let body = Anthropometrics::sample(&mut r);
        let base = seed * 1000 + i as u64 * 4;
        let lowers = [(walk_geis(&plain, body, base), GaitClass::Normal), (walk_geis(&lifted, body, base + 1), GaitClass::Neuropathic)];
        for (k, (lower, class)) in lowers.iter().enumerate() {
            let upper = walk_geis(&plain, body, base + 2 + k as u64);
            for (u, l) in upper.iter().zip(lower) {
                let mut g = u.clone();
                g[half..].copy_from_slice(&l[half..]);
                let pixels = if side == ENERGY_SIZE { g } else { resample_grid(&g, ENERGY_SIZE, ENERGY_SIZE, side, side) };
                out.push(Sample { pixels, label: class.index(), subject: i as u32 + 1, repeat: false });
            }
        }
    }
    out
}

fn explainability() -> Outcome {
    let net = Network::<f32>::build(ModelConfig::default(), 21).unwrap().cast::<f64>();
    let mut r = rng(3);
    let img: Vec<f64> = (0..ENERGY_SIZE * ENERGY_SIZE)
        .map(|i| {
            let (x, y) = ((i % ENERGY_SIZE) as f64 - 112.0, (i / ENERGY_SIZE) as f64 - 112.0);
            let disk = if x.hypot(y) <= 60.0 { 0.8 } else { 0.0 };
            disk + 0.2 * r.random::<f64>()
        })
        .collect();
    let (grad, target) = input_gradient(&net, &img, None).map_err(|e| e.to_string())?;
    let map = saliency(&net, &img, None).unwrap();
    let peak = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let h = 1e-4;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for i in probes(img.len(), 60, 5) {
        if checked == 10 {
            break;
        }
        let mut x = img.clone();
        x[i] += h;
        let up = class_score(&net, &x, target).unwrap();
        x[i] -= 2.0 * h;
        let down = class_score(&net, &x, target).unwrap();
        let numeric = (up - down) / (2.0 * h);
        if numeric.abs() < 1e-6 * peak {
            continue;
        }
        let e = rel_err(grad[i], numeric);
        worst = worst.max(e);
        ensure!(e < 1e-2, "saliency pixel {i}: {} vs {numeric}", grad[i]);
        let normalized = numeric.abs() / peak;
        ensure!((map.values[i] as f64 - normalized).abs() < 1e-2 * normalized + 1e-6, "saliency map at {i}");
        checked += 1;
    }
    ensure!(checked == 10, "only {checked} informative pixels probed");

    let samples = legs_only_samples(4, 8, ENERGY_SIZE);
    let held_out = legs_only_samples(2, 108, ENERGY_SIZE);
    let lifted: Vec<&Sample> = held_out.iter().filter(|s| s.label == GaitClass::Neuropathic.index()).collect();
    let cfg = TrainConfig { max_epochs: 20, batch_size: 8, patience: 4, min_delta: 1e-3, seed: 3, ..TrainConfig::default() };
    let net_seeds = [4u64, 5, 6];
    let mut acc: f64 = 1.0;
    let mut mass = 0.0;
    for &net_seed in &net_seeds {
        let mut net = Network::<f32>::build(ModelConfig::default(), net_seed).unwrap();
        train(&mut net, &samples, &cfg).map_err(|e| e.to_string())?;
        acc = acc.min(evaluate(&net, &held_out).map_err(|e| e.to_string())?.metrics.accuracy);
        for s in &lifted {
            let cam = grad_cam(&net, &s.pixels, 3, Some(s.label)).map_err(|e| e.to_string())?;
            ensure!(cam.values.iter().all(|&v| (0.0..=1.0).contains(&v)), "grad-CAM outside [0, 1]");
            let top = cam.values.iter().cloned().fold(0.0f32, f32::max);
            ensure!(top == 1.0 || top == 0.0, "grad-CAM peak {top} is not normalized");
            mass += cam.lower_half_mass();
        }
    }
    mass /= (lifted.len() * net_seeds.len()) as f64;
    ensure!(acc >= 0.75, "legs-only held-out accuracy {acc:.2}");
    ensure!(mass >= 0.5, "legs-only lower-half mass {mass:.3}");
    Ok(format!(
        "saliency: 10 probes, worst rel. error {worst:.1e}; grad-CAM in [0, 1], legs-only worst held-out accuracy {acc:.2}, lower-half mass {mass:.2} on the 14x14 block (3 nets)"
    ))
}

// --------------------------------------------------------------- service

async fn classify(client: &reqwest::Client, base: &str, file: Vec<u8>, rep: &str) -> Result<Value, String> {
    let resp = client
        .post(format!("{base}/api/classify"))
        .multipart(common::form(file, rep, None))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    ensure!(resp.status() == 200, "classify returned {}", resp.status());
    resp.json().await.map_err(|e| e.to_string())
}

async fn service_checks(gei: GaitModel, png: Vec<u8>) -> Outcome {
    let sei = GaitModel::new(Representation::Sei, Network::build(ModelConfig::default(), 9).unwrap());
    let state = AppState::new(Config::default(), vec![gei, sei], None).map_err(|e| e.to_string())?;
    let base = format!("http://{}", spawn_local(state).await.map_err(|e| e.to_string())?);
    let client = reqwest::Client::new();

    let health = client.get(format!("{base}/api/health")).send().await.map_err(|e| e.to_string())?;
    ensure!(health.status() == 200, "health returned {}", health.status());

    let archive = common::hemiplegic_archive();
    let from_zip = classify(&client, &base, archive.clone(), "gei").await?;
    ensure!(from_zip["source"] == "archive", "archive path reported {}", from_zip["source"]);
    let from_png = classify(&client, &base, png.clone(), "gei").await?;
    ensure!(from_png["source"] == "image", "image path reported {}", from_png["source"]);
    let probs: Vec<f64> = serde_json::from_value(from_png["probabilities"].clone()).unwrap();
    ensure!(probs.len() == 5 && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-4, "probabilities {probs:?}");

    let id = from_png["session_id"].as_str().unwrap();
    let layers: Value = client
        .get(format!("{base}/api/session/{id}/layers"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let dims: Vec<Value> = layers.as_array().unwrap().iter().map(|l| l["spatial_dims"].clone()).collect();
    ensure!(
        dims == [json!([112, 112]), json!([56, 56]), json!([28, 28]), json!([14, 14]), json!([7, 7])],
        "layer dims {dims:?}"
    );

    let fm = client
        .get(format!("{base}/api/session/{id}/feature-map?layer=0&channel=12"))
        .send()
        .await
        .unwrap();
    ensure!(fm.status() == 200, "feature map returned {}", fm.status());
    let img = common::decode_png(&fm.bytes().await.unwrap());
    ensure!((img.width(), img.height()) == (112, 112), "feature map {}x{}", img.width(), img.height());

    let explain = client
        .post(format!("{base}/api/session/{id}/explain"))
        .json(&json!({ "method": "gradcam" }))
        .send()
        .await
        .unwrap();
    ensure!(explain.status() == 200, "explain returned {}", explain.status());
    let e: Value = explain.json().await.unwrap();
    ensure!(e["overlay_png"].as_str().is_some_and(|s| !s.is_empty()), "explain carries no overlay");

    let report = client
        .post(format!("{base}/api/session/{id}/report"))
        .json(&json!({ "email": "clinic@example.org" }))
        .send()
        .await
        .unwrap();
    ensure!(report.status() == 501, "report without gateway returned {}", report.status());

    let mut tasks = Vec::new();
    for i in 0..8 {
        let (client, base) = (client.clone(), base.clone());
        let file = if i % 2 == 0 { png.clone() } else { archive.clone() };
        tasks.push(tokio::spawn(async move { (i, classify(&client, &base, file, "gei").await) }));
    }
    for t in tasks {
        let (i, body) = t.await.map_err(|e| e.to_string())?;
        let body = body?;
        let serial = if i % 2 == 0 { &from_png } else { &from_zip };
        ensure!(body["probabilities"] == serial["probabilities"], "concurrent result {i} differs from serial");
    }
    Ok(format!(
        "health, classify (archive: {}, image: {}), layers, feature-map, explain, report 501, 8 concurrent clients",
        from_zip["label"], from_png["label"]
    ))
}

fn service_contract(desk: Option<&Desk>) -> Outcome {
    let (model, png) = match desk {
        Some(d) => (d.model.clone(), d.held_out_png.clone()),
        None => {
            let f = common::fixture();
            (f.gei.clone(), f.gei_png.clone())
        }
    };
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    rt.block_on(service_checks(model, png))
}

// ------------------------------------------------------------------ main

fn run(name: &str, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {name:<26} {detail} [{secs:.1}s]"),
        Err(detail) => println!("FAIL  {name:<26} {detail} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() {
    // `cargo test -- --list` and similar harness probes expect silence.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("acceptance criteria");
    let mut desk = None;
    let results = [
        run("parameter budget", parameter_budget),
        run("model size", model_size),
        run("gradient correctness", gradients),
        run("GEI oracle", gei_oracle),
        run("fold protocol", fold_protocol),
        run("desk-scale learning", || desk_learning(&mut desk)),
        run("segmentation quality", segmentation),
        run("cycle detection", cycle_cadence),
        run("explainability contracts", explainability),
        run("service contract", || service_contract(desk.as_ref())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
