//! Acceptance checks, one per criterion, each printing a PASS or FAIL line.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 7`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use facerep::checkpoint;
use facerep::driver::{checkpoint_path, epoch_mean_softmax, train_run, DriverOptions, LOG_FILE};
use facerep::RayonExecutor;
use facerep_core::eval::{
    auc, cosine, dir_at_far, fit_joint_bayes, jb_score, tenfold_accuracy, video_pair_score, vr_at_far,
    JointBayesConfig, OpenSetScores, ScoreSet,
};
use facerep_core::faceproc::{
    align, alignment_transform, mirror, mirror_manifest, synth_pairs, synth_world, AlignConfig, GrayImage,
    LandmarkPair, Point,
};
use facerep_core::forge::{
    annotated_world, assignment_accuracy, dedup_against, filter_subjects, run_pipeline, AnnotatedWorldConfig,
    AssignedFace, ForgeConfig, IdentityCluster,
};
use facerep_core::gradcheck::{grad_check, relative_error};
use facerep_core::network::{format_k, BlockConfig};
use facerep_core::objective::{combined_loss, ObjectiveConfig, Pair};
use facerep_core::rng::rng_from;
use facerep_core::trainer::TrainingSchedule;
use facerep_core::{LayerKind, Mode, Network, NetworkSpec, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = fn() -> Result<String, String>;

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, u64, Check); 8] = [
        (1, "architecture accounting", 1, criterion_1),
        (2, "gradient correctness", 60, criterion_2),
        (3, "desk-scale training", 900, criterion_3),
        (4, "metric oracle equivalence", 60, criterion_4),
        (5, "Joint Bayes recovery", 60, criterion_5),
        (6, "forge pipeline fidelity", 60, criterion_6),
        (7, "determinism and persistence", 600, criterion_7),
        (8, "alignment contract", 60, criterion_8),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(Ok(d)) if elapsed <= Duration::from_secs(limit) => (true, d),
            Ok(Ok(d)) => (false, format!("{d}; exceeded the {limit} s budget")),
            Ok(Err(e)) => (false, e),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {n} ({name}): {} in {:.2} s: {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Result<String, String> {
    let spec = NetworkSpec::canonical();
    let counts = spec.count_params();
    // Name, filter side, input channels, output channels (or FC dims), and
    // the printed table cell.
    let table: [(&str, usize, usize, usize, &str); 11] = [
        ("Conv11", 3, 1, 32, "0.28K"),
        ("Conv12", 3, 32, 64, "18K"),
        ("Conv21", 3, 64, 64, "36K"),
        ("Conv22", 3, 64, 128, "72K"),
        ("Conv31", 3, 128, 96, "108K"),
        ("Conv32", 3, 96, 192, "162K"),
        ("Conv41", 3, 192, 128, "216K"),
        ("Conv42", 3, 128, 256, "288K"),
        ("Conv51", 3, 256, 160, "360K"),
        ("Conv52", 3, 160, 320, "450K"),
        ("Fc6", 1, 320, 10575, "3305K"),
    ];
    let mut total = 0;
    for (name, side, cin, cout, cell) in table {
        let expected = side * side * cin * cout;
        total += expected;
        let got = counts.get(name).ok_or(format!("no layer {name}"))?;
        ensure(got == expected, || format!("{name}: {got} parameters, expected {expected}"))?;
        ensure(format_k(got) == cell, || format!("{name}: prints {}, table says {cell}", format_k(got)))?;
    }
    ensure(total == 5_135_328 && counts.total == total, || format!("total {}", counts.total))?;
    ensure(format_k(counts.total) == "5015K", || format!("total prints {}", format_k(counts.total)))?;
    ensure(spec.depth() == 11, || format!("depth {}", spec.depth()))?;

    let shapes: BTreeMap<String, Vec<usize>> = spec
        .activation_shapes()
        .map_err(|e| e.to_string())?
        .into_iter()
        .collect();
    let expected: [(&str, [usize; 3]); 16] = [
        ("Conv11", [100, 100, 32]),
        ("Conv12", [100, 100, 64]),
        ("Pool1", [50, 50, 64]),
        ("Conv21", [50, 50, 64]),
        ("Conv22", [50, 50, 128]),
        ("Pool2", [25, 25, 128]),
        ("Conv31", [25, 25, 96]),
        ("Conv32", [25, 25, 192]),
        ("Pool3", [13, 13, 192]),
        ("Conv41", [13, 13, 128]),
        ("Conv42", [13, 13, 256]),
        ("Pool4", [7, 7, 256]),
        ("Conv51", [7, 7, 160]),
        ("Conv52", [7, 7, 320]),
        ("Pool5", [1, 1, 320]),
        ("Dropout", [1, 1, 320]),
    ];
    for (name, shape) in expected {
        let got = shapes.get(name).ok_or(format!("no activation for {name}"))?;
        ensure(got[..] == shape[..], || format!("{name}: shape {got:?}, expected {shape:?}"))?;
    }
    let fc: usize = shapes["Fc6"].iter().product();
    ensure(fc == 10575, || format!("Fc6 output {:?}", shapes["Fc6"]))?;
    Ok(format!("11 layer counts, total {} = 5015K, 17 activation shapes", counts.total))
}

// ---------------------------------------------------------------- 2

fn random_tensor(rng: &mut impl Rng, shape: &[usize], away_from_zero: bool) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if away_from_zero {
                v.signum() * (0.1 + 0.9 * v.abs())
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn criterion_2() -> Result<String, String> {
    let mut rng = rng_from(2);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let instances = 20;
    for _ in 0..instances {
        let h = rng.gen_range(3..7);
        let w = rng.gen_range(3..7);
        let c = rng.gen_range(1..4);
        let cout = rng.gen_range(1..4);
        let x = random_tensor(&mut rng, &[h, w, c], false);
        let cases: Vec<(&str, LayerKind, Option<Tensor>, Tensor)> = vec![
            (
                "convolution (same)",
                LayerKind::conv3x3(c, cout),
                Some(random_tensor(&mut rng, &[3, 3, c, cout], false)),
                x.clone(),
            ),
            (
                "convolution (valid, stride 2)",
                LayerKind::Convolution {
                    filter_h: 2,
                    filter_w: 3,
                    stride: 2,
                    in_channels: c,
                    out_channels: cout,
                    same_padding: false,
                },
                Some(random_tensor(&mut rng, &[2, 3, c, cout], false)),
                x.clone(),
            ),
            (
                "max pooling (ceil)",
                LayerKind::MaxPool {
                    window: 2,
                    stride: 2,
                    ceil_mode: true,
                },
                None,
                x.clone(),
            ),
            (
                "max pooling (floor)",
                LayerKind::MaxPool {
                    window: 2,
                    stride: 2,
                    ceil_mode: false,
                },
                None,
                x.clone(),
            ),
            (
                "average pooling",
                LayerKind::AvgPool {
                    window: h.min(w),
                    stride: 1,
                },
                None,
                x.clone(),
            ),
            ("relu", LayerKind::Relu, None, random_tensor(&mut rng, &[h, w, c], true)),
            ("dropout", LayerKind::Dropout { rate: 0.4 }, None, x.clone()),
            (
                "fully connected",
                LayerKind::FullyConnected {
                    in_dim: h * w * c,
                    out_dim: cout + 1,
                },
                Some(random_tensor(&mut rng, &[h * w * c, cout + 1], false)),
                x.clone(),
            ),
        ];
        for (name, kind, weights, input) in cases {
            let err = grad_check(&kind, weights.as_ref(), &input, 1e-6).map_err(|e| format!("{name}: {e}"))?;
            let e = worst.entry(name).or_insert(0.0);
            *e = e.max(err);
        }
    }
    for (name, err) in &worst {
        ensure(*err < 1e-4, || format!("{name}: max relative error {err:e}"))?;
    }

    // Whole network under the combined objective, contrastive term included.
    let spec = NetworkSpec::from_blocks(&BlockConfig {
        input_side: 10,
        input_channels: 1,
        blocks: vec![(2, 3), (3, 4)],
        class_count: 3,
        dropout_rate: 0.3,
    })
    .unwrap();
    let mut net = Network::init_weights(&spec, 21).unwrap();
    let images = [
        random_tensor(&mut rng, &[10, 10, 1], false),
        random_tensor(&mut rng, &[10, 10, 1], false),
    ];
    let labels = [0, 2];
    let pairs = [Pair {
        i: 0,
        j: 1,
        genuine: true,
    }];
    let cfg = ObjectiveConfig {
        alpha: 0.5,
        margin: 1.0,
    };
    let loss = |net: &Network| -> f64 {
        let traces: Vec<_> = images.iter().map(|x| net.trace(x, Mode::Train, 77).unwrap()).collect();
        let e: Vec<&[f64]> = traces.iter().map(|t| t.embedding()).collect();
        let z: Vec<&Tensor> = traces.iter().map(|t| t.logits()).collect();
        combined_loss(&e, &z, &labels, &pairs, &cfg).unwrap().total
    };
    let traces: Vec<_> = images.iter().map(|x| net.trace(x, Mode::Train, 77).unwrap()).collect();
    let e: Vec<&[f64]> = traces.iter().map(|t| t.embedding()).collect();
    let z: Vec<&Tensor> = traces.iter().map(|t| t.logits()).collect();
    let out = combined_loss(&e, &z, &labels, &pairs, &cfg).unwrap();
    let mut grads: Vec<Option<Tensor>> = vec![None; spec.layers.len()];
    for (k, t) in traces.iter().enumerate() {
        let g = net.backward(t, Some(&out.d_embeddings[k]), &out.d_logits[k]).unwrap();
        for (acc, g) in grads.iter_mut().zip(g) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g).unwrap(),
                (None, g) => *acc = g,
                _ => {}
            }
        }
    }
    let eps = 1e-5;
    let mut e2e: f64 = 0.0;
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        for k in 0..g.len() {
            let orig = net.states[i].weights.as_ref().unwrap().data()[k];
            net.states[i].weights.as_mut().unwrap().data_mut()[k] = orig + eps;
            let plus = loss(&net);
            net.states[i].weights.as_mut().unwrap().data_mut()[k] = orig - eps;
            let minus = loss(&net);
            net.states[i].weights.as_mut().unwrap().data_mut()[k] = orig;
            e2e = e2e.max(relative_error(g.data()[k], (plus - minus) / (2.0 * eps), 1e-7));
        }
    }
    ensure(e2e < 1e-3, || format!("end-to-end max relative error {e2e:e}"))?;
    let layer_worst = worst.values().copied().fold(0.0, f64::max);
    Ok(format!(
        "{} layer types x {instances} instances, worst {layer_worst:.1e}; end-to-end {e2e:.1e}",
        worst.len()
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Result<String, String> {
    let subjects = 10;
    let per = 40;
    let train_per = 30;
    let world = synth_world(subjects, per, 2024);
    let cfg = AlignConfig::default();
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (i, (img, r)) in world.images.iter().zip(world.manifest.records()).enumerate() {
        let crop = align(img, &r.landmarks, &cfg).unwrap().downsample(4).unwrap();
        let t = crop.to_tensor().unwrap();
        let set = if i % per < train_per { &mut train } else { &mut test };
        set.0.push(t);
        set.1.push(world.labels[i]);
    }
    let spec = NetworkSpec::from_blocks(&BlockConfig {
        input_side: 25,
        input_channels: 1,
        blocks: vec![(8, 16), (16, 32), (32, 64)],
        class_count: subjects,
        dropout_rate: 0.4,
    })
    .unwrap();
    let schedule = TrainingSchedule {
        epochs: 30,
        seed: 3,
        ..TrainingSchedule::with_batch_size(30)
    };
    let dir = tempfile::tempdir().unwrap();
    let exec = RayonExecutor::new(0).unwrap();
    let options = DriverOptions {
        resume: false,
        checkpoint_every: 10,
    };
    let out = train_run(&train.0, &train.1, &spec, &schedule, dir.path(), options, &exec).map_err(|e| e.to_string())?;
    let curve = epoch_mean_softmax(&out.log);
    let last = *curve.last().unwrap();
    let chance = (subjects as f64).ln();
    ensure(last < chance, || format!("final mean softmax {last:.4} >= ln 10 = {chance:.4}"))?;

    let net = out.state.net;
    let emb: Vec<Vec<f64>> = test.0.iter().map(|t| net.embed(t).unwrap()).collect();
    let folds: Vec<Vec<(f64, bool)>> = synth_pairs(&test.1, 10, 40, 5)
        .iter()
        .map(|f| f.iter().map(|p| (cosine(&emb[p.a], &emb[p.b]).unwrap(), p.genuine)).collect())
        .collect();
    let (acc, se) = tenfold_accuracy(&folds).map_err(|e| e.to_string())?;
    ensure(acc > 0.9, || format!("held-out 10-fold accuracy {:.2}%", 100.0 * acc))?;
    Ok(format!(
        "softmax {:.3} -> {last:.3} (ln 10 = {chance:.3}); held-out accuracy {:.2}±{:.2}%",
        curve[0],
        100.0 * acc,
        100.0 * se
    ))
}

// ---------------------------------------------------------------- 4

/// Candidate thresholds covering every distinct decision: each value, each
/// midpoint between neighbours, and points beyond both ends.
fn sweep(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut t = vec![v[0] - 1.0, v[v.len() - 1] + 1.0];
    for w in v.windows(2) {
        t.push(0.5 * (w[0] + w[1]));
    }
    t.extend(v);
    t
}

fn frac(n: usize, d: usize) -> f64 {
    n as f64 / d as f64
}

/// Best verification rate over every threshold whose false accept rate is
/// at most `far`.
fn vr_oracle(genuine: &[f64], impostor: &[f64], far: f64) -> f64 {
    let all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    sweep(&all)
        .into_iter()
        .filter(|&t| frac(impostor.iter().filter(|&&s| s >= t).count(), impostor.len()) <= far)
        .map(|t| frac(genuine.iter().filter(|&&s| s >= t).count(), genuine.len()))
        .fold(0.0, f64::max)
}

fn dir_oracle(s: &OpenSetScores, far: f64, rank: usize) -> f64 {
    let gallery_subjects: BTreeSet<usize> = s.gallery_labels.iter().copied().collect();
    let mut unknown = Vec::new();
    let mut known = Vec::new();
    for (p, row) in s.scores.iter().enumerate() {
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        for (g, &score) in row.iter().enumerate() {
            let e = best.entry(s.gallery_labels[g]).or_insert(f64::NEG_INFINITY);
            *e = e.max(score);
        }
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let me = s.probe_labels[p];
        if gallery_subjects.contains(&me) {
            let own = best[&me];
            let r = 1 + best.iter().filter(|(&l, &b)| l != me && b > own).count();
            known.push((top, r));
        } else {
            unknown.push(top);
        }
    }
    let all: Vec<f64> = unknown.iter().copied().chain(known.iter().map(|k| k.0)).collect();
    sweep(&all)
        .into_iter()
        .filter(|&t| frac(unknown.iter().filter(|&&u| u >= t).count(), unknown.len()) <= far)
        .map(|t| frac(known.iter().filter(|(top, r)| *top >= t && *r <= rank).count(), known.len()))
        .fold(0.0, f64::max)
}

fn tenfold_oracle(folds: &[Vec<(f64, bool)>]) -> (f64, f64) {
    let acc = |set: &[(f64, bool)], b: f64| frac(set.iter().filter(|(s, g)| (*s > b) == *g).count(), set.len());
    let accs: Vec<f64> = (0..folds.len())
        .map(|k| {
            let train: Vec<(f64, bool)> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let mut candidates: Vec<f64> = train.iter().map(|p| p.0).collect();
            candidates.push(f64::NEG_INFINITY);
            candidates.sort_by(f64::total_cmp);
            let mut best = (f64::NEG_INFINITY, -1.0);
            for b in candidates {
                let a = acc(&train, b);
                if a > best.1 {
                    best = (b, a);
                }
            }
            acc(&folds[k], best.0)
        })
        .collect();
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn quantized(rng: &mut impl Rng) -> f64 {
    f64::from(rng.gen_range(-8i32..=8)) / 8.0
}

fn criterion_4() -> Result<String, String> {
    let mut rng = rng_from(4);
    let instances = 200;
    let fars = [0.0, 0.001, 0.1, 0.25, 0.5, 1.0];
    for i in 0..instances {
        let genuine: Vec<f64> = (0..rng.gen_range(1..15)).map(|_| quantized(&mut rng)).collect();
        let impostor: Vec<f64> = (0..rng.gen_range(1..25)).map(|_| quantized(&mut rng)).collect();
        let far = if i % 2 == 0 { fars[i / 2 % fars.len()] } else { rng.gen_range(0.0..1.0) };
        let set = ScoreSet {
            genuine: genuine.clone(),
            impostor: impostor.clone(),
        };
        let got = vr_at_far(&set, far).map_err(|e| e.to_string())?;
        let want = vr_oracle(&genuine, &impostor, far);
        ensure((got - want).abs() <= 1e-12, || format!("vr instance {i}: {got} vs oracle {want}"))?;
    }
    for i in 0..instances {
        let subjects = rng.gen_range(2..6);
        let mut gallery_labels = Vec::new();
        for s in 0..subjects {
            for _ in 0..rng.gen_range(1..3) {
                gallery_labels.push(s);
            }
        }
        let known = rng.gen_range(1..6);
        let unknown = rng.gen_range(1..6);
        let probe_labels: Vec<usize> = (0..known)
            .map(|_| rng.gen_range(0..subjects))
            .chain((0..unknown).map(|u| 100 + u))
            .collect();
        let scores = probe_labels
            .iter()
            .map(|_| gallery_labels.iter().map(|_| quantized(&mut rng)).collect())
            .collect();
        let s = OpenSetScores {
            gallery_labels,
            probe_labels,
            scores,
        };
        let far = if i % 2 == 0 { fars[i / 2 % fars.len()] } else { rng.gen_range(0.0..1.0) };
        let rank = rng.gen_range(1..4);
        let got = dir_at_far(&s, far, rank).map_err(|e| e.to_string())?;
        let want = dir_oracle(&s, far, rank);
        ensure((got - want).abs() <= 1e-12, || format!("dir instance {i}: {got} vs oracle {want}"))?;
    }
    for i in 0..instances {
        let folds: Vec<Vec<(f64, bool)>> = (0..rng.gen_range(2..11))
            .map(|_| {
                (0..rng.gen_range(1..9))
                    .map(|_| (quantized(&mut rng), rng.gen_bool(0.5)))
                    .collect()
            })
            .collect();
        let (m, se) = tenfold_accuracy(&folds).map_err(|e| e.to_string())?;
        let (om, ose) = tenfold_oracle(&folds);
        ensure((m - om).abs() <= 1e-12 && (se - ose).abs() <= 1e-12, || {
            format!("tenfold instance {i}: ({m}, {se}) vs oracle ({om}, {ose})")
        })?;
    }
    for i in 0..instances {
        let dim = rng.gen_range(2..7);
        let mut frames = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect())
                .collect()
        };
        let a = frames(rng_from(i as u64).gen_range(1..6));
        let b = frames(rng_from(i as u64 + 1000).gen_range(1..6));
        let got = video_pair_score(&a, &b, |x, y| cosine(x, y)).map_err(|e| e.to_string())?;
        let mut sum = 0.0;
        for x in &a {
            for y in &b {
                let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                let ny = y.iter().map(|q| q * q).sum::<f64>().sqrt();
                sum += dot / (nx * ny);
            }
        }
        let want = sum / (a.len() * b.len()) as f64;
        ensure((got - want).abs() <= 1e-12, || format!("video instance {i}: {got} vs oracle {want}"))?;
    }
    Ok(format!("{instances} random instances each for VR, DIR, 10-fold and video scoring"))
}

// ---------------------------------------------------------------- 5

fn mat_vec(a: &[[f64; 4]; 4], z: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += a[i][j] * z[j];
        }
    }
    out
}

fn gram(a: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * a[j][k]).sum();
        }
    }
    out
}

fn criterion_5() -> Result<String, String> {
    // Factors of the true covariances: S = F F^T.
    let f_mu = [
        [1.0, 0.0, 0.0, 0.0],
        [0.5, 0.8, 0.0, 0.0],
        [-0.3, 0.2, 0.6, 0.0],
        [0.1, -0.4, 0.3, 0.5],
    ];
    let f_eps = [
        [0.9, 0.0, 0.0, 0.0],
        [0.6, 0.3, 0.0, 0.0],
        [0.0, 0.2, 0.25, 0.0],
        [0.3, 0.0, -0.1, 0.2],
    ];
    let offset = [2.0, -1.0, 1.5, 0.5];
    let mut rng = rng_from(5);
    let mut draw = || -> [f64; 4] { std::array::from_fn(|_| StandardNormal.sample(&mut rng)) };
    let mut sample = |subjects: usize, per: usize| {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for s in 0..subjects {
            let mu = mat_vec(&f_mu, &draw());
            for _ in 0..per {
                let eps = mat_vec(&f_eps, &draw());
                data.push((0..4).map(|k| offset[k] + mu[k] + eps[k]).collect::<Vec<f64>>());
                labels.push(s);
            }
        }
        (data, labels)
    };
    let (train, train_labels) = sample(200, 10);
    let model = fit_joint_bayes(&train, &train_labels, &JointBayesConfig::default()).map_err(|e| e.to_string())?;
    let rel = |est: &dyn Fn(usize, usize) -> f64, truth: [[f64; 4]; 4]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                num += (est(i, j) - truth[i][j]).powi(2);
                den += truth[i][j].powi(2);
            }
        }
        (num / den).sqrt()
    };
    let err_mu = rel(&|i, j| model.s_mu[(i, j)], gram(&f_mu));
    let err_eps = rel(&|i, j| model.s_eps[(i, j)], gram(&f_eps));
    ensure(err_mu < 0.15 && err_eps < 0.15, || {
        format!("relative Frobenius errors S_mu {err_mu:.3}, S_eps {err_eps:.3}")
    })?;

    let (test, labels) = sample(100, 4);
    let mut jb = ScoreSet::default();
    let mut cos = ScoreSet::default();
    let mut pair_rng = rng_from(55);
    let mut add = |a: usize, b: usize| {
        let g = labels[a] == labels[b];
        let s1 = jb_score(&model, &test[a], &test[b]).unwrap();
        let s2 = cosine(&test[a], &test[b]).unwrap();
        if g {
            jb.genuine.push(s1);
            cos.genuine.push(s2);
        } else {
            jb.impostor.push(s1);
            cos.impostor.push(s2);
        }
    };
    for a in 0..test.len() {
        for b in a + 1..test.len() {
            if labels[a] == labels[b] {
                add(a, b);
            }
        }
    }
    let mut impostors = 0;
    while impostors < 3000 {
        let a = pair_rng.gen_range(0..test.len());
        let b = pair_rng.gen_range(0..test.len());
        if labels[a] != labels[b] {
            add(a, b);
            impostors += 1;
        }
    }
    let auc_jb = auc(&jb).map_err(|e| e.to_string())?;
    let auc_cos = auc(&cos).map_err(|e| e.to_string())?;
    ensure(auc_jb > auc_cos, || format!("Joint Bayes AUC {auc_jb:.4} <= cosine AUC {auc_cos:.4}"))?;
    Ok(format!(
        "S_mu error {err_mu:.3}, S_eps error {err_eps:.3} after {} EM iterations; AUC {auc_cos:.4} (cosine) -> {auc_jb:.4} (Joint Bayes)",
        model.iterations
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Result<String, String> {
    let world = annotated_world(&AnnotatedWorldConfig::default(), 6);
    let distractors = world.truth.values().filter(|t| t.is_none()).count();
    ensure(distractors > 0, || "world has no distractors".into())?;
    let out = run_pipeline(&world.photos, world.seeds.clone(), &ForgeConfig::default()).map_err(|e| e.to_string())?;
    let accuracy = assignment_accuracy(&world, &out.clusters);
    ensure(accuracy >= 0.99, || format!("assignment accuracy {accuracy:.4}"))?;

    let tags: BTreeMap<&str, &Vec<String>> = world.photos.iter().map(|p| (p.id.as_str(), &p.tags)).collect();
    let mut faces_seen = HashSet::new();
    let mut photo_celebs = HashSet::new();
    let mut violations = 0;
    let mut doubles = 0;
    for c in &out.clusters {
        for f in &c.faces {
            violations += usize::from(!tags[f.photo.as_str()].contains(&c.celebrity));
            doubles += usize::from(!faces_seen.insert((f.photo.clone(), f.face.clone())));
            doubles += usize::from(!photo_celebs.insert((f.photo.clone(), c.celebrity.clone())));
        }
    }
    ensure(violations == 0, || format!("{violations} tag-constraint violations"))?;
    ensure(doubles == 0, || format!("{doubles} double assignments"))?;
    let strangers_assigned = out
        .clusters
        .iter()
        .flat_map(|c| &c.faces)
        .filter(|f| world.truth[&(f.photo.clone(), f.face.clone())].is_none())
        .count();
    ensure(strangers_assigned == 0, || format!("{strangers_assigned} untagged strangers assigned"))?;

    let cluster = |id: &str, n: usize| IdentityCluster {
        celebrity: id.to_string(),
        faces: (0..n)
            .map(|k| AssignedFace {
                photo: format!("p{k}"),
                face: "f0".into(),
                similarity: 0.9,
            })
            .collect(),
    };
    let kept = filter_subjects(vec![cluster("a", 14), cluster("b", 15)], 15);
    ensure(kept.len() == 1 && kept[0].celebrity == "b", || "14/15 boundary".into())?;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    ensure(dedup_against(&names(&["Ann Lee", "Bo Chen"]), &names(&["Cy Dee"]), 0).is_empty(), || {
        "disjoint names removed something".into()
    })?;
    ensure(
        dedup_against(&names(&["Ann Lee", "Bo Chen", "Cy Dee"]), &names(&["Bo Chen", "Zed"]), 0) == vec![1],
        || "exact duplicate not removed alone".into(),
    )?;
    Ok(format!(
        "accuracy {:.2}% over {} faces ({distractors} distractors), 0 violations, 0 double assignments, {} subjects kept",
        100.0 * accuracy,
        world.truth.len(),
        out.report.subjects_kept
    ))
}

// ---------------------------------------------------------------- 7

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_7() -> Result<String, String> {
    let world = synth_world(4, 6, 7);
    let cfg = AlignConfig::default().scaled(16);
    let images: Vec<Tensor> = world
        .images
        .iter()
        .zip(world.manifest.records())
        .map(|(img, r)| align(img, &r.landmarks, &cfg).unwrap().to_tensor().unwrap())
        .collect();
    let labels = world.labels.clone();
    let spec = NetworkSpec::from_blocks(&BlockConfig {
        input_side: 16,
        input_channels: 1,
        blocks: vec![(3, 4), (4, 6)],
        class_count: 4,
        dropout_rate: 0.4,
    })
    .unwrap();
    let epochs = 4;
    let schedule = TrainingSchedule {
        epochs,
        seed: 17,
        ..TrainingSchedule::with_batch_size(8)
    };
    let exec = RayonExecutor::new(0).unwrap();
    let run = |dir: &Path, resume: bool| {
        let options = DriverOptions {
            resume,
            checkpoint_every: 1,
        };
        train_run(&images, &labels, &spec, &schedule, dir, options, &exec).unwrap()
    };
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    run(&a, false);
    run(&b, false);
    let reference = dir_bytes(&a);
    ensure(reference.len() == epochs + 2, || format!("{} files written", reference.len()))?;
    ensure(reference == dir_bytes(&b), || "two runs with equal seeds differ".into())?;

    for e in 0..=epochs {
        let path = checkpoint_path(&a, e);
        let ck = checkpoint::load(&path).map_err(|e| e.to_string())?;
        ensure(checkpoint::encode(&ck) == fs::read(&path).unwrap(), || format!("epoch {e} round trip differs"))?;
    }
    let initial = checkpoint::load(&checkpoint_path(&a, 0)).unwrap().network;
    let fresh = Network::init_weights(&spec, schedule.seed).unwrap();
    let same_init = initial.states.iter().zip(&fresh.states).all(|(x, y)| x.weights == y.weights);
    ensure(same_init, || "initial checkpoint differs from initialization".into())?;

    for k in 1..epochs {
        // Interrupted after epoch k: later checkpoints never written, log
        // already holding rows of the unfinished epoch.
        let dir = root.path().join(format!("resume{k}"));
        fs::create_dir_all(&dir).unwrap();
        for (name, bytes) in &reference {
            let keep = match name.strip_prefix("epoch-").and_then(|n| n.strip_suffix(".ckpt")) {
                Some(n) => n.parse::<usize>().unwrap() <= k,
                None => true,
            };
            if keep {
                fs::write(dir.join(name), bytes).unwrap();
            }
        }
        let out = run(&dir, true);
        ensure(out.resumed_from == Some(k), || format!("resumed from {:?}", out.resumed_from))?;
        ensure(dir_bytes(&dir) == reference, || format!("resume at epoch {k} differs from the uninterrupted run"))?;
    }
    let log_lines = reference[LOG_FILE].iter().filter(|&&b| b == b'\n').count();
    Ok(format!(
        "{epochs}-epoch runs identical ({log_lines} log lines); checkpoints round-trip byte-identically; resume at epochs 1-{} matches",
        epochs - 1
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Result<String, String> {
    let cfg = AlignConfig::default();
    let mut rng = rng_from(8);
    let source = GrayImage::from_fn(160, 160, |x, y| {
        0.5 + 0.25 * ((x as f64) * 0.13).sin() + 0.2 * ((y as f64) * 0.07 + (x as f64) * 0.02).cos()
    })
    .unwrap();
    let (mut worst_pos, mut worst_sep, mut worst_pix): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let p1 = Point::new(rng.gen_range(20.0..140.0), rng.gen_range(20.0..140.0));
        let r = rng.gen_range(5.0..60.0);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let p2 = Point::new(p1.x + r * theta.cos(), p1.y + r * theta.sin());
        let lm = LandmarkPair::new(p1, p2).unwrap();
        let t = alignment_transform(&lm, &cfg).unwrap();
        let (a, b) = (t.apply(p1), t.apply(p2));
        worst_pos = worst_pos.max(a.distance(&cfg.q1)).max(b.distance(&cfg.q2));
        worst_sep = worst_sep.max((a.distance(&b) - 25.0).abs());
        // The crop pixel at the canonical landmark samples the source at the
        // detected landmark.
        let crop = align(&source, &lm, &cfg).unwrap();
        let at_q1 = crop.get(cfg.q1.x as usize, cfg.q1.y as usize);
        worst_pix = worst_pix.max((at_q1 - source.bilinear(p1.x, p1.y).clamp(0.0, 1.0)).abs());
    }
    ensure(worst_pos <= 0.5, || format!("landmark off by {worst_pos} px"))?;
    ensure(worst_sep <= 0.5, || format!("separation off by {worst_sep} px"))?;
    ensure(worst_pix <= 1e-9, || format!("crop and source disagree by {worst_pix}"))?;

    for _ in 0..100 {
        let w = rng.gen_range(1..20);
        let h = rng.gen_range(1..20);
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let m = mirror(&img);
        ensure(mirror(&m) == img, || "mirror is not an involution".into())?;
        for y in 0..h {
            for x in 0..w {
                ensure(m.get(x, y) == img.get(w - 1 - x, y), || "mirror is not a horizontal flip".into())?;
            }
        }
    }
    let manifest = synth_world(5, 7, 8).manifest;
    let doubled = mirror_manifest(&manifest);
    ensure(doubled.len() == 2 * manifest.len(), || "mirror did not double the manifest".into())?;
    for r in manifest.records() {
        let copies = doubled.records().iter().filter(|d| d.path == r.path && d.landmarks == r.landmarks).count();
        let flipped = doubled.records().iter().filter(|d| d.path == r.path && d.mirrored != r.mirrored).count();
        ensure(copies == 2 && flipped == 1, || format!("{}: {copies} copies", r.path))?;
    }
    Ok(format!(
        "1000 alignments: landmark error {worst_pos:.1e} px, separation error {worst_sep:.1e} px; mirror exact; {} -> {} records",
        manifest.len(),
        doubled.len()
    ))
}
