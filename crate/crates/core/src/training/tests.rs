use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cloud::{morton, squared_distance, Coord, PointCloud, Rgb, RGB_TO_YUV};
use crate::codec::{ArchConfig, ModelParams};
use crate::datagen::{gen_cloud, ShapeSpec};
use crate::sparse::gradcheck::GradCheckOptions;
use crate::sparse::{grad_check, CoordSet, GradMode, Graph, Matrix};

fn tiny_cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert([rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8)]);
    }
    let coords: Vec<Coord> = set.into_iter().collect();
    let colors: Vec<Rgb> = coords.iter().map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    PointCloud::new(coords, colors, 6).unwrap()
}

fn student(seed: u64) -> ModelParams {
    ModelParams::new_student(ArchConfig::tiny(), seed).unwrap()
}

/// Moves biases off zero so no ReLU sits exactly on its kink, which
/// finite differences cannot resolve.
fn generic(mut m: ModelParams, seed: u64) -> ModelParams {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for (k, t) in m.store.iter_mut() {
        if k.ends_with(".bias") || k.ends_with(".mu") || k.ends_with(".log_b") {
            t.data.iter_mut().for_each(|v| *v += r.gen_range(-0.1..0.1));
        }
    }
    m
}

fn teacher(seed: u64) -> ModelParams {
    ModelParams::new_teacher(ArchConfig::tiny(), seed).unwrap()
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(77)
}

#[test]
fn bce_examples() {
    let one = CoordSet::new(vec![[0, 0, 0]], 1).unwrap();
    assert!((bce_occupancy(&[0.0], &one, &one).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let cand = CoordSet::new(vec![[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 1, 1]], 1).unwrap();
    let truth = CoordSet::new(vec![[0, 0, 1], [1, 1, 1]], 1).unwrap();
    let logits: Vec<f64> = cand.coords().iter().map(|c| if truth.contains(c) { 20.0 } else { -20.0 }).collect();
    assert!(bce_occupancy(&logits, &cand, &truth).unwrap() < 1e-8);
    assert!(bce_occupancy(&[1.0], &cand, &truth).is_err());
}

#[test]
fn bce_matches_direct_formula() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let coords: Vec<Coord> = (0..64).map(|i| [i / 16, (i / 4) % 4, i % 4]).collect();
    let cand = CoordSet::new(coords.clone(), 1).unwrap();
    let truth = CoordSet::new(coords.into_iter().filter(|_| r.gen_bool(0.4)).collect(), 1).unwrap();
    let logits: Vec<f64> = (0..64).map(|_| r.gen_range(-6.0..6.0)).collect();
    let direct: f64 = cand
        .coords()
        .iter()
        .zip(&logits)
        .map(|(c, &l)| {
            let p = 1.0 / (1.0 + (-l).exp());
            if truth.contains(c) { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum::<f64>()
        / 64.0;
    assert!((bce_occupancy(&logits, &cand, &truth).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn attribute_loss_recomposes_and_degenerates() {
    let pc = tiny_cloud(1, 20);
    let m = student(2);
    let w = LossWeights::default();
    let mut g = Graph::new(GradMode::Off);
    let out = loss_attribute(&mut g, &pc, &m, &w, &mut rng()).unwrap();
    let p = out.parts;
    assert!((p.total - p.recompose(LossKind::Attribute, &w)).abs() < 1e-9);
    assert!((p.total - (p.rate + 0.03 * (2.0 * p.d_attr + p.d_multi))).abs() < 1e-9);
    assert!(p.d_attr > 0.0 && p.d_multi > 0.0 && p.rate > 0.0);

    let w0 = LossWeights { lambda_a: 0.0, ..w };
    let mut g = Graph::new(GradMode::Off);
    let p0 = loss_attribute(&mut g, &pc, &m, &w0, &mut rng()).unwrap().parts;
    assert_eq!(p0.total, p0.rate);
}

#[test]
fn perfect_heads_give_zero_distortion() {
    // A single-color cloud and zero-weight heads with the bias set to that
    // color reconstruct every scale exactly.
    let coords: Vec<Coord> = (0..8).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect();
    let c = [0.2, 0.6, 0.4];
    let pc = PointCloud::new(coords, vec![c; 8], 6).unwrap();
    let mut m = student(3);
    for h in ["attr_decoder.aux0", "attr_decoder.aux1", "attr_decoder.head"] {
        m.store.get_mut(&format!("{h}.weight")).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        m.store.get_mut(&format!("{h}.bias")).unwrap().data = c.to_vec();
    }
    let mut g = Graph::new(GradMode::Off);
    let p = loss_attribute(&mut g, &pc, &m, &LossWeights::default(), &mut rng()).unwrap().parts;
    assert!(p.d_attr < 1e-20 && p.d_multi < 1e-20, "{p:?}");
}

#[test]
fn geometry_and_joint_losses_recompose() {
    let pc = tiny_cloud(4, 20);
    let m = student(5);
    let t = teacher(6);
    let w = LossWeights::default();
    let mut g = Graph::new(GradMode::Off);
    let p = loss_geometry(&mut g, &pc, &m, Some(&t), &w, true, &mut rng()).unwrap().parts;
    assert!((p.total - p.recompose(LossKind::Geometry, &w)).abs() < 1e-9);
    assert!(p.kd > 0.0 && p.bce > 0.0 && p.bce2 > 0.0);

    let w_nokd = LossWeights { lambda_mse: 0.0, ..w };
    let mut g = Graph::new(GradMode::Off);
    let with_zero = loss_geometry(&mut g, &pc, &m, Some(&t), &w_nokd, true, &mut rng()).unwrap().parts;
    let mut g = Graph::new(GradMode::Off);
    let without = loss_geometry(&mut g, &pc, &m, None, &w, true, &mut rng()).unwrap().parts;
    assert_eq!(with_zero.total, without.total);

    let mut g = Graph::new(GradMode::Off);
    let j = loss_joint(&mut g, &pc, &m, &w, true, &mut rng()).unwrap().parts;
    assert!((j.total - j.recompose(LossKind::Joint, &w)).abs() < 1e-9);

    let mut g = Graph::new(GradMode::Off);
    let tp = loss_teacher(&mut g, &pc, &t, &w, true, &mut rng()).unwrap().parts;
    assert!((tp.total - tp.recompose(LossKind::Teacher, &w)).abs() < 1e-9);
}

#[test]
fn kd_without_transform_is_rejected() {
    let pc = tiny_cloud(4, 12);
    let arch = ArchConfig { transform: false, ..ArchConfig::tiny() };
    let m = ModelParams::new_student(arch, 1).unwrap();
    let mut g = Graph::new(GradMode::Off);
    assert!(loss_geometry(&mut g, &pc, &m, Some(&teacher(1)), &LossWeights::default(), true, &mut rng()).is_err());
}

fn brute_nn(targets: &[Coord], q: Coord) -> usize {
    (0..targets.len())
        .min_by_key(|&i| (squared_distance(targets[i], q), morton(targets[i])))
        .unwrap()
}

fn yuv255(c: Rgb) -> [f64; 3] {
    RGB_TO_YUV.map(|r| 255.0 * (r[0] * c[0] + r[1] * c[1] + r[2] * c[2]))
}

#[test]
fn bidirectional_mse_matches_brute_force() {
    for seed in 0..5 {
        let a = tiny_cloud(100 + seed, 50);
        let b = tiny_cloud(200 + seed, 50);
        let mut g = Graph::new(GradMode::Off);
        let rec = g.constant(Matrix::from_vec(b.len(), 3, b.colors.iter().flatten().copied().collect()));
        let (d, f, bk) = bidirectional_mse(&mut g, rec, &b.coords, &a.coords, &a.colors).unwrap();
        let mse = |pairs: Vec<(usize, usize)>| {
            pairs
                .iter()
                .map(|&(j, i)| {
                    let (x, y) = (yuv255(b.colors[j]), yuv255(a.colors[i]));
                    (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / (3 * pairs.len()) as f64
        };
        let fwd = mse(a.coords.iter().enumerate().map(|(i, &c)| (brute_nn(&b.coords, c), i)).collect());
        let bwd = mse(b.coords.iter().enumerate().map(|(j, &c)| (j, brute_nn(&a.coords, c))).collect());
        assert!((g.scalar(f) - fwd).abs() < 1e-9 * fwd.max(1.0));
        assert!((g.scalar(bk) - bwd).abs() < 1e-9 * bwd.max(1.0));
        assert_eq!(g.scalar(d), g.scalar(f).max(g.scalar(bk)));
    }
}

#[test]
fn max_rule() {
    let mut g = Graph::new(GradMode::Off);
    let f = g.constant(Matrix::scalar(0.1));
    let b = g.constant(Matrix::scalar(0.3));
    let m = g.max(f, b);
    assert_eq!(g.scalar(m), 0.3);
}

fn gc_opts() -> GradCheckOptions {
    GradCheckOptions {
        eps: 1e-6,
        max_per_tensor: Some(3),
        seed: 1,
        mode: GradMode::All,
        rel_floor: 1e-3,
        kink_tol: Some(1e-2),
    }
}

#[test]
fn attribute_loss_gradients() {
    let pc = tiny_cloud(7, 16);
    let m = generic(student(8), 1);
    let w = LossWeights::default();
    let rep = grad_check(&m.store, |g, s| {
        let mm = ModelParams { store: s.clone(), ..m.clone() };
        Ok(loss_attribute(g, &pc, &mm, &w, &mut rng())?.loss)
    }, &gc_opts())
    .unwrap();
    println!("{rep:?}");
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    assert!(rep.kinks * 10 < rep.checked, "{rep:?}");
}

#[test]
fn geometry_loss_gradients() {
    let pc = tiny_cloud(9, 16);
    let m = generic(student(10), 2);
    let t = teacher(11);
    let w = LossWeights::default();
    let rep = grad_check(&m.store, |g, s| {
        let mm = ModelParams { store: s.clone(), ..m.clone() };
        Ok(loss_geometry(g, &pc, &mm, Some(&t), &w, true, &mut rng())?.loss)
    }, &gc_opts())
    .unwrap();
    println!("{rep:?}");
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    assert!(rep.kinks * 10 < rep.checked, "{rep:?}");
}

#[test]
fn joint_loss_gradients() {
    let pc = tiny_cloud(12, 16);
    let m = generic(student(13), 3);
    let w = LossWeights::default();
    let rep = grad_check(&m.store, |g, s| {
        let mm = ModelParams { store: s.clone(), ..m.clone() };
        Ok(loss_joint(g, &pc, &mm, &w, true, &mut rng())?.loss)
    }, &gc_opts())
    .unwrap();
    println!("{rep:?}");
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    assert!(rep.kinks * 10 < rep.checked, "{rep:?}");
}

#[test]
fn zero_lambda_t_leaves_only_rate() {
    let pc = tiny_cloud(14, 20);
    let m = student(15);
    let w = LossWeights { lambda_t: 0.0, ..Default::default() };
    let mut g = Graph::new(GradMode::All);
    let out = loss_joint(&mut g, &pc, &m, &w, true, &mut rng()).unwrap();
    assert!((out.parts.total - out.parts.rate).abs() <= 1e-12 * out.parts.rate);
    let grads = g.backward(out.loss, &m.store).unwrap();
    for (k, v) in &grads {
        if k.starts_with("attr_decoder.") || k.starts_with("geo_decoder.") || k.starts_with("transform.") {
            assert!(v.iter().all(|x| *x == 0.0), "{k}");
        }
    }
    assert!(grads["entropy.log_b"].iter().any(|x| *x != 0.0));
}

#[test]
fn teacher_and_student_latents_share_coordinates() {
    let s = student(1);
    let t = teacher(2);
    for seed in 0..100 {
        let pc = tiny_cloud(1000 + seed, 1 + (seed as usize * 7) % 60);
        let ft = teacher_features(&pc, &t).unwrap();
        let code = crate::codec::encode_analysis(&pc, &s).unwrap();
        assert_eq!(ft.coords.coords(), code.coords.coords());
    }
}

fn small_set(n: usize) -> Vec<PointCloud> {
    (0..n as u64)
        .map(|s| {
            let mut spec = ShapeSpec::small(s);
            spec.extent = Some(6);
            gen_cloud(&spec).unwrap()
        })
        .collect()
}

fn quick(stage: u8, epochs: usize) -> StageConfig {
    StageConfig {
        stage,
        epochs,
        lr: LrSchedule { initial: 3e-3, halve_every: 20, floor: 1e-3 },
        seed: 9,
        ..Default::default()
    }
}

#[test]
fn stage1_smoke_loss_decreases() {
    let data = small_set(20);
    let out = train_stage(&quick(1, 3), &data, student(1), None, &TrainOptions::default()).unwrap();
    assert_eq!(out.steps.len(), 60);
    assert!(out.mean_loss(50, 60) < out.mean_loss(0, 10), "{} vs {}", out.mean_loss(50, 60), out.mean_loss(0, 10));
}

#[test]
fn stage2_freezes_everything_but_geometry() {
    let data = small_set(4);
    let init = student(2);
    let t = teacher(3);
    let out = train_stage(&quick(2, 2), &data, init.clone(), Some(&t), &TrainOptions::default()).unwrap();
    let mut changed = 0;
    for (k, v) in init.store.iter() {
        let after = &out.model.store.get(k).unwrap().data;
        if k.starts_with("transform.") || k.starts_with("geo_decoder.") {
            changed += (after != &v.data) as usize;
        } else {
            assert_eq!(after, &v.data, "{k} moved");
        }
    }
    assert!(changed > 0);
}

#[test]
fn extra_frozen_prefixes_are_respected() {
    let data = small_set(3);
    let init = student(4);
    let cfg = StageConfig { frozen: vec!["attr_decoder.".into()], ..quick(1, 1) };
    let out = train_stage(&cfg, &data, init.clone(), None, &TrainOptions::default()).unwrap();
    for (k, v) in init.store.iter().filter(|(k, _)| k.starts_with("attr_decoder.")) {
        assert_eq!(out.model.store.get(k).unwrap().data, v.data);
    }
}

#[test]
fn stage2_requires_teacher() {
    let data = small_set(2);
    let err = train_stage(&quick(2, 1), &data, student(1), None, &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, crate::Error::Config(_)));
    let cfg = StageConfig { lambda_mse: 0.0, ..quick(2, 1) };
    assert!(train_stage(&cfg, &data, student(1), None, &TrainOptions::default()).is_ok());
    let err = train_stage(&quick(2, 1), &data, student(1), Some(&student(2)), &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, crate::Error::Config(_)));
}

#[test]
fn stage3_init_takes_the_right_parts() {
    let s1 = student(1);
    let s2 = student(2);
    let m = init_stage3(&s1, &s2).unwrap();
    for (k, v) in m.store.iter() {
        let src = if k.starts_with("transform.") || k.starts_with("geo_decoder.") { &s2 } else { &s1 };
        assert_eq!(v, src.store.get(k).unwrap(), "{k}");
    }
    assert!(init_stage3(&s1, &teacher(1)).is_err());
}

#[test]
fn training_is_deterministic_and_logs_epochs() {
    let data = small_set(5);
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions { log_csv: Some(dir.path().join("log.csv")), checkpoint: Some(dir.path().join("m.ckpt")) };
    let a = train_stage(&quick(3, 2), &data, student(1), None, &opts).unwrap();
    let b = train_stage(&quick(3, 2), &data, student(1), None, &TrainOptions::default()).unwrap();
    let ta: Vec<f64> = a.steps.iter().map(|s| s.parts.total).collect();
    let tb: Vec<f64> = b.steps.iter().map(|s| s.parts.total).collect();
    assert_eq!(ta, tb);
    let text = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,step,lr,r_bits,rate_bpp,d_attr,d_multi,bce,bce2,kd,total");
    assert_eq!(lines.len(), 3);
    let loaded = ModelParams::load(dir.path().join("m.ckpt")).unwrap();
    let mut expect = a.model.clone();
    expect.round_to_f32();
    assert_eq!(loaded, expect);
}

#[test]
fn non_finite_loss_aborts_and_keeps_checkpoint() {
    let data = small_set(2);
    let mut m = student(1);
    m.store.get_mut("attr_decoder.head.bias").unwrap().data[0] = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions { log_csv: None, checkpoint: Some(dir.path().join("m.ckpt")) };
    let err = train_stage(&quick(1, 1), &data, m, None, &opts).unwrap_err();
    assert!(matches!(err, crate::Error::Numerical(_)));
    assert!(dir.path().join("m.ckpt").exists());
}

#[test]
fn teacher_smoke_run() {
    let data = small_set(10);
    let cfg = quick(2, 5);
    let out = train_teacher(&cfg, &data, teacher(1), &TrainOptions::default()).unwrap();
    assert!(out.mean_loss(40, 50) < out.mean_loss(0, 10));
    let rec = teacher_reconstruct(&data[0], &out.model).unwrap();
    assert_eq!(rec.len(), data[0].len());
}

