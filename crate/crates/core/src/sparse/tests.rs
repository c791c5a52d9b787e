use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{grad_check, GradCheckOptions};
use super::layers::{self, add_irn_params, irn_block, prune_to, tensor_from_unsorted};
use super::*;
use crate::cloud::morton;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_coords(r: &mut ChaCha8Rng, n: usize, extent: i32, stride: i32) -> Vec<[i32; 3]> {
    let mut set = std::collections::BTreeSet::new();
    while set.len() < n {
        set.insert([0; 3].map(|_| r.gen_range(0..extent) * stride));
    }
    let mut v: Vec<_> = set.into_iter().collect();
    v.sort_by_key(|c| morton(*c));
    v
}

fn random_tensor(r: &mut ChaCha8Rng, n: usize, extent: i32, stride: i32, c: usize) -> SparseTensor {
    let coords = random_coords(r, n, extent, stride);
    let feats = (0..n).map(|_| (0..c).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    tensor_from_unsorted(coords, feats, stride).unwrap()
}

fn random_params(r: &mut ChaCha8Rng, kernel: Kernel, cin: usize, cout: usize) -> ConvParams {
    let mut p = ConvParams::zeros(kernel, cin, cout);
    p.weight.iter_mut().for_each(|w| *w = r.gen_range(-1.0..1.0));
    p.bias.iter_mut().for_each(|b| *b = r.gen_range(-1.0..1.0));
    p
}

#[test]
fn identity_point_kernel() {
    let mut r = rng(1);
    let x = random_tensor(&mut r, 30, 8, 1, 4);
    let mut p = ConvParams::zeros(Kernel::Point, 4, 4);
    for i in 0..4 {
        p.weight[i * 4 + i] = 1.0;
    }
    assert_eq!(sparse_conv(&x, &p).unwrap(), x);
}

#[test]
fn single_point_cube_kernel_uses_center_tap() {
    let mut r = rng(2);
    let x = tensor_from_unsorted(vec![[3, 3, 3]], vec![vec![0.5, -2.0]], 1).unwrap();
    let p = random_params(&mut r, Kernel::Cube3, 2, 3);
    let y = sparse_conv(&x, &p).unwrap();
    for co in 0..3 {
        let w = &p.weight[CUBE3_CENTER * 6..];
        let want = p.bias[co] + 0.5 * w[co] + -2.0 * w[3 + co];
        assert_eq!(y.feats.get(0, co), want);
    }
}

/// Dense zero-padded 3×3×3 convolution over an n³ grid, written without
/// any of the sparse machinery.
fn dense_conv3(input: &[Vec<f64>], n: i32, p: &ConvParams) -> Vec<Vec<f64>> {
    let at = |x: i32, y: i32, z: i32| ((x * n + y) * n + z) as usize;
    let mut out = vec![vec![0.0; p.c_out]; (n * n * n) as usize];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let o = &mut out[at(x, y, z)];
                o.copy_from_slice(&p.bias);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let (a, b, c) = (x + dx, y + dy, z + dz);
                            if a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n {
                                continue;
                            }
                            let tap = ((dx + 1) * 9 + (dy + 1) * 3 + (dz + 1)) as usize;
                            for ci in 0..p.c_in {
                                for co in 0..p.c_out {
                                    o[co] += input[at(a, b, c)][ci] * p.weight[(tap * p.c_in + ci) * p.c_out + co];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn dense_block_matches_dense_convolution() {
    let mut r = rng(3);
    let n = 4;
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                coords.push([x, y, z]);
                feats.push((0..3).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            }
        }
    }
    let p = random_params(&mut r, Kernel::Cube3, 3, 5);
    let want = dense_conv3(&feats, n, &p);
    let x = tensor_from_unsorted(coords, feats, 1).unwrap();
    let y = sparse_conv(&x, &p).unwrap();
    for (i, c) in y.coords.coords().iter().enumerate() {
        let w = &want[((c[0] * n + c[1]) * n + c[2]) as usize];
        for co in 0..5 {
            assert!((y.feats.get(i, co) - w[co]).abs() < 1e-10);
        }
    }
}

#[test]
fn downsampling_matches_window_sum() {
    let mut r = rng(4);
    let x = random_tensor(&mut r, 40, 8, 1, 2);
    let p = random_params(&mut r, Kernel::Down2, 2, 3);
    let y = sparse_conv(&x, &p).unwrap();
    assert_eq!(y.stride(), 2);
    let mut want: std::collections::BTreeMap<[i32; 3], Vec<f64>> = Default::default();
    for (i, c) in x.coords.coords().iter().enumerate() {
        let parent = c.map(|v| v / 2 * 2);
        let tap = (((c[0] % 2) << 2) | ((c[1] % 2) << 1) | (c[2] % 2)) as usize;
        let acc = want.entry(parent).or_insert_with(|| p.bias.clone());
        for ci in 0..2 {
            for co in 0..3 {
                acc[co] += x.feats.get(i, ci) * p.weight[(tap * 2 + ci) * 3 + co];
            }
        }
    }
    assert_eq!(y.len(), want.len());
    for (i, c) in y.coords.coords().iter().enumerate() {
        for co in 0..3 {
            assert!((y.feats.get(i, co) - want[c][co]).abs() < 1e-12);
        }
    }
}

#[test]
fn upconv_emits_eight_children() {
    let x = tensor_from_unsorted(vec![[4, 8, 0]], vec![vec![1.0]], 4).unwrap();
    let mut r = rng(5);
    let p = random_params(&mut r, Kernel::Up2, 1, 2);
    let y = generative_upconv(&x, &p).unwrap();
    assert_eq!(y.len(), 8);
    assert_eq!(y.stride(), 2);
    assert!(y.coords.coords().iter().all(|c| (4..=6).contains(&c[0]) && (8..=10).contains(&c[1]) && c[2] <= 2));
}

#[test]
fn upconv_zero_weights_give_bias() {
    let mut r = rng(6);
    let x = random_tensor(&mut r, 5, 4, 2, 3);
    let mut p = ConvParams::zeros(Kernel::Up2, 3, 2);
    p.bias = vec![0.25, -1.5];
    let y = generative_upconv(&x, &p).unwrap();
    assert_eq!(y.len(), 40);
    for i in 0..y.len() {
        assert_eq!(y.feats.row(i), &[0.25, -1.5]);
    }
}

#[test]
fn upconv_matches_scatter_oracle() {
    let mut r = rng(7);
    let x = tensor_from_unsorted(vec![[0, 0, 0], [2, 0, 0], [2, 2, 0]], vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]], 2)
        .unwrap();
    let p = random_params(&mut r, Kernel::Up2, 2, 3);
    let y = generative_upconv(&x, &p).unwrap();
    let mut want: std::collections::BTreeMap<[i32; 3], Vec<f64>> = Default::default();
    for (i, c) in x.coords.coords().iter().enumerate() {
        for k in 0..8usize {
            let child = [c[0] + (k as i32 >> 2 & 1), c[1] + (k as i32 >> 1 & 1), c[2] + (k as i32 & 1)];
            let acc = want.entry(child).or_insert_with(|| p.bias.clone());
            for ci in 0..2 {
                for co in 0..3 {
                    acc[co] += x.feats.get(i, ci) * p.weight[(k * 2 + ci) * 3 + co];
                }
            }
        }
    }
    assert_eq!(y.len(), want.len());
    assert!(y.coords.coords().windows(2).all(|w| w[0] != w[1]));
    for (i, c) in y.coords.coords().iter().enumerate() {
        for co in 0..3 {
            assert!((y.feats.get(i, co) - want[c][co]).abs() < 1e-12);
        }
    }
}

#[test]
fn upconv_rejects_unit_stride() {
    let x = tensor_from_unsorted(vec![[0, 0, 0]], vec![vec![1.0]], 1).unwrap();
    assert!(generative_upconv(&x, &ConvParams::zeros(Kernel::Up2, 1, 1)).is_err());
}

#[test]
fn channel_mismatch_is_shape_error() {
    let x = tensor_from_unsorted(vec![[0, 0, 0]], vec![vec![1.0, 2.0]], 1).unwrap();
    assert!(matches!(sparse_conv(&x, &ConvParams::zeros(Kernel::Cube3, 3, 1)), Err(crate::Error::Shape(_))));
}

fn run_irn(store: &ParamStore, x: &SparseTensor) -> SparseTensor {
    let mut g = Graph::new(GradMode::Off);
    let v = g.input(x);
    irn_block(&mut g, store, "irn", &v).unwrap().to_tensor(&g)
}

#[test]
fn irn_with_zero_weights_is_identity() {
    let mut r = rng(8);
    let x = random_tensor(&mut r, 25, 6, 1, 8);
    let mut store = ParamStore::new();
    add_irn_params(&mut store, "irn", 8, &mut r).unwrap();
    store.iter_mut().for_each(|(_, t)| t.data.iter_mut().for_each(|v| *v = 0.0));
    assert_eq!(run_irn(&store, &x), x);
}

#[test]
fn irn_rejects_bad_width() {
    let mut r = rng(9);
    assert!(add_irn_params(&mut ParamStore::new(), "irn", 6, &mut r).is_err());
}

#[test]
fn irn_single_voxel_matches_manual_composition() {
    let mut r = rng(10);
    let c = 8;
    let mut store = ParamStore::new();
    add_irn_params(&mut store, "irn", c, &mut r).unwrap();
    for (_, t) in store.iter_mut() {
        t.data.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
    }
    let feat: Vec<f64> = (0..c).map(|_| r.gen_range(-1.0..1.0)).collect();
    let x = tensor_from_unsorted(vec![[1, 2, 3]], vec![feat.clone()], 1).unwrap();
    let y = run_irn(&store, &x);

    // With no neighbors, every 3×3×3 conv reduces to its center tap.
    let apply = |name: &str, tap: usize, v: &[f64], act: bool| -> Vec<f64> {
        let w = store.get(&format!("irn.{name}.weight")).unwrap();
        let b = &store.get(&format!("irn.{name}.bias")).unwrap().data;
        let (cin, cout) = (w.shape[1], w.shape[2]);
        let mut o = b.clone();
        for ci in 0..cin {
            for co in 0..cout {
                o[co] += v[ci] * w.data[(tap * cin + ci) * cout + co];
            }
        }
        if act {
            o.iter_mut().for_each(|a| *a = a.max(0.0));
        }
        o
    };
    let b0 = apply("b0", CUBE3_CENTER, &feat, true);
    let b1 = apply("b1", 0, &feat, true);
    let b2 = apply("b2b", CUBE3_CENTER, &apply("b2a", CUBE3_CENTER, &feat, true), true);
    let cat: Vec<f64> = b0.into_iter().chain(b1).chain(b2).collect();
    let proj = apply("proj", 0, &cat, false);
    for k in 0..c {
        assert!((y.feats.get(0, k) - (feat[k] + proj[k])).abs() < 1e-10);
    }
}

#[test]
fn irn_keeps_coordinates() {
    let mut r = rng(11);
    let x = random_tensor(&mut r, 40, 5, 2, 4);
    let mut store = ParamStore::new();
    add_irn_params(&mut store, "irn", 4, &mut r).unwrap();
    assert_eq!(run_irn(&store, &x).coords, x.coords);
}

#[test]
fn prune_examples() {
    let x = tensor_from_unsorted(vec![[0, 0, 0], [0, 0, 1], [0, 1, 0]], vec![vec![1.0], vec![2.0], vec![3.0]], 1).unwrap();
    let y = prune_topk_tensor(&x, &[0.9, 0.1, 0.5], 2).unwrap();
    assert_eq!(y.coords.coords(), &[[0, 0, 0], [0, 1, 0]]);
    assert_eq!(y.feats.data, vec![1.0, 3.0]);
    assert_eq!(prune_topk_tensor(&x, &[0.9, 0.1, 0.5], 10).unwrap(), x);
    assert_eq!(prune_topk_tensor(&x, &[0.0; 3], 0).unwrap().len(), 0);
    // Ties go to the lower Morton code.
    assert_eq!(topk_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
}

proptest! {
    #[test]
    fn prune_matches_sort_oracle(logits in prop::collection::vec(-3i32..3, 0..60), k in 0usize..70) {
        let logits: Vec<f64> = logits.into_iter().map(f64::from).collect();
        let mut order: Vec<usize> = (0..logits.len()).collect();
        // Stable sort by descending logit keeps lower indices first on ties.
        order.sort_by(|a, b| logits[*b].partial_cmp(&logits[*a]).unwrap());
        let mut want: Vec<usize> = order.into_iter().take(k).collect();
        want.sort_unstable();
        let got = topk_indices(&logits, k);
        prop_assert_eq!(got.len(), k.min(logits.len()));
        prop_assert_eq!(got, want);
    }
}

#[test]
fn glue_ops() {
    let x = tensor_from_unsorted(vec![[0, 0, 0], [1, 0, 0]], vec![vec![-1.0, 2.0], vec![0.0, -3.0]], 1).unwrap();
    assert_eq!(relu(&x).feats.data, vec![0.0, 2.0, 0.0, 0.0]);
    assert!(add(&x, &scale(&x, -1.0)).unwrap().feats.data.iter().all(|v| *v == 0.0));
    let c = concat(&x, &relu(&x)).unwrap();
    assert_eq!(c.channels(), 4);
    assert_eq!(c.coords, x.coords);
    let other = tensor_from_unsorted(vec![[0, 0, 0], [0, 1, 0]], vec![vec![0.0; 2], vec![0.0; 2]], 1).unwrap();
    assert!(add(&x, &other).is_err());
    assert!(concat(&x, &other).is_err());
}

#[test]
fn linear_backward_broadcasts_inputs() {
    let mut store = ParamStore::new();
    store.insert("w", ParamTensor { shape: vec![1, 3, 1], data: vec![0.1, -0.2, 0.3] });
    store.insert("b", ParamTensor::zeros(vec![1]));
    store.insert("unused", ParamTensor::filled(vec![4], 1.0));
    let xs = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]);
    let mut g = Graph::new(GradMode::All);
    let x = g.constant(xs);
    let w = g.param(&store, "w").unwrap();
    let b = g.param(&store, "b").unwrap();
    let y = g.linear(x, w, b).unwrap();
    let loss = g.dot_const(y, Matrix::from_vec(2, 1, vec![1.0, 1.0])).unwrap();
    let grads = g.backward(loss, &store).unwrap();
    assert_eq!(grads["w"], vec![0.0, 2.5, 7.0]);
    assert_eq!(grads["b"], vec![2.0]);
    assert_eq!(grads["unused"], vec![0.0; 4]);
}

#[test]
fn frozen_parameters_get_zero_gradient() {
    let mut store = ParamStore::new();
    store.insert("enc.w", ParamTensor { shape: vec![1, 1, 1], data: vec![2.0] });
    store.insert("dec.w", ParamTensor { shape: vec![1, 1, 1], data: vec![3.0] });
    store.insert("b", ParamTensor::zeros(vec![1]));
    let mut g = Graph::new(GradMode::Frozen(vec!["enc.".into()]));
    let x = g.constant(Matrix::scalar(1.0));
    let (we, wd, b) = (g.param(&store, "enc.w").unwrap(), g.param(&store, "dec.w").unwrap(), g.param(&store, "b").unwrap());
    let h = g.linear(x, we, b).unwrap();
    let y = g.linear(h, wd, b).unwrap();
    let grads = g.backward(y, &store).unwrap();
    assert_eq!(grads["enc.w"], vec![0.0]);
    assert_eq!(grads["dec.w"], vec![2.0]);
}

#[test]
fn prune_gradient_passes_kept_rows_only() {
    let mut store = ParamStore::new();
    store.insert("x", ParamTensor { shape: vec![3, 1], data: vec![1.0, 2.0, 3.0] });
    let coords = Arc::new(CoordSet::new(vec![[0, 0, 0], [0, 0, 1], [0, 1, 0]], 1).unwrap());
    let mut g = Graph::new(GradMode::All);
    let node = g.param(&store, "x").unwrap();
    let v = SparseVar { node, coords };
    let (y, kept) = prune_topk(&mut g, &v, &[0.9, 0.1, 0.5], 2).unwrap();
    assert_eq!(kept, vec![0, 2]);
    let loss = g.dot_const(y.node, Matrix::from_vec(2, 1, vec![5.0, 7.0])).unwrap();
    assert_eq!(g.backward(loss, &store).unwrap()["x"], vec![5.0, 0.0, 7.0]);
}

// ---- finite-difference checks, one per op ----

fn check(store: &ParamStore, f: impl Fn(&mut Graph, &ParamStore) -> crate::Result<NodeId>) {
    let rep = grad_check(store, f, &GradCheckOptions::default()).unwrap();
    assert!(rep.checked > 0);
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

fn param_input(store: &mut ParamStore, r: &mut ChaCha8Rng, n: usize, c: usize) {
    let data = (0..n * c).map(|_| r.gen_range(-1.0..1.0)).collect();
    store.insert("x", ParamTensor { shape: vec![n, c], data });
}

fn probe(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect())
}

fn conv_case(kernel: Kernel, n: usize, stride: i32, seed: u64) {
    let mut r = rng(seed);
    let coords = Arc::new(CoordSet::new(random_coords(&mut r, n, 4, stride), stride).unwrap());
    let mut store = ParamStore::new();
    param_input(&mut store, &mut r, n, 3);
    store.add_conv("c", kernel, 3, 2, &mut r);
    store.get_mut("c.bias").unwrap().data = vec![0.3, -0.1];
    let out_rows = {
        let mut g = Graph::new(GradMode::Off);
        let node = g.param(&store, "x").unwrap();
        layers::conv(&mut g, &store, "c", kernel, &SparseVar { node, coords: coords.clone() }).unwrap().coords.len()
    };
    let pr = probe(&mut r, out_rows, 2);
    check(&store, |g, s| {
        let node = g.param(s, "x")?;
        let y = layers::conv(g, s, "c", kernel, &SparseVar { node, coords: coords.clone() })?;
        g.dot_const(y.node, pr.clone())
    });
}

#[test]
fn grad_conv_cube3() {
    conv_case(Kernel::Cube3, 10, 1, 20);
}

#[test]
fn grad_conv_point() {
    conv_case(Kernel::Point, 10, 1, 21);
}

#[test]
fn grad_conv_down() {
    conv_case(Kernel::Down2, 12, 1, 22);
}

#[test]
fn grad_conv_up() {
    conv_case(Kernel::Up2, 6, 2, 23);
}

#[test]
fn grad_irn() {
    let mut r = rng(24);
    let coords = Arc::new(CoordSet::new(random_coords(&mut r, 20, 4, 1), 1).unwrap());
    let mut store = ParamStore::new();
    param_input(&mut store, &mut r, 20, 4);
    add_irn_params(&mut store, "irn", 4, &mut r).unwrap();
    for (n, t) in store.iter_mut() {
        if n.ends_with("bias") {
            t.data.iter_mut().for_each(|v| *v = r.gen_range(-0.2..0.2));
        }
    }
    let pr = probe(&mut r, 20, 4);
    check(&store, |g, s| {
        let node = g.param(s, "x")?;
        let y = irn_block(g, s, "irn", &SparseVar { node, coords: coords.clone() })?;
        g.dot_const(y.node, pr.clone())
    });
}

#[test]
fn grad_elementwise_and_structural() {
    let mut r = rng(25);
    let mut store = ParamStore::new();
    param_input(&mut store, &mut r, 6, 3);
    store.insert("y", ParamTensor { shape: vec![6, 3], data: (0..18).map(|_| r.gen_range(-1.0..1.0)).collect() });
    let p1 = probe(&mut r, 6, 6);
    let p2 = probe(&mut r, 4, 3);
    check(&store, |g, s| {
        let x = g.param(s, "x")?;
        let y = g.param(s, "y")?;
        let a = g.relu(x);
        let b = g.sub(y, a)?;
        let c = g.scale(b, 1.7);
        let d = g.add(c, x)?;
        let e = g.concat(&[d, y])?;
        let t1 = g.dot_const(e, p1.clone())?;
        let f = g.gather(d, vec![5, 0, 0, 3]);
        let h = g.clamp(f, -0.6, 0.6);
        let t2 = g.dot_const(h, p2.clone())?;
        let m = g.row_transform(y, crate::cloud::RGB_TO_YUV, 2.0)?;
        let t3 = g.mean_square(m, x)?;
        let t4 = g.matched_mse(x, y, vec![(0, 1), (2, 2), (2, 5)])?;
        let mx = g.max(t3, t4);
        Ok(g.weighted_sum(&[(t1, 0.5), (t2, 1.0), (mx, 2.0), (t4, -0.3)]))
    });
}

#[test]
fn grad_bce_and_rate() {
    let mut r = rng(26);
    let mut store = ParamStore::new();
    param_input(&mut store, &mut r, 8, 1);
    store.insert("v", ParamTensor { shape: vec![5, 2], data: (0..10).map(|_| r.gen_range(-4.0..4.0)).collect() });
    store.insert("mu", ParamTensor { shape: vec![2], data: vec![0.3, -0.7] });
    store.insert("log_b", ParamTensor { shape: vec![2], data: vec![0.2, 0.9] });
    let labels: Vec<f64> = (0..8).map(|i| (i % 3 == 0) as u8 as f64).collect();
    check(&store, |g, s| {
        let x = g.param(s, "x")?;
        let l = g.scale(x, 3.0);
        let bce = g.bce(l, labels.clone())?;
        let v = g.param(s, "v")?;
        let mu = g.param(s, "mu")?;
        let lb = g.param(s, "log_b")?;
        let rate = g.laplace_rate(v, mu, lb)?;
        Ok(g.weighted_sum(&[(bce, 1.0), (rate, 0.1)]))
    });
}

#[test]
fn grad_identity_is_exact() {
    let mut r = rng(27);
    let mut store = ParamStore::new();
    param_input(&mut store, &mut r, 4, 2);
    let pr = probe(&mut r, 4, 2);
    let rep = grad_check(&store, |g, s| {
        let x = g.param(s, "x")?;
        g.dot_const(x, pr.clone())
    }, &GradCheckOptions::default())
    .unwrap();
    assert!(rep.max_rel_error < 1e-9);
}

#[test]
fn permuted_input_gives_identical_output() {
    let mut r = rng(28);
    let x = random_tensor(&mut r, 50, 6, 1, 3);
    let mut coords: Vec<[i32; 3]> = x.coords.coords().to_vec();
    let mut feats: Vec<Vec<f64>> = (0..x.len()).map(|i| x.feats.row(i).to_vec()).collect();
    for i in (1..coords.len()).rev() {
        let j = r.gen_range(0..=i);
        coords.swap(i, j);
        feats.swap(i, j);
    }
    let xp = tensor_from_unsorted(coords, feats, 1).unwrap();
    assert_eq!(xp, x);
    let p = random_params(&mut r, Kernel::Cube3, 3, 4);
    let a = sparse_conv(&x, &p).unwrap();
    let b = sparse_conv(&xp, &p).unwrap();
    assert_eq!(a, b);
    let d = random_params(&mut r, Kernel::Down2, 4, 4);
    assert_eq!(sparse_conv(&a, &d).unwrap(), sparse_conv(&b, &d).unwrap());
}

#[test]
fn prune_to_keeps_target_rows() {
    let mut r = rng(29);
    let parent = random_tensor(&mut r, 4, 3, 2, 2);
    let up = generative_upconv(&parent, &random_params(&mut r, Kernel::Up2, 2, 2)).unwrap();
    let target = Arc::new(up.coords.select(&[0, 3, 5]));
    let mut g = Graph::new(GradMode::Off);
    let v = g.input(&up);
    let y = prune_to(&mut g, &v, &target).unwrap();
    assert_eq!(*y.coords, *target);
    assert_eq!(g.value(y.node).row(1), up.feats.row(3));
    let missing = Arc::new(CoordSet::new(vec![[101, 101, 101]], 1).unwrap());
    assert!(prune_to(&mut g, &v, &missing).is_err());
}
