use std::sync::Arc;

use share_core::numerics::{finite_difference, max_relative_error, Adjacency, Tape, Tensor, Var, DEFAULT_STEP};
use share_core::rng::Rng;
use share_core::spatial::{
    attention_proximity, cxtconv_layer, latent_pool, scconv, scconv_unpool, soft_assignment, CxtConvLayer,
    LatentScaling, SCConvBlock,
};
use share_core::temporal::{gru_cell, predict_head, GruParams};
use share_core::Result;

fn mat(rows: usize, cols: usize, v: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, v.to_vec()).unwrap()
}

fn random(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
}

fn eye(n: usize) -> Tensor {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    mat(n, n, &v)
}

fn graph(lists: &[Vec<usize>]) -> Arc<Adjacency> {
    Arc::new(Adjacency::from_lists(lists, lists.len()).unwrap())
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.2 * v
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn identical_neighbors_get_uniform_attention() {
    let adj = graph(&[vec![0, 1, 2], vec![0, 1], vec![0, 2]]);
    let mut tape = Tape::new();
    let x = tape.constant(mat(3, 2, &[0.3, -0.7, 0.3, -0.7, 0.3, -0.7]));
    let w = tape.constant(mat(2, 2, &[1.0, 2.0, -1.0, 0.5]));
    let a = attention_proximity(&mut tape, w, x, &adj).unwrap();
    close(tape.value(a).data(), &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.5, 0.5, 0.5, 0.5], 1e-15);
}

#[test]
fn singleton_neighborhood_has_weight_one() {
    let adj = graph(&[vec![0], vec![1]]);
    let mut tape = Tape::new();
    let x = tape.constant(mat(2, 1, &[4.0, -3.0]));
    let w = tape.constant(mat(1, 1, &[2.0]));
    let a = attention_proximity(&mut tape, w, x, &adj).unwrap();
    assert_eq!(tape.value(a).data(), &[1.0, 1.0]);
}

#[test]
fn three_lot_attention_by_hand() {
    // q = x W_a with W_a = [[1, 0], [1, 1]]; x rows (1,0), (0,1), (1,1).
    let adj = graph(&[vec![0, 1, 2], vec![0, 1], vec![0, 2]]);
    let mut tape = Tape::new();
    let x = tape.constant(mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]));
    let w = tape.constant(mat(2, 2, &[1.0, 0.0, 1.0, 1.0]));
    let a = attention_proximity(&mut tape, w, x, &adj).unwrap();
    let q = [[1.0, 0.0], [1.0, 1.0], [2.0, 1.0]];
    let dot = |i: usize, j: usize| q[i][0] * q[j][0] + q[i][1] * q[j][1];
    let soft = |s: &[f64]| -> Vec<f64> {
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        s.iter().map(|v| v.exp() / z).collect()
    };
    let mut expect = soft(&[dot(0, 0), dot(0, 1), dot(0, 2)]);
    expect.extend(soft(&[dot(1, 0), dot(1, 1)]));
    expect.extend(soft(&[dot(2, 0), dot(2, 2)]));
    close(tape.value(a).data(), &expect, 1e-15);
}

#[test]
fn single_neighbor_identity_passes_features() {
    let adj = graph(&[vec![1], vec![0]]);
    let mut tape = Tape::new();
    let x = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let layer = CxtConvLayer { w_a: tape.constant(mat(2, 2, &[0.1, 0.2, 0.3, 0.4])), w_c: tape.constant(eye(2)) };
    let out = cxtconv_layer(&mut tape, &layer, x, &adj).unwrap();
    assert_eq!(tape.value(out).data(), &[3.0, 4.0, 1.0, 2.0]);
}

#[test]
fn zero_features_give_zero_output() {
    let adj = graph(&[vec![0, 1], vec![0, 1]]);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let mut rng = Rng::new(1);
    let layer = CxtConvLayer { w_a: tape.constant(random(&mut rng, 3, 2)), w_c: tape.constant(random(&mut rng, 3, 2)) };
    let out = cxtconv_layer(&mut tape, &layer, x, &adj).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn path_graph_convolution_by_hand() {
    // 0 - 1 - 2 - 3 with self-loops, scalar features, W_a = 1, W_c = -2.
    let adj = graph(&[vec![0, 1], vec![0, 1, 2], vec![1, 2, 3], vec![2, 3]]);
    let xs = [0.5, -1.0, 0.25, 1.5];
    let mut tape = Tape::new();
    let x = tape.constant(mat(4, 1, &xs));
    let layer = CxtConvLayer { w_a: tape.constant(mat(1, 1, &[1.0])), w_c: tape.constant(mat(1, 1, &[-2.0])) };
    let out = cxtconv_layer(&mut tape, &layer, x, &adj).unwrap();
    let expect: Vec<f64> = (0..4)
        .map(|i| {
            let nb = adj.neighbors(i);
            let z: f64 = nb.iter().map(|&j| (xs[i] * xs[j]).exp()).sum();
            leaky(nb.iter().map(|&j| (xs[i] * xs[j]).exp() / z * (-2.0 * xs[j])).sum())
        })
        .collect();
    close(tape.value(out).data(), &expect, 1e-14);
}

#[test]
fn cxtconv_is_permutation_equivariant() {
    let mut rng = Rng::new(3);
    let n = 7;
    let lists: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| i == j || (i + j) % 3 == 0).collect()).collect();
    let x = random(&mut rng, n, 3);
    let (wa, wc) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
    let run = |lists: &[Vec<usize>], x: Tensor| {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let layer = CxtConvLayer { w_a: tape.constant(wa.clone()), w_c: tape.constant(wc.clone()) };
        let out = cxtconv_layer(&mut tape, &layer, xv, &graph(lists)).unwrap();
        tape.value(out).clone()
    };
    let base = run(&lists, x.clone());

    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let plists: Vec<Vec<usize>> = perm
        .iter()
        .map(|&old| {
            let mut row: Vec<usize> = lists[old].iter().map(|&j| inv[j]).collect();
            row.sort_unstable();
            row
        })
        .collect();
    let px = Tensor::from_rows(&perm.iter().map(|&old| x.row(old).to_vec()).collect::<Vec<_>>()).unwrap();
    let out = run(&plists, px);
    for (new, &old) in perm.iter().enumerate() {
        close(out.row(new), base.row(old), 1e-12);
    }
}

#[test]
fn zero_assignment_weights_are_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(mat(3, 2, &[1.0, 2.0, -3.0, 0.5, 0.0, 9.0]));
    let block = SCConvBlock {
        w_s: tape.constant(Tensor::zeros(&[2, 4])),
        w_l: tape.constant(Tensor::zeros(&[2, 2])),
        scaling: LatentScaling::Raw,
    };
    let s = soft_assignment(&mut tape, &block, x).unwrap();
    assert!(tape.value(s).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn two_lot_assignment_by_hand() {
    let mut tape = Tape::new();
    let x = tape.constant(mat(2, 1, &[1.0, -2.0]));
    let block = SCConvBlock {
        w_s: tape.constant(mat(1, 2, &[0.5, -1.0])),
        w_l: tape.constant(Tensor::zeros(&[1, 1])),
        scaling: LatentScaling::Raw,
    };
    let s = soft_assignment(&mut tape, &block, x).unwrap();
    let row = |a: f64, b: f64| [a.exp() / (a.exp() + b.exp()), b.exp() / (a.exp() + b.exp())];
    let expect: Vec<f64> = row(0.5, -1.0).into_iter().chain(row(-1.0, 2.0)).collect();
    close(tape.value(s).data(), &expect, 1e-15);
}

/// `Σ_m Σ_n S[m][i] a[m][n] S[n][j]` by explicit loops.
fn triple_loop(s: &Tensor, adj: &Adjacency) -> Vec<f64> {
    let (n, k) = (s.rows(), s.cols());
    let a = adj.to_dense();
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            for m in 0..n {
                for q in 0..n {
                    out[i * k + j] += s.get(m, i) * a[m * n + q] * s.get(q, j);
                }
            }
        }
    }
    out
}

#[test]
fn single_latent_node_collapses_sums() {
    let adj = graph(&[vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::filled(&[3, 1], 1.0));
    let x = tape.constant(mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let (xs, alpha) = latent_pool(&mut tape, s, x, &adj).unwrap();
    assert_eq!(tape.value(xs).data(), &[9.0, 12.0]);
    assert_eq!(tape.value(alpha).data(), &[7.0]);
}

#[test]
fn hard_assignment_counts_cluster_edges() {
    let adj = graph(&[vec![0, 1, 3], vec![0, 1], vec![2, 3], vec![0, 2, 3]]);
    let members = [0, 0, 1, 1];
    let mut s = vec![0.0; 8];
    for (m, &c) in members.iter().enumerate() {
        s[m * 2 + c] = 1.0;
    }
    let mut tape = Tape::new();
    let sv = tape.constant(mat(4, 2, &s));
    let x = tape.constant(mat(4, 1, &[1.0, 2.0, 3.0, 4.0]));
    let (xs, alpha) = latent_pool(&mut tape, sv, x, &adj).unwrap();
    assert_eq!(tape.value(xs).data(), &[3.0, 7.0]);
    // Within cluster 0: 0-0, 0-1, 1-0, 1-1; across: 0->3 and 3->0.
    assert_eq!(tape.value(alpha).data(), &[4.0, 1.0, 1.0, 4.0]);
    assert_eq!(tape.value(alpha).data(), triple_loop(tape.value(sv), &adj).as_slice());
}

#[test]
fn latent_proximity_matches_triple_loop() {
    let mut rng = Rng::new(77);
    for _ in 0..200 {
        let n = 1 + rng.below(8);
        let k = 1 + rng.below(4);
        let lists: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).filter(|&j| i == j || rng.uniform() < 0.4).collect()).collect();
        let adj = graph(&lists);
        let mut tape = Tape::new();
        let logits = tape.constant(random(&mut rng, n, k));
        let s = tape.row_softmax(logits);
        let x = tape.constant(random(&mut rng, n, 2));
        let (_, alpha) = latent_pool(&mut tape, s, x, &adj).unwrap();
        let expect = triple_loop(tape.value(s), &adj);
        close(tape.value(alpha).data(), &expect, 1e-12);
    }
}

#[test]
fn single_latent_unpool_scales_by_proximity() {
    let mut tape = Tape::new();
    let xs = tape.constant(mat(1, 2, &[0.5, 1.5]));
    let alpha = tape.constant(mat(1, 1, &[3.0]));
    let s = tape.constant(mat(3, 1, &[0.2, 1.0, 0.7]));
    let block = SCConvBlock {
        w_s: tape.constant(Tensor::zeros(&[2, 1])),
        w_l: tape.constant(eye(2)),
        scaling: LatentScaling::Raw,
    };
    let out = scconv_unpool(&mut tape, &block, xs, alpha, s).unwrap();
    let expect: Vec<f64> = [0.2, 1.0, 0.7].iter().flat_map(|&si| [si * 3.0 * 0.5, si * 3.0 * 1.5]).collect();
    close(tape.value(out).data(), &expect, 1e-15);
}

#[test]
fn zero_latent_features_unpool_to_zero() {
    let mut tape = Tape::new();
    let xs = tape.constant(Tensor::zeros(&[2, 3]));
    let alpha = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let s = tape.constant(mat(2, 2, &[0.5, 0.5, 0.1, 0.9]));
    let block = SCConvBlock {
        w_s: tape.constant(Tensor::zeros(&[3, 2])),
        w_l: tape.constant(Tensor::filled(&[3, 3], 0.7)),
        scaling: LatentScaling::Raw,
    };
    let out = scconv_unpool(&mut tape, &block, xs, alpha, s).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn six_lot_three_latent_pipeline_by_hand() {
    let mut rng = Rng::new(21);
    let (n, k, d): (usize, usize, usize) = (6, 3, 2);
    let lists: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| i.abs_diff(j) <= 1).collect()).collect();
    let adj = graph(&lists);
    let x = random(&mut rng, n, d);
    let ws = random(&mut rng, d, k);
    let wl = random(&mut rng, d, d);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let block =
        SCConvBlock { w_s: tape.constant(ws.clone()), w_l: tape.constant(wl.clone()), scaling: LatentScaling::Raw };
    let out = scconv(&mut tape, &block, xv, &adj).unwrap();

    // Straight-line evaluation with plain arrays.
    let mut s = vec![[0.0; 3]; n];
    for i in 0..n {
        let logits: Vec<f64> = (0..k).map(|c| (0..d).map(|f| x.get(i, f) * ws.get(f, c)).sum()).collect();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for c in 0..k {
            s[i][c] = logits[c].exp() / z;
        }
    }
    let mut xs = vec![[0.0; 2]; k];
    for c in 0..k {
        for f in 0..d {
            xs[c][f] = (0..n).map(|i| s[i][c] * x.get(i, f)).sum();
        }
    }
    let mut alpha = vec![[0.0; 3]; k];
    for a in 0..k {
        for b in 0..k {
            for m in 0..n {
                for &q in &lists[m] {
                    alpha[a][b] += s[m][a] * s[q][b];
                }
            }
        }
    }
    let mut latent = vec![[0.0; 2]; k];
    for a in 0..k {
        for f in 0..d {
            let mut acc = 0.0;
            for b in 0..k {
                let v: f64 = (0..d).map(|g| xs[b][g] * wl.get(g, f)).sum();
                acc += alpha[a][b] * v;
            }
            latent[a][f] = leaky(acc);
        }
    }
    let mut expect = Vec::with_capacity(n * d);
    for i in 0..n {
        for f in 0..d {
            expect.push((0..k).map(|c| s[i][c] * latent[c][f]).sum::<f64>());
        }
    }
    close(tape.value(out).data(), &expect, 1e-12);
}

#[test]
fn normalized_pooling_rows_are_means() {
    let adj = graph(&[vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::filled(&[3, 1], 1.0));
    let x = tape.constant(mat(3, 1, &[1.0, 2.0, 6.0]));
    let (xs, alpha) = share_core::spatial::latent_pool_normalized(&mut tape, s, x, &adj).unwrap();
    assert_eq!(tape.value(xs).data(), &[3.0]);
    assert_eq!(tape.value(alpha).data(), &[1.0]);
}

// ---- gradients of composed layers ----

fn layer_gradcheck(name: &str, inputs: Vec<Tensor>, build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
    let loss_of = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let out = build(tape, vars)?;
        let sq = tape.mul(out, out)?;
        let t = tape.tanh(sq);
        Ok(tape.sum(t))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = loss_of(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|&v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).len()], |g| g.data().to_vec()))
        .collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = finite_difference(
        |x| {
            let mut tape = Tape::new();
            let mut off = 0;
            let vars: Vec<Var> = inputs
                .iter()
                .map(|t| {
                    let v = Tensor::new(t.shape().to_vec(), x[off..off + t.len()].to_vec()).unwrap();
                    off += t.len();
                    tape.leaf(v, true)
                })
                .collect();
            let l = loss_of(&mut tape, &vars)?;
            Ok(tape.value(l).item())
        },
        &flat,
        DEFAULT_STEP,
    )
    .unwrap();
    // Central differences on an O(1) objective carry ~1e-10 rounding noise,
    // so gradients below 1e-5 are compared on that absolute scale.
    let err = max_relative_error(&analytic, &numeric, 1e-5);
    assert!(err < 1e-4, "{name}: {err:e}");
}

#[test]
fn spatial_layer_gradients() {
    let mut rng = Rng::new(8);
    let n: usize = 6;
    let lists: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| i.abs_diff(j) <= 2).collect()).collect();
    let adj = graph(&lists);
    let a1 = adj.clone();
    layer_gradcheck(
        "cxtconv",
        vec![random(&mut rng, n, 3), random(&mut rng, 3, 4), random(&mut rng, 3, 4)],
        move |t, v| cxtconv_layer(t, &CxtConvLayer { w_a: v[1], w_c: v[2] }, v[0], &a1),
    );
    for scaling in [LatentScaling::Raw, LatentScaling::Normalized] {
        let a2 = adj.clone();
        layer_gradcheck(
            "scconv",
            vec![random(&mut rng, n, 3), random(&mut rng, 3, 2), random(&mut rng, 3, 3)],
            move |t, v| scconv(t, &SCConvBlock { w_s: v[1], w_l: v[2], scaling }, v[0], &a2),
        );
    }
}

// ---- temporal module ----

fn gru_on_tape(tape: &mut Tape, w: [Tensor; 3], b: [Tensor; 3]) -> GruParams {
    let [w_r, w_z, w_h] = w.map(|t| tape.constant(t));
    let [b_r, b_z, b_h] = b.map(|t| tape.constant(t));
    GruParams { w_r, w_z, w_h, b_r, b_z, b_h }
}

#[test]
fn closed_update_gate_keeps_state() {
    let mut rng = Rng::new(4);
    let mut tape = Tape::new();
    let p = gru_on_tape(
        &mut tape,
        [random(&mut rng, 5, 2), random(&mut rng, 5, 2), random(&mut rng, 5, 2)],
        [Tensor::zeros(&[2]), Tensor::filled(&[2], -1e3), Tensor::zeros(&[2])],
    );
    let h = tape.constant(mat(1, 2, &[0.3, -0.6]));
    let x = tape.constant(mat(1, 3, &[1.0, 0.5, -0.5]));
    let out = gru_cell(&mut tape, &p, h, x).unwrap();
    close(tape.value(out).data(), &[0.3, -0.6], 1e-12);
}

#[test]
fn zero_weights_halve_the_state() {
    let mut tape = Tape::new();
    let p = gru_on_tape(
        &mut tape,
        [Tensor::zeros(&[4, 2]), Tensor::zeros(&[4, 2]), Tensor::zeros(&[4, 2])],
        [Tensor::zeros(&[2]), Tensor::zeros(&[2]), Tensor::zeros(&[2])],
    );
    let h = tape.constant(mat(1, 2, &[0.8, -0.4]));
    let x = tape.constant(mat(1, 2, &[3.0, 1.0]));
    let out = gru_cell(&mut tape, &p, h, x).unwrap();
    assert_eq!(tape.value(out).data(), &[0.4, -0.2]);
}

#[test]
fn two_unit_cell_by_hand() {
    let wr = mat(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
    let wz = mat(3, 2, &[0.2, 0.1, -0.1, 0.3, 0.4, -0.2]);
    let wh = mat(3, 2, &[-0.3, 0.5, 0.2, -0.1, 0.6, 0.3]);
    let (br, bz, bh) = ([0.05, -0.05], [0.1, 0.0], [0.0, 0.2]);
    let hp = [0.5, -0.25];
    let xv = 0.8;
    let mut tape = Tape::new();
    let p = gru_on_tape(
        &mut tape,
        [wr.clone(), wz.clone(), wh.clone()],
        [Tensor::vector(br.to_vec()), Tensor::vector(bz.to_vec()), Tensor::vector(bh.to_vec())],
    );
    let h = tape.constant(mat(1, 2, &hp));
    let x = tape.constant(mat(1, 1, &[xv]));
    let out = gru_cell(&mut tape, &p, h, x).unwrap();

    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let lin = |w: &Tensor, inp: [f64; 3], c: usize| (0..3).map(|r| inp[r] * w.get(r, c)).sum::<f64>();
    let hx = [hp[0], hp[1], xv];
    let r: Vec<f64> = (0..2).map(|c| sig(lin(&wr, hx, c) + br[c])).collect();
    let z: Vec<f64> = (0..2).map(|c| sig(lin(&wz, hx, c) + bz[c])).collect();
    let rhx = [r[0] * hp[0], r[1] * hp[1], xv];
    let cand: Vec<f64> = (0..2).map(|c| (lin(&wh, rhx, c) + bh[c]).tanh()).collect();
    let expect: Vec<f64> = (0..2).map(|c| (1.0 - z[c]) * hp[c] + z[c] * cand[c]).collect();
    close(tape.value(out).data(), &expect, 1e-15);
}

#[test]
fn head_examples() {
    let mut tape = Tape::new();
    let h = tape.constant(mat(2, 3, &[0.1, 0.2, 0.3, -1.0, 0.0, 1.0]));
    let zero_w = tape.constant(Tensor::zeros(&[3, 2]));
    let out = predict_head(&mut tape, zero_w, h).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.5));

    let zero_h = tape.constant(Tensor::zeros(&[1, 3]));
    let w = tape.constant(mat(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]));
    let out = predict_head(&mut tape, w, zero_h).unwrap();
    assert_eq!(tape.value(out).data(), &[0.5, 0.5]);

    let out = predict_head(&mut tape, w, h).unwrap();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let expect = [sig(0.1 + 0.1 + 0.9), sig(-0.2 + 0.0 + 0.3), sig(-1.0 + 0.0 + 3.0), sig(2.0 + 0.0 + 1.0)];
    close(tape.value(out).data(), &expect, 1e-15);
}

#[test]
fn gru_gradients_and_credit_reaches_first_step() {
    let mut rng = Rng::new(12);
    let (h, xw) = (3, 2);
    let inputs = vec![
        random(&mut rng, h + xw, h),
        random(&mut rng, h + xw, h),
        random(&mut rng, h + xw, h),
        Tensor::vector(vec![0.1, -0.1, 0.2]),
        Tensor::vector(vec![0.0, 0.3, -0.2]),
        Tensor::vector(vec![0.05, 0.0, -0.05]),
        random(&mut rng, 2, h),
        random(&mut rng, 2, xw),
        random(&mut rng, 2, xw),
    ];
    let unroll = |t: &mut Tape, v: &[Var]| -> Result<Var> {
        let p = GruParams { w_r: v[0], w_z: v[1], w_h: v[2], b_r: v[3], b_z: v[4], b_h: v[5] };
        let h1 = gru_cell(t, &p, v[6], v[7])?;
        gru_cell(t, &p, h1, v[8])
    };
    layer_gradcheck("gru", inputs.clone(), unroll);

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let p = GruParams { w_r: vars[0], w_z: vars[1], w_h: vars[2], b_r: vars[3], b_z: vars[4], b_h: vars[5] };
    let zero = tape.constant(Tensor::zeros(&[2, h]));
    let mut state = zero;
    let first = vars[7];
    for step in 0..5 {
        let x = if step == 0 { first } else { vars[8] };
        state = gru_cell(&mut tape, &p, state, x).unwrap();
    }
    let loss = tape.sum(state);
    tape.backward(loss).unwrap();
    assert!(tape.grad(first).unwrap().data().iter().any(|&g| g.abs() > 1e-8));
    assert!(tape.value(state).data().iter().all(|v| v.abs() < 1.0));
}
