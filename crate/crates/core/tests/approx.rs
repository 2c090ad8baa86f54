use std::sync::Arc;

use share_core::approx::{
    discretize_pa, entropy, entropy_of, fuse, fuse_distributions, pa_bin, propconv, temporal_pa_distribution,
};
use share_core::numerics::{finite_difference, max_relative_error, Adjacency, Tape, Tensor, Var, DEFAULT_STEP};
use share_core::rng::Rng;
use share_core::Error;

fn mat(rows: usize, cols: usize, v: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, v.to_vec()).unwrap()
}

fn onehot(bins: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; bins];
    v[at] = 1.0;
    v
}

fn random_simplex(rng: &mut Rng, p: usize, sharpness: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| (sharpness * rng.normal()).exp()).collect();
    let t: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / t).collect()
}

fn assert_simplex(v: &[f64]) {
    assert!(v.iter().all(|&x| x >= 0.0), "{v:?}");
    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{v:?}");
}

#[test]
fn discretize_examples() {
    assert_eq!(discretize_pa(0, 100, 50).unwrap(), onehot(50, 0));
    assert_eq!(discretize_pa(100, 100, 50).unwrap(), onehot(50, 49));
    assert_eq!(discretize_pa(50, 100, 50).unwrap(), onehot(50, 25));
    assert!(matches!(discretize_pa(-1, 100, 50), Err(Error::PaOutsideCapacity { .. })));
    assert!(matches!(discretize_pa(101, 100, 50), Err(Error::PaOutsideCapacity { .. })));
    // Absolute binning scales by the city maximum instead of the lot.
    assert_eq!(pa_bin(50, 100, 400, 50).unwrap(), 6);
}

fn run_propconv(
    features: Tensor,
    w_a: Tensor,
    lists: &[Vec<usize>],
    observed: Tensor,
    labeled: &[bool],
) -> share_core::Result<Tensor> {
    let adj = Arc::new(Adjacency::from_lists(lists, lists.len())?);
    let mut tape = Tape::new();
    let x = tape.constant(features);
    let w = tape.constant(w_a);
    let y = tape.constant(observed);
    let out = propconv(&mut tape, w, x, &adj, y, labeled)?;
    Ok(tape.value(out).clone())
}

#[test]
fn single_source_copies_its_one_hot() {
    let obs: Vec<f64> = [vec![0.0; 4], onehot(4, 2)].concat();
    let out =
        run_propconv(mat(2, 1, &[0.3, 0.9]), mat(1, 1, &[1.0]), &[vec![1], vec![]], mat(2, 4, &obs), &[false, true])
            .unwrap();
    assert_eq!(out.row(0), onehot(4, 2).as_slice());
    // The lone sensor has nobody to learn from and falls back to uniform.
    assert_eq!(out.row(1), &[0.25; 4]);
}

#[test]
fn equal_logits_split_evenly() {
    let mut obs = vec![0.0; 3 * 8];
    obs[8 + 3] = 1.0;
    obs[16 + 5] = 1.0;
    let out = run_propconv(
        mat(3, 1, &[1.0, 0.5, 0.5]),
        mat(1, 1, &[1.0]),
        &[vec![1, 2], vec![2], vec![1]],
        mat(3, 8, &obs),
        &[false, true, true],
    )
    .unwrap();
    let mut expect = vec![0.0; 8];
    expect[3] = 0.5;
    expect[5] = 0.5;
    assert_eq!(out.row(0), expect.as_slice());
}

#[test]
fn four_lot_propagation_by_hand() {
    // Lots 2 and 3 are sensors; q = x W_a with scalar W_a = 0.5.
    let xs = [1.0, -0.4, 0.8, 2.0];
    let bins = 3;
    let obs: Vec<f64> = [vec![0.0; 3], vec![0.0; 3], onehot(bins, 0), onehot(bins, 2)].concat();
    let lists = [vec![2, 3], vec![2, 3], vec![3], vec![2]];
    let out = run_propconv(mat(4, 1, &xs), mat(1, 1, &[0.5]), &lists, mat(4, bins, &obs), &[false, false, true, true])
        .unwrap();
    let q: Vec<f64> = xs.iter().map(|x| 0.5 * x).collect();
    for i in 0..2 {
        let e2 = (q[i] * q[2]).exp();
        let e3 = (q[i] * q[3]).exp();
        let a2 = e2 / (e2 + e3);
        let expect = [a2, 0.0, 1.0 - a2];
        for (o, e) in out.row(i).iter().zip(expect) {
            assert!((o - e).abs() < 1e-15);
        }
    }
    assert_eq!(out.row(2), onehot(bins, 2).as_slice());
    assert_eq!(out.row(3), onehot(bins, 0).as_slice());
}

#[test]
fn unlabeled_lot_without_sources_is_an_error() {
    let err = run_propconv(
        mat(2, 1, &[0.0, 0.0]),
        mat(1, 1, &[1.0]),
        &[vec![], vec![]],
        Tensor::zeros(&[2, 2]),
        &[false, true],
    );
    assert!(matches!(err, Err(Error::EmptyPropagationSet(0))));
}

#[test]
fn temporal_head_examples() {
    let mut tape = Tape::new();
    let h = tape.constant(mat(2, 2, &[0.3, -1.0, 2.0, 0.5]));
    let zero_w = tape.constant(Tensor::zeros(&[2, 5]));
    let d = temporal_pa_distribution(&mut tape, zero_w, h).unwrap();
    assert!(tape.value(d).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));

    let zero_h = tape.constant(Tensor::zeros(&[1, 2]));
    let w = tape.constant(mat(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
    let d = temporal_pa_distribution(&mut tape, w, zero_h).unwrap();
    assert!(tape.value(d).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

    let one = tape.constant(mat(1, 2, &[0.5, 2.0]));
    let d = temporal_pa_distribution(&mut tape, w, one).unwrap();
    let logits = [0.5 - 2.0, 1.0, 1.5 + 2.0];
    let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
    for (got, l) in tape.value(d).data().iter().zip(logits) {
        assert!((got - l.exp() / z).abs() < 1e-15);
    }
}

#[test]
fn entropy_examples() {
    assert_eq!(entropy_of(&onehot(5, 3)), 0.0);
    assert!((entropy_of(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    let direct = -(0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    assert!((entropy_of(&[0.9, 0.1]) - direct).abs() < 1e-15);
    assert!((direct - 0.3251).abs() < 1e-4);

    let mut tape = Tape::new();
    let d = tape.constant(mat(2, 2, &[0.9, 0.1, 1.0, 0.0]));
    let h = entropy(&mut tape, d).unwrap();
    assert!((tape.value(h).data()[0] - direct).abs() < 1e-15);
    assert_eq!(tape.value(h).data()[1], 0.0);
}

#[test]
fn fusion_examples() {
    let (fused, ws, wt) = fuse_distributions(&[1.0, 0.0], &[0.5, 0.5]);
    assert_eq!(ws, 1.0);
    assert!((wt - 0.5).abs() < 1e-15);
    assert!((fused[0] - 5.0 / 6.0).abs() < 1e-12 && (fused[1] - 1.0 / 6.0).abs() < 1e-12);

    let d = [0.2, 0.3, 0.5];
    let (same, _, _) = fuse_distributions(&d, &d);
    for (a, b) in same.iter().zip(d) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn fusion_invariants_on_random_pairs() {
    let mut rng = Rng::new(44);
    for _ in 0..2000 {
        let p = 2 + rng.below(20);
        let (sa, sb) = (rng.range(0.1, 4.0), rng.range(0.1, 4.0));
        let a = random_simplex(&mut rng, p, sa);
        let b = random_simplex(&mut rng, p, sb);
        let (ab, wa, wb) = fuse_distributions(&a, &b);
        let (ba, _, _) = fuse_distributions(&b, &a);
        assert_simplex(&ab);
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x - y).abs() < 1e-15, "fusion must commute");
        }
        let (ha, hb) = (entropy_of(&a), entropy_of(&b));
        assert!(entropy_of(&ab) <= ha.max(hb) + 2f64.ln() + 1e-12);
        if ha < hb {
            assert!(wa > wb);
        } else if hb < ha {
            assert!(wb > wa);
        }
    }
}

#[test]
fn tape_fusion_matches_plain_and_stays_on_simplex() {
    let mut rng = Rng::new(5);
    let (n, p) = (7, 6);
    let a: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut rng, p, 2.0)).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut rng, p, 0.5)).collect();
    let mut tape = Tape::new();
    let av = tape.constant(Tensor::from_rows(&a).unwrap());
    let bv = tape.constant(Tensor::from_rows(&b).unwrap());
    let f = fuse(&mut tape, av, bv).unwrap();
    for i in 0..n {
        let (plain, _, _) = fuse_distributions(&a[i], &b[i]);
        let row = tape.value(f).row(i);
        assert_simplex(row);
        for (x, y) in row.iter().zip(&plain) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn approximation_gradients_match_finite_differences() {
    // Cross entropy of a one-hot target against fuse(propconv, temporal head).
    let mut rng = Rng::new(17);
    let (n, m, d, p) = (5, 3, 4, 6);
    let lists = vec![vec![1, 3], vec![3], vec![1, 3, 4], vec![1, 4], vec![1, 3]];
    let labeled = [false, true, false, true, true];
    let adj = Arc::new(Adjacency::from_lists(&lists, n).unwrap());
    let mut obs = vec![0.0; n * p];
    for i in 0..n {
        if labeled[i] {
            obs[i * p + rng.below(p)] = 1.0;
        }
    }
    let obs = mat(n, p, &obs);
    let target = mat(n, p, &(0..n).flat_map(|_| onehot(p, rng.below(p))).collect::<Vec<_>>());
    let x = mat(n, m, &(0..n * m).map(|_| rng.range(-1.0, 1.0)).collect::<Vec<_>>());
    let inputs = [
        mat(m, d, &(0..m * d).map(|_| rng.range(-1.0, 1.0)).collect::<Vec<_>>()),
        mat(n, d, &(0..n * d).map(|_| rng.range(-1.0, 1.0)).collect::<Vec<_>>()),
        mat(d, p, &(0..d * p).map(|_| rng.range(-1.0, 1.0)).collect::<Vec<_>>()),
    ];

    let loss = |tape: &mut Tape, v: &[Var]| -> share_core::Result<Var> {
        let xv = tape.constant(x.clone());
        let yv = tape.constant(obs.clone());
        let sp = propconv(tape, v[0], xv, &adj, yv, &labeled)?;
        let tp = temporal_pa_distribution(tape, v[2], v[1])?;
        let fused = fuse(tape, sp, tp)?;
        let logs = tape.log(fused, 1e-12)?;
        let t = tape.constant(target.clone());
        let terms = tape.mul(logs, t)?;
        let s = tape.sum(terms);
        Ok(tape.scale(s, -1.0))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let l = loss(&mut tape, &vars).unwrap();
    tape.backward(l).unwrap();
    let analytic: Vec<f64> = vars.iter().flat_map(|&v| tape.grad(v).unwrap().data().to_vec()).collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = finite_difference(
        |z| {
            let mut tape = Tape::new();
            let mut off = 0;
            let vars: Vec<Var> = inputs
                .iter()
                .map(|t| {
                    let v = Tensor::new(t.shape().to_vec(), z[off..off + t.len()].to_vec()).unwrap();
                    off += t.len();
                    tape.leaf(v, true)
                })
                .collect();
            let l = loss(&mut tape, &vars)?;
            Ok(tape.value(l).item())
        },
        &flat,
        DEFAULT_STEP,
    )
    .unwrap();
    let err = max_relative_error(&analytic, &numeric, 1e-5);
    assert!(err < 1e-4, "relative error {err:e}");
}
