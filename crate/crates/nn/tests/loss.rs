use weavematch_autodiff::{Tape, Tensor, Var};
use weavematch_core::{is_stable, Dataset, DatasetSpec, Matching, PreferenceInstance, Setting};
use weavematch_nn::{
    composite, loss_b, loss_f, loss_m_cosine, loss_m_euclidean, loss_s, score_tensors, LossKind, LossWeights,
    MatrixLoss, ScoreConsts,
};

const C_MIN: f64 = 0.1;

fn mat(t: &mut Tape<f64>, shape: &[usize], data: &[f64]) -> Var {
    t.constant(Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
}

fn value(t: &Tape<f64>, v: Var) -> f64 {
    t.value(v).item()
}

fn one_hot(perms: &[Vec<usize>]) -> Tensor<f64> {
    let n = perms[0].len();
    let mut data = vec![0.0; perms.len() * n * n];
    for (b, p) in perms.iter().enumerate() {
        for (i, &j) in p.iter().enumerate() {
            data[(b * n + i) * n + j] = 1.0;
        }
    }
    Tensor::new(vec![perms.len(), n, n], data).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Stability loss of each one-hot matching of `inst`.
fn ls_per_matching(inst: &PreferenceInstance, perms: &[Vec<usize>]) -> Vec<f64> {
    let (sa, sb) = score_tensors::<f64>(&[inst.clone()], C_MIN).unwrap();
    perms
        .iter()
        .map(|p| {
            let mut t = Tape::new();
            let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
            let m = t.constant(one_hot(&[p.clone()]));
            let l = loss_s(&mut t, m, &c).unwrap();
            value(&t, l)
        })
        .collect()
}

#[test]
fn cosine_examples() {
    let mut t = Tape::<f64>::new();
    let eye = mat(&mut t, &[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let anti = mat(&mut t, &[1, 2, 2], &[0.0, 1.0, 1.0, 0.0]);
    let flat = mat(&mut t, &[1, 2, 2], &[0.5, 0.5, 0.5, 0.5]);
    let l = loss_m_cosine(&mut t, eye, eye).unwrap();
    assert_eq!(value(&t, l), 0.0);
    let l = loss_m_cosine(&mut t, eye, anti).unwrap();
    assert!((value(&t, l) - 1.0).abs() < 1e-12);
    let l = loss_m_cosine(&mut t, eye, flat).unwrap();
    assert!((value(&t, l) - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-9);
    let zero = mat(&mut t, &[1, 2, 2], &[0.0, 0.0, 1.0, 1.0]);
    assert!(loss_m_cosine(&mut t, zero, eye).is_err());
}

#[test]
fn cosine_is_zero_for_transpose_consistent_softmaxes() {
    let mut t = Tape::<f64>::new();
    let logits = mat(&mut t, &[2, 3, 3], &[0.3, -1.0, 2.0, 0.1, 0.0, 0.5, 1.5, 1.5, -0.2, 0.3, -1.0, 2.0, 0.1, 0.0, 0.5, 1.5, 1.5, -0.2]);
    // a rank-one positive matrix has proportional rows and columns.
    let u = [1.0, 2.0, 0.5];
    let v = [0.2, 1.0, 3.0];
    let outer: Vec<f64> = (0..2).flat_map(|_| (0..9).map(|k| u[k / 3] * v[k % 3])).collect();
    let p = mat(&mut t, &[2, 3, 3], &outer);
    let pt = t.swap_axes(p, 1).unwrap();
    let l = loss_m_cosine(&mut t, p, pt).unwrap();
    assert!(value(&t, l).abs() < 1e-12);
    let ma = t.softmax_last(logits).unwrap();
    let lt = t.swap_axes(logits, 1).unwrap();
    let mb = t.softmax_last(lt).unwrap();
    let l = loss_m_cosine(&mut t, ma, mb).unwrap();
    let v = value(&t, l);
    assert!((0.0..=1.0).contains(&v));
}

#[test]
fn euclidean_examples() {
    let mut t = Tape::<f64>::new();
    let eye = mat(&mut t, &[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let anti = mat(&mut t, &[1, 2, 2], &[0.0, 1.0, 1.0, 0.0]);
    let l = loss_m_euclidean(&mut t, eye, eye).unwrap();
    assert_eq!(value(&t, l), 0.0);
    let l = loss_m_euclidean(&mut t, eye, anti).unwrap();
    assert!((value(&t, l) - 4.0).abs() < 1e-12);
}

#[test]
fn stability_hand_value() {
    // both sides put partner 0 first; the matching pairs a0-b1 and a1-b0.
    let inst = PreferenceInstance::new(vec![vec![0, 1]; 2], vec![vec![0, 1]; 2]).unwrap();
    let v = ls_per_matching(&inst, &[vec![1, 0], vec![0, 1]]);
    assert!((v[0] - 0.2025).abs() < 1e-9, "{}", v[0]);
    assert_eq!(v[1], 0.0);
}

#[test]
fn stability_is_zero_exactly_on_stable_one_hot_matchings() {
    for n in 1..=5 {
        let perms = permutations(n);
        let ds = Dataset::new(DatasetSpec::named(Setting::UU, n, 40 + n as u64, 6, None).unwrap()).unwrap();
        for inst in ds.instances() {
            for (p, l) in perms.iter().zip(ls_per_matching(&inst, &perms)) {
                let stable = is_stable(&inst, &Matching::from_permutation(p).unwrap());
                assert_eq!(stable, l == 0.0, "n={n} perm={p:?} ls={l}");
                assert!(l >= 0.0);
            }
        }
    }
}

#[test]
fn stability_grows_with_mass_on_rivals() {
    // a0-b1 / a1-b0 blocks through (a0, b0); moving mass from a0's stable
    // choice b0 onto its worse choice b1 can only raise the penalty.
    let inst = PreferenceInstance::new(vec![vec![0, 1]; 2], vec![vec![0, 1]; 2]).unwrap();
    let (sa, sb) = score_tensors::<f64>(&[inst], C_MIN).unwrap();
    let mut last = -1.0;
    for k in 0..=10 {
        let x = k as f64 / 10.0;
        let mut t = Tape::new();
        let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
        let m = mat(&mut t, &[1, 2, 2], &[1.0 - x, x, x, 1.0 - x]);
        let l = loss_s(&mut t, m, &c).unwrap();
        let v = value(&t, l);
        assert!(v >= last, "{v} < {last} at {x}");
        last = v;
    }
}

#[test]
fn fairness_and_balance_hand_values() {
    let list: Vec<usize> = (0..3).collect();
    let inst = PreferenceInstance::new(vec![list.clone(); 3], vec![list; 3]).unwrap();
    let (sa, sb) = score_tensors::<f64>(&[inst.clone()], C_MIN).unwrap();
    let mut t = Tape::new();
    let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
    let m = t.constant(one_hot(&[vec![0, 1, 2]]));
    let f = loss_f(&mut t, m, &c).unwrap();
    let b = loss_b(&mut t, m, &c).unwrap();
    assert!(value(&t, f).abs() < 1e-12);
    assert!((value(&t, b) + 0.4).abs() < 1e-12);

    // swapping sides leaves the fairness gap unchanged.
    let uneven = PreferenceInstance::new(vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 1, 0]], vec![vec![2, 1, 0]; 3]).unwrap();
    let p = vec![0, 1, 2];
    let gap = |inst: &PreferenceInstance, perm: &[usize]| {
        let (sa, sb) = score_tensors::<f64>(&[inst.clone()], C_MIN).unwrap();
        let mut t = Tape::new();
        let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
        let m = t.constant(one_hot(&[perm.to_vec()]));
        let f = loss_f(&mut t, m, &c).unwrap();
        let b = loss_b(&mut t, m, &c).unwrap();
        (value(&t, f), value(&t, b))
    };
    let (f1, b1) = gap(&uneven, &p);
    let (f2, _) = gap(&uneven.swapped().unwrap(), &p);
    assert!(f1 > 0.0);
    assert!((f1 - f2).abs() < 1e-12);
    assert!(b1 >= -1.0);
}

fn composite_on(kind: LossKind, w: &LossWeights) -> (f64, f64, f64, f64) {
    let ds = Dataset::new(DatasetSpec::named(Setting::UU, 4, 3, 3, None).unwrap()).unwrap();
    let insts: Vec<_> = ds.instances().collect();
    let (sa, sb) = score_tensors::<f64>(&insts, C_MIN).unwrap();
    let mut t = Tape::new();
    let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
    let logits = t.constant(Tensor::from_fn(vec![3, 4, 4], |k| ((k as f64) * 0.7).sin() * 2.0));
    let terms = composite(&mut t, kind, MatrixLoss::Cosine, logits, &c, w).unwrap();
    let br = terms.breakdown(&t);
    (br.lm, br.ls, br.lf_or_lb, br.total)
}

#[test]
fn composite_combinations() {
    let w = LossWeights::default();
    for kind in [LossKind::Sm, LossKind::Fsm, LossKind::Bsm] {
        let (lm, ls, fair, total) = composite_on(kind, &w);
        let lambda = match kind {
            LossKind::Sm => 0.0,
            LossKind::Fsm => w.lambda_f,
            LossKind::Bsm => w.lambda_b,
        };
        assert!((total - (w.lambda_m * lm + w.lambda_s * ls + lambda * fair)).abs() < 1e-12);
    }
    let no_f = LossWeights { lambda_f: 0.0, ..w };
    assert_eq!(composite_on(LossKind::Fsm, &no_f).3, composite_on(LossKind::Sm, &no_f).3);
    let zero = LossWeights { lambda_m: 0.0, lambda_s: 0.0, lambda_f: 0.0, lambda_b: 0.0 };
    assert_eq!(composite_on(LossKind::Bsm, &zero).3, 0.0);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let ds = Dataset::new(DatasetSpec::named(Setting::UU, 3, 9, 2, None).unwrap()).unwrap();
    let insts: Vec<_> = ds.instances().collect();
    let (sa, sb) = score_tensors::<f64>(&insts, C_MIN).unwrap();
    let logits = Tensor::from_fn(vec![2, 3, 3], |k| ((k as f64 + 0.5) * 1.3).cos());
    for kind in [LossKind::Sm, LossKind::Fsm, LossKind::Bsm] {
        for matrix in [MatrixLoss::Cosine, MatrixLoss::Euclidean] {
            let eval = |x: &Tensor<f64>, var: bool| {
                let mut t = Tape::new();
                let c = ScoreConsts::new(&mut t, &sa, &sb).unwrap();
                let l = if var { t.variable(x.clone()) } else { t.constant(x.clone()) };
                let terms = composite(&mut t, kind, matrix, l, &c, &LossWeights::default()).unwrap();
                let g = if var { Some(t.backward(terms.total).unwrap().wrt(l).unwrap().clone()) } else { None };
                (t.value(terms.total).item(), g)
            };
            let g = eval(&logits, true).1.unwrap();
            for k in 0..logits.numel() {
                let h = 1e-6;
                let mut p = logits.clone();
                p.data_mut()[k] += h;
                let mut q = logits.clone();
                q.data_mut()[k] -= h;
                let num = (eval(&p, false).0 - eval(&q, false).0) / (2.0 * h);
                let a = g.data()[k];
                assert!((a - num).abs() <= 1e-4 * a.abs().max(num.abs()).max(1e-3), "{kind:?}/{matrix:?} {k}: {a} vs {num}");
            }
        }
    }
}
