use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weavematch_autodiff::Tensor;
use weavematch_core::{CostKind, Dataset, DatasetSpec, PreferenceInstance, Setting};
use weavematch_eval::{network_logits, run_benchmark, solve, Binarize, EvalError, Method};
use weavematch_nn::{evaluate_validation, LossKind, ModelConfig, TrainConfig, WeaveNet};

fn uu(n: usize, seed: u64, count: usize) -> Vec<(u64, PreferenceInstance)> {
    let ds = Dataset::new(DatasetSpec::named(Setting::UU, n, seed, count, None).unwrap()).unwrap();
    ds.instances().enumerate().map(|(k, i)| (k as u64, i)).collect()
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wm-bench-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// An untrained network with scrambled weights, saved to disk.
fn saved_net(dir: &PathBuf, seed: u64) -> PathBuf {
    let mut net = WeaveNet::<f32>::new(ModelConfig::new(2, 8), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = net.params().iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let p = net.params_mut().get_mut(id);
        let shape = p.value.shape().to_vec();
        p.value = Tensor::from_fn(shape, |_| rng.random_range(-1.0f32..1.0));
    }
    let path = dir.join("net.ck");
    net.save(&path).unwrap();
    path
}

#[test]
fn oracle_never_loses_to_gs_best() {
    let insts = uu(7, 3, 40);
    for kind in [CostKind::Seq, CostKind::Bal] {
        let report = run_benchmark(&insts, &[Method::GsBest, Method::Oracle], kind).unwrap();
        let gs: Vec<_> = report.rows_of("gs_best").collect();
        let or: Vec<_> = report.rows_of("oracle").collect();
        for (g, o) in gs.iter().zip(&or) {
            assert!(g.stable && o.stable);
            assert!(g.cost(kind).unwrap() >= o.cost(kind).unwrap());
        }
        assert_eq!(report.baseline.as_deref(), Some("gs_best"));
        assert_eq!(report.summary("oracle").unwrap().optimal_hit_rate, Some(100.0));
        let hit = report.summary("gs_best").unwrap().optimal_hit_rate.unwrap();
        assert!(hit <= 100.0);
    }
}

#[test]
fn every_classical_method_is_stable() {
    let insts = uu(6, 8, 25);
    let report = run_benchmark(&insts, &Method::algorithms(), CostKind::Seq).unwrap();
    for s in &report.summaries {
        assert_eq!(s.stable_rate, 100.0, "{}", s.method);
        assert_eq!(s.histogram.zero, 25);
    }
    let base = report.baseline.as_deref().unwrap();
    assert_ne!(base, "oracle");
    let best = report.summary(base).unwrap().mean_seq.unwrap();
    for s in report.summaries.iter().filter(|s| s.method != "oracle") {
        assert!(s.mean_seq.unwrap() >= best);
    }
}

#[test]
fn fixed_permutation_hit_rate_matches_enumeration() {
    // the identity is a valid output; count by hand how often it is a stable optimum.
    let insts = uu(4, 12, 60);
    let mut hits = 0;
    for (_, inst) in &insts {
        let eye = weavematch_core::Matching::from_permutation(&[0, 1, 2, 3]).unwrap();
        let oracle = solve(&Method::Oracle, inst, CostKind::Seq).unwrap();
        let c = |m| weavematch_core::cost_report(inst, m).unwrap().seq;
        if weavematch_core::is_stable(inst, &eye) && c(&eye) == c(&oracle) {
            hits += 1;
        }
    }
    let rows: Vec<_> = insts
        .iter()
        .map(|(id, inst)| {
            let eye = weavematch_core::Matching::from_permutation(&[0, 1, 2, 3]).unwrap();
            weavematch_eval::EvalRow::assess(*id, "eye", inst, Some(&eye)).unwrap()
        })
        .collect();
    let oracle_rows: Vec<_> = insts
        .iter()
        .map(|(id, inst)| {
            weavematch_eval::EvalRow::assess(*id, "oracle", inst, Some(&solve(&Method::Oracle, inst, CostKind::Seq).unwrap()))
                .unwrap()
        })
        .collect();
    let rate = weavematch_eval::optimal_hit_rate(&rows, &oracle_rows, CostKind::Seq).unwrap();
    assert_eq!(rate, 100.0 * hits as f64 / 60.0);
    assert!(rate < 100.0);
}

#[test]
fn benchmark_is_deterministic() {
    let dir = temp("det");
    let ck = saved_net(&dir, 4);
    let net = Method::Network { label: "net".into(), checkpoint: ck, binarize: Binarize::Argmax };
    let methods = [Method::Gs, Method::Dacc, Method::PowerBalance, net];
    let insts = uu(5, 1, 30);
    let a = run_benchmark(&insts, &methods, CostKind::Bal).unwrap();
    let b = run_benchmark(&insts, &methods, CostKind::Bal).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows_csv().unwrap(), b.rows_csv().unwrap());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn network_rows_follow_binarisation() {
    let dir = temp("bin");
    let ck = saved_net(&dir, 9);
    let insts = uu(6, 2, 50);
    let methods = [
        Method::Network { label: "arg".into(), checkpoint: ck.clone(), binarize: Binarize::Argmax },
        Method::Network { label: "hung".into(), checkpoint: ck, binarize: Binarize::Hungarian },
    ];
    let report = run_benchmark(&insts, &methods, CostKind::Seq).unwrap();
    assert_eq!(report.baseline, None);
    let hung = report.summary("hung").unwrap();
    assert_eq!(hung.valid_rate, 100.0);
    assert_eq!(hung.histogram.fail, 0);
    let arg = report.summary("arg").unwrap();
    assert_eq!(arg.histogram.fail, report.rows_of("arg").filter(|r| !r.valid).count());
    // where argmax already yields a matching, the assignment cannot differ in validity.
    for (a, h) in report.rows_of("arg").zip(report.rows_of("hung")) {
        assert!(h.valid);
        if a.stable {
            assert_eq!(a.blocking_pairs, Some(0));
        }
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn validation_metrics_agree_with_the_harness() {
    let dir = temp("val");
    let ck = saved_net(&dir, 6);
    let insts = uu(5, 17, 120);
    let net = WeaveNet::<f32>::load(&ck).unwrap();
    let plain: Vec<PreferenceInstance> = insts.iter().map(|(_, i)| i.clone()).collect();
    let spec = DatasetSpec::named(Setting::UU, 5, 0, 0, None).unwrap();
    let cfg = TrainConfig::new(spec, LossKind::Sm, 0, 0);
    let (_, metrics) = evaluate_validation(&net, &plain, &cfg).unwrap();

    let method = Method::Network { label: "net".into(), checkpoint: ck, binarize: Binarize::Argmax };
    for kind in [CostKind::Seq, CostKind::Bal] {
        let report = run_benchmark(&insts, std::slice::from_ref(&method), kind).unwrap();
        let s = report.summary("net").unwrap();
        assert!((s.stable_rate - metrics.stable_rate).abs() < 1e-9);
        let want = if kind == CostKind::Seq { metrics.mean_seq } else { metrics.mean_bal };
        match s.mean_cost(kind) {
            Some(m) => assert!((m - want).abs() < 1e-9, "{m} vs {want}"),
            None => assert!(want.is_nan()),
        }
    }
    assert_eq!(network_logits(&net, &plain).unwrap().len(), plain.len());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_methods_and_checkpoints_are_reported() {
    assert!(matches!("simplex".parse::<Method>(), Err(EvalError::UnknownMethod(_))));
    assert_eq!("power-balance".parse::<Method>().unwrap(), Method::PowerBalance);
    assert_eq!("GS_BEST".parse::<Method>().unwrap(), Method::GsBest);
    assert!("argmax".parse::<Binarize>().is_ok() && "nope".parse::<Binarize>().is_err());

    let insts = uu(4, 0, 3);
    let missing = Method::Network {
        label: "net".into(),
        checkpoint: PathBuf::from("/nonexistent/net.ck"),
        binarize: Binarize::Argmax,
    };
    assert!(matches!(run_benchmark(&insts, &[missing], CostKind::Seq), Err(EvalError::Checkpoint { .. })));
    assert!(run_benchmark(&insts, &[Method::Gs, Method::Gs], CostKind::Seq).is_err());
    assert!(run_benchmark(&[], &[Method::Gs], CostKind::Seq).is_err());
    assert!(run_benchmark(&insts, &[], CostKind::Seq).is_err());
    let big = uu(10, 0, 1);
    assert!(run_benchmark(&big, &[Method::Oracle], CostKind::Seq).is_err());
}
