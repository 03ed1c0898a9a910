use weavematch_core::generator::{gen_uniform, instance_rng};
use weavematch_core::solvers::{
    dacc_traced, enumerate_stable, gale_shapley, gs_best, hungarian, polymin, power_balance, Side,
};
use weavematch_core::{cost_report, is_stable, CostKind, Dataset, DatasetSpec, Matching, PreferenceInstance, Setting};

fn uu(n: usize, seed: u64, count: usize) -> Dataset {
    Dataset::new(DatasetSpec::named(Setting::UU, n, seed, count, None).unwrap()).unwrap()
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                rec(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Blocking-pair test written straight from the definition, no shortcuts.
fn stable_by_definition(inst: &PreferenceInstance, perm: &[usize]) -> bool {
    let n = perm.len();
    let mut holder = vec![0; n];
    for (i, &j) in perm.iter().enumerate() {
        holder[j] = i;
    }
    for v in 0..n {
        for w in 0..n {
            if perm[v] == w {
                continue;
            }
            let a_prefers = inst.rank_a(v, w) < inst.rank_a(v, perm[v]);
            let b_prefers = inst.rank_b(w, v) < inst.rank_b(w, holder[w]);
            if a_prefers && b_prefers {
                return false;
            }
        }
    }
    true
}

#[test]
fn enumeration_matches_exhaustive_filter() {
    for n in 1..=6 {
        let perms = all_permutations(n);
        for inst in uu(n, 100 + n as u64, 40).instances() {
            let expected: Vec<Matching> = perms
                .iter()
                .filter(|p| stable_by_definition(&inst, p))
                .map(|p| Matching::from_permutation(p).unwrap())
                .collect();
            let got: Vec<Matching> = enumerate_stable(&inst, 9).unwrap().members().iter().map(|(m, _)| m.clone()).collect();
            assert_eq!(got, expected);
            for p in &perms {
                let m = Matching::from_permutation(p).unwrap();
                assert_eq!(is_stable(&inst, &m), stable_by_definition(&inst, p));
            }
        }
    }
}

#[test]
fn gale_shapley_is_side_optimal() {
    for n in 2..=7 {
        for inst in uu(n, 7 * n as u64, 60).instances() {
            let set = enumerate_stable(&inst, 9).unwrap();
            let ma = gale_shapley(&inst, Side::A).unwrap();
            let mb = gale_shapley(&inst, Side::B).unwrap();
            assert!(set.contains(&ma) && set.contains(&mb));
            for (m, _) in set.members() {
                for i in 0..n {
                    let best = ma.partner_of_a(i).unwrap();
                    assert!(inst.rank_a(i, best) <= inst.rank_a(i, m.partner_of_a(i).unwrap()));
                }
                let pb = mb.partners_b();
                let other = m.partners_b();
                for j in 0..n {
                    assert!(inst.rank_b(j, pb[j].unwrap()) <= inst.rank_b(j, other[j].unwrap()));
                }
            }
        }
    }
}

#[test]
fn gs_output_is_stable_on_many_instances() {
    let mut rng = instance_rng(3, 0);
    for k in 0..10_000 {
        let n = 2 + k % 12;
        let inst = PreferenceInstance::new(gen_uniform(n, n, &mut rng), gen_uniform(n, n, &mut rng)).unwrap();
        assert!(is_stable(&inst, &gale_shapley(&inst, Side::A).unwrap()));
        assert!(is_stable(&inst, &gale_shapley(&inst, Side::B).unwrap()));
    }
}

#[test]
fn dacc_stable_and_bounded() {
    for (k, inst) in uu(10, 21, 10_000).instances().enumerate() {
        let out = dacc_traced(&inst).unwrap();
        assert!(out.matching.is_perfect(), "instance {k}");
        assert!(is_stable(&inst, &out.matching), "instance {k}");
        assert!(out.proposals <= 10usize.pow(4));
        assert_eq!(dacc_traced(&inst).unwrap(), out);
    }
}

#[test]
fn dacc_members_of_stable_set() {
    for n in 2..=7 {
        for inst in uu(n, 300 + n as u64, 50).instances() {
            let set = enumerate_stable(&inst, 9).unwrap();
            assert!(set.contains(&dacc_traced(&inst).unwrap().matching));
        }
    }
}

#[test]
fn power_balance_stable_and_no_worse_than_gs_best() {
    let ds = uu(10, 77, 1000);
    let mut no_worse = 0;
    for inst in ds.instances() {
        let pb = power_balance(&inst, None).unwrap();
        assert!(is_stable(&inst, &pb));
        let gs = gs_best(&inst, CostKind::Seq).unwrap();
        if cost_report(&inst, &pb).unwrap().seq <= cost_report(&inst, &gs).unwrap().seq {
            no_worse += 1;
        }
    }
    assert!(no_worse >= 800, "power balance no worse on only {no_worse}/1000");
}

#[test]
fn oracle_bounds_the_heuristics() {
    for n in 3..=7 {
        for inst in uu(n, 500 + n as u64, 60).instances() {
            let set = enumerate_stable(&inst, 9).unwrap();
            for kind in [CostKind::Seq, CostKind::Bal] {
                let (_, best) = set.optimal(kind);
                let gs = cost_report(&inst, &gs_best(&inst, kind).unwrap()).unwrap().get(kind);
                let pb = cost_report(&inst, &power_balance(&inst, None).unwrap()).unwrap().get(kind);
                assert!(best <= gs && best <= pb);
            }
        }
    }
}

#[test]
fn polymin_matches_two_pass_brute_force() {
    let perms = all_permutations(7);
    for inst in uu(7, 901, 25).instances() {
        let stable: Vec<&Vec<usize>> = perms.iter().filter(|p| stable_by_definition(&inst, p)).collect();
        let reg = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| inst.rank_a(i, j).max(inst.rank_b(j, i))).max().unwrap();
        let egal = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| inst.rank_a(i, j) + inst.rank_b(j, i)).sum::<u32>();
        let min_reg = stable.iter().map(|p| reg(p)).min().unwrap();
        let min_egal = stable.iter().filter(|p| reg(p) == min_reg).map(|p| egal(p)).min().unwrap();
        let got = polymin(&inst, 9).unwrap();
        let c = cost_report(&inst, &got).unwrap();
        assert_eq!((c.reg, c.egal), (min_reg as u64, min_egal as u64));
        let set = enumerate_stable(&inst, 9).unwrap();
        assert!(set.members().iter().all(|(_, other)| c.reg <= other.reg));
    }
}

#[test]
fn hungarian_matches_brute_force() {
    use rand::Rng;
    let perms = all_permutations(7);
    let mut rng = instance_rng(55, 0);
    for _ in 0..50 {
        let cost: Vec<Vec<f64>> = (0..7).map(|_| (0..7).map(|_| rng.random_range(0..100) as f64).collect()).collect();
        let best = perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let (m, total) = hungarian(&cost).unwrap();
        assert_eq!(total, best);
        assert!(m.is_perfect());
    }
}
