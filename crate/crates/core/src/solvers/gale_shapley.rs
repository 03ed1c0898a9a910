use std::collections::VecDeque;

use crate::error::{CoreError, Result};
use crate::instance::PreferenceInstance;
use crate::matching::{cost_report, CostKind, Matching};

/// Which side of the market makes proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// Preference data seen from one side: proposers' lists and receivers' ranks.
pub(crate) struct Oriented<'a> {
    pub prefs: &'a [Vec<usize>],
    pub prop_rank: &'a [Vec<u32>],
    pub recv_rank: &'a [Vec<u32>],
}

impl<'a> Oriented<'a> {
    pub fn new(inst: &'a PreferenceInstance, side: Side) -> Self {
        match side {
            Side::A => Self { prefs: inst.prefs_a(), prop_rank: inst.ranks_a(), recv_rank: inst.ranks_b() },
            Side::B => Self { prefs: inst.prefs_b(), prop_rank: inst.ranks_b(), recv_rank: inst.ranks_a() },
        }
    }
}

/// Converts a proposer-indexed assignment back to an A-indexed matching.
pub(crate) fn to_matching(side: Side, partner_of_proposer: &[usize]) -> Matching {
    let n = partner_of_proposer.len();
    let perm = match side {
        Side::A => partner_of_proposer.to_vec(),
        Side::B => {
            let mut perm = vec![0; n];
            for (b, &a) in partner_of_proposer.iter().enumerate() {
                perm[a] = b;
            }
            perm
        }
    };
    Matching::from_permutation(&perm).expect("deferred acceptance yields a permutation")
}

/// Proposer-indexed view of a perfect matching.
pub(crate) fn from_matching(side: Side, m: &Matching) -> Vec<usize> {
    match side {
        Side::A => m.partners_a().iter().map(|p| p.expect("perfect matching")).collect(),
        Side::B => m.partners_b().into_iter().map(|p| p.expect("perfect matching")).collect(),
    }
}

pub(crate) fn require_square(inst: &PreferenceInstance) -> Result<()> {
    if inst.is_square() {
        Ok(())
    } else {
        Err(CoreError::NotSquare { n: inst.n(), m: inst.m() })
    }
}

/// Deferred acceptance with `side` proposing. Free proposers are served
/// lowest index first and walk down their lists; the result is the
/// proposing side's optimal stable matching.
pub fn gale_shapley(inst: &PreferenceInstance, side: Side) -> Result<Matching> {
    require_square(inst)?;
    let view = Oriented::new(inst, side);
    let n = inst.n();
    let mut next = vec![0usize; n];
    let mut holder: Vec<Option<usize>> = vec![None; n];
    let mut free: VecDeque<usize> = (0..n).collect();
    while let Some(p) = free.pop_front() {
        let r = view.prefs[p][next[p]];
        next[p] += 1;
        match holder[r] {
            None => holder[r] = Some(p),
            Some(q) if view.recv_rank[r][p] < view.recv_rank[r][q] => {
                holder[r] = Some(p);
                free.push_front(q);
            }
            Some(_) => free.push_front(p),
        }
    }
    let mut partner = vec![0; n];
    for (r, h) in holder.iter().enumerate() {
        partner[h.expect("square market matches everyone")] = r;
    }
    Ok(to_matching(side, &partner))
}

/// Runs Gale–Shapley from both sides and keeps the one with the lower cost.
/// Ties go to the A-proposing result.
pub fn gs_best(inst: &PreferenceInstance, kind: CostKind) -> Result<Matching> {
    let a = gale_shapley(inst, Side::A)?;
    let b = gale_shapley(inst, Side::B)?;
    let ca = cost_report(inst, &a)?.get(kind);
    let cb = cost_report(inst, &b)?.get(kind);
    Ok(if cb < ca { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::is_stable;

    #[test]
    fn two_by_two_hand_simulation() {
        let inst = PreferenceInstance::new(vec![vec![0, 1], vec![0, 1]], vec![vec![0, 1], vec![0, 1]]).unwrap();
        let expected = Matching::from_permutation(&[0, 1]).unwrap();
        assert_eq!(gale_shapley(&inst, Side::A).unwrap(), expected);
        assert_eq!(gale_shapley(&inst, Side::B).unwrap(), expected);
    }

    #[test]
    fn sides_disagree_when_preferences_cross() {
        // a's prefer opposite b's; b's prefer opposite a's: two stable matchings.
        let inst = PreferenceInstance::new(vec![vec![0, 1], vec![1, 0]], vec![vec![1, 0], vec![0, 1]]).unwrap();
        let ma = gale_shapley(&inst, Side::A).unwrap();
        let mb = gale_shapley(&inst, Side::B).unwrap();
        assert_eq!(ma, Matching::from_permutation(&[0, 1]).unwrap());
        assert_eq!(mb, Matching::from_permutation(&[1, 0]).unwrap());
        assert!(is_stable(&inst, &ma) && is_stable(&inst, &mb));
        // both have SEq = 2; the tie goes to A.
        assert_eq!(gs_best(&inst, CostKind::Seq).unwrap(), ma);
    }

    #[test]
    fn gs_best_prefers_lower_cost() {
        // 3x3 instance where B-proposing is far more even than A-proposing.
        let inst = PreferenceInstance::new(
            vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]],
            vec![vec![1, 2, 0], vec![2, 0, 1], vec![0, 1, 2]],
        )
        .unwrap();
        let ma = gale_shapley(&inst, Side::A).unwrap();
        let mb = gale_shapley(&inst, Side::B).unwrap();
        let ca = cost_report(&inst, &ma).unwrap().seq;
        let cb = cost_report(&inst, &mb).unwrap().seq;
        let best = gs_best(&inst, CostKind::Seq).unwrap();
        assert_eq!(cost_report(&inst, &best).unwrap().seq, ca.min(cb));
    }

    #[test]
    fn rejects_non_square() {
        let inst = PreferenceInstance::new(vec![vec![0], vec![0]], vec![vec![0, 1]]).unwrap();
        assert!(matches!(gale_shapley(&inst, Side::A), Err(CoreError::NotSquare { .. })));
    }
}
