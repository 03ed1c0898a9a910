//! Exhaustive search over perfect matchings; the ground-truth oracle for
//! small instances.

use crate::error::{CoreError, Result};
use crate::instance::PreferenceInstance;
use crate::matching::{cost_report, CostKind, CostReport, Matching};
use crate::solvers::gale_shapley::require_square;

pub const DEFAULT_ENUMERATION_LIMIT: usize = 9;

/// Every stable matching of an instance, in lexicographic order of the
/// A-side partner vectors, each with its costs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableSet {
    members: Vec<(Matching, CostReport)>,
}

impl StableSet {
    pub fn members(&self) -> &[(Matching, CostReport)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, m: &Matching) -> bool {
        self.members.iter().any(|(x, _)| x == m)
    }

    /// Minimum of `kind`; ties resolve to the lexicographically smallest matching.
    pub fn optimal(&self, kind: CostKind) -> (&Matching, u64) {
        let (m, c) = self
            .members
            .iter()
            .min_by_key(|(_, c)| c.get(kind))
            .expect("a stable set is never empty");
        (m, c.get(kind))
    }

    /// Minimum regret, then minimum egalitarian cost, then lexicographic order.
    pub fn min_regret_egalitarian(&self) -> &Matching {
        &self
            .members
            .iter()
            .min_by_key(|(_, c)| (c.reg, c.egal))
            .expect("a stable set is never empty")
            .0
    }
}

/// Enumerates every stable matching by depth-first assignment of side A,
/// pruning as soon as two assigned pairs form a blocking pair.
pub fn enumerate_stable(inst: &PreferenceInstance, limit: usize) -> Result<StableSet> {
    require_square(inst)?;
    let n = inst.n();
    if n > limit {
        return Err(CoreError::TooLarge { n, limit });
    }
    let mut search = Search { inst, perm: Vec::with_capacity(n), used: vec![false; n], found: Vec::new() };
    search.descend();
    let members = search
        .found
        .into_iter()
        .map(|perm| {
            let m = Matching::from_permutation(&perm).expect("search builds permutations");
            let c = cost_report(inst, &m).expect("perfect matching");
            (m, c)
        })
        .collect();
    Ok(StableSet { members })
}

struct Search<'a> {
    inst: &'a PreferenceInstance,
    perm: Vec<usize>,
    used: Vec<bool>,
    found: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self) {
        let v = self.perm.len();
        if v == self.inst.n() {
            self.found.push(self.perm.clone());
            return;
        }
        for w in 0..self.inst.n() {
            if self.used[w] || !self.compatible(v, w) {
                continue;
            }
            self.used[w] = true;
            self.perm.push(w);
            self.descend();
            self.perm.pop();
            self.used[w] = false;
        }
    }

    /// Whether pairing `a_v` with `b_w` forms no blocking pair with any
    /// already-assigned `(a_u, b_x)`.
    fn compatible(&self, v: usize, w: usize) -> bool {
        let inst = self.inst;
        self.perm.iter().enumerate().all(|(u, &x)| {
            let v_x = inst.rank_a(v, x) < inst.rank_a(v, w) && inst.rank_b(x, v) < inst.rank_b(x, u);
            let u_w = inst.rank_a(u, w) < inst.rank_a(u, x) && inst.rank_b(w, u) < inst.rank_b(w, v);
            !v_x && !u_w
        })
    }
}

/// The stable matching minimising `kind`, found by enumeration.
pub fn oracle_optimal(inst: &PreferenceInstance, kind: CostKind, limit: usize) -> Result<(Matching, u64)> {
    let set = enumerate_stable(inst, limit)?;
    let (m, c) = set.optimal(kind);
    Ok((m.clone(), c))
}

/// Minimum-regret stable matching, egalitarian cost as tie-breaker.
///
/// Realised by enumeration, so limited to small instances.
pub fn polymin(inst: &PreferenceInstance, limit: usize) -> Result<Matching> {
    Ok(enumerate_stable(inst, limit)?.min_regret_egalitarian().clone())
}
