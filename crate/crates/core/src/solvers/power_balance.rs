//! Balance-seeking walk over the stable-matching lattice.
//!
//! The walk starts from the A-optimal stable matching. Each round the side
//! that is currently more satisfied (smaller rank sum) is the one that
//! proposes: one of its agents is divorced and resumes proposing down its
//! list, pushing a compensation chain through its own side until the
//! abandoned partner receives a better offer. Each successful chain yields
//! another stable matching that is worse for the proposing side and better
//! for the other. Among the chains available in a round, the one that
//! lowers the sex-equality cost the most is taken; the walk stops when no
//! chain improves it or after `max_rounds` rounds.

use crate::error::Result;
use crate::instance::PreferenceInstance;
use crate::matching::{cost_report, Matching};
use crate::solvers::gale_shapley::{from_matching, gale_shapley, require_square, to_matching, Oriented, Side};

/// Default round budget, `n^2` (an upper bound on the number of rotations).
pub fn default_rounds(n: usize) -> usize {
    n * n
}

pub fn power_balance(inst: &PreferenceInstance, max_rounds: Option<usize>) -> Result<Matching> {
    require_square(inst)?;
    let rounds = max_rounds.unwrap_or_else(|| default_rounds(inst.n()));
    let mut current = gale_shapley(inst, Side::A)?;
    let mut cost = cost_report(inst, &current)?;
    for _ in 0..rounds {
        if cost.seq == 0 {
            break;
        }
        let stronger = if cost.p_a < cost.p_b { Side::A } else { Side::B };
        let mut best: Option<(u64, Matching)> = None;
        for agent in 0..inst.n() {
            let Some(next) = break_marriage(inst, &current, stronger, agent) else { continue };
            let seq = cost_report(inst, &next)?.seq;
            if best.as_ref().is_none_or(|(s, _)| seq < *s) {
                best = Some((seq, next));
            }
        }
        match best {
            Some((seq, next)) if seq < cost.seq => {
                current = next;
                cost = cost_report(inst, &current)?;
            }
            _ => break,
        }
    }
    Ok(current)
}

/// Divorces `agent` (on `side`) from its partner in the stable matching `m`
/// and lets it propose onward. The abandoned partner only accepts someone it
/// prefers to `agent`. Returns the resulting stable matching, or `None` when
/// the chain dead-ends (some proposer exhausts its list).
pub fn break_marriage(inst: &PreferenceInstance, m: &Matching, side: Side, agent: usize) -> Option<Matching> {
    let view = Oriented::new(inst, side);
    let n = inst.n();
    let mut partner = from_matching(side, m);
    let mut holder = vec![0usize; n];
    for (p, &r) in partner.iter().enumerate() {
        holder[r] = p;
    }
    let abandoned = partner[agent];
    let mut proposer = agent;
    let mut start = view.prop_rank[agent][abandoned] as usize;
    'chain: loop {
        for pos in start..n {
            let r = view.prefs[proposer][pos];
            if r == abandoned {
                if view.recv_rank[r][proposer] < view.recv_rank[r][agent] {
                    partner[proposer] = r;
                    holder[r] = proposer;
                    return Some(to_matching(side, &partner));
                }
                continue;
            }
            let q = holder[r];
            if view.recv_rank[r][proposer] < view.recv_rank[r][q] {
                partner[proposer] = r;
                holder[r] = proposer;
                start = view.prop_rank[q][r] as usize;
                proposer = q;
                continue 'chain;
            }
        }
        return None;
    }
}
