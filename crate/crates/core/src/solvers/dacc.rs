//! Deferred acceptance with compensation chains.
//!
//! Agents enter the market one at a time, alternating sides
//! (`a_0, b_0, a_1, b_1, ...`). The entrant proposes down its list to the
//! agents already present. A receiver holds the better of its current partner
//! and the proposer; a displaced partner resumes proposing just past the
//! agent that dropped it, so each entry triggers a compensation chain on the
//! entrant's side. The matching is stable on the sub-market after every
//! entry, and therefore stable once everyone has entered. Neither side is
//! favoured as a whole: which side proposes changes with every entry.

use crate::error::Result;
use crate::instance::PreferenceInstance;
use crate::matching::Matching;
use crate::solvers::gale_shapley::{require_square, Oriented, Side};

/// Outcome of a DACC run together with the number of proposals made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaccOutcome {
    pub matching: Matching,
    pub proposals: usize,
}

pub fn dacc(inst: &PreferenceInstance) -> Result<Matching> {
    Ok(dacc_traced(inst)?.matching)
}

pub fn dacc_traced(inst: &PreferenceInstance) -> Result<DaccOutcome> {
    require_square(inst)?;
    let n = inst.n();
    let mut market = Market {
        partner: [vec![None; n], vec![None; n]],
        present: [vec![false; n], vec![false; n]],
        proposals: 0,
    };
    for k in 0..n {
        for side in [Side::A, Side::B] {
            market.present[idx(side)][k] = true;
            market.chain(inst, side, k, 0);
        }
    }
    let matching = Matching::new(market.partner[0].clone(), n).expect("chains keep the matching one-to-one");
    Ok(DaccOutcome { matching, proposals: market.proposals })
}

fn idx(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}

struct Market {
    /// `partner[0]` is indexed by A agents, `partner[1]` by B agents.
    partner: [Vec<Option<usize>>; 2],
    present: [Vec<bool>; 2],
    proposals: usize,
}

impl Market {
    /// `proposer` (on `side`) proposes from list position `start` onwards;
    /// every displaced agent continues the chain.
    fn chain(&mut self, inst: &PreferenceInstance, side: Side, mut proposer: usize, mut start: usize) {
        let view = Oriented::new(inst, side);
        let (me, them) = (idx(side), idx(side.other()));
        'chain: loop {
            for pos in start..view.prefs[proposer].len() {
                let r = view.prefs[proposer][pos];
                if !self.present[them][r] {
                    continue;
                }
                self.proposals += 1;
                let current = self.partner[them][r];
                if let Some(q) = current {
                    if view.recv_rank[r][q] < view.recv_rank[r][proposer] {
                        continue;
                    }
                }
                self.partner[them][r] = Some(proposer);
                self.partner[me][proposer] = Some(r);
                match current {
                    Some(q) => {
                        self.partner[me][q] = None;
                        start = view.prop_rank[q][r] as usize;
                        proposer = q;
                        continue 'chain;
                    }
                    None => return,
                }
            }
            // list exhausted: the proposer stays single for now.
            return;
        }
    }
}
