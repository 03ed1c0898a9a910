//! One-to-one matchings, blocking pairs, and the fairness costs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::PreferenceInstance;

pub const MATCHING_FORMAT_VERSION: u32 = 1;

/// A (possibly partial) one-to-one assignment of side-A agents to side-B
/// candidates. No candidate is used twice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching {
    partner_of_a: Vec<Option<usize>>,
    m: usize,
}

impl Matching {
    pub fn new(partner_of_a: Vec<Option<usize>>, m: usize) -> Result<Self> {
        let mut used = vec![false; m];
        for (i, p) in partner_of_a.iter().enumerate() {
            if let Some(j) = *p {
                if j >= m {
                    return Err(CoreError::InvalidMatching(format!(
                        "agent {i} is matched to candidate {j}, out of range 0..{m}"
                    )));
                }
                if std::mem::replace(&mut used[j], true) {
                    return Err(CoreError::InvalidMatching(format!("candidate {j} is matched twice")));
                }
            }
        }
        Ok(Self { partner_of_a, m })
    }

    /// A perfect matching on a square instance, `perm[i]` being the partner of `a_i`.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        Self::new(perm.iter().map(|&j| Some(j)).collect(), perm.len())
    }

    pub fn empty(n: usize, m: usize) -> Self {
        Self { partner_of_a: vec![None; n], m }
    }

    pub fn n(&self) -> usize {
        self.partner_of_a.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn partner_of_a(&self, i: usize) -> Option<usize> {
        self.partner_of_a[i]
    }

    pub fn partners_a(&self) -> &[Option<usize>] {
        &self.partner_of_a
    }

    pub fn partners_b(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.m];
        for (i, p) in self.partner_of_a.iter().enumerate() {
            if let Some(j) = *p {
                out[j] = Some(i);
            }
        }
        out
    }

    /// Every agent of the smaller side is matched (a permutation when n = m).
    pub fn is_perfect(&self) -> bool {
        self.partner_of_a.iter().filter(|p| p.is_some()).count() == self.n().min(self.m)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.partner_of_a.iter().enumerate().filter_map(|(i, p)| p.map(|j| (i, j)))
    }

    /// Row-major `n x m` 0/1 matrix.
    pub fn to_matrix(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n() * self.m];
        for (i, j) in self.pairs() {
            out[i * self.m + j] = 1.0;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MatchingFile {
            version: MATCHING_FORMAT_VERSION,
            m: Some(self.m),
            pairs: self.partner_of_a.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MatchingFile = serde_json::from_str(text)?;
        if file.version != MATCHING_FORMAT_VERSION {
            return Err(CoreError::Version { found: file.version, expected: MATCHING_FORMAT_VERSION });
        }
        let m = file.m.unwrap_or(file.pairs.len());
        Self::new(file.pairs, m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn check_shape(&self, inst: &PreferenceInstance) -> Result<()> {
        if self.n() != inst.n() || self.m != inst.m() {
            return Err(CoreError::InvalidMatching(format!(
                "matching is {}x{} but instance is {}x{}",
                self.n(),
                self.m,
                inst.n(),
                inst.m()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchingFile {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    pairs: Vec<Option<usize>>,
}

/// Unmatched pairs `(a_v, b_w)` that prefer each other to their assigned
/// partners. Pairs where either agent is unassigned are not reported.
///
/// # Panics
/// If the matching and instance sizes disagree.
pub fn find_blocking_pairs(inst: &PreferenceInstance, m: &Matching) -> Vec<(usize, usize)> {
    m.check_shape(inst).expect("matching does not fit instance");
    let partner_b = m.partners_b();
    let mut out = Vec::new();
    for v in 0..inst.n() {
        let Some(j) = m.partner_of_a(v) else { continue };
        let own_rank = inst.rank_a(v, j);
        for w in 0..inst.m() {
            if w == j || inst.rank_a(v, w) >= own_rank {
                continue;
            }
            let Some(i) = partner_b[w] else { continue };
            if inst.rank_b(w, v) < inst.rank_b(w, i) {
                out.push((v, w));
            }
        }
    }
    out
}

pub fn count_blocking_pairs(inst: &PreferenceInstance, m: &Matching) -> usize {
    find_blocking_pairs(inst, m).len()
}

pub fn is_stable(inst: &PreferenceInstance, m: &Matching) -> bool {
    m.check_shape(inst).expect("matching does not fit instance");
    let partner_b = m.partners_b();
    (0..inst.n()).all(|v| {
        let Some(j) = m.partner_of_a(v) else { return true };
        let own_rank = inst.rank_a(v, j);
        inst.prefs_a()[v][..own_rank as usize - 1].iter().all(|&w| match partner_b[w] {
            Some(i) => inst.rank_b(w, v) > inst.rank_b(w, i),
            None => true,
        })
    })
}

/// Per-matching rank sums and the four fairness costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub p_a: u64,
    pub p_b: u64,
    pub seq: u64,
    pub reg: u64,
    pub egal: u64,
    pub bal: u64,
}

impl CostReport {
    pub fn get(&self, kind: CostKind) -> u64 {
        match kind {
            CostKind::Seq => self.seq,
            CostKind::Bal => self.bal,
            CostKind::Egal => self.egal,
            CostKind::Reg => self.reg,
        }
    }
}

pub fn cost_report(inst: &PreferenceInstance, m: &Matching) -> Result<CostReport> {
    m.check_shape(inst)?;
    if !inst.is_square() || !m.is_perfect() {
        return Err(CoreError::ImperfectMatching);
    }
    let (mut p_a, mut p_b, mut reg) = (0u64, 0u64, 0u64);
    for (i, j) in m.pairs() {
        let (ra, rb) = (inst.rank_a(i, j) as u64, inst.rank_b(j, i) as u64);
        p_a += ra;
        p_b += rb;
        reg = reg.max(ra.max(rb));
    }
    Ok(CostReport { p_a, p_b, seq: p_a.abs_diff(p_b), reg, egal: p_a + p_b, bal: p_a.max(p_b) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Seq,
    Bal,
    Egal,
    Reg,
}

impl CostKind {
    pub const ALL: [CostKind; 4] = [CostKind::Seq, CostKind::Bal, CostKind::Egal, CostKind::Reg];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Seq => "seq",
            CostKind::Bal => "bal",
            CostKind::Egal => "egal",
            CostKind::Reg => "reg",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "sexeq" => Ok(CostKind::Seq),
            "bal" | "balance" => Ok(CostKind::Bal),
            "egal" | "egalitarian" => Ok(CostKind::Egal),
            "reg" | "regret" => Ok(CostKind::Reg),
            other => Err(format!("unknown cost kind '{other}' (expected seq|bal|egal|reg)")),
        }
    }
}
