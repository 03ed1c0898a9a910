//! Two-sided preference instances and the rank-to-score scaling fed to the network.
//!
//! Ranks are 1-based (rank 1 is the most preferred candidate). Indices of
//! agents and candidates are 0-based everywhere, including the JSON format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Version tag written into every instance file.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Default lower bound of the score range, used for the last rank.
pub const DEFAULT_C_MIN: f64 = 0.1;

/// Where an instance came from. Carried through serialization untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub distribution: String,
    pub seed: u64,
}

/// A complete-list, tie-free two-sided preference instance.
///
/// `prefs_a[i]` lists the side-B candidates in descending preference of
/// agent `a_i`; `prefs_b[j]` does the same for `b_j` over side A.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceInstance {
    prefs_a: Vec<Vec<usize>>,
    prefs_b: Vec<Vec<usize>>,
    rank_a: Vec<Vec<u32>>,
    rank_b: Vec<Vec<u32>>,
    provenance: Option<Provenance>,
}

fn ranks_of(lists: &[Vec<usize>], len: usize, side: &str) -> Result<Vec<Vec<u32>>> {
    lists
        .iter()
        .enumerate()
        .map(|(agent, list)| {
            if list.len() != len {
                return Err(CoreError::InvalidInstance(format!(
                    "{side}-list {agent} has {} entries, expected {len}",
                    list.len()
                )));
            }
            let mut ranks = vec![0u32; len];
            for (pos, &cand) in list.iter().enumerate() {
                if cand >= len {
                    return Err(CoreError::InvalidInstance(format!(
                        "{side}-list {agent} names candidate {cand} out of range 0..{len}"
                    )));
                }
                if ranks[cand] != 0 {
                    return Err(CoreError::InvalidInstance(format!(
                        "{side}-list {agent} repeats candidate {cand}"
                    )));
                }
                ranks[cand] = pos as u32 + 1;
            }
            Ok(ranks)
        })
        .collect()
}

impl PreferenceInstance {
    /// Builds an instance from preference lists, checking that every list is
    /// a permutation of the opposite side.
    pub fn new(prefs_a: Vec<Vec<usize>>, prefs_b: Vec<Vec<usize>>) -> Result<Self> {
        let n = prefs_a.len();
        let m = prefs_b.len();
        if n == 0 || m == 0 {
            return Err(CoreError::InvalidInstance("both sides need at least one agent".into()));
        }
        if m > n {
            return Err(CoreError::InvalidInstance(format!(
                "side B ({m}) may not be larger than side A ({n})"
            )));
        }
        let rank_a = ranks_of(&prefs_a, m, "A")?;
        let rank_b = ranks_of(&prefs_b, n, "B")?;
        Ok(Self { prefs_a, prefs_b, rank_a, rank_b, provenance: None })
    }

    /// Builds an instance from 1-based rank tables (`ranks_a[i][j]` is the
    /// rank `a_i` gives `b_j`).
    pub fn from_ranks(ranks_a: &[Vec<u32>], ranks_b: &[Vec<u32>]) -> Result<Self> {
        fn lists(ranks: &[Vec<u32>]) -> Result<Vec<Vec<usize>>> {
            ranks
                .iter()
                .map(|row| {
                    let mut list = vec![usize::MAX; row.len()];
                    for (cand, &r) in row.iter().enumerate() {
                        let pos = (r as usize).wrapping_sub(1);
                        if pos >= row.len() || list[pos] != usize::MAX {
                            return Err(CoreError::InvalidInstance(format!(
                                "rank row {row:?} is not a permutation of 1..={}",
                                row.len()
                            )));
                        }
                        list[pos] = cand;
                    }
                    Ok(list)
                })
                .collect()
        }
        Self::new(lists(ranks_a)?, lists(ranks_b)?)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn n(&self) -> usize {
        self.prefs_a.len()
    }

    pub fn m(&self) -> usize {
        self.prefs_b.len()
    }

    pub fn is_square(&self) -> bool {
        self.n() == self.m()
    }

    pub fn prefs_a(&self) -> &[Vec<usize>] {
        &self.prefs_a
    }

    pub fn prefs_b(&self) -> &[Vec<usize>] {
        &self.prefs_b
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Rank (1-based) that `a_i` assigns to `b_j`.
    #[inline]
    pub fn rank_a(&self, i: usize, j: usize) -> u32 {
        self.rank_a[i][j]
    }

    /// Rank (1-based) that `b_j` assigns to `a_i`.
    #[inline]
    pub fn rank_b(&self, j: usize, i: usize) -> u32 {
        self.rank_b[j][i]
    }

    pub fn ranks_a(&self) -> &[Vec<u32>] {
        &self.rank_a
    }

    pub fn ranks_b(&self) -> &[Vec<u32>] {
        &self.rank_b
    }

    /// The same instance with the two sides exchanged.
    pub fn swapped(&self) -> Result<Self> {
        let mut inst = Self::new(self.prefs_b.clone(), self.prefs_a.clone())?;
        inst.provenance = self.provenance.clone();
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            version: INSTANCE_FORMAT_VERSION,
            n: self.n(),
            m: self.m(),
            prefs_a: self.prefs_a.clone(),
            prefs_b: self.prefs_b.clone(),
            distribution: self.provenance.as_ref().map(|p| p.distribution.clone()),
            seed: self.provenance.as_ref().map(|p| p.seed),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.version != INSTANCE_FORMAT_VERSION {
            return Err(CoreError::Version { found: file.version, expected: INSTANCE_FORMAT_VERSION });
        }
        if file.prefs_a.len() != file.n || file.prefs_b.len() != file.m {
            return Err(CoreError::InvalidInstance(format!(
                "declared size {}x{} does not match {}x{} lists",
                file.n,
                file.m,
                file.prefs_a.len(),
                file.prefs_b.len()
            )));
        }
        let provenance = match (file.distribution, file.seed) {
            (Some(distribution), Some(seed)) => Some(Provenance { distribution, seed }),
            (None, None) => None,
            _ => {
                return Err(CoreError::InvalidInstance(
                    "distribution and seed must be given together".into(),
                ))
            }
        };
        let mut inst = Self::new(file.prefs_a, file.prefs_b)?;
        inst.provenance = provenance;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    n: usize,
    m: usize,
    prefs_a: Vec<Vec<usize>>,
    prefs_b: Vec<Vec<usize>>,
    distribution: Option<String>,
    seed: Option<u64>,
}

/// Linear map from a 1-based rank in a list of `len` candidates to a score in
/// `[c_min, 1)`, with rank 1 scoring highest and rank `len` scoring `c_min`.
#[inline]
pub fn rank_score(rank: u32, len: usize, c_min: f64) -> f64 {
    let len = len as f64;
    (1.0 - c_min) * (len - rank as f64) / len + c_min
}

/// Row-major score matrices derived from an instance: `sa` is `n x m`,
/// `sb` is `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrices {
    pub n: usize,
    pub m: usize,
    pub sa: Vec<f64>,
    pub sb: Vec<f64>,
    pub c_min: f64,
}

impl ScoreMatrices {
    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.sa[i * self.m + j]
    }

    #[inline]
    pub fn b(&self, j: usize, i: usize) -> f64 {
        self.sb[j * self.n + i]
    }
}

pub fn scale_ranks(inst: &PreferenceInstance, c_min: f64) -> Result<ScoreMatrices> {
    if !(c_min > 0.0 && c_min < 1.0) {
        return Err(CoreError::InvalidScale(c_min));
    }
    let (n, m) = (inst.n(), inst.m());
    let sa = inst
        .ranks_a()
        .iter()
        .flat_map(|row| row.iter().map(move |&r| rank_score(r, m, c_min)))
        .collect();
    let sb = inst
        .ranks_b()
        .iter()
        .flat_map(|row| row.iter().map(move |&r| rank_score(r, n, c_min)))
        .collect();
    Ok(ScoreMatrices { n, m, sa, sb, c_min })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn identical_lists(n: usize) -> PreferenceInstance {
        let list: Vec<usize> = (0..n).collect();
        PreferenceInstance::new(vec![list.clone(); n], vec![list; n]).unwrap()
    }

    #[test]
    fn scale_examples() {
        assert!((rank_score(5, 5, 0.1) - 0.1).abs() < 1e-15);
        assert!((rank_score(1, 5, 0.1) - 0.82).abs() < 1e-12);
        assert!((rank_score(3, 5, 0.1) - 0.46).abs() < 1e-12);
    }

    #[test]
    fn scale_rejects_bad_c_min() {
        let inst = identical_lists(3);
        for c in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(scale_ranks(&inst, c), Err(CoreError::InvalidScale(_))));
        }
        let s = scale_ranks(&inst, 0.1).unwrap();
        assert!((s.a(0, 0) - 0.7).abs() < 1e-12);
        assert!((s.b(2, 2) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(PreferenceInstance::new(vec![vec![0, 0], vec![0, 1]], vec![vec![0, 1], vec![1, 0]]).is_err());
        assert!(PreferenceInstance::new(vec![vec![0, 2], vec![0, 1]], vec![vec![0, 1], vec![1, 0]]).is_err());
        assert!(PreferenceInstance::new(vec![vec![0], vec![0, 1]], vec![vec![0, 1], vec![1, 0]]).is_err());
        assert!(PreferenceInstance::new(vec![], vec![]).is_err());
    }

    #[test]
    fn ranks_and_lists_agree() {
        let inst = PreferenceInstance::new(
            vec![vec![2, 0, 1], vec![0, 1, 2], vec![1, 2, 0]],
            vec![vec![1, 2, 0], vec![2, 0, 1], vec![0, 1, 2]],
        )
        .unwrap();
        assert_eq!(inst.rank_a(0, 2), 1);
        assert_eq!(inst.rank_a(0, 1), 3);
        assert_eq!(inst.rank_b(1, 2), 1);
        let back = PreferenceInstance::from_ranks(inst.ranks_a(), inst.ranks_b()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn json_round_trip_is_byte_exact() {
        let inst = identical_lists(3).with_provenance(Provenance { distribution: "UU".into(), seed: 7 });
        let text = inst.to_json().unwrap();
        let back = PreferenceInstance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn json_rejects_mismatched_sizes_and_versions() {
        let bad = r#"{"version":1,"n":2,"m":2,"prefs_a":[[0,1]],"prefs_b":[[0,1],[1,0]],"distribution":null,"seed":null}"#;
        assert!(PreferenceInstance::from_json(bad).is_err());
        let bad = r#"{"version":9,"n":1,"m":1,"prefs_a":[[0]],"prefs_b":[[0]],"distribution":null,"seed":null}"#;
        assert!(matches!(PreferenceInstance::from_json(bad), Err(CoreError::Version { .. })));
    }
}
