//! Seeded synthetic preference generators.
//!
//! Every instance of a dataset is drawn from its own ChaCha20 stream: the
//! dataset seed keys the generator and the instance index selects the stream.
//! Instance `k` of a dataset is therefore reproducible on its own, on any
//! platform, independent of how many other instances were generated.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::{PreferenceInstance, Provenance};

/// Identifies the pseudo-random algorithm in manifests.
pub const RNG_NAME: &str = "chacha20-stream";
pub const HISTOGRAM_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_POPULAR_FRACTION: f64 = 0.4;
pub const DEFAULT_GAUSS_STDDEV: f64 = 0.4;

/// The generator for instance `index` of a dataset seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sorts candidates by descending score; equal scores fall back to a
/// descending jitter drawn from the same stream, then to the lower index.
fn rank_descending<R: RngCore>(scores: &[f64], rng: &mut R) -> Vec<usize> {
    let jitter: Vec<f64> = (0..scores.len()).map(|_| rng.random::<f64>()).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| {
        scores[y]
            .total_cmp(&scores[x])
            .then(jitter[y].total_cmp(&jitter[x]))
            .then(x.cmp(&y))
    });
    order
}

fn lists_from<R: RngCore>(
    agents: usize,
    candidates: usize,
    rng: &mut R,
    mut score: impl FnMut(usize, &mut R) -> f64,
) -> Vec<Vec<usize>> {
    (0..agents)
        .map(|_| {
            let scores: Vec<f64> = (0..candidates).map(|j| score(j, rng)).collect();
            rank_descending(&scores, rng)
        })
        .collect()
}

/// Each agent scores each candidate with an independent U(0, 1) draw.
pub fn gen_uniform<R: RngCore>(agents: usize, candidates: usize, rng: &mut R) -> Vec<Vec<usize>> {
    lists_from(agents, candidates, rng, |_, rng| rng.random::<f64>())
}

/// Candidates `0..floor(fraction * candidates)` form a shared popular group
/// scored U(0.5, 1); the rest are scored U(0, 0.5).
pub fn gen_discrete<R: RngCore>(
    agents: usize,
    candidates: usize,
    popular_fraction: f64,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let popular = popular_count(candidates, popular_fraction);
    lists_from(agents, candidates, rng, |j, rng| {
        let u = rng.random::<f64>() * 0.5;
        if j < popular {
            0.5 + u
        } else {
            u
        }
    })
}

pub fn popular_count(candidates: usize, fraction: f64) -> usize {
    ((fraction * candidates as f64).floor() as usize).min(candidates)
}

/// Candidate `j` (0-based) is scored N((j + 1) / candidates, stddev).
pub fn gen_gauss<R: RngCore>(agents: usize, candidates: usize, stddev: f64, rng: &mut R) -> Vec<Vec<usize>> {
    let c = candidates as f64;
    lists_from(agents, candidates, rng, |j, rng| {
        let z: f64 = StandardNormal.sample(rng);
        (j as f64 + 1.0) / c + stddev * z
    })
}

/// Joint frequency table over (rating given by a, rating given by b).
/// Higher bin index means a more favourable rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub version: u32,
    pub bins_a: usize,
    pub bins_b: usize,
    /// Row-major, `bins_a` rows of `bins_b` counts.
    pub counts: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Histogram {
    pub fn new(bins_a: usize, bins_b: usize, counts: Vec<f64>) -> Result<Self> {
        let h = Self { version: HISTOGRAM_FORMAT_VERSION, bins_a, bins_b, counts, note: None };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != HISTOGRAM_FORMAT_VERSION {
            return Err(CoreError::Version { found: self.version, expected: HISTOGRAM_FORMAT_VERSION });
        }
        if self.bins_a == 0 || self.bins_b == 0 {
            return Err(CoreError::InvalidHistogram("bin counts must be positive".into()));
        }
        if self.bins_a.checked_mul(self.bins_b) != Some(self.counts.len()) {
            return Err(CoreError::InvalidHistogram(format!(
                "{} counts do not fill a {}x{} table",
                self.counts.len(),
                self.bins_a,
                self.bins_b
            )));
        }
        if self.counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CoreError::InvalidHistogram("counts must be finite and non-negative".into()));
        }
        if self.counts.iter().sum::<f64>() <= 0.0 {
            return Err(CoreError::InvalidHistogram("total mass must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: Histogram = serde_json::from_str(text)?;
        h.validate()?;
        Ok(h)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Draws a joint rating for every (a_i, b_j) pair from the histogram and
/// ranks each agent's candidates by the rating it gave, ties broken at random.
pub fn gen_lib<R: RngCore>(n: usize, hist: &Histogram, rng: &mut R) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    hist.validate()?;
    let cells = WeightedIndex::new(&hist.counts)
        .map_err(|e| CoreError::InvalidHistogram(e.to_string()))?;
    let mut score_a = vec![vec![0.0; n]; n];
    let mut score_b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let cell = cells.sample(rng);
            score_a[i][j] = (cell / hist.bins_b) as f64;
            score_b[j][i] = (cell % hist.bins_b) as f64;
        }
    }
    let prefs_a = score_a.iter().map(|s| rank_descending(s, rng)).collect();
    let prefs_b = score_b.iter().map(|s| rank_descending(s, rng)).collect();
    Ok((prefs_a, prefs_b))
}

/// Preference distribution of one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform,
    Discrete {
        #[serde(default = "default_popular")]
        popular_fraction: f64,
    },
    Gauss {
        #[serde(default = "default_stddev")]
        stddev: f64,
    },
    /// Joint two-sided table; must appear on both sides with the same path.
    LibHistogram { path: PathBuf },
}

fn default_popular() -> f64 {
    DEFAULT_POPULAR_FRACTION
}

fn default_stddev() -> f64 {
    DEFAULT_GAUSS_STDDEV
}

impl DistributionSpec {
    fn tag(&self) -> &'static str {
        match self {
            DistributionSpec::Uniform => "U",
            DistributionSpec::Discrete { .. } => "D",
            DistributionSpec::Gauss { .. } => "G",
            DistributionSpec::LibHistogram { .. } => "Lib",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Discrete { popular_fraction: f } if !(f > 0.0 && f <= 1.0) => Err(
                CoreError::InvalidDataset(format!("popular fraction {f} must lie in (0, 1]")),
            ),
            DistributionSpec::Gauss { stddev } if !(stddev >= 0.0 && stddev.is_finite()) => Err(
                CoreError::InvalidDataset(format!("gauss stddev {stddev} must be finite and non-negative")),
            ),
            _ => Ok(()),
        }
    }

    fn side_lists<R: RngCore>(&self, n: usize, rng: &mut R) -> Vec<Vec<usize>> {
        match *self {
            DistributionSpec::Uniform => gen_uniform(n, n, rng),
            DistributionSpec::Discrete { popular_fraction } => gen_discrete(n, n, popular_fraction, rng),
            DistributionSpec::Gauss { stddev } => gen_gauss(n, n, stddev, rng),
            DistributionSpec::LibHistogram { .. } => unreachable!("joint distribution handled by Dataset"),
        }
    }
}

/// The five named dataset settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    UU,
    DD,
    GG,
    UD,
    Lib,
}

impl Setting {
    pub const ALL: [Setting; 5] = [Setting::UU, Setting::DD, Setting::GG, Setting::UD, Setting::Lib];

    /// Side distributions for this setting. `lib_histogram` is required for
    /// [`Setting::Lib`] only.
    pub fn sides(self, lib_histogram: Option<&Path>) -> Result<(DistributionSpec, DistributionSpec)> {
        let u = DistributionSpec::Uniform;
        let d = DistributionSpec::Discrete { popular_fraction: DEFAULT_POPULAR_FRACTION };
        let g = DistributionSpec::Gauss { stddev: DEFAULT_GAUSS_STDDEV };
        Ok(match self {
            Setting::UU => (u.clone(), u),
            Setting::DD => (d.clone(), d),
            Setting::GG => (g.clone(), g),
            Setting::UD => (u, d),
            Setting::Lib => {
                let path = lib_histogram.ok_or_else(|| {
                    CoreError::InvalidDataset("the Lib setting needs a histogram file".into())
                })?;
                let lib = DistributionSpec::LibHistogram { path: path.to_path_buf() };
                (lib.clone(), lib)
            }
        })
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::UU => "UU",
            Setting::DD => "DD",
            Setting::GG => "GG",
            Setting::UD => "UD",
            Setting::Lib => "Lib",
        })
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "UU" => Ok(Setting::UU),
            "DD" => Ok(Setting::DD),
            "GG" => Ok(Setting::GG),
            "UD" => Ok(Setting::UD),
            "LIB" => Ok(Setting::Lib),
            other => Err(format!("unknown distribution setting '{other}' (expected UU|DD|GG|UD|Lib)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub side_a: DistributionSpec,
    pub side_b: DistributionSpec,
    pub n: usize,
    pub seed: u64,
    pub count: usize,
}

impl DatasetSpec {
    pub fn named(setting: Setting, n: usize, seed: u64, count: usize, lib_histogram: Option<&Path>) -> Result<Self> {
        let (side_a, side_b) = setting.sides(lib_histogram)?;
        Ok(Self { side_a, side_b, n, seed, count })
    }

    /// Short label such as "UU" or "Lib".
    pub fn label(&self) -> String {
        match (&self.side_a, &self.side_b) {
            (DistributionSpec::LibHistogram { .. }, _) => "Lib".into(),
            (a, b) => format!("{}{}", a.tag(), b.tag()),
        }
    }
}

/// A validated [`DatasetSpec`] with any histogram loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    spec: DatasetSpec,
    histogram: Option<Histogram>,
}

impl Dataset {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        let histogram = Self::resolve(&spec, None)?;
        Ok(Self { spec, histogram })
    }

    /// Like [`Dataset::new`], but supplies the Lib histogram directly instead
    /// of reading `path` from disk.
    pub fn with_histogram(spec: DatasetSpec, histogram: Histogram) -> Result<Self> {
        let histogram = Self::resolve(&spec, Some(histogram))?;
        Ok(Self { spec, histogram })
    }

    fn resolve(spec: &DatasetSpec, given: Option<Histogram>) -> Result<Option<Histogram>> {
        if spec.n == 0 {
            return Err(CoreError::InvalidDataset("n must be at least 1".into()));
        }
        spec.side_a.validate()?;
        spec.side_b.validate()?;
        match (&spec.side_a, &spec.side_b) {
            (DistributionSpec::LibHistogram { path: pa }, DistributionSpec::LibHistogram { path: pb }) => {
                if pa != pb {
                    return Err(CoreError::InvalidDataset("both sides must share one Lib histogram".into()));
                }
                let hist = match given {
                    Some(h) => h,
                    None => Histogram::load(pa)?,
                };
                hist.validate()?;
                Ok(Some(hist))
            }
            (DistributionSpec::LibHistogram { .. }, _) | (_, DistributionSpec::LibHistogram { .. }) => Err(
                CoreError::InvalidDataset("a Lib histogram must be used on both sides".into()),
            ),
            _ => Ok(None),
        }
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.count
    }

    pub fn is_empty(&self) -> bool {
        self.spec.count == 0
    }

    /// Instance `index`; valid for any index, not only `< count`.
    pub fn instance(&self, index: u64) -> PreferenceInstance {
        self.instance_with_size(index, self.spec.n)
    }

    /// Instance `index` drawn at a size other than the spec's `n`.
    pub fn instance_with_size(&self, index: u64, n: usize) -> PreferenceInstance {
        let mut rng = instance_rng(self.spec.seed, index);
        let (prefs_a, prefs_b) = match &self.histogram {
            Some(h) => gen_lib(n, h, &mut rng).expect("histogram validated at construction"),
            None => {
                let a = self.spec.side_a.side_lists(n, &mut rng);
                let b = self.spec.side_b.side_lists(n, &mut rng);
                (a, b)
            }
        };
        PreferenceInstance::new(prefs_a, prefs_b)
            .expect("generated lists are permutations")
            .with_provenance(Provenance { distribution: self.spec.label(), seed: self.spec.seed })
    }

    pub fn instances(&self) -> impl Iterator<Item = PreferenceInstance> + '_ {
        (0..self.spec.count as u64).map(move |k| self.instance(k))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: MANIFEST_FORMAT_VERSION,
            rng: RNG_NAME.to_string(),
            spec: self.spec.clone(),
            instances: (0..self.spec.count as u64).map(|k| ManifestEntry { id: k, stream: k }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub stream: u64,
}

/// A dataset description plus the per-instance stream indices; enough to
/// regenerate every instance bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub rng: String,
    pub spec: DatasetSpec,
    pub instances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_FORMAT_VERSION {
            return Err(CoreError::Version { found: m.version, expected: MANIFEST_FORMAT_VERSION });
        }
        if m.rng != RNG_NAME {
            return Err(CoreError::InvalidDataset(format!("unsupported generator '{}'", m.rng)));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Self::from_json(&std::fs::read_to_string(path)?)?;
        // Histogram paths are relative to the manifest's directory.
        if let Some(dir) = path.parent() {
            for side in [&mut m.spec.side_a, &mut m.spec.side_b] {
                if let DistributionSpec::LibHistogram { path: p } = side {
                    if p.is_relative() {
                        *p = dir.join(&*p);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Regenerates the listed instances, keyed by id.
    pub fn instances(&self) -> Result<Vec<(u64, PreferenceInstance)>> {
        let ds = Dataset::new(self.spec.clone())?;
        Ok(self.instances.iter().map(|e| (e.id, ds.instance(e.stream))).collect())
    }
}
