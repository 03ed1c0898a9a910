//! Per-instance rows, per-method aggregates, and report files.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use weavematch_core::{cost_report, count_blocking_pairs, CostKind, Matching, PreferenceInstance};

use crate::error::{EvalError, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Column order of the per-instance CSV.
pub const ROW_COLUMNS: [&str; 9] =
    ["instance_id", "method", "valid", "stable", "blocking_pairs", "seq", "bal", "egal", "reg"];

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 18] = [
    "method",
    "instances",
    "valid_rate",
    "stable_rate",
    "mean_seq",
    "mean_bal",
    "mean_egal",
    "mean_reg",
    "optimal_hit_rate",
    "win",
    "tie",
    "loss",
    "bp_0",
    "bp_1",
    "bp_2",
    "bp_3plus",
    "bp_fail",
    "baseline",
];

/// Outcome of one method on one instance. Costs are present only for
/// perfect matchings; `blocking_pairs` is absent when binarisation failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance_id: u64,
    pub method: String,
    /// The output is a one-to-one matching.
    pub valid: bool,
    pub stable: bool,
    pub blocking_pairs: Option<usize>,
    pub seq: Option<u64>,
    pub bal: Option<u64>,
    pub egal: Option<u64>,
    pub reg: Option<u64>,
}

impl EvalRow {
    /// Scores `matching` against `inst`; `None` stands for a failed binarisation.
    pub fn assess(instance_id: u64, method: &str, inst: &PreferenceInstance, matching: Option<&Matching>) -> Result<Self> {
        let mut row = EvalRow {
            instance_id,
            method: method.to_string(),
            valid: false,
            stable: false,
            blocking_pairs: None,
            seq: None,
            bal: None,
            egal: None,
            reg: None,
        };
        let Some(m) = matching else { return Ok(row) };
        if (m.n(), m.m()) != (inst.n(), inst.m()) {
            return Err(EvalError::Input(format!(
                "{method}: matching is {}x{} but instance {instance_id} is {}x{}",
                m.n(),
                m.m(),
                inst.n(),
                inst.m()
            )));
        }
        let bp = count_blocking_pairs(inst, m);
        row.valid = true;
        row.blocking_pairs = Some(bp);
        row.stable = bp == 0;
        if inst.is_square() && m.is_perfect() {
            let c = cost_report(inst, m)?;
            (row.seq, row.bal, row.egal, row.reg) = (Some(c.seq), Some(c.bal), Some(c.egal), Some(c.reg));
        }
        Ok(row)
    }

    pub fn cost(&self, kind: CostKind) -> Option<u64> {
        match kind {
            CostKind::Seq => self.seq,
            CostKind::Bal => self.bal,
            CostKind::Egal => self.egal,
            CostKind::Reg => self.reg,
        }
    }

    /// Stable and carrying costs: the rows that count towards mean costs.
    fn counts(&self) -> bool {
        self.stable && self.seq.is_some()
    }
}

/// Blocking-pair buckets; every row lands in exactly one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingHistogram {
    pub zero: usize,
    pub one: usize,
    pub two: usize,
    pub three_plus: usize,
    pub fail: usize,
}

impl BlockingHistogram {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a EvalRow>) -> Self {
        let mut h = Self::default();
        for r in rows {
            match r.blocking_pairs {
                None => h.fail += 1,
                Some(0) => h.zero += 1,
                Some(1) => h.one += 1,
                Some(2) => h.two += 1,
                Some(_) => h.three_plus += 1,
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.zero + self.one + self.two + self.three_plus + self.fail
    }
}

/// Percentages of instances won, tied, and lost against a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub win: f64,
    pub tie: f64,
    pub loss: f64,
}

fn check_aligned(a: &[EvalRow], b: &[EvalRow]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(EvalError::RowMismatch(format!("{} rows against {}", a.len(), b.len())));
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x.instance_id != y.instance_id) {
        return Err(EvalError::RowMismatch(format!("instance {} paired with {}", x.instance_id, y.instance_id)));
    }
    Ok(())
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// Compares `ours` with `baseline` instance by instance on `kind`. An
/// unstable or invalid output of ours is a loss whatever its cost; ties
/// require equal integer costs.
pub fn compare_wtl(ours: &[EvalRow], baseline: &[EvalRow], kind: CostKind) -> Result<WinTieLoss> {
    check_aligned(ours, baseline)?;
    let (mut win, mut tie, mut loss) = (0, 0, 0);
    for (o, b) in ours.iter().zip(baseline) {
        match (o.counts(), b.counts()) {
            (false, _) => loss += 1,
            (true, false) => win += 1,
            (true, true) => match o.cost(kind).cmp(&b.cost(kind)) {
                std::cmp::Ordering::Less => win += 1,
                std::cmp::Ordering::Equal => tie += 1,
                std::cmp::Ordering::Greater => loss += 1,
            },
        }
    }
    let n = ours.len();
    Ok(WinTieLoss { win: percent(win, n), tie: percent(tie, n), loss: percent(loss, n) })
}

/// Percentage of instances where `rows` is stable and reaches the oracle's
/// cost on `kind`.
pub fn optimal_hit_rate(rows: &[EvalRow], oracle: &[EvalRow], kind: CostKind) -> Result<f64> {
    check_aligned(rows, oracle)?;
    let mut hits = 0;
    for (r, o) in rows.iter().zip(oracle) {
        let best = o.cost(kind).filter(|_| o.stable).ok_or_else(|| {
            EvalError::RowMismatch(format!("oracle row for instance {} is not a stable matching", o.instance_id))
        })?;
        if r.counts() && r.cost(kind) == Some(best) {
            hits += 1;
        }
    }
    Ok(percent(hits, rows.len()))
}

/// Aggregates of one method's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub valid_rate: f64,
    pub stable_rate: f64,
    /// Mean costs over the stable rows; absent when there are none.
    pub mean_seq: Option<f64>,
    pub mean_bal: Option<f64>,
    pub mean_egal: Option<f64>,
    pub mean_reg: Option<f64>,
    pub optimal_hit_rate: Option<f64>,
    /// Against the report's baseline; absent for the baseline itself.
    pub win_tie_loss: Option<WinTieLoss>,
    pub histogram: BlockingHistogram,
}

impl MethodSummary {
    fn from_rows(method: &str, rows: &[EvalRow]) -> Self {
        let stable: Vec<&EvalRow> = rows.iter().filter(|r| r.counts()).collect();
        let mean = |f: fn(&EvalRow) -> Option<u64>| {
            if stable.is_empty() {
                None
            } else {
                Some(stable.iter().map(|r| f(r).unwrap_or(0) as f64).sum::<f64>() / stable.len() as f64)
            }
        };
        MethodSummary {
            method: method.to_string(),
            instances: rows.len(),
            valid_rate: percent(rows.iter().filter(|r| r.valid).count(), rows.len()),
            stable_rate: percent(rows.iter().filter(|r| r.stable).count(), rows.len()),
            mean_seq: mean(|r| r.seq),
            mean_bal: mean(|r| r.bal),
            mean_egal: mean(|r| r.egal),
            mean_reg: mean(|r| r.reg),
            optimal_hit_rate: None,
            win_tie_loss: None,
            histogram: BlockingHistogram::from_rows(rows),
        }
    }

    pub fn mean_cost(&self, kind: CostKind) -> Option<f64> {
        match kind {
            CostKind::Seq => self.mean_seq,
            CostKind::Bal => self.mean_bal,
            CostKind::Egal => self.mean_egal,
            CostKind::Reg => self.mean_reg,
        }
    }
}

/// Rows of every method plus their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub cost_kind: CostKind,
    /// Method the others are compared with: the candidate baseline with the
    /// lowest mean cost.
    pub baseline: Option<String>,
    pub oracle: Option<String>,
    pub summaries: Vec<MethodSummary>,
    #[serde(skip)]
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Aggregates `rows`, which must list the same instances in the same
    /// order for every method. `candidates` are the methods eligible as the
    /// win/tie/loss baseline; `oracle`, if given, feeds the optimal-hit rate.
    pub fn from_rows(rows: Vec<EvalRow>, kind: CostKind, candidates: &[String], oracle: Option<&str>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<EvalRow>> = HashMap::new();
        for r in &rows {
            if !groups.contains_key(&r.method) {
                order.push(r.method.clone());
            }
            groups.entry(r.method.clone()).or_default().push(r.clone());
        }
        if order.is_empty() {
            return Err(EvalError::Input("no rows to report".into()));
        }
        let first = &groups[&order[0]];
        for m in &order[1..] {
            check_aligned(&groups[m], first)?;
        }
        if let Some(o) = oracle {
            if !groups.contains_key(o) {
                return Err(EvalError::Input(format!("oracle method '{o}' has no rows")));
            }
        }

        let mut summaries: Vec<MethodSummary> = order.iter().map(|m| MethodSummary::from_rows(m, &groups[m])).collect();
        let mut baseline: Option<(String, f64)> = None;
        for s in &summaries {
            if !candidates.contains(&s.method) {
                continue;
            }
            if let Some(c) = s.mean_cost(kind) {
                if baseline.as_ref().is_none_or(|(_, best)| c < *best) {
                    baseline = Some((s.method.clone(), c));
                }
            }
        }
        let baseline = baseline.map(|(m, _)| m);
        for s in &mut summaries {
            let own = &groups[&s.method];
            if let Some(o) = oracle {
                s.optimal_hit_rate = Some(optimal_hit_rate(own, &groups[o], kind)?);
            }
            if let Some(b) = baseline.as_ref().filter(|b| **b != s.method) {
                s.win_tie_loss = Some(compare_wtl(own, &groups[b], kind)?);
            }
        }
        Ok(EvalReport {
            version: REPORT_FORMAT_VERSION,
            cost_kind: kind,
            baseline,
            oracle: oracle.map(str::to_string),
            summaries,
            rows,
        })
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn rows_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a EvalRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ROW_COLUMNS)?;
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.instance_id.to_string(),
                r.method.clone(),
                r.valid.to_string(),
                r.stable.to_string(),
                r.blocking_pairs.map(|x| x.to_string()).unwrap_or_default(),
                opt(r.seq),
                opt(r.bal),
                opt(r.egal),
                opt(r.reg),
            ])?;
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUMMARY_COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for s in &self.summaries {
            let wtl = s.win_tie_loss;
            let h = &s.histogram;
            w.write_record([
                s.method.clone(),
                s.instances.to_string(),
                format!("{:.4}", s.valid_rate),
                format!("{:.4}", s.stable_rate),
                opt(s.mean_seq),
                opt(s.mean_bal),
                opt(s.mean_egal),
                opt(s.mean_reg),
                opt(s.optimal_hit_rate),
                opt(wtl.map(|x| x.win)),
                opt(wtl.map(|x| x.tie)),
                opt(wtl.map(|x| x.loss)),
                h.zero.to_string(),
                h.one.to_string(),
                h.two.to_string(),
                h.three_plus.to_string(),
                h.fail.to_string(),
                (self.baseline.as_deref() == Some(s.method.as_str())).to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `rows.csv`, `summary.csv`, and `summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv()?)?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv()?)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
