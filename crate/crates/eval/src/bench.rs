//! Running methods over a set of instances.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use weavematch_core::solvers::{
    dacc, enumerate_stable, gale_shapley, gs_best, polymin, power_balance, Side, DEFAULT_ENUMERATION_LIMIT,
};
use weavematch_core::{binarize_argmax, binarize_hungarian, CostKind, Matching, PreferenceInstance};
use weavematch_nn::WeaveNet;

use crate::error::{EvalError, Result};
use crate::report::{EvalReport, EvalRow};

/// Instances per eval-mode forward pass.
const PREDICT_CHUNK: usize = 125;

/// How a soft matching becomes a discrete one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binarize {
    /// Row-wise argmax; fails when two rows pick the same column.
    #[default]
    Argmax,
    /// Minimum-cost assignment on `1 - logits`; always one-to-one.
    Hungarian,
}

impl fmt::Display for Binarize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Binarize::Argmax => "argmax",
            Binarize::Hungarian => "hungarian",
        })
    }
}

impl FromStr for Binarize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "argmax" => Ok(Binarize::Argmax),
            "hungarian" | "hung" => Ok(Binarize::Hungarian),
            other => Err(format!("unknown binarization '{other}' (expected argmax|hungarian)")),
        }
    }
}

/// Binarises row-major `n x m` logits.
pub fn binarize(logits: &[f64], n: usize, m: usize, how: Binarize) -> Result<Option<Matching>> {
    Ok(match how {
        Binarize::Argmax => binarize_argmax(logits, n, m)?.matching,
        Binarize::Hungarian => Some(binarize_hungarian(logits, n, m)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Gale-Shapley with side A proposing.
    Gs,
    /// The cheaper of the two Gale-Shapley outcomes.
    GsBest,
    Dacc,
    PowerBalance,
    PolyMin,
    /// Cheapest stable matching by enumeration.
    Oracle,
    Network { label: String, checkpoint: PathBuf, binarize: Binarize },
}

impl Method {
    /// Every classical method, oracle last.
    pub fn algorithms() -> Vec<Method> {
        vec![Method::Gs, Method::GsBest, Method::Dacc, Method::PowerBalance, Method::PolyMin, Method::Oracle]
    }

    pub fn name(&self) -> String {
        match self {
            Method::Gs => "gs".into(),
            Method::GsBest => "gs_best".into(),
            Method::Dacc => "dacc".into(),
            Method::PowerBalance => "powerbalance".into(),
            Method::PolyMin => "polymin".into(),
            Method::Oracle => "oracle".into(),
            Method::Network { label, .. } => label.clone(),
        }
    }

    /// Eligible as the win/tie/loss reference: classical methods other than the oracle.
    pub fn is_baseline(&self) -> bool {
        !matches!(self, Method::Oracle | Method::Network { .. })
    }

    /// Whether the method enumerates stable matchings and so is size-limited.
    pub fn enumerates(&self) -> bool {
        matches!(self, Method::PolyMin | Method::Oracle)
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gs" => Method::Gs,
            "gs_best" => Method::GsBest,
            "dacc" => Method::Dacc,
            "powerbalance" | "power_balance" => Method::PowerBalance,
            "polymin" => Method::PolyMin,
            "oracle" => Method::Oracle,
            _ => return Err(EvalError::UnknownMethod(s.to_string())),
        })
    }
}

/// Runs a classical method on one instance.
pub fn solve(method: &Method, inst: &PreferenceInstance, kind: CostKind) -> Result<Matching> {
    Ok(match method {
        Method::Gs => gale_shapley(inst, Side::A)?,
        Method::GsBest => gs_best(inst, kind)?,
        Method::Dacc => dacc(inst)?,
        Method::PowerBalance => power_balance(inst, None)?,
        Method::PolyMin => polymin(inst, DEFAULT_ENUMERATION_LIMIT)?,
        Method::Oracle => enumerate_stable(inst, DEFAULT_ENUMERATION_LIMIT)?.optimal(kind).0.clone(),
        Method::Network { label, .. } => {
            return Err(EvalError::Input(format!("{label} is a network; use run_benchmark")))
        }
    })
}

/// Eval-mode logits of every instance, row-major. Consecutive instances of
/// one size share a forward pass.
pub fn network_logits(net: &WeaveNet<f32>, instances: &[PreferenceInstance]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(instances.len());
    let mut start = 0;
    while start < instances.len() {
        let n = instances[start].n();
        let mut end = start + 1;
        while end < instances.len() && end - start < PREDICT_CHUNK && instances[end].n() == n {
            end += 1;
        }
        let soft = net.predict_instances(&instances[start..end])?;
        out.extend((0..end - start).map(|b| soft.instance_logits(b)));
        start = end;
    }
    Ok(out)
}

/// Evaluates every method on every instance and aggregates the rows. The
/// oracle, when listed, supplies the optimal-hit rates.
pub fn run_benchmark(instances: &[(u64, PreferenceInstance)], methods: &[Method], kind: CostKind) -> Result<EvalReport> {
    if instances.is_empty() || methods.is_empty() {
        return Err(EvalError::Input("a benchmark needs at least one instance and one method".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for m in methods {
        let name = m.name();
        if names.contains(&name) {
            return Err(EvalError::Input(format!("method '{name}' listed twice")));
        }
        names.push(name);
    }
    let mut rows = Vec::with_capacity(instances.len() * methods.len());
    for method in methods {
        let name = method.name();
        match method {
            Method::Network { checkpoint, binarize: how, .. } => {
                let net = WeaveNet::<f32>::load(checkpoint)
                    .map_err(|source| EvalError::Checkpoint { path: checkpoint.clone(), source })?;
                let insts: Vec<PreferenceInstance> = instances.iter().map(|(_, i)| i.clone()).collect();
                let logits = network_logits(&net, &insts)?;
                for ((id, inst), l) in instances.iter().zip(&logits) {
                    let m = binarize(l, inst.n(), inst.m(), *how)?;
                    rows.push(EvalRow::assess(*id, &name, inst, m.as_ref())?);
                }
            }
            _ => {
                for (id, inst) in instances {
                    let m = solve(method, inst, kind)?;
                    rows.push(EvalRow::assess(*id, &name, inst, Some(&m))?);
                }
            }
        }
    }
    let candidates: Vec<String> = methods.iter().filter(|m| m.is_baseline()).map(Method::name).collect();
    let oracle = methods.iter().any(|m| *m == Method::Oracle).then_some("oracle");
    EvalReport::from_rows(rows, kind, &candidates, oracle)
}
