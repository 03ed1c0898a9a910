//! Relaxed matching objectives on soft assignment matrices.
//!
//! All losses take `[B, N, M]` soft matchings (row `i` spreads agent `a_i`'s
//! mass over the candidates) and return the mean over the batch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use weavematch_autodiff::{Scalar, Tape, Tensor, Var};

use crate::error::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Matrix constraint plus stability.
    Sm,
    /// `Sm` plus the sex-equality (fairness) term.
    Fsm,
    /// `Sm` plus the balance term.
    Bsm,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Sm => "sm",
            LossKind::Fsm => "fsm",
            LossKind::Bsm => "bsm",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sm" => Ok(LossKind::Sm),
            "fsm" => Ok(LossKind::Fsm),
            "bsm" => Ok(LossKind::Bsm),
            other => Err(format!("unknown loss '{other}' (expected sm|fsm|bsm)")),
        }
    }
}

/// Form of the matrix-constraint term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixLoss {
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for MatrixLoss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(MatrixLoss::Cosine),
            "euclidean" | "l1" => Ok(MatrixLoss::Euclidean),
            other => Err(format!("unknown matrix loss '{other}' (expected cosine|euclidean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub lambda_f: f64,
    pub lambda_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_m: 1.0, lambda_s: 0.7, lambda_f: 0.01, lambda_b: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_m, self.lambda_s, self.lambda_f, self.lambda_b];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(NnError::Config(format!("loss weights must be finite and non-negative, got {all:?}")));
        }
        Ok(())
    }
}

/// Loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub lm: f64,
    pub ls: f64,
    /// Fairness (`fsm`) or balance (`bsm`) term; 0 for `sm`.
    pub lf_or_lb: f64,
    pub total: f64,
}

/// Recorded loss terms.
pub struct LossTerms {
    pub lm: Var,
    pub ls: Var,
    pub fair: Option<Var>,
    pub total: Var,
}

impl LossTerms {
    pub fn breakdown<T: Scalar>(&self, tape: &Tape<T>) -> LossBreakdown {
        let get = |v: Var| tape.value(v).item().to_f64_lossy();
        LossBreakdown {
            lm: get(self.lm),
            ls: get(self.ls),
            lf_or_lb: self.fair.map(get).unwrap_or(0.0),
            total: get(self.total),
        }
    }
}

/// Score-derived constants of a batch, placed on a tape once and shared by
/// every loss evaluation on it.
pub struct ScoreConsts {
    batch: usize,
    n: usize,
    m: usize,
    /// `S^A`, `[B, N, M]`.
    sa: Var,
    /// `S^B` transposed to `[B, N, M]`.
    sb_t: Var,
    /// `[B*N, M, M]`: entry `(v, w, j)` is `max(S^A[v,w] - S^A[v,j], 0)`.
    envy_a: Var,
    /// `[B*M, N, N]`: entry `(w, v, i)` is `max(S^B[w,v] - S^B[w,i], 0)`.
    envy_b: Var,
}

fn envy<T: Scalar>(s: &[T], rows: usize, k: usize) -> Tensor<T> {
    let mut out = Vec::with_capacity(rows * k * k);
    for row in s.chunks(k) {
        for &target in row {
            out.extend(row.iter().map(|&held| (target - held).max(T::zero())));
        }
    }
    Tensor::new(vec![rows, k, k], out).expect("rows * k * k entries")
}

impl ScoreConsts {
    /// `sa` is `[B, N, M]`, `sb` is `[B, M, N]`, both already scaled.
    pub fn new<T: Scalar>(tape: &mut Tape<T>, sa: &Tensor<T>, sb: &Tensor<T>) -> Result<Self> {
        let (a, b) = (sa.shape(), sb.shape());
        if a.len() != 3 || b.len() != 3 || a[0] != b[0] || a[1] != b[2] || a[2] != b[1] {
            return Err(NnError::Input(format!("score tensors {a:?} and {b:?} do not describe one market")));
        }
        let (batch, n, m) = (a[0], a[1], a[2]);
        let envy_a = tape.constant(envy(sa.data(), batch * n, m));
        let envy_b = tape.constant(envy(sb.data(), batch * m, n));
        let sa_v = tape.constant(sa.clone());
        let sb_v = tape.constant(sb.clone());
        let sb_t = tape.swap_axes(sb_v, 1)?;
        Ok(Self { batch, n, m, sa: sa_v, sb_t, envy_a, envy_b })
    }

    fn check(&self, tape: &Tape<impl Scalar>, m: Var) -> Result<()> {
        if tape.shape(m) != [self.batch, self.n, self.m] {
            return Err(NnError::Input(format!(
                "soft matching {:?} does not match scores [{}, {}, {}]",
                tape.shape(m),
                self.batch,
                self.n,
                self.m
            )));
        }
        Ok(())
    }
}

fn mean_row_cosine<T: Scalar>(tape: &mut Tape<T>, x: Var, y: Var) -> Result<Var> {
    let num = tape.mul(x, y)?;
    let num = tape.sum_last(num)?;
    let nx = tape.l2norm_last(x)?;
    let ny = tape.l2norm_last(y)?;
    if tape.value(nx).data().iter().chain(tape.value(ny).data()).any(|v| *v == T::zero()) {
        return Err(NnError::Input("cosine of a zero-norm row".into()));
    }
    let den = tape.mul(nx, ny)?;
    let cos = tape.div(num, den)?;
    Ok(tape.mean(cos))
}

/// One minus the mean cosine agreement between each row of `ma` and the
/// matching column of `mb`, averaged over both directions. `ma` is
/// `[B, N, M]`, `mb` is `[B, M, N]`.
pub fn loss_m_cosine<T: Scalar>(tape: &mut Tape<T>, ma: Var, mb: Var) -> Result<Var> {
    let mb_t = tape.swap_axes(mb, 1)?;
    let ma_t = tape.swap_axes(ma, 1)?;
    let c1 = mean_row_cosine(tape, ma, mb_t)?;
    let c2 = mean_row_cosine(tape, mb, ma_t)?;
    let c = tape.add(c1, c2)?;
    let half = tape.scale(c, -0.5);
    Ok(tape.add_scalar(half, 1.0))
}

/// `sum |ma[i,j] - mb[j,i]|`, averaged over the batch.
pub fn loss_m_euclidean<T: Scalar>(tape: &mut Tape<T>, ma: Var, mb: Var) -> Result<Var> {
    let batch = tape.shape(ma).first().copied().unwrap_or(1).max(1);
    let mb_t = tape.swap_axes(mb, 1)?;
    let d = tape.sub(ma, mb_t)?;
    let a = tape.abs(d);
    let s = tape.sum(a);
    Ok(tape.scale(s, 1.0 / batch as f64))
}

/// Justified-envy stability penalty: for every pair `(a_v, b_w)`, the
/// product of how much `a_v`'s assigned mass sits on candidates it likes
/// less than `b_w` and how much `b_w`'s sits on agents it likes less than `a_v`.
pub fn loss_s<T: Scalar>(tape: &mut Tape<T>, m: Var, c: &ScoreConsts) -> Result<Var> {
    c.check(tape, m)?;
    let (b, n, k) = (c.batch, c.n, c.m);
    let col = tape.reshape(m, &[b * n, k, 1])?;
    let ga = tape.bmm(c.envy_a, col)?;
    let ga = tape.reshape(ga, &[b, n, k])?;
    let mt = tape.swap_axes(m, 1)?;
    let col = tape.reshape(mt, &[b * k, n, 1])?;
    let gb = tape.bmm(c.envy_b, col)?;
    let gb = tape.reshape(gb, &[b, k, n])?;
    let gb = tape.swap_axes(gb, 1)?;
    let both = tape.mul(ga, gb)?;
    let s = tape.sum(both);
    Ok(tape.scale(s, 1.0 / b as f64))
}

/// Per-instance satisfaction of each side, `[B]` each.
fn satisfaction<T: Scalar>(tape: &mut Tape<T>, m: Var, c: &ScoreConsts) -> Result<(Var, Var)> {
    c.check(tape, m)?;
    let mut side = |s: Var| -> Result<Var> {
        let p = tape.mul(m, s)?;
        let p = tape.sum_last(p)?;
        Ok(tape.sum_last(p)?)
    };
    let a = side(c.sa)?;
    let b = side(c.sb_t)?;
    Ok((a, b))
}

/// `|S(m; A) - S(m; B)| / N`, averaged over the batch.
pub fn loss_f<T: Scalar>(tape: &mut Tape<T>, m: Var, c: &ScoreConsts) -> Result<Var> {
    let (a, b) = satisfaction(tape, m, c)?;
    let d = tape.sub(a, b)?;
    let d = tape.abs(d);
    let mean = tape.mean(d);
    Ok(tape.scale(mean, 1.0 / c.n as f64))
}

/// `-min(S(m; A), S(m; B)) / N`, averaged over the batch.
pub fn loss_b<T: Scalar>(tape: &mut Tape<T>, m: Var, c: &ScoreConsts) -> Result<Var> {
    let (a, b) = satisfaction(tape, m, c)?;
    let low = tape.min2(a, b)?;
    let mean = tape.mean(low);
    Ok(tape.scale(mean, -1.0 / c.n as f64))
}

/// Weighted composite on logits `[B, N, M]`. The stability and fairness
/// terms are averaged over the row softmax and the transposed column softmax.
pub fn composite<T: Scalar>(
    tape: &mut Tape<T>,
    kind: LossKind,
    matrix: MatrixLoss,
    logits: Var,
    c: &ScoreConsts,
    w: &LossWeights,
) -> Result<LossTerms> {
    let ma = tape.softmax_last(logits)?;
    let lt = tape.swap_axes(logits, 1)?;
    let mb = tape.softmax_last(lt)?;
    let lm = match matrix {
        MatrixLoss::Cosine => loss_m_cosine(tape, ma, mb)?,
        MatrixLoss::Euclidean => loss_m_euclidean(tape, ma, mb)?,
    };
    let mb_t = tape.swap_axes(mb, 1)?;
    let mut ls_parts = Vec::with_capacity(2);
    let mut fair_parts = Vec::with_capacity(2);
    for m in [ma, mb_t] {
        ls_parts.push(loss_s(tape, m, c)?);
        match kind {
            LossKind::Sm => {}
            LossKind::Fsm => fair_parts.push(loss_f(tape, m, c)?),
            LossKind::Bsm => fair_parts.push(loss_b(tape, m, c)?),
        }
    }
    let ls = tape.add(ls_parts[0], ls_parts[1])?;
    let ls = tape.scale(ls, 0.5);
    let fair = if fair_parts.is_empty() {
        None
    } else {
        let f = tape.add(fair_parts[0], fair_parts[1])?;
        Some(tape.scale(f, 0.5))
    };
    let wm = tape.scale(lm, w.lambda_m);
    let ws = tape.scale(ls, w.lambda_s);
    let mut total = tape.add(wm, ws)?;
    if let Some(f) = fair {
        let lambda = if kind == LossKind::Fsm { w.lambda_f } else { w.lambda_b };
        let wf = tape.scale(f, lambda);
        total = tape.add(total, wf)?;
    }
    Ok(LossTerms { lm, ls, fair, total })
}
