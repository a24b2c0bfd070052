//! Parabolic BMO: the two-sided oscillation functional, its exact optimal
//! offsets, John–Nirenberg decay fits and the passage between PBMO functions
//! and weights.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Direction, Exponents, FamilyProvenance, ParabolicRectangle, RectangleFamily};
use crate::gridfn::{CellBox, GridFunction};
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::weights::snapped_halves;

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BmoReport<S: Scalar> {
    /// Largest per-rectangle minimum of the oscillation functional.
    pub seminorm: S,
    /// The same supremum evaluated at the canonical offsets.
    pub canonical_seminorm: S,
    pub witness: ParabolicRectangle<S>,
    pub direction: Direction,
    pub gamma: S,
    pub provenance: FamilyProvenance<S>,
    pub evaluated: usize,
    #[serde(skip)]
    pub members: Vec<Option<MemberOscillation<S>>>,
}

/// Oscillation data of one family member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MemberOscillation<S> {
    pub offset: S,
    pub value: S,
    pub canonical_offset: S,
    pub canonical_value: S,
}

fn collect<S: Scalar>(u: &GridFunction<S>, cells: &CellBox) -> Vec<S> {
    let mut out = Vec::with_capacity(cells.cell_count());
    u.spec().for_each_cell(cells, |i| out.push(u.get(i)));
    out
}

/// `avg_{future} (u - a)^+ + avg_{past} (a - u)^+` on value lists in
/// storage order.
fn objective_on<S: Scalar>(future: &[S], past: &[S], a: S) -> S {
    let up = future.iter().fold(S::zero(), |s, &x| s + (x - a).max(S::zero()));
    let down = past.iter().fold(S::zero(), |s, &x| s + (a - x).max(S::zero()));
    up / from_usize(future.len()) + down / from_usize(past.len())
}

fn sorted<S: Scalar>(v: &[S]) -> Vec<S> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    s
}

/// Exact minimiser of [`objective_on`]. The objective is convex and
/// piecewise linear with breakpoints at the data; its right derivative at
/// `a` is `#{past <= a}/N- - #{future > a}/N+`, compared here in integers.
/// On a flat optimal stretch the midpoint is returned.
fn optimal_offset<S: Scalar>(future: &[S], past: &[S]) -> S {
    let fs = sorted(future);
    let ps = sorted(past);
    let (np, nm) = (fs.len(), ps.len());
    let mut candidates: Vec<S> = fs.iter().chain(&ps).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for (k, &a) in candidates.iter().enumerate() {
        let above = np - fs.partition_point(|x| *x <= a);
        let below = ps.partition_point(|x| *x <= a);
        let (lhs, rhs) = (below * np, above * nm);
        if lhs > rhs {
            return a;
        }
        if lhs == rhs {
            return (a + candidates[k + 1]) * lit(0.5);
        }
    }
    unreachable!("the right derivative is positive at the largest breakpoint")
}

/// `-log avg_{past} e^{-u}`, evaluated stably.
fn canonical_offset<S: Scalar>(past: &[S]) -> S {
    let m = past.iter().fold(S::neg_infinity(), |m, &x| m.max(-x));
    let mean = past.iter().fold(S::zero(), |s, &x| s + (-x - m).exp()) / from_usize(past.len());
    -(m + mean.ln())
}

fn halves<S: Scalar>(
    u: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    rect: &ParabolicRectangle<S>,
) -> Result<Option<(Vec<S>, Vec<S>)>> {
    Ok(snapped_halves(u.spec(), rect, exps.p(), exps.gamma(), direction)?
        .map(|(past, future)| (collect(u, &future), collect(u, &past))))
}

/// Oscillation functional of one member at a given offset.
pub fn oscillation_at<S: Scalar>(
    u: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    rect: &ParabolicRectangle<S>,
    offset: S,
) -> Result<Option<S>> {
    Ok(halves(u, exps, direction, rect)?.map(|(f, p)| objective_on(&f, &p, offset)))
}

/// Optimal and canonical offsets of one member.
pub fn member_oscillation<S: Scalar>(
    u: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    rect: &ParabolicRectangle<S>,
) -> Result<Option<MemberOscillation<S>>> {
    let Some((future, past)) = halves(u, exps, direction, rect)? else {
        return Ok(None);
    };
    let offset = optimal_offset(&future, &past);
    let canonical_offset = canonical_offset(&past);
    Ok(Some(MemberOscillation {
        offset,
        value: objective_on(&future, &past, offset),
        canonical_offset,
        canonical_value: objective_on(&future, &past, canonical_offset),
    }))
}

/// PBMO^+ seminorm of `u` over `family` (PBMO^- for `Backward`), with the
/// inner minimum over offsets solved exactly.
pub fn pbmo_seminorm<S: Scalar>(
    u: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    family: &RectangleFamily<S>,
) -> Result<BmoReport<S>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let members: Vec<Option<MemberOscillation<S>>> = family
        .members
        .par_iter()
        .map(|r| member_oscillation(u, exps, direction, r))
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    let mut canonical = S::zero();
    for (i, m) in members.iter().enumerate() {
        if let Some(m) = m {
            canonical = canonical.max(m.canonical_value);
            if best.is_none_or(|b| m.value > members[b].unwrap().value) {
                best = Some(i);
            }
        }
    }
    let arg = best.ok_or(Error::EmptyFamily)?;
    Ok(BmoReport {
        seminorm: members[arg].unwrap().value,
        canonical_seminorm: canonical,
        witness: family.members[arg].clone(),
        direction,
        gamma: exps.gamma(),
        provenance: family.provenance.clone(),
        evaluated: members.iter().filter(|m| m.is_some()).count(),
        members,
    })
}

/// Least-squares fit of `log(|level set| / |R|) = log A - B lambda` for one
/// side of a rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayFit<S> {
    pub a: S,
    pub b: S,
    /// Coefficient of determination of the log-linear fit.
    pub quality: S,
    /// Number of levels with a nonempty level set.
    pub points: usize,
    /// Every level set was empty: decay holds trivially.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct JnReport<S> {
    /// The weaker of the two sides (smaller `b`).
    pub fit: DecayFit<S>,
    pub upper: DecayFit<S>,
    pub lower: DecayFit<S>,
    pub lambdas_upper: Vec<S>,
    pub lambdas_lower: Vec<S>,
    pub measures_upper: Vec<S>,
    pub measures_lower: Vec<S>,
}

pub const JN_LEVELS: usize = 16;
pub const JN_MIN_POINTS: usize = 4;

fn percentile_99<S: Scalar>(values: &[S]) -> S {
    let s = sorted(values);
    let rank = ((s.len() as f64) * 0.99).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

fn fit_side<S: Scalar>(excess: &[S], full_cells: usize) -> Result<(DecayFit<S>, Vec<S>, Vec<S>)> {
    let mut top = percentile_99(excess);
    if !(top > S::zero()) {
        top = excess.iter().fold(S::zero(), |m, &x| m.max(x));
    }
    if !(top > S::zero()) {
        let fit = DecayFit { a: S::zero(), b: S::infinity(), quality: S::one(), points: 0, degenerate: true };
        return Ok((fit, Vec::new(), Vec::new()));
    }
    let lambdas: Vec<S> =
        (0..JN_LEVELS).map(|k| top * from_usize::<S>(k) / from_usize::<S>(JN_LEVELS - 1)).collect();
    let measures: Vec<S> = lambdas
        .iter()
        .map(|&l| from_usize::<S>(excess.iter().filter(|&&x| x > l).count()) / from_usize::<S>(full_cells))
        .collect();
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(&measures)
        .filter(|(_, m)| **m > S::zero())
        .map(|(l, m)| (to_f64(*l), to_f64(*m).ln()))
        .collect();
    if pts.len() < JN_MIN_POINTS {
        return Err(Error::FitRefused { points: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let quality = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let fit = DecayFit {
        a: lit(intercept.exp()),
        b: lit(-slope),
        quality: lit(quality),
        points: pts.len(),
        degenerate: false,
    };
    Ok((fit, lambdas, measures))
}

/// John–Nirenberg decay fit on `rect` at offset `a`: level sets of
/// `(u - a)^+` on the future half and of `(a - u)^+` on the past half,
/// measured relative to the whole rectangle.
pub fn jn_decay_fit<S: Scalar>(
    u: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    rect: &ParabolicRectangle<S>,
    a: S,
) -> Result<JnReport<S>> {
    let spec = u.spec();
    let (past, future) =
        snapped_halves(spec, rect, exps.p(), exps.gamma(), direction)?.ok_or(Error::EmptyBox)?;
    let full = spec.snap(&rect.full(exps.p()))?.cell_count();
    let up: Vec<S> = collect(u, &future).into_iter().map(|x| (x - a).max(S::zero())).collect();
    let down: Vec<S> = collect(u, &past).into_iter().map(|x| (a - x).max(S::zero())).collect();
    let (upper, lambdas_upper, measures_upper) = fit_side(&up, full)?;
    let (lower, lambdas_lower, measures_lower) = fit_side(&down, full)?;
    let fit = if lower.b < upper.b { lower } else { upper };
    Ok(JnReport { fit, upper, lower, lambdas_upper, lambdas_lower, measures_upper, measures_lower })
}

/// `e^{-eps u}`.
pub fn bmo_to_weight<S: Scalar>(u: &GridFunction<S>, eps: S) -> Result<GridFunction<S>> {
    let w: Vec<S> = u.values().iter().map(|&x| (-eps * x).exp()).collect();
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > S::zero())) {
        return Err(Error::Overflow(format!(
            "exp(-{eps} * {}) at cell {i} is outside the floating range",
            u.get(i)
        )));
    }
    u.with_values(w)
}

/// `-scale log w`.
pub fn weight_to_bmo<S: Scalar>(w: &GridFunction<S>, scale: S) -> Result<GridFunction<S>> {
    if let Some(i) = w.values().iter().position(|v| !(*v > S::zero())) {
        return Err(Error::NonPositive { index: i, value: to_f64(w.get(i)) });
    }
    w.map(|x| -scale * x.ln())
}
