//! Estimators for the one-sided weight classes.
//!
//! Every supremum in the class definitions is taken over a finite
//! [`RectangleFamily`] (or a finite scale list for the pointwise `A_1`
//! condition) and reported together with the member that attains it.

mod norms;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use norms::{strong_type_ratio, weak_type_ratio, StrongTypeReport, WeakTypeReport};

use crate::error::{Error, Result};
use crate::geometry::{Direction, Exponents, FamilyProvenance, ParabolicRectangle, RectangleFamily};
use crate::gridfn::{CellBox, GridFunction, GridSpec};
use crate::maximal::{maximal, EvalPath};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Where a supremum was attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Witness<S> {
    Rectangle { rectangle: ParabolicRectangle<S> },
    Point { index: usize, x: Vec<S>, t: S },
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightReport<S: Scalar> {
    pub quantity: &'static str,
    pub constant: S,
    pub witness: Witness<S>,
    pub exponents: Exponents<S>,
    pub direction: Direction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<FamilyProvenance<S>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<S>>,
    /// Family members (or grid points) that entered the supremum.
    pub evaluated: usize,
    /// Family members whose snapped halves were empty.
    pub skipped: usize,
    /// Value per family member, `None` where skipped.
    #[serde(skip)]
    pub per_member: Vec<Option<S>>,
}

/// Outcome of comparing an estimate before and after one refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Relative change below 5%.
    Stable,
    /// Growth by a factor of at least 2.
    Diverging,
    /// Neither of the above.
    Inconclusive,
}

pub const STABLE_TOLERANCE: f64 = 0.05;
pub const DIVERGENCE_FACTOR: f64 = 2.0;

pub fn verdict<S: Scalar>(coarse: S, refined: S) -> Verdict {
    let (a, b) = (to_f64(coarse), to_f64(refined));
    if !b.is_finite() || b >= DIVERGENCE_FACTOR * a {
        Verdict::Diverging
    } else if (b - a).abs() < STABLE_TOLERANCE * a.abs() {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict on a whole refinement history: diverging if any step doubles,
/// stable if the last step changes by less than 5%.
pub fn history_verdict<S: Scalar>(history: &[S]) -> Verdict {
    if history.len() < 2 {
        return Verdict::Inconclusive;
    }
    if history.windows(2).any(|w| verdict(w[0], w[1]) == Verdict::Diverging) {
        return Verdict::Diverging;
    }
    verdict(history[history.len() - 2], history[history.len() - 1])
}

/// Snapped `(past, future)` cell ranges of a family member, or `None` when
/// either half is narrower than a cell.
pub(crate) fn snapped_halves<S: Scalar>(
    spec: &GridSpec<S>,
    rect: &ParabolicRectangle<S>,
    p: S,
    gamma: S,
    direction: Direction,
) -> Result<Option<(CellBox, CellBox)>> {
    let snap = |b| match spec.snap(&b) {
        Ok(c) => Ok(Some(c)),
        Err(Error::EmptyBox) => Ok(None),
        Err(e) => Err(e),
    };
    let past = snap(rect.past(p, gamma, direction))?;
    let future = snap(rect.future(p, gamma, direction))?;
    Ok(past.zip(future))
}

/// Evaluates `value` on every member in parallel and returns the per-member
/// values with the index of the first maximiser.
pub(crate) fn family_sup<S: Scalar>(
    family: &RectangleFamily<S>,
    value: impl Fn(&ParabolicRectangle<S>) -> Result<Option<S>> + Sync,
) -> Result<(Vec<Option<S>>, usize)> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let per: Vec<Option<S>> = family.members.par_iter().map(&value).collect::<Result<_>>()?;
    let mut best: Option<(usize, S)> = None;
    for (i, v) in per.iter().enumerate() {
        if let Some(v) = *v {
            if v.is_nan() {
                return Err(Error::Overflow(format!("family member {i} evaluated to NaN")));
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (arg, _) = best.ok_or(Error::EmptyFamily)?;
    Ok((per, arg))
}

fn family_report<S: Scalar>(
    quantity: &'static str,
    family: &RectangleFamily<S>,
    exps: &Exponents<S>,
    direction: Direction,
    (per, arg): (Vec<Option<S>>, usize),
) -> WeightReport<S> {
    let evaluated = per.iter().filter(|v| v.is_some()).count();
    WeightReport {
        quantity,
        constant: per[arg].unwrap(),
        witness: Witness::Rectangle { rectangle: family.members[arg].clone() },
        exponents: *exps,
        direction,
        provenance: Some(family.provenance.clone()),
        scales: None,
        evaluated,
        skipped: per.len() - evaluated,
        per_member: per,
    }
}

fn require_positive<S: Scalar>(w: &GridFunction<S>) -> Result<()> {
    match w.values().iter().position(|v| !(*v > S::zero())) {
        Some(i) => Err(Error::NonPositive { index: i, value: to_f64(w.get(i)) }),
        None => Ok(()),
    }
}

fn cells_mean<S: Scalar>(w: &GridFunction<S>, cells: &CellBox, exponent: S) -> S {
    w.prefix(exponent).expect("positive weight").box_sum(cells) / from_usize(cells.cell_count())
}

/// `(avg_{past} w) (avg_{future} w^{1-q'})^{q-1}` on one member.
pub fn aq_value<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    rect: &ParabolicRectangle<S>,
) -> Result<Option<S>> {
    let Some((past, future)) = snapped_halves(w.spec(), rect, exps.p(), exps.gamma(), direction)? else {
        return Ok(None);
    };
    let a = cells_mean(w, &past, S::one());
    let b = cells_mean(w, &future, exps.dual_exponent());
    Ok(Some(a * b.powf(exps.q() - S::one())))
}

/// `[w]_{A_q^+(gamma)}` (or `A_q^-` for `Backward`) over `family`.
pub fn aq_constant<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    family: &RectangleFamily<S>,
) -> Result<WeightReport<S>> {
    require_positive(w)?;
    w.prefix(S::one())?;
    w.prefix(exps.dual_exponent())?;
    let sup = family_sup(family, |r| aq_value(w, exps, direction, r))?;
    Ok(family_report("aq", family, exps, direction, sup))
}

/// `sup_z M^{gamma-} w(z) / w(z)` over valid points (`Forward`), or with
/// `M^{gamma+}` for `Backward`. An optional mask further restricts the
/// points.
pub fn a1_constant<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    scales: &[S],
    mask: Option<&[bool]>,
    path: EvalPath,
) -> Result<WeightReport<S>> {
    require_positive(w)?;
    if let Some(m) = mask {
        if m.len() != w.len() {
            return Err(Error::InvalidArgument("mask length does not match the grid".into()));
        }
    }
    let m = maximal(w, exps, direction.reversed(), scales, path)?;
    let mut best: Option<(usize, S)> = None;
    let mut evaluated = 0;
    for i in 0..w.len() {
        if !m.valid[i] || mask.is_some_and(|k| !k[i]) {
            continue;
        }
        evaluated += 1;
        let r = m.output.get(i) / w.get(i);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    let (arg, constant) = best.ok_or(Error::EmptyMask)?;
    let (x, t) = w.spec().cell_center(arg);
    Ok(WeightReport {
        quantity: "a1",
        constant,
        witness: Witness::Point { index: arg, x, t },
        exponents: *exps,
        direction,
        provenance: None,
        scales: Some(scales.to_vec()),
        evaluated,
        skipped: w.len() - evaluated,
        per_member: Vec::new(),
    })
}

fn cells_min<S: Scalar>(w: &GridFunction<S>, cells: &CellBox) -> S {
    let mut m = S::infinity();
    w.spec().for_each_cell(cells, |i| m = m.min(w.get(i)));
    m
}

/// `sup_R avg_{R^-(delta)} w / inf_{R^+(delta)} w` with
/// `delta = 2^{p-1} gamma`, the comparison that characterises `A_1^+`.
pub fn a1_forward_comparison<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    family: &RectangleFamily<S>,
) -> Result<WeightReport<S>> {
    require_positive(w)?;
    let limit = lit::<S>(2.0).powf(S::one() - exps.p());
    if exps.gamma() >= limit {
        return Err(Error::LagTooLarge { gamma: to_f64(exps.gamma()), limit: to_f64(limit) });
    }
    let delta = lit::<S>(2.0).powf(exps.p() - S::one()) * exps.gamma();
    let lagged = exps.with_gamma(delta)?;
    w.prefix(S::one())?;
    let sup = family_sup(family, |r| {
        let Some((past, future)) = snapped_halves(w.spec(), r, exps.p(), delta, Direction::Forward)? else {
            return Ok(None);
        };
        Ok(Some(cells_mean(w, &past, S::one()) / cells_min(w, &future)))
    })?;
    Ok(family_report("a1ForwardComparison", family, &lagged, Direction::Forward, sup))
}

/// `sup_R (avg_{R^-(0)} w^{1+delta})^{1/(1+delta)} / avg_{R^+(0)} w`.
pub fn reverse_holder<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    delta: S,
    family: &RectangleFamily<S>,
) -> Result<WeightReport<S>> {
    if !(delta > S::zero()) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    require_positive(w)?;
    let e = S::one() + delta;
    w.prefix(e)?;
    w.prefix(S::one())?;
    let lagless = exps.with_gamma(S::zero())?;
    let sup = family_sup(family, |r| {
        let Some((past, future)) = snapped_halves(w.spec(), r, exps.p(), S::zero(), Direction::Forward)? else {
            return Ok(None);
        };
        let top = cells_mean(w, &past, e).powf(e.recip());
        let v = top / cells_mean(w, &future, S::one());
        if !v.is_finite() {
            return Err(Error::Overflow(format!("reverse Hoelder ratio with delta = {delta}")));
        }
        Ok(Some(v))
    })?;
    Ok(family_report("reverseHolder", family, &lagless, Direction::Forward, sup))
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanEntry<S> {
    pub index: S,
    pub constant: S,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelfImprovementScan<S> {
    pub entries: Vec<ScanEntry<S>>,
    pub threshold: S,
    /// Smallest tested index whose constant is at most `threshold`.
    pub smallest_admissible: Option<S>,
}

/// `aq_constant` at each index `q - eps` for `eps` in `eps_grid`.
pub fn self_improvement_scan<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    family: &RectangleFamily<S>,
    eps_grid: &[S],
    threshold: S,
) -> Result<SelfImprovementScan<S>> {
    let mut entries = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let index = exps.q() - eps;
        let e = exps.with_q(index)?;
        let c = aq_constant(w, &e, Direction::Forward, family)?.constant;
        entries.push(ScanEntry { index, constant: c });
    }
    let smallest_admissible = entries
        .iter()
        .filter(|e| e.constant <= threshold)
        .map(|e| e.index)
        .fold(None, |acc: Option<S>, i| Some(acc.map_or(i, |a| a.min(i))));
    Ok(SelfImprovementScan { entries, threshold, smallest_admissible })
}

/// The dual weight `sigma = w^{1-q'}`.
pub fn dual_weight<S: Scalar>(w: &GridFunction<S>, exps: &Exponents<S>) -> Result<GridFunction<S>> {
    w.power_transform(exps.dual_exponent())
}

/// Cell-measure comparison `w(R^-) <= C (|R^-| / |S|)^q w(S)` for sub-boxes
/// `S` of the snapped `R^+(gamma)`. Returns the largest ratio of the left
/// side to the right side, so the inequality holds iff the result is <= 1.
pub fn measure_comparison<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    rect: &ParabolicRectangle<S>,
    constant: S,
    sub_boxes: &[CellBox],
) -> Result<S> {
    let (past, future) = snapped_halves(w.spec(), rect, exps.p(), exps.gamma(), Direction::Forward)?
        .ok_or(Error::EmptyBox)?;
    let lhs = w.box_sum_direct(&past, S::one());
    let past_cells: S = from_usize(past.cell_count());
    let mut worst = S::zero();
    for s in sub_boxes {
        if !future.contains(s) || s.is_empty() {
            return Err(Error::InvalidArgument("sub-box is not a nonempty part of R^+".into()));
        }
        let rhs = constant * (past_cells / from_usize(s.cell_count())).powf(exps.q()) * w.box_sum_direct(s, S::one());
        worst = worst.max(lhs / rhs);
    }
    Ok(worst)
}

/// Uniformly drawn nonempty sub-boxes of `outer`.
pub fn random_sub_boxes<R: Rng>(outer: &CellBox, count: usize, rng: &mut R) -> Vec<CellBox> {
    (0..count)
        .map(|_| {
            let mut b = *outer;
            for a in 0..outer.axes {
                let x = rng.gen_range(outer.lo[a]..outer.hi[a]);
                let y = rng.gen_range(outer.lo[a]..outer.hi[a]);
                b.lo[a] = x.min(y);
                b.hi[a] = x.max(y) + 1;
            }
            b
        })
        .collect()
}

/// `sup_R avg_{R^-} w / avg_{shift + R^-} w` over members whose shifted
/// lower half stays inside the grid, with `shift = shift_factor * l^p`.
pub fn forward_comparison_ratio<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    family: &RectangleFamily<S>,
    shift_factor: S,
) -> Result<WeightReport<S>> {
    require_positive(w)?;
    let spec = w.spec();
    let sup = family_sup(family, |r| {
        let lower = r.lower(exps.p(), exps.gamma());
        let shifted = crate::geometry::translate_time(&lower, shift_factor * r.time_radius(exps.p()));
        match (spec.snap(&lower), spec.snap(&shifted)) {
            (Ok(a), Ok(b)) => Ok(Some(cells_mean(w, &a, S::one()) / cells_mean(w, &b, S::one()))),
            (Err(Error::BoxOutsideDomain | Error::EmptyBox), _) | (_, Err(Error::BoxOutsideDomain | Error::EmptyBox)) => {
                Ok(None)
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    })?;
    Ok(family_report("forwardComparison", family, exps, Direction::Forward, sup))
}
