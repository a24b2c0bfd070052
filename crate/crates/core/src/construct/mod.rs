//! Coifman–Rochberg constructions: weights and PBMO functions built from
//! maximal functions of measures, and the inverse decomposition of an
//! `A_1` weight.

mod supersolution;

use serde::Serialize;

pub use supersolution::{
    heat_residual, supersolution, supersolution_representation, weak_pairing, Representation,
    RepresentationOptions, SupersolutionSpec,
};

use crate::error::{Error, Result};
use crate::geometry::{Direction, Exponents, ParabolicRectangle};
use crate::gridfn::{GridFunction, GridSpec, DEFAULT_FLOOR_EPS};
use crate::maximal::{maximal, EvalPath, MaximalResult};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointMass<S> {
    pub x: Vec<S>,
    pub t: S,
    pub mass: S,
}

/// A finite nonnegative measure: point masses plus an optional density.
#[derive(Clone, Debug)]
pub struct MeasureSpec<S: Scalar> {
    pub points: Vec<PointMass<S>>,
    pub density: Option<GridFunction<S>>,
}

impl<S: Scalar> MeasureSpec<S> {
    pub fn new(points: Vec<PointMass<S>>, density: Option<GridFunction<S>>) -> Result<Self> {
        if points.iter().any(|p| !(p.mass > S::zero()) || !p.mass.is_finite()) {
            return Err(Error::InvalidArgument("point masses must be positive and finite".into()));
        }
        let mut total = points.iter().fold(S::zero(), |s, p| s + p.mass);
        if let Some(d) = &density {
            if d.values().iter().any(|v| *v < S::zero()) {
                return Err(Error::InvalidArgument("density must be nonnegative".into()));
            }
            total = total + d.integral(S::one())?;
        }
        if !(total > S::zero()) || !total.is_finite() {
            return Err(Error::InvalidArgument("total mass must be positive and finite".into()));
        }
        Ok(Self { points, density })
    }

    pub fn point(x: Vec<S>, t: S, mass: S) -> Result<Self> {
        Self::new(vec![PointMass { x, t, mass }], None)
    }

    pub fn density(d: GridFunction<S>) -> Result<Self> {
        Self::new(Vec::new(), Some(d))
    }

    pub fn with_density(mut self, d: GridFunction<S>) -> Result<Self> {
        self.density = Some(d);
        Self::new(self.points, self.density)
    }

    /// Density on `spec` with every point mass spread over its containing
    /// cell. Masses outside the grid are dropped.
    pub fn binned(&self, spec: &std::sync::Arc<GridSpec<S>>) -> Result<GridFunction<S>> {
        let mut values = match &self.density {
            Some(d) if d.spec() == spec.as_ref() => d.values().to_vec(),
            Some(_) => return Err(Error::SpecMismatch),
            None => vec![S::zero(); spec.len()],
        };
        let vol = spec.cell_volume();
        for p in &self.points {
            match spec.locate(&p.x, p.t) {
                Some(i) => values[i] = values[i] + p.mass / vol,
                None => log::warn!("point mass at t = {} lies outside the grid and is ignored", p.t),
            }
        }
        GridFunction::new(spec.clone(), values)
    }
}

/// How point masses enter [`maximal_of_measure`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurePath {
    /// Masses binned into their cells, then the prefix-table operator.
    Binned,
    /// Masses counted inside the unsnapped halves and divided by their true
    /// volume; the density part is summed directly. Testing oracle.
    Exact,
}

fn exact_value<S: Scalar>(
    m: &MeasureSpec<S>,
    spec: &GridSpec<S>,
    exps: &Exponents<S>,
    direction: Direction,
    window_valid: impl Fn(S) -> Option<crate::gridfn::CellBox>,
    flat: usize,
    scales: &[S],
) -> Option<(S, S)> {
    let (x, t) = spec.cell_center(flat);
    let mut best: Option<(S, S)> = None;
    for &l in scales {
        let Some(cells) = window_valid(l) else { continue };
        let rect = ParabolicRectangle { center: x.clone(), time: t, side: l };
        let half = rect.future(exps.p(), exps.gamma(), direction);
        let inside = |p: &PointMass<S>| {
            p.t >= half.time_lo
                && p.t <= half.time_hi
                && p.x.iter().enumerate().all(|(a, c)| *c >= half.spatial_lo[a] && *c <= half.spatial_hi[a])
        };
        let point_mass = m.points.iter().filter(|p| inside(p)).fold(S::zero(), |s, p| s + p.mass);
        let mut avg = point_mass / half.volume();
        if let Some(d) = &m.density {
            avg = avg + d.box_sum_direct(&cells, S::one()) / from_usize(cells.cell_count());
        }
        if best.is_none_or(|(b, _)| avg > b) {
            best = Some((avg, l));
        }
    }
    best
}

/// `M^{gamma+} mu` (`Forward`) or `M^{gamma-} mu` (`Backward`) on `spec`.
pub fn maximal_of_measure<S: Scalar>(
    m: &MeasureSpec<S>,
    spec: &std::sync::Arc<GridSpec<S>>,
    exps: &Exponents<S>,
    direction: Direction,
    scales: &[S],
    path: MeasurePath,
) -> Result<MaximalResult<S>> {
    let binned = m.binned(spec)?;
    let fast = maximal(&binned, exps, direction, scales, EvalPath::Prefix)?;
    if path == MeasurePath::Binned {
        return Ok(fast);
    }
    let idx_window = |flat: usize, l: S| {
        let w = crate::maximal::forward_window(spec, exps.p(), exps.gamma(), l);
        let idx = spec.unflatten(flat);
        let mut off = [0isize; crate::gridfn::MAX_AXES];
        for a in 0..spec.axes() {
            off[a] = idx[a] as isize;
        }
        let mut cells = w.shifted(&off[..spec.axes()]);
        if direction == Direction::Backward {
            let j = idx[0] as isize;
            let (lo, hi) = (cells.lo[0] - j, cells.hi[0] - j);
            cells.lo[0] = j + 1 - hi;
            cells.hi[0] = j + 1 - lo;
        }
        (!cells.is_empty() && spec.contains_cells(&cells)).then_some(cells)
    };
    let mut values = vec![S::zero(); spec.len()];
    let mut valid = vec![false; spec.len()];
    let mut argmax = vec![None; spec.len()];
    for flat in 0..spec.len() {
        if let Some((v, l)) = exact_value(m, spec, exps, direction, |l| idx_window(flat, l), flat, scales) {
            values[flat] = v;
            valid[flat] = true;
            argmax[flat] = Some(l);
        }
    }
    Ok(MaximalResult { output: binned.with_values(values)?, valid, argmax_scale: argmax, ..fast })
}

#[derive(Clone, Debug)]
pub struct CrWeight<S: Scalar> {
    pub weight: GridFunction<S>,
    pub valid: Vec<bool>,
    /// Valid cells where the maximal function vanished and the weight was
    /// clamped to the floor.
    pub clamped: usize,
    /// Invalid cells filled from the nearest valid cell.
    pub extended: usize,
}

/// `(M^{gamma-} mu)^delta` on the valid region, clamped below by the floor
/// and extended to the rest of the grid by nearest valid values.
pub fn cr_weight<S: Scalar>(
    m: &MeasureSpec<S>,
    delta: S,
    spec: &std::sync::Arc<GridSpec<S>>,
    exps: &Exponents<S>,
    scales: &[S],
    path: MeasurePath,
) -> Result<CrWeight<S>> {
    if !(delta >= S::zero() && delta < S::one()) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must lie in [0, 1)")));
    }
    let mx = maximal_of_measure(m, spec, exps, Direction::Backward, scales, path)?;
    let floor = lit::<S>(DEFAULT_FLOOR_EPS);
    let mut clamped = 0;
    let values: Vec<S> = mx
        .output
        .values()
        .iter()
        .zip(&mx.valid)
        .map(|(&v, &ok)| {
            if !ok {
                return S::one();
            }
            let w = v.powf(delta);
            if w < floor {
                clamped += 1;
                floor
            } else {
                w
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} cells of the Coifman-Rochberg weight clamped to {floor}");
    }
    let weight = mx.output.with_values(values)?.fill_from_nearest(&mx.valid)?;
    let extended = mx.valid.iter().filter(|v| !**v).count();
    Ok(CrWeight { weight, valid: mx.valid, clamped, extended })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CrDecomposition<S: Scalar> {
    #[serde(skip)]
    pub k: GridFunction<S>,
    /// Density `w^{1+eps}` of the measure.
    #[serde(skip)]
    pub mu: GridFunction<S>,
    #[serde(skip)]
    pub maximal: GridFunction<S>,
    #[serde(skip)]
    pub valid: Vec<bool>,
    pub delta: S,
    pub eps: S,
    pub k_min: S,
    pub k_max: S,
    /// `max |K (M mu)^delta - w| / w` on the valid region.
    pub residual: S,
}

impl<S: Scalar> CrDecomposition<S> {
    pub fn range_ratio(&self) -> S {
        self.k_max / self.k_min
    }
}

/// `w = K (M^{gamma-} mu)^delta` with `mu = w^{1+eps}` and
/// `delta = 1/(1+eps)` (`Forward`, for `A_1^+` weights), or with `M^{gamma+}`
/// for `Backward`. `K` is evaluated on the valid region and extended by
/// nearest values; a range ratio above `k_bound` is a hypothesis failure.
pub fn cr_decompose<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    eps: S,
    scales: &[S],
    mask: Option<&[bool]>,
    k_bound: S,
) -> Result<CrDecomposition<S>> {
    if !(eps > S::zero()) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let mu = w.power_transform(S::one() + eps)?;
    let delta = (S::one() + eps).recip();
    let mx = maximal(&mu, exps, direction.reversed(), scales, EvalPath::Prefix)?;
    let valid: Vec<bool> = (0..w.len()).map(|i| mx.valid[i] && mask.is_none_or(|m| m[i])).collect();
    let mut k = vec![S::one(); w.len()];
    let (mut k_min, mut k_max, mut residual) = (S::infinity(), S::zero(), S::zero());
    for i in 0..w.len() {
        if !valid[i] {
            continue;
        }
        let base = mx.output.get(i).powf(delta);
        k[i] = w.get(i) / base;
        k_min = k_min.min(k[i]);
        k_max = k_max.max(k[i]);
        residual = residual.max((k[i] * base - w.get(i)).abs() / w.get(i));
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptyMask);
    }
    if !(k_max / k_min <= k_bound) {
        return Err(Error::Hypothesis(format!(
            "K ranges over [{}, {}], ratio above the bound {}",
            to_f64(k_min),
            to_f64(k_max),
            to_f64(k_bound)
        )));
    }
    let k = w.with_values(k)?.fill_from_nearest(&valid)?;
    Ok(CrDecomposition { k, mu, maximal: mx.output, valid, delta, eps, k_min, k_max, residual })
}

#[derive(Clone, Debug)]
pub struct CrBmo<S: Scalar> {
    pub f: GridFunction<S>,
    pub valid: Vec<bool>,
    /// Backward maximal function of `mu`, lag of `exps`.
    pub m_minus: MaximalResult<S>,
    /// Forward maximal function of `nu`, lag of `exps`.
    pub m_plus: MaximalResult<S>,
}

/// `f = -alpha log M^{gamma-} mu + beta log M^{gamma+} nu + b` on the common
/// valid region, extended by nearest values.
#[allow(clippy::too_many_arguments)]
pub fn cr_bmo<S: Scalar>(
    mu: &MeasureSpec<S>,
    nu: &MeasureSpec<S>,
    alpha: S,
    beta: S,
    b: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
    path: MeasurePath,
) -> Result<CrBmo<S>> {
    if alpha < S::zero() || beta < S::zero() {
        return Err(Error::InvalidArgument("alpha and beta must be nonnegative".into()));
    }
    let spec = b.shared_spec();
    let m_minus = maximal_of_measure(mu, &spec, exps, Direction::Backward, scales, path)?;
    let m_plus = maximal_of_measure(nu, &spec, exps, Direction::Forward, scales, path)?;
    let valid: Vec<bool> = m_minus.valid.iter().zip(&m_plus.valid).map(|(a, b)| *a && *b).collect();
    let mut f = vec![S::zero(); b.len()];
    for i in 0..b.len() {
        if !valid[i] {
            continue;
        }
        let (a, c) = (m_minus.output.get(i), m_plus.output.get(i));
        if !(a > S::zero() && c > S::zero()) {
            return Err(Error::Hypothesis(format!("maximal function vanishes at valid cell {i}")));
        }
        let mut v = b.get(i);
        if alpha > S::zero() {
            v = v - alpha * a.ln();
        }
        if beta > S::zero() {
            v = v + beta * c.ln();
        }
        f[i] = v;
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptyMask);
    }
    let f = b.with_values(f)?.fill_from_nearest(&valid)?;
    Ok(CrBmo { f, valid, m_minus, m_plus })
}
