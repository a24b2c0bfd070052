//! Lagged parabolic maximal operators `M^{gamma+}` and `M^{gamma-}`.
//!
//! At a grid point the forward operator takes the largest average of `|f|`
//! over the upper halves `R^+(gamma)` of the rectangles centred at the point,
//! one per admissible side length. A side length is admissible at a point
//! when the snapped half lies inside the grid; points with no admissible
//! side are marked invalid rather than extended.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Direction, Exponents};
use crate::gridfn::{snap_hi, snap_lo, CellBox, GridFunction, GridSpec, MAX_AXES};
use crate::scalar::{lit, Scalar};

/// How box averages are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPath {
    /// O(1) per box through prefix tables.
    #[default]
    Prefix,
    /// Direct summation over every cell of every box. Testing oracle.
    Naive,
}

#[derive(Clone, Debug)]
pub struct MaximalResult<S: Scalar> {
    /// Maximal function values; zero at invalid points.
    pub output: GridFunction<S>,
    pub valid: Vec<bool>,
    /// Maximising side length per point, `None` where invalid.
    pub argmax_scale: Vec<Option<S>>,
    pub scales: Vec<S>,
    pub direction: Direction,
    pub gamma: S,
}

impl<S: Scalar> MaximalResult<S> {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Values at valid points, in storage order.
    pub fn valid_values(&self) -> impl Iterator<Item = S> + '_ {
        self.output.values().iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v)
    }
}

/// `base * 2^k` for `k < count`.
pub fn dyadic_scales<S: Scalar>(base: S, count: usize) -> Vec<S> {
    (0..count).map(|k| base * lit::<S>(2.0).powi(k as i32)).collect()
}

/// Cell window of the forward half `R^+(gamma)` of a side-`l` rectangle
/// centred at cell index 0, relative to that cell.
pub(crate) fn forward_window<S: Scalar>(spec: &GridSpec<S>, p: S, gamma: S, side: S) -> CellBox {
    let half = lit::<S>(0.5);
    let radius = side.powf(p);
    let tau = spec.time_step();
    let mut w = CellBox { axes: spec.axes(), lo: [0; MAX_AXES], hi: [0; MAX_AXES] };
    w.lo[0] = snap_lo(half + gamma * radius / tau);
    w.hi[0] = snap_hi(half + radius / tau);
    for a in 0..spec.n() {
        let r = side / (lit::<S>(2.0) * spec.cell_width(a));
        w.lo[a + 1] = snap_lo(half - r);
        w.hi[a + 1] = snap_hi(half + r);
    }
    w
}

fn validate_scales<S: Scalar>(scales: &[S]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("scale list is empty".into()));
    }
    if scales.iter().any(|s| !(*s > S::zero()) || !s.is_finite()) {
        return Err(Error::InvalidArgument("scales must be positive and finite".into()));
    }
    Ok(())
}

struct Kernel<'a, S: Scalar> {
    f: &'a GridFunction<S>,
    windows: Vec<(S, CellBox)>,
    path: EvalPath,
    table: Option<std::sync::Arc<crate::gridfn::PrefixTable<S>>>,
}

impl<'a, S: Scalar> Kernel<'a, S> {
    fn new(f: &'a GridFunction<S>, p: S, gamma: S, scales: &[S], path: EvalPath) -> Result<Self> {
        let spec = f.spec();
        let windows = scales
            .iter()
            .map(|&l| (l, forward_window(spec, p, gamma, l)))
            .filter(|(_, w)| !w.is_empty())
            .collect();
        let table = match path {
            EvalPath::Prefix => Some(f.prefix(S::one())?),
            EvalPath::Naive => None,
        };
        Ok(Self { f, windows, path, table })
    }

    fn eval(&self, flat: usize) -> Option<(S, S)> {
        let spec = self.f.spec();
        let idx = spec.unflatten(flat);
        let mut offset = [0isize; MAX_AXES];
        for a in 0..spec.axes() {
            offset[a] = idx[a] as isize;
        }
        let mut best: Option<(S, S)> = None;
        for (side, w) in &self.windows {
            let cells = w.shifted(&offset[..spec.axes()]);
            if !spec.contains_cells(&cells) {
                continue;
            }
            let sum = match self.path {
                EvalPath::Prefix => self.table.as_ref().unwrap().box_sum(&cells),
                EvalPath::Naive => self.f.box_sum_direct(&cells, S::one()),
            };
            let avg = sum / S::from_usize(cells.cell_count()).unwrap();
            if best.is_none_or(|(b, _)| avg > b) {
                best = Some((avg, *side));
            }
        }
        best
    }
}

fn forward_points<S: Scalar>(
    f_abs: &GridFunction<S>,
    p: S,
    gamma: S,
    scales: &[S],
    path: EvalPath,
    points: &[usize],
) -> Result<Vec<Option<(S, S)>>> {
    let kernel = Kernel::new(f_abs, p, gamma, scales, path)?;
    Ok(points.par_iter().map(|&i| kernel.eval(i)).collect())
}

fn nonnegative<S: Scalar>(f: &GridFunction<S>) -> GridFunction<S> {
    if f.values().iter().all(|v| *v >= S::zero()) {
        f.clone()
    } else {
        f.abs()
    }
}

fn reverse_slices<T: Clone>(v: Vec<T>, slice: usize) -> Vec<T> {
    v.chunks(slice).rev().flat_map(|c| c.to_vec()).collect()
}

fn time_mirror<S: Scalar>(spec: &GridSpec<S>, flat: usize) -> usize {
    let slice = spec.len() / spec.time_cells();
    let j = flat / slice;
    (spec.time_cells() - 1 - j) * slice + flat % slice
}

/// Maximal function of `|f|` at selected grid points. Entries are
/// `(value, maximising side)` or `None` where no side is admissible.
pub fn maximal_at<S: Scalar>(
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    scales: &[S],
    path: EvalPath,
    points: &[usize],
) -> Result<Vec<Option<(S, S)>>> {
    validate_scales(scales)?;
    if let Some(bad) = points.iter().find(|&&i| i >= f.len()) {
        return Err(Error::InvalidArgument(format!("point index {bad} outside the grid")));
    }
    let f_abs = nonnegative(f);
    match direction {
        Direction::Forward => forward_points(&f_abs, exps.p(), exps.gamma(), scales, path, points),
        Direction::Backward => {
            let mirrored: Vec<usize> = points.iter().map(|&i| time_mirror(f.spec(), i)).collect();
            forward_points(&f_abs.reverse_time(), exps.p(), exps.gamma(), scales, path, &mirrored)
        }
    }
}

/// Maximal function over the whole grid.
///
/// The backward operator is the time reflection of the forward operator
/// applied to the reflected function, so the two are exact mirrors.
pub fn maximal<S: Scalar>(
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    direction: Direction,
    scales: &[S],
    path: EvalPath,
) -> Result<MaximalResult<S>> {
    validate_scales(scales)?;
    let f_abs = nonnegative(f);
    let source = match direction {
        Direction::Forward => f_abs,
        Direction::Backward => f_abs.reverse_time(),
    };
    let points: Vec<usize> = (0..f.len()).collect();
    let evals = forward_points(&source, exps.p(), exps.gamma(), scales, path, &points)?;
    let mut values = Vec::with_capacity(evals.len());
    let mut valid = Vec::with_capacity(evals.len());
    let mut argmax = Vec::with_capacity(evals.len());
    for e in evals {
        match e {
            Some((v, side)) => {
                values.push(v);
                valid.push(true);
                argmax.push(Some(side));
            }
            None => {
                values.push(S::zero());
                valid.push(false);
                argmax.push(None);
            }
        }
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::NoAdmissibleScale);
    }
    let mut output = f.with_values(values)?;
    if direction == Direction::Backward {
        output = output.reverse_time();
        let slice = f.len() / f.spec().time_cells();
        valid = reverse_slices(valid, slice);
        argmax = reverse_slices(argmax, slice);
    }
    Ok(MaximalResult {
        output,
        valid,
        argmax_scale: argmax,
        scales: scales.to_vec(),
        direction,
        gamma: exps.gamma(),
    })
}

/// `M^{gamma+} f`.
pub fn maximal_forward<S: Scalar>(
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
) -> Result<MaximalResult<S>> {
    maximal(f, exps, Direction::Forward, scales, EvalPath::Prefix)
}

/// `M^{gamma-} f`.
pub fn maximal_backward<S: Scalar>(
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
) -> Result<MaximalResult<S>> {
    maximal(f, exps, Direction::Backward, scales, EvalPath::Prefix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, nt: usize) -> std::sync::Arc<GridSpec<f64>> {
        GridSpec::uniform(1, nx, nt, 1.0, 1.0).unwrap().into()
    }

    fn wavy(spec: &std::sync::Arc<GridSpec<f64>>) -> GridFunction<f64> {
        GridFunction::from_fn(spec.clone(), |x: &[f64], t: f64| 1.5 + (7.0 * x[0]).sin() * (3.0 * t).cos()).unwrap()
    }

    #[test]
    fn constant_is_fixed() {
        let spec = grid(16, 64);
        let f = GridFunction::constant(spec, 2.5).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.25).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let m = maximal(&f, &e, dir, &dyadic_scales(0.125, 3), EvalPath::Prefix).unwrap();
            assert!(m.valid_count() > 0);
            assert!(m.valid_values().all(|v| (v - 2.5).abs() < 1e-13));
        }
    }

    #[test]
    fn prefix_matches_naive() {
        let spec = grid(16, 64);
        let f = wavy(&spec);
        let e = Exponents::new(2.0, 2.0, 0.5).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let a = maximal(&f, &e, dir, &dyadic_scales(0.0625, 4), EvalPath::Prefix).unwrap();
            let b = maximal(&f, &e, dir, &dyadic_scales(0.0625, 4), EvalPath::Naive).unwrap();
            assert_eq!(a.valid, b.valid);
            for (x, y) in a.output.values().iter().zip(b.output.values()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn backward_is_reflected_forward() {
        let spec = grid(16, 64);
        let f = wavy(&spec);
        let e = Exponents::new(2.0, 2.0, 0.25).unwrap();
        let scales = dyadic_scales(0.0625, 4);
        let back = maximal_backward(&f, &e, &scales).unwrap();
        let fwd = maximal_forward(&f.reverse_time(), &e, &scales).unwrap();
        assert_eq!(back.output, fwd.output.reverse_time());
        let pts: Vec<usize> = (0..f.len()).step_by(7).collect();
        let at = maximal_at(&f, &e, Direction::Backward, &scales, EvalPath::Prefix, &pts).unwrap();
        for (k, i) in pts.iter().enumerate() {
            assert_eq!(at[k].map(|v| v.0), back.valid[*i].then(|| back.output.get(*i)));
        }
    }

    #[test]
    fn homogeneity_and_refinement() {
        let spec = grid(16, 64);
        let f = wavy(&spec);
        let e = Exponents::new(2.0, 2.0, 0.0).unwrap();
        let scales = dyadic_scales(0.0625, 3);
        let m = maximal_forward(&f, &e, &scales).unwrap();
        let m4 = maximal_forward(&f.scale(4.0).unwrap(), &e, &scales).unwrap();
        for (a, b) in m.output.values().iter().zip(m4.output.values()) {
            assert_eq!(4.0 * a, *b);
        }
        let more = maximal_forward(&f, &e, &dyadic_scales(0.0625, 4)).unwrap();
        for i in 0..f.len() {
            if m.valid[i] {
                assert!(more.valid[i] && more.output.get(i) >= m.output.get(i));
            }
        }
        for s in m.argmax_scale.iter().flatten() {
            assert!(scales.contains(s));
        }
    }

    #[test]
    fn scale_validation() {
        let spec = grid(4, 4);
        let f = GridFunction::constant(spec, 1.0).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.0).unwrap();
        assert!(maximal_forward(&f, &e, &[]).is_err());
        assert!(maximal_forward(&f, &e, &[-1.0]).is_err());
        assert!(matches!(maximal_forward(&f, &e, &[4.0]), Err(Error::NoAdmissibleScale)));
    }

    /// Exact average of the indicator of `[0,1] x (0,1)` over the upper
    /// half of the side-`l` rectangle centred at `(0.5, -0.5)`, `p = 2`.
    fn indicator_upper_average(l: f64) -> f64 {
        let space = l.min(1.0) / l;
        let time = ((-0.5 + l * l).min(1.0) - 0.0f64.max(-0.5)).max(0.0) / (l * l);
        space * time
    }

    #[test]
    fn indicator_dense_scan() {
        let dense: Vec<f64> = (0..=590).map(|k| 0.05 + 0.005 * k as f64).collect();
        let (oracle, arg) = dense
            .iter()
            .map(|&l| (indicator_upper_average(l), l))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        assert!((oracle - 0.544).abs() < 1e-3 && (arg - 1.225).abs() < 0.01);

        // h = 1/21 and tau = 1/41 put (0.5, -0.5) on a cell centre and the
        // indicator's edges on cell faces.
        let domain = crate::geometry::SpaceTimeBox::new(vec![-1.0], vec![2.0], -1.0, 9.0).unwrap();
        let spec = GridSpec::new(vec![63], 410, domain).unwrap();
        let f = GridFunction::from_fn(spec, |x: &[f64], t: f64| {
            if (0.0..1.0).contains(&x[0]) && (0.0..1.0).contains(&t) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let point = f.spec().locate(&[0.5], -0.5).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.0).unwrap();
        let grid_dense = maximal_at(&f, &e, Direction::Forward, &dense, EvalPath::Naive, &[point]).unwrap()[0].unwrap();
        assert!((grid_dense.0 - oracle).abs() < 0.02, "{grid_dense:?}");
        let coarse = maximal_at(&f, &e, Direction::Forward, &dyadic_scales(0.25, 4), EvalPath::Prefix, &[point])
            .unwrap()[0]
            .unwrap();
        assert!(coarse.0 <= grid_dense.0 + 1e-12);
        assert!(grid_dense.0 - coarse.0 < 0.06, "{coarse:?}");
    }
}
