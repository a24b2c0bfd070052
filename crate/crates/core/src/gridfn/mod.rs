//! Piecewise-constant functions on a regular space-time grid.
//!
//! Every cell carries the value of the function at the cell centre. Boxes are
//! snapped to cell boundaries before averaging and the snapped volume is the
//! one divided by, so averages are exact for the discrete function.
//!
//! Storage is row-major with time outermost: axis 0 is time, axes `1..=n`
//! are the spatial axes in order.

mod csv;
mod prefix;

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use serde::Serialize;

pub use self::csv::{read_csv, read_csv_file, to_csv_string, write_csv, write_csv_file};
pub use self::prefix::PrefixTable;

use crate::error::{Error, Result};
use crate::geometry::SpaceTimeBox;
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Largest supported number of axes (time plus spatial).
pub const MAX_AXES: usize = 8;

/// Relative slack, in cell units, under which a box face counts as sitting
/// exactly halfway between two cell boundaries.
const SNAP_TIE: f64 = 1e-9;

/// Default positivity floor applied when ingesting weights.
pub const DEFAULT_FLOOR_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GridSpec<S> {
    cells_per_axis: Vec<usize>,
    time_cells: usize,
    domain: SpaceTimeBox<S>,
}

/// Half-open range of cell indices `[lo, hi)` on every axis (time first).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    pub axes: usize,
    pub lo: [isize; MAX_AXES],
    pub hi: [isize; MAX_AXES],
}

impl CellBox {
    pub fn cell_count(&self) -> usize {
        (0..self.axes).map(|a| (self.hi[a] - self.lo[a]).max(0) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        (0..self.axes).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn contains(&self, other: &CellBox) -> bool {
        (0..self.axes).all(|a| other.lo[a] >= self.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn shifted(&self, offset: &[isize]) -> CellBox {
        let mut out = *self;
        for a in 0..self.axes {
            out.lo[a] += offset[a];
            out.hi[a] += offset[a];
        }
        out
    }
}

#[inline]
pub(crate) fn snap_lo<S: Scalar>(x: S) -> isize {
    // nearest integer, halfway cases rounded down
    (x - lit(0.5 + SNAP_TIE)).ceil().to_isize().unwrap_or(isize::MIN)
}

#[inline]
pub(crate) fn snap_hi<S: Scalar>(x: S) -> isize {
    // nearest integer, halfway cases rounded up
    (x + lit(0.5 + SNAP_TIE)).floor().to_isize().unwrap_or(isize::MAX)
}

impl<S: Scalar> GridSpec<S> {
    pub fn new(cells_per_axis: Vec<usize>, time_cells: usize, domain: SpaceTimeBox<S>) -> Result<Self> {
        let n = cells_per_axis.len();
        if n == 0 || n + 1 > MAX_AXES {
            return Err(Error::InvalidGrid(format!("spatial dimension {n} outside 1..={}", MAX_AXES - 1)));
        }
        if domain.dim() != n {
            return Err(Error::InvalidGrid(format!(
                "domain has {} spatial axes but {n} cell counts were given",
                domain.dim()
            )));
        }
        if time_cells < 2 || cells_per_axis.iter().any(|&c| c < 2) {
            return Err(Error::InvalidGrid("every axis needs at least 2 cells".into()));
        }
        Ok(Self { cells_per_axis, time_cells, domain })
    }

    /// Grid on `[0, x_extent]^n x (0, t_extent)`.
    pub fn uniform(n: usize, cells: usize, time_cells: usize, x_extent: S, t_extent: S) -> Result<Self> {
        Self::new(vec![cells; n], time_cells, SpaceTimeBox::origin(n, x_extent, t_extent)?)
    }

    pub fn n(&self) -> usize {
        self.cells_per_axis.len()
    }

    pub fn axes(&self) -> usize {
        self.n() + 1
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn time_cells(&self) -> usize {
        self.time_cells
    }

    pub fn domain(&self) -> &SpaceTimeBox<S> {
        &self.domain
    }

    /// Cell counts with time first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.axes());
        s.push(self.time_cells);
        s.extend_from_slice(&self.cells_per_axis);
        s
    }

    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len() - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        strides
    }

    pub fn len(&self) -> usize {
        self.time_cells * self.cells_per_axis.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self, axis: usize) -> S {
        (self.domain.spatial_hi[axis] - self.domain.spatial_lo[axis]) / from_usize(self.cells_per_axis[axis])
    }

    pub fn time_step(&self) -> S {
        self.domain.duration() / from_usize(self.time_cells)
    }

    /// Width of grid axis `axis` in the time-first ordering.
    pub fn axis_step(&self, axis: usize) -> S {
        if axis == 0 {
            self.time_step()
        } else {
            self.cell_width(axis - 1)
        }
    }

    fn axis_origin(&self, axis: usize) -> S {
        if axis == 0 {
            self.domain.time_lo
        } else {
            self.domain.spatial_lo[axis - 1]
        }
    }

    pub fn cell_volume(&self) -> S {
        (0..self.axes()).fold(S::one(), |acc, a| acc * self.axis_step(a))
    }

    /// Time-first multi-index of a flat cell index.
    pub fn unflatten(&self, flat: usize) -> [usize; MAX_AXES] {
        let shape = self.shape();
        let mut out = [0usize; MAX_AXES];
        let mut rest = flat;
        for a in (0..shape.len()).rev() {
            out[a] = rest % shape[a];
            rest /= shape[a];
        }
        out
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        let shape = self.shape();
        index.iter().zip(&shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    /// Centre `(x, t)` of the cell with the given flat index.
    pub fn cell_center(&self, flat: usize) -> (Vec<S>, S) {
        let idx = self.unflatten(flat);
        let half = lit::<S>(0.5);
        let x = (0..self.n())
            .map(|a| self.domain.spatial_lo[a] + (from_usize::<S>(idx[a + 1]) + half) * self.cell_width(a))
            .collect();
        let t = self.domain.time_lo + (from_usize::<S>(idx[0]) + half) * self.time_step();
        (x, t)
    }

    /// Flat index of the cell containing `(x, t)` (faces belong to the cell
    /// above), or `None` outside the domain.
    pub fn locate(&self, x: &[S], t: S) -> Option<usize> {
        if x.len() != self.n() {
            return None;
        }
        let mut idx = [0usize; MAX_AXES];
        let shape = self.shape();
        for a in 0..self.axes() {
            let coord = if a == 0 { t } else { x[a - 1] };
            let u = ((coord - self.axis_origin(a)) / self.axis_step(a)).floor();
            let i = u.to_isize()?;
            if i < 0 || i as usize >= shape[a] {
                return None;
            }
            idx[a] = i as usize;
        }
        Some(self.flatten(&idx[..self.axes()]))
    }

    /// Cell range covered by `b` with every face moved to the nearest cell
    /// boundary (ties outward), without any domain check.
    pub fn snap_unchecked(&self, b: &SpaceTimeBox<S>) -> CellBox {
        let mut out = CellBox { axes: self.axes(), lo: [0; MAX_AXES], hi: [0; MAX_AXES] };
        for a in 0..self.axes() {
            let (lo, hi) = if a == 0 {
                (b.time_lo, b.time_hi)
            } else {
                (b.spatial_lo[a - 1], b.spatial_hi[a - 1])
            };
            let origin = self.axis_origin(a);
            let step = self.axis_step(a);
            out.lo[a] = snap_lo((lo - origin) / step);
            out.hi[a] = snap_hi((hi - origin) / step);
        }
        out
    }

    pub fn full_cells(&self) -> CellBox {
        let shape = self.shape();
        let mut out = CellBox { axes: self.axes(), lo: [0; MAX_AXES], hi: [0; MAX_AXES] };
        for a in 0..shape.len() {
            out.hi[a] = shape[a] as isize;
        }
        out
    }

    pub fn contains_cells(&self, cells: &CellBox) -> bool {
        self.full_cells().contains(cells)
    }

    /// Snaps `b` to cell boundaries, rejecting boxes outside the grid and
    /// boxes that snap to nothing.
    pub fn snap(&self, b: &SpaceTimeBox<S>) -> Result<CellBox> {
        if b.dim() != self.n() {
            return Err(Error::InvalidBox(format!("box has {} spatial axes, grid has {}", b.dim(), self.n())));
        }
        let cells = self.snap_unchecked(b);
        if !self.contains_cells(&cells) {
            return Err(Error::BoxOutsideDomain);
        }
        if cells.is_empty() {
            return Err(Error::EmptyBox);
        }
        Ok(cells)
    }

    /// Volume of a cell range.
    pub fn cells_volume(&self, cells: &CellBox) -> S {
        from_usize::<S>(cells.cell_count()) * self.cell_volume()
    }

    /// The box covered by a cell range.
    pub fn cells_to_box(&self, cells: &CellBox) -> SpaceTimeBox<S> {
        let edge = |a: usize, i: isize| self.axis_origin(a) + S::from_isize(i).unwrap() * self.axis_step(a);
        SpaceTimeBox {
            spatial_lo: (1..self.axes()).map(|a| edge(a, cells.lo[a])).collect(),
            spatial_hi: (1..self.axes()).map(|a| edge(a, cells.hi[a])).collect(),
            time_lo: edge(0, cells.lo[0]),
            time_hi: edge(0, cells.hi[0]),
        }
    }

    /// Visits the flat index of every cell in `cells` in storage order.
    pub fn for_each_cell(&self, cells: &CellBox, mut visit: impl FnMut(usize)) {
        if cells.is_empty() {
            return;
        }
        let strides = self.strides();
        let axes = self.axes();
        let mut idx = cells.lo;
        loop {
            let flat: usize = (0..axes).map(|a| idx[a] as usize * strides[a]).sum();
            visit(flat);
            let mut a = axes;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < cells.hi[a] {
                    break;
                }
                idx[a] = cells.lo[a];
            }
        }
    }

    /// Same grid with the time axis extended (or shrunk) to `time_cells`
    /// cells of the current step.
    pub fn with_time_cells(&self, time_cells: usize) -> Result<Self> {
        let mut domain = self.domain.clone();
        domain.time_hi = domain.time_lo + from_usize::<S>(time_cells) * self.time_step();
        Self::new(self.cells_per_axis.clone(), time_cells, domain)
    }

    /// Same domain with every spatial cell count multiplied by `space` and
    /// the time count by `time`.
    pub fn refined(&self, space: usize, time: usize) -> Result<Self> {
        Self::new(
            self.cells_per_axis.iter().map(|c| c * space).collect(),
            self.time_cells * time,
            self.domain.clone(),
        )
    }
}

/// Pointwise binary operations supported by [`GridFunction::combine`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    Min,
    Max,
    Product,
    Quotient,
}

#[inline]
pub(crate) fn power<S: Scalar>(x: S, e: S) -> S {
    if e == S::one() {
        x
    } else if e == -S::one() {
        x.recip()
    } else {
        x.powf(e)
    }
}

fn power_admissible<S: Scalar>(x: S, e: S) -> bool {
    if e == S::one() || (e > S::zero() && e.fract() == S::zero()) {
        true
    } else {
        x > S::zero()
    }
}

/// Dense grid function. Immutable after construction; prefix tables are
/// built lazily per exponent and shared between threads.
#[derive(Debug)]
pub struct GridFunction<S> {
    spec: Arc<GridSpec<S>>,
    values: Vec<S>,
    tables: RwLock<Vec<(u64, Arc<PrefixTable<S>>)>>,
}

impl<S: Scalar> Clone for GridFunction<S> {
    fn clone(&self) -> Self {
        Self { spec: self.spec.clone(), values: self.values.clone(), tables: RwLock::new(Vec::new()) }
    }
}

impl<S: Scalar> PartialEq for GridFunction<S> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.values == other.values
    }
}

impl<S: Scalar> GridFunction<S> {
    pub fn new(spec: impl Into<Arc<GridSpec<S>>>, values: Vec<S>) -> Result<Self> {
        let spec = spec.into();
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!("expected {} values, got {}", spec.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at cell {i}")));
        }
        Ok(Self { spec, values, tables: RwLock::new(Vec::new()) })
    }

    /// Ingests weight values, clamping anything below `floor_eps` up to it.
    pub fn weight(spec: impl Into<Arc<GridSpec<S>>>, mut values: Vec<S>, floor_eps: S) -> Result<Self> {
        let mut clamped = 0usize;
        for v in values.iter_mut() {
            if *v < floor_eps {
                *v = floor_eps;
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} weight values up to {floor_eps}");
        }
        Self::new(spec, values)
    }

    pub fn constant(spec: impl Into<Arc<GridSpec<S>>>, c: S) -> Result<Self> {
        let spec = spec.into();
        let len = spec.len();
        Self::new(spec, vec![c; len])
    }

    /// Samples `f(x, t)` at every cell centre.
    pub fn from_fn(spec: impl Into<Arc<GridSpec<S>>>, f: impl Fn(&[S], S) -> S) -> Result<Self> {
        let spec = spec.into();
        let values = (0..spec.len())
            .map(|i| {
                let (x, t) = spec.cell_center(i);
                f(&x, t)
            })
            .collect();
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec<S> {
        &self.spec
    }

    pub fn shared_spec(&self) -> Arc<GridSpec<S>> {
        self.spec.clone()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, flat: usize) -> S {
        self.values[flat]
    }

    pub fn min_value(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max_value(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.spec, &other.spec) || *self.spec == *other.spec
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::SpecMismatch)
        }
    }

    pub fn with_values(&self, values: Vec<S>) -> Result<Self> {
        Self::new(self.spec.clone(), values)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.check_same(other)?;
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn abs(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.iter().map(|v| v.abs()).collect(),
            tables: RwLock::new(Vec::new()),
        }
    }

    pub fn scale(&self, c: S) -> Result<Self> {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise `f^e`.
    pub fn power_transform(&self, e: S) -> Result<Self> {
        if let Some(i) = self.values.iter().position(|v| !power_admissible(*v, e)) {
            return Err(Error::NonPositive { index: i, value: to_f64(self.values[i]) });
        }
        self.map(|v| power(v, e))
    }

    /// Reflection `t -> time_lo + time_hi - t` of the grid values.
    pub fn reverse_time(&self) -> Self {
        let slice = self.len() / self.spec.time_cells;
        let mut values = Vec::with_capacity(self.len());
        for j in (0..self.spec.time_cells).rev() {
            values.extend_from_slice(&self.values[j * slice..(j + 1) * slice]);
        }
        Self { spec: self.spec.clone(), values, tables: RwLock::new(Vec::new()) }
    }

    pub fn combine(&self, other: &Self, mode: Combine) -> Result<Self> {
        self.combine_with_floor(other, mode, lit(DEFAULT_FLOOR_EPS))
    }

    pub fn combine_with_floor(&self, other: &Self, mode: Combine, floor_eps: S) -> Result<Self> {
        self.check_same(other)?;
        if mode == Combine::Quotient {
            if let Some(i) = other.values.iter().position(|v| *v < floor_eps) {
                return Err(Error::QuotientBelowFloor {
                    index: i,
                    value: to_f64(other.values[i]),
                    floor: to_f64(floor_eps),
                });
            }
        }
        let op: fn(S, S) -> S = match mode {
            Combine::Min => S::min,
            Combine::Max => S::max,
            Combine::Product => |a, b| a * b,
            Combine::Quotient => |a, b| a / b,
        };
        self.zip_with(other, op)
    }

    /// Prefix table of `f^exponent`, built on first use.
    pub fn prefix(&self, exponent: S) -> Result<Arc<PrefixTable<S>>> {
        let key = to_f64(exponent).to_bits();
        if let Some((_, t)) = self.tables.read().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(t.clone());
        }
        if let Some(i) = self.values.iter().position(|v| !power_admissible(*v, exponent)) {
            return Err(Error::NonPositive { index: i, value: to_f64(self.values[i]) });
        }
        let powered: Vec<S> = self.values.iter().map(|v| power(*v, exponent)).collect();
        if powered.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(format!("f^{exponent} is not finite on the grid")));
        }
        let table = Arc::new(PrefixTable::build(&self.spec, &powered, exponent));
        let mut guard = self.tables.write().unwrap();
        if let Some((_, t)) = guard.iter().find(|(k, _)| *k == key) {
            return Ok(t.clone());
        }
        guard.push((key, table.clone()));
        Ok(table)
    }

    /// `sum f^exponent` over the cells, directly (no table). Testing oracle.
    pub fn box_sum_direct(&self, cells: &CellBox, exponent: S) -> S {
        let mut total = S::zero();
        self.spec.for_each_cell(cells, |i| total = total + power(self.values[i], exponent));
        total
    }

    /// Average of `f^exponent` over a snapped cell range.
    pub fn box_average_cells(&self, cells: &CellBox, exponent: S) -> Result<S> {
        if !self.spec.contains_cells(cells) {
            return Err(Error::BoxOutsideDomain);
        }
        if cells.is_empty() {
            return Err(Error::EmptyBox);
        }
        let table = self.prefix(exponent)?;
        Ok(table.box_sum(cells) / from_usize(cells.cell_count()))
    }

    /// `(1/|B|) sum_{cells in B} f^exponent * cellVolume` over the snapped box.
    pub fn box_average(&self, b: &SpaceTimeBox<S>, exponent: S) -> Result<S> {
        let cells = self.spec.snap(b)?;
        self.box_average_cells(&cells, exponent)
    }

    /// `integral f^exponent` over the whole domain.
    pub fn integral(&self, exponent: S) -> Result<S> {
        let table = self.prefix(exponent)?;
        Ok(table.box_sum(&self.spec.full_cells()) * self.spec.cell_volume())
    }

    /// Measure of `{f > lambda}` inside `region`: Lebesgue when `weight` is
    /// `None`, otherwise the `weight`-measure.
    pub fn level_measure(&self, lambda: S, region: &SpaceTimeBox<S>, weight: Option<&Self>) -> Result<S> {
        if let Some(w) = weight {
            self.check_same(w)?;
        }
        let cells = self.spec.snap(region)?;
        let mut total = S::zero();
        self.spec.for_each_cell(&cells, |i| {
            if self.values[i] > lambda {
                total = total + weight.map_or(S::one(), |w| w.values[i]);
            }
        });
        Ok(total * self.spec.cell_volume())
    }

    /// Copies valid cells and fills every masked-out cell with the value of
    /// the nearest valid cell (breadth-first in index space, first found
    /// wins).
    pub fn fill_from_nearest(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::InvalidArgument("mask length does not match the grid".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        let shape = self.spec.shape();
        let strides = self.spec.strides();
        let mut values = self.values.clone();
        let mut seen = mask.to_vec();
        let mut queue: VecDeque<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        while let Some(i) = queue.pop_front() {
            let idx = self.spec.unflatten(i);
            for a in 0..shape.len() {
                let mut visit = |j: usize| {
                    if !seen[j] {
                        seen[j] = true;
                        values[j] = values[i];
                        queue.push_back(j);
                    }
                };
                if idx[a] > 0 {
                    visit(i - strides[a]);
                }
                if idx[a] + 1 < shape[a] {
                    visit(i + strides[a]);
                }
            }
        }
        self.with_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(cells: usize, time_cells: usize, x: f64, t: f64) -> Arc<GridSpec<f64>> {
        Arc::new(GridSpec::uniform(1, cells, time_cells, x, t).unwrap())
    }

    #[test]
    fn constant_average_is_constant() {
        let g = grid_1d(8, 16, 1.0, 1.0);
        let f = GridFunction::constant(g, 3.5).unwrap();
        let b = SpaceTimeBox::new(vec![0.25], vec![0.75], 0.125, 0.5).unwrap();
        assert!((f.box_average(&b, 1.0).unwrap() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn linear_in_time_averages_to_midpoint() {
        let g = grid_1d(4, 64, 1.0, 1.0);
        let f = GridFunction::from_fn(g, |_, t| t).unwrap();
        for (a, b) in [(0.0, 1.0), (0.25, 0.5), (0.125, 0.875)] {
            let bx = SpaceTimeBox::new(vec![0.0], vec![1.0], a, b).unwrap();
            let avg = f.box_average(&bx, 1.0).unwrap();
            assert!((avg - (a + b) / 2.0).abs() < 1e-14, "({a},{b}) -> {avg}");
        }
    }

    #[test]
    fn indicator_average_is_volume_fraction() {
        let g = grid_1d(16, 16, 1.0, 1.0);
        let s = SpaceTimeBox::new(vec![0.25], vec![0.5], 0.5, 0.75).unwrap();
        let s_cells = g.snap(&s).unwrap();
        let mut values = vec![0.0; g.len()];
        g.for_each_cell(&s_cells, |i| values[i] = 1.0);
        let f = GridFunction::new(g.clone(), values).unwrap();
        let b = SpaceTimeBox::new(vec![0.0], vec![0.75], 0.25, 1.0).unwrap();
        let b_cells = g.snap(&b).unwrap();
        // direct summation oracle over the snapped box
        let expected = f.box_sum_direct(&b_cells, 1.0) / b_cells.cell_count() as f64;
        assert_eq!(expected, 16.0 / 144.0);
        assert!((f.box_average(&b, 1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn snapping_rounds_ties_outward_and_rejects_outside() {
        let g = grid_1d(4, 4, 1.0, 1.0);
        // faces at 0.5 cell: lo rounds down, hi rounds up
        let b = SpaceTimeBox::new(vec![0.125], vec![0.375], 0.125, 0.375).unwrap();
        let c = g.snap(&b).unwrap();
        assert_eq!((c.lo[0], c.hi[0], c.lo[1], c.hi[1]), (0, 2, 0, 2));
        let outside = SpaceTimeBox::new(vec![0.5], vec![1.5], 0.0, 0.5).unwrap();
        assert!(matches!(g.snap(&outside), Err(Error::BoxOutsideDomain)));
        let thin = SpaceTimeBox::new(vec![0.0], vec![1.0], 0.3, 0.35).unwrap();
        assert!(matches!(g.snap(&thin), Err(Error::EmptyBox)));
    }

    #[test]
    fn power_transform_cases() {
        let g = grid_1d(4, 4, 1.0, 1.0);
        let f = GridFunction::from_fn(g, |x, t| 1.0 + x[0] + 2.0 * t).unwrap();
        assert_eq!(f.power_transform(1.0).unwrap(), f);
        // q = 2: exponent 1 - q' = -1 is the reciprocal
        let r = f.power_transform(-1.0).unwrap();
        for (a, b) in f.values().iter().zip(r.values()) {
            assert_eq!(*b, 1.0 / a);
        }
        let q = 3.0_f64;
        let qc = q / (q - 1.0);
        let back = f.power_transform(1.0 - qc).unwrap().power_transform(1.0 - q).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-14 * a);
        }
        let neg = f.map(|v| -v).unwrap();
        assert!(matches!(neg.power_transform(-0.5), Err(Error::NonPositive { .. })));
        assert!(neg.power_transform(2.0).is_ok());
    }

    #[test]
    fn level_measure_cases() {
        let g = grid_1d(8, 64, 1.0, 1.0);
        let f = GridFunction::from_fn(g.clone(), |_, t| t).unwrap();
        let region = g.domain().clone();
        assert!((f.level_measure(-1.0, &region, None).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(f.level_measure(f.max_value(), &region, None).unwrap(), 0.0);
        let half = f.level_measure(0.5, &region, None).unwrap();
        assert!((half - 0.5).abs() <= g.time_step() + 1e-14);
        let w = GridFunction::constant(g.clone(), 2.0).unwrap();
        let weighted = f.level_measure(0.5, &region, Some(&w)).unwrap();
        assert!((weighted - 2.0 * half).abs() < 1e-14);
        let other = GridFunction::constant(grid_1d(4, 4, 1.0, 1.0), 1.0).unwrap();
        assert!(matches!(f.level_measure(0.5, &region, Some(&other)), Err(Error::SpecMismatch)));
    }

    #[test]
    fn combine_cases() {
        let g = grid_1d(4, 8, 1.0, 1.0);
        let u = GridFunction::from_fn(g.clone(), |x, t| 1.0 + x[0] * t).unwrap();
        let v = GridFunction::from_fn(g.clone(), |x, _| 2.0 - x[0]).unwrap();
        assert_eq!(u.combine(&u, Combine::Min).unwrap(), u);
        let m = u.combine(&v, Combine::Min).unwrap();
        assert!(m.values().iter().zip(u.values()).all(|(a, b)| a <= b));
        let e = GridFunction::from_fn(g.clone(), |_, t| t.exp()).unwrap();
        let en = GridFunction::from_fn(g.clone(), |_, t| (-t).exp()).unwrap();
        let one = e.combine(&en, Combine::Product).unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let zero = GridFunction::constant(g, 0.0).unwrap();
        assert!(matches!(u.combine(&zero, Combine::Quotient), Err(Error::QuotientBelowFloor { .. })));
    }

    #[test]
    fn weight_ingestion_clamps() {
        let g = grid_1d(2, 2, 1.0, 1.0);
        let w = GridFunction::weight(g, vec![1.0, 0.0, -3.0, 2.0], 1e-12).unwrap();
        assert_eq!(w.values(), &[1.0, 1e-12, 1e-12, 2.0]);
    }

    #[test]
    fn reverse_time_is_involution() {
        let g = grid_1d(3, 5, 1.0, 1.0);
        let f = GridFunction::from_fn(g, |x, t| x[0] + 10.0 * t).unwrap();
        let r = f.reverse_time();
        assert_ne!(r, f);
        assert_eq!(r.reverse_time(), f);
        assert_eq!(r.get(0), f.get(f.len() - 3));
    }

    #[test]
    fn nearest_fill_copies_neighbours() {
        let g = grid_1d(3, 3, 1.0, 1.0);
        let f = GridFunction::new(g, (0..9).map(|i| i as f64).collect()).unwrap();
        let mut mask = vec![false; 9];
        mask[4] = true;
        let filled = f.fill_from_nearest(&mask).unwrap();
        assert!(filled.values().iter().all(|v| *v == 4.0));
        assert!(matches!(f.fill_from_nearest(&[false; 9]), Err(Error::EmptyMask)));
    }

    #[test]
    fn locate_and_center_agree() {
        let g = GridSpec::uniform(2, 4, 6, 2.0, 3.0).unwrap();
        for i in 0..g.len() {
            let (x, t) = g.cell_center(i);
            assert_eq!(g.locate(&x, t), Some(i));
        }
        assert_eq!(g.locate(&[2.5, 0.0], 1.0), None);
    }
}
