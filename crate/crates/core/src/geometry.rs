//! Parabolic rectangles, their lagged halves and finite rectangle families.
//!
//! A parabolic rectangle of side `l` centred at `(x, t)` is the box
//! `Q(x, l) x (t - l^p, t + l^p)`. Its upper half with time lag `gamma` is
//! `Q(x, l) x (t + gamma l^p, t + l^p)`; the lower half is the reflection of
//! the upper half across the time slice through the centre.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridfn::GridSpec;
use crate::scalar::{lit, Scalar};

/// Orientation of the time axis. `Forward` is the `+` side of the one-sided
/// theory (past half controlled by the future half), `Backward` the `-` side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn sign(self) -> &'static str {
        match self {
            Direction::Forward => "+",
            Direction::Backward => "-",
        }
    }
}

/// The exponent triple `(p, q, gamma)`: anisotropy, integrability index and
/// time lag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Exponents<S> {
    p: S,
    q: S,
    gamma: S,
}

impl<S: Scalar> Exponents<S> {
    pub fn new(p: S, q: S, gamma: S) -> Result<Self> {
        if !(p > S::one()) || !p.is_finite() {
            return Err(Error::InvalidExponents(format!("p = {p} must satisfy 1 < p < inf")));
        }
        if !(q > S::one()) || !q.is_finite() {
            return Err(Error::InvalidExponents(format!("q = {q} must satisfy 1 < q < inf")));
        }
        if !(gamma >= S::zero() && gamma < S::one()) {
            return Err(Error::InvalidExponents(format!("gamma = {gamma} must lie in [0, 1)")));
        }
        Ok(Self { p, q, gamma })
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn q(&self) -> S {
        self.q
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    /// Conjugate index `q' = q / (q - 1)`.
    pub fn q_conj(&self) -> S {
        self.q / (self.q - S::one())
    }

    /// Exponent `1 - q'` of the dual weight `sigma = w^(1 - q')`.
    pub fn dual_exponent(&self) -> S {
        S::one() - self.q_conj()
    }

    pub fn with_q(&self, q: S) -> Result<Self> {
        Self::new(self.p, q, self.gamma)
    }

    pub fn with_gamma(&self, gamma: S) -> Result<Self> {
        Self::new(self.p, self.q, gamma)
    }

    /// The exponents of the dual problem: index `q'`, same `p` and lag.
    pub fn dual(&self) -> Self {
        Self { p: self.p, q: self.q_conj(), gamma: self.gamma }
    }
}

/// Axis-aligned box `[lo, hi]^n x (time_lo, time_hi)` in space-time.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpaceTimeBox<S> {
    pub spatial_lo: Vec<S>,
    pub spatial_hi: Vec<S>,
    pub time_lo: S,
    pub time_hi: S,
}

impl<S: Scalar> SpaceTimeBox<S> {
    pub fn new(spatial_lo: Vec<S>, spatial_hi: Vec<S>, time_lo: S, time_hi: S) -> Result<Self> {
        if spatial_lo.is_empty() || spatial_lo.len() != spatial_hi.len() {
            return Err(Error::InvalidBox("spatial bounds must be non-empty and of equal length".into()));
        }
        if spatial_lo.iter().zip(&spatial_hi).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidBox("spatial lower bounds must lie below upper bounds".into()));
        }
        if !(time_lo < time_hi) {
            return Err(Error::InvalidBox(format!("time interval ({time_lo}, {time_hi}) is empty")));
        }
        Ok(Self { spatial_lo, spatial_hi, time_lo, time_hi })
    }

    /// Box `[0, x_extent]^n x (0, t_extent)`.
    pub fn origin(n: usize, x_extent: S, t_extent: S) -> Result<Self> {
        Self::new(vec![S::zero(); n], vec![x_extent; n], S::zero(), t_extent)
    }

    pub fn dim(&self) -> usize {
        self.spatial_lo.len()
    }

    pub fn duration(&self) -> S {
        self.time_hi - self.time_lo
    }

    pub fn volume(&self) -> S {
        let space = self
            .spatial_lo
            .iter()
            .zip(&self.spatial_hi)
            .fold(S::one(), |acc, (lo, hi)| acc * (*hi - *lo));
        space * self.duration()
    }

    /// Containment up to an absolute slack `tol` on every face.
    pub fn contains_box(&self, other: &Self, tol: S) -> bool {
        self.dim() == other.dim()
            && self.spatial_lo.iter().zip(&other.spatial_lo).all(|(a, b)| *b >= *a - tol)
            && self.spatial_hi.iter().zip(&other.spatial_hi).all(|(a, b)| *b <= *a + tol)
            && other.time_lo >= self.time_lo - tol
            && other.time_hi <= self.time_hi + tol
    }

    /// Reflection of the box across the time slice `t = center`.
    pub fn reflect_time(&self, center: S) -> Self {
        let two = lit::<S>(2.0);
        Self {
            spatial_lo: self.spatial_lo.clone(),
            spatial_hi: self.spatial_hi.clone(),
            time_lo: two * center - self.time_hi,
            time_hi: two * center - self.time_lo,
        }
    }
}

/// `E + s`: the box shifted by `s` along the time axis only.
pub fn translate_time<S: Scalar>(b: &SpaceTimeBox<S>, s: S) -> SpaceTimeBox<S> {
    SpaceTimeBox {
        spatial_lo: b.spatial_lo.clone(),
        spatial_hi: b.spatial_hi.clone(),
        time_lo: b.time_lo + s,
        time_hi: b.time_hi + s,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParabolicRectangle<S> {
    pub center: Vec<S>,
    pub time: S,
    pub side: S,
}

impl<S: Scalar> ParabolicRectangle<S> {
    pub fn new(center: Vec<S>, time: S, side: S) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidBox("rectangle needs at least one spatial dimension".into()));
        }
        if !(side > S::zero()) {
            return Err(Error::InvalidBox(format!("side length {side} must be positive")));
        }
        Ok(Self { center, time, side })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Half the time extent, `l^p`.
    pub fn time_radius(&self, p: S) -> S {
        self.side.powf(p)
    }

    fn with_time(&self, lo: S, hi: S) -> SpaceTimeBox<S> {
        let half = self.side / lit(2.0);
        SpaceTimeBox {
            spatial_lo: self.center.iter().map(|c| *c - half).collect(),
            spatial_hi: self.center.iter().map(|c| *c + half).collect(),
            time_lo: lo,
            time_hi: hi,
        }
    }

    /// The whole rectangle `Q(x, l) x (t - l^p, t + l^p)`.
    pub fn full(&self, p: S) -> SpaceTimeBox<S> {
        let r = self.time_radius(p);
        self.with_time(self.time - r, self.time + r)
    }

    pub fn upper(&self, p: S, gamma: S) -> SpaceTimeBox<S> {
        let r = self.time_radius(p);
        self.with_time(self.time + gamma * r, self.time + r)
    }

    pub fn lower(&self, p: S, gamma: S) -> SpaceTimeBox<S> {
        let r = self.time_radius(p);
        self.with_time(self.time - r, self.time - gamma * r)
    }

    /// Half that plays the "past" role for the given direction.
    pub fn past(&self, p: S, gamma: S, direction: Direction) -> SpaceTimeBox<S> {
        match direction {
            Direction::Forward => self.lower(p, gamma),
            Direction::Backward => self.upper(p, gamma),
        }
    }

    pub fn future(&self, p: S, gamma: S, direction: Direction) -> SpaceTimeBox<S> {
        self.past(p, gamma, direction.reversed())
    }
}

/// `(R^-(gamma), R^+(gamma))`.
pub fn lagged_halves<S: Scalar>(
    rect: &ParabolicRectangle<S>,
    p: S,
    gamma: S,
) -> Result<(SpaceTimeBox<S>, SpaceTimeBox<S>)> {
    if !(gamma >= S::zero() && gamma < S::one()) {
        return Err(Error::InvalidExponents(format!("gamma = {gamma} must lie in [0, 1)")));
    }
    Ok((rect.lower(p, gamma), rect.upper(p, gamma)))
}

/// How a [`RectangleFamily`] was generated.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FamilyProvenance<S> {
    pub base_side: S,
    pub scale_count: usize,
    pub stride_factor: S,
    /// Side lengths that produced at least one member.
    pub scales: Vec<S>,
    /// Dyadic scales dropped because the full rectangle does not fit.
    pub skipped_scales: Vec<S>,
    pub clipping: &'static str,
    pub p: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleFamily<S> {
    pub members: Vec<ParabolicRectangle<S>>,
    pub provenance: FamilyProvenance<S>,
}

impl<S: Scalar> RectangleFamily<S> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn largest_side(&self) -> S {
        self.members.iter().map(|r| r.side).fold(S::zero(), S::max)
    }
}

/// Number of lattice positions `lo + size/2 + k * stride` with the window of
/// width `size` inside `[lo, lo + extent]`.
fn lattice_count<S: Scalar>(extent: S, size: S, stride: S) -> usize {
    let slack = lit::<S>(1e-9);
    let room = (extent - size) / stride;
    if room < -slack {
        return 0;
    }
    (room + slack).floor().to_usize().unwrap_or(0) + 1
}

/// Dyadic family with the smallest side equal to the largest spatial cell
/// width of `grid`.
pub fn enumerate_family<S: Scalar>(
    domain: &SpaceTimeBox<S>,
    grid: &GridSpec<S>,
    p: S,
    scale_count: usize,
    stride_factor: S,
) -> Result<RectangleFamily<S>> {
    let base = (0..grid.n()).map(|a| grid.cell_width(a)).fold(S::zero(), S::max);
    enumerate_family_from(domain, p, base, scale_count, stride_factor)
}

/// Dyadic rectangle family with sides `base_side * 2^k`, `k < scale_count`.
///
/// Centres sit on a lattice with spatial stride `stride_factor * l` and time
/// stride `stride_factor * l^p`, starting where the rectangle touches the low
/// faces of `domain`. Only rectangles whose full extent fits are kept.
/// Members are ordered by scale, then lexicographically by
/// `(x_1, .., x_n, t)`.
pub fn enumerate_family_from<S: Scalar>(
    domain: &SpaceTimeBox<S>,
    p: S,
    base_side: S,
    scale_count: usize,
    stride_factor: S,
) -> Result<RectangleFamily<S>> {
    if scale_count == 0 {
        return Err(Error::InvalidArgument("scale count must be at least 1".into()));
    }
    if !(stride_factor > S::zero() && stride_factor <= S::one()) {
        return Err(Error::InvalidArgument(format!("stride factor {stride_factor} must lie in (0, 1]")));
    }
    if !(base_side > S::zero()) {
        return Err(Error::InvalidArgument(format!("base side {base_side} must be positive")));
    }
    let n = domain.dim();
    let mut members = Vec::new();
    let mut scales = Vec::new();
    let mut skipped = Vec::new();
    let two = lit::<S>(2.0);
    for k in 0..scale_count {
        let side = base_side * two.powi(k as i32);
        let radius = side.powf(p);
        let spatial_counts: Vec<usize> = (0..n)
            .map(|a| lattice_count(domain.spatial_hi[a] - domain.spatial_lo[a], side, stride_factor * side))
            .collect();
        let time_count = lattice_count(domain.duration(), two * radius, stride_factor * radius);
        if time_count == 0 || spatial_counts.contains(&0) {
            skipped.push(side);
            continue;
        }
        scales.push(side);
        let total: usize = spatial_counts.iter().product();
        for flat in 0..total {
            // last spatial axis varies fastest
            let mut rest = flat;
            let mut index = vec![0usize; n];
            for a in (0..n).rev() {
                index[a] = rest % spatial_counts[a];
                rest /= spatial_counts[a];
            }
            let center: Vec<S> = (0..n)
                .map(|a| {
                    domain.spatial_lo[a] + side / two + S::from_usize(index[a]).unwrap() * stride_factor * side
                })
                .collect();
            for j in 0..time_count {
                let t = domain.time_lo + radius + S::from_usize(j).unwrap() * stride_factor * radius;
                members.push(ParabolicRectangle { center: center.clone(), time: t, side });
            }
        }
    }
    if members.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(RectangleFamily {
        members,
        provenance: FamilyProvenance {
            base_side,
            scale_count,
            stride_factor,
            scales,
            skipped_scales: skipped,
            clipping: "clip-out",
            p,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, t: f64, l: f64) -> ParabolicRectangle<f64> {
        ParabolicRectangle::new(vec![x], t, l).unwrap()
    }

    #[test]
    fn lagged_halves_unit_rectangle() {
        let (lower, upper) = lagged_halves(&rect(0.0, 0.0, 1.0), 2.0, 0.5).unwrap();
        assert_eq!(upper.spatial_lo, vec![-0.5]);
        assert_eq!(upper.spatial_hi, vec![0.5]);
        assert_eq!((upper.time_lo, upper.time_hi), (0.5, 1.0));
        assert_eq!((lower.time_lo, lower.time_hi), (-1.0, -0.5));
    }

    #[test]
    fn zero_lag_gives_full_upper_half() {
        let r = rect(0.3, 2.0, 0.5);
        let (_, upper) = lagged_halves(&r, 2.0, 0.0).unwrap();
        assert_eq!((upper.time_lo, upper.time_hi), (2.0, 2.25));
    }

    #[test]
    fn half_volumes_match_formula() {
        let (lower, upper) = lagged_halves(&rect(0.0, 0.0, 2.0), 3.0, 0.25).unwrap();
        assert!((lower.volume() - 12.0).abs() < 1e-12);
        assert!((upper.volume() - 12.0).abs() < 1e-12);
        assert!((rect(0.0, 0.0, 2.0).full(3.0).volume() - 2.0 * 2.0 * 8.0).abs() < 1e-12);
    }

    #[test]
    fn lag_outside_range_rejected() {
        assert!(lagged_halves(&rect(0.0, 0.0, 1.0), 2.0, 1.0).is_err());
        assert!(lagged_halves(&rect(0.0, 0.0, 1.0), 2.0, -0.1).is_err());
    }

    #[test]
    fn translate_time_examples() {
        let b = SpaceTimeBox::new(vec![0.0], vec![1.0], 0.0, 1.0).unwrap();
        let moved = translate_time(&b, 1.0);
        assert_eq!((moved.time_lo, moved.time_hi), (1.0, 2.0));
        assert_eq!(moved.spatial_lo, b.spatial_lo);
        assert_eq!(translate_time(&b, 0.0), b);
        assert_eq!(translate_time(&translate_time(&b, 0.375), -0.375), b);
    }

    #[test]
    fn exponents_validation_and_conjugate() {
        assert!(Exponents::new(1.0, 2.0, 0.0).is_err());
        assert!(Exponents::new(2.0, 1.0, 0.0).is_err());
        assert!(Exponents::new(2.0, 2.0, 1.0).is_err());
        for q in [1.5, 2.0, 3.0, 4.0, 7.25] {
            let e = Exponents::<f64>::new(2.0, q, 0.25).unwrap();
            let lhs = (1.0 - e.q_conj()) * (1.0 - e.q());
            assert!((lhs - 1.0).abs() < 1e-12, "q = {q}");
        }
    }

    #[test]
    fn box_validation() {
        assert!(SpaceTimeBox::new(vec![0.0], vec![0.0], 0.0, 1.0).is_err());
        assert!(SpaceTimeBox::new(vec![0.0], vec![1.0], 1.0, 1.0).is_err());
        assert!(SpaceTimeBox::<f64>::new(vec![], vec![], 0.0, 1.0).is_err());
    }

    #[test]
    fn family_rejects_bad_parameters() {
        let d = SpaceTimeBox::origin(1, 1.0, 1.0).unwrap();
        assert!(enumerate_family_from(&d, 2.0, 0.125, 0, 1.0).is_err());
        assert!(enumerate_family_from(&d, 2.0, 0.125, 1, 0.0).is_err());
        assert!(enumerate_family_from(&d, 2.0, 0.125, 1, 1.5).is_err());
        assert!(matches!(enumerate_family_from(&d, 2.0, 4.0, 2, 1.0), Err(Error::EmptyFamily)));
    }

    #[test]
    fn oversized_scales_are_skipped() {
        let d = SpaceTimeBox::origin(1, 1.0, 1.0).unwrap();
        let fam = enumerate_family_from(&d, 2.0, 0.125, 6, 1.0).unwrap();
        // 2 l^2 <= 1 admits l <= 1/sqrt(2): sides 1/8, 1/4, 1/2
        assert_eq!(fam.provenance.scales, vec![0.125, 0.25, 0.5]);
        assert_eq!(fam.provenance.skipped_scales, vec![1.0, 2.0, 4.0]);
    }
}
