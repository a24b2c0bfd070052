//! Rubio de Francia factorisation `w = u v^{1-q}` with `u` in `A_1^+` and
//! `v` in `A_1^-`, and the converse product check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Direction, Exponents, RectangleFamily};
use crate::gridfn::GridFunction;
use crate::maximal::{maximal, EvalPath};
use crate::scalar::{lit, to_f64, Scalar};
use crate::weights::{a1_constant, aq_constant, WeightReport};

/// The iteration operator
/// `T f = (w^{-1/q} M^{gamma-}(f^{q-1} w^{1/q}))^{1/(q-1)} + w^{1/q} M^{gamma+}(f w^{-1/q})`
/// for `q >= 2`, evaluated on the intersection of both validity masks and
/// set to zero elsewhere.
pub struct RdfOperator<'a, S: Scalar> {
    w: &'a GridFunction<S>,
    exps: Exponents<S>,
    scales: Vec<S>,
    path: EvalPath,
    w_root: GridFunction<S>,
    w_root_inv: GridFunction<S>,
    valid: Vec<bool>,
}

impl<'a, S: Scalar> RdfOperator<'a, S> {
    pub fn new(w: &'a GridFunction<S>, exps: &Exponents<S>, scales: &[S], path: EvalPath) -> Result<Self> {
        if exps.q() < lit(2.0) {
            return Err(Error::IndexBelowTwo(to_f64(exps.q())));
        }
        let w_root = w.power_transform(exps.q().recip())?;
        let w_root_inv = w.power_transform(-exps.q().recip())?;
        let probe = GridFunction::constant(w.shared_spec(), S::one())?;
        let back = maximal(&probe, exps, Direction::Backward, scales, path)?;
        let fwd = maximal(&probe, exps, Direction::Forward, scales, path)?;
        let valid: Vec<bool> = back.valid.iter().zip(&fwd.valid).map(|(a, b)| *a && *b).collect();
        if !valid.iter().any(|v| *v) {
            return Err(Error::EmptyMask);
        }
        Ok(Self { w, exps: *exps, scales: scales.to_vec(), path, w_root, w_root_inv, valid })
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn apply(&self, f: &GridFunction<S>) -> Result<GridFunction<S>> {
        if !f.same_grid(self.w) {
            return Err(Error::SpecMismatch);
        }
        let q = self.exps.q();
        let qm1 = q - S::one();
        let inner_back = f.zip_with(&self.w_root, |x, r| x.abs().powf(qm1) * r)?;
        let inner_fwd = f.zip_with(&self.w_root_inv, |x, r| x.abs() * r)?;
        let mb = maximal(&inner_back, &self.exps, Direction::Backward, &self.scales, self.path)?;
        let mf = maximal(&inner_fwd, &self.exps, Direction::Forward, &self.scales, self.path)?;
        let values = (0..f.len())
            .map(|i| {
                if !self.valid[i] {
                    return S::zero();
                }
                let first = (self.w_root_inv.get(i) * mb.output.get(i)).powf(qm1.recip());
                first + self.w_root.get(i) * mf.output.get(i)
            })
            .collect();
        f.with_values(values)
    }
}

/// One application of the iteration operator; see [`RdfOperator`].
pub fn rdf_operator<S: Scalar>(
    f: &GridFunction<S>,
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
) -> Result<GridFunction<S>> {
    RdfOperator::new(w, exps, scales, EvalPath::Prefix)?.apply(f)
}

#[derive(Clone, Debug)]
pub struct FactorizeOptions<S: Scalar> {
    pub scales: Vec<S>,
    /// Starting function; defaults to the constant with unit `L^q` norm.
    pub f0: Option<GridFunction<S>>,
    /// Truncation: stop once a term's maximum is below `tol * min phi`.
    pub tol: S,
    pub seed: u64,
    pub max_terms: usize,
    pub max_restarts: usize,
    pub path: EvalPath,
}

impl<S: Scalar> FactorizeOptions<S> {
    pub fn new(scales: Vec<S>) -> Self {
        Self {
            scales,
            f0: None,
            tol: lit(1e-10),
            seed: 0,
            max_terms: 400,
            max_restarts: 8,
            path: EvalPath::Prefix,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FactorizationResult<S: Scalar> {
    #[serde(skip)]
    pub u: GridFunction<S>,
    #[serde(skip)]
    pub v: GridFunction<S>,
    #[serde(skip)]
    pub phi: GridFunction<S>,
    /// Operator-norm surrogate used by the accepted series.
    pub b: S,
    /// Initial surrogate from the probe battery, safety factor included.
    pub b_initial: S,
    pub restarts: usize,
    pub terms: usize,
    /// Maximum of each accepted series term.
    pub trace: Vec<S>,
    /// `max |u v^{1-q} - w| / w` over the grid.
    pub residual: S,
    /// `max_V (T phi - 2 B phi) / (2 B phi)` on the valid region.
    pub fixed_point_excess: S,
    pub a1_u: WeightReport<S>,
    pub a1_v: WeightReport<S>,
    #[serde(skip)]
    pub valid: Vec<bool>,
    /// Cells outside the valid region whose `phi` was copied from the nearest
    /// valid cell.
    pub extended_cells: usize,
    /// The index was below 2 and the dual weight was factorised instead.
    pub via_dual: bool,
}

fn lq_norm<S: Scalar>(f: &GridFunction<S>, q: S) -> S {
    let s = f.values().iter().fold(S::zero(), |s, x| s + x.abs().powf(q));
    (s * f.spec().cell_volume()).powf(q.recip())
}

fn probe_norm<S: Scalar>(op: &RdfOperator<S>, f0: &GridFunction<S>, q: S, seed: u64) -> Result<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lq_norm(&op.apply(f0)?, q) / lq_norm(f0, q);
    for _ in 0..4 {
        let raw: Vec<S> = (0..f0.len()).map(|_| lit(rng.gen_range(0.0..1.0))).collect();
        let probe = f0.with_values(raw)?;
        let norm = lq_norm(&probe, q);
        let probe = probe.scale(norm.recip())?;
        best = best.max(lq_norm(&op.apply(&probe)?, q));
    }
    Ok(lit::<S>(2.0) * best)
}

struct Series<S: Scalar> {
    phi: GridFunction<S>,
    trace: Vec<S>,
}

fn run_series<S: Scalar>(op: &RdfOperator<S>, f0: &GridFunction<S>, b: S, opts: &FactorizeOptions<S>) -> Result<Option<Series<S>>> {
    let two_b = lit::<S>(2.0) * b;
    let mut term = f0.clone();
    let mut phi = GridFunction::constant(f0.shared_spec(), S::zero())?;
    let mut trace = Vec::new();
    let mut growth = 0;
    for _ in 0..opts.max_terms {
        term = op.apply(&term)?.scale(two_b.recip())?;
        phi = phi.add(&term)?;
        let top = term.max_value();
        if !top.is_finite() {
            return Ok(None);
        }
        growth = if trace.last().is_some_and(|&prev| top > prev) { growth + 1 } else { 0 };
        trace.push(top);
        if growth >= 3 {
            return Ok(None);
        }
        let floor = phi
            .values()
            .iter()
            .zip(op.valid())
            .filter(|(_, v)| **v)
            .fold(S::infinity(), |m, (x, _)| m.min(*x));
        if top < opts.tol * floor {
            return Ok(Some(Series { phi, trace }));
        }
    }
    Ok(None)
}

fn factorize_forward<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    opts: &FactorizeOptions<S>,
) -> Result<FactorizationResult<S>> {
    let q = exps.q();
    let op = RdfOperator::new(w, exps, &opts.scales, opts.path)?;
    let f0 = match &opts.f0 {
        Some(f) => f.clone(),
        None => GridFunction::constant(w.shared_spec(), w.spec().domain().volume().powf(-q.recip()))?,
    };
    let b_initial = probe_norm(&op, &f0, q, opts.seed)?;
    let mut b = b_initial;
    let mut found = None;
    let mut restarts = 0;
    for attempt in 0..=opts.max_restarts {
        if let Some(s) = run_series(&op, &f0, b, opts)? {
            found = Some(s);
            restarts = attempt;
            break;
        }
        log::info!("series diverged with B = {b}; doubling");
        if attempt < opts.max_restarts {
            b = b * lit(2.0);
        }
    }
    let Some(Series { phi, trace }) = found else {
        return Err(Error::SeriesDiverged { restarts: opts.max_restarts, last_b: to_f64(b) });
    };

    let valid = op.valid().to_vec();
    let two_b = lit::<S>(2.0) * b;
    let t_phi = op.apply(&phi)?;
    let fixed_point_excess = (0..phi.len())
        .filter(|&i| valid[i])
        .map(|i| (t_phi.get(i) - two_b * phi.get(i)) / (two_b * phi.get(i)))
        .fold(S::neg_infinity(), S::max);

    let phi = phi.fill_from_nearest(&valid)?;
    let extended_cells = valid.iter().filter(|v| !**v).count();
    let u = phi.zip_with(w, |p, wv| wv.powf(q.recip()) * p.powf(q - S::one()))?;
    let v = phi.zip_with(w, |p, wv| wv.powf(-q.recip()) * p)?;
    let residual = reconstruction_residual(&u, &v, w, q)?;
    let a1_u = a1_constant(&u, exps, Direction::Forward, &opts.scales, Some(&valid), opts.path)?;
    let a1_v = a1_constant(&v, exps, Direction::Backward, &opts.scales, Some(&valid), opts.path)?;
    Ok(FactorizationResult {
        u,
        v,
        phi,
        b,
        b_initial,
        restarts,
        terms: trace.len(),
        trace,
        residual,
        fixed_point_excess,
        a1_u,
        a1_v,
        valid,
        extended_cells,
        via_dual: false,
    })
}

/// `max |u v^{1-q} - w| / w`.
pub fn reconstruction_residual<S: Scalar>(u: &GridFunction<S>, v: &GridFunction<S>, w: &GridFunction<S>, q: S) -> Result<S> {
    let rebuilt = u.zip_with(v, |a, b| a * b.powf(S::one() - q))?;
    Ok(rebuilt.values().iter().zip(w.values()).fold(S::zero(), |m, (r, x)| m.max((*r - *x).abs() / *x)))
}

/// Factorises `w = u v^{1-q}`.
///
/// For `q >= 2` the series `phi = sum_i (2B)^{-i} T^i f0` is summed with `B`
/// doubled whenever the terms grow for three consecutive iterations or the
/// term budget runs out. For `q < 2` the dual weight `w^{1-q'}` is
/// factorised at index `q'` with time reversed and the factors are mapped
/// back.
pub fn factorize<S: Scalar>(
    w: &GridFunction<S>,
    exps: &Exponents<S>,
    opts: &FactorizeOptions<S>,
) -> Result<FactorizationResult<S>> {
    if let Some(i) = w.values().iter().position(|x| !(*x > S::zero())) {
        return Err(Error::NonPositive { index: i, value: to_f64(w.get(i)) });
    }
    if exps.q() >= lit(2.0) {
        return factorize_forward(w, exps, opts);
    }
    let dual = exps.dual();
    let sigma = w.power_transform(exps.dual_exponent())?.reverse_time();
    let mut dual_opts = opts.clone();
    dual_opts.f0 = opts.f0.as_ref().map(|f| f.reverse_time());
    let r = factorize_forward(&sigma, &dual, &dual_opts)?;
    let u = r.v.reverse_time();
    let v = r.u.reverse_time();
    let valid: Vec<bool> = {
        let slice = w.len() / w.spec().time_cells();
        r.valid.chunks(slice).rev().flatten().copied().collect()
    };
    let residual = reconstruction_residual(&u, &v, w, exps.q())?;
    let a1_u = a1_constant(&u, exps, Direction::Forward, &opts.scales, Some(&valid), opts.path)?;
    let a1_v = a1_constant(&v, exps, Direction::Backward, &opts.scales, Some(&valid), opts.path)?;
    Ok(FactorizationResult {
        u,
        v,
        phi: r.phi.reverse_time(),
        residual,
        a1_u,
        a1_v,
        valid,
        via_dual: true,
        ..r
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProductSynthesisReport<S: Scalar> {
    /// `A_q^+` constant of `u v^{1-q}` at the lag of `exps`.
    pub aq: WeightReport<S>,
    /// `A_1^+(gamma)` constant of `u`.
    pub a1_u: WeightReport<S>,
    /// `A_1^-(gamma)` constant of `v`.
    pub a1_v: WeightReport<S>,
}

/// Checks the product direction: `u v^{1-q}` for `u` in `A_1^+(gamma)` and
/// `v` in `A_1^-(gamma)` should lie in `A_q^+(delta)` where `delta` is the
/// lag of `exps` and `gamma < delta 2^{1-p}`.
pub fn product_synthesis_check<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    exps: &Exponents<S>,
    a1_gamma: S,
    family: &RectangleFamily<S>,
    scales: &[S],
) -> Result<ProductSynthesisReport<S>> {
    let limit = exps.gamma() * lit::<S>(2.0).powf(S::one() - exps.p());
    if !(a1_gamma < limit) && !(a1_gamma == S::zero() && exps.gamma() == S::zero()) {
        return Err(Error::Hypothesis(format!(
            "lag {a1_gamma} of the A_1 factors must be below delta 2^(1-p) = {limit}"
        )));
    }
    let w = u.zip_with(v, |a, b| a * b.powf(S::one() - exps.q()))?;
    let inner = exps.with_gamma(a1_gamma)?;
    Ok(ProductSynthesisReport {
        aq: aq_constant(&w, exps, Direction::Forward, family)?,
        a1_u: a1_constant(u, &inner, Direction::Forward, scales, None, EvalPath::Prefix)?,
        a1_v: a1_constant(v, &inner, Direction::Backward, scales, None, EvalPath::Prefix)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_family_from, SpaceTimeBox};
    use crate::gridfn::GridSpec;
    use crate::maximal::dyadic_scales;
    use std::sync::Arc;

    fn spec() -> Arc<GridSpec<f64>> {
        GridSpec::uniform(1, 16, 64, 1.0, 1.0).unwrap().into()
    }

    #[test]
    fn operator_on_constants() {
        let s = spec();
        let w = GridFunction::constant(s.clone(), 1.0).unwrap();
        let f = GridFunction::constant(s, 3.0).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.25).unwrap();
        let op = RdfOperator::new(&w, &e, &dyadic_scales(0.125, 2), EvalPath::Prefix).unwrap();
        let t = op.apply(&f).unwrap();
        for i in 0..t.len() {
            if op.valid()[i] {
                assert!((t.get(i) - 6.0).abs() < 1e-12);
            } else {
                assert_eq!(t.get(i), 0.0);
            }
        }
        let low = Exponents::new(2.0, 1.5, 0.25).unwrap();
        assert!(matches!(rdf_operator(&f, &w, &low, &[0.125]), Err(Error::IndexBelowTwo(_))));
    }

    #[test]
    fn operator_is_sublinear() {
        let s = spec();
        let w = GridFunction::from_fn(s.clone(), |_: &[f64], t: f64| t.exp()).unwrap();
        let f = GridFunction::from_fn(s.clone(), |x: &[f64], t: f64| (x[0] * 9.0 + t).sin().abs()).unwrap();
        let g = GridFunction::from_fn(s, |x: &[f64], t: f64| (x[0] - t).cos().abs()).unwrap();
        for q in [2.0, 3.0] {
            let e = Exponents::new(2.0, q, 0.25).unwrap();
            let op = RdfOperator::new(&w, &e, &dyadic_scales(0.125, 2), EvalPath::Prefix).unwrap();
            let lhs = op.apply(&f.add(&g).unwrap()).unwrap();
            let rhs = op.apply(&f).unwrap().add(&op.apply(&g).unwrap()).unwrap();
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                assert!(*a <= b + 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn unit_weight_factorises_symmetrically() {
        let w = GridFunction::constant(spec(), 1.0).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.25).unwrap();
        let r = factorize(&w, &e, &FactorizeOptions::new(dyadic_scales(0.125, 2))).unwrap();
        assert_eq!(r.u, r.v);
        assert!(r.residual <= 1e-12);
        assert!(r.fixed_point_excess <= 1e-10);
        assert!(r.a1_u.constant.is_finite() && r.a1_v.constant.is_finite());
    }

    #[test]
    fn residual_for_both_index_ranges() {
        let w = GridFunction::from_fn(spec(), |x: &[f64], t: f64| (t + 0.3 * (5.0 * x[0]).sin()).exp()).unwrap();
        for q in [1.5, 2.0, 3.0] {
            let e = Exponents::new(2.0, q, 0.25).unwrap();
            let r = factorize(&w, &e, &FactorizeOptions::new(dyadic_scales(0.125, 2))).unwrap();
            assert!(r.residual <= 1e-12, "q = {q}: {}", r.residual);
            assert_eq!(r.via_dual, q < 2.0);
            assert!(r.phi.values().iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let w = GridFunction::constant(spec(), 1.0).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.25).unwrap();
        let mut opts = FactorizeOptions::new(dyadic_scales(0.125, 2));
        opts.max_terms = 2;
        opts.max_restarts = 1;
        assert!(matches!(factorize(&w, &e, &opts), Err(Error::SeriesDiverged { restarts: 1, .. })));
    }

    #[test]
    fn product_of_simple_factors() {
        let s = spec();
        let domain = SpaceTimeBox::new(vec![0.0], vec![1.0], 0.0, 1.0).unwrap();
        let family = enumerate_family_from(&domain, 2.0, 0.125, 3, 0.5).unwrap();
        let u = GridFunction::from_fn(s.clone(), |_: &[f64], t: f64| t.exp()).unwrap();
        let one = GridFunction::constant(s, 1.0).unwrap();
        let e = Exponents::new(2.0, 2.0, 0.0).unwrap();
        let r = product_synthesis_check(&u, &one, &e, 0.0, &family, &[0.125, 0.25]).unwrap();
        assert!(r.aq.constant <= 1.0);
        let r1 = product_synthesis_check(&one, &one, &e, 0.0, &family, &[0.125]).unwrap();
        assert!((r1.aq.constant - 1.0).abs() < 1e-12);
        let lagged = Exponents::new(2.0, 2.0, 0.5).unwrap();
        assert!(product_synthesis_check(&one, &one, &lagged, 0.3, &family, &[0.125]).is_err());
    }
}
