use std::sync::Arc;

use serde::Serialize;

use crate::bmo::{bmo_to_weight, weight_to_bmo};
use crate::construct::cr_decompose;
use crate::error::{Error, Result};
use crate::factorize::{factorize, FactorizeOptions};
use crate::geometry::{Direction, Exponents, RectangleFamily};
use crate::gridfn::{GridFunction, GridSpec};
use crate::scalar::{lit, Scalar};
use crate::weights::aq_constant;

/// Closed-form positive supersolutions of the doubly nonlinear equation.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SupersolutionSpec<S> {
    /// `e^{rate t}`: nondecreasing in time with no spatial gradient.
    IncreasingTime { rate: S },
    /// Heat kernel with source `(x0, t0)`; an exact solution for `p = 2`.
    HeatKernel { x0: Vec<S>, t0: S },
    Product { factors: Vec<SupersolutionSpec<S>> },
}

/// Time cells that must separate a heat-kernel source from the grid.
pub const HEAT_MARGIN_CELLS: usize = 10;

fn evaluate<S: Scalar>(spec: &SupersolutionSpec<S>, grid: &GridSpec<S>, exps: &Exponents<S>) -> Result<Vec<S>> {
    let n = grid.len();
    match spec {
        SupersolutionSpec::IncreasingTime { rate } => {
            if !(*rate > S::zero()) {
                return Err(Error::InvalidArgument(format!("rate {rate} must be positive")));
            }
            Ok((0..n).map(|i| (*rate * grid.cell_center(i).1).exp()).collect())
        }
        SupersolutionSpec::HeatKernel { x0, t0 } => {
            if (exps.p() - lit(2.0)).abs() > lit(1e-12) {
                return Err(Error::InvalidArgument("the heat kernel needs p = 2".into()));
            }
            if x0.len() != grid.n() {
                return Err(Error::InvalidArgument("source dimension does not match the grid".into()));
            }
            let margin = *t0 + lit::<S>(HEAT_MARGIN_CELLS as f64) * grid.time_step();
            if grid.domain().time_lo < margin {
                return Err(Error::InvalidArgument(format!(
                    "grid starts at t = {} but the source at t0 = {t0} needs t >= {margin}",
                    grid.domain().time_lo
                )));
            }
            let four = lit::<S>(4.0);
            let pi = lit::<S>(std::f64::consts::PI);
            let half_n = lit::<S>(grid.n() as f64 / 2.0);
            Ok((0..n)
                .map(|i| {
                    let (x, t) = grid.cell_center(i);
                    let s = t - *t0;
                    let r2 = x.iter().zip(x0).fold(S::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
                    (four * pi * s).powf(-half_n) * (-r2 / (four * s)).exp()
                })
                .collect())
        }
        SupersolutionSpec::Product { factors } => {
            if factors.is_empty() {
                return Err(Error::InvalidArgument("product of no factors".into()));
            }
            let mut acc = vec![S::one(); n];
            for f in factors {
                for (a, b) in acc.iter_mut().zip(evaluate(f, grid, exps)?) {
                    *a = *a * b;
                }
            }
            Ok(acc)
        }
    }
}

/// Samples the supersolution at cell centres.
pub fn supersolution<S: Scalar>(
    spec: &SupersolutionSpec<S>,
    grid: &Arc<GridSpec<S>>,
    exps: &Exponents<S>,
) -> Result<GridFunction<S>> {
    let values = evaluate(spec, grid, exps)?;
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > S::zero())) {
        return Err(Error::Overflow(format!("supersolution value {} at cell {i}", values[i])));
    }
    GridFunction::new(grid.clone(), values)
}

fn interior<S: Scalar>(grid: &GridSpec<S>, i: usize, depth: usize) -> bool {
    let idx = grid.unflatten(i);
    grid.shape().iter().enumerate().all(|(a, &len)| idx[a] >= depth && idx[a] + depth < len)
}

fn centered<S: Scalar>(f: &GridFunction<S>, i: usize, axis: usize) -> S {
    let spec = f.spec();
    let stride = spec.strides()[axis];
    (f.get(i + stride) - f.get(i - stride)) / (lit::<S>(2.0) * spec.axis_step(axis))
}

/// `max |d_t v - Laplacian v| / max |d_t v|` over interior cells, with
/// centred differences.
pub fn heat_residual<S: Scalar>(v: &GridFunction<S>) -> Result<S> {
    let spec = v.spec();
    let strides = spec.strides();
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for i in 0..v.len() {
        if !interior(spec, i, 1) {
            continue;
        }
        let dt = centered(v, i, 0);
        let mut lap = S::zero();
        for a in 1..spec.axes() {
            let h = spec.axis_step(a);
            lap = lap + (v.get(i + strides[a]) - lit::<S>(2.0) * v.get(i) + v.get(i - strides[a])) / (h * h);
        }
        worst = worst.max((dt - lap).abs());
        scale = scale.max(dt.abs());
    }
    if !(scale > S::zero()) {
        return Err(Error::ZeroDenominator("heat residual"));
    }
    Ok(worst / scale)
}

/// Discrete weak form
/// `sum (|grad v|^{p-2} grad v . grad phi - |v|^{p-2} v d_t phi) cellVolume`
/// with centred differences. `phi` must vanish within two cells of the grid
/// boundary.
pub fn weak_pairing<S: Scalar>(v: &GridFunction<S>, phi: &GridFunction<S>, p: S) -> Result<S> {
    if !v.same_grid(phi) {
        return Err(Error::SpecMismatch);
    }
    let spec = v.spec();
    if (0..phi.len()).any(|i| !interior(spec, i, 2) && phi.get(i) != S::zero()) {
        return Err(Error::InvalidArgument("test function must vanish near the boundary".into()));
    }
    let mut total = S::zero();
    for i in 0..v.len() {
        if !interior(spec, i, 1) {
            continue;
        }
        let grads: Vec<(S, S)> = (1..spec.axes()).map(|a| (centered(v, i, a), centered(phi, i, a))).collect();
        let norm2 = grads.iter().fold(S::zero(), |s, g| s + g.0 * g.0);
        let flux = if norm2 > S::zero() { norm2.sqrt().powf(p - lit(2.0)) } else { S::zero() };
        let dot = grads.iter().fold(S::zero(), |s, g| s + g.0 * g.1);
        let x = v.get(i);
        total = total + flux * dot - x.abs().powf(p - lit(2.0)) * x * centered(phi, i, 0);
    }
    Ok(total * spec.cell_volume())
}

#[derive(Clone, Debug)]
pub struct RepresentationOptions<S: Scalar> {
    pub scales: Vec<S>,
    /// Family used for the `A_2` scan that picks `eps`.
    pub family: RectangleFamily<S>,
    /// Candidate exponents, tried from the largest down.
    pub eps_grid: Vec<S>,
    /// Largest admissible `A_2^+` constant of `v^eps`.
    pub a2_threshold: S,
    /// Exponent of the measure density in the Coifman–Rochberg step.
    pub cr_eps: S,
    pub k_bound: S,
    pub tol: S,
    pub seed: u64,
}

impl<S: Scalar> RepresentationOptions<S> {
    pub fn new(scales: Vec<S>, family: RectangleFamily<S>) -> Self {
        Self {
            scales,
            family,
            eps_grid: [1.0, 0.5, 0.25, 0.125].into_iter().map(lit).collect(),
            a2_threshold: lit(4.0),
            cr_eps: lit(0.5),
            k_bound: lit(1e8),
            tol: lit(1e-10),
            seed: 0,
        }
    }
}

/// `v = b (M^{gamma-} nu)^alpha / (M^{gamma+} mu)^beta`.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Representation<S: Scalar> {
    #[serde(skip)]
    pub b: GridFunction<S>,
    /// Density of `nu` (entering the backward maximal function).
    #[serde(skip)]
    pub nu: GridFunction<S>,
    /// Density of `mu` (entering the forward maximal function).
    #[serde(skip)]
    pub mu: GridFunction<S>,
    #[serde(skip)]
    pub valid: Vec<bool>,
    pub alpha: S,
    pub beta: S,
    /// Exponent with `v^eps` in `A_2^+`.
    pub eps: S,
    pub a2_constant: S,
    pub factor_b: S,
    pub factor_terms: usize,
    pub factor_residual: S,
    pub k_u_range: (S, S),
    pub k_v_range: (S, S),
    pub b_min: S,
    pub b_max: S,
    /// `max |b (M^- nu)^alpha / (M^+ mu)^beta - v| / v` on the valid region.
    pub residual: S,
}

impl<S: Scalar> Representation<S> {
    pub fn b_ratio(&self) -> S {
        self.b_max / self.b_min
    }
}

/// Runs `u = -log v`, picks `eps` with `e^{-eps u} = v^eps` in `A_2^+`,
/// factorises `v^eps = u_1 v_1^{-1}`, decomposes both factors into powers of
/// maximal functions of measures, and defines `b` as the remaining quotient.
pub fn supersolution_representation<S: Scalar>(
    v: &GridFunction<S>,
    exps: &Exponents<S>,
    opts: &RepresentationOptions<S>,
) -> Result<Representation<S>> {
    use crate::error::Error as E;
    let a2 = exps.with_q(lit(2.0))?;
    let u = weight_to_bmo(v, S::one()).map_err(E::at_stage("log"))?;

    let mut chosen = None;
    let mut eps_sorted = opts.eps_grid.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for &eps in &eps_sorted {
        let w = bmo_to_weight(&u, eps).map_err(E::at_stage("exp"))?;
        let c = aq_constant(&w, &a2, Direction::Forward, &opts.family).map_err(E::at_stage("scan"))?.constant;
        if c <= opts.a2_threshold {
            chosen = Some((eps, w, c));
            break;
        }
    }
    let (eps, w, a2_constant) = chosen.ok_or_else(|| {
        E::at_stage("scan")(E::Hypothesis(format!("no eps in the grid gives an A_2 constant <= {}", opts.a2_threshold)))
    })?;

    let mut fopts = FactorizeOptions::new(opts.scales.clone());
    fopts.tol = opts.tol;
    fopts.seed = opts.seed;
    let fac = factorize(&w, &a2, &fopts).map_err(E::at_stage("factorize"))?;
    let du = cr_decompose(&fac.u, exps, Direction::Forward, opts.cr_eps, &opts.scales, Some(&fac.valid), opts.k_bound)
        .map_err(E::at_stage("decompose-u"))?;
    let dv = cr_decompose(&fac.v, exps, Direction::Backward, opts.cr_eps, &opts.scales, Some(&fac.valid), opts.k_bound)
        .map_err(E::at_stage("decompose-v"))?;

    let alpha = du.delta / eps;
    let beta = dv.delta / eps;
    let valid: Vec<bool> = (0..v.len()).map(|i| du.valid[i] && dv.valid[i]).collect();
    let mut b = vec![S::one(); v.len()];
    let (mut b_min, mut b_max, mut residual) = (S::infinity(), S::zero(), S::zero());
    for i in 0..v.len() {
        if !valid[i] {
            continue;
        }
        let num = du.maximal.get(i).powf(alpha);
        let den = dv.maximal.get(i).powf(beta);
        b[i] = v.get(i) * den / num;
        b_min = b_min.min(b[i]);
        b_max = b_max.max(b[i]);
        residual = residual.max((b[i] * num / den - v.get(i)).abs() / v.get(i));
    }
    if !valid.iter().any(|x| *x) {
        return Err(E::at_stage("quotient")(E::EmptyMask));
    }
    let b = v.with_values(b)?.fill_from_nearest(&valid)?;
    Ok(Representation {
        b,
        nu: du.mu,
        mu: dv.mu,
        valid,
        alpha,
        beta,
        eps,
        a2_constant,
        factor_b: fac.b,
        factor_terms: fac.terms,
        factor_residual: fac.residual,
        k_u_range: (du.k_min, du.k_max),
        k_v_range: (dv.k_min, dv.k_max),
        b_min,
        b_max,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_family_from, SpaceTimeBox};
    use crate::maximal::dyadic_scales;

    fn exps() -> Exponents<f64> {
        Exponents::new(2.0, 2.0, 0.0).unwrap()
    }

    #[test]
    fn heat_kernel_margin_and_p() {
        let grid: Arc<GridSpec<f64>> =
            GridSpec::new(vec![16], 64, SpaceTimeBox::new(vec![-1.0], vec![1.0], 1.0, 2.0).unwrap()).unwrap().into();
        let hk = SupersolutionSpec::HeatKernel { x0: vec![0.0], t0: 0.0 };
        assert!(supersolution(&hk, &grid, &exps()).is_ok());
        let p3 = Exponents::new(3.0, 2.0, 0.0).unwrap();
        assert!(supersolution(&hk, &grid, &p3).is_err());
        let close = SupersolutionSpec::HeatKernel { x0: vec![0.0], t0: 0.95 };
        assert!(supersolution(&close, &grid, &exps()).is_err());
    }

    #[test]
    fn heat_residual_second_order() {
        let hk = SupersolutionSpec::HeatKernel { x0: vec![0.0], t0: 0.0 };
        let domain = SpaceTimeBox::new(vec![-1.0], vec![1.0], 1.0, 2.0).unwrap();
        let r: Vec<f64> = [1usize, 2, 4]
            .iter()
            .map(|k| {
                let g: Arc<GridSpec<f64>> = GridSpec::new(vec![16 * k], 32 * k, domain.clone()).unwrap().into();
                heat_residual(&supersolution(&hk, &g, &exps()).unwrap()).unwrap()
            })
            .collect();
        assert!(r[1] < r[0] / 3.0 && r[2] < r[1] / 3.0, "{r:?}");
    }

    #[test]
    fn increasing_time_pairing_nonnegative() {
        let grid: Arc<GridSpec<f64>> = GridSpec::uniform(1, 16, 32, 1.0, 1.0).unwrap().into();
        let v = supersolution(&SupersolutionSpec::IncreasingTime { rate: 1.5 }, &grid, &exps()).unwrap();
        let bump = GridFunction::from_fn(grid.clone(), |x: &[f64], t: f64| {
            let s = ((x[0] - 0.5) / 0.3).powi(2) + ((t - 0.5) / 0.3).powi(2);
            if s < 1.0 { (1.0 - s).powi(2) } else { 0.0 }
        })
        .unwrap();
        for p in [1.5, 2.0, 3.0] {
            assert!(weak_pairing(&v, &bump, p).unwrap() >= -1e-12);
        }
        let wide = GridFunction::constant(grid, 1.0).unwrap();
        assert!(weak_pairing(&v, &wide, 2.0).is_err());
    }

    #[test]
    fn product_of_factors() {
        let grid: Arc<GridSpec<f64>> = GridSpec::uniform(1, 8, 8, 1.0, 1.0).unwrap().into();
        let a = SupersolutionSpec::IncreasingTime { rate: 1.0 };
        let b = SupersolutionSpec::IncreasingTime { rate: 2.0 };
        let prod = supersolution(&SupersolutionSpec::Product { factors: vec![a, b] }, &grid, &exps()).unwrap();
        let direct = supersolution(&SupersolutionSpec::IncreasingTime { rate: 3.0 }, &grid, &exps()).unwrap();
        for (x, y) in prod.values().iter().zip(direct.values()) {
            assert!((x - y).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn representation_of_unit_and_exp() {
        let domain = SpaceTimeBox::new(vec![0.0], vec![1.0], 0.0, 1.0).unwrap();
        let grid: Arc<GridSpec<f64>> = GridSpec::new(vec![16], 64, domain.clone()).unwrap().into();
        let family = enumerate_family_from(&domain, 2.0, 0.125, 3, 0.5).unwrap();
        let opts = RepresentationOptions::new(dyadic_scales(0.125, 2), family);
        let one = GridFunction::constant(grid.clone(), 1.0).unwrap();
        let r = supersolution_representation(&one, &exps(), &opts).unwrap();
        assert!(r.residual <= 1e-10 && r.b_ratio().is_finite());
        let v = supersolution(&SupersolutionSpec::IncreasingTime { rate: 1.0 }, &grid, &exps()).unwrap();
        let r = supersolution_representation(&v, &exps(), &opts).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(r.alpha > 0.0 && r.beta > 0.0 && r.b_ratio().is_finite());
    }
}
