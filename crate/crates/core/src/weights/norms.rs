use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Exponents;
use crate::gridfn::GridFunction;
use crate::maximal::{maximal_forward, MaximalResult};
use crate::scalar::{from_usize, Scalar};

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeakTypeReport<S> {
    /// `max_lambda lambda^q w({M f > lambda}) / int |f|^q w`.
    pub ratio: S,
    /// Level attaining the maximum; zero when every level set is empty.
    pub lambda: S,
    pub lambdas: Vec<S>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StrongTypeReport<S> {
    /// `(int (M f)^q w / int |f|^q w)^{1/q}`.
    pub ratio: S,
    /// The same quotient before the `1/q` root.
    pub ratio_pow_q: S,
}

fn check_inputs<S: Scalar>(w: &GridFunction<S>, f: &GridFunction<S>) -> Result<()> {
    if !w.same_grid(f) {
        return Err(Error::SpecMismatch);
    }
    if w.values().iter().any(|v| *v < S::zero()) {
        return Err(Error::InvalidArgument("weight must be nonnegative".into()));
    }
    Ok(())
}

/// `int |f|^q w` over the whole grid, summed in storage order.
fn lq_mass<S: Scalar>(w: &GridFunction<S>, f: &GridFunction<S>, q: S) -> S {
    let mut total = S::zero();
    for (fv, wv) in f.values().iter().zip(w.values()) {
        total = total + fv.abs().powf(q) * *wv;
    }
    total * w.spec().cell_volume()
}

/// 32 geometric levels between the smallest positive and the largest value
/// of `M f` on the valid region.
fn default_lambdas<S: Scalar>(m: &MaximalResult<S>) -> Vec<S> {
    let positive = m.valid_values().filter(|v| *v > S::zero());
    let (lo, hi) = positive.fold((S::infinity(), S::zero()), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo <= hi) {
        return Vec::new();
    }
    let count = 32;
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|k| lo * (ratio * from_usize::<S>(k) / from_usize::<S>(count - 1)).exp())
        .collect()
}

pub(crate) fn weak_from_maximal<S: Scalar>(
    w: &GridFunction<S>,
    f: &GridFunction<S>,
    q: S,
    m: &MaximalResult<S>,
    lambdas: Option<&[S]>,
) -> Result<WeakTypeReport<S>> {
    let lambdas = lambdas.map_or_else(|| default_lambdas(m), <[S]>::to_vec);
    if m.valid_values().all(|v| v == S::zero()) {
        return Ok(WeakTypeReport { ratio: S::zero(), lambda: S::zero(), lambdas });
    }
    let denominator = lq_mass(w, f, q);
    if !(denominator > S::zero()) {
        return Err(Error::ZeroDenominator("weak-type ratio"));
    }
    let vol = w.spec().cell_volume();
    let mut best = (S::zero(), S::zero());
    for &lambda in &lambdas {
        let lq = lambda.powf(q);
        let mut total = S::zero();
        for i in 0..w.len() {
            if m.valid[i] && m.output.get(i) > lambda {
                total = total + lq * w.get(i);
            }
        }
        let ratio = total * vol / denominator;
        if ratio > best.0 {
            best = (ratio, lambda);
        }
    }
    Ok(WeakTypeReport { ratio: best.0, lambda: best.1, lambdas })
}

pub(crate) fn strong_from_maximal<S: Scalar>(
    w: &GridFunction<S>,
    f: &GridFunction<S>,
    q: S,
    m: &MaximalResult<S>,
) -> Result<StrongTypeReport<S>> {
    let denominator = lq_mass(w, f, q);
    if !(denominator > S::zero()) {
        return Err(Error::ZeroDenominator("strong-type ratio"));
    }
    let mut total = S::zero();
    for i in 0..w.len() {
        if m.valid[i] {
            total = total + m.output.get(i).powf(q) * w.get(i);
        }
    }
    let ratio_pow_q = total * w.spec().cell_volume() / denominator;
    Ok(StrongTypeReport { ratio: ratio_pow_q.powf(q.recip()), ratio_pow_q })
}

/// Empirical weak-type `(q, q)` ratio of `M^{gamma+}` with respect to `w`.
/// Level sets are restricted to the valid region of the maximal function.
pub fn weak_type_ratio<S: Scalar>(
    w: &GridFunction<S>,
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
    lambdas: Option<&[S]>,
) -> Result<WeakTypeReport<S>> {
    check_inputs(w, f)?;
    let m = maximal_forward(f, exps, scales)?;
    weak_from_maximal(w, f, exps.q(), &m, lambdas)
}

/// Empirical strong-type `(q, q)` ratio of `M^{gamma+}` with respect to `w`:
/// the numerator runs over the valid region, the denominator over the grid.
pub fn strong_type_ratio<S: Scalar>(
    w: &GridFunction<S>,
    f: &GridFunction<S>,
    exps: &Exponents<S>,
    scales: &[S],
) -> Result<StrongTypeReport<S>> {
    check_inputs(w, f)?;
    let m = maximal_forward(f, exps, scales)?;
    strong_from_maximal(w, f, exps.q(), &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::GridSpec;
    use crate::maximal::dyadic_scales;
    use std::sync::Arc;

    fn setup() -> (Arc<GridSpec<f64>>, Exponents<f64>, Vec<f64>) {
        let spec: Arc<GridSpec<f64>> = GridSpec::uniform(1, 16, 64, 1.0, 1.0).unwrap().into();
        (spec, Exponents::new(2.0, 2.0, 0.25).unwrap(), dyadic_scales(1.0 / 16.0, 3))
    }

    #[test]
    fn zero_input_gives_zero() {
        let (spec, e, scales) = setup();
        let w = GridFunction::constant(spec.clone(), 1.0).unwrap();
        let f = GridFunction::constant(spec, 0.0).unwrap();
        assert_eq!(weak_type_ratio(&w, &f, &e, &scales, None).unwrap().ratio, 0.0);
        assert!(matches!(strong_type_ratio(&w, &f, &e, &scales), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn chebyshev_ordering_and_unweighted_count() {
        let (spec, e, scales) = setup();
        let w = GridFunction::from_fn(spec.clone(), |_: &[f64], t: f64| t.exp()).unwrap();
        let f = GridFunction::from_fn(spec.clone(), |x: &[f64], t: f64| {
            if x[0] < 0.5 && (0.25..0.5).contains(&t) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let weak = weak_type_ratio(&w, &f, &e, &scales, None).unwrap();
        let strong = strong_type_ratio(&w, &f, &e, &scales).unwrap();
        assert_eq!(weak.lambdas.len(), 32);
        assert!(weak.ratio > 0.0 && strong.ratio_pow_q >= weak.ratio);

        // Unweighted: direct count of the level set.
        let one = GridFunction::constant(spec.clone(), 1.0).unwrap();
        let m = maximal_forward(&f, &e, &scales).unwrap();
        let lam = 0.3;
        let count = (0..f.len()).filter(|&i| m.valid[i] && m.output.get(i) > lam).count() as f64;
        let mass = f.values().iter().filter(|v| **v > 0.0).count() as f64;
        let r = weak_type_ratio(&one, &f, &e, &scales, Some(&[lam])).unwrap();
        assert!((r.ratio - lam * lam * count / mass).abs() < 1e-12);
    }
}
