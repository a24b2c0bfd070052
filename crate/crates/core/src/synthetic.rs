//! Seeded test inputs: closed-form weights, random log-smooth weights and
//! random point-mass measures.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::construct::{MeasureSpec, PointMass};
use crate::error::{Error, Result};
use crate::gridfn::{GridFunction, GridSpec};
use crate::scalar::{lit, to_f64, Scalar};

/// Built-in generators addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Synthetic {
    Const,
    ExpT,
    ExpNegT,
    LogSmooth,
}

impl FromStr for Synthetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" => Ok(Self::Const),
            "exp-t" => Ok(Self::ExpT),
            "exp-neg-t" => Ok(Self::ExpNegT),
            "log-smooth" => Ok(Self::LogSmooth),
            _ => Err(Error::InvalidArgument(format!(
                "unknown generator `{s}` (expected const, exp-t, exp-neg-t or log-smooth)"
            ))),
        }
    }
}

impl Synthetic {
    pub fn name(self) -> &'static str {
        match self {
            Self::Const => "const",
            Self::ExpT => "exp-t",
            Self::ExpNegT => "exp-neg-t",
            Self::LogSmooth => "log-smooth",
        }
    }

    pub fn generate<S: Scalar>(self, spec: &Arc<GridSpec<S>>, seed: u64) -> Result<GridFunction<S>> {
        match self {
            Self::Const => GridFunction::constant(spec.clone(), S::one()),
            Self::ExpT => exp_t(spec, S::one()),
            Self::ExpNegT => exp_t(spec, -S::one()),
            Self::LogSmooth => log_smooth(spec, seed, lit(1.0)),
        }
    }
}

/// `e^{rate t}`.
pub fn exp_t<S: Scalar>(spec: &Arc<GridSpec<S>>, rate: S) -> Result<GridFunction<S>> {
    GridFunction::from_fn(spec.clone(), |_, t| (rate * t).exp())
}

/// `exp(g)` with `g` a sum of four random low-frequency cosines whose
/// amplitudes add up to at most `amplitude`. Frequencies are measured in
/// units of the domain extent along each axis.
pub fn log_smooth<S: Scalar>(spec: &Arc<GridSpec<S>>, seed: u64, amplitude: S) -> Result<GridFunction<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.domain().clone();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let k: Vec<f64> = (0..=spec.n()).map(|_| rng.gen_range(0.0..3.0)).collect();
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..0.25))
        })
        .collect();
    let amp = to_f64(amplitude);
    let tau = std::f64::consts::TAU;
    GridFunction::from_fn(spec.clone(), |x, t| {
        let mut g = 0.0;
        for (k, phase, a) in &modes {
            let mut arg = *phase + tau * k[0] * to_f64((t - d.time_lo) / d.duration());
            for (axis, xi) in x.iter().enumerate() {
                let ext = d.spatial_hi[axis] - d.spatial_lo[axis];
                arg += tau * k[axis + 1] * to_f64((*xi - d.spatial_lo[axis]) / ext);
            }
            g += amp * a * arg.cos();
        }
        lit::<S>(g).exp()
    })
}

/// `count` point masses with masses in `[0.5, 2)`, placed uniformly
/// in the middle half of the grid domain.
pub fn random_point_masses<S: Scalar>(spec: &GridSpec<S>, count: usize, seed: u64) -> Result<MeasureSpec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.domain();
    let mid = |lo: S, hi: S, r: f64| lo + (hi - lo) * lit::<S>(0.25 + 0.5 * r);
    let points = (0..count)
        .map(|_| PointMass {
            x: (0..spec.n()).map(|a| mid(d.spatial_lo[a], d.spatial_hi[a], rng.gen())).collect(),
            t: mid(d.time_lo, d.time_hi, rng.gen()),
            mass: lit(rng.gen_range(0.5..2.0)),
        })
        .collect();
    MeasureSpec::new(points, None)
}

/// Indicator of the cells whose centres satisfy `inside`.
pub fn indicator<S: Scalar>(spec: &Arc<GridSpec<S>>, inside: impl Fn(&[S], S) -> bool) -> Result<GridFunction<S>> {
    GridFunction::from_fn(spec.clone(), |x, t| if inside(x, t) { S::one() } else { S::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in [Synthetic::Const, Synthetic::ExpT, Synthetic::ExpNegT, Synthetic::LogSmooth] {
            assert_eq!(s.name().parse::<Synthetic>().unwrap(), s);
        }
        assert!("exp".parse::<Synthetic>().is_err());
    }

    #[test]
    fn seeded_and_bounded() {
        let spec: Arc<GridSpec<f64>> = GridSpec::uniform(1, 16, 16, 1.0, 1.0).unwrap().into();
        let a = log_smooth(&spec, 7, 1.0).unwrap();
        let b = log_smooth(&spec, 7, 1.0).unwrap();
        let c = log_smooth(&spec, 8, 1.0).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.values().iter().all(|v| *v >= (-1.0f64).exp() && *v <= 1.0f64.exp()));
        let m = random_point_masses(&spec, 3, 1).unwrap();
        assert_eq!(m.points.len(), 3);
        assert!(m.points.iter().all(|p| p.t >= 0.25 && p.t <= 0.75));
    }
}
