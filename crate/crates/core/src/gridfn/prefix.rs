use crate::gridfn::{CellBox, GridSpec, MAX_AXES};
use crate::scalar::{Scalar, TwoFloat};

/// Summed-area table over all `n + 1` axes of a grid, holding
/// `sum f^exponent` over every leading corner block.
///
/// Entries are kept as two-float pairs so that a box sum obtained from
/// `2^(n+1)` large prefixes loses almost nothing to cancellation. The build
/// order is fixed, so tables are bit-for-bit reproducible.
#[derive(Debug)]
pub struct PrefixTable<S> {
    exponent: S,
    axes: usize,
    dims: [usize; MAX_AXES],
    strides: [usize; MAX_AXES],
    entries: Vec<TwoFloat<S>>,
}

impl<S: Scalar> PrefixTable<S> {
    pub(crate) fn build(spec: &GridSpec<S>, powered: &[S], exponent: S) -> Self {
        let axes = spec.axes();
        let shape = spec.shape();
        let mut dims = [1usize; MAX_AXES];
        for a in 0..axes {
            dims[a] = shape[a] + 1;
        }
        let mut strides = [0usize; MAX_AXES];
        let mut acc = 1;
        for a in (0..axes).rev() {
            strides[a] = acc;
            acc *= dims[a];
        }
        let mut entries = vec![TwoFloat::default(); acc];

        let cell_strides = spec.strides();
        let mut coord = [0usize; MAX_AXES];
        for (flat, v) in powered.iter().enumerate() {
            let mut rest = flat;
            for a in 0..axes {
                coord[a] = rest / cell_strides[a];
                rest %= cell_strides[a];
            }
            let pos: usize = (0..axes).map(|a| (coord[a] + 1) * strides[a]).sum();
            entries[pos] = TwoFloat::new(*v);
        }

        for a in 0..axes {
            let step = strides[a];
            for pos in 0..entries.len() {
                if (pos / step) % dims[a] == 0 {
                    continue;
                }
                entries[pos] = entries[pos].add(entries[pos - step]);
            }
        }
        Self { exponent, axes, dims, strides, entries }
    }

    pub fn exponent(&self) -> S {
        self.exponent
    }

    /// Exact-as-possible sum over the cells of `cells`, which must lie inside
    /// the grid.
    pub fn box_sum(&self, cells: &CellBox) -> S {
        debug_assert_eq!(cells.axes, self.axes);
        let mut total = TwoFloat::<S>::default();
        for corner in 0..(1usize << self.axes) {
            let mut pos = 0usize;
            for a in 0..self.axes {
                let c = if corner & (1 << a) != 0 { cells.lo[a] } else { cells.hi[a] };
                debug_assert!(c >= 0 && (c as usize) < self.dims[a]);
                pos += c as usize * self.strides[a];
            }
            let entry = self.entries[pos];
            total = if corner.count_ones() % 2 == 1 { total.sub(entry) } else { total.add(entry) };
        }
        total.value()
    }
}
