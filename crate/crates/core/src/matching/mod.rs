//! Minimum-weight perfect matching on complete general graphs.
//!
//! [`min_weight_perfect_matching`] runs an exact primal-dual blossom solver
//! and returns a [`Pairing`] together with a [`DualCertificate`] that proves
//! optimality independently of the solver. [`brute_force_matching`]
//! enumerates every perfect matching and serves as a test oracle.

mod blossom;
mod brute;
mod certificate;
mod dense;
mod extract;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use brute::brute_force_matching;
pub use certificate::{BlossomDual, CertificateViolation, DualCertificate};
pub use dense::DenseWeights;
pub use extract::extract_design;

/// Symmetric edge weights of a complete graph on `dim()` vertices.
///
/// Implementations must be pure: repeated calls return the same value.
pub trait WeightSource {
    fn dim(&self) -> usize;
    fn weight(&self, i: usize, j: usize) -> f64;
}

/// Weights generated on the fly by a closure.
pub struct FnWeights<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> f64> FnWeights<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnWeights { dim, f }
    }
}

impl<F: Fn(usize, usize) -> f64> WeightSource for FnWeights<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn weight(&self, i: usize, j: usize) -> f64 {
        (self.f)(i, j)
    }
}

/// Dense row-major weights; only the upper triangle is read.
impl WeightSource for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self[(a, b)]
    }
}

/// A perfect matching: `partner[v]` is the vertex matched to `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub partner: Vec<usize>,
    pub total_weight: f64,
    #[serde(skip)]
    pub certificate: Option<DualCertificate>,
}

impl Pairing {
    /// Matched edges `(a, b)` with `a < b`, in increasing order of `a`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter(|&(a, &b)| a < b)
            .map(|(a, &b)| (a, b))
            .collect()
    }

    /// True when `partner` is a fixed-point-free involution.
    pub fn is_perfect(&self) -> bool {
        let n = self.partner.len();
        self.partner
            .iter()
            .enumerate()
            .all(|(v, &p)| p < n && p != v && self.partner[p] == v)
    }
}

/// Integer grid used by the solver: weights are rounded to multiples of
/// `1 / scale`, which keeps every dual update exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Quantizer {
    pub scale: f64,
    pub ceiling: i64,
}

/// Finest grid: 2^40 steps across the weight range.
const QUANT_RANGE: f64 = (1u64 << 40) as f64;
/// Bound on the lifted weights, leaving headroom for doubled dual sums.
const LIFT_LIMIT: f64 = (1u64 << 52) as f64;

impl Quantizer {
    pub(crate) fn for_source<W: WeightSource + ?Sized>(source: &W) -> Result<Self> {
        let n = source.dim();
        let mut max_w = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let w = source.weight(i, j);
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "weight ({i}, {j}) = {w} is not finite and non-negative"
                    )));
                }
                max_w = max_w.max(w);
            }
        }
        // The lifted weights carry an offset of `pairs * range`, so any
        // perfect matching outweighs every matching with fewer edges.
        let pairs = (n / 2) as f64 + 1.0;
        let range = QUANT_RANGE.min(LIFT_LIMIT / (pairs + 1.0));
        let scale = if max_w > 0.0 { range / max_w } else { 1.0 };
        let top = libm::round(max_w * scale) as i64 + 1;
        let ceiling = top + top * (n / 2) as i64;
        Ok(Quantizer { scale, ceiling })
    }

    #[inline]
    pub(crate) fn quantize(&self, w: f64) -> i64 {
        libm::round(w * self.scale) as i64
    }

    /// Strictly positive, even transformed weight for the maximization form.
    /// Even weights keep every dual of a free vertex at the same parity, so
    /// halved slacks stay exact after the warm start.
    #[inline]
    pub(crate) fn lift(&self, w: f64) -> i64 {
        2 * (self.ceiling - self.quantize(w))
    }
}

/// Exact minimum-weight perfect matching of the complete graph given by
/// `source`.
///
/// Weights are rounded onto a grid of (up to) 2^40 steps spanning
/// `[0, max weight]` before solving, so the result is optimal for the
/// rounded weights and within `dim / 2^41 * max weight` of the true optimum
/// for `dim` below a few thousand. The returned
/// certificate verifies optimality on that grid.
pub fn min_weight_perfect_matching<W: WeightSource + ?Sized>(source: &W) -> Result<Pairing> {
    let n = source.dim();
    if n % 2 == 1 || n == 0 {
        return Err(Error::OddDimension(n));
    }
    let quant = Quantizer::for_source(source)?;
    let solver = blossom::DenseBlossom::new(n, |i, j| quant.lift(source.weight(i, j)));
    let outcome = solver.solve();
    let pairing = Pairing {
        total_weight: total_weight(source, &outcome.partner),
        partner: outcome.partner,
        certificate: Some(DualCertificate {
            scale: quant.scale,
            ceiling: quant.ceiling,
            vertex_duals: outcome.vertex_duals,
            blossoms: outcome
                .blossoms
                .into_iter()
                .map(|(members, dual)| BlossomDual { members, dual })
                .collect(),
        }),
    };
    if !pairing.is_perfect() {
        return Err(Error::StructuralViolation(
            "solver returned a non-perfect matching".into(),
        ));
    }
    Ok(pairing)
}

pub(crate) fn total_weight<W: WeightSource + ?Sized>(source: &W, partner: &[usize]) -> f64 {
    partner
        .iter()
        .enumerate()
        .filter(|&(a, &b)| a < b)
        .map(|(a, &b)| source.weight(a, b))
        .sum()
}
