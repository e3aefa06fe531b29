use alloc::vec;
use alloc::vec::Vec;

use super::{Pairing, WeightSource};
use crate::error::{Error, Result};

const MAX_BRUTE_DIM: usize = 12;

/// Exhaustive search over all `(n - 1)!!` perfect matchings.
///
/// Ties keep the first matching found when the lowest free vertex is paired
/// in increasing order of partner index.
pub fn brute_force_matching<W: WeightSource + ?Sized>(source: &W) -> Result<Pairing> {
    let n = source.dim();
    if n % 2 == 1 || n == 0 {
        return Err(Error::OddDimension(n));
    }
    if n > MAX_BRUTE_DIM {
        return Err(Error::TooLarge(n));
    }
    let mut partner = vec![usize::MAX; n];
    let mut best = (f64::INFINITY, Vec::new());
    search(source, &mut partner, 0.0, &mut best);
    Ok(Pairing {
        partner: best.1,
        total_weight: best.0,
        certificate: None,
    })
}

fn search<W: WeightSource + ?Sized>(
    source: &W,
    partner: &mut [usize],
    acc: f64,
    best: &mut (f64, Vec<usize>),
) {
    let Some(u) = partner.iter().position(|&p| p == usize::MAX) else {
        if acc < best.0 {
            *best = (acc, partner.to_vec());
        }
        return;
    };
    for v in u + 1..partner.len() {
        if partner[v] != usize::MAX {
            continue;
        }
        partner[u] = v;
        partner[v] = u;
        search(source, partner, acc + source.weight(u, v), best);
        partner[u] = usize::MAX;
        partner[v] = usize::MAX;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn too_large_guard() {
        let m = DMatrix::<f64>::zeros(14, 14);
        assert_eq!(brute_force_matching(&m), Err(Error::TooLarge(14)));
    }

    #[test]
    fn counts_all_matchings() {
        // 10 vertices, unit weights: every perfect matching costs 5.
        let m = DMatrix::from_element(10, 10, 1.0);
        assert_eq!(brute_force_matching(&m).unwrap().total_weight, 5.0);
    }
}
