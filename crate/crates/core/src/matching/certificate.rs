use alloc::vec;
use alloc::vec::Vec;

use super::{Quantizer, WeightSource};

/// Dual solution of the blossom LP for the lifted maximization problem.
///
/// The solver maximizes `l(w) = 2 (ceiling - q(w))` where
/// `q(w) = round(w * scale)`. All dual values are in doubled integer units.
/// Optimality of a perfect matching follows from:
/// - feasibility: `y[u] + y[v] + sum z[B] >= 2 l(w_uv)` for every
///   edge, summing over blossoms `B` containing both ends;
/// - tightness: equality on every matched edge;
/// - blossom duals `z[B] >= 0`, and every blossom with `z[B] > 0` contains
///   `(|B| - 1) / 2` matched edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub scale: f64,
    pub ceiling: i64,
    pub vertex_duals: Vec<i64>,
    pub blossoms: Vec<BlossomDual>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlossomDual {
    /// Sorted vertex indices of the blossom.
    pub members: Vec<usize>,
    pub dual: i64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertificateViolation {
    #[error("edge ({0}, {1}) has negative reduced cost {2}")]
    Infeasible(usize, usize, i64),
    #[error("matched edge ({0}, {1}) is not tight (slack {2})")]
    NotTight(usize, usize, i64),
    #[error("blossom {0} has a negative dual or even size")]
    BadBlossom(usize),
    #[error("blossom {0} with positive dual is not full")]
    BlossomNotFull(usize),
    #[error("certificate covers {0} vertices, matching has {1}")]
    SizeMismatch(usize, usize),
}

impl DualCertificate {
    pub fn verify<W: WeightSource + ?Sized>(
        &self,
        source: &W,
        partner: &[usize],
    ) -> Result<(), CertificateViolation> {
        let n = source.dim();
        if self.vertex_duals.len() != n || partner.len() != n {
            return Err(CertificateViolation::SizeMismatch(
                self.vertex_duals.len(),
                partner.len(),
            ));
        }
        let quant = Quantizer {
            scale: self.scale,
            ceiling: self.ceiling,
        };

        // Chain of blossoms per vertex, outermost first (the family is laminar).
        let mut order: Vec<usize> = (0..self.blossoms.len()).collect();
        order.sort_by_key(|&b| core::cmp::Reverse(self.blossoms[b].members.len()));
        let mut chains: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &b in &order {
            let blossom = &self.blossoms[b];
            if blossom.dual < 0 || blossom.members.len() % 2 == 0 {
                return Err(CertificateViolation::BadBlossom(b));
            }
            for &v in &blossom.members {
                chains[v].push(b);
            }
            if blossom.dual > 0 {
                let inside = blossom
                    .members
                    .iter()
                    .filter(|&&v| blossom.members.binary_search(&partner[v]).is_ok())
                    .count();
                if inside != blossom.members.len() - 1 {
                    return Err(CertificateViolation::BlossomNotFull(b));
                }
            }
        }

        for u in 0..n {
            for v in u + 1..n {
                let shared: i64 = chains[u]
                    .iter()
                    .zip(&chains[v])
                    .take_while(|(a, b)| a == b)
                    .map(|(&a, _)| self.blossoms[a].dual)
                    .sum();
                let slack = self.vertex_duals[u] + self.vertex_duals[v] + shared
                    - 2 * quant.lift(source.weight(u, v));
                if slack < 0 {
                    return Err(CertificateViolation::Infeasible(u, v, slack));
                }
                if partner[u] == v && slack != 0 {
                    return Err(CertificateViolation::NotTight(u, v, slack));
                }
            }
        }
        Ok(())
    }
}
