use alloc::format;
use alloc::vec::Vec;

use super::Pairing;
use crate::design::{DiscrepancyMatrix, Vertex};
use crate::error::{Error, Result};
use crate::model::{MatchedDesign, MatchedPair, Provenance, Template, Unit};

/// Turns a perfect pairing of the discrepancy matrix into a design.
///
/// Pairs are listed in increasing order of their lower vertex index;
/// eliminated units keep input order.
pub fn extract_design(
    pairing: &Pairing,
    matrix: &DiscrepancyMatrix,
    units: &[Unit],
    template: Option<&Template>,
) -> Result<MatchedDesign> {
    let dim = matrix.dim();
    if pairing.partner.len() != dim {
        return Err(Error::StructuralViolation(format!(
            "pairing covers {} vertices, matrix has {dim}",
            pairing.partner.len()
        )));
    }
    if !pairing.is_perfect() {
        return Err(Error::StructuralViolation("pairing is not perfect".into()));
    }
    let mut pairs = Vec::new();
    let mut eliminated_idx = Vec::new();
    for (a, b) in pairing.edges() {
        match (matrix.vertices[a], matrix.vertices[b]) {
            (Vertex::Observational(i), Vertex::Observational(j)) => {
                let (ui, uj) = (&units[i], &units[j]);
                if ui.exact_keys != uj.exact_keys {
                    return Err(Error::StructuralViolation(format!(
                        "units {} and {} differ on exact-match keys",
                        ui.id, uj.id
                    )));
                }
                pairs.push(MatchedPair::new(ui.clone(), uj.clone())?);
            }
            (Vertex::Observational(i), _) | (_, Vertex::Observational(i)) => eliminated_idx.push(i),
            _ => {
                return Err(Error::StructuralViolation(format!(
                    "sink vertices {a} and {b} were matched to each other"
                )))
            }
        }
    }
    eliminated_idx.sort_unstable();
    let sinks = template.map_or(0, Template::len) + matrix.auto_sink() as usize;
    Ok(MatchedDesign {
        pairs,
        eliminated: eliminated_idx.into_iter().map(|i| units[i].clone()).collect(),
        provenance: Provenance {
            n_observational: units.len(),
            n_sinks: sinks,
            auto_sink: matrix.auto_sink(),
            ..Provenance::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_discrepancy_matrix, DesignConfig};
    use crate::matching::min_weight_perfect_matching;
    use crate::model::{validate_design, TemplateUnit};
    use alloc::vec;

    fn units(n: usize) -> Vec<Unit> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                Unit::new(alloc::format!("u{i}"), vec![f, (f * 7.0) % 5.0], 3.0 * f, i % 2 == 0, f)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn no_sinks_gives_all_pairs() {
        let us = units(4);
        let m = build_discrepancy_matrix(&us, None, &DesignConfig::default()).unwrap();
        let p = min_weight_perfect_matching(&m).unwrap();
        let d = extract_design(&p, &m, &us, None).unwrap();
        assert_eq!(d.n_pairs(), 2);
        assert!(d.eliminated.is_empty());
        assert!(validate_design(&d).all_passed());
    }

    #[test]
    fn two_sinks_eliminate_two() {
        let us = units(4);
        let t = Template::new(vec![
            TemplateUnit { id: "t0".into(), x: vec![0.0, 0.0] },
            TemplateUnit { id: "t1".into(), x: vec![1.0, 2.0] },
        ]);
        let m = build_discrepancy_matrix(&us, Some(&t), &DesignConfig::default()).unwrap();
        let p = min_weight_perfect_matching(&m).unwrap();
        let d = extract_design(&p, &m, &us, Some(&t)).unwrap();
        assert_eq!(d.n_pairs(), 1);
        assert_eq!(d.eliminated.len(), 2);
        assert_eq!(d.provenance.n_sinks, 2);
        assert!(validate_design(&d).all_passed());
    }

    #[test]
    fn sink_sink_edge_is_rejected() {
        let us = units(4);
        let t = Template::new(vec![
            TemplateUnit { id: "t0".into(), x: vec![0.0, 0.0] },
            TemplateUnit { id: "t1".into(), x: vec![1.0, 2.0] },
        ]);
        let m = build_discrepancy_matrix(&us, Some(&t), &DesignConfig::default()).unwrap();
        let bad = Pairing {
            partner: vec![1, 0, 3, 2, 5, 4],
            total_weight: 0.0,
            certificate: None,
        };
        assert!(matches!(
            extract_design(&bad, &m, &us, Some(&t)),
            Err(Error::StructuralViolation(_))
        ));
    }
}
