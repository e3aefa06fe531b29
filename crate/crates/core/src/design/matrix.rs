use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::DesignConfig;
use super::mahalanobis::RankMahalanobis;
use super::propensity::{score_rows, PropensityLabel, ScoreModel};
use crate::error::{Error, Result};
use crate::matching::{DenseWeights, WeightSource};
use crate::model::{mean_rows, Template, Unit};

/// What a matrix row stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vertex {
    Observational(usize),
    Sink(usize),
    /// Extra sink appended to make the vertex count even.
    AutoSink,
}

impl Vertex {
    pub fn is_sink(self) -> bool {
        !matches!(self, Vertex::Observational(_))
    }
}

/// Symmetric `(n + e) x (n + e)` matching input. Rows `0..n` are the
/// observational units in input order, followed by the sinks.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyMatrix {
    pub weights: DenseWeights,
    pub vertices: Vec<Vertex>,
    pub big_const: f64,
    pub inf_const: f64,
    /// Largest finite observational entry.
    pub max_obs_entry: f64,
    /// Non-fatal conditions met while fitting scores.
    pub warnings: Vec<String>,
}

impl DiscrepancyMatrix {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn auto_sink(&self) -> bool {
        self.vertices.last() == Some(&Vertex::AutoSink)
    }

    pub fn n_sinks(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_sink()).count()
    }
}

impl WeightSource for DiscrepancyMatrix {
    fn dim(&self) -> usize {
        self.vertices.len()
    }
    fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }
}

/// Builds the discrepancy matrix for `units` and an optional template.
///
/// Observational pairs get the rank-based Mahalanobis distance plus soft
/// propensity and dose-gap calipers, and `M` on top when exact keys differ.
/// An observational unit against a sink gets `B` minus their distance plus
/// the reverse caliper on template-membership scores. Sink pairs and the
/// diagonal are `M`.
pub fn build_discrepancy_matrix(
    units: &[Unit],
    template: Option<&Template>,
    config: &DesignConfig,
) -> Result<DiscrepancyMatrix> {
    config.check()?;
    let n = units.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two units".into()));
    }
    let p = units[0].x.len();
    let empty = Template::default();
    let template = template.unwrap_or(&empty);
    if units.iter().any(|u| u.x.len() != p) || template.units.iter().any(|t| t.x.len() != p) {
        return Err(Error::InvalidArgument("covariate dimensions differ".into()));
    }
    for u in units {
        u.check()?;
    }

    let e = template.len();
    let auto_sink = (n + e) % 2 == 1;
    let mut sink_rows: Vec<Vec<f64>> = template.units.iter().map(|t| t.x.clone()).collect();
    if auto_sink {
        let mean = template
            .mean_covariates()
            .or_else(|| mean_rows(units.iter().map(|u| u.x.as_slice())))
            .expect("non-empty cohort");
        sink_rows.push(mean);
    }
    let n_sinks = sink_rows.len();
    if n_sinks >= n {
        return Err(Error::ConfigInfeasible(alloc::format!(
            "{n_sinks} sinks leave no pairs among {n} units"
        )));
    }

    let pooled: Vec<&[f64]> = units
        .iter()
        .map(|u| u.x.as_slice())
        .chain(sink_rows.iter().map(|r| r.as_slice()))
        .collect();
    let dist = RankMahalanobis::fit(&pooled)?;
    let mut warnings = Vec::new();

    let ps: Option<Vec<f64>> = if config.ps_penalty > 0.0 {
        let (rows, labels) = score_rows(units, PropensityLabel::HighDoseHalf, None)?;
        let model = ScoreModel::fit(&rows, &labels)?;
        if model.fit.separated {
            warnings.push(String::from("propensity score fit separated; scores clamped"));
        }
        Some(model.fit.clamped_probs())
    } else {
        None
    };

    let sel: Option<Vec<f64>> = if config.gen_penalty > 0.0 && e > 0 {
        let (rows, labels) = score_rows(units, PropensityLabel::TemplateMembership, Some(template))?;
        let model = ScoreModel::fit(&rows, &labels)?;
        if model.fit.separated {
            warnings.push(String::from("template-membership fit separated; scores clamped"));
        }
        let mut s = model.fit.clamped_probs();
        if auto_sink {
            s.push(model.score(&sink_rows[n_sinks - 1]));
        }
        Some(s)
    } else {
        None
    };

    let dim = n + n_sinks;
    let mut w = DenseWeights::zeros(dim);

    // Observational block; mismatched exact keys are marked and filled later.
    let mut max_obs = 0.0f64;
    let mut mismatched = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut d = dist.distance(i, j) + config.dose_term((units[i].dose - units[j].dose).abs());
            if let Some(ps) = &ps {
                d += config.ps_term((ps[i] - ps[j]).abs());
            }
            if units[i].exact_keys != units[j].exact_keys {
                mismatched.push((i, j));
            } else {
                max_obs = max_obs.max(d);
            }
            w.set_symmetric(i, j, d);
        }
    }

    let mut max_sink_dist = 0.0f64;
    for i in 0..n {
        for s in 0..n_sinks {
            max_sink_dist = max_sink_dist.max(dist.distance(i, n + s));
        }
    }
    let auto_b = {
        let b = 1.5 * max_obs.max(max_sink_dist);
        if b > 0.0 {
            b
        } else {
            1.0
        }
    };
    let big = config.big_const.unwrap_or(auto_b);
    if big <= max_obs {
        return Err(Error::ConfigInfeasible(alloc::format!(
            "B = {big} does not exceed the largest observational entry {max_obs}"
        )));
    }
    if n_sinks > 0 && big < max_sink_dist {
        return Err(Error::ConfigInfeasible(alloc::format!(
            "B = {big} is below the largest unit-to-sink distance {max_sink_dist}"
        )));
    }

    let mut max_entry = max_obs;
    for i in 0..n {
        for s in 0..n_sinks {
            let j = n + s;
            let mut d = big - dist.distance(i, j);
            if let Some(sel) = &sel {
                d += config.gen_term((sel[i] - sel[j]).abs());
            }
            max_entry = max_entry.max(d);
            w.set_symmetric(i, j, d);
        }
    }

    let inf = config.inf_const.unwrap_or(10.0 * big.max(max_entry));
    if inf <= big || inf <= max_entry {
        return Err(Error::ConfigInfeasible(alloc::format!(
            "M = {inf} must exceed B = {big} and every finite entry ({max_entry})"
        )));
    }
    for (i, j) in mismatched {
        let d = w.get(i, j) + inf;
        w.set_symmetric(i, j, d);
    }
    for a in n..dim {
        for b in a + 1..dim {
            w.set_symmetric(a, b, inf);
        }
    }
    for v in 0..dim {
        w.set_symmetric(v, v, inf);
    }

    let mut vertices: Vec<Vertex> = (0..n).map(Vertex::Observational).collect();
    vertices.extend((0..e).map(Vertex::Sink));
    if auto_sink {
        vertices.push(Vertex::AutoSink);
    }
    Ok(DiscrepancyMatrix {
        weights: w,
        vertices,
        big_const: big,
        inf_const: inf,
        max_obs_entry: max_obs,
        warnings,
    })
}
