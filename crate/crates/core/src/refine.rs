//! Embedding refinement against similarity targets.
//!
//! For entity `i` the refined vector `x` minimizes
//!
//! ```text
//! J(x) = Σ_j Σ_k ( cos(x, y_j) − Sim_k(i, j) )²
//! ```
//!
//! where `y_j` are the *raw* vectors of the same side and only masked-in
//! similarity entries contribute. Each entity is optimized independently,
//! so the whole step is order-free and parallel.

use ndarray::{Array1, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, EmbeddingSet, SimilarityMatrix};

/// Most step halvings tried before an iteration gives up.
pub const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub step_size: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub include_self_pairs: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            max_iters: 500,
            rel_tol: 1e-8,
            include_self_pairs: false,
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Invalid(format!("refine step_size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::Invalid("refine max_iters must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Invalid(format!("refine rel_tol must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// Per-entity optimization record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineOutcome {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// No masked-in similarity term: the raw vector is returned unchanged.
    pub no_terms: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// The fixed part of entity `i`'s objective: unit reference vectors and the
/// list of (neighbor, target) terms.
struct Problem {
    units: Vec<Array1<f64>>,
    terms: Vec<(usize, f64)>,
}

impl Problem {
    fn new(i: usize, raw: &EmbeddingSet, sims: &[SimilarityMatrix], include_self: bool) -> Result<Self> {
        check_stack(raw, sims)?;
        if i >= raw.len() {
            return Err(Error::Invalid(format!("entity index {i} out of range ({})", raw.len())));
        }
        let mut terms = Vec::new();
        for j in 0..raw.len() {
            if j == i && !include_self {
                continue;
            }
            for m in sims {
                if let Some(t) = m.get(i, j) {
                    terms.push((j, t));
                }
            }
        }
        let mut needed = vec![false; raw.len()];
        for &(j, _) in &terms {
            needed[j] = true;
        }
        let units = (0..raw.len())
            .map(|j| {
                if needed[j] {
                    let y = raw.vector(j);
                    &y / norm(y)
                } else {
                    Array1::zeros(0)
                }
            })
            .collect();
        Ok(Self { units, terms })
    }

    fn value(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let nx = positive_norm(x)?;
        Ok(self
            .terms
            .iter()
            .map(|&(j, t)| {
                let r = x.dot(&self.units[j]) / nx - t;
                r * r
            })
            .sum())
    }

    fn gradient(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let nx = positive_norm(x)?;
        let mut g = Array1::zeros(x.len());
        let mut along_x = 0.0;
        for &(j, t) in &self.terms {
            let u = &self.units[j];
            let c = x.dot(u) / nx;
            let w = 2.0 * (c - t);
            // ∇_x cos(x, y) = u / |x| − cos · x / |x|²
            g.scaled_add(w / nx, u);
            along_x += w * c;
        }
        g.scaled_add(-along_x / (nx * nx), &x);
        Ok(g)
    }
}

fn positive_norm(x: ArrayView1<'_, f64>) -> Result<f64> {
    let n = norm(x);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::ZeroNorm("refinement candidate".into()))
    }
}

fn check_stack(raw: &EmbeddingSet, sims: &[SimilarityMatrix]) -> Result<()> {
    for m in sims {
        if m.len() != raw.len() {
            return Err(Error::Dimension(format!(
                "similarity {:?} has {} entities, embeddings have {}",
                m.name(),
                m.len(),
                raw.len()
            )));
        }
        if m.side() != raw.side() {
            return Err(Error::Invalid(format!(
                "similarity {:?} is a {} measure but embeddings are {}",
                m.name(),
                m.side(),
                raw.side()
            )));
        }
    }
    Ok(())
}

/// J(candidate) for entity `i`.
pub fn objective_value(
    i: usize,
    candidate: ArrayView1<'_, f64>,
    raw: &EmbeddingSet,
    sims: &[SimilarityMatrix],
    include_self_pairs: bool,
) -> Result<f64> {
    check_dim(candidate, raw)?;
    Problem::new(i, raw, sims, include_self_pairs)?.value(candidate)
}

/// Analytic ∇J(candidate) for entity `i`.
pub fn objective_gradient(
    i: usize,
    candidate: ArrayView1<'_, f64>,
    raw: &EmbeddingSet,
    sims: &[SimilarityMatrix],
    include_self_pairs: bool,
) -> Result<Array1<f64>> {
    check_dim(candidate, raw)?;
    Problem::new(i, raw, sims, include_self_pairs)?.gradient(candidate)
}

fn check_dim(x: ArrayView1<'_, f64>, raw: &EmbeddingSet) -> Result<()> {
    if x.len() != raw.dim() {
        return Err(Error::Dimension(format!(
            "candidate has dimension {}, embeddings {}",
            x.len(),
            raw.dim()
        )));
    }
    Ok(())
}

/// Gradient descent from the raw vector with a fixed step, halving the step
/// (up to [`MAX_HALVINGS`] times) whenever it would not lower J.
pub fn refine_vector(
    i: usize,
    raw: &EmbeddingSet,
    sims: &[SimilarityMatrix],
    opts: &RefineOptions,
) -> Result<(Array1<f64>, RefineOutcome)> {
    opts.validate()?;
    let problem = Problem::new(i, raw, sims, opts.include_self_pairs)?;
    let mut x = raw.vector(i).to_owned();
    let mut j = problem.value(x.view())?;
    let mut outcome = RefineOutcome {
        iterations: 0,
        initial_objective: j,
        final_objective: j,
        no_terms: problem.terms.is_empty(),
        trace: vec![j],
    };
    if outcome.no_terms {
        return Ok((x, outcome));
    }

    for _ in 0..opts.max_iters {
        let g = problem.gradient(x.view())?;
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let mut step = opts.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &x - &(&g * step);
            if norm(cand.view()) > 0.0 {
                let jc = problem.value(cand.view())?;
                if jc < j {
                    accepted = Some((cand, jc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, jc)) = accepted else {
            break;
        };
        let delta = j - jc;
        x = cand;
        j = jc;
        outcome.iterations += 1;
        outcome.trace.push(j);
        if delta <= opts.rel_tol * (1.0 + j) {
            break;
        }
    }
    outcome.final_objective = j;
    Ok((x, outcome))
}

/// Refines every entity independently against the fixed raw vectors.
pub fn refine_all(
    raw: &EmbeddingSet,
    sims: &[SimilarityMatrix],
    opts: &RefineOptions,
) -> Result<(EmbeddingSet, Vec<RefineOutcome>)> {
    opts.validate()?;
    check_stack(raw, sims)?;
    let results: Vec<(Array1<f64>, RefineOutcome)> = (0..raw.len())
        .into_par_iter()
        .map(|i| refine_vector(i, raw, sims, opts))
        .collect::<Result<_>>()?;
    let mut vectors = raw.vectors().clone();
    let mut outcomes = Vec::with_capacity(results.len());
    for (mut row, (v, o)) in vectors.axis_iter_mut(Axis(0)).zip(results) {
        row.assign(&v);
        outcomes.push(o);
    }
    let flagged = outcomes.iter().filter(|o| o.no_terms).count();
    if flagged > 0 {
        log::warn!("{flagged} {} entities have no similarity terms; kept raw", raw.side());
    }
    Ok((raw.with_vectors(vectors)?, outcomes))
}

/// Mean |cos(x_i, y_j) − Sim_k(i, j)| over all masked-in off-diagonal terms,
/// with `x` the candidate vectors and `y` the raw ones.
pub fn mean_abs_residual(
    candidates: &EmbeddingSet,
    raw: &EmbeddingSet,
    sims: &[SimilarityMatrix],
) -> Result<f64> {
    check_stack(raw, sims)?;
    let (mut total, mut count) = (0.0, 0usize);
    for i in 0..raw.len() {
        let x = candidates.vector(i);
        let nx = norm(x);
        for j in 0..raw.len() {
            if i == j {
                continue;
            }
            let y = raw.vector(j);
            let c = x.dot(&y) / (nx * norm(y));
            for m in sims {
                if let Some(t) = m.get(i, j) {
                    total += (c - t).abs();
                    count += 1;
                }
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
