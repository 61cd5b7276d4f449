//! Planted-block synthetic data.
//!
//! Drugs and diseases are dealt into `n_blocks` blocks (shuffled, round
//! robin so block sizes differ by at most one). Each block has a unit
//! centroid; centroids are Gram-Schmidt orthonormalized while
//! `n_blocks <= dim`. Raw vectors are centroid plus `noise * N(0,1)` per
//! coordinate. Similarity entries are `1 - noise*|z|` within a block and
//! `noise*|z|` across, clamped to [0,1], drawn once per unordered pair.
//! A drug-disease pair in matching blocks is positive with probability
//! `assoc_density`; cross-block pairs are never positive.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, EmbeddingSet, EntityCatalog, Side, SimilarityMatrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_drugs: usize,
    pub n_diseases: usize,
    pub dim: usize,
    pub n_blocks: usize,
    pub noise: f64,
    pub assoc_density: f64,
    pub seed: u64,
    pub drug_measures: usize,
    pub disease_measures: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_drugs: 120,
            n_diseases: 80,
            dim: 32,
            n_blocks: 4,
            noise: 0.1,
            assoc_density: 0.5,
            seed: 42,
            drug_measures: 3,
            disease_measures: 2,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.n_blocks > self.n_drugs.min(self.n_diseases) {
            return Err(Error::Invalid(format!(
                "n_blocks must be in 1..={}, got {}",
                self.n_drugs.min(self.n_diseases),
                self.n_blocks
            )));
        }
        if self.dim == 0 {
            return Err(Error::Invalid("dim must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Invalid(format!("noise must be non-negative, got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.assoc_density) {
            return Err(Error::Invalid(format!(
                "assoc_density must be in [0,1], got {}",
                self.assoc_density
            )));
        }
        if self.drug_measures == 0 || self.disease_measures == 0 {
            return Err(Error::Invalid("need at least one similarity measure per side".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub catalog: EntityCatalog,
    pub drug_vectors: EmbeddingSet,
    pub disease_vectors: EmbeddingSet,
    pub drug_sims: Vec<SimilarityMatrix>,
    pub disease_sims: Vec<SimilarityMatrix>,
    pub associations: AssociationMatrix,
    pub drug_blocks: Vec<usize>,
    pub disease_blocks: Vec<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn assign_blocks(n: usize, n_blocks: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut blocks = vec![0; n];
    for (k, i) in order.into_iter().enumerate() {
        blocks[i] = k % n_blocks;
    }
    blocks
}

fn centroids(n_blocks: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(n_blocks);
    while out.len() < n_blocks {
        let mut v: Array1<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        if out.len() < dim {
            for c in &out {
                let p = v.dot(c);
                v.scaled_add(-p, c);
            }
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            out.push(v / n);
        }
    }
    out
}

fn embeddings(
    side: Side,
    ids: &[String],
    blocks: &[usize],
    centers: &[Array1<f64>],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingSet> {
    let dim = centers[0].len();
    let mut m = Array2::zeros((ids.len(), dim));
    for (i, b) in blocks.iter().enumerate() {
        for k in 0..dim {
            m[[i, k]] = centers[*b][k] + noise * gaussian(rng);
        }
    }
    EmbeddingSet::new(side, ids.to_vec(), m)
}

fn similarity(
    side: Side,
    name: String,
    blocks: &[usize],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SimilarityMatrix> {
    let n = blocks.len();
    let mut v = Array2::eye(n);
    for i in 0..n {
        for j in i + 1..n {
            let z = noise * gaussian(rng).abs();
            let x = if blocks[i] == blocks[j] { 1.0 - z } else { z };
            let x = x.clamp(0.0, 1.0);
            v[[i, j]] = x;
            v[[j, i]] = x;
        }
    }
    SimilarityMatrix::dense(side, name, v)
}

/// Draw order from the "synth" substream: drug blocks, disease blocks,
/// centroids, drug vectors, disease vectors, drug similarities, disease
/// similarities, associations.
pub fn generate_synthetic(p: &SynthParams) -> Result<SyntheticData> {
    p.validate()?;
    let mut rng = rng::substream(p.seed, rng::SYNTH);
    let drug_ids: Vec<String> = (0..p.n_drugs).map(|i| format!("drug_{i:03}")).collect();
    let disease_ids: Vec<String> = (0..p.n_diseases).map(|i| format!("disease_{i:03}")).collect();
    let catalog = EntityCatalog::new(drug_ids.clone(), disease_ids.clone())?;

    let drug_blocks = assign_blocks(p.n_drugs, p.n_blocks, &mut rng);
    let disease_blocks = assign_blocks(p.n_diseases, p.n_blocks, &mut rng);
    let centers = centroids(p.n_blocks, p.dim, &mut rng);
    let drug_vectors = embeddings(Side::Drug, &drug_ids, &drug_blocks, &centers, p.noise, &mut rng)?;
    let disease_vectors =
        embeddings(Side::Disease, &disease_ids, &disease_blocks, &centers, p.noise, &mut rng)?;
    let drug_sims = (0..p.drug_measures)
        .map(|m| similarity(Side::Drug, format!("drug_sim_{m}"), &drug_blocks, p.noise, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let disease_sims = (0..p.disease_measures)
        .map(|m| similarity(Side::Disease, format!("disease_sim_{m}"), &disease_blocks, p.noise, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for (i, bi) in drug_blocks.iter().enumerate() {
        for (j, bj) in disease_blocks.iter().enumerate() {
            if bi == bj && rng.random::<f64>() < p.assoc_density {
                pairs.push((i, j));
            }
        }
    }
    let associations = AssociationMatrix::new(p.n_drugs, p.n_diseases, pairs)?;

    Ok(SyntheticData {
        catalog,
        drug_vectors,
        disease_vectors,
        drug_sims,
        disease_sims,
        associations,
        drug_blocks,
        disease_blocks,
    })
}
