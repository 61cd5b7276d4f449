//! Shared domain types.
//!
//! Everything here is immutable once constructed. Constructors validate the
//! invariants the rest of the pipeline relies on (unique ids, symmetric
//! similarity matrices, in-range association indices, finite scores).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Drug,
    Disease,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Drug => f.write_str("drug"),
            Side::Disease => f.write_str("disease"),
        }
    }
}

/// Ordered registry of identifiers; the order is the row/column order of
/// every matrix built against it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdList {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdList {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Invalid(format!("empty identifier at position {i}")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate identifier {id:?}")));
            }
        }
        Ok(Self { ids, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.ids.get(i).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityCatalog {
    drugs: IdList,
    diseases: IdList,
}

impl EntityCatalog {
    pub fn new(drug_ids: Vec<String>, disease_ids: Vec<String>) -> Result<Self> {
        if drug_ids.is_empty() {
            return Err(Error::Empty("catalog has no drugs".into()));
        }
        if disease_ids.is_empty() {
            return Err(Error::Empty("catalog has no diseases".into()));
        }
        Ok(Self {
            drugs: IdList::new(drug_ids)?,
            diseases: IdList::new(disease_ids)?,
        })
    }

    pub fn drugs(&self) -> &IdList {
        &self.drugs
    }

    pub fn diseases(&self) -> &IdList {
        &self.diseases
    }

    pub fn side(&self, side: Side) -> &IdList {
        match side {
            Side::Drug => &self.drugs,
            Side::Disease => &self.diseases,
        }
    }

    pub fn n_drugs(&self) -> usize {
        self.drugs.len()
    }

    pub fn n_diseases(&self) -> usize {
        self.diseases.len()
    }

    /// SHA-256 over both id lists, hex encoded. Used to tie saved models to
    /// the catalog they were fitted against.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (tag, list) in [("drug", &self.drugs), ("disease", &self.diseases)] {
            h.update(tag.as_bytes());
            h.update((list.len() as u64).to_le_bytes());
            for id in list.ids() {
                h.update((id.len() as u64).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Dense vectors of one common dimension, one row per id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    side: Side,
    ids: IdList,
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    /// Rows of `vectors` follow `ids`. Every row must be finite with
    /// positive norm.
    pub fn new(side: Side, ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        let ids = IdList::new(ids)?;
        if vectors.nrows() != ids.len() {
            return Err(Error::Dimension(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::Dimension("embedding dimension must be positive".into()));
        }
        for (row, id) in vectors.outer_iter().zip(ids.ids()) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite component in vector {id:?}")));
            }
            if norm(row) == 0.0 {
                return Err(Error::ZeroNorm(format!("vector {id:?}")));
            }
        }
        Ok(Self { side, ids, vectors })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &IdList {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn get(&self, id: &str) -> Option<ArrayView1<'_, f64>> {
        self.ids.index_of(id).map(|i| self.vectors.row(i))
    }

    /// Rows for `ids`, in that order. Fails on any id without a vector.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (r, id) in ids.iter().enumerate() {
            let src = self
                .get(id)
                .ok_or_else(|| Error::Unknown(format!("no {} vector for {id:?}", self.side)))?;
            out.row_mut(r).assign(&src);
        }
        Self::new(self.side, ids.to_vec(), out)
    }

    /// Same ids, new vectors.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        Self::new(self.side, self.ids.ids().to_vec(), vectors)
    }

    /// Every component multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.with_vectors(&self.vectors * c)
    }
}

pub(crate) fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Symmetric entity-by-entity similarity with a definedness mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    side: Side,
    name: String,
    values: Array2<f64>,
    mask: Array2<bool>,
}

impl SimilarityMatrix {
    /// Validates exact symmetry of values and mask, and that every masked-in
    /// value lies in [0,1]. Masked-in diagonal entries are set to 1; masked-out
    /// entries are stored as 0.
    pub fn new(
        side: Side,
        name: impl Into<String>,
        mut values: Array2<f64>,
        mask: Array2<bool>,
    ) -> Result<Self> {
        let name = name.into();
        let n = values.nrows();
        if values.ncols() != n || mask.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "similarity {name:?}: values {:?} and mask {:?} must be square and equal",
                values.dim(),
                mask.dim()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if mask[[i, j]] != mask[[j, i]] {
                    return Err(Error::Invalid(format!(
                        "similarity {name:?}: mask not symmetric at ({i},{j})"
                    )));
                }
                if !mask[[i, j]] {
                    continue;
                }
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "similarity {name:?}: value {v} at ({i},{j}) outside [0,1]"
                    )));
                }
                if v != values[[j, i]] {
                    return Err(Error::Invalid(format!(
                        "similarity {name:?}: not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if !mask[[i, j]] {
                    values[[i, j]] = 0.0;
                }
            }
            if mask[[i, i]] {
                values[[i, i]] = 1.0;
            }
        }
        Ok(Self {
            side,
            name,
            values,
            mask,
        })
    }

    /// Fully defined matrix.
    pub fn dense(side: Side, name: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(side, name, values, mask)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// `None` where the entry is masked out.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[[i, j]].then(|| self.values[[i, j]])
    }

    pub fn defined_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Known positive drug-disease pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociationMatrix {
    positives: BTreeSet<(usize, usize)>,
    n_drugs: usize,
    n_diseases: usize,
}

impl AssociationMatrix {
    pub fn new(
        n_drugs: usize,
        n_diseases: usize,
        positives: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (d, s) in positives {
            if d >= n_drugs || s >= n_diseases {
                return Err(Error::Invalid(format!(
                    "association ({d},{s}) outside {n_drugs}x{n_diseases}"
                )));
            }
            if !set.insert((d, s)) {
                return Err(Error::Invalid(format!("duplicate association ({d},{s})")));
            }
        }
        Ok(Self {
            positives: set,
            n_drugs,
            n_diseases,
        })
    }

    /// Sparse positives of a binary matrix; any non-zero entry counts.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let positives = dense
            .indexed_iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|(ix, _)| ix)
            .collect();
        Self {
            positives,
            n_drugs: dense.nrows(),
            n_diseases: dense.ncols(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_drugs, self.n_diseases)
    }

    pub fn positives(&self) -> &BTreeSet<(usize, usize)> {
        &self.positives
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn contains(&self, drug: usize, disease: usize) -> bool {
        self.positives.contains(&(drug, disease))
    }

    /// Drugs known for `disease`, ascending.
    pub fn drugs_for(&self, disease: usize) -> Vec<usize> {
        self.positives
            .iter()
            .filter(|(_, s)| *s == disease)
            .map(|(d, _)| *d)
            .collect()
    }

    /// Copy without the given pairs.
    pub fn without<'a>(&self, removed: impl IntoIterator<Item = &'a (usize, usize)>) -> Self {
        let mut positives = self.positives.clone();
        for p in removed {
            positives.remove(p);
        }
        Self {
            positives,
            n_drugs: self.n_drugs,
            n_diseases: self.n_diseases,
        }
    }
}

/// Binary N_d x N_s matrix with 1 exactly at the positive pairs.
pub fn dense_view(assoc: &AssociationMatrix) -> Array2<f64> {
    let mut out = Array2::zeros(assoc.dims());
    for &(d, s) in assoc.positives() {
        out[[d, s]] = 1.0;
    }
    out
}

/// Factors of the projection `Z = G Hᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    g: Array2<f64>,
    h: Array2<f64>,
    lambda: f64,
}

impl FactorModel {
    pub fn new(g: Array2<f64>, h: Array2<f64>, lambda: f64) -> Result<Self> {
        if g.dim() != h.dim() {
            return Err(Error::Dimension(format!(
                "G is {:?} but H is {:?}",
                g.dim(),
                h.dim()
            )));
        }
        let (n, k) = g.dim();
        if k == 0 || n == 0 {
            return Err(Error::Dimension("factor rank and dimension must be positive".into()));
        }
        if k > n {
            return Err(Error::Dimension(format!("rank {k} exceeds feature dimension {n}")));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite factor entry".into()));
        }
        Ok(Self { g, h, lambda })
    }

    pub fn g(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rank(&self) -> usize {
        self.g.ncols()
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn projection(&self) -> Array2<f64> {
        self.g.dot(&self.h.t())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    values: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite score".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn get(&self, drug: usize, disease: usize) -> f64 {
        self.values[[drug, disease]]
    }

    /// Mean score of each drug over all diseases.
    pub fn drug_means(&self) -> Array1<f64> {
        let n = self.values.ncols() as f64;
        self.values.rows().into_iter().map(|r| r.sum() / n).collect()
    }
}
