//! Similarity kernels and per-side similarity matrix assembly.
//!
//! Kernels return `None` where the similarity is undefined (no evidence on
//! either side); those cells end up masked out rather than set to 0.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{FingerprintTable, SequenceTable, SetAnnotations};
use crate::model::{IdList, Side, SimilarityMatrix};

/// |A ∩ B| / |A ∪ B|, undefined when both sets are empty.
pub fn jaccard_similarity<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Option<f64> {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    (union > 0).then(|| inter as f64 / union as f64)
}

/// Fixed-width bit vector (chemical fingerprint).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self {
            width: bits.len(),
            words,
        }
    }

    /// Parses a string of '0'/'1' characters.
    pub fn parse(s: &str) -> Option<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self::from_bits(&bits))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.width).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }
}

/// popcount(A AND B) / popcount(A OR B), undefined when both are all-zero.
pub fn tanimoto_similarity(a: &Fingerprint, b: &Fingerprint) -> Result<Option<f64>> {
    if a.width != b.width {
        return Err(Error::Dimension(format!(
            "fingerprint widths {} and {}",
            a.width, b.width
        )));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok((either > 0).then(|| f64::from(both) / f64::from(either)))
}

/// Linear-gap local alignment scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentScoring {
    match_score: f64,
    mismatch: f64,
    gap: f64,
    substitutions: HashMap<(u8, u8), f64>,
}

impl Default for AlignmentScoring {
    fn default() -> Self {
        Self {
            match_score: 3.0,
            mismatch: -3.0,
            gap: -2.0,
            substitutions: HashMap::new(),
        }
    }
}

impl AlignmentScoring {
    pub fn new(match_score: f64, mismatch: f64, gap: f64) -> Result<Self> {
        if !match_score.is_finite() || match_score <= 0.0 {
            return Err(Error::Invalid(format!("match score must be positive, got {match_score}")));
        }
        if !gap.is_finite() || gap >= 0.0 {
            return Err(Error::Invalid(format!("gap penalty must be negative, got {gap}")));
        }
        if !mismatch.is_finite() {
            return Err(Error::Invalid("mismatch score must be finite".into()));
        }
        Ok(Self {
            match_score,
            mismatch,
            gap,
            substitutions: HashMap::new(),
        })
    }

    /// Adds a symmetric substitution table. Self-substitution scores must be
    /// positive so that every sequence aligns to itself with a positive score.
    pub fn with_substitutions(mut self, entries: &[(u8, u8, f64)]) -> Result<Self> {
        let mut table: HashMap<(u8, u8), f64> = HashMap::new();
        for &(a, b, s) in entries {
            if !s.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite substitution score for {}/{}",
                    a as char, b as char
                )));
            }
            if a == b && s <= 0.0 {
                return Err(Error::Invalid(format!(
                    "self-substitution score for {} must be positive",
                    a as char
                )));
            }
            for key in [(a, b), (b, a)] {
                if let Some(&prev) = table.get(&key) {
                    if prev != s {
                        return Err(Error::Invalid(format!(
                            "conflicting substitution scores for {}/{}",
                            a as char, b as char
                        )));
                    }
                }
                table.insert(key, s);
            }
        }
        self.substitutions = table;
        Ok(self)
    }

    /// Reads "charA charB score" lines; blank lines and '#' comments skipped.
    pub fn load_substitutions(self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [a, b, s] = fields.as_slice() else {
                return Err(Error::parse(path, ln + 1, "expected 'charA charB score'"));
            };
            let (a, b) = match (a.as_bytes(), b.as_bytes()) {
                ([a], [b]) => (*a, *b),
                _ => return Err(Error::parse(path, ln + 1, "residues must be single characters")),
            };
            let s: f64 = s
                .parse()
                .map_err(|_| Error::parse(path, ln + 1, format!("bad score {s:?}")))?;
            entries.push((a, b, s));
        }
        self.with_substitutions(&entries)
    }

    pub fn score(&self, a: u8, b: u8) -> f64 {
        match self.substitutions.get(&(a, b)) {
            Some(&s) => s,
            None if a == b => self.match_score,
            None => self.mismatch,
        }
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }
}

/// Best local alignment score:
/// `H[i][j] = max(0, H[i-1][j-1] + s(a_i, b_j), H[i-1][j] + gap, H[i][j-1] + gap)`.
pub fn smith_waterman(a: &[u8], b: &[u8], sc: &AlignmentScoring) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("cannot align an empty sequence".into()));
    }
    let mut prev = vec![0.0f64; b.len() + 1];
    let mut cur = vec![0.0f64; b.len() + 1];
    let mut best = 0.0f64;
    for &x in a {
        cur[0] = 0.0;
        for (j, &y) in b.iter().enumerate() {
            let diag = prev[j] + sc.score(x, y);
            let up = prev[j + 1] + sc.gap;
            let left = cur[j] + sc.gap;
            let h = diag.max(up).max(left).max(0.0);
            cur[j + 1] = h;
            best = best.max(h);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(best)
}

/// SW(a,b) / sqrt(SW(a,a) · SW(b,b)).
pub fn normalized_sw(a: &[u8], b: &[u8], sc: &AlignmentScoring) -> Result<f64> {
    let ab = smith_waterman(a, b, sc)?;
    let aa = smith_waterman(a, a, sc)?;
    let bb = smith_waterman(b, b, sc)?;
    Ok(normalize(ab, aa, bb))
}

fn normalize(ab: f64, aa: f64, bb: f64) -> f64 {
    // a substitution table may score some mismatch above a self-match
    (ab / (aa * bb).sqrt()).min(1.0)
}

/// Mean normalized SW score over all cross pairs; undefined when either set
/// is empty.
pub fn setwise_mean_similarity(
    p_i: &[Vec<u8>],
    p_j: &[Vec<u8>],
    sc: &AlignmentScoring,
) -> Result<Option<f64>> {
    if p_i.is_empty() || p_j.is_empty() {
        return Ok(None);
    }
    let self_i = self_scores(p_i, sc)?;
    let self_j = self_scores(p_j, sc)?;
    setwise_with_self(p_i, &self_i, p_j, &self_j, sc).map(Some)
}

fn self_scores(seqs: &[Vec<u8>], sc: &AlignmentScoring) -> Result<Vec<f64>> {
    seqs.iter().map(|s| smith_waterman(s, s, sc)).collect()
}

fn setwise_with_self(
    p_i: &[Vec<u8>],
    self_i: &[f64],
    p_j: &[Vec<u8>],
    self_j: &[f64],
    sc: &AlignmentScoring,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, sx) in p_i.iter().zip(self_i) {
        for (y, sy) in p_j.iter().zip(self_j) {
            total += normalize(smith_waterman(x, y, sc)?, *sx, *sy);
        }
    }
    Ok(total / (p_i.len() * p_j.len()) as f64)
}

/// Input for one similarity measure.
pub enum SimilaritySource<'a> {
    Annotations(&'a SetAnnotations),
    Fingerprints(&'a FingerprintTable),
    Sequences(&'a SequenceTable, &'a AlignmentScoring),
    /// Already aligned to the catalog side; validated and passed through.
    Precomputed(&'a SimilarityMatrix),
}

/// Builds the matrix for entities `ids`. Entities without data get a fully
/// masked row and column; pairs whose kernel is undefined are masked.
pub fn build_similarity_matrix(
    ids: &IdList,
    side: Side,
    name: &str,
    source: SimilaritySource<'_>,
) -> Result<SimilarityMatrix> {
    let n = ids.len();
    let cells: Vec<Vec<Option<f64>>> = match source {
        SimilaritySource::Precomputed(m) => {
            if m.side() != side || m.len() != n {
                return Err(Error::Dimension(format!(
                    "precomputed {:?} is a {} matrix of size {}, expected {side} size {n}",
                    m.name(),
                    m.side(),
                    m.len()
                )));
            }
            return SimilarityMatrix::new(side, name, m.values().clone(), m.mask().clone());
        }
        SimilaritySource::Annotations(table) => {
            let sets: Vec<Option<&BTreeSet<String>>> =
                ids.ids().iter().map(|id| table.get(id)).collect();
            upper_triangle(n, |i, j| {
                Ok(match (sets[i], sets[j]) {
                    (Some(a), Some(b)) => jaccard_similarity(a, b),
                    _ => None,
                })
            })?
        }
        SimilaritySource::Fingerprints(table) => {
            let fps: Vec<Option<&Fingerprint>> = ids.ids().iter().map(|id| table.get(id)).collect();
            upper_triangle(n, |i, j| match (fps[i], fps[j]) {
                (Some(a), Some(b)) => tanimoto_similarity(a, b),
                _ => Ok(None),
            })?
        }
        SimilaritySource::Sequences(table, sc) => {
            let seqs: Vec<&[Vec<u8>]> = ids
                .ids()
                .iter()
                .map(|id| table.get(id).unwrap_or(&[]))
                .collect();
            let selfs: Vec<Vec<f64>> = seqs
                .par_iter()
                .map(|s| self_scores(s, sc))
                .collect::<Result<_>>()?;
            upper_triangle(n, |i, j| {
                if seqs[i].is_empty() || seqs[j].is_empty() {
                    return Ok(None);
                }
                setwise_with_self(seqs[i], &selfs[i], seqs[j], &selfs[j], sc).map(Some)
            })?
        }
    };

    let mut values = Array2::zeros((n, n));
    let mut mask = Array2::from_elem((n, n), false);
    for (i, row) in cells.into_iter().enumerate() {
        for (off, cell) in row.into_iter().enumerate() {
            let j = i + off;
            if let Some(v) = cell {
                values[[i, j]] = v;
                values[[j, i]] = v;
                mask[[i, j]] = true;
                mask[[j, i]] = true;
            }
        }
    }
    SimilarityMatrix::new(side, name, values, mask)
}

/// Evaluates `f(i, j)` for every `j >= i`, rows in parallel. Row `i` of the
/// result holds columns `i..n`.
fn upper_triangle<F>(n: usize, f: F) -> Result<Vec<Vec<Option<f64>>>>
where
    F: Fn(usize, usize) -> Result<Option<f64>> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f(i, j)).collect::<Result<Vec<_>>>())
        .collect()
}
