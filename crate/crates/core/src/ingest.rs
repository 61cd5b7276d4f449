//! Input parsing, concept averaging, and catalog alignment.
//!
//! File formats:
//!
//! | input               | format                                                  |
//! |---------------------|---------------------------------------------------------|
//! | vectors             | line 1 `count dim`, then `token c1 … cN` space-separated |
//! | associations        | `drug_id<TAB>disease_id`, `#` comments                  |
//! | annotation sets     | `entity_id<TAB>tok1,tok2,…`                              |
//! | fingerprints        | `entity_id<TAB>0101…`, one width for the whole file      |
//! | sequences           | FASTA, header `>entity_id[|tag]`, repeated ids allowed   |
//! | similarity matrix   | header row of ids, then `id<TAB>v1<TAB>…`; `NA` = masked |
//! | concept map         | `disease_id<TAB>concept1,concept2,…`                     |
//! | id list             | one identifier per line                                 |
//!
//! Every parser reports the 1-based line number of the first offending line.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, EmbeddingSet, EntityCatalog, IdList, Side, SimilarityMatrix};
use crate::simkit::Fingerprint;

/// Largest tolerated |v_ij − v_ji| in a precomputed similarity file.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// IUPAC amino-acid letters (the 20 standard residues plus B, J, O, U, X, Z).
pub const PROTEIN_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYBJOUXZ";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Splits `id<TAB>rest` into trimmed parts.
fn split_keyed<'a>(path: &Path, ln: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    let mut parts = line.splitn(2, '\t');
    let id = parts.next().unwrap_or("").trim();
    let Some(rest) = parts.next() else {
        return Err(Error::parse(path, ln, "expected '<id><TAB><value>'"));
    };
    if id.is_empty() {
        return Err(Error::parse(path, ln, "empty identifier"));
    }
    Ok((id, rest.trim()))
}

fn split_tokens(path: &Path, ln: usize, list: &str) -> Result<Vec<String>> {
    if list.is_empty() {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|t| {
            let t = t.trim();
            if t.is_empty() {
                Err(Error::parse(path, ln, "empty token in list"))
            } else {
                Ok(t.to_string())
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// vectors

pub fn load_embeddings(path: &Path, side: Side) -> Result<EmbeddingSet> {
    parse_embeddings(path, &read(path)?, side)
}

pub fn parse_embeddings(path: &Path, text: &str, side: Side) -> Result<EmbeddingSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing 'count dim' header"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match nums.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(Error::parse(path, hl, "header must be 'count dim' with dim > 0")),
        },
        _ => return Err(Error::parse(path, hl, "header must be 'count dim'")),
    };

    let mut ids = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (ln, line) in lines {
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let comps: Vec<&str> = fields.collect();
        if comps.len() != dim {
            return Err(Error::parse(
                path,
                ln,
                format!("expected {dim} components after token, found {}", comps.len()),
            ));
        }
        if !seen.insert(token.to_string()) {
            return Err(Error::parse(path, ln, format!("duplicate token {token:?}")));
        }
        let start = data.len();
        for c in comps {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::parse(path, ln, format!("non-numeric component {c:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, ln, format!("non-finite component {c:?}")));
            }
            data.push(v);
        }
        if data[start..].iter().all(|v| *v == 0.0) {
            return Err(Error::parse(path, ln, format!("zero-norm vector for {token:?}")));
        }
        ids.push(token.to_string());
        if ids.len() > count {
            return Err(Error::parse(path, ln, format!("more than the {count} vectors declared")));
        }
    }
    if ids.len() != count {
        return Err(Error::parse(
            path,
            hl,
            format!("header declares {count} vectors, file has {}", ids.len()),
        ));
    }
    let vectors = Array2::from_shape_vec((count, dim), data)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    EmbeddingSet::new(side, ids, vectors)
}

/// Word-vector text format. Components use the shortest representation that
/// parses back to the identical `f64`.
pub fn format_embeddings(set: &EmbeddingSet) -> String {
    let mut out = format!("{} {}\n", set.len(), set.dim());
    for (id, row) in set.ids().ids().iter().zip(set.vectors().outer_iter()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// concept map

/// Disease id → concept tokens whose vectors are averaged, in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConceptMap {
    entries: Vec<(String, Vec<String>)>,
}

impl ConceptMap {
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, concepts) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("disease {id:?} listed twice in concept map")));
            }
            if concepts.is_empty() {
                return Err(Error::Invalid(format!("disease {id:?} has no concepts")));
            }
            let uniq: HashSet<&String> = concepts.iter().collect();
            if uniq.len() != concepts.len() {
                return Err(Error::Invalid(format!("disease {id:?} repeats a concept")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }
}

pub fn load_concept_map(path: &Path) -> Result<ConceptMap> {
    let text = read(path)?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (ln, line) in content_lines(&text) {
        let (id, rest) = split_keyed(path, ln, line)?;
        let concepts = split_tokens(path, ln, rest)?;
        if concepts.is_empty() {
            return Err(Error::parse(path, ln, "concept list is empty"));
        }
        let uniq: HashSet<&String> = concepts.iter().collect();
        if uniq.len() != concepts.len() {
            return Err(Error::parse(path, ln, "repeated concept"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, ln, format!("disease {id:?} listed twice")));
        }
        entries.push((id.to_string(), concepts));
    }
    ConceptMap::new(entries)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConceptReport {
    /// (disease, concept) pairs whose concept had no vector.
    pub missing_concepts: Vec<(String, String)>,
    /// Diseases with no usable concept vector.
    pub omitted: Vec<String>,
}

/// Each disease's vector is the arithmetic mean of its concept vectors found
/// in `raw`. Diseases with no found concept (or a zero mean) are omitted and
/// reported.
pub fn aggregate_concept_vectors(
    concepts: &ConceptMap,
    raw: &EmbeddingSet,
) -> Result<(EmbeddingSet, ConceptReport)> {
    let mut report = ConceptReport::default();
    let mut ids = Vec::new();
    let mut rows: Vec<Array1<f64>> = Vec::new();
    for (disease, tokens) in concepts.entries() {
        let mut sum = Array1::<f64>::zeros(raw.dim());
        let mut found = 0usize;
        for t in tokens {
            match raw.get(t) {
                Some(v) => {
                    sum += &v;
                    found += 1;
                }
                None => report.missing_concepts.push((disease.clone(), t.clone())),
            }
        }
        if found == 0 {
            report.omitted.push(disease.clone());
            continue;
        }
        let mean = sum / found as f64;
        if mean.iter().all(|v| *v == 0.0) {
            report.omitted.push(disease.clone());
            continue;
        }
        ids.push(disease.clone());
        rows.push(mean);
    }
    for (d, c) in &report.missing_concepts {
        log::warn!("concept {c:?} of disease {d:?} has no vector");
    }
    let mut vectors = Array2::zeros((rows.len(), raw.dim()));
    for (r, v) in rows.iter().enumerate() {
        vectors.row_mut(r).assign(v);
    }
    // may be empty; alignment reports that
    Ok((EmbeddingSet::new(Side::Disease, ids, vectors)?, report))
}

// ---------------------------------------------------------------------------
// associations and catalogs

/// Raw `(drug_id, disease_id)` rows with their line numbers.
pub fn read_association_pairs(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match fields.as_slice() {
            [d, s] if !d.is_empty() && !s.is_empty() => {
                out.push((ln, d.to_string(), s.to_string()))
            }
            _ => return Err(Error::parse(path, ln, "expected 'drug_id<TAB>disease_id'")),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AssociationReport {
    pub rows: usize,
    pub retained: usize,
    pub duplicates: usize,
    /// Rows skipped because an identifier is not in the catalog.
    pub skipped_unknown: usize,
    pub unknown_drugs: BTreeSet<String>,
    pub unknown_diseases: BTreeSet<String>,
}

pub fn load_associations(
    path: &Path,
    catalog: &EntityCatalog,
) -> Result<(AssociationMatrix, AssociationReport)> {
    let rows = read_association_pairs(path)?;
    let mut report = AssociationReport {
        rows: rows.len(),
        ..Default::default()
    };
    let mut positives = BTreeSet::new();
    for (_, d, s) in rows {
        let di = catalog.drugs().index_of(&d);
        let si = catalog.diseases().index_of(&s);
        match (di, si) {
            (Some(di), Some(si)) => {
                if !positives.insert((di, si)) {
                    report.duplicates += 1;
                }
            }
            _ => {
                report.skipped_unknown += 1;
                if di.is_none() {
                    report.unknown_drugs.insert(d);
                }
                if si.is_none() {
                    report.unknown_diseases.insert(s);
                }
            }
        }
    }
    report.retained = positives.len();
    let assoc = AssociationMatrix::new(catalog.n_drugs(), catalog.n_diseases(), positives)?;
    Ok((assoc, report))
}

pub fn format_associations(catalog: &EntityCatalog, assoc: &AssociationMatrix) -> String {
    let mut out = String::new();
    for &(d, s) in assoc.positives() {
        let _ = writeln!(
            out,
            "{}\t{}",
            catalog.drugs().ids()[d],
            catalog.diseases().ids()[s]
        );
    }
    out
}

/// One identifier per line.
pub fn load_id_list(path: &Path) -> Result<Vec<String>> {
    let text = read(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (ln, line) in content_lines(&text) {
        let id = line.trim();
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, ln, format!("duplicate identifier {id:?}")));
        }
        out.push(id.to_string());
    }
    Ok(out)
}

/// Unaligned drug and disease lists, in order of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawCatalog {
    pub drug_ids: Vec<String>,
    pub disease_ids: Vec<String>,
}

impl RawCatalog {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut raw = Self::default();
        let (mut ds, mut ss) = (HashSet::new(), HashSet::new());
        for (d, s) in pairs {
            if ds.insert(d) {
                raw.drug_ids.push(d.to_string());
            }
            if ss.insert(s) {
                raw.disease_ids.push(s.to_string());
            }
        }
        raw
    }
}

impl From<&EntityCatalog> for RawCatalog {
    fn from(c: &EntityCatalog) -> Self {
        Self {
            drug_ids: c.drugs().ids().to_vec(),
            disease_ids: c.diseases().ids().to_vec(),
        }
    }
}

/// Ids that have data in one optional input (side effects, fingerprints, …).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputCoverage {
    pub name: String,
    pub side: Side,
    pub ids: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DroppedEntity {
    pub side: Side,
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartialEntity {
    pub side: Side,
    pub id: String,
    pub missing: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    pub drugs_before: usize,
    pub drugs_after: usize,
    pub diseases_before: usize,
    pub diseases_after: usize,
    pub dropped: Vec<DroppedEntity>,
    /// Retained entities missing some optional input; their similarity rows
    /// for that input are masked.
    pub partial: Vec<PartialEntity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub associations: Option<AssociationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concepts: Option<ConceptReport>,
}

/// Drops every entity without an embedding; keeps entities with partial
/// similarity inputs and lists what they lack.
pub fn align_catalog(
    raw: &RawCatalog,
    drug_vectors: &EmbeddingSet,
    disease_vectors: &EmbeddingSet,
    coverage: &[InputCoverage],
) -> Result<(EntityCatalog, AlignmentReport)> {
    let mut report = AlignmentReport {
        drugs_before: raw.drug_ids.len(),
        diseases_before: raw.disease_ids.len(),
        ..Default::default()
    };
    let mut keep = |side: Side, ids: &[String], vecs: &EmbeddingSet| -> Vec<String> {
        let mut kept = Vec::new();
        for id in ids {
            if vecs.ids().contains(id) {
                let missing: Vec<String> = coverage
                    .iter()
                    .filter(|c| c.side == side && !c.ids.contains(id))
                    .map(|c| c.name.clone())
                    .collect();
                if !missing.is_empty() {
                    report.partial.push(PartialEntity {
                        side,
                        id: id.clone(),
                        missing,
                    });
                }
                kept.push(id.clone());
            } else {
                report.dropped.push(DroppedEntity {
                    side,
                    id: id.clone(),
                    reason: "no embedding vector".into(),
                });
            }
        }
        kept
    };
    let drugs = keep(Side::Drug, &raw.drug_ids, drug_vectors);
    let diseases = keep(Side::Disease, &raw.disease_ids, disease_vectors);
    report.drugs_after = drugs.len();
    report.diseases_after = diseases.len();
    if drugs.is_empty() || diseases.is_empty() {
        return Err(Error::Empty(format!(
            "alignment left {} drugs and {} diseases",
            drugs.len(),
            diseases.len()
        )));
    }
    log::info!(
        "aligned catalog: {} of {} drugs, {} of {} diseases",
        report.drugs_after,
        report.drugs_before,
        report.diseases_after,
        report.diseases_before
    );
    Ok((EntityCatalog::new(drugs, diseases)?, report))
}

// ---------------------------------------------------------------------------
// annotation sets

/// Entity id → set of annotation tokens (e.g. side effects).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SetAnnotations {
    sets: BTreeMap<String, BTreeSet<String>>,
}

impl SetAnnotations {
    pub fn insert(&mut self, id: &str, tokens: BTreeSet<String>) {
        self.sets.insert(id.to_string(), tokens);
    }

    pub fn get(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.sets.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.sets.keys()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn load_annotation_sets(path: &Path) -> Result<SetAnnotations> {
    let text = read(path)?;
    let mut out = SetAnnotations::default();
    for (ln, line) in content_lines(&text) {
        let (id, rest) = split_keyed(path, ln, line)?;
        let tokens = split_tokens(path, ln, rest)?;
        if out.get(id).is_some() {
            return Err(Error::parse(path, ln, format!("entity {id:?} listed twice")));
        }
        out.insert(id, tokens.into_iter().collect());
    }
    Ok(out)
}

pub fn format_annotation_sets(sets: &SetAnnotations) -> String {
    let mut out = String::new();
    for (id, toks) in &sets.sets {
        let joined: Vec<&str> = toks.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{id}\t{}", joined.join(","));
    }
    out
}

// ---------------------------------------------------------------------------
// fingerprints

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FingerprintTable {
    width: Option<usize>,
    prints: BTreeMap<String, Fingerprint>,
}

impl FingerprintTable {
    pub fn insert(&mut self, id: &str, fp: Fingerprint) -> Result<()> {
        if fp.width() == 0 {
            return Err(Error::Invalid("fingerprint width must be at least 1".into()));
        }
        match self.width {
            Some(w) if w != fp.width() => {
                return Err(Error::Dimension(format!(
                    "fingerprint for {id:?} has width {}, table width is {w}",
                    fp.width()
                )))
            }
            _ => self.width = Some(fp.width()),
        }
        self.prints.insert(id.to_string(), fp);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Fingerprint> {
        self.prints.get(id)
    }

    pub fn width(&self) -> Option<usize> {
        self.width
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.prints.keys()
    }

    pub fn len(&self) -> usize {
        self.prints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prints.is_empty()
    }
}

pub fn load_fingerprints(path: &Path) -> Result<FingerprintTable> {
    let text = read(path)?;
    let mut out = FingerprintTable::default();
    for (ln, line) in content_lines(&text) {
        let (id, bits) = split_keyed(path, ln, line)?;
        let fp = Fingerprint::parse(bits)
            .ok_or_else(|| Error::parse(path, ln, "fingerprint must be a string of '0'/'1'"))?;
        if out.get(id).is_some() {
            return Err(Error::parse(path, ln, format!("entity {id:?} listed twice")));
        }
        out.insert(id, fp)
            .map_err(|e| Error::parse(path, ln, e.to_string()))?;
    }
    Ok(out)
}

pub fn format_fingerprints(table: &FingerprintTable) -> String {
    let mut out = String::new();
    for (id, fp) in &table.prints {
        let _ = writeln!(out, "{id}\t{}", fp.to_bit_string());
    }
    out
}

// ---------------------------------------------------------------------------
// sequences

/// Entity id → distinct sequences (targets for drugs, genes for diseases).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceTable {
    seqs: BTreeMap<String, Vec<Vec<u8>>>,
}

impl SequenceTable {
    /// Appends `seq` unless an identical sequence is already recorded.
    pub fn push(&mut self, id: &str, seq: Vec<u8>) {
        let list = self.seqs.entry(id.to_string()).or_default();
        if !list.contains(&seq) {
            list.push(seq);
        }
    }

    pub fn get(&self, id: &str) -> Option<&[Vec<u8>]> {
        self.seqs.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.seqs.keys()
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }
}

pub fn load_sequences(path: &Path, alphabet: &str) -> Result<SequenceTable> {
    parse_fasta(path, &read(path)?, alphabet)
}

pub fn parse_fasta(path: &Path, text: &str, alphabet: &str) -> Result<SequenceTable> {
    let allowed: HashSet<u8> = alphabet.bytes().collect();
    let mut out = SequenceTable::default();
    let mut current: Option<(usize, String, Vec<u8>)> = None;

    let finish = |rec: Option<(usize, String, Vec<u8>)>, out: &mut SequenceTable| -> Result<()> {
        if let Some((ln, id, seq)) = rec {
            if seq.is_empty() {
                return Err(Error::parse(path, ln, format!("record for {id:?} has no sequence")));
            }
            out.push(&id, seq);
        }
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut out)?;
            let id = header.split('|').next().unwrap_or("").trim();
            if id.is_empty() {
                return Err(Error::parse(path, ln, "FASTA header without identifier"));
            }
            current = Some((ln, id.to_string(), Vec::new()));
            continue;
        }
        let Some((_, _, seq)) = current.as_mut() else {
            return Err(Error::parse(path, ln, "sequence data before first '>' header"));
        };
        for b in line.bytes().filter(|b| !b.is_ascii_whitespace()) {
            if !allowed.contains(&b) {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("character {:?} outside alphabet", b as char),
                ));
            }
            seq.push(b);
        }
    }
    finish(current, &mut out)?;
    Ok(out)
}

pub fn format_fasta(table: &SequenceTable) -> String {
    let mut out = String::new();
    for (id, seqs) in &table.seqs {
        for (k, s) in seqs.iter().enumerate() {
            let _ = writeln!(out, ">{id}|{k}");
            for chunk in s.chunks(60) {
                out.push_str(&String::from_utf8_lossy(chunk));
                out.push('\n');
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// precomputed similarity matrices

/// Reads a labelled matrix, symmetrizes it as (V + Vᵀ)/2 and reorders it to
/// `ids`. Catalog entities absent from the file are masked; file entities
/// absent from the catalog are ignored.
pub fn load_similarity_matrix(
    path: &Path,
    side: Side,
    name: &str,
    ids: &IdList,
) -> Result<SimilarityMatrix> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header row"))?;
    let cols: Vec<&str> = header.split('\t').skip(1).map(str::trim).collect();
    let col_index = IdList::new(cols.iter().map(|s| s.to_string()).collect())
        .map_err(|e| Error::parse(path, hl, e.to_string()))?;
    let n = cols.len();
    let mut values = Array2::from_elem((n, n), f64::NAN);
    let mut filled = vec![false; n];
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != n + 1 {
            return Err(Error::parse(
                path,
                ln,
                format!("expected {} cells after the row id, found {}", n, fields.len() - 1),
            ));
        }
        let r = col_index
            .index_of(fields[0])
            .ok_or_else(|| Error::parse(path, ln, format!("row id {:?} not in header", fields[0])))?;
        if std::mem::replace(&mut filled[r], true) {
            return Err(Error::parse(path, ln, format!("row {:?} repeated", fields[0])));
        }
        for (c, cell) in fields[1..].iter().enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, ln, format!("bad cell {cell:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(path, ln, format!("value {v} outside [0,1]")));
            }
            values[[r, c]] = v;
        }
    }
    if let Some(r) = filled.iter().position(|f| !f) {
        return Err(Error::parse(path, hl, format!("no row for {:?}", cols[r])));
    }

    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (values[[i, j]], values[[j, i]]);
            if a.is_nan() != b.is_nan() {
                return Err(Error::Invalid(format!(
                    "{}: ({}, {}) defined in one direction only",
                    path.display(),
                    cols[i],
                    cols[j]
                )));
            }
            if (a - b).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "{}: asymmetric entry ({}, {}): {a} vs {b}",
                    path.display(),
                    cols[i],
                    cols[j]
                )));
            }
            let avg = (a + b) / 2.0;
            values[[i, j]] = avg;
            values[[j, i]] = avg;
        }
    }

    let m = ids.len();
    let pos: Vec<Option<usize>> = ids.ids().iter().map(|id| col_index.index_of(id)).collect();
    let mut out = Array2::zeros((m, m));
    let mut mask = Array2::from_elem((m, m), false);
    for i in 0..m {
        for j in 0..m {
            if let (Some(a), Some(b)) = (pos[i], pos[j]) {
                let v = values[[a, b]];
                if !v.is_nan() {
                    out[[i, j]] = v;
                    mask[[i, j]] = true;
                }
            }
        }
    }
    SimilarityMatrix::new(side, name, out, mask)
}

/// Ids that appear in a similarity file header.
pub fn similarity_file_ids(path: &Path) -> Result<BTreeSet<String>> {
    let text = read(path)?;
    let (_, header) = content_lines(&text)
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header row"))?;
    Ok(header.split('\t').skip(1).map(|s| s.trim().to_string()).collect())
}

/// Labelled-matrix text format with `NA` for masked entries.
pub fn format_similarity_matrix(m: &SimilarityMatrix, ids: &IdList) -> String {
    let mut out = String::from("id");
    for id in ids.ids() {
        out.push('\t');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in ids.ids().iter().enumerate() {
        out.push_str(id);
        for j in 0..m.len() {
            match m.get(i, j) {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Ids with at least one defined entry in `m`.
pub fn covered_ids(m: &SimilarityMatrix, ids: &IdList) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (i, id) in ids.ids().iter().enumerate() {
        if m.mask().row(i).iter().any(|x| *x) {
            out.insert(id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::path::PathBuf;

    fn tmp(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        (dir, p)
    }

    fn line_of(e: &Error) -> usize {
        match e {
            Error::Parse { line, .. } => *line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn embeddings_basic() {
        let (_d, p) = tmp("v.txt", "2 3\na 1 0 0\nb 0 1 0\n");
        let e = load_embeddings(&p, Side::Drug).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.dim(), 3);
        assert_eq!(e.get("b").unwrap().to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn embeddings_errors_carry_line_numbers() {
        let cases = [
            ("1 2\na 1 0 0", 2),
            ("1 3\na 0 0 0", 2),
            ("2 2\na 1 0\na 0 1", 3),
            ("1 2\na 1 x", 2),
            ("x y\na 1 0", 1),
            ("3 2\na 1 0\nb 0 1", 1),
        ];
        for (body, want) in cases {
            let (_d, p) = tmp("v.txt", body);
            let err = load_embeddings(&p, Side::Drug).unwrap_err();
            assert_eq!(line_of(&err), want, "{body:?}: {err}");
        }
    }

    #[test]
    fn embeddings_text_round_trip_is_exact() {
        let v = array![[0.1, -1.0 / 3.0, 1e-300], [std::f64::consts::PI, 2.5e10, -7.0]];
        let set = EmbeddingSet::new(Side::Disease, vec!["x".into(), "y".into()], v).unwrap();
        let text = format_embeddings(&set);
        let back = parse_embeddings(Path::new("mem"), &text, Side::Disease).unwrap();
        assert_eq!(back, set);
    }

    fn raw_set(rows: &[(&str, &[f64])]) -> EmbeddingSet {
        let dim = rows[0].1.len();
        let mut v = Array2::zeros((rows.len(), dim));
        for (r, (_, xs)) in rows.iter().enumerate() {
            for (c, x) in xs.iter().enumerate() {
                v[[r, c]] = *x;
            }
        }
        EmbeddingSet::new(Side::Disease, rows.iter().map(|r| r.0.to_string()).collect(), v).unwrap()
    }

    #[test]
    fn concept_average() {
        let raw = raw_set(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let cm = ConceptMap::new(vec![("X".into(), vec!["a".into(), "b".into()])]).unwrap();
        let (e, rep) = aggregate_concept_vectors(&cm, &raw).unwrap();
        assert_eq!(e.get("X").unwrap().to_vec(), vec![0.5, 0.5]);
        assert!(rep.missing_concepts.is_empty());

        let cm = ConceptMap::new(vec![("X".into(), vec!["a".into()])]).unwrap();
        let (e, _) = aggregate_concept_vectors(&cm, &raw).unwrap();
        assert_eq!(e.get("X").unwrap().to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn concept_average_reports_missing_and_omitted() {
        let raw = raw_set(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let cm = ConceptMap::new(vec![
            ("X".into(), vec!["a".into(), "b".into(), "c".into()]),
            ("Y".into(), vec!["q".into()]),
        ])
        .unwrap();
        let (e, rep) = aggregate_concept_vectors(&cm, &raw).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.get("X").unwrap().to_vec(), vec![0.5, 0.5]);
        assert_eq!(
            rep.missing_concepts,
            vec![("X".to_string(), "c".to_string()), ("Y".to_string(), "q".to_string())]
        );
        assert_eq!(rep.omitted, vec!["Y".to_string()]);
    }

    #[test]
    fn concept_map_file_validation() {
        let (_d, p) = tmp("c.tsv", "S1\ta,b\nS2\tc\n");
        let cm = load_concept_map(&p).unwrap();
        assert_eq!(cm.entries().len(), 2);
        let (_d, p) = tmp("c.tsv", "S1\ta,a\n");
        assert_eq!(line_of(&load_concept_map(&p).unwrap_err()), 1);
        let (_d, p) = tmp("c.tsv", "S1\ta\nS2\t\n");
        assert_eq!(line_of(&load_concept_map(&p).unwrap_err()), 2);
    }

    fn catalog(drugs: &[&str], diseases: &[&str]) -> EntityCatalog {
        EntityCatalog::new(
            drugs.iter().map(|s| s.to_string()).collect(),
            diseases.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn associations_collapse_duplicates_and_skip_unknown() {
        let cat = catalog(&["D1", "D2"], &["S1"]);
        let (_d, p) = tmp("a.tsv", "# header\nD1\tS1\nD1\tS1\nD9\tS1\n");
        let (a, rep) = load_associations(&p, &cat).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(rep.duplicates, 1);
        assert_eq!(rep.skipped_unknown, 1);
        assert!(rep.unknown_drugs.contains("D9"));
    }

    #[test]
    fn associations_empty_and_malformed() {
        let cat = catalog(&["D1"], &["S1"]);
        let (_d, p) = tmp("a.tsv", "");
        assert!(load_associations(&p, &cat).unwrap().0.is_empty());
        let (_d, p) = tmp("a.tsv", "D1\tS1\nD1 S1\n");
        assert_eq!(line_of(&load_associations(&p, &cat).unwrap_err()), 2);
    }

    #[test]
    fn fingerprints_width() {
        let (_d, p) = tmp("f.tsv", "D1\t1100\nD2\t1010\n");
        let t = load_fingerprints(&p).unwrap();
        assert_eq!(t.width(), Some(4));
        assert_eq!(t.len(), 2);
        let (_d, p) = tmp("f.tsv", "D1\t1100\nD2\t101\n");
        assert_eq!(line_of(&load_fingerprints(&p).unwrap_err()), 2);
        let (_d, p) = tmp("f.tsv", "D1\t11a0\n");
        assert_eq!(line_of(&load_fingerprints(&p).unwrap_err()), 1);
    }

    #[test]
    fn annotation_sets() {
        let (_d, p) = tmp("s.tsv", "D1\tse1,se2\nD2\t\n");
        let t = load_annotation_sets(&p).unwrap();
        assert_eq!(t.get("D1").unwrap().len(), 2);
        assert!(t.get("D2").unwrap().is_empty());
        let (_d, p) = tmp("s.tsv", "D1\tse1,,se2\n");
        assert_eq!(line_of(&load_annotation_sets(&p).unwrap_err()), 1);
    }

    #[test]
    fn fasta_multiple_records_per_entity() {
        let (_d, p) = tmp("t.fa", ">D1|P1\nACGT\nAC\n>D1|P2\nGGTA\n>D2\nTTT\n");
        let t = load_sequences(&p, "ACGT").unwrap();
        assert_eq!(t.get("D1").unwrap(), &[b"ACGTAC".to_vec(), b"GGTA".to_vec()]);
        assert_eq!(t.get("D2").unwrap(), &[b"TTT".to_vec()]);
    }

    #[test]
    fn fasta_errors() {
        let (_d, p) = tmp("t.fa", ">D1\nACXT\n");
        assert_eq!(line_of(&load_sequences(&p, "ACGT").unwrap_err()), 2);
        let (_d, p) = tmp("t.fa", "ACGT\n");
        assert_eq!(line_of(&load_sequences(&p, "ACGT").unwrap_err()), 1);
        let (_d, p) = tmp("t.fa", ">D1\n>D2\nAC\n");
        assert_eq!(line_of(&load_sequences(&p, "ACGT").unwrap_err()), 1);
    }

    #[test]
    fn similarity_file_range_error() {
        let ids = IdList::new(vec!["a".into(), "b".into()]).unwrap();
        let (_d, p) = tmp("m.tsv", "id\ta\tb\na\t1\t1.2\nb\t1.2\t1\n");
        let err = load_similarity_matrix(&p, Side::Disease, "pheno", &ids).unwrap_err();
        assert_eq!(line_of(&err), 2);
    }

    #[test]
    fn similarity_file_symmetrize_and_reorder() {
        let ids = IdList::new(vec!["c".into(), "a".into(), "b".into()]).unwrap();
        let (_d, p) = tmp(
            "m.tsv",
            "id\ta\tb\tz\na\t1\t0.3\t0.1\nb\t0.3000000000001\t1\tNA\nz\t0.1\tNA\t1\n",
        );
        let m = load_similarity_matrix(&p, Side::Disease, "pheno", &ids).unwrap();
        assert_eq!(m.get(0, 0), None);
        assert_eq!(m.get(1, 1), Some(1.0));
        let v = m.get(1, 2).unwrap();
        assert!((v - 0.30000000000005).abs() < 1e-15);
        assert_eq!(m.get(1, 2), m.get(2, 1));

        let (_d, p) = tmp("m.tsv", "id\ta\tb\na\t1\t0.3\nb\t0.4\t1\n");
        assert!(load_similarity_matrix(&p, Side::Disease, "pheno", &ids).is_err());
    }

    #[test]
    fn similarity_file_round_trip() {
        let ids = IdList::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut mask = Array2::from_elem((3, 3), true);
        mask[[0, 2]] = false;
        mask[[2, 0]] = false;
        let m = SimilarityMatrix::new(
            Side::Drug,
            "x",
            array![[1.0, 0.1 + 0.2, 0.0], [0.1 + 0.2, 1.0, 1.0 / 7.0], [0.0, 1.0 / 7.0, 1.0]],
            mask,
        )
        .unwrap();
        let (_d, p) = tmp("m.tsv", &format_similarity_matrix(&m, &ids));
        assert_eq!(load_similarity_matrix(&p, Side::Drug, "x", &ids).unwrap(), m);
    }

    #[test]
    fn alignment_drops_missing_vectors() {
        // 593 drugs, 9 without vectors -> 584 retained
        let all: Vec<String> = (0..593).map(|i| format!("DB{i:05}")).collect();
        let with_vec: Vec<String> = all.iter().filter(|id| {
            let n: usize = id[2..].parse().unwrap();
            n % 66 != 5
        }).cloned().collect();
        assert_eq!(with_vec.len(), 584);
        let dvec = EmbeddingSet::new(Side::Drug, with_vec.clone(), Array2::ones((584, 2))).unwrap();
        let svec = EmbeddingSet::new(Side::Disease, vec!["S".into()], Array2::ones((1, 2))).unwrap();
        let raw = RawCatalog {
            drug_ids: all,
            disease_ids: vec!["S".into()],
        };
        let (cat, rep) = align_catalog(&raw, &dvec, &svec, &[]).unwrap();
        assert_eq!(cat.n_drugs(), 584);
        assert_eq!(rep.dropped.len(), 9);
        assert!(rep.dropped.iter().all(|d| d.reason == "no embedding vector"));

        // idempotent
        let (again, rep2) = align_catalog(&RawCatalog::from(&cat), &dvec, &svec, &[]).unwrap();
        assert_eq!(again, cat);
        assert!(rep2.dropped.is_empty());
    }

    #[test]
    fn alignment_keeps_partial_entities() {
        let dvec = EmbeddingSet::new(Side::Drug, vec!["D1".into(), "D2".into()], Array2::ones((2, 2))).unwrap();
        let svec = EmbeddingSet::new(Side::Disease, vec!["S".into()], Array2::ones((1, 2))).unwrap();
        let raw = RawCatalog::from_pairs([("D1", "S"), ("D2", "S")]);
        let cov = InputCoverage {
            name: "fingerprints".into(),
            side: Side::Drug,
            ids: ["D1".to_string()].into_iter().collect(),
        };
        let (cat, rep) = align_catalog(&raw, &dvec, &svec, &[cov]).unwrap();
        assert_eq!(cat.n_drugs(), 2);
        assert_eq!(rep.partial.len(), 1);
        assert_eq!(rep.partial[0].id, "D2");
        assert_eq!(rep.partial[0].missing, vec!["fingerprints".to_string()]);
    }

    #[test]
    fn alignment_empty_side_is_error() {
        let dvec = EmbeddingSet::new(Side::Drug, vec!["D1".into()], Array2::ones((1, 2))).unwrap();
        let svec = EmbeddingSet::new(Side::Disease, vec!["S".into()], Array2::ones((1, 2))).unwrap();
        let raw = RawCatalog::from_pairs([("D9", "S")]);
        assert_eq!(align_catalog(&raw, &dvec, &svec, &[]).unwrap_err().kind(), "empty");
    }
}
