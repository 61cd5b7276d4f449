//! Pipeline stages. Each command writes its artifacts into the output
//! directory and stamps `stages.json` with a digest of the config and input
//! bytes; later commands reuse an artifact only when its stamp matches the
//! current digest, and otherwise recompute it in process.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use drugvec::evalkit::{generate_synthetic, leave_disease_out, run_cv, CvOptions};
use drugvec::imc::{decode_model, encode_model, fit_imc, rank_drugs_for_disease, score_all};
use drugvec::ingest::{self, AlignmentReport, InputCoverage, RawCatalog};
use drugvec::refine::{mean_abs_residual, refine_all, RefineOutcome};
use drugvec::simkit::{build_similarity_matrix, AlignmentScoring, SimilaritySource};
use drugvec::{AssociationMatrix, EmbeddingSet, EntityCatalog, FactorModel, Side, SimilarityMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Features, PipelineConfig};

const STAGES: &str = "stages.json";
const SIM_DIR: &str = "similarity";
const SIM_MANIFEST: &str = "manifest.json";
const REFINED_DIR: &str = "refined";
const MODEL: &str = "model.bin";

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path.file_name().context("output path has no file name")?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    digest: String,
    written: Vec<PathBuf>,
}

/// Inputs after alignment, plus the raw tables similarities are built from.
pub struct Prepared {
    pub catalog: EntityCatalog,
    pub report: AlignmentReport,
    pub drugs: EmbeddingSet,
    pub diseases: EmbeddingSet,
    pub assoc: AssociationMatrix,
    side_effects: Option<ingest::SetAnnotations>,
    fingerprints: Option<ingest::FingerprintTable>,
    drug_sequences: Option<ingest::SequenceTable>,
    disease_sequences: Option<ingest::SequenceTable>,
}

#[derive(Default, Serialize, Deserialize)]
struct SimManifest {
    drug: Vec<String>,
    disease: Vec<String>,
}

#[derive(Serialize)]
struct RefineSide {
    entities: usize,
    measures: Vec<String>,
    total_iterations: usize,
    no_terms: usize,
    objective_before: f64,
    objective_after: f64,
    mean_abs_residual_before: f64,
    mean_abs_residual_after: f64,
}

fn stem(p: &Path) -> Result<String> {
    Ok(p.file_stem().context("similarity path has no file name")?.to_string_lossy().into_owned())
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let mut h = Sha256::new();
        let mut keyed = cfg.clone();
        keyed.output_dir = None;
        h.update(serde_json::to_vec(&keyed)?);
        for p in cfg.input_files() {
            h.update(p.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
        }
        let digest = h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        Ok(Self { cfg, digest, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.out().join(rel)
    }

    fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        write_atomic(&p, bytes)?;
        self.written.push(p);
        Ok(())
    }

    fn stamps(&self) -> BTreeMap<String, String> {
        fs::read(self.path(STAGES))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn stamp(&self, stage: &str) -> Result<()> {
        let mut s = self.stamps();
        s.insert(stage.to_string(), self.digest.clone());
        write_atomic(&self.path(STAGES), &json(&s))
    }

    fn staged(&self, stage: &str) -> bool {
        let hit = self.stamps().get(stage) == Some(&self.digest);
        if hit {
            log::info!("reusing staged {stage} artifacts");
        }
        hit
    }

    // -----------------------------------------------------------------
    // inputs

    pub fn prepare(&self) -> Result<Prepared> {
        let i = &self.cfg.inputs;
        let (drug_path, disease_path, assoc_path) = (
            i.drug_vectors.as_deref().context("config is missing inputs.drug_vectors")?,
            i.disease_vectors.as_deref().context("config is missing inputs.disease_vectors")?,
            i.associations.as_deref().context("config is missing inputs.associations")?,
        );
        let drug_vecs = ingest::load_embeddings(drug_path, Side::Drug)?;
        let disease_words = ingest::load_embeddings(disease_path, Side::Disease)?;
        let (disease_vecs, concepts) = match &i.concept_map {
            Some(p) => {
                let map = ingest::load_concept_map(p)?;
                let (v, r) = ingest::aggregate_concept_vectors(&map, &disease_words)?;
                (v, Some(r))
            }
            None => (disease_words, None),
        };

        let pairs = ingest::read_association_pairs(assoc_path)?;
        let from_pairs = RawCatalog::from_pairs(pairs.iter().map(|(_, d, s)| (d.as_str(), s.as_str())));
        let raw = RawCatalog {
            drug_ids: match &i.drug_catalog {
                Some(p) => ingest::load_id_list(p)?,
                None => from_pairs.drug_ids,
            },
            disease_ids: match &i.disease_catalog {
                Some(p) => ingest::load_id_list(p)?,
                None => from_pairs.disease_ids,
            },
        };

        let alphabet = i.alphabet.as_deref().unwrap_or(ingest::PROTEIN_ALPHABET);
        let side_effects = i.side_effects.as_deref().map(ingest::load_annotation_sets).transpose()?;
        let fingerprints = i.fingerprints.as_deref().map(ingest::load_fingerprints).transpose()?;
        let drug_sequences = i.drug_sequences.as_deref().map(|p| ingest::load_sequences(p, alphabet)).transpose()?;
        let disease_sequences =
            i.disease_sequences.as_deref().map(|p| ingest::load_sequences(p, alphabet)).transpose()?;

        let mut coverage = Vec::new();
        let mut cover = |name: String, side: Side, ids: BTreeSet<String>| {
            coverage.push(InputCoverage { name, side, ids });
        };
        if let Some(t) = &side_effects {
            cover("side_effects".into(), Side::Drug, t.ids().cloned().collect());
        }
        if let Some(t) = &fingerprints {
            cover("fingerprints".into(), Side::Drug, t.ids().cloned().collect());
        }
        if let Some(t) = &drug_sequences {
            cover("drug_sequences".into(), Side::Drug, t.ids().cloned().collect());
        }
        if let Some(t) = &disease_sequences {
            cover("disease_sequences".into(), Side::Disease, t.ids().cloned().collect());
        }
        if let Some(p) = &i.phenotype {
            cover("phenotype".into(), Side::Disease, ingest::similarity_file_ids(p)?);
        }
        for p in &i.drug_similarities {
            cover(stem(p)?, Side::Drug, ingest::similarity_file_ids(p)?);
        }
        for p in &i.disease_similarities {
            cover(stem(p)?, Side::Disease, ingest::similarity_file_ids(p)?);
        }

        let (catalog, mut report) = ingest::align_catalog(&raw, &drug_vecs, &disease_vecs, &coverage)?;
        let (assoc, assoc_report) = ingest::load_associations(assoc_path, &catalog)?;
        report.associations = Some(assoc_report);
        report.concepts = concepts;
        Ok(Prepared {
            drugs: drug_vecs.select(catalog.drugs().ids())?,
            diseases: disease_vecs.select(catalog.diseases().ids())?,
            catalog,
            report,
            assoc,
            side_effects,
            fingerprints,
            drug_sequences,
            disease_sequences,
        })
    }

    fn scoring(&self) -> Result<AlignmentScoring> {
        let a = &self.cfg.alignment;
        let sc = AlignmentScoring::new(a.match_score, a.mismatch, a.gap)?;
        Ok(match &self.cfg.inputs.substitutions {
            Some(p) => sc.load_substitutions(p)?,
            None => sc,
        })
    }

    /// Drug and disease similarity stacks, built from the inputs.
    fn build_similarities(&self, p: &Prepared) -> Result<(Vec<SimilarityMatrix>, Vec<SimilarityMatrix>)> {
        let i = &self.cfg.inputs;
        let (drugs, diseases) = (p.catalog.drugs(), p.catalog.diseases());
        let sc = self.scoring()?;
        let mut dm = Vec::new();
        if let Some(t) = &p.side_effects {
            dm.push(build_similarity_matrix(drugs, Side::Drug, "side_effects", SimilaritySource::Annotations(t))?);
        }
        if let Some(t) = &p.fingerprints {
            dm.push(build_similarity_matrix(drugs, Side::Drug, "chemical", SimilaritySource::Fingerprints(t))?);
        }
        if let Some(t) = &p.drug_sequences {
            dm.push(build_similarity_matrix(drugs, Side::Drug, "target_sequence", SimilaritySource::Sequences(t, &sc))?);
        }
        for path in &i.drug_similarities {
            dm.push(ingest::load_similarity_matrix(path, Side::Drug, &stem(path)?, drugs)?);
        }
        let mut sm = Vec::new();
        if let Some(path) = &i.phenotype {
            sm.push(ingest::load_similarity_matrix(path, Side::Disease, "phenotype", diseases)?);
        }
        if let Some(t) = &p.disease_sequences {
            sm.push(build_similarity_matrix(diseases, Side::Disease, "gene_sequence", SimilaritySource::Sequences(t, &sc))?);
        }
        for path in &i.disease_similarities {
            sm.push(ingest::load_similarity_matrix(path, Side::Disease, &stem(path)?, diseases)?);
        }
        for stack in [&dm, &sm] {
            let names: BTreeSet<&str> = stack.iter().map(|m| m.name()).collect();
            if names.len() != stack.len() {
                bail!(drugvec::Error::Invalid("two similarity inputs share a name".into()));
            }
        }
        Ok((dm, sm))
    }

    fn similarities(&self, p: &Prepared) -> Result<(Vec<SimilarityMatrix>, Vec<SimilarityMatrix>)> {
        if !self.staged("similarity") {
            return self.build_similarities(p);
        }
        let dir = self.path(SIM_DIR);
        let manifest: SimManifest = serde_json::from_slice(&fs::read(dir.join(SIM_MANIFEST))?)?;
        let load = |side: Side, names: &[String], ids| -> Result<Vec<SimilarityMatrix>> {
            names
                .iter()
                .map(|n| Ok(ingest::load_similarity_matrix(&dir.join(format!("{side}_{n}.tsv")), side, n, ids)?))
                .collect()
        };
        Ok((
            load(Side::Drug, &manifest.drug, p.catalog.drugs())?,
            load(Side::Disease, &manifest.disease, p.catalog.diseases())?,
        ))
    }

    fn refine(&self, p: &Prepared) -> Result<(EmbeddingSet, EmbeddingSet, Option<[RefineSide; 2]>)> {
        if self.staged("refine") {
            let dir = self.path(REFINED_DIR);
            let d = ingest::load_embeddings(&dir.join("drug.vec"), Side::Drug)?;
            let s = ingest::load_embeddings(&dir.join("disease.vec"), Side::Disease)?;
            return Ok((d.select(p.catalog.drugs().ids())?, s.select(p.catalog.diseases().ids())?, None));
        }
        let (dm, sm) = self.similarities(p)?;
        let summary = |raw: &EmbeddingSet, sims: &[SimilarityMatrix], out: &EmbeddingSet, o: &[RefineOutcome]| {
            Ok::<_, anyhow::Error>(RefineSide {
                entities: raw.len(),
                measures: sims.iter().map(|m| m.name().to_string()).collect(),
                total_iterations: o.iter().map(|x| x.iterations).sum(),
                no_terms: o.iter().filter(|x| x.no_terms).count(),
                objective_before: o.iter().map(|x| x.initial_objective).sum(),
                objective_after: o.iter().map(|x| x.final_objective).sum(),
                mean_abs_residual_before: mean_abs_residual(raw, raw, sims)?,
                mean_abs_residual_after: mean_abs_residual(out, raw, sims)?,
            })
        };
        let (d, od) = refine_all(&p.drugs, &dm, &self.cfg.refine)?;
        let (s, os) = refine_all(&p.diseases, &sm, &self.cfg.refine)?;
        let report = [summary(&p.drugs, &dm, &d, &od)?, summary(&p.diseases, &sm, &s, &os)?];
        Ok((d, s, Some(report)))
    }

    fn features(&self, p: &Prepared) -> Result<(EmbeddingSet, EmbeddingSet)> {
        match self.cfg.eval.features {
            Features::Raw => Ok((p.drugs.clone(), p.diseases.clone())),
            Features::Refined => self.refine(p).map(|(d, s, _)| (d, s)),
        }
    }

    fn model(&self, p: &Prepared, d: &EmbeddingSet, s: &EmbeddingSet) -> Result<FactorModel> {
        if self.staged("fit") {
            let (model, hash) = decode_model(&fs::read(self.path(MODEL))?)?;
            if hash == p.catalog.fingerprint() {
                return Ok(model);
            }
            log::warn!("staged model was fit on a different catalog; refitting");
        }
        Ok(fit_imc(&p.assoc, d, s, &self.cfg.imc)?.0)
    }

    // -----------------------------------------------------------------
    // commands

    pub fn validate(&mut self) -> Result<AlignmentReport> {
        let p = self.prepare()?;
        self.write("alignment_report.json", &json(&p.report))?;
        self.stamp("validate")?;
        Ok(p.report)
    }

    pub fn similarity(&mut self) -> Result<()> {
        let p = self.prepare()?;
        let (dm, sm) = self.build_similarities(&p)?;
        let mut manifest = SimManifest::default();
        for (m, ids) in dm.iter().map(|m| (m, p.catalog.drugs())).chain(sm.iter().map(|m| (m, p.catalog.diseases()))) {
            let rel = Path::new(SIM_DIR).join(format!("{}_{}.tsv", m.side(), m.name()));
            self.write(rel, ingest::format_similarity_matrix(m, ids).as_bytes())?;
            match m.side() {
                Side::Drug => manifest.drug.push(m.name().to_string()),
                Side::Disease => manifest.disease.push(m.name().to_string()),
            }
        }
        self.write(Path::new(SIM_DIR).join(SIM_MANIFEST), &json(&manifest))?;
        self.stamp("similarity")
    }

    pub fn refine_cmd(&mut self) -> Result<()> {
        let p = self.prepare()?;
        let (d, s, report) = self.refine(&p)?;
        let dir = Path::new(REFINED_DIR);
        self.write(dir.join("drug.vec"), ingest::format_embeddings(&d).as_bytes())?;
        self.write(dir.join("disease.vec"), ingest::format_embeddings(&s).as_bytes())?;
        if let Some([drug, disease]) = report {
            let mut r = BTreeMap::new();
            r.insert("drug", drug);
            r.insert("disease", disease);
            self.write(dir.join("refine_report.json"), &json(&r))?;
        }
        self.stamp("refine")
    }

    pub fn fit(&mut self) -> Result<()> {
        let p = self.prepare()?;
        let (d, s) = self.features(&p)?;
        let (model, report) = fit_imc(&p.assoc, &d, &s, &self.cfg.imc)?;
        self.write(MODEL, &encode_model(&model, &p.catalog.fingerprint()))?;
        self.write("fit_report.json", &json(&report))?;
        self.stamp("fit")
    }

    pub fn score(&mut self) -> Result<()> {
        let p = self.prepare()?;
        let (d, s) = self.features(&p)?;
        let model = self.model(&p, &d, &s)?;
        let scores = score_all(&model, &d, &s)?;
        let mut out = String::from("drug_id,disease_id,score\n");
        let none = BTreeSet::new();
        for (j, disease) in p.catalog.diseases().ids().iter().enumerate() {
            for (i, v) in rank_drugs_for_disease(&scores, j, &none) {
                let _ = writeln!(out, "{},{disease},{v}", p.catalog.drugs().ids()[i]);
            }
        }
        self.write("scores.csv", out.as_bytes())
    }

    pub fn cv(&mut self) -> Result<(f64, f64)> {
        let p = self.prepare()?;
        let (d, s) = self.features(&p)?;
        let e = &self.cfg.eval;
        let opts = CvOptions { folds: e.folds, seed: self.cfg.seed(), thresholds: e.thresholds.clone() };
        let mut report = run_cv(&p.assoc, &d, &s, &self.cfg.imc, &opts)?;
        report.config.insert("features".into(), serde_json::to_value(e.features)?);
        if e.features == Features::Refined {
            report.config.insert("refine".into(), serde_json::to_value(&self.cfg.refine)?);
        }
        self.write("report.json", report.to_json().as_bytes())?;
        self.write("roc.csv", report.roc_csv().as_bytes())?;
        self.write("topk.csv", report.topk_csv().as_bytes())?;
        Ok((report.mean_auc, report.pooled_auc))
    }

    pub fn case_study(&mut self, disease: &str) -> Result<Option<f64>> {
        let p = self.prepare()?;
        let (d, s) = self.features(&p)?;
        let cs = leave_disease_out(disease, &p.catalog, &p.assoc, &d, &s, &self.cfg.imc)?;
        self.write("case_study.csv", cs.to_csv(self.cfg.eval.case_study_top).as_bytes())?;
        Ok(cs.recall_at(10))
    }

    /// Writes a synthetic dataset in the ingest formats plus a
    /// `pipeline.toml` that runs the pipeline on it into `<out>/run`.
    pub fn synth(&mut self) -> Result<()> {
        let data = generate_synthetic(&self.cfg.synth)?;
        self.write("drug.vec", ingest::format_embeddings(&data.drug_vectors).as_bytes())?;
        self.write("disease.vec", ingest::format_embeddings(&data.disease_vectors).as_bytes())?;
        self.write("associations.tsv", ingest::format_associations(&data.catalog, &data.associations).as_bytes())?;
        self.write("drug_catalog.txt", (data.catalog.drugs().ids().join("\n") + "\n").as_bytes())?;
        self.write("disease_catalog.txt", (data.catalog.diseases().ids().join("\n") + "\n").as_bytes())?;
        let mut files = (Vec::new(), Vec::new());
        for m in &data.drug_sims {
            let rel = format!("sims/{}.tsv", m.name());
            self.write(&rel, ingest::format_similarity_matrix(m, data.catalog.drugs()).as_bytes())?;
            files.0.push(rel);
        }
        for m in &data.disease_sims {
            let rel = format!("sims/{}.tsv", m.name());
            self.write(&rel, ingest::format_similarity_matrix(m, data.catalog.diseases()).as_bytes())?;
            files.1.push(rel);
        }
        let mut truth = String::from("side\tid\tblock\n");
        for (id, b) in data.catalog.drugs().ids().iter().zip(&data.drug_blocks) {
            let _ = writeln!(truth, "drug\t{id}\t{b}");
        }
        for (id, b) in data.catalog.diseases().ids().iter().zip(&data.disease_blocks) {
            let _ = writeln!(truth, "disease\t{id}\t{b}");
        }
        self.write("truth.tsv", truth.as_bytes())?;

        let quote = |v: &[String]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
        let pipeline = format!(
            "seed = {seed}\n\
             output_dir = \"run\"\n\
             \n\
             [inputs]\n\
             drug_vectors = \"drug.vec\"\n\
             disease_vectors = \"disease.vec\"\n\
             associations = \"associations.tsv\"\n\
             drug_catalog = \"drug_catalog.txt\"\n\
             disease_catalog = \"disease_catalog.txt\"\n\
             drug_similarities = [{}]\n\
             disease_similarities = [{}]\n",
            quote(&files.0),
            quote(&files.1),
            seed = self.cfg.seed(),
        );
        self.write("pipeline.toml", pipeline.as_bytes())
    }
}
