//! Pipeline configuration file (TOML). Relative paths resolve against the
//! directory holding the config file.
//!
//! ```toml
//! seed = 42
//! output_dir = "run"
//!
//! [inputs]
//! drug_vectors = "drug.vec"
//! disease_vectors = "disease.vec"
//! associations = "associations.tsv"
//! side_effects = "side_effects.tsv"
//!
//! [imc]
//! rank = 50
//! lambda = 1.0
//!
//! [eval]
//! folds = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use drugvec::evalkit::{SynthParams, DEFAULT_THRESHOLDS};
use drugvec::imc::ImcOptions;
use drugvec::refine::RefineOptions;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub drug_vectors: Option<PathBuf>,
    /// Disease vectors keyed by disease id, or word vectors when
    /// `concept_map` is set.
    pub disease_vectors: Option<PathBuf>,
    pub concept_map: Option<PathBuf>,
    pub associations: Option<PathBuf>,
    /// Optional id lists fixing catalog membership and order; otherwise ids
    /// come from the association file in order of first appearance.
    pub drug_catalog: Option<PathBuf>,
    pub disease_catalog: Option<PathBuf>,
    pub side_effects: Option<PathBuf>,
    pub fingerprints: Option<PathBuf>,
    pub drug_sequences: Option<PathBuf>,
    pub disease_sequences: Option<PathBuf>,
    /// Precomputed disease phenotype similarity matrix.
    pub phenotype: Option<PathBuf>,
    /// Further precomputed matrices, named after the file stem.
    pub drug_similarities: Vec<PathBuf>,
    pub disease_similarities: Vec<PathBuf>,
    /// `charA charB score` lines overriding match/mismatch scores.
    pub substitutions: Option<PathBuf>,
    pub alphabet: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Alignment {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for Alignment {
    fn default() -> Self {
        Self { match_score: 3.0, mismatch: -3.0, gap: -2.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    #[default]
    Refined,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub thresholds: Vec<usize>,
    pub features: Features,
    /// Rows kept in case_study.csv; all drugs when unset.
    pub case_study_top: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            features: Features::Refined,
            case_study_top: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub inputs: Inputs,
    pub alignment: Alignment,
    pub refine: RefineOptions,
    /// `imc.seed` is always replaced by the top-level seed.
    pub imc: ImcOptions,
    pub eval: EvalConfig,
    /// `synth.seed` is always replaced by the top-level seed.
    pub synth: SynthParams,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.drug_vectors,
            &mut i.disease_vectors,
            &mut i.concept_map,
            &mut i.associations,
            &mut i.drug_catalog,
            &mut i.disease_catalog,
            &mut i.side_effects,
            &mut i.fingerprints,
            &mut i.drug_sequences,
            &mut i.disease_sequences,
            &mut i.phenotype,
            &mut i.substitutions,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        i.drug_similarities.iter_mut().chain(i.disease_similarities.iter_mut()).for_each(fix);
    }

    /// Applies command-line overrides and checks what every pipeline
    /// command needs: a seed, the three required inputs, and that every
    /// referenced file exists.
    pub fn finalize(&mut self, seed: Option<u64>, out: Option<PathBuf>, need_inputs: bool) -> Result<()> {
        if seed.is_some() {
            self.seed = seed;
        }
        if out.is_some() {
            self.output_dir = out;
        }
        let Some(seed) = self.seed else {
            bail!("config has no seed (set `seed = ...` or pass --seed)");
        };
        self.imc.seed = seed;
        self.synth.seed = seed;
        if self.output_dir.is_none() {
            bail!("no output directory (set `output_dir = ...` or pass --out)");
        }
        self.refine.validate()?;
        self.imc.validate()?;
        if self.eval.folds < 2 {
            bail!("eval.folds must be at least 2");
        }
        if need_inputs {
            for (key, p) in [
                ("inputs.drug_vectors", &self.inputs.drug_vectors),
                ("inputs.disease_vectors", &self.inputs.disease_vectors),
                ("inputs.associations", &self.inputs.associations),
            ] {
                if p.is_none() {
                    bail!("config is missing {key}");
                }
            }
            for p in self.input_files() {
                if !p.is_file() {
                    bail!("input file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn out(&self) -> &Path {
        self.output_dir.as_deref().expect("finalized config has an output dir")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("finalized config has a seed")
    }

    pub fn input_files(&self) -> Vec<&Path> {
        let i = &self.inputs;
        [
            &i.drug_vectors,
            &i.disease_vectors,
            &i.concept_map,
            &i.associations,
            &i.drug_catalog,
            &i.disease_catalog,
            &i.side_effects,
            &i.fingerprints,
            &i.drug_sequences,
            &i.disease_sequences,
            &i.phenotype,
            &i.substitutions,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .chain(i.drug_similarities.iter().map(PathBuf::as_path))
        .chain(i.disease_similarities.iter().map(PathBuf::as_path))
        .collect()
    }
}
