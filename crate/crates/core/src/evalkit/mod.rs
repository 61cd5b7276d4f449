//! Evaluation: k-fold cross-validation with AUC/ROC and top-rank hit counts,
//! leave-disease-out case studies, and a planted-block synthetic generator.
//!
//! Protocol choices recorded in every [`EvalReport`]:
//! - negatives are all pairs unknown in the *full* association matrix, so a
//!   held-out positive is never scored as a negative;
//! - the reported ROC curve pools fold scores; the headline AUC is the mean
//!   of per-fold AUCs;
//! - feature refinement, when used, runs once before CV (similarities do not
//!   depend on associations, so no labels leak).

mod synthetic;

pub use synthetic::{generate_synthetic, SynthParams, SyntheticData};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imc::{fit_imc, rank_drugs_for_disease, score_all, ImcOptions};
use crate::model::{dense_view, AssociationMatrix, EmbeddingSet, EntityCatalog, ScoreMatrix};
use crate::rng;

pub const DEFAULT_THRESHOLDS: [usize; 5] = [1, 5, 10, 20, 50];

/// Assignment of positive pairs to folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_of: BTreeMap<(usize, usize), usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, pair: (usize, usize)) -> Option<usize> {
        self.fold_of.get(&pair).copied()
    }

    /// Pairs of fold `f`, ascending.
    pub fn fold(&self, f: usize) -> Vec<(usize, usize)> {
        self.fold_of
            .iter()
            .filter(|(_, v)| **v == f)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for f in self.fold_of.values() {
            out[*f] += 1;
        }
        out
    }
}

/// Seeded shuffle of the positives, dealt round-robin into `k` folds.
pub fn kfold_split(assoc: &AssociationMatrix, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {k}")));
    }
    if assoc.len() < k {
        return Err(Error::Invalid(format!(
            "{} positives cannot fill {k} folds",
            assoc.len()
        )));
    }
    let mut pairs: Vec<(usize, usize)> = assoc.positives().iter().copied().collect();
    pairs.shuffle(&mut rng::substream(seed, rng::FOLDS));
    let fold_of = pairs.into_iter().enumerate().map(|(i, p)| (p, i % k)).collect();
    Ok(FoldAssignment { k, fold_of })
}

fn check_sides(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("AUC needs at least one positive and one negative score".into()));
    }
    Ok(())
}

/// Mann-Whitney AUC with half credit for ties.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_sides(pos, neg)?;
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut above, mut ties) = (0u64, 0u64);
    for &p in pos {
        let lo = sorted.partition_point(|v| *v < p);
        let hi = sorted.partition_point(|v| *v <= p);
        above += lo as u64;
        ties += (hi - lo) as u64;
    }
    Ok((above as f64 + 0.5 * ties as f64) / (pos.len() as f64 * neg.len() as f64))
}

/// ROC polyline from (0,0) to (1,1), one vertex per distinct score
/// (descending).
pub fn roc_points(pos: &[f64], neg: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_sides(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|v| (*v, true))
        .chain(neg.iter().map(|v| (*v, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut out = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok(out)
}

/// Area under a polyline by the trapezoid rule.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// For each threshold, how many held-out pairs rank within it. Each pair's
/// drug is ranked within its disease among drugs not positive for that
/// disease in `train` (ties by ascending drug index).
pub fn top_rank_hits(
    scores: &ScoreMatrix,
    train: &AssociationMatrix,
    heldout: &[(usize, usize)],
    thresholds: &[usize],
) -> Vec<usize> {
    let mut by_disease: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(d, s) in heldout {
        by_disease.entry(s).or_default().push(d);
    }
    let mut ranks = Vec::with_capacity(heldout.len());
    for (s, drugs) in by_disease {
        let known: BTreeSet<usize> = train.drugs_for(s).into_iter().collect();
        let order = rank_drugs_for_disease(scores, s, &known);
        for d in drugs {
            if let Some(pos) = order.iter().position(|(i, _)| *i == d) {
                ranks.push(pos + 1);
            }
        }
    }
    thresholds
        .iter()
        .map(|&t| ranks.iter().filter(|&&r| r <= t).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_positives: usize,
    pub heldout: usize,
    pub negatives: usize,
    pub auc: f64,
    pub sweeps: usize,
    pub cg_iterations: usize,
    pub top_rank_hits: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdCount {
    pub threshold: usize,
    pub hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Protocol {
    pub negative_pool: String,
    pub roc: String,
    pub mean_auc: String,
    pub ranking_pool: String,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            negative_pool: "all pairs unknown in the full association matrix".into(),
            roc: "pooled over folds (per-fold scores concatenated)".into(),
            mean_auc: "arithmetic mean of per-fold AUC".into(),
            ranking_pool: "drugs not associated with the disease in the training fold".into(),
        }
    }
}

/// Deterministic run counters; wall-clock timing is kept out so reports
/// compare byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMeta {
    pub version: String,
    pub fits: usize,
    pub total_sweeps: usize,
    pub total_cg_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub folds: usize,
    pub seed: u64,
    pub per_fold_auc: Vec<f64>,
    pub mean_auc: f64,
    pub pooled_auc: f64,
    pub heldout_total: usize,
    pub top_rank: Vec<ThresholdCount>,
    pub fold_results: Vec<FoldResult>,
    pub protocol: Protocol,
    pub config: BTreeMap<String, serde_json::Value>,
    pub meta: RunMeta,
    /// Pooled ROC vertices; written to roc.csv rather than the JSON report.
    #[serde(skip)]
    pub roc: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (x, y) in &self.roc {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    pub fn topk_csv(&self) -> String {
        let mut out = String::from("threshold,hits\n");
        for t in &self.top_rank {
            let _ = writeln!(out, "{},{}", t.threshold, t.hits);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub thresholds: Vec<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

struct FoldOutput {
    result: FoldResult,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

/// Cross-validates the IMC model. Each fold trains on the positives outside
/// it (held-out pairs become zeros) and is scored against the full set of
/// unknown pairs.
pub fn run_cv(
    assoc: &AssociationMatrix,
    d: &EmbeddingSet,
    s: &EmbeddingSet,
    imc: &ImcOptions,
    cv: &CvOptions,
) -> Result<EvalReport> {
    if cv.thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("thresholds must be sorted ascending".into()));
    }
    let folds = kfold_split(assoc, cv.folds, cv.seed)?;
    let negatives: Vec<(usize, usize)> = {
        let (nd, ns) = assoc.dims();
        (0..nd)
            .flat_map(|i| (0..ns).map(move |j| (i, j)))
            .filter(|&(i, j)| !assoc.contains(i, j))
            .collect()
    };
    if negatives.is_empty() {
        return Err(Error::Empty("every pair is positive; no negatives to score".into()));
    }

    let outputs: Vec<FoldOutput> = (0..folds.k())
        .into_par_iter()
        .map(|f| {
            let heldout = folds.fold(f);
            let train = assoc.without(&heldout);
            let train_dense = dense_view(&train);
            debug_assert!(heldout.iter().all(|&(i, j)| train_dense[[i, j]] == 0.0));
            let (model, fit) = fit_imc(&train, d, s, imc)?;
            let scores = score_all(&model, d, s)?;
            let pos: Vec<f64> = heldout.iter().map(|&(i, j)| scores.get(i, j)).collect();
            let neg: Vec<f64> = negatives.iter().map(|&(i, j)| scores.get(i, j)).collect();
            let result = FoldResult {
                fold: f,
                train_positives: train.len(),
                heldout: heldout.len(),
                negatives: neg.len(),
                auc: auc(&pos, &neg)?,
                sweeps: fit.sweeps,
                cg_iterations: fit.cg_iterations,
                top_rank_hits: top_rank_hits(&scores, &train, &heldout, &cv.thresholds),
            };
            Ok(FoldOutput { result, pos, neg })
        })
        .collect::<Result<_>>()?;

    let per_fold_auc: Vec<f64> = outputs.iter().map(|o| o.result.auc).collect();
    let mean_auc = per_fold_auc.iter().sum::<f64>() / per_fold_auc.len() as f64;
    let pos: Vec<f64> = outputs.iter().flat_map(|o| o.pos.iter().copied()).collect();
    let neg: Vec<f64> = outputs.iter().flat_map(|o| o.neg.iter().copied()).collect();
    let top_rank = cv
        .thresholds
        .iter()
        .enumerate()
        .map(|(t, &threshold)| ThresholdCount {
            threshold,
            hits: outputs.iter().map(|o| o.result.top_rank_hits[t]).sum(),
        })
        .collect();

    let mut config = BTreeMap::new();
    config.insert("imc".to_string(), serde_json::to_value(imc).expect("options serialize"));
    config.insert(
        "cv".to_string(),
        serde_json::json!({ "folds": cv.folds, "seed": cv.seed, "thresholds": cv.thresholds }),
    );

    Ok(EvalReport {
        folds: folds.k(),
        seed: cv.seed,
        mean_auc,
        pooled_auc: auc(&pos, &neg)?,
        heldout_total: pos.len(),
        per_fold_auc,
        top_rank,
        protocol: Protocol::default(),
        config,
        meta: RunMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            fits: outputs.len(),
            total_sweeps: outputs.iter().map(|o| o.result.sweeps).sum(),
            total_cg_iterations: outputs.iter().map(|o| o.result.cg_iterations).sum(),
        },
        roc: roc_points(&pos, &neg)?,
        fold_results: outputs.into_iter().map(|o| o.result).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseRow {
    pub rank: usize,
    pub drug_id: String,
    pub score: f64,
    pub mean_score: f64,
}

/// Ranked drugs for one disease after refitting without its associations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseStudy {
    pub disease_id: String,
    /// Drugs whose association with the disease was removed before fitting.
    pub removed: Vec<String>,
    pub rows: Vec<CaseRow>,
}

impl CaseStudy {
    /// Fraction of removed drugs ranked within the top `n`; `None` when the
    /// disease had no associations.
    pub fn recall_at(&self, n: usize) -> Option<f64> {
        if self.removed.is_empty() {
            return None;
        }
        let top: BTreeSet<&str> = self.rows.iter().take(n).map(|r| r.drug_id.as_str()).collect();
        let hits = self.removed.iter().filter(|d| top.contains(d.as_str())).count();
        Some(hits as f64 / self.removed.len() as f64)
    }

    /// `rank,drug_id,score,mean_score`, optionally truncated to `top` rows.
    pub fn to_csv(&self, top: Option<usize>) -> String {
        let mut out = String::from("rank,drug_id,score,mean_score\n");
        for r in self.rows.iter().take(top.unwrap_or(usize::MAX)) {
            let _ = writeln!(out, "{},{},{},{}", r.rank, r.drug_id, r.score, r.mean_score);
        }
        out
    }
}

/// Removes every association of `disease_id`, refits, and ranks all drugs
/// for it. The mean-score column averages each drug's refitted score over all
/// diseases.
pub fn leave_disease_out(
    disease_id: &str,
    catalog: &EntityCatalog,
    assoc: &AssociationMatrix,
    d: &EmbeddingSet,
    s: &EmbeddingSet,
    imc: &ImcOptions,
) -> Result<CaseStudy> {
    let j = catalog
        .diseases()
        .index_of(disease_id)
        .ok_or_else(|| Error::Unknown(format!("disease {disease_id:?} not in catalog")))?;
    let removed_pairs: Vec<(usize, usize)> = assoc.drugs_for(j).into_iter().map(|i| (i, j)).collect();
    let train = assoc.without(&removed_pairs);
    let (model, _) = fit_imc(&train, d, s, imc)?;
    let scores = score_all(&model, d, s)?;
    let means = scores.drug_means();
    let known: BTreeSet<usize> = train.drugs_for(j).into_iter().collect();
    let rows = rank_drugs_for_disease(&scores, j, &known)
        .into_iter()
        .enumerate()
        .map(|(r, (i, score))| CaseRow {
            rank: r + 1,
            drug_id: catalog.drugs().ids()[i].clone(),
            score,
            mean_score: means[i],
        })
        .collect();
    Ok(CaseStudy {
        disease_id: disease_id.to_string(),
        removed: removed_pairs
            .iter()
            .map(|&(i, _)| catalog.drugs().ids()[i].clone())
            .collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Side;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                if p > n {
                    s += 1.0;
                } else if p == n {
                    s += 0.5;
                }
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.4], &[0.6, 0.2]).unwrap(), 0.75);
        assert!(auc(&[], &[0.1]).is_err());
        assert!(auc(&[0.1], &[]).is_err());
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc_points(&[0.9], &[0.1]).unwrap(), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(roc_points(&[0.1], &[0.9]).unwrap(), vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        assert!(roc_points(&[], &[0.9]).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let a = AssociationMatrix::new(10, 1, (0..10).map(|i| (i, 0))).unwrap();
        let f = kfold_split(&a, 10, 1).unwrap();
        assert_eq!(f.sizes(), vec![1; 10]);

        // 1854 positives over 10 folds: four of 186, six of 185
        let a = AssociationMatrix::new(1854, 1, (0..1854).map(|i| (i, 0))).unwrap();
        let f = kfold_split(&a, 10, 42).unwrap();
        let mut sizes = f.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![185; 6], vec![186; 4]].concat());
        assert_eq!(f, kfold_split(&a, 10, 42).unwrap());
        assert_ne!(f, kfold_split(&a, 10, 43).unwrap());
    }

    #[test]
    fn kfold_errors() {
        let a = AssociationMatrix::new(3, 1, (0..3).map(|i| (i, 0))).unwrap();
        assert!(kfold_split(&a, 4, 0).is_err());
        assert!(kfold_split(&a, 1, 0).is_err());
    }

    fn scores(v: Array2<f64>) -> ScoreMatrix {
        ScoreMatrix::new(v).unwrap()
    }

    #[test]
    fn top_rank_examples() {
        // disease 0: drug 2 scores highest
        let sc = scores(array![[0.1], [0.2], [0.9], [0.5]]);
        let train = AssociationMatrix::new(4, 1, []).unwrap();
        assert_eq!(top_rank_hits(&sc, &train, &[(2, 0)], &[1, 5, 10]), vec![1, 1, 1]);
        // drug 0 ranks 3rd among 4
        let sc = scores(array![[0.3], [0.2], [0.9], [0.5]]);
        assert_eq!(top_rank_hits(&sc, &train, &[(0, 0)], &[1, 5]), vec![0, 1]);
        // a training positive above it is excluded from the pool
        let train = AssociationMatrix::new(4, 1, [(2, 0)]).unwrap();
        assert_eq!(top_rank_hits(&sc, &train, &[(0, 0)], &[1, 2]), vec![0, 1]);
    }

    fn naive_hits(sc: &Array2<f64>, train: &AssociationMatrix, held: &[(usize, usize)], th: &[usize]) -> Vec<usize> {
        th.iter()
            .map(|&t| {
                held.iter()
                    .filter(|&&(d, s)| {
                        let mut rank = 1;
                        for c in 0..sc.nrows() {
                            if c == d || train.contains(c, s) {
                                continue;
                            }
                            if sc[[c, s]] > sc[[d, s]] || (sc[[c, s]] == sc[[d, s]] && c < d) {
                                rank += 1;
                            }
                        }
                        rank <= t
                    })
                    .count()
            })
            .collect()
    }

    #[test]
    fn top_rank_matches_naive_on_tiny_instance() {
        let sc = array![[0.4, 0.1], [0.4, 0.7], [0.9, 0.2], [0.1, 0.7]];
        let train = AssociationMatrix::new(4, 2, [(2, 0)]).unwrap();
        let held = [(0, 0), (1, 0), (3, 1), (0, 1)];
        let th = [1, 2, 3, 4];
        assert_eq!(top_rank_hits(&scores(sc.clone()), &train, &held, &th), naive_hits(&sc, &train, &held, &th));
    }

    #[test]
    fn case_study_csv_and_recall() {
        let cs = CaseStudy {
            disease_id: "S".into(),
            removed: vec!["a".into(), "c".into()],
            rows: vec![
                CaseRow { rank: 1, drug_id: "a".into(), score: 0.5, mean_score: 0.1 },
                CaseRow { rank: 2, drug_id: "b".into(), score: 0.25, mean_score: 0.0 },
                CaseRow { rank: 3, drug_id: "c".into(), score: 0.125, mean_score: -0.5 },
            ],
        };
        assert_eq!(cs.recall_at(1), Some(0.5));
        assert_eq!(cs.recall_at(3), Some(1.0));
        assert_eq!(cs.to_csv(Some(2)), "rank,drug_id,score,mean_score\n1,a,0.5,0.1\n2,b,0.25,0\n");
    }

    fn toy() -> (EntityCatalog, AssociationMatrix, EmbeddingSet, EmbeddingSet) {
        let cat = EntityCatalog::new(
            (0..6).map(|i| format!("d{i}")).collect(),
            (0..4).map(|i| format!("s{i}")).collect(),
        )
        .unwrap();
        let d = EmbeddingSet::new(
            Side::Drug,
            cat.drugs().ids().to_vec(),
            array![[1., 0., 0.1], [0.9, 0.1, 0.], [1., 0.2, 0.], [0., 1., 0.1], [0.1, 0.9, 0.], [0., 1., 0.3]],
        )
        .unwrap();
        let s = EmbeddingSet::new(
            Side::Disease,
            cat.diseases().ids().to_vec(),
            array![[1., 0., 0.], [0.9, 0.1, 0.1], [0., 1., 0.], [0.1, 0.8, 0.2]],
        )
        .unwrap();
        let a = AssociationMatrix::new(6, 4, [(0, 0), (1, 0), (2, 1), (0, 1), (3, 2), (4, 3), (5, 2), (4, 2)]).unwrap();
        (cat, a, d, s)
    }

    #[test]
    fn case_study_with_no_associations_matches_full_fit() {
        let (cat, a, d, s) = toy();
        let sub = AssociationMatrix::new(6, 4, a.positives().iter().copied().filter(|p| p.1 != 3)).unwrap();
        let opts = ImcOptions { rank: 2, ..Default::default() };
        let cs = leave_disease_out("s3", &cat, &sub, &d, &s, &opts).unwrap();
        assert!(cs.removed.is_empty());
        assert_eq!(cs.recall_at(10), None);
        let (m, _) = fit_imc(&sub, &d, &s, &opts).unwrap();
        let full = score_all(&m, &d, &s).unwrap();
        for r in &cs.rows {
            let i = cat.drugs().index_of(&r.drug_id).unwrap();
            assert_eq!(r.score, full.get(i, 3));
        }
        assert!(cs.rows.windows(2).all(|w| w[0].score > w[1].score
            || (w[0].score == w[1].score && cat.drugs().index_of(&w[0].drug_id) < cat.drugs().index_of(&w[1].drug_id))));
        assert_eq!(leave_disease_out("nope", &cat, &a, &d, &s, &opts).unwrap_err().kind(), "unknown");
    }

    #[test]
    fn cv_is_deterministic_and_consistent() {
        let (_, a, d, s) = toy();
        let imc = ImcOptions { rank: 2, ..Default::default() };
        let cv = CvOptions { folds: 4, seed: 3, thresholds: vec![1, 3, 6] };
        let r1 = run_cv(&a, &d, &s, &imc, &cv).unwrap();
        let r2 = run_cv(&a, &d, &s, &imc, &cv).unwrap();
        assert_eq!(r1.to_json(), r2.to_json());
        assert_eq!(r1.roc, r2.roc);
        assert_eq!(r1.heldout_total, a.len());
        // every held-out pair ranks within N_d
        assert_eq!(r1.top_rank.last().unwrap().hits, a.len());
        assert!(r1.top_rank.windows(2).all(|w| w[0].hits <= w[1].hits));
        assert!((trapezoid_area(&r1.roc) - r1.pooled_auc).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting_and_roc_area(
            pos in proptest::collection::vec(0u8..20, 1..30),
            neg in proptest::collection::vec(0u8..20, 1..30),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 / 20.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 / 20.0).collect();
            let a = auc(&pos, &neg).unwrap();
            prop_assert!((a - brute_auc(&pos, &neg)).abs() <= 1e-12);
            let roc = roc_points(&pos, &neg).unwrap();
            prop_assert!((trapezoid_area(&roc) - a).abs() <= 1e-12);
            prop_assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
            prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        }

        #[test]
        fn folds_partition_positives(
            pairs in proptest::collection::btree_set((0usize..8, 0usize..8), 5..40),
            k in 2usize..5, seed in 0u64..100,
        ) {
            let a = AssociationMatrix::new(8, 8, pairs.iter().copied()).unwrap();
            let f = kfold_split(&a, k, seed).unwrap();
            let mut union = BTreeSet::new();
            for i in 0..k {
                for p in f.fold(i) {
                    prop_assert!(union.insert(p));
                }
            }
            prop_assert_eq!(&union, a.positives());
            let sizes = f.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
