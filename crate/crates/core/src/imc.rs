//! Inductive matrix completion over drug and disease feature vectors.
//!
//! With `X` (N_d × N) and `Y` (N_s × N) stacking the feature vectors as rows,
//! the model minimizes
//!
//! ```text
//! ‖I − X G Hᵀ Yᵀ‖²_F + (λ/2)(‖G‖²_F + ‖H‖²_F)
//! ```
//!
//! over every (drug, disease) pair; unknown pairs are zero targets. Fitting
//! alternates exact least-squares updates of `G` and `H`, each solved with
//! conjugate gradient on its normal equations
//!
//! ```text
//! XᵀX · G · BᵀB + (λ/2) G = Xᵀ I B,   B = Y H
//! ```
//!
//! and the mirror image for `H`.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dense_view, AssociationMatrix, EmbeddingSet, FactorModel, ScoreMatrix, Side};
use crate::rng;

/// λ used when λ = 0 leaves a subproblem singular.
pub const FALLBACK_LAMBDA: f64 = 1e-8;

/// Relative pivot below which a Gram matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImcOptions {
    pub rank: usize,
    pub lambda: f64,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub seed: u64,
}

impl Default for ImcOptions {
    fn default() -> Self {
        Self {
            rank: 50,
            lambda: 1.0,
            max_sweeps: 100,
            sweep_tol: 1e-7,
            cg_tol: 1e-8,
            cg_max_iters: 200,
            seed: 0,
        }
    }
}

impl ImcOptions {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Invalid("imc rank must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("imc lambda must be non-negative, got {}", self.lambda)));
        }
        if self.max_sweeps == 0 || self.cg_max_iters == 0 {
            return Err(Error::Invalid("imc max_sweeps and cg_max_iters must be positive".into()));
        }
        if self.sweep_tol.is_nan() || self.sweep_tol <= 0.0 || self.cg_tol.is_nan() || self.cg_tol <= 0.0 {
            return Err(Error::Invalid("imc tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub rank: usize,
    /// λ actually used; differs from the requested value only on fallback.
    pub lambda: f64,
    pub ill_conditioned: bool,
    pub sweeps: usize,
    pub cg_iterations: usize,
    pub converged: bool,
    /// Objective at initialization and after every accepted sweep.
    pub objective_trace: Vec<f64>,
}

fn features(d: &EmbeddingSet, s: &EmbeddingSet) -> Result<()> {
    if d.side() != Side::Drug || s.side() != Side::Disease {
        return Err(Error::Invalid("expected drug features then disease features".into()));
    }
    if d.dim() != s.dim() {
        return Err(Error::Dimension(format!(
            "drug features have dimension {}, disease features {}",
            d.dim(),
            s.dim()
        )));
    }
    Ok(())
}

fn check_model(model: &FactorModel, d: &EmbeddingSet, s: &EmbeddingSet) -> Result<()> {
    features(d, s)?;
    if model.dim() != d.dim() {
        return Err(Error::Dimension(format!(
            "model dimension {} but features have {}",
            model.dim(),
            d.dim()
        )));
    }
    Ok(())
}

fn check_assoc(assoc: &AssociationMatrix, d: &EmbeddingSet, s: &EmbeddingSet) -> Result<()> {
    if assoc.dims() != (d.len(), s.len()) {
        return Err(Error::Dimension(format!(
            "associations are {:?}, features {}x{}",
            assoc.dims(),
            d.len(),
            s.len()
        )));
    }
    Ok(())
}

fn frob2(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn objective_parts(
    g: &Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
    x: &Array2<f64>,
    y: &Array2<f64>,
    target: &Array2<f64>,
) -> f64 {
    let pred = x.dot(g).dot(&y.dot(h).t());
    let resid: f64 = target.iter().zip(pred.iter()).map(|(t, p)| (t - p) * (t - p)).sum();
    resid + 0.5 * lambda * (frob2(g) + frob2(h))
}

/// Training objective with the model's own λ.
pub fn imc_objective(
    model: &FactorModel,
    d: &EmbeddingSet,
    s: &EmbeddingSet,
    assoc: &AssociationMatrix,
) -> Result<f64> {
    check_model(model, d, s)?;
    check_assoc(assoc, d, s)?;
    Ok(objective_parts(
        model.g(),
        model.h(),
        model.lambda(),
        d.vectors(),
        s.vectors(),
        &dense_view(assoc),
    ))
}

/// True when the symmetric PSD matrix `m` has a Cholesky pivot below
/// `RANK_TOL` times its largest diagonal entry.
fn rank_deficient(m: &Array2<f64>) -> bool {
    let n = m.nrows();
    let scale = m.diag().iter().fold(0.0f64, |a, v| a.max(*v));
    if scale <= 0.0 {
        return true;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= RANK_TOL * scale {
            return true;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut v = m[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    false
}

/// Solves `left · U · right + shift · U = rhs` for `U` by conjugate gradient,
/// warm-started at `u`. Returns the iteration count.
fn cg_sylvester(
    left: &Array2<f64>,
    right: &Array2<f64>,
    shift: f64,
    rhs: &Array2<f64>,
    u: &mut Array2<f64>,
    tol: f64,
    max_iters: usize,
) -> usize {
    let apply = |v: &Array2<f64>| -> Array2<f64> {
        let mut out = left.dot(v).dot(right);
        out.scaled_add(shift, v);
        out
    };
    let mut r = rhs - &apply(u);
    let mut p = r.clone();
    let mut rs = frob2(&r);
    let stop = tol * frob2(rhs).sqrt().max(f64::MIN_POSITIVE);
    let mut iters = 0;
    while iters < max_iters && rs.sqrt() > stop {
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap.is_nan() || pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        u.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_new = frob2(&r);
        p = &r + &(&p * (rs_new / rs));
        rs = rs_new;
        iters += 1;
    }
    iters
}

/// Alternating least squares from a seeded Gaussian start.
pub fn fit_imc(
    assoc: &AssociationMatrix,
    d: &EmbeddingSet,
    s: &EmbeddingSet,
    opts: &ImcOptions,
) -> Result<(FactorModel, FitReport)> {
    opts.validate()?;
    features(d, s)?;
    check_assoc(assoc, d, s)?;
    if assoc.is_empty() {
        return Err(Error::Empty("no positive associations to fit".into()));
    }
    let n = d.dim();
    let k = opts.rank.min(n);
    if k < opts.rank {
        log::info!("rank {} capped at feature dimension {n}", opts.rank);
    }

    let x = d.vectors();
    let y = s.vectors();
    let target = dense_view(assoc);
    let xtx = x.t().dot(x);
    let yty = y.t().dot(y);
    let xtiy = x.t().dot(&target).dot(y);

    let mut lambda = opts.lambda;
    let mut ill_conditioned = false;
    if lambda == 0.0 && (rank_deficient(&xtx) || rank_deficient(&yty)) {
        log::warn!("lambda = 0 with rank-deficient features; using lambda = {FALLBACK_LAMBDA}");
        lambda = FALLBACK_LAMBDA;
        ill_conditioned = true;
    }

    let mut rng = rng::substream(opts.seed, rng::INIT);
    let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt())
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut g = Array2::from_shape_simple_fn((n, k), || normal.sample(&mut rng));
    let mut h = Array2::from_shape_simple_fn((n, k), || normal.sample(&mut rng));

    let mut current = objective_parts(&g, &h, lambda, x, y, &target);
    let mut report = FitReport {
        rank: k,
        lambda,
        ill_conditioned,
        sweeps: 0,
        cg_iterations: 0,
        converged: false,
        objective_trace: vec![current],
    };

    for _ in 0..opts.max_sweeps {
        let mut g_new = g.clone();
        let mut h_new = h.clone();

        let b = y.dot(&h_new);
        let btb = b.t().dot(&b);
        if lambda == 0.0 && rank_deficient(&btb) {
            lambda = FALLBACK_LAMBDA;
            report.ill_conditioned = true;
            report.lambda = lambda;
            current = objective_parts(&g, &h, lambda, x, y, &target);
            log::warn!("singular G subproblem at lambda = 0; using lambda = {FALLBACK_LAMBDA}");
        }
        let rhs = xtiy.dot(&h_new);
        report.cg_iterations +=
            cg_sylvester(&xtx, &btb, 0.5 * lambda, &rhs, &mut g_new, opts.cg_tol, opts.cg_max_iters);

        let a = x.dot(&g_new);
        let ata = a.t().dot(&a);
        if lambda == 0.0 && rank_deficient(&ata) {
            lambda = FALLBACK_LAMBDA;
            report.ill_conditioned = true;
            report.lambda = lambda;
            current = objective_parts(&g, &h, lambda, x, y, &target);
            log::warn!("singular H subproblem at lambda = 0; using lambda = {FALLBACK_LAMBDA}");
        }
        let rhs = xtiy.t().dot(&g_new);
        report.cg_iterations +=
            cg_sylvester(&yty, &ata, 0.5 * lambda, &rhs, &mut h_new, opts.cg_tol, opts.cg_max_iters);

        let next = objective_parts(&g_new, &h_new, lambda, x, y, &target);
        if next > current {
            // CG round-off can only matter at convergence
            report.converged = true;
            break;
        }
        g = g_new;
        h = h_new;
        report.sweeps += 1;
        report.objective_trace.push(next);
        let decrease = current - next;
        current = next;
        if current == 0.0 || decrease <= opts.sweep_tol * current {
            report.converged = true;
            break;
        }
    }
    log::debug!(
        "imc fit: {} sweeps, objective {current:.6e}, lambda {lambda}",
        report.sweeps
    );
    Ok((FactorModel::new(g, h, lambda)?, report))
}

/// score(i, j) = d̃ᵢ G Hᵀ s̃ⱼᵀ.
pub fn score_pair(model: &FactorModel, drug: ArrayView1<'_, f64>, disease: ArrayView1<'_, f64>) -> Result<f64> {
    if drug.len() != model.dim() || disease.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "feature lengths {} and {}, model dimension {}",
            drug.len(),
            disease.len(),
            model.dim()
        )));
    }
    Ok(drug.dot(model.g()).dot(&disease.dot(model.h())))
}

/// Full N_d × N_s score matrix.
pub fn score_all(model: &FactorModel, d: &EmbeddingSet, s: &EmbeddingSet) -> Result<ScoreMatrix> {
    check_model(model, d, s)?;
    let left = d.vectors().dot(model.g());
    let right = s.vectors().dot(model.h());
    ScoreMatrix::new(left.dot(&right.t()))
}

/// Drugs outside `exclude`, by descending score; ties by ascending index.
pub fn rank_drugs_for_disease(
    scores: &ScoreMatrix,
    disease: usize,
    exclude: &BTreeSet<usize>,
) -> Vec<(usize, f64)> {
    let col = scores.values().column(disease);
    let mut out: Vec<(usize, f64)> = col
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(i, v)| (i, *v))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

const MAGIC: &[u8; 8] = b"DVIMCMDL";
const FORMAT_VERSION: u32 = 1;

/// Binary model container, all integers and floats little-endian:
///
/// ```text
/// magic    8 bytes  "DVIMCMDL"
/// version  u32      1
/// dim      u64      N
/// rank     u64      K
/// lambda   f64
/// hashlen  u32      length of the catalog fingerprint
/// hash     bytes    hex SHA-256 of the catalog (see EntityCatalog::fingerprint)
/// G        N*K f64  row-major
/// H        N*K f64  row-major
/// ```
pub fn encode_model(model: &FactorModel, catalog_hash: &str) -> Vec<u8> {
    let (n, k) = model.g().dim();
    let mut out = Vec::with_capacity(40 + catalog_hash.len() + 16 * n * k);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    out.extend_from_slice(&model.lambda().to_le_bytes());
    out.extend_from_slice(&(catalog_hash.len() as u32).to_le_bytes());
    out.extend_from_slice(catalog_hash.as_bytes());
    for v in model.g().iter().chain(model.h().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_model`]; returns the model and its catalog hash.
pub fn decode_model(bytes: &[u8]) -> Result<(FactorModel, String)> {
    let mut cur = bytes;
    let mut take = |len: usize| -> Result<&[u8]> {
        if cur.len() < len {
            return Err(Error::Invalid("truncated model file".into()));
        }
        let (head, tail) = cur.split_at(len);
        cur = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(Error::Invalid("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Invalid(format!("unsupported model format version {version}")));
    }
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let k = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let lambda = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let hlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let hash = String::from_utf8(take(hlen)?.to_vec())
        .map_err(|_| Error::Invalid("catalog hash is not UTF-8".into()))?;
    let count = n
        .checked_mul(k)
        .ok_or_else(|| Error::Invalid("model dimensions overflow".into()))?;
    let mut read_matrix = || -> Result<Array2<f64>> {
        let raw = take(count.checked_mul(8).ok_or_else(|| Error::Invalid("model too large".into()))?)?;
        let vals = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((n, k), vals).map_err(|e| Error::Invalid(e.to_string()))
    };
    let g = read_matrix()?;
    let h = read_matrix()?;
    if !cur.is_empty() {
        return Err(Error::Invalid("trailing bytes after model".into()));
    }
    Ok((FactorModel::new(g, h, lambda)?, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(side: Side, v: Array2<f64>) -> EmbeddingSet {
        let ids = (0..v.nrows()).map(|i| format!("{side}{i}")).collect();
        EmbeddingSet::new(side, ids, v).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_model_objective_counts_positives() {
        let d = emb(Side::Drug, array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let s = emb(Side::Disease, array![[1.0, 2.0], [0.5, 0.0]]);
        let a = AssociationMatrix::new(3, 2, [(0, 0), (2, 1), (1, 1)]).unwrap();
        let m = FactorModel::new(Array2::zeros((2, 2)), Array2::zeros((2, 2)), 3.0).unwrap();
        assert_eq!(imc_objective(&m, &d, &s, &a).unwrap(), 3.0);
    }

    #[test]
    fn exact_fit_objective_is_zero() {
        let d = emb(Side::Drug, Array2::eye(2));
        let s = emb(Side::Disease, Array2::eye(2));
        let a = AssociationMatrix::new(2, 2, [(0, 0), (1, 1)]).unwrap();
        let m = FactorModel::new(Array2::eye(2), Array2::eye(2), 0.0).unwrap();
        assert_eq!(imc_objective(&m, &d, &s, &a).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_term_by_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = random(&mut rng, 3, 2);
        let ys = random(&mut rng, 2, 2);
        let g = random(&mut rng, 2, 2);
        let h = random(&mut rng, 2, 2);
        let a = AssociationMatrix::new(3, 2, [(0, 1), (2, 0)]).unwrap();
        let lambda = 0.7;
        let mut want = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                let mut sc = 0.0;
                for p in 0..2 {
                    for q in 0..2 {
                        for r in 0..2 {
                            sc += xs[[i, p]] * g[[p, r]] * h[[q, r]] * ys[[j, q]];
                        }
                    }
                }
                let t = if a.contains(i, j) { 1.0 } else { 0.0 };
                want += (t - sc) * (t - sc);
            }
        }
        want += lambda / 2.0 * (g.iter().chain(h.iter()).map(|v| v * v).sum::<f64>());
        let m = FactorModel::new(g, h, lambda).unwrap();
        let got = imc_objective(&m, &emb(Side::Drug, xs), &emb(Side::Disease, ys), &a).unwrap();
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn identity_features_recover_low_rank_matrix() {
        // X = I, Y = I: plain matrix factorization of a rank-2 binary matrix
        let d = emb(Side::Drug, Array2::eye(4));
        let s = emb(Side::Disease, Array2::eye(4));
        let a = AssociationMatrix::new(4, 4, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]).unwrap();
        let opts = ImcOptions { rank: 2, lambda: 0.0, max_sweeps: 2000, sweep_tol: 1e-14, seed: 4, ..Default::default() };
        let (m, rep) = fit_imc(&a, &d, &s, &opts).unwrap();
        assert!(!rep.ill_conditioned);
        let scores = score_all(&m, &d, &s).unwrap();
        let err = (scores.values() - &dense_view(&a)).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rank_one_in_span_fits_exactly() {
        // I = u vᵀ with u, v in the feature spans; X has a repeated row, so
        // the fallback λ leaves a tiny bias
        let u = array![1.0, 0.0, 1.0];
        let v = array![0.0, 1.0];
        let xs = array![[1.0, 0.5, 0.0], [0.2, -0.3, 0.1], [1.0, 0.5, 0.0]];
        let ys = array![[0.3, 0.1, 0.7], [2.0, 0.0, 1.0]];
        let mut dense = Array2::zeros((3, 2));
        for i in 0..3 {
            for j in 0..2 {
                dense[[i, j]] = u[i] * v[j];
            }
        }
        let a = AssociationMatrix::from_dense(&dense);
        let opts = ImcOptions { rank: 1, lambda: 0.0, max_sweeps: 500, sweep_tol: 1e-15, seed: 9, ..Default::default() };
        let (m, _) = fit_imc(&a, &emb(Side::Drug, xs.clone()), &emb(Side::Disease, ys.clone()), &opts).unwrap();
        let obj = imc_objective(&m, &emb(Side::Drug, xs), &emb(Side::Disease, ys), &a).unwrap();
        assert!(obj < 1e-6, "{obj}");
    }

    #[test]
    fn huge_lambda_shrinks_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = emb(Side::Drug, random(&mut rng, 6, 4));
        let s = emb(Side::Disease, random(&mut rng, 5, 4));
        let a = AssociationMatrix::new(6, 5, [(0, 0), (1, 2), (4, 4)]).unwrap();
        let opts = ImcOptions { rank: 3, lambda: 1e9, ..Default::default() };
        let (m, _) = fit_imc(&a, &d, &s, &opts).unwrap();
        let scores = score_all(&m, &d, &s).unwrap();
        assert!(scores.values().iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn sweeps_never_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = emb(Side::Drug, random(&mut rng, 12, 5));
        let s = emb(Side::Disease, random(&mut rng, 9, 5));
        let a = AssociationMatrix::new(12, 9, (0..12).map(|i| (i, i % 9))).unwrap();
        let (_, rep) = fit_imc(&a, &d, &s, &ImcOptions { rank: 3, lambda: 0.5, ..Default::default() }).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = emb(Side::Drug, random(&mut rng, 8, 4));
        let s = emb(Side::Disease, random(&mut rng, 6, 4));
        let a = AssociationMatrix::new(8, 6, [(0, 1), (3, 2), (7, 5)]).unwrap();
        let opts = ImcOptions { rank: 2, seed: 77, ..Default::default() };
        let (m1, _) = fit_imc(&a, &d, &s, &opts).unwrap();
        let (m2, _) = fit_imc(&a, &d, &s, &opts).unwrap();
        assert_eq!(m1, m2);
        let (m3, _) = fit_imc(&a, &d, &s, &ImcOptions { seed: 78, ..opts }).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn fit_rejects_empty_and_caps_rank() {
        let d = emb(Side::Drug, Array2::eye(2));
        let s = emb(Side::Disease, Array2::eye(2));
        let empty = AssociationMatrix::new(2, 2, []).unwrap();
        assert_eq!(fit_imc(&empty, &d, &s, &ImcOptions::default()).unwrap_err().kind(), "empty");
        let a = AssociationMatrix::new(2, 2, [(0, 0)]).unwrap();
        let (m, rep) = fit_imc(&a, &d, &s, &ImcOptions::default()).unwrap();
        assert_eq!(m.rank(), 2);
        assert_eq!(rep.rank, 2);
    }

    #[test]
    fn lambda_zero_falls_back_when_singular() {
        let d = emb(Side::Drug, array![[1.0, 0.0], [2.0, 0.0]]);
        let s = emb(Side::Disease, Array2::eye(2));
        let a = AssociationMatrix::new(2, 2, [(0, 0)]).unwrap();
        let (m, rep) = fit_imc(&a, &d, &s, &ImcOptions { rank: 1, lambda: 0.0, ..Default::default() }).unwrap();
        assert!(rep.ill_conditioned);
        assert_eq!(m.lambda(), FALLBACK_LAMBDA);
    }

    #[test]
    fn score_identity_projection() {
        let m = FactorModel::new(Array2::eye(3), Array2::eye(3), 0.0).unwrap();
        let e1 = array![0.0, 1.0, 0.0];
        assert_eq!(score_pair(&m, e1.view(), e1.view()).unwrap(), 1.0);
        let e2 = array![0.0, 0.0, 1.0];
        assert_eq!(score_pair(&m, e1.view(), e2.view()).unwrap(), 0.0);
        let short = array![1.0];
        assert!(score_pair(&m, short.view(), e1.view()).is_err());
    }

    #[test]
    fn orthogonal_drug_scores_zero() {
        // Z's row space is span(e0); a drug along e1 scores 0 everywhere
        let g = array![[1.0], [0.0]];
        let h = array![[0.4], [0.9]];
        let m = FactorModel::new(g, h, 0.0).unwrap();
        let s = array![0.3, -2.0];
        assert_eq!(score_pair(&m, array![0.0, 1.0].view(), s.view()).unwrap(), 0.0);
    }

    #[test]
    fn score_all_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random(&mut rng, 2, 2);
        let h = random(&mut rng, 2, 2);
        let m = FactorModel::new(g.clone(), h.clone(), 1.0).unwrap();
        let mut xs = random(&mut rng, 3, 2);
        let mut ys = random(&mut rng, 4, 2);
        for mut r in xs.rows_mut().into_iter().chain(ys.rows_mut()) {
            let n = r.dot(&r).sqrt();
            r /= n;
        }
        let d = emb(Side::Drug, xs.clone());
        let s = emb(Side::Disease, ys.clone());
        let scores = score_all(&m, &d, &s).unwrap();
        let z = g.dot(&h.t());
        for i in 0..3 {
            for j in 0..4 {
                let mut want = 0.0;
                for p in 0..2 {
                    for q in 0..2 {
                        want += xs[[i, p]] * z[[p, q]] * ys[[j, q]];
                    }
                }
                assert!((scores.get(i, j) - want).abs() < 1e-12);
                let pair = score_pair(&m, d.vector(i), s.vector(j)).unwrap();
                assert!((pair - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ranking_examples() {
        let col = |v: &[f64]| ScoreMatrix::new(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()).unwrap();
        let s = col(&[0.1, 0.9, 0.5]);
        let order: Vec<usize> = rank_drugs_for_disease(&s, 0, &BTreeSet::new()).iter().map(|p| p.0).collect();
        assert_eq!(order, vec![1, 2, 0]);
        let order: Vec<usize> = rank_drugs_for_disease(&s, 0, &[1].into()).iter().map(|p| p.0).collect();
        assert_eq!(order, vec![2, 0]);
        let t = col(&[0.5, 0.5]);
        let order: Vec<usize> = rank_drugs_for_disease(&t, 0, &BTreeSet::new()).iter().map(|p| p.0).collect();
        assert_eq!(order, vec![0, 1]);
    }

    #[test]
    fn model_bytes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = FactorModel::new(random(&mut rng, 5, 3), random(&mut rng, 5, 3), 0.25).unwrap();
        let bytes = encode_model(&m, "abc123");
        let (back, hash) = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(hash, "abc123");
        assert_eq!(encode_model(&back, &hash), bytes);
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
    }

    #[test]
    fn bilinear_rescaling_leaves_scores_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random(&mut rng, 4, 3);
        let h = random(&mut rng, 4, 3);
        let d = emb(Side::Drug, random(&mut rng, 6, 4));
        let s = emb(Side::Disease, random(&mut rng, 5, 4));
        let base = score_all(&FactorModel::new(g.clone(), h.clone(), 1.0).unwrap(), &d, &s).unwrap();
        for c in [4.0, 0.125] {
            let m = FactorModel::new(&g / c, h.clone(), 1.0).unwrap();
            let scaled = score_all(&m, &d.scaled(c).unwrap(), &s).unwrap();
            assert_eq!(scaled, base);
        }
        let m = FactorModel::new(&g / 3.7, h.clone(), 1.0).unwrap();
        let scaled = score_all(&m, &d.scaled(3.7).unwrap(), &s).unwrap();
        for j in 0..5 {
            let a: Vec<usize> = rank_drugs_for_disease(&base, j, &BTreeSet::new()).iter().map(|p| p.0).collect();
            let b: Vec<usize> = rank_drugs_for_disease(&scaled, j, &BTreeSet::new()).iter().map(|p| p.0).collect();
            assert_eq!(a, b);
        }
    }
}
