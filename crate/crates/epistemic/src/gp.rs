//! Exact Gaussian-process regression with a zero mean function: posterior
//! mean/covariance, log marginal likelihood, posterior-prior KL
//! divergences and the KDE-style variance decomposition.
//!
//! All solves go through the Cholesky factor of `K + noise I`; the only
//! explicit matrix inversions live in the small-n test oracles. The
//! degenerate `n = 0` posterior is supported and returns the prior.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::kernels::{cross_gram, gram, KernelError, KernelSpec};
use crate::linalg::{
    cholesky, cholesky_solve, log_det_from_cholesky, solve_lower, LinalgError,
};
use crate::rng::hash_f64s;

/// Observation-noise variance used throughout the experiments.
pub const DEFAULT_NOISE_VAR: f64 = 0.02;

const PRIOR_JITTER: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("noise variance must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("targets ({targets}) and inputs ({inputs}) disagree in length")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    /// `K + noise I` failed to factorize; the pivot estimates the
    /// smallest eigenvalue.
    #[error("covariance not positive definite (smallest-eigenvalue estimate {pivot:.3e})")]
    NotPositiveDefinite { pivot: f64 },
    #[error("prior Gram matrix singular beyond jitter {jitter:.1e}")]
    SingularPrior { jitter: f64 },
    #[error("posterior covariance singular; KL undefined")]
    SingularPosterior,
    #[error("solver residual {residual:.3e} exceeds tolerance after refinement")]
    IllConditioned { residual: f64 },
    #[error("posterior cache mismatch: {0}")]
    CacheMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}

fn chol_err(e: LinalgError) -> GpError {
    match e {
        LinalgError::NotPositiveDefinite { pivot, .. } => GpError::NotPositiveDefinite { pivot },
        LinalgError::NotSquare { rows, cols } => GpError::CacheMismatch(format!(
            "expected square matrix, got {rows}x{cols}"
        )),
    }
}

/// Per-point posterior summary at a set of query inputs.
#[derive(Clone, Debug)]
pub struct PredictiveSummary {
    pub mean: Array1<f64>,
    /// Standard deviation of posterior function values (the model
    /// disagreement score).
    pub sd: Array1<f64>,
    /// Full posterior covariance, when requested.
    pub cov: Option<Array2<f64>>,
}

/// `sigma^2(x*) = prior_term - data_term` with
/// `data_term = sum_i beta_i k(x*, x_i)`.
#[derive(Clone, Debug)]
pub struct VarianceDecomposition {
    pub prior_term: f64,
    pub data_term: f64,
    pub weights: Array1<f64>,
}

/// A fitted GP regression posterior.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    spec: KernelSpec,
    x: Array2<f64>,
    y: Array1<f64>,
    noise_var: f64,
    /// Prior Gram matrix K(X, X).
    kxx: Array2<f64>,
    /// Lower Cholesky factor of `K + noise I` (empty when n = 0).
    chol: Array2<f64>,
    /// `(K + noise I)^{-1} y`.
    alpha: Array1<f64>,
    /// Magnitude of the PSD repair clamp applied at fit time (0 = none).
    psd_clamp: f64,
}

/// Options controlling posterior fitting.
#[derive(Clone, Copy, Debug, Default)]
pub struct FitOptions {
    /// Clamp negative Gram eigenvalues at zero before factorizing.
    /// Off by default; the noise jitter usually suffices. The applied
    /// clamp magnitude is recorded on the posterior.
    pub repair_psd: bool,
}

/// Fit the exact GP posterior for the given kernel and noise level.
pub fn fit(
    spec: &KernelSpec,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    noise_var: f64,
) -> Result<GpPosterior, GpError> {
    fit_with(spec, x, y, noise_var, FitOptions::default())
}

/// [`fit`] with explicit [`FitOptions`].
pub fn fit_with(
    spec: &KernelSpec,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    noise_var: f64,
    options: FitOptions,
) -> Result<GpPosterior, GpError> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(GpError::InvalidNoise(noise_var));
    }
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch {
            inputs: x.nrows(),
            targets: y.len(),
        });
    }
    let n = x.nrows();
    if n == 0 {
        return Ok(GpPosterior {
            spec: *spec,
            x: x.to_owned(),
            y: y.to_owned(),
            noise_var,
            kxx: Array2::zeros((0, 0)),
            chol: Array2::zeros((0, 0)),
            alpha: Array1::zeros(0),
            psd_clamp: 0.0,
        });
    }
    let mut gram_matrix = gram(spec, x)?;
    let psd_clamp = if options.repair_psd {
        gram_matrix.repair_psd()?
    } else {
        0.0
    };
    let kxx = gram_matrix.values;
    let mut noisy = kxx.clone();
    for i in 0..n {
        noisy[[i, i]] += noise_var;
    }
    let chol = cholesky(&noisy.view()).map_err(chol_err)?;
    let mut alpha = cholesky_solve(&chol.view(), y);
    // one step of iterative refinement keeps the alpha-residual invariant
    // honest even for near-singular systems (noise -> 0)
    let residual = y - &noisy.dot(&alpha);
    let norm_y = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let res_norm = residual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if res_norm > 1e-10 * norm_y {
        alpha = &alpha + &cholesky_solve(&chol.view(), &residual.view());
    }
    let final_res = {
        let r = y - &noisy.dot(&alpha);
        r.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    };
    if final_res > 1e-8 * norm_y {
        return Err(GpError::IllConditioned {
            residual: final_res / norm_y,
        });
    }
    Ok(GpPosterior {
        spec: *spec,
        x: x.to_owned(),
        y: y.to_owned(),
        noise_var,
        kxx,
        chol,
        alpha,
        psd_clamp,
    })
}

impl GpPosterior {
    /// Magnitude of the eigenvalue clamp applied by PSD repair at fit
    /// time; zero when no repair ran or none was needed.
    pub fn psd_clamp(&self) -> f64 {
        self.psd_clamp
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.x
    }

    /// Posterior mean and standard deviation at the query points.
    pub fn predict(&self, xs: &ArrayView2<f64>) -> Result<PredictiveSummary, GpError> {
        let m = xs.nrows();
        let mut mean = Array1::<f64>::zeros(m);
        let mut sd = Array1::<f64>::zeros(m);
        // process in chunks to bound the cross-Gram memory footprint
        let chunk = 4096usize;
        let mut start = 0;
        while start < m {
            let end = (start + chunk).min(m);
            let block = xs.slice(s![start..end, ..]);
            let (bm, bs) = self.predict_block(&block)?;
            mean.slice_mut(s![start..end]).assign(&bm);
            sd.slice_mut(s![start..end]).assign(&bs);
            start = end;
        }
        Ok(PredictiveSummary {
            mean,
            sd,
            cov: None,
        })
    }

    fn predict_block(&self, xs: &ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>), GpError> {
        let m = xs.nrows();
        let prior_diag: Result<Vec<f64>, KernelError> = (0..m)
            .map(|i| self.spec.eval(&xs.row(i), &xs.row(i)))
            .collect();
        let prior_diag = prior_diag?;
        if self.is_empty() {
            let sd = Array1::from_iter(prior_diag.iter().map(|v| v.max(0.0).sqrt()));
            return Ok((Array1::zeros(m), sd));
        }
        let ks = cross_gram(&self.spec, xs, &self.x.view())?.values;
        let mean = ks.dot(&self.alpha);
        let chol = self.chol.view();
        let vars: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let v = solve_lower(&chol, &ks.row(i));
                (prior_diag[i] - v.dot(&v)).max(0.0)
            })
            .collect();
        Ok((mean, Array1::from_iter(vars.into_iter().map(f64::sqrt))))
    }

    /// Posterior mean and full covariance at the query points.
    pub fn predict_full(&self, xs: &ArrayView2<f64>) -> Result<PredictiveSummary, GpError> {
        let m = xs.nrows();
        let kss = gram(&self.spec, xs)?.values;
        if self.is_empty() {
            let sd = Array1::from_iter((0..m).map(|i| kss[[i, i]].max(0.0).sqrt()));
            return Ok(PredictiveSummary {
                mean: Array1::zeros(m),
                sd,
                cov: Some(kss),
            });
        }
        let ks = cross_gram(&self.spec, xs, &self.x.view())?.values;
        let mean = ks.dot(&self.alpha);
        // V[:, i] = L^{-1} ks_i ; cov = Kss - V^T V
        let chol = self.chol.view();
        let vs: Vec<Array1<f64>> = (0..m)
            .into_par_iter()
            .map(|i| solve_lower(&chol, &ks.row(i)))
            .collect();
        let mut cov = kss;
        for i in 0..m {
            for j in i..m {
                let red = vs[i].dot(&vs[j]);
                cov[[i, j]] -= red;
                if j > i {
                    cov[[j, i]] = cov[[i, j]];
                }
            }
        }
        let sd = Array1::from_iter((0..m).map(|i| cov[[i, i]].max(0.0).sqrt()));
        Ok(PredictiveSummary {
            mean,
            sd,
            cov: Some(cov),
        })
    }

    /// `log p(D) = -1/2 y' alpha - sum log L_ii - n/2 log 2 pi`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self.len() as f64;
        -0.5 * self.y.dot(&self.alpha)
            - self.chol.diag().iter().map(|d| d.ln()).sum::<f64>()
            - n / 2.0 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior marginals at the training inputs: mean and covariance of
    /// `N(f_bar, Sigma_f)` from the predictive equations at `X* = X`.
    fn training_marginals(&self) -> (Array1<f64>, Array2<f64>) {
        let n = self.len();
        let mean = self.kxx.dot(&self.alpha);
        let chol = self.chol.view();
        let vs: Vec<Array1<f64>> = (0..n)
            .into_par_iter()
            .map(|i| solve_lower(&chol, &self.kxx.row(i)))
            .collect();
        let mut cov = self.kxx.clone();
        for i in 0..n {
            for j in i..n {
                let red = vs[i].dot(&vs[j]);
                cov[[i, j]] -= red;
                if j > i {
                    cov[[j, i]] = cov[[i, j]];
                }
            }
        }
        (mean, cov)
    }

    /// KL of the posterior from the prior over latent function values at
    /// the training inputs:
    /// `1/2 [tr(K^-1 Sigma_f) + f' K^-1 f - n + log det K - log det Sigma_f]`,
    /// with the prior Gram regularized by a 1e-8 jitter.
    pub fn kl_posterior_prior(&self) -> Result<f64, GpError> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let n = self.len();
        let (f_bar, sigma_f) = self.training_marginals();
        let mut prior = self.kxx.clone();
        for i in 0..n {
            prior[[i, i]] += PRIOR_JITTER;
        }
        let prior_chol = cholesky(&prior.view()).map_err(|_| GpError::SingularPrior {
            jitter: PRIOR_JITTER,
        })?;
        let post_chol =
            cholesky(&sigma_f.view()).map_err(|_| GpError::SingularPosterior)?;
        Ok(gaussian_kl_terms(
            &f_bar,
            &sigma_f,
            &prior_chol.view(),
            &post_chol.view(),
            n,
        ))
    }

    /// KL between the noisy-observation marginals at the training inputs:
    /// `N(f_bar, Sigma_f + noise I)` against `N(0, K + noise I)`. This is
    /// the variant that reproduces the reported generalization-bound
    /// numbers; see the PAC report pipeline.
    pub fn kl_predictive_prior(&self) -> Result<f64, GpError> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let n = self.len();
        let (f_bar, mut sigma_y) = self.training_marginals();
        for i in 0..n {
            sigma_y[[i, i]] += self.noise_var;
        }
        let post_chol = cholesky(&sigma_y.view()).map_err(|_| GpError::SingularPosterior)?;
        Ok(gaussian_kl_terms(
            &f_bar,
            &sigma_y,
            &self.chol.view(),
            &post_chol.view(),
            n,
        ))
    }

    /// Split the predictive variance at `x*` into the prior term
    /// `k(x*, x*)` and the data term `sum_i beta_i k(x*, x_i)`.
    pub fn variance_decomposition(
        &self,
        xstar: &ArrayView1<f64>,
    ) -> Result<VarianceDecomposition, GpError> {
        let prior_term = self.spec.eval(xstar, xstar)?;
        if self.is_empty() {
            return Ok(VarianceDecomposition {
                prior_term,
                data_term: 0.0,
                weights: Array1::zeros(0),
            });
        }
        let n = self.len();
        let mut kvec = Array1::<f64>::zeros(n);
        for i in 0..n {
            kvec[i] = self.spec.eval(xstar, &self.x.row(i))?;
        }
        let weights = cholesky_solve(&self.chol.view(), &kvec.view());
        let data_term = weights.dot(&kvec);
        Ok(VarianceDecomposition {
            prior_term,
            data_term,
            weights,
        })
    }

    /// Write `(x*, mean, sigma)` rows as CSV.
    pub fn export_predictions_csv<W: Write>(
        &self,
        xs: &ArrayView2<f64>,
        writer: W,
    ) -> Result<(), GpError> {
        let summary = self.predict(xs)?;
        write_prediction_csv(xs, &summary.mean.view(), &summary.sd.view(), writer)
            .map_err(GpError::Io)
    }

    /// Posterior cache: Cholesky factor in the Gram binary-block format
    /// plus a JSON manifest carrying everything else needed to rebuild.
    pub fn write_cache<W: Write, M: Write>(
        &self,
        mut chol_writer: W,
        manifest_writer: M,
    ) -> Result<(), GpError> {
        chol_writer.write_all(&(self.chol.nrows() as u64).to_le_bytes())?;
        for v in self.chol.iter() {
            chol_writer.write_all(&v.to_le_bytes())?;
        }
        let manifest = PosteriorManifest {
            spec: self.spec,
            noise_var: self.noise_var,
            n: self.len(),
            dim: self.dim(),
            x_hash: hash_f64s(self.x.iter()),
            y: self.y.to_vec(),
        };
        serde_json::to_writer_pretty(manifest_writer, &manifest)?;
        Ok(())
    }

    /// Rebuild a posterior from cached factor + manifest and the original
    /// inputs (hash-checked).
    pub fn from_cache(
        x: &ArrayView2<f64>,
        manifest: &PosteriorManifest,
        chol_bytes: &[u8],
    ) -> Result<GpPosterior, GpError> {
        if hash_f64s(x.iter()) != manifest.x_hash {
            return Err(GpError::CacheMismatch(
                "input hash does not match manifest".into(),
            ));
        }
        if chol_bytes.len() < 8 {
            return Err(GpError::CacheMismatch("cholesky block too short".into()));
        }
        let n = u64::from_le_bytes(chol_bytes[..8].try_into().expect("8 bytes")) as usize;
        if n != manifest.n || chol_bytes.len() != 8 + 8 * n * n {
            return Err(GpError::CacheMismatch(format!(
                "cholesky block has wrong size for n = {n}"
            )));
        }
        let values: Vec<f64> = chol_bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let chol = Array2::from_shape_vec((n, n), values).expect("consistent shape");
        let y = Array1::from_vec(manifest.y.clone());
        let alpha = if n == 0 {
            Array1::zeros(0)
        } else {
            cholesky_solve(&chol.view(), &y.view())
        };
        // K = L L^T - noise I
        let mut kxx = chol.dot(&chol.t());
        for i in 0..n {
            kxx[[i, i]] -= manifest.noise_var;
        }
        Ok(GpPosterior {
            spec: manifest.spec,
            x: x.to_owned(),
            y,
            noise_var: manifest.noise_var,
            kxx,
            chol,
            alpha,
            psd_clamp: 0.0,
        })
    }
}

/// KL(N(m, Q) || N(0, P)) given Cholesky factors of P and Q.
fn gaussian_kl_terms(
    mean: &Array1<f64>,
    q: &Array2<f64>,
    p_chol: &ArrayView2<f64>,
    q_chol: &ArrayView2<f64>,
    n: usize,
) -> f64 {
    // tr(P^-1 Q) = sum_j e_j' P^-1 Q e_j via solves against Q's columns
    let mut trace = 0.0;
    for j in 0..n {
        let col = q.column(j).to_owned();
        let sol = cholesky_solve(p_chol, &col.view());
        trace += sol[j];
    }
    let w = solve_lower(p_chol, &mean.view());
    let maha = w.dot(&w);
    0.5 * (trace + maha - n as f64 + log_det_from_cholesky(p_chol)
        - log_det_from_cholesky(q_chol))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorManifest {
    pub spec: KernelSpec,
    pub noise_var: f64,
    pub n: usize,
    pub dim: usize,
    pub x_hash: u64,
    pub y: Vec<f64>,
}

/// Shared CSV layout for per-point predictions: `x_0..x_{d-1},mean,sigma`.
pub fn write_prediction_csv<W: Write>(
    xs: &ArrayView2<f64>,
    mean: &ArrayView1<f64>,
    sd: &ArrayView1<f64>,
    writer: W,
) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..xs.ncols()).map(|j| format!("x_{j}")).collect();
    header.push("mean".into());
    header.push("sigma".into());
    w.write_record(&header)?;
    for i in 0..xs.nrows() {
        let mut rec: Vec<String> = xs.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(mean[i].to_string());
        rec.push(sd[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_gmm;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar_posterior(y: f64) -> GpPosterior {
        let x = array![[0.0]];
        let ya = array![y];
        fit(&KernelSpec::rbf(1.0), &x.view(), &ya.view(), 0.02).unwrap()
    }

    #[test]
    fn scalar_fit_alpha() {
        let post = scalar_posterior(1.0);
        assert_abs_diff_eq!(post.alpha[0], 1.0 / 1.02, epsilon = 1e-12);
    }

    #[test]
    fn zero_targets_zero_mean() {
        let ds = gen_gmm(0, 10).unwrap();
        let zeros = Array1::zeros(10);
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &zeros.view(), 0.02).unwrap();
        assert!(post.alpha.iter().all(|&a| a.abs() < 1e-12));
        let pred = post.predict(&ds.x.view()).unwrap();
        assert!(pred.mean.iter().all(|&m| m.abs() < 1e-12));
    }

    #[test]
    fn gmm_fit_succeeds() {
        let ds = gen_gmm(0, 20).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 0.02).unwrap();
        assert_eq!(post.len(), 20);
    }

    #[test]
    fn scalar_predict_at_training_point() {
        let post = scalar_posterior(1.0);
        let xs = array![[0.0]];
        let pred = post.predict(&xs.view()).unwrap();
        assert_abs_diff_eq!(pred.mean[0], 0.9803921568627451, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pred.sd[0] * pred.sd[0],
            0.0196078431372549,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_posterior_returns_prior() {
        let x = Array2::<f64>::zeros((0, 2));
        let y = Array1::<f64>::zeros(0);
        let post = fit(&KernelSpec::rbf(1.0), &x.view(), &y.view(), 0.02).unwrap();
        let xs = array![[0.3, -0.7], [2.0, 2.0]];
        let pred = post.predict(&xs.view()).unwrap();
        assert_eq!(pred.mean, array![0.0, 0.0]);
        assert_abs_diff_eq!(pred.sd[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.log_marginal_likelihood(), 0.0);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let ds = gen_gmm(0, 20).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 0.02).unwrap();
        let xs = array![[500.0, -500.0]];
        let pred = post.predict(&xs.view()).unwrap();
        assert!(pred.mean[0].abs() < 1e-10);
        assert_abs_diff_eq!(pred.sd[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lml_scalar_value() {
        let post = scalar_posterior(0.0);
        assert_abs_diff_eq!(
            post.log_marginal_likelihood(),
            -0.9288398468527626,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lml_duplicate_increase_is_bounded() {
        // adding a duplicate point contributes log p(y_dup | D), which is
        // at most the peak log density -1/2 log(2 pi noise)
        let noise = 0.02f64;
        let bound = -0.5 * (2.0 * std::f64::consts::PI * noise).ln();
        for n in 2..=5usize {
            let ds = gen_gmm(n as u64, 2 * ((n + 1) / 2)).unwrap();
            let take = n.min(ds.len());
            let x = ds.x.slice(s![..take, ..]).to_owned();
            let y = ds.y.slice(s![..take]).to_owned();
            let base = fit(&KernelSpec::rbf(1.0), &x.view(), &y.view(), noise).unwrap();
            let mut x_dup = Array2::zeros((take + 1, 2));
            x_dup.slice_mut(s![..take, ..]).assign(&x);
            x_dup.row_mut(take).assign(&x.row(0));
            let mut y_dup = Array1::zeros(take + 1);
            y_dup.slice_mut(s![..take]).assign(&y);
            y_dup[take] = y[0];
            let extended =
                fit(&KernelSpec::rbf(1.0), &x_dup.view(), &y_dup.view(), noise).unwrap();
            let gain = extended.log_marginal_likelihood() - base.log_marginal_likelihood();
            assert!(gain <= bound + 1e-9, "gain {gain} exceeds bound {bound}");
        }
    }

    #[test]
    fn lml_invariant_to_permutation() {
        let ds = gen_gmm(2, 12).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 0.02).unwrap();
        let perm: Vec<usize> = vec![5, 0, 11, 3, 8, 1, 10, 2, 7, 4, 9, 6];
        let xp = ds.x.select(ndarray::Axis(0), &perm);
        let yp = Array1::from_iter(perm.iter().map(|&i| ds.y[i]));
        let post_p = fit(&KernelSpec::rbf(1.0), &xp.view(), &yp.view(), 0.02).unwrap();
        assert_abs_diff_eq!(
            post.log_marginal_likelihood(),
            post_p.log_marginal_likelihood(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn kl_scalar_value() {
        let post = scalar_posterior(1.0);
        assert_abs_diff_eq!(
            post.kl_posterior_prior().unwrap(),
            1.956301128549783,
            epsilon = 1e-6
        );
    }

    #[test]
    fn kl_vanishes_for_huge_noise() {
        let ds = gen_gmm(0, 10).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 1e8).unwrap();
        let kl = post.kl_posterior_prior().unwrap();
        assert!(kl >= -1e-9, "kl {kl}");
        assert!(kl < 1e-3, "kl {kl}");
        let klp = post.kl_predictive_prior().unwrap();
        assert!(klp >= -1e-9 && klp < 1e-3, "kl pred {klp}");
    }

    #[test]
    fn variance_decomposition_identity() {
        let ds = gen_gmm(4, 16).unwrap();
        for spec in [
            KernelSpec::rbf(1.0),
            KernelSpec::ess_default(),
            KernelSpec::NngpRelu {
                depth: 2,
                weight_var: 1.0,
                bias_var: 1.0,
            },
            KernelSpec::NngpErf {
                depth: 1,
                weight_var: 1.0,
                bias_var: 1.0,
            },
            KernelSpec::NngpCosine1l {
                weight_var: 1.0,
                bias_var: 1.0,
            },
            KernelSpec::NngpRbfNet1l {
                weight_var: 200.0,
                bias_var: 1.0,
                unit_var: 1.0,
                center_var: 1.0,
            },
        ] {
            let post = fit(&spec, &ds.x.view(), &ds.y.view(), 0.02).unwrap();
            let xs = array![[0.5, -1.5], [3.0, 3.0], [-4.0, 2.0]];
            let pred = post.predict(&xs.view()).unwrap();
            for (i, row) in xs.rows().into_iter().enumerate() {
                let dec = post.variance_decomposition(&row).unwrap();
                let var = pred.sd[i] * pred.sd[i];
                assert_abs_diff_eq!(dec.prior_term - dec.data_term, var, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn variance_decomposition_far_field_and_scalar() {
        let ds = gen_gmm(0, 20).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 0.02).unwrap();
        let far = array![300.0, -250.0];
        let dec = post.variance_decomposition(&far.view()).unwrap();
        assert!(dec.data_term.abs() < 1e-6);
        // n = 1: beta_1 = k / (k + noise)
        let post1 = scalar_posterior(1.0);
        let here = array![0.0];
        let dec1 = post1.variance_decomposition(&here.view()).unwrap();
        assert_abs_diff_eq!(dec1.weights[0], 1.0 / 1.02, epsilon = 1e-12);
    }

    #[test]
    fn variance_never_exceeds_prior() {
        let ds = gen_gmm(6, 20).unwrap();
        let post = fit(
            &KernelSpec::NngpRelu {
                depth: 2,
                weight_var: 1.0,
                bias_var: 1.0,
            },
            &ds.x.view(),
            &ds.y.view(),
            0.02,
        )
        .unwrap();
        let mut stream = crate::rng::Stream::new(99);
        for _ in 0..50 {
            let p = array![stream.uniform(-8.0, 8.0), stream.uniform(-8.0, 8.0)];
            let xs = p.clone().insert_axis(ndarray::Axis(0));
            let pred = post.predict(&xs.view()).unwrap();
            let prior = post.spec.eval(&p.view(), &p.view()).unwrap();
            assert!(pred.sd[0] * pred.sd[0] <= prior + 1e-8);
        }
    }

    #[test]
    fn near_exact_interpolation_at_tiny_noise() {
        let ds = gen_gmm(7, 12).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 1e-8).unwrap();
        let pred = post.predict(&ds.x.view()).unwrap();
        for (m, y) in pred.mean.iter().zip(ds.y.iter()) {
            assert!((m - y).abs() < 1e-4, "interpolation residual {}", (m - y).abs());
        }
    }

    #[test]
    fn cache_round_trip() {
        let ds = gen_gmm(9, 10).unwrap();
        let post = fit(&KernelSpec::rbf(1.0), &ds.x.view(), &ds.y.view(), 0.02).unwrap();
        let mut chol_bytes = Vec::new();
        let mut manifest_bytes = Vec::new();
        post.write_cache(&mut chol_bytes, &mut manifest_bytes).unwrap();
        let manifest: PosteriorManifest = serde_json::from_slice(&manifest_bytes).unwrap();
        let back = GpPosterior::from_cache(&ds.x.view(), &manifest, &chol_bytes).unwrap();
        let xs = array![[0.1, 0.4]];
        let a = post.predict(&xs.view()).unwrap();
        let b = back.predict(&xs.view()).unwrap();
        assert_abs_diff_eq!(a.mean[0], b.mean[0], epsilon = 1e-10);
        assert_abs_diff_eq!(a.sd[0], b.sd[0], epsilon = 1e-10);
        // wrong inputs rejected
        let other = gen_gmm(10, 10).unwrap();
        assert!(GpPosterior::from_cache(&other.x.view(), &manifest, &chol_bytes).is_err());
    }
}
