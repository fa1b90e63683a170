//! Multi-start maximum likelihood: screening, continuation, saddle checks and
//! standard errors.

use nalgebra::{Cholesky, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{analyze_information, InformationSummary, Likelihood, SampleMoments, ThetaLayout};
use crate::linalg::{derive_seed, min_eigenvalue, serde_mat, serde_vector, sym_norm2, symmetrize, unvec, Mat, Vector};
use crate::model::{coefficient_matrices, rrmar_to_pseudo, Dims, MatrixSeries, PseudoStructParams, RRMarParams};
use crate::optim::{maximize, BfgsOptions, BfgsResult};
use crate::stats::normal_quantile;

/// How the starting points are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every start is random.
    Random,
    /// Start 0 is the alternating least-squares estimate, the others jittered copies.
    RrmarWarm,
    /// Start 0 is the warm start; odd ids are jittered copies, even ids random.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Number of initializations `K`.
    pub n_starts: usize,
    /// Starts continued after screening, `L`.
    pub keep: usize,
    pub screen_iters: usize,
    /// Stop when the log-likelihood changes by less than this between iterations.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Standard deviation of random and jittered factor coordinates.
    pub start_scale: f64,
    /// Alternating least-squares sweeps for the warm start.
    pub als_sweeps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 100,
            keep: 10,
            screen_iters: 5,
            tol: 1e-10,
            max_iters: 1000,
            seed: 0,
            init_mode: InitMode::Mixed,
            start_scale: 0.1,
            als_sweeps: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep == 0 || self.keep > self.n_starts {
            return Err(Error::Config(format!(
                "keep must lie in 1..={} (n_starts), got {}",
                self.n_starts, self.keep
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.start_scale >= 0.0 && self.start_scale.is_finite()) {
            return Err(Error::Config(format!("start_scale must be finite and nonnegative, got {}", self.start_scale)));
        }
        Ok(())
    }

    /// Same settings with a different start budget.
    pub fn with_budget(&self, n_starts: usize, keep: usize) -> Self {
        Self { n_starts, keep, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Warm,
    Jittered,
    Random,
    /// Passed in by the caller, e.g. a solution of a nested model.
    Supplied,
}

/// What happened to one starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub id: usize,
    pub kind: StartKind,
    pub screen_loglik: Option<f64>,
    pub continued: bool,
    pub loglik: Option<f64>,
    /// `‖g‖_∞` at the end of the run, in standardized units.
    pub grad_norm: Option<f64>,
    pub iterations: usize,
    /// Passed the gradient acceptance test.
    pub converged: bool,
    pub line_search_failed: bool,
    pub saddle: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Euclidean norm of the gradient at the estimate.
    pub grad_norm: f64,
    pub grad_inf_norm: f64,
    /// Smallest eigenvalue of the gauge-projected observed information.
    pub hessian_min_eig: f64,
    pub hessian_norm: f64,
    pub n_starts_converged: usize,
    pub chosen_start_id: usize,
    pub saddle_flag: bool,
    pub warm_start_available: bool,
    /// Standard deviation used to standardize the data during optimization.
    pub data_scale: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub dims: Dims,
    /// Observations entering the likelihood.
    pub n_obs: usize,
    /// Index of the first observation used as a left-hand side.
    pub sample_start: usize,
    #[serde(with = "serde_vector")]
    pub theta_hat: Vector,
    pub params: PseudoStructParams,
    pub loglik: f64,
    /// Observed information in θ coordinates.
    #[serde(with = "serde_mat")]
    pub info: Mat,
    /// Covariance of θ̂ with the lag-factor gauge removed; NaN where unavailable.
    #[serde(with = "serde_mat")]
    pub covariance: Mat,
    #[serde(with = "serde_mat")]
    pub se_delta: Mat,
    #[serde(with = "serde_mat")]
    pub se_gamma: Mat,
    pub diagnostics: FitDiagnostics,
    pub starts: Vec<StartDiagnostic>,
}

impl FitResult {
    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout::new(self.dims).expect("dims of a fitted model are valid")
    }

    /// Stacked coefficient `[A_1 … A_p]`.
    pub fn coefficient(&self) -> Mat {
        hcat(&self.params.coefficients())
    }

    /// Covariance entry between two θ coordinates.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[(i, j)]
    }
}

/// Gradient acceptance: `‖g‖_∞ ≤ 1e-4 (1 + |ℓ|)`.
pub fn gradient_acceptable(grad_inf: f64, loglik: f64) -> bool {
    grad_inf.is_finite() && grad_inf <= 1e-4 * (1.0 + loglik.abs())
}

const TIE_TOL: f64 = 1e-8;
const POLISH_RESTARTS: usize = 2;

pub fn fit(series: &MatrixSeries, dims: Dims, config: &FitConfig) -> Result<FitResult> {
    fit_from(series, dims, config, dims.p, &[])
}

/// Fits on observations `sample_start..T` (so models with different lag orders can share
/// a sample) and adds `extra` as additional starts that always survive screening.
pub fn fit_from(
    series: &MatrixSeries,
    dims: Dims,
    config: &FitConfig,
    sample_start: usize,
    extra: &[PseudoStructParams],
) -> Result<FitResult> {
    config.validate()?;
    dims.validate()?;
    if series.n1() != dims.n1 || series.n2() != dims.n2 {
        return Err(Error::InvalidDims(format!(
            "series is {}x{} but the model is {}x{}",
            series.n1(),
            series.n2(),
            dims.n1,
            dims.n2
        )));
    }
    let raw = Likelihood::with_start(series, dims, sample_start)?;
    let mut warnings = vec![];
    let n = raw.n_obs();
    if n <= dims.p * dims.n() {
        let msg = format!(
            "only {n} observations for {} lagged regressors per equation; estimates may be unreliable",
            dims.p * dims.n()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let syy = raw.moments().syy();
    if min_eigenvalue(syy) <= 1e-12 * sym_norm2(syy) {
        let msg = "sample covariance of the data is singular; the data may be degenerate".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    // The optimizer works on data scaled to unit average variance.
    let scale = (syy.trace() / (n * dims.n()) as f64).sqrt();
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let series = &MatrixSeries::new(series.observations().iter().map(|y| y / scale).collect())?;
    let lik = Likelihood::with_start(series, dims, sample_start)?;
    let layout = lik.layout().clone();

    let warm = match config.init_mode {
        InitMode::Random => None,
        _ => match warm_start(series, dims, sample_start, config.als_sweeps)
            .and_then(|p| layout.pack(&p))
            .and_then(|t| lik.value(&t).map(|_| t))
        {
            Ok(t) => Some(t),
            Err(e) => {
                log::debug!("warm start unavailable: {e}");
                None
            }
        },
    };
    let mut starts: Vec<(StartKind, Result<Vector>)> = (0..config.n_starts)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[id as u64]));
            let kind = start_kind(config.init_mode, id, warm.is_some());
            let theta = match kind {
                StartKind::Warm => Ok(warm.clone().expect("warm start present")),
                StartKind::Jittered => {
                    let mut t = warm.clone().expect("warm start present");
                    for i in layout.factor_range() {
                        t[i] += config.start_scale * rng.sample::<f64, _>(StandardNormal);
                    }
                    Ok(t)
                }
                _ => random_start(&layout, config.start_scale, &mut rng),
            };
            (kind, theta)
        })
        .collect();
    for p in extra {
        let mut p = p.clone();
        p.sigma2 /= scale * scale;
        starts.push((StartKind::Supplied, layout.pack(&p)));
    }

    let objective = |x: &Vector| lik.value_and_gradient(x);
    let screen_opts = BfgsOptions { max_iters: config.screen_iters, tol: config.tol, ..Default::default() };
    let screened: Vec<Result<BfgsResult>> = starts
        .par_iter()
        .map(|(_, t)| match t {
            Ok(t) => maximize(objective, t, &screen_opts),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        })
        .collect();

    let mut diags: Vec<StartDiagnostic> = starts
        .iter()
        .zip(&screened)
        .enumerate()
        .map(|(id, ((kind, _), res))| StartDiagnostic {
            id,
            kind: *kind,
            screen_loglik: res.as_ref().ok().map(|r| r.value),
            continued: false,
            loglik: None,
            grad_norm: res.as_ref().ok().map(|r| r.grad_inf_norm()),
            iterations: res.as_ref().map_or(0, |r| r.iterations),
            converged: false,
            line_search_failed: res.as_ref().is_ok_and(|r| r.line_search_failed),
            saddle: None,
            error: res.as_ref().err().map(|e| e.to_string()),
        })
        .collect();

    let mut order: Vec<usize> = (0..config.n_starts).filter(|&i| screened[i].is_ok()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (diags[a].screen_loglik.unwrap(), diags[b].screen_loglik.unwrap());
        vb.total_cmp(&va).then(a.cmp(&b))
    });
    order.truncate(config.keep);
    order.extend((config.n_starts..starts.len()).filter(|&i| screened[i].is_ok()));

    let cont_opts = BfgsOptions {
        max_iters: config.max_iters.saturating_sub(config.screen_iters).max(1),
        tol: config.tol,
        ..Default::default()
    };
    let continued: Vec<(usize, Result<BfgsResult>)> = order
        .par_iter()
        .map(|&id| {
            let s = screened[id].as_ref().expect("screened ok");
            (id, continue_run(objective, s, &cont_opts))
        })
        .collect();

    let mut candidates = vec![];
    for (id, res) in continued {
        let d = &mut diags[id];
        d.continued = true;
        match res {
            Ok(r) => {
                d.loglik = Some(r.value);
                d.grad_norm = Some(r.grad_inf_norm());
                d.iterations += r.iterations;
                d.line_search_failed = r.line_search_failed;
                d.converged = gradient_acceptable(r.grad_inf_norm(), r.value);
                if d.converged {
                    candidates.push((id, r));
                }
            }
            Err(e) => d.error = Some(e.to_string()),
        }
    }
    // Report start log-likelihoods in the original units.
    let shift = -((n * dims.n()) as f64) * scale.ln();
    for d in diags.iter_mut() {
        d.screen_loglik = d.screen_loglik.map(|v| v + shift);
        d.loglik = d.loglik.map(|v| v + shift);
    }
    let n_converged = candidates.len();
    if candidates.is_empty() {
        return Err(Error::EstimationFailed {
            message: format!("none of the {} continued starts met the gradient criterion", order.len()),
            starts: diags,
        });
    }
    rank_candidates(&mut candidates);

    let mut chosen: Option<(usize, Vector, InformationSummary)> = None;
    let mut first: Option<(usize, Vector, InformationSummary)> = None;
    for (id, r) in &candidates {
        let theta = canonical_theta(&layout, &r.x)?;
        let info = match lik.observed_information(&theta) {
            Ok(i) => i,
            Err(e) => {
                diags[*id].error = Some(e.to_string());
                continue;
            }
        };
        let summary = analyze_information(&info, &layout.gauge_directions(&theta));
        diags[*id].saddle = Some(summary.saddle);
        if !summary.saddle {
            chosen = Some((*id, theta, summary));
            break;
        }
        if first.is_none() {
            first = Some((*id, theta, summary));
        }
    }
    let (id, theta, summary) = match (chosen, first) {
        (Some(c), _) => c,
        (None, Some(f)) => {
            let msg = "every converged candidate is a saddle point; reporting the best one".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
            f
        }
        (None, None) => {
            return Err(Error::EstimationFailed {
                message: "observed information unavailable at every candidate".into(),
                starts: diags,
            })
        }
    };

    // Back to the original units: only Σ2 carries the scale, and only the off-diagonal
    // entries of its Cholesky factor change (log-diagonals shift by a constant).
    let mut params = layout.unpack(&theta)?;
    params.sigma2 *= scale * scale;
    let theta = layout.pack(&params)?;
    let (value, grad) = raw.value_and_gradient(&theta)?;
    let mut jac = Vector::from_element(layout.len(), 1.0);
    let mut k = layout.sigma2_range().start;
    for i in 0..dims.n2 {
        for j in 0..=i {
            if i != j {
                jac[k] = scale;
            }
            k += 1;
        }
    }
    let info = Mat::from_fn(jac.len(), jac.len(), |i, j| summary.info[(i, j)] / (jac[i] * jac[j]));
    let cov = Mat::from_fn(jac.len(), jac.len(), |i, j| summary.covariance[(i, j)] * jac[i] * jac[j]);
    let se = |i: usize| {
        let v = cov[(i, i)];
        if v.is_finite() {
            v.max(0.0).sqrt()
        } else {
            f64::NAN
        }
    };
    let (r1, r2) = (dims.r1, dims.r2);
    let se_delta = Mat::from_fn(r1, dims.n1 - r1, |i, k| se(layout.delta_index(i, k)));
    let se_gamma = Mat::from_fn(r2, dims.n2 - r2, |i, k| se(layout.gamma_index(i, k)));
    Ok(FitResult {
        dims,
        n_obs: n,
        sample_start,
        theta_hat: theta,
        params,
        loglik: value,
        info,
        covariance: cov,
        se_delta,
        se_gamma,
        diagnostics: FitDiagnostics {
            grad_norm: grad.norm(),
            grad_inf_norm: grad.amax(),
            hessian_min_eig: summary.min_eig,
            hessian_norm: summary.norm,
            n_starts_converged: n_converged,
            chosen_start_id: id,
            saddle_flag: summary.saddle,
            warm_start_available: warm.is_some(),
            data_scale: scale,
            warnings,
        },
        starts: diags,
    })
}

fn start_kind(mode: InitMode, id: usize, warm: bool) -> StartKind {
    if !warm {
        return StartKind::Random;
    }
    match (mode, id) {
        (InitMode::Random, _) => StartKind::Random,
        (_, 0) => StartKind::Warm,
        (InitMode::RrmarWarm, _) => StartKind::Jittered,
        (InitMode::Mixed, i) if i % 2 == 1 => StartKind::Jittered,
        (InitMode::Mixed, _) => StartKind::Random,
    }
}

/// Factor coordinates `scale · N(0, 1)`, covariances at the identity.
fn random_start(layout: &ThetaLayout, scale: f64, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let d = layout.dims();
    let params = PseudoStructParams {
        delta_star: Mat::zeros(d.r1, d.n1 - d.r1),
        gamma_star: Mat::zeros(d.r2, d.n2 - d.r2),
        u3: vec![Mat::zeros(d.n1, d.r1); d.p],
        u4: vec![Mat::zeros(d.n2, d.r2); d.p],
        sigma1: Mat::identity(d.n1, d.n1),
        sigma2: Mat::identity(d.n2, d.n2),
    };
    let mut theta = layout.pack(&params)?;
    for i in layout.factor_range() {
        theta[i] = scale * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(theta)
}

/// Runs to convergence from a screened point, restarting the quasi-Newton memory a few
/// times if the run stalls short of the gradient criterion.
fn continue_run<F>(mut f: F, screened: &BfgsResult, opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
{
    let mut best = maximize(&mut f, &screened.x, opts)?;
    let mut used = best.iterations;
    for _ in 0..POLISH_RESTARTS {
        if gradient_acceptable(best.grad_inf_norm(), best.value) || used >= opts.max_iters {
            break;
        }
        let more = BfgsOptions { max_iters: opts.max_iters - used, ..*opts };
        let next = maximize(&mut f, &best.x, &more)?;
        used += next.iterations;
        let progressed = next.value >= best.value;
        let iterations = best.iterations + next.iterations;
        let evaluations = best.evaluations + next.evaluations;
        if progressed {
            best = next;
        }
        best.iterations = iterations;
        best.evaluations = evaluations;
        if !progressed {
            break;
        }
    }
    Ok(best)
}

/// Orders candidates by log-likelihood; values within `TIE_TOL` of the best go to the
/// smallest gradient norm, then the smallest start id.
fn rank_candidates(c: &mut [(usize, BfgsResult)]) {
    c.sort_by(|a, b| b.1.value.total_cmp(&a.1.value).then(a.0.cmp(&b.0)));
    let top = c[0].1.value;
    let ties = c.iter().take_while(|(_, r)| top - r.value <= TIE_TOL).count();
    c[..ties].sort_by(|a, b| a.1.grad_inf_norm().total_cmp(&b.1.grad_inf_norm()).then(a.0.cmp(&b.0)));
}

fn canonical_theta(layout: &ThetaLayout, theta: &Vector) -> Result<Vector> {
    let mut p = layout.unpack(theta)?;
    p.canonicalize_lags();
    layout.pack(&p)
}

pub(crate) fn hcat(ms: &[Mat]) -> Mat {
    let rows = ms.first().map_or(0, |m| m.nrows());
    let cols: usize = ms.iter().map(|m| m.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for m in ms {
        out.columns_mut(at, m.ncols()).copy_from(m);
        at += m.ncols();
    }
    out
}

/// Closest Kronecker product `B ⊗ C` (in Frobenius norm) to an `N1N2 × N1N2` matrix,
/// with `B` of size `N2 × N2` and `C` of size `N1 × N1`.
pub fn nearest_kronecker(a: &Mat, n1: usize, n2: usize) -> (Mat, Mat) {
    // R[vec(B) index, vec(C) index] = B[b, c] C[i, k].
    let mut r = Mat::zeros(n2 * n2, n1 * n1);
    for c in 0..n2 {
        for b in 0..n2 {
            for k in 0..n1 {
                for i in 0..n1 {
                    r[(c * n2 + b, k * n1 + i)] = a[(b * n1 + i, c * n1 + k)];
                }
            }
        }
    }
    let svd = SVD::new(r, true, true);
    let s = svd.singular_values[0].sqrt();
    let u = svd.u.expect("requested").column(0) * s;
    let v = svd.v_t.expect("requested").row(0).transpose() * s;
    (unvec(&u, n2, n2).expect("sizes match"), unvec(&v, n1, n1).expect("sizes match"))
}

fn leading_left_vectors(m: &Mat, r: usize) -> Mat {
    let svd = SVD::new(m.clone(), true, false);
    svd.u.expect("requested").columns(0, r).into_owned()
}

fn spd_solve(m: &Mat, rhs: &Mat) -> Option<Mat> {
    let reg = m.trace().abs() / m.nrows().max(1) as f64 * 1e-12;
    let mut mm = symmetrize(m);
    for i in 0..mm.nrows() {
        mm[(i, i)] += reg;
    }
    Cholesky::new(mm).map(|c| c.solve(rhs))
}

/// One alternating least-squares pass for `Y_t ≈ L Σ_j L_jᵀ Y_{t-j} R_j Rᵀ`, updating `L`
/// and then all `L_j` jointly with `R`, `R_j` held fixed.
fn als_half(ys: &[Mat], start: usize, left: &mut Mat, lag_l: &mut [Mat], right: &Mat, lag_r: &[Mat]) {
    let p = lag_l.len();
    let (n1, r1) = (left.nrows(), left.ncols());
    let mut syz = Mat::zeros(n1, r1);
    let mut szz = Mat::zeros(r1, r1);
    let lagged: Vec<Vec<Mat>> = (start..ys.len())
        .map(|t| (0..p).map(|j| &ys[t - 1 - j] * &lag_r[j] * right.transpose()).collect())
        .collect();
    for (t, v) in (start..ys.len()).zip(&lagged) {
        let mut z = Mat::zeros(r1, ys[t].ncols());
        for j in 0..p {
            z += lag_l[j].transpose() * &v[j];
        }
        syz += &ys[t] * z.transpose();
        szz += &z * z.transpose();
    }
    if let Some(sol) = spd_solve(&szz, &syz.transpose()) {
        *left = sol.transpose();
    }
    let Some(proj) = spd_solve(&(left.transpose() * &*left), &left.transpose()) else {
        return;
    };
    let mut smv = Mat::zeros(r1, p * n1);
    let mut svv = Mat::zeros(p * n1, p * n1);
    for (t, v) in (start..ys.len()).zip(&lagged) {
        let m = &proj * &ys[t];
        let stacked = vcat(v);
        smv += m * stacked.transpose();
        svv += &stacked * stacked.transpose();
    }
    if let Some(g) = spd_solve(&svv, &smv.transpose()) {
        for (j, lj) in lag_l.iter_mut().enumerate() {
            *lj = g.rows(j * n1, n1).into_owned();
        }
    }
}

fn vcat(ms: &[Mat]) -> Mat {
    let cols = ms.first().map_or(0, |m| m.ncols());
    let rows: usize = ms.iter().map(|m| m.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for m in ms {
        out.rows_mut(at, m.nrows()).copy_from(m);
        at += m.nrows();
    }
    out
}

/// Maximum-likelihood `(Σ1, Σ2)` for a fixed coefficient, by alternating the two
/// closed-form updates. `Σ1[0,0] = 1`.
pub fn kronecker_covariance(moments: &SampleMoments, a: &Mat, n1: usize, n2: usize, iters: usize) -> Result<(Mat, Mat)> {
    let s = moments.residual_moment(a);
    let n = moments.n_obs() as f64;
    let block = |b: usize, c: usize| s.view((b * n1, c * n1), (n1, n1));
    let mut s1 = Mat::identity(n1, n1);
    let mut s2 = Mat::identity(n2, n2);
    for _ in 0..iters.max(1) {
        let s2inv = spd_solve(&s2, &Mat::identity(n2, n2)).ok_or(Error::NotPositiveDefinite("sigma2"))?;
        let mut w1 = Mat::zeros(n1, n1);
        for b in 0..n2 {
            for c in 0..n2 {
                w1 += block(b, c) * s2inv[(b, c)];
            }
        }
        s1 = symmetrize(&(w1 / (n * n2 as f64)));
        let s1inv = spd_solve(&s1, &Mat::identity(n1, n1)).ok_or(Error::NotPositiveDefinite("sigma1"))?;
        s2 = symmetrize(&Mat::from_fn(n2, n2, |b, c| (&s1inv * block(c, b)).trace() / (n * n1 as f64)));
    }
    ThetaLayout::normalize_covariances(&s1, &s2)
}

/// Reduced-rank starting value: least squares, a nearest-Kronecker split of each lag,
/// truncation to the requested ranks, a few alternating least-squares sweeps and the
/// covariance updates, then rotation to the pseudo-structural form.
pub fn warm_start(series: &MatrixSeries, dims: Dims, sample_start: usize, sweeps: usize) -> Result<PseudoStructParams> {
    let Dims { n1, n2, r1, r2, p } = dims;
    let moments = SampleMoments::with_start(series, p, sample_start)?;
    let a = moments.ols()?;
    let n = n1 * n2;
    let (mut bs, mut cs) = (vec![], vec![]);
    for j in 0..p {
        let (b, c) = nearest_kronecker(&a.columns(j * n, n).into_owned(), n1, n2);
        bs.push(b);
        cs.push(c);
    }
    let mut u1 = leading_left_vectors(&hcat(&cs), r1);
    let mut u2 = leading_left_vectors(&hcat(&bs), r2);
    let mut u3: Vec<Mat> = cs.iter().map(|c| c.transpose() * &u1).collect();
    let mut u4: Vec<Mat> = bs.iter().map(|b| b.transpose() * &u2).collect();
    let ys = series.observations();
    let yt: Vec<Mat> = ys.iter().map(|y| y.transpose()).collect();
    for _ in 0..sweeps {
        als_half(ys, sample_start, &mut u1, &mut u3, &u2, &u4);
        als_half(&yt, sample_start, &mut u2, &mut u4, &u1, &u3);
    }
    let coef = hcat(&coefficient_matrices(&u1, &u2, &u3, &u4));
    let (sigma1, sigma2) = kronecker_covariance(&moments, &coef, n1, n2, 20)?;
    let mut pseudo = rrmar_to_pseudo(&RRMarParams { u1, u2, u3, u4, sigma1, sigma2 })?;
    pseudo.canonicalize_lags();
    Ok(pseudo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Delta,
    Gamma,
}

/// Confidence interval for one entry of `δ*` or `γ*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub block: Block,
    pub row: usize,
    pub col: usize,
    pub estimate: f64,
    /// `None` when the information matrix does not identify this coordinate.
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Interval {
    pub fn contains(&self, x: f64) -> Option<bool> {
        Some(self.lower? <= x && x <= self.upper?)
    }

    pub fn width(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }
}

/// Wald intervals `estimate ± z SE` at the given level for every entry of `δ*` (row-major)
/// followed by every entry of `γ*`.
pub fn confidence_intervals(fit: &FitResult, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    let mut out = vec![];
    let mut push = |block, est: &Mat, se: &Mat| {
        for i in 0..est.nrows() {
            for k in 0..est.ncols() {
                let s = se[(i, k)];
                let e = est[(i, k)];
                let se = s.is_finite().then_some(s);
                out.push(Interval {
                    block,
                    row: i,
                    col: k,
                    estimate: e,
                    se,
                    lower: se.map(|s| e - z * s),
                    upper: se.map(|s| e + z * s),
                });
            }
        }
    };
    push(Block::Delta, &fit.params.delta_star, &fit.se_delta);
    push(Block::Gamma, &fit.params.gamma_star, &fit.se_gamma);
    Ok(out)
}
