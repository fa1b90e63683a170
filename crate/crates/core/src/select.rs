//! Rank and lag selection by AIC and BIC over a grid of candidate models.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_from, FitConfig, FitResult};
use crate::linalg::{derive_seed, Mat};
use crate::model::{pseudo_to_reduced, rrmar_to_pseudo, Dims, MatrixSeries, PseudoStructParams};

/// Number of factor parameters `r1 N1 (1 + p) - r1² + r2 N2 (1 + p) - r2²`.
pub fn phi(r1: usize, r2: usize, n1: usize, n2: usize, p: usize) -> usize {
    r1 * n1 * (1 + p) - r1 * r1 + r2 * n2 * (1 + p) - r2 * r2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    /// Penalty per parameter: 2 for AIC, `ln T` for BIC.
    pub fn penalty(self, t: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0,
            Criterion::Bic => (t as f64).ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            _ => Err(Error::InvalidArgument(format!("unknown criterion '{s}', expected aic or bic"))),
        }
    }
}

/// `-2 ℓ + c_T φ(r1, r2)`.
#[allow(clippy::too_many_arguments)]
pub fn information_criterion(
    loglik: f64,
    r1: usize,
    r2: usize,
    p: usize,
    n1: usize,
    n2: usize,
    t: usize,
    kind: Criterion,
) -> f64 {
    -2.0 * loglik + kind.penalty(t) * phi(r1, r2, n1, n2, p) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Inclusive row-rank range; `None` means `1..=N1`.
    pub r1: Option<(usize, usize)>,
    pub r2: Option<(usize, usize)>,
    /// Inclusive lag range.
    pub lags: (usize, usize),
    /// Start budget for each grid cell.
    pub fit: FitConfig,
    /// Loglik shortfall against a nested cell that triggers a repair refit.
    pub nesting_tol: f64,
    pub repair: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            r1: None,
            r2: None,
            lags: (1, 3),
            fit: FitConfig { n_starts: 40, keep: 5, ..FitConfig::default() },
            nesting_tol: 1e-4,
            repair: true,
        }
    }
}

impl SelectionConfig {
    pub fn ranges(&self, n1: usize, n2: usize) -> Result<[(usize, usize); 3]> {
        let r1 = self.r1.unwrap_or((1, n1));
        let r2 = self.r2.unwrap_or((1, n2));
        for (name, (lo, hi), max) in [("r1", r1, n1), ("r2", r2, n2), ("lags", self.lags, usize::MAX)] {
            if lo == 0 || lo > hi || hi > max {
                return Err(Error::InvalidArgument(format!("{name} range {lo}..={hi} is empty or out of bounds")));
            }
        }
        Ok([r1, r2, self.lags])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub r1: usize,
    pub r2: usize,
    pub p: usize,
    pub loglik: Option<f64>,
    pub phi: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    /// Fit succeeded without a saddle flag and respects nesting.
    pub converged: bool,
    pub saddle: bool,
    pub repaired: bool,
    pub nesting_violation: bool,
    pub error: Option<String>,
}

impl GridEntry {
    pub fn value(&self, kind: Criterion) -> Option<f64> {
        match kind {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }

    pub fn key(&self) -> (usize, usize, usize) {
        (self.r1, self.r2, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub n1: usize,
    pub n2: usize,
    /// Series length, used for the BIC penalty.
    pub t: usize,
    /// Observations entering every likelihood (common sample).
    pub n_obs: usize,
    pub entries: Vec<GridEntry>,
    pub argmin_aic: Option<(usize, usize, usize)>,
    pub argmin_bic: Option<(usize, usize, usize)>,
}

impl SelectionGrid {
    pub fn argmin(&self, kind: Criterion) -> Option<(usize, usize, usize)> {
        match kind {
            Criterion::Aic => self.argmin_aic,
            Criterion::Bic => self.argmin_bic,
        }
    }

    /// Argmin over the cells that pass `keep`, e.g. a slice with one rank held fixed.
    pub fn argmin_where<F: Fn(&GridEntry) -> bool>(&self, kind: Criterion, keep: F) -> Option<(usize, usize, usize)> {
        let mut best: Option<(&GridEntry, f64)> = None;
        for e in self.entries.iter().filter(|e| e.converged && keep(e)) {
            if let Some(v) = e.value(kind) {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((e, v));
                }
            }
        }
        best.map(|(e, _)| e.key())
    }

    /// Row-rank fixed at `r1`, selecting the column rank (and lag).
    pub fn argmin_fixed_r1(&self, kind: Criterion, r1: usize) -> Option<(usize, usize, usize)> {
        self.argmin_where(kind, |e| e.r1 == r1)
    }

    pub fn argmin_fixed_r2(&self, kind: Criterion, r2: usize) -> Option<(usize, usize, usize)> {
        self.argmin_where(kind, |e| e.r2 == r2)
    }

    pub fn entry(&self, r1: usize, r2: usize, p: usize) -> Option<&GridEntry> {
        self.entries.iter().find(|e| e.key() == (r1, r2, p))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["r1", "r2", "p", "loglik", "phi", "aic", "bic", "converged"])?;
        let num = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:?}"));
        for e in &self.entries {
            w.write_record([
                e.r1.to_string(),
                e.r2.to_string(),
                e.p.to_string(),
                num(e.loglik),
                e.phi.to_string(),
                num(e.aic),
                num(e.bic),
                e.converged.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Cells ranked by the criterion, best first; failed cells last.
    pub fn render_table(&self, kind: Criterion) -> String {
        let mut rows: Vec<&GridEntry> = self.entries.iter().collect();
        rows.sort_by(|a, b| {
            let va = a.value(kind).filter(|_| a.converged).unwrap_or(f64::INFINITY);
            let vb = b.value(kind).filter(|_| b.converged).unwrap_or(f64::INFINITY);
            va.total_cmp(&vb).then(a.key().cmp(&b.key()))
        });
        let mut out = format!("{:>4} {:>4} {:>3} {:>14} {:>5} {:>14} {:>14}  status\n", "r1", "r2", "p", "loglik", "phi", "AIC", "BIC");
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        for e in rows {
            let status = if e.converged {
                "ok"
            } else if e.nesting_violation {
                "nesting violation"
            } else if e.saddle {
                "saddle"
            } else {
                "failed"
            };
            let _ = writeln!(
                out,
                "{:>4} {:>4} {:>3} {:>14} {:>5} {:>14} {:>14}  {status}",
                e.r1,
                e.r2,
                e.p,
                f(e.loglik),
                e.phi,
                f(e.aic),
                f(e.bic)
            );
        }
        out
    }
}

/// Embeds a fitted smaller model into a larger cell without changing its coefficients:
/// a new factor column gets a zero lag loading, a new lag gets `U3 = 0`.
pub fn embed_nested(params: &PseudoStructParams, target: Dims) -> Result<PseudoStructParams> {
    let d = params.dims();
    if target.n1 != d.n1 || target.n2 != d.n2 || target.r1 < d.r1 || target.r2 < d.r2 || target.p < d.p {
        return Err(Error::InvalidArgument(format!("{d:?} is not nested in {target:?}")));
    }
    let mut rr = pseudo_to_reduced(params);
    let grow = |u: &Mat, lags: &mut Vec<Mat>, n: usize, r_new: usize| -> Mat {
        let r_old = u.ncols();
        let mut out = Mat::zeros(n, r_new);
        out.columns_mut(0, r_old).copy_from(u);
        for (c, col) in (r_old..r_new).enumerate() {
            // Unit vectors just above the existing identity block keep the bottom block invertible.
            out[(n - r_new + c, col)] = 1.0;
        }
        for l in lags.iter_mut() {
            let mut g = Mat::zeros(n, r_new);
            g.columns_mut(0, r_old).copy_from(l);
            *l = g;
        }
        out
    };
    rr.u1 = grow(&rr.u1, &mut rr.u3, d.n1, target.r1);
    rr.u2 = grow(&rr.u2, &mut rr.u4, d.n2, target.r2);
    for j in d.p..target.p {
        rr.u3.push(Mat::zeros(d.n1, target.r1));
        let mut u4 = Mat::zeros(d.n2, target.r2);
        // Nonzero so the new lag has a nonzero gradient.
        for (i, x) in u4.iter_mut().enumerate() {
            *x = 1e-3 * (1.0 + ((i + j) % 3) as f64);
        }
        rr.u4.push(u4);
    }
    rrmar_to_pseudo(&rr)
}

fn cell_dims(n1: usize, n2: usize, key: (usize, usize, usize)) -> Dims {
    Dims { n1, n2, r1: key.0, r2: key.1, p: key.2 }
}

/// Fits every `(r1, r2, p)` cell on a common sample (the first `max p` observations are
/// conditioned on) and tabulates AIC and BIC.
pub fn select_ranks(series: &MatrixSeries, config: &SelectionConfig) -> Result<SelectionGrid> {
    let (n1, n2) = (series.n1(), series.n2());
    let [(a1, b1), (a2, b2), (lp, hp)] = config.ranges(n1, n2)?;
    let start = hp;
    if series.len() <= start + 1 {
        return Err(Error::TooFewObservations(format!("{} observations with up to {hp} lags", series.len())));
    }
    let mut keys = vec![];
    for p in lp..=hp {
        for r1 in a1..=b1 {
            for r2 in a2..=b2 {
                keys.push((r1, r2, p));
            }
        }
    }
    let cell_config = |key: (usize, usize, usize)| {
        config.fit.with_seed(derive_seed(config.fit.seed, &[key.0 as u64, key.1 as u64, key.2 as u64]))
    };
    let mut fits: Vec<Result<FitResult>> = keys
        .par_iter()
        .map(|&k| fit_from(series, cell_dims(n1, n2, k), &cell_config(k), start, &[]))
        .collect();

    let t = series.len();
    let index = |k: (usize, usize, usize)| keys.iter().position(|x| *x == k);
    let mut repaired = vec![false; keys.len()];
    let mut violation = vec![false; keys.len()];
    // Keys are ordered by p, then r1, then r2, so nested cells come first.
    for i in 0..keys.len() {
        let (r1, r2, p) = keys[i];
        let nested: Vec<usize> = [(r1.wrapping_sub(1), r2, p), (r1, r2.wrapping_sub(1), p), (r1, r2, p.wrapping_sub(1))]
            .into_iter()
            .filter_map(index)
            .filter(|&j| fits[j].is_ok())
            .collect();
        if nested.is_empty() {
            continue;
        }
        let best_nested = nested
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let (la, lb) = (fits[a].as_ref().unwrap().loglik, fits[b].as_ref().unwrap().loglik);
                la.total_cmp(&lb).then(b.cmp(&a))
            })
            .expect("nonempty");
        let floor = fits[best_nested].as_ref().unwrap().loglik;
        let short = match &fits[i] {
            Ok(f) => f.loglik < floor - config.nesting_tol,
            Err(_) => true,
        };
        if !short {
            continue;
        }
        if config.repair {
            let extra: Vec<PseudoStructParams> = nested
                .iter()
                .filter_map(|&j| embed_nested(&fits[j].as_ref().unwrap().params, cell_dims(n1, n2, keys[i])).ok())
                .collect();
            let refit = fit_from(series, cell_dims(n1, n2, keys[i]), &cell_config(keys[i]), start, &extra);
            let better = match (&refit, &fits[i]) {
                (Ok(a), Ok(b)) => a.loglik > b.loglik,
                (Ok(_), Err(_)) => true,
                _ => false,
            };
            if better {
                fits[i] = refit;
                repaired[i] = true;
            }
        }
        if let Ok(f) = &fits[i] {
            if f.loglik < floor - config.nesting_tol {
                violation[i] = true;
                log::warn!("cell {:?} stays below its nested cell by {:.3e}", keys[i], floor - f.loglik);
            }
        }
    }

    let entries: Vec<GridEntry> = keys
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (&(r1, r2, p), f))| {
            let ph = phi(r1, r2, n1, n2, p);
            match f {
                Ok(f) => GridEntry {
                    r1,
                    r2,
                    p,
                    loglik: Some(f.loglik),
                    phi: ph,
                    aic: Some(information_criterion(f.loglik, r1, r2, p, n1, n2, t, Criterion::Aic)),
                    bic: Some(information_criterion(f.loglik, r1, r2, p, n1, n2, t, Criterion::Bic)),
                    converged: !f.diagnostics.saddle_flag && !violation[i],
                    saddle: f.diagnostics.saddle_flag,
                    repaired: repaired[i],
                    nesting_violation: violation[i],
                    error: None,
                },
                Err(e) => GridEntry {
                    r1,
                    r2,
                    p,
                    loglik: None,
                    phi: ph,
                    aic: None,
                    bic: None,
                    converged: false,
                    saddle: false,
                    repaired: repaired[i],
                    nesting_violation: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let n_obs = series.len() - start;
    let mut grid = SelectionGrid { n1, n2, t, n_obs, entries, argmin_aic: None, argmin_bic: None };
    grid.argmin_aic = grid.argmin_where(Criterion::Aic, |_| true);
    grid.argmin_bic = grid.argmin_where(Criterion::Bic, |_| true);
    if grid.argmin_bic.is_none() {
        return Err(Error::SelectionFailed);
    }
    Ok(grid)
}
