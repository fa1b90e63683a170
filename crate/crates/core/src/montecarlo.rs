//! Monte Carlo experiments: sampling distributions and interval coverage of `δ*` / `γ*`
//! under correct, under- and over-specified ranks, and rank (and lag) selection tables.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{confidence_intervals, fit, Block, FitConfig};
use crate::linalg::derive_seed;
use crate::model::{Dims, PseudoStructParams};
use crate::select::{select_ranks, Criterion, SelectionConfig};
use crate::simulate::{draw_dgp, simulate_series, CovarianceSpec, DgpSpec};
use crate::stats::{kernel_density, mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    DensityDelta,
    DensityGamma,
    Coverage,
    RankTable,
    RankLagTable,
    #[serde(rename = "appendix_3x6")]
    Appendix3x6,
}

impl Design {
    pub fn is_selection(self) -> bool {
        matches!(self, Design::RankTable | Design::RankLagTable)
    }

    pub fn target(self) -> Block {
        if self == Design::DensityGamma {
            Block::Gamma
        } else {
            Block::Delta
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown design '{s}'")))
    }
}

/// Ranks used when fitting, e.g. the truth or a misspecification of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub r1: usize,
    pub r2: usize,
}

impl Scenario {
    pub fn new(name: &str, r1: usize, r2: usize) -> Self {
        Self { name: name.to_string(), r1, r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub design: Design,
    /// Dimensions and true ranks/lag of the data-generating process.
    pub truth: Dims,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    pub t_list: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub sigma: CovarianceSpec,
    /// One parameter draw for every replication; `None` uses the design default
    /// (fixed for estimation designs, redrawn for selection tables).
    #[serde(default)]
    pub fixed_dgp: Option<bool>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub fit: FitConfig,
    /// Budget and lag range for selection tables; rank ranges default to the full grid.
    #[serde(default)]
    pub selection: SelectionConfig,
}

fn default_snr() -> f64 {
    0.7
}

fn default_burn_in() -> usize {
    50
}

fn default_level() -> f64 {
    0.95
}

/// Failure share above which an experiment is aborted.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

impl ExperimentSpec {
    /// The standard setups: 3×4 with truth (2,2) for `δ*`, (2,3) for `γ*`, 3×6 with (2,5),
    /// and 3×4 selection tables with the given truth.
    pub fn preset(design: Design) -> Self {
        let dims = |n2, r1, r2| Dims { n1: 3, n2, r1, r2, p: 1 };
        let (truth, scenarios, reps) = match design {
            Design::DensityDelta | Design::Coverage => (
                dims(4, 2, 2),
                vec![Scenario::new("correct", 2, 2), Scenario::new("under", 2, 1), Scenario::new("over", 2, 3)],
                1000,
            ),
            Design::DensityGamma => (
                dims(4, 2, 3),
                vec![Scenario::new("correct", 2, 3), Scenario::new("under", 1, 3), Scenario::new("over", 3, 3)],
                1000,
            ),
            Design::Appendix3x6 => (
                dims(6, 2, 5),
                vec![Scenario::new("correct", 2, 5), Scenario::new("under", 2, 1)],
                1000,
            ),
            Design::RankTable | Design::RankLagTable => (dims(4, 1, 1), vec![], 100),
        };
        let mut selection = SelectionConfig::default();
        selection.lags = if design == Design::RankLagTable { (1, 2) } else { (1, 1) };
        Self {
            design,
            truth,
            scenarios,
            t_list: vec![100, 250],
            replications: reps,
            seed: 0,
            snr: default_snr(),
            burn_in: default_burn_in(),
            sigma: CovarianceSpec::Identity,
            fixed_dgp: None,
            level: default_level(),
            fit: FitConfig::default(),
            selection,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.t_list.is_empty() || self.t_list.iter().any(|&t| t <= self.truth.p + 1) {
            return Err(Error::Config("t_list must be nonempty with every T above the lag order".into()));
        }
        self.fit.validate()?;
        if self.design.is_selection() {
            self.selection.fit.validate()?;
            self.selection.ranges(self.truth.n1, self.truth.n2)?;
            if self.design == Design::RankTable && self.selection.lags != (self.truth.p, self.truth.p) {
                return Err(Error::Config("rank_table fixes the lag at the true order".into()));
            }
            return Ok(());
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config(format!("design {:?} needs at least one rank scenario", self.design)));
        }
        for s in &self.scenarios {
            Dims { r1: s.r1, r2: s.r2, ..self.truth }.validate()?;
            let same = match self.design.target() {
                Block::Delta => s.r1 == self.truth.r1,
                Block::Gamma => s.r2 == self.truth.r2,
            };
            if !same {
                return Err(Error::Config(format!(
                    "scenario '{}' changes the rank of the targeted block, so its estimates are not comparable",
                    s.name
                )));
            }
        }
        Ok(())
    }

    fn fixed(&self) -> bool {
        self.fixed_dgp.unwrap_or(!self.design.is_selection())
    }

    fn dgp(&self, t: usize) -> DgpSpec {
        DgpSpec { dims: self.truth, t, snr: self.snr, burn_in: self.burn_in, seed: self.seed, sigma: self.sigma.clone() }
    }
}

/// Estimates of the targeted coordinates under one scenario and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub t: usize,
    /// True values of the targeted block, row-major; per replication for redrawn designs.
    pub truth: Vec<Vec<f64>>,
    /// `draws[k]` holds the estimates of coordinate `k` over successful replications.
    pub draws: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub coverage: Vec<f64>,
    /// `sqrt(c (1 - c) / R)`.
    pub coverage_se: Vec<f64>,
    pub attempted: usize,
    pub failures: usize,
}

/// Selection frequencies for one criterion and sample size, as `(dimension 1, dimension 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub criterion: Criterion,
    pub t: usize,
    pub average_rank: (f64, f64),
    pub std_rank: (f64, f64),
    pub freq_correct: (f64, f64),
    pub average_lag: Option<f64>,
    pub std_lag: Option<f64>,
    pub freq_lag: Option<f64>,
    /// Both ranks (and the lag) correct at once.
    pub freq_joint: f64,
    pub attempted: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub estimation: Vec<ScenarioResult>,
    pub selection: Vec<SelectionRow>,
    /// Wall-clock seconds; not serialized so repeated runs produce identical JSON.
    #[serde(skip)]
    pub runtime_secs: f64,
}

fn rep_rng(seed: u64, t: usize, rep: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64, rep as u64]))
}

fn target_values(p: &PseudoStructParams, block: Block) -> Vec<f64> {
    let m = match block {
        Block::Delta => &p.delta_star,
        Block::Gamma => &p.gamma_star,
    };
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |k| m[(i, k)])).collect()
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_SHARE * total as f64 {
        return Err(Error::ExperimentFailed { failed, total });
    }
    Ok(())
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let clock = Instant::now();
    let fixed = if spec.fixed() {
        Some(draw_dgp(&spec.dgp(spec.t_list[0]), &mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[u64::MAX])))?)
    } else {
        None
    };
    let mut result = ExperimentResult { spec: spec.clone(), estimation: vec![], selection: vec![], runtime_secs: 0.0 };
    for &t in &spec.t_list {
        if spec.design.is_selection() {
            result.selection.extend(selection_rows(spec, t, fixed.as_ref())?);
        } else {
            result.estimation.extend(estimation_results(spec, t, fixed.as_ref())?);
        }
    }
    result.runtime_secs = clock.elapsed().as_secs_f64();
    Ok(result)
}

/// Draws the replication's parameters (unless fixed) and simulates a sample of length `t`.
fn replicate(
    spec: &ExperimentSpec,
    t: usize,
    rep: usize,
    fixed: Option<&PseudoStructParams>,
) -> Result<(PseudoStructParams, crate::model::MatrixSeries)> {
    let mut rng = rep_rng(spec.seed, t, rep);
    let params = match fixed {
        Some(p) => p.clone(),
        None => draw_dgp(&spec.dgp(t), &mut rng)?,
    };
    let series = simulate_series(&params, t, spec.burn_in, &mut rng)?;
    Ok((params, series))
}

struct RepEstimate {
    values: Vec<f64>,
    covered: Vec<bool>,
}

fn estimation_results(spec: &ExperimentSpec, t: usize, fixed: Option<&PseudoStructParams>) -> Result<Vec<ScenarioResult>> {
    let block = spec.design.target();
    let reps: Vec<Result<(Vec<f64>, Vec<Option<RepEstimate>>)>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let (params, series) = replicate(spec, t, rep, fixed)?;
            let truth = target_values(&params, block);
            let per_scenario = spec
                .scenarios
                .iter()
                .map(|s| {
                    let dims = Dims { r1: s.r1, r2: s.r2, ..spec.truth };
                    let config = spec.fit.with_seed(derive_seed(spec.seed, &[t as u64, rep as u64, s.r1 as u64, s.r2 as u64]));
                    let f = fit(&series, dims, &config).ok().filter(|f| !f.diagnostics.saddle_flag)?;
                    let intervals: Vec<_> =
                        confidence_intervals(&f, spec.level).ok()?.into_iter().filter(|i| i.block == block).collect();
                    let covered: Option<Vec<bool>> = intervals.iter().zip(&truth).map(|(i, &x)| i.contains(x)).collect();
                    Some(RepEstimate { values: intervals.iter().map(|i| i.estimate).collect(), covered: covered? })
                })
                .collect();
            Ok((truth, per_scenario))
        })
        .collect();
    let mut reps_ok = Vec::with_capacity(reps.len());
    for r in reps {
        reps_ok.push(r?);
    }
    let mut out = vec![];
    for (si, s) in spec.scenarios.iter().enumerate() {
        let k = reps_ok[0].0.len();
        let mut draws = vec![vec![]; k];
        let mut truths = vec![];
        let mut errors = vec![0.0; k];
        let mut hits = vec![0usize; k];
        let mut failures = 0;
        for (truth, per) in &reps_ok {
            match &per[si] {
                Some(e) => {
                    for j in 0..k {
                        draws[j].push(e.values[j]);
                        errors[j] += e.values[j] - truth[j];
                        hits[j] += usize::from(e.covered[j]);
                    }
                    if truths.is_empty() || fixed.is_none() {
                        truths.push(truth.clone());
                    }
                }
                None => failures += 1,
            }
        }
        check_failures(failures, spec.replications)?;
        let n = (spec.replications - failures) as f64;
        let coverage: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
        out.push(ScenarioResult {
            scenario: s.clone(),
            t,
            truth: truths,
            draws,
            bias: errors.iter().map(|e| e / n).collect(),
            coverage_se: coverage.iter().map(|c| (c * (1.0 - c) / n).sqrt()).collect(),
            coverage,
            attempted: spec.replications,
            failures,
        });
    }
    Ok(out)
}

fn selection_rows(spec: &ExperimentSpec, t: usize, fixed: Option<&PseudoStructParams>) -> Result<Vec<SelectionRow>> {
    let reps: Vec<Result<Option<[(usize, usize, usize); 2]>>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let (_, series) = replicate(spec, t, rep, fixed)?;
            let mut config = spec.selection.clone();
            config.fit.seed = derive_seed(spec.seed, &[t as u64, rep as u64, 1]);
            Ok(select_ranks(&series, &config)
                .ok()
                .and_then(|g| Some([g.argmin_aic?, g.argmin_bic?])))
        })
        .collect();
    let mut picks = vec![];
    let mut failures = 0;
    for r in reps {
        match r? {
            Some(p) => picks.push(p),
            None => failures += 1,
        }
    }
    check_failures(failures, spec.replications)?;
    let with_lag = spec.selection.lags.0 != spec.selection.lags.1;
    let d = spec.truth;
    let rows = [Criterion::Aic, Criterion::Bic]
        .into_iter()
        .enumerate()
        .map(|(ci, criterion)| {
            let r1: Vec<f64> = picks.iter().map(|p| p[ci].0 as f64).collect();
            let r2: Vec<f64> = picks.iter().map(|p| p[ci].1 as f64).collect();
            let lag: Vec<f64> = picks.iter().map(|p| p[ci].2 as f64).collect();
            let freq = |f: &dyn Fn(&(usize, usize, usize)) -> bool| {
                picks.iter().filter(|p| f(&p[ci])).count() as f64 / picks.len() as f64
            };
            SelectionRow {
                criterion,
                t,
                average_rank: (mean(&r1), mean(&r2)),
                std_rank: (sample_sd(&r1), sample_sd(&r2)),
                freq_correct: (freq(&|p| p.0 == d.r1), freq(&|p| p.1 == d.r2)),
                average_lag: with_lag.then(|| mean(&lag)),
                std_lag: with_lag.then(|| sample_sd(&lag)),
                freq_lag: with_lag.then(|| freq(&|p| p.2 == d.p)),
                freq_joint: freq(&|p| *p == (d.r1, d.r2, d.p)),
                attempted: spec.replications,
                failures,
            }
        })
        .collect();
    Ok(rows)
}

fn pair(a: (f64, f64)) -> String {
    format!("({:.2}, {:.2})", a.0, a.1)
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text tables in the `(a, b)` cell format.
    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        let d = self.spec.truth;
        if !self.selection.is_empty() {
            let lag = self.selection.iter().any(|r| r.freq_lag.is_some());
            let _ = writeln!(out, "Truth ({}, {}), p = {}, N1 x N2 = {} x {}", d.r1, d.r2, d.p, d.n1, d.n2);
            let _ = write!(out, "{:<10} {:>14} {:>14} {:>14}", "", "Average Rank", "Std. Rank", "Freq. Correct");
            if lag {
                let _ = write!(out, " {:>8} {:>8} {:>8}", "Avg Lag", "Std Lag", "Freq Lag");
            }
            out.push('\n');
            for r in &self.selection {
                let label = format!("{} ({})", r.criterion.name(), r.t);
                let _ = write!(out, "{label:<10} {:>14} {:>14} {:>14}", pair(r.average_rank), pair(r.std_rank), pair(r.freq_correct));
                if let (Some(a), Some(s), Some(f)) = (r.average_lag, r.std_lag, r.freq_lag) {
                    let _ = write!(out, " {a:>8.2} {s:>8.2} {f:>8.2}");
                }
                out.push('\n');
            }
        }
        if !self.estimation.is_empty() {
            let sym = match self.spec.design.target() {
                Block::Delta => "delta*",
                Block::Gamma => "gamma*",
            };
            let _ = writeln!(
                out,
                "Truth ({}, {}), p = {}, N1 x N2 = {} x {}, {:.0}% intervals",
                d.r1,
                d.r2,
                d.p,
                d.n1,
                d.n2,
                100.0 * self.spec.level
            );
            for r in &self.estimation {
                let _ = write!(out, "{:<8} ({}, {}) T={:<5}", r.scenario.name, r.scenario.r1, r.scenario.r2, r.t);
                for (k, (c, se)) in r.coverage.iter().zip(&r.coverage_se).enumerate() {
                    let _ = write!(out, "  {sym}_{}: coverage {c:.3} ({se:.3}) bias {:+.4}", k + 1, r.bias[k]);
                }
                if r.failures > 0 {
                    let _ = write!(out, "  [{} of {} failed]", r.failures, r.attempted);
                }
                out.push('\n');
            }
        }
        out
    }

    /// Kernel densities of every estimated coordinate as CSV
    /// `scenario,t,coordinate,x,density`.
    pub fn density_csv(&self, grid: usize) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["scenario", "t", "coordinate", "x", "density"])?;
        for r in &self.estimation {
            for (k, draws) in r.draws.iter().enumerate() {
                for (x, y) in kernel_density(draws, grid)? {
                    w.write_record([r.scenario.name.clone(), r.t.to_string(), (k + 1).to_string(), format!("{x:?}"), format!("{y:?}")])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
