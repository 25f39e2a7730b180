//! Experiment driver: Monte Carlo search trials over planted instances,
//! query-scaling tables, exponent fits and error-rate estimates.
//!
//! Every trial owns a ChaCha8 stream keyed by `(seed, point index, trial
//! index)`, so results do not depend on thread scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::detect::{BackendKind, DEFAULT_C, DEFAULT_P_ERR};
use crate::error::{Error, Result};
use crate::instances::{make_planted_instance_with, OracleMode, OracleSession};
use crate::search::{claw_search_with_rng, k_claw_search_with_rng, SearchConfig, DEFAULT_C_FINAL};
use crate::walk::DEFAULT_EDGE_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Domain sizes per grid point, non-decreasing within a point.
    pub grid: Vec<Vec<usize>>,
    pub trials: usize,
    pub seed: u64,
    pub backend: BackendKind,
    pub mode: OracleMode,
    pub p_err: f64,
    pub c: f64,
    pub c_final: usize,
    /// Claws planted per instance; 0 gives claw-free instances.
    pub num_claws: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: Vec::new(),
            trials: 1,
            seed: 0,
            backend: BackendKind::CostModel,
            mode: OracleMode::Standard,
            p_err: DEFAULT_P_ERR,
            c: DEFAULT_C,
            c_final: DEFAULT_C_FINAL,
            num_claws: 1,
            output: None,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Parameter("empty size grid".into()));
        }
        if let Some(bad) = self.grid.iter().find(|p| p.len() < 2) {
            return Err(Error::Parameter(format!(
                "grid point {bad:?} needs k >= 2 sizes"
            )));
        }
        Ok(())
    }

    fn search_config(&self) -> SearchConfig {
        SearchConfig {
            backend: self.backend,
            p_err: self.p_err,
            edge_cap: DEFAULT_EDGE_CAP,
            c: self.c,
            c_final: self.c_final,
            seed: self.seed,
        }
    }
}

/// `N = M = 2^8 .. 2^16`.
pub fn balanced_grid() -> Vec<Vec<usize>> {
    (8..=16).map(|e| vec![1 << e, 1 << e]).collect()
}

/// `M = N^3` for `N = 8 .. 128`.
pub fn unbalanced_grid() -> Vec<Vec<usize>> {
    (3..=7).map(|e| vec![1 << e, 1 << (3 * e)]).collect()
}

/// Three equal domains of size `2^6 .. 2^12`.
pub fn k3_grid() -> Vec<Vec<usize>> {
    (6..=12).map(|e| vec![1 << e; 3]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub mean_queries: f64,
    pub std_queries: f64,
    /// Fraction of trials with a planted claw that returned the sentinel.
    pub failure_rate: f64,
    pub sentinel_rate: f64,
    /// Non-sentinel outputs that are not claws. Always zero.
    pub soundness_violations: usize,
    pub wall_time_ms: f64,
}

impl ScalingRow {
    pub fn size_product(&self) -> f64 {
        self.sizes.iter().map(|&n| n as f64).product()
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    queries: u64,
    has_claw: bool,
    sentinel: bool,
    sound: bool,
}

fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | trial as u64);
    rng
}

fn run_trial(
    config: &ExperimentConfig,
    sizes: &[usize],
    point: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let mut rng = trial_rng(config.seed, point, trial);
    let range = 4 * sizes.iter().map(|&n| n as u64).sum::<u64>();
    let instance = make_planted_instance_with(sizes, config.num_claws, range, &mut rng)?;
    let mut session = OracleSession::new(&instance, config.mode);
    let search = config.search_config();
    let result = if sizes.len() == 2 {
        claw_search_with_rng(&mut session, &search, &mut rng)?
    } else {
        k_claw_search_with_rng(&mut session, &search, &mut rng)?
    };
    Ok(TrialOutcome {
        queries: result.total_queries,
        has_claw: config.num_claws > 0,
        sentinel: result.claw.is_none(),
        sound: result.claw.as_ref().is_none_or(|c| instance.verify(c)),
    })
}

fn run_point(config: &ExperimentConfig, sizes: &[usize], point: usize) -> Result<ScalingRow> {
    let start = Instant::now();
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, sizes, point, t))
        .collect::<Result<Vec<_>>>()?;
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.queries as f64).sum::<f64>() / n;
    let var = outcomes
        .iter()
        .map(|o| (o.queries as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let with_claw = outcomes.iter().filter(|o| o.has_claw).count();
    let failures = outcomes.iter().filter(|o| o.has_claw && o.sentinel).count();
    Ok(ScalingRow {
        sizes: sizes.to_vec(),
        trials: outcomes.len(),
        mean_queries: mean,
        std_queries: var.sqrt(),
        failure_rate: if with_claw == 0 {
            0.0
        } else {
            failures as f64 / with_claw as f64
        },
        sentinel_rate: outcomes.iter().filter(|o| o.sentinel).count() as f64 / n,
        soundness_violations: outcomes.iter().filter(|o| !o.sound).count(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs `trials` searches over fresh planted instances at every grid point.
/// Writes the CSV to `config.output` when set.
pub fn run_scaling_experiment(config: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    config.validate()?;
    let rows = config
        .grid
        .iter()
        .enumerate()
        .map(|(i, sizes)| run_point(config, sizes, i))
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &config.output {
        write_file(path, &scaling_csv(&rows))?;
    }
    Ok(rows)
}

pub const SCALING_CSV_HEADER: &str =
    "sizes,size_product,trials,mean_queries,std_queries,failure_rate,sentinel_rate,soundness_violations";

/// CSV table of rows. Wall time is left out so equal seeds give equal bytes.
pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SCALING_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let sizes: Vec<String> = r.sizes.iter().map(ToString::to_string).collect();
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            sizes.join("x"),
            r.size_product(),
            r.trials,
            r.mean_queries,
            r.std_queries,
            r.failure_rate,
            r.sentinel_rate,
            r.soundness_violations
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Log-log least-squares fit `ln y = intercept + slope * ln x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// `ln y - fitted`, per point.
    pub residuals: Vec<f64>,
}

/// Which size the mean query count is regressed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitAxis {
    /// Product of all domain sizes.
    SizeProduct,
    /// Largest domain.
    Largest,
}

/// Fits the exponent of mean queries against the chosen size. In comparison
/// mode each mean is first divided by `log2` of the smallest domain.
pub fn fit_exponent(rows: &[ScalingRow], axis: FitAxis, mode: OracleMode) -> Result<ExponentFit> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let x = match axis {
                FitAxis::SizeProduct => r.size_product(),
                FitAxis::Largest => r.sizes.iter().copied().max().unwrap_or(0) as f64,
            };
            let y = match mode {
                OracleMode::Standard => r.mean_queries,
                OracleMode::Comparison => {
                    let n1 = r.sizes.iter().copied().min().unwrap_or(0) as f64;
                    r.mean_queries / n1.log2().max(1.0)
                }
            };
            (x, y)
        })
        .collect();
    fit_points(&points)
}

/// Least squares on `(ln x, ln y)`. Needs at least 4 points whose `x` spans
/// two decades.
pub fn fit_points(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Fit("sizes and query counts must be positive".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (lo, hi) = lx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo < 2.0 * std::f64::consts::LN_10 - 1e-9 {
        return Err(Error::Fit(format!(
            "sizes span {:.2} decades, need 2",
            (hi - lo) / std::f64::consts::LN_10
        )));
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    Ok(ExponentFit {
        slope,
        intercept,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// One-sided upper Clopper-Pearson bound on the failure rate.
    pub upper_bound: f64,
    pub confidence: f64,
    pub sentinel_rate: f64,
    pub soundness_violations: usize,
}

/// Runs the first grid point's trials and bounds the failure rate at the
/// given confidence.
pub fn estimate_error_rate(config: &ExperimentConfig, confidence: f64) -> Result<ErrorEstimate> {
    config.validate()?;
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::Parameter(format!(
            "confidence {confidence} outside [0, 1)"
        )));
    }
    let row = run_point(config, &config.grid[0], 0)?;
    let with_claw = if config.num_claws > 0 { row.trials } else { 0 };
    let failures = (row.failure_rate * with_claw as f64).round() as usize;
    Ok(ErrorEstimate {
        trials: row.trials,
        failures,
        failure_rate: row.failure_rate,
        upper_bound: clopper_pearson_upper(failures, with_claw, confidence),
        confidence,
        sentinel_rate: row.sentinel_rate,
        soundness_violations: row.soundness_violations,
    })
}

/// Exact one-sided upper confidence bound for a binomial proportion.
pub fn clopper_pearson_upper(successes: usize, trials: usize, confidence: f64) -> f64 {
    if successes >= trials {
        return 1.0;
    }
    Beta::new(successes as f64 + 1.0, (trials - successes) as f64)
        .expect("positive shape parameters")
        .inverse_cdf(confidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sizes: Vec<usize>, mean: f64) -> ScalingRow {
        ScalingRow {
            sizes,
            trials: 1,
            mean_queries: mean,
            std_queries: 0.0,
            failure_rate: 0.0,
            sentinel_rate: 0.0,
            soundness_violations: 0,
            wall_time_ms: 0.0,
        }
    }

    #[test]
    fn synthetic_fits() {
        let rows: Vec<_> = (4..=12)
            .map(|e| {
                let n = 1usize << e;
                row(vec![n, n], ((n * n) as f64).powf(1.0 / 3.0))
            })
            .collect();
        let fit = fit_exponent(&rows, FitAxis::SizeProduct, OracleMode::Standard).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-6);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));

        let rows: Vec<_> = (2..=7)
            .map(|e| {
                let n = 1usize << e;
                row(vec![n, n * n * n], ((n * n * n) as f64).sqrt())
            })
            .collect();
        let fit = fit_exponent(&rows, FitAxis::Largest, OracleMode::Standard).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-6);
    }

    #[test]
    fn comparison_fit_divides_log() {
        let rows: Vec<_> = (4..=12)
            .map(|e| {
                let n = 1usize << e;
                row(vec![n, n], ((n * n) as f64).powf(1.0 / 3.0) * e as f64)
            })
            .collect();
        let fit = fit_exponent(&rows, FitAxis::SizeProduct, OracleMode::Comparison).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_grids_rejected() {
        let one_decade: Vec<_> = [10.0, 20.0, 50.0, 99.0].iter().map(|&x| (x, x)).collect();
        assert!(matches!(fit_points(&one_decade), Err(Error::Fit(_))));
        let three = [(1.0, 1.0), (100.0, 2.0), (1000.0, 3.0)];
        assert!(fit_points(&three).is_err());
        assert!(fit_points(&[(1.0, 1.0), (10.0, 0.0), (100.0, 1.0), (1000.0, 1.0)]).is_err());
    }

    #[test]
    fn clopper_pearson_reference() {
        // Zero failures in n trials: 1 - (1 - conf)^(1/n).
        let ub = clopper_pearson_upper(0, 100, 0.99);
        assert!((ub - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-9);
        // All failures: bound is 1.
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
        // Cross-check against the binomial tail: P(X <= x | p = ub) = 1 - conf.
        let (x, n) = (30usize, 100usize);
        let ub = clopper_pearson_upper(x, n, 0.95);
        let tail: f64 = (0..=x)
            .map(|i| {
                let lc = statrs::function::factorial::ln_binomial(n as u64, i as u64);
                (lc + i as f64 * ub.ln() + (n - i) as f64 * (1.0 - ub).ln()).exp()
            })
            .sum();
        assert!((tail - 0.05).abs() < 1e-6, "tail {tail}");
    }

    #[test]
    fn deterministic_csv() {
        let cfg = ExperimentConfig {
            grid: vec![vec![64, 64], vec![64, 256]],
            trials: 16,
            seed: 9,
            ..ExperimentConfig::default()
        };
        let a = scaling_csv(&run_scaling_experiment(&cfg).unwrap());
        let b = scaling_csv(&run_scaling_experiment(&cfg).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with(SCALING_CSV_HEADER));
        assert_eq!(a.lines().count(), 3);
    }

    #[test]
    fn perfect_detection_never_fails() {
        let cfg = ExperimentConfig {
            grid: vec![vec![256, 256]],
            trials: 200,
            p_err: 0.0,
            ..ExperimentConfig::default()
        };
        let est = estimate_error_rate(&cfg, 0.99).unwrap();
        assert_eq!(est.failures, 0);
        assert_eq!(est.soundness_violations, 0);
    }

    #[test]
    fn claw_free_always_sentinel() {
        let cfg = ExperimentConfig {
            grid: vec![vec![128, 512]],
            trials: 200,
            num_claws: 0,
            ..ExperimentConfig::default()
        };
        let est = estimate_error_rate(&cfg, 0.99).unwrap();
        assert_eq!(est.sentinel_rate, 1.0);
        assert_eq!(est.failure_rate, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(run_scaling_experiment(&ExperimentConfig::default()).is_err());
        let cfg = ExperimentConfig {
            grid: vec![vec![8, 8]],
            trials: 0,
            ..ExperimentConfig::default()
        };
        assert!(run_scaling_experiment(&cfg).is_err());
    }

    #[test]
    fn io_error_has_path() {
        let err = write_file(Path::new("/nonexistent-dir/x.csv"), "a").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
