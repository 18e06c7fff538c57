//! Experiment runners behind the `rkhs-kit` CLI and their CSV output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::adaptive::{KlmsState, KrlsState, OnlineFilter};
use crate::conditional::{markov_cond_test, CondTestConfig};
use crate::data::{gen_markov_triple, gen_nl_ar, gen_rotation_pair};
use crate::embeddings::{deflection, deflection_detector};
use crate::finite_rkhs::{mercer_min_kernel, min_kernel_eigenvalue};
use crate::independence::{independence_perm_test, sparse_hsic};
use crate::kbr::{KbrModel, PreimageOptions};
use crate::kernels::KernelSpec;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Kernel width used by the online-filter experiments in the `exp(−‖x−y‖²/w)` convention.
pub const ADAPTIVE_KERNEL_WIDTH: f64 = 1.0 / 3.73;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    HsicRotation,
    MarkovTest,
    KbrPredict,
    KrlsPredict,
    KlmsPredict,
    MercerCheck,
    DeflectionDemo,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::HsicRotation,
        Experiment::MarkovTest,
        Experiment::KbrPredict,
        Experiment::KrlsPredict,
        Experiment::KlmsPredict,
        Experiment::MercerCheck,
        Experiment::DeflectionDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::HsicRotation => "hsic-rotation",
            Experiment::MarkovTest => "markov-test",
            Experiment::KbrPredict => "kbr-predict",
            Experiment::KrlsPredict => "krls-predict",
            Experiment::KlmsPredict => "klms-predict",
            Experiment::MercerCheck => "mercer-check",
            Experiment::DeflectionDemo => "deflection-demo",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment '{s}'")))
    }
}

/// Full configuration of one run. [`ExperimentConfig::new`] fills the per-experiment defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Sample size: data points (rotation, Markov), training pairs (KBR), series
    /// length (kRLS/kLMS), grid size (Mercer), Monte-Carlo draws (deflection).
    pub n_samples: usize,
    pub seed: u64,
    /// Gaussian bandwidth σ² in `exp(−‖x−y‖²/(2σ²))`.
    pub sigma2: f64,
    /// Single coherence threshold for the rotation sweep; `None` sweeps 0.8..=1.
    pub mu: Option<f64>,
    pub e0: f64,
    /// Regularizer (Markov, KBR, deflection) or step size (kLMS).
    pub lambda: f64,
    /// KBR posterior regularizer or kLMS stabilizer.
    pub epsilon: f64,
    pub domains: usize,
    pub perms: usize,
    pub level: f64,
    /// Single coupling for the Markov test; `None` sweeps 0..=1 by 0.1.
    pub coupling: Option<f64>,
    pub theta_steps: usize,
    /// Filtering horizon of the KBR experiment.
    pub steps: usize,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            n_samples: 512,
            seed: 0,
            sigma2: 1.0,
            mu: None,
            e0: 0.1,
            lambda: 0.0,
            epsilon: 1e-4,
            domains: 8,
            perms: 100,
            level: 0.05,
            coupling: None,
            theta_steps: 18,
            steps: 300,
            output_path: PathBuf::from(format!("{}.csv", experiment.name())),
        };
        match experiment {
            Experiment::KbrPredict => {
                c.sigma2 = 0.5;
                c.lambda = 1e-4;
                c.epsilon = 1e-4;
            }
            Experiment::KrlsPredict | Experiment::KlmsPredict => {
                c.n_samples = 3000;
                c.sigma2 = ADAPTIVE_KERNEL_WIDTH / 2.0;
                c.lambda = 0.09;
                c.epsilon = 0.03;
                c.e0 = if experiment == Experiment::KrlsPredict { 0.1 } else { 0.7 };
            }
            Experiment::MarkovTest => c.lambda = CondTestConfig::default().reg_lambda,
            Experiment::MercerCheck => c.n_samples = 1000,
            Experiment::DeflectionDemo => {
                c.n_samples = 20_000;
                c.lambda = 0.0;
            }
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_samples < 8 {
            return bad(format!("n must be ≥ 8, got {}", self.n_samples));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return bad(format!("level must lie in (0, 1], got {}", self.level));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu <= 1.0) {
                return bad(format!("mu must lie in (0, 1], got {mu}"));
            }
        }
        if !(self.lambda >= 0.0) || !(self.epsilon >= 0.0) || !(self.e0 >= 0.0) {
            return bad("lambda, epsilon and e0 must be ≥ 0".into());
        }
        match self.experiment {
            Experiment::HsicRotation if self.theta_steps == 0 => bad("theta-steps must be ≥ 1".into()),
            Experiment::HsicRotation if self.perms < 20 => bad("at least 20 permutations are required".into()),
            Experiment::MarkovTest if self.perms == 0 => bad("at least one permutation is required".into()),
            Experiment::MarkovTest if 4 * self.domains > self.n_samples || self.domains == 0 => {
                bad(format!("{} domains need at least {} samples", self.domains, 4 * self.domains.max(1)))
            }
            Experiment::MarkovTest | Experiment::KbrPredict if self.lambda == 0.0 => {
                bad("lambda must be positive".into())
            }
            Experiment::KbrPredict if self.epsilon == 0.0 || self.steps == 0 => {
                bad("epsilon and steps must be positive".into())
            }
            Experiment::KlmsPredict if !(self.e0 > 0.0 && self.e0 <= 1.0) => bad("kLMS e0 must lie in (0, 1]".into()),
            Experiment::KlmsPredict if self.lambda == 0.0 || self.epsilon == 0.0 => {
                bad("kLMS step size and stabilizer must be positive".into())
            }
            Experiment::MercerCheck if self.n_samples < 40 => bad("grid size must be ≥ 40 for 5 eigenpairs".into()),
            _ => Ok(()),
        }
    }
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // 12 significant digits
            Cell::Real(v) => write!(f, "{v:.11e}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// Tabular result plus a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: String,
}

impl ExperimentOutput {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the configured experiment and writes its CSV.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let out = compute_experiment(config)?;
    out.write_csv(&config.output_path)?;
    Ok(out)
}

/// Runs the configured experiment without touching the file system.
pub fn compute_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        Experiment::HsicRotation => hsic_rotation(config),
        Experiment::MarkovTest => markov_test(config),
        Experiment::KbrPredict => kbr_predict(config),
        Experiment::KrlsPredict | Experiment::KlmsPredict => adaptive_predict(config),
        Experiment::MercerCheck => mercer_check(config),
        Experiment::DeflectionDemo => deflection_demo(config),
    }
}

fn as_points(v: &[f64]) -> Vec<[f64; 1]> {
    v.iter().map(|&x| [x]).collect()
}

/// One `(θ, μ)` cell of the rotation sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationPoint {
    pub theta: f64,
    pub mu: f64,
    pub hsic: f64,
    pub dict_size: usize,
}

/// Sparse HSIC of the rotated pair over `θ = kπ/(2·steps)`, `k = 0..=steps`, for each `μ`.
/// The same base sample is rotated at every angle.
pub fn rotation_sweep(n: usize, theta_steps: usize, mus: &[f64], sigma2: f64, seed: u64) -> Result<Vec<RotationPoint>> {
    let spec = KernelSpec::gaussian(1, sigma2)?;
    let grid: Vec<(f64, f64)> = (0..=theta_steps)
        .flat_map(|k| {
            let theta = k as f64 * std::f64::consts::FRAC_PI_2 / theta_steps as f64;
            mus.iter().map(move |&mu| (theta, mu))
        })
        .collect();
    grid.into_par_iter()
        .map(|(theta, mu)| {
            let (x, y) = gen_rotation_pair(n, theta, seed);
            let d = sparse_hsic(&spec, &spec, &as_points(&x), &as_points(&y), mu)?;
            Ok(RotationPoint { theta, mu, hsic: d.hsic(), dict_size: d.len() })
        })
        .collect()
}

fn hsic_rotation(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mus: Vec<f64> = match c.mu {
        Some(mu) if mu < 1.0 => vec![mu, 1.0],
        Some(_) => vec![1.0],
        None => vec![0.8, 0.85, 0.9, 0.95, 1.0],
    };
    let sweep = rotation_sweep(c.n_samples, c.theta_steps, &mus, c.sigma2, c.seed)?;
    let spec = KernelSpec::gaussian(1, c.sigma2)?;
    let (x, y) = gen_rotation_pair(c.n_samples, std::f64::consts::FRAC_PI_4, c.seed);
    let test = independence_perm_test(&as_points(&x), &as_points(&y), &spec, &spec, c.perms, c.level, c.seed)?;
    let peak = sweep.iter().filter(|p| p.mu == 1.0).map(|p| p.hsic).fold(f64::MIN, f64::max);
    let rows = sweep
        .iter()
        .map(|p| vec![Cell::Real(p.theta), Cell::Real(p.mu), Cell::Real(p.hsic), Cell::Int(p.dict_size as i64)])
        .collect();
    Ok(ExperimentOutput {
        header: vec!["theta", "mu", "hsic", "dict_size"],
        rows,
        summary: format!(
            "hsic-rotation: n={} peak exact HSIC {:.4e}; at θ=π/4 HSIC {:.4e} vs threshold {:.4e} ({})",
            c.n_samples,
            peak,
            test.statistic,
            test.threshold,
            if test.reject { "dependent" } else { "not rejected" }
        ),
    })
}

/// The three chain hypotheses of the Markov experiment, as `(label, a, b, c)` index
/// triples into `(X, Y, Z)`: each tests `a ⊥ b | c`.
pub const MARKOV_HYPOTHESES: [(&str, usize, usize, usize); 3] =
    [("X-Z-Y", 0, 1, 2), ("Y-X-Z", 1, 2, 0), ("X-Y-Z", 0, 2, 1)];

/// Result of one hypothesis at one coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPoint {
    pub coupling: f64,
    pub hypothesis: &'static str,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

/// Runs the three chain tests on one Markov-triple sample.
pub fn markov_point(n: usize, coupling: f64, sigma2: f64, config: &CondTestConfig, seed: u64) -> Result<Vec<MarkovPoint>> {
    let (x, y, z) = gen_markov_triple(n, coupling, seed);
    let vars = [as_points(&x), as_points(&y), as_points(&z)];
    let spec = KernelSpec::gaussian(1, sigma2)?;
    MARKOV_HYPOTHESES
        .iter()
        .map(|&(label, a, b, cnd)| {
            let t = markov_cond_test(&vars[a], &vars[b], &vars[cnd], &spec, &spec, &spec, config, seed)?;
            Ok(MarkovPoint {
                coupling,
                hypothesis: label,
                statistic: t.statistic,
                threshold: t.threshold,
                reject: t.reject,
            })
        })
        .collect()
}

fn markov_test(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let couplings: Vec<f64> = match c.coupling {
        Some(a) => vec![a],
        None => (0..=10).map(|k| k as f64 / 10.0).collect(),
    };
    let cfg = CondTestConfig {
        reg_lambda: c.lambda,
        num_domains: c.domains,
        num_perms: c.perms,
        level: c.level,
        use_normalized: true,
    };
    let mut rows = Vec::new();
    let mut rejected = [0usize; 3];
    for &a in &couplings {
        for (h, p) in markov_point(c.n_samples, a, c.sigma2, &cfg, c.seed)?.into_iter().enumerate() {
            rejected[h] += usize::from(p.reject);
            rows.push(vec![
                Cell::Real(p.coupling),
                Cell::Text(p.hypothesis.to_string()),
                Cell::Real(p.statistic),
                Cell::Real(p.threshold),
                Cell::Int(i64::from(p.reject)),
            ]);
        }
    }
    let summary = format!(
        "markov-test: n={} over {} couplings, rejections X-Z-Y {} / Y-X-Z {} / X-Y-Z {}",
        c.n_samples,
        couplings.len(),
        rejected[0],
        rejected[1],
        rejected[2]
    );
    Ok(ExperimentOutput { header: vec!["coupling", "hypothesis", "statistic", "threshold", "reject"], rows, summary })
}

/// One prediction of an AR experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub time: usize,
    pub truth: f64,
    pub predicted: f64,
    pub dict_size: usize,
}

/// Noise level of the AR series.
pub const AR_NOISE_SD: f64 = 0.1;

/// Kernel Bayes filter on the nonlinear AR series: trains on `train_n + 1` states
/// `(z_i, z_{i+1})` with observations `z_i`, then filters `steps` new observations,
/// predicting `z_{k+1}` as the second coordinate of the decoded state.
///
/// Returns the predictions and the number of pre-image failures (whose best-effort
/// point is used).
pub fn kbr_ar_run(
    train_n: usize,
    steps: usize,
    sigma2: f64,
    reg_lambda: f64,
    reg_epsilon: f64,
    seed: u64,
) -> Result<(Vec<Prediction>, usize)> {
    let z = gen_nl_ar(train_n + steps + 3, AR_NOISE_SD, seed)?;
    let xs: Vec<Vec<f64>> = (0..=train_n).map(|i| vec![z[i], z[i + 1]]).collect();
    let ys: Vec<Vec<f64>> = (0..=train_n).map(|i| vec![z[i]]).collect();
    let model = KbrModel::new(KernelSpec::gaussian(2, sigma2)?, KernelSpec::gaussian(1, sigma2)?, xs, ys, reg_lambda, reg_epsilon)?;
    let mut state = model.init(&[z[train_n + 1]])?;
    let mut out = Vec::with_capacity(steps);
    let mut failures = 0;
    for k in (train_n + 2)..(train_n + 2 + steps) {
        state = model.step(&state, &[z[k]])?;
        let opts = PreimageOptions { seed: seed ^ (k as u64) << 20, num_restarts: 3, ..Default::default() };
        let point = match model.decode(&state, &opts) {
            Ok(p) => p.point,
            Err(Error::PreimageFailed { best_point, .. }) => {
                failures += 1;
                if best_point.iter().all(|v| v.is_finite()) {
                    best_point
                } else {
                    vec![0.0, 0.0]
                }
            }
            Err(e) => return Err(e),
        };
        out.push(Prediction { time: k + 1, truth: z[k + 1], predicted: point[1], dict_size: model.len() });
    }
    Ok((out, failures))
}

fn kbr_predict(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (preds, failures) = kbr_ar_run(c.n_samples, c.steps, c.sigma2, c.lambda, c.epsilon, c.seed)?;
    let rmse = (preds.iter().map(|p| (p.truth - p.predicted).powi(2)).sum::<f64>() / preds.len() as f64).sqrt();
    Ok(ExperimentOutput {
        header: vec!["n", "y_true", "y_pred", "sq_err"],
        rows: preds
            .iter()
            .map(|p| {
                vec![
                    Cell::Int(p.time as i64),
                    Cell::Real(p.truth),
                    Cell::Real(p.predicted),
                    Cell::Real((p.truth - p.predicted).powi(2)),
                ]
            })
            .collect(),
        summary: format!(
            "kbr-predict: N={} training pairs, {} steps, RMSE {:.4}, {} pre-image failures",
            c.n_samples, c.steps, rmse, failures
        ),
    })
}

/// Which online filter to run on the AR series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnlineKind {
    Krls { e0: f64 },
    Klms { e0: f64, step_size: f64, stabilizer: f64 },
}

/// Online one-step prediction of `z_n` from `(z_{n−1}, z_{n−2})` over a series of length `len`.
pub fn online_ar_run(kind: OnlineKind, len: usize, sigma2: f64, seed: u64) -> Result<Vec<Prediction>> {
    let z = gen_nl_ar(len, AR_NOISE_SD, seed)?;
    let spec = KernelSpec::gaussian(2, sigma2)?;
    let input = |n: usize| [z[n - 1], z[n - 2]];
    let mut filter: Box<dyn OnlineFilter> = match kind {
        OnlineKind::Krls { e0 } => Box::new(KrlsState::new(spec, e0, &input(2), z[2])?),
        OnlineKind::Klms { e0, step_size, stabilizer } => {
            Box::new(KlmsState::new(spec, e0, step_size, stabilizer, &input(2), z[2])?)
        }
    };
    let mut out = Vec::with_capacity(len.saturating_sub(3));
    for (n, &truth) in z.iter().enumerate().skip(3) {
        let predicted = filter.update(&input(n), truth)?;
        out.push(Prediction { time: n, truth, predicted, dict_size: filter.dictionary_len() });
    }
    Ok(out)
}

fn adaptive_predict(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = if c.experiment == Experiment::KrlsPredict {
        OnlineKind::Krls { e0: c.e0 }
    } else {
        OnlineKind::Klms { e0: c.e0, step_size: c.lambda, stabilizer: c.epsilon }
    };
    let preds = online_ar_run(kind, c.n_samples, c.sigma2, c.seed)?;
    let tail = &preds[preds.len().saturating_sub(500)..];
    let rmse = (tail.iter().map(|p| (p.truth - p.predicted).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    Ok(ExperimentOutput {
        header: vec!["n", "y_true", "y_pred", "sq_err", "dict_size"],
        rows: preds
            .iter()
            .map(|p| {
                vec![
                    Cell::Int(p.time as i64),
                    Cell::Real(p.truth),
                    Cell::Real(p.predicted),
                    Cell::Real((p.truth - p.predicted).powi(2)),
                    Cell::Int(p.dict_size as i64),
                ]
            })
            .collect(),
        summary: format!(
            "{}: e0={} RMSE over last {} samples {:.4}, dictionary {}",
            c.experiment,
            c.e0,
            tail.len(),
            rmse,
            preds.last().map_or(0, |p| p.dict_size)
        ),
    })
}

fn mercer_check(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let k = 5;
    let m = mercer_min_kernel(c.n_samples, k)?;
    let mut worst = 0.0f64;
    let rows = m
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &emp)| {
            let exact = min_kernel_eigenvalue(i + 1);
            let rel = (emp - exact).abs() / exact;
            worst = worst.max(rel);
            vec![Cell::Int(i as i64 + 1), Cell::Real(emp), Cell::Real(exact), Cell::Real(rel)]
        })
        .collect();
    Ok(ExperimentOutput {
        header: vec!["k", "lambda_emp", "lambda_analytic", "rel_err"],
        rows,
        summary: format!("mercer-check: G={} top-{k} eigenvalues, max relative error {:.3e}", c.n_samples, worst),
    })
}

/// Random SPD matrix `BBᵀ/d + 0.1 I` and mean shift for the deflection demo.
pub fn random_detection_problem(dim: usize, seed: u64) -> (Mat<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, 0);
    let b = Mat::from_fn(dim, dim, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let mut sigma = &b * b.transpose() * faer::Scale(1.0 / dim as f64);
    for i in 0..dim {
        sigma[(i, i)] += 0.1;
    }
    let mu0 = vec![0.0; dim];
    let mu1: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    (sigma, mu0, mu1)
}

fn deflection_demo(c: &ExperimentConfig) -> Result<ExperimentOutput> {
    let dim = 4;
    let (sigma, mu0, mu1) = random_detection_problem(dim, c.seed);
    let det = deflection_detector(&mu0, &mu1, sigma.as_ref(), c.lambda)?;
    let (vals, vecs) = crate::linalg::sym_eigen(sigma.as_ref())?;
    // Gaussian draws y = μ + Σ^{1/2} g under each hypothesis
    let root = Mat::from_fn(dim, dim, |i, j| -> f64 { (0..dim).map(|k| vecs[(i, k)] * vals[k].max(0.0).sqrt() * vecs[(j, k)]).sum() });
    let mut rng = stream_rng(c.seed, 1);
    let mut draw = |mean: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        (0..dim).map(|i| mean[i] + (0..dim).map(|j| root[(i, j)] * g[j]).sum::<f64>()).collect()
    };
    let h0: Vec<Vec<f64>> = (0..c.n_samples).map(|_| draw(&mu0)).collect();
    let h1: Vec<Vec<f64>> = (0..c.n_samples).map(|_| draw(&mu1)).collect();
    let mc = |f: &[f64]| -> f64 {
        let s = |y: &Vec<f64>| f.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let s0: Vec<f64> = h0.iter().map(s).collect();
        let m0 = s0.iter().sum::<f64>() / s0.len() as f64;
        let m1 = h1.iter().map(s).sum::<f64>() / h1.len() as f64;
        let v0 = s0.iter().map(|v| (v - m0) * (v - m0)).sum::<f64>() / (s0.len() - 1) as f64;
        (m1 - m0).powi(2) / v0
    };
    let diff: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let mut rows = vec![
        vec![
            Cell::Text("optimal".into()),
            Cell::Int(0),
            Cell::Real(deflection(&det.direction, &mu0, &mu1, sigma.as_ref())),
            Cell::Real(mc(&det.direction)),
        ],
        vec![
            Cell::Text("matched_filter".into()),
            Cell::Int(0),
            Cell::Real(deflection(&diff, &mu0, &mu1, sigma.as_ref())),
            Cell::Real(mc(&diff)),
        ],
    ];
    let mut dir_rng = stream_rng(c.seed, 2);
    let mut best_random = 0.0f64;
    for k in 0..20 {
        let f: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut dir_rng)).collect();
        let d = deflection(&f, &mu0, &mu1, sigma.as_ref());
        best_random = best_random.max(d);
        rows.push(vec![Cell::Text("random".into()), Cell::Int(k + 1), Cell::Real(d), Cell::Real(mc(&f))]);
    }
    Ok(ExperimentOutput {
        header: vec!["direction", "index", "deflection", "deflection_mc"],
        rows,
        summary: format!(
            "deflection-demo: d_max {:.6} (best of 20 random directions {:.6})",
            det.max_deflection, best_random
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn cell_formatting() {
        assert_eq!(Cell::Real(0.1).to_string(), "1.00000000000e-1");
        assert_eq!(Cell::Int(42).to_string(), "42");
    }

    #[test]
    fn validation_rejects_small_n() {
        let mut c = ExperimentConfig::new(Experiment::MercerCheck);
        c.n_samples = 4;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(Experiment::MarkovTest);
        c.domains = 200;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mercer_rows() {
        let out = compute_experiment(&ExperimentConfig::new(Experiment::MercerCheck)).unwrap();
        assert_eq!(out.rows.len(), 5);
        for row in &out.rows {
            match row[3] {
                Cell::Real(r) => assert!(r < 0.02),
                _ => panic!("rel_err must be real"),
            }
        }
    }
}
