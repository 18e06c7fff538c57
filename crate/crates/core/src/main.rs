use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rkhs_kit::experiments::{run_experiment, Experiment, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "rkhs-kit", version, about = "Run a kernel-method experiment and write its CSV")]
struct Cli {
    /// hsic-rotation | markov-test | kbr-predict | krls-predict | klms-predict | mercer-check | deflection-demo
    experiment: Experiment,
    /// Sample size (meaning depends on the experiment)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian bandwidth σ² in exp(−‖x−y‖²/(2σ²))
    #[arg(long)]
    sigma2: Option<f64>,
    /// Coherence threshold of the sparse HSIC dictionary
    #[arg(long)]
    mu: Option<f64>,
    /// Sparsification threshold of kRLS / kLMS
    #[arg(long)]
    e0: Option<f64>,
    /// Regularizer (markov, kbr, deflection) or kLMS step size
    #[arg(long)]
    lambda: Option<f64>,
    /// KBR posterior regularizer or kLMS stabilizer
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    domains: Option<usize>,
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    /// Single coupling for markov-test (default sweeps 0..1)
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    theta_steps: Option<usize>,
    /// Filtering horizon of kbr-predict
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path (default: <experiment>.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn into_config(self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(self.experiment);
        c.seed = self.seed;
        c.mu = self.mu;
        c.coupling = self.coupling;
        if let Some(v) = self.n {
            c.n_samples = v;
        }
        if let Some(v) = self.sigma2 {
            c.sigma2 = v;
        }
        if let Some(v) = self.e0 {
            c.e0 = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.domains {
            c.domains = v;
        }
        if let Some(v) = self.perms {
            c.perms = v;
        }
        if let Some(v) = self.level {
            c.level = v;
        }
        if let Some(v) = self.theta_steps {
            c.theta_steps = v;
        }
        if let Some(v) = self.steps {
            c.steps = v;
        }
        if let Some(v) = self.out {
            c.output_path = v;
        }
        c
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Ok(raw) = std::env::var("RKHS_KIT_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: RKHS_KIT_THREADS must be a positive integer, got '{raw}'");
                return ExitCode::from(2);
            }
        }
    }

    let config = cli.into_config();
    match run_experiment(&config) {
        Ok(out) => {
            println!("{}", out.summary);
            println!("wrote {} rows to {}", out.rows.len(), config.output_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
