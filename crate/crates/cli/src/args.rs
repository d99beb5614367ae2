use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rpca::penalty::{MuSchedule, PenaltyKind};
use rpca::solver::{BetaRule, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "rpca", version, about = "Robust PCA and subspace tracking on the Grassmannian")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a matrix into low-rank and sparse parts.
    Decompose(DecomposeArgs),
    /// Track a subspace over a stream of samples.
    Track(TrackArgs),
    /// Phase-transition sweep over relative rank and outlier density.
    Phase(PhaseArgs),
    /// Recovery error under additive Gaussian noise at several SNRs.
    Noise(NoiseArgs),
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "atan")]
    pub penalty: PenaltyKind,
    /// Exponent of the lpnorm penalty.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Smoothing range `start:end` (or a single value for a constant μ).
    /// Defaults to the penalty's standard range.
    #[arg(long)]
    pub mu: Option<MuRange>,
    /// Outer iterations of the alternating scheme.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Upper bound on the rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "hs")]
    pub beta: BetaRule,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl SolverArgs {
    pub fn mu_range(&self) -> MuRange {
        self.mu.unwrap_or_else(|| {
            let (start, end) = SolverConfig::default_mu_range(self.penalty);
            MuRange { start, end }
        })
    }

    pub fn config(&self, rank: usize) -> Result<SolverConfig> {
        if rank == 0 {
            bail!("invalid parameter: --rank must be at least 1");
        }
        if self.iters == 0 {
            bail!("invalid parameter: --iters must be at least 1");
        }
        let range = self.mu_range();
        let schedule = if self.iters == 1 || range.start == range.end {
            MuSchedule::constant(range.start, self.iters)?
        } else {
            MuSchedule::new(range.start, range.end, self.iters)?
        };
        let mut cfg = SolverConfig::new(rank, self.penalty, self.p, schedule);
        cfg.beta = self.beta;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuRange {
    pub start: f64,
    pub end: f64,
}

impl FromStr for MuRange {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| anyhow!("expected a number in mu range, got `{v}`"));
        match s.split_once(':') {
            Some((a, b)) => Ok(MuRange { start: parse(a)?, end: parse(b)? }),
            None => {
                let v = parse(s)?;
                Ok(MuRange { start: v, end: v })
            }
        }
    }
}

/// `key=value` pairs separated by commas, e.g. `m=200,n=200,k=20,rho=0.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec(BTreeMap<String, String>);

impl FromStr for SynthSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) =
                part.split_once('=').ok_or_else(|| anyhow!("expected key=value in synth spec, got `{part}`"))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(SynthSpec(map))
    }
}

impl SynthSpec {
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| anyhow!("invalid value `{v}` for synth key `{key}`")))
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| anyhow!("synth spec is missing `{key}`"))
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => bail!("unknown synth key `{k}` (allowed: {})", allowed.join(", ")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "synth"]))]
pub struct DecomposeArgs {
    /// Data matrix (binary, or text for .csv/.txt).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Observed entries as `row,col` lines; all entries when absent.
    #[arg(long, requires = "input")]
    pub mask: Option<PathBuf>,
    /// Ground-truth low-rank matrix, for error reporting.
    #[arg(long, requires = "input")]
    pub truth: Option<PathBuf>,
    /// Synthetic instance `m=..,n=..,k=..,rho=..`.
    #[arg(long)]
    pub synth: Option<SynthSpec>,
    /// Fraction of uniformly sampled observed entries for synthetic data.
    #[arg(long, requires = "synth")]
    pub sample: Option<f64>,
    /// Add Gaussian noise at this SNR (dB, relative to L) to synthetic data.
    #[arg(long, requires = "synth")]
    pub snr: Option<f64>,
    /// Output directory for L̂, Ŝ, U, Y and the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["stream", "synth"]))]
pub struct TrackArgs {
    /// Column stream in the binary matrix format; columns are samples.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Synthetic stream `m=..,n=..,k=..,rho=..[,switch=..]`.
    #[arg(long)]
    pub synth: Option<SynthSpec>,
    /// Number of leading samples used for the robust initialization.
    #[arg(long, default_value_t = 50)]
    pub init_count: usize,
    /// Forgetting factor.
    #[arg(long, default_value_t = 0.05)]
    pub w: f64,
    /// Fixed step length along the merged gradient.
    #[arg(long, default_value_t = rpca::tracking::DEFAULT_STEP)]
    pub step: f64,
    /// Residuals above this fraction of max|x̂| count as outliers in the
    /// per-sample sparsity column.
    #[arg(long, default_value_t = 0.1)]
    pub sparsity_tol: f64,
    /// Output directory for the per-sample log and the final basis.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    /// Matrix size (m = n).
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Relative ranks k/m.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5])]
    pub ranks: Vec<f64>,
    /// Relative outlier densities.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5])]
    pub rhos: Vec<f64>,
    /// Seeds per cell.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Output directory for phase.csv; CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Matrix size (m = n); k/m and the outlier density are fixed at 0.1.
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// SNR values in dB; `inf` means no noise.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0])]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Output directory for noise.csv; CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Creates `dir` if needed and returns the path of `name` inside it.
pub fn output_file(dir: &std::path::Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_range_parses() {
        assert_eq!("0.9:1e-4".parse::<MuRange>().unwrap(), MuRange { start: 0.9, end: 1e-4 });
        assert_eq!("2".parse::<MuRange>().unwrap(), MuRange { start: 2.0, end: 2.0 });
        assert!("a:b".parse::<MuRange>().is_err());
    }

    #[test]
    fn synth_spec_parses() {
        let s: SynthSpec = "m=20,n=10, k=2,rho=0.1".parse().unwrap();
        assert_eq!(s.require::<usize>("k").unwrap(), 2);
        assert_eq!(s.get::<f64>("switch").unwrap(), None);
        assert!(s.check_keys(&["m", "n", "k"]).is_err());
        assert!("m20".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn iters_one_gives_a_constant_schedule() {
        let cli = Cli::try_parse_from(["rpca", "phase", "--iters", "1", "--mu", "2:0.05"]).unwrap();
        let Command::Phase(args) = cli.command else { panic!() };
        let cfg = args.solver.config(3).unwrap();
        assert_eq!(cfg.mu.steps(), 1);
        assert_eq!(cfg.mu.mu0(), 2.0);
    }
}
