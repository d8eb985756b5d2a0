//! `twolocus` binary: sampling distributions for two linked loci via
//! asymptotic expansion in the recombination rate, Pade resummation, and
//! exact linear-system solves.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use twolocus::error::{Error, Result};
use twolocus::model::SampleConfig;
use twolocus_cli::emit::{deliver, Format};
use twolocus_cli::run::{self, CoeffStore, Method};
use twolocus_cli::spec;

#[derive(Parser)]
#[command(
    name = "twolocus",
    version,
    about = "Two-locus sampling distributions: series coefficients, Pade evaluation, and exact solves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model preset (`paper-pim`: two alleles per locus, uniform parent-independent
    /// mutation, theta 1/100 at both loci)
    #[arg(long, default_value = "paper-pim")]
    model: String,
    /// Override the locus-A mutation rate (exact rational, e.g. `1/100`)
    #[arg(long)]
    theta_a: Option<String>,
    /// Override the locus-B mutation rate
    #[arg(long)]
    theta_b: Option<String>,
    /// Diploid selection at locus A, `sigma=[[..],[..]]` (symmetric)
    #[arg(long)]
    selection: Option<String>,
}

impl ModelArgs {
    fn build(&self) -> Result<twolocus::model::ModelParams> {
        spec::build_model(
            &self.model,
            self.theta_a.as_deref(),
            self.theta_b.as_deref(),
            self.selection.as_deref(),
        )
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output format
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output file (written atomically); stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Expansion coefficients q_0..q_M for one sample or all samples of a size
    Coeffs {
        #[command(flatten)]
        model: ModelArgs,
        /// Sample, e.g. `c=[[10,7],[2,1]]` or `a=[1,0];b=[0,1];c=[[0,0],[0,0]]`
        #[arg(long, required_unless_present = "all")]
        sample: Option<String>,
        /// Emit every sample of size given by --n
        #[arg(long, requires = "n")]
        all: bool,
        /// Sample size for --all
        #[arg(long)]
        n: Option<u32>,
        /// Highest expansion order
        #[arg(long = "M", default_value_t = 0)]
        big_m: u32,
        /// Drop the higher recursive base terms (on, off, auto)
        #[arg(long = "approx-g0", default_value = "auto")]
        approx_g0: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate methods over a grid of recombination rates
    Curve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        sample: String,
        /// Comma-separated rates (rationals or `inf`)
        #[arg(long)]
        rho: String,
        /// Comma-separated methods: ps:M, otr:M, pade:M, exact
        #[arg(long)]
        methods: String,
        /// Defect-heuristic window half-width around each rate
        #[arg(long, default_value = "25")]
        eps: String,
        #[arg(long = "approx-g0", default_value = "auto")]
        approx_g0: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Cumulative error distribution over all dimorphic samples of a size
    ErrorStudy {
        #[command(flatten)]
        model: ModelArgs,
        /// Sample size (gametes only, dimorphic at both loci)
        #[arg(long)]
        n: u32,
        /// Recombination rate (exact rational)
        #[arg(long)]
        rho: String,
        /// Comma-separated truncation orders, e.g. `0,2,4`
        #[arg(long = "M-list", default_value = "0,2,4")]
        m_list: String,
        #[arg(long, default_value = "25")]
        eps: String,
        #[arg(long = "approx-g0", default_value = "auto")]
        approx_g0: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a coefficient store for every sample up to a size
    Table {
        #[command(flatten)]
        model: ModelArgs,
        /// Largest sample size to include
        #[arg(long = "n-max")]
        n_max: u32,
        #[arg(long = "M", default_value_t = 2)]
        big_m: u32,
        #[arg(long = "approx-g0", default_value = "auto")]
        approx_g0: String,
        /// Store path (line-delimited JSON, written atomically)
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored expansion at a rate without recomputation
    Lookup {
        /// Coefficient store written by `table`
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        sample: String,
        /// Rate (rational or `inf`)
        #[arg(long)]
        rho: String,
        /// Evaluation method: ps:M, otr:M, or pade:M
        #[arg(long, default_value = "pade:2")]
        method: String,
        #[arg(long, default_value = "25")]
        eps: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sampling probability from the exact linear system
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        sample: String,
        /// Rate (rational or `inf`)
        #[arg(long)]
        rho: String,
        /// Use the floating-point solver (for larger samples)
        #[arg(long)]
        numeric: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn parse_sample_arg(s: &str) -> Result<SampleConfig> {
    spec::parse_sample(s)
}

fn parse_m_list(s: &str) -> Result<Vec<u32>> {
    let items: Vec<&str> = s.split(',').filter(|t| !t.trim().is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Invalid("empty order list".into()));
    }
    items
        .iter()
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Invalid(format!("bad order `{t}`")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Coeffs {
            model,
            sample,
            all,
            n,
            big_m,
            approx_g0,
            output,
        } => {
            let params = model.build()?;
            let approx = run::parse_approx(&approx_g0)?;
            let samples: Vec<SampleConfig> = if all {
                let n = n.expect("clap enforces --n with --all");
                twolocus::model::enumerate_all_samples(n, params.locus_a.k(), params.locus_b.k())
            } else {
                vec![parse_sample_arg(sample.as_deref().expect("clap enforces --sample"))?]
            };
            let table = run::cmd_coeffs(&params, &samples, big_m, approx)?;
            deliver(output.out.as_deref(), &table.render(output.format))
        }
        Command::Curve {
            model,
            sample,
            rho,
            methods,
            eps,
            approx_g0,
            output,
        } => {
            let params = model.build()?;
            let sample = parse_sample_arg(&sample)?;
            let rhos = spec::parse_rho_list(&rho)?;
            let methods = Method::parse_list(&methods)?;
            let eps = spec::parse_rational(&eps)?;
            let approx = run::parse_approx(&approx_g0)?;
            let table = run::cmd_curve(&params, &sample, &rhos, &methods, &eps, approx)?;
            deliver(output.out.as_deref(), &table.render(output.format))
        }
        Command::ErrorStudy {
            model,
            n,
            rho,
            m_list,
            eps,
            approx_g0,
            output,
        } => {
            let params = model.build()?;
            let rho = spec::parse_rational(&rho)?;
            let orders = parse_m_list(&m_list)?;
            let eps = spec::parse_rational(&eps)?;
            let approx = run::parse_approx(&approx_g0)?;
            let table = run::cmd_error_study(&params, n, &rho, &orders, &eps, approx)?;
            deliver(output.out.as_deref(), &table.render(output.format))
        }
        Command::Table {
            model,
            n_max,
            big_m,
            approx_g0,
            out,
        } => {
            let params = model.build()?;
            let approx = run::parse_approx(&approx_g0)?;
            let content = run::cmd_table(&params, n_max, big_m, approx)?;
            deliver(Some(&out), &content)
        }
        Command::Lookup {
            table,
            sample,
            rho,
            method,
            eps,
            output,
        } => {
            let content = std::fs::read_to_string(&table).map_err(|e| {
                Error::Invalid(format!("cannot read store {}: {e}", table.display()))
            })?;
            let store = CoeffStore::parse(&content)?;
            let sample = parse_sample_arg(&sample)?;
            let rho = spec::parse_rho(&rho)?;
            let method = Method::parse(&method)?;
            let eps = spec::parse_rational(&eps)?;
            let result = run::cmd_lookup(&store, &sample, &rho, &method, &eps)?;
            deliver(output.out.as_deref(), &result.render(output.format))
        }
        Command::Exact {
            model,
            sample,
            rho,
            numeric,
            output,
        } => {
            let params = model.build()?;
            let sample = parse_sample_arg(&sample)?;
            let rho = spec::parse_rho(&rho)?;
            let table = run::cmd_exact(&params, &sample, &rho, numeric)?;
            deliver(output.out.as_deref(), &table.render(output.format))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(twolocus_cli::exit_code(&e));
    }
}
