//! Command-line driver: simulation sweeps, single-tensor estimation, and rank
//! selection.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 usage error
//! (bad arguments, missing or malformed input files).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tmix_core::error::Error;
use tmix_core::eval::kmedians;
use tmix_core::experiment::{fmt_real, records_to_csv, run_sweep, ExperimentConfig};
use tmix_core::hooi::{auto_iters, HooiOptions};
use tmix_core::rank::rank_select;
use tmix_core::spa::estimate_all;
use tmix_core::tensor::parse_tensor_text;
use tmix_core::Tensor3;

#[derive(Parser)]
#[command(name = "tmix", about = "Mixed-membership estimation for 3-mode tensors")]
struct Cli {
    /// Seed for all randomized steps.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation sweep from a config file and write a CSV of metrics.
    Simulate {
        /// Flat `key = value` config; missing keys take the shipped defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-mode memberships of a tensor file.
    Estimate(EstimateArgs),
    /// Pick per-mode ranks by the spectral elbow method.
    RankSelect {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        max_rank: usize,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    tensor: PathBuf,
    /// Target multilinear ranks, e.g. `3,3,3`.
    #[arg(long, value_parser = parse_ranks)]
    ranks: [usize; 3],
    /// Also cluster factor rows into discrete community labels.
    #[arg(long)]
    kmedians: bool,
    /// Fixed sweep count.
    #[arg(long, conflicts_with = "auto_iters")]
    iters: Option<usize>,
    /// Derive the sweep count from the data spectrum.
    #[arg(long)]
    auto_iters: bool,
    /// Convergence threshold on the per-sweep subspace change.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

fn parse_ranks(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad rank `{t}`")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err("expected three comma-separated ranks".into());
    }
    Ok([parts[0], parts[1], parts[2]])
}

/// Usage-class failures exit 2; everything else that fails exits 1.
fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::Argument(_) | Error::Parse { .. } => ExitCode::from(2),
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn read_tensor(path: &PathBuf) -> Result<Tensor3, Error> {
    let text = std::fs::read_to_string(path)?;
    parse_tensor_text(&text)
}

fn cmd_simulate(seed_flag: Option<u64>, config: &PathBuf, out: &PathBuf) -> Result<(), Error> {
    let text = std::fs::read_to_string(config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed_flag {
        cfg.seed = s;
    }
    let records = run_sweep(&cfg)?;
    std::fs::write(out, records_to_csv(&records))?;
    let failed = records.iter().filter(|r| r.metrics.is_none()).count();
    eprintln!("{} trials written, {} failed", records.len(), failed);
    Ok(())
}

fn print_matrix(m: &tmix_core::nalgebra::DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_real(m[(i, j)])).collect();
        println!("{}", row.join(","));
    }
}

fn cmd_estimate(seed: u64, a: &EstimateArgs) -> Result<(), Error> {
    let that = read_tensor(&a.tensor)?;
    let t_max = if let Some(n) = a.iters {
        n
    } else if a.auto_iters {
        auto_iters(&that, a.ranks)?
    } else {
        HooiOptions::default().t_max
    };
    let opts = HooiOptions { t_max, tol: a.tol };
    let out = estimate_all(&that, a.ranks, &opts)?;

    for k in 0..3 {
        let est = &out.memberships[k];
        println!("# mode {} membership ({} x {})", k + 1, est.cleaned.nrows(), est.cleaned.ncols());
        print_matrix(est.cleaned.matrix());
        let corners: Vec<String> = est.corners.indices.iter().map(|i| i.to_string()).collect();
        println!("# mode {} corners", k + 1);
        println!("{}", corners.join(","));
        if est.degenerate_rows > 0 {
            eprintln!(
                "warning: mode {}: {} rows had vanishing mass and were set uniform",
                k + 1,
                est.degenerate_rows
            );
        }
    }

    if a.kmedians {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..3 {
            let cluster = kmedians(out.factors.factors[k].matrix(), a.ranks[k], 10, 100, &mut rng)?;
            let labels: Vec<String> = cluster.labels.iter().map(|l| l.to_string()).collect();
            println!("# mode {} labels", k + 1);
            println!("{}", labels.join(","));
        }
    }

    println!("# subspace change trace (sweep,mode,sintheta)");
    for d in &out.factors.diagnostics {
        if let Some(c) = d.subspace_change {
            println!("{},{},{}", d.sweep, d.mode, fmt_real(c));
        }
    }
    println!("# summary");
    println!("iterations,{}", out.factors.iterations_run);
    Ok(())
}

fn cmd_rank_select(tensor: &PathBuf, max_rank: usize) -> Result<(), Error> {
    let that = read_tensor(tensor)?;
    let sel = rank_select(&that, max_rank)?;
    for k in 0..3 {
        if sel.degenerate[k] {
            eprintln!("warning: mode {}: degenerate spectrum, reporting rank 1", k + 1);
        } else if sel.used_plain_singular_values[k] {
            eprintln!("warning: mode {}: fell back to plain singular values", k + 1);
        }
    }
    println!("{},{},{}", sel.ranks[0], sel.ranks[1], sel.ranks[2]);
    Ok(())
}

fn main() -> ExitCode {
    let raw_seed_given = std::env::args().any(|a| a == "--seed" || a.starts_with("--seed="));
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out } => {
            cmd_simulate(raw_seed_given.then_some(cli.seed), config, out)
        }
        Command::Estimate(args) => cmd_estimate(cli.seed, args),
        Command::RankSelect { tensor, max_rank } => cmd_rank_select(tensor, *max_rank),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
