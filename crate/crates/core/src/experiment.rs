//! Simulation sweep harness: grid configuration, per-trial metrics, and
//! deterministic CSV export.
//!
//! The mean core tensor is drawn once per sweep; memberships, variances, and
//! noise are re-drawn each trial from an RNG stream derived from
//! `(seed, cell, trial)`, so results do not depend on scheduling.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::align_memberships;
use crate::hooi::{default_iters, HooiOptions};
use crate::linalg::sin_theta;
use crate::model::{
    sample_core, sample_membership_with, sample_noise, MixedModel, NoiseSpec,
};
use crate::spa::estimate_all;
use crate::tensor::Tensor3;

/// Sweep configuration: cubic tensor sizes, noise grids, and trial counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Cubic tensor side lengths, one sweep cell set per value.
    pub p_values: Vec<usize>,
    pub ranks: [usize; 3],
    pub delta: f64,
    pub sigma_max_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Maximum HOOI sweeps; 0 derives the count from the iteration rule.
    pub t_max: usize,
    pub tol: f64,
    /// Dirichlet concentration for the non-pure membership rows.
    pub dirichlet: f64,
}

impl ExperimentConfig {
    /// The shipped defaults: delta 10, ranks (3,3,3), alpha 1, sigma_max
    /// 1 to 96 by 5, p 100 to 500 by 50, 10 trials per cell.
    pub fn paper_default() -> Self {
        Self {
            p_values: (100..=500).step_by(50).collect(),
            ranks: [3, 3, 3],
            delta: 10.0,
            sigma_max_values: (0..20).map(|i| 1.0 + 5.0 * i as f64).collect(),
            alpha_values: vec![1.0],
            trials: 10,
            seed: 1,
            t_max: 0,
            tol: 1e-9,
            dirichlet: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.sigma_max_values.is_empty() || self.alpha_values.is_empty()
        {
            return Err(Error::Argument("grids must be nonempty".into()));
        }
        if self.trials < 1 {
            return Err(Error::Argument("trials must be >= 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Argument("delta must be > 0".into()));
        }
        if self.sigma_max_values.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Argument("sigma_max values must be >= 0".into()));
        }
        if self.alpha_values.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Argument("alpha values must be > 0".into()));
        }
        let r_max = *self.ranks.iter().max().unwrap();
        if let Some(&p) = self.p_values.iter().find(|&&p| p < r_max) {
            return Err(Error::Argument(format!("rank {r_max} exceeds dimension {p}")));
        }
        Ok(())
    }

    /// Parses the flat `key = value` configuration format.  Arrays are comma
    /// lists; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::paper_default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64_list = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| Error::Parse {
                            line: n + 1,
                            msg: format!("bad real `{}`", t.trim()),
                        })
                    })
                    .collect()
            };
            let parse_usize_list = |v: &str| -> Result<Vec<usize>> {
                v.split(',')
                    .map(|t| {
                        t.trim().parse::<usize>().map_err(|_| Error::Parse {
                            line: n + 1,
                            msg: format!("bad integer `{}`", t.trim()),
                        })
                    })
                    .collect()
            };
            match key {
                "p" => cfg.p_values = parse_usize_list(value)?,
                "ranks" => {
                    let r = parse_usize_list(value)?;
                    if r.len() != 3 {
                        return Err(Error::Parse {
                            line: n + 1,
                            msg: "ranks must have three entries".into(),
                        });
                    }
                    cfg.ranks = [r[0], r[1], r[2]];
                }
                "delta" => cfg.delta = parse_f64_list(value)?[0],
                "sigma_max" => cfg.sigma_max_values = parse_f64_list(value)?,
                "alpha" => cfg.alpha_values = parse_f64_list(value)?,
                "trials" => cfg.trials = parse_usize_list(value)?[0],
                "seed" => {
                    cfg.seed = value.parse::<u64>().map_err(|_| Error::Parse {
                        line: n + 1,
                        msg: format!("bad seed `{value}`"),
                    })?
                }
                "t_max" => cfg.t_max = parse_usize_list(value)?[0],
                "tol" => cfg.tol = parse_f64_list(value)?[0],
                "dirichlet" => cfg.dirichlet = parse_f64_list(value)?[0],
                other => {
                    return Err(Error::Parse {
                        line: n + 1,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid cells in sweep order: `(p, sigma_max, alpha)`.
    pub fn cells(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &p in &self.p_values {
            for &s in &self.sigma_max_values {
                for &a in &self.alpha_values {
                    out.push((p, s, a));
                }
            }
        }
        out
    }
}

/// Metrics from one successful trial.
#[derive(Debug, Clone)]
pub struct TrialMetrics {
    pub l2inf: [f64; 3],
    pub avg_l1: [f64; 3],
    pub sintheta: [f64; 3],
    pub iterations: usize,
}

/// One simulation trial's configuration and outcome.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub cell: usize,
    pub trial: usize,
    pub dims: [usize; 3],
    pub ranks: [usize; 3],
    pub sigma_max: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Derived per-trial RNG seed.
    pub seed: u64,
    /// `None` when the trial failed; the status carries the error.
    pub metrics: Option<TrialMetrics>,
    pub status: String,
    /// Wall-clock duration; diagnostic only, never serialized.
    pub wall_ms: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed from `(master seed, cell, trial)`.
pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(cell.wrapping_add(1))) ^ splitmix64(trial.wrapping_add(0x517C_C1B7_2722_0A95)))
}

fn run_trial(
    core: &Tensor3,
    cfg: &ExperimentConfig,
    p: usize,
    sigma_max: f64,
    alpha: f64,
    seed: u64,
) -> Result<TrialMetrics> {
    let ranks = cfg.ranks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pis = [
        sample_membership_with(p, ranks[0], cfg.dirichlet, &mut rng)?,
        sample_membership_with(p, ranks[1], cfg.dirichlet, &mut rng)?,
        sample_membership_with(p, ranks[2], cfg.dirichlet, &mut rng)?,
    ];
    let model = MixedModel::new(core.clone(), pis)?;
    let noise = sample_noise(model.dims(), &NoiseSpec::new(sigma_max, alpha)?, &mut rng)?;
    let that = model.signal.add(&noise)?;

    let t_max = if cfg.t_max == 0 {
        let snr = if sigma_max > 0.0 { cfg.delta / sigma_max } else { f64::INFINITY };
        default_iters(model.dims(), ranks, snr, model.kappa)
    } else {
        cfg.t_max
    };
    let opts = HooiOptions { t_max, tol: cfg.tol };
    let out = estimate_all(&that, ranks, &opts)?;

    let mut l2inf = [0.0f64; 3];
    let mut avg_l1 = [0.0f64; 3];
    let mut sintheta = [0.0f64; 3];
    for k in 0..3 {
        let a = align_memberships(&out.memberships[k].cleaned, &model.memberships[k])?;
        l2inf[k] = a.l2inf_error;
        avg_l1[k] = a.avg_l1_error;
        sintheta[k] = sin_theta(&model.factors[k], &out.factors.factors[k])?;
    }
    Ok(TrialMetrics { l2inf, avg_l1, sintheta, iterations: out.factors.iterations_run })
}

/// Runs the full sweep.  Records come back sorted by `(cell, trial)` and are
/// identical for a fixed seed regardless of thread count.  Failed trials are
/// recorded with an error status, not propagated.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut core_rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed));
    let core = sample_core(cfg.ranks, cfg.delta, &mut core_rng)?;

    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();

    let mut records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(cell, trial)| {
            let (p, sigma_max, alpha) = cells[cell];
            let seed = trial_seed(cfg.seed, cell as u64, trial as u64);
            let start = std::time::Instant::now();
            let result = run_trial(&core, cfg, p, sigma_max, alpha, seed);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let (metrics, status) = match result {
                Ok(m) => (Some(m), "ok".to_string()),
                Err(e) => (None, format!("error: {e}").replace(',', ";")),
            };
            ExperimentRecord {
                cell,
                trial,
                dims: [p, p, p],
                ranks: cfg.ranks,
                sigma_max,
                alpha,
                delta: cfg.delta,
                seed,
                metrics,
                status,
                wall_ms,
            }
        })
        .collect();
    records.sort_by_key(|r| (r.cell, r.trial));
    Ok(records)
}

/// Fixed CSV schema, version 1.
pub const CSV_HEADER: &str = "trial,p1,p2,p3,r1,r2,r3,sigma_max,alpha,delta,seed,l2inf_1,l2inf_2,l2inf_3,avg_l1_1,avg_l1_2,avg_l1_3,sintheta_1,sintheta_2,sintheta_3,iterations,status";

/// Reals are printed with 17 significant digits so the file round-trips
/// `f64` exactly.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes records to CSV (UTF-8, LF line endings, header row).
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.dims[0],
            r.dims[1],
            r.dims[2],
            r.ranks[0],
            r.ranks[1],
            r.ranks[2],
            fmt_real(r.sigma_max),
            fmt_real(r.alpha),
            fmt_real(r.delta),
            r.seed
        );
        match &r.metrics {
            Some(m) => {
                for v in m.l2inf.iter().chain(&m.avg_l1).chain(&m.sintheta) {
                    let _ = write!(out, ",{}", fmt_real(*v));
                }
                let _ = write!(out, ",{}", m.iterations);
            }
            None => {
                out.push_str(&",".repeat(10));
            }
        }
        let _ = writeln!(out, ",{}", r.status);
    }
    out
}
