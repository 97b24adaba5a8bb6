//! The experiment commands. Each produces one [`Table`] and a one-line
//! summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use isac_core::benchmarks::{
    expected_crb_exact, expected_crb_inexact, solve_known_angle, BenchmarkQuadrature, BenchmarkSpec,
};
use isac_core::estimation::{monte_carlo_mse, monte_carlo_mse_with, Estimator, GridSpec};
use isac_core::fisher::{
    beampattern, compute_sensing_matrices, crb_expected, pcrb, pcrb_upper, rate, Covariance,
    SensingMatrices,
};
use isac_core::model::{
    angle_lo, rician_channel, ChannelMatrix, GaussianMixture, SystemConfig, TargetEnvironment,
};
use isac_core::numerics::{QuadratureSpec, RANK_TOL};
use isac_core::solver_optimal::{
    capacity_waterfilling, check_feasibility, solve_p3, BarrierSettings,
};
use isac_core::solver_suboptimal::{sensing_only_upper, solve_p4, Branch, EllipsoidSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{linear_to_db, ExperimentConfig, Format};
use crate::output::{Cell, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Feasibility,
    Bounds,
    Beampattern,
    SolveOptimal,
    SolveSuboptimal,
    Benchmark,
    Montecarlo,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Feasibility => "feasibility",
            Command::Bounds => "bounds",
            Command::Beampattern => "beampattern",
            Command::SolveOptimal => "solve-optimal",
            Command::SolveSuboptimal => "solve-suboptimal",
            Command::Benchmark => "benchmark",
            Command::Montecarlo => "montecarlo",
            Command::Sweep => "sweep",
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    /// Monte Carlo seed.
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(mc) = cfg.montecarlo.as_mut() {
            if let Some(s) = self.seed {
                mc.seed = s;
            }
            if let Some(t) = self.trials {
                mc.trials = t;
            }
        }
    }
}

pub struct Outcome {
    pub table: Table,
    pub summary: String,
}

/// Points of the beampattern grid.
pub const BEAMPATTERN_POINTS: usize = 1024;

/// Everything derived from a configuration before any command runs.
pub struct Scenario {
    pub config: ExperimentConfig,
    pub system: SystemConfig<f64>,
    pub prior: GaussianMixture<f64>,
    pub env: TargetEnvironment<f64>,
    pub channel: ChannelMatrix<f64>,
    pub matrices: SensingMatrices<f64>,
    pub quadrature: QuadratureSpec<f64>,
    pub bench_quadrature: BenchmarkQuadrature<f64>,
}

impl Scenario {
    pub fn build(config: &ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let system = config.system_config()?;
        let prior = config.prior_model()?;
        let env = config.environment()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.channel.seed);
        let channel = rician_channel(&system, &config.geometry(), &mut rng)?;
        let quadrature = QuadratureSpec::default();
        let matrices = compute_sensing_matrices(&prior, &system, &quadrature)?;
        Ok(Self {
            config: config.clone(),
            system,
            prior,
            env,
            channel,
            matrices,
            quadrature,
            bench_quadrature: BenchmarkQuadrature::default(),
        })
    }

    fn rbar(&self) -> f64 {
        self.config.rate_target
    }

    /// Metadata shared by every table: enough to re-run any row.
    fn stamp(&self, t: &mut Table) {
        let b = BarrierSettings::<f64>::default();
        let e = EllipsoidSettings::<f64>::default();
        let q = &self.quadrature;
        let bq = &self.bench_quadrature;
        t.meta("tool", format!("isac {}", env!("CARGO_PKG_VERSION")));
        t.meta("channel_seed", self.config.channel.seed);
        t.meta(
            "alpha",
            "real and positive (phase 0), magnitude from the normalised SNR",
        );
        t.meta(
            "barrier",
            format!(
                "initial_weight={:?} weight_factor={:?} rel_tol={:?} abs_tol={:?} centering_tol={:?}",
                b.initial_weight, b.weight_factor, b.rel_tol, b.abs_tol, b.centering_tol
            ),
        );
        t.meta(
            "ellipsoid",
            format!(
                "radius_tol={:?} residual_tol={:?} rate_tol={:?} max_iterations={}",
                e.radius_tol, e.residual_tol, e.rate_tol, e.max_iterations
            ),
        );
        t.meta(
            "quadrature",
            format!(
                "panels={} nodes_per_panel={} rel_tol={:?} max_panels={}",
                q.panels, q.nodes_per_panel, q.rel_tol, q.max_panels
            ),
        );
        t.meta(
            "benchmark_quadrature",
            format!(
                "window_sigmas={:?} panel_sigmas={:?} nodes_per_panel={}",
                bq.window_sigmas, bq.panel_sigmas, bq.nodes_per_panel
            ),
        );
        t.meta("rank_tol", format!("{RANK_TOL:?}"));
        // the destination is not part of the experiment
        let mut cfg = self.config.clone();
        cfg.output.path = None;
        t.meta(
            "config",
            serde_json::to_string(&cfg).expect("configuration serialises"),
        );
    }
}

fn table(s: &Scenario, command: Command, columns: &[(&str, &str)]) -> Table {
    let mut t = Table::new(command.name(), columns);
    s.stamp(&mut t);
    t
}

fn or_inf(r: isac_core::Result<f64>) -> f64 {
    r.unwrap_or(f64::INFINITY)
}

fn covariance_table(s: &Scenario, command: Command, w: &Covariance<f64>) -> Table {
    let mut t = table(
        s,
        command,
        &[("row", "-"), ("col", "-"), ("re", "W"), ("im", "W")],
    );
    let m = w.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t.push(vec![
                i.into(),
                j.into(),
                m[(i, j)].re.into(),
                m[(i, j)].im.into(),
            ]);
        }
    }
    t
}

pub fn feasibility(s: &Scenario) -> Result<Outcome, CliError> {
    let (r_max, _) = capacity_waterfilling(&s.channel, s.system.power_w, s.system.noise_comm_w)?;
    let ok = check_feasibility(s.rbar(), r_max);
    let mut t = table(
        s,
        Command::Feasibility,
        &[
            ("rbar", "bit/s/Hz"),
            ("r_max", "bit/s/Hz"),
            ("feasible", "0/1"),
        ],
    );
    t.push(vec![s.rbar().into(), r_max.into(), usize::from(ok).into()]);
    Ok(Outcome {
        table: t,
        summary: format!(
            "r_max = {r_max:.6} bit/s/Hz; rate target {} feasible: {}",
            s.rbar(),
            if ok { "yes" } else { "no" }
        ),
    })
}

pub fn bounds(s: &Scenario) -> Result<Outcome, CliError> {
    let p = s.system.power_w;
    let n = s.system.n_tx;
    let (_, w_cap) = capacity_waterfilling(&s.channel, p, s.system.noise_comm_w)?;
    let opt = solve_p3(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let sub = solve_p4(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let designs = [
        ("isotropic", Covariance::isotropic(n, p)),
        ("sensing_only", sensing_only_upper(&s.matrices, p)?),
        ("optimal", opt.w),
        ("suboptimal", sub.w),
        ("capacity", w_cap),
    ];
    let mut t = table(
        s,
        Command::Bounds,
        &[
            ("design", "-"),
            ("rate", "bit/s/Hz"),
            ("trace", "W"),
            ("pcrb", "rad^2"),
            ("pcrb_upper", "rad^2"),
            ("crb_expected", "rad^2"),
        ],
    );
    t.meta("rbar", s.rbar());
    let rows: Vec<Result<Vec<Cell>, CliError>> = designs
        .par_iter()
        .map(|(name, w)| {
            let l = s.system.symbols;
            Ok(vec![
                (*name).into(),
                rate(w, &s.channel, s.system.noise_comm_w).into(),
                w.trace().into(),
                pcrb(w, &s.matrices, &s.env, l)?.into(),
                pcrb_upper(w, &s.matrices, &s.env, l)?.into(),
                or_inf(crb_expected(
                    w,
                    &s.prior,
                    &s.env,
                    &s.system,
                    &s.quadrature,
                    l,
                ))
                .into(),
            ])
        })
        .collect();
    for r in rows {
        t.push(r?);
    }
    let pc = t.column("pcrb").unwrap();
    let Cell::Num(best) = t.rows[2][pc] else {
        unreachable!()
    };
    Ok(Outcome {
        table: t,
        summary: format!(
            "bounds for 5 designs at rbar = {}; optimal pcrb = {best:e} rad^2",
            s.rbar()
        ),
    })
}

pub fn beampattern_table(s: &Scenario) -> Result<Outcome, CliError> {
    let opt = solve_p3(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let step = std::f64::consts::PI / BEAMPATTERN_POINTS as f64;
    let grid: Vec<f64> = (0..BEAMPATTERN_POINTS)
        .map(|i| angle_lo::<f64>() + step * i as f64)
        .collect();
    let power = beampattern(&opt.w, &grid, &s.system);
    let mut t = table(
        s,
        Command::Beampattern,
        &[("theta", "rad"), ("power", "W"), ("prior_density", "1/rad")],
    );
    t.meta("design", format!("optimal at rbar = {}", s.rbar()));
    for (&th, &pw) in grid.iter().zip(&power) {
        t.push(vec![th.into(), pw.into(), s.prior.pdf(th).into()]);
    }
    let (imax, _) =
        power.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |b, (i, &v)| if v > b.1 { (i, v) } else { b },
        );
    Ok(Outcome {
        table: t,
        summary: format!(
            "beampattern of the optimal design at rbar = {}: {} angles, peak at {:.4} rad",
            s.rbar(),
            BEAMPATTERN_POINTS,
            grid[imax]
        ),
    })
}

pub fn solve_optimal(s: &Scenario) -> Result<Outcome, CliError> {
    let r = solve_p3(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let mut t = covariance_table(s, Command::SolveOptimal, &r.w);
    t.meta("rbar", s.rbar());
    t.meta("pcrb", format!("{:?}", r.pcrb_value));
    t.meta("t_star", format!("{:?}", r.t_star));
    t.meta("rate", format!("{:?}", r.rate_value));
    t.meta("mu_power", format!("{:?}", r.mu_p));
    t.meta("mu_rate", format!("{:?}", r.mu_r));
    t.meta("kkt_residual", format!("{:?}", r.kkt_residual));
    t.meta("rank", r.rank_w);
    t.meta("iterations", r.iterations);
    Ok(Outcome {
        table: t,
        summary: format!(
            "optimal design at rbar = {}: pcrb = {:e} rad^2, rate = {:.6}, rank {}, kkt {:.1e}",
            s.rbar(),
            r.pcrb_value,
            r.rate_value,
            r.rank_w,
            r.kkt_residual
        ),
    })
}

pub fn solve_suboptimal(s: &Scenario) -> Result<Outcome, CliError> {
    let r = solve_p4(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let mut t = covariance_table(s, Command::SolveSuboptimal, &r.w);
    let branch = match r.branch {
        Branch::SensingOnly => "sensing-only",
        Branch::Dual => "dual",
        Branch::Capacity => "capacity",
    };
    t.meta("rbar", s.rbar());
    t.meta("branch", branch);
    t.meta("pcrb", format!("{:?}", r.pcrb));
    t.meta("pcrb_upper", format!("{:?}", r.pcrb_upper));
    t.meta("rate", format!("{:?}", r.rate));
    if let Some(d) = r.dual {
        t.meta("beta", format!("{:?}", d.beta));
        t.meta("mu", format!("{:?}", d.mu));
    }
    t.meta("dual_gap", format!("{:?}", r.dual_gap));
    t.meta("rank", r.rank_w);
    t.meta("iterations", r.iterations);
    Ok(Outcome {
        table: t,
        summary: format!(
            "suboptimal design at rbar = {} ({branch} branch): pcrb = {:e} rad^2, upper = {:e}, rank {}",
            s.rbar(),
            r.pcrb,
            r.pcrb_upper,
            r.rank_w
        ),
    })
}

pub fn benchmark(s: &Scenario) -> Result<Outcome, CliError> {
    let var = s.config.benchmark.perturb_variance;
    let b1 = expected_crb_exact(
        &s.prior,
        &s.channel,
        &s.system,
        &s.env,
        s.rbar(),
        &s.bench_quadrature,
    )?;
    let b2 = expected_crb_inexact(
        &s.prior,
        &s.channel,
        &s.system,
        &s.env,
        s.rbar(),
        var,
        &s.bench_quadrature,
    )?;
    let mut t = table(
        s,
        Command::Benchmark,
        &[
            ("rbar", "bit/s/Hz"),
            ("perturb_variance", "rad^2"),
            ("crb_expected_bench1", "rad^2"),
            ("crb_expected_bench2", "rad^2"),
        ],
    );
    t.push(vec![s.rbar().into(), var.into(), b1.into(), b2.into()]);
    Ok(Outcome {
        table: t,
        summary: format!(
            "benchmarks at rbar = {}: exact {b1:e} rad^2, inexact (var {var:e}) {b2:e} rad^2",
            s.rbar()
        ),
    })
}

pub fn montecarlo(s: &Scenario) -> Result<Outcome, CliError> {
    let mc = s
        .config
        .montecarlo
        .as_ref()
        .ok_or_else(|| CliError::Config("montecarlo section is required".into()))?;
    let grid: GridSpec<f64> = mc.grid_spec();
    let opt = solve_p3(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let sub = solve_p4(&s.matrices, &s.channel, &s.env, &s.system, s.rbar())?;
    let var = s.config.benchmark.perturb_variance;
    let est = match mc.estimator {
        Estimator::Map => "map",
        Estimator::Mle => "mle",
    };
    let mut cols = vec![
        ("snr_db", "dB"),
        ("mse_opt", "rad^2"),
        ("pcrb_opt", "rad^2"),
        ("mse_sub", "rad^2"),
        ("pcrb_sub", "rad^2"),
    ];
    if mc.benchmarks {
        cols.extend([
            ("mse_bench1", "rad^2"),
            ("crb_expected_bench1", "rad^2"),
            ("mse_bench2", "rad^2"),
            ("crb_expected_bench2", "rad^2"),
        ]);
    }
    let mut t = table(s, Command::Montecarlo, &cols);
    t.meta("rbar", s.rbar());
    t.meta("seed", mc.seed);
    t.meta("trials", mc.trials);
    t.meta(
        "estimator",
        format!("{est} (prior-based designs); mle (benchmarks)"),
    );
    t.meta(
        "grid",
        format!("points={} refine_tol={:?}", grid.points, grid.refine_tol),
    );
    let (cfg, prior, h, l) = (&s.system, &s.prior, &s.channel, s.system.symbols);
    for &snr in &mc.snr {
        let env = s.config.environment_at(snr)?;
        let m_opt = monte_carlo_mse(
            &opt.w,
            mc.estimator,
            &env,
            prior,
            cfg,
            &grid,
            mc.trials,
            mc.seed,
        )?;
        let m_sub = monte_carlo_mse(
            &sub.w,
            mc.estimator,
            &env,
            prior,
            cfg,
            &grid,
            mc.trials,
            mc.seed,
        )?;
        let mut row: Vec<Cell> = vec![
            linear_to_db(snr).into(),
            m_opt.mse.into(),
            pcrb(&opt.w, &s.matrices, &env, l)?.into(),
            m_sub.mse.into(),
            pcrb(&sub.w, &s.matrices, &env, l)?.into(),
        ];
        if mc.benchmarks {
            let rbar = s.rbar();
            let b1 = monte_carlo_mse_with(
                |theta, rng| {
                    solve_known_angle(&BenchmarkSpec::exact(theta), h, cfg, &env, rbar, rng)
                },
                Estimator::Mle,
                &env,
                prior,
                cfg,
                &grid,
                mc.trials,
                mc.seed,
            )?;
            let b2 = monte_carlo_mse_with(
                |theta, rng| {
                    let spec = BenchmarkSpec::inexact(theta, var)?;
                    solve_known_angle(&spec, h, cfg, &env, rbar, rng)
                },
                Estimator::Mle,
                &env,
                prior,
                cfg,
                &grid,
                mc.trials,
                mc.seed,
            )?;
            let q = &s.bench_quadrature;
            row.extend([
                b1.mse.into(),
                expected_crb_exact(prior, h, cfg, &env, rbar, q)?.into(),
                b2.mse.into(),
                expected_crb_inexact(prior, h, cfg, &env, rbar, var, q)?.into(),
            ]);
        }
        t.push(row);
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "monte carlo at rbar = {}: {} SNR points x {} trials (seed {})",
            s.rbar(),
            mc.snr.len(),
            mc.trials,
            mc.seed
        ),
    })
}

pub fn sweep(s: &Scenario) -> Result<Outcome, CliError> {
    let grid = match &s.config.sweep {
        Some(sw) => sw.grid()?,
        None => return Err(CliError::Config("sweep section is required".into())),
    };
    let var = s.config.benchmark.perturb_variance;
    let (cfg, prior, h, env, m) = (&s.system, &s.prior, &s.channel, &s.env, &s.matrices);
    let q = &s.bench_quadrature;
    let rows: Vec<Result<Vec<Cell>, CliError>> = grid
        .par_iter()
        .map(|&rbar| {
            let opt = solve_p3(m, h, env, cfg, rbar)?;
            let sub = solve_p4(m, h, env, cfg, rbar)?;
            Ok(vec![
                rbar.into(),
                opt.pcrb_value.into(),
                sub.pcrb.into(),
                sub.pcrb_upper.into(),
                expected_crb_exact(prior, h, cfg, env, rbar, q)?.into(),
                expected_crb_inexact(prior, h, cfg, env, rbar, var, q)?.into(),
            ])
        })
        .collect();
    let mut t = table(
        s,
        Command::Sweep,
        &[
            ("rbar", "bit/s/Hz"),
            ("pcrb_opt", "rad^2"),
            ("pcrb_sub", "rad^2"),
            ("pcrb_upper_sub", "rad^2"),
            ("crb_expected_bench1", "rad^2"),
            ("crb_expected_bench2", "rad^2"),
        ],
    );
    t.meta("perturb_variance", format!("{var:?}"));
    for r in rows {
        t.push(r?);
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "sweep over {} rate targets from {} to {} bit/s/Hz",
            grid.len(),
            grid[0],
            grid[grid.len() - 1]
        ),
    })
}

/// Runs `command` on an already loaded configuration.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = Scenario::build(config)?;
    match command {
        Command::Feasibility => feasibility(&s),
        Command::Bounds => bounds(&s),
        Command::Beampattern => beampattern_table(&s),
        Command::SolveOptimal => solve_optimal(&s),
        Command::SolveSuboptimal => solve_suboptimal(&s),
        Command::Benchmark => benchmark(&s),
        Command::Montecarlo => montecarlo(&s),
        Command::Sweep => sweep(&s),
    }
}

/// Output format: the file extension wins over the configured format.
pub fn output_format(path: Option<&Path>, configured: Format) -> Format {
    match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        _ => configured,
    }
}

pub fn write_table(t: &Table, path: Option<&Path>, format: Format) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let w = BufWriter::new(File::create(p)?);
            match format {
                Format::Csv => t.write_csv(w)?,
                Format::Json => t.write_json(w)?,
            }
        }
        None => {
            let w = std::io::stdout().lock();
            match format {
                Format::Csv => t.write_csv(w)?,
                Format::Json => t.write_json(w)?,
            }
        }
    }
    Ok(())
}

/// Loads the configuration, applies overrides, runs the command and writes
/// its table.
pub fn run(
    command: Command,
    config_path: &Path,
    overrides: &Overrides,
) -> Result<Outcome, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let outcome = execute(command, &cfg)?;
    let path = cfg.output.path.as_deref();
    write_table(&outcome.table, path, output_format(path, cfg.output.format))?;
    Ok(outcome)
}
