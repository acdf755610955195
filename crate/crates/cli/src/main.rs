use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rbstab::analysis::{error_sweep, infsup_profile, parameter_grid, solution_errors};
use rbstab::config::parse_pairs;
use rbstab::io::{self, num, write_file};
use rbstab::rb::{greedy_offline, test_set, GreedySettings, RbOption, ReducedModel};
use rbstab::{Error, FeFunction, FullOrderModel, Mu, ProblemConfig, RunConfig};

#[derive(Parser)]
#[command(name = "rbstab", version, about = "Stabilized reduced-basis solver for the parametrized lid-driven cavity")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads` from the configuration.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the affine operators as MatrixMarket files.
    #[arg(long, global = true)]
    dump_operators: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-element solve at one parameter.
    FeSolve {
        /// Parameter `mu1,mu2`; defaults to the configured online parameter.
        #[arg(long, value_parser = parse_mu)]
        mu: Option<Mu>,
    },
    /// Greedy training; writes `model.rbm` and `trace.csv`.
    Offline,
    /// Reduced solve with a stored model.
    Online {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_mu)]
        mu: Option<Mu>,
        /// One of i, ii, iii, iv.
        #[arg(long)]
        option: Option<String>,
        /// Skip the finite-element comparison.
        #[arg(long)]
        skip_truth: bool,
    },
    /// Training plus error study; writes `errors.csv`.
    Sweep,
    /// Inf-sup constants of a stored model on a parameter grid; writes `infsup.csv`.
    Infsup {
        #[arg(long)]
        model: PathBuf,
        /// Points per parameter direction.
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn parse_mu(s: &str) -> Result<Mu, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([a.parse().map_err(|_| format!("bad number `{a}`"))?, b.parse().map_err(|_| format!("bad number `{b}`"))?]),
        _ => Err("expected `mu1,mu2`".into()),
    }
}

enum Failure {
    Config(String),
    Solver(String),
    InfSup(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::InfSup(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::InfSup(m) | Failure::Io(m) => m,
        }
    }
}

fn config_error(e: Error) -> Failure {
    Failure::Config(format!("invalid configuration: {e}"))
}

fn solver_error(stage: &str, e: Error) -> Failure {
    match e {
        Error::Io(e) => Failure::Io(format!("{stage}: {e}")),
        e => Failure::Solver(format!("{stage} failed: {e}")),
    }
}

fn io_error(e: Error) -> Failure {
    Failure::Io(format!("cannot write output: {e}"))
}

struct Context {
    cli_out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
    dump: bool,
}

impl Context {
    fn load(&self, path: Option<&Path>) -> Result<RunConfig, Failure> {
        let path = path.ok_or_else(|| Failure::Config("this command needs --config".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read configuration {}: {e}", path.display())))?;
        let mut pairs = parse_pairs(&text).map_err(config_error)?;
        if let Some(s) = self.seed {
            pairs.insert("seed".into(), s.to_string());
        }
        let mut cfg = RunConfig::from_pairs(&pairs).map_err(config_error)?;
        if let Some(out) = &self.cli_out {
            cfg.output = out.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.cli_out.clone().or_else(|| cfg.map(|c| c.output.clone())).unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn model_echo(model: &ReducedModel) -> Vec<String> {
    let c = &model.config;
    vec![
        format!("problem = {}", c.problem.name()),
        format!("fe_pair = {}", c.fe_pair.name()),
        format!("stabilization.method = {}", c.stabilization.method.name()),
        format!("stabilization.rho = {}", c.stabilization.method.rho()),
        format!("stabilization.delta = {}", c.stabilization.delta),
        format!("stabilization.apply_online = {}", c.stabilization.apply_online),
        format!("mu.mu1_range = {} {}", c.parameter_box.mu1[0], c.parameter_box.mu1[1]),
        format!("mu.mu2_range = {} {}", c.parameter_box.mu2[0], c.parameter_box.mu2[1]),
        format!("mu.mu2_ref = {}", c.mu2_ref),
        format!("rb.n = {}", model.n()),
        format!("mesh.nx = {}", c.nx),
        format!("mesh.ny = {}", c.ny),
        format!("mesh.diagonal = {}", c.diagonal.name()),
        format!("lid_speed = {}", c.lid_speed),
        format!("seed = {}", model.seed),
    ]
}

/// The settings that determine a single field, short enough for a VTK title.
fn vtk_echo(echo: &[String], mu: Mu) -> Vec<String> {
    const KEEP: [&str; 7] = ["problem ", "fe_pair ", "stabilization.", "option ", "mesh.", "lid_speed ", "seed "];
    let mut out: Vec<String> = echo.iter().filter(|l| KEEP.iter().any(|k| l.starts_with(k))).cloned().collect();
    out.push(format!("mu = {} {}", mu[0], mu[1]));
    out
}

fn build_fom(config: &ProblemConfig) -> Result<FullOrderModel, Failure> {
    FullOrderModel::new(config.clone()).map_err(|e| match e {
        e @ (Error::InvalidArgument(_) | Error::Unsupported(_)) => config_error(e),
        e => solver_error("assembly", e),
    })
}

fn check_mu(config: &ProblemConfig, mu: Mu) -> Result<(), Failure> {
    config.check_parameter(mu).map_err(config_error)?;
    if !config.parameter_box.contains(mu) {
        return Err(Failure::Config(format!("parameter ({}, {}) lies outside the parameter box", mu[0], mu[1])));
    }
    Ok(())
}

fn dump_fe_operators(fom: &FullOrderModel, dir: &Path, echo: &[String]) -> Result<(), Failure> {
    let dir = dir.join("operators");
    for (part, blocks) in [("plain", &fom.plain), ("stabilization", &fom.stabilization)] {
        for (name, op) in [("uu", &blocks.uu), ("up", &blocks.up), ("pu", &blocks.pu), ("pp", &blocks.pp)] {
            for (q, term) in op.terms.iter().enumerate() {
                let mut c = echo.to_vec();
                c.push(format!("theta = {} * nu^{} * a^{}", term.theta.coeff, term.theta.nu_pow, term.theta.a_pow));
                write_file(&dir, &format!("{part}_{name}_{q}.mtx"), &io::matrix_market(&term.value, &c)).map_err(io_error)?;
            }
        }
    }
    write_file(&dir, "xu.mtx", &io::matrix_market(&fom.xu, echo)).map_err(io_error)?;
    write_file(&dir, "xp.mtx", &io::matrix_market(&fom.xp, echo)).map_err(io_error)
}

fn dump_reduced_operators(model: &ReducedModel, dir: &Path, echo: &[String]) -> Result<(), Failure> {
    let dir = dir.join("operators");
    for (part, blocks) in [("plain", &model.plain), ("stabilization", &model.stabilization)] {
        for (name, terms) in [("uu", &blocks.uu), ("up", &blocks.up), ("pu", &blocks.pu), ("pp", &blocks.pp)] {
            for (q, (theta, m)) in terms.iter().enumerate() {
                let mut c = echo.to_vec();
                c.push(format!("theta = {} * nu^{} * a^{}", theta.coeff, theta.nu_pow, theta.a_pow));
                write_file(&dir, &format!("reduced_{part}_{name}_{q}.mtx"), &io::matrix_market_dense(m, &c))
                    .map_err(io_error)?;
            }
        }
    }
    Ok(())
}

fn fe_solve(ctx: &Context, path: Option<&Path>, mu: Option<Mu>) -> Result<(), Failure> {
    let cfg = ctx.load(path)?;
    let mu = mu.unwrap_or(cfg.online_mu);
    check_mu(&cfg.problem, mu)?;
    let echo = cfg.echo();
    let fom = build_fom(&cfg.problem)?;
    let dir = ctx.out_dir(Some(&cfg));
    if ctx.dump {
        dump_fe_operators(&fom, &dir, &echo)?;
    }
    let start = Instant::now();
    let sol = fom.solve(mu).map_err(|e| solver_error(&format!("FE solve at mu = ({}, {})", mu[0], mu[1]), e))?;
    let elapsed = start.elapsed();
    let u = FeFunction::new(fom.velocity.clone(), sol.total_velocity()).map_err(|e| solver_error("output", e))?;
    write_file(&dir, "fe_solution.vtk", &io::vtk(&fom, mu, &u, &sol.pressure, &vtk_echo(&echo, mu)).map_err(io_error)?).map_err(io_error)?;
    let d = &sol.diagnostics;
    let history: Vec<String> = d.history.iter().map(|r| num(*r)).collect();
    let entries = vec![
        ("mu".to_string(), format!("{} {}", mu[0], mu[1])),
        ("velocity_dofs".into(), fom.n_velocity().to_string()),
        ("pressure_dofs".into(), fom.n_pressure().to_string()),
        ("newton_iterations".into(), d.iterations.to_string()),
        ("relative_residual".into(), num(d.residual)),
        ("residual_history".into(), history.join(" ")),
        ("solve_seconds".into(), format!("{:.6}", elapsed.as_secs_f64())),
    ];
    write_file(&dir, "fe_diagnostics.txt", &io::key_values(&echo, &entries)).map_err(io_error)?;
    println!("FE solve at mu = ({}, {}): {} Newton iterations, relative residual {:.3e}", mu[0], mu[1], d.iterations, d.residual);
    Ok(())
}

fn offline(ctx: &Context, path: Option<&Path>) -> Result<(), Failure> {
    let cfg = ctx.load(path)?;
    let echo = cfg.echo();
    let fom = build_fom(&cfg.problem)?;
    let dir = ctx.out_dir(Some(&cfg));
    let start = Instant::now();
    let off = greedy_offline(&fom, GreedySettings { n_max: cfg.n_max, train_size: cfg.train_size, seed: cfg.seed })
        .map_err(|e| solver_error("offline greedy", e))?;
    let elapsed = start.elapsed();
    let model = off.model.with_option(cfg.option);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    model.save(&dir.join("model.rbm")).map_err(io_error)?;
    write_file(&dir, "trace.csv", &io::trace_csv(&off.trace, &echo)).map_err(io_error)?;
    if ctx.dump {
        dump_fe_operators(&fom, &dir, &echo)?;
        dump_reduced_operators(&model, &dir, &echo)?;
    }
    let b = &model.bases;
    let entries = vec![
        ("n".to_string(), model.n().to_string()),
        ("n_u".into(), b.n_u().to_string()),
        ("n_s".into(), b.n_s().to_string()),
        ("n_p".into(), b.n_p().to_string()),
        ("dropped".into(), format!("{} {} {}", b.dropped[0], b.dropped[1], b.dropped[2])),
        ("offline_seconds".into(), format!("{:.6}", elapsed.as_secs_f64())),
    ];
    write_file(&dir, "offline.txt", &io::key_values(&echo, &entries)).map_err(io_error)?;
    println!(
        "offline: N = {} (N_u = {}, N_s = {}, N_p = {}), final indicator {:.3e}, {:.1} s",
        model.n(),
        b.n_u(),
        b.n_s(),
        b.n_p(),
        off.trace.max_indicator.last().copied().unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<ReducedModel, Failure> {
    ReducedModel::load(path).map_err(|e| match e {
        Error::Io(e) => Failure::Config(format!("cannot read model {}: {e}", path.display())),
        e => Failure::Config(format!("malformed model {}: {e}", path.display())),
    })
}

fn online(
    ctx: &Context,
    path: Option<&Path>,
    model_path: &Path,
    mu: Option<Mu>,
    option: Option<&str>,
    skip_truth: bool,
) -> Result<(), Failure> {
    let cfg = match path {
        Some(p) => Some(ctx.load(Some(p))?),
        None => None,
    };
    let model = load_model(model_path)?;
    let option = match option {
        Some(o) => RbOption::parse(o).map_err(config_error)?,
        None => cfg.as_ref().map_or(model.option, |c| c.option),
    };
    let mu = mu.or(cfg.as_ref().map(|c| c.online_mu)).unwrap_or_else(|| model.config.parameter_box.center());
    check_mu(&model.config, mu)?;
    if option == RbOption::IV {
        let beta = model.infsup(option, mu).map(|b| format!("{b:.3e}")).unwrap_or_else(|_| "unavailable".into());
        return Err(Failure::InfSup(format!(
            "warning: option iv keeps neither supremizers nor stabilization, so the reduced inf-sup condition is not guaranteed \
             (beta_N = {beta} at mu = ({}, {})); results are not reported",
            mu[0], mu[1]
        )));
    }
    let mut echo = model_echo(&model);
    echo.push(format!("option = {option}"));
    echo.push(format!("mu.online = {} {}", mu[0], mu[1]));
    let dir = ctx.out_dir(cfg.as_ref());
    let start = Instant::now();
    let sol = model
        .solve_option(option, mu)
        .map_err(|e| solver_error(&format!("online solve at mu = ({}, {})", mu[0], mu[1]), e))?;
    let online_time = start.elapsed();
    let (u, p) = model.reconstruct_solution(&sol);
    let coefficients = sol
        .velocity
        .iter()
        .enumerate()
        .map(|(i, v)| format!("velocity,{i},{}", num(*v)))
        .chain(sol.pressure.iter().enumerate().map(|(i, v)| format!("pressure,{i},{}", num(*v))));
    write_file(&dir, "online_solution.csv", &io::csv(&echo, "field,index,coefficient", coefficients)).map_err(io_error)?;
    let fom = build_fom(&model.config)?;
    let uf = FeFunction::new(fom.velocity.clone(), u.clone()).map_err(|e| solver_error("reconstruction", e))?;
    let pf = FeFunction::new(fom.pressure.clone(), p.clone()).map_err(|e| solver_error("reconstruction", e))?;
    write_file(&dir, "online.vtk", &io::vtk(&fom, mu, &uf, &pf, &vtk_echo(&echo, mu)).map_err(io_error)?).map_err(io_error)?;
    let mut entries = vec![
        ("newton_iterations".to_string(), sol.iterations.to_string()),
        ("relative_residual".into(), num(sol.residual)),
        ("online_seconds".into(), format!("{:.6}", online_time.as_secs_f64())),
    ];
    println!("online solve ({option}) at mu = ({}, {}): {:.3} ms", mu[0], mu[1], online_time.as_secs_f64() * 1e3);
    if !skip_truth {
        let start = Instant::now();
        let truth = fom.solve(mu).map_err(|e| solver_error(&format!("FE solve at mu = ({}, {})", mu[0], mu[1]), e))?;
        let [eu, ep] = solution_errors(&fom, &u, &p, &truth);
        entries.push(("fe_seconds".into(), format!("{:.6}", start.elapsed().as_secs_f64())));
        entries.push(("velocity_rel_err".into(), num(eu)));
        entries.push(("pressure_rel_err".into(), num(ep)));
        println!("velocity_rel_err = {eu:.6e}");
        println!("pressure_rel_err = {ep:.6e}");
    }
    write_file(&dir, "online.txt", &io::key_values(&echo, &entries)).map_err(io_error)
}

fn sweep(ctx: &Context, path: Option<&Path>) -> Result<(), Failure> {
    let cfg = ctx.load(path)?;
    let echo = cfg.echo();
    let fom = build_fom(&cfg.problem)?;
    let dir = ctx.out_dir(Some(&cfg));
    let start = Instant::now();
    let off = greedy_offline(&fom, GreedySettings { n_max: cfg.n_max, train_size: cfg.train_size, seed: cfg.seed })
        .map_err(|e| solver_error("offline greedy", e))?;
    let offline_time = start.elapsed();
    let options = [RbOption::I, RbOption::II, RbOption::III];
    let test = test_set(&fom.config.parameter_box, cfg.test_size, cfg.seed, &off.trace.selected);
    let report =
        error_sweep(&fom, &off, &cfg.n_values, &options, &test, cfg.seed).map_err(|e| solver_error("error sweep", e))?;
    for (mu, why) in &report.excluded {
        eprintln!("warning: test point ({}, {}) excluded: {why}", mu[0], mu[1]);
    }
    write_file(&dir, "errors.csv", &io::error_csv(&report, &echo)).map_err(io_error)?;
    let point = error_sweep(&fom, &off, &cfg.n_values, &options, &[cfg.online_mu], cfg.seed)
        .map_err(|e| solver_error("online-point errors", e))?;
    write_file(&dir, "online_errors.csv", &io::error_csv(&point, &echo)).map_err(io_error)?;
    write_file(&dir, "trace.csv", &io::trace_csv(&off.trace, &echo)).map_err(io_error)?;
    let entries = vec![
        ("offline_seconds".to_string(), format!("{:.6}", offline_time.as_secs_f64())),
        ("truth_seconds".into(), format!("{:.6}", report.timing.truth.as_secs_f64())),
        ("online_seconds".into(), format!("{:.6}", report.timing.online.as_secs_f64())),
        ("test_points".into(), report.test_set.len().to_string()),
        ("excluded_points".into(), report.excluded.len().to_string()),
    ];
    write_file(&dir, "sweep.txt", &io::key_values(&echo, &entries)).map_err(io_error)?;
    println!("sweep: {} rows over {} test points", report.rows.len(), report.test_set.len());
    Ok(())
}

fn infsup(ctx: &Context, path: Option<&Path>, model_path: &Path, grid: Option<usize>) -> Result<(), Failure> {
    let cfg = match path {
        Some(p) => Some(ctx.load(Some(p))?),
        None => None,
    };
    let model = load_model(model_path)?;
    let k = grid.or(cfg.as_ref().map(|c| c.infsup_grid)).unwrap_or(5);
    if k == 0 {
        return Err(Failure::Config("the inf-sup grid needs at least one point per direction".into()));
    }
    let points = parameter_grid(&model.config.parameter_box, k);
    let rows = infsup_profile(&model, &points, &RbOption::ALL).map_err(|e| solver_error("inf-sup profile", e))?;
    let mut echo = model_echo(&model);
    echo.push(format!("infsup.grid = {k}"));
    let dir = ctx.out_dir(cfg.as_ref());
    write_file(&dir, "infsup.csv", &io::infsup_csv(&rows, &echo)).map_err(io_error)?;
    println!("inf-sup profile: {} rows", rows.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Context { cli_out: cli.out, threads: cli.threads, seed: cli.seed, dump: cli.dump_operators };
    let threads = match (&cli.command, cli.config.as_deref()) {
        (_, _) if cli.threads.is_some() => cli.threads,
        (Command::Online { .. } | Command::Infsup { .. }, None) => None,
        (_, path) => ctx.load(path).ok().and_then(|c| c.threads),
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let config = cli.config.as_deref();
    match &cli.command {
        Command::FeSolve { mu } => fe_solve(&ctx, config, *mu),
        Command::Offline => offline(&ctx, config),
        Command::Online { model, mu, option, skip_truth } => {
            online(&ctx, config, model, *mu, option.as_deref(), *skip_truth)
        }
        Command::Sweep => sweep(&ctx, config),
        Command::Infsup { model, grid } => infsup(&ctx, config, model, *grid),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rbstab: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
