//! Command-line driver: reads a JSON config, runs one of the solver
//! pipelines and writes CSV files stamped with the resolved parameters.

pub mod config;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use greeneq::regulator::{WelfareProblem, WelfareSpec};
use greeneq::statics::{emit_table, run_scenarios, TableFormat};
use greeneq::stopping::FirmProblem;
use greeneq::{solve_equilibrium, Error, Market};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Points of the density curve written by `solve`.
pub const DENSITY_POINTS: usize = 1000;
/// Points of the value-function curve written by `firm`.
pub const VALUE_POINTS: usize = 501;

#[derive(Debug, Parser)]
#[command(
    name = "greeneq",
    version,
    about = "Stationary equilibrium of a carbon-capped industry with green investment"
)]
pub struct Cli {
    /// JSON run configuration; omitted fields take the reference values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for scenario tables and welfare grids.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equilibrium; writes equilibrium.csv and density.csv.
    Solve,
    /// Solve one firm's investment problem; writes value_function.csv.
    Firm {
        /// Carbon price.
        #[arg(long, default_value_t = 1.0)]
        carbon_price: f64,
        /// Several carbon prices, comma separated; overrides --carbon-price.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Run the configured scenarios; writes one CSV per scenario group.
    Statics,
    /// Maximize welfare over the cap; writes welfare_curve.csv.
    Regulator {
        /// Calibrate Γ so the optimal cap equals this value.
        #[arg(long)]
        calibrate_gamma: Option<f64>,
    },
}

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

/// 2 for invalid input, 3 for a failed modelling assumption, 4 for a
/// numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) => 2,
        Error::Assumption(_) => 3,
        Error::Numerical(_) | Error::NotImplemented(_) => 4,
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 2, message: format!("cannot write {}: {e}", path.display()) }
}

/// Resolved settings shared by every command.
struct Context {
    config: RunConfig,
    market: Market,
    out: PathBuf,
    workers: usize,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let market = Market::with_tolerances(config.params, config.tolerances)?;
        let out = cli.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
        let workers = cli
            .workers
            .or(config.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(Failure { code: 2, message: "invalid input: workers must be at least 1".into() });
        }
        Ok(Self { config, market, out, workers })
    }

    fn metadata(&self) -> Vec<String> {
        vec![
            format!("greeneq {VERSION}"),
            format!("params {}", serde_json::to_string(&self.config.params).expect("params serialize")),
            format!("tolerances {}", serde_json::to_string(&self.config.tolerances).expect("tolerances serialize")),
        ]
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Failure { code: 2, message: format!("cannot start {} workers: {e}", self.workers) })
    }

    /// Write a CSV with `#` metadata lines before the header.
    fn write_csv(
        &self,
        name: &str,
        extra: &[String],
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, Failure> {
        let path = self.out.join(name);
        let mut file = File::create(&path).map_err(|e| io_failure(&path, e))?;
        for line in self.metadata().iter().chain(extra) {
            writeln!(file, "# {line}").map_err(|e| io_failure(&path, e))?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        let csv_err = |e: csv::Error| Failure { code: 2, message: format!("cannot write {}: {e}", path.display()) };
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }

    fn write_text(&self, name: &str, extra: &[String], body: &str) -> Result<PathBuf, Failure> {
        let path = self.out.join(name);
        let mut text = String::new();
        for line in self.metadata().iter().chain(extra) {
            text.push_str(&format!("# {line}\n"));
        }
        text.push_str(body);
        std::fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Run a parsed command line; the returned lines are the stdout summary.
pub fn run(cli: &Cli) -> Result<Vec<String>, Failure> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Solve => cmd_solve(&ctx),
        Command::Firm { carbon_price, grid } => {
            let prices = grid.clone().unwrap_or_else(|| vec![*carbon_price]);
            cmd_firm(&ctx, &prices)
        }
        Command::Statics => cmd_statics(&ctx),
        Command::Regulator { calibrate_gamma } => cmd_regulator(&ctx, *calibrate_gamma),
    }
}

fn cmd_solve(ctx: &Context) -> Result<Vec<String>, Failure> {
    let eq = solve_equilibrium(&ctx.market)?;
    let scalars: Vec<(&str, String)> = vec![
        ("carbon_price", num(eq.c_p_star)),
        ("investment_threshold", num(eq.b_star)),
        ("crossing_point", num(eq.z_tilde)),
        ("turnover_rate", num(eq.turnover)),
        ("overall_output", num(eq.absolute.output)),
        ("aggregate_capital", num(eq.absolute.capital)),
        ("incumbent_mass", num(eq.absolute.mass)),
        ("entry_rate", num(eq.entry_rate)),
        ("e_max", num(eq.e_max)),
        ("entry_value", num(eq.entry_value)),
        ("density_mass", num(eq.scaled.mass)),
        ("closed_form_discrepancy", num(eq.density.closed_form_discrepancy)),
        ("regime", eq.regime().to_string()),
    ];
    let rows: Vec<Vec<String>> = scalars.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect();
    ctx.write_csv("equilibrium.csv", &[], &["quantity", "value"], &rows)?;
    let density: Vec<Vec<String>> =
        eq.density.samples(DENSITY_POINTS).into_iter().map(|(z, f)| vec![num(z), num(f)]).collect();
    ctx.write_csv("density.csv", &[], &["z", "f"], &density)?;
    Ok(vec![format!(
        "c_p*={:.2} b*={:.2} T*={:.4} Y={:.0} (regime {})",
        eq.c_p_star,
        eq.b_star,
        eq.turnover,
        eq.output(),
        eq.regime()
    )])
}

fn cmd_firm(ctx: &Context, prices: &[f64]) -> Result<Vec<String>, Failure> {
    if prices.is_empty() {
        return Err(Failure { code: 2, message: "invalid input: no carbon price given".into() });
    }
    let e_max = ctx.market.params().e_max;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &c_p in prices {
        if !(c_p >= 0.0 && c_p.is_finite()) {
            return Err(Failure {
                code: 2,
                message: format!("invalid input: carbon price must be nonnegative, got {c_p}"),
            });
        }
        let sol = FirmProblem::new(&ctx.market, c_p, e_max)?.solve_policy()?;
        let top = if sol.b_star.is_finite() { 1.5 * sol.b_star } else { 2.0 * ctx.market.params().z_hi };
        for i in 0..VALUE_POINTS {
            let z = top * i as f64 / (VALUE_POINTS - 1) as f64;
            let region = if sol.invests_at(z) { "invest" } else { "wait" };
            rows.push(vec![num(c_p), num(z), num(sol.value(z)?), region.to_string()]);
        }
        lines.push(format!("c_p={c_p} b={:.4} z_tilde={:.4}", sol.b_star, sol.z_tilde));
    }
    ctx.write_csv("value_function.csv", &[], &["carbon_price", "z", "value", "region"], &rows)?;
    Ok(lines)
}

fn cmd_statics(ctx: &Context) -> Result<Vec<String>, Failure> {
    let cfg = &ctx.config;
    let block = cfg.welfare_block();
    let search = block.search_or(cfg.params.e_bench);
    let mut lines = Vec::new();
    let mut extra = Vec::new();
    let spec = if cfg.has_welfare_scenarios() {
        let gamma = match block.gamma {
            Some(g) => g,
            None => {
                let template = block.spec(1.0);
                let problem = WelfareProblem::new(ctx.market);
                let cal = ctx.pool()?.install(|| problem.calibrate_gamma(cfg.params.e_max, &search, &template))?;
                lines.push(format!("calibrated gamma={} (E*={})", cal.gamma, cal.optimum.e_max_star));
                cal.gamma
            }
        };
        extra.push(format!("welfare {}", serde_json::to_string(&block.spec(gamma)).expect("spec serializes")));
        Some(block.spec(gamma))
    } else {
        None
    };
    let mut groups = cfg.groups();
    if groups.is_empty() {
        groups.push("statics".into());
    }
    let mut first_failure: Option<Failure> = None;
    for group in groups {
        let scenarios = cfg.scenarios_in(&group, spec, search)?;
        let table = run_scenarios(&cfg.params, &cfg.tolerances, &scenarios, ctx.workers)?;
        ctx.write_text(&format!("{group}.csv"), &extra, &emit_table(&table, TableFormat::Csv))?;
        lines.push(format!("[{group}]"));
        lines.extend(emit_table(&table, TableFormat::Text).lines().map(str::to_string));
        for row in &table.rows {
            if let Err(e) = &row.result {
                eprintln!("{group}/{}: {e}", row.label);
                first_failure.get_or_insert_with(|| Failure {
                    code: exit_code(e),
                    message: format!("{} of the rows failed; first: {}: {e}", table.failures(), row.label),
                });
            }
        }
    }
    match first_failure {
        Some(f) => {
            for l in &lines {
                println!("{l}");
            }
            Err(f)
        }
        None => Ok(lines),
    }
}

fn cmd_regulator(ctx: &Context, calibrate: Option<f64>) -> Result<Vec<String>, Failure> {
    let cfg = &ctx.config;
    let block = cfg.welfare_block();
    let search = block.search_or(cfg.params.e_bench);
    let problem = WelfareProblem::new(ctx.market);
    let pool = ctx.pool()?;
    let mut lines = Vec::new();
    let (spec, optimum) = match (calibrate, block.gamma) {
        (Some(target), _) => {
            let cal = pool.install(|| problem.calibrate_gamma(target, &search, &block.spec(1.0)))?;
            lines.push(format!("gamma={}", cal.gamma));
            (block.spec(cal.gamma), cal.optimum)
        }
        (None, Some(gamma)) => {
            let spec = block.spec(gamma);
            (spec, pool.install(|| problem.solve_optimal_cap(&search, &spec))?)
        }
        (None, None) => {
            let target = cfg.params.e_max;
            let cal = pool.install(|| problem.calibrate_gamma(target, &search, &block.spec(1.0)))?;
            lines.push(format!("gamma={} (calibrated to E*={target})", cal.gamma));
            (block.spec(cal.gamma), cal.optimum)
        }
    };
    write_welfare_curve(ctx, &spec, &optimum)?;
    let eq = &optimum.equilibrium;
    lines.push(format!(
        "E*={:.1} c_p*={:.2} b*={:.2} T*={:.4} Y={:.0} welfare={:.4}",
        optimum.e_max_star,
        eq.c_p_star,
        eq.b_star,
        eq.turnover,
        eq.output(),
        optimum.welfare
    ));
    Ok(lines)
}

fn write_welfare_curve(
    ctx: &Context,
    spec: &WelfareSpec,
    optimum: &greeneq::regulator::OptimalCap,
) -> Result<PathBuf, Failure> {
    let mut rows: Vec<Vec<String>> =
        optimum.curve.iter().map(|p| vec![num(p.e_max), p.welfare.map_or("NA".into(), num), "grid".into()]).collect();
    rows.push(vec![num(optimum.e_max_star), num(optimum.welfare), "optimum".into()]);
    let extra = [format!("welfare {}", serde_json::to_string(spec).expect("spec serializes"))];
    ctx.write_csv("welfare_curve.csv", &extra, &["e_max", "welfare", "point"], &rows)
}
