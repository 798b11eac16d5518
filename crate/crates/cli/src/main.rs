use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use transship::heuristic::{self, Cooling, SaConfig};
use transship::instgen::{calibrate_from_maxima, generate, unconstrained_maxima, CapacityLevel, GenConfig};
use transship::lagrangian::{self, LagrangianConfig, RefineRule};
use transship::oracle::{brute_force, EnumBudget, OracleError};
use transship::relax::{solve_capacitated_a, solve_capacitated_ab, solve_unconstrained, BnbBudget, RelaxedFlow};
use transship::{optimality_gap, Instance, Money};
use transship_cli::io::{read_json, write_csv, write_json, InstanceFile, IoError, Metadata, SolutionFile};
use transship_cli::study::{
    summarize_chain, summarize_gaps, summarize_sizes, Baseline, ConstraintStudy, GapStudy, SizesStudy, CHAIN_HEADER,
    GAP_HEADER, SIZES_HEADER,
};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "TRANSSHIP_OUT_DIR";

#[derive(Parser)]
#[command(name = "transship", version, about = "Lateral transshipment between retail stores")]
struct Cli {
    /// Directory for generated files [default: $TRANSSHIP_OUT_DIR or .]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Leave wall-clock times out of every output so files are byte-stable.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate calibrated random instances, one file per replication.
    Generate(GenerateArgs),
    /// Solve one instance file.
    Solve(SolveArgs),
    /// Check a solution file against its instance.
    Verify { instance: PathBuf, solution: PathBuf },
    /// Heuristic lower bound against Lagrangian upper bound per instance size.
    GapStudy(GapArgs),
    /// Objectives of the unconstrained, unit-capped, destination-capped and full models.
    ConstraintStudy(ConstraintArgs),
    /// Transfer counts of capacity-free solutions as the number of sizes grows.
    SizesStudy(SizesArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    stores: usize,
    #[arg(long, default_value_t = 50)]
    products: usize,
    #[arg(long, default_value_t = 5)]
    sizes: usize,
    /// Capacity level: low, med, high, full, a fraction such as 3/4, or none.
    #[arg(long, default_value = "low")]
    level: String,
    /// Separate level for the destination cap [default: --level].
    #[arg(long)]
    dest_level: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Heuristic,
    Lagrangian,
    Exact,
    #[value(name = "relaxA")]
    RelaxA,
    #[value(name = "relaxAB")]
    RelaxAb,
    Unconstrained,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Heuristic => "heuristic",
            Method::Lagrangian => "lagrangian",
            Method::Exact => "exact",
            Method::RelaxA => "relaxA",
            Method::RelaxAb => "relaxAB",
            Method::Unconstrained => "unconstrained",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Refine {
    Price,
    Retain,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CoolingArg {
    Geometric,
    Counter,
}

#[derive(Args, Clone)]
struct HeuristicArgs {
    /// Annealing iterations.
    #[arg(long, default_value_t = 200_000)]
    sa_iterations: u64,
    #[arg(long, value_enum, default_value_t = CoolingArg::Geometric)]
    cooling: CoolingArg,
}

impl HeuristicArgs {
    fn config(&self, seed: u64, time_limit: Option<f64>) -> SaConfig {
        let cooling = match self.cooling {
            CoolingArg::Geometric => Cooling::Geometric { tau: 0.995 },
            CoolingArg::Counter => Cooling::Counter {
                tau_min: 0.9,
                tau_max: 0.999,
            },
        };
        SaConfig {
            max_iterations: self.sa_iterations,
            time_limit,
            cooling,
            seed,
            ..SaConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct LagrangianArgs {
    /// Multiplier refinement steps.
    #[arg(long, default_value_t = 50)]
    lagrangian_iterations: usize,
    #[arg(long, value_enum, default_value_t = Refine::Price)]
    refine: Refine,
}

impl LagrangianArgs {
    fn config(&self, time_limit: Option<f64>) -> LagrangianConfig {
        LagrangianConfig {
            max_iterations: self.lagrangian_iterations,
            rule: match self.refine {
                Refine::Price => RefineRule::Price,
                Refine::Retain => RefineRule::Retain,
            },
            time_limit,
            ..LagrangianConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Heuristic)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock limit in seconds for heuristic and lagrangian.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Largest assignment count the exact search will enumerate.
    #[arg(long, default_value_t = 10_000_000)]
    oracle_budget: u64,
    /// Node limit for the relaxAB branch-and-bound.
    #[arg(long, default_value_t = 20_000)]
    bnb_nodes: usize,
    /// Relative gap at which relaxAB stops refining.
    #[arg(long, default_value_t = 0.0)]
    bnb_gap: f64,
    #[command(flatten)]
    heuristic: HeuristicArgs,
    #[command(flatten)]
    lagrangian: LagrangianArgs,
    /// Solution path [default: <out-dir>/<instance stem>.<method>.json].
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Per-iteration trace CSV (heuristic and lagrangian).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long, value_delimiter = ',', default_value = "20")]
    stores: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    products: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "low,med,high")]
    levels: Vec<String>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lower bound from the heuristic or from keeping everything.
    #[arg(long, value_enum, default_value_t = BaselineArg::Heuristic)]
    baseline: BaselineArg,
    #[command(flatten)]
    heuristic: HeuristicArgs,
    #[command(flatten)]
    lagrangian: LagrangianArgs,
    /// Report path [default: <out-dir>/gap_study.csv].
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Heuristic,
    Keep,
}

#[derive(Args)]
struct ConstraintArgs {
    #[arg(long, default_value_t = 5)]
    stores: usize,
    #[arg(long, default_value_t = 6)]
    products: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "low,high")]
    sku_levels: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "low,high")]
    dest_levels: Vec<String>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000_000)]
    oracle_budget: u64,
    /// Node limit per connection-capped solve.
    #[arg(long, default_value_t = 500)]
    bnb_nodes: usize,
    /// Relative gap at which a connection-capped solve stops refining.
    #[arg(long, default_value_t = 1e-4)]
    bnb_gap: f64,
    #[command(flatten)]
    heuristic: HeuristicArgs,
    /// Report path [default: <out-dir>/constraint_study.csv].
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SizesArgs {
    #[arg(long, default_value_t = 20)]
    stores: usize,
    #[arg(long, default_value_t = 100)]
    products: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,5,8,10,15")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    sa_iterations: u64,
    /// Report path [default: <out-dir>/sizes_study.csv].
    #[arg(long, short)]
    output: Option<PathBuf>,
}

enum Failure {
    /// Bad flags or unusable input files.
    User(String),
    /// A solver could not produce an answer.
    Solver(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::User(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// `None` for "none", otherwise a capacity level.
fn parse_level(s: &str) -> Result<Option<CapacityLevel>, Failure> {
    if s == "none" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(Failure::User)
}

fn parse_levels(items: &[String]) -> Result<Vec<CapacityLevel>, Failure> {
    items
        .iter()
        .map(|s| parse_level(s)?.ok_or_else(|| Failure::User("studies need a capacity level, not `none`".into())))
        .collect()
}

fn positive(name: &str, values: &[usize]) -> Outcome {
    if values.is_empty() || values.contains(&0) {
        return Err(Failure::User(format!("--{name} needs positive values")));
    }
    Ok(())
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Outcome {
    positive("reps", &[a.reps])?;
    let sku = parse_level(&a.level)?;
    let dest = match &a.dest_level {
        Some(s) => parse_level(s)?,
        None => sku,
    };
    if sku.is_some() != dest.is_some() {
        return Err(Failure::User("--level and --dest-level must both be set or both be `none`".into()));
    }
    let label = match (sku, dest) {
        (Some(x), Some(y)) if x == y => x.label(),
        (Some(x), Some(y)) => format!("{}-{}", x.label(), y.label()),
        _ => "none".into(),
    }
    .replace('/', "of");
    let dir = out_dir(cli);
    for r in 0..a.reps {
        let seed = a.seed + r as u64;
        let cfg = GenConfig::new(a.stores, a.products, a.sizes, seed);
        cfg.validate().map_err(Failure::User)?;
        let base = generate(&cfg);
        let inst = match (sku, dest) {
            (Some(x), Some(y)) => calibrate_from_maxima(&base, &unconstrained_maxima(&base), x, y),
            _ => base,
        };
        let meta = Metadata {
            seed: Some(seed),
            config: Some(cfg),
            levels: sku.zip(dest).map(|(x, y)| (x.label(), y.label())),
        };
        let path = dir.join(format!("instance_{}x{}x{}_{label}_seed{seed}.json", a.stores, a.products, a.sizes));
        write_json(&path, &InstanceFile::from_instance(&inst, meta))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn flows_solution(method: Method, flow: &RelaxedFlow) -> SolutionFile {
    let mut transfers: Vec<_> = flow.flows.iter().filter(|f| f.qty > 1e-9).map(|f| (f.from, f.to, f.product)).collect();
    transfers.dedup();
    transfers.sort_unstable();
    transfers.dedup();
    let mut connections: Vec<_> = transfers.iter().map(|&(i, j, _)| (i, j)).collect();
    connections.dedup();
    connections.sort_unstable();
    connections.dedup();
    let objective = Money::from_f64(flow.objective);
    SolutionFile {
        method: method.name().into(),
        seed: None,
        transfers,
        connections,
        objective: Some(objective),
        lower_bound: None,
        upper_bound: Some(objective),
        gap: None,
        wall_time: None,
        flows: Some(flow.flows.iter().map(|f| (f.from, f.to, f.product, f.size, f.qty)).collect()),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Outcome {
    let file: InstanceFile = read_json(&a.instance)?;
    let inst = file.to_instance()?;
    if let Some(t) = a.time_limit.filter(|t| !(*t > 0.0)) {
        return Err(Failure::User(format!("--time-limit {t} must be positive")));
    }
    let started = Instant::now();
    let lp_failure = |e: transship::lp::LpError| Failure::Solver(format!("LP solve failed: {e}"));
    let mut trace_rows: Option<(Vec<&str>, Vec<Vec<String>>)> = None;
    let mut sol = match a.method {
        Method::Heuristic => {
            let cfg = a.heuristic.config(a.seed, a.time_limit);
            cfg.validate().map_err(Failure::User)?;
            let out = heuristic::solve(&inst, &cfg);
            trace_rows = Some((
                vec!["iteration", "current", "best", "temperature"],
                out.trace
                    .iter()
                    .map(|t| {
                        vec![t.iteration.to_string(), t.current.to_string(), t.best.to_string(), t.temperature.to_string()]
                    })
                    .collect(),
            ));
            SolutionFile::from_plan("heuristic", Some(a.seed), &inst, &out.plan)
        }
        Method::Exact => {
            let out = brute_force(&inst, EnumBudget { max_assignments: a.oracle_budget }).map_err(|e| match e {
                OracleError::TooLarge { .. } => Failure::Solver(format!(
                    "{e}; raise --oracle-budget or use --method heuristic / lagrangian for bounds"
                )),
                other => Failure::Solver(other.to_string()),
            })?;
            let mut sol = SolutionFile::from_plan("exact", None, &inst, &out.plan);
            sol.upper_bound = sol.objective;
            sol.gap = Some(0.0);
            sol
        }
        Method::Lagrangian => {
            let run = lagrangian::run(&inst, &a.lagrangian.config(a.time_limit));
            trace_rows = Some((
                vec!["iteration", "upper"],
                run.report
                    .trace
                    .iter()
                    .map(|t| vec![t.iteration.to_string(), t.upper.map_or(String::new(), |u| u.to_string())])
                    .collect(),
            ));
            SolutionFile {
                method: "lagrangian".into(),
                seed: None,
                transfers: Vec::new(),
                connections: Vec::new(),
                objective: None,
                lower_bound: None,
                upper_bound: run.report.upper_bound,
                gap: None,
                wall_time: None,
                flows: None,
            }
        }
        Method::Unconstrained => flows_solution(a.method, &solve_unconstrained(&inst)),
        Method::RelaxA => flows_solution(a.method, &solve_capacitated_a(&inst).map_err(lp_failure)?),
        Method::RelaxAb => {
            let ab = solve_capacitated_ab(&inst, BnbBudget {
                max_nodes: a.bnb_nodes,
                rel_gap: a.bnb_gap,
            }).map_err(lp_failure)?;
            let mut sol = flows_solution(a.method, &ab.flow);
            sol.lower_bound = sol.objective;
            sol.upper_bound = Some(if ab.exact { sol.objective.unwrap() } else { Money::from_f64(ab.bound) });
            if !ab.exact {
                eprintln!("branch-and-bound stopped after {} nodes; upper_bound is the open bound", ab.nodes);
            }
            sol
        }
    };
    if let (Some(ub), Some(lb)) = (sol.upper_bound, sol.lower_bound) {
        sol.gap = optimality_gap(ub, lb).ok();
    }
    if !cli.no_timing {
        sol.wall_time = Some(started.elapsed().as_secs_f64());
    }
    let path = a
        .output
        .clone()
        .unwrap_or_else(|| out_dir(cli).join(format!("{}.{}.json", stem(&a.instance), a.method.name())));
    write_json(&path, &sol)?;
    if let (Some(trace), Some((header, rows))) = (&a.trace, trace_rows) {
        write_csv(trace, &[], &header, &rows)?;
    }
    let show = |m: Option<Money>| m.map_or("-".to_string(), |m| m.to_string());
    println!(
        "{}: objective {} upper {} transfers {} -> {}",
        a.method.name(),
        show(sol.objective),
        show(sol.upper_bound),
        sol.transfers.len(),
        path.display()
    );
    Ok(())
}

fn cmd_verify(instance: &Path, solution: &Path) -> Outcome {
    let inst: Instance = read_json::<InstanceFile>(instance)?.to_instance()?;
    let sol: SolutionFile = read_json(solution)?;
    sol.verify(&inst).map_err(Failure::User)?;
    println!("ok");
    Ok(())
}

fn records_dir(cli: &Cli, name: &str) -> PathBuf {
    out_dir(cli).join(name)
}

fn cmd_gap_study(cli: &Cli, a: &GapArgs) -> Outcome {
    positive("stores", &a.stores)?;
    positive("products", &a.products)?;
    positive("sizes", &a.sizes)?;
    positive("reps", &[a.reps])?;
    let sa = a.heuristic.config(0, None);
    sa.validate().map_err(Failure::User)?;
    let study = GapStudy {
        stores: a.stores.clone(),
        products: a.products.clone(),
        sizes: a.sizes.clone(),
        levels: parse_levels(&a.levels)?,
        reps: a.reps,
        seed: a.seed,
        sa,
        lagrangian: a.lagrangian.config(None),
        baseline: match a.baseline {
            BaselineArg::Heuristic => Baseline::Heuristic,
            BaselineArg::Keep => Baseline::Keep,
        },
        timing: !cli.no_timing,
    };
    let records = study.run(Some(&records_dir(cli, "gap_records")))?;
    let rows: Vec<_> = summarize_gaps(&records).iter().map(|s| s.row()).collect();
    let path = a.output.clone().unwrap_or_else(|| out_dir(cli).join("gap_study.csv"));
    let notes = vec![
        "gap = (UB - LB) / LB; UB from the Lagrangian run, LB from the baseline".to_string(),
        format!("baseline {}", if study.baseline == Baseline::Keep { "keep-everything" } else { "construction plus annealing" }),
    ];
    write_csv(&path, &notes, &GAP_HEADER, &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_constraint_study(cli: &Cli, a: &ConstraintArgs) -> Outcome {
    positive("stores", &[a.stores])?;
    positive("products", &[a.products])?;
    positive("sizes", &a.sizes)?;
    positive("reps", &[a.reps])?;
    let sa = a.heuristic.config(0, None);
    sa.validate().map_err(Failure::User)?;
    let study = ConstraintStudy {
        stores: a.stores,
        products: a.products,
        sizes: a.sizes.clone(),
        sku_levels: parse_levels(&a.sku_levels)?,
        dest_levels: parse_levels(&a.dest_levels)?,
        reps: a.reps,
        seed: a.seed,
        sa,
        oracle: EnumBudget {
            max_assignments: a.oracle_budget,
        },
        bnb: BnbBudget {
                max_nodes: a.bnb_nodes,
                rel_gap: a.bnb_gap,
            },
    };
    let records = study.run(Some(&records_dir(cli, "constraint_records")))?;
    let rows: Vec<_> = summarize_chain(&records).iter().map(|s| s.row()).collect();
    let path = a.output.clone().unwrap_or_else(|| out_dir(cli).join("constraint_study.csv"));
    let notes = vec![
        "pct columns: objective as a percentage of the unconstrained objective".to_string(),
        "gain_pct columns: improvement over keeping everything as a percentage of the unconstrained improvement".to_string(),
        "full is exact when enumeration fits the budget, else an annealing lower bound (see full_exact)".to_string(),
    ];
    write_csv(&path, &notes, &CHAIN_HEADER, &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_sizes_study(cli: &Cli, a: &SizesArgs) -> Outcome {
    positive("stores", &[a.stores])?;
    positive("products", &[a.products])?;
    positive("sizes", &a.sizes)?;
    positive("reps", &[a.reps])?;
    let study = SizesStudy {
        stores: a.stores,
        products: a.products,
        sizes: a.sizes.clone(),
        reps: a.reps,
        seed: a.seed,
        sa: SaConfig {
            max_iterations: a.sa_iterations,
            ..SaConfig::default()
        },
    };
    let records = study.run(Some(&records_dir(cli, "sizes_records")))?;
    let rows: Vec<_> = summarize_sizes(&records).iter().map(|s| s.row()).collect();
    let path = a.output.clone().unwrap_or_else(|| out_dir(cli).join("sizes_study.csv"));
    let notes = vec![
        "capacity-free single-destination solutions from construction plus annealing".to_string(),
        "transfers: (origin, destination, product) decisions; sku_triples: (product, size, origin -> destination) with stock in those decisions".to_string(),
        "relaxed_triples: positive-flow (product, size, origin -> destination) triples of the fractional transportation model".to_string(),
    ];
    write_csv(&path, &notes, &SIZES_HEADER, &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::Verify { instance, solution } => cmd_verify(instance, solution),
        Command::GapStudy(a) => cmd_gap_study(&cli, a),
        Command::ConstraintStudy(a) => cmd_constraint_study(&cli, a),
        Command::SizesStudy(a) => cmd_sizes_study(&cli, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
