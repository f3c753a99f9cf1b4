use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dtomo::dual::StepRule;
use dtomo::instance::{generate_random_instance, load_instance, read_pgm, save_instance, write_pgm, GeneratorConfig};
use dtomo::pipeline::{solve, Method, SolveConfig};
use dtomo::report::{compare_instance, CompareInput, CompareReport, ResultRecord};
use dtomo::{Direction, Error, Labeling};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "dtomo", version, about = "Dual bounds and reconstructions for non-binary discrete tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random instances with ground-truth images.
    Generate(GenerateArgs),
    /// Solve one instance and emit a result record.
    Solve(SolveArgs),
    /// Run several methods over a directory of instances.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of instances; seeds are `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(short, long, default_value_t = 3)]
    k: usize,
    /// Projection directions: any of h (rows), v (columns), d (down
    /// diagonals), u (up diagonals).
    #[arg(long, default_value = "hv")]
    directions: String,
    /// Box blur radius of the image generator.
    #[arg(long, default_value_t = 1)]
    smoothing: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepKind {
    Diminishing,
    Polyak,
    Bundle,
}

#[derive(Args, Clone)]
struct SolverFlags {
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "diminishing")]
    step: StepKind,
    /// Initial step size (diminishing and Polyak fallback).
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    /// Step decay constant.
    #[arg(long, default_value_t = 20.0)]
    tau: f64,
    /// Polyak scaling factor.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Bundle size.
    #[arg(long, default_value_t = 20)]
    bundle_size: usize,
    /// Initial bundle prox parameter.
    #[arg(long, default_value_t = 1.0)]
    bundle_t: f64,
    /// Minimal bound improvement over the stall window.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    stall_window: usize,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Ascent iterations per branch-and-bound node.
    #[arg(long, default_value_t = 200)]
    node_iters: usize,
    #[arg(long, default_value_t = 100_000)]
    node_limit: usize,
    /// Search-node budget of the primal heuristic.
    #[arg(long, default_value_t = 20_000)]
    primal_node_limit: usize,
    /// Side of the local-search windows of the primal heuristic (0 = off).
    #[arg(long, default_value_t = 4)]
    window: usize,
    #[arg(long, default_value_t = 5_000)]
    window_node_limit: usize,
    /// Keep iterating after the duality gap is closed.
    #[arg(long)]
    no_early_stop: bool,
    /// Sequential evaluation and no timings, for bit-identical output.
    #[arg(long)]
    deterministic: bool,
}

impl SolverFlags {
    fn config(&self) -> SolveConfig {
        let mut c = SolveConfig::default();
        c.ascent.max_iters = self.max_iters;
        c.ascent.step = match self.step {
            StepKind::Diminishing => StepRule::Diminishing {
                alpha0: self.alpha0,
                tau: self.tau,
            },
            StepKind::Polyak => StepRule::Polyak {
                rho: self.rho,
                alpha0: self.alpha0,
                tau: self.tau,
            },
            StepKind::Bundle => StepRule::Bundle {
                size: self.bundle_size,
                t: self.bundle_t,
            },
        };
        c.ascent.stall_tol = self.tol;
        c.ascent.stall_window = self.stall_window;
        c.ascent.stop_when_certified = !self.no_early_stop;
        c.time_limit_seconds = self.time_limit;
        c.bnb_node_iters = self.node_iters;
        c.bnb_node_limit = self.node_limit;
        c.primal.node_limit = self.primal_node_limit;
        c.primal.window = self.window;
        c.primal.window_node_limit = self.window_node_limit;
        c.deterministic = self.deterministic;
        c
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "ctg")]
    method: Method,
    #[command(flatten)]
    flags: SolverFlags,
    /// Write the result record here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the reconstruction as a PGM image.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of instance files (`*.json`); a `<name>.pgm` next to an
    /// instance is read as its ground truth.
    dir: PathBuf,
    /// Comma-separated methods.
    #[arg(long, default_value = "ctg,std", value_delimiter = ',')]
    methods: Vec<Method>,
    #[command(flatten)]
    flags: SolverFlags,
    /// Per-instance CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full JSON report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Compare(a) => compare(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_VALIDATION } else { EXIT_FAILURE })
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| io_error(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn generate(a: GenerateArgs) -> Result<u8, Error> {
    let directions = Direction::parse_set(&a.directions)?;
    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let dirs: String = directions.iter().map(|d| d.flag()).collect();
    for seed in a.seed..a.seed + a.count {
        let mut cfg = GeneratorConfig::new(seed, a.width, a.height, a.k, directions.clone());
        cfg.smoothing = a.smoothing;
        let (instance, truth) = generate_random_instance(&cfg)?;
        let stem = format!("inst_{}x{}_k{}_{dirs}_s{seed}", a.width, a.height, a.k);
        let json = a.out.join(format!("{stem}.json"));
        save_instance(&instance, &json)?;
        write_pgm(a.out.join(format!("{stem}.pgm")), a.width, a.height, a.k, &truth)?;
        println!("{}", json.display());
    }
    Ok(0)
}

fn solve_cmd(a: SolveArgs) -> Result<u8, Error> {
    let instance = load_instance(&a.instance)?;
    let config = a.flags.config();
    let result = solve(&instance, a.method, &config);
    let record = ResultRecord::new(&result, Some(a.instance.display().to_string()));
    write_output(a.out.as_deref(), &record.to_json())?;
    if let (Some(p), Some(l)) = (&a.pgm, &result.labeling) {
        write_pgm(p, instance.width(), instance.height(), instance.k(), l)?;
    }
    Ok(if result.timed_out() { EXIT_TIMEOUT } else { 0 })
}

fn compare(a: CompareArgs) -> Result<u8, Error> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.dir)
        .map_err(|e| io_error(&a.dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let config = a.flags.config();
    let truths: Vec<Option<Labeling>> = paths
        .iter()
        .map(|p| read_pgm(p.with_extension("pgm")).ok().map(|(_, _, _, l)| l))
        .collect();
    let run = |(p, truth): (&PathBuf, &Option<Labeling>)| {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let input = CompareInput {
            name,
            instance: load_instance(p),
            ground_truth: truth.as_ref(),
        };
        compare_instance(input, &a.methods, &config)
    };
    let rows = if config.deterministic {
        paths.iter().zip(&truths).map(run).collect()
    } else {
        use rayon::prelude::*;
        paths.par_iter().zip(truths.par_iter()).map(run).collect()
    };
    let report = CompareReport::new(rows, &a.methods);
    if let Some(csv) = &a.csv {
        report.write_csv(csv)?;
    }
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report).expect("reports serialize");
        write_output(Some(out), &text)?;
    }
    let summary = serde_json::to_string_pretty(&report.summary).expect("summaries serialize");
    write_output(None, &summary)?;
    let timed_out = report
        .rows
        .iter()
        .flat_map(|r| &r.cells)
        .any(|c| c.status == Some(dtomo::pipeline::SolveStatus::Timeout));
    Ok(if timed_out { EXIT_TIMEOUT } else { 0 })
}
