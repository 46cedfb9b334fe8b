use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eigentrilat::bench::{self, DegenExperiment, NoiseExperiment};
use eigentrilat::ingest::{self, BuildOptions};
use eigentrilat::io::{parse_problem, solution_to_json};
use eigentrilat::{
    cost_h, refine_ml, solve_simple, solve_with_known, Error, Minimizers, MlOptions, SolutionSet,
    SolverOptions, TrilaterationProblem,
};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "eigentrilat", version, about = "Globally optimal trilateration")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Output file (for `bench`, a directory receiving the report files).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file.
    Solve {
        /// Problem JSON.
        #[arg(long)]
        input: PathBuf,
        /// Use the simplified solver, which fails on degenerate geometry.
        #[arg(long)]
        simple: bool,
        #[command(flatten)]
        solve: SolveFlags,
    },
    /// Run a benchmark experiment.
    Bench {
        #[command(subcommand)]
        kind: BenchKind,
    },
    /// Locate a receiver from RSS/RTT measurements.
    Locate {
        /// Measurement CSV with columns anchor_id,kind,value.
        #[arg(long)]
        input: PathBuf,
        /// Anchor registry JSON.
        #[arg(long)]
        anchors: PathBuf,
        /// Use unit weights instead of the noise-model weights.
        #[arg(long)]
        unweighted: bool,
        /// RSS noise standard deviation, dBm.
        #[arg(long, default_value_t = 5.0)]
        sigma_rss: f64,
        /// RTT noise standard deviation, meters.
        #[arg(long, default_value_t = 1.0)]
        sigma_rtt: f64,
        #[command(flatten)]
        solve: SolveFlags,
    },
    /// Fit path-loss parameters from a distance,rss_dbm CSV.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SolveFlags {
    /// Fix a receiver coordinate, as index=value. Repeatable.
    #[arg(long = "known-coord", value_parser = parse_known)]
    known: Vec<(usize, f64)>,
    /// Relative tolerance marking singular directions.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Refine each solution by local ML optimization.
    #[arg(long)]
    refine_ml: bool,
}

#[derive(Subcommand, Debug)]
enum BenchKind {
    /// Position error under Gaussian distance noise.
    Noise {
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of senders.
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Also write gnuplot data files.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Stability as the senders approach a plane.
    Degen {
        /// Comma list, or a decade range such as 1e0..1e-8.
        #[arg(long, default_value = "1e0..1e-8", value_parser = parse_scales)]
        scales: Scales,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        gnuplot: bool,
    },
    /// Median solve time over sender counts.
    Timing {
        /// Sender counts.
        #[arg(long, value_delimiter = ',', default_value = "4,10,100")]
        m: Vec<usize>,
        /// Repetitions per sender count.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Scales(Vec<f64>);

fn parse_known(s: &str) -> std::result::Result<(usize, f64), String> {
    let (i, v) = s.split_once('=').ok_or_else(|| format!("expected index=value, got {s:?}"))?;
    let i = i.trim().parse().map_err(|e| format!("bad index {i:?}: {e}"))?;
    let v = v.trim().parse().map_err(|e| format!("bad value {v:?}: {e}"))?;
    Ok((i, v))
}

/// `a,b,c` or the decade range `a..b` (both powers of ten apart by whole decades).
fn parse_scales(s: &str) -> std::result::Result<Scales, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}"));
    let out = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if !(a > 0.0 && b > 0.0) {
            return Err("range ends must be positive".into());
        }
        let (la, lb) = (a.log10(), b.log10());
        let steps = (lb - la).abs().round() as i32;
        if ((lb - la).abs() - steps as f64).abs() > 1e-9 {
            return Err(format!("{s:?} does not span whole decades"));
        }
        let dir = if lb < la { -1 } else { 1 };
        (0..=steps).map(|k| 10f64.powf(la.round() + (dir * k) as f64) * (a / 10f64.powf(la.round()))).collect()
    } else {
        s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
    };
    if out.iter().any(|v: &f64| !(0.0..=1.0).contains(v)) {
        return Err("scales must lie in [0, 1]".into());
    }
    Ok(Scales(out))
}

enum Outcome {
    Solved,
    IllDefined,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Outcome::Solved) => ExitCode::SUCCESS,
        Ok(Outcome::IllDefined) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Solve { input, simple, solve } => {
            let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let problem = parse_problem(&text)?;
            let opts = solver_options(solve);
            let problem = problem.validate_with(opts.clamp)?;
            if *simple {
                return cmd_simple(cli, &problem, solve, &opts);
            }
            report_solution(cli, &problem, solve, &opts)
        }
        Command::Locate { input, anchors, unweighted, sigma_rss, sigma_rtt, solve } => {
            let meas = ingest::read_measurements(open(input)?)?;
            let anchors = ingest::read_anchors(open(anchors)?)?;
            let build = BuildOptions {
                sigma_rss: *sigma_rss,
                sigma_rtt: *sigma_rtt,
                unweighted: *unweighted,
                ..BuildOptions::default()
            };
            let problem = ingest::build_problem(&meas, &anchors, &build)?;
            report_solution(cli, &problem, solve, &solver_options(solve))
        }
        Command::Calibrate { input } => {
            let records = ingest::read_calibration(open(input)?)?;
            let (c0, eta) = ingest::calibrate_pathloss(&records)?;
            let text = match cli.format {
                Format::Json => format!("{}\n", json!({ "c0": c0, "eta": eta })),
                Format::Csv => format!("c0,eta\n{c0:?},{eta:?}\n"),
                Format::Human => format!("c0  {c0:.4} dBm\neta {eta:.4}\n"),
            };
            emit(cli.output.as_deref(), &text)?;
            Ok(Outcome::Solved)
        }
        Command::Bench { kind } => {
            bench::init_threads_from_env();
            cmd_bench(cli, kind)?;
            Ok(Outcome::Solved)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn solver_options(flags: &SolveFlags) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(tol) = flags.rank_tol {
        opts.rank_tol = tol;
    }
    opts
}

fn known_map(flags: &SolveFlags) -> BTreeMap<usize, f64> {
    flags.known.iter().copied().collect()
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.9}")).collect();
    format!("({})", parts.join(", "))
}

fn ml_refinements(problem: &TrilaterationProblem, points: &[&Vec<f64>]) -> Vec<Value> {
    points
        .iter()
        .map(|x| match refine_ml(problem, x, &MlOptions::default()) {
            Ok(fit) => json!({
                "x": fit.x, "iterations": fit.iterations, "cost": fit.cost, "gradient_norm": fit.gradient_norm,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        })
        .collect()
}

fn report_solution(
    cli: &Cli,
    problem: &TrilaterationProblem,
    flags: &SolveFlags,
    opts: &SolverOptions,
) -> Result<Outcome> {
    let sol = solve_with_known(problem, &known_map(flags), opts)?;
    let ml = if flags.refine_ml { ml_refinements(problem, &sol.points()) } else { Vec::new() };
    let text = match cli.format {
        Format::Json => {
            let mut v = solution_to_json(&sol);
            if flags.refine_ml {
                v["ml"] = Value::Array(ml);
            }
            format!("{}\n", serde_json::to_string_pretty(&v)?)
        }
        Format::Csv => solution_csv(&sol, &ml),
        Format::Human => solution_human(&sol, &ml),
    };
    emit(cli.output.as_deref(), &text)?;
    Ok(if sol.is_ill_defined() { Outcome::IllDefined } else { Outcome::Solved })
}

fn solution_csv(sol: &SolutionSet, ml: &[Value]) -> String {
    let mut rows: Vec<(String, Vec<f64>, f64)> =
        sol.points().iter().map(|x| (sol.kind().to_string(), x.to_vec(), 0.0)).collect();
    if let Minimizers::Sphere(s) = &sol.minimizers {
        rows.push(("sphere".into(), s.center.clone(), s.radius));
    }
    for v in ml {
        if let Some(x) = v["x"].as_array() {
            rows.push(("ml".into(), x.iter().filter_map(Value::as_f64).collect(), 0.0));
        }
    }
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("kind,lambda,rank,cost,radius");
    for k in 0..dim {
        out += &format!(",x{k}");
    }
    out.push('\n');
    if rows.is_empty() {
        out += &format!("{},{:?},{},,\n", sol.kind(), sol.lambda, sol.rank);
    }
    for (kind, x, radius) in rows {
        out += &format!("{kind},{:?},{},{:?},{radius:?}", sol.lambda, sol.rank, sol.cost);
        for v in x {
            out += &format!(",{v:?}");
        }
        out.push('\n');
    }
    out
}

fn solution_human(sol: &SolutionSet, ml: &[Value]) -> String {
    let mut out = format!("kind    {}\nlambda  {:.12}\nrank    {}\ncost    {:.6e}\n", sol.kind(), sol.lambda, sol.rank, sol.cost);
    for x in sol.points() {
        out += &format!("point   {}\n", fmt_point(x));
    }
    match &sol.minimizers {
        Minimizers::Sphere(s) => {
            out += &format!("center  {}\nradius  {:.9}\n", fmt_point(&s.center), s.radius);
            out += "note    sender geometry admits a continuum of solutions\n";
        }
        Minimizers::IllDefined => out += "note    no consistent solution set\n",
        _ => {}
    }
    for v in ml {
        match v["x"].as_array() {
            Some(x) => {
                let x: Vec<f64> = x.iter().filter_map(Value::as_f64).collect();
                out += &format!("ml      {} after {} iterations\n", fmt_point(&x), v["iterations"]);
            }
            None => out += &format!("ml      failed: {}\n", v["error"].as_str().unwrap_or("")),
        }
    }
    out
}

fn cmd_simple(cli: &Cli, problem: &TrilaterationProblem, flags: &SolveFlags, opts: &SolverOptions) -> Result<Outcome> {
    if !flags.known.is_empty() {
        bail!("--known-coord is not supported with --simple");
    }
    match solve_simple(problem, opts) {
        Ok(x) => {
            let cost = cost_h(&x, problem);
            let ml = if flags.refine_ml { ml_refinements(problem, &[&x]) } else { Vec::new() };
            let text = match cli.format {
                Format::Json => {
                    let mut v = json!({ "kind": "unique", "points": [x], "cost": cost });
                    if flags.refine_ml {
                        v["ml"] = Value::Array(ml);
                    }
                    format!("{}\n", serde_json::to_string_pretty(&v)?)
                }
                Format::Csv => {
                    let mut out = String::from("kind,cost");
                    for k in 0..x.len() {
                        out += &format!(",x{k}");
                    }
                    out += &format!("\nunique,{cost:?}");
                    for v in &x {
                        out += &format!(",{v:?}");
                    }
                    out + "\n"
                }
                Format::Human => format!("kind    unique\ncost    {cost:.6e}\npoint   {}\n", fmt_point(&x)),
            };
            emit(cli.output.as_deref(), &text)?;
            Ok(Outcome::Solved)
        }
        Err(Error::NearSingular { condition }) => {
            let text = match cli.format {
                Format::Json => format!("{}\n", json!({ "kind": "near_singular", "condition": condition })),
                Format::Csv => format!("kind,condition\nnear_singular,{condition}\n"),
                Format::Human => format!(
                    "kind    near_singular\ncondition {condition:.3e}\nnote    rerun without --simple\n"
                ),
            };
            emit(cli.output.as_deref(), &text)?;
            Ok(Outcome::IllDefined)
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes `<name>.csv`, `<name>.json` and optionally `<name>.dat` into `dir`.
fn write_reports(
    dir: &Path,
    name: &str,
    csv: impl FnOnce(&mut File) -> eigentrilat::Result<()>,
    summary: &Value,
    gnuplot: Option<&dyn Fn(&mut File) -> io::Result<()>>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{name}.csv"));
    let mut f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    csv(&mut f)?;
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    if let Some(write) = gnuplot {
        let path = dir.join(format!("{name}.dat"));
        let mut f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write(&mut f)?;
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, kind: &BenchKind) -> Result<()> {
    let opts = SolverOptions::default();
    match kind {
        BenchKind::Noise { sigmas, trials, seed, m, gnuplot } => {
            if *trials == 0 {
                bail!("--trials must be at least 1");
            }
            if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                bail!("--sigmas must be nonnegative");
            }
            let mut exp = NoiseExperiment::new(sigmas.clone(), *trials, *seed);
            exp.senders = *m;
            let rows = exp.run(&opts);
            let summary = bench::noise_summary(&exp, &rows);
            match &cli.output {
                Some(dir) => write_reports(
                    dir,
                    "noise",
                    |f| bench::write_noise_csv(&rows, f),
                    &summary,
                    gnuplot.then_some(&|f: &mut File| bench::write_noise_gnuplot(&rows, f)),
                ),
                None => print_table(cli.format, &summary, |w| bench::write_noise_csv(&rows, w)),
            }
        }
        BenchKind::Degen { scales, trials, seed, gnuplot } => {
            if *trials == 0 {
                bail!("--trials must be at least 1");
            }
            let exp = DegenExperiment::new(scales.0.clone(), *trials, *seed);
            let rows = exp.run(&opts);
            let summary = bench::degen_summary(&exp, &rows);
            match &cli.output {
                Some(dir) => write_reports(
                    dir,
                    "degen",
                    |f| bench::write_degen_csv(&rows, f),
                    &summary,
                    gnuplot.then_some(&|f: &mut File| bench::write_degen_gnuplot(&rows, f)),
                ),
                None => print_table(cli.format, &summary, |w| bench::write_degen_csv(&rows, w)),
            }
        }
        BenchKind::Timing { m, trials, seed } => {
            if *trials < 100 {
                bail!("--trials must be at least 100 for timing");
            }
            let rows = bench::run_timing(m, *trials, *seed);
            let summary = bench::timing_summary(*seed, *trials, &rows);
            match &cli.output {
                Some(dir) => write_reports(dir, "timing", |f| bench::write_timing_csv(&rows, f), &summary, None),
                None => print_table(cli.format, &summary, |w| bench::write_timing_csv(&rows, w)),
            }
        }
    }
}

fn print_table(
    format: Format,
    summary: &Value,
    csv: impl FnOnce(&mut Vec<u8>) -> eigentrilat::Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Json => buf.extend(serde_json::to_string_pretty(summary)?.bytes().chain([b'\n'])),
        Format::Csv => csv(&mut buf)?,
        Format::Human => {
            let mut table = Vec::new();
            csv(&mut table)?;
            for line in String::from_utf8_lossy(&table).lines() {
                let cells: Vec<String> = line.split(',').map(|c| format!("{c:>14}")).collect();
                buf.extend(cells.join(" ").bytes().chain([b'\n']));
            }
        }
    }
    io::stdout().write_all(&buf).context("writing to stdout")
}
