//! `qfs`: runs simulation scenarios and writes CSV, SVG and report files.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod presets;
mod run;
mod scenario;
mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use qfs_core::fullsim::DEFAULT_BUDGET;
use run::RunOutput;
use scenario::Scenario;

#[derive(Parser, Debug)]
#[command(
    name = "qfs",
    version,
    about = "Scenario runner for the atom-cavity-waveguide feedback simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file, or a bundled preset by name.
    Run {
        scenario: String,
        /// Directory for the CSV, SVG and report files.
        #[arg(long, env = "QFS_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
        /// Largest number of complex amplitudes the full simulation may allocate.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Print nothing on success.
        #[arg(long)]
        quiet: bool,
    },
    /// List bundled presets and the scenario files in a directory.
    List {
        #[arg(long, env = "QFS_SCENARIO_DIR")]
        scenario_dir: Option<PathBuf>,
    },
    /// Print a bundled preset, e.g. as a starting point for a new scenario.
    Show { preset: String },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out_dir,
            budget,
            quiet,
        } => run_command(&scenario, &out_dir, budget, quiet),
        Command::List { scenario_dir } => {
            print!("{}", list(scenario_dir.as_deref()));
            ExitCode::SUCCESS
        }
        Command::Show { preset } => match presets::find(&preset) {
            Some(p) => {
                print!("{}", p.source);
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("qfs: no preset named `{preset}`");
                ExitCode::from(EXIT_FAILURE)
            }
        },
    }
}

fn run_command(target: &str, out_dir: &Path, budget: usize, quiet: bool) -> ExitCode {
    let (origin, source) = match load(target) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("qfs: {msg}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let sc = match scenario::parse(&source) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("qfs: schema error in {origin}: {e}");
            return ExitCode::from(EXIT_SCHEMA);
        }
    };
    let start = Instant::now();
    let output = match run::execute(&sc, budget) {
        Ok(o) => o,
        Err(qfs_core::Error::Divergence { t, magnitude }) => {
            eprintln!(
                "qfs: {}: integration diverged at t = {t} (|x| = {magnitude:e})",
                sc.name
            );
            return ExitCode::from(EXIT_DIVERGENCE);
        }
        Err(qfs_core::Error::Recurrence { recurrence, t_end }) => {
            let key = if sc.grid.is_some() { "grid" } else { "numerics" };
            let e = scenario::error_at(
                &source,
                key,
                format!("grid recurrence time {recurrence} does not exceed t_end = {t_end}"),
            );
            eprintln!("qfs: schema error in {origin}: {e}");
            return ExitCode::from(EXIT_SCHEMA);
        }
        Err(e) => {
            eprintln!("qfs: {}: {e}", sc.name);
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    match write_outputs(&sc, &output, elapsed, out_dir) {
        Ok(files) => {
            if !quiet {
                println!("{}: {} samples in {elapsed:.2} s", sc.name, output.times.len());
                for f in files {
                    println!("  wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qfs: cannot write outputs to {}: {e}", out_dir.display());
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

/// Reads a scenario file, falling back to a bundled preset of that name.
fn load(target: &str) -> Result<(String, String), String> {
    let path = Path::new(target);
    if path.exists() {
        return fs::read_to_string(path)
            .map(|s| (path.display().to_string(), s))
            .map_err(|e| format!("cannot read {}: {e}", path.display()));
    }
    presets::find(target)
        .map(|p| (format!("preset {}", p.name), p.source.to_string()))
        .ok_or_else(|| format!("{target}: no such file or bundled preset"))
}

fn write_outputs(sc: &Scenario, out: &RunOutput, elapsed: f64, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let names: Vec<String> = sc.outputs.iter().map(|o| o.column()).collect();
    let mut files = Vec::new();

    let csv_path = dir.join(format!("{}_timeseries.csv", sc.name));
    fs::write(&csv_path, csv(&names, out))?;
    files.push(csv_path);

    if sc.plot && !names.is_empty() {
        let series: Vec<(String, Vec<f64>)> = names.iter().cloned().zip(out.columns.iter().cloned()).collect();
        let svg_path = dir.join(format!("{}.svg", sc.name));
        fs::write(&svg_path, svg::line_chart(&sc.name, &out.times, &series))?;
        files.push(svg_path);
    }

    let mut report = String::new();
    let mut put = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(report, "{k} = {v}");
    };
    put("name", &sc.name);
    put("description", &sc.description);
    put("mode", &sc.mode.as_str());
    let columns = std::iter::once("t".to_string())
        .chain(names.iter().cloned())
        .collect::<Vec<_>>()
        .join(", ");
    put("columns", &columns);
    put("samples", &out.times.len());
    put("t_end", &sc.t_end);
    for (k, v) in &out.report {
        put(k, v);
    }
    put("elapsed_seconds", &format!("{elapsed:.3}"));
    if let Some(limit) = sc.time_limit {
        put("time_limit", &limit);
        put("within_time_limit", &(elapsed <= limit));
    }
    let report_path = dir.join(format!("{}_report", sc.name));
    fs::write(&report_path, report)?;
    files.push(report_path);
    Ok(files)
}

/// CSV with a `t` column and 15 significant digits per value.
fn csv(names: &[String], out: &RunOutput) -> String {
    let mut s = String::from("t");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (i, t) in out.times.iter().enumerate() {
        let _ = write!(s, "{t:.14e}");
        for col in &out.columns {
            let _ = write!(s, ",{:.14e}", col[i]);
        }
        s.push('\n');
    }
    s
}

fn list(dir: Option<&Path>) -> String {
    let mut s = String::from("bundled presets:\n");
    for p in presets::ALL {
        let desc = scenario::parse(p.source).map(|sc| format!("{:<16} {}", sc.mode.as_str(), sc.description));
        let _ = writeln!(
            s,
            "  {:<16} {}",
            p.name,
            desc.unwrap_or_else(|e| format!("[parse error: {e}]"))
        );
    }
    let Some(dir) = dir else {
        return s;
    };
    let _ = writeln!(s, "scenarios in {}:", dir.display());
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect(),
        Err(e) => {
            let _ = writeln!(s, "  [cannot read directory: {e}]");
            return s;
        }
    };
    paths.sort();
    for path in paths {
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let line = match fs::read_to_string(&path) {
            Ok(src) => match scenario::parse(&src) {
                Ok(sc) => format!("{:<16} {:<16} {}", sc.name, sc.mode.as_str(), sc.description),
                Err(e) => format!("{file:<16} [parse error: {e}]"),
            },
            Err(e) => format!("{file:<16} [unreadable: {e}]"),
        };
        let _ = writeln!(s, "  {line}");
    }
    s
}
