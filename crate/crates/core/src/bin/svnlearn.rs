use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use svnlearn::complexity::mc_growth;
use svnlearn::config::{self, ConfigTable};
use svnlearn::datagen::{generate, make_ground_truth, streams};
use svnlearn::erm::{fit, FitReport};
use svnlearn::experiment::{plot_bounds, risk_curve, risk_curve_csv, slope_fit, SlopeFit};
use svnlearn::io::{read_dataset, read_operator, write_dataset, write_operator};
use svnlearn::projection::{project_schatten, DEFAULT_TOL};
use svnlearn::Error;

#[derive(Parser)]
#[command(name = "svnlearn", version, about = "Learn linear operators with bounded Schatten norm")]
struct Cli {
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a synthetic scenario (writes dataset.csv, truth.svnop).
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of samples.
        #[arg(short = 'n', long, default_value_t = 100)]
        samples: usize,
    },
    /// Fit an operator to a dataset (writes operator.svnop, fit_report.csv).
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset in SVNDATA format.
        #[arg(long)]
        data: PathBuf,
    },
    /// Project an operator onto a Schatten ball (writes projected.svnop).
    Project {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Operator in SVNOP format.
        #[arg(long)]
        operator: PathBuf,
    },
    /// Excess-risk curve over sample sizes (writes risk_curve.csv, slope_fit.csv).
    RiskCurve {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Growth of random Rademacher operators (writes rademacher.csv).
    Rademacher {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Excess-risk bound curves (writes bounds.csv, bounds.svg).
    PlotBounds {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

enum Failure {
    Config(String),
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnsupportedOrder(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load_table(args: &ConfigArgs, seed: Option<u64>) -> Result<ConfigTable, Failure> {
    let mut table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ConfigTable::parse(&text)?
        }
        None => ConfigTable::default(),
    };
    for s in &args.set {
        table.set_assignment(s)?;
    }
    if let Some(seed) = seed {
        table.set("seed", &seed.to_string());
    }
    Ok(table)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = out.join(name);
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), Failure> {
    let path = out.join(name);
    Ok((BufWriter::new(File::create(&path)?), path))
}

fn run(cli: Cli) -> Result<(), Failure> {
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Gen { cfg, samples } => {
            let mut t = load_table(&cfg, cli.seed)?;
            let spec = config::scenario_from(&mut t)?;
            t.finish()?;
            let truth = make_ground_truth(&spec)?;
            let data = generate(&truth, &spec, spec.seed, streams::TRAIN, 0, samples)?;
            let (w, path) = create(out, "dataset.csv")?;
            write_dataset(w, &data)?;
            println!("wrote {}", path.display());
            let (w, path) = create(out, "truth.svnop")?;
            write_operator(w, &truth)?;
            println!("wrote {}", path.display());
        }
        Command::Fit { cfg, data } => {
            let mut t = load_table(&cfg, None)?;
            t.take_raw("seed");
            let ball = config::ball_from(&mut t, None, None)?;
            let opts = config::solver_from(&mut t)?;
            t.finish()?;
            let file = File::open(&data).map_err(|e| Failure::Other(format!("{}: {e}", data.display())))?;
            let set = read_dataset(BufReader::new(file), None)?;
            let result = fit(&set, ball, &opts)?;
            let (w, path) = create(out, "operator.svnop")?;
            write_operator(w, &result.operator)?;
            println!("wrote {}", path.display());
            write_text(out, "fit_report.csv", &format!("{}\n{}\n", FitReport::CSV_HEADER, result.report.csv_row()))?;
            if !result.report.converged {
                return Err(Failure::NotConverged(format!(
                    "solver stopped at the iteration cap ({} iterations)",
                    result.report.iterations
                )));
            }
        }
        Command::Project { cfg, operator } => {
            let mut t = load_table(&cfg, None)?;
            t.take_raw("seed");
            let ball = config::ball_from(&mut t, None, None)?;
            let tol = t.take_or("tol", DEFAULT_TOL)?;
            t.finish()?;
            let file = File::open(&operator).map_err(|e| Failure::Other(format!("{}: {e}", operator.display())))?;
            let op = read_operator(BufReader::new(file))?;
            let projected = project_schatten(&op, &ball, tol)?;
            let (w, path) = create(out, "projected.svnop")?;
            write_operator(w, &projected)?;
            println!("wrote {}", path.display());
        }
        Command::RiskCurve { cfg } => {
            let mut t = load_table(&cfg, cli.seed)?;
            let config = config::risk_curve_from(&mut t)?;
            t.finish()?;
            let rows = risk_curve(&config)?;
            write_text(out, "risk_curve.csv", &risk_curve_csv(&rows))?;
            match slope_fit(&rows) {
                Ok(fits) => {
                    let mut text = format!("{}\n", SlopeFit::CSV_HEADER);
                    for f in &fits {
                        text.push_str(&f.csv_row());
                        text.push('\n');
                        println!("p = {}: slope {:.4} (r2 {:.4})", f.p, f.slope, f.r2);
                    }
                    write_text(out, "slope_fit.csv", &text)?;
                }
                Err(e) => eprintln!("slope fit skipped: {e}"),
            }
            let flagged = rows.iter().filter(|r| !r.converged).count();
            if flagged > 0 {
                eprintln!("warning: {flagged} cell(s) hit the iteration cap");
            }
        }
        Command::Rademacher { cfg } => {
            let mut t = load_table(&cfg, cli.seed)?;
            let config = config::rademacher_from(&mut t)?;
            t.finish()?;
            let g = mc_growth(&config)?;
            let mut text = format!("{}\n", svnlearn::complexity::GrowthFit::CSV_HEADER);
            for row in g.csv_rows() {
                text.push_str(&row);
                text.push('\n');
            }
            text.push_str(&g.summary_row());
            text.push('\n');
            write_text(out, "rademacher.csv", &text)?;
            println!(
                "exponent xx {:.4} (r2 {:.4}), yx {:.4} (r2 {:.4}){}; {} violation(s)",
                g.exponent_xx,
                g.r2_xx,
                g.exponent_yx,
                g.r2_yx,
                if g.reliable { "" } else { ", unreliable fit" },
                g.violations()
            );
        }
        Command::PlotBounds { cfg } => {
            let mut t = load_table(&cfg, None)?;
            t.take_raw("seed");
            let pc = config::plot_from(&mut t)?;
            t.finish()?;
            let plot = plot_bounds(&pc.p_list, &pc.n_grid, pc.constants, pc.delta)?;
            write_text(out, "bounds.csv", &plot.csv())?;
            write_text(out, "bounds.svg", &plot.svg())?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
