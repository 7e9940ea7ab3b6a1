use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use semirobin::config::{parse_config, ProblemConfig};
use semirobin::io::{read_solution_csv, write_eigenvalues_csv, write_solution_csv};
use semirobin::pipeline::{run_spectrum, solve_problem, verify_vector, Problem};
use semirobin::Error;

#[derive(Parser)]
#[command(name = "semirobin", version, about = "Two nontrivial solutions of resonant semilinear Robin problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue table and spectral certificates.
    Spectrum(Common),
    /// Sampled audit of the reaction hypotheses; exits 1 on any failed clause.
    CheckF(Common),
    /// Full pipeline: two verified nontrivial solutions.
    Solve(Common),
    /// Weak residual and roundtrip check of a solution CSV.
    Verify {
        #[command(flatten)]
        common: Common,
        solution: PathBuf,
    },
}

#[derive(clap::Args)]
struct Common {
    config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Verdict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut root = &e;
        while let Error::Stage { source, .. } = root {
            root = source;
        }
        match root {
            Error::Parse { .. } | Error::Schema { .. } | Error::Format(_) | Error::Csv(_) | Error::Io(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Verdict(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Verdict(format!("writing output: {e}"))
    }
}

struct Loaded {
    config: ProblemConfig,
    base: PathBuf,
    out: PathBuf,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", c.config.display())))?;
    let config = parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", c.config.display())))?;
    let base = c.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = c.out_dir.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    fs::create_dir_all(&out)?;
    Ok(Loaded { config, base, out })
}

fn artifact(l: &Loaded, suffix: &str) -> PathBuf {
    l.out.join(format!("{}_{suffix}", l.config.output.prefix))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Verdict(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Spectrum(c) => {
            let l = load(&c)?;
            let p = Problem::build(&l.config, &l.base, false)?;
            let rep = run_spectrum(&p)?;
            let count = if l.config.spectrum.count == 0 { p.decomp.len() } else { l.config.spectrum.count };
            let csv = artifact(&l, "eigenvalues.csv");
            write_eigenvalues_csv(BufWriter::new(File::create(&csv)?), &p.decomp, count)?;
            let json = artifact(&l, "spectrum.json");
            write_json(&json, &rep)?;
            for c in rep.spectrum.clusters.iter().take(8) {
                println!("lambda = {:.12e}  (multiplicity {})", c.value, c.dim);
            }
            println!("coercivity: mu = {:e}, c0 = {:e}", rep.coercivity.mu, rep.coercivity.c0);
            println!("wrote {} and {}", csv.display(), json.display());
            if !rep.first_eigen.passed() {
                return Err(Failure::Verdict(rep.first_eigen.failures.join("; ")));
            }
            Ok(())
        }
        Command::CheckF(c) => {
            let l = load(&c)?;
            let p = Problem::build(&l.config, &l.base, false)?;
            let rep = p.audit().map_err(|e| e.in_stage("hypothesis audit"))?;
            print!("{}", rep.table());
            write_json(&artifact(&l, "hypotheses.json"), &rep)?;
            if rep.passed() {
                Ok(())
            } else {
                Err(Failure::Verdict(format!("failed clauses: {}", rep.failed_clauses().join(", "))))
            }
        }
        Command::Solve(c) => {
            let l = load(&c)?;
            let p = Problem::build(&l.config, &l.base, true)?;
            let rep = solve_problem(&p)?;
            for (i, s) in rep.solutions.iter().enumerate() {
                let path = artifact(&l, &format!("solution_{}.csv", i + 1));
                write_solution_csv(BufWriter::new(File::create(&path)?), &p.mesh, &s.u)?;
                println!(
                    "solution {}: {:?}, energy {:e}, residual {:e}, L2 norm {:e} -> {}",
                    i + 1,
                    s.provenance,
                    s.energy,
                    s.residual,
                    s.l2_norm,
                    path.display()
                );
            }
            println!("separation {:e} (d_min {:e})", rep.separation, l.config.solver.plan.d_min);
            let json = artifact(&l, "report.json");
            write_json(&json, &rep)?;
            println!("wrote {}", json.display());
            if rep.passed {
                Ok(())
            } else {
                Err(Failure::Verdict("verification failed; see the report".into()))
            }
        }
        Command::Verify { common, solution } => {
            let l = load(&common)?;
            let p = Problem::build(&l.config, &l.base, true)?;
            let f = File::open(&solution)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", solution.display())))?;
            let u = read_solution_csv(f, &p.mesh)?;
            let rep = verify_vector(&p, &u)?;
            println!("{}", serde_json::to_string_pretty(&rep).map_err(|e| Failure::Verdict(e.to_string()))?);
            if rep.passed {
                Ok(())
            } else {
                Err(Failure::Verdict("solution does not verify".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: semirobin <spectrum|check-f|solve> CONFIG [--out-dir DIR]");
            eprintln!("       semirobin verify CONFIG SOLUTION.csv [--out-dir DIR]");
            ExitCode::from(2)
        }
    }
}
