use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wavemap::scenario_cli::{parse_config, run_scenario, run_sweep, run_verify, verify_csv, worker_threads};
use wavemap::Error;

#[derive(Parser)]
#[command(name = "wavemap", about = "Wave maps and Dirac-wave maps on expanding warped spacetimes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario from a config file.
    Simulate { config: PathBuf },
    /// Run the identity battery and print one CSV row per check.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run all configs matching a glob.
    Sweep { pattern: String },
}

fn config_error(e: &Error) -> bool {
    matches!(e, Error::Parse { .. } | Error::Validation(_) | Error::Domain(_) | Error::Io(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = worker_threads() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.cmd {
        Cmd::Simulate { config } => {
            let cfg = match std::fs::read_to_string(&config).map_err(Error::from).and_then(|t| parse_config(&t)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match run_scenario(&cfg) {
                Ok(out) => {
                    let s = &out.summary;
                    if let Some(err) = &s.error {
                        eprintln!("aborted at t = {}: {err}", s.last_good_t);
                    }
                    println!(
                        "{}: steps {} t {:.6} gronwall {} -> {}",
                        s.scenario,
                        s.steps,
                        s.last_good_t,
                        s.gronwall.status,
                        cfg.output_path.display()
                    );
                    ExitCode::from(s.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(if config_error(&e) { 1 } else { 2 })
                }
            }
        }
        Cmd::Verify { seed } => match run_verify(seed) {
            Ok(rows) => {
                print!("{}", verify_csv(&rows));
                let ok = rows.iter().all(|(r, expected_fail)| r.pass != *expected_fail);
                ExitCode::from(if ok { 0 } else { 2 })
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Cmd::Sweep { pattern } => match run_sweep(&pattern) {
            Ok(results) => {
                let mut worst = 0u8;
                for (p, r) in results {
                    match r {
                        Ok(out) => {
                            println!("{}: exit {} gronwall {}", p.display(), out.summary.exit_code, out.summary.gronwall.status);
                            worst = worst.max(out.summary.exit_code as u8);
                        }
                        Err(e) => {
                            println!("{}: {e}", p.display());
                            worst = worst.max(if config_error(&e) { 1 } else { 2 });
                        }
                    }
                }
                ExitCode::from(worst)
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
    }
}
