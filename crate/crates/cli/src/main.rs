//! `polara` command-line front end. Every command is a thin wrapper over the
//! library; exit status is 0 on success, 1 on usage or internal errors and 2
//! when the beamforming problem is infeasible.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polara_core::harness::{emit_csv, generate_scene, run_sweep_with_progress};
use polara_core::los::coverage_heatmap;
use polara_core::verify::{run_all, Level};
use polara_core::{run_scheme, Error, Scheme, SimConfig};

#[derive(Parser)]
#[command(
    name = "polara",
    version,
    about = "Rotatable, polarization-reconfigurable antenna array optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-user line-of-sight gain maps of the fixed and rotated element.
    LosMap {
        /// Height of the observation plane above the element, m.
        #[arg(long, default_value_t = 30.0)]
        z: f64,
        /// Half-width of the square plane, m.
        #[arg(long, default_value_t = 100.0)]
        extent: f64,
        /// Points per side.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        /// Directivity factor.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value = "los_map.csv")]
        out: PathBuf,
    },
    /// Run one scheme on one random scene and write its power trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "proposed")]
        scheme: Scheme,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Paired Monte Carlo sweep over the configured schemes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Worker threads (overrides the config file).
        #[arg(long, env = "POLARA_JOBS")]
        jobs: Option<usize>,
    },
    /// Check the library against its built-in oracles.
    Verify {
        #[arg(default_value = "fast")]
        level: Level,
    },
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_infeasible() { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::LosMap {
            z,
            extent,
            grid,
            p,
            out,
        } => match coverage_heatmap(z, extent, grid, p).and_then(|m| m.save(&out)) {
            Ok(()) => {
                println!("wrote {} ({} points)", out.display(), grid * grid);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Solve {
            config,
            seed,
            scheme,
            out,
        } => {
            let result = SimConfig::load(&config).and_then(|cfg| {
                let scene = generate_scene(&cfg, seed)?;
                run_scheme(&scene, scheme, &cfg.ao_config())
            });
            match result {
                Ok(state) => {
                    if let Err(e) = state.save_trace(&out) {
                        return fail(e);
                    }
                    println!(
                        "scheme={scheme} seed={seed} power_dbm={:.4} feasible={} iterations={} trace={}",
                        state.power_dbm(),
                        state.feasible(),
                        state.iterations(),
                        out.display()
                    );
                    if state.feasible() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { config, out, jobs } => {
            let result = SimConfig::load(&config).and_then(|mut cfg| {
                if jobs.is_some() {
                    cfg.jobs = jobs;
                }
                run_sweep_with_progress(&cfg, |cells| {
                    for c in cells {
                        let mean = c
                            .mean_power_dbm
                            .map_or("-".to_string(), |m| format!("{m:.3} dBm"));
                        eprintln!(
                            "{}={} {}: {mean} ({}/{} feasible)",
                            c.sweep_param, c.sweep_value, c.scheme, c.n_feasible, c.n_trials
                        );
                    }
                })
            });
            match result.and_then(|r| emit_csv(&r, &out)) {
                Ok(()) => {
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify { level } => {
            let reports = run_all(level);
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
