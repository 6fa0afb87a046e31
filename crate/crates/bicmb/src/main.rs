use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bicmb::analysis::{bicmb_bound, diversity_order, theorem1_check};
use bicmb::config::FileConfig;
use bicmb::harness::run_experiment;
use bicmb::precoding::verify_condition;
use bicmb::Result;

#[derive(Parser)]
#[command(name = "bicmb", version, about = "Beamformed MIMO link simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every variant's BER sweep and write CSV curves plus a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate dominant error events and print each variant's diversity order.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Hamming-weight cap for event enumeration (default: free distance + 4).
        #[arg(long)]
        max_weight: Option<u32>,
    },
    /// Check each variant's rotation against the distinct-codeword condition.
    VerifyPrecoder {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate the decay exponent of E[exp(-gamma sum phi_s mu_s)] by Monte
    /// Carlo and compare it with the (N-delta+1)(M-delta+1) target.
    CheckTheorem1 {
        /// Transmit antennas.
        #[arg(long)]
        n: usize,
        /// Receive antennas.
        #[arg(long)]
        m: usize,
        /// Comma-separated non-negative weights, one per subchannel, e.g. "1,1" or "0,1".
        #[arg(long)]
        phi: String,
        /// Channel draws per gamma point.
        #[arg(long)]
        trials: u64,
        /// Comma-separated gamma grid in dB.
        #[arg(long, default_value = "10,15,20,25,30")]
        gammas_db: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Allowed |fitted - target| slack.
        #[arg(long, default_value_t = 0.75)]
        tol: f64,
    },
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| bicmb::Error::InvalidInput(format!("not a number: {t:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Simulate { config, out } => {
            let file = FileConfig::load(&config)?;
            let outcome = run_experiment(&file, &out)?;
            for v in &outcome.variants {
                println!("wrote {}", v.csv_path.display());
                for p in &v.points {
                    println!(
                        "  {:>6.2} dB  ber {:.6e}  ({} errors / {} bits, {} frames)",
                        p.snr_db,
                        p.ber(),
                        p.bit_errors,
                        p.bits,
                        p.frames
                    );
                }
            }
            println!("wrote {}", outcome.summary_path.display());
            print!("{}", std::fs::read_to_string(&outcome.summary_path)?);
            Ok(true)
        }
        Cmd::Analyze { config, max_weight } => {
            let file = FileConfig::load(&config)?;
            for v in file.build()? {
                let sim = &v.sim;
                let report = diversity_order(
                    &sim.code,
                    &sim.spatial,
                    sim.precoder.bp(),
                    sim.n,
                    sim.m,
                    max_weight,
                )?;
                let bound = bicmb_bound(sim.n, sim.m, sim.s, sim.code.rate())?;
                println!("== variant {} ==", v.label);
                print!("{}", report.render());
                if sim.precoder.p() == 0 {
                    println!("best order any interleaver could reach at this rate: {bound}");
                }
                println!();
            }
            Ok(true)
        }
        Cmd::VerifyPrecoder { config } => {
            let file = FileConfig::load(&config)?;
            let mut all_ok = true;
            for v in file.build()? {
                let sim = &v.sim;
                if sim.precoder.p() == 0 {
                    println!("variant {}: no precoding, nothing to verify", v.label);
                    continue;
                }
                let (ok, worst) =
                    verify_condition(sim.precoder.theta_tilde(), &sim.constellation)?;
                println!(
                    "variant {}: {} (worst first-row energy {:.3e})",
                    v.label,
                    if ok { "pass" } else { "FAIL" },
                    worst
                );
                all_ok &= ok;
            }
            Ok(all_ok)
        }
        Cmd::CheckTheorem1 {
            n,
            m,
            phi,
            trials,
            gammas_db,
            seed,
            tol,
        } => {
            let phi = parse_list(&phi)?;
            let gammas: Vec<f64> = parse_list(&gammas_db)?
                .into_iter()
                .map(|db| 10f64.powf(db / 10.0))
                .collect();
            let report = theorem1_check(n, m, &phi, &gammas, trials, seed, tol)?;
            println!("delta = {}, target order = {}", report.delta, report.target_order);
            for (gamma, estimate, se) in &report.points {
                println!(
                    "  gamma {:>10.1} ({:>5.1} dB): estimate {:.6e} (se {:.1e})",
                    gamma,
                    10.0 * gamma.log10(),
                    estimate,
                    se
                );
            }
            println!(
                "fitted order {:.3}, target {} ({})",
                report.fitted_order,
                report.target_order,
                if report.meets_bound { "met" } else { "NOT met" }
            );
            Ok(report.meets_bound)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
