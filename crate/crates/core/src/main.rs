use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cemgmsdg::driver::{self, ExperimentConfig};
use cemgmsdg::Error;

#[derive(Parser)]
#[command(name = "cemgmsdg", version, about = "Multiscale DG solver with online adaptive enrichment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline basis, adaptive enrichment and error table.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        niter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Decay of localized bases with the number of oversampling layers.
    Decay {
        #[arg(long)]
        config: PathBuf,
        /// Auxiliary mode index, starting at 1.
        #[arg(long)]
        modes: usize,
        #[arg(long)]
        layers: usize,
        /// Coarse block whose basis is studied.
        #[arg(long, default_value_t = 0)]
        block: usize,
    },
    /// Convergence of the fine solver on a manufactured solution.
    Check {
        #[arg(long)]
        levels: usize,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            theta,
            niter,
            seed,
            out,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = theta {
                cfg.theta = t;
            }
            if let Some(n) = niter {
                cfg.n_iter = n;
            }
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            cfg.validate()?;
            let table = driver::run_experiment(&cfg)?;
            print!("{}", table.to_csv());
            match table.rate {
                Some(r) => println!("rate = {r:.4}"),
                None => println!("rate = n/a"),
            }
            println!("wrote {}", cfg.out_dir.join("results.csv").display());
        }
        Command::Decay {
            config,
            modes,
            layers,
            block,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            if modes == 0 {
                return Err(Error::Config("--modes counts from 1".into()));
            }
            let curve = driver::with_threads(cfg.threads, || driver::decay_study(&cfg, block, modes - 1, layers))??;
            println!("m,error");
            for (m, e) in curve {
                println!("{m},{e:.8e}");
            }
        }
        Command::Check { levels } => {
            if levels == 0 {
                return Err(Error::Config("--levels must be at least 1".into()));
            }
            let errs = driver::check_study(levels)?;
            let l2: Vec<f64> = errs.iter().map(|e| e.l2).collect();
            let en: Vec<f64> = errs.iter().map(|e| e.energy).collect();
            let o2 = driver::observed_orders(&l2);
            let oe = driver::observed_orders(&en);
            println!("h,dofs,e_l2,e_energy,order_l2,order_energy");
            for (k, e) in errs.iter().enumerate() {
                let (a, b) = if k == 0 {
                    (String::new(), String::new())
                } else {
                    (format!("{:.3}", o2[k - 1]), format!("{:.3}", oe[k - 1]))
                };
                println!("{:.6e},{},{:.8e},{:.8e},{a},{b}", e.h, e.dofs, e.l2, e.energy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
