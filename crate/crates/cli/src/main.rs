//! `billiard`: experiments on open billiards outside two convex obstacles.

mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use input::{parse_story, parse_vec3, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "billiard", version, about = "Open billiard, trapped set and parametrix experiments")]
pub struct Cli {
    /// Scene JSON; the symmetric two-sphere scene when absent.
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; overrides BILLIARD_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Direct,
    Stationary,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Follow one trajectory, or sweep random ones for the flow invariants.
    Flow {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        x: Option<billiard_core::Vec3>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        xi: Option<billiard_core::Vec3>,
        #[arg(long, default_value_t = 20.0)]
        t: f64,
        /// Flow backwards in time.
        #[arg(long)]
        backward: bool,
        /// Number of random trajectories for an invariant sweep instead.
        #[arg(long)]
        sweep: Option<usize>,
        /// Horizon of the sweep in periods.
        #[arg(long, default_value_t = 2.0)]
        periods: f64,
    },
    /// Escape times over a phase-space grid and the trapped-set width profile.
    TrappedSet {
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        speeds: usize,
        #[arg(long, default_value_t = 0.2)]
        cone: f64,
        /// Trapping horizon in periods.
        #[arg(long, default_value_t = 4.0)]
        horizon: f64,
        /// Directions in the width profile.
        #[arg(long, default_value_t = 100_000)]
        tilts: usize,
    },
    /// Separation of two nearby trajectories over time windows.
    Divergence {
        #[arg(long, default_value_t = 1e-8)]
        offset: f64,
        #[arg(long, default_value_t = 40.0)]
        t: f64,
        #[arg(long, default_value_t = 4.0)]
        window: f64,
    },
    /// Maximal η-tangential crossing counts over random rays.
    Crossings {
        #[arg(long, default_value_t = 10_000)]
        rays: usize,
        /// Horizon in periods.
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.3,0.5,0.7,0.9,0.95,1.0")]
        etas: Vec<f64>,
    },
    /// Distance between inner trapped and outer escaping samples per horizon.
    Separation {
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Horizons in periods.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        horizons: Vec<f64>,
    },
    /// φ_J, ∇φ_J and Λφ_J along a segment.
    PhaseField {
        #[arg(long, value_parser = parse_story, default_value = "2,1")]
        story: billiard_core::Story,
        /// Direction of the incoming plane wave; `e` when absent.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        xi: Option<billiard_core::Vec3>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        from: Option<billiard_core::Vec3>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        to: Option<billiard_core::Vec3>,
        #[arg(long, default_value_t = 21)]
        n: usize,
    },
    /// Periodic ray, return-map eigenvalues, λ and μ.
    Lambda,
    /// Evaluate S_K at a point or along a segment.
    Parametrix {
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, default_value_t = 0.05)]
        t: f64,
        #[arg(long = "K", default_value_t = 1)]
        k: u8,
        #[arg(long, value_enum, default_value_t = MethodArg::Stationary)]
        method: MethodArg,
        /// Symbol JSON overriding the default surrogate.
        #[arg(long)]
        symbol: Option<PathBuf>,
        /// Source point; the symbol center when absent.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        y: Option<billiard_core::Vec3>,
        /// Evaluation point; `y + 1.5 t e` when absent.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        x: Option<billiard_core::Vec3>,
        /// End of a slice starting at `x`.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        to: Option<billiard_core::Vec3>,
        #[arg(long, default_value_t = 11)]
        n: usize,
    },
    /// Decay of Σ_J |w_0^J| on an axial slice.
    Decay {
        #[arg(long, default_value_t = 0.5)]
        speed: f64,
        /// First ladder time in periods.
        #[arg(long, default_value_t = 5)]
        first: usize,
        /// Last ladder time in periods.
        #[arg(long, default_value_t = 40)]
        periods: usize,
        /// Ladder points per period.
        #[arg(long, default_value_t = 4)]
        per_period: usize,
    },
    /// Run the acceptance suite and report every criterion.
    VerifyAll {
        /// Multiplier on every sample count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Restrict to these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn threads(cli: &Cli) -> Result<Option<usize>, ConfigError> {
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var("BILLIARD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|e| ConfigError(format!("BILLIARD_THREADS={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = threads(&cli).and_then(|n| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = n {
            b = b.num_threads(n);
        }
        b.build_global().map_err(|e| ConfigError(e.to_string()))
    });
    if let Err(e) = pool {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
