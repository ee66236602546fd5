use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use rsrg_seg::colormodel::GaussianLabelModel;
use rsrg_seg::error::Error;
use rsrg_seg::estimate::EstimateOptions;
use rsrg_seg::grid::Torus;
use rsrg_seg::io::{
    read_ppm, write_json, write_pgm_labels, write_ppm, JsonBenchReport, JsonReport, JsonSynthParams,
};
use rsrg_seg::lbp::LbpOptions;
use rsrg_seg::pipeline::{colorize, segment};
use rsrg_seg::rgflow::{forward_chain, inverse_chain};
use rsrg_seg::synth::{sample_image, sample_potts};

#[derive(Parser)]
#[command(
    name = "rsrg-seg",
    version,
    about = "Potts-MRF Bayesian image segmentation with renormalization-group accelerated hyperparameter estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct LbpFlags {
    /// LBP stopping tolerance on log-message changes
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// LBP sweep cap per run
    #[arg(long = "max-iters", default_value_t = 1000)]
    max_iters: usize,
    /// Damping on log-messages (fraction of the old message kept)
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
}

impl LbpFlags {
    fn options(&self) -> EstimateOptions {
        EstimateOptions {
            lbp: LbpOptions {
                tolerance: self.tolerance,
                max_iters: self.max_iters,
                damping: self.damping,
            },
            ..EstimateOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment a PPM image; writes labels (PGM), a colorized image (PPM) and
    /// a JSON run report.
    Segment {
        #[arg(long)]
        input: PathBuf,
        /// Number of region labels q
        #[arg(long)]
        labels: usize,
        /// Decimation depth R (even); 0 estimates on the full image
        #[arg(long = "rg-steps")]
        rg_steps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lbp: LbpFlags,
        #[arg(long = "out-labels")]
        out_labels: PathBuf,
        #[arg(long = "out-color")]
        out_color: PathBuf,
        #[arg(long = "out-report")]
        out_report: PathBuf,
    },
    /// Print a coupling trajectory as tab-separated `r<TAB>alpha` lines.
    #[command(group(ArgGroup::new("direction").required(true).args(["forward", "inverse"])))]
    RgFlow {
        /// Number of labels q
        #[arg(long)]
        q: usize,
        /// Start from this fine-lattice coupling and coarsen
        #[arg(long)]
        forward: Option<f64>,
        /// Start from this coarse-lattice coupling and refine back
        #[arg(long)]
        inverse: Option<f64>,
        #[arg(long)]
        steps: u32,
    },
    /// Generate a Potts labeling and a color image from it, with ground truth.
    Synth {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        labels: usize,
        /// Potts coupling used by the Gibbs sampler
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gibbs sweeps (burn-in)
        #[arg(long)]
        sweeps: usize,
        /// Channel noise of the generated colors
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long = "out-image")]
        out_image: PathBuf,
        #[arg(long = "out-truth")]
        out_truth: PathBuf,
        #[arg(long = "out-params")]
        out_params: PathBuf,
    },
    /// Run `segment` once per decimation depth and report per-stage timings.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: usize,
        /// Comma-separated list of decimation depths, e.g. 0,2,4
        #[arg(long = "rg-steps", value_delimiter = ',', required = true)]
        rg_steps: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lbp: LbpFlags,
        #[arg(long = "out-report")]
        out_report: PathBuf,
    },
}

/// Evenly spaced gray palette used by `synth` when no model is given.
fn default_palette(q: usize, sigma: f64) -> Result<GaussianLabelModel, Error> {
    let means: Vec<[f64; 3]> = (0..q)
        .map(|xi| {
            let v = (xi + 1) as f64 / (q + 1) as f64;
            [v, v, v]
        })
        .collect();
    let var = sigma * sigma;
    let cov = [[var, 0.0, 0.0], [0.0, var, 0.0], [0.0, 0.0, var]];
    GaussianLabelModel::new(means, vec![cov; q])
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Segment {
            input,
            labels,
            rg_steps,
            seed,
            lbp,
            out_labels,
            out_color,
            out_report,
        } => {
            let img = read_ppm(&input)?;
            let (field, report) = segment(&img, labels, rg_steps, seed, &lbp.options())?;
            write_pgm_labels(&field, &out_labels)?;
            let painted = colorize(&field, &report.model)?;
            write_ppm(&painted, &out_color)?;
            write_json(&JsonReport::from(&report), &out_report)?;
            Ok(())
        }
        Command::RgFlow {
            q,
            forward,
            inverse,
            steps,
        } => {
            match (forward, inverse) {
                (Some(alpha), None) => {
                    let flow = forward_chain(alpha, q, steps)?;
                    for (r, a) in flow.as_slice().iter().enumerate() {
                        println!("{r}\t{a:.10}");
                    }
                }
                (None, Some(alpha)) => {
                    let flow = inverse_chain(alpha, q, steps)?;
                    for (r, a) in flow.as_slice().iter().enumerate().rev() {
                        println!("{r}\t{a:.10}");
                    }
                }
                _ => unreachable!("clap enforces exactly one direction"),
            }
            Ok(())
        }
        Command::Synth {
            width,
            height,
            labels,
            alpha,
            seed,
            sweeps,
            sigma,
            out_image,
            out_truth,
            out_params,
        } => {
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(Error::Usage(format!("sigma must be positive, got {sigma}")));
            }
            let torus = Torus::new(width, height)?;
            let model = default_palette(labels, sigma)?;
            let truth = sample_potts(torus, alpha, labels, seed, sweeps)?;
            let img = sample_image(&truth, &model, seed.wrapping_add(1))?;
            write_ppm(&img, &out_image)?;
            write_pgm_labels(&truth, &out_truth)?;
            write_json(
                &JsonSynthParams {
                    width,
                    height,
                    q: labels,
                    alpha,
                    seed,
                    sweeps,
                    sigma,
                    means: model.means().to_vec(),
                },
                &out_params,
            )?;
            Ok(())
        }
        Command::Bench {
            input,
            labels,
            rg_steps,
            seed,
            lbp,
            out_report,
        } => {
            let img = read_ppm(&input)?;
            let opts = lbp.options();
            let mut runs = Vec::new();
            for &r in &rg_steps {
                let (_, report) = segment(&img, labels, r, seed, &opts)?;
                eprintln!(
                    "rg-steps {r}: coarse {}x{}, estimate {:.1} ms, total lbp sweeps {}",
                    report.coarse_width,
                    report.coarse_height,
                    report.timings_ms.estimate,
                    report.estimate_lbp_iterations + report.final_lbp_iterations,
                );
                runs.push(JsonReport::from(&report));
            }
            write_json(
                &JsonBenchReport {
                    input: input.display().to_string(),
                    q: labels,
                    seed,
                    runs,
                },
                &out_report,
            )?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => err.exit(), // clap uses exit code 2 for usage errors
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
