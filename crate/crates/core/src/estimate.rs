//! Hyperparameter estimation on the (coarse) lattice.
//!
//! EM-style alternation: LBP inference under the current model (E-step),
//! responsibility-weighted Gaussian refit (M-step), then a coupling update
//! that matches the posterior's mean neighbor agreement to the Potts prior's
//! agreement at its symmetric Bethe fixed point,
//! `A(alpha) = e^(alpha/2) / (e^(alpha/2) + q - 1)`, which inverts in closed
//! form. Above the Bethe critical coupling the symmetric fixed point is no
//! longer the stable one and this closed form underestimates the prior
//! agreement; the update is clamped to [0, ALPHA_MAX] and documented as such.

use crate::colormodel::{fit_weighted, init_model, GaussianLabelModel};
use crate::error::{usage, Result};
use crate::grid::ColorImage;
use crate::lbp::{mean_agreement, run_lbp, LbpOptions};
use crate::par;

/// Upper clamp for the estimated coupling; agreement saturates numerically
/// beyond it.
pub const ALPHA_MAX: f64 = 10.0;

/// Starting coupling for the EM loop (weak smoothing).
pub const ALPHA_INIT: f64 = 1.0;

/// Knobs for [`estimate_hyperparameters`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Options forwarded to every E-step LBP run.
    pub lbp: LbpOptions,
    /// Cap on EM iterations.
    pub max_iters: usize,
    /// Converged when the coupling moves less than this...
    pub alpha_tol: f64,
    /// ...and no label mean moves more than this (per channel).
    pub mean_tol: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            lbp: LbpOptions::default(),
            max_iters: 100,
            alpha_tol: 1e-4,
            mean_tol: 1e-4,
        }
    }
}

/// One EM iteration record.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    pub alpha: f64,
    pub mean_shift: f64,
}

/// Output of [`estimate_hyperparameters`].
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Estimated coupling on the lattice the estimation ran on.
    pub alpha: f64,
    pub model: GaussianLabelModel,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceStep>,
    /// LBP sweeps summed over all E-steps.
    pub lbp_iterations_total: usize,
    /// Whether the last E-step LBP converged.
    pub lbp_last_converged: bool,
}

/// Coupling that makes the symmetric-fixed-point prior agreement equal `a`:
/// `alpha = 2 ln((q-1) a / (1 - a))`, clamped to [0, ALPHA_MAX].
///
/// `a` must lie in (0, 1). Agreements at or below the independence value 1/q
/// map to exactly zero. The zero clamp must be exact: zero is a repelling
/// fixed point of the inverse coupling flow, so any manufactured epsilon here
/// would be amplified toward the nontrivial fixed point by a deep inverse
/// chain.
pub fn alpha_update(a: f64, q: usize) -> Result<f64> {
    if q < 2 {
        return Err(usage(format!("label count q must be >= 2, got {q}")));
    }
    if !a.is_finite() || a <= 0.0 || a >= 1.0 {
        return Err(usage(format!("agreement must lie in (0, 1), got {a}")));
    }
    if a <= 1.0 / q as f64 {
        return Ok(0.0);
    }
    let a = a.min(1.0 - 1e-6);
    let alpha = 2.0 * ((q - 1) as f64 * a / (1.0 - a)).ln();
    Ok(alpha.clamp(0.0, ALPHA_MAX))
}

/// Prior neighbor agreement at the symmetric Bethe fixed point.
pub fn prior_agreement(alpha: f64, q: usize) -> f64 {
    let e = (0.5 * alpha).exp();
    e / (e + (q - 1) as f64)
}

pub(crate) fn log_unaries(img: &ColorImage, model: &GaussianLabelModel) -> Vec<f64> {
    let q = model.num_labels();
    let pixels = img.pixels();
    let mut out = vec![0.0f64; pixels.len() * q];
    par::for_each_chunk_mut(&mut out, q * 64, |start, chunk| {
        for (k, row) in chunk.chunks_mut(q).enumerate() {
            let site = start / q + k;
            model.log_densities_into(pixels[site], row);
        }
    });
    out
}

/// Estimate the coupling and color model of one image by EM.
pub fn estimate_hyperparameters(
    img: &ColorImage,
    q: usize,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<EstimationResult> {
    if opts.max_iters == 0 {
        return Err(usage("estimation needs at least one iteration"));
    }
    let torus = img.torus();
    let mut model = init_model(img, q, seed)?;
    let mut alpha = ALPHA_INIT;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut lbp_iterations_total = 0;
    let mut lbp_last_converged = false;

    for iter in 1..=opts.max_iters {
        let unaries = log_unaries(img, &model);
        let beliefs = run_lbp(torus, &unaries, q, alpha, &opts.lbp)?;
        lbp_iterations_total += beliefs.iterations();
        lbp_last_converged = beliefs.converged();

        let refit = fit_weighted(img, beliefs.site_beliefs(), &model)?;
        let new_alpha = alpha_update(mean_agreement(&beliefs), q)?;

        let mut mean_shift = 0.0f64;
        for xi in 0..q {
            let old = model.mean(xi);
            let new = refit.mean(xi);
            for c in 0..3 {
                mean_shift = mean_shift.max((new[c] - old[c]).abs());
            }
        }
        let alpha_shift = (new_alpha - alpha).abs();

        model = refit;
        alpha = new_alpha;
        iterations = iter;
        trace.push(TraceStep { alpha, mean_shift });

        if alpha_shift < opts.alpha_tol && mean_shift < opts.mean_tol {
            converged = true;
            break;
        }
    }

    Ok(EstimationResult {
        alpha,
        model,
        iterations,
        converged,
        trace,
        lbp_iterations_total,
        lbp_last_converged,
    })
}
