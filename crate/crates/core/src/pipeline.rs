//! End-to-end segmentation: coarsen, estimate, map the coupling back,
//! run full-resolution LBP, decide labels, with per-stage wall-clock timings.

use std::time::Instant;

use crate::colormodel::GaussianLabelModel;
use crate::error::Result;
use crate::estimate::{estimate_hyperparameters, log_unaries, EstimateOptions};
use crate::grid::{coarse_sites, extract_coarse_image, ColorImage, LabelField};
use crate::lbp::{run_lbp, BeliefSet};
use crate::rgflow::inverse_chain;

/// Wall-clock milliseconds per pipeline stage.
#[derive(Debug, Clone, Copy)]
pub struct StageTimings {
    pub coarsen: f64,
    pub estimate: f64,
    pub inverse_rg: f64,
    pub final_lbp: f64,
    pub decide: f64,
}

/// Everything a segmentation run reports besides the labeling itself.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub q: usize,
    pub rg_steps: u32,
    pub width: usize,
    pub height: usize,
    pub coarse_width: usize,
    pub coarse_height: usize,
    /// Estimated coupling on the coarse lattice.
    pub alpha_coarse: f64,
    /// Trajectory of the inverse flow; index r holds the coupling after r
    /// coarsening steps, so entry 0 is the full-resolution coupling.
    pub alpha_trajectory: Vec<f64>,
    /// Coupling mapped back to the full lattice.
    pub alpha_full: f64,
    pub model: GaussianLabelModel,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub estimate_lbp_iterations: usize,
    pub estimate_lbp_converged: bool,
    pub final_lbp_iterations: usize,
    pub final_lbp_converged: bool,
    pub final_lbp_residual: f64,
    pub timings_ms: StageTimings,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Run the five-stage segmentation. With `rg_steps = 0` the estimate runs
/// directly on the full image (the conventional baseline).
pub fn segment(
    img: &ColorImage,
    q: usize,
    rg_steps: u32,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<(LabelField, RunReport)> {
    let start = Instant::now();
    let map = coarse_sites(img.torus(), rg_steps)?;
    let coarse_img = extract_coarse_image(img, &map)?;
    let t_coarsen = ms(start);

    let start = Instant::now();
    let est = estimate_hyperparameters(&coarse_img, q, seed, opts)?;
    let t_estimate = ms(start);

    let start = Instant::now();
    let flow = inverse_chain(est.alpha, q, rg_steps)?;
    let t_inverse = ms(start);

    let start = Instant::now();
    let unaries = log_unaries(img, &est.model);
    let beliefs = run_lbp(img.torus(), &unaries, q, flow.fine(), &opts.lbp)?;
    let t_final_lbp = ms(start);

    let start = Instant::now();
    let labels = mpm_decide(&beliefs);
    let t_decide = ms(start);

    let report = RunReport {
        q,
        rg_steps,
        width: img.torus().width(),
        height: img.torus().height(),
        coarse_width: map.coarse().width(),
        coarse_height: map.coarse().height(),
        alpha_coarse: est.alpha,
        alpha_trajectory: flow.as_slice().to_vec(),
        alpha_full: flow.fine(),
        model: est.model,
        em_iterations: est.iterations,
        em_converged: est.converged,
        estimate_lbp_iterations: est.lbp_iterations_total,
        estimate_lbp_converged: est.lbp_last_converged,
        final_lbp_iterations: beliefs.iterations(),
        final_lbp_converged: beliefs.converged(),
        final_lbp_residual: beliefs.residual(),
        timings_ms: StageTimings {
            coarsen: t_coarsen,
            estimate: t_estimate,
            inverse_rg: t_inverse,
            final_lbp: t_final_lbp,
            decide: t_decide,
        },
    };
    Ok((labels, report))
}

/// Per-site maximizer of the site marginals; ties go to the smaller label.
pub fn mpm_decide(beliefs: &BeliefSet) -> LabelField {
    let q = beliefs.num_labels();
    let n = beliefs.torus().num_sites();
    let mut labels = Vec::with_capacity(n);
    for site in 0..n {
        let row = beliefs.site_belief(site);
        let mut best = 0usize;
        for (xi, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = xi;
            }
        }
        labels.push(best as u16);
    }
    LabelField::new(beliefs.torus(), q, labels).expect("beliefs produce valid labels")
}

/// Paint each site with its label's mean color, clamped to [0, 1] per channel.
pub fn colorize(labels: &LabelField, model: &GaussianLabelModel) -> Result<ColorImage> {
    if labels.num_labels() > model.num_labels() {
        return Err(crate::error::usage(format!(
            "labeling uses {} labels but the model has {}",
            labels.num_labels(),
            model.num_labels()
        )));
    }
    let n = labels.torus().num_sites();
    let mut data = Vec::with_capacity(n);
    for site in 0..n {
        let m = model.mean(labels.label(site));
        data.push([
            m[0].clamp(0.0, 1.0),
            m[1].clamp(0.0, 1.0),
            m[2].clamp(0.0, 1.0),
        ]);
    }
    ColorImage::new(labels.torus(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Torus;
    use crate::lbp::LbpOptions;

    fn beliefs_from(rows: &[&[f64]]) -> BeliefSet {
        // run a zero-coupling LBP whose softmax reproduces the wanted rows
        let q = rows[0].len();
        let n = rows.len();
        let side = (n as f64).sqrt() as usize;
        let t = Torus::new(side, side).unwrap();
        let mut u = Vec::new();
        for row in rows {
            for &p in *row {
                u.push(p.ln());
            }
        }
        run_lbp(t, &u, q, 0.0, &LbpOptions::default()).unwrap()
    }

    #[test]
    fn mpm_picks_the_max() {
        let rows: Vec<&[f64]> = vec![&[0.2, 0.5, 0.3]; 4];
        let b = beliefs_from(&rows);
        let labels = mpm_decide(&b);
        for site in 0..4 {
            assert_eq!(labels.label(site), 1);
        }
    }

    #[test]
    fn mpm_breaks_ties_toward_smaller_label() {
        let rows: Vec<&[f64]> = vec![&[0.5, 0.5]; 4];
        let b = beliefs_from(&rows);
        let labels = mpm_decide(&b);
        for site in 0..4 {
            assert_eq!(labels.label(site), 0);
        }
    }

    #[test]
    fn mpm_matches_enumeration_argmax() {
        // exact marginals on a 2x2 torus vs the decided labels
        let t = Torus::new(2, 2).unwrap();
        let q = 2;
        let mut rng = crate::rng::SplitMix64::new(5);
        let u: Vec<f64> = (0..8).map(|_| 2.0 * (rng.next_f64() - 0.5)).collect();
        let alpha = 0.5;
        // enumeration
        let mut marg = [0.0f64; 8];
        let mut z = 0.0;
        for code in 0..16usize {
            let cfg: Vec<usize> = (0..4).map(|i| (code >> i) & 1).collect();
            let mut logw = 0.0;
            for (i, &xi) in cfg.iter().enumerate() {
                logw += u[i * q + xi];
            }
            for e in 0..t.num_edges() {
                let (i, j) = t.edge_endpoints(e);
                if cfg[i] == cfg[j] {
                    logw += 0.5 * alpha;
                }
            }
            let w = logw.exp();
            z += w;
            for (i, &xi) in cfg.iter().enumerate() {
                marg[i * q + xi] += w;
            }
        }
        for v in marg.iter_mut() {
            *v /= z;
        }
        let b = run_lbp(t, &u, q, alpha, &LbpOptions::default()).unwrap();
        let labels = mpm_decide(&b);
        for i in 0..4 {
            let exact_pick = if marg[i * q] >= marg[i * q + 1] { 0 } else { 1 };
            assert_eq!(labels.label(i), exact_pick, "site {i}");
        }
    }

    #[test]
    fn colorize_paints_means_and_clamps() {
        let t = Torus::new(2, 2).unwrap();
        let model = GaussianLabelModel::new(
            vec![[0.25, 0.5, 0.75], [1.3, -0.2, 0.5]],
            vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]; 2],
        )
        .unwrap();
        let labels = LabelField::new(t, 2, vec![0, 0, 1, 1]).unwrap();
        let img = colorize(&labels, &model).unwrap();
        assert_eq!(img.color(0), [0.25, 0.5, 0.75]);
        assert_eq!(img.color(2), [1.0, 0.0, 0.5]); // clamped
    }

    #[test]
    fn colorize_all_zero_labels_is_constant() {
        let t = Torus::new(3, 3).unwrap();
        let model = GaussianLabelModel::new(
            vec![[0.1, 0.2, 0.3], [0.9, 0.9, 0.9]],
            vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]; 2],
        )
        .unwrap();
        let labels = LabelField::new(t, 2, vec![0; 9]).unwrap();
        let img = colorize(&labels, &model).unwrap();
        for site in 0..9 {
            assert_eq!(img.color(site), [0.1, 0.2, 0.3]);
        }
    }

    #[test]
    fn constant_image_collapses_to_one_label() {
        let t = Torus::new(8, 8).unwrap();
        let img = ColorImage::new(t, vec![[0.5, 0.5, 0.5]; 64]).unwrap();
        let (labels, report) = segment(&img, 2, 0, 0, &EstimateOptions::default()).unwrap();
        let first = labels.label(0);
        for site in 0..64 {
            assert_eq!(labels.label(site), first);
        }
        assert_eq!(report.coarse_width, 8);
        assert!(report.alpha_full >= 0.0);
    }

    #[test]
    fn report_trajectory_is_flow_consistent() {
        let t = Torus::new(16, 16).unwrap();
        let mut data = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                let v = if (x < 8) ^ (y < 8) { 0.8 } else { 0.2 };
                data.push([v, v, v]);
            }
        }
        let img = ColorImage::new(t, data).unwrap();
        let (_, report) = segment(&img, 2, 2, 0, &EstimateOptions::default()).unwrap();
        assert_eq!(report.alpha_trajectory.len(), 3);
        assert_eq!(report.alpha_full, report.alpha_trajectory[0]);
        assert_eq!(
            report.alpha_coarse,
            *report.alpha_trajectory.last().unwrap()
        );
        for r in 1..report.alpha_trajectory.len() {
            let fwd = crate::rgflow::forward_alpha(report.alpha_trajectory[r - 1], 2).unwrap();
            assert!((fwd - report.alpha_trajectory[r]).abs() < 1e-12);
        }
        let t = &report.timings_ms;
        for v in [t.coarsen, t.estimate, t.inverse_rg, t.final_lbp, t.decide] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn segment_rejects_odd_steps() {
        let t = Torus::new(8, 8).unwrap();
        let img = ColorImage::new(t, vec![[0.5; 3]; 64]).unwrap();
        let err = segment(&img, 2, 1, 0, &EstimateOptions::default()).unwrap_err();
        assert!(err.to_string().contains("even"));
    }
}
