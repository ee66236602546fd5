//! Test-harness generators: Potts labelings by Gibbs sampling and color
//! images from the Gaussian model, both seeded and reproducible.

use crate::colormodel::GaussianLabelModel;
use crate::error::{usage, Result};
use crate::grid::{ColorImage, LabelField, Torus};
use crate::rng::SplitMix64;

/// Sample a labeling from the Potts prior by single-site Gibbs sampling.
///
/// The conditional at each site is `P(xi) proportional to
/// exp((alpha/2) * #{neighbors labeled xi})`. Sites are visited in raster
/// order; the initial state is i.i.d. uniform from the same seeded stream.
/// The state after `sweeps` full sweeps is returned (burn-in equals the
/// sweep count, no thinning).
pub fn sample_potts(
    torus: Torus,
    alpha: f64,
    q: usize,
    seed: u64,
    sweeps: usize,
) -> Result<LabelField> {
    if q < 2 || q > u16::MAX as usize {
        return Err(usage(format!(
            "label count q must be in [2, 65535], got {q}"
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(usage(format!(
            "coupling alpha must be finite and non-negative, got {alpha}"
        )));
    }
    if sweeps == 0 {
        return Err(usage("at least one sweep is required"));
    }

    let n = torus.num_sites();
    let nbr = torus.neighbor_table();
    let mut rng = SplitMix64::new(seed);
    let mut labels: Vec<u16> = (0..n).map(|_| rng.next_below(q as u64) as u16).collect();

    // a site weight depends only on how many of its 4 neighbors carry a label
    let weight: [f64; 5] = std::array::from_fn(|c| (0.5 * alpha * c as f64).exp());
    let mut count = vec![0u8; q];

    for _ in 0..sweeps {
        for site in 0..n {
            let around = nbr[site];
            for &j in &around {
                count[labels[j as usize] as usize] += 1;
            }
            let mut total = 0.0;
            for xi in 0..q {
                total += weight[count[xi] as usize];
            }
            let u = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = q - 1;
            for xi in 0..q {
                acc += weight[count[xi] as usize];
                if u < acc {
                    pick = xi;
                    break;
                }
            }
            labels[site] = pick as u16;
            for &j in &around {
                count[labels[j as usize] as usize] -= 1;
            }
        }
    }

    LabelField::new(torus, q, labels)
}

/// Draw a color image given a labeling: each site's color is sampled from its
/// label's Gaussian through the cached Cholesky factor.
pub fn sample_image(
    labels: &LabelField,
    model: &GaussianLabelModel,
    seed: u64,
) -> Result<ColorImage> {
    if labels.num_labels() > model.num_labels() {
        return Err(usage(format!(
            "labeling uses {} labels but the model has {}",
            labels.num_labels(),
            model.num_labels()
        )));
    }
    let n = labels.torus().num_sites();
    let mut rng = SplitMix64::new(seed);
    let mut data = Vec::with_capacity(n);
    for site in 0..n {
        let xi = labels.label(site);
        let m = model.mean(xi);
        let l = model.cholesky_factor(xi);
        let z = [
            rng.next_gaussian(),
            rng.next_gaussian(),
            rng.next_gaussian(),
        ];
        data.push([
            m[0] + l[0][0] * z[0],
            m[1] + l[1][0] * z[0] + l[1][1] * z[1],
            m[2] + l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
        ]);
    }
    ColorImage::new(labels.torus(), data)
}
