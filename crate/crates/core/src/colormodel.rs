//! Per-label trivariate Gaussian color model.
//!
//! Each label owns a mean RGB vector and a full 3x3 covariance. Densities are
//! evaluated through a cached Cholesky factor, never an explicit inverse, and
//! every covariance is regularized with `COV_REGULARIZATION * I` so flat color
//! regions cannot produce a singular fit.

use crate::error::{usage, Error, Result};
use crate::grid::ColorImage;
use crate::par;

/// Ridge added to every fitted covariance, in squared [0,1] intensity units.
pub const COV_REGULARIZATION: f64 = 1e-6;

/// A label keeps its previous parameters when its responsibility mass drops
/// below this fraction of the site count.
const MIN_WEIGHT_FRACTION: f64 = 1e-6;

const KMEANS_ITERS: usize = 20;

type Mat3 = [[f64; 3]; 3];

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// or `None` when the matrix is not positive definite.
fn cholesky3(c: &Mat3) -> Option<Mat3> {
    let l00 = c[0][0];
    if l00 <= 0.0 {
        return None;
    }
    let l00 = l00.sqrt();
    let l10 = c[1][0] / l00;
    let l20 = c[2][0] / l00;
    let d1 = c[1][1] - l10 * l10;
    if d1 <= 0.0 {
        return None;
    }
    let l11 = d1.sqrt();
    let l21 = (c[2][1] - l20 * l10) / l11;
    let d2 = c[2][2] - l20 * l20 - l21 * l21;
    if d2 <= 0.0 {
        return None;
    }
    let l22 = d2.sqrt();
    Some([[l00, 0.0, 0.0], [l10, l11, 0.0], [l20, l21, l22]])
}

#[inline]
fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub3(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Forward-substitute L y = v for lower-triangular L.
#[inline]
fn forward_solve(l: &Mat3, v: [f64; 3]) -> [f64; 3] {
    let y0 = v[0] / l[0][0];
    let y1 = (v[1] - l[1][0] * y0) / l[1][1];
    let y2 = (v[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
    [y0, y1, y2]
}

/// Gaussian color model: one (mean, covariance) pair per label.
#[derive(Debug, Clone)]
pub struct GaussianLabelModel {
    means: Vec<[f64; 3]>,
    covs: Vec<Mat3>,
    chols: Vec<Mat3>,
    /// -(1/2) ln det(2 pi C), the density normalization per label.
    log_norms: Vec<f64>,
}

impl GaussianLabelModel {
    /// Build a model from explicit parameters. Every covariance must be
    /// symmetric positive definite.
    pub fn new(means: Vec<[f64; 3]>, covs: Vec<Mat3>) -> Result<Self> {
        if means.len() != covs.len() || means.is_empty() {
            return Err(usage("model needs one (mean, covariance) pair per label"));
        }
        let mut chols = Vec::with_capacity(covs.len());
        let mut log_norms = Vec::with_capacity(covs.len());
        for (xi, c) in covs.iter().enumerate() {
            for r in 0..3 {
                for s in 0..r {
                    if (c[r][s] - c[s][r]).abs() > 1e-9 {
                        return Err(Error::InvalidModel(format!(
                            "covariance for label {xi} is not symmetric"
                        )));
                    }
                }
            }
            let l = cholesky3(c).ok_or_else(|| {
                Error::InvalidModel(format!(
                    "covariance for label {xi} is not positive definite"
                ))
            })?;
            let log_det = 2.0 * (l[0][0].ln() + l[1][1].ln() + l[2][2].ln());
            log_norms.push(-0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + log_det));
            chols.push(l);
        }
        Ok(Self {
            means,
            covs,
            chols,
            log_norms,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, xi: usize) -> [f64; 3] {
        self.means[xi]
    }

    pub fn covariance(&self, xi: usize) -> &Mat3 {
        &self.covs[xi]
    }

    pub fn means(&self) -> &[[f64; 3]] {
        &self.means
    }

    pub fn covariances(&self) -> &[Mat3] {
        &self.covs
    }

    /// Lower-triangular factor L with C = L L^T, used by the image sampler.
    pub fn cholesky_factor(&self, xi: usize) -> &Mat3 {
        &self.chols[xi]
    }

    /// Log density of color `d` under label `xi`:
    /// `-(1/2) ln det(2 pi C) - (1/2) (d-m)^T C^-1 (d-m)`.
    #[inline]
    pub fn log_density(&self, d: [f64; 3], xi: usize) -> f64 {
        let y = forward_solve(&self.chols[xi], sub3(d, self.means[xi]));
        self.log_norms[xi] - 0.5 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
    }

    /// Log densities of one color under every label, appended to `out`.
    pub(crate) fn log_densities_into(&self, d: [f64; 3], out: &mut [f64]) {
        for (xi, slot) in out.iter_mut().enumerate() {
            *slot = self.log_density(d, xi);
        }
    }
}

/// Responsibility-weighted mean/covariance refit (the M-step).
///
/// `resp` is site-major, `resp[site * q + label]`, each row summing to one.
/// Labels whose total weight falls below `1e-6 |V|` keep the parameters they
/// had in `prev`. Accumulation runs over fixed-size chunks merged in order,
/// so the result does not depend on thread count.
pub fn fit_weighted(
    img: &ColorImage,
    resp: &[f64],
    prev: &GaussianLabelModel,
) -> Result<GaussianLabelModel> {
    let n = img.torus().num_sites();
    let q = prev.num_labels();
    if resp.len() != n * q {
        return Err(usage(format!(
            "responsibilities have {} entries, expected {} sites x {} labels",
            resp.len(),
            n,
            q
        )));
    }
    for site in 0..n {
        let row = &resp[site * q..(site + 1) * q];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(usage(format!(
                "responsibility row at site {site} sums to {sum}, not 1"
            )));
        }
    }

    let pixels = img.pixels();

    // Pass 1: weights and weighted sums per label.
    let partials = par::map_chunks(n, |range| {
        let mut acc = vec![[0.0f64; 4]; q];
        for site in range {
            let d = pixels[site];
            let row = &resp[site * q..(site + 1) * q];
            for (xi, &r) in row.iter().enumerate() {
                let a = &mut acc[xi];
                a[0] += r;
                a[1] += r * d[0];
                a[2] += r * d[1];
                a[3] += r * d[2];
            }
        }
        acc
    });
    let mut weight = vec![0.0f64; q];
    let mut sums = vec![[0.0f64; 3]; q];
    for acc in partials {
        for xi in 0..q {
            weight[xi] += acc[xi][0];
            sums[xi][0] += acc[xi][1];
            sums[xi][1] += acc[xi][2];
            sums[xi][2] += acc[xi][3];
        }
    }

    let min_weight = MIN_WEIGHT_FRACTION * n as f64;
    let mut means = Vec::with_capacity(q);
    for xi in 0..q {
        if weight[xi] < min_weight {
            means.push(prev.mean(xi));
        } else {
            means.push([
                sums[xi][0] / weight[xi],
                sums[xi][1] / weight[xi],
                sums[xi][2] / weight[xi],
            ]);
        }
    }

    // Pass 2: centered second moments (upper triangle).
    let means_ref = &means;
    let partials = par::map_chunks(n, |range| {
        let mut acc = vec![[0.0f64; 6]; q];
        for site in range {
            let d = pixels[site];
            let row = &resp[site * q..(site + 1) * q];
            for (xi, &r) in row.iter().enumerate() {
                let e = sub3(d, means_ref[xi]);
                let a = &mut acc[xi];
                a[0] += r * e[0] * e[0];
                a[1] += r * e[0] * e[1];
                a[2] += r * e[0] * e[2];
                a[3] += r * e[1] * e[1];
                a[4] += r * e[1] * e[2];
                a[5] += r * e[2] * e[2];
            }
        }
        acc
    });
    let mut moments = vec![[0.0f64; 6]; q];
    for acc in partials {
        for xi in 0..q {
            for k in 0..6 {
                moments[xi][k] += acc[xi][k];
            }
        }
    }

    let mut covs = Vec::with_capacity(q);
    for xi in 0..q {
        if weight[xi] < min_weight {
            covs.push(*prev.covariance(xi));
        } else {
            let w = weight[xi];
            let m = &moments[xi];
            let eps = COV_REGULARIZATION;
            covs.push([
                [m[0] / w + eps, m[1] / w, m[2] / w],
                [m[1] / w, m[3] / w + eps, m[4] / w],
                [m[2] / w, m[4] / w, m[5] / w + eps],
            ]);
        }
    }

    GaussianLabelModel::new(means, covs)
}

/// Deterministic k-means initialization of the color model.
///
/// Seeding is farthest-point: the first center is the lexicographically
/// smallest color in the image, each further center the point farthest from
/// all chosen ones (ties broken toward the lower site index). Twenty Lloyd
/// iterations follow, with assignment ties broken toward the lower label.
/// The `seed` argument is accepted for interface stability but unused: the
/// whole procedure is deterministic.
pub fn init_model(img: &ColorImage, q: usize, seed: u64) -> Result<GaussianLabelModel> {
    let _ = seed;
    if q < 2 {
        return Err(usage(format!("label count q must be >= 2, got {q}")));
    }
    let pixels = img.pixels();
    let n = pixels.len();

    let mut first = 0usize;
    for site in 1..n {
        if pixels[site] < pixels[first] {
            first = site;
        }
    }
    let mut centers = vec![pixels[first]];
    // nearest squared distance to any chosen center
    let mut nearest: Vec<f64> = pixels.iter().map(|&p| dist2(p, centers[0])).collect();
    while centers.len() < q {
        let mut far = 0usize;
        for site in 1..n {
            if nearest[site] > nearest[far] {
                far = site;
            }
        }
        let c = pixels[far];
        centers.push(c);
        for (slot, &p) in nearest.iter_mut().zip(pixels.iter()) {
            *slot = slot.min(dist2(p, c));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        for (site, &p) in pixels.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist2(p, centers[0]);
            for (k, &c) in centers.iter().enumerate().skip(1) {
                let d = dist2(p, c);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            assign[site] = best;
        }
        let mut count = vec![0usize; q];
        let mut sum = vec![[0.0f64; 3]; q];
        for (site, &k) in assign.iter().enumerate() {
            let p = pixels[site];
            count[k] += 1;
            sum[k][0] += p[0];
            sum[k][1] += p[1];
            sum[k][2] += p[2];
        }
        for k in 0..q {
            if count[k] > 0 {
                let c = count[k] as f64;
                centers[k] = [sum[k][0] / c, sum[k][1] / c, sum[k][2] / c];
            }
        }
    }

    // within-cluster covariance + ridge
    let mut count = vec![0usize; q];
    let mut moments = vec![[0.0f64; 6]; q];
    for (site, &k) in assign.iter().enumerate() {
        let e = sub3(pixels[site], centers[k]);
        count[k] += 1;
        let m = &mut moments[k];
        m[0] += e[0] * e[0];
        m[1] += e[0] * e[1];
        m[2] += e[0] * e[2];
        m[3] += e[1] * e[1];
        m[4] += e[1] * e[2];
        m[5] += e[2] * e[2];
    }
    let eps = COV_REGULARIZATION;
    let covs: Vec<Mat3> = (0..q)
        .map(|k| {
            if count[k] == 0 {
                [[eps, 0.0, 0.0], [0.0, eps, 0.0], [0.0, 0.0, eps]]
            } else {
                let c = count[k] as f64;
                let m = &moments[k];
                [
                    [m[0] / c + eps, m[1] / c, m[2] / c],
                    [m[1] / c, m[3] / c + eps, m[4] / c],
                    [m[2] / c, m[4] / c, m[5] / c + eps],
                ]
            }
        })
        .collect();

    GaussianLabelModel::new(centers, covs)
}
