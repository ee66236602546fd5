//! Periodic square-lattice topology and the decimation geometry.
//!
//! Sites are indexed row-major, `index = y * width + x`, and every site has
//! four neighbors with wrap-around in both directions. Decimation keeps the
//! sites whose coordinates are multiples of a power-of-two stride; the values
//! carried to the coarse lattice are copied verbatim, never filtered.

use crate::error::{usage, Result};

/// Direction of the four lattice neighbors, in the fixed order used everywhere.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const SOUTH: usize = 2;
pub const NORTH: usize = 3;

/// Index of the opposite direction: E<->W, S<->N.
#[inline]
pub const fn opposite(dir: usize) -> usize {
    dir ^ 1
}

/// Periodic W x H square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Torus {
    width: usize,
    height: usize,
}

impl Torus {
    /// Both dimensions must be at least 2; a 1-wide ring has no well-defined
    /// four-neighborhood.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(usage(format!(
                "torus must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of sites |V|.
    pub fn num_sites(&self) -> usize {
        self.width * self.height
    }

    /// Number of undirected edges |E| = 2 |V| (each site owns its east and
    /// south edge; for width or height 2 this counts parallel edges twice,
    /// which is the correct multigraph on a 2-ring).
    pub fn num_edges(&self) -> usize {
        2 * self.num_sites()
    }

    #[inline]
    pub fn site(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.width, site / self.width)
    }

    /// The four neighbors of `site` in the order east, west, south, north,
    /// with periodic wrap.
    pub fn neighbors(&self, site: usize) -> Result<[usize; 4]> {
        if site >= self.num_sites() {
            return Err(usage(format!(
                "site index {site} out of range for {}x{} torus",
                self.width, self.height
            )));
        }
        Ok(self.neighbors_unchecked(site))
    }

    #[inline]
    pub(crate) fn neighbors_unchecked(&self, site: usize) -> [usize; 4] {
        let (x, y) = self.coords(site);
        let w = self.width;
        let h = self.height;
        let east = y * w + if x + 1 == w { 0 } else { x + 1 };
        let west = y * w + if x == 0 { w - 1 } else { x - 1 };
        let south = if y + 1 == h { x } else { (y + 1) * w + x };
        let north = if y == 0 {
            (h - 1) * w + x
        } else {
            (y - 1) * w + x
        };
        [east, west, south, north]
    }

    /// Flat neighbor table for hot loops, `table[site][dir]`.
    pub(crate) fn neighbor_table(&self) -> Vec<[u32; 4]> {
        (0..self.num_sites())
            .map(|i| {
                let n = self.neighbors_unchecked(i);
                [n[0] as u32, n[1] as u32, n[2] as u32, n[3] as u32]
            })
            .collect()
    }

    /// Endpoints of undirected edge `e` in the fixed enumeration
    /// `e = 2*site` (east edge) and `e = 2*site + 1` (south edge).
    #[inline]
    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let site = e / 2;
        let n = self.neighbors_unchecked(site);
        if e.is_multiple_of(2) {
            (site, n[EAST])
        } else {
            (site, n[SOUTH])
        }
    }
}

/// Injective map from coarse-lattice sites to the fine-lattice sites they
/// survive from after `rg_steps` decimation steps.
#[derive(Debug, Clone)]
pub struct SiteIndexMap {
    fine: Torus,
    coarse: Torus,
    stride: usize,
    fine_site: Vec<usize>,
}

impl SiteIndexMap {
    pub fn fine(&self) -> Torus {
        self.fine
    }

    pub fn coarse(&self) -> Torus {
        self.coarse
    }

    /// Linear stride between surviving sites along each axis.
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Fine-lattice index of coarse site `c`.
    pub fn fine_site(&self, c: usize) -> usize {
        self.fine_site[c]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.fine_site
    }
}

/// Surviving sites after `rg_steps` decimation steps.
///
/// Two RG steps shrink the linear scale by 2, so only even step counts map to
/// an axis-aligned subsampling; the stride is `2^(rg_steps/2)`. Remainder
/// rows/columns that do not fit a full stride are dropped, and the coarse
/// lattice keeps periodic boundaries.
pub fn coarse_sites(t: Torus, rg_steps: u32) -> Result<SiteIndexMap> {
    if !rg_steps.is_multiple_of(2) {
        return Err(usage(format!(
            "rg-steps must be even (got {rg_steps}); one decimation level corresponds to two RG steps"
        )));
    }
    let half = rg_steps / 2;
    if half >= usize::BITS {
        return Err(usage(format!("rg-steps {rg_steps} is out of range")));
    }
    let stride = 1usize << half;
    let cw = t.width() / stride;
    let ch = t.height() / stride;
    if cw < 2 || ch < 2 {
        return Err(usage(format!(
            "rg-steps {rg_steps} leaves a {cw}x{ch} coarse lattice; need at least 2x2 \
             (image is {}x{}, stride {stride})",
            t.width(),
            t.height()
        )));
    }
    let coarse = Torus::new(cw, ch)?;
    let mut fine_site = Vec::with_capacity(coarse.num_sites());
    for cy in 0..ch {
        for cx in 0..cw {
            fine_site.push(t.site(cx * stride, cy * stride));
        }
    }
    Ok(SiteIndexMap {
        fine: t,
        coarse,
        stride,
        fine_site,
    })
}

/// RGB image on a torus; intensities are reals (files map 8-bit data to [0,1]).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    torus: Torus,
    data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(torus: Torus, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != torus.num_sites() {
            return Err(usage(format!(
                "image data has {} sites, torus has {}",
                data.len(),
                torus.num_sites()
            )));
        }
        if let Some(i) = data.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(usage(format!("non-finite intensity at site {i}")));
        }
        Ok(Self { torus, data })
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    #[inline]
    pub fn color(&self, site: usize) -> [f64; 3] {
        self.data[site]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

/// Copy the mapped fine-site values onto the coarse lattice, bit for bit.
pub fn extract_coarse_image(img: &ColorImage, map: &SiteIndexMap) -> Result<ColorImage> {
    if img.torus() != map.fine() {
        return Err(usage(format!(
            "site map was built for a {}x{} torus, image is {}x{}",
            map.fine().width(),
            map.fine().height(),
            img.torus().width(),
            img.torus().height()
        )));
    }
    let data = map.as_slice().iter().map(|&f| img.color(f)).collect();
    ColorImage::new(map.coarse(), data)
}

/// Per-site labels in {0, .., q-1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    torus: Torus,
    q: usize,
    labels: Vec<u16>,
}

impl LabelField {
    pub fn new(torus: Torus, q: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != torus.num_sites() {
            return Err(usage(format!(
                "label data has {} sites, torus has {}",
                labels.len(),
                torus.num_sites()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= q) {
            return Err(usage(format!(
                "label {} at site {i} is out of range for q = {q}",
                labels[i]
            )));
        }
        Ok(Self { torus, q, labels })
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn num_labels(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn label(&self, site: usize) -> usize {
        self.labels[site] as usize
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.labels
    }

    /// Fraction of edges whose endpoints carry the same label.
    pub fn edge_agreement(&self) -> f64 {
        let t = self.torus;
        let mut agree = 0usize;
        for e in 0..t.num_edges() {
            let (i, j) = t.edge_endpoints(e);
            if self.labels[i] == self.labels[j] {
                agree += 1;
            }
        }
        agree as f64 / t.num_edges() as f64
    }
}
