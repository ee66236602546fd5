//! Image files (binary PPM/PGM) and the JSON run report.
//!
//! Only the binary netpbm formats are supported so byte-level round trips
//! stay exact. Report JSON is emitted with every float at 17 significant
//! digits, which pins the parsed value bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::grid::{ColorImage, LabelField, Torus};
use crate::pipeline::RunReport;

// ---------------------------------------------------------------------------
// netpbm
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    /// Skip whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.fail(format!("{what} out of range")))
    }
}

fn parse_netpbm_header<'a>(data: &'a [u8], magic: &str) -> Result<(Cursor<'a>, usize, usize)> {
    let mut cur = Cursor { data, pos: 0 };
    if data.len() < 2 || &data[..2] != magic.as_bytes() {
        let found = data.get(..2).map(String::from_utf8_lossy);
        return Err(cur.fail(format!(
            "expected magic {magic}, found {:?} (only binary netpbm is supported)",
            found.unwrap_or_default()
        )));
    }
    cur.pos = 2;
    let width = cur.read_number("width")?;
    let height = cur.read_number("height")?;
    let maxval = cur.read_number("maxval")?;
    if maxval != 255 {
        return Err(cur.fail(format!("maxval must be 255, found {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
        return Err(cur.fail("expected single whitespace before pixel data"));
    }
    cur.pos += 1;
    Ok((cur, width, height))
}

/// Read a binary PPM (`P6`, maxval 255); 8-bit channels map to [0,1] as v/255.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<ColorImage> {
    let data = fs::read(path)?;
    let (cur, width, height) = parse_netpbm_header(&data, "P6")?;
    let need = width * height * 3;
    let raster = &data[cur.pos..];
    if raster.len() < need {
        return Err(Error::Format {
            offset: data.len() as u64,
            message: format!(
                "truncated pixel data: need {need} bytes, found {}",
                raster.len()
            ),
        });
    }
    let torus = Torus::new(width, height)?;
    let pixels = raster[..need]
        .chunks_exact(3)
        .map(|px| {
            [
                px[0] as f64 / 255.0,
                px[1] as f64 / 255.0,
                px[2] as f64 / 255.0,
            ]
        })
        .collect();
    ColorImage::new(torus, pixels)
}

/// Write a binary PPM, clamping intensities to [0,1] and rounding to 8 bits.
pub fn write_ppm(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let t = img.torus();
    let mut out = Vec::with_capacity(t.num_sites() * 3 + 32);
    write!(out, "P6\n{} {}\n255\n", t.width(), t.height())?;
    for px in img.pixels() {
        for &v in px {
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write labels as a binary PGM (`P5`), one byte per site holding the raw
/// label index. Rejected when the label count exceeds 256.
pub fn write_pgm_labels(labels: &LabelField, path: impl AsRef<Path>) -> Result<()> {
    if labels.num_labels() > 256 {
        return Err(usage(format!(
            "cannot store {} labels in an 8-bit PGM",
            labels.num_labels()
        )));
    }
    let t = labels.torus();
    let mut out = Vec::with_capacity(t.num_sites() + 32);
    write!(out, "P5\n{} {}\n255\n", t.width(), t.height())?;
    for site in 0..t.num_sites() {
        out.push(labels.label(site) as u8);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a label field back from a binary PGM written by [`write_pgm_labels`].
pub fn read_pgm_labels(path: impl AsRef<Path>, q: usize) -> Result<LabelField> {
    let data = fs::read(path)?;
    let (cur, width, height) = parse_netpbm_header(&data, "P5")?;
    let need = width * height;
    let raster = &data[cur.pos..];
    if raster.len() < need {
        return Err(Error::Format {
            offset: data.len() as u64,
            message: format!(
                "truncated label data: need {need} bytes, found {}",
                raster.len()
            ),
        });
    }
    let torus = Torus::new(width, height)?;
    let labels = raster[..need].iter().map(|&b| b as u16).collect();
    LabelField::new(torus, q, labels)
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

/// serde_json formatter that prints every float with 17 significant digits.
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with the 17-significant-digit float convention.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| usage(format!("report serialization failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("serializer emits utf-8"))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Gaussian model parameters as they appear in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonModel {
    pub means: Vec<[f64; 3]>,
    pub covariances: Vec<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonEstimateStage {
    pub em_iterations: usize,
    pub em_converged: bool,
    pub lbp_iterations_total: usize,
    pub lbp_last_converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonFinalLbp {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonTimings {
    pub coarsen: f64,
    pub estimate: f64,
    pub inverse_rg: f64,
    pub final_lbp: f64,
    pub decide: f64,
}

/// The documented, schema-stable run report
/// (see `schema/run_report.schema.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonReport {
    pub q: usize,
    pub rg_steps: u32,
    pub width: usize,
    pub height: usize,
    pub coarse_width: usize,
    pub coarse_height: usize,
    pub alpha_coarse: f64,
    pub alpha_trajectory: Vec<f64>,
    pub alpha_full: f64,
    pub model: JsonModel,
    pub estimate: JsonEstimateStage,
    pub final_lbp: JsonFinalLbp,
    pub timings_ms: JsonTimings,
}

impl From<&RunReport> for JsonReport {
    fn from(r: &RunReport) -> Self {
        JsonReport {
            q: r.q,
            rg_steps: r.rg_steps,
            width: r.width,
            height: r.height,
            coarse_width: r.coarse_width,
            coarse_height: r.coarse_height,
            alpha_coarse: r.alpha_coarse,
            alpha_trajectory: r.alpha_trajectory.clone(),
            alpha_full: r.alpha_full,
            model: JsonModel {
                means: r.model.means().to_vec(),
                covariances: r.model.covariances().to_vec(),
            },
            estimate: JsonEstimateStage {
                em_iterations: r.em_iterations,
                em_converged: r.em_converged,
                lbp_iterations_total: r.estimate_lbp_iterations,
                lbp_last_converged: r.estimate_lbp_converged,
            },
            final_lbp: JsonFinalLbp {
                iterations: r.final_lbp_iterations,
                converged: r.final_lbp_converged,
                residual: r.final_lbp_residual,
            },
            timings_ms: JsonTimings {
                coarsen: r.timings_ms.coarsen,
                estimate: r.timings_ms.estimate,
                inverse_rg: r.timings_ms.inverse_rg,
                final_lbp: r.timings_ms.final_lbp,
                decide: r.timings_ms.decide,
            },
        }
    }
}

/// Sidecar of generating parameters written by the `synth` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonSynthParams {
    pub width: usize,
    pub height: usize,
    pub q: usize,
    pub alpha: f64,
    pub seed: u64,
    pub sweeps: usize,
    pub sigma: f64,
    pub means: Vec<[f64; 3]>,
}

/// Report written by the `bench` subcommand: one full run report per
/// decimation depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonBenchReport {
    pub input: String,
    pub q: usize,
    pub seed: u64,
    pub runs: Vec<JsonReport>,
}
