//! Log-space sum-product loopy belief propagation on the torus.
//!
//! Pairwise potentials are Potts factors `exp((alpha/2) delta(xi, zeta))`;
//! unaries are arbitrary finite log-densities. Messages live in log space,
//! normalized so the largest entry is zero, and are updated synchronously
//! (flooding) with damping. Iteration n+1 reads only the buffers of
//! iteration n and every message slot is written exactly once, so results
//! are identical for any thread count.
//!
//! The Potts structure collapses each message sum to
//! `ln(sum_xi e^s(xi) + (e^(alpha/2) - 1) e^s(zeta))`, which costs O(q)
//! per message instead of O(q^2).

use crate::error::{usage, Result};
use crate::grid::{opposite, Torus, EAST, SOUTH};
use crate::par;

/// Knobs for the message-passing loop.
#[derive(Debug, Clone, Copy)]
pub struct LbpOptions {
    /// Stop when the largest absolute log-message change falls below this.
    pub tolerance: f64,
    /// Hard cap on sweeps; hitting it is reported, not an error.
    pub max_iters: usize,
    /// Fraction of the old log-message kept in each update.
    pub damping: f64,
}

impl Default for LbpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iters: 1000,
            damping: 0.5,
        }
    }
}

/// Site and edge beliefs produced by one LBP run.
///
/// Site beliefs are site-major (`site * q + label`); edge beliefs follow the
/// torus edge enumeration with a q x q row-major block per edge, rows indexed
/// by the owning site's label.
#[derive(Debug, Clone)]
pub struct BeliefSet {
    torus: Torus,
    q: usize,
    site: Vec<f64>,
    edge: Vec<f64>,
    converged: bool,
    iterations: usize,
    residual: f64,
}

impl BeliefSet {
    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn num_labels(&self) -> usize {
        self.q
    }

    pub fn site_beliefs(&self) -> &[f64] {
        &self.site
    }

    /// Belief vector of one site.
    pub fn site_belief(&self, site: usize) -> &[f64] {
        &self.site[site * self.q..(site + 1) * self.q]
    }

    pub fn edge_beliefs(&self) -> &[f64] {
        &self.edge
    }

    /// q x q belief block of undirected edge `e`.
    pub fn edge_belief(&self, e: usize) -> &[f64] {
        let qq = self.q * self.q;
        &self.edge[e * qq..(e + 1) * qq]
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Largest deviation of any site or edge belief sum from one.
    pub fn max_normalization_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for site in 0..self.torus.num_sites() {
            let s: f64 = self.site_belief(site).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
        for e in 0..self.torus.num_edges() {
            let s: f64 = self.edge_belief(e).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    /// Largest gap between a marginalized edge belief and the matching site
    /// belief, over both endpoints of every edge.
    pub fn edge_site_consistency_error(&self) -> f64 {
        let q = self.q;
        let mut worst = 0.0f64;
        for e in 0..self.torus.num_edges() {
            let (i, j) = self.torus.edge_endpoints(e);
            let block = self.edge_belief(e);
            let bi = self.site_belief(i);
            let bj = self.site_belief(j);
            for xi in 0..q {
                let row: f64 = block[xi * q..(xi + 1) * q].iter().sum();
                worst = worst.max((row - bi[xi]).abs());
            }
            for zeta in 0..q {
                let mut col = 0.0;
                for xi in 0..q {
                    col += block[xi * q + zeta];
                }
                worst = worst.max((col - bj[zeta]).abs());
            }
        }
        worst
    }
}

/// Expected neighbor agreement under the edge beliefs:
/// the average over edges of `sum_xi b_ij(xi, xi)`.
pub fn mean_agreement(beliefs: &BeliefSet) -> f64 {
    let q = beliefs.q;
    let ne = beliefs.torus.num_edges();
    let mut total = 0.0;
    for e in 0..ne {
        let block = beliefs.edge_belief(e);
        for xi in 0..q {
            total += block[xi * q + xi];
        }
    }
    total / ne as f64
}

fn check_opts(opts: &LbpOptions) -> Result<()> {
    if !opts.tolerance.is_finite() || opts.tolerance <= 0.0 {
        return Err(usage("tolerance must be a positive finite number"));
    }
    if opts.max_iters == 0 {
        return Err(usage("max-iters must be at least 1"));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(usage(format!(
            "damping must lie in [0, 1), got {}",
            opts.damping
        )));
    }
    Ok(())
}

fn check_inputs(n: usize, log_unaries: &[f64], q: usize, alpha: f64) -> Result<()> {
    if q < 2 {
        return Err(usage(format!("label count q must be >= 2, got {q}")));
    }
    if log_unaries.len() != n * q {
        return Err(usage(format!(
            "log-unaries have {} entries, expected {} sites x {} labels",
            log_unaries.len(),
            n,
            q
        )));
    }
    if let Some(k) = log_unaries.iter().position(|v| !v.is_finite()) {
        return Err(usage(format!(
            "non-finite log-unary at site {}, label {}",
            k / q,
            k % q
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(usage(format!(
            "coupling alpha must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(())
}

/// One damped message update written into `out`; returns nothing, residual is
/// measured by the caller against the previous buffer.
#[allow(clippy::too_many_arguments)]
#[inline]
fn update_slot(
    slot: usize,
    out: &mut [f64],
    old: &[f64],
    unaries: &[f64],
    nbr: &[[u32; 4]],
    q: usize,
    coupling: f64,
    damping: f64,
    scratch: &mut [f64],
) {
    let site = slot / 4;
    let dir = slot % 4;
    let (s, es) = scratch.split_at_mut(q);

    // s(xi) = unary + incoming messages from all neighbors except the target
    s.copy_from_slice(&unaries[site * q..(site + 1) * q]);
    for d in 0..4 {
        if d == dir {
            continue;
        }
        let from = nbr[site][d] as usize;
        let inc = &old[(from * 4 + opposite(d)) * q..(from * 4 + opposite(d)) * q + q];
        for (sv, &m) in s.iter_mut().zip(inc) {
            *sv += m;
        }
    }

    let mut mx = f64::NEG_INFINITY;
    for &v in s.iter() {
        mx = mx.max(v);
    }
    let mut total = 0.0;
    for (e, &v) in es.iter_mut().zip(s.iter()) {
        *e = (v - mx).exp();
        total += *e;
    }

    // msg(zeta) = ln(total + coupling * e^(s(zeta) - mx)), up to a constant
    let mut new_max = f64::NEG_INFINITY;
    for (o, &e) in out.iter_mut().zip(es.iter()) {
        let v = (total + coupling * e).ln();
        *o = v;
        new_max = new_max.max(v);
    }
    let prev = &old[slot * q..slot * q + q];
    let mut damped_max = f64::NEG_INFINITY;
    for (o, &p) in out.iter_mut().zip(prev) {
        let v = damping * p + (1.0 - damping) * (*o - new_max);
        *o = v;
        damped_max = damped_max.max(v);
    }
    for o in out.iter_mut() {
        *o -= damped_max;
    }
}

// Slots processed per parallel task; each task reuses one scratch allocation.
const SLOTS_PER_TASK: usize = 64;

/// Run damped synchronous sum-product on the torus and assemble beliefs.
pub fn run_lbp(
    torus: Torus,
    log_unaries: &[f64],
    q: usize,
    alpha: f64,
    opts: &LbpOptions,
) -> Result<BeliefSet> {
    let n = torus.num_sites();
    check_inputs(n, log_unaries, q, alpha)?;
    check_opts(opts)?;

    let nbr = torus.neighbor_table();
    let coupling = (0.5 * alpha).exp_m1();
    let mut msgs = vec![0.0f64; n * 4 * q];
    let mut next = vec![0.0f64; n * 4 * q];

    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iters {
        {
            let old = &msgs;
            let unaries = log_unaries;
            let nbr = &nbr;
            par::for_each_chunk_mut(&mut next, q * SLOTS_PER_TASK, |start, chunk| {
                let mut scratch = vec![0.0f64; 2 * q];
                for (k, out) in chunk.chunks_mut(q).enumerate() {
                    let slot = start / q + k;
                    update_slot(
                        slot,
                        out,
                        old,
                        unaries,
                        nbr,
                        q,
                        coupling,
                        opts.damping,
                        &mut scratch,
                    );
                }
            });
        }
        residual = par::max_abs_diff(&next, &msgs);
        std::mem::swap(&mut msgs, &mut next);
        iterations = iter;
        if residual < opts.tolerance {
            converged = true;
            break;
        }
    }

    // Site beliefs: softmax of unary plus all incoming messages.
    let mut site = vec![0.0f64; n * q];
    {
        let msgs = &msgs;
        let nbr = &nbr;
        par::for_each_chunk_mut(&mut site, q * SLOTS_PER_TASK, |start, chunk| {
            for (k, out) in chunk.chunks_mut(q).enumerate() {
                let i = start / q + k;
                out.copy_from_slice(&log_unaries[i * q..(i + 1) * q]);
                for d in 0..4 {
                    let from = nbr[i][d] as usize;
                    let inc = &msgs[(from * 4 + opposite(d)) * q..(from * 4 + opposite(d)) * q + q];
                    for (o, &m) in out.iter_mut().zip(inc) {
                        *o += m;
                    }
                }
                let mx = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for o in out.iter_mut() {
                    *o = (*o - mx).exp();
                    total += *o;
                }
                for o in out.iter_mut() {
                    *o /= total;
                }
            }
        });
    }

    // Edge beliefs: pre-messages on both endpoints times the Potts factor.
    let qq = q * q;
    let mut edge = vec![0.0f64; torus.num_edges() * qq];
    {
        let msgs = &msgs;
        let nbr = &nbr;
        par::for_each_chunk_mut(&mut edge, qq * SLOTS_PER_TASK.max(4), |start, chunk| {
            let mut pre = vec![0.0f64; 2 * q];
            for (k, block) in chunk.chunks_mut(qq).enumerate() {
                let e = start / qq + k;
                let i = e / 2;
                let dir = if e.is_multiple_of(2) { EAST } else { SOUTH };
                let j = nbr[i][dir] as usize;
                let (pi, pj) = pre.split_at_mut(q);

                pi.copy_from_slice(&log_unaries[i * q..(i + 1) * q]);
                for d in 0..4 {
                    if d == dir {
                        continue;
                    }
                    let from = nbr[i][d] as usize;
                    let inc = &msgs[(from * 4 + opposite(d)) * q..(from * 4 + opposite(d)) * q + q];
                    for (o, &m) in pi.iter_mut().zip(inc) {
                        *o += m;
                    }
                }
                pj.copy_from_slice(&log_unaries[j * q..(j + 1) * q]);
                for d in 0..4 {
                    if d == opposite(dir) {
                        continue;
                    }
                    let from = nbr[j][d] as usize;
                    let inc = &msgs[(from * 4 + opposite(d)) * q..(from * 4 + opposite(d)) * q + q];
                    for (o, &m) in pj.iter_mut().zip(inc) {
                        *o += m;
                    }
                }
                let mi = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mj = pj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for v in pi.iter_mut() {
                    *v = (*v - mi).exp();
                }
                for v in pj.iter_mut() {
                    *v = (*v - mj).exp();
                }
                let mut total = 0.0;
                for xi in 0..q {
                    for zeta in 0..q {
                        let w = pi[xi] * pj[zeta] * if xi == zeta { 1.0 + coupling } else { 1.0 };
                        block[xi * q + zeta] = w;
                        total += w;
                    }
                }
                for v in block.iter_mut() {
                    *v /= total;
                }
            }
        });
    }

    Ok(BeliefSet {
        torus,
        q,
        site,
        edge,
        converged,
        iterations,
        residual,
    })
}

/// Beliefs of the chain-graph variant, used to check the message equations
/// against exact dynamic programming on a path.
#[derive(Debug, Clone)]
pub struct ChainBeliefSet {
    q: usize,
    site: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl ChainBeliefSet {
    pub fn site_belief(&self, site: usize) -> &[f64] {
        &self.site[site * self.q..(site + 1) * self.q]
    }
}

/// The same damped sum-product updates on a path graph of `len` sites.
///
/// On a tree the flooding schedule converges to the exact marginals, so this
/// variant exposes the message equations to a dynamic-programming check.
pub fn run_lbp_chain(
    log_unaries: &[f64],
    q: usize,
    alpha: f64,
    opts: &LbpOptions,
) -> Result<ChainBeliefSet> {
    if q < 2 || !log_unaries.len().is_multiple_of(q) {
        return Err(usage("log-unaries must hold a length-q vector per site"));
    }
    let len = log_unaries.len() / q;
    if len < 2 {
        return Err(usage("chain needs at least two sites"));
    }
    check_inputs(len, log_unaries, q, alpha)?;
    check_opts(opts)?;

    let coupling = (0.5 * alpha).exp_m1();
    let ne = len - 1;
    // right[k] = message k -> k+1, left[k] = message k+1 -> k
    let mut right = vec![0.0f64; ne * q];
    let mut left = vec![0.0f64; ne * q];
    let mut new_right = right.clone();
    let mut new_left = left.clone();
    let mut s = vec![0.0f64; q];

    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=opts.max_iters {
        let mut residual = 0.0f64;
        for k in 0..ne {
            // into k+1 from the left
            s.copy_from_slice(&log_unaries[k * q..(k + 1) * q]);
            if k > 0 {
                for (sv, &m) in s.iter_mut().zip(&right[(k - 1) * q..k * q]) {
                    *sv += m;
                }
            }
            potts_message(
                &s,
                coupling,
                opts.damping,
                &right[k * q..(k + 1) * q],
                &mut new_right[k * q..(k + 1) * q],
            );
            // into k from the right
            s.copy_from_slice(&log_unaries[(k + 1) * q..(k + 2) * q]);
            if k + 1 < ne {
                for (sv, &m) in s.iter_mut().zip(&left[(k + 1) * q..(k + 2) * q]) {
                    *sv += m;
                }
            }
            potts_message(
                &s,
                coupling,
                opts.damping,
                &left[k * q..(k + 1) * q],
                &mut new_left[k * q..(k + 1) * q],
            );
        }
        for (a, b) in new_right.iter().zip(&right) {
            residual = residual.max((a - b).abs());
        }
        for (a, b) in new_left.iter().zip(&left) {
            residual = residual.max((a - b).abs());
        }
        std::mem::swap(&mut right, &mut new_right);
        std::mem::swap(&mut left, &mut new_left);
        iterations = iter;
        if residual < opts.tolerance {
            converged = true;
            break;
        }
    }

    let mut site = vec![0.0f64; len * q];
    for i in 0..len {
        let out = &mut site[i * q..(i + 1) * q];
        out.copy_from_slice(&log_unaries[i * q..(i + 1) * q]);
        if i > 0 {
            for (o, &m) in out.iter_mut().zip(&right[(i - 1) * q..i * q]) {
                *o += m;
            }
        }
        if i < ne {
            for (o, &m) in out.iter_mut().zip(&left[i * q..(i + 1) * q]) {
                *o += m;
            }
        }
        let mx = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - mx).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    Ok(ChainBeliefSet {
        q,
        site,
        converged,
        iterations,
    })
}

/// Shared scalar message kernel: `out = damp(old, normalize(potts_lse(s)))`.
fn potts_message(s: &[f64], coupling: f64, damping: f64, old: &[f64], out: &mut [f64]) {
    let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for &v in s {
        total += (v - mx).exp();
    }
    let mut new_max = f64::NEG_INFINITY;
    for (o, &v) in out.iter_mut().zip(s) {
        let m = (total + coupling * (v - mx).exp()).ln();
        *o = m;
        new_max = new_max.max(m);
    }
    let mut damped_max = f64::NEG_INFINITY;
    for (o, &p) in out.iter_mut().zip(old) {
        let v = damping * p + (1.0 - damping) * (*o - new_max);
        *o = v;
        damped_max = damped_max.max(v);
    }
    for o in out.iter_mut() {
        *o -= damped_max;
    }
}
