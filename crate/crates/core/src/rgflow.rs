//! Scalar renormalization-group flow of the Potts coupling.
//!
//! One decimation step maps the coupling through
//!
//! ```text
//! alpha' = 4 ln( (q - 1 + e^alpha) / (q - 2 + 2 e^(alpha/2)) )
//! ```
//!
//! which has the closed-form inverse
//!
//! ```text
//! alpha = 2 ln( t + sqrt((t + q - 1)(t - 1)) ),   t = e^(alpha'/4).
//! ```
//!
//! `plaquette_oracle` re-derives the forward map by brute-force enumeration of
//! the two decimated plaquette spins, and is kept as an independent check that
//! the closed form is the right reduction of the block-spin sum.

use crate::error::{usage, Error, Result};

fn check_q(q: usize) -> Result<()> {
    if q < 2 {
        return Err(usage(format!("label count q must be >= 2, got {q}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64, what: &str) -> Result<()> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(usage(format!(
            "{what} must be a finite non-negative coupling, got {alpha}"
        )));
    }
    Ok(())
}

/// One coarsening step of the coupling.
///
/// Evaluated in the factored form
/// `4 (alpha/2 + ln((1 + (q-1) e^-alpha) / (2 + (q-2) e^(-alpha/2))))`
/// so that e^alpha never overflows.
pub fn forward_alpha(alpha: f64, q: usize) -> Result<f64> {
    check_q(q)?;
    check_alpha(alpha, "alpha")?;
    let qm1 = (q - 1) as f64;
    let qm2 = (q - 2) as f64;
    let num = 1.0 + qm1 * (-alpha).exp();
    let den = 2.0 + qm2 * (-0.5 * alpha).exp();
    Ok(4.0 * (0.5 * alpha + (num / den).ln()))
}

/// One refinement step of the coupling: the exact functional inverse of
/// [`forward_alpha`].
pub fn inverse_alpha(alpha_next: f64, q: usize) -> Result<f64> {
    check_q(q)?;
    check_alpha(alpha_next, "alpha")?;
    let t = (0.25 * alpha_next).exp();
    let qm1 = (q - 1) as f64;
    // t >= 1 for non-negative couplings, so the radicand is non-negative.
    let root = ((t + qm1) * (t - 1.0)).sqrt();
    Ok(2.0 * (t + root).ln())
}

/// The trajectory `alpha^(0), .., alpha^(R)` of couplings under the flow;
/// index r is the coupling after r coarsening steps.
#[derive(Debug, Clone)]
pub struct CouplingFlow {
    q: usize,
    alphas: Vec<f64>,
}

impl CouplingFlow {
    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of steps R (one less than the number of stored couplings).
    pub fn steps(&self) -> usize {
        self.alphas.len() - 1
    }

    /// Coupling on the finest lattice, `alpha^(0)`.
    pub fn fine(&self) -> f64 {
        self.alphas[0]
    }

    /// Coupling on the coarsest lattice, `alpha^(R)`.
    pub fn coarse(&self) -> f64 {
        *self.alphas.last().unwrap()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }

    /// Check that consecutive entries are related by the forward map.
    pub fn validate(&self) -> Result<()> {
        for r in 1..self.alphas.len() {
            let expect = forward_alpha(self.alphas[r - 1], self.q)?;
            if (expect - self.alphas[r]).abs() > 1e-12 {
                return Err(usage(format!(
                    "coupling trajectory inconsistent at step {r}: forward({}) = {expect} != {}",
                    self.alphas[r - 1],
                    self.alphas[r]
                )));
            }
        }
        Ok(())
    }
}

/// Apply [`inverse_alpha`] `steps` times, recovering the full trajectory down
/// to the fine-lattice coupling `alpha^(0)`.
pub fn inverse_chain(alpha_coarse: f64, q: usize, steps: u32) -> Result<CouplingFlow> {
    check_q(q)?;
    check_alpha(alpha_coarse, "alpha")?;
    let mut alphas = vec![0.0; steps as usize + 1];
    alphas[steps as usize] = alpha_coarse;
    for r in (0..steps as usize).rev() {
        alphas[r] = inverse_alpha(alphas[r + 1], q)?;
    }
    Ok(CouplingFlow { q, alphas })
}

/// Apply [`forward_alpha`] `steps` times starting from the fine coupling.
pub fn forward_chain(alpha_fine: f64, q: usize, steps: u32) -> Result<CouplingFlow> {
    check_q(q)?;
    check_alpha(alpha_fine, "alpha")?;
    let mut alphas = Vec::with_capacity(steps as usize + 1);
    alphas.push(alpha_fine);
    for _ in 0..steps {
        let next = forward_alpha(*alphas.last().unwrap(), q)?;
        alphas.push(next);
    }
    Ok(CouplingFlow { q, alphas })
}

/// Brute-force decimation of one plaquette.
///
/// Sums the Boltzmann weights of the two interior spins `a2, a4` over all q^2
/// assignments, once with the surviving pair equal and once unequal, and reads
/// the renormalized coupling off the weight ratio. Must agree with
/// [`forward_alpha`] to full precision; this is the enumeration the closed
/// form is reduced from.
pub fn plaquette_oracle(alpha: f64, q: usize) -> Result<f64> {
    check_q(q)?;
    check_alpha(alpha, "alpha")?;
    if q > 64 {
        return Err(usage(format!(
            "plaquette enumeration capped at q <= 64, got {q}"
        )));
    }
    let delta = |a: usize, b: usize| -> f64 {
        if a == b {
            1.0
        } else {
            0.0
        }
    };
    let half = 0.5 * alpha;
    let weight_sum = |a1: usize, a3: usize| -> f64 {
        let mut s = 0.0;
        for a2 in 0..q {
            for a4 in 0..q {
                let bonds = delta(a1, a2) + delta(a2, a3) + delta(a1, a4) + delta(a4, a3);
                s += (half * bonds).exp();
            }
        }
        s
    };
    let agree = weight_sum(0, 0);
    let diff = weight_sum(0, 1);
    Ok(2.0 * (agree / diff).ln())
}

/// Nontrivial fixed point `alpha* > 0` of the forward map, found by bisection
/// of `forward_alpha(a) - a` on [1e-6, 50]. The lower bracket edge excludes
/// the trivial fixed point at zero.
pub fn find_fixed_point(q: usize) -> Result<f64> {
    check_q(q)?;
    let f = |a: f64| forward_alpha(a, q).map(|v| v - a);
    let mut lo = 1e-6;
    let mut hi = 50.0;
    let flo = f(lo)?;
    let fhi = f(hi)?;
    if flo.signum() == fhi.signum() {
        return Err(Error::NoFixedPoint { q });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid)?;
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_is_zero_at_zero() {
        for q in 2..=16 {
            assert_eq!(forward_alpha(0.0, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn forward_matches_q2_closed_form() {
        // q = 2 reduces to 4 ln(cosh(alpha/2)).
        for &alpha in &[0.5, 1.0, 2.0, 3.0, 7.5] {
            let expect = 4.0 * (0.5f64 * alpha).cosh().ln();
            let got = forward_alpha(alpha, 2).unwrap();
            assert!(
                (got - expect).abs() < 1e-12,
                "alpha={alpha}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        assert!(forward_alpha(1.0, 1).is_err());
        assert!(forward_alpha(-0.5, 3).is_err());
        assert!(forward_alpha(f64::NAN, 3).is_err());
    }

    #[test]
    fn forward_is_stable_for_large_alpha() {
        // alpha >> 1: forward(alpha) -> 2 alpha - 4 ln 2
        for q in [2usize, 5, 16] {
            let got = forward_alpha(50.0, q).unwrap();
            let asym = 2.0 * 50.0 - 4.0 * 2.0f64.ln();
            assert!((got - asym).abs() < 1e-6, "q={q}: {got} vs {asym}");
            // far beyond e^alpha overflow
            assert!(forward_alpha(800.0, q).unwrap().is_finite());
        }
    }

    #[test]
    fn inverse_is_zero_at_zero() {
        for q in 2..=16 {
            assert_eq!(inverse_alpha(0.0, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn inverse_rejects_negative() {
        assert!(inverse_alpha(-1e-9, 4).is_err());
    }

    #[test]
    fn round_trip_identity() {
        for q in 2..=16 {
            for &a in &[0.1, 0.5, 1.0, 2.0, 5.0] {
                let fwd = forward_alpha(a, q).unwrap();
                let back = inverse_alpha(fwd, q).unwrap();
                assert!((back - a).abs() < 1e-10, "q={q} a={a}: {back}");
            }
        }
    }

    // Independent route: invert the forward map by bisection and compare with
    // the closed-form inverse.
    #[test]
    fn inverse_matches_bisection_root() {
        let target = 2.5288;
        let q = 8;
        let (mut lo, mut hi) = (0.0f64, 20.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if forward_alpha(mid, q).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let closed = inverse_alpha(target, q).unwrap();
        assert!((closed - root).abs() < 1e-9, "{closed} vs {root}");
        // spot value for the one-step refinement
        assert!((closed - 3.0866).abs() < 5e-4, "{closed}");
    }

    #[test]
    fn chain_of_length_zero_is_the_input() {
        let flow = inverse_chain(1.25, 5, 0).unwrap();
        assert_eq!(flow.as_slice(), &[1.25]);
        assert_eq!(flow.fine(), 1.25);
        assert_eq!(flow.coarse(), 1.25);
    }

    #[test]
    fn chain_is_forward_consistent() {
        let flow = inverse_chain(2.5288, 8, 8).unwrap();
        flow.validate().unwrap();
        assert_eq!(flow.steps(), 8);
        assert_eq!(flow.coarse(), 2.5288);
    }

    // The fixed point repels the forward flow, so the 4-decimal rounding of
    // the starting coupling is amplified over the chain; the tolerance is
    // correspondingly wide.
    #[test]
    fn forward_chain_returns_to_the_coarse_coupling() {
        let flow = forward_chain(3.6765, 8, 8).unwrap();
        assert!((flow.coarse() - 2.5288).abs() < 0.05, "{}", flow.coarse());
        flow.validate().unwrap();
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        for q in 2..=10 {
            for k in 0..=20 {
                let alpha = 0.25 * k as f64;
                let oracle = plaquette_oracle(alpha, q).unwrap();
                let closed = forward_alpha(alpha, q).unwrap();
                assert!(
                    (oracle - closed).abs() < 1e-10,
                    "q={q} alpha={alpha}: {oracle} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn oracle_zero_and_q2_forms() {
        assert!(plaquette_oracle(0.0, 3).unwrap().abs() < 1e-12);
        let expect = 4.0 * 0.5f64.cosh().ln();
        assert!((plaquette_oracle(1.0, 2).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_is_fixed() {
        for q in 2..=10 {
            let a = find_fixed_point(q).unwrap();
            assert!(a > 0.0);
            let fa = forward_alpha(a, q).unwrap();
            assert!((fa - a).abs() < 1e-10, "q={q}: {a} -> {fa}");
        }
    }

    // Independent root-finder on the q=2 closed form 4 ln cosh(a/2) - a = 0.
    #[test]
    fn fixed_point_q2_matches_cosh_root() {
        let g = |a: f64| 4.0 * (0.5 * a).cosh().ln() - a;
        let (mut lo, mut hi) = (1.0f64, 5.0f64);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let got = find_fixed_point(2).unwrap();
        assert!((got - root).abs() < 1e-9, "{got} vs {root}");
        assert!((got - 2.44).abs() < 0.05, "{got}");
    }

    #[test]
    fn monotone_in_alpha() {
        for q in [2usize, 4, 8, 16] {
            let mut prev = forward_alpha(0.0, q).unwrap();
            for k in 1..=400 {
                let a = 0.05 * k as f64;
                let cur = forward_alpha(a, q).unwrap();
                assert!(cur > prev, "q={q} not increasing at alpha={a}");
                prev = cur;
            }
        }
    }
}
