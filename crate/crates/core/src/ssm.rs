//! Linear state-space form of an ARMA(p, q) recurrence: construction,
//! unrolling, equivalence checks, stability and propagation horizon.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::selector::ArmaCoefficients;

/// Tolerance above 1 still counted as a stable spectral radius.
pub const STABILITY_TOL: f64 = 1e-9;
/// Iteration cap for [`propagation_horizon`].
pub const HORIZON_CAP: usize = 1_000_000;

/// `x_t = A x_{t-1} + B delta_t`, `f_t = C x_t + D delta_t`, with the state
/// laid out as `[f_t, ..., f_{t-p+1}, delta_t, ..., delta_{t-q+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub p: usize,
    pub q: usize,
    /// Row-major `(p+q) x (p+q)`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    pub fn a_at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.dim() + c]
    }

    /// `A v`.
    pub fn apply_a(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|r| self.a[r * n..(r + 1) * n].iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }

    /// AR coefficients read back from the first row.
    pub fn phi(&self) -> &[f64] {
        &self.a[..self.p]
    }

    /// MA coefficients read back from the first row.
    pub fn theta(&self) -> &[f64] {
        &self.a[self.p..self.dim()]
    }

    /// State matrix with the companion (AR) block, the down-shift (MA) block
    /// and first row `[phi | theta]`; `B`, `C`, `D` left for the caller.
    fn state_matrix(coeffs: &ArmaCoefficients) -> (usize, usize, Vec<f64>) {
        let (p, q) = (coeffs.p(), coeffs.q());
        let n = p + q;
        let mut a = vec![0.0; n * n];
        a[..p].copy_from_slice(&coeffs.phi);
        a[p..n].copy_from_slice(&coeffs.theta);
        for i in 1..p {
            a[i * n + (i - 1)] = 1.0;
        }
        for j in 1..q {
            a[(p + j) * n + (p + j - 1)] = 1.0;
        }
        (p, q, a)
    }

    /// Variant with `B = e_{p+1}` and `D = 1`. Its observation satisfies an
    /// ARMA recurrence with MA coefficients `theta - phi` (zero-padded), not
    /// `theta`; kept for comparison with [`build_ssm`].
    pub fn with_direct_feedthrough(coeffs: &ArmaCoefficients) -> Self {
        let (p, q, a) = Self::state_matrix(coeffs);
        let mut b = vec![0.0; p + q];
        b[p] = 1.0;
        let mut c = vec![0.0; p + q];
        c[0] = 1.0;
        StateSpace { p, q, a, b, c, d: 1.0 }
    }
}

/// State-space realization of `f_t = sum phi_i f_{t-i} + sum theta_j
/// delta_{t-j} + delta_t`. The innovation enters both the newest state slot
/// and the newest residual slot (`B = e_1 + e_{p+1}`), so `C = e_1`, `D = 0`
/// and the state holds exactly the recent states and residuals.
pub fn build_ssm(coeffs: &ArmaCoefficients) -> StateSpace {
    let (p, q, a) = StateSpace::state_matrix(coeffs);
    let mut b = vec![0.0; p + q];
    b[0] = 1.0;
    b[p] += 1.0;
    let mut c = vec![0.0; p + q];
    c[0] = 1.0;
    StateSpace { p, q, a, b, c, d: 0.0 }
}

/// Iterate the state space from `x0` over `deltas`, returning `f_1..f_T`.
pub fn ssm_unroll(ssm: &StateSpace, x0: &[f64], deltas: &[f64]) -> Result<Vec<f64>> {
    let n = ssm.dim();
    if x0.len() != n || ssm.a.len() != n * n || ssm.b.len() != n || ssm.c.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "ssm_unroll",
            left: vec![n],
            right: vec![x0.len(), ssm.b.len(), ssm.c.len()],
        }
        .into());
    }
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut next = ssm.apply_a(&x);
        next.iter_mut().zip(&ssm.b).for_each(|(v, b)| *v += b * delta);
        x = next;
        out.push(ssm.c.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + ssm.d * delta);
    }
    Ok(out)
}

/// Initial state from histories ordered oldest first:
/// `[f_{L-1}, ..., f_{L-p}, delta_{L-1}, ..., delta_{L-q}]`.
pub fn initial_state(coeffs: &ArmaCoefficients, states: &[f64], residuals: &[f64]) -> Result<Vec<f64>> {
    let (p, q) = (coeffs.p(), coeffs.q());
    if states.len() < p || residuals.len() < q {
        return Err(Error::InsufficientHistory {
            op: "initial_state",
            needed: p.max(q),
            available: states.len().min(residuals.len()),
        });
    }
    Ok(states
        .iter()
        .rev()
        .take(p)
        .chain(residuals.iter().rev().take(q))
        .copied()
        .collect())
}

/// The ARMA recurrence evaluated directly on scalars, continuing the given
/// histories (oldest first) with the exogenous `deltas`.
pub fn arma_direct(coeffs: &ArmaCoefficients, states: &[f64], residuals: &[f64], deltas: &[f64]) -> Result<Vec<f64>> {
    initial_state(coeffs, states, residuals)?;
    let mut f = states.to_vec();
    let mut d = residuals.to_vec();
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let ar: f64 = coeffs.phi.iter().enumerate().map(|(i, c)| c * f[f.len() - 1 - i]).sum();
        let ma: f64 = coeffs.theta.iter().enumerate().map(|(j, c)| c * d[d.len() - 1 - j]).sum();
        let next = ar + ma + delta;
        f.push(next);
        d.push(delta);
        out.push(next);
    }
    Ok(out)
}

/// Max absolute deviation between the direct recurrence and the state-space
/// unroll over `deltas`.
pub fn check_equivalence(
    coeffs: &ArmaCoefficients,
    states: &[f64],
    residuals: &[f64],
    deltas: &[f64],
) -> Result<f64> {
    let direct = arma_direct(coeffs, states, residuals, deltas)?;
    let x0 = initial_state(coeffs, states, residuals)?;
    let unrolled = ssm_unroll(&build_ssm(coeffs), &x0, deltas)?;
    Ok(direct
        .iter()
        .zip(&unrolled)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn companion(phi: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut m = vec![0.0; p * p];
    m[..p].copy_from_slice(phi);
    for i in 1..p {
        m[i * p + (i - 1)] = 1.0;
    }
    m
}

fn square(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = m[i * n + k];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += a * m[k * n + j];
            }
        }
    }
    out
}

/// Number of repeated squarings in [`spectral_radius`]; the estimate is
/// `||M^(2^K)||^(2^-K)`.
const GELFAND_SQUARINGS: u32 = 64;

/// Largest root modulus of `lambda^p - sum phi_j lambda^(p-j)`, i.e. the
/// spectral radius of the companion matrix (and of the full state matrix,
/// whose MA block is nilpotent). Gelfand's formula by repeated squaring with
/// max-norm rescaling tracked in log space.
pub fn spectral_radius(phi: &[f64]) -> f64 {
    let p = phi.len();
    if phi.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut m = companion(phi);
    let norm = |m: &[f64]| m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    // Invariant: the current power of the companion matrix is exp(log_scale) * m.
    let mut log_scale = 0.0_f64;
    let mut estimate = 0.0;
    for k in 0..=GELFAND_SQUARINGS {
        let s = norm(&m);
        if s == 0.0 {
            // phi = 0 was handled above, so an exact zero here is cancellation
            // in a defective power; keep the last estimate.
            return estimate;
        }
        let log_norm = log_scale + s.ln();
        estimate = (log_norm / 2f64.powi(k as i32)).exp();
        if k == GELFAND_SQUARINGS {
            break;
        }
        m.iter_mut().for_each(|v| *v /= s);
        log_scale = 2.0 * log_norm;
        m = square(&m, p);
    }
    estimate
}

/// `sum |phi| <= 1`, which guarantees a spectral radius of at most 1.
pub fn stability_sufficient(phi: &[f64]) -> bool {
    lagrange_bound(phi) <= 1.0
}

pub fn lagrange_bound(phi: &[f64]) -> f64 {
    phi.iter().map(|v| v.abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub lagrange_bound: f64,
    pub sufficient_stable: bool,
    pub stable: bool,
    pub roots_note: String,
}

impl StabilityReport {
    pub fn new(phi: &[f64]) -> Self {
        let rho = spectral_radius(phi);
        let where_ = if rho < 1.0 - STABILITY_TOL {
            "inside the unit circle"
        } else if rho <= 1.0 + STABILITY_TOL {
            "on the unit circle"
        } else {
            "outside the unit circle"
        };
        StabilityReport {
            spectral_radius: rho,
            lagrange_bound: lagrange_bound(phi),
            sufficient_stable: stability_sufficient(phi),
            stable: rho <= 1.0 + STABILITY_TOL,
            roots_note: format!("max |root| of the AR polynomial = {rho:.6} ({where_})"),
        }
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "spectral radius {:.6}, sum |phi| {:.6}, {}",
            self.spectral_radius,
            self.lagrange_bound,
            if self.stable { "stable" } else { "unstable" }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Finite(usize),
    /// Spectral radius >= 1, or the cap was reached.
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(k) => write!(f, "{k}"),
            Horizon::Infinite => f.write_str("infinite"),
        }
    }
}

/// Smallest `k >= 1` with `max |(A^k B)_i| < eps`.
pub fn propagation_horizon(ssm: &StateSpace, eps: f64) -> Horizon {
    if spectral_radius(ssm.phi()) >= 1.0 {
        return Horizon::Infinite;
    }
    let mut v = ssm.b.clone();
    for k in 1..=HORIZON_CAP {
        v = ssm.apply_a(&v);
        if v.iter().all(|x| x.abs() < eps) {
            return Horizon::Finite(k);
        }
    }
    Horizon::Infinite
}

/// Parse `phi:` / `theta:` sections of whitespace-separated floats; values
/// may follow the header on the same line. Blank lines and `#` comments are
/// ignored.
pub fn parse_coefficients(text: &str) -> Result<ArmaCoefficients> {
    let mut phi = Vec::new();
    let mut theta = Vec::new();
    let mut current: Option<&mut Vec<f64>> = None;
    for (i, raw) in text.lines().enumerate() {
        let mut line = raw.split('#').next().unwrap_or("").trim();
        if let Some(rest) = line.strip_prefix("phi:") {
            current = Some(&mut phi);
            line = rest;
        } else if let Some(rest) = line.strip_prefix("theta:") {
            current = Some(&mut theta);
            line = rest;
        }
        for value in line.split_whitespace() {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::Config(format!("line {}: not a number: '{value}'", i + 1)))?;
            current
                .as_mut()
                .ok_or_else(|| Error::Config(format!("line {}: value before a section header", i + 1)))?
                .push(v);
        }
    }
    if theta.is_empty() {
        theta.push(0.0);
    }
    ArmaCoefficients::new(phi, theta, crate::selector::SelectorMode::Naive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::SelectorMode;
    use rand::{Rng, SeedableRng};

    fn coeffs(phi: &[f64], theta: &[f64]) -> ArmaCoefficients {
        ArmaCoefficients::new(phi.to_vec(), theta.to_vec(), SelectorMode::Naive).unwrap()
    }

    #[test]
    fn layout_for_two_one() {
        let s = build_ssm(&coeffs(&[0.5, 0.3], &[0.2]));
        assert_eq!(s.a, vec![0.5, 0.3, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.b, vec![1.0, 0.0, 1.0]);
        assert_eq!(s.c, vec![1.0, 0.0, 0.0]);
        assert_eq!(s.d, 0.0);
        let lit = StateSpace::with_direct_feedthrough(&coeffs(&[0.5, 0.3], &[0.2]));
        assert_eq!((lit.b.clone(), lit.d), (vec![0.0, 0.0, 1.0], 1.0));
        assert_eq!(lit.a, s.a);
    }

    #[test]
    fn shift_blocks() {
        let s = build_ssm(&coeffs(&[0.1, 0.2, 0.3], &[0.4, 0.5]));
        for r in 1..5 {
            for c in 0..5 {
                let sub = (r < 3 && c == r - 1) || (r == 4 && c == 3);
                assert_eq!(s.a_at(r, c), if sub { 1.0 } else { 0.0 }, "({r}, {c})");
            }
        }
        let zero = build_ssm(&coeffs(&[0.0], &[0.0]));
        assert!(zero.a.iter().all(|&v| v == 0.0));
        assert_eq!(spectral_radius(zero.phi()), 0.0);
    }

    #[test]
    fn unroll_examples() {
        let s = build_ssm(&coeffs(&[0.4, 0.1], &[0.3]));
        assert!(ssm_unroll(&s, &[0.0; 3], &[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
        assert!(ssm_unroll(&s, &[0.0; 2], &[1.0]).is_err());
        let zero_a = StateSpace {
            a: vec![0.0; 9],
            ..StateSpace::with_direct_feedthrough(&coeffs(&[0.4, 0.1], &[0.3]))
        };
        let deltas = [1.5, -2.0, 0.25];
        assert_eq!(ssm_unroll(&zero_a, &[0.0; 3], &deltas).unwrap(), deltas.to_vec());
    }

    #[test]
    fn unroll_matches_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = coeffs(&[0.3, -0.2, 0.1], &[0.5, 0.2]);
        let s = build_ssm(&c);
        let n = s.dim();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let deltas: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = ssm_unroll(&s, &x0, &deltas).unwrap();
        // f_t = C A^t x0 + sum_{k<=t} C A^(t-k) B delta_k + D delta_t
        let mut powers = vec![{
            let mut id = vec![0.0; n * n];
            (0..n).for_each(|i| id[i * n + i] = 1.0);
            id
        }];
        for t in 1..=16 {
            let prev = &powers[t - 1];
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    next[i * n + j] = (0..n).map(|k| s.a[i * n + k] * prev[k * n + j]).sum();
                }
            }
            powers.push(next);
        }
        let c_pow = |m: &[f64], v: &[f64]| -> f64 { (0..n).map(|j| m[j] * v[j]).sum() };
        for t in 1..=16 {
            let mut f = c_pow(&powers[t], &x0);
            for k in 1..=t {
                f += c_pow(&powers[t - k], &s.b) * deltas[k - 1];
            }
            f += s.d * deltas[t - 1];
            assert!((f - got[t - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn equivalence_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let r = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let c = coeffs(&r(&mut rng, 4).iter().map(|v| v * 0.25).collect::<Vec<_>>(), &r(&mut rng, 4));
        let (f, d, deltas) = (r(&mut rng, 4), r(&mut rng, 4), r(&mut rng, 64));
        assert!(check_equivalence(&c, &f, &d, &deltas).unwrap() < 1e-9);

        let zero = coeffs(&[0.0, 0.0], &[0.0]);
        let deltas = [0.5, -1.0, 2.0];
        assert_eq!(arma_direct(&zero, &f, &d, &deltas).unwrap(), deltas.to_vec());
        let x0 = initial_state(&zero, &f, &d).unwrap();
        assert_eq!(ssm_unroll(&build_ssm(&zero), &x0, &deltas).unwrap(), deltas.to_vec());

        let copy = coeffs(&[1.0], &[0.0]);
        let f0 = [0.75];
        let out = ssm_unroll(&build_ssm(&copy), &initial_state(&copy, &f0, &[0.0]).unwrap(), &[0.0; 10]).unwrap();
        assert!(out.iter().all(|&v| v == 0.75));
        assert!(arma_direct(&copy, &f0, &[0.0], &[0.0; 10]).unwrap().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn feedthrough_variant_realizes_shifted_ma() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let phi: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let deltas: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lit = StateSpace::with_direct_feedthrough(&coeffs(&phi, &theta));
        let got = ssm_unroll(&lit, &[0.0; 6], &deltas).unwrap();
        let shifted: Vec<f64> = theta.iter().zip(&phi).map(|(t, p)| t - p).collect();
        let want = arma_direct(&coeffs(&phi, &shifted), &[0.0; 3], &[0.0; 3], &deltas).unwrap();
        let dev = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "{dev}");
        let plain = arma_direct(&coeffs(&phi, &theta), &[0.0; 3], &[0.0; 3], &deltas).unwrap();
        assert!(got.iter().zip(&plain).any(|(a, b)| (a - b).abs() > 1e-3));
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&[1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&[0.0, 0.0, 0.0]), 0.0);
        let quad = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((spectral_radius(&[0.5, 0.3]) - quad).abs() < 1e-12);
        assert!((spectral_radius(&[0.5, 0.3]) - 0.85208).abs() < 1e-5);
        let over = (0.8 + (0.64f64 + 2.0).sqrt()) / 2.0;
        assert!((spectral_radius(&[0.8, 0.5]) - over).abs() < 1e-12);
        assert!((spectral_radius(&[-1.0]) - 1.0).abs() < 1e-12);
        // A double root at 1 (Jordan block) is ill-conditioned: rounding in
        // the squarings limits the estimate to about sqrt-eps-level accuracy.
        assert!((spectral_radius(&[2.0, -1.0]) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sufficiency_examples() {
        assert!(stability_sufficient(&[0.6, 0.4]));
        assert!(!stability_sufficient(&[0.8, 0.5]));
        assert!(stability_sufficient(&[-1.0]));
        let r = StabilityReport::new(&[0.8, 0.5]);
        assert!(!r.stable && !r.sufficient_stable);
        assert!(StabilityReport::new(&[0.6, 0.4]).stable);
    }

    #[test]
    fn horizon_examples() {
        let h = |a: f64| propagation_horizon(&build_ssm(&coeffs(&[a], &[0.0])), 1e-16);
        assert_eq!(h(0.5), Horizon::Finite(54));
        let (a, b, c) = (h(0.5), h(0.9), h(0.99));
        match (a, b, c) {
            (Horizon::Finite(x), Horizon::Finite(y), Horizon::Finite(z)) => assert!(x < y && y < z),
            other => panic!("{other:?}"),
        }
        assert_eq!(h(1.0), Horizon::Infinite);
        assert_eq!(propagation_horizon(&build_ssm(&coeffs(&[0.8, 0.5], &[0.0])), 1e-16), Horizon::Infinite);
    }

    #[test]
    fn parse_sections() {
        let c = parse_coefficients("phi:\n0.5\n0.3\n# note\ntheta:\n0.2\n").unwrap();
        assert_eq!((c.phi, c.theta), (vec![0.5, 0.3], vec![0.2]));
        assert!(parse_coefficients("0.5\n").is_err());
        assert!(parse_coefficients("phi:\nabc\n").is_err());
        assert!(parse_coefficients("theta:\n0.1\n").is_err());
        let inline = parse_coefficients("phi: 0.5 0.3\ntheta: 0.2\n").unwrap();
        assert_eq!((inline.phi, inline.theta), (vec![0.5, 0.3], vec![0.2]));
    }
}
