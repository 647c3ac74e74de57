//! Hockey-stick divergence of the dominating pair.
//!
//! For a first user with parameters `(p, beta)` and blanket ratios `q0, q1`,
//! the shuffled output is dominated by the pair
//!
//! ```text
//! P = (A + D1, C - A + D2),   Q = (A + D2, C - A + D1)
//! C ~ Bin(n - 1, r0 + r1),    A | C ~ Bin(C, r0 / (r0 + r1))
//! (D1, D2) = (1, 0) w.p. p*alpha, (0, 1) w.p. alpha, (0, 0) otherwise
//! ```
//!
//! With `a + b` fixed the likelihood ratio `P/Q` is monotone in `a`, so the
//! divergence is an expectation over `c` of three binomial tails. The fast
//! path evaluates that expectation; [`brute_force_delta`] enumerates every
//! outcome and serves as the reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{binom_pmf_raw, binom_tails, binom_upper_tail, NeumaierSum};
use crate::params::{AsymmetricParams, VariationRatioParams};

/// Default mass below which tails of the blanket count are skipped.
pub const DEFAULT_TRUNC_DELTA: f64 = 1e-18;

/// Largest blanket count accepted by the enumeration oracle.
pub const BRUTE_FORCE_MAX_N: u64 = 5000;

/// Rest mass `1 - alpha - p*alpha` below this is treated as zero.
const REST_EPS: f64 = 1e-12;

/// Number of consecutive blanket counts processed from one tail anchor.
const BLOCK: u64 = 512;

/// A tail walker re-anchors instead of stepping when its threshold jumps
/// further than this.
const MAX_STEP: i64 = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// D(P || Q)
    Forward,
    /// D(Q || P)
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceOptions {
    /// Skip blanket counts whose combined binomial mass is below this value,
    /// adding an upper bound of their contribution to the result. Zero
    /// disables truncation.
    pub trunc_delta: f64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        Self { trunc_delta: DEFAULT_TRUNC_DELTA }
    }
}

/// D_{e^eps}(P || Q) for symmetric parameters.
pub fn delta_forward(eps: f64, params: &VariationRatioParams) -> Result<f64> {
    delta_symmetric(eps, params, Direction::Forward, &DivergenceOptions::default())
}

/// D_{e^eps}(Q || P) for symmetric parameters.
pub fn delta_backward(eps: f64, params: &VariationRatioParams) -> Result<f64> {
    delta_symmetric(eps, params, Direction::Backward, &DivergenceOptions::default())
}

pub fn delta_symmetric(
    eps: f64,
    params: &VariationRatioParams,
    direction: Direction,
    opts: &DivergenceOptions,
) -> Result<f64> {
    if params.beta > 0.0 && params.r() >= 0.5 {
        return Err(Error::UnsupportedRegime(format!(
            "r = {} reaches 1/2; the expectation form divides by 1 - 2r, use the brute-force oracle",
            params.r()
        )));
    }
    Engine::new(&params.to_asymmetric())?.delta(eps, direction, opts)
}

/// Divergence of the asymmetric pair.
pub fn delta_asymmetric(eps: f64, params: &AsymmetricParams, direction: Direction) -> Result<f64> {
    delta_asymmetric_with(eps, params, direction, &DivergenceOptions::default())
}

pub fn delta_asymmetric_with(
    eps: f64,
    params: &AsymmetricParams,
    direction: Direction,
    opts: &DivergenceOptions,
) -> Result<f64> {
    let ratio = params.q0 / params.q1;
    if params.p.is_finite() && (ratio > params.p * (1.0 + 1e-12) || ratio * params.p < 1.0 - 1e-12) {
        return Err(Error::domain(format!("q0/q1 = {ratio} not in [1/p, p]")));
    }
    // With no blanket-only mass left the f-term vanishes and r0 + r1 = 1 is fine.
    let rest = 1.0 - params.alpha() - params.p_alpha();
    if params.beta > 0.0 && params.r0() + params.r1() >= 1.0 && rest > REST_EPS {
        return Err(Error::UnsupportedRegime(format!(
            "r0 + r1 = {} reaches 1, use the brute-force oracle",
            params.r0() + params.r1()
        )));
    }
    Engine::new(params)?.delta(eps, direction, opts)
}

struct Engine {
    alpha: f64,
    p_alpha: f64,
    inv_p: f64,
    q0: f64,
    q1: f64,
    /// Number of users, n_blanket + 1.
    n: f64,
    n_blanket: u64,
    r_sum: f64,
    s_in: f64,
    /// (1 - alpha - p*alpha) / (1 - r0 - r1)
    g: f64,
    beta: f64,
}

impl Engine {
    fn new(p: &AsymmetricParams) -> Result<Self> {
        let alpha = p.alpha();
        let p_alpha = p.p_alpha();
        let r_sum = (p.r0() + p.r1()).min(1.0);
        let rest = (1.0 - alpha - p_alpha).max(0.0);
        Ok(Self {
            alpha,
            p_alpha,
            inv_p: 1.0 / p.p,
            q0: p.q0,
            q1: p.q1,
            n: p.n_users() as f64,
            n_blanket: p.n_blanket,
            r_sum,
            s_in: if r_sum > 0.0 { p.r0() / r_sum } else { 0.5 },
            g: if rest <= REST_EPS { 0.0 } else { rest / (1.0 - r_sum) },
            beta: p.beta,
        })
    }

    /// Threshold on `a` (with `a + b = s`) beyond which P/Q exceeds `e`.
    #[inline]
    fn threshold(&self, s: f64, e: f64) -> f64 {
        let num = (e - self.inv_p) * self.q1 * s + (e - 1.0) * self.g * (self.n - s);
        let den = self.q0 - self.q1 * self.inv_p + e * (self.q1 - self.q0 * self.inv_p);
        num / den
    }

    fn delta(&self, eps: f64, direction: Direction, opts: &DivergenceOptions) -> Result<f64> {
        if eps.is_nan() {
            return Err(Error::domain("eps is NaN"));
        }
        if self.beta == 0.0 || eps == f64::INFINITY {
            return Ok(0.0);
        }
        let e = eps.exp();
        let (a, pa) = (self.alpha, self.p_alpha);
        let rest = (1.0 - a - pa).max(0.0);
        // Coefficients of the three tails: the first user's message is the
        // a-marked one, the b-marked one, or a blanket message.
        let coefs = match direction {
            Direction::Forward => [pa - e * a, a - e * pa, (1.0 - e) * rest],
            Direction::Backward => [a - e * pa, pa - e * a, (1.0 - e) * rest],
        };
        let max_slice = coefs.iter().map(|c| c.max(0.0)).sum::<f64>();

        let (c_lo, c_hi, skipped) = self.blanket_range(opts.trunc_delta);
        let blocks: Vec<(u64, u64)> = (c_lo..=c_hi)
            .step_by(BLOCK as usize)
            .map(|start| (start, (start + BLOCK - 1).min(c_hi)))
            .collect();
        let partials: Vec<NeumaierSum> = blocks
            .par_iter()
            .map(|&(start, end)| self.block_sum(start, end, e, direction, &coefs))
            .collect();
        let mut total = NeumaierSum::new();
        for part in &partials {
            total.merge(part);
        }
        total.add(skipped * max_slice);
        Ok(total.value().clamp(0.0, 1.0))
    }

    /// Range of blanket counts to sum over and the mass left outside it.
    fn blanket_range(&self, trunc: f64) -> (u64, u64, f64) {
        let n = self.n_blanket;
        if !(trunc > 0.0) || n < 64 {
            return (0, n, 0.0);
        }
        let r = self.r_sum;
        let half = 0.5 * trunc;
        let mean = (n as f64 * r).floor() as u64;
        // Largest c_lo with P[C < c_lo] <= half.
        let (mut lo, mut hi) = (0u64, mean.min(n));
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if binom_tails(n, r, mid as i64).1 <= half {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let c_lo = lo;
        // Smallest c_hi with P[C > c_hi] <= half.
        let (mut lo, mut hi) = (mean.min(n), n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if binom_upper_tail(n, r, mid as i64 + 1) <= half {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let c_hi = lo.max(c_lo);
        let skipped = binom_tails(n, r, c_lo as i64).1 + binom_upper_tail(n, r, c_hi as i64 + 1);
        (c_lo, c_hi, skipped)
    }

    fn block_sum(&self, start: u64, end: u64, e: f64, direction: Direction, coefs: &[f64; 3]) -> NeumaierSum {
        let mut acc = NeumaierSum::new();
        // Thresholds on A for the `c + 1` terms and the `c` term, expressed as
        // upper tails of a walker with success probability `s`.
        let (s, e_thr) = match direction {
            Direction::Forward => (self.s_in, e),
            Direction::Backward => (1.0 - self.s_in, 1.0 / e),
        };
        let k_for = |c: u64, total: u64| -> i64 {
            let t = self.threshold(total as f64, e_thr);
            let cap = c as f64 + 2.0;
            match direction {
                Direction::Forward => t.ceil().clamp(-2.0, cap) as i64,
                Direction::Backward => c as i64 - t.floor().clamp(-2.0, cap) as i64,
            }
        };
        let mut next = TailWalker::anchored(start, s, k_for(start, start + 1));
        let mut same = TailWalker::anchored(start, s, k_for(start, start));
        let mut c = start;
        loop {
            let k_next = k_for(c, c + 1);
            let k_same = k_for(c, c);
            next.seek(k_next);
            same.seek(k_same);
            let t2 = next.tail();
            // Neighbouring threshold for the first term.
            let k1 = match direction {
                Direction::Forward => k_next - 1,
                Direction::Backward => k_next + 1,
            };
            let t1 = if k1 <= 0 {
                1.0
            } else if k1 as u64 > c {
                0.0
            } else {
                match direction {
                    Direction::Forward => t2 + binom_pmf_raw(c, s, k1),
                    Direction::Backward => t2 - binom_pmf_raw(c, s, k_next),
                }
                .clamp(0.0, 1.0)
            };
            let t3 = same.tail();
            let w = binom_pmf_raw(self.n_blanket, self.r_sum, c as i64);
            acc.add(w * (coefs[0] * t1 + coefs[1] * t2 + coefs[2] * t3));
            if c == end {
                break;
            }
            next.step();
            same.step();
            c += 1;
        }
        acc
    }
}

/// Tracks P[Bin(c, s) >= k] while `c` and `k` move in small steps.
struct TailWalker {
    c: u64,
    s: f64,
    k: i64,
    tail: f64,
}

impl TailWalker {
    fn anchored(c: u64, s: f64, k: i64) -> Self {
        let k = k.clamp(0, c as i64 + 1);
        Self { c, s, k, tail: binom_upper_tail(c, s, k) }
    }

    fn seek(&mut self, k: i64) {
        let k = k.clamp(0, self.c as i64 + 1);
        if (k - self.k).abs() > MAX_STEP {
            *self = Self::anchored(self.c, self.s, k);
            return;
        }
        while self.k < k {
            self.tail -= binom_pmf_raw(self.c, self.s, self.k);
            self.k += 1;
        }
        while self.k > k {
            self.k -= 1;
            self.tail += binom_pmf_raw(self.c, self.s, self.k);
        }
    }

    /// Adds one trial: P[X' >= k] = P[X >= k] + s P[X = k - 1].
    fn step(&mut self) {
        self.tail += self.s * binom_pmf_raw(self.c, self.s, self.k - 1);
        self.c += 1;
    }

    fn tail(&self) -> f64 {
        self.tail.clamp(0.0, 1.0)
    }
}

/// Direction of the subsampled mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsampleDirection {
    /// D((1 - gamma) Q + gamma P || Q), the branch used for eps >= 0.
    Add,
    /// D(P || (1 - gamma) P + gamma Q), the branch used for eps < 0.
    Remove,
}

/// Divergence of a subsampled mixture, expressed through `delta_forward`.
pub fn subsample_delta(
    eps: f64,
    params: &VariationRatioParams,
    gamma: f64,
    direction: SubsampleDirection,
) -> Result<f64> {
    subsample_delta_with(eps, params, gamma, direction, &DivergenceOptions::default())
}

pub fn subsample_delta_with(
    eps: f64,
    params: &VariationRatioParams,
    gamma: f64,
    direction: SubsampleDirection,
    opts: &DivergenceOptions,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} not in (0, 1]")));
    }
    let fwd = |t: f64| delta_symmetric(t, params, Direction::Forward, opts);
    if gamma == 1.0 {
        return fwd(eps);
    }
    let x = eps.exp();
    match direction {
        SubsampleDirection::Add => {
            let shifted = x + gamma - 1.0;
            if shifted < 0.0 {
                // The mixture dominates e^eps Q everywhere.
                return Ok(1.0 - x);
            }
            if shifted == 0.0 {
                return Ok(gamma);
            }
            Ok(gamma * fwd((shifted / gamma).ln())?)
        }
        SubsampleDirection::Remove => {
            let scale = 1.0 - x * (1.0 - gamma);
            if scale <= 0.0 {
                return Ok(0.0);
            }
            Ok(scale * fwd((x * gamma / scale).ln())?)
        }
    }
}

/// Privacy curve of the subsampled mechanism: the `Add` branch for
/// `eps >= 0` and the `Remove` branch below zero.
pub fn subsampled_curve_delta(eps: f64, params: &VariationRatioParams, gamma: f64, opts: &DivergenceOptions) -> Result<f64> {
    let dir = if eps >= 0.0 { SubsampleDirection::Add } else { SubsampleDirection::Remove };
    subsample_delta_with(eps, params, gamma, dir, opts)
}

/// Enumerates both joint masses over all `(a, b)` with `a + b <= n`.
pub struct JointMasses {
    /// Row-major over `a` then `b`, indexed via [`JointMasses::index`].
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl JointMasses {
    pub fn index(n: u64, a: u64, b: u64) -> usize {
        // Rows a = 0..=n have n + 1 - a entries.
        let a = a as usize;
        let n = n as usize;
        a * (n + 1) - a * (a.saturating_sub(1)) / 2 + b as usize
    }

    pub fn build(params: &AsymmetricParams) -> Result<Self> {
        let nb = params.n_blanket;
        if nb > BRUTE_FORCE_MAX_N {
            return Err(Error::Size(format!("n_blanket = {nb} exceeds the oracle cap {BRUTE_FORCE_MAX_N}")));
        }
        let n = nb + 1;
        let r0 = params.r0();
        let r1 = params.r1();
        let t = (1.0 - r0 - r1).max(0.0);
        let alpha = params.alpha();
        let p_alpha = params.p_alpha();
        let rest = (1.0 - alpha - p_alpha).max(0.0);
        let mut lnfact = Vec::with_capacity(nb as usize + 1);
        let mut acc = NeumaierSum::new();
        lnfact.push(0.0);
        for k in 1..=nb {
            acc.add((k as f64).ln());
            lnfact.push(acc.value());
        }
        let xlny = |x: u64, y: f64| if x == 0 { 0.0 } else { x as f64 * y.ln() };
        // Mass of (i, j) blanket messages on the two marked sides.
        let blanket = |i: i64, j: i64| -> f64 {
            if i < 0 || j < 0 || (i + j) as u64 > nb {
                return 0.0;
            }
            let (i, j) = (i as u64, j as u64);
            let rest_count = nb - i - j;
            let lm = lnfact[nb as usize] - lnfact[i as usize] - lnfact[j as usize] - lnfact[rest_count as usize]
                + xlny(i, r0)
                + xlny(j, r1)
                + xlny(rest_count, t);
            lm.exp()
        };
        let size = JointMasses::index(n, n, 0) + 1;
        let mut pm = vec![0.0; size];
        let mut qm = vec![0.0; size];
        for a in 0..=n {
            for b in 0..=(n - a) {
                let (ai, bi) = (a as i64, b as i64);
                let m_a = blanket(ai - 1, bi);
                let m_b = blanket(ai, bi - 1);
                let m_0 = blanket(ai, bi);
                let idx = JointMasses::index(n, a, b);
                pm[idx] = p_alpha * m_a + alpha * m_b + rest * m_0;
                qm[idx] = alpha * m_a + p_alpha * m_b + rest * m_0;
            }
        }
        Ok(Self { p: pm, q: qm })
    }
}

impl JointMasses {
    /// Sum of `max(0, X - e^eps Y)` over all outcomes.
    pub fn hockey_stick(&self, eps: f64, direction: Direction) -> f64 {
        let e = eps.exp();
        let (x, y) = match direction {
            Direction::Forward => (&self.p, &self.q),
            Direction::Backward => (&self.q, &self.p),
        };
        let mut acc = NeumaierSum::new();
        for (&u, &v) in x.iter().zip(y) {
            let d = u - e * v;
            if d > 0.0 {
                acc.add(d);
            }
        }
        acc.value().clamp(0.0, 1.0)
    }
}

/// Exact divergence by enumerating every outcome of the pair.
pub fn brute_force_delta(eps: f64, params: impl Into<AsymmetricParams>, direction: Direction) -> Result<f64> {
    let params = params.into();
    if params.beta == 0.0 && eps >= 0.0 {
        return Ok(0.0);
    }
    Ok(JointMasses::build(&params)?.hockey_stick(eps, direction))
}

/// Exact divergence of a subsampled mixture by enumeration.
pub fn brute_force_subsample_delta(
    eps: f64,
    params: &VariationRatioParams,
    gamma: f64,
    direction: SubsampleDirection,
) -> Result<f64> {
    let jm = JointMasses::build(&params.to_asymmetric())?;
    let e = eps.exp();
    let mut acc = NeumaierSum::new();
    for (&u, &v) in jm.p.iter().zip(&jm.q) {
        let d = match direction {
            SubsampleDirection::Add => (1.0 - gamma) * v + gamma * u - e * v,
            SubsampleDirection::Remove => u - e * ((1.0 - gamma) * u + gamma * v),
        };
        if d > 0.0 {
            acc.add(d);
        }
    }
    Ok(acc.value().clamp(0.0, 1.0))
}

impl From<VariationRatioParams> for AsymmetricParams {
    fn from(p: VariationRatioParams) -> Self {
        p.to_asymmetric()
    }
}

impl From<&VariationRatioParams> for AsymmetricParams {
    fn from(p: &VariationRatioParams) -> Self {
        p.to_asymmetric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ldp(eps0: f64, n_blanket: u64) -> VariationRatioParams {
        let e = eps0.exp();
        VariationRatioParams::new(e, (e - 1.0) / (e + 1.0), e, n_blanket).unwrap()
    }

    #[test]
    fn zero_beta_is_zero() {
        let p = VariationRatioParams::new(2.0, 0.0, 2.0, 10).unwrap();
        assert_eq!(delta_forward(0.0, &p).unwrap(), 0.0);
        assert_eq!(delta_backward(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn vanishes_at_log_p() {
        let p = ldp(1.0, 1000);
        assert!(delta_forward(1.0, &p).unwrap() < 1e-15);
    }

    #[test]
    fn index_layout_is_dense() {
        let n = 7;
        let mut expected = 0;
        for a in 0..=n {
            for b in 0..=(n - a) {
                assert_eq!(JointMasses::index(n, a, b), expected);
                expected += 1;
            }
        }
    }

    #[test]
    fn small_case_matches_oracle() {
        let p = ldp(1.0, 9);
        let fast = delta_forward(0.5, &p).unwrap();
        let slow = brute_force_delta(0.5, p, Direction::Forward).unwrap();
        assert!((fast - slow).abs() < 1e-13, "{fast} vs {slow}");
    }

    #[test]
    fn r_half_rejected_by_fast_path() {
        let p = VariationRatioParams::new(f64::INFINITY, 1.0, 2.0, 10).unwrap();
        assert!(matches!(delta_forward(0.1, &p), Err(Error::UnsupportedRegime(_))));
        assert!(brute_force_delta(0.1, p, Direction::Forward).is_ok());
    }
}
