//! Numerically stable primitives: log-space binomial masses, binomial tails
//! via the regularized incomplete beta function, compensated summation and
//! the planar-Laplace total variation.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// A probability stored as its natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value > 0.0 {
            return Err(Error::domain(format!("log-probability {value} not in [-inf, 0]")));
        }
        Ok(LogProb(value))
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability {p} not in [0, 1]")));
        }
        Ok(LogProb(p.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    /// log(exp(a) + exp(b)), saturating at zero.
    pub fn add(self, other: LogProb) -> LogProb {
        LogProb(log_add_exp(self.0, other.0).min(0.0))
    }

    pub fn mul(self, other: LogProb) -> LogProb {
        LogProb(self.0 + other.0)
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one, keeping both error terms.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated summation of `terms`.
pub fn stable_sum(terms: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for &t in terms {
        acc.add(t);
    }
    acc.value()
}

fn check_binomial_args(c: i64, s: f64) -> Result<()> {
    if c < 0 {
        return Err(Error::domain(format!("trial count {c} is negative")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("success probability {s} not in [0, 1]")));
    }
    Ok(())
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// stirlerr(n) = ln(n!) - (n + 1/2) ln(n) + n - ln(sqrt(2 pi)) for n = 0..=15.
static STIRLERR_SMALL: LazyLock<[f64; 16]> = LazyLock::new(|| {
    let mut table = [0.0; 16];
    let mut fact = 1.0_f64;
    for (n, slot) in table.iter_mut().enumerate().skip(1) {
        fact *= n as f64;
        let nf = n as f64;
        *slot = fact.ln() - (nf + 0.5) * nf.ln() + nf - LN_SQRT_2PI;
    }
    table
});

/// Error of Stirling's approximation to ln(n!), for integer-valued `n >= 1`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return STIRLERR_SMALL[n as usize];
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term x ln(x / np) + np - x, accurate when x is close to np.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        let mut j = 1;
        loop {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1;
            if j > 1000 {
                return s;
            }
        }
    }
    x * (x / np).ln() + np - x
}

/// ln P[Binomial(c, s) = k] using the saddle-point expansion, which keeps
/// full relative accuracy for trial counts far beyond 10^8.
pub(crate) fn ln_binom_pmf_raw(c: u64, s: f64, k: i64) -> f64 {
    if k < 0 || k as u64 > c {
        return f64::NEG_INFINITY;
    }
    let k = k as u64;
    if s == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if s == 1.0 {
        return if k == c { 0.0 } else { f64::NEG_INFINITY };
    }
    let cf = c as f64;
    if k == 0 {
        return cf * (-s).ln_1p();
    }
    if k == c {
        return cf * s.ln();
    }
    let kf = k as f64;
    let rest = cf - kf;
    let lc = stirlerr(cf) - stirlerr(kf) - stirlerr(rest) - bd0(kf, cf * s) - bd0(rest, cf * (1.0 - s));
    let lf = (2.0 * PI).ln() + kf.ln() + (-kf / cf).ln_1p();
    lc - 0.5 * lf
}

#[inline]
pub(crate) fn binom_pmf_raw(c: u64, s: f64, k: i64) -> f64 {
    ln_binom_pmf_raw(c, s, k).exp()
}

/// Exact binomial mass P[Binomial(c, s) = k], evaluated in the log domain.
pub fn binom_pmf(c: i64, s: f64, k: i64) -> Result<f64> {
    check_binomial_args(c, s)?;
    Ok(binom_pmf_raw(c as u64, s, k))
}

/// Log of the binomial mass.
pub fn ln_binom_pmf(c: i64, s: f64, k: i64) -> Result<LogProb> {
    check_binomial_args(c, s)?;
    Ok(LogProb(ln_binom_pmf_raw(c as u64, s, k)))
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 4e-16;
    let max_iter = 200 + (20.0 * (a + b).sqrt()) as usize;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Both tails at threshold `k`: (P[X >= k], P[X < k]) for X ~ Binomial(c, s).
///
/// The smaller tail is computed directly as I_s(k, c-k+1) or its mirror, so
/// it carries relative accuracy; the other is its complement.
pub(crate) fn binom_tails(c: u64, s: f64, k: i64) -> (f64, f64) {
    if k <= 0 {
        return (1.0, 0.0);
    }
    if k as u64 > c {
        return (0.0, 1.0);
    }
    if s == 0.0 {
        return (0.0, 1.0);
    }
    if s == 1.0 {
        return (1.0, 0.0);
    }
    let a = k as f64;
    let b = (c - k as u64) as f64 + 1.0;
    if s < (a + 1.0) / (a + b + 2.0) {
        // I_s(k, c-k+1), whose prefactor equals P[X = k] (1 - s).
        let upper = binom_pmf_raw(c, s, k) * (1.0 - s) * betacf(a, b, s);
        let upper = upper.clamp(0.0, 1.0);
        (upper, 1.0 - upper)
    } else {
        // P[X < k] = I_{1-s}(c-k+1, k), prefactor P[X = k-1] s.
        let lower = binom_pmf_raw(c, s, k - 1) * s * betacf(b, a, 1.0 - s);
        let lower = lower.clamp(0.0, 1.0);
        (1.0 - lower, lower)
    }
}

/// P[X >= k] for X ~ Binomial(c, s).
#[inline]
pub(crate) fn binom_upper_tail(c: u64, s: f64, k: i64) -> f64 {
    binom_tails(c, s, k).0
}

/// P[lo <= X <= hi] for X ~ Binomial(c, s), bounds clamped to [0, c].
pub fn binom_cdf_range(c: i64, s: f64, lo: i64, hi: i64) -> Result<f64> {
    check_binomial_args(c, s)?;
    let lo = lo.max(0);
    let hi = hi.min(c);
    if lo > hi {
        return Ok(0.0);
    }
    let cu = c as u64;
    let (up_lo, low_lo) = binom_tails(cu, s, lo);
    let (up_hi, low_hi) = binom_tails(cu, s, hi + 1);
    let mean = c as f64 * s;
    let v = if lo as f64 > mean {
        up_lo - up_hi
    } else if (hi as f64) < mean {
        low_hi - low_lo
    } else {
        1.0 - low_lo - up_hi
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Total variation between two unit planar-Laplace densities whose centers
/// are `d01` apart.
///
/// The strip integral is written in polar coordinates around the density
/// center, where the radial part integrates in closed form and the angular
/// integrand is smooth.
pub fn planar_laplace_tv(d01: f64) -> Result<f64> {
    if d01.is_nan() || d01 < 0.0 {
        return Err(Error::domain(format!("distance {d01} must be non-negative")));
    }
    if d01 == 0.0 {
        return Ok(0.0);
    }
    let a = 0.5 * d01;
    let f = |phi: f64| {
        let cphi = phi.cos();
        if cphi <= 0.0 {
            return 1.0;
        }
        let rad = a / cphi;
        if rad > 745.0 {
            return 1.0;
        }
        // 1 - (1 + R) e^{-R}, written to avoid cancellation at small R.
        -((-rad).exp_m1()) - rad * (-rad).exp()
    };
    let integral = adaptive_simpson(&f, 0.0, FRAC_PI_2, 1e-15, 60);
    Ok((2.0 / PI * integral).clamp(0.0, 1.0))
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        assert_eq!(binom_cdf_range(4, 0.5, 0, 4).unwrap(), 1.0);
        assert_eq!(binom_cdf_range(4, 0.5, 5, 9).unwrap(), 0.0);
        assert!((binom_cdf_range(4, 0.5, 2, 4).unwrap() - 11.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(binom_pmf(0, 0.3, 0).unwrap(), 1.0);
        assert!((binom_pmf(2, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(binom_cdf_range(-1, 0.5, 0, 1).is_err());
        assert!(binom_pmf(3, 1.5, 1).is_err());
        assert!(planar_laplace_tv(-1.0).is_err());
        assert!(LogProb::new(0.1).is_err());
    }

    #[test]
    fn stirlerr_matches_direct_definition() {
        // Continuity at the table/series switch.
        let direct16 = (1..=16).map(|k| (k as f64).ln()).sum::<f64>() - 16.5 * 16f64.ln() + 16.0 - LN_SQRT_2PI;
        assert!((stirlerr(16.0) - direct16).abs() < 1e-14);
    }

    #[test]
    fn planar_tv_endpoints() {
        assert_eq!(planar_laplace_tv(0.0).unwrap(), 0.0);
        let v = planar_laplace_tv(50.0).unwrap();
        assert!((0.999..=1.0).contains(&v));
    }

    #[test]
    fn empty_sum_and_cancellation() {
        assert_eq!(stable_sum(&[]), 0.0);
        assert_eq!(stable_sum(&[1.0, -1.0]), 0.0);
        assert_eq!(stable_sum(&[1e100, 1.0, -1e100]), 1.0);
    }
}
