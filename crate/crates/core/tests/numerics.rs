use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, One, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vrshuffle::numerics::{
    binom_cdf_range, binom_pmf, planar_laplace_tv, stable_sum, LogProb, NeumaierSum,
};

/// Exact binomial masses for a rational success probability.
fn exact_pmf(c: u64, s: &BigRational) -> Vec<BigRational> {
    let one = BigRational::one();
    let f = &one - s;
    let mut out = Vec::with_capacity(c as usize + 1);
    let mut binom = BigInt::one();
    for k in 0..=c {
        if k > 0 {
            binom = binom * BigInt::from(c - k + 1) / BigInt::from(k);
        }
        let mut term = BigRational::from_integer(binom.clone());
        for _ in 0..k {
            term *= s;
        }
        for _ in 0..(c - k) {
            term *= &f;
        }
        out.push(term);
    }
    out
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn pmf_matches_exact_rationals() {
    let s = BigRational::new(3.into(), 10.into());
    for c in [1u64, 2, 7, 30, 60] {
        let exact = exact_pmf(c, &s);
        for (k, e) in exact.iter().enumerate() {
            let want = e.to_f64().unwrap();
            let got = binom_pmf(c as i64, 0.3, k as i64).unwrap();
            assert!(rel_close(got, want, 1e-12), "c={c} k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn cdf_range_matches_exact_rationals() {
    let s = BigRational::new(3.into(), 10.into());
    let c = 60u64;
    let exact = exact_pmf(c, &s);
    for lo in [0usize, 5, 18, 30, 45] {
        for hi in [lo, lo + 3, 40, 60] {
            if hi < lo {
                continue;
            }
            let sum: BigRational = exact[lo..=hi].iter().fold(BigRational::zero(), |a, b| a + b);
            let want = sum.to_f64().unwrap();
            let got = binom_cdf_range(c as i64, 0.3, lo as i64, hi as i64).unwrap();
            assert!((got - want).abs() <= 1e-14, "[{lo},{hi}]: {got} vs {want}");
        }
    }
}

#[test]
fn small_cdf_example() {
    let v = binom_cdf_range(4, 0.5, 2, 4).unwrap();
    assert!((v - 11.0 / 16.0).abs() < 1e-15, "{v}");
    assert!((binom_cdf_range(4, 0.5, 0, 4).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(binom_cdf_range(4, 0.5, 5, 9).unwrap(), 0.0);
    assert_eq!(binom_pmf(0, 0.3, 0).unwrap(), 1.0);
    assert!((binom_pmf(2, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn pmf_small_success_probability() {
    let s = BigRational::new(1.into(), 100.into());
    let want = exact_pmf(100, &s)[3].to_f64().unwrap();
    let got = binom_pmf(100, 0.01, 3).unwrap();
    assert!(rel_close(got, want, 1e-12));
    assert!((got - 0.0609992).abs() < 5e-7);
}

#[test]
fn degenerate_success_probabilities() {
    assert_eq!(binom_pmf(10, 0.0, 0).unwrap(), 1.0);
    assert_eq!(binom_pmf(10, 0.0, 1).unwrap(), 0.0);
    assert_eq!(binom_pmf(10, 1.0, 10).unwrap(), 1.0);
    assert_eq!(binom_cdf_range(10, 1.0, 0, 9).unwrap(), 0.0);
    assert_eq!(binom_cdf_range(0, 0.4, 0, 0).unwrap(), 1.0);
}

#[test]
fn binomial_rejects_bad_input() {
    assert!(binom_pmf(-1, 0.5, 0).is_err());
    assert!(binom_pmf(5, 1.5, 0).is_err());
    assert!(binom_pmf(5, f64::NAN, 0).is_err());
    assert!(binom_cdf_range(5, -0.1, 0, 5).is_err());
}

#[test]
fn out_of_support_ranges() {
    assert_eq!(binom_cdf_range(10, 0.3, 7, 3).unwrap(), 0.0);
    assert_eq!(binom_cdf_range(10, 0.3, 11, 20).unwrap(), 0.0);
    assert_eq!(binom_pmf(10, 0.3, -1).unwrap(), 0.0);
    assert_eq!(binom_pmf(10, 0.3, 11).unwrap(), 0.0);
}

#[test]
fn large_population_mass_is_normalized() {
    for s in [0.0, 0.3, 0.5, 1.0] {
        let v = binom_cdf_range(1_000_000, s, 0, 1_000_000).unwrap();
        assert!((v - 1.0).abs() <= 1e-12, "s={s}: {v}");
    }
    let c = 1_000_000i64;
    let left = binom_cdf_range(c, 0.3, 0, 299_999).unwrap();
    let right = binom_cdf_range(c, 0.3, 300_000, c).unwrap();
    assert!((left + right - 1.0).abs() <= 1e-12);
}

/// Exact sum of finite doubles in fixed point, scaled by 2^SHIFT.
fn exact_sum(terms: &[f64]) -> f64 {
    const SHIFT: i32 = 200;
    let mut acc = BigInt::zero();
    for &t in terms {
        let (mant, exp, sign) = t.integer_decode();
        let v = BigInt::from(mant) << ((exp as i32 + SHIFT) as usize);
        if sign < 0 {
            acc -= v;
        } else {
            acc += v;
        }
    }
    let denom = BigInt::one() << (SHIFT as usize);
    BigRational::new(acc, denom).to_f64().unwrap()
}

fn cancelling_terms(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len + 1);
    for _ in 0..len {
        let mag = 10f64.powf(rng.gen_range(-8.0..8.0));
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        out.push(sign * mag);
    }
    // Ensure the result is well away from zero relative to the terms.
    out.push(1.0);
    out
}

#[test]
fn stable_sum_against_exact_oracle() {
    for seed in 0..3 {
        let terms = cancelling_terms(seed, 1_000_000);
        let want = exact_sum(&terms);
        let got = stable_sum(&terms);
        assert!(rel_close(got, want, 1e-13), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn stable_sum_is_chunking_independent() {
    let terms = cancelling_terms(11, 200_000);
    let whole = stable_sum(&terms);
    for chunk in [1usize, 7, 512, 4096, 65_536] {
        let mut total = NeumaierSum::new();
        for part in terms.chunks(chunk) {
            let mut s = NeumaierSum::new();
            for &t in part {
                s.add(t);
            }
            total.merge(&s);
        }
        assert!(rel_close(total.value(), whole, 1e-13), "chunk {chunk}");
    }
}

#[test]
fn naive_sum_loses_what_compensated_sum_keeps() {
    let terms = [1e16, 1.0, -1e16, 1.0];
    assert_eq!(stable_sum(&terms), 2.0);
}

#[test]
fn log_prob_round_trip() {
    let a = LogProb::from_prob(0.25).unwrap();
    let b = LogProb::from_prob(0.5).unwrap();
    assert!((a.add(b).exp() - 0.75).abs() < 1e-15);
    assert!((a.mul(b).exp() - 0.125).abs() < 1e-15);
    assert!(LogProb::from_prob(1.5).is_err());
    assert!(LogProb::new(0.1).is_err());
}

// Reference values computed with a 50-digit quadrature of the strip integral.
#[test]
fn planar_tv_reference_values() {
    let cases = [
        (0.5, 0.155259913206286757),
        (1.0, 0.295960066487995138),
        (2.0, 0.522973854961359124),
        (5.0, 0.866124361455192713),
    ];
    for (d, want) in cases {
        let got = planar_laplace_tv(d).unwrap();
        assert!((got - want).abs() <= 1e-10, "d={d}: {got} vs {want}");
    }
}

#[test]
fn planar_tv_edges() {
    assert_eq!(planar_laplace_tv(0.0).unwrap(), 0.0);
    let far = planar_laplace_tv(50.0).unwrap();
    assert!((0.999..=1.0).contains(&far));
    assert!(planar_laplace_tv(-1.0).is_err());
    assert!(planar_laplace_tv(f64::NAN).is_err());
}

/// Both densities are radially symmetric and decreasing, so the optimal set is
/// the half-plane nearer the first center. With the first center at the origin
/// the distance is P0[x < d/2] - P0[x > d/2].
#[test]
fn planar_tv_monte_carlo() {
    let d = 1.0;
    let samples = 10_000_000u64;
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut sum = 0.0f64;
    for _ in 0..samples {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = 1.0 - rng.gen::<f64>();
        let radius = -(u1 * u2).ln();
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let x = radius * theta.cos();
        sum += if x < d / 2.0 { 1.0 } else { -1.0 };
    }
    let n = samples as f64;
    let mean = sum / n;
    let se = ((1.0 - mean * mean) / n).sqrt();
    let want = planar_laplace_tv(d).unwrap();
    assert!((mean - want).abs() <= 3.0 * se, "mc {mean} vs {want}, se {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_support_is_one(c in 0i64..1_000_000, s in 0.0f64..=1.0) {
        let v = binom_cdf_range(c, s, 0, c).unwrap();
        prop_assert!((v - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pmf_sums_to_one(c in 0i64..10_000, s in 0.0f64..=1.0) {
        let terms: Vec<f64> = (0..=c).map(|k| binom_pmf(c, s, k).unwrap()).collect();
        prop_assert!((stable_sum(&terms) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reflection_symmetry(c in 0i64..100_000, s in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo = (lo * c as f64) as i64;
        let hi = (hi * c as f64) as i64;
        let x = binom_cdf_range(c, s, lo, hi).unwrap();
        let y = binom_cdf_range(c, 1.0 - s, c - hi, c - lo).unwrap();
        prop_assert!((x - y).abs() <= 1e-12);
    }

    #[test]
    fn range_monotone_in_endpoints(c in 1i64..100_000, s in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo = (lo * c as f64) as i64;
        let hi = (hi * c as f64) as i64;
        let base = binom_cdf_range(c, s, lo, hi).unwrap();
        let wider_hi = binom_cdf_range(c, s, lo, hi + 1).unwrap();
        let wider_lo = binom_cdf_range(c, s, lo - 1, hi).unwrap();
        prop_assert!(wider_hi >= base - 1e-15);
        prop_assert!(wider_lo >= base - 1e-15);
    }

    #[test]
    fn planar_tv_monotone(a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let x = planar_laplace_tv(lo).unwrap();
        let y = planar_laplace_tv(hi).unwrap();
        prop_assert!(x <= y + 1e-12);
        prop_assert!((0.0..=1.0).contains(&x));
    }
}
