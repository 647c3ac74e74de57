//! Variation-ratio parameters, the mechanism catalog, derivation from
//! explicit mechanism matrices and parallel composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::planar_laplace_tv;

/// Relative slack allowed when checking `beta <= (p - 1) / (p + 1)` and
/// similar closed-interval constraints evaluated in floating point.
const SLACK: f64 = 1e-12;

/// Ratio bound assigned to a mechanism whose inputs are indistinguishable.
pub const DEGENERATE_P: f64 = 1.0 + 1e-12;

/// The triple `(p, beta, q)` plus the number of blanket messages.
///
/// `p` may be `f64::INFINITY`. Downstream formulas only use `1/p`, `alpha`
/// and `p * alpha`, all of which stay finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationRatioParams {
    pub p: f64,
    pub beta: f64,
    pub q: f64,
    pub n_blanket: u64,
}

impl VariationRatioParams {
    pub fn new(p: f64, beta: f64, q: f64, n_blanket: u64) -> Result<Self> {
        validate_p_beta(p, beta)?;
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::domain(format!("q = {q} must be finite and >= 1")));
        }
        let out = Self { p, beta, q, n_blanket };
        if out.r() > 0.5 * (1.0 + SLACK) {
            return Err(Error::domain(format!(
                "r = p*beta/((p-1)*q) = {} exceeds 1/2",
                out.r()
            )));
        }
        Ok(out)
    }

    /// Same parameters for a population of `n` users (one message each).
    pub fn with_users(self, n: u64) -> Self {
        Self { n_blanket: n.saturating_sub(1), ..self }
    }

    /// Same parameters with `users * (messages - 1)` blanket messages.
    pub fn with_multi_message(self, users: u64, messages: u64) -> Self {
        Self { n_blanket: users * messages.saturating_sub(1), ..self }
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(self.p, beta, self.q, self.n_blanket)
    }

    pub fn inv_p(&self) -> f64 {
        1.0 / self.p
    }

    pub fn alpha(&self) -> f64 {
        alpha_of(self.p, self.beta)
    }

    pub fn p_alpha(&self) -> f64 {
        p_alpha_of(self.p, self.beta)
    }

    pub fn r(&self) -> f64 {
        self.p_alpha() / self.q
    }

    /// Total number of users, i.e. `n_blanket + 1`.
    pub fn n_users(&self) -> u64 {
        self.n_blanket + 1
    }

    pub fn log_p(&self) -> f64 {
        self.p.ln()
    }

    /// The same parameters viewed as an asymmetric pair with `q0 = q1 = q`.
    pub fn to_asymmetric(&self) -> AsymmetricParams {
        AsymmetricParams { p: self.p, beta: self.beta, q0: self.q, q1: self.q, n_blanket: self.n_blanket }
    }
}

fn validate_p_beta(p: f64, beta: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("p = {p} must exceed 1")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta = {beta} not in [0, 1]")));
    }
    if p.is_finite() {
        let cap = (p - 1.0) / (p + 1.0);
        if beta > cap * (1.0 + SLACK) {
            return Err(Error::domain(format!("beta = {beta} exceeds (p-1)/(p+1) = {cap}")));
        }
    }
    Ok(())
}

pub(crate) fn alpha_of(p: f64, beta: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        beta / (p - 1.0)
    }
}

pub(crate) fn p_alpha_of(p: f64, beta: f64) -> f64 {
    if p.is_infinite() {
        beta
    } else {
        beta / (1.0 - 1.0 / p)
    }
}

/// Parameters of the asymmetric pair used for lower bounds, with separate
/// blanket ratios for the two sides of the first user's output space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricParams {
    pub p: f64,
    pub beta: f64,
    pub q0: f64,
    pub q1: f64,
    pub n_blanket: u64,
}

impl AsymmetricParams {
    pub fn new(p: f64, beta: f64, q0: f64, q1: f64, n_blanket: u64) -> Result<Self> {
        validate_p_beta(p, beta)?;
        for (name, q) in [("q0", q0), ("q1", q1)] {
            if !(q >= 1.0) || !q.is_finite() {
                return Err(Error::domain(format!("{name} = {q} must be finite and >= 1")));
            }
        }
        let ratio = q0 / q1;
        if p.is_finite() && (ratio > p * (1.0 + SLACK) || ratio < (1.0 - SLACK) / p) {
            return Err(Error::domain(format!("q0/q1 = {ratio} not in [1/p, p] with p = {p}")));
        }
        let out = Self { p, beta, q0, q1, n_blanket };
        if out.r0() + out.r1() > 1.0 + SLACK {
            return Err(Error::domain(format!("r0 + r1 = {} exceeds 1", out.r0() + out.r1())));
        }
        Ok(out)
    }

    pub fn with_users(self, n: u64) -> Self {
        Self { n_blanket: n.saturating_sub(1), ..self }
    }

    pub fn alpha(&self) -> f64 {
        alpha_of(self.p, self.beta)
    }

    pub fn p_alpha(&self) -> f64 {
        p_alpha_of(self.p, self.beta)
    }

    pub fn r0(&self) -> f64 {
        self.p_alpha() / self.q0
    }

    pub fn r1(&self) -> f64 {
        self.p_alpha() / self.q1
    }

    pub fn n_users(&self) -> u64 {
        self.n_blanket + 1
    }
}

/// An explicit finite mechanism: one probability row per input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub blanket_rows: Option<Vec<Vec<f64>>>,
}

impl MechanismSpec {
    pub fn new(rows: Vec<Vec<f64>>, blanket_rows: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let spec = Self { rows, blanket_rows };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::domain("mechanism matrix has no rows"));
        }
        let width = self.rows[0].len();
        let all = self.rows.iter().chain(self.blanket_rows.iter().flatten());
        for (i, row) in all.enumerate() {
            if row.len() != width || width == 0 {
                return Err(Error::domain(format!("row {i} has {} entries, expected {width}", row.len())));
            }
            validate_distribution(row, &format!("row {i}"))?;
        }
        Ok(())
    }
}

fn validate_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Parameters derived from an explicit matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Derived {
    pub params: VariationRatioParams,
    /// Set when every pair of inputs induces the same output distribution.
    pub degenerate: bool,
}

/// Largest pointwise ratio `num[y] / den[y]`, with 0/0 treated as 1.
fn max_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter()
        .zip(den)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, _) => 1.0,
            (true, false) => f64::INFINITY,
            (true, true) => a / b,
        })
        .fold(1.0, f64::max)
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Computes `(p, beta, q)` of an explicit mechanism from first principles.
pub fn derive_variation_ratio(spec: &MechanismSpec) -> Result<Derived> {
    spec.validate()?;
    let rows = &spec.rows;
    let blanket = spec.blanket_rows.as_ref().unwrap_or(rows);
    let mut p = 1.0_f64;
    let mut beta = 0.0_f64;
    for (i, a) in rows.iter().enumerate() {
        for b in rows.iter().skip(i + 1) {
            p = p.max(max_ratio(a, b)).max(max_ratio(b, a));
            beta = beta.max(total_variation(a, b));
        }
    }
    let mut q = 1.0_f64;
    for a in rows {
        for b in blanket {
            q = q.max(max_ratio(a, b));
        }
    }
    if q.is_infinite() {
        return Err(Error::UnboundedRatio(
            "a blanket row assigns zero probability to an output the mechanism can produce".into(),
        ));
    }
    let degenerate = p <= 1.0 || beta == 0.0;
    if degenerate {
        return Ok(Derived { params: VariationRatioParams { p: DEGENERATE_P, beta: 0.0, q, n_blanket: 0 }, degenerate });
    }
    if p.is_finite() {
        beta = beta.min((p - 1.0) / (p + 1.0));
    }
    Ok(Derived { params: VariationRatioParams::new(p, beta, q, 0)?, degenerate })
}

/// Asymmetric parameters derived for a lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedLower {
    pub params: AsymmetricParams,
    /// Index of the chosen blanket distribution among the candidates.
    pub blanket_index: usize,
    pub degenerate: bool,
}

/// Derives `(p, beta, q0, q1)` for the lower bound from the first user's two
/// output distributions and the candidate distributions of the other users.
///
/// The output space is split into the region where `dist1` exceeds `dist0`
/// and the region where it falls below. The blanket chosen is the one
/// maximizing the smaller of the two region-wise expected ratios.
pub fn derive_lower_params(dist0: &[f64], dist1: &[f64], candidates: &[Vec<f64>]) -> Result<DerivedLower> {
    if candidates.is_empty() {
        return Err(Error::domain("candidate blanket set is empty"));
    }
    let width = dist0.len();
    if dist1.len() != width || candidates.iter().any(|c| c.len() != width) {
        return Err(Error::domain("all distributions must share one output set"));
    }
    validate_distribution(dist0, "dist0")?;
    validate_distribution(dist1, "dist1")?;
    for (i, c) in candidates.iter().enumerate() {
        validate_distribution(c, &format!("candidate {i}"))?;
    }
    let up: Vec<bool> = dist1.iter().zip(dist0).map(|(a, b)| a > b).collect();
    let down: Vec<bool> = dist1.iter().zip(dist0).map(|(a, b)| a < b).collect();
    let masked = |v: &[f64], m: &[bool]| v.iter().zip(m).filter(|(_, &k)| k).map(|(x, _)| *x).sum::<f64>();
    let d1_up = masked(dist1, &up);
    let d0_up = masked(dist0, &up);
    let d0_down = masked(dist0, &down);
    let beta = d1_up - d0_up;
    if d1_up == 0.0 || beta <= 0.0 {
        let params = AsymmetricParams { p: DEGENERATE_P, beta: 0.0, q0: 1.0, q1: 1.0, n_blanket: 0 };
        return Ok(DerivedLower { params, blanket_index: 0, degenerate: true });
    }
    let p = if d0_up > 0.0 { d1_up / d0_up } else { f64::INFINITY };
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let c_up = masked(c, &up);
        let c_down = masked(c, &down);
        if c_up == 0.0 || c_down == 0.0 {
            return Err(Error::UnboundedRatio(format!("candidate {i} puts no mass on one of the two regions")));
        }
        let q1 = d1_up / c_up;
        let q0 = d0_down / c_down;
        let score = q0.min(q1);
        if best.is_none_or(|(s, ..)| score > s) {
            best = Some((score, i, q0, q1));
        }
    }
    let (_, idx, q0, q1) = best.expect("non-empty candidates");
    let beta = if p.is_finite() { beta.min((p - 1.0) / (p + 1.0)) } else { beta };
    let params = AsymmetricParams::new(p, beta, q0, q1, 0)?;
    Ok(DerivedLower { params, blanket_index: idx, degenerate: false })
}

/// Combines parameters of mechanisms chosen at random by each user.
///
/// All base mechanisms must share `p = q = e^{eps0}`; the result keeps that
/// ratio bound and averages the total variation bounds with `weights`.
pub fn parallel_compose(base: &[VariationRatioParams], weights: &[f64]) -> Result<VariationRatioParams> {
    if base.is_empty() || base.len() != weights.len() {
        return Err(Error::domain("need one weight per base mechanism"));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::domain("weights must be non-negative"));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("weights sum to {wsum}, not 1")));
    }
    let first = base[0];
    let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(first.p, first.q) {
        return Err(Error::domain("parallel composition requires p = q = e^eps0"));
    }
    for b in base {
        if !close(b.p, first.p) || !close(b.q, first.q) {
            return Err(Error::domain("parallel composition requires a common p and q"));
        }
        if b.n_blanket != first.n_blanket {
            return Err(Error::domain("parallel composition requires a common blanket size"));
        }
    }
    let beta = base.iter().zip(weights).map(|(b, w)| b.beta * w).sum::<f64>();
    VariationRatioParams::new(first.p, beta, first.q, first.n_blanket)
}

/// Named arguments accepted by catalog rows. Unused fields are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MechanismArgs {
    pub eps0: Option<f64>,
    pub d: Option<u64>,
    pub k: Option<u64>,
    pub l: Option<u64>,
    pub big_k: Option<u64>,
    pub s: Option<u64>,
    pub len: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub d01: Option<f64>,
    pub dmax: Option<f64>,
    pub b: Option<f64>,
    pub m: Option<f64>,
    pub big_f: Option<f64>,
    pub coin: Option<f64>,
    pub f: Option<f64>,
}

/// Rows of the mechanism catalog.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Mechanism {
    GeneralLdp { eps0: f64 },
    LaplaceUnit { eps0: f64 },
    Piecewise { eps0: f64 },
    Rr2 { eps0: f64 },
    Krr { eps0: f64, d: u64 },
    Rappor { eps0: f64, d: u64 },
    KSubset { eps0: f64, d: u64, k: u64 },
    LocalHash { eps0: f64, l: u64 },
    Hadamard { eps0: f64, big_k: u64, s: u64 },
    HadamardB { eps0: f64, big_k: u64, s: u64 },
    SamplingRappor { eps0: f64, d: u64, s: u64 },
    PckvGrr { eps0: f64, d: u64, s: u64 },
    Wheel { eps0: f64, d: u64, s: u64, len: f64 },
    SubsetExp { eps0: f64, d: u64, s: u64, k: u64 },
    Collision { eps0: f64, s: u64, l: u64 },
    Privkv { d: u64, s: u64, eps1: f64, eps2: f64 },
    Duchi { eps0: f64 },
    Harmony { eps0: f64 },
    MetricGeneral { d01: f64, dmax: f64 },
    MetricLaplace { d01: f64, dmax: f64 },
    MetricPlanarLaplace { d01: f64, dmax: f64 },
    Witchhat { b: f64, m: f64, big_f: f64, d01: f64, dmax: f64 },
    BalcerCoin { coin: f64 },
    BalcerUniform,
    Cheu { f: f64, d: u64 },
    BallsIntoBins { d: u64, s: u64 },
    Mixdump { f: f64, d: u64 },
}

/// Catalog identifiers, in table order.
pub const MECHANISM_IDS: &[&str] = &[
    "general-ldp",
    "laplace-unit",
    "piecewise",
    "rr2",
    "krr",
    "rappor",
    "k-subset",
    "local-hash",
    "hadamard",
    "hadamard-B",
    "sampling-rappor",
    "pckv-grr",
    "wheel",
    "subset-exp",
    "collision",
    "privkv",
    "duchi",
    "harmony",
    "metric-general",
    "metric-laplace",
    "metric-planar-laplace",
    "witchhat",
    "balcer-coin",
    "balcer-uniform",
    "cheu",
    "balls-into-bins",
    "mixdump",
];

fn need<T: Copy>(v: Option<T>, id: &str, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::domain(format!("{id} requires argument {name}")))
}

impl Mechanism {
    /// Builds a catalog row from its identifier and named arguments.
    pub fn from_id(id: &str, a: &MechanismArgs) -> Result<Self> {
        let eps0 = || need(a.eps0, id, "eps0");
        let d = || need(a.d, id, "d");
        let s = || need(a.s, id, "s");
        let m = match id {
            "general-ldp" => Mechanism::GeneralLdp { eps0: eps0()? },
            "laplace-unit" => Mechanism::LaplaceUnit { eps0: eps0()? },
            "piecewise" => Mechanism::Piecewise { eps0: eps0()? },
            "rr2" => Mechanism::Rr2 { eps0: eps0()? },
            "krr" => Mechanism::Krr { eps0: eps0()?, d: d()? },
            "rappor" => Mechanism::Rappor { eps0: eps0()?, d: a.d.unwrap_or(1) },
            "k-subset" => Mechanism::KSubset { eps0: eps0()?, d: d()?, k: need(a.k, id, "k")? },
            "local-hash" => Mechanism::LocalHash { eps0: eps0()?, l: need(a.l, id, "l")? },
            "hadamard" => Mechanism::Hadamard { eps0: eps0()?, big_k: need(a.big_k, id, "big_k")?, s: s()? },
            "hadamard-B" => Mechanism::HadamardB { eps0: eps0()?, big_k: need(a.big_k, id, "big_k")?, s: s()? },
            "sampling-rappor" => Mechanism::SamplingRappor { eps0: eps0()?, d: d()?, s: s()? },
            "pckv-grr" => Mechanism::PckvGrr { eps0: eps0()?, d: d()?, s: s()? },
            "wheel" => Mechanism::Wheel { eps0: eps0()?, d: d()?, s: s()?, len: need(a.len, id, "len")? },
            "subset-exp" => Mechanism::SubsetExp { eps0: eps0()?, d: d()?, s: s()?, k: need(a.k, id, "k")? },
            "collision" => Mechanism::Collision { eps0: eps0()?, s: s()?, l: need(a.l, id, "l")? },
            "privkv" => Mechanism::Privkv {
                d: d()?,
                s: s()?,
                eps1: need(a.eps1, id, "eps1")?,
                eps2: need(a.eps2, id, "eps2")?,
            },
            "duchi" => Mechanism::Duchi { eps0: eps0()? },
            "harmony" => Mechanism::Harmony { eps0: eps0()? },
            "metric-general" | "metric-laplace" | "metric-planar-laplace" => {
                let d01 = need(a.d01, id, "d01")?;
                let dmax = need(a.dmax, id, "dmax")?;
                match id {
                    "metric-general" => Mechanism::MetricGeneral { d01, dmax },
                    "metric-laplace" => Mechanism::MetricLaplace { d01, dmax },
                    _ => Mechanism::MetricPlanarLaplace { d01, dmax },
                }
            }
            "witchhat" => Mechanism::Witchhat {
                b: need(a.b, id, "b")?,
                m: need(a.m, id, "m")?,
                big_f: need(a.big_f, id, "big_f")?,
                d01: need(a.d01, id, "d01")?,
                dmax: need(a.dmax, id, "dmax")?,
            },
            "balcer-coin" => Mechanism::BalcerCoin { coin: need(a.coin, id, "coin")? },
            "balcer-uniform" => Mechanism::BalcerUniform,
            "cheu" => Mechanism::Cheu { f: need(a.f, id, "f")?, d: a.d.unwrap_or(2) },
            "balls-into-bins" => Mechanism::BallsIntoBins { d: d()?, s: s()? },
            "mixdump" => Mechanism::Mixdump { f: need(a.f, id, "f")?, d: d()? },
            other => return Err(Error::domain(format!("unknown mechanism id '{other}'"))),
        };
        Ok(m)
    }

    /// True for the multi-message protocol rows.
    pub fn is_multi_message(&self) -> bool {
        matches!(
            self,
            Mechanism::BalcerCoin { .. }
                | Mechanism::BalcerUniform
                | Mechanism::Cheu { .. }
                | Mechanism::BallsIntoBins { .. }
                | Mechanism::Mixdump { .. }
        )
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::domain(msg))
    }
}

fn check_eps(eps: f64, name: &str) -> Result<f64> {
    check(eps > 0.0 && eps.is_finite() && eps < 700.0, &format!("{name} must be in (0, 700)"))?;
    Ok(eps.exp())
}

/// C(n1, k) / C(n2, k) for n1 <= n2, zero when n1 < k.
fn binom_ratio(n1: u64, n2: u64, k: u64) -> f64 {
    if n1 < k {
        return 0.0;
    }
    (0..k).map(|i| (n1 - i) as f64 / (n2 - i) as f64).product()
}

/// Returns the `(p, beta, q)` of a catalog row, with `n_blanket = 0`.
///
/// Use [`VariationRatioParams::with_users`] or
/// [`VariationRatioParams::with_multi_message`] to set the population.
pub fn catalog(mech: &Mechanism) -> Result<VariationRatioParams> {
    use Mechanism::*;
    let ldp = |e: f64, beta: f64| (e, beta, e);
    let (p, beta, q) = match *mech {
        GeneralLdp { eps0 } | Rr2 { eps0 } | Duchi { eps0 } | Harmony { eps0 } => {
            let e = check_eps(eps0, "eps0")?;
            ldp(e, (e - 1.0) / (e + 1.0))
        }
        LaplaceUnit { eps0 } | Piecewise { eps0 } => {
            let e = check_eps(eps0, "eps0")?;
            ldp(e, -(-eps0 / 2.0).exp_m1())
        }
        Krr { eps0, d } => {
            let e = check_eps(eps0, "eps0")?;
            check(d >= 2, "krr requires d >= 2")?;
            ldp(e, (e - 1.0) / (e + d as f64 - 1.0))
        }
        Rappor { eps0, d } => {
            let e = check_eps(eps0, "eps0")?;
            check(d >= 1, "rappor requires d >= 1")?;
            let h = (eps0 / 2.0).exp();
            ldp(e, (h - 1.0) / (h + 1.0))
        }
        KSubset { eps0, d, k } => {
            let e = check_eps(eps0, "eps0")?;
            check(d >= 2 && k >= 1 && k < d, "k-subset requires 1 <= k < d")?;
            // Both binomials divided by C(d-1, k-1).
            let minus = (k - 1) as f64 / (d - 1) as f64;
            let plus = (d - k) as f64 / k as f64;
            ldp(e, (e - 1.0) * (1.0 - minus) / (e + plus))
        }
        LocalHash { eps0, l } => {
            let e = check_eps(eps0, "eps0")?;
            check(l >= 2, "local-hash requires l >= 2")?;
            ldp(e, (e - 1.0) / (e + l as f64 - 1.0))
        }
        Hadamard { eps0, big_k, s } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && s <= big_k, "hadamard requires 1 <= s <= K")?;
            let s = s as f64;
            ldp(e, s * (e - 1.0) / 2.0 / (s * e + big_k as f64 - s))
        }
        HadamardB { eps0, big_k, s } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && 2 * s <= big_k, "hadamard-B requires 1 <= s <= K/2")?;
            let s = s as f64;
            ldp(e, s * (e - 1.0) / (s * e + big_k as f64 - s))
        }
        SamplingRappor { eps0, d, s } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && s <= d, "sampling-rappor requires 1 <= s <= d")?;
            let h = (eps0 / 2.0).exp();
            ldp(e, s as f64 * (h - 1.0) / (d as f64 * (h + 1.0)))
        }
        PckvGrr { eps0, d, s } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && s <= d, "pckv-grr requires 1 <= s <= d")?;
            let s = s as f64;
            ldp(e, s * (e - 1.0) / (s * e + 2.0 * d as f64 - s))
        }
        Wheel { eps0, d, s, len } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && s <= d, "wheel requires 1 <= s <= d")?;
            let sp = s as f64 * len;
            check(sp > 0.0 && sp <= 0.5, "wheel requires 0 < s*len <= 1/2")?;
            ldp(e, sp * (e - 1.0) / (sp * e + (1.0 - sp)))
        }
        SubsetExp { eps0, d, s, k } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && k >= 1 && k + s <= d, "subset-exp requires s, k >= 1 and k + s <= d")?;
            // Binomials divided by C(d, k).
            let c1 = binom_ratio(d - s, d, k);
            let c2 = if d >= 2 * s { binom_ratio(d - 2 * s, d, k) } else { 0.0 };
            ldp(e, (e - 1.0) * (c1 - c2) / (e * (1.0 - c1) + c1))
        }
        Collision { eps0, s, l } => {
            let e = check_eps(eps0, "eps0")?;
            check(s >= 1 && s < l, "collision requires 1 <= s < l")?;
            let (sf, lf) = (s as f64, l as f64);
            ldp(e, sf.min(lf - sf) * (e - 1.0) / (sf * e + lf - sf))
        }
        Privkv { d, s, eps1, eps2 } => {
            let e1 = check_eps(eps1, "eps1")?;
            let e2 = check_eps(eps2, "eps2")?;
            check(s >= 1 && s <= d, "privkv requires 1 <= s <= d")?;
            let a = e1 * (e2 - 1.0) / (e2 + 1.0);
            let b = e1 - 1.0 + (e2 - 1.0) / (2.0 * (e2 + 1.0));
            let e = (eps1 + eps2).exp();
            // The row's expression can exceed the general cap when s is close
            // to d and eps is small; the cap holds for any e^eps ratio bound.
            let beta = 2.0 * s as f64 * a.max(b) / (d as f64 * (e1 + 1.0));
            ldp(e, beta.min((e - 1.0) / (e + 1.0)))
        }
        MetricGeneral { d01, dmax } | MetricLaplace { d01, dmax } | MetricPlanarLaplace { d01, dmax } => {
            let p = check_eps(d01, "d01")?;
            check(dmax >= d01 && dmax < 700.0, "metric rows require d01 <= dmax < 700")?;
            let beta = match *mech {
                MetricGeneral { .. } => (p - 1.0) / (p + 1.0),
                MetricLaplace { .. } => -(-d01 / 2.0).exp_m1(),
                _ => planar_laplace_tv(d01)?,
            };
            (p, beta, dmax.exp())
        }
        Witchhat { b, m, big_f, d01, dmax } => {
            let p = check_eps(d01, "d01")?;
            check(dmax >= d01 && dmax < 700.0, "witchhat requires d01 <= dmax < 700")?;
            check(b > 0.0 && m > 0.0 && big_f > 0.0, "witchhat requires B, m, F > 0")?;
            let beta = 2.0 * (m.exp() - (d01 / big_f).exp() + d01 / big_f - m) / (big_f * m.exp_m1() + 2.0 * b);
            check(beta >= 0.0, "witchhat requires d01/F <= m")?;
            (p, beta, dmax.exp())
        }
        BalcerCoin { coin } => {
            check(coin > 0.0 && coin < 1.0, "balcer-coin requires coin in (0, 1)")?;
            (f64::INFINITY, 1.0, (1.0 / coin).max(1.0 / (1.0 - coin)))
        }
        BalcerUniform => (f64::INFINITY, 1.0, 2.0),
        Cheu { f, d } => {
            check(f > 0.0 && f < 0.5, "cheu requires f in (0, 0.5)")?;
            check(d >= 1, "cheu requires d >= 1")?;
            let g = 1.0 - f;
            (g * g / (f * f), 1.0 - 2.0 * f, g / f)
        }
        BallsIntoBins { d, s } => {
            check(s >= 1 && 2 * s <= d, "balls-into-bins requires 1 <= s <= d/2")?;
            (f64::INFINITY, 1.0, d as f64 / s as f64)
        }
        Mixdump { f, d } => {
            check(d >= 2, "mixdump requires d >= 2")?;
            let dm1 = (d - 1) as f64;
            check(f > 0.0 && (1.0 - f) * dm1 > f, "mixdump requires f in (0, (d-1)/d)")?;
            ((1.0 - f) * dm1 / f, ((1.0 - f) * dm1 - f) / dm1, (1.0 - f) * d as f64)
        }
    };
    let beta = if p.is_finite() {
        let cap = (p - 1.0) / (p + 1.0);
        check(beta <= cap * (1.0 + SLACK), "beta exceeds (p-1)/(p+1) at these arguments")?;
        beta.min(cap)
    } else {
        beta
    };
    VariationRatioParams::new(p, beta, q, 0)
}

/// Total variation bound of a hierarchical range-query randomizer: each
/// user picks one of `levels` levels uniformly and reports with k-ary
/// randomized response over `d / 2^h` buckets.
pub fn hierarchical_krr_beta(eps0: f64, d: u64, levels: u32) -> f64 {
    let e = eps0.exp();
    (0..levels).map(|h| (e - 1.0) / (e + d as f64 / 2f64.powi(h as i32) - 1.0)).sum::<f64>() / levels as f64
}
