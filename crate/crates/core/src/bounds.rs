//! Converting divergences into (eps, delta) statements.
//!
//! The numerical bounds binary-search the threshold at which the larger of
//! the two directional divergences drops to the target delta. Closed forms
//! are cheap alternatives that only hold under their own preconditions.

use serde::{Deserialize, Serialize};

use crate::divergence::{
    delta_asymmetric_with, delta_symmetric, Direction, DivergenceOptions, JointMasses,
};
use crate::error::{Error, Result};
use crate::params::{AsymmetricParams, VariationRatioParams};

pub const DEFAULT_ITERS: u32 = 20;

/// Largest search cap tried when `p` is infinite. `e^eps` overflows a little
/// above 709, so the doubling stops at 512.
pub const MAX_INFINITE_CAP: f64 = 512.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRequest {
    pub params: VariationRatioParams,
    pub delta: f64,
    pub iters: u32,
    #[serde(default)]
    pub opts: DivergenceOptions,
}

impl BoundRequest {
    pub fn new(params: VariationRatioParams, delta: f64) -> Self {
        Self { params, delta, iters: DEFAULT_ITERS, opts: DivergenceOptions::default() }
    }

    pub fn with_iters(mut self, iters: u32) -> Self {
        self.iters = iters;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerMode {
    /// Return the largest threshold known to violate delta.
    Lower,
    /// Run the same search but report the conservative end.
    TightUpper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerRequest {
    pub params: AsymmetricParams,
    pub delta: f64,
    pub iters: u32,
    pub mode: LowerMode,
    #[serde(default)]
    pub opts: DivergenceOptions,
}

impl LowerRequest {
    pub fn new(params: AsymmetricParams, delta: f64) -> Self {
        Self { params, delta, iters: DEFAULT_ITERS, mode: LowerMode::Lower, opts: DivergenceOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Upper,
    Lower,
    TightUpper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub eps: f64,
    pub kind: BoundKind,
    /// Width of the final search bracket, `cap / 2^iters`.
    pub resolution: f64,
    pub cap: f64,
    /// Number of divergence evaluations, counting both directions as one.
    pub evaluations: u32,
}

fn check_request(delta: f64, iters: u32) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} not in (0, 1)")));
    }
    if iters == 0 {
        return Err(Error::domain("iters must be at least 1"));
    }
    Ok(())
}

struct Bracket {
    lo: f64,
    hi: f64,
    cap: f64,
    evaluations: u32,
}

/// Bisects `[0, cap]` for the smallest threshold with `max_delta <= delta`.
fn bisect(p: f64, delta: f64, iters: u32, mut max_delta: impl FnMut(f64) -> Result<f64>) -> Result<Bracket> {
    let mut evaluations = 0;
    let cap = if p.is_finite() {
        p.ln()
    } else {
        let mut cap = 1.0;
        loop {
            evaluations += 1;
            if max_delta(cap)? <= delta {
                break cap;
            }
            if cap >= MAX_INFINITE_CAP {
                return Err(Error::Range(format!(
                    "divergence still above {delta} at eps = {MAX_INFINITE_CAP}; no finite bound"
                )));
            }
            cap *= 2.0;
        }
    };
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if max_delta(mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket { lo, hi, cap, evaluations })
}

fn trivial(kind: BoundKind) -> BoundResult {
    BoundResult { eps: 0.0, kind, resolution: 0.0, cap: 0.0, evaluations: 0 }
}

/// Numerical upper bound on the amplified eps for symmetric parameters.
pub fn upper_bound(req: &BoundRequest) -> Result<BoundResult> {
    check_request(req.delta, req.iters)?;
    let params = &req.params;
    if params.beta == 0.0 {
        return Ok(trivial(BoundKind::Upper));
    }
    let b = bisect(params.p, req.delta, req.iters, |eps| {
        let fwd = delta_symmetric(eps, params, Direction::Forward, &req.opts)?;
        let bwd = delta_symmetric(eps, params, Direction::Backward, &req.opts)?;
        Ok(fwd.max(bwd))
    })?;
    Ok(BoundResult {
        eps: b.hi,
        kind: BoundKind::Upper,
        resolution: b.cap / 2f64.powi(req.iters as i32),
        cap: b.cap,
        evaluations: b.evaluations,
    })
}

/// Search on the asymmetric pair; returns the violating end of the bracket
/// or, in tight-upper mode, the satisfying end.
pub fn lower_bound(req: &LowerRequest) -> Result<BoundResult> {
    check_request(req.delta, req.iters)?;
    let params = &req.params;
    let kind = match req.mode {
        LowerMode::Lower => BoundKind::Lower,
        LowerMode::TightUpper => BoundKind::TightUpper,
    };
    if params.beta == 0.0 {
        return Ok(trivial(kind));
    }
    let b = bisect(params.p, req.delta, req.iters, |eps| {
        let fwd = delta_asymmetric_with(eps, params, Direction::Forward, &req.opts)?;
        let bwd = delta_asymmetric_with(eps, params, Direction::Backward, &req.opts)?;
        Ok(fwd.max(bwd))
    })?;
    Ok(BoundResult {
        eps: if kind == BoundKind::Lower { b.lo } else { b.hi },
        kind,
        resolution: b.cap / 2f64.powi(req.iters as i32),
        cap: b.cap,
        evaluations: b.evaluations,
    })
}

/// Same search as [`upper_bound`] but every divergence comes from full
/// enumeration. Accepts `r = 1/2`, which the fast path rejects.
pub fn oracle_upper_bound(req: &BoundRequest) -> Result<BoundResult> {
    check_request(req.delta, req.iters)?;
    let params = req.params;
    if params.beta == 0.0 {
        return Ok(trivial(BoundKind::Upper));
    }
    let jm = JointMasses::build(&params.to_asymmetric())?;
    let b = bisect(params.p, req.delta, req.iters, |eps| {
        Ok(jm.hockey_stick(eps, Direction::Forward).max(jm.hockey_stick(eps, Direction::Backward)))
    })?;
    Ok(BoundResult {
        eps: b.hi,
        kind: BoundKind::Upper,
        resolution: b.cap / 2f64.powi(req.iters as i32),
        cap: b.cap,
        evaluations: b.evaluations,
    })
}

/// Outcome of a closed-form bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ClosedForm {
    Bound { eps: f64 },
    PreconditionFailed { condition: String },
}

impl ClosedForm {
    pub fn eps(&self) -> Option<f64> {
        match self {
            ClosedForm::Bound { eps } => Some(*eps),
            ClosedForm::PreconditionFailed { .. } => None,
        }
    }

    fn failed(condition: &str) -> Self {
        ClosedForm::PreconditionFailed { condition: condition.to_string() }
    }
}

/// Closed-form bound from Chernoff/Hoeffding tails on the blanket count.
pub fn analytic_bound(params: &VariationRatioParams, delta: f64) -> Result<ClosedForm> {
    check_request(delta, 1)?;
    let beta = params.beta;
    if beta == 0.0 {
        return Ok(ClosedForm::Bound { eps: 0.0 });
    }
    let inv_p = params.inv_p();
    let q = params.q;
    let alpha = params.alpha();
    let rest = 1.0 - alpha - params.p_alpha();
    let r = params.r();
    let n1 = params.n_blanket as f64;
    if r >= 0.5 {
        return Ok(ClosedForm::failed("r < 1/2"));
    }
    let blanket = rest * r / (1.0 - 2.0 * r);
    // (p + 1) alpha / 2 with alpha = beta / (p - 1), written to stay finite at p = inf.
    let half_spread = 0.5 * beta * (1.0 + inv_p) / (1.0 - inv_p);
    if half_spread - blanket < 0.0 {
        return Ok(ClosedForm::failed("(p+1)alpha/2 - (1-alpha-alpha p) r/(1-2r) >= 0"));
    }
    let log4 = (4.0 / delta).ln();
    let omega = 2.0 * r * n1 - (f64::min(6.0 * r, 0.5) * n1 * log4).sqrt();
    // Threshold on omega, numerator and denominator divided by p^2.
    let num = 2.0 * (inv_p * (beta + 1.0) + (beta - 1.0)) * n1 + beta * inv_p * inv_p;
    let den = q * inv_p * inv_p + inv_p * (beta - 1.0) + (beta + 1.0) - q * inv_p;
    if den <= 0.0 || omega < num / den {
        return Ok(ClosedForm::failed(
            "Omega >= (2p(beta+1+(beta-1)p)(n-1)+beta)/(q+p(beta-1+(beta+1)p)-pq)",
        ));
    }
    let root = (omega * log4 / 2.0).sqrt();
    let denom = alpha * omega + beta * (omega / 2.0 - root) + rest * (n1 - omega) * r / (1.0 - 2.0 * r);
    if denom <= 0.0 {
        return Ok(ClosedForm::failed("positive denominator at Omega"));
    }
    Ok(ClosedForm::Bound { eps: (beta * (2.0 * root + 1.0) / denom).ln_1p() })
}

/// Simpler closed form, valid once `n >= 8 log(2/delta) / r`.
pub fn asymptotic_bound(params: &VariationRatioParams, delta: f64) -> Result<ClosedForm> {
    check_request(delta, 1)?;
    let beta = params.beta;
    if beta == 0.0 {
        return Ok(ClosedForm::Bound { eps: 0.0 });
    }
    let inv_p = params.inv_p();
    let r = params.r();
    let n = params.n_users() as f64;
    if n < 8.0 * (2.0 / delta).ln() / r {
        return Ok(ClosedForm::failed("n >= 8log(2/delta)(p-1)q/(beta p)"));
    }
    let c = f64::max(0.0, 4.0 / 9.0 * (1.0 - 3.0 * r) / (1.0 - 2.0 * r));
    let scale = beta / ((1.0 - c) * (1.0 + inv_p) / (1.0 - inv_p) * beta + c);
    let tail = (32.0 * (4.0 / delta).ln() / (r * (n - 1.0))).sqrt() + 4.0 / (r * n);
    Ok(ClosedForm::Bound { eps: (scale * tail).ln_1p() })
}
