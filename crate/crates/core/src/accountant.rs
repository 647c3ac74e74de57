//! Privacy curves, discrete privacy-loss distributions and K-fold
//! composition.
//!
//! A curve sampled on a uniform grid is turned into a PLD whose implied
//! curve is the piecewise-linear interpolation of the samples in `e^eps`.
//! Hockey-stick curves are convex in `e^eps`, so the interpolation dominates
//! the true curve and matches it exactly at the nodes. Composition convolves
//! the loss distributions with an FFT.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bounds::{upper_bound, BoundRequest};
use crate::divergence::{
    delta_symmetric, subsampled_curve_delta, Direction, DivergenceOptions, JointMasses,
};
use crate::error::{Error, Result};
use crate::numerics::NeumaierSum;
use crate::params::VariationRatioParams;

/// Largest enumeration handled by [`exact_pld`].
pub const EXACT_PLD_MAX_N: u64 = 4000;

/// Refuse grids or convolutions longer than this.
const MAX_LEN: usize = 1 << 26;

/// Sampled privacy curves of both directions on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCurve {
    pub grid: Vec<f64>,
    /// delta(P || Q) at each grid point.
    pub forward: Vec<f64>,
    /// delta(Q || P) at each grid point.
    pub backward: Vec<f64>,
}

impl PrivacyCurve {
    pub fn max_delta(&self) -> Vec<f64> {
        self.forward.iter().zip(&self.backward).map(|(a, b)| a.max(*b)).collect()
    }
}

/// Privacy-loss distribution on the grid `origin + i * mesh`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePLD {
    pub grid_origin: f64,
    pub mesh: f64,
    pub masses: Vec<f64>,
    /// Mass of outcomes with infinite privacy loss.
    pub inf_mass: f64,
}

impl DiscretePLD {
    pub fn loss(&self, i: usize) -> f64 {
        self.grid_origin + i as f64 * self.mesh
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for &m in &self.masses {
            acc.add(m);
        }
        acc.add(self.inf_mass);
        acc.value()
    }

    /// `inf_mass + sum_i m_i (1 - e^{eps - l_i})_+`
    pub fn delta(&self, eps: f64) -> f64 {
        let mut acc = NeumaierSum::new();
        for (i, &m) in self.masses.iter().enumerate() {
            let l = self.loss(i);
            if l > eps {
                acc.add(-m * (eps - l).exp_m1());
            }
        }
        (self.inf_mass + acc.value()).clamp(0.0, 1.0)
    }

    /// delta at every grid point, in one backward pass.
    pub fn deltas_at_nodes(&self) -> Vec<f64> {
        let n = self.masses.len();
        let decay = (-self.mesh).exp();
        let one_minus = -(-self.mesh).exp_m1();
        let mut out = vec![0.0; n];
        // s = sum_{i>k} m_i (1 - e^{l_k - l_i}), tail = sum_{i>k} m_i
        let (mut s, mut tail) = (0.0, 0.0);
        for k in (0..n).rev() {
            out[k] = (self.inf_mass + s).clamp(0.0, 1.0);
            tail += self.masses[k];
            s = decay * s + one_minus * tail;
        }
        out
    }

    /// Smallest eps >= 0 with delta(eps) <= target, or `None` when the
    /// infinite-loss mass alone exceeds the target.
    pub fn eps_for_delta(&self, target: f64) -> Option<f64> {
        if self.inf_mass > target {
            return None;
        }
        let nodes = self.deltas_at_nodes();
        // Last node whose delta still exceeds the target.
        let Some(k) = nodes.iter().rposition(|&d| d > target) else {
            return Some(0.0);
        };
        if self.loss(k) < 0.0 && self.delta(0.0) <= target {
            return Some(0.0);
        }
        // Between nodes k and k + 1 the curve is inf + A - e^eps B.
        let mut a = NeumaierSum::new();
        let mut b = NeumaierSum::new();
        for i in k + 1..self.masses.len() {
            a.add(self.masses[i]);
            b.add(self.masses[i] * (-self.loss(i)).exp());
        }
        let b = b.value();
        if b <= 0.0 {
            return Some(self.loss(k).max(0.0));
        }
        let eps = ((self.inf_mass + a.value() - target) / b).ln();
        let hi = if k + 1 < self.masses.len() { self.loss(k + 1) } else { self.loss(k) };
        Some(eps.clamp(self.loss(k), hi).max(0.0))
    }
}

/// Loss distributions of both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PldPair {
    pub forward: DiscretePLD,
    pub backward: DiscretePLD,
}

impl PldPair {
    pub fn delta(&self, eps: f64) -> f64 {
        self.forward.delta(eps).max(self.backward.delta(eps))
    }

    pub fn eps_for_delta(&self, target: f64) -> Option<f64> {
        Some(self.forward.eps_for_delta(target)?.max(self.backward.eps_for_delta(target)?))
    }

    /// Evaluates both implied curves on `grid`.
    pub fn curve(&self, grid: &[f64]) -> PrivacyCurve {
        PrivacyCurve {
            grid: grid.to_vec(),
            forward: grid.iter().map(|&e| self.forward.delta(e)).collect(),
            backward: grid.iter().map(|&e| self.backward.delta(e)).collect(),
        }
    }

    /// Implied curves at the non-negative grid points.
    pub fn node_curve(&self) -> PrivacyCurve {
        let fwd = self.forward.deltas_at_nodes();
        let bwd = self.backward.deltas_at_nodes();
        let mut curve = PrivacyCurve { grid: Vec::new(), forward: Vec::new(), backward: Vec::new() };
        for i in 0..fwd.len() {
            let l = self.forward.loss(i);
            if l >= -0.5 * self.forward.mesh {
                curve.grid.push(l.max(0.0));
                curve.forward.push(fwd[i]);
                curve.backward.push(bwd[i]);
            }
        }
        curve
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub k: u32,
    pub eps_error: f64,
    pub delta_error: f64,
    pub gamma: Option<f64>,
    pub homogeneous: bool,
    /// Overrides the default mesh `eps_error / sqrt(K log(1/delta_error))`.
    pub mesh: Option<f64>,
    /// Overrides the single-round bound at `delta_error / K`.
    pub eps_upper: Option<f64>,
    #[serde(default)]
    pub opts: DivergenceOptions,
}

impl CompositionPlan {
    pub fn new(k: u32, eps_error: f64, delta_error: f64) -> Self {
        Self { k, eps_error, delta_error, gamma: None, homogeneous: true, mesh: None, eps_upper: None, opts: DivergenceOptions::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("K must be at least 1"));
        }
        if !(self.eps_error > 0.0 && self.delta_error > 0.0 && self.delta_error < 1.0) {
            return Err(Error::domain("eps_error and delta_error must be positive, delta_error < 1"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::domain(format!("gamma = {g} not in (0, 1]")));
            }
        }
        if let Some(m) = self.mesh {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::domain("mesh must be positive"));
            }
        }
        Ok(())
    }

    pub fn default_mesh(&self) -> f64 {
        self.mesh.unwrap_or_else(|| self.eps_error / (self.k as f64 * (1.0 / self.delta_error).ln()).sqrt())
    }
}

/// Evaluates both directions on `points` evenly spaced thresholds.
pub fn build_curve(params: &VariationRatioParams, eps_lo: f64, eps_hi: f64, points: usize) -> Result<PrivacyCurve> {
    build_curve_with(params, eps_lo, eps_hi, points, &DivergenceOptions::default())
}

pub fn build_curve_with(
    params: &VariationRatioParams,
    eps_lo: f64,
    eps_hi: f64,
    points: usize,
    opts: &DivergenceOptions,
) -> Result<PrivacyCurve> {
    let grid = linspace(eps_lo, eps_hi, points)?;
    let fwd = |e: f64| delta_symmetric(e, params, Direction::Forward, opts);
    let bwd = |e: f64| delta_symmetric(e, params, Direction::Backward, opts);
    sample_curve(grid, fwd, bwd)
}

fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || points < 2 {
        return Err(Error::domain("need eps_lo < eps_hi and at least 2 points"));
    }
    if points > MAX_LEN {
        return Err(Error::Size(format!("{points} grid points")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| if i + 1 == points { hi } else { lo + i as f64 * step }).collect())
}

fn sample_curve(
    grid: Vec<f64>,
    fwd: impl Fn(f64) -> Result<f64> + Sync,
    bwd: impl Fn(f64) -> Result<f64> + Sync,
) -> Result<PrivacyCurve> {
    let forward = grid.par_iter().map(|&e| fwd(e)).collect::<Result<Vec<_>>>()?;
    let backward = grid.par_iter().map(|&e| bwd(e)).collect::<Result<Vec<_>>>()?;
    Ok(PrivacyCurve { grid, forward, backward })
}

/// Pessimistic PLDs whose implied curves interpolate `curve` in `e^eps`.
pub fn discretize_curve(curve: &PrivacyCurve) -> Result<PldPair> {
    Ok(PldPair {
        forward: discretize_direction(&curve.grid, &curve.forward)?,
        backward: discretize_direction(&curve.grid, &curve.backward)?,
    })
}

fn discretize_direction(grid: &[f64], deltas: &[f64]) -> Result<DiscretePLD> {
    let n = grid.len();
    if n < 2 || deltas.len() != n {
        return Err(Error::Range("curve needs at least two points and matching deltas".into()));
    }
    if grid[0] > 0.0 {
        return Err(Error::Range(format!("curve starts at eps = {} > 0", grid[0])));
    }
    let mesh = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - mesh).abs() > 1e-9 * mesh.max(1.0) {
            return Err(Error::Range("curve grid is not uniform".into()));
        }
    }
    let x: Vec<f64> = grid.iter().map(|e| e.exp()).collect();
    // Slope of the interpolant on [x_k, x_{k+1}], then zero beyond the end.
    let mut slopes: Vec<f64> = (0..n - 1).map(|k| (deltas[k + 1] - deltas[k]) / (x[k + 1] - x[k])).collect();
    slopes.push(0.0);
    let mut masses = vec![0.0; n];
    for k in 1..n {
        masses[k] = (x[k] * (slopes[k] - slopes[k - 1])).max(0.0);
    }
    let inf_mass = deltas[n - 1].clamp(0.0, 1.0);
    let mut rest = NeumaierSum::new();
    for &m in &masses[1..] {
        rest.add(m);
    }
    masses[0] = (1.0 - inf_mass - rest.value()).max(0.0);
    Ok(DiscretePLD { grid_origin: grid[0], mesh, masses, inf_mass })
}

/// PLDs of the dominating pair by full enumeration, with every finite loss
/// rounded up to the next multiple of `mesh`.
pub fn exact_pld(params: &VariationRatioParams, mesh: f64) -> Result<PldPair> {
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(Error::domain("mesh must be positive"));
    }
    if params.n_blanket > EXACT_PLD_MAX_N {
        return Err(Error::Size(format!("n_blanket = {} exceeds {EXACT_PLD_MAX_N}", params.n_blanket)));
    }
    let jm = JointMasses::build(&params.to_asymmetric())?;
    Ok(PldPair { forward: bucket(&jm.p, &jm.q, mesh)?, backward: bucket(&jm.q, &jm.p, mesh)? })
}

fn bucket(num: &[f64], den: &[f64], mesh: f64) -> Result<DiscretePLD> {
    let mut finite: Vec<(i64, f64)> = Vec::new();
    let mut inf_mass = NeumaierSum::new();
    for (&u, &v) in num.iter().zip(den) {
        if u <= 0.0 {
            continue;
        }
        if v <= 0.0 {
            inf_mass.add(u);
        } else {
            finite.push((((u / v).ln() / mesh).ceil() as i64, u));
        }
    }
    let lo = finite.iter().map(|t| t.0).min().unwrap_or(0).min(0);
    let hi = finite.iter().map(|t| t.0).max().unwrap_or(0).max(0);
    let len = (hi - lo + 1) as usize;
    if len > MAX_LEN {
        return Err(Error::Size(format!("{len} loss buckets")));
    }
    let mut sums = vec![NeumaierSum::new(); len];
    for (i, m) in finite {
        sums[(i - lo) as usize].add(m);
    }
    Ok(DiscretePLD {
        grid_origin: lo as f64 * mesh,
        mesh,
        masses: sums.iter().map(NeumaierSum::value).collect(),
        inf_mass: inf_mass.value(),
    })
}

fn same_mesh(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Convolution of several loss distributions.
pub fn compose_plds(plds: &[DiscretePLD]) -> Result<DiscretePLD> {
    let Some(first) = plds.first() else {
        return Err(Error::domain("nothing to compose"));
    };
    if let Some(bad) = plds.iter().find(|p| !same_mesh(p.mesh, first.mesh)) {
        return Err(Error::domain(format!("mesh mismatch: {} vs {}", first.mesh, bad.mesh)));
    }
    if plds.len() == 1 {
        return Ok(first.clone());
    }
    let out_len = plds.iter().map(|p| p.masses.len() - 1).sum::<usize>() + 1;
    let size = fft_size(out_len)?;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let mut acc: Option<Vec<Complex<f64>>> = None;
    for p in plds {
        let mut buf = padded(&p.masses, size);
        fft.process(&mut buf);
        acc = Some(match acc {
            None => buf,
            Some(mut a) => {
                a.iter_mut().zip(&buf).for_each(|(x, y)| *x *= y);
                a
            }
        });
    }
    let masses = inverse(&mut planner, acc.unwrap(), out_len);
    let survive: f64 = plds.iter().map(|p| 1.0 - p.inf_mass).product();
    Ok(DiscretePLD {
        grid_origin: plds.iter().map(|p| p.grid_origin).sum(),
        mesh: first.mesh,
        masses,
        inf_mass: (1.0 - survive).clamp(0.0, 1.0),
    })
}

/// K-fold self-convolution with a single forward transform.
pub fn compose_plds_homogeneous(pld: &DiscretePLD, k: u32) -> Result<DiscretePLD> {
    if k == 0 {
        return Err(Error::domain("K must be at least 1"));
    }
    if k == 1 {
        return Ok(pld.clone());
    }
    let out_len = (pld.masses.len() - 1) * k as usize + 1;
    let size = fft_size(out_len)?;
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = padded(&pld.masses, size);
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|z| *z = z.powu(k));
    let masses = inverse(&mut planner, buf, out_len);
    Ok(DiscretePLD {
        grid_origin: pld.grid_origin * k as f64,
        mesh: pld.mesh,
        masses,
        inf_mass: (1.0 - (1.0 - pld.inf_mass).powi(k as i32)).clamp(0.0, 1.0),
    })
}

fn fft_size(len: usize) -> Result<usize> {
    if len > MAX_LEN {
        return Err(Error::Size(format!("composed PLD would have {len} points")));
    }
    Ok(len.next_power_of_two())
}

fn padded(masses: &[f64], size: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (b, &m) in buf.iter_mut().zip(masses) {
        b.re = m;
    }
    buf
}

fn inverse(planner: &mut FftPlanner<f64>, mut buf: Vec<Complex<f64>>, out_len: usize) -> Vec<f64> {
    let size = buf.len();
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / size as f64;
    buf[..out_len].iter().map(|z| (z.re * scale).max(0.0)).collect()
}

/// Direct O(len_a * len_b) convolution of two mass vectors.
pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![NeumaierSum::new(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j].add(x * y);
        }
    }
    out.iter().map(NeumaierSum::value).collect()
}

/// Composes a list of pairs direction by direction.
pub fn compose(plds: &[PldPair]) -> Result<PldPair> {
    let fwd: Vec<DiscretePLD> = plds.iter().map(|p| p.forward.clone()).collect();
    let bwd: Vec<DiscretePLD> = plds.iter().map(|p| p.backward.clone()).collect();
    Ok(PldPair { forward: compose_plds(&fwd)?, backward: compose_plds(&bwd)? })
}

pub fn compose_homogeneous(pld: &PldPair, k: u32) -> Result<PldPair> {
    Ok(PldPair {
        forward: compose_plds_homogeneous(&pld.forward, k)?,
        backward: compose_plds_homogeneous(&pld.backward, k)?,
    })
}

/// Result of a K-round accounting run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub plan: CompositionPlan,
    pub mesh: f64,
    pub eps_upper: f64,
    /// Single-round curve the PLDs were built from.
    pub single_round: PrivacyCurve,
    pub composed: PldPair,
}

impl Composition {
    pub fn eps_for_delta(&self, delta: f64) -> Option<f64> {
        self.composed.eps_for_delta(delta)
    }

    pub fn curve(&self) -> PrivacyCurve {
        self.composed.node_curve()
    }
}

/// K homogeneous rounds of the shuffled mechanism, optionally with
/// subsampling at rate `plan.gamma`.
pub fn compose_rounds(params: &VariationRatioParams, plan: &CompositionPlan) -> Result<Composition> {
    plan.validate()?;
    let mesh = plan.default_mesh();
    let eps_upper = match plan.eps_upper {
        Some(e) => e,
        None => {
            let mut req = BoundRequest::new(*params, plan.delta_error / plan.k as f64);
            req.opts = plan.opts;
            upper_bound(&req)?.eps
        }
    };
    let j = ((eps_upper / mesh).ceil() as usize).max(4);
    if 2 * j + 1 > MAX_LEN {
        return Err(Error::Size(format!("{} curve points", 2 * j + 1)));
    }
    let grid: Vec<f64> = (0..=2 * j).map(|i| (i as f64 - j as f64) * mesh).collect();
    let opts = plan.opts;
    let single_round = match plan.gamma {
        Some(g) if g < 1.0 => {
            // The mixture curve bounds both neighbouring orders, so it serves
            // for both directions.
            let curve = |e: f64| subsampled_curve_delta(e, params, g, &opts);
            sample_curve(grid, curve, curve)?
        }
        _ => sample_curve(
            grid,
            |e| delta_symmetric(e, params, Direction::Forward, &opts),
            |e| delta_symmetric(e, params, Direction::Backward, &opts),
        )?,
    };
    let base = discretize_curve(&single_round)?;
    let composed = if plan.homogeneous {
        compose_homogeneous(&base, plan.k)?
    } else {
        compose(&vec![base; plan.k as usize])?
    };
    Ok(Composition { plan: *plan, mesh, eps_upper, single_round, composed })
}

/// [`compose_rounds`] with the subsampling rate set.
pub fn compose_subsampled(params: &VariationRatioParams, gamma: f64, k: u32, plan: &CompositionPlan) -> Result<Composition> {
    compose_rounds(params, &CompositionPlan { gamma: Some(gamma), k, ..*plan })
}
