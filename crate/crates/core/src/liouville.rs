//! Term-by-term evaluation of the Liouville-type balance law
//!
//! ```text
//! ∫Ψ dμ_t - ∫Ψ dμ_s = ∫_s^t ∫⟨F̃(σ,u), Ψ'(u)⟩ dμ_σ dσ
//!                    + α ∫_s^t ∫(u, Ψ'(u)) dμ_σ dW̃(σ)
//!                    + (α²/2) ∫_s^t ∫Ψ''(u)(u,u) dμ_σ dσ
//! ```
//!
//! along single trajectories and against measure families, with the stochastic
//! integral taken both as a left-point (Itô) and a trapezoidal (Stratonovich) sum.
//!
//! The simulated paths solve `du = F̃ dt + α u ∘ dW`, whose chain rule has no
//! second-order term. The Itô residual therefore keeps a drift
//! `(α²/2) ∫(u, Ψ'(u)) dσ` under refinement while the Stratonovich residual
//! vanishes; both are reported.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Forcing, SystemParams, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::lattice::{op_a, LatticeVec};
use crate::measures::{
    at_time, integrate_against, integrate_fn, integrate_values, measure_family, zero_anchor, EnsembleMeasure, MeasureRequest,
};
use crate::noise::NoisePath;
use crate::par;
use crate::testfn::TestFunctionDict;

pub use crate::testfn::{CylTestFunction, Profile};

/// `F̃(t, u) = -ν(t) A u + f(t, u) - λ u`.
pub fn drift_ftilde(t: f64, u: &LatticeVec, params: &SystemParams, forcing: &Forcing) -> Result<LatticeVec> {
    let a = op_a(u, params.p)?;
    let f = forcing.eval(t, u, params);
    Ok(a.scale(-params.nu.eval(t)).add(&f).axpy(-params.lambda, u))
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `Σ f(σ_k) ΔW_k` and `Σ ½(f(σ_k) + f(σ_{k+1})) ΔW_k`.
fn stochastic_sums(values: &[f64], w: &[f64]) -> (f64, f64) {
    let mut ito = 0.0;
    let mut strat = 0.0;
    for k in 0..values.len().saturating_sub(1) {
        let dw = w[k + 1] - w[k];
        ito += values[k] * dw;
        strat += 0.5 * (values[k] + values[k + 1]) * dw;
    }
    (ito, strat)
}

fn clean(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

/// Raw terms of the balance law over `[s, t]` and the residuals under both conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub s: f64,
    pub t: f64,
    pub alpha: f64,
    /// `∫Ψ dμ_t` (or `Ψ(u(t))`).
    pub lhs_t: f64,
    pub lhs_s: f64,
    pub lhs_diff: f64,
    pub drift_term: f64,
    /// `∫∫(u, Ψ'(u)) dμ dW̃`, left-point sum, without the factor `α`.
    pub stoch_term_ito: f64,
    /// Same with trapezoidal sums.
    pub stoch_term_strat: f64,
    /// `∫∫Ψ''(u)(u,u) dμ dσ`, without the factor `α²/2`.
    pub correction_term: f64,
    /// `lhs_diff - drift - α stoch_ito - (α²/2) correction`.
    pub residual_ito: f64,
    /// `lhs_diff - drift - α stoch_strat`.
    pub residual_strat: f64,
    /// Largest magnitude among `lhs_diff`, `drift`, `α stoch`, `(α²/2) correction`.
    pub scale: f64,
    pub nodes: usize,
    pub max_spacing: f64,
}

impl LiouvilleReport {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        s: f64,
        t: f64,
        alpha: f64,
        lhs_t: f64,
        lhs_s: f64,
        drift: f64,
        ito: f64,
        strat: f64,
        corr: f64,
        times: &[f64],
    ) -> Self {
        let lhs_diff = lhs_t - lhs_s;
        let residual_ito = lhs_diff - drift - alpha * ito - 0.5 * alpha * alpha * corr;
        let residual_strat = lhs_diff - drift - alpha * strat;
        let scale = [
            lhs_diff,
            drift,
            alpha * ito,
            alpha * strat,
            0.5 * alpha * alpha * corr,
        ]
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
        LiouvilleReport {
            s,
            t,
            alpha,
            lhs_t,
            lhs_s,
            lhs_diff,
            drift_term: clean(drift),
            stoch_term_ito: clean(ito),
            stoch_term_strat: clean(strat),
            correction_term: clean(corr),
            residual_ito: clean(residual_ito),
            residual_strat: clean(residual_strat),
            scale,
            nodes: times.len(),
            max_spacing: times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
        }
    }

    /// The smaller of the two residuals in magnitude.
    pub fn best_residual(&self) -> f64 {
        self.residual_ito.abs().min(self.residual_strat.abs())
    }

    /// Reverses the orientation: `lhs_diff` and every integral change sign.
    fn reversed(mut self) -> Self {
        std::mem::swap(&mut self.s, &mut self.t);
        std::mem::swap(&mut self.lhs_s, &mut self.lhs_t);
        self.lhs_diff = -self.lhs_diff;
        self.drift_term = clean(-self.drift_term);
        self.stoch_term_ito = clean(-self.stoch_term_ito);
        self.stoch_term_strat = clean(-self.stoch_term_strat);
        self.correction_term = clean(-self.correction_term);
        self.residual_ito = clean(-self.residual_ito);
        self.residual_strat = clean(-self.residual_strat);
        self
    }
}

/// Per-node integrands `⟨F̃, Ψ'⟩`, `(u, Ψ')`, `Ψ''(u)(u,u)` at one state.
fn integrands(
    sigma: f64,
    u: &LatticeVec,
    psi: &CylTestFunction,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<(f64, f64, f64)> {
    if psi.directions.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let f = drift_ftilde(sigma, u, params, forcing)?;
    let x = u.values();
    Ok((
        psi.gradient_pairing(x, f.values()),
        psi.gradient_pairing(x, x),
        psi.hessian_form(x, x, x),
    ))
}

/// Residual of the chain rule for `Ψ(u(σ))` along a recorded trajectory on `[s, t]`.
pub fn ito_trajectory_residual(traj: &Trajectory, psi: &CylTestFunction, s: f64, t: f64) -> Result<LiouvilleReport> {
    if s > t {
        return Ok(ito_trajectory_residual(traj, psi, t, s)?.reversed());
    }
    let tol = 1e-9 * traj.path.dt();
    let i0 = traj
        .times
        .iter()
        .position(|&x| (x - s).abs() <= tol)
        .ok_or_else(|| grid_error(traj, s))?;
    let i1 = traj
        .times
        .iter()
        .position(|&x| (x - t).abs() <= tol)
        .ok_or_else(|| grid_error(traj, t))?;
    let times = &traj.times[i0..=i1];
    let mut a = Vec::with_capacity(times.len());
    let mut b = Vec::with_capacity(times.len());
    let mut c = Vec::with_capacity(times.len());
    let mut w = Vec::with_capacity(times.len());
    for (k, &sig) in times.iter().enumerate() {
        let (x, y, z) = integrands(sig, &traj.u[i0 + k], psi, &traj.params, &traj.forcing)?;
        a.push(x);
        b.push(y);
        c.push(z);
        w.push(traj.path.w_at(sig)?);
    }
    let (ito, strat) = stochastic_sums(&b, &w);
    Ok(LiouvilleReport::assemble(
        s,
        t,
        traj.params.alpha,
        psi.value(&traj.u[i1]),
        psi.value(&traj.u[i0]),
        trapezoid(times, &a),
        ito,
        strat,
        trapezoid(times, &c),
        times,
    ))
}

fn grid_error(traj: &Trajectory, t: f64) -> Error {
    Error::OutOfGrid {
        t,
        t_min: traj.times[0],
        t_max: *traj.times.last().expect("nonempty trajectory"),
    }
}

/// Members of a family on `[s, t]`, sorted by time, checked for a common path and `α`.
fn family_nodes<'a>(family: &'a [EnsembleMeasure], s: f64, t: f64, path: &NoisePath) -> Result<Vec<&'a EnsembleMeasure>> {
    let first = at_time(family, s)?;
    at_time(family, t)?;
    let digest = path.digest();
    let mut nodes: Vec<&EnsembleMeasure> = family
        .iter()
        .filter(|m| m.t() >= s - 1e-9 && m.t() <= t + 1e-9)
        .collect();
    nodes.sort_by(|a, b| a.t().total_cmp(&b.t()));
    nodes.dedup_by(|a, b| (a.t() - b.t()).abs() <= 1e-9);
    for m in &nodes {
        if m.provenance.path_digest != digest {
            return Err(Error::PathMismatch {
                expected: digest.clone(),
                found: m.provenance.path_digest.clone(),
            });
        }
        if m.provenance.alpha != first.provenance.alpha {
            return Err(invalid("family", "members carry different alpha"));
        }
    }
    Ok(nodes)
}

/// Per-node measure integrals of the three integrands.
fn node_integrals(
    nodes: &[&EnsembleMeasure],
    psi: &CylTestFunction,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<(f64, f64, f64)>> {
    par::try_map(nodes, |_, mu| {
        let per: Vec<(f64, f64, f64)> = mu
            .particles
            .iter()
            .map(|u| integrands(mu.t(), u, psi, params, forcing))
            .collect::<Result<_>>()?;
        let pick = |f: fn(&(f64, f64, f64)) -> f64| integrate_values(mu, &per.iter().map(f).collect::<Vec<_>>());
        Ok((pick(|x| x.0), pick(|x| x.1), pick(|x| x.2)))
    })
}

/// Terms of the balance law for a measure family on the base path `B = θ_{-τ} ω`,
/// so that `W̃` is the Wiener path of `B`.
pub fn liouville_terms(
    family: &[EnsembleMeasure],
    psi: &CylTestFunction,
    s: f64,
    t: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<LiouvilleReport> {
    if s > t {
        return Ok(liouville_terms(family, psi, t, s, path, params, forcing)?.reversed());
    }
    let nodes = family_nodes(family, s, t, path)?;
    let alpha = nodes[0].provenance.alpha;
    let params = params.with_alpha(alpha);
    let times: Vec<f64> = nodes.iter().map(|m| m.t()).collect();
    let ints = node_integrals(&nodes, psi, &params, forcing)?;
    let a: Vec<f64> = ints.iter().map(|x| x.0).collect();
    let b: Vec<f64> = ints.iter().map(|x| x.1).collect();
    let c: Vec<f64> = ints.iter().map(|x| x.2).collect();
    let w = times.iter().map(|&x| path.w_at(x)).collect::<Result<Vec<_>>>()?;
    let (ito, strat) = stochastic_sums(&b, &w);
    Ok(LiouvilleReport::assemble(
        s,
        t,
        alpha,
        integrate_fn(nodes[nodes.len() - 1], psi),
        integrate_fn(nodes[0], psi),
        trapezoid(&times, &a),
        ito,
        strat,
        trapezoid(&times, &c),
        &times,
    ))
}

/// Thresholds of the sample statistical solution check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionThresholds {
    /// Largest admissible `|∫Ψ dμ_{σ'} - ∫Ψ dμ_σ|` between neighbouring nodes.
    pub continuity: f64,
    /// Largest admissible change of a quadrature under grid halving, relative to the L¹ mass.
    pub refinement: f64,
    /// Largest admissible Liouville residual relative to the report scale.
    pub residual: f64,
}

impl Default for SolutionThresholds {
    fn default() -> Self {
        SolutionThresholds {
            continuity: 0.1,
            refinement: 0.01,
            residual: 5e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    /// Condition (1): modulus of continuity of `σ ↦ ∫Ψ dμ_σ` over the dictionary.
    pub continuity_modulus: f64,
    pub continuity_ok: bool,
    /// Condition (2): worst relative change of the `⟨F̃, g⟩` and `Ψ''(u)(u,u)`
    /// quadratures under grid halving.
    pub refinement_change: f64,
    /// `Σ h (∫(u, g) dμ)²` maximised over directions.
    pub l2_sum: f64,
    pub integrability_ok: bool,
    /// Condition (3): `|best residual| / scale` for each test function.
    pub relative_residuals: Vec<f64>,
    pub liouville_ok: bool,
}

impl SolutionReport {
    pub fn passed(&self) -> bool {
        self.continuity_ok && self.integrability_ok && self.liouville_ok
    }
}

fn relative(residual: f64, scale: f64) -> f64 {
    if residual == 0.0 {
        0.0
    } else {
        residual / scale
    }
}

/// Checks the three defining conditions of a sample statistical solution on `[s, t]`.
#[allow(clippy::too_many_arguments)]
pub fn statistical_solution_check(
    family: &[EnsembleMeasure],
    dict: &TestFunctionDict,
    psi_list: &[CylTestFunction],
    s: f64,
    t: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
    thresholds: SolutionThresholds,
) -> Result<SolutionReport> {
    let nodes = family_nodes(family, s.min(t), s.max(t), path)?;
    let params = params.with_alpha(nodes[0].provenance.alpha);
    let times: Vec<f64> = nodes.iter().map(|m| m.t()).collect();

    let mut modulus: f64 = 0.0;
    for psi in &dict.functions {
        let vals: Vec<f64> = nodes.iter().map(|m| integrate_fn(m, psi)).collect();
        for w in vals.windows(2) {
            modulus = modulus.max((w[1] - w[0]).abs());
        }
    }

    let mut refinement: f64 = 0.0;
    let mut l2_sum: f64 = 0.0;
    let mut finite = true;
    let halved: Vec<usize> = (0..times.len()).step_by(2).collect();
    let coarse_ok = halved.last() == Some(&(times.len() - 1));
    for psi in psi_list {
        for g in &psi.directions {
            let mut drift = Vec::with_capacity(nodes.len());
            let mut lin = Vec::with_capacity(nodes.len());
            let mut quad = Vec::with_capacity(nodes.len());
            for m in &nodes {
                let mut fg = Vec::with_capacity(m.len());
                for u in &m.particles {
                    fg.push(crate::lattice::pairing(&drift_ftilde(m.t(), u, &params, forcing)?, g));
                }
                drift.push(integrate_values(m, &fg));
                lin.push(integrate_against(m, |u| crate::lattice::pairing(u, g)));
                quad.push(integrate_against(m, |u| psi.hessian_form(u.values(), u.values(), u.values())));
            }
            for series in [&drift, &quad] {
                finite &= series.iter().all(|x| x.is_finite());
                let full = trapezoid(&times, series);
                let mass = trapezoid(&times, &series.iter().map(|x| x.abs()).collect::<Vec<_>>());
                if coarse_ok && times.len() >= 3 {
                    let ct: Vec<f64> = halved.iter().map(|&i| times[i]).collect();
                    let cv: Vec<f64> = halved.iter().map(|&i| series[i]).collect();
                    let change = (trapezoid(&ct, &cv) - full).abs();
                    refinement = refinement.max(relative(change, mass));
                }
            }
            let sq: Vec<f64> = lin.iter().map(|x| x * x).collect();
            let l2 = trapezoid(&times, &sq);
            finite &= l2.is_finite();
            l2_sum = l2_sum.max(l2);
        }
    }

    let relative_residuals = psi_list
        .iter()
        .map(|psi| {
            let r = liouville_terms(family, psi, s, t, path, &params, forcing)?;
            Ok(relative(r.best_residual(), r.scale))
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(SolutionReport {
        continuity_modulus: modulus,
        continuity_ok: modulus <= thresholds.continuity,
        refinement_change: refinement,
        l2_sum,
        integrability_ok: finite && refinement <= thresholds.refinement,
        liouville_ok: relative_residuals.iter().all(|r| *r <= thresholds.residual),
        relative_residuals,
    })
}

/// Settings of the measure-level Liouville experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleSpec {
    pub tau: f64,
    pub s: f64,
    pub t: f64,
    /// Spacing of the measure grid on `[s, t]`.
    pub spacing: f64,
    /// Cesàro window of the measure at `s`.
    pub window: f64,
    pub ds: f64,
    pub half_width: usize,
}

impl Default for LiouvilleSpec {
    fn default() -> Self {
        LiouvilleSpec {
            tau: 0.0,
            s: 0.0,
            t: 1.0,
            spacing: 0.05,
            window: 20.0,
            ds: 0.2,
            half_width: 32,
        }
    }
}

impl LiouvilleSpec {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.t - self.s) / self.spacing).round() as usize;
        (0..=n).map(|j| self.s + j as f64 * self.spacing).collect()
    }

    /// Requests for the family `μ_σ`, `σ ∈ [s, t]`: the Cesàro measure at `s`
    /// carried forward by the cocycle, so all nodes share one set of births.
    pub fn requests(&self) -> Vec<MeasureRequest> {
        self.grid()
            .into_iter()
            .map(|sigma| MeasureRequest {
                t: sigma,
                birth_start: self.s - self.window,
                birth_end: self.s,
            })
            .collect()
    }

    /// Base path `θ_{-τ} ω`.
    pub fn base(&self, path: &NoisePath) -> Result<NoisePath> {
        path.theta_shift(-self.tau)
    }

    pub fn family(
        &self,
        alpha: f64,
        path: &NoisePath,
        params: &SystemParams,
        forcing: &Forcing,
    ) -> Result<Vec<EnsembleMeasure>> {
        let base = self.base(path)?;
        let anchor = zero_anchor(self.half_width);
        measure_family(alpha, &self.requests(), &base, &anchor, self.ds, self.half_width, params, forcing)
    }
}

/// The five terms of the balance law with their `α` factors applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerms {
    pub alpha: f64,
    pub lhs_t: f64,
    pub lhs_s: f64,
    pub drift: f64,
    /// `α × ` left-point stochastic sum.
    pub stoch: f64,
    /// `α × ` trapezoidal stochastic sum.
    pub stoch_strat: f64,
    /// `(α²/2) × ` correction integral.
    pub correction: f64,
}

impl WeightedTerms {
    pub fn from_report(r: &LiouvilleReport) -> Self {
        WeightedTerms {
            alpha: r.alpha,
            lhs_t: r.lhs_t,
            lhs_s: r.lhs_s,
            drift: r.drift_term,
            stoch: clean(r.alpha * r.stoch_term_ito),
            stoch_strat: clean(r.alpha * r.stoch_term_strat),
            correction: clean(0.5 * r.alpha * r.alpha * r.correction_term),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermwiseRow {
    pub alpha: f64,
    pub terms: WeightedTerms,
    pub d_lhs_t: f64,
    pub d_lhs_s: f64,
    pub d_drift: f64,
    pub d_stoch: f64,
    pub d_stoch_strat: f64,
    pub d_correction: f64,
    /// `max_σ |∫Ψ dμ^α_σ - ∫Ψ dμ^{α₀}_σ|` over the measure grid.
    pub sup_diff: f64,
}

/// Term values for one family.
pub fn weighted_terms(
    family: &[EnsembleMeasure],
    psi: &CylTestFunction,
    spec: &LiouvilleSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<WeightedTerms> {
    let base = spec.base(path)?;
    let r = liouville_terms(family, psi, spec.s, spec.t, &base, params, forcing)?;
    Ok(WeightedTerms::from_report(&r))
}

/// Differences of each term against the reference family, on matched noise.
pub fn termwise_table(
    reference: &[EnsembleMeasure],
    families: &[Vec<EnsembleMeasure>],
    psi: &CylTestFunction,
    spec: &LiouvilleSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<(WeightedTerms, Vec<TermwiseRow>)> {
    let r0 = weighted_terms(reference, psi, spec, path, params, forcing)?;
    let grid = spec.grid();
    let mut rows = Vec::with_capacity(families.len());
    for fam in families {
        let r = weighted_terms(fam, psi, spec, path, params, forcing)?;
        let mut sup_diff: f64 = 0.0;
        for &sigma in &grid {
            let a = integrate_fn(at_time(fam, sigma)?, psi);
            let b = integrate_fn(at_time(reference, sigma)?, psi);
            sup_diff = sup_diff.max((a - b).abs());
        }
        rows.push(TermwiseRow {
            alpha: r.alpha,
            terms: r,
            d_lhs_t: (r.lhs_t - r0.lhs_t).abs(),
            d_lhs_s: (r.lhs_s - r0.lhs_s).abs(),
            d_drift: (r.drift - r0.drift).abs(),
            d_stoch: (r.stoch - r0.stoch).abs(),
            d_stoch_strat: (r.stoch_strat - r0.stoch_strat).abs(),
            d_correction: (r.correction - r0.correction).abs(),
            sup_diff,
        });
    }
    Ok((r0, rows))
}

/// Builds families for `α₀` and every `α` in `alphas` on one path and tabulates
/// the termwise differences.
pub fn termwise_sweep(
    alphas: &[f64],
    alpha0: f64,
    psi: &CylTestFunction,
    spec: &LiouvilleSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<(WeightedTerms, Vec<TermwiseRow>)> {
    let reference = spec.family(alpha0, path, params, forcing)?;
    let families = alphas
        .iter()
        .map(|&a| spec.family(a, path, params, forcing))
        .collect::<Result<Vec<_>>>()?;
    termwise_table(&reference, &families, psi, spec, path, params, forcing)
}

/// A test function that tracks the forced mode: one logistic bump along the
/// normalised forcing profile, scaled to the working ball.
pub fn default_test_function(forcing: &Forcing, half_width: usize, radius: f64) -> Result<CylTestFunction> {
    let mut g = forcing.profile(half_width);
    if g.is_zero() {
        g = LatticeVec::unit(half_width, 0)?;
    }
    let g = g.scale(1.0 / (g.l2_norm() * radius));
    CylTestFunction::new(
        vec![g],
        vec![Profile::Logistic {
            center: 0.25,
            width: 0.25,
        }],
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegrateOptions, NuProfile};
    use crate::measures::Provenance;
    use crate::noise::sample_noise;

    fn noise() -> NoisePath {
        sample_noise(12, -30.0, 3.0, 1e-3, 20.0).unwrap()
    }

    fn rand_vec(n: usize, seed: u64) -> LatticeVec {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LatticeVec::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn drift_simple_cases() {
        let params = SystemParams::default();
        let zero = LatticeVec::zeros(3);
        assert!(drift_ftilde(0.0, &zero, &params, &Forcing::Zero).unwrap().is_zero());
        let lin = SystemParams {
            nu: NuProfile::Constant { value: 0.0 },
            ..params.clone()
        };
        let u = rand_vec(3, 1);
        assert_eq!(drift_ftilde(0.3, &u, &lin, &Forcing::Zero).unwrap(), u.scale(-lin.lambda));
        let forcing = Forcing::default();
        for seed in 0..10 {
            let u = rand_vec(4, seed);
            let t = 0.37 * seed as f64;
            let whole = drift_ftilde(t, &u, &params, &forcing).unwrap();
            let a = op_a(&u, params.p).unwrap().scale(-params.nu.eval(t));
            let f = forcing.eval(t, &u, &params);
            let l = u.scale(-params.lambda);
            for i in 0..u.len() {
                let sum = a.values()[i] + f.values()[i] + l.values()[i];
                assert!((whole.values()[i] - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
            }
        }
    }

    #[test]
    fn constant_test_function_has_zero_terms() {
        let path = noise();
        let params = SystemParams::default();
        let traj = integrate(&rand_vec(2, 3), 0.0, 1.0, &path, &params, &Forcing::default(), IntegrateOptions::default())
            .unwrap();
        let r = ito_trajectory_residual(&traj, &CylTestFunction::constant(0.7), 0.0, 1.0).unwrap();
        assert_eq!((r.lhs_diff, r.drift_term, r.stoch_term_ito, r.correction_term), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.residual_ito, 0.0);
        assert_eq!(r.residual_strat, 0.0);
    }

    #[test]
    fn deterministic_chain_rule() {
        let path = noise();
        let params = SystemParams {
            alpha: 0.0,
            ..SystemParams::default()
        };
        let forcing = Forcing::default();
        let psi = default_test_function(&forcing, 3, 1.0).unwrap();
        let traj = integrate(&rand_vec(3, 4), 0.0, 2.0, &path, &params, &forcing, IntegrateOptions::default()).unwrap();
        let r = ito_trajectory_residual(&traj, &psi, 0.0, 2.0).unwrap();
        assert_eq!(r.residual_ito, r.residual_strat);
        assert!(r.residual_ito.abs() < 1e-4, "{r:?}");
        let rev = ito_trajectory_residual(&traj, &psi, 2.0, 0.0).unwrap();
        assert_eq!(rev.lhs_diff, -r.lhs_diff);
        assert_eq!(rev.drift_term, -r.drift_term);
    }

    #[test]
    fn report_identity_holds_by_construction() {
        let path = noise();
        let params = SystemParams::default();
        let forcing = Forcing::default();
        let psi = default_test_function(&forcing, 3, 1.0).unwrap();
        let traj = integrate(&rand_vec(3, 5), 0.0, 1.0, &path, &params, &forcing, IntegrateOptions::default()).unwrap();
        let r = ito_trajectory_residual(&traj, &psi, 0.0, 1.0).unwrap();
        let a = params.alpha;
        let recon = r.lhs_diff - r.drift_term - a * r.stoch_term_ito - 0.5 * a * a * r.correction_term;
        assert!((recon - r.residual_ito).abs() <= 1e-12);
        assert!(r.residual_strat.abs() < r.residual_ito.abs() || r.residual_strat.abs() < 1e-4);
    }

    #[test]
    fn point_masses_at_zero_solve_trivially() {
        let path = noise();
        let params = SystemParams::default();
        let digest = path.digest();
        let family: Vec<EnsembleMeasure> = (0..=10)
            .map(|k| {
                let t = 0.1 * k as f64;
                EnsembleMeasure::uniform(
                    vec![LatticeVec::zeros(2)],
                    Provenance {
                        alpha: 0.3,
                        t,
                        birth_start: t,
                        birth_end: t,
                        ds: 0.1,
                        seed: path.seed(),
                        path_digest: digest.clone(),
                    },
                )
                .unwrap()
            })
            .collect();
        let dict = TestFunctionDict::standard(2, 1.0, 8).unwrap();
        let psi = default_test_function(&Forcing::Zero, 2, 1.0).unwrap();
        let rep = statistical_solution_check(
            &family,
            &dict,
            &[psi],
            0.0,
            1.0,
            &path,
            &params,
            &Forcing::Zero,
            SolutionThresholds::default(),
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.continuity_modulus, 0.0);
    }

    #[test]
    fn termwise_reference_row_is_zero_and_alpha_zero_terms_vanish() {
        let path = sample_noise(2, -30.0, 3.0, 1e-2, 20.0).unwrap();
        let spec = LiouvilleSpec {
            window: 3.0,
            ds: 0.5,
            spacing: 0.1,
            half_width: 2,
            ..LiouvilleSpec::default()
        };
        let forcing = Forcing::default();
        let psi = default_test_function(&forcing, 2, 1.0).unwrap();
        let params = SystemParams::default();
        let (r0, rows) = termwise_sweep(&[0.0, 0.25], 0.0, &psi, &spec, &path, &params, &forcing).unwrap();
        assert_eq!(r0.stoch, 0.0);
        assert_eq!(r0.correction, 0.0);
        assert_eq!(rows[0].d_drift, 0.0);
        assert_eq!(rows[0].sup_diff, 0.0);
        assert!(rows[1].d_stoch > 0.0);
        // time reversal of the measure-level terms
        let fam = spec.family(0.25, &path, &params, &forcing).unwrap();
        let base = spec.base(&path).unwrap();
        let fw = liouville_terms(&fam, &psi, 0.0, 1.0, &base, &params, &forcing).unwrap();
        let bw = liouville_terms(&fam, &psi, 1.0, 0.0, &base, &params, &forcing).unwrap();
        assert_eq!(bw.lhs_diff, -fw.lhs_diff);
        assert_eq!(bw.stoch_term_ito, -fw.stoch_term_ito);
        assert_eq!(bw.correction_term, -fw.correction_term);
        let other = sample_noise(3, -30.0, 3.0, 1e-2, 20.0).unwrap();
        assert!(matches!(
            liouville_terms(&fam, &psi, 0.0, 1.0, &other, &params, &forcing),
            Err(Error::PathMismatch { .. })
        ));
    }
}
