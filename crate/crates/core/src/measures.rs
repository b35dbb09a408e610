//! Empirical invariant sample measures as Cesàro averages of pulled-back states,
//! push-forward under the cocycle, the invariance residual and the
//! bounded-Lipschitz distance over a test-function dictionary.
//!
//! Measures are indexed by physical time on a base path `B`: the measure at
//! time `t` averages `u(t, s, B, ξ(s))` over birth times `s`. With
//! `B = θ_{-τ} ω` this is the measure at fiber `(t, θ_{t-τ} ω)`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{solve_u, Forcing, IntegrateOptions, Stepper, SystemParams};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::lattice::{pairwise_sum, LatticeVec};
use crate::noise::NoisePath;
use crate::par;
use crate::testfn::{CylTestFunction, TestFunctionDict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub alpha: f64,
    /// Anchor time of the measure.
    pub t: f64,
    /// Birth times cover `[birth_start, birth_end]` with spacing `ds`.
    pub birth_start: f64,
    pub birth_end: f64,
    pub ds: f64,
    pub seed: u64,
    pub path_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMeasure {
    pub particles: Vec<LatticeVec>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct MeasureSidecar {
    provenance: Provenance,
    weights: Vec<f64>,
    half_width: usize,
}

impl EnsembleMeasure {
    pub fn new(particles: Vec<LatticeVec>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Empty("measure has no particles"));
        }
        if particles.len() != weights.len() {
            return Err(invalid("weights", "need one weight per particle"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights", "weights must be nonnegative"));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(EnsembleMeasure {
            particles,
            weights,
            provenance,
        })
    }

    pub fn uniform(particles: Vec<LatticeVec>, provenance: Provenance) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0 / n as f64; n], provenance)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.provenance.t
    }

    pub fn max_norm_sq(&self) -> f64 {
        self.particles.iter().map(|p| p.l2_norm().powi(2)).fold(0.0, f64::max)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<&[f64]> = self.particles.iter().map(|p| p.values()).collect();
        let meta = MeasureSidecar {
            provenance: self.provenance.clone(),
            weights: self.weights.clone(),
            half_width: self.particles[0].half_width(),
        };
        io::save_with_sidecar(path, &rows, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (rows, meta): (Vec<Vec<f64>>, MeasureSidecar) = io::load_with_sidecar(path)?;
        let particles = rows
            .into_iter()
            .map(|r| LatticeVec::new(meta.half_width, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(particles, meta.weights, meta.provenance)
    }
}

/// `Σ_j w_j ψ(particle_j)`.
pub fn integrate_against(mu: &EnsembleMeasure, psi: impl Fn(&LatticeVec) -> f64) -> f64 {
    let terms: Vec<f64> = mu.particles.iter().zip(&mu.weights).map(|(p, w)| w * psi(p)).collect();
    pairwise_sum(&terms)
}

/// `Σ_j w_j values_j` for values precomputed per particle.
pub fn integrate_values(mu: &EnsembleMeasure, values: &[f64]) -> f64 {
    let terms: Vec<f64> = values.iter().zip(&mu.weights).map(|(v, w)| w * v).collect();
    pairwise_sum(&terms)
}

pub fn integrate_fn(mu: &EnsembleMeasure, psi: &CylTestFunction) -> f64 {
    integrate_against(mu, |u| psi.value(u))
}

/// One measure of a family: anchor time and birth window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureRequest {
    pub t: f64,
    pub birth_start: f64,
    pub birth_end: f64,
}

impl MeasureRequest {
    /// Births on `[t - window, t]`.
    pub fn trailing(t: f64, window: f64) -> Self {
        MeasureRequest {
            t,
            birth_start: t - window,
            birth_end: t,
        }
    }
}

/// Anchor map `ξ(s)`, the initial state of the particle born at `s`.
pub type Anchor<'a> = &'a (dyn Fn(f64) -> LatticeVec + Sync);

/// Builds all requested measures from one forward sweep: each birth time on the
/// grid `birth_end - j ds` is integrated once and observed at every requested
/// time whose birth window contains it.
#[allow(clippy::too_many_arguments)]
pub fn measure_family(
    alpha: f64,
    requests: &[MeasureRequest],
    path: &NoisePath,
    anchor: Anchor<'_>,
    ds: f64,
    half_width: usize,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<EnsembleMeasure>> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let dt = path.dt();
    let stride = (ds / dt).round() as i64;
    if stride < 1 || ((ds / dt) - stride as f64).abs() > 1e-6 * (ds / dt) {
        return Err(invalid("ds", format!("{ds} is not a positive multiple of dt = {dt}")));
    }
    let params = params.with_alpha(alpha);
    let digest = path.digest();
    let first = path.first_index();

    // Birth and observation times as local grid indices.
    let mut births_per_req = Vec::with_capacity(requests.len());
    let mut all_births = BTreeSet::new();
    let mut obs = Vec::with_capacity(requests.len());
    for r in requests {
        if !(r.birth_start <= r.birth_end && r.birth_end <= r.t) {
            return Err(invalid("request", format!("need birth_start <= birth_end <= t, got {r:?}")));
        }
        let kt = (path.grid_index(r.t)? - first) as usize;
        let ke = path.grid_index(r.birth_end)? - first;
        let ks = ((r.birth_start / dt) - 1e-6).ceil() as i64 - first;
        if ks < 0 {
            path.grid_index(r.birth_start)?;
        }
        let mut b = Vec::new();
        let mut k = ke;
        while k >= ks {
            b.push(k as usize);
            all_births.insert(k as usize);
            k -= stride;
        }
        b.reverse();
        if b.is_empty() {
            return Err(Error::Empty("measure window contains no birth time"));
        }
        births_per_req.push(b);
        obs.push(kt);
    }
    let births: Vec<usize> = all_births.into_iter().collect();
    let mut obs_sorted: Vec<usize> = obs.clone();
    obs_sorted.sort_unstable();
    obs_sorted.dedup();

    let z = path.z_slice()?;
    let guard = IntegrateOptions::default().guard;
    // states[j][m]: particle j observed at obs_sorted[m] (if born before it).
    let states = par::try_map(&births, |j, &kb| -> Result<Vec<Option<LatticeVec>>> {
        let mut stepper = Stepper::new(&params, forcing, path, half_width, guard)?;
        let xi = anchor(path.time(kb));
        if xi.half_width() != half_width {
            return Err(Error::Window("anchor lives on a different window".into()));
        }
        let down = (-params.alpha * z[kb]).exp();
        let mut v: Vec<f64> = xi.values().iter().map(|x| down * x).collect();
        let mut k = kb;
        let mut out = Vec::with_capacity(obs_sorted.len());
        for &ko in &obs_sorted {
            if ko < kb {
                out.push(None);
                continue;
            }
            if ko == kb {
                out.push(Some(xi.clone()));
                continue;
            }
            stepper.run(&mut v, k, ko).map_err(|e| match e {
                Error::BlowUp { t, .. } => Error::BlowUp { t, sample: Some(j) },
                other => other,
            })?;
            k = ko;
            let up = (params.alpha * z[ko]).exp();
            out.push(Some(LatticeVec::new(half_width, v.iter().map(|x| up * x).collect())?));
        }
        Ok(out)
    })?;

    requests
        .iter()
        .zip(&births_per_req)
        .zip(&obs)
        .map(|((r, b), &kt)| {
            let m = obs_sorted.binary_search(&kt).expect("observation index registered");
            let particles = b
                .iter()
                .map(|kb| {
                    let j = births.binary_search(kb).expect("birth index registered");
                    states[j][m].clone().expect("particle born before observation")
                })
                .collect();
            EnsembleMeasure::uniform(
                particles,
                Provenance {
                    alpha,
                    t: r.t,
                    birth_start: r.birth_start,
                    birth_end: r.birth_end,
                    ds,
                    seed: path.seed(),
                    path_digest: digest.clone(),
                },
            )
        })
        .collect()
}

/// Cesàro measure at `t` over births on `[tau_min, t]`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_measure(
    alpha: f64,
    t: f64,
    tau_min: f64,
    path: &NoisePath,
    anchor: Anchor<'_>,
    ds: f64,
    half_width: usize,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<EnsembleMeasure> {
    let req = MeasureRequest {
        t,
        birth_start: tau_min,
        birth_end: t,
    };
    Ok(measure_family(alpha, &[req], path, anchor, ds, half_width, params, forcing)?.remove(0))
}

/// The zero anchor `ξ ≡ 0`.
pub fn zero_anchor(half_width: usize) -> impl Fn(f64) -> LatticeVec + Sync {
    move |_| LatticeVec::zeros(half_width)
}

/// Image of `μ_t` under `u ↦ u(t + h, t, B, u)`; weights are carried over.
pub fn push_forward(
    mu: &EnsembleMeasure,
    h: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<EnsembleMeasure> {
    if !(h >= 0.0) {
        return Err(invalid("h", "push-forward time must be nonnegative"));
    }
    let digest = path.digest();
    if digest != mu.provenance.path_digest {
        return Err(Error::PathMismatch {
            expected: mu.provenance.path_digest.clone(),
            found: digest,
        });
    }
    let params = params.with_alpha(mu.provenance.alpha);
    let t = mu.t();
    let particles = par::try_map(&mu.particles, |_, x| {
        if h == 0.0 {
            Ok(x.clone())
        } else {
            solve_u(t + h, t, path, x, &params, forcing)
        }
    })?;
    let mut provenance = mu.provenance.clone();
    provenance.t = t + h;
    EnsembleMeasure::new(particles, mu.weights.clone(), provenance)
}

/// Finds the member of a family anchored at `t`.
pub fn at_time(family: &[EnsembleMeasure], t: f64) -> Result<&EnsembleMeasure> {
    family
        .iter()
        .find(|m| (m.t() - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or(Error::MissingTime(t))
}

/// `|∫ψ dμ_{t+h} - ∫ψ(u(t+h, t, B, u)) dμ_t(u)|` for every dictionary element.
pub fn invariance_residuals(
    family: &[EnsembleMeasure],
    t: f64,
    h: f64,
    dict: &[CylTestFunction],
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<f64>> {
    let later = at_time(family, t + h)?;
    let pushed = push_forward(at_time(family, t)?, h, path, params, forcing)?;
    Ok(dict
        .iter()
        .map(|psi| (integrate_fn(later, psi) - integrate_fn(&pushed, psi)).abs())
        .collect())
}

pub fn invariance_residual(
    family: &[EnsembleMeasure],
    t: f64,
    h: f64,
    psi: &CylTestFunction,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<f64> {
    Ok(invariance_residuals(family, t, h, std::slice::from_ref(psi), path, params, forcing)?[0])
}

/// `max_Ψ |∫Ψ dμ₁ - ∫Ψ dμ₂|` over the dictionary.
pub fn bl_distance(mu1: &EnsembleMeasure, mu2: &EnsembleMeasure, dict: &TestFunctionDict) -> Result<f64> {
    if dict.is_empty() {
        return Err(Error::Empty("test function dictionary"));
    }
    Ok(dict
        .functions
        .iter()
        .map(|psi| (integrate_fn(mu1, psi) - integrate_fn(mu2, psi)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlRow {
    pub alpha: f64,
    pub t: f64,
    pub bl: f64,
    pub particles: usize,
}

/// Distances from each family to the reference family, matched by anchor time.
pub fn bl_table(
    reference: &[EnsembleMeasure],
    families: &[Vec<EnsembleMeasure>],
    dict: &TestFunctionDict,
) -> Result<Vec<BlRow>> {
    let mut rows = Vec::new();
    for fam in families {
        for mu in fam {
            let r = at_time(reference, mu.t())?;
            if r.provenance.path_digest != mu.provenance.path_digest {
                return Err(Error::PathMismatch {
                    expected: r.provenance.path_digest.clone(),
                    found: mu.provenance.path_digest.clone(),
                });
            }
            rows.push(BlRow {
                alpha: mu.provenance.alpha,
                t: mu.t(),
                bl: bl_distance(mu, r, dict)?,
                particles: mu.len(),
            });
        }
    }
    Ok(rows)
}

/// Settings of the measure experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub tau: f64,
    pub window: f64,
    pub ds: f64,
    pub half_width: usize,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec {
            tau: 0.0,
            window: 20.0,
            ds: 0.2,
            half_width: 32,
        }
    }
}

/// Trailing-window measures at each `t` on the base path `θ_{-τ} ω`, for `α₀` and
/// every `α` in `alphas`, compared in the bounded-Lipschitz distance.
#[allow(clippy::too_many_arguments)]
pub fn measure_sweep(
    alphas: &[f64],
    alpha0: f64,
    times: &[f64],
    spec: &MeasureSpec,
    path: &NoisePath,
    dict: &TestFunctionDict,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<BlRow>> {
    let base = path.theta_shift(-spec.tau)?;
    let requests: Vec<MeasureRequest> = times.iter().map(|&t| MeasureRequest::trailing(t, spec.window)).collect();
    let anchor = zero_anchor(spec.half_width);
    let build = |a: f64| measure_family(a, &requests, &base, &anchor, spec.ds, spec.half_width, params, forcing);
    let reference = build(alpha0)?;
    let families = alphas.iter().map(|&a| build(a)).collect::<Result<Vec<_>>>()?;
    bl_table(&reference, &families, dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NuProfile;
    use crate::noise::sample_noise;

    fn prov(t: f64) -> Provenance {
        Provenance {
            alpha: 0.0,
            t,
            birth_start: t,
            birth_end: t,
            ds: 0.1,
            seed: 0,
            path_digest: String::new(),
        }
    }

    fn noise() -> NoisePath {
        sample_noise(5, -60.0, 5.0, 1e-2, 20.0).unwrap()
    }

    /// Linear system `du = (-λu - βu + g) dt` with fixed point `g / (λ + β)`.
    fn frozen() -> (SystemParams, Forcing) {
        let params = SystemParams {
            q: 2.0,
            alpha: 0.0,
            nu: NuProfile::Constant { value: 0.0 },
            ..SystemParams::default()
        };
        let forcing = Forcing::PowerSine {
            amplitude: 0.01,
            decay_power: 1.0,
            gamma: 0.0,
            phase: std::f64::consts::FRAC_PI_2,
            growth: None,
        };
        (params, forcing)
    }

    #[test]
    fn weights_are_validated() {
        let p = vec![LatticeVec::zeros(1), LatticeVec::unit(1, 0).unwrap()];
        assert!(EnsembleMeasure::new(p.clone(), vec![0.5, 0.6], prov(0.0)).is_err());
        assert!(EnsembleMeasure::new(p.clone(), vec![1.5, -0.5], prov(0.0)).is_err());
        assert!(EnsembleMeasure::new(Vec::new(), Vec::new(), prov(0.0)).is_err());
        let mu = EnsembleMeasure::uniform(p, prov(0.0)).unwrap();
        assert_eq!(integrate_against(&mu, |_| 1.0), 1.0);
        assert_eq!(integrate_against(&mu, |u| u.l2_norm().powi(2)), 0.5);
    }

    #[test]
    fn point_mass_integrates_to_value() {
        let x = LatticeVec::from_fn(2, |i| i as f64 * 0.3).unwrap();
        let mu = EnsembleMeasure::uniform(vec![x.clone()], prov(0.0)).unwrap();
        let g = LatticeVec::from_fn(2, |i| 1.0 - 0.2 * i as f64).unwrap();
        let lin = |u: &LatticeVec| crate::lattice::pairing(u, &g);
        assert_eq!(integrate_against(&mu, lin), lin(&x));
    }

    #[test]
    fn single_birth_is_a_point_mass() {
        let path = noise();
        let params = SystemParams::default();
        let anchor = |_: f64| LatticeVec::from_fn(2, |i| 0.1 * i as f64).unwrap();
        let mu = empirical_measure(0.3, 1.0, 1.0, &path, &anchor, 0.1, 2, &params, &Forcing::default()).unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.particles[0], anchor(1.0));
    }

    #[test]
    fn family_matches_direct_integration() {
        let path = noise();
        let params = SystemParams::default();
        let forcing = Forcing::default();
        let anchor = zero_anchor(3);
        let reqs = [MeasureRequest::trailing(0.0, 1.0), MeasureRequest::trailing(0.5, 1.0)];
        let fam = measure_family(0.4, &reqs, &path, &anchor, 0.1, 3, &params, &forcing).unwrap();
        assert_eq!(fam[0].len(), 11);
        assert_eq!(fam[1].len(), 11);
        let p = params.with_alpha(0.4);
        for (j, x) in fam[1].particles.iter().enumerate() {
            let s = -0.5 + 0.1 * j as f64;
            let direct = solve_u(0.5, s, &path, &LatticeVec::zeros(3), &p, &forcing).unwrap();
            for (a, b) in x.values().iter().zip(direct.values()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn frozen_contraction_concentrates_at_the_fixed_point() {
        let path = noise();
        let (params, forcing) = frozen();
        let n = 2;
        let xstar = forcing.profile(n).scale(1.0 / (params.lambda + params.beta));
        let dict = TestFunctionDict::standard(n, 1.0, 8).unwrap();
        let anchor = zero_anchor(n);
        let mu = empirical_measure(0.0, 0.0, -50.0, &path, &anchor, 0.1, n, &params, &forcing).unwrap();
        let delta = EnsembleMeasure::uniform(vec![xstar.clone()], prov(0.0)).unwrap();
        let d = bl_distance(&mu, &delta, &dict).unwrap();
        // Cesàro bias: (1/W) ∫_0^W e^{-(λ+β)r} ‖x*‖ dr
        let bias = xstar.l2_norm() / ((params.lambda + params.beta) * 50.0);
        assert!(d < 1e-3 && d <= bias * 1.1 + 1e-9, "bl = {d}, bias bound {bias}");
    }

    #[test]
    fn invariance_and_push_forward() {
        let path = noise();
        let params = SystemParams::default();
        let forcing = Forcing::default();
        let anchor = zero_anchor(2);
        let reqs = [
            MeasureRequest { t: 0.0, birth_start: -10.0, birth_end: 0.0 },
            MeasureRequest { t: 1.0, birth_start: -10.0, birth_end: 0.0 },
        ];
        let fam = measure_family(0.3, &reqs, &path, &anchor, 0.5, 2, &params, &forcing).unwrap();
        let dict = TestFunctionDict::standard(2, 1.0, 8).unwrap();
        let zero = invariance_residuals(&fam, 0.0, 0.0, &dict.functions, &path, &params, &forcing).unwrap();
        assert!(zero.iter().all(|r| *r == 0.0));
        let r = invariance_residuals(&fam, 0.0, 1.0, &dict.functions, &path, &params, &forcing).unwrap();
        assert!(r.iter().all(|x| *x < 1e-10), "{r:?}");
        // push-forward consistency: ∫ψ d(push μ) = ∫ ψ∘φ dμ
        let psi = &dict.functions[5];
        let pushed = push_forward(&fam[0], 1.0, &path, &params, &forcing).unwrap();
        let p = params.with_alpha(0.3);
        let composed = integrate_against(&fam[0], |u| psi.value(&solve_u(1.0, 0.0, &path, u, &p, &forcing).unwrap()));
        assert_eq!(integrate_fn(&pushed, psi), composed);
        assert!(matches!(at_time(&fam, 7.0), Err(Error::MissingTime(_))));
    }

    #[test]
    fn bl_distance_properties() {
        let x = LatticeVec::from_fn(2, |i| 0.1 * i as f64).unwrap();
        let y = LatticeVec::from_fn(2, |i| -0.05 * i as f64 + 0.02).unwrap();
        let dict = TestFunctionDict::standard(2, 0.5, 8).unwrap();
        let dx = EnsembleMeasure::uniform(vec![x.clone()], prov(0.0)).unwrap();
        let dy = EnsembleMeasure::uniform(vec![y.clone()], prov(0.0)).unwrap();
        assert_eq!(bl_distance(&dx, &dx, &dict).unwrap(), 0.0);
        let d = bl_distance(&dx, &dy, &dict).unwrap();
        assert!(d <= x.sub(&y).l2_norm().min(2.0) + 1e-12);
        let a = EnsembleMeasure::uniform(vec![x.clone(), y.clone()], prov(0.0)).unwrap();
        let b = EnsembleMeasure::uniform(vec![y, x], prov(0.0)).unwrap();
        assert!(bl_distance(&a, &b, &dict).unwrap() < 1e-15);
        let empty = TestFunctionDict { functions: Vec::new(), radius: 1.0 };
        assert!(bl_distance(&a, &b, &empty).is_err());
    }

    #[test]
    fn sweep_reference_row_is_zero() {
        let path = noise();
        let spec = MeasureSpec { tau: 0.0, window: 2.0, ds: 0.5, half_width: 2 };
        let dict = TestFunctionDict::standard(2, 1.0, 8).unwrap();
        let rows = measure_sweep(&[0.2], 0.2, &[0.0, 1.0], &spec, &path, &dict, &SystemParams::default(), &Forcing::default())
            .unwrap();
        assert!(rows.iter().all(|r| r.bl == 0.0));
    }

    #[test]
    fn measure_file_round_trip() {
        let path = noise();
        let anchor = zero_anchor(2);
        let mu = empirical_measure(0.2, 0.0, -1.0, &path, &anchor, 0.5, 2, &SystemParams::default(), &Forcing::default())
            .unwrap();
        let dir = std::env::temp_dir().join(format!("lattice-lab-measure-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("mu.bin");
        mu.save(&file).unwrap();
        assert_eq!(EnsembleMeasure::load(&file).unwrap(), mu);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
