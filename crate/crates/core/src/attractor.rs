//! Absorbing balls, pullback point clouds approximating the random attractor,
//! semi-distances between clouds, tail diagnostics and the α-sweep.
//!
//! Fiber convention: a [`NoisePath`] `ω` is the sample at fiber time 0. The
//! state at fiber `(τ, ω)` after pullback time `T` is
//! `φ(T, τ - T, θ_{-T} ω, x) = u(τ, τ - T, θ_{-τ} ω, x)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{solve_u, Forcing, SystemParams};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::lattice::{lp_norm_slice, LatticeVec};
use crate::noise::NoisePath;
use crate::par;

/// Integrand size at `s = -L` above which the truncation is reported as too short.
pub const TAIL_NEGLIGIBLE: f64 = 1e-8;
pub const DEFAULT_HORIZON: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingSet {
    pub alpha: f64,
    pub tau: f64,
    /// `e^{2α z(ω)} ℛ(α, τ, ω)`.
    pub radius_sq: f64,
    /// `ℛ(α, τ, ω)`.
    pub r_cal: f64,
    /// Truncation horizon actually used.
    pub horizon: f64,
    /// Integrand value at `s = -horizon`.
    pub tail_integrand: f64,
}

impl AbsorbingSet {
    pub fn radius(&self) -> f64 {
        self.radius_sq.sqrt()
    }

    pub fn contains(&self, u: &LatticeVec) -> bool {
        u.l2_norm().powi(2) <= self.radius_sq
    }
}

/// Radius of the absorbing ball at fiber `(τ, ω)`:
///
/// ```text
/// ℛ = 1 + 2 ∫_{-L}^0 e^{λ₀ s + 2α∫_s^0 z(θ_r ω) dr - 2α z(θ_s ω)} ‖ψ₁(τ + s)‖₁ ds
/// ```
///
/// by the trapezoid rule. `L` is cut to the grid if the path is shorter; a warning
/// is logged when the integrand at `-L` is not negligible.
pub fn absorbing_radius(
    alpha: f64,
    tau: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
    horizon: f64,
    half_width: usize,
) -> Result<AbsorbingSet> {
    if !(horizon >= 0.0) {
        return Err(invalid("horizon", format!("must be nonnegative, got {horizon}")));
    }
    let dt = path.dt();
    let steps = ((horizon / dt).round() as i64).min(-path.first_index()).max(0);
    let l = steps as f64 * dt;
    if l + 0.5 * dt < horizon {
        log::warn!("absorbing radius: horizon cut from {horizon} to {l} by the noise grid");
    }
    let (k_lo, k0) = path.span(-l, 0.0)?;
    let z = path.z_slice()?;
    let z0 = z[k0];
    let mut integral = 0.0;
    let mut z_int = 0.0; // ∫_s^0 z
    let mut tail_integrand = 0.0;
    let mut prev: Option<f64> = None;
    for k in (k_lo..=k0).rev() {
        if k < k0 {
            z_int += 0.5 * dt * (z[k] + z[k + 1]);
        }
        let s = path.time(k);
        let psi = forcing.psi1_l1(tau + s, half_width, params);
        let val = if psi == 0.0 {
            0.0
        } else {
            (params.lambda0 * s + 2.0 * alpha * z_int - 2.0 * alpha * z[k]).exp() * psi
        };
        if let Some(p) = prev {
            integral += 0.5 * dt * (p + val);
        }
        prev = Some(val);
        tail_integrand = val;
    }
    if tail_integrand > TAIL_NEGLIGIBLE {
        log::warn!(
            "absorbing radius: integrand {tail_integrand:.3e} at s = -{l} is not negligible; increase the horizon"
        );
    }
    let r_cal = 1.0 + 2.0 * integral;
    Ok(AbsorbingSet {
        alpha,
        tau,
        radius_sq: (2.0 * alpha * z0).exp() * r_cal,
        r_cal,
        horizon: l,
        tail_integrand,
    })
}

/// Resolution and size settings of a pullback cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec {
    pub tau: f64,
    pub pullback_time: f64,
    pub m: usize,
    pub half_width: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

impl Default for CloudSpec {
    fn default() -> Self {
        CloudSpec {
            tau: 0.0,
            pullback_time: 20.0,
            m: 64,
            half_width: 32,
            horizon: DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub alpha: f64,
    pub tau: f64,
    pub pullback_time: f64,
    pub m: usize,
    pub half_width: usize,
    pub q: f64,
    pub seed: u64,
    pub path_digest: String,
    /// Radius² of the ball the initial points were drawn from.
    pub initial_radius_sq: f64,
    /// Radius² of the absorbing ball at the terminal fiber.
    pub absorbing_radius_sq: f64,
    pub resolution: f64,
    pub max_l2: f64,
    pub max_lq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorCloud {
    pub points: Vec<LatticeVec>,
    pub meta: CloudMeta,
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while k > 0 {
        x += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    x
}

/// `m` unit vectors from the Halton sequence mapped to `[-1, 1]^d` and normalised.
pub fn halton_directions(m: usize, dim: usize) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    let mut out = Vec::with_capacity(m);
    let mut k = 1u64;
    while out.len() < m {
        let x: Vec<f64> = primes.iter().map(|&b| 2.0 * radical_inverse(k, b) - 1.0).collect();
        k += 1;
        let norm = lp_norm_slice(&x, 2.0);
        if norm > 1e-12 {
            out.push(x.into_iter().map(|v| v / norm).collect());
        }
    }
    out
}

/// Deterministic initial points in the ball of radius `r`: direction `j` at radius `r (j + 1) / m`.
pub fn ball_samples(m: usize, half_width: usize, r: f64) -> Vec<LatticeVec> {
    halton_directions(m, 2 * half_width + 1)
        .into_iter()
        .enumerate()
        .map(|(j, d)| {
            let s = r * (j + 1) as f64 / m as f64;
            LatticeVec::new(half_width, d.into_iter().map(|v| s * v).collect())
                .expect("window length matches")
        })
        .collect()
}

/// Evolves each point of `initial`, given at fiber `(τ - T, θ_{-T} ω)`, to fiber `(τ, ω)`.
pub fn pullback_points(
    initial: &[LatticeVec],
    tau: f64,
    pullback_time: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<LatticeVec>> {
    let base = path.theta_shift(-tau)?;
    par::try_map(initial, |j, x| {
        solve_u(tau, tau - pullback_time, &base, x, params, forcing).map_err(|e| match e {
            Error::BlowUp { t, .. } => Error::BlowUp { t, sample: Some(j) },
            other => other,
        })
    })
}

/// Pullback image at fiber `(τ, ω)` of `m` points sampled in the absorbing ball at
/// `(τ - T, θ_{-T} ω)`.
pub fn pullback_cloud(
    alpha: f64,
    spec: &CloudSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<AttractorCloud> {
    if spec.m < 2 {
        return Err(invalid("m", format!("need at least two points, got {}", spec.m)));
    }
    if !(spec.pullback_time >= 0.0) {
        return Err(invalid("pullback_time", "must be nonnegative"));
    }
    let params = params.with_alpha(alpha);
    let start = path.theta_shift(-spec.pullback_time)?;
    let ball = absorbing_radius(
        alpha,
        spec.tau - spec.pullback_time,
        &start,
        &params,
        forcing,
        spec.horizon,
        spec.half_width,
    )?;
    let initial = ball_samples(spec.m, spec.half_width, ball.radius());
    let points = pullback_points(&initial, spec.tau, spec.pullback_time, path, &params, forcing)?;
    let terminal = absorbing_radius(alpha, spec.tau, path, &params, forcing, spec.horizon, spec.half_width)?;
    let q = params.q;
    let meta = CloudMeta {
        alpha,
        tau: spec.tau,
        pullback_time: spec.pullback_time,
        m: spec.m,
        half_width: spec.half_width,
        q,
        seed: path.seed(),
        path_digest: path.digest(),
        initial_radius_sq: ball.radius_sq,
        absorbing_radius_sq: terminal.radius_sq,
        resolution: resolution(&points),
        max_l2: points.iter().map(|p| p.l2_norm()).fold(0.0, f64::max),
        max_lq: points.iter().map(|p| lp_norm_slice(p.values(), q)).fold(0.0, f64::max),
    };
    Ok(AttractorCloud { points, meta })
}

impl AttractorCloud {
    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<&[f64]> = self.points.iter().map(|p| p.values()).collect();
        io::save_with_sidecar(path, &rows, &self.meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (rows, meta): (Vec<Vec<f64>>, CloudMeta) = io::load_with_sidecar(path)?;
        let points = rows
            .into_iter()
            .map(|r| LatticeVec::new(meta.half_width, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(AttractorCloud { points, meta })
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.points)
    }

    pub fn within_absorbing(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.l2_norm().powi(2) <= self.meta.absorbing_radius_sq)
    }
}

/// Largest pairwise ℓ² distance.
pub fn diameter(points: &[LatticeVec]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(a.sub(b).l2_norm());
        }
    }
    d
}

/// Largest ℓ² distance from a point to its nearest neighbour in the cloud.
pub fn resolution(points: &[LatticeVec]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let nearest = par::map(points, |i, a| {
        points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| a.sub(b).l2_norm())
            .fold(f64::INFINITY, f64::min)
    });
    nearest.into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", content = "q", rename_all = "snake_case")]
pub enum NormTag {
    L2,
    Lq(f64),
    /// `‖x‖ + ‖x‖_q`.
    L2CapLq(f64),
}

impl NormTag {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            NormTag::L2 => lp_norm_slice(x, 2.0),
            NormTag::Lq(q) => lp_norm_slice(x, q),
            NormTag::L2CapLq(q) => lp_norm_slice(x, 2.0) + lp_norm_slice(x, q),
        }
    }
}

/// `sup_{a ∈ A} inf_{b ∈ B} ‖a - b‖`.
pub fn hausdorff_semidist(a: &[LatticeVec], b: &[LatticeVec], norm: NormTag) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let n = a[0].half_width();
    if a.iter().chain(b).any(|p| p.half_width() != n) {
        return Err(Error::Window("clouds live on different windows".into()));
    }
    let rows = par::map(a, |_, x| {
        let mut diff = vec![0.0; x.len()];
        let mut best = f64::INFINITY;
        for y in b {
            for ((d, u), v) in diff.iter_mut().zip(x.values()).zip(y.values()) {
                *d = u - v;
            }
            best = best.min(norm.eval(&diff));
        }
        best
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(a: &[LatticeVec], b: &[LatticeVec], norm: NormTag) -> Result<f64> {
    Ok(hausdorff_semidist(a, b, norm)?.max(hausdorff_semidist(b, a, norm)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UscRow {
    pub alpha: f64,
    pub dist_l2: f64,
    pub dist_lq: f64,
    pub dist_sum: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
}

/// Semi-distances from each cloud to the reference cloud, on matched noise.
pub fn usc_table(reference: &AttractorCloud, clouds: &[AttractorCloud]) -> Result<Vec<UscRow>> {
    let q = reference.meta.q;
    clouds
        .iter()
        .map(|c| {
            if c.meta.path_digest != reference.meta.path_digest {
                return Err(Error::PathMismatch {
                    expected: reference.meta.path_digest.clone(),
                    found: c.meta.path_digest.clone(),
                });
            }
            Ok(UscRow {
                alpha: c.meta.alpha,
                dist_l2: hausdorff_semidist(&c.points, &reference.points, NormTag::L2)?,
                dist_lq: hausdorff_semidist(&c.points, &reference.points, NormTag::Lq(q))?,
                dist_sum: hausdorff_semidist(&c.points, &reference.points, NormTag::L2CapLq(q))?,
                m: c.meta.m,
                t: c.meta.pullback_time,
            })
        })
        .collect()
}

/// Builds the `α₀` cloud and one cloud per entry of `alphas` on the same path and
/// tabulates their semi-distances to the `α₀` cloud.
pub fn usc_sweep(
    alphas: &[f64],
    alpha0: f64,
    spec: &CloudSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<Vec<UscRow>> {
    let reference = pullback_cloud(alpha0, spec, path, params, forcing)?;
    let clouds = alphas
        .iter()
        .map(|&a| pullback_cloud(a, spec, path, params, forcing))
        .collect::<Result<Vec<_>>>()?;
    usc_table(&reference, &clouds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub cutoff: usize,
    pub l2: f64,
    pub lq: f64,
}

/// Largest tail mass beyond each cutoff over the cloud, in ℓ² and ℓ^q.
pub fn tail_profile(points: &[LatticeVec], cutoffs: &[usize], q: f64) -> Result<Vec<TailRow>> {
    cutoffs
        .iter()
        .map(|&c| {
            let mut row = TailRow {
                cutoff: c,
                l2: 0.0,
                lq: 0.0,
            };
            for p in points {
                row.l2 = row.l2.max(crate::lattice::tail_norm(p, c, 2.0)?);
                row.lq = row.lq.max(crate::lattice::tail_norm(p, c, q)?);
            }
            Ok(row)
        })
        .collect()
}

/// Result of scanning pullback times for entry into the absorbing ball.
#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionReport {
    pub radius_sq: f64,
    /// `(t, max ‖u(τ)‖²)` over the evolved samples, one row per scanned `t`.
    pub rows: Vec<(f64, f64)>,
    /// Smallest scanned `t` from which every later scanned time is inside the ball.
    pub entry_time: Option<f64>,
}

/// For each pullback time `t`, evolves `family(τ - t, t)` from fiber
/// `(τ - t, θ_{-t} ω)` to `(τ, ω)` and compares with the absorbing radius.
pub fn absorption_scan(
    alpha: f64,
    spec: &CloudSpec,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
    times: &[f64],
    family: impl Fn(f64) -> Vec<LatticeVec>,
) -> Result<AbsorptionReport> {
    let params = params.with_alpha(alpha);
    let ball = absorbing_radius(alpha, spec.tau, path, &params, forcing, spec.horizon, spec.half_width)?;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let init = family(spec.tau - t);
        let pts = pullback_points(&init, spec.tau, t, path, &params, forcing)?;
        let worst = pts.iter().map(|p| p.l2_norm().powi(2)).fold(0.0, f64::max);
        rows.push((t, worst));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut entry_time = None;
    for &(t, w) in rows.iter().rev() {
        if w <= ball.radius_sq {
            entry_time = Some(t);
        } else {
            break;
        }
    }
    Ok(AbsorptionReport {
        radius_sq: ball.radius_sq,
        rows,
        entry_time,
    })
}
