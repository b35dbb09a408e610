//! Model parameters, the forcing family, the conjugated random ODE and its
//! time integrator, the cocycle, and the energy-bound diagnostics.
//!
//! With `v = e^{-α z(θ_t ω)} u`, the lattice SDE becomes the pathwise system
//!
//! ```text
//! dv/dt = -e^{α(p-2)z} ν(t) A v + (α z - λ) v + e^{-α z} f(t, e^{α z} v)
//! ```
//!
//! which is integrated with Heun steps on the noise grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{lp_norm_slice, op_a, LatticeVec, SignedPow};
use crate::noise::NoisePath;

/// Time profile of the diffusion coefficient `ν(t) ∈ [0, ν₀]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuProfile {
    Constant { value: f64 },
    /// `mean + amplitude sin(frequency t)`, nonnegative when `amplitude <= mean`.
    Sinusoidal { mean: f64, amplitude: f64, frequency: f64 },
    /// Piecewise constant: `values[j]` on `[breaks[j-1], breaks[j])`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl Default for NuProfile {
    fn default() -> Self {
        NuProfile::Constant { value: 1.0 }
    }
}

impl NuProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            NuProfile::Constant { value } => *value,
            NuProfile::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (frequency * t).sin(),
            NuProfile::Piecewise { breaks, values } => {
                let j = breaks.partition_point(|&b| b <= t);
                values[j]
            }
        }
    }

    /// The declared bound `ν₀`.
    pub fn nu0(&self) -> f64 {
        match self {
            NuProfile::Constant { value } => *value,
            NuProfile::Sinusoidal { mean, amplitude, .. } => mean + amplitude.abs(),
            NuProfile::Piecewise { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            NuProfile::Constant { value } => *value >= 0.0 && value.is_finite(),
            NuProfile::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => *mean >= amplitude.abs() && mean.is_finite() && frequency.is_finite(),
            NuProfile::Piecewise { breaks, values } => {
                values.len() == breaks.len() + 1
                    && breaks.windows(2).all(|w| w[0] < w[1])
                    && values.iter().all(|v| *v >= 0.0 && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("nu", format!("profile {self:?} is not a valid nonnegative bounded profile")))
        }
    }
}

/// Model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub beta: f64,
    pub alpha: f64,
    pub nu: NuProfile,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            p: 3.0,
            q: 4.0,
            lambda: 1.0,
            lambda0: 1.5,
            lambda1: 1.0,
            beta: 1.0,
            alpha: 0.3,
            nu: NuProfile::default(),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return Err(invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        if !(self.q >= 1.0) || !self.q.is_finite() {
            return Err(invalid("q", format!("need q >= 1, got {}", self.q)));
        }
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", format!("need lambda > 0, got {}", self.lambda)));
        }
        if !(0.0 < self.lambda1 && self.lambda1 < self.lambda0 && self.lambda0 < 2.0 * self.lambda) {
            return Err(invalid(
                "lambda0/lambda1",
                format!(
                    "need 0 < lambda1 < lambda0 < 2 lambda, got {} < {} < {}",
                    self.lambda1,
                    self.lambda0,
                    2.0 * self.lambda
                ),
            ));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta", format!("need beta > 0, got {}", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        self.nu.validate()
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        SystemParams {
            alpha,
            ..self.clone()
        }
    }
}

/// Growth constants `κ₀, Λ, t₀` used by the existence theory when `q < 2`.
/// They are validated but never enter the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub kappa0: f64,
    pub lambda_cap: f64,
    pub t0: f64,
}

/// Nonlinear forcing `f_i(t, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Forcing {
    /// `f ≡ 0`.
    Zero,
    /// `f_i(t, u) = -β u |u|^{q-2} + g_i sin(γ t + phase)` with
    /// `g_i = amplitude / (1 + i²)^decay_power`; `β, q` come from [`SystemParams`].
    PowerSine {
        amplitude: f64,
        #[serde(default = "default_decay_power")]
        decay_power: f64,
        gamma: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        growth: Option<GrowthConstants>,
    },
}

fn default_decay_power() -> f64 {
    1.0
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing::PowerSine {
            amplitude: 1.0,
            decay_power: 1.0,
            gamma: 1.0,
            phase: 0.0,
            growth: None,
        }
    }
}

/// Which structural assumptions on `f` the forcing satisfies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Dissipativity `f_i u ≤ -β' |u|^q + ψ_{1i}` with `ψ₁ ∈ ℓ¹` and a
    /// one-sided derivative bound.
    pub f1: bool,
    /// `∫_{-∞}^0 e^{λ₁ s} ‖ψ₁(s)‖₁ ds < ∞`.
    pub f2: bool,
    /// Growth bound with `ψ₃ ∈ ℓ^q ∩ ℓ¹` on the whole lattice.
    pub f3_lattice: bool,
    /// Same growth bound restricted to the finite window.
    pub f3_window: bool,
    /// `ψ₃, ψ₄ ∈ ℓ²` on the whole lattice.
    pub f4_lattice: bool,
    pub f4_window: bool,
    /// `|∂f/∂u| ≤ ψ₅` on bounded state sets.
    pub f5: bool,
    pub notes: Vec<String>,
}

impl Forcing {
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        match self {
            Forcing::Zero => Ok(()),
            Forcing::PowerSine {
                amplitude,
                decay_power,
                gamma,
                phase,
                growth,
            } => {
                if params.q < 2.0 {
                    return Err(invalid(
                        "q",
                        "the power-sine forcing needs q >= 2 (its derivative is unbounded at 0 otherwise)",
                    ));
                }
                if !(amplitude.is_finite() && gamma.is_finite() && phase.is_finite()) {
                    return Err(invalid("forcing", "coefficients must be finite"));
                }
                if !(*decay_power > 0.5) {
                    return Err(invalid(
                        "decay_power",
                        format!("profile must be in ℓ¹ (decay_power > 1/2), got {decay_power}"),
                    ));
                }
                if let Some(g) = growth {
                    if !(g.kappa0 > 0.0 && g.lambda_cap > 0.0 && g.t0 > 0.0) {
                        return Err(invalid("growth", "kappa0, lambda_cap and t0 must be positive"));
                    }
                    if !(params.q * params.lambda0 > 2.0 * g.kappa0) {
                        return Err(invalid("growth", "need q lambda0 > 2 kappa0"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Spatial profile `g_i` on the window.
    pub fn profile(&self, half_width: usize) -> LatticeVec {
        match self {
            Forcing::Zero => LatticeVec::zeros(half_width),
            Forcing::PowerSine {
                amplitude,
                decay_power,
                ..
            } => {
                let n = half_width as i64;
                let g = (-n..=n)
                    .map(|i| amplitude / (1.0 + (i * i) as f64).powf(*decay_power))
                    .collect();
                LatticeVec::from_raw(half_width, g)
            }
        }
    }

    fn time_factor(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::PowerSine { gamma, phase, .. } => (gamma * t + phase).sin(),
        }
    }

    /// `f(t, u)` on the window.
    pub fn eval(&self, t: f64, u: &LatticeVec, params: &SystemParams) -> LatticeVec {
        match self {
            Forcing::Zero => LatticeVec::zeros(u.half_width()),
            Forcing::PowerSine { .. } => {
                let g = self.profile(u.half_width());
                let s = self.time_factor(t);
                let pow = SignedPow::new(params.q - 2.0);
                let values = u
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&x, &gi)| -params.beta * pow.apply(x) + gi * s)
                    .collect();
                LatticeVec::from_raw(u.half_width(), values)
            }
        }
    }

    /// Coefficient `β'` in the dissipativity bound `f_i u ≤ -β'|u|^q + ψ_{1i}`.
    ///
    /// Young's inequality spends half of `β` on absorbing the source term.
    pub fn coercivity(&self, params: &SystemParams) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::PowerSine { .. } => 0.5 * params.beta,
        }
    }

    /// `ψ₁(t)` in closed form: `max_x (|a| x - (β/2) x^q) = (1 - 1/q)|a| (2|a|/(β q))^{1/(q-1)}`
    /// with `a = g_i sin(γt + phase)`.
    pub fn psi1(&self, t: f64, half_width: usize, params: &SystemParams) -> LatticeVec {
        match self {
            Forcing::Zero => LatticeVec::zeros(half_width),
            Forcing::PowerSine { .. } => {
                let s = self.time_factor(t).abs();
                let q = params.q;
                let values = self
                    .profile(half_width)
                    .values()
                    .iter()
                    .map(|gi| {
                        let a = gi.abs() * s;
                        (1.0 - 1.0 / q) * a * (2.0 * a / (params.beta * q)).powf(1.0 / (q - 1.0))
                    })
                    .collect();
                LatticeVec::from_raw(half_width, values)
            }
        }
    }

    pub fn psi1_l1(&self, t: f64, half_width: usize, params: &SystemParams) -> f64 {
        lp_norm_slice(self.psi1(t, half_width, params).values(), 1.0)
    }

    /// Bound `ψ₅` on `|∂f_i/∂u|` over states with `|u_i| ≤ radius`.
    pub fn psi5(&self, radius: f64, params: &SystemParams) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::PowerSine { .. } => params.beta * (params.q - 1.0) * radius.powf(params.q - 2.0),
        }
    }

    pub fn assumptions(&self, params: &SystemParams) -> AssumptionReport {
        match self {
            Forcing::Zero => AssumptionReport {
                f1: false,
                f2: true,
                f3_lattice: true,
                f3_window: true,
                f4_lattice: true,
                f4_window: true,
                f5: true,
                notes: vec!["f = 0 has no coercive term (beta' = 0)".into()],
            },
            Forcing::PowerSine { .. } => AssumptionReport {
                f1: true,
                f2: params.lambda1 > 0.0,
                f3_lattice: false,
                f3_window: true,
                f4_lattice: false,
                f4_window: true,
                f5: true,
                notes: vec![
                    "growth coefficient psi3 = beta is constant in i: in l^inf, not in l^1 or l^2 on Z".into(),
                ],
            },
        }
    }
}

/// Precomputed forcing and operator data for the hot loop.
#[derive(Debug, Clone)]
pub(crate) struct RhsKernel {
    pow_a: SignedPow,
    pow_q: SignedPow,
    p: f64,
    q: f64,
    alpha: f64,
    lambda: f64,
    beta: f64,
    nu: NuProfile,
    forcing: Forcing,
    g: Vec<f64>,
    has_forcing: bool,
}

impl RhsKernel {
    pub(crate) fn new(params: &SystemParams, forcing: &Forcing, half_width: usize) -> Self {
        RhsKernel {
            pow_a: SignedPow::new(params.p - 2.0),
            pow_q: SignedPow::new(params.q - 2.0),
            p: params.p,
            q: params.q,
            alpha: params.alpha,
            lambda: params.lambda,
            beta: params.beta,
            nu: params.nu.clone(),
            forcing: forcing.clone(),
            g: forcing.profile(half_width).into_values(),
            has_forcing: !matches!(forcing, Forcing::Zero),
        }
    }

    /// `out = F(t, ω, v)` given `z = z(θ_t ω)`.
    #[inline]
    pub(crate) fn eval(&self, out: &mut [f64], t: f64, z: f64, v: &[f64]) {
        let az = self.alpha * z;
        let diff = (az * (self.p - 2.0)).exp() * self.nu.eval(t);
        let lin = az - self.lambda;
        // e^{-αz} f(t, e^{αz} v) = -β e^{α(q-2)z} |v|^{q-2} v + e^{-αz} g sin(...)
        let (damp, src) = if self.has_forcing {
            (
                -self.beta * (az * (self.q - 2.0)).exp(),
                (-az).exp() * self.forcing.time_factor(t),
            )
        } else {
            (0.0, 0.0)
        };
        let c = Coeffs { diff, lin, damp, src };
        let (pa, pq) = (self.pow_a, self.pow_q);
        match (pa, pq) {
            (SignedPow::Int(1), SignedPow::Int(2)) => fused(out, v, &self.g, c, |x| x.abs() * x, |x| x * x * x),
            (SignedPow::Linear, SignedPow::Int(2)) => fused(out, v, &self.g, c, |x| x, |x| x * x * x),
            (SignedPow::Int(1), SignedPow::Linear) => fused(out, v, &self.g, c, |x| x.abs() * x, |x| x),
            (SignedPow::Linear, SignedPow::Linear) => fused(out, v, &self.g, c, |x| x, |x| x),
            _ => fused(out, v, &self.g, c, |x| pa.apply(x), |x| pq.apply(x)),
        }
    }
}

#[derive(Clone, Copy)]
struct Coeffs {
    diff: f64,
    lin: f64,
    damp: f64,
    src: f64,
}

/// One pass over the window: flux stencil of `A` with zero extension, linear
/// term, damping and source.
#[inline(always)]
fn fused(out: &mut [f64], v: &[f64], g: &[f64], c: Coeffs, flux: impl Fn(f64) -> f64, damp: impl Fn(f64) -> f64) {
    let n = v.len();
    let mut left = flux(v[0]);
    for i in 0..n {
        let next = if i + 1 < n { v[i + 1] } else { 0.0 };
        let right = flux(next - v[i]);
        out[i] = -c.diff * (left - right) + c.lin * v[i] + c.damp * damp(v[i]) + c.src * g[i];
        left = right;
    }
}

/// Right-hand side `F(t, ω, v)` of the conjugated system.
pub fn rhs_f(
    t: f64,
    path: &NoisePath,
    v: &LatticeVec,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<LatticeVec> {
    let z = path.z_at(t)?;
    let kernel = RhsKernel::new(params, forcing, v.half_width());
    let mut out = vec![0.0; v.len()];
    kernel.eval(&mut out, t, z, v.values());
    Ok(LatticeVec::from_raw(v.half_width(), out))
}

/// The three terms of `F` evaluated separately (diffusion, linear, forcing).
pub fn rhs_terms(
    t: f64,
    path: &NoisePath,
    v: &LatticeVec,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<[LatticeVec; 3]> {
    let z = path.z_at(t)?;
    let az = params.alpha * z;
    let diff = op_a(v, params.p)?.scale(-(az * (params.p - 2.0)).exp() * params.nu.eval(t));
    let lin = v.scale(az - params.lambda);
    let force = forcing.eval(t, &v.scale(az.exp()), params).scale((-az).exp());
    Ok([diff, lin, force])
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    /// Keep every `record_stride`-th state.
    pub record_stride: usize,
    /// Norm above which a state counts as blown up.
    pub guard: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            record_stride: 1,
            guard: 1e8,
        }
    }
}

/// Heun stepper on the noise grid.
pub(crate) struct Stepper<'a> {
    kernel: RhsKernel,
    path: &'a NoisePath,
    z: &'a [f64],
    k1: Vec<f64>,
    k2: Vec<f64>,
    pred: Vec<f64>,
    guard: f64,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        params: &SystemParams,
        forcing: &Forcing,
        path: &'a NoisePath,
        half_width: usize,
        guard: f64,
    ) -> Result<Self> {
        let n = 2 * half_width + 1;
        Ok(Stepper {
            kernel: RhsKernel::new(params, forcing, half_width),
            path,
            z: path.z_slice()?,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            pred: vec![0.0; n],
            guard,
        })
    }

    /// Advances `v` from local grid index `k` to `k + 1`.
    #[inline]
    pub(crate) fn step(&mut self, v: &mut [f64], k: usize) {
        let dt = self.path.dt();
        let (t0, t1) = (self.path.time(k), self.path.time(k + 1));
        self.kernel.eval(&mut self.k1, t0, self.z[k], v);
        for i in 0..v.len() {
            self.pred[i] = v[i] + dt * self.k1[i];
        }
        self.kernel.eval(&mut self.k2, t1, self.z[k + 1], &self.pred);
        for i in 0..v.len() {
            v[i] += 0.5 * dt * (self.k1[i] + self.k2[i]);
        }
    }

    pub(crate) fn check(&self, v: &[f64], k: usize) -> Result<()> {
        let bad = v.iter().any(|x| !x.is_finite()) || lp_norm_slice(v, 2.0) > self.guard;
        if bad {
            return Err(Error::BlowUp {
                t: self.path.time(k),
                sample: None,
            });
        }
        Ok(())
    }

    /// Runs `v` from local index `from` to `to`, checking the guard periodically.
    pub(crate) fn run(&mut self, v: &mut [f64], from: usize, to: usize) -> Result<()> {
        for k in from..to {
            self.step(v, k);
            if (k + 1 - from) % 64 == 0 || k + 1 == to {
                self.check(v, k + 1)?;
            }
        }
        Ok(())
    }
}

/// A recorded solution in both the conjugated (`v`) and physical (`u`) variables.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<LatticeVec>,
    pub u: Vec<LatticeVec>,
    pub tau: f64,
    pub u_init: LatticeVec,
    pub params: SystemParams,
    pub forcing: Forcing,
    pub path: NoisePath,
}

impl Trajectory {
    pub fn last_u(&self) -> &LatticeVec {
        self.u.last().expect("trajectory is never empty")
    }

    pub fn last_v(&self) -> &LatticeVec {
        self.v.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates the conjugated system from `v(τ) = v_init` to `t_end` on `path`.
pub fn integrate(
    v_init: &LatticeVec,
    tau: f64,
    t_end: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    let (k0, k1) = path.span(tau, t_end)?;
    let z = path.z_slice()?;
    let stride = opts.record_stride.max(1);
    let n = v_init.half_width();
    let mut stepper = Stepper::new(params, forcing, path, n, opts.guard)?;
    let mut v = v_init.values().to_vec();
    let record = |v: &[f64], k: usize, traj: &mut Trajectory| {
        let ez = (params.alpha * z[k]).exp();
        traj.times.push(path.time(k));
        traj.z.push(z[k]);
        traj.v.push(LatticeVec::from_raw(n, v.to_vec()));
        traj.u.push(LatticeVec::from_raw(n, v.iter().map(|x| ez * x).collect()));
    };
    let u_init = v_init.scale((params.alpha * z[k0]).exp());
    let mut traj = Trajectory {
        times: Vec::new(),
        z: Vec::new(),
        v: Vec::new(),
        u: Vec::new(),
        tau,
        u_init,
        params: params.clone(),
        forcing: forcing.clone(),
        path: path.clone(),
    };
    record(&v, k0, &mut traj);
    for k in k0..k1 {
        stepper.step(&mut v, k);
        let done = k + 1 == k1;
        if (k + 1 - k0) % 64 == 0 || done {
            stepper.check(&v, k + 1)?;
        }
        if (k + 1 - k0) % stride == 0 || done {
            record(&v, k + 1, &mut traj);
        }
    }
    Ok(traj)
}

/// Physical solution `u(t_end, τ, ω, u_τ)` on the path `ω`.
pub fn solve_u(
    t_end: f64,
    tau: f64,
    path: &NoisePath,
    u_tau: &LatticeVec,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<LatticeVec> {
    let (k0, k1) = path.span(tau, t_end)?;
    let z = path.z_slice()?;
    let n = u_tau.half_width();
    let mut stepper = Stepper::new(params, forcing, path, n, IntegrateOptions::default().guard)?;
    let down = (-params.alpha * z[k0]).exp();
    let mut v: Vec<f64> = u_tau.values().iter().map(|x| down * x).collect();
    stepper.run(&mut v, k0, k1)?;
    let up = (params.alpha * z[k1]).exp();
    Ok(LatticeVec::from_raw(n, v.into_iter().map(|x| up * x).collect()))
}

/// The cocycle `φ(t, τ, ω, u_τ) = u(t + τ, τ, θ_{-τ} ω, u_τ)`.
pub fn cocycle_phi(
    t: f64,
    tau: f64,
    path: &NoisePath,
    u_tau: &LatticeVec,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<LatticeVec> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("cocycle time must be nonnegative, got {t}")));
    }
    let shifted = path.theta_shift(-tau)?;
    solve_u(tau + t, tau, &shifted, u_tau, params, forcing)
}

/// Both sides of the energy inequality at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates, along a trajectory,
///
/// ```text
/// lhs(t) = ‖v(t)‖² + 2β' ∫_τ^t e^{2λ(σ-t) + 2α∫_σ^t z + α(q-2) z(σ)} ‖v(σ)‖_q^q dσ
/// rhs(t) = e^{2λ(τ-t) + 2α∫_τ^t z} ‖v(τ)‖² + 2 ∫_τ^t e^{2λ(s-t) + 2α∫_s^t z - 2α z(s)} ‖ψ₁(s)‖₁ ds
/// ```
///
/// with trapezoid quadrature over the recorded grid.
pub fn energy_balance(traj: &Trajectory) -> Vec<EnergyRow> {
    let params = &traj.params;
    let (alpha, lambda, q) = (params.alpha, params.lambda, params.q);
    let beta = traj.forcing.coercivity(params);
    let n = traj.u_init.half_width();
    let qnorm = |v: &LatticeVec| lp_norm_slice(v.values(), q).powf(q);
    let psi = |t: f64| traj.forcing.psi1_l1(t, n, params);

    let mut rows = Vec::with_capacity(traj.len());
    let v0 = traj.v[0].l2_norm().powi(2);
    let mut weight = 1.0; // e^{2λ(τ-t) + 2α∫_τ^t z}
    let mut dissip = 0.0;
    let mut source = 0.0;
    rows.push(EnergyRow {
        t: traj.times[0],
        lhs: v0,
        rhs: v0,
    });
    let mut h_prev = (alpha * (q - 2.0) * traj.z[0]).exp() * qnorm(&traj.v[0]);
    let mut s_prev = (-2.0 * alpha * traj.z[0]).exp() * psi(traj.times[0]);
    for k in 1..traj.len() {
        let h = traj.times[k] - traj.times[k - 1];
        let growth = (-2.0 * lambda * h + alpha * h * (traj.z[k - 1] + traj.z[k])).exp();
        weight *= growth;
        let h_cur = (alpha * (q - 2.0) * traj.z[k]).exp() * qnorm(&traj.v[k]);
        let s_cur = (-2.0 * alpha * traj.z[k]).exp() * psi(traj.times[k]);
        dissip = growth * dissip + 0.5 * h * (growth * h_prev + h_cur);
        source = growth * source + 0.5 * h * (growth * s_prev + s_cur);
        h_prev = h_cur;
        s_prev = s_cur;
        rows.push(EnergyRow {
            t: traj.times[k],
            lhs: traj.v[k].l2_norm().powi(2) + 2.0 * beta * dissip,
            rhs: weight * v0 + 2.0 * source,
        });
    }
    rows
}

fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    for k in 1..values.len() {
        let prev = out[k - 1];
        out.push(prev + 0.5 * h * (values[k - 1] + values[k]));
    }
    out
}

/// `G₁(α, R)` over `[τ, T]`: a bound for `‖v(t)‖²`, `t ∈ (τ, T]`, when `‖u_τ‖ ≤ R`.
///
/// The `∫|z|` exponents carry `|α|` so that the bound also holds for `α < 0`.
pub fn diag_g1(
    alpha: f64,
    tau: f64,
    t_final: f64,
    path: &NoisePath,
    radius: f64,
    params: &SystemParams,
    forcing: &Forcing,
    half_width: usize,
) -> Result<f64> {
    let (k0, k1) = path.span(tau, t_final)?;
    let z = &path.z_slice()?[k0..=k1];
    let h = path.dt();
    let abs_z: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    let cum = cumulative_trapezoid(&abs_z, h);
    let total = *cum.last().expect("nonempty span");
    let a = alpha.abs();
    let first = (2.0 * a * total - 2.0 * alpha * z[0]).exp() * radius * radius;
    let integrand: Vec<f64> = (0..z.len())
        .map(|j| {
            let s = path.time(k0 + j);
            (2.0 * a * (total - cum[j]) - 2.0 * alpha * z[j]).exp()
                * forcing.psi1_l1(s, half_width, params)
        })
        .collect();
    let integral = *cumulative_trapezoid(&integrand, h).last().expect("nonempty");
    Ok(first + 2.0 * integral)
}

/// `E(α) = (1/(2β')) exp(2λ(T-τ) + 2|α|∫_τ^T |z| + |α(q-2)| max |z|)`.
pub fn diag_e(
    alpha: f64,
    tau: f64,
    t_final: f64,
    path: &NoisePath,
    params: &SystemParams,
    forcing: &Forcing,
) -> Result<f64> {
    let (k0, k1) = path.span(tau, t_final)?;
    let z = &path.z_slice()?[k0..=k1];
    let abs_z: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    let int = *cumulative_trapezoid(&abs_z, path.dt()).last().expect("nonempty");
    let zmax = abs_z.iter().copied().fold(0.0, f64::max);
    let beta = forcing.coercivity(params);
    let expo = 2.0 * params.lambda * (t_final - tau)
        + 2.0 * alpha.abs() * int
        + (alpha * (params.q - 2.0)).abs() * zmax;
    Ok(expo.exp() / (2.0 * beta))
}

/// `G₂ = E(α) G₁(α, R)`, a bound for `∫_τ^t ‖v‖_q^q`.
#[allow(clippy::too_many_arguments)]
pub fn diag_g2(
    alpha: f64,
    tau: f64,
    t_final: f64,
    path: &NoisePath,
    radius: f64,
    params: &SystemParams,
    forcing: &Forcing,
    half_width: usize,
) -> Result<f64> {
    Ok(diag_e(alpha, tau, t_final, path, params, forcing)?
        * diag_g1(alpha, tau, t_final, path, radius, params, forcing, half_width)?)
}

/// Outcome of the temperedness check.
#[derive(Debug, Clone, Serialize)]
pub struct TemperedReport {
    /// `(s, e^{λ₀ s + 2α∫_s^0 z - 2α z(s)} R(s)²)`, sorted by decreasing `s`.
    pub weighted: Vec<(f64, f64)>,
    /// Least-squares slope of `ln weighted` against `s`; ≈ λ₀ for bounded radii.
    pub decay_rate: f64,
    pub tempered: bool,
}

/// Weighted radii of a family of sets `D(s)`, `s ≤ 0`, against the universe
/// weight, with the fitted exponential decay rate as `s → -∞`.
pub fn tempered_report(
    radius_history: &[(f64, f64)],
    alpha: f64,
    path: &NoisePath,
    params: &SystemParams,
) -> Result<TemperedReport> {
    if radius_history.len() < 2 {
        return Err(Error::Empty("radius history needs at least two times"));
    }
    let mut hist = radius_history.to_vec();
    hist.sort_by(|a, b| b.0.total_cmp(&a.0));
    let s_min = hist.last().expect("nonempty").0;
    if hist[0].0 > 0.0 {
        return Err(invalid("radius_history", "pullback times must be <= 0"));
    }
    let (k_lo, k_hi) = path.span(s_min, 0.0)?;
    let z = &path.z_slice()?[k_lo..=k_hi];
    // tail[j] = ∫_{t_j}^0 z
    let cum = cumulative_trapezoid(z, path.dt());
    let total = *cum.last().expect("nonempty");
    let mut weighted = Vec::with_capacity(hist.len());
    for &(s, r) in &hist {
        let j = (path.grid_index(s)? - path.grid_index(s_min)?) as usize;
        let tail = total - cum[j];
        let w = (params.lambda0 * s + 2.0 * alpha * tail - 2.0 * alpha * z[j]).exp() * r * r;
        weighted.push((s, w));
    }
    let pts: Vec<(f64, f64)> = weighted
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|&(s, w)| (s, w.ln()))
        .collect();
    let decay_rate = if pts.len() >= 2 { ls_slope(&pts) } else { f64::INFINITY };
    let last = weighted.last().expect("nonempty").1;
    let tempered = decay_rate > 0.1 * params.lambda0 && last < weighted[0].1;
    Ok(TemperedReport {
        weighted,
        decay_rate,
        tempered,
    })
}

pub fn check_tempered(
    radius_history: &[(f64, f64)],
    alpha: f64,
    path: &NoisePath,
    params: &SystemParams,
) -> Result<bool> {
    Ok(tempered_report(radius_history, alpha, path, params)?.tempered)
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
