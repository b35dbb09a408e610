//! Finite-window lattice vectors and the difference operators acting on them.
//!
//! A [`LatticeVec`] stores the entries `u_i` for `i` in `[-N, N]`; every entry
//! outside the window is zero. Operators use that zero extension, so the
//! discrete p-Laplacian below is the Dirichlet truncation of the operator on
//! the full lattice.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Sum with pairwise (cascade) reduction; bounded rounding growth on long windows.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `|x|^{e} x`, with the `0^0 = 1` convention (so `e = 0` gives `x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SignedPow {
    Linear,
    Int(i32),
    Real(f64),
}

impl SignedPow {
    pub(crate) fn new(exponent: f64) -> Self {
        if exponent == 0.0 {
            SignedPow::Linear
        } else if exponent.fract() == 0.0 && exponent.abs() <= 16.0 {
            SignedPow::Int(exponent as i32)
        } else {
            SignedPow::Real(exponent)
        }
    }

    #[inline(always)]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            SignedPow::Linear => x,
            SignedPow::Int(1) => x.abs() * x,
            SignedPow::Int(2) => x * x * x,
            SignedPow::Int(k) => x.abs().powi(k) * x,
            SignedPow::Real(e) => x.abs().powf(e) * x,
        }
    }
}

/// Truncation of a bi-infinite sequence to the window `[-N, N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeVec {
    half_width: usize,
    values: Vec<f64>,
}

impl LatticeVec {
    pub fn new(half_width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 2 * half_width + 1 {
            return Err(Error::Window(format!(
                "expected {} values for half width {half_width}, got {}",
                2 * half_width + 1,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(
                "values",
                format!("entry at i = {} is not finite", pos as i64 - half_width as i64),
            ));
        }
        Ok(LatticeVec { half_width, values })
    }

    /// Builds a vector without the finiteness scan; callers guarantee the length.
    pub(crate) fn from_raw(half_width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), 2 * half_width + 1);
        LatticeVec { half_width, values }
    }

    pub fn zeros(half_width: usize) -> Self {
        LatticeVec {
            half_width,
            values: vec![0.0; 2 * half_width + 1],
        }
    }

    /// Coordinate vector `e_i`.
    pub fn unit(half_width: usize, i: i64) -> Result<Self> {
        let mut u = Self::zeros(half_width);
        let idx = u
            .index_of(i)
            .ok_or_else(|| Error::Window(format!("site {i} outside [-{half_width}, {half_width}]")))?;
        u.values[idx] = 1.0;
        Ok(u)
    }

    pub fn from_fn(half_width: usize, mut f: impl FnMut(i64) -> f64) -> Result<Self> {
        let n = half_width as i64;
        Self::new(half_width, (-n..=n).map(&mut f).collect())
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn index_of(&self, i: i64) -> Option<usize> {
        let n = self.half_width as i64;
        (-n..=n).contains(&i).then(|| (i + n) as usize)
    }

    /// Entry at site `i`; zero outside the window.
    pub fn get(&self, i: i64) -> f64 {
        self.index_of(i).map_or(0.0, |k| self.values[k])
    }

    /// Iterator over `(site, value)` pairs.
    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.half_width as i64;
        self.values.iter().enumerate().map(move |(k, &v)| (k as i64 - n, v))
    }

    /// Zero-pads into the larger window `[-M, M]`.
    pub fn embed(&self, half_width: usize) -> Result<Self> {
        if half_width < self.half_width {
            return Err(Error::Window(format!(
                "cannot embed half width {} into smaller window {half_width}",
                self.half_width
            )));
        }
        let pad = half_width - self.half_width;
        let mut values = vec![0.0; 2 * half_width + 1];
        values[pad..pad + self.values.len()].copy_from_slice(&self.values);
        Ok(LatticeVec { half_width, values })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.half_width, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other` after embedding both into the larger window.
    pub fn axpy(&self, c: f64, other: &LatticeVec) -> Self {
        let (a, b) = common_window(self, other);
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + c * y).collect();
        Self::from_raw(a.half_width, values)
    }

    pub fn sub(&self, other: &LatticeVec) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &LatticeVec) -> Self {
        self.axpy(1.0, other)
    }

    /// Entrywise product `u ⊗ v`.
    pub fn hadamard(&self, other: &LatticeVec) -> Self {
        let (a, b) = common_window(self, other);
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
        Self::from_raw(a.half_width, values)
    }

    pub fn l2_norm(&self) -> f64 {
        lp_norm_slice(&self.values, 2.0)
    }
}

fn common_window<'a>(
    a: &'a LatticeVec,
    b: &'a LatticeVec,
) -> (std::borrow::Cow<'a, LatticeVec>, std::borrow::Cow<'a, LatticeVec>) {
    use std::borrow::Cow;
    let n = a.half_width.max(b.half_width);
    let lift = |v: &'a LatticeVec| {
        if v.half_width == n {
            Cow::Borrowed(v)
        } else {
            Cow::Owned(v.embed(n).expect("target window is the larger one"))
        }
    };
    (lift(a), lift(b))
}

pub(crate) fn lp_norm_slice(xs: &[f64], p: f64) -> f64 {
    let m = xs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    let terms: Vec<f64> = if p == 2.0 {
        xs.iter().map(|v| (v / m) * (v / m)).collect()
    } else if p == 1.0 {
        xs.iter().map(|v| v.abs() / m).collect()
    } else {
        xs.iter().map(|v| (v.abs() / m).powf(p)).collect()
    };
    m * pairwise_sum(&terms).powf(1.0 / p)
}

/// `(Σ |u_i|^p)^{1/p}`, or `sup |u_i|` for `p = ∞`.
pub fn lp_norm(u: &LatticeVec, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("norm exponent must be >= 1, got {p}")));
    }
    Ok(lp_norm_slice(&u.values, p))
}

/// Norm of `V = ℓ² ∩ ℓ^q`: `‖u‖ + ‖u‖_q`.
pub fn cap_norm(u: &LatticeVec, q: f64) -> Result<f64> {
    Ok(lp_norm(u, 2.0)? + lp_norm(u, q)?)
}

/// Forward difference `(Bu)_i = u_{i+1} - u_i`.
pub fn op_b(u: &LatticeVec) -> LatticeVec {
    let n = u.half_width as i64;
    let values = (-n..=n).map(|i| u.get(i + 1) - u.get(i)).collect();
    LatticeVec::from_raw(u.half_width, values)
}

/// Backward difference `(B*u)_i = u_{i-1} - u_i`, the adjoint of [`op_b`].
pub fn op_bstar(u: &LatticeVec) -> LatticeVec {
    let n = u.half_width as i64;
    let values = (-n..=n).map(|i| u.get(i - 1) - u.get(i)).collect();
    LatticeVec::from_raw(u.half_width, values)
}

/// Writes `A u` into `out`; `u` and `out` are raw window slices of equal length.
///
/// `(Au)_i = φ(u_i - u_{i-1}) - φ(u_{i+1} - u_i)` with `φ(x) = |x|^{p-2} x` and
/// zero extension past both window edges.
#[inline]
pub(crate) fn apply_a_into(out: &mut [f64], u: &[f64], pow: SignedPow) {
    debug_assert_eq!(out.len(), u.len());
    let n = u.len();
    let mut left_flux = pow.apply(u[0]);
    for i in 0..n {
        let next = if i + 1 < n { u[i + 1] } else { 0.0 };
        let right_flux = pow.apply(next - u[i]);
        out[i] = left_flux - right_flux;
        left_flux = right_flux;
    }
}

/// Discrete p-Laplacian `Au = B*(|Bu|^{p-2} ⊗ Bu)`; reduces to the negative
/// discrete Laplacian at `p = 2`.
pub fn op_a(u: &LatticeVec, p: f64) -> Result<LatticeVec> {
    if !(p >= 2.0) {
        return Err(invalid("p", format!("p-Laplacian needs p >= 2, got {p}")));
    }
    let mut out = vec![0.0; u.len()];
    apply_a_into(&mut out, &u.values, SignedPow::new(p - 2.0));
    Ok(LatticeVec::from_raw(u.half_width, out))
}

/// `Σ u_i v_i`; both the ℓ² inner product and the `V*`-`V` duality pairing.
pub fn pairing(u: &LatticeVec, v: &LatticeVec) -> f64 {
    if u.half_width == v.half_width {
        return dot(&u.values, &v.values);
    }
    let (a, b) = common_window(u, v);
    dot(&a.values, &b.values)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

/// `(Σ_{|i| > cutoff} |u_i|^p)^{1/p}`.
pub fn tail_norm(u: &LatticeVec, cutoff: usize, p: f64) -> Result<f64> {
    if cutoff > u.half_width {
        return Err(Error::Window(format!(
            "cutoff {cutoff} exceeds window half width {}",
            u.half_width
        )));
    }
    if !(p >= 1.0) {
        return Err(invalid("p", format!("norm exponent must be >= 1, got {p}")));
    }
    let c = cutoff as i64;
    let tail: Vec<f64> = u.sites().filter(|(i, _)| i.abs() > c).map(|(_, v)| v).collect();
    Ok(lp_norm_slice(&tail, p))
}
