//! Cylindrical test functionals `Ψ(u) = a Π_k χ_k((u, g_k))` with closed-form
//! gradient and Hessian, and the bounded-Lipschitz dictionary built from them.

use serde::{Deserialize, Serialize};

use crate::attractor::halton_directions;
use crate::error::{invalid, Error, Result};
use crate::lattice::{dot, LatticeVec};

/// `max_x |d/dx sech²(x)| = 4 / (3√3)`.
const SECH2_SLOPE: f64 = 0.769_800_358_919_501;

/// One-variable profile `χ` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant,
    /// `sech²((y - center) / (2 width))`, the logistic density shape.
    Logistic { center: f64, width: f64 },
    /// `exp(-(y - center)² / (2 width²))`.
    Gaussian { center: f64, width: f64 },
}

impl Profile {
    /// `(χ, χ', χ'')` at `y`.
    pub fn eval(self, y: f64) -> (f64, f64, f64) {
        match self {
            Profile::Constant => (1.0, 0.0, 0.0),
            Profile::Logistic { center, width } => {
                let x = (y - center) / (2.0 * width);
                let th = x.tanh();
                let s2 = 1.0 - th * th;
                let h = 1.0 / (2.0 * width);
                (s2, -2.0 * s2 * th * h, (4.0 * s2 * th * th - 2.0 * s2 * s2) * h * h)
            }
            Profile::Gaussian { center, width } => {
                let x = (y - center) / width;
                let e = (-0.5 * x * x).exp();
                (e, -x * e / width, (x * x - 1.0) * e / (width * width))
            }
        }
    }

    /// Upper bounds of `(|χ|, |χ'|, |χ''|)`.
    pub fn bounds(self) -> (f64, f64, f64) {
        match self {
            Profile::Constant => (1.0, 0.0, 0.0),
            Profile::Logistic { width, .. } => {
                let h = 1.0 / (2.0 * width);
                (1.0, SECH2_SLOPE * h, 2.0 * h * h)
            }
            Profile::Gaussian { width, .. } => (1.0, (-0.5f64).exp() / width, 1.0 / (width * width)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylTestFunction {
    pub directions: Vec<LatticeVec>,
    pub profiles: Vec<Profile>,
    pub amplitude: f64,
}

impl CylTestFunction {
    pub fn new(directions: Vec<LatticeVec>, profiles: Vec<Profile>, amplitude: f64) -> Result<Self> {
        if directions.len() != profiles.len() {
            return Err(invalid("profiles", "need one profile per direction"));
        }
        if let Some(first) = directions.first() {
            if directions.iter().any(|g| g.half_width() != first.half_width()) {
                return Err(Error::Window("directions live on different windows".into()));
            }
        }
        if !amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite"));
        }
        Ok(CylTestFunction {
            directions,
            profiles,
            amplitude,
        })
    }

    /// `Ψ ≡ c`.
    pub fn constant(c: f64) -> Self {
        CylTestFunction {
            directions: Vec::new(),
            profiles: Vec::new(),
            amplitude: c,
        }
    }

    fn coords(&self, u: &[f64]) -> Vec<(f64, f64, f64)> {
        self.directions
            .iter()
            .zip(&self.profiles)
            .map(|(g, chi)| chi.eval(dot(u, g.values())))
            .collect()
    }

    pub fn value(&self, u: &LatticeVec) -> f64 {
        self.value_slice(u.values())
    }

    pub(crate) fn value_slice(&self, u: &[f64]) -> f64 {
        self.amplitude * self.coords(u).iter().map(|c| c.0).product::<f64>()
    }

    /// Coefficients `c_k = ∂_k χ`, so that `Ψ'(u) = Σ c_k g_k`.
    pub fn gradient_coeffs(&self, u: &[f64]) -> Vec<f64> {
        let c = self.coords(u);
        (0..c.len())
            .map(|k| {
                let others: f64 = c.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, x)| x.0).product();
                self.amplitude * c[k].1 * others
            })
            .collect()
    }

    /// `Ψ'(u) ∈ span{g_k}`.
    pub fn gradient(&self, u: &LatticeVec) -> LatticeVec {
        let mut out = vec![0.0; u.len()];
        for (ck, g) in self.gradient_coeffs(u.values()).into_iter().zip(&self.directions) {
            for (o, gi) in out.iter_mut().zip(g.values()) {
                *o += ck * gi;
            }
        }
        LatticeVec::new(u.half_width(), out).expect("window length matches")
    }

    /// `(v, Ψ'(u)) = Σ c_k (v, g_k)`.
    pub fn gradient_pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        self.gradient_coeffs(u)
            .into_iter()
            .zip(&self.directions)
            .map(|(ck, g)| ck * dot(v, g.values()))
            .sum()
    }

    /// `Ψ''(u)(a, b) = Σ_{k,l} ∂²_{kl} χ (a, g_k)(b, g_l)`.
    pub fn hessian_form(&self, u: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let c = self.coords(u);
        let m = c.len();
        let pa: Vec<f64> = self.directions.iter().map(|g| dot(a, g.values())).collect();
        let pb: Vec<f64> = self.directions.iter().map(|g| dot(b, g.values())).collect();
        let mut total = 0.0;
        for k in 0..m {
            for l in 0..m {
                let mut term = 1.0;
                for (j, cj) in c.iter().enumerate() {
                    term *= match (j == k, j == l) {
                        (true, true) => cj.2,
                        (true, false) | (false, true) => cj.1,
                        (false, false) => cj.0,
                    };
                }
                total += term * pa[k] * pb[l];
            }
        }
        self.amplitude * total
    }

    pub fn sup_bound(&self) -> f64 {
        self.amplitude.abs() * self.profiles.iter().map(|p| p.bounds().0).product::<f64>()
    }

    /// Upper bound of the ℓ² Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        let b: Vec<(f64, f64, f64)> = self.profiles.iter().map(|p| p.bounds()).collect();
        let mut total = 0.0;
        for k in 0..b.len() {
            let others: f64 = b.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, x)| x.0).product();
            total += b[k].1 * others * self.directions[k].l2_norm();
        }
        self.amplitude.abs() * total
    }

    /// Upper bound of the operator norm of `Ψ''(u)` on ℓ².
    pub fn hessian_bound(&self) -> f64 {
        let b: Vec<(f64, f64, f64)> = self.profiles.iter().map(|p| p.bounds()).collect();
        let norms: Vec<f64> = self.directions.iter().map(|g| g.l2_norm()).collect();
        let m = b.len();
        let mut total = 0.0;
        for k in 0..m {
            for l in 0..m {
                let mut term = 1.0;
                for (j, bj) in b.iter().enumerate() {
                    term *= match (j == k, j == l) {
                        (true, true) => bj.2,
                        (true, false) | (false, true) => bj.1,
                        (false, false) => bj.0,
                    };
                }
                total += term * norms[k] * norms[l];
            }
        }
        self.amplitude.abs() * total
    }
}

/// Finite family of bounded-Lipschitz test functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionDict {
    pub functions: Vec<CylTestFunction>,
    /// Radius of the working ball the normalisation refers to.
    pub radius: f64,
}

pub const BUMP_CENTERS: [f64; 4] = [-0.75, -0.25, 0.25, 0.75];
pub const BUMP_WIDTH: f64 = 0.25;

impl TestFunctionDict {
    /// `4 n_dirs` functionals `u ↦ a sech²(((u, d)/R - c) / (2w))` over Halton
    /// directions `d`, scaled so that `sup |Ψ| ≤ 1` and `Lip Ψ ≤ 1`.
    pub fn standard(half_width: usize, radius: f64, n_dirs: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", "working ball radius must be positive"));
        }
        let dirs = halton_directions(n_dirs, 2 * half_width + 1);
        let mut functions = Vec::with_capacity(4 * n_dirs);
        for d in dirs {
            let g = LatticeVec::new(half_width, d.into_iter().map(|x| x / radius).collect())?;
            for &c in &BUMP_CENTERS {
                let profile = Profile::Logistic {
                    center: c,
                    width: BUMP_WIDTH,
                };
                let mut f = CylTestFunction::new(vec![g.clone()], vec![profile], 1.0)?;
                let lip = f.lipschitz_bound();
                if lip > 1.0 {
                    f.amplitude = 1.0 / lip;
                }
                functions.push(f);
            }
        }
        Ok(TestFunctionDict { functions, radius })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0..1.0f64, 2 * n + 1)
    }

    fn sample_fn() -> CylTestFunction {
        let g1 = LatticeVec::from_fn(2, |i| 0.3 + 0.1 * i as f64).unwrap();
        let g2 = LatticeVec::from_fn(2, |i| if i == 0 { 0.5 } else { -0.2 }).unwrap();
        CylTestFunction::new(
            vec![g1, g2],
            vec![
                Profile::Logistic { center: 0.1, width: 0.3 },
                Profile::Gaussian { center: -0.2, width: 0.5 },
            ],
            0.8,
        )
        .unwrap()
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let h = 1e-5;
        for p in [
            Profile::Logistic { center: 0.2, width: 0.25 },
            Profile::Gaussian { center: -0.3, width: 0.4 },
        ] {
            for k in 0..40 {
                let y = -2.0 + 0.1 * k as f64;
                let (_, d1, d2) = p.eval(y);
                let fd1 = (p.eval(y + h).0 - p.eval(y - h).0) / (2.0 * h);
                let fd2 = (p.eval(y + h).1 - p.eval(y - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-8);
                assert!((d2 - fd2).abs() < 1e-7);
                let (b0, b1, b2) = p.bounds();
                let (v0, v1, v2) = p.eval(y);
                assert!(v0.abs() <= b0 && v1.abs() <= b1 + 1e-12 && v2.abs() <= b2 + 1e-12);
            }
        }
    }

    #[test]
    fn dictionary_normalisation() {
        let dict = TestFunctionDict::standard(4, 0.5, 8).unwrap();
        assert_eq!(dict.len(), 32);
        for f in &dict.functions {
            assert!(f.sup_bound() <= 1.0 && f.lipschitz_bound() <= 1.0 + 1e-12);
        }
        let wide = TestFunctionDict::standard(4, 10.0, 8).unwrap();
        assert!(wide.functions.iter().all(|f| f.amplitude == 1.0));
    }

    #[test]
    fn constant_has_no_derivatives() {
        let c = CylTestFunction::constant(2.5);
        let u = LatticeVec::from_fn(3, |i| i as f64).unwrap();
        assert_eq!(c.value(&u), 2.5);
        assert!(c.gradient(&u).is_zero());
        assert_eq!(c.hessian_form(u.values(), u.values(), u.values()), 0.0);
    }

    proptest! {
        #[test]
        fn frechet_remainder_is_quadratic(u in vec_strategy(2), v in vec_strategy(2), eps in 1e-3..1.0f64) {
            let f = sample_fn();
            let u = LatticeVec::new(2, u).unwrap();
            let v = LatticeVec::new(2, v).unwrap().scale(eps);
            let rem = f.value(&u.add(&v)) - f.value(&u) - f.gradient_pairing(u.values(), v.values());
            prop_assert!(rem.abs() <= 0.5 * f.hessian_bound() * v.l2_norm().powi(2) + 1e-14);
        }

        #[test]
        fn gradient_and_hessian_match_differences(u in vec_strategy(2), a in vec_strategy(2), b in vec_strategy(2)) {
            let f = sample_fn();
            let h = 1e-5;
            let up = |x: &[f64], s: f64, d: &[f64]| -> Vec<f64> { x.iter().zip(d).map(|(p, q)| p + s * q).collect() };
            let fd = (f.value_slice(&up(&u, h, &a)) - f.value_slice(&up(&u, -h, &a))) / (2.0 * h);
            prop_assert!((fd - f.gradient_pairing(&u, &a)).abs() < 1e-7);
            let fd2 = (f.gradient_pairing(&up(&u, h, &b), &a) - f.gradient_pairing(&up(&u, -h, &b), &a)) / (2.0 * h);
            prop_assert!((fd2 - f.hessian_form(&u, &a, &b)).abs() < 1e-6);
            prop_assert!((f.hessian_form(&u, &a, &b) - f.hessian_form(&u, &b, &a)).abs() < 1e-12);
            let grad = f.gradient(&LatticeVec::new(2, u.clone()).unwrap());
            prop_assert!((dot(grad.values(), &a) - f.gradient_pairing(&u, &a)).abs() < 1e-12);
        }
    }
}
