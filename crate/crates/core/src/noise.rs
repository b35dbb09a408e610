//! Two-sided Wiener paths, the Wiener shift `θ_s`, and the stationary
//! Ornstein-Uhlenbeck process `z(θ_t ω)` solving `dz + z dt = dω`.
//!
//! A [`NoisePath`] is a view onto shared sample arrays. Shifting only relabels
//! the time origin, so `θ_r θ_s ω` and `θ_{r+s} ω` are the same view and every
//! consumer of a path sees bit-identical values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// Default burn-in before `t_min` for the OU process, in time units.
pub const DEFAULT_BURN_IN: f64 = 20.0;

const STREAM_FORWARD: u64 = 1;
const STREAM_BACKWARD: u64 = 2;
const STREAM_BURN_IN: u64 = 3;

/// Relative slack when snapping a time onto the grid.
const GRID_SNAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct NoisePath {
    seed: u64,
    dt: f64,
    burn_in: f64,
    /// Grid index (time / dt) of the first sample of this view.
    first: i64,
    len: usize,
    /// Offset of this view's first sample in the shared arrays.
    start: usize,
    raw_w: Arc<Vec<f64>>,
    raw_z: Option<Arc<Vec<f64>>>,
    /// Raw value of W at this view's time origin.
    w_origin: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples `W` on the grid `{k dt}` covering `[t_min, t_max]`, with `W(0) = 0`.
///
/// Forward and backward halves use separate random streams, so extending the
/// horizon on either side leaves the already-sampled values unchanged.
pub fn sample_wiener(seed: u64, t_min: f64, t_max: f64, dt: f64) -> Result<NoisePath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", format!("grid step must be positive, got {dt}")));
    }
    if !(t_min <= 0.0 && 0.0 <= t_max) || !(t_min < t_max) {
        return Err(invalid(
            "t_min/t_max",
            format!("grid [{t_min}, {t_max}] must contain 0"),
        ));
    }
    let first = (t_min / dt - GRID_SNAP).ceil() as i64;
    let last = (t_max / dt + GRID_SNAP).floor() as i64;
    let back = (-first) as usize;
    let fwd = last as usize;
    let sq = dt.sqrt();

    let mut w = vec![0.0; back + fwd + 1];
    let mut rng = stream_rng(seed, STREAM_FORWARD);
    for k in 1..=fwd {
        let xi: f64 = StandardNormal.sample(&mut rng);
        w[back + k] = w[back + k - 1] + sq * xi;
    }
    let mut rng = stream_rng(seed, STREAM_BACKWARD);
    for k in 1..=back {
        let xi: f64 = StandardNormal.sample(&mut rng);
        w[back - k] = w[back - k + 1] - sq * xi;
    }

    Ok(NoisePath {
        seed,
        dt,
        burn_in: DEFAULT_BURN_IN,
        first,
        len: w.len(),
        start: 0,
        raw_w: Arc::new(w),
        raw_z: None,
        w_origin: 0.0,
    })
}

/// Samples `W` and attaches the stationary OU process in one call.
pub fn sample_noise(seed: u64, t_min: f64, t_max: f64, dt: f64, burn_in: f64) -> Result<NoisePath> {
    sample_wiener(seed, t_min, t_max, dt)?
        .with_burn_in(burn_in)?
        .ou_attach()
}

impl NoisePath {
    /// Path from explicit grid values `W(t_k)`, `t_k = (first + k) dt`.
    ///
    /// The grid must contain 0 and `w` must vanish there.
    pub fn from_values(seed: u64, first: i64, dt: f64, w: Vec<f64>, burn_in: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("grid step must be positive, got {dt}")));
        }
        let last = first + w.len() as i64 - 1;
        if w.is_empty() || first > 0 || last < 0 {
            return Err(invalid("first", "grid must contain t = 0"));
        }
        if w[(-first) as usize] != 0.0 {
            return Err(invalid("w", "W(0) must be 0"));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(invalid("w", "non-finite sample"));
        }
        if !(burn_in >= 0.0) {
            return Err(invalid("burn_in", "must be nonnegative"));
        }
        Ok(NoisePath {
            seed,
            dt,
            burn_in,
            first,
            len: w.len(),
            start: 0,
            raw_w: Arc::new(w),
            raw_z: None,
            w_origin: 0.0,
        })
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Result<Self> {
        if !(burn_in >= 0.0) || !burn_in.is_finite() {
            return Err(invalid("burn_in", format!("must be nonnegative, got {burn_in}")));
        }
        self.burn_in = burn_in;
        Ok(self)
    }

    /// Attaches `z(θ_t ω)` on the grid.
    ///
    /// The initial value at `t_min` comes from an OU run of length `burn_in`
    /// started at zero, driven by a dedicated stream of the same seed. Each grid
    /// step applies `z ← e^{-dt} z + e^{-dt/2} ΔW`, the trapezoidal stochastic
    /// convolution over the already sampled increment.
    pub fn ou_attach(&self) -> Result<NoisePath> {
        let dt = self.dt;
        let decay = (-dt).exp();
        let gain = (-0.5 * dt).exp();
        let mut z0 = 0.0;
        let burn_steps = (self.burn_in / dt).round() as usize;
        if burn_steps > 0 {
            let mut rng = stream_rng(self.seed, STREAM_BURN_IN);
            let sq = dt.sqrt();
            for _ in 0..burn_steps {
                let xi: f64 = StandardNormal.sample(&mut rng);
                z0 = decay * z0 + gain * sq * xi;
            }
        }
        let w = self.w_slice_raw();
        let mut z = Vec::with_capacity(self.len);
        z.push(z0);
        for k in 1..self.len {
            let prev = z[k - 1];
            z.push(decay * prev + gain * (w[k] - w[k - 1]));
        }
        let mut out = self.clone();
        if self.start != 0 || self.raw_w.len() != self.len {
            out.raw_w = Arc::new(w.to_vec());
            out.start = 0;
        }
        out.raw_z = Some(Arc::new(z));
        Ok(out)
    }

    /// The path `t ↦ ω(t + s) - ω(s)`; `z` is carried along as `z(θ_t θ_s ω) = z(θ_{t+s} ω)`.
    ///
    /// `s` must be a grid time inside `[t_min, t_max]`.
    pub fn theta_shift(&self, s: f64) -> Result<NoisePath> {
        let m = self.grid_index(s)?;
        let k = (m - self.first) as usize;
        let mut out = self.clone();
        out.first = self.first - m;
        out.w_origin = self.raw_w[self.start + k];
        Ok(out)
    }

    /// Subsamples every `factor`-th grid point (absolute index divisible by
    /// `factor`); the result observes the same ω on the coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 {
            return Err(invalid("factor", "must be positive"));
        }
        let f = factor as i64;
        let lo = self.first.div_euclid(f) + i64::from(self.first.rem_euclid(f) != 0);
        let hi = (self.first + self.len as i64 - 1).div_euclid(f);
        let pick = |m: i64| (m * f - self.first) as usize;
        let w: Vec<f64> = (lo..=hi).map(|m| self.w(pick(m))).collect();
        let z = self
            .raw_z
            .as_ref()
            .map(|rz| Arc::new((lo..=hi).map(|m| rz[self.start + pick(m)]).collect::<Vec<_>>()));
        Ok(NoisePath {
            seed: self.seed,
            dt: self.dt * factor as f64,
            burn_in: self.burn_in,
            first: lo,
            len: w.len(),
            start: 0,
            raw_w: Arc::new(w),
            raw_z: z,
            w_origin: 0.0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_ou(&self) -> bool {
        self.raw_z.is_some()
    }

    /// Grid index of the first sample.
    pub fn first_index(&self) -> i64 {
        self.first
    }

    pub fn t_min(&self) -> f64 {
        self.first as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.first + self.len as i64 - 1) as f64 * self.dt
    }

    /// Time of the `k`-th sample.
    pub fn time(&self, k: usize) -> f64 {
        (self.first + k as i64) as f64 * self.dt
    }

    /// Absolute grid index of a grid time, checked against the view's range.
    pub fn grid_index(&self, t: f64) -> Result<i64> {
        let x = t / self.dt;
        let m = x.round();
        if (x - m).abs() > GRID_SNAP * x.abs().max(1.0) {
            return Err(Error::OffGrid { t, dt: self.dt });
        }
        let m = m as i64;
        if m < self.first || m >= self.first + self.len as i64 {
            return Err(self.out_of_grid(t));
        }
        Ok(m)
    }

    fn out_of_grid(&self, t: f64) -> Error {
        Error::OutOfGrid {
            t,
            t_min: self.t_min(),
            t_max: self.t_max(),
        }
    }

    /// Checks that `[a, b]` lies on the grid and returns the local sample indices.
    pub fn span(&self, a: f64, b: f64) -> Result<(usize, usize)> {
        let ia = self.grid_index(a)?;
        let ib = self.grid_index(b)?;
        if ib < ia {
            return Err(invalid("interval", format!("[{a}, {b}] is reversed")));
        }
        Ok(((ia - self.first) as usize, (ib - self.first) as usize))
    }

    fn w_slice_raw(&self) -> &[f64] {
        &self.raw_w[self.start..self.start + self.len]
    }

    /// `W(t_k)` of this view.
    pub fn w(&self, k: usize) -> f64 {
        self.raw_w[self.start + k] - self.w_origin
    }

    pub fn w_values(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.w(k)).collect()
    }

    /// `z(θ_{t_k} ω)` samples of this view.
    pub fn z_values(&self) -> Option<&[f64]> {
        self.raw_z.as_ref().map(|z| &z[self.start..self.start + self.len])
    }

    pub(crate) fn z_slice(&self) -> Result<&[f64]> {
        self.z_values().ok_or(Error::MissingOu)
    }

    /// `W(t)` at a grid time.
    pub fn w_at(&self, t: f64) -> Result<f64> {
        let m = self.grid_index(t)?;
        Ok(self.w((m - self.first) as usize))
    }

    /// `z(θ_t ω)` by linear interpolation between grid values.
    pub fn z_at(&self, t: f64) -> Result<f64> {
        let z = self.z_slice()?;
        let x = t / self.dt - self.first as f64;
        let last = (self.len - 1) as f64;
        if !(x >= -GRID_SNAP && x <= last + GRID_SNAP) {
            return Err(self.out_of_grid(t));
        }
        let x = x.clamp(0.0, last);
        let k = x.floor() as usize;
        if k as f64 == x || k + 1 >= self.len {
            return Ok(z[k.min(self.len - 1)]);
        }
        let frac = x - k as f64;
        if frac.abs() < 1e-12 {
            return Ok(z[k]);
        }
        Ok(z[k] + frac * (z[k + 1] - z[k]))
    }

    /// SHA-256 over the grid description and the sample values of this view.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.dt.to_le_bytes());
        h.update(self.burn_in.to_le_bytes());
        h.update(self.first.to_le_bytes());
        h.update((self.len as u64).to_le_bytes());
        for k in 0..self.len {
            h.update(self.w(k).to_le_bytes());
        }
        if let Some(z) = self.z_values() {
            for v in z {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Errors unless `other` observes the same ω on the same grid.
    pub fn ensure_same(&self, other: &NoisePath) -> Result<()> {
        let (a, b) = (self.digest(), other.digest());
        if a != b {
            return Err(Error::PathMismatch {
                expected: a,
                found: b,
            });
        }
        Ok(())
    }

    /// Binary form: `seed, t_min, t_max, dt, burn_in` as little-endian 64-bit
    /// values, then the `W` samples, then the `z` samples when attached.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&self.seed.to_le_bytes())?;
        for x in [self.t_min(), self.t_max(), self.dt, self.burn_in] {
            out.write_all(&x.to_le_bytes())?;
        }
        for k in 0..self.len {
            out.write_all(&self.w(k).to_le_bytes())?;
        }
        if let Some(z) = self.z_values() {
            for v in z {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 40 || bytes.len() % 8 != 0 {
            return Err(Error::Format("noise file header truncated".into()));
        }
        let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().expect("8 bytes") };
        let seed = u64::from_le_bytes(word(0));
        let t_min = f64::from_le_bytes(word(1));
        let t_max = f64::from_le_bytes(word(2));
        let dt = f64::from_le_bytes(word(3));
        let burn_in = f64::from_le_bytes(word(4));
        if !(dt > 0.0) {
            return Err(Error::Format(format!("bad dt {dt}")));
        }
        let first = (t_min / dt).round() as i64;
        let last = (t_max / dt).round() as i64;
        if last < first {
            return Err(Error::Format("empty grid".into()));
        }
        let n = (last - first + 1) as usize;
        let words = bytes.len() / 8 - 5;
        let has_z = match words {
            x if x == n => false,
            x if x == 2 * n => true,
            _ => return Err(Error::Format(format!("expected {n} or {} samples, found {words}", 2 * n))),
        };
        let w: Vec<f64> = (0..n).map(|k| f64::from_le_bytes(word(5 + k))).collect();
        let mut path = NoisePath::from_values(seed, first, dt, w, burn_in)?;
        if has_z {
            let z: Vec<f64> = (0..n).map(|k| f64::from_le_bytes(word(5 + n + k))).collect();
            path.raw_z = Some(Arc::new(z));
        }
        Ok(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> NoisePath {
        sample_noise(11, -3.0, 2.0, 1e-2, 5.0).unwrap()
    }

    #[test]
    fn origin_is_zero_and_grid_is_aligned() {
        let p = sample_wiener(5, -1.0, 1.0, 1e-3).unwrap();
        assert_eq!(p.w_at(0.0).unwrap(), 0.0);
        assert_eq!(p.len(), 2001);
        assert!((p.t_min() + 1.0).abs() < 1e-12);
        assert!((p.t_max() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(sample_wiener(1, -1.0, 1.0, 0.0).is_err());
        assert!(sample_wiener(1, -1.0, 1.0, -1e-3).is_err());
        assert!(sample_wiener(1, 0.5, 1.0, 1e-3).is_err());
        assert!(sample_wiener(1, -1.0, -0.5, 1e-3).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = path();
        let b = path();
        assert_eq!(a.w_values(), b.w_values());
        assert_eq!(a.z_values(), b.z_values());
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), sample_noise(12, -3.0, 2.0, 1e-2, 5.0).unwrap().digest());
    }

    #[test]
    fn extending_the_horizon_keeps_samples() {
        let short = sample_wiener(3, -1.0, 1.0, 1e-2).unwrap();
        let long = sample_wiener(3, -2.0, 2.0, 1e-2).unwrap();
        for k in 0..short.len() {
            let t = short.time(k);
            assert_eq!(short.w(k), long.w_at(t).unwrap());
        }
    }

    #[test]
    fn shift_identities() {
        let p = path();
        let same = p.theta_shift(0.0).unwrap();
        assert_eq!(same.w_values(), p.w_values());
        let s = p.theta_shift(-1.2).unwrap();
        assert_eq!(s.w_at(0.0).unwrap(), 0.0);
        // (θ_s ω)(t) = ω(t + s) - ω(s)
        let t = 0.7;
        let expected = p.w_at(t - 1.2).unwrap() - p.w_at(-1.2).unwrap();
        assert!((s.w_at(t).unwrap() - expected).abs() < 1e-12);
        assert_eq!(s.z_at(t).unwrap(), p.z_at(t - 1.2).unwrap());
        // composition
        let rs = s.theta_shift(0.5).unwrap();
        let direct = p.theta_shift(-0.7).unwrap();
        for k in 0..rs.len() {
            assert!((rs.w(k) - direct.w(k)).abs() < 1e-12);
        }
        assert!(p.theta_shift(5.0).is_err());
        assert!(p.theta_shift(0.005).is_err());
    }

    #[test]
    fn ou_recursion_holds() {
        let p = path();
        let z = p.z_values().unwrap();
        let dt = p.dt();
        for k in 1..p.len() {
            let pred = (-dt).exp() * z[k - 1] + (-0.5 * dt).exp() * (p.w(k) - p.w(k - 1));
            assert!((z[k] - pred).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_gives_zero_ou() {
        let p = NoisePath::from_values(0, -10, 0.1, vec![0.0; 21], 0.0)
            .unwrap()
            .ou_attach()
            .unwrap();
        assert!(p.z_values().unwrap().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn z_interpolation() {
        let p = path();
        let z = p.z_values().unwrap();
        let k = 57;
        assert_eq!(p.z_at(p.time(k)).unwrap(), z[k]);
        let mid = 0.5 * (p.time(k) + p.time(k + 1));
        assert!((p.z_at(mid).unwrap() - 0.5 * (z[k] + z[k + 1])).abs() < 1e-14);
        assert!(p.z_at(10.0).is_err());
        assert!(sample_wiener(1, -1.0, 1.0, 0.1).unwrap().z_at(0.0).is_err());
    }

    #[test]
    fn coarsening_observes_the_same_path() {
        let p = path();
        let c = p.coarsen(4).unwrap();
        assert!((c.dt() - 0.04).abs() < 1e-15);
        for k in 0..c.len() {
            let t = c.time(k);
            let (w, z) = (p.w_at(t).unwrap(), p.z_at(t).unwrap());
            assert!((c.w(k) - w).abs() <= 1e-12 * (1.0 + w.abs()));
            assert!((c.z_values().unwrap()[k] - z).abs() <= 1e-12 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let p = path().theta_shift(-1.0).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 16 * p.len());
        let q = NoisePath::read_from(&buf[..]).unwrap();
        assert_eq!(q.w_values(), p.w_values());
        assert_eq!(q.z_values(), p.z_values());
        assert_eq!(q.digest(), p.digest());
        assert!(NoisePath::read_from(&buf[..100]).is_err());
    }
}
