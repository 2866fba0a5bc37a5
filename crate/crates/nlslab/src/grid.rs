//! Uniform periodic grid, spectral calculus, and norms.
//!
//! The real line is modeled by the periodic box `[-L, L)` with `N` (a power
//! of two) equispaced nodes `x_j = -L + j h`, `h = 2L/N`.  All derivatives
//! are spectral, all quadrature is the rectangle rule, which on a periodic
//! grid is the trapezoid rule and spectrally accurate for smooth data.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

type C64 = Complex64;

/// Uniform periodic grid on `[-L, L)`.
///
/// `x = 0` falls exactly on node `N/2`, and the discrete wavenumbers are
/// `xi_k = pi * k_signed / L` with `k_signed` running over
/// `0, 1, ..., N/2 - 1, -N/2, ..., -1`; the single Nyquist mode `-N/2` is
/// self-paired.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    l: f64,
    n: usize,
    h: f64,
}

/// `L > 0`, `N` a power of two with `N >= 8`.
pub fn make_grid(l: f64, n: usize) -> Result<Grid> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::BadHalfLength(l));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::BadPointCount(n));
    }
    Ok(Grid { l, n, h: 2.0 * l / n as f64 })
}

impl Grid {
    pub fn half_length(&self) -> f64 {
        self.l
    }

    pub fn point_count(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.h
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed wavenumber of DFT bin `k`.
    pub fn xi(&self, k: usize) -> f64 {
        let ks = if k < self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        std::f64::consts::PI * ks / self.l
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.xi(k)).collect()
    }

    pub fn nyquist_bin(&self) -> usize {
        self.n / 2
    }

    /// Largest resolved |xi|, attained at the Nyquist bin.
    pub fn xi_max(&self) -> f64 {
        std::f64::consts::PI / self.h
    }

    /// Forward DFT, unnormalized: `U_k = sum_j u_j exp(-2 pi i j k / N)`.
    pub fn dft(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        let (fwd, _) = fft_pair(self.n);
        let mut buf = v.to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
        fwd.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// Inverse DFT including the `1/N` normalization.
    pub fn idft(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        let (_, inv) = fft_pair(self.n);
        let mut buf = v.to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); inv.get_inplace_scratch_len()];
        inv.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / self.n as f64;
        for z in &mut buf {
            *z *= scale;
        }
        buf
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut p = planner().lock().unwrap();
    (p.plan_fft_forward(n), p.plan_fft_inverse(n))
}

/// Complex samples on a [`Grid`]; the universal state carrier.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<C64>,
}

impl GridFunction {
    /// Wrap raw samples, checking length and finiteness.
    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch { expected: grid.n, got: values.len() });
        }
        if let Some(j) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.n] }
    }

    pub fn sample(grid: Grid, f: impl Fn(f64) -> C64) -> Self {
        let values = (0..grid.n).map(|j| f(grid.x(j))).collect();
        Self { grid, values }
    }

    pub fn sample_real(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::sample(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self { grid: self.grid, values }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { grid: self.grid, values }
    }

    pub fn scale(&self, s: f64) -> Self {
        let values = self.values.iter().map(|z| z * s).collect();
        Self { grid: self.grid, values }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        let values = self.values.iter().map(|z| z * s).collect();
        Self { grid: self.grid, values }
    }
}

/// `(u, v) = h sum_j u_j conj(v_j)`.
pub fn l2_inner(u: &GridFunction, v: &GridFunction) -> C64 {
    assert_eq!(u.grid, v.grid);
    let mut acc = C64::new(0.0, 0.0);
    for (a, b) in u.values.iter().zip(&v.values) {
        acc += a * b.conj();
    }
    acc * u.grid.h
}

/// Norm kinds understood by [`norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    L2,
    /// `(||u||_L2^2 + ||u_x||_L2^2)^(1/2)`.
    H1,
    Lq(f64),
    /// `||u||_Lq + ||u_x||_Lq`.
    H1q(f64),
    Linf,
}

pub fn norm(u: &GridFunction, kind: Norm) -> f64 {
    match kind {
        Norm::L2 => {
            let s: f64 = u.values.iter().map(|z| z.norm_sqr()).sum();
            (u.grid.h * s).sqrt()
        }
        Norm::H1 => {
            let du = derivative(u);
            let a = norm(u, Norm::L2);
            let b = norm(&du, Norm::L2);
            (a * a + b * b).sqrt()
        }
        Norm::Lq(q) => {
            assert!(q >= 1.0, "Lq norm needs q >= 1, got {q}");
            let s: f64 = u.values.iter().map(|z| z.norm().powf(q)).sum();
            (u.grid.h * s).powf(1.0 / q)
        }
        Norm::H1q(q) => {
            let du = derivative(u);
            norm(u, Norm::Lq(q)) + norm(&du, Norm::Lq(q))
        }
        Norm::Linf => u.values.iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

/// Apply a Fourier multiplier `m(xi)`.  Odd-order multipliers must zero the
/// self-paired Nyquist mode to preserve real symmetry; pass `odd = true` for
/// that behavior.
pub fn apply_multiplier(u: &GridFunction, odd: bool, m: impl Fn(f64) -> C64) -> GridFunction {
    let g = u.grid;
    let mut spec = g.dft(&u.values);
    let nyq = g.nyquist_bin();
    for (k, z) in spec.iter_mut().enumerate() {
        if odd && k == nyq {
            *z = C64::new(0.0, 0.0);
        } else {
            *z *= m(g.xi(k));
        }
    }
    GridFunction { grid: g, values: g.idft(&spec) }
}

/// Spectral derivative; exact for band-limited data.
pub fn derivative(u: &GridFunction) -> GridFunction {
    apply_multiplier(u, true, |xi| C64::new(0.0, xi))
}

/// Zero every mode with `|xi| > r`; an orthogonal projection, idempotent.
pub fn project_low(u: &GridFunction, r: f64) -> GridFunction {
    assert!(r > 0.0, "frequency cutoff must be positive");
    apply_multiplier(u, false, |xi| {
        if xi.abs() <= r {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Complement of [`project_low`].
pub fn project_high(u: &GridFunction, r: f64) -> GridFunction {
    u.sub(&project_low(u, r))
}

/// Mixed space-time norm `( sum_t dt ||u(t)||_Lr^p )^(1/p)` over uniformly
/// recorded states.
pub fn spacetime_norm(states: &[GridFunction], dt: f64, p: f64, r: f64) -> f64 {
    assert!(!states.is_empty(), "spacetime norm of an empty trajectory");
    assert!(dt > 0.0 && p >= 1.0 && r >= 1.0);
    let s: f64 = states.iter().map(|u| norm(u, Norm::Lq(r)).powf(p)).sum();
    (dt * s).powf(1.0 / p)
}

/// Rotate samples by `m` nodes: the result represents `u(x - m h)` on the
/// periodic box.
pub fn rotate_samples(u: &GridFunction, m: i64) -> GridFunction {
    let n = u.grid.n as i64;
    let shift = m.rem_euclid(n) as usize;
    let mut values = Vec::with_capacity(u.grid.n);
    for j in 0..u.grid.n {
        let src = (j + u.grid.n - shift) % u.grid.n;
        values.push(u.values[src]);
    }
    GridFunction { grid: u.grid, values }
}

/// Translate by `z`, rounding to the nearest node offset.  Returns the
/// translated function and the offset actually applied.
pub fn translate(u: &GridFunction, z: f64) -> (GridFunction, f64) {
    let m = (z / u.grid.h).round() as i64;
    (rotate_samples(u, m), m as f64 * u.grid.h)
}

/// Evaluate the trigonometric interpolant of `u` at arbitrary points.
///
/// The Nyquist mode is extended symmetrically (as a cosine), so real samples
/// give a real interpolant.  Cost is O(N) per point.
pub fn eval_trig(u: &GridFunction, points: &[f64]) -> Vec<C64> {
    let g = u.grid;
    let n = g.n;
    let spec = g.dft(&u.values);
    let base = std::f64::consts::PI / g.l;
    let kmin = -(n as i64 / 2) + 1;
    let kmax = n as i64 / 2 - 1;
    let nyq = g.nyquist_bin();
    let scale = 1.0 / n as f64;
    points
        .iter()
        .map(|&x| {
            let t = x + g.l;
            let w = C64::from_polar(1.0, base * t);
            let mut z = C64::from_polar(1.0, base * kmin as f64 * t);
            let mut acc = C64::new(0.0, 0.0);
            for ks in kmin..=kmax {
                let k = if ks >= 0 { ks as usize } else { (ks + n as i64) as usize };
                acc += spec[k] * z;
                z *= w;
                // renormalize the phase recurrence now and then
                if (ks - kmin) % 256 == 255 {
                    z = C64::from_polar(1.0, base * (ks + 1) as f64 * t);
                }
            }
            let theta = base * (n as f64 / 2.0) * t;
            acc += spec[nyq] * theta.cos();
            acc * scale
        })
        .collect()
}

/// Cumulative midpoint-rule antiderivative `F(x) = int_0^x f`, returned at
/// the grid nodes together with the value `F(L)` at the right box edge.
/// Signed for `x < 0` and exactly odd-symmetric when `f` is even.
pub fn cumulative_midpoint(g: &Grid, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
    let n = g.n;
    let mid = |j: usize| g.x(j) + 0.5 * g.h;
    let mut out = vec![0.0; n];
    let zero = n / 2;
    let mut acc = 0.0;
    for j in zero..n {
        acc += g.h * f(mid(j));
        if j + 1 < n {
            out[j + 1] = acc;
        }
    }
    let at_l = acc;
    acc = 0.0;
    for j in (0..zero).rev() {
        acc -= g.h * f(mid(j));
        out[j] = acc;
    }
    (out, at_l)
}

/// Trapezoid-rule analogue of [`cumulative_midpoint`] for data only known at
/// the nodes; the final segment to `x = L` closes periodically with the first
/// sample.
pub fn cumulative_trapezoid(g: &Grid, f: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(f.len(), g.n);
    let n = g.n;
    let mut out = vec![0.0; n];
    let zero = n / 2;
    let mut acc = 0.0;
    for j in zero..n {
        let next = if j + 1 < n { f[j + 1] } else { f[0] };
        acc += 0.5 * g.h * (f[j] + next);
        if j + 1 < n {
            out[j + 1] = acc;
        }
    }
    let at_l = acc;
    acc = 0.0;
    for j in (0..zero).rev() {
        acc -= 0.5 * g.h * (f[j] + f[j + 1]);
        out[j] = acc;
    }
    (out, at_l)
}

/// Antiderivative `F(x) = int_0^x f` of a smooth real field, split as
/// `mean * x` plus a periodic part so it can be evaluated anywhere with
/// spectral accuracy.  `F' = f` holds exactly in the resolved modes.
#[derive(Clone, Debug)]
pub struct SmoothAntiderivative {
    mean: f64,
    osc: GridFunction,
    p0: f64,
}

pub fn smooth_antiderivative(f: &GridFunction) -> SmoothAntiderivative {
    let g = f.grid;
    let spec = g.dft(&f.values);
    let n = g.n;
    let mean = spec[0].re / n as f64;
    let mut anti = vec![C64::new(0.0, 0.0); n];
    for (k, z) in anti.iter_mut().enumerate() {
        if k == 0 || k == g.nyquist_bin() {
            continue;
        }
        *z = spec[k] / C64::new(0.0, g.xi(k));
    }
    let osc = GridFunction { grid: g, values: g.idft(&anti) };
    let p0 = osc.values[n / 2].re;
    SmoothAntiderivative { mean, osc, p0 }
}

impl SmoothAntiderivative {
    /// Mean of the integrand; `F(L) - F(-L) = 2 L * mean`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn eval_nodes(&self) -> Vec<f64> {
        let g = self.osc.grid;
        (0..g.n).map(|j| self.mean * g.x(j) + self.osc.values[j].re - self.p0).collect()
    }

    pub fn eval_at(&self, x: f64) -> f64 {
        self.mean * x + eval_trig(&self.osc, &[x])[0].re - self.p0
    }

    pub fn grid(&self) -> Grid {
        self.osc.grid
    }
}

/// Seeded band-limited noise: uniform random coefficients on the modes with
/// `|xi| <= frac * xi_max` (Nyquist excluded), scaled to the requested H1
/// norm.  Deterministic in the seed.
pub fn band_limited_noise(grid: Grid, frac: f64, h1_size: f64, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoff = frac * grid.xi_max();
    let n = grid.n;
    let mut spec = vec![C64::new(0.0, 0.0); n];
    for (k, z) in spec.iter_mut().enumerate() {
        if k == grid.nyquist_bin() {
            continue;
        }
        // draw in a fixed order so the seed fully determines the field
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        if grid.xi(k).abs() <= cutoff {
            *z = C64::new(re, im);
        }
    }
    let u = GridFunction { grid, values: grid.idft(&spec) };
    let h1 = norm(&u, Norm::H1);
    if h1 == 0.0 || h1_size == 0.0 {
        return GridFunction::zeros(grid);
    }
    u.scale(h1_size / h1)
}
