//! Monotonicity machinery for the gauged equation: the truncated convexity
//! weight with its exact derivative chain, the three coefficient fields and
//! their inner/outer constants, the first- and second-derivative series of
//! the weighted mass along a trajectory, and the integrated-inequality
//! report that a localized non-dispersing state cannot satisfy.

use serde::Serialize;

use crate::coeffs::{CoefficientSet, SampledCoefficients};
use crate::diagnostics::{self, LocalizationRow, Series};
use crate::grid::{self, GridFunction, Norm};
use crate::propagate::Trajectory;
use crate::{C64, Error, Grid, Result};

/// Pointwise magnetic fields are refused above this level; the weighted-mass
/// identities hold in the gauged frame only.
pub const B_FIELD_TOL: f64 = 1e-12;

// Third-order forward jet: a value with its first three derivatives.  The
// cutoff enters the mass coefficient through its third derivative, so every
// evaluation carries the full chain; spectral differentiation of a cutoff
// would ring.
#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

impl Jet {
    const ZERO: Self = Self { v: 0.0, d1: 0.0, d2: 0.0, d3: 0.0 };

    fn constant(v: f64) -> Self {
        Self { v, ..Self::ZERO }
    }

    // y = f(u) with supplied derivatives of f at u.v, chained to third order
    fn compose(self, f0: f64, f1: f64, f2: f64, f3: f64) -> Self {
        Self {
            v: f0,
            d1: f1 * self.d1,
            d2: f2 * self.d1 * self.d1 + f1 * self.d2,
            d3: f3 * self.d1.powi(3) + 3.0 * f2 * self.d1 * self.d2 + f1 * self.d3,
        }
    }

    fn recip(self) -> Self {
        let u = self.v;
        self.compose(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u), -6.0 / (u * u * u * u))
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e, e)
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2, d3: self.d3 + o.d3 }
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2, d3: self.d3 - o.d3 }
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d1: -self.d1, d2: -self.d2, d3: -self.d3 }
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
            d3: self.d3 * o.v + 3.0 * self.d2 * o.d1 + 3.0 * self.d1 * o.d2 + self.v * o.d3,
        }
    }
}

impl std::ops::Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

// e^{-1/t} for t > 0, identically zero below; flat to all orders at 0
fn ramp(t: Jet) -> Jet {
    if t.v <= 0.0 { Jet::ZERO } else { (-t.recip()).exp() }
}

// smooth step: 0 for t <= 0, 1 for t >= 1
fn unit_step(t: Jet) -> Jet {
    let num = ramp(t);
    num / (num + ramp(Jet::constant(1.0) - t))
}

// plateau cutoff: exactly 1 on |s| <= 1, exactly 0 on |s| >= 2.  The |s|
// kink sits inside the plateau, so the function is smooth.
fn cutoff(s: f64) -> Jet {
    let r = s.abs();
    if r <= 1.0 {
        Jet::constant(1.0)
    } else if r >= 2.0 {
        Jet::ZERO
    } else {
        unit_step(Jet { v: 2.0 - r, d1: -s.signum(), d2: 0.0, d3: 0.0 })
    }
}

/// The weight `gamma = (x - x^3/(6R^2)) chi(x/R)` with its derivative chain,
/// the primitive `m` solving `gamma = a m'`, and the three coefficient
/// fields of the second-derivative identity.
#[derive(Clone, Debug)]
pub struct VirialWeight {
    pub grid: Grid,
    pub big_r: f64,
    /// `chi(x/R)` node values.
    pub chi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_d1: Vec<f64>,
    pub gamma_d2: Vec<f64>,
    pub gamma_d3: Vec<f64>,
    /// `m(x) = int_0^x gamma/a`, the multiplier whose weighted mass the
    /// series differentiates.
    pub m: Vec<f64>,
    /// `2(2a gamma' - a' gamma)`; multiplies `|u_x|^2`.
    pub coef_grad: Vec<f64>,
    /// `-(a gamma'')' - 2 gamma c'`; multiplies `|u|^2`.
    pub coef_mass: Vec<f64>,
    /// `(beta - 1) gamma'`; multiplies `|u|^{beta+1}`.
    pub coef_power: Vec<f64>,
}

/// Builds the weight at radius `R` for the given coefficients.  Needs
/// `R > 1` and the support `[-2R, 2R]` strictly inside the box.
pub fn make_weight(big_r: f64, cs: &CoefficientSet, g: Grid) -> Result<VirialWeight> {
    if !(big_r > 1.0) {
        return Err(Error::Config(format!("weight radius must exceed 1, got {big_r}")));
    }
    if !(2.0 * big_r < g.half_length()) {
        return Err(Error::Config(format!(
            "weight support [-{}, {}] does not fit inside the box of half-length {}",
            2.0 * big_r,
            2.0 * big_r,
            g.half_length()
        )));
    }
    let sc = SampledCoefficients::sample(cs, g);
    let n = g.point_count();
    let rr = big_r * big_r;
    let beta = cs.beta;

    let mut chi = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut gamma_d1 = Vec::with_capacity(n);
    let mut gamma_d2 = Vec::with_capacity(n);
    let mut gamma_d3 = Vec::with_capacity(n);
    let mut coef_grad = Vec::with_capacity(n);
    let mut coef_mass = Vec::with_capacity(n);
    let mut coef_power = Vec::with_capacity(n);
    for j in 0..n {
        let x = g.x(j);
        let p = Jet {
            v: x - x * x * x / (6.0 * rr),
            d1: 1.0 - x * x / (2.0 * rr),
            d2: -x / rr,
            d3: -1.0 / rr,
        };
        let cj = cutoff(x / big_r);
        let chi_x = Jet { v: cj.v, d1: cj.d1 / big_r, d2: cj.d2 / rr, d3: cj.d3 / (rr * big_r) };
        let ga = p * chi_x;
        chi.push(cj.v);
        gamma.push(ga.v);
        gamma_d1.push(ga.d1);
        gamma_d2.push(ga.d2);
        gamma_d3.push(ga.d3);
        coef_grad.push(2.0 * (2.0 * sc.a[j] * ga.d1 - sc.a_x[j] * ga.v));
        coef_mass.push(-(sc.a_x[j] * ga.d2 + sc.a[j] * ga.d3) - 2.0 * ga.v * sc.c_x[j]);
        coef_power.push((beta - 1.0) * ga.d1);
    }

    let ratio: Vec<C64> =
        (0..n).map(|j| C64::new(gamma[j] / sc.a[j], 0.0)).collect();
    let ratio_fn = GridFunction::from_values(g, ratio)?;
    let m = grid::smooth_antiderivative(&ratio_fn).eval_nodes();

    Ok(VirialWeight {
        grid: g,
        big_r,
        chi,
        gamma,
        gamma_d1,
        gamma_d2,
        gamma_d3,
        m,
        coef_grad,
        coef_mass,
        coef_power,
    })
}

/// Best constants of the two-sided coefficient bounds, read off the grids:
/// `C` is the inner min over `|x| <= R` of the three fields (the mass field
/// scaled by `R^2`), `C_prime` the matching outer max on `R <= |x| <= 2R`.
/// A positive `C` is what the monotonicity argument needs; `C <= 0` flags
/// inadmissible coefficients or unresolved fields.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundReport {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub passed: bool,
}

pub fn verify_coefficient_bounds(w: &VirialWeight) -> BoundReport {
    let g = w.grid;
    let rr = w.big_r * w.big_r;
    let mut c = f64::INFINITY;
    let mut c_prime = 0.0f64;
    for j in 0..g.point_count() {
        let ax = g.x(j).abs();
        if ax <= w.big_r {
            c = c.min(w.coef_grad[j]).min(w.coef_mass[j] * rr).min(w.coef_power[j]);
        }
        if ax >= w.big_r && ax <= 2.0 * w.big_r {
            c_prime = c_prime
                .max(w.coef_grad[j].abs())
                .max(w.coef_mass[j].abs() * rr)
                .max(w.coef_power[j].abs());
        }
    }
    BoundReport { c, c_prime, big_r: w.big_r, passed: c > 0.0 }
}

/// Weighted-mass series along a trajectory: `theta`, its formula first and
/// second derivatives, the monotonicity functional `Z` with its `|x| <= R`
/// part, and finite-difference cross-checks from the recorded `theta`
/// values (NaN at the record endpoints).
#[derive(Clone, Debug)]
pub struct VirialSeries {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// `2 Im int gamma u' conj(u)`, the exact first derivative of `theta`.
    pub theta_prime: Vec<f64>,
    /// The three-field integral `int II|u|^2 + I|u_x|^2 +
    /// (2/(beta+1)) III|u|^{beta+1}`; equals the second derivative of
    /// `theta` and stays positive on dispersing runs.
    pub theta_second: Vec<f64>,
    pub z: Vec<f64>,
    pub z_loc: Vec<f64>,
    pub theta_prime_fd: Vec<f64>,
    pub theta_second_fd: Vec<f64>,
    pub beta: f64,
    pub big_r: f64,
}

/// Evaluates the weighted-mass identities on every recorded state.  The
/// trajectory must live on the weight's grid and the coefficients must
/// carry no magnetic field.
pub fn virial_series(
    traj: &Trajectory,
    w: &VirialWeight,
    cs: &CoefficientSet,
) -> Result<VirialSeries> {
    let g = w.grid;
    let b_max = (0..g.point_count()).map(|j| cs.b.eval(g.x(j)).abs()).fold(0.0, f64::max);
    if b_max > B_FIELD_TOL {
        return Err(Error::MagneticFieldPresent(b_max));
    }
    let first = traj.states.first().ok_or_else(|| Error::Config("empty trajectory".into()))?;
    if first.grid() != g {
        return Err(Error::Config("trajectory grid does not match the weight".into()));
    }
    let h = g.spacing();
    let beta = cs.beta;
    let q = beta + 1.0;
    let k = traj.times.len();

    let mut theta = Vec::with_capacity(k);
    let mut theta_prime = Vec::with_capacity(k);
    let mut theta_second = Vec::with_capacity(k);
    let mut z = Vec::with_capacity(k);
    let mut z_loc = Vec::with_capacity(k);
    for u in &traj.states {
        let du = grid::derivative(u);
        let mut th = 0.0;
        let mut cross = C64::new(0.0, 0.0);
        let mut second = 0.0;
        let mut z_all = 0.0;
        let mut z_in = 0.0;
        for (j, (uj, dj)) in u.values().iter().zip(du.values()).enumerate() {
            let m2 = uj.norm_sqr();
            let g2 = dj.norm_sqr();
            let pw = uj.norm().powf(q);
            th += w.m[j] * m2;
            cross += w.gamma[j] * dj * uj.conj();
            second += w.coef_mass[j] * m2 + w.coef_grad[j] * g2
                + 2.0 / q * w.coef_power[j] * pw;
            let dens = m2 / (w.big_r * w.big_r) + g2 + 2.0 / q * pw;
            z_all += dens;
            if g.x(j).abs() <= w.big_r {
                z_in += dens;
            }
        }
        theta.push(h * th);
        theta_prime.push(2.0 * h * cross.im);
        theta_second.push(h * second);
        z.push(h * z_all);
        z_loc.push(h * z_in);
    }

    let (theta_prime_fd, theta_second_fd) = difference_series(&traj.times, &theta);
    Ok(VirialSeries {
        times: traj.times.clone(),
        theta,
        theta_prime,
        theta_second,
        z,
        z_loc,
        theta_prime_fd,
        theta_second_fd,
        beta,
        big_r: w.big_r,
    })
}

// Three-point first and second differences on a possibly ragged time grid
// (the last recording interval can be short); endpoints are NaN.
fn difference_series(times: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = times.len();
    let mut d1 = vec![f64::NAN; k];
    let mut d2 = vec![f64::NAN; k];
    for j in 1..k.saturating_sub(1) {
        let ha = times[j] - times[j - 1];
        let hb = times[j + 1] - times[j];
        let (y0, y1, y2) = (values[j - 1], values[j], values[j + 1]);
        d1[j] = -hb / (ha * (ha + hb)) * y0 + (hb - ha) / (ha * hb) * y1
            + ha / (hb * (ha + hb)) * y2;
        d2[j] = 2.0 * (y0 / (ha * (ha + hb)) - y1 / (ha * hb) + y2 / (hb * (ha + hb)));
    }
    (d1, d2)
}

/// What the integrated inequality looks like on this run.
#[derive(Clone, Debug, Serialize)]
pub struct VirialReport {
    /// `min_t theta''`; positive on a dispersing pre-wrap window.
    pub theta_second_min: f64,
    /// `(t, theta''(t) / Z_loc(t))`, the per-time lower-bound constant.
    pub kappa: Series,
    pub kappa_min: f64,
    /// Exterior-over-interior mass and energy shares at the weight radius.
    pub localization: Vec<LocalizationRow>,
    /// Trapezoid value of `int theta'' dt` over the record; for a real
    /// solution this telescopes to `theta'(T) - theta'(0)`.
    pub theta_second_integral: f64,
    pub theta_prime_sup: f64,
    /// `2 max|gamma| sup_t ||u_x|| ||u||`, the a-priori ceiling on
    /// `|theta'|`; Cauchy-Schwarz makes it unconditional.
    pub theta_prime_bound: f64,
    /// `Z_loc` at the last record over the first.
    pub z_loc_decay: f64,
    /// `theta'' > 0` at every recorded time.
    pub monotone_window: bool,
    /// The accumulated `int theta''` exceeds the `2 x` prime bound, which
    /// no actual solution can do; manufactured non-dispersing data trips it.
    pub growth_conflict: bool,
}

pub fn virial_inequality_check(
    series: &VirialSeries,
    w: &VirialWeight,
    traj: &Trajectory,
) -> Result<VirialReport> {
    if series.times.len() != traj.times.len() {
        return Err(Error::Config("series and trajectory record lengths differ".into()));
    }
    let localization = diagnostics::localization_ratio(traj, w.big_r, series.beta)?;

    let mut kappa = Vec::with_capacity(series.times.len());
    let mut kappa_min = f64::INFINITY;
    let mut second_min = f64::INFINITY;
    for ((t, th2), zl) in series.times.iter().zip(&series.theta_second).zip(&series.z_loc) {
        second_min = second_min.min(*th2);
        let k = if *zl > 0.0 { th2 / zl } else { f64::INFINITY };
        kappa_min = kappa_min.min(k);
        kappa.push((*t, k));
    }

    let mut integral = 0.0;
    for j in 1..series.times.len() {
        let dt = series.times[j] - series.times[j - 1];
        integral += 0.5 * dt * (series.theta_second[j] + series.theta_second[j - 1]);
    }

    let gamma_max = w.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut product_sup = 0.0f64;
    for u in &traj.states {
        let du = grid::derivative(u);
        product_sup = product_sup.max(grid::norm(&du, Norm::L2) * grid::norm(u, Norm::L2));
    }
    let theta_prime_bound = 2.0 * gamma_max * product_sup;
    let theta_prime_sup = series.theta_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let z0 = series.z_loc.first().copied().unwrap_or(0.0);
    let z_end = series.z_loc.last().copied().unwrap_or(0.0);
    Ok(VirialReport {
        theta_second_min: second_min,
        kappa,
        kappa_min,
        localization,
        theta_second_integral: integral,
        theta_prime_sup,
        theta_prime_bound,
        z_loc_decay: if z0 > 0.0 { z_end / z0 } else { 0.0 },
        monotone_window: second_min > 0.0,
        growth_conflict: integral > 2.0 * theta_prime_bound + 1e-9 * theta_prime_bound.max(1.0),
    })
}
