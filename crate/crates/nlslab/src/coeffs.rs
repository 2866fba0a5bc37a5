//! Coefficient fields (a, b, c), their closed-form catalog, and the
//! admissibility checks the rest of the crate relies on.
//!
//! `a` is the diffusion weight (a >= a0 > 0, a -> 1 far out), `b` the
//! magnetic potential entering the covariant derivative d/dx - i b, `c` the
//! electric potential (c >= 0).  Derivatives come from closed forms where
//! available; sampled fields carry their derivative arrays with them.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{self, Grid, GridFunction};
use crate::{Error, Result};

fn default_width() -> f64 {
    1.0
}

/// A scalar field on the line, either from the closed-form catalog or raw
/// samples on a periodic box of half-length `l`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `base + amp * exp(-s^2)`, `s = (x - center)/width`.
    GaussianBump {
        #[serde(default)]
        base: f64,
        amp: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `amp * s^2 * exp(-s^2)`; vanishes at its center, two symmetric lobes.
    QuadraticGaussian {
        amp: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `base + amp / (1 + s^2)^2`; polynomial tails.
    RationalBump {
        #[serde(default)]
        base: f64,
        amp: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `base + amp (1 + tanh s)/2`; a smooth step.
    TanhStep {
        #[serde(default)]
        base: f64,
        amp: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `d/dx [amp * exp(-s^2)]`; integrates to zero over the line, so a
    /// magnetic potential of this shape carries no net flux around the box.
    GaussianDerivative {
        amp: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// Raw node samples with their first two derivatives, on the periodic
    /// box `[-l, l)`.  Evaluation snaps to the nearest node.
    Samples {
        l: f64,
        values: Vec<f64>,
        d1: Vec<f64>,
        d2: Vec<f64>,
    },
}

impl FieldSpec {
    pub fn zero() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }

    pub fn one() -> Self {
        FieldSpec::Constant { value: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::GaussianBump { base, amp, width, center } => {
                let s = (x - center) / width;
                base + amp * (-s * s).exp()
            }
            FieldSpec::QuadraticGaussian { amp, width, center } => {
                let s = (x - center) / width;
                amp * s * s * (-s * s).exp()
            }
            FieldSpec::RationalBump { base, amp, width, center } => {
                let s = (x - center) / width;
                base + amp / (1.0 + s * s).powi(2)
            }
            FieldSpec::TanhStep { base, amp, width, center } => {
                let s = (x - center) / width;
                base + amp * (1.0 + s.tanh()) / 2.0
            }
            FieldSpec::GaussianDerivative { amp, width, center } => {
                let s = (x - center) / width;
                -2.0 * amp * s * (-s * s).exp() / width
            }
            FieldSpec::Samples { l, values, .. } => sample_lookup(*l, values, x),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            FieldSpec::Constant { .. } => 0.0,
            FieldSpec::GaussianBump { amp, width, center, .. } => {
                let s = (x - center) / width;
                -2.0 * amp * s * (-s * s).exp() / width
            }
            FieldSpec::QuadraticGaussian { amp, width, center } => {
                let s = (x - center) / width;
                amp * (2.0 * s - 2.0 * s * s * s) * (-s * s).exp() / width
            }
            FieldSpec::RationalBump { amp, width, center, .. } => {
                let s = (x - center) / width;
                -4.0 * amp * s / (width * (1.0 + s * s).powi(3))
            }
            FieldSpec::TanhStep { amp, width, center, .. } => {
                let s = (x - center) / width;
                let sech2 = 1.0 / s.cosh().powi(2);
                amp * sech2 / (2.0 * width)
            }
            FieldSpec::GaussianDerivative { amp, width, center } => {
                let s = (x - center) / width;
                amp * (4.0 * s * s - 2.0) * (-s * s).exp() / (width * width)
            }
            FieldSpec::Samples { l, d1, .. } => sample_lookup(*l, d1, x),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            FieldSpec::Constant { .. } => 0.0,
            FieldSpec::GaussianBump { amp, width, center, .. } => {
                let s = (x - center) / width;
                amp * (4.0 * s * s - 2.0) * (-s * s).exp() / (width * width)
            }
            FieldSpec::QuadraticGaussian { amp, width, center } => {
                let s = (x - center) / width;
                let s2 = s * s;
                amp * (4.0 * s2 * s2 - 10.0 * s2 + 2.0) * (-s2).exp() / (width * width)
            }
            FieldSpec::RationalBump { amp, width, center, .. } => {
                let s = (x - center) / width;
                4.0 * amp * (5.0 * s * s - 1.0) / (width * width * (1.0 + s * s).powi(4))
            }
            FieldSpec::TanhStep { amp, width, center, .. } => {
                let s = (x - center) / width;
                let sech2 = 1.0 / s.cosh().powi(2);
                -amp * sech2 * s.tanh() / (width * width)
            }
            FieldSpec::GaussianDerivative { amp, width, center } => {
                let s = (x - center) / width;
                amp * (12.0 * s - 8.0 * s * s * s) * (-s * s).exp() / (width * width * width)
            }
            FieldSpec::Samples { l, d2, .. } => sample_lookup(*l, d2, x),
        }
    }

    pub fn sample_on(&self, g: Grid) -> Vec<f64> {
        (0..g.point_count()).map(|j| self.eval(g.x(j))).collect()
    }
}

fn sample_lookup(l: f64, values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let h = 2.0 * l / n as f64;
    let j = ((x + l) / h).round() as i64;
    values[j.rem_euclid(n as i64) as usize]
}

/// The coefficient triple plus the structural constants attached to it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub a: FieldSpec,
    pub b: FieldSpec,
    pub c: FieldSpec,
    /// Lower bound enforced on `a`.
    pub a0: f64,
    /// Margin constant in (0, 1] for the virial-shape inequalities.
    pub delta: f64,
    /// Nonlinearity power, strictly above 5.
    pub beta: f64,
}

impl CoefficientSet {
    pub fn new(a: FieldSpec, b: FieldSpec, c: FieldSpec, a0: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(beta > 5.0) {
            return Err(Error::BetaTooSmall(beta));
        }
        if !(a0 > 0.0) {
            return Err(Error::Config(format!("a0 must be positive, got {a0}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1], got {delta}")));
        }
        Ok(Self { a, b, c, a0, delta, beta })
    }

    /// Flat-background operator: a = 1, b = 0, c = 0.
    pub fn free(beta: f64) -> Result<Self> {
        Self::new(FieldSpec::one(), FieldSpec::zero(), FieldSpec::zero(), 0.5, 0.5, beta)
    }
}

/// Node and link samples of a [`CoefficientSet`], the form everything
/// downstream consumes.  Links sit at `x_j + h/2`.
#[derive(Clone, Debug)]
pub struct SampledCoefficients {
    pub grid: Grid,
    pub a: Vec<f64>,
    pub a_x: Vec<f64>,
    pub a_xx: Vec<f64>,
    pub a_mid: Vec<f64>,
    pub b: Vec<f64>,
    pub b_mid: Vec<f64>,
    pub c: Vec<f64>,
    pub c_x: Vec<f64>,
}

impl SampledCoefficients {
    pub fn sample(cs: &CoefficientSet, g: Grid) -> Self {
        let mids: Vec<f64> = (0..g.point_count()).map(|j| g.x(j) + 0.5 * g.spacing()).collect();
        Self {
            grid: g,
            a: cs.a.sample_on(g),
            a_x: (0..g.point_count()).map(|j| cs.a.d1(g.x(j))).collect(),
            a_xx: (0..g.point_count()).map(|j| cs.a.d2(g.x(j))).collect(),
            a_mid: mids.iter().map(|&x| cs.a.eval(x)).collect(),
            b: cs.b.sample_on(g),
            b_mid: mids.iter().map(|&x| cs.b.eval(x)).collect(),
            c: cs.c.sample_on(g),
            c_x: (0..g.point_count()).map(|j| cs.c.d1(g.x(j))).collect(),
        }
    }
}

/// One failed condition: which check, where it is worst, and by how much
/// (negative margin = violated).
#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub condition: String,
    pub location: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub weighted_moment: f64,
}

const MARGIN_TOL: f64 = 1e-12;

fn worst_min(values: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut loc = f64::NAN;
    let mut min = f64::INFINITY;
    for (x, v) in values {
        if v < min {
            min = v;
            loc = x;
        }
    }
    (loc, min)
}

fn weighted_moment(sc: &SampledCoefficients) -> f64 {
    let g = sc.grid;
    let mut acc = 0.0;
    for j in 0..g.point_count() {
        let x = g.x(j);
        let bracket = 1.0 + x * x;
        acc += bracket * (sc.c[j] + sc.a_x[j] * sc.a_x[j] + sc.a_xx[j].abs());
    }
    g.spacing() * acc
}

/// Boundedness-and-decay certificate: a >= a0, c >= 0, a within
/// `far_field_tol` of 1 on the outer 5% of the box, and the weighted moment
/// `h * sum <x>^2 (c + a_x^2 + |a_xx|)` finite with a decayed integrand at
/// the box edge.
pub fn check_base_admissibility(cs: &CoefficientSet, g: Grid, far_field_tol: f64) -> AdmissibilityReport {
    let sc = SampledCoefficients::sample(cs, g);
    let n = g.point_count();
    let mut violations = Vec::new();

    let (loc, min_a) = worst_min((0..n).map(|j| (g.x(j), sc.a[j] - cs.a0)));
    if min_a < -MARGIN_TOL {
        violations.push(Violation { condition: "a_min".into(), location: loc, margin: min_a });
    }
    let (loc, min_c) = worst_min((0..n).map(|j| (g.x(j), sc.c[j])));
    if min_c < -MARGIN_TOL {
        violations.push(Violation { condition: "c_nonneg".into(), location: loc, margin: min_c });
    }

    let band = |j: usize| g.x(j).abs() >= 0.95 * g.half_length();
    let (loc, far_margin) =
        worst_min((0..n).filter(|&j| band(j)).map(|j| (g.x(j), far_field_tol - (sc.a[j] - 1.0).abs())));
    if far_margin < -MARGIN_TOL {
        violations.push(Violation { condition: "far_field_a".into(), location: loc, margin: far_margin });
    }

    let moment = weighted_moment(&sc);
    let integrand = |j: usize| {
        let x = g.x(j);
        (1.0 + x * x) * (sc.c[j] + sc.a_x[j] * sc.a_x[j] + sc.a_xx[j].abs())
    };
    let peak = (0..n).map(integrand).fold(0.0, f64::max);
    let edge_level = (0..n).filter(|&j| band(j)).map(integrand).fold(0.0, f64::max);
    let edge_budget = (1e-10f64).max(1e-6 * peak);
    if !moment.is_finite() || edge_level > edge_budget {
        let (loc, _) = worst_min((0..n).filter(|&j| band(j)).map(|j| (g.x(j), -integrand(j))));
        violations.push(Violation {
            condition: "moment_decay".into(),
            location: loc,
            margin: edge_budget - edge_level,
        });
    }

    AdmissibilityReport { passed: violations.is_empty(), violations, weighted_moment: moment }
}

/// Shape certificate for the monotonicity argument:
/// `-(1-delta) a <= x a_x <= (6/5 - delta) a` and `x c_x <= 0`, pointwise.
pub fn check_virial_admissibility(cs: &CoefficientSet, g: Grid) -> AdmissibilityReport {
    let sc = SampledCoefficients::sample(cs, g);
    let n = g.point_count();
    let delta = cs.delta;
    let mut violations = Vec::new();

    let (loc, lower) =
        worst_min((0..n).map(|j| (g.x(j), g.x(j) * sc.a_x[j] + (1.0 - delta) * sc.a[j])));
    if lower < -MARGIN_TOL {
        violations.push(Violation { condition: "virial_lower".into(), location: loc, margin: lower });
    }
    let (loc, upper) =
        worst_min((0..n).map(|j| (g.x(j), (1.2 - delta) * sc.a[j] - g.x(j) * sc.a_x[j])));
    if upper < -MARGIN_TOL {
        violations.push(Violation { condition: "virial_upper".into(), location: loc, margin: upper });
    }
    let (loc, xcx) = worst_min((0..n).map(|j| (g.x(j), -g.x(j) * sc.c_x[j])));
    if xcx < -MARGIN_TOL {
        violations.push(Violation { condition: "xcx_nonpos".into(), location: loc, margin: xcx });
    }

    AdmissibilityReport { passed: violations.is_empty(), violations, weighted_moment: weighted_moment(&sc) }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalRatio {
    pub lo: f64,
    pub hi: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReverseHolderReport {
    pub max_ratio: f64,
    pub worst: IntervalRatio,
    pub intervals_checked: usize,
    pub passed: bool,
}

/// Interval-average comparison for the shifted potential `k + V`:
/// `(avg_I (k+V)^(b/2))^(2/b) / avg_I (k+V)` over all dyadic subintervals of
/// the box down to length 4h plus `interval_samples` seeded random ones.
/// The ratio is >= 1 by the power-mean inequality; the report records the
/// largest one seen.
pub fn check_reverse_holder(
    v: &[f64],
    half_exponent: f64,
    k: f64,
    g: Grid,
    interval_samples: usize,
    seed: u64,
) -> Result<ReverseHolderReport> {
    assert_eq!(v.len(), g.point_count());
    assert!(half_exponent > 1.0, "half exponent must exceed 1, got {half_exponent}");
    let shifted: Vec<f64> = v.iter().map(|&w| k + w).collect();
    if let Some(&bad) = shifted.iter().find(|&&w| w <= 0.0) {
        return Err(Error::NonPositiveShiftedPotential(bad));
    }

    let n = g.point_count();
    let ratio_of = |lo: usize, len: usize| -> IntervalRatio {
        let mut mean = 0.0;
        let mut mean_pow = 0.0;
        for j in lo..lo + len {
            let w = shifted[j % n];
            mean += w;
            mean_pow += w.powf(half_exponent);
        }
        mean /= len as f64;
        mean_pow /= len as f64;
        IntervalRatio {
            lo: g.x(lo),
            hi: g.x(lo) + len as f64 * g.spacing(),
            ratio: mean_pow.powf(1.0 / half_exponent) / mean,
        }
    };

    let mut intervals = Vec::new();
    let mut pieces = 1usize;
    while n / pieces >= 4 {
        let len = n / pieces;
        for i in 0..pieces {
            intervals.push((i * len, len));
        }
        pieces *= 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..interval_samples {
        let lo = rng.gen_range(0..n - 4);
        let len = rng.gen_range(4..=n - lo);
        intervals.push((lo, len));
    }

    let mut worst = ratio_of(intervals[0].0, intervals[0].1);
    for &(lo, len) in &intervals[1..] {
        let r = ratio_of(lo, len);
        if !r.ratio.is_finite() || r.ratio > worst.ratio {
            worst = r;
            if !worst.ratio.is_finite() {
                break;
            }
        }
    }
    Ok(ReverseHolderReport {
        max_ratio: worst.ratio,
        passed: worst.ratio.is_finite(),
        worst,
        intervals_checked: intervals.len(),
    })
}

/// Replace each field by its translate `f(. - z)`, with `z` rounded to the
/// node spacing.  Returns the new set and the offset actually applied;
/// derivative samples are rotated alongside, so the result is exact for
/// grid-aligned `z`.
pub fn translate_coefficients(cs: &CoefficientSet, g: Grid, z: f64) -> (CoefficientSet, f64) {
    let m = (z / g.spacing()).round() as i64;
    let applied = m as f64 * g.spacing();
    let rotate = |vals: Vec<f64>| -> Vec<f64> {
        let n = vals.len() as i64;
        let shift = m.rem_euclid(n) as usize;
        (0..vals.len()).map(|j| vals[(j + vals.len() - shift) % vals.len()]).collect()
    };
    let translated = |f: &FieldSpec| -> FieldSpec {
        let values = rotate(f.sample_on(g));
        let d1 = rotate((0..g.point_count()).map(|j| f.d1(g.x(j))).collect());
        let d2 = rotate((0..g.point_count()).map(|j| f.d2(g.x(j))).collect());
        FieldSpec::Samples { l: g.half_length(), values, d1, d2 }
    };
    (
        CoefficientSet {
            a: translated(&cs.a),
            b: translated(&cs.b),
            c: translated(&cs.c),
            a0: cs.a0,
            delta: cs.delta,
            beta: cs.beta,
        },
        applied,
    )
}

/// Spectral-vs-closed-form derivative agreement for one field on a grid;
/// used by validation paths and tests.
pub fn derivative_consistency(f: &FieldSpec, g: Grid) -> f64 {
    let u = GridFunction::sample_real(g, |x| f.eval(x));
    let du = grid::derivative(&u);
    let mut worst: f64 = 0.0;
    for (j, z) in du.values().iter().enumerate() {
        worst = worst.max((z.re - f.d1(g.x(j))).abs());
    }
    worst
}
