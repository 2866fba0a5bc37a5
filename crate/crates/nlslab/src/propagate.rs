//! Time evolution: the exact free flow, Crank-Nicolson stepping for the
//! variable-coefficient linear flow, Strang-split nonlinear solvers in both
//! the physical and the transformed frame, and a dense eigendecomposition
//! oracle for small grids.

use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientSet, FieldSpec};
use crate::grid::{self, Grid, GridFunction, Norm};
use crate::operator::{self, EnergyLedger, FdOperator};
use crate::transforms::{self, MapDirection};
use crate::{C64, Error, Result};

/// Per-step relative residual allowed in the Crank-Nicolson solve.
pub const CN_RESIDUAL_TOL: f64 = 1e-10;
/// Net magnetic flux beyond which the gauge removal is refused.
pub const FLUX_TOL: f64 = 1e-8;
/// Largest grid the dense eigendecomposition oracle accepts.
pub const EXACT_SMALL_MAX: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Gauge + Liouville reduction, then spectral splitting on the flat frame.
    StrangGauge,
    /// Crank-Nicolson on the finite-difference operator, any coefficients.
    CrankNicolson,
}

/// Smooth absorbing layer on the outer edge of the box, applied once per
/// step as a multiplicative mask.  Disabled unless explicitly requested;
/// conservation runs must keep it off.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpongeConfig {
    #[serde(default = "default_sponge_width")]
    pub width_fraction: f64,
    #[serde(default = "default_sponge_strength")]
    pub strength: f64,
}

fn default_sponge_width() -> f64 {
    0.1
}

fn default_sponge_strength() -> f64 {
    5.0
}

impl Default for SpongeConfig {
    fn default() -> Self {
        SpongeConfig { width_fraction: default_sponge_width(), strength: default_sponge_strength() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub sponge: Option<SpongeConfig>,
    /// Mass weight in the reported full energy.
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_stride() -> usize {
    10
}

fn default_c0() -> f64 {
    1.0
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: Scheme::CrankNicolson,
            dt: 1e-3,
            record_stride: default_stride(),
            sponge: None,
            c0: default_c0(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMeta {
    pub scheme: Scheme,
    pub dt: f64,
    pub record_stride: usize,
    pub coefficient_id: String,
    /// Set when the step size is too coarse for the stiffest retained mode.
    pub accuracy_warning: bool,
    pub sponge_active: bool,
    /// Time at which a non-finite state appeared; the trajectory ends at the
    /// last good state.
    pub aborted_at: Option<f64>,
}

/// Recorded evolution.  States are stored in the physical frame regardless
/// of the stepping frame; ledgers are scheme-native (finite-difference form
/// for Crank-Nicolson, transformed-frame spectral form for Strang) so that
/// drift measures time-stepping error rather than a fixed discretization gap.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub ledgers: Vec<EnergyLedger>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &GridFunction {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }

    pub fn state_at(&self, t: f64) -> Result<&GridFunction> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .map(|i| &self.states[i])
            .ok_or(Error::TimeNotRecorded(t))
    }
}

/// Exact flat-frame flow: DFT coefficients rotate by `e^{-i t xi^2}`.
pub fn free_flow(u0: &GridFunction, t: f64) -> GridFunction {
    grid::apply_multiplier(u0, false, |xi| C64::from_polar(1.0, -t * xi * xi))
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if !(t_final >= 0.0) {
        return Err(Error::Config(format!("final time must be nonnegative, got {t_final}")));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::Config(format!(
            "final time {t_final} is not a whole number of steps of {dt}"
        )));
    }
    Ok(n as usize)
}

fn sponge_mask(positions: &[f64], l: f64, dt: f64, sp: &SpongeConfig) -> Vec<f64> {
    let x0 = (1.0 - sp.width_fraction) * l;
    positions
        .iter()
        .map(|&x| {
            let s = ((x.abs() - x0) / (l - x0)).clamp(0.0, 1.0);
            let ramp = s * s * (3.0 - 2.0 * s);
            (-dt * sp.strength * ramp).exp()
        })
        .collect()
}

/// Exact flow of `i u_t = |u|^{beta-1} u` over `half_dt`: a pure phase, the
/// modulus is untouched.
fn nonlinear_half_phase(vals: &mut [C64], half_dt: f64, beta: f64) {
    let bm1 = beta - 1.0;
    for z in vals.iter_mut() {
        let amp = z.norm();
        if amp > 0.0 {
            *z *= C64::from_polar(1.0, -half_dt * amp.powf(bm1));
        }
    }
}

fn kind_label(f: &FieldSpec) -> &'static str {
    match f {
        FieldSpec::Constant { .. } => "constant",
        FieldSpec::GaussianBump { .. } => "gaussian_bump",
        FieldSpec::QuadraticGaussian { .. } => "quadratic_gaussian",
        FieldSpec::RationalBump { .. } => "rational_bump",
        FieldSpec::TanhStep { .. } => "tanh_step",
        FieldSpec::GaussianDerivative { .. } => "gaussian_derivative",
        FieldSpec::Samples { .. } => "samples",
    }
}

pub fn coefficient_label(cs: &CoefficientSet) -> String {
    format!(
        "a={},b={},c={},beta={}",
        kind_label(&cs.a),
        kind_label(&cs.b),
        kind_label(&cs.c),
        cs.beta
    )
}

struct Recording {
    times: Vec<f64>,
    states: Vec<GridFunction>,
    ledgers: Vec<EnergyLedger>,
}

impl Recording {
    fn new() -> Self {
        Recording { times: Vec::new(), states: Vec::new(), ledgers: Vec::new() }
    }

    fn push(&mut self, t: f64, u: GridFunction, led: EnergyLedger) {
        self.times.push(t);
        self.states.push(u);
        self.ledgers.push(led);
    }
}

/// Crank-Nicolson driver.  `beta = Some` wraps each linear step in exact
/// nonlinear half-phases (Strang order); `None` is the plain linear flow.
fn cn_drive(
    fd: &FdOperator,
    u0: &GridFunction,
    t_final: f64,
    cfg: &StepperConfig,
    beta: Option<f64>,
    coefficient_id: String,
) -> Result<Trajectory> {
    let g = fd.grid;
    if u0.grid() != g {
        return Err(Error::GridMismatch { expected: g.point_count(), got: u0.grid().point_count() });
    }
    if cfg.record_stride == 0 {
        return Err(Error::Config("record stride must be positive".into()));
    }
    let n_steps = step_count(t_final, cfg.dt)?;
    let half = C64::new(0.0, cfg.dt / 2.0);
    let plus = fd.shifted_system(C64::new(1.0, 0.0), half);
    let minus = fd.shifted_system(C64::new(1.0, 0.0), -half);
    let mask = cfg.sponge.as_ref().map(|sp| sponge_mask(&g.xs(), g.half_length(), cfg.dt, sp));
    let mut meta = TrajectoryMeta {
        scheme: if beta.is_some() { cfg.scheme } else { Scheme::CrankNicolson },
        dt: cfg.dt,
        record_stride: cfg.record_stride,
        coefficient_id,
        accuracy_warning: cfg.dt * fd.norm_estimate() > 1.0,
        sponge_active: mask.is_some(),
        aborted_at: None,
    };
    let ledger_of = |u: &GridFunction| match beta {
        Some(b) => operator::energies_fd(fd, u, b, cfg.c0),
        None => operator::linear_energies(fd, u, cfg.c0),
    };

    let mut rec = Recording::new();
    let mut u = u0.clone();
    rec.push(0.0, u.clone(), ledger_of(&u));
    let mut last_recorded = 0usize;
    for k in 1..=n_steps {
        let mut work = u.values().to_vec();
        if let Some(b) = beta {
            nonlinear_half_phase(&mut work, cfg.dt / 2.0, b);
        }
        let rhs = minus.matvec(&work);
        let mut next = plus.solve(&rhs);
        let res = plus.residual(&next, &rhs);
        if res.is_finite() && res > CN_RESIDUAL_TOL {
            return Err(Error::StepperFailure(format!(
                "cyclic solve residual {res:.3e} at step {k}"
            )));
        }
        if let Some(b) = beta {
            nonlinear_half_phase(&mut next, cfg.dt / 2.0, b);
        }
        if let Some(m) = &mask {
            for (z, &f) in next.iter_mut().zip(m) {
                *z *= f;
            }
        }
        if !next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            meta.aborted_at = Some(k as f64 * cfg.dt);
            if last_recorded != k - 1 {
                rec.push((k - 1) as f64 * cfg.dt, u.clone(), ledger_of(&u));
            }
            break;
        }
        u = GridFunction::from_values(g, next)?;
        if k % cfg.record_stride == 0 || k == n_steps {
            rec.push(k as f64 * cfg.dt, u.clone(), ledger_of(&u));
            last_recorded = k;
        }
    }
    Ok(Trajectory { times: rec.times, states: rec.states, ledgers: rec.ledgers, meta })
}

/// Linear flow `e^{-itA}` by Crank-Nicolson on the finite-difference matrix.
/// Unconditionally stable; the discrete L2 norm and the discrete quadratic
/// form are conserved to solver tolerance.
pub fn linear_flow(
    fd: &FdOperator,
    u0: &GridFunction,
    t_final: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    if cfg.scheme == Scheme::StrangGauge {
        return Err(Error::Config(
            "linear Strang stepping needs the coefficient set; use linear_flow_transformed".into(),
        ));
    }
    cn_drive(fd, u0, t_final, cfg, None, "fd-matrix".into())
}

/// Shared driver for the transformed-frame spectral splitting.  The state is
/// gauged and mapped once, stepped as
/// phase(dt/2) -> kinetic(dt) -> phase(dt/2)
/// with the effective potential (and, when nonlinear, the weighted modulus
/// term) in the phase, then pulled back to the physical frame at record times.
fn strang_drive(
    cs: &CoefficientSet,
    u0: &GridFunction,
    t_final: f64,
    cfg: &StepperConfig,
    nonlinear: bool,
) -> Result<Trajectory> {
    let g = u0.grid();
    if cfg.record_stride == 0 {
        return Err(Error::Config("record stride must be positive".into()));
    }
    let n_steps = step_count(t_final, cfg.dt)?;
    let gauge = transforms::build_gauge(cs, g);
    if gauge.flux().abs() > FLUX_TOL {
        return Err(Error::MagneticFieldPresent(gauge.flux()));
    }
    let map = transforms::build_liouville(cs, g)?;
    let c_tilde = map.c_tilde().to_vec();
    let weight = nonlinear.then(|| map.nonlinear_weight(cs.beta));
    let mask =
        cfg.sponge.as_ref().map(|sp| sponge_mask(map.x_of_target(), g.half_length(), cfg.dt, sp));

    let w0 = gauge.forward(u0);
    let mut v = transforms::apply_liouville(&w0, &map, MapDirection::Forward);
    let tg = map.target_grid();

    // The kinetic substep is exact, so the step-size indicator watches the
    // phase substep alone.
    let mut phase_scale = 0.0f64;
    for (j, z) in v.values().iter().enumerate() {
        let w = weight.as_ref().map_or(0.0, |gw| gw[j] * z.norm().powf(cs.beta - 1.0));
        phase_scale = phase_scale.max((c_tilde[j] + w).abs());
    }
    let mut meta = TrajectoryMeta {
        scheme: Scheme::StrangGauge,
        dt: cfg.dt,
        record_stride: cfg.record_stride,
        coefficient_id: coefficient_label(cs),
        accuracy_warning: cfg.dt * phase_scale > 1.0,
        sponge_active: mask.is_some(),
        aborted_at: None,
    };

    let half_phase = |vals: &mut [C64]| {
        let half_dt = cfg.dt / 2.0;
        match &weight {
            Some(gw) => {
                let bm1 = cs.beta - 1.0;
                for (j, z) in vals.iter_mut().enumerate() {
                    let pot = c_tilde[j] + gw[j] * z.norm().powf(bm1);
                    *z *= C64::from_polar(1.0, -half_dt * pot);
                }
            }
            None => {
                for (j, z) in vals.iter_mut().enumerate() {
                    *z *= C64::from_polar(1.0, -half_dt * c_tilde[j]);
                }
            }
        }
    };
    let ledger_of = |v: &GridFunction| {
        v_frame_ledger(v, &c_tilde, weight.as_ref().map(|gw| (gw.as_slice(), cs.beta)), cfg.c0)
    };
    let pull_back = |v: &GridFunction| {
        let w = transforms::apply_liouville(v, &map, MapDirection::Backward);
        gauge.inverse(&w)
    };

    let mut rec = Recording::new();
    rec.push(0.0, pull_back(&v), ledger_of(&v));
    let mut last_recorded = 0usize;
    for k in 1..=n_steps {
        let mut vals = v.values().to_vec();
        half_phase(&mut vals);
        let interim = GridFunction::from_values(tg, vals)?;
        let kicked = free_flow(&interim, cfg.dt);
        let mut vals = kicked.into_values();
        half_phase(&mut vals);
        if let Some(m) = &mask {
            for (z, &f) in vals.iter_mut().zip(m) {
                *z *= f;
            }
        }
        if !vals.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            meta.aborted_at = Some(k as f64 * cfg.dt);
            if last_recorded != k - 1 {
                rec.push((k - 1) as f64 * cfg.dt, pull_back(&v), ledger_of(&v));
            }
            break;
        }
        v = GridFunction::from_values(tg, vals)?;
        if k % cfg.record_stride == 0 || k == n_steps {
            rec.push(k as f64 * cfg.dt, pull_back(&v), ledger_of(&v));
            last_recorded = k;
        }
    }
    Ok(Trajectory { times: rec.times, states: rec.states, ledgers: rec.ledgers, meta })
}

/// Transformed-frame ledger: `||v||`, `||v_y||^2 + int c_tilde |v|^2`, and the
/// weighted potential.  These equal the physical-frame quantities up to map
/// interpolation error.
fn v_frame_ledger(
    v: &GridFunction,
    c_tilde: &[f64],
    weight: Option<(&[f64], f64)>,
    c0: f64,
) -> EnergyLedger {
    let h = v.grid().spacing();
    let mass = grid::norm(v, Norm::L2);
    let dv = grid::derivative(v);
    let mut quadratic = grid::norm(&dv, Norm::L2).powi(2);
    let mut cpart = 0.0;
    for (j, z) in v.values().iter().enumerate() {
        cpart += c_tilde[j] * z.norm_sqr();
    }
    quadratic += h * cpart;
    let potential = match weight {
        Some((gw, beta)) => {
            let q = beta + 1.0;
            let mut acc = 0.0;
            for (j, z) in v.values().iter().enumerate() {
                acc += gw[j] * z.norm().powf(q);
            }
            2.0 / q * h * acc
        }
        None => 0.0,
    };
    let energy = quadratic + potential;
    EnergyLedger { mass, quadratic, potential, energy, full_energy: energy + c0 * mass * mass, c0 }
}

/// Linear flow through the gauge + Liouville reduction; requires zero net
/// magnetic flux.  Cross-validates the Crank-Nicolson path.
pub fn linear_flow_transformed(
    cs: &CoefficientSet,
    u0: &GridFunction,
    t_final: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    strang_drive(cs, u0, t_final, cfg, false)
}

/// Full nonlinear solver for `i u_t - Au = |u|^{beta-1} u`.
pub fn nlse_evolve(
    cs: &CoefficientSet,
    u0: &GridFunction,
    t_final: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    match cfg.scheme {
        Scheme::CrankNicolson => {
            let fd = operator::assemble_fd(cs, u0.grid())?;
            cn_drive(&fd, u0, t_final, cfg, Some(cs.beta), coefficient_label(cs))
        }
        Scheme::StrangGauge => strang_drive(cs, u0, t_final, cfg, true),
    }
}

fn cn_stream(
    fd: &FdOperator,
    u: &GridFunction,
    t: f64,
    dt: f64,
    backward: bool,
) -> Result<GridFunction> {
    if u.grid() != fd.grid {
        return Err(Error::GridMismatch {
            expected: fd.grid.point_count(),
            got: u.grid().point_count(),
        });
    }
    let n_steps = step_count(t, dt)?;
    let half = C64::new(0.0, dt / 2.0);
    let plus = fd.shifted_system(C64::new(1.0, 0.0), half);
    let minus = fd.shifted_system(C64::new(1.0, 0.0), -half);
    // forward step: apply (I - i dt/2 A), solve (I + i dt/2 A); the reverse
    // order is its exact algebraic inverse
    let (apply, solve) = if backward { (&plus, &minus) } else { (&minus, &plus) };
    let mut vals = u.values().to_vec();
    for k in 1..=n_steps {
        let rhs = apply.matvec(&vals);
        vals = solve.solve(&rhs);
        let res = solve.residual(&vals, &rhs);
        if !res.is_finite() || res > CN_RESIDUAL_TOL {
            return Err(Error::StepperFailure(format!(
                "cyclic solve residual {res:.3e} at step {k}"
            )));
        }
    }
    GridFunction::from_values(fd.grid, vals)
}

/// `e^{-itA} u` by Crank-Nicolson without recording.
pub fn linear_push(fd: &FdOperator, u: &GridFunction, t: f64, dt: f64) -> Result<GridFunction> {
    cn_stream(fd, u, t, dt, false)
}

/// `e^{+itA} u`: each reversed step is the exact algebraic inverse of the
/// forward step at the same step size, so pulling back a state produced by
/// the forward scheme recovers it to solver tolerance.
pub fn linear_pullback(fd: &FdOperator, u: &GridFunction, t: f64, dt: f64) -> Result<GridFunction> {
    cn_stream(fd, u, t, dt, true)
}

/// Dense symmetric eigendecomposition of the finite-difference operator,
/// usable as an exact-in-time reference on small grids.  Requires vanishing
/// link phases (the matrix must be real symmetric).
pub struct SmallPropagator {
    grid: Grid,
    evals: Vec<f64>,
    // row-major n x n; column k holds eigenvector k
    evecs: Vec<f64>,
}

impl SmallPropagator {
    pub fn build(fd: &FdOperator) -> Result<Self> {
        let n = fd.diag.len();
        if n > EXACT_SMALL_MAX {
            return Err(Error::OracleTooLarge { max: EXACT_SMALL_MAX, got: n });
        }
        for u in &fd.upper {
            if u.im.abs() > 1e-12 * u.norm() {
                return Err(Error::OracleNeedsZeroB);
            }
        }
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            m[j * n + j] = fd.diag[j];
            let up = fd.upper[j].re;
            let jn = (j + 1) % n;
            m[j * n + jn] = up;
            m[jn * n + j] = up;
        }
        let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (evals, evecs, off) = jacobi_eigh(m, n);
        if off > 1e-11 * fro.max(1e-300) {
            return Err(Error::Experiment {
                name: "eigendecomposition".into(),
                reason: format!("Jacobi sweeps stalled at off-diagonal {off:.3e}"),
            });
        }
        Ok(SmallPropagator { grid: fd.grid, evals, evecs })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.evals
    }

    /// `e^{-itA} u0` through the eigenbasis; exact in time.
    pub fn evolve(&self, u0: &GridFunction, t: f64) -> GridFunction {
        assert_eq!(u0.grid(), self.grid, "propagator and state grids differ");
        let n = self.evals.len();
        let vals = u0.values();
        let mut coef = vec![C64::new(0.0, 0.0); n];
        for (k, c) in coef.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                s += vals[i] * self.evecs[i * n + k];
            }
            *c = s * C64::from_polar(1.0, -t * self.evals[k]);
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for (k, c) in coef.iter().enumerate() {
                s += *c * self.evecs[i * n + k];
            }
            *o = s;
        }
        GridFunction::from_values(self.grid, out).expect("eigenbasis evolution stays finite")
    }
}

/// One-shot convenience around [`SmallPropagator`].
pub fn linear_flow_exact_small(fd: &FdOperator, u0: &GridFunction, t: f64) -> Result<GridFunction> {
    Ok(SmallPropagator::build(fd)?.evolve(u0, t))
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass is below
/// 1e-13 of the matrix norm.  Returns (eigenvalues, eigenvectors, final
/// off-diagonal mass).
fn jacobi_eigh(mut m: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-13 * fro.max(1e-300);
    let off_mass = |m: &[f64]| {
        let mut acc = 0.0;
        for p in 0..n {
            for r in p + 1..n {
                acc += 2.0 * m[p * n + r] * m[p * n + r];
            }
        }
        acc.sqrt()
    };
    let mut off = off_mass(&m);
    for _ in 0..60 {
        if off <= tol {
            break;
        }
        let skip = tol / n as f64;
        for p in 0..n - 1 {
            for r in p + 1..n {
                let apr = m[p * n + r];
                if apr.abs() <= skip {
                    continue;
                }
                let theta = (m[r * n + r] - m[p * n + p]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[i * n + p];
                    let mir = m[i * n + r];
                    m[i * n + p] = c * mip - s * mir;
                    m[i * n + r] = s * mip + c * mir;
                }
                for i in 0..n {
                    let mpi = m[p * n + i];
                    let mri = m[r * n + i];
                    m[p * n + i] = c * mpi - s * mri;
                    m[r * n + i] = s * mpi + c * mri;
                }
                for i in 0..n {
                    let qip = q[i * n + p];
                    let qir = q[i * n + r];
                    q[i * n + p] = c * qip - s * qir;
                    q[i * n + r] = s * qip + c * qir;
                }
            }
        }
        off = off_mass(&m);
    }
    let evals = (0..n).map(|i| m[i * n + i]).collect();
    (evals, q, off)
}

/// Time for the fastest resolved spectral component of `u` to cross the box
/// under the free flow: `2L / (2 xi_q)` with `xi_q` the largest frequency
/// whose amplitude exceeds 1e-6 of the spectral peak.  Measurement windows
/// should stay well inside this.
pub fn wrap_time(u: &GridFunction) -> f64 {
    let g = u.grid();
    let spec = g.dft(u.values());
    let peak = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return f64::INFINITY;
    }
    let mut xi_q = 0.0f64;
    for (k, z) in spec.iter().enumerate() {
        if z.norm() >= 1e-6 * peak {
            xi_q = xi_q.max(g.xi(k).abs());
        }
    }
    if xi_q == 0.0 {
        f64::INFINITY
    } else {
        g.half_length() / xi_q
    }
}
