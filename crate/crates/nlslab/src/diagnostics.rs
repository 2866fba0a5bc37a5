//! Scattering and dispersion measurements on computed trajectories:
//! conservation audits, decay-rate fits, space-time quotients, numerical
//! wave operators with their Cauchy ladders, small-data scans, and
//! localization ratios.

use serde::Serialize;

use crate::coeffs::CoefficientSet;
use crate::exponents::ExponentTable;
use crate::grid::{self, GridFunction, Norm};
use crate::operator::FdOperator;
use crate::par;
use crate::propagate::{self, StepperConfig, Trajectory};
use crate::{Error, Result};

/// Time series at recorded times.
pub type Series = Vec<(f64, f64)>;

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub mass_tol: f64,
    pub energy_tol: f64,
    pub mass_flagged: bool,
    pub energy_flagged: bool,
}

/// Max relative drifts of the ledger mass and energy over a trajectory.
pub fn conservation_report(
    traj: &Trajectory,
    mass_tol: f64,
    energy_tol: f64,
) -> Result<ConservationReport> {
    if traj.ledgers.is_empty() {
        return Err(Error::Config("trajectory has no ledgers".into()));
    }
    let m0 = traj.ledgers[0].mass;
    let e0 = traj.ledgers[0].energy;
    let rel = |x: f64, x0: f64| (x - x0).abs() / x0.abs().max(1e-300);
    let mut mass_drift = 0.0f64;
    let mut energy_drift = 0.0f64;
    for led in &traj.ledgers {
        mass_drift = mass_drift.max(rel(led.mass, m0));
        energy_drift = energy_drift.max(rel(led.energy, e0));
    }
    if m0 == 0.0 && traj.ledgers.iter().all(|l| l.mass == 0.0) {
        mass_drift = 0.0;
        energy_drift = 0.0;
    }
    Ok(ConservationReport {
        mass_drift,
        energy_drift,
        mass_tol,
        energy_tol,
        mass_flagged: mass_drift > mass_tol,
        energy_flagged: energy_drift > energy_tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub p_exponent: f64,
    pub window: (f64, f64),
    pub fitted_slope: f64,
    /// `1/p - 1/2`.
    pub target_slope: f64,
    pub residual: f64,
}

/// Least-squares slope of `log ||u(t)||_{L^p}` against `log t` over the
/// window, under the linear flow.  The window must span at least a decade
/// and stay inside the wrap-around horizon of the datum.
pub fn decay_fit(
    fd: &FdOperator,
    u0: &GridFunction,
    p: f64,
    window: (f64, f64),
    cfg: &StepperConfig,
) -> Result<DecayFit> {
    if !(p > 2.0) {
        return Err(Error::Config(format!(
            "decay fits need p > 2; the L^2 norm does not decay (p = {p})"
        )));
    }
    let (t_min, t_max) = window;
    if !(t_min > 0.0) || t_max < 10.0 * t_min {
        return Err(Error::Config(format!(
            "fit window [{t_min}, {t_max}] spans less than a decade"
        )));
    }
    let wrap = propagate::wrap_time(u0);
    if t_max > wrap {
        return Err(Error::Config(format!(
            "fit window end {t_max} is beyond the wrap-around time {wrap:.3}"
        )));
    }
    let traj = propagate::linear_flow(fd, u0, t_max, cfg)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, u) in traj.times.iter().zip(&traj.states) {
        if *t >= t_min && *t <= t_max {
            xs.push(t.ln());
            ys.push(grid::norm(u, Norm::Lq(p)).ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::Config(format!(
            "only {} recorded samples inside the fit window; lower record_stride",
            xs.len()
        )));
    }
    let fitted_slope = least_squares_slope(&xs, &ys);
    let target_slope = 1.0 / p - 0.5;
    Ok(DecayFit {
        p_exponent: p,
        window,
        fitted_slope,
        target_slope,
        residual: (fitted_slope - target_slope).abs(),
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Empirical space-time-over-mass quotient: the max over the data of
/// `||e^{-itA} f||_{L^p L^r} / ||f||_{L^2}` up to the horizon.  Finiteness
/// uniform in the datum is the content of the linear space-time estimate.
pub fn strichartz_quotient(
    fd: &FdOperator,
    data: &[GridFunction],
    tab: &ExponentTable,
    t_horizon: f64,
    cfg: &StepperConfig,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("quotient needs at least one datum".into()));
    }
    let quotients: Vec<Result<f64>> = par::map(data, |f| {
        let mass = grid::norm(f, Norm::L2);
        if mass == 0.0 {
            return Err(Error::Config("zero datum has no quotient".into()));
        }
        let traj = propagate::linear_flow(fd, f, t_horizon, cfg)?;
        let spacing = cfg.dt * cfg.record_stride as f64;
        Ok(grid::spacetime_norm(&traj.states, spacing, tab.p, tab.r) / mass)
    });
    let mut best = 0.0f64;
    for q in quotients {
        best = best.max(q?);
    }
    Ok(best)
}

/// Numerical wave-operator state: the trajectory state at `t` pulled back by
/// the backward linear flow, `e^{+itA} u(t)`.  Along a scattering solution
/// these settle to the asymptotic datum as `t` grows.
pub fn wave_operator_state(traj: &Trajectory, fd: &FdOperator, t: f64) -> Result<GridFunction> {
    let state = traj.state_at(t)?;
    propagate::linear_pullback(fd, state, t, traj.meta.dt)
}

/// `|| e^{+iT1 A} u(T1) - e^{+iT2 A} u(T2) ||_{H^1}`; symmetric in the two
/// times.  Decreasing defects along a time ladder are the checkable trace of
/// the Cauchy property behind scattering.
pub fn cauchy_defect(traj: &Trajectory, fd: &FdOperator, t1: f64, t2: f64) -> Result<f64> {
    let a = wave_operator_state(traj, fd, t1)?;
    let b = wave_operator_state(traj, fd, t2)?;
    Ok(grid::norm(&a.sub(&b), Norm::H1))
}

/// `d(t) = ||u(t) - e^{-itA} phi_plus||_{H^1}` at every recorded time, with
/// the comparison flow stepped at the trajectory's own step size.
pub fn scattering_distance_series(
    traj: &Trajectory,
    fd: &FdOperator,
    phi_plus: &GridFunction,
) -> Result<Series> {
    let dt = traj.meta.dt;
    let mut series = Vec::with_capacity(traj.times.len());
    let mut flown = phi_plus.clone();
    let mut t_prev = 0.0;
    for (t, u) in traj.times.iter().zip(&traj.states) {
        if *t > t_prev {
            flown = propagate::linear_push(fd, &flown, *t - t_prev, dt)?;
            t_prev = *t;
        }
        series.push((*t, grid::norm(&u.sub(&flown), Norm::H1)));
    }
    Ok(series)
}

#[derive(Debug, Serialize)]
pub struct ScatteringReport {
    /// Pull-back of the state at the last ladder time.
    #[serde(skip)]
    pub phi_plus: GridFunction,
    /// `(t, d(t))` with `d` the distance to the free evolution of phi_plus.
    pub distances: Series,
    /// `(t_k, defect(t_k, t_{k+1}))` over consecutive ladder pairs.
    pub cauchy_defects: Series,
    pub spacetime_norm_lplr: f64,
    pub ladder: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ScatteringConsistent,
    Inconclusive,
}

/// Full scattering audit along a time ladder.  Consistency asks for
/// nonincreasing Cauchy defects that end at no more than half their starting
/// value; anything else is inconclusive (finite-time data cannot certify
/// more).
pub fn scattering_report(
    traj: &Trajectory,
    fd: &FdOperator,
    ladder: &[f64],
    tab: &ExponentTable,
) -> Result<ScatteringReport> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("ladder must hold at least two increasing times".into()));
    }
    let pulled: Vec<Result<GridFunction>> =
        par::map(ladder, |&t| wave_operator_state(traj, fd, t));
    let mut states = Vec::with_capacity(ladder.len());
    for s in pulled {
        states.push(s?);
    }
    let mut cauchy_defects = Vec::new();
    for (k, pair) in states.windows(2).enumerate() {
        cauchy_defects.push((ladder[k], grid::norm(&pair[0].sub(&pair[1]), Norm::H1)));
    }
    let phi_plus = states.pop().expect("ladder is nonempty");
    let distances = scattering_distance_series(traj, fd, &phi_plus)?;
    let spacing = traj.meta.dt * traj.meta.record_stride as f64;
    let spacetime_norm_lplr = grid::spacetime_norm(&traj.states, spacing, tab.p, tab.r);
    let nonincreasing = cauchy_defects.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9));
    let first = cauchy_defects.first().map_or(0.0, |d| d.1);
    let last = cauchy_defects.last().map_or(0.0, |d| d.1);
    let verdict = if nonincreasing && last <= 0.5 * first {
        Verdict::ScatteringConsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(ScatteringReport {
        phi_plus,
        distances,
        cauchy_defects,
        spacetime_norm_lplr,
        ladder: ladder.to_vec(),
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub spacetime_norm: f64,
    /// `spacetime_norm / (epsilon * linear spacetime norm of the shape)`;
    /// approaches 1 in the linear-dominated regime.
    pub linear_ratio: f64,
    /// Cauchy defect between the two last recorded times.
    pub final_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Space-time norm nondecreasing in epsilon; reported, not enforced.
    pub monotone: bool,
    /// The two smallest nonzero epsilons track the linear flow within 5%.
    pub linear_limit: bool,
}

/// Amplitude scan: evolves `eps * shape` for each epsilon and reports how the
/// space-time norm tracks the linear prediction.
pub fn smalldata_threshold_scan(
    cs: &CoefficientSet,
    shape: &GridFunction,
    epsilons: &[f64],
    tab: &ExponentTable,
    t_final: f64,
    cfg: &StepperConfig,
) -> Result<ScanReport> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("epsilons must be strictly increasing".into()));
    }
    if epsilons.iter().any(|&e| e < 0.0) {
        return Err(Error::Config("epsilons must be nonnegative".into()));
    }
    let fd = crate::operator::assemble_fd(cs, shape.grid())?;
    let spacing = cfg.dt * cfg.record_stride as f64;
    let linear_traj = propagate::linear_flow(&fd, shape, t_final, cfg)?;
    let linear_norm = grid::spacetime_norm(&linear_traj.states, spacing, tab.p, tab.r);
    let rows: Vec<Result<ScanRow>> = par::map(epsilons, |&eps| {
        if eps == 0.0 {
            return Ok(ScanRow {
                epsilon: 0.0,
                spacetime_norm: 0.0,
                linear_ratio: 0.0,
                final_defect: 0.0,
            });
        }
        let traj = propagate::nlse_evolve(cs, &shape.scale(eps), t_final, cfg)?;
        let st = grid::spacetime_norm(&traj.states, spacing, tab.p, tab.r);
        let k = traj.times.len();
        let final_defect = if k >= 2 {
            cauchy_defect(&traj, &fd, traj.times[k - 2], traj.times[k - 1])?
        } else {
            0.0
        };
        Ok(ScanRow {
            epsilon: eps,
            spacetime_norm: st,
            linear_ratio: st / (eps * linear_norm),
            final_defect,
        })
    });
    let mut rows_ok = Vec::with_capacity(rows.len());
    for r in rows {
        rows_ok.push(r?);
    }
    let monotone = rows_ok.windows(2).all(|w| w[1].spacetime_norm >= w[0].spacetime_norm - 1e-12);
    let nonzero: Vec<&ScanRow> = rows_ok.iter().filter(|r| r.epsilon > 0.0).collect();
    let linear_limit = nonzero.len() >= 2
        && nonzero[..2].iter().all(|r| (r.linear_ratio - 1.0).abs() <= 0.05);
    Ok(ScanReport { rows: rows_ok, monotone, linear_limit })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationRow {
    pub t: f64,
    /// Exterior over interior L2 mass.
    pub mass_ratio: f64,
    /// Exterior over interior share of `|u_x|^2 + (2/(beta+1))|u|^{beta+1}`.
    pub energy_ratio: f64,
}

/// Exterior-to-interior concentration ratios at radius `R` along a
/// trajectory.  A solution staying localized keeps both ratios small; a
/// dispersing one sends the mass ratio up.  Degenerate interiors report
/// infinity.
pub fn localization_ratio(traj: &Trajectory, big_r: f64, beta: f64) -> Result<Vec<LocalizationRow>> {
    let g = traj.states.first().ok_or_else(|| Error::Config("empty trajectory".into()))?.grid();
    if !(big_r > 0.0 && big_r < g.half_length()) {
        return Err(Error::Config(format!(
            "radius {big_r} must sit inside the box (0, {})",
            g.half_length()
        )));
    }
    let h = g.spacing();
    let q = beta + 1.0;
    let mut rows = Vec::with_capacity(traj.times.len());
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let du = grid::derivative(u);
        let mut mass_in = 0.0;
        let mut mass_out = 0.0;
        let mut en_in = 0.0;
        let mut en_out = 0.0;
        for (j, (z, dz)) in u.values().iter().zip(du.values()).enumerate() {
            let dens_mass = z.norm_sqr();
            let dens_en = dz.norm_sqr() + 2.0 / q * z.norm().powf(q);
            if g.x(j).abs() <= big_r {
                mass_in += dens_mass;
                en_in += dens_en;
            } else {
                mass_out += dens_mass;
                en_out += dens_en;
            }
        }
        let ratio = |out: f64, inside: f64| {
            if inside * h > 0.0 { out / inside } else if out > 0.0 { f64::INFINITY } else { 0.0 }
        };
        rows.push(LocalizationRow {
            t: *t,
            mass_ratio: ratio(mass_out, mass_in),
            energy_ratio: ratio(en_out, en_in),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;
    use crate::exponents::admissible_pairs;
    use crate::grid::make_grid;
    use crate::operator::assemble_fd;
    use crate::propagate::{linear_flow, nlse_evolve};
    use crate::C64;

    fn gaussian(g: crate::Grid, amp: f64, width: f64) -> GridFunction {
        GridFunction::sample(g, |x| C64::new(amp * (-(x / width).powi(2) / 2.0).exp(), 0.0))
    }

    fn catalog_pair(beta: f64) -> CoefficientSet {
        CoefficientSet::new(
            FieldSpec::GaussianBump { base: 1.0, amp: 0.5, width: 1.0, center: 0.0 },
            FieldSpec::zero(),
            FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 },
            0.5,
            1.0,
            beta,
        )
        .unwrap()
    }

    #[test]
    fn conservation_zero_solution_and_fault_injection() {
        let g = make_grid(20.0, 128).unwrap();
        let cs = catalog_pair(7.0);
        let cfg = StepperConfig { dt: 1e-2, record_stride: 10, ..Default::default() };
        let zero = nlse_evolve(&cs, &GridFunction::zeros(g), 0.5, &cfg).unwrap();
        let rep = conservation_report(&zero, 1e-10, 1e-6).unwrap();
        assert_eq!(rep.mass_drift, 0.0);
        assert_eq!(rep.energy_drift, 0.0);
        assert!(!rep.mass_flagged && !rep.energy_flagged);

        let mut traj = nlse_evolve(&cs, &gaussian(g, 0.8, 1.0), 0.5, &cfg).unwrap();
        let k = traj.states.len() / 2;
        traj.states[k] = traj.states[k].scale(1.01);
        traj.ledgers[k].mass *= 1.01;
        let rep = conservation_report(&traj, 1e-10, 1e-6).unwrap();
        assert!(rep.mass_flagged);
        assert!((rep.mass_drift - 1e-2).abs() < 1e-4);
    }

    #[test]
    fn conservation_catalog_run_is_clean() {
        let g = make_grid(40.0, 256).unwrap();
        let cs = CoefficientSet::new(
            FieldSpec::GaussianBump { base: 1.0, amp: 0.5, width: 1.0, center: 0.0 },
            FieldSpec::zero(),
            FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 },
            0.5,
            1.0,
            7.0,
        )
        .unwrap();
        let cfg = StepperConfig { dt: 1e-3, record_stride: 100, ..Default::default() };
        let traj = nlse_evolve(&cs, &gaussian(g, 0.8, 1.0), 1.0, &cfg).unwrap();
        let rep = conservation_report(&traj, 1e-10, 1e-6).unwrap();
        assert!(!rep.mass_flagged, "mass drift {}", rep.mass_drift);
        assert!(!rep.energy_flagged, "energy drift {}", rep.energy_drift);
    }

    #[test]
    fn decay_fit_free_flow_recovers_the_rate() {
        let g = make_grid(150.0, 2048).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let u0 = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 1e-2, record_stride: 50, ..Default::default() };
        for p in [4.0, 8.0] {
            let fit = decay_fit(&fd, &u0, p, (2.0, 20.0), &cfg).unwrap();
            assert!(
                fit.residual <= 0.05,
                "p={p}: slope {} vs {}",
                fit.fitted_slope,
                fit.target_slope
            );
        }
    }

    #[test]
    fn decay_fit_rejects_bad_requests() {
        let g = make_grid(40.0, 256).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let u0 = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 1e-2, record_stride: 10, ..Default::default() };
        assert!(matches!(decay_fit(&fd, &u0, 2.0, (2.0, 20.0), &cfg), Err(Error::Config(_))));
        assert!(matches!(decay_fit(&fd, &u0, 8.0, (2.0, 10.0), &cfg), Err(Error::Config(_))));
        // window end beyond the wrap horizon of this box
        assert!(matches!(decay_fit(&fd, &u0, 8.0, (2.0, 30.0), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn strichartz_quotient_stability_and_symmetries() {
        let g = make_grid(200.0, 2048).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let tab = admissible_pairs(7.0).unwrap();
        let u0 = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 2e-2, record_stride: 25, ..Default::default() };
        let q20 = strichartz_quotient(&fd, &[u0.clone()], &tab, 20.0, &cfg).unwrap();
        let q40 = strichartz_quotient(&fd, &[u0.clone()], &tab, 40.0, &cfg).unwrap();
        assert!(q20 > 0.0 && q40.is_finite());
        assert!((q40 - q20).abs() / q20 <= 0.05, "horizon instability: {q20} vs {q40}");

        let scaled = strichartz_quotient(&fd, &[u0.scale(3.7)], &tab, 20.0, &cfg).unwrap();
        assert!((scaled - q20).abs() <= 1e-12 * q20, "homogeneity broken: {q20} vs {scaled}");

        let (shifted, applied) = grid::translate(&u0, 12.0);
        assert!((applied - 12.0).abs() < g.spacing());
        let qs = strichartz_quotient(&fd, &[shifted], &tab, 20.0, &cfg).unwrap();
        assert!((qs - q20).abs() / q20 <= 0.05, "translation moved quotient: {q20} vs {qs}");
    }

    #[test]
    fn strichartz_quotient_rejects_empty_and_zero() {
        let g = make_grid(40.0, 256).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let tab = admissible_pairs(7.0).unwrap();
        let cfg = StepperConfig { dt: 1e-2, record_stride: 10, ..Default::default() };
        assert!(strichartz_quotient(&fd, &[], &tab, 1.0, &cfg).is_err());
        assert!(strichartz_quotient(&fd, &[GridFunction::zeros(g)], &tab, 1.0, &cfg).is_err());
    }

    #[test]
    fn wave_operator_inverts_the_linear_flow() {
        let g = make_grid(20.0, 256).unwrap();
        let fd = assemble_fd(&catalog_pair(7.0), g).unwrap();
        let u0 = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 1e-2, record_stride: 25, ..Default::default() };
        let traj = linear_flow(&fd, &u0, 1.0, &cfg).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let phi = wave_operator_state(&traj, &fd, t).unwrap();
            let err = grid::norm(&phi.sub(&u0), Norm::H1);
            assert!(err < 1e-9, "pullback at t={t}: {err}");
        }
        assert!(matches!(
            wave_operator_state(&traj, &fd, 0.33),
            Err(Error::TimeNotRecorded(_))
        ));
    }

    // With a tiny datum the nonlinear correction to the asymptotic state
    // scales like eps^beta; halving eps must collapse it by ~2^beta.
    #[test]
    fn wave_operator_small_data_perturbation_order() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = catalog_pair(7.0);
        let fd = assemble_fd(&cs, g).unwrap();
        let cfg = StepperConfig { dt: 1e-3, record_stride: 1000, ..Default::default() };
        let mut errs = Vec::new();
        for eps in [0.05, 0.025] {
            let traj = nlse_evolve(&cs, &gaussian(g, eps, 1.0), 1.0, &cfg).unwrap();
            let phi = wave_operator_state(&traj, &fd, 1.0).unwrap();
            errs.push(grid::norm(&phi.sub(&gaussian(g, eps, 1.0)), Norm::H1));
        }
        let ratio = errs[0] / errs[1];
        assert!((60.0..260.0).contains(&ratio), "order off: {:?} ratio {ratio}", errs);

        let tiny = nlse_evolve(&cs, &gaussian(g, 0.01, 1.0), 1.0, &cfg).unwrap();
        let phi = wave_operator_state(&tiny, &fd, 1.0).unwrap();
        let err = grid::norm(&phi.sub(&gaussian(g, 0.01, 1.0)), Norm::H1);
        assert!(err < 1e-10, "small-data defect {err}");
    }

    #[test]
    fn cauchy_defect_is_symmetric_and_decreasing() {
        let g = make_grid(40.0, 512).unwrap();
        let cs = catalog_pair(7.0);
        let fd = assemble_fd(&cs, g).unwrap();
        let cfg = StepperConfig { dt: 1e-3, record_stride: 250, ..Default::default() };
        let traj = nlse_evolve(&cs, &gaussian(g, 0.5, 1.0), 3.0, &cfg).unwrap();
        let d12 = cauchy_defect(&traj, &fd, 0.75, 1.5).unwrap();
        let d21 = cauchy_defect(&traj, &fd, 1.5, 0.75).unwrap();
        assert!((d12 - d21).abs() <= 1e-14 * d12.max(1.0));
        let d23 = cauchy_defect(&traj, &fd, 1.5, 3.0).unwrap();
        assert!(d23 < d12, "ladder not settling: {d12} then {d23}");
    }

    #[test]
    fn distance_series_identity_and_mismatch() {
        let g = make_grid(20.0, 256).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let u0 = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 1e-2, record_stride: 20, ..Default::default() };
        let traj = linear_flow(&fd, &u0, 1.0, &cfg).unwrap();
        let matched = scattering_distance_series(&traj, &fd, &u0).unwrap();
        for (t, d) in &matched {
            assert!(*d < 1e-9, "linear self-distance {d} at t={t}");
        }
        let mismatched = scattering_distance_series(&traj, &fd, &u0.scale(2.0)).unwrap();
        let h1 = grid::norm(&u0, Norm::H1);
        for (_, d) in &mismatched {
            assert!((d - h1).abs() < 1e-9 * h1, "mismatch distance {d} vs {h1}");
        }
    }

    #[test]
    fn scattering_report_on_a_settling_run() {
        let g = make_grid(40.0, 512).unwrap();
        let cs = catalog_pair(7.0);
        let fd = assemble_fd(&cs, g).unwrap();
        let tab = admissible_pairs(7.0).unwrap();
        let cfg = StepperConfig { dt: 1e-3, record_stride: 250, ..Default::default() };
        let traj = nlse_evolve(&cs, &gaussian(g, 0.3, 1.0), 3.0, &cfg).unwrap();
        let rep = scattering_report(&traj, &fd, &[0.75, 1.5, 3.0], &tab).unwrap();
        assert_eq!(rep.cauchy_defects.len(), 2);
        assert!(rep.spacetime_norm_lplr > 0.0);
        assert_eq!(rep.verdict, Verdict::ScatteringConsistent, "{:?}", rep.cauchy_defects);
        // self-consistency: by construction the distance vanishes at the
        // last ladder time
        let (_, d_last) = rep
            .distances
            .iter()
            .find(|(t, _)| (*t - 3.0).abs() < 1e-9)
            .expect("final time recorded");
        assert!(*d_last < 1e-9, "self-distance at ladder end {d_last}");
    }

    #[test]
    fn smalldata_scan_tracks_the_linear_flow() {
        let g = make_grid(30.0, 256).unwrap();
        let cs = catalog_pair(7.0);
        let tab = admissible_pairs(7.0).unwrap();
        let shape = gaussian(g, 1.0, 1.0);
        let cfg = StepperConfig { dt: 2e-3, record_stride: 50, ..Default::default() };
        let rep =
            smalldata_threshold_scan(&cs, &shape, &[0.0, 0.01, 0.02, 0.5], &tab, 1.0, &cfg)
                .unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep.rows[0].spacetime_norm, 0.0);
        assert!(rep.linear_limit, "{:?}", rep.rows);
        assert!(rep.monotone, "{:?}", rep.rows);
        assert!(smalldata_threshold_scan(&cs, &shape, &[0.2, 0.1], &tab, 1.0, &cfg).is_err());
    }

    #[test]
    fn localization_ratios() {
        let g = make_grid(40.0, 512).unwrap();
        let fd = assemble_fd(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let inside = GridFunction::sample(g, |x| {
            if x.abs() <= 3.0 { C64::new((1.0 - (x / 3.0).powi(2)).powi(2), 0.0) } else { C64::new(0.0, 0.0) }
        });
        let cfg = StepperConfig { dt: 1e-2, record_stride: 100, ..Default::default() };
        let still = Trajectory {
            times: vec![0.0],
            states: vec![inside.clone()],
            ledgers: vec![crate::operator::linear_energies(&fd, &inside, 1.0)],
            meta: linear_flow(&fd, &inside, 0.0, &cfg).unwrap().meta,
        };
        let rows = localization_ratio(&still, 5.0, 7.0).unwrap();
        assert_eq!(rows[0].mass_ratio, 0.0);
        // the bump is only C^1 at its support edge, so the spectral
        // derivative rings a little outside it
        assert!(rows[0].energy_ratio < 1e-4, "{}", rows[0].energy_ratio);

        // dispersing Gaussian sends mass outward
        let u0 = gaussian(g, 1.0, 1.0);
        let traj = linear_flow(&fd, &u0, 4.0, &cfg).unwrap();
        let rows = localization_ratio(&traj, 5.0, 7.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].mass_ratio >= w[0].mass_ratio));
        assert!(rows.last().unwrap().mass_ratio > rows[0].mass_ratio * 2.0);

        // bump parked outside the radius
        let (far, _) = grid::translate(&gaussian(g, 1.0, 1.0), 15.0);
        let parked = Trajectory {
            times: vec![0.0],
            states: vec![far.clone()],
            ledgers: vec![crate::operator::linear_energies(&fd, &far, 1.0)],
            meta: traj.meta.clone(),
        };
        let rows = localization_ratio(&parked, 5.0, 7.0).unwrap();
        assert!(rows[0].mass_ratio > 100.0);

        assert!(localization_ratio(&parked, 45.0, 7.0).is_err());
    }
}
