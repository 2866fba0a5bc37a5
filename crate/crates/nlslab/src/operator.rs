//! The self-adjoint operator A u = -d_b (a d_b u) + c u with the covariant
//! derivative d_b = d/dx - i b, its quadratic form, energies, and the
//! finite-difference realization used by implicit time stepping.

use serde::Serialize;

use crate::coeffs::{CoefficientSet, SampledCoefficients};
use crate::grid::{self, Grid, GridFunction, Norm};
use crate::{C64, Error, Result};

/// Matrix-free spectral realization of A.  Applications are pure; the
/// structure is immutable after assembly.
#[derive(Clone, Debug)]
pub struct Operator {
    grid: Grid,
    sc: SampledCoefficients,
}

/// Validates the floor a > 0 on nodes and links, then freezes the samples.
pub fn assemble(cs: &CoefficientSet, g: Grid) -> Result<Operator> {
    let sc = SampledCoefficients::sample(cs, g);
    for &v in sc.a.iter().chain(sc.a_mid.iter()) {
        if !(v > 0.0) {
            return Err(Error::NonPositiveA(v));
        }
    }
    Ok(Operator { grid: g, sc })
}

impl Operator {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &SampledCoefficients {
        &self.sc
    }

    /// `d_b u = u_x - i b u`, spectral in the derivative.
    pub fn covariant_derivative(&self, u: &GridFunction) -> GridFunction {
        assert_eq!(u.grid(), self.grid);
        let mut du = grid::derivative(u);
        for (j, z) in du.values_mut().iter_mut().enumerate() {
            *z -= C64::new(0.0, self.sc.b[j]) * u.values()[j];
        }
        du
    }

    /// `A u = -d_b (a d_b u) + c u`; Hermitian by construction since the
    /// spectral derivative is anti-Hermitian and a, b, c are real.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let du = self.covariant_derivative(u);
        let w = GridFunction::from_values(
            self.grid,
            du.values().iter().zip(&self.sc.a).map(|(z, &a)| z * a).collect(),
        )
        .expect("finite by construction");
        let mut dw = grid::derivative(&w);
        let out: Vec<C64> = (0..self.grid.point_count())
            .map(|j| {
                let inner = dw.values_mut()[j] - C64::new(0.0, self.sc.b[j]) * w.values()[j];
                -inner + self.sc.c[j] * u.values()[j]
            })
            .collect();
        GridFunction::from_values(self.grid, out).expect("finite by construction")
    }

    /// `(A u, u) = h sum (a |d_b u|^2 + c |u|^2)`, real and nonnegative for
    /// c >= 0.
    pub fn quadratic_form(&self, u: &GridFunction) -> f64 {
        let du = self.covariant_derivative(u);
        let mut acc = 0.0;
        for j in 0..self.grid.point_count() {
            acc += self.sc.a[j] * du.values()[j].norm_sqr()
                + self.sc.c[j] * u.values()[j].norm_sqr();
        }
        self.grid.spacing() * acc
    }
}

/// Conserved-quantity snapshot for one state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyLedger {
    /// `||u||_L2` (so the conserved quadratic quantity is `mass^2`).
    pub mass: f64,
    /// `(A u, u)`.
    pub quadratic: f64,
    /// `(2/(beta+1)) ||u||^{beta+1}_{L^{beta+1}}`.
    pub potential: f64,
    /// `quadratic + potential`.
    pub energy: f64,
    /// `energy + c0 * mass^2`; the coercive combination.
    pub full_energy: f64,
    pub c0: f64,
}

pub fn energies(op: &Operator, u: &GridFunction, beta: f64, c0: f64) -> EnergyLedger {
    let mass = grid::norm(u, Norm::L2);
    let quadratic = op.quadratic_form(u);
    let q = beta + 1.0;
    let mut pot = 0.0;
    for z in u.values() {
        pot += z.norm().powf(q);
    }
    let potential = 2.0 / q * op.grid().spacing() * pot;
    let energy = quadratic + potential;
    EnergyLedger { mass, quadratic, potential, energy, full_energy: energy + c0 * mass * mass, c0 }
}

/// Ledger built from the finite-difference form instead of the spectral one.
/// Trajectories stepped with Crank-Nicolson report through this variant so
/// that drift measures time-stepping error, not the fixed spectral/FD gap.
pub fn energies_fd(op: &FdOperator, u: &GridFunction, beta: f64, c0: f64) -> EnergyLedger {
    let mass = grid::norm(u, Norm::L2);
    let quadratic = op.quadratic_form(u.values());
    let q = beta + 1.0;
    let mut pot = 0.0;
    for z in u.values() {
        pot += z.norm().powf(q);
    }
    let potential = 2.0 / q * op.grid.spacing() * pot;
    let energy = quadratic + potential;
    EnergyLedger { mass, quadratic, potential, energy, full_energy: energy + c0 * mass * mass, c0 }
}

/// Ledger for a linear evolution: no potential term, energy is the quadratic
/// form alone (the quantity the linear flow actually conserves).
pub fn linear_energies(op: &FdOperator, u: &GridFunction, c0: f64) -> EnergyLedger {
    let mass = grid::norm(u, Norm::L2);
    let quadratic = op.quadratic_form(u.values());
    EnergyLedger {
        mass,
        quadratic,
        potential: 0.0,
        energy: quadratic,
        full_energy: quadratic + c0 * mass * mass,
        c0,
    }
}

/// Empirical norm-equivalence constants: min and max over trial fields of
/// `((A v, v) + c0 ||v||^2) / ||v||_H1^2`.  Trial 0 is the constant function
/// (the case that exposes a missing c0); the rest are seeded band-limited
/// noise.  A nonpositive lower bound is reported as an error.
pub fn equivalence_constants(
    op: &Operator,
    c0: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(trials >= 2);
    let g = op.grid();
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 0..trials {
        let v = if i == 0 {
            GridFunction::sample_real(g, |_| 1.0)
        } else {
            let frac = [0.3, 0.6, 0.9][i % 3];
            grid::band_limited_noise(g, frac, 1.0, seed.wrapping_add(i as u64))
        };
        let l2 = grid::norm(&v, Norm::L2);
        let h1 = grid::norm(&v, Norm::H1);
        let ratio = (op.quadratic_form(&v) + c0 * l2 * l2) / (h1 * h1);
        lower = lower.min(ratio);
        upper = upper.max(ratio);
    }
    if lower < 1e-14 {
        return Err(Error::Experiment {
            name: "equivalence_constants".into(),
            reason: format!("degenerate lower bound {lower}; the form does not control H1"),
        });
    }
    Ok((lower, upper))
}

/// Second-order finite-difference realization of A on the periodic grid.
///
/// The magnetic potential enters through link phases: the hop from node j to
/// j+1 carries `exp(-i int_link b)`, with the integral taken from the same
/// antiderivative the gauge transform uses.  That choice keeps the matrix
/// Hermitian for any b, reduces to the plain symmetric stencil at b = 0, and
/// makes the matrix exactly unitarily equivalent to its b = 0 counterpart
/// whenever b carries no net flux around the box.
#[derive(Clone, Debug)]
pub struct FdOperator {
    pub grid: Grid,
    /// `(a_{j+1/2} + a_{j-1/2})/h^2 + c_j`.
    pub diag: Vec<f64>,
    /// Coupling of node j to node j+1 (index N-1 wraps to node 0):
    /// `-a_{j+1/2} exp(-i phi_j) / h^2` with `phi_j = B(x_{j+1}) - B(x_j)`.
    pub upper: Vec<C64>,
}

pub fn assemble_fd(cs: &CoefficientSet, g: Grid) -> Result<FdOperator> {
    let sc = SampledCoefficients::sample(cs, g);
    for &v in sc.a.iter().chain(sc.a_mid.iter()) {
        if !(v > 0.0) {
            return Err(Error::NonPositiveA(v));
        }
    }
    let n = g.point_count();
    let h = g.spacing();
    let h2 = h * h;
    let b_field = GridFunction::sample_real(g, |x| cs.b.eval(x));
    let anti = grid::smooth_antiderivative(&b_field);
    let big_b = anti.eval_nodes();
    let flux = 2.0 * g.half_length() * anti.mean();
    let mut diag = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for j in 0..n {
        let left = sc.a_mid[(j + n - 1) % n];
        diag.push((sc.a_mid[j] + left) / h2 + sc.c[j]);
        let phi = if j + 1 < n { big_b[j + 1] - big_b[j] } else { big_b[0] + flux - big_b[j] };
        upper.push(-C64::from_polar(sc.a_mid[j] / h2, -phi));
    }
    Ok(FdOperator { grid: g, diag, upper })
}

impl FdOperator {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.diag.len();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|j| {
                let up = self.upper[j] * v[(j + 1) % n];
                let down = self.upper[(j + n - 1) % n].conj() * v[(j + n - 1) % n];
                self.diag[j] * v[j] + up + down
            })
            .collect()
    }

    /// `h sum (a |covariant difference|^2 + c |v|^2)`; the discrete form
    /// matching [`apply`] exactly.
    pub fn quadratic_form(&self, v: &[C64]) -> f64 {
        let n = self.diag.len();
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for j in 0..n {
            // upper[j] = -a_mid[j] exp(-i phi_j)/h^2 encodes both pieces
            let a_over_h2 = self.upper[j].norm();
            let phase = -self.upper[j] / a_over_h2;
            let diff = phase * v[(j + 1) % n] - v[j];
            acc += a_over_h2 * diff.norm_sqr();
            let c_j = self.diag[j]
                - a_over_h2
                - self.upper[(j + n - 1) % n].norm();
            acc += c_j * v[j].norm_sqr();
        }
        h * acc
    }

    /// Rough operator-norm estimate for step-size accuracy warnings.
    pub fn norm_estimate(&self) -> f64 {
        self.diag
            .iter()
            .zip(&self.upper)
            .map(|(d, u)| d.abs() + 2.0 * u.norm())
            .fold(0.0, f64::max)
    }

    /// Cyclic tridiagonal system `scale * I + z * A` ready to solve.
    pub fn shifted_system(&self, scale: C64, z: C64) -> CyclicTridiag {
        let diag = self.diag.iter().map(|&d| scale + z * d).collect();
        let upper: Vec<C64> = self.upper.iter().map(|&u| z * u).collect();
        let lower = self.upper.iter().map(|&u| z * u.conj()).collect();
        CyclicTridiag { diag, upper, lower }
    }
}

/// Tridiagonal matrix with periodic corner entries.
///
/// Layout: `M[j][j] = diag[j]`; `M[j][j+1] = upper[j]` with `upper[n-1]`
/// in the corner `M[n-1][0]`; `M[j+1][j] = lower[j]` with `lower[n-1]` in
/// the corner `M[0][n-1]`.
#[derive(Clone, Debug)]
pub struct CyclicTridiag {
    pub diag: Vec<C64>,
    pub upper: Vec<C64>,
    pub lower: Vec<C64>,
}

impl CyclicTridiag {
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.diag.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|j| {
                self.diag[j] * x[j]
                    + self.upper[j] * x[(j + 1) % n]
                    + self.lower[(j + n - 1) % n] * x[(j + n - 1) % n]
            })
            .collect()
    }

    /// Direct solve by rank-one reduction to a plain tridiagonal system
    /// (Thomas recursion without pivoting; the Crank-Nicolson matrices this
    /// serves are strongly diagonally dominant in the identity part).
    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.diag.len();
        assert!(n >= 3);
        assert_eq!(rhs.len(), n);
        let corner_top = self.lower[n - 1];
        let corner_bot = self.upper[n - 1];
        let gamma = -self.diag[0];

        let mut diag: Vec<C64> = self.diag.clone();
        diag[0] -= gamma;
        diag[n - 1] -= corner_bot * corner_top / gamma;

        let mut u_vec = vec![C64::new(0.0, 0.0); n];
        u_vec[0] = gamma;
        u_vec[n - 1] = corner_bot;

        let y = thomas(&diag, &self.upper[..n - 1], &self.lower[..n - 1], rhs);
        let q = thomas(&diag, &self.upper[..n - 1], &self.lower[..n - 1], &u_vec);

        let v_dot = |w: &[C64]| w[0] + (corner_top / gamma) * w[n - 1];
        let factor = v_dot(&y) / (C64::new(1.0, 0.0) + v_dot(&q));
        (0..n).map(|j| y[j] - factor * q[j]).collect()
    }

    pub fn residual(&self, x: &[C64], rhs: &[C64]) -> f64 {
        let mx = self.matvec(x);
        let num: f64 = mx.iter().zip(rhs).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = rhs.iter().map(|b| b.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }
}

fn thomas(diag: &[C64], upper: &[C64], lower: &[C64], rhs: &[C64]) -> Vec<C64> {
    let n = diag.len();
    let mut c = vec![C64::new(0.0, 0.0); n - 1];
    let mut d = vec![C64::new(0.0, 0.0); n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for j in 1..n {
        let denom = diag[j] - lower[j - 1] * c[j - 1];
        if j < n - 1 {
            c[j] = upper[j] / denom;
        }
        d[j] = (rhs[j] - lower[j - 1] * d[j - 1]) / denom;
    }
    for j in (0..n - 1).rev() {
        let next = d[j + 1];
        d[j] -= c[j] * next;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;
    use crate::grid::{band_limited_noise, l2_inner, make_grid};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (diff {})", (a - b).abs());
    }

    fn bump_set() -> CoefficientSet {
        CoefficientSet::new(
            FieldSpec::GaussianBump { base: 1.0, amp: 0.5, width: 1.0, center: 0.0 },
            FieldSpec::GaussianDerivative { amp: 0.4, width: 1.3, center: 0.0 },
            FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 },
            0.5,
            0.3,
            7.0,
        )
        .unwrap()
    }

    #[test]
    fn plane_wave_is_an_eigenfunction_of_the_free_operator() {
        let g = make_grid(10.0, 128).unwrap();
        let op = assemble(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let xi1 = 6.0 * PI / 10.0;
        let u = GridFunction::sample(g, |x| C64::from_polar(1.0, xi1 * x));
        let au = op.apply(&u);
        for (z, w) in au.values().iter().zip(u.values()) {
            assert!((z - xi1 * xi1 * w).norm() < 1e-10);
        }
    }

    #[test]
    fn free_form_with_unit_potential() {
        let g = make_grid(15.0, 256).unwrap();
        let cs = CoefficientSet::new(
            FieldSpec::one(),
            FieldSpec::zero(),
            FieldSpec::one(),
            0.5,
            0.5,
            7.0,
        )
        .unwrap();
        let op = assemble(&cs, g).unwrap();
        let v = band_limited_noise(g, 0.6, 1.4, 5);
        let h1 = grid::norm(&v, Norm::H1);
        close(op.quadratic_form(&v), h1 * h1, 1e-12 * h1 * h1);
    }

    #[test]
    fn gaussian_form_closed_values() {
        let g = make_grid(20.0, 512).unwrap();
        let u = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());

        let free = assemble(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        close(free.quadratic_form(&u), 0.5 * PI.sqrt(), 1e-8);

        // a = 1 + e^{-x^2}/2: integral a x^2 e^{-x^2} = sqrt(pi)/2 + sqrt(pi/2)/8
        let mut cs = bump_set();
        cs.b = FieldSpec::zero();
        cs.c = FieldSpec::zero();
        let op = assemble(&cs, g).unwrap();
        close(op.quadratic_form(&u), 0.5 * PI.sqrt() + 0.125 * (PI / 2.0).sqrt(), 1e-8);

        // constant magnetic potential on a real datum: cross term vanishes
        let cs = CoefficientSet::new(
            FieldSpec::one(),
            FieldSpec::Constant { value: 0.7 },
            FieldSpec::zero(),
            0.5,
            0.5,
            7.0,
        )
        .unwrap();
        let op = assemble(&cs, g).unwrap();
        close(op.quadratic_form(&u), 0.5 * PI.sqrt() + 0.49 * PI.sqrt(), 1e-8);
    }

    #[test]
    fn operator_is_hermitian_and_nonnegative() {
        let g = make_grid(20.0, 512).unwrap();
        let op = assemble(&bump_set(), g).unwrap();
        for seed in 0..5 {
            let u = band_limited_noise(g, 0.7, 1.0, seed);
            let v = band_limited_noise(g, 0.7, 1.0, seed + 50);
            let au = op.apply(&u);
            let av = op.apply(&v);
            let asym = (l2_inner(&au, &v) - l2_inner(&u, &av)).norm();
            assert!(asym < 1e-10, "asymmetry {asym}");
            assert!(op.quadratic_form(&u) >= -1e-10);
            // the form equals (Au, u)
            let via_apply = l2_inner(&au, &u).re;
            close(op.quadratic_form(&u), via_apply, 1e-9);
        }
    }

    #[test]
    fn form_dominates_covariant_gradient() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = bump_set();
        let op = assemble(&cs, g).unwrap();
        for seed in 10..15 {
            let v = band_limited_noise(g, 0.8, 1.0, seed);
            let db = op.covariant_derivative(&v);
            let grad2 = grid::norm(&db, Norm::L2).powi(2);
            assert!(op.quadratic_form(&v) >= cs.a0 * grad2 - 1e-10);
        }
    }

    #[test]
    fn gauge_conjugation_preserves_the_form() {
        // b = B_x with B = 0.4 exp(-(x/1.3)^2): the form of the magnetic
        // operator on u equals the b = 0 form on exp(-iB) u
        let g = make_grid(20.0, 512).unwrap();
        let cs = bump_set();
        let op_b = assemble(&cs, g).unwrap();
        let mut cs0 = cs.clone();
        cs0.b = FieldSpec::zero();
        let op_0 = assemble(&cs0, g).unwrap();

        let big_b = |x: f64| 0.4 * (-(x / 1.3) * (x / 1.3)).exp();
        for seed in 0..4 {
            let u = band_limited_noise(g, 0.5, 1.0, seed + 7);
            let gauged = GridFunction::from_values(
                g,
                u.values()
                    .iter()
                    .enumerate()
                    .map(|(j, z)| z * C64::from_polar(1.0, -big_b(g.x(j))))
                    .collect(),
            )
            .unwrap();
            let qa = op_b.quadratic_form(&u);
            let qb = op_0.quadratic_form(&gauged);
            assert!((qa - qb).abs() < 1e-10 * qa.abs().max(1.0), "{qa} vs {qb}");
        }
    }

    #[test]
    fn energies_of_the_gaussian() {
        let g = make_grid(20.0, 512).unwrap();
        let op = assemble(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let u = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());
        let led = energies(&op, &u, 7.0, 1.0);
        close(led.mass, PI.powf(0.25), 1e-8);
        close(led.quadratic, 0.5 * PI.sqrt(), 1e-8);
        // (2/8) ||u||_L8^8 = sqrt(pi)/8
        close(led.potential, PI.sqrt() / 8.0, 1e-8);
        close(led.energy, 0.5 * PI.sqrt() + PI.sqrt() / 8.0, 1e-8);
        close(led.full_energy, led.energy + PI.sqrt(), 1e-8);
    }

    #[test]
    fn energy_homogeneity_in_amplitude() {
        let g = make_grid(20.0, 256).unwrap();
        let op = assemble(&bump_set(), g).unwrap();
        let u = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());
        let lam = 1.7;
        let led1 = energies(&op, &u, 7.0, 1.0);
        let led2 = energies(&op, &u.scale(lam), 7.0, 1.0);
        close(led2.quadratic / led1.quadratic, lam * lam, 1e-12 * lam * lam);
        close(led2.potential / led1.potential, lam.powi(8), 1e-10);
    }

    #[test]
    fn equivalence_constants_flat_and_bump() {
        let g = make_grid(20.0, 256).unwrap();
        let free = assemble(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let (lo, hi) = equivalence_constants(&free, 1.0, 60, 9).unwrap();
        close(lo, 1.0, 1e-10);
        close(hi, 1.0, 1e-10);

        let mut cs = bump_set();
        cs.b = FieldSpec::zero();
        cs.c = FieldSpec::zero();
        let op = assemble(&cs, g).unwrap();
        let (lo, hi) = equivalence_constants(&op, 1.0, 60, 9).unwrap();
        assert!(lo >= 1.0 - 1e-10, "lower {lo}");
        assert!(hi <= 1.5 + 1e-10, "upper {hi}");
    }

    #[test]
    fn equivalence_degenerates_without_shift() {
        let g = make_grid(20.0, 256).unwrap();
        let free = assemble(&CoefficientSet::free(7.0).unwrap(), g).unwrap();
        let e = equivalence_constants(&free, 0.0, 40, 9);
        assert!(matches!(e, Err(Error::Experiment { .. })));
    }

    #[test]
    fn translated_operator_matches_translated_argument() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = bump_set();
        let z = 32.0 * g.spacing();
        let (shifted, applied) = crate::coeffs::translate_coefficients(&cs, g, z);
        assert_eq!(applied, z);
        let op = assemble(&cs, g).unwrap();
        let op_z = assemble(&shifted, g).unwrap();
        for seed in 0..4 {
            let v = band_limited_noise(g, 0.6, 1.0, seed + 30);
            // shifted coefficients acting on v = original coefficients acting
            // on v moved the other way
            let (tv, _) = grid::translate(&v, -z);
            let q1 = op_z.quadratic_form(&v);
            let q2 = op.quadratic_form(&tv);
            assert!((q1 - q2).abs() < 1e-12 * q1.abs().max(1.0), "{q1} vs {q2}");
        }
    }

    #[test]
    fn fd_operator_matches_spectral_at_second_order() {
        let cs = bump_set();
        let err = |n: usize| {
            let g = make_grid(20.0, n).unwrap();
            let op = assemble(&cs, g).unwrap();
            let fd = assemble_fd(&cs, g).unwrap();
            let u = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());
            let spectral = op.apply(&u);
            let difference = fd.apply(u.values());
            spectral
                .values()
                .iter()
                .zip(&difference)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 / e2 > 3.0, "expected h^2 convergence: {e1} vs {e2}");
    }

    #[test]
    fn fd_operator_is_hermitian_with_link_phases() {
        let g = make_grid(15.0, 128).unwrap();
        let fd = assemble_fd(&bump_set(), g).unwrap();
        let u = band_limited_noise(g, 0.7, 1.0, 3);
        let v = band_limited_noise(g, 0.7, 1.0, 4);
        let au = GridFunction::from_values(g, fd.apply(u.values())).unwrap();
        let av = GridFunction::from_values(g, fd.apply(v.values())).unwrap();
        let asym = (l2_inner(&au, &v) - l2_inner(&u, &av)).norm();
        assert!(asym < 1e-10, "asymmetry {asym}");
        // discrete form is nonnegative and matches (Au, u)
        let q = fd.quadratic_form(u.values());
        assert!(q >= 0.0);
        close(q, l2_inner(&au, &u).re, 1e-9);
    }

    #[test]
    fn cyclic_solver_inverts_cn_style_systems() {
        let g = make_grid(15.0, 128).unwrap();
        let fd = assemble_fd(&bump_set(), g).unwrap();
        let dt = 1e-2;
        let sys = fd.shifted_system(C64::new(1.0, 0.0), C64::new(0.0, 0.5 * dt));
        for seed in 0..5 {
            let rhs: Vec<C64> = band_limited_noise(g, 0.9, 1.0, seed + 60).into_values();
            let x = sys.solve(&rhs);
            assert!(sys.residual(&x, &rhs) < 1e-12);
        }
    }

    #[test]
    fn cyclic_solver_handles_asymmetric_corners() {
        // generic diagonally dominant cyclic system, checked by residual
        let n = 64;
        let mut diag = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for j in 0..n {
            let t = j as f64;
            diag.push(C64::new(4.0 + (0.3 * t).sin(), 1.0 + (0.1 * t).cos()));
            upper.push(C64::new((0.2 * t).cos(), 0.4 * (0.5 * t).sin()));
            lower.push(C64::new(0.3, -0.2 * (0.7 * t).cos()));
        }
        let m = CyclicTridiag { diag, upper, lower };
        let rhs: Vec<C64> = (0..n).map(|j| C64::new((j as f64).sin(), (j as f64 * 0.5).cos())).collect();
        let x = m.solve(&rhs);
        assert!(m.residual(&x, &rhs) < 1e-12);
    }

    #[test]
    fn assemble_rejects_vanishing_a() {
        let g = make_grid(10.0, 64).unwrap();
        // base below zero makes a genuinely nonpositive in the tails
        let cs = CoefficientSet::new(
            FieldSpec::GaussianBump { base: -0.2, amp: 1.0, width: 1.0, center: 0.0 },
            FieldSpec::zero(),
            FieldSpec::zero(),
            0.5,
            0.5,
            7.0,
        )
        .unwrap();
        assert!(matches!(assemble(&cs, g), Err(Error::NonPositiveA(_))));
        assert!(matches!(assemble_fd(&cs, g), Err(Error::NonPositiveA(_))));
    }
}
