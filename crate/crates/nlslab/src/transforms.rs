//! The two structural reductions: the gauge transform stripping the magnetic
//! potential, and the Liouville change of variables flattening the diffusion
//! weight to a plain second derivative plus an effective potential.

use crate::coeffs::CoefficientSet;
use crate::grid::{self, Grid, GridFunction, SmoothAntiderivative};
use crate::{C64, Error, Result};

/// Phase data for the gauge transform `w = exp(-i B) u`, `B(x) = int_0^x b`.
#[derive(Clone, Debug)]
pub struct GaugeData {
    grid: Grid,
    big_b: Vec<f64>,
    flux: f64,
}

pub fn build_gauge(cs: &CoefficientSet, g: Grid) -> GaugeData {
    let b = GridFunction::sample_real(g, |x| cs.b.eval(x));
    let anti = grid::smooth_antiderivative(&b);
    GaugeData { grid: g, big_b: anti.eval_nodes(), flux: 2.0 * g.half_length() * anti.mean() }
}

impl GaugeData {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn big_b(&self) -> &[f64] {
        &self.big_b
    }

    /// Net circulation of `b` around the box.  A nonzero value means the
    /// phase `exp(-iB)` does not close up periodically.
    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// `w = exp(-iB) u`; pointwise, modulus-preserving, exactly invertible.
    pub fn forward(&self, u: &GridFunction) -> GridFunction {
        self.phase_multiply(u, -1.0)
    }

    pub fn inverse(&self, w: &GridFunction) -> GridFunction {
        self.phase_multiply(w, 1.0)
    }

    fn phase_multiply(&self, u: &GridFunction, sign: f64) -> GridFunction {
        assert_eq!(u.grid(), self.grid);
        let values = u
            .values()
            .iter()
            .zip(&self.big_b)
            .map(|(z, &b)| z * C64::from_polar(1.0, sign * b))
            .collect();
        GridFunction::from_values(self.grid, values).expect("phases are unimodular")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapDirection {
    Forward,
    Backward,
}

/// Change of variables `y = alpha(x) = int_0^x a^{-1/2}` with the state map
/// `v(y) = a(x)^{1/4} w(x)`.
///
/// In the new variable the operator `-(a w_x)_x + c w` becomes
/// `-v_yy + c_tilde v` with `c_tilde = c - a_x^2/(16 a) + a_xx/4` read along
/// `x(y)`, and the `a^{1/4}` weight makes the state map an L2 isometry.
/// The target grid is uniform with the same point count, spanning
/// `[alpha(-L), alpha(L))`; `offset` converts target-grid coordinates to
/// physical `alpha` values.
#[derive(Clone, Debug)]
pub struct LiouvilleMap {
    source: Grid,
    target: Grid,
    offset: f64,
    alpha_at_nodes: Vec<f64>,
    x_of_target: Vec<f64>,
    /// `a^{1/4}` at source nodes.
    weight_source: Vec<f64>,
    /// `a^{1/4}` at the preimages of target nodes.
    weight_target: Vec<f64>,
    a_of_target: Vec<f64>,
    c_tilde: Vec<f64>,
}

/// Effective potential of the flattened operator.
pub fn c_tilde_value(cs: &CoefficientSet, x: f64) -> f64 {
    let a = cs.a.eval(x);
    let ax = cs.a.d1(x);
    let axx = cs.a.d2(x);
    cs.c.eval(x) - ax * ax / (16.0 * a) + axx / 4.0
}

pub fn build_liouville(cs: &CoefficientSet, g: Grid) -> Result<LiouvilleMap> {
    let n = g.point_count();
    let a_nodes = cs.a.sample_on(g);
    for &a in &a_nodes {
        if !(a > 0.0) {
            return Err(Error::NonPositiveA(a));
        }
    }
    let root_inv = GridFunction::sample_real(g, |x| cs.a.eval(x).powf(-0.5));
    let alpha = grid::smooth_antiderivative(&root_inv);
    let alpha_at_nodes = alpha.eval_nodes();
    for j in 1..n {
        if alpha_at_nodes[j] <= alpha_at_nodes[j - 1] {
            return Err(Error::Config(format!(
                "change of variables is not increasing near x = {}",
                g.x(j)
            )));
        }
    }

    let l_y = alpha.mean() * g.half_length();
    let alpha_left = alpha.eval_at(-g.half_length());
    let offset = alpha_left + l_y;
    let target = grid::make_grid(l_y, n)?;

    let x_of_target = invert_alpha(&alpha, cs, g, target, offset, &alpha_at_nodes)?;
    let weight_source = a_nodes.iter().map(|&a| a.powf(0.25)).collect();
    let a_of_target: Vec<f64> = x_of_target.iter().map(|&x| cs.a.eval(x)).collect();
    let weight_target = a_of_target.iter().map(|&a| a.powf(0.25)).collect();
    let c_tilde = x_of_target.iter().map(|&x| c_tilde_value(cs, x)).collect();

    Ok(LiouvilleMap {
        source: g,
        target,
        offset,
        alpha_at_nodes,
        x_of_target,
        weight_source,
        weight_target,
        a_of_target,
        c_tilde,
    })
}

fn invert_alpha(
    alpha: &SmoothAntiderivative,
    cs: &CoefficientSet,
    g: Grid,
    target: Grid,
    offset: f64,
    table: &[f64],
) -> Result<Vec<f64>> {
    let n = g.point_count();
    let l = g.half_length();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let want = target.x(k) + offset;
        // bracket from the node table, then Newton with the closed-form slope
        let mut j = match table.binary_search_by(|v| v.partial_cmp(&want).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if j >= n - 1 {
            j = n - 2;
        }
        let (mut lo, mut hi) = (g.x(j), (g.x(j + 1) + g.spacing()).min(l));
        let mut x = g.x(j)
            + if table[j + 1] > table[j] {
                g.spacing() * (want - table[j]) / (table[j + 1] - table[j])
            } else {
                0.0
            };
        let mut converged = false;
        for _ in 0..60 {
            let f = alpha.eval_at(x) - want;
            if f.abs() < 1e-12 * (1.0 + want.abs()) {
                converged = true;
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = cs.a.eval(x).powf(-0.5);
            let step = x - f / slope;
            x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        if !converged {
            return Err(Error::Config(format!(
                "could not invert the change of variables at target node {k}"
            )));
        }
        out.push(x.clamp(-l, l));
    }
    Ok(out)
}

impl LiouvilleMap {
    pub fn source_grid(&self) -> Grid {
        self.source
    }

    pub fn target_grid(&self) -> Grid {
        self.target
    }

    /// Physical `alpha` value of a target-grid coordinate.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alpha_at_nodes(&self) -> &[f64] {
        &self.alpha_at_nodes
    }

    pub fn x_of_target(&self) -> &[f64] {
        &self.x_of_target
    }

    pub fn c_tilde(&self) -> &[f64] {
        &self.c_tilde
    }

    /// Weight multiplying `|v|^{beta-1}` after the change of variables:
    /// `a^{-(beta-1)/4}` along `x(y)`.
    pub fn nonlinear_weight(&self, beta: f64) -> Vec<f64> {
        self.a_of_target.iter().map(|&a| a.powf(-(beta - 1.0) / 4.0)).collect()
    }

    /// `v(y_k) = a^{1/4}(x(y_k)) w(x(y_k))`, trig-interpolating `w`.
    pub fn forward(&self, w: &GridFunction) -> GridFunction {
        assert_eq!(w.grid(), self.source);
        let sampled = grid::eval_trig(w, &self.x_of_target);
        let values = sampled.iter().zip(&self.weight_target).map(|(z, &w4)| z * w4).collect();
        GridFunction::from_values(self.target, values).expect("finite by construction")
    }

    /// `w(x_j) = a^{-1/4}(x_j) v(alpha(x_j))`, trig-interpolating `v`.
    pub fn backward(&self, v: &GridFunction) -> GridFunction {
        assert_eq!(v.grid(), self.target);
        let positions: Vec<f64> = self.alpha_at_nodes.iter().map(|&al| al - self.offset).collect();
        let sampled = grid::eval_trig(v, &positions);
        let values = sampled.iter().zip(&self.weight_source).map(|(z, &w4)| z / w4).collect();
        GridFunction::from_values(self.source, values).expect("finite by construction")
    }
}

pub fn apply_liouville(u: &GridFunction, map: &LiouvilleMap, direction: MapDirection) -> GridFunction {
    match direction {
        MapDirection::Forward => map.forward(u),
        MapDirection::Backward => map.backward(u),
    }
}

/// Fraction of the L2 mass sitting in the outer `band` fraction of the box;
/// callers use this to flag data that the periodic transforms would fold.
pub fn edge_fraction(u: &GridFunction, band: f64) -> f64 {
    let g = u.grid();
    let cut = (1.0 - band) * g.half_length();
    let mut outer = 0.0;
    let mut total = 0.0;
    for (j, z) in u.values().iter().enumerate() {
        let m = z.norm_sqr();
        total += m;
        if g.x(j).abs() >= cut {
            outer += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;
    use crate::grid::{make_grid, norm, Norm};
    use crate::operator;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (diff {})", (a - b).abs());
    }

    fn bump_a_set(c: FieldSpec) -> CoefficientSet {
        CoefficientSet::new(
            FieldSpec::GaussianBump { base: 1.0, amp: 0.5, width: 1.0, center: 0.0 },
            FieldSpec::zero(),
            c,
            0.5,
            0.3,
            7.0,
        )
        .unwrap()
    }

    fn magnetic_set() -> CoefficientSet {
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
    fn gauge_without_b_is_identity() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = CoefficientSet::free(7.0).unwrap();
        let gd = build_gauge(&cs, g);
        let u = grid::band_limited_noise(g, 0.5, 1.0, 1);
        let w = gd.forward(&u);
        assert!(norm(&w.sub(&u), Norm::Linf) == 0.0);
        assert_eq!(gd.flux(), 0.0);
    }

    #[test]
    fn gauge_round_trip_and_modulus() {
        let g = make_grid(20.0, 512).unwrap();
        let cs = magnetic_set();
        let gd = build_gauge(&cs, g);
        let u = grid::band_limited_noise(g, 0.6, 1.3, 2);
        let w = gd.forward(&u);
        for (a, b) in w.values().iter().zip(u.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        let back = gd.inverse(&w);
        assert!(norm(&back.sub(&u), Norm::Linf) < 1e-15);
    }

    #[test]
    fn gauge_phase_integrates_b() {
        let g = make_grid(20.0, 512).unwrap();
        let cs = magnetic_set();
        let gd = build_gauge(&cs, g);
        // B closed form: 0.4 exp(-(x/1.3)^2) - 0.4
        for (j, &bb) in gd.big_b().iter().enumerate() {
            let x = g.x(j);
            let want = 0.4 * (-(x / 1.3) * (x / 1.3)).exp() - 0.4;
            assert!((bb - want).abs() < 1e-10, "B mismatch at {x}");
        }
        assert!(gd.flux().abs() < 1e-12);
        // derivative of B reproduces b
        let bfield = GridFunction::sample_real(g, |x| cs.b.eval(x));
        let bnodes = GridFunction::from_values(
            g,
            gd.big_b().iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
        .unwrap();
        let db = grid::derivative(&bnodes);
        for (z, w) in db.values().iter().zip(bfield.values()) {
            assert!((z.re - w.re).abs() < 1e-6);
        }
    }

    #[test]
    fn gauge_reports_nonzero_flux() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = CoefficientSet::new(
            FieldSpec::one(),
            FieldSpec::GaussianBump { base: 0.0, amp: 0.5, width: 1.0, center: 0.0 },
            FieldSpec::zero(),
            0.5,
            0.5,
            7.0,
        )
        .unwrap();
        let gd = build_gauge(&cs, g);
        // int b = 0.5 sqrt(pi)
        close(gd.flux(), 0.5 * PI.sqrt(), 1e-10);
    }

    #[test]
    fn liouville_flat_is_identity() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = CoefficientSet::free(7.0).unwrap();
        let map = build_liouville(&cs, g).unwrap();
        assert_eq!(map.target_grid().half_length(), 20.0);
        close(map.offset(), 0.0, 1e-12);
        for (j, &al) in map.alpha_at_nodes().iter().enumerate() {
            assert!((al - g.x(j)).abs() < 1e-11);
        }
        let u = grid::band_limited_noise(g, 0.5, 1.0, 3);
        let v = map.forward(&u);
        assert!(norm(&v.sub(&u), Norm::Linf) < 1e-10);
        for &ct in map.c_tilde() {
            assert!(ct.abs() < 1e-10);
        }
    }

    #[test]
    fn liouville_constant_a_rescales() {
        let g = make_grid(20.0, 256).unwrap();
        let cs = CoefficientSet::new(
            FieldSpec::Constant { value: 4.0 },
            FieldSpec::zero(),
            FieldSpec::zero(),
            0.5,
            0.5,
            7.0,
        )
        .unwrap();
        let map = build_liouville(&cs, g).unwrap();
        close(map.target_grid().half_length(), 10.0, 1e-12);
        for (j, &al) in map.alpha_at_nodes().iter().enumerate() {
            assert!((al - 0.5 * g.x(j)).abs() < 1e-11);
        }
        let w = GridFunction::sample_real(g, |x| (-0.05 * x * x).exp());
        let v = map.forward(&w);
        // v(y) = 4^{1/4} w(2y)
        let scale = 4f64.powf(0.25);
        for (k, z) in v.values().iter().enumerate() {
            let y = map.target_grid().x(k);
            let want = scale * (-0.05 * (2.0 * y) * (2.0 * y)).exp();
            assert!((z.re - want).abs() < 1e-9);
        }
        close(norm(&v, Norm::L2), norm(&w, Norm::L2), 1e-10);
    }

    #[test]
    fn effective_potential_center_values() {
        // a = 1 + e^{-x^2}/2: a(0) = 1.5, a_x(0) = 0, a_xx(0) = -1,
        // so the effective potential at the center is c(0) - 1/4
        let cs = bump_a_set(FieldSpec::zero());
        close(c_tilde_value(&cs, 0.0), -0.25, 1e-14);
        let cs = bump_a_set(FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 });
        close(c_tilde_value(&cs, 0.0), 0.75, 1e-14);

        let g = make_grid(20.0, 1024).unwrap();
        let map = build_liouville(&bump_a_set(FieldSpec::zero()), g).unwrap();
        // even a: alpha(0) = 0 sits exactly on the center target node
        let center = g.point_count() / 2;
        assert!(map.x_of_target()[center].abs() < 1e-10);
        close(map.c_tilde()[center], -0.25, 1e-10);
    }

    #[test]
    fn effective_potential_spectral_cross_check() {
        let g = make_grid(20.0, 1024).unwrap();
        let cs = bump_a_set(FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 });
        let a = GridFunction::sample_real(g, |x| cs.a.eval(x));
        let ax = grid::derivative(&a);
        let axx = grid::derivative(&ax);
        for (j, (zx, zxx)) in ax.values().iter().zip(axx.values()).enumerate() {
            let x = g.x(j);
            let spectral = cs.c.eval(x) - zx.re * zx.re / (16.0 * cs.a.eval(x)) + zxx.re / 4.0;
            assert!((spectral - c_tilde_value(&cs, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn liouville_round_trip_and_isometry() {
        let g = make_grid(20.0, 1024).unwrap();
        let map = build_liouville(&bump_a_set(FieldSpec::zero()), g).unwrap();
        let w = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());
        let v = map.forward(&w);
        close(norm(&v, Norm::L2), norm(&w, Norm::L2), 1e-8);
        let back = map.backward(&v);
        assert!(norm(&back.sub(&w), Norm::L2) < 1e-8);

        // a complex datum with structure
        let w2 = GridFunction::sample(g, |x| {
            C64::from_polar((-0.3 * x * x).exp(), 0.8 * x)
        });
        let v2 = map.forward(&w2);
        close(norm(&v2, Norm::L2), norm(&w2, Norm::L2), 1e-8);
        let back2 = map.backward(&v2);
        assert!(norm(&back2.sub(&w2), Norm::L2) < 1e-8);
    }

    #[test]
    fn alpha_is_odd_for_even_a() {
        let g = make_grid(20.0, 512).unwrap();
        let map = build_liouville(&bump_a_set(FieldSpec::zero()), g).unwrap();
        let al = map.alpha_at_nodes();
        let n = g.point_count();
        for j in 1..n {
            assert!((al[j] + al[n - j]).abs() < 1e-11);
        }
        for j in 1..n {
            assert!(al[j] > al[j - 1]);
        }
    }

    #[test]
    fn operator_conjugation_through_the_map() {
        let g = make_grid(20.0, 1024).unwrap();
        let cs = bump_a_set(FieldSpec::GaussianBump { base: 0.0, amp: 1.0, width: 1.0, center: 0.0 });
        let map = build_liouville(&cs, g).unwrap();
        let op = operator::assemble(&cs, g).unwrap();
        let w = GridFunction::sample_real(g, |x| (-0.5 * x * x).exp());

        // left side: apply the variable-coefficient operator, then map
        let lw = op.apply(&w);
        let lhs = map.forward(&lw);

        // right side: map, then apply -d^2/dy^2 + c_tilde on the target grid
        let v = map.forward(&w);
        let vyy = grid::derivative(&grid::derivative(&v));
        let rhs_vals: Vec<C64> = (0..v.grid().point_count())
            .map(|k| -vyy.values()[k] + map.c_tilde()[k] * v.values()[k])
            .collect();
        let rhs = GridFunction::from_values(v.grid(), rhs_vals).unwrap();

        let diff = norm(&lhs.sub(&rhs), Norm::L2);
        assert!(diff < 1e-6, "conjugation defect {diff}");
    }

    #[test]
    fn full_pipeline_is_isometric() {
        let g = make_grid(20.0, 1024).unwrap();
        let cs = magnetic_set();
        let gd = build_gauge(&cs, g);
        let map = build_liouville(&cs, g).unwrap();
        let u = GridFunction::sample(g, |x| C64::from_polar((-0.4 * x * x).exp(), 0.5 * x));
        let w = gd.forward(&u);
        let v = map.forward(&w);
        close(norm(&v, Norm::L2), norm(&u, Norm::L2), 1e-8);
    }

    #[test]
    fn edge_fraction_flags_shifted_data() {
        let g = make_grid(20.0, 256).unwrap();
        let centered = GridFunction::sample_real(g, |x| (-x * x).exp());
        assert!(edge_fraction(&centered, 0.05) < 1e-12);
        let edged = GridFunction::sample_real(g, |x| (-(x - 19.5) * (x - 19.5)).exp());
        assert!(edge_fraction(&edged, 0.05) > 0.5);
    }
}
