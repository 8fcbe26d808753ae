//! Strongly convex constrained quadratic program with closed-form oracles.
//!
//! ```text
//! maximize   J_R(θ) = −½θᵀQθ + bᵀθ
//! subject to J_C(θ) =  ½θᵀPθ + cᵀθ ≤ d
//! ```
//!
//! With `Q ≻ 0` and `P ⪰ 0` the Lagrangian `𝓛(θ, λ) = −J_R + λ(J_C − d)` is
//! `λ_min(Q)`-strongly convex and `(λ_max(Q) + λ λ_max(P))`-smooth in θ, its
//! minimiser is `θ*(λ) = (Q + λP)⁻¹(b − λc)`, and the dual function
//! `d(λ) = 𝓛(θ*(λ), λ)` is available exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::lagrangian::{ConstraintSpec, Multiplier};
use crate::schedule::SmoothnessConstants;
use crate::{Error, Result};

const EIGEN_TOL: f64 = 1e-10;
const BISECTION_TOL: f64 = 1e-12;

/// A deterministic constrained program with exact first-order and dual oracles.
pub trait ConstrainedProgram: Send + Sync {
    fn dim(&self) -> usize;

    fn constraint(&self) -> ConstraintSpec;

    fn objective(&self, theta: &[f64]) -> f64;

    fn costs(&self, theta: &[f64]) -> Vec<f64>;

    fn lagrangian(&self, theta: &[f64], lm: &Multiplier) -> Result<f64> {
        crate::lagrangian::lagrangian_value(self.objective(theta), &self.costs(theta), lm, &self.constraint())
    }

    fn lagrangian_grad(&self, theta: &[f64], lm: &Multiplier) -> Result<Vec<f64>>;

    fn constants(&self) -> SmoothnessConstants;

    /// `θ*(λ) = argmin_θ 𝓛(θ, λ)`.
    fn primal_min(&self, lm: &Multiplier) -> Result<Vec<f64>>;

    /// `d(λ) = min_θ 𝓛(θ, λ)`.
    fn dual_value(&self, lm: &Multiplier) -> Result<f64> {
        self.lagrangian(&self.primal_min(lm)?, lm)
    }

    fn kkt(&self) -> Result<KktPoint>;

    /// Discount `γ` paired with [`ConstrainedProgram::cost_bound`] in the
    /// dual convergence bound.
    fn gamma(&self) -> f64;

    /// Per-step cost bound `B`, when the program comes with one.
    fn cost_bound(&self) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    pub theta: Vec<f64>,
    pub lambda: f64,
    /// Optimal dual value `D* = d(λ*)`.
    pub dual_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadProgram {
    q: DMatrix<f64>,
    b: DVector<f64>,
    p: DMatrix<f64>,
    c: DVector<f64>,
    d: f64,
    gamma: f64,
    cost_bound: Option<f64>,
    constants: SmoothnessConstants,
}

/// Row-major description of a [`QuadProgram`], as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: f64,
    pub gamma: f64,
    pub cost_bound: Option<f64>,
}

impl Default for QuadSpec {
    /// `Q = P = I₂`, `b = (1, 1)`, `c = 0`, `d = 0.5`: the constraint is active
    /// with `λ* = √2 − 1` and `θ* = (1/√2, 1/√2)`.
    fn default() -> Self {
        Self {
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![1.0, 1.0],
            p: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            c: vec![0.0, 0.0],
            d: 0.5,
            gamma: 0.99,
            cost_bound: None,
        }
    }
}

impl QuadSpec {
    pub fn build(&self) -> Result<QuadProgram> {
        let n = self.b.len();
        let square = |m: &[Vec<f64>], name: &'static str| -> Result<DMatrix<f64>> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::dim(name, n, m.len()));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
        };
        let q = square(&self.q, "Q rows")?;
        let p = square(&self.p, "P rows")?;
        if self.c.len() != n {
            return Err(Error::dim("c", n, self.c.len()));
        }
        let mut prog = quad_make(
            q,
            DVector::from_column_slice(&self.b),
            p,
            DVector::from_column_slice(&self.c),
            self.d,
        )?;
        crate::cmdp::check_gamma(self.gamma)?;
        prog.gamma = self.gamma;
        if let Some(bound) = self.cost_bound {
            if !(bound > 0.0) {
                return Err(Error::InvalidConfig(format!("cost_bound must be positive, got {bound}")));
            }
        }
        prog.cost_bound = self.cost_bound;
        Ok(prog)
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= EIGEN_TOL * scale
}

/// Validates the data and derives `L_R = λ_max(Q)`, `L_C = [λ_max(P)]`,
/// `μ = λ_min(Q)`.
pub fn quad_make(
    q: DMatrix<f64>,
    b: DVector<f64>,
    p: DMatrix<f64>,
    c: DVector<f64>,
    d: f64,
) -> Result<QuadProgram> {
    let n = b.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty program".into()));
    }
    for (name, rows, cols) in [("Q", q.nrows(), q.ncols()), ("P", p.nrows(), p.ncols())] {
        if rows != n || cols != n {
            return Err(Error::dim(name, n, rows.max(cols)));
        }
    }
    if c.len() != n {
        return Err(Error::dim("c", n, c.len()));
    }
    if !d.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    if !is_symmetric(&q) {
        return Err(Error::Definiteness("symmetric (Q)"));
    }
    if !is_symmetric(&p) {
        return Err(Error::Definiteness("symmetric (P)"));
    }
    let eq = SymmetricEigen::new(q.clone()).eigenvalues;
    let ep = SymmetricEigen::new(p.clone()).eigenvalues;
    let (q_min, q_max) = (eq.min(), eq.max());
    if q_min <= EIGEN_TOL {
        return Err(Error::Definiteness("positive definite (Q)"));
    }
    if ep.min() < -EIGEN_TOL {
        return Err(Error::Definiteness("positive semidefinite (P)"));
    }
    let constants = SmoothnessConstants {
        l_r: q_max,
        l_c: vec![ep.max().max(0.0)],
        mu: q_min,
        l_lip: None,
    };
    Ok(QuadProgram {
        q,
        b,
        p,
        c,
        d,
        gamma: 0.99,
        cost_bound: None,
        constants,
    })
}

impl QuadProgram {
    pub fn threshold(&self) -> f64 {
        self.d
    }

    fn scalar(lm: &Multiplier) -> Result<f64> {
        if lm.len() != 1 {
            return Err(Error::dim("multiplier", 1, lm.len()));
        }
        Ok(lm.as_slice()[0])
    }

    fn check_theta(&self, theta: &[f64]) -> Result<DVector<f64>> {
        if theta.len() != self.b.len() {
            return Err(Error::dim("theta", self.b.len(), theta.len()));
        }
        Ok(DVector::from_column_slice(theta))
    }

    fn j_c(&self, t: &DVector<f64>) -> f64 {
        0.5 * t.dot(&(&self.p * t)) + self.c.dot(t)
    }

    fn minimiser(&self, lambda: f64) -> Result<DVector<f64>> {
        let h = &self.q + &self.p * lambda;
        let rhs = &self.b - &self.c * lambda;
        h.cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or(Error::Definiteness("positive definite (Q + λP)"))
    }

    /// Infimum of `J_C` when `P ≻ 0`.
    fn cost_infimum(&self) -> Option<f64> {
        let ch = self.p.clone().cholesky()?;
        let x = ch.solve(&(-&self.c));
        Some(self.j_c(&x))
    }
}

impl ConstrainedProgram for QuadProgram {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::new(vec![self.d])
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        -0.5 * t.dot(&(&self.q * &t)) + self.b.dot(&t)
    }

    fn costs(&self, theta: &[f64]) -> Vec<f64> {
        vec![self.j_c(&DVector::from_column_slice(theta))]
    }

    /// `(Q + λP)θ − b + λc`.
    fn lagrangian_grad(&self, theta: &[f64], lm: &Multiplier) -> Result<Vec<f64>> {
        let lambda = Self::scalar(lm)?;
        let t = self.check_theta(theta)?;
        let g = (&self.q + &self.p * lambda) * t - &self.b + &self.c * lambda;
        Ok(g.iter().copied().collect())
    }

    fn constants(&self) -> SmoothnessConstants {
        self.constants.clone()
    }

    fn primal_min(&self, lm: &Multiplier) -> Result<Vec<f64>> {
        Ok(self.minimiser(Self::scalar(lm)?)?.iter().copied().collect())
    }

    /// Unconstrained maximiser if feasible, else bisection on the
    /// nonincreasing map `λ ↦ J_C(θ*(λ))` for the root of `J_C(θ*(λ)) = d`.
    fn kkt(&self) -> Result<KktPoint> {
        let cost_at = |l: f64| -> Result<f64> { Ok(self.j_c(&self.minimiser(l)?)) };
        let finish = |lambda: f64| -> Result<KktPoint> {
            let lm = Multiplier::new(vec![lambda])?;
            Ok(KktPoint {
                theta: self.primal_min(&lm)?,
                lambda,
                dual_value: self.dual_value(&lm)?,
            })
        };
        if cost_at(0.0)? <= self.d {
            return finish(0.0);
        }
        if let Some(inf) = self.cost_infimum() {
            if inf >= self.d {
                return Err(Error::NoSlaterPoint(format!(
                    "min J_C = {inf} is not below d = {}",
                    self.d
                )));
            }
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while cost_at(hi)? > self.d {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(Error::Bracketing(format!("J_C(θ*(λ)) > d for λ up to {hi}")));
            }
        }
        let mut lo = 0.0;
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cost_at(mid)? > self.d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        finish(0.5 * (lo + hi))
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn cost_bound(&self) -> Option<f64> {
        self.cost_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn default_prog() -> QuadProgram {
        QuadSpec::default().build().unwrap()
    }

    fn lm(x: f64) -> Multiplier {
        Multiplier::new(vec![x]).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn identity_spectra() {
        let c = default_prog().constants();
        assert!((c.l_r - 1.0).abs() < 1e-14);
        assert!((c.l_c[0] - 1.0).abs() < 1e-14);
        assert!((c.mu - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_spectrum() {
        let prog = quad_make(
            diag(&[1.0, 4.0]),
            DVector::from_element(2, 1.0),
            diag(&[1.0, 1.0]),
            DVector::zeros(2),
            0.5,
        )
        .unwrap();
        let c = prog.constants();
        assert!((c.l_r - 4.0).abs() < 1e-14);
        assert!((c.mu - 1.0).abs() < 1e-14);
    }

    #[test]
    fn validation_errors() {
        let nonsym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let b = DVector::from_element(2, 1.0);
        assert_eq!(
            quad_make(nonsym, b.clone(), diag(&[1.0, 1.0]), DVector::zeros(2), 0.5),
            Err(Error::Definiteness("symmetric (Q)"))
        );
        assert!(quad_make(diag(&[1.0, 0.0]), b.clone(), diag(&[1.0, 1.0]), DVector::zeros(2), 0.5).is_err());
        assert!(quad_make(diag(&[1.0, 1.0]), b, diag(&[1.0, -1.0]), DVector::zeros(2), 0.5).is_err());
    }

    #[test]
    fn primal_minimiser_cases() {
        let prog = default_prog();
        let t = prog.primal_min(&lm(1.0)).unwrap();
        assert!((t[0] - 0.5).abs() < 1e-15 && (t[1] - 0.5).abs() < 1e-15);
        let t0 = prog.primal_min(&lm(0.0)).unwrap();
        assert!((t0[0] - 1.0).abs() < 1e-15);
        for x in [0.0, 0.3, 2.0, 17.0] {
            let t = prog.primal_min(&lm(x)).unwrap();
            let g = prog.lagrangian_grad(&t, &lm(x)).unwrap();
            assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10);
        }
    }

    #[test]
    fn dual_at_zero_is_negated_unconstrained_optimum() {
        let prog = default_prog();
        let d0 = prog.dual_value(&lm(0.0)).unwrap();
        assert!((d0 + prog.objective(&[1.0, 1.0])).abs() < 1e-15);
    }

    #[test]
    fn kkt_active_constraint() {
        let k = default_prog().kkt().unwrap();
        assert!((k.lambda - (SQRT_2 - 1.0)).abs() < 1e-11);
        assert!((k.theta[0] - 1.0 / SQRT_2).abs() < 1e-11);
        assert!((k.theta[1] - 1.0 / SQRT_2).abs() < 1e-11);
        let jc = default_prog().costs(&k.theta)[0];
        assert!((jc - 0.5).abs() < 1e-10);
    }

    #[test]
    fn kkt_inactive_constraint() {
        let prog = QuadSpec { d: 10.0, ..Default::default() }.build().unwrap();
        let k = prog.kkt().unwrap();
        assert_eq!(k.lambda, 0.0);
        assert_eq!(k.theta, vec![1.0, 1.0]);
    }

    #[test]
    fn kkt_without_slater_point() {
        // J_C(θ) = ½‖θ‖² ≥ 0 > d
        let prog = QuadSpec {
            c: vec![0.0, 0.0],
            d: -0.5,
            ..Default::default()
        }
        .build()
        .unwrap();
        assert!(matches!(prog.kkt(), Err(Error::NoSlaterPoint(_))));
    }

    #[test]
    fn general_instance_satisfies_complementary_slackness() {
        let spec = QuadSpec {
            q: vec![vec![2.0, 0.3], vec![0.3, 1.0]],
            b: vec![1.0, -2.0],
            p: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
            c: vec![0.1, -0.4],
            d: 0.2,
            ..Default::default()
        };
        let prog = spec.build().unwrap();
        let k = prog.kkt().unwrap();
        assert!(k.lambda > 0.0);
        assert!((prog.costs(&k.theta)[0] - 0.2).abs() < 1e-10);
        let primal = -prog.objective(&k.theta);
        assert!((primal - k.dual_value).abs() < 1e-9);
    }

    #[test]
    fn constraint_cost_nonincreasing_in_multiplier() {
        let prog = default_prog();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let t = prog.primal_min(&lm(i as f64 * 0.05)).unwrap();
            let c = prog.costs(&t)[0];
            assert!(c <= prev + 1e-15);
            prev = c;
        }
    }

    proptest! {
        #[test]
        fn dual_is_a_lower_bound(x in 0.0f64..5.0, t0 in -3.0f64..3.0, t1 in -3.0f64..3.0) {
            let prog = default_prog();
            let dv = prog.dual_value(&lm(x)).unwrap();
            prop_assert!(dv <= prog.lagrangian(&[t0, t1], &lm(x)).unwrap() + 1e-12);
        }

        #[test]
        fn dual_is_concave(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let prog = default_prog();
            let mid = prog.dual_value(&lm(0.5 * (a + b))).unwrap();
            let avg = 0.5 * (prog.dual_value(&lm(a)).unwrap() + prog.dual_value(&lm(b)).unwrap());
            prop_assert!(mid >= avg - 1e-12);
        }

        #[test]
        fn weak_duality(t0 in -2.0f64..2.0, t1 in -2.0f64..2.0) {
            let prog = default_prog();
            let theta = [t0, t1];
            let k = prog.kkt().unwrap();
            if prog.costs(&theta)[0] <= prog.threshold() {
                prop_assert!(k.dual_value <= -prog.objective(&theta) + 1e-12);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(
            t in prop::collection::vec(-3.0f64..3.0, 2), x in 0.0f64..5.0,
        ) {
            let prog = QuadSpec {
                q: vec![vec![2.0, 0.3], vec![0.3, 1.0]],
                b: vec![1.0, -2.0],
                p: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
                c: vec![0.1, -0.4],
                d: 0.2,
                ..Default::default()
            }.build().unwrap();
            let g = prog.lagrangian_grad(&t, &lm(x)).unwrap();
            let h = 1e-4;
            for j in 0..2 {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += h;
                tm[j] -= h;
                let fd = (prog.lagrangian(&tp, &lm(x)).unwrap() - prog.lagrangian(&tm, &lm(x)).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-8 * g[j].abs().max(1.0));
            }
        }
    }
}
