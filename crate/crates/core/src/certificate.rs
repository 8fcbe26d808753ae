//! Numerical certificates for a deterministic run on a program with exact
//! oracles.
//!
//! For every iteration the checker measures the primal error
//! `ε_k = 𝓛(θ_{k+1}, λ_k) − d(λ_k)` and the squared distance
//! `δ_k = ‖θ_k − θ*(λ_k)‖²`, then evaluates each bound as a slack
//! (right side minus left side). With `L = L(λ_k)` and `∇ = ∇_θ𝓛(θ_k, λ_k)`:
//!
//! ```text
//! dual gap   0 ≤ D* − max_{j≤K'} d(λ_j)
//!              ≤ ‖λ₀ − λ*‖²/(2ζK') + ζ(B + (1−γ)‖d‖)²/(2(1−γ)²) + (1/K') Σ_{k<K'} ε_k
//! per step   D* ≤ d(λ_k) + (λ* − λ_k)ᵀ g(θ_{k+1}) + ε_k
//! any η      ε_k ≤ L′ √((2/μ)(Lδ_k + (Lη² − η)‖∇‖²))
//!            ε_k ≤ L′ √((1 + η²L² − ημ) δ_k)
//! η¹, η²     ε¹_k ≤ L′ √((2δ_k/μ)(L − μ²/(16L)))
//!            ε²_k ≤ L′ √(δ_k (1 − μ²/(4L²)))
//! average    (1/K') Σ J_R(θ_{k+1}) ≥ −D* − (1/K') Σ ε_k − ζG²/2 − ‖λ₀‖²/(2ζK')
//! feasible   (1/K') Σ g(θ_{k+1}) ≤ (λ_{K'} − λ₀)/(ζK')
//! ```
//!
//! where `G = (B + (1−γ)‖d‖)/(1−γ)`. The Lipschitz constant `L′` of the
//! Lagrangian value is taken from the constants when given and otherwise
//! estimated as 1.1 times the largest `‖∇_θ𝓛(θ_{k+1}, λ_k)‖` along the run.
//! Iterations where a radicand is negative are flagged and skipped.

use serde::{Deserialize, Serialize};

use crate::lagrangian::{ConstraintSpec, Multiplier};
use crate::schedule::{exact_lr, lipschitz_of_lambda, AdaptiveRule, SmoothnessConstants};
use crate::solver::{RecordSource, RunRecord};
use crate::testbed::ConstrainedProgram;
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const LIPSCHITZ_SAFETY: f64 = 1.1;

/// `ζ(B + (1−γ)‖d‖)²/(2(1−γ)²)`, the limit of the dual-gap bound with exact
/// primal steps.
pub fn asymptotic_dual_term(zeta: f64, cost_bound: f64, gamma: f64, d_norm: f64) -> f64 {
    let one_minus = 1.0 - gamma;
    zeta * (cost_bound + one_minus * d_norm).powi(2) / (2.0 * one_minus * one_minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCertificate {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    /// `D* − max_{j≤k+1} d(λ_j)`.
    pub dual_gap: f64,
    pub dual_gap_slack: f64,
    pub weak_duality_slack: f64,
    pub per_step_slack: f64,
    /// `None` where the radicand is negative or the run took several inner steps.
    pub any_eta_linear: Option<f64>,
    pub any_eta_quadratic: Option<f64>,
    pub optimal_linear: Option<f64>,
    pub optimal_quadratic: Option<f64>,
    pub radicand_negative: bool,
    pub average_return_slack: f64,
    pub average_feasibility_slack: f64,
    /// Bound at the optimal rate is no larger than at half and double that rate.
    pub linear_rate_optimal: Option<bool>,
    pub quadratic_rate_optimal: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub tolerance: f64,
    pub lambda_star: f64,
    pub dual_star: f64,
    pub lipschitz_value: f64,
    pub cost_bound: f64,
    /// True when `cost_bound` was inferred from the run rather than given.
    pub cost_bound_inferred: bool,
    /// A configured bound smaller than the largest observed `(1−γ)|J_C|`.
    pub cost_bound_violated: bool,
    pub gamma: f64,
    pub zeta: f64,
    pub asymptotic_term: f64,
    pub flagged_iterations: usize,
    pub min_slack: MinSlacks,
    pub dual_gap_monotone: bool,
    pub rate_optimality: bool,
    pub passed: bool,
    pub iterations: Vec<IterationCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinSlacks {
    pub dual_gap: f64,
    pub weak_duality: f64,
    pub per_step: f64,
    pub any_eta_linear: f64,
    pub any_eta_quadratic: f64,
    pub optimal_linear: f64,
    pub optimal_quadratic: f64,
    pub average_return: f64,
    pub average_feasibility: f64,
}

impl MinSlacks {
    fn all(&self) -> [f64; 9] {
        [
            self.dual_gap,
            self.weak_duality,
            self.per_step,
            self.any_eta_linear,
            self.any_eta_quadratic,
            self.optimal_linear,
            self.optimal_quadratic,
            self.average_return,
            self.average_feasibility,
        ]
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sqrt_checked(x: f64) -> Option<f64> {
    (x >= 0.0).then(|| x.sqrt())
}

/// Per-step primal error bound `L′√((2/μ)(Lδ + (Lη² − η)‖∇‖²))` at rate `eta`.
fn linear_bound(lp: f64, l: f64, mu: f64, delta: f64, grad_sq: f64, eta: f64) -> Option<f64> {
    sqrt_checked((2.0 / mu) * (l * delta + (l * eta * eta - eta) * grad_sq)).map(|r| lp * r)
}

/// `L′√((1 + η²L² − ημ)δ)` at rate `eta`.
fn quadratic_bound(lp: f64, l: f64, mu: f64, delta: f64, eta: f64) -> Option<f64> {
    sqrt_checked((1.0 + eta * eta * l * l - eta * mu) * delta).map(|r| lp * r)
}

fn optimal_among(f: impl Fn(f64) -> Option<f64>, eta: f64) -> Option<bool> {
    let at = f(eta)?;
    let half = f(0.5 * eta)?;
    let double = f(2.0 * eta)?;
    let tol = 1e-12 * at.abs().max(1.0);
    Some(at <= half + tol && at <= double + tol)
}

pub fn verify_bounds(
    record: &RunRecord,
    problem: &dyn ConstrainedProgram,
    constants: &SmoothnessConstants,
    zeta: f64,
) -> Result<BoundCertificate> {
    verify_bounds_with_tolerance(record, problem, constants, zeta, DEFAULT_TOLERANCE)
}

pub fn verify_bounds_with_tolerance(
    record: &RunRecord,
    problem: &dyn ConstrainedProgram,
    constants: &SmoothnessConstants,
    zeta: f64,
    tol: f64,
) -> Result<BoundCertificate> {
    if record.source == RecordSource::Stochastic {
        return Err(Error::StochasticRecord("a sampled run"));
    }
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidArgument(format!("dual rate must be positive, got {zeta}")));
    }
    constants.validate()?;
    let spec = problem.constraint();
    let kkt = problem.kkt()?;
    let lambda_star = [kkt.lambda];
    let d_star = kkt.dual_value;
    let gamma = problem.gamma();
    let mu = constants.mu;
    let single_step = record.inner_steps == 1;
    let k_total = record.len();

    let lm = |v: &[f64]| Multiplier::new(v.to_vec());
    let lambda0 = record.rows[0].lambda.clone();

    // First pass: exact quantities per iteration.
    struct Raw {
        epsilon: f64,
        delta: f64,
        grad_sq: f64,
        l: f64,
        dual: f64,
        g_next: Vec<f64>,
        j_r_next: f64,
    }
    let mut raws = Vec::with_capacity(k_total);
    let mut max_grad_next: f64 = 0.0;
    let mut max_cost: f64 = 0.0;
    for (k, row) in record.rows.iter().enumerate() {
        let lk = lm(&row.lambda)?;
        let next = record.next_theta(k);
        let theta_min = problem.primal_min(&lk)?;
        let dual = problem.dual_value(&lk)?;
        let epsilon = problem.lagrangian(next, &lk)? - dual;
        let delta = norm_sq(&sub(&row.theta, &theta_min));
        let grad_sq = norm_sq(&problem.lagrangian_grad(&row.theta, &lk)?);
        max_grad_next = max_grad_next.max(norm_sq(&problem.lagrangian_grad(next, &lk)?).sqrt());
        let costs = problem.costs(next);
        max_cost = costs.iter().fold(max_cost, |a, c| a.max(c.abs()));
        raws.push(Raw {
            epsilon,
            delta,
            grad_sq,
            l: lipschitz_of_lambda(constants, &lk)?,
            dual,
            g_next: crate::lagrangian::constraint_value(&costs, &spec)?,
            j_r_next: problem.objective(next),
        });
    }

    let lp = constants.l_lip.unwrap_or(LIPSCHITZ_SAFETY * max_grad_next);
    let observed_bound = (1.0 - gamma) * max_cost;
    let (cost_bound, inferred) = match problem.cost_bound() {
        Some(b) => (b, false),
        None => (observed_bound, true),
    };
    let cost_bound_violated = !inferred && cost_bound < observed_bound;
    let asymptotic = asymptotic_dual_term(zeta, cost_bound, gamma, spec.norm());
    let g_bound = (cost_bound + (1.0 - gamma) * spec.norm()) / (1.0 - gamma);
    let lambda0_star_sq = norm_sq(&sub(&lambda0, &lambda_star));
    let lambda0_sq = norm_sq(&lambda0);

    let mut iterations = Vec::with_capacity(k_total);
    let mut best_dual = f64::NEG_INFINITY;
    let mut eps_sum = 0.0;
    let mut jr_sum = 0.0;
    let mut g_sum = vec![0.0; spec.len()];
    let mut flagged = 0;
    for (k, (row, raw)) in record.rows.iter().zip(&raws).enumerate() {
        let kp = (k + 1) as f64;
        best_dual = best_dual.max(raw.dual);
        let next_lambda = record.next_lambda(k);
        best_dual = best_dual.max(problem.dual_value(&lm(next_lambda)?)?);
        eps_sum += raw.epsilon;
        jr_sum += raw.j_r_next;
        for (s, g) in g_sum.iter_mut().zip(&raw.g_next) {
            *s += g;
        }

        let dual_gap = d_star - best_dual;
        let rhs = lambda0_star_sq / (2.0 * zeta * kp) + asymptotic + eps_sum / kp;
        let lk_g: f64 = sub(&lambda_star, &row.lambda).iter().zip(&raw.g_next).map(|(a, b)| a * b).sum();
        let per_step_slack = raw.dual + lk_g + raw.epsilon - d_star;

        let (mut a11, mut a12, mut o13, mut o14) = (None, None, None, None);
        let (mut opt_lin, mut opt_qua) = (None, None);
        let mut negative = false;
        if single_step {
            let eta = row.eta;
            let l = raw.l;
            match linear_bound(lp, l, mu, raw.delta, raw.grad_sq, eta) {
                Some(b) => a11 = Some(b - raw.epsilon),
                None => negative = true,
            }
            match quadratic_bound(lp, l, mu, raw.delta, eta) {
                Some(b) => a12 = Some(b - raw.epsilon),
                None => negative = true,
            }
            let lk = lm(&row.lambda)?;
            let eta1 = exact_lr(AdaptiveRule::InvLin, constants, &lk)?;
            let eta2 = exact_lr(AdaptiveRule::InvQua, constants, &lk)?;
            // the optimal-rate bounds hold for the error the optimal rate would incur
            let eps_at = |rate: f64| -> Result<f64> {
                let grad = problem.lagrangian_grad(&row.theta, &lk)?;
                let stepped: Vec<f64> = row.theta.iter().zip(&grad).map(|(t, g)| t - rate * g).collect();
                Ok(problem.lagrangian(&stepped, &lk)? - raw.dual)
            };
            match sqrt_checked((2.0 * raw.delta / mu) * (l - mu * mu / (16.0 * l))) {
                Some(r) => o13 = Some(lp * r - eps_at(eta1)?),
                None => negative = true,
            }
            match sqrt_checked(raw.delta * (1.0 - mu * mu / (4.0 * l * l))) {
                Some(r) => o14 = Some(lp * r - eps_at(eta2)?),
                None => negative = true,
            }
            opt_lin = optimal_among(|e| linear_bound(lp, l, mu, raw.delta, raw.grad_sq, e), eta1);
            opt_qua = optimal_among(|e| quadratic_bound(lp, l, mu, raw.delta, e), eta2);
        }
        if negative {
            flagged += 1;
        }

        let average_return_slack =
            jr_sum / kp + d_star + eps_sum / kp + zeta * g_bound * g_bound / 2.0 + lambda0_sq / (2.0 * zeta * kp);
        let average_feasibility_slack = g_sum
            .iter()
            .enumerate()
            .map(|(i, s)| (next_lambda[i] - lambda0[i]) / (zeta * kp) - s / kp)
            .fold(f64::INFINITY, f64::min);

        iterations.push(IterationCertificate {
            k,
            epsilon: raw.epsilon,
            delta: raw.delta,
            eta: row.eta,
            dual_gap,
            dual_gap_slack: rhs - dual_gap,
            weak_duality_slack: dual_gap,
            per_step_slack,
            any_eta_linear: a11,
            any_eta_quadratic: a12,
            optimal_linear: o13,
            optimal_quadratic: o14,
            radicand_negative: negative,
            average_return_slack,
            average_feasibility_slack,
            linear_rate_optimal: opt_lin,
            quadratic_rate_optimal: opt_qua,
        });
    }

    let min_of = |f: &dyn Fn(&IterationCertificate) -> Option<f64>| {
        iterations.iter().filter_map(f).fold(f64::INFINITY, f64::min)
    };
    let min_slack = MinSlacks {
        dual_gap: min_of(&|c| Some(c.dual_gap_slack)),
        weak_duality: min_of(&|c| Some(c.weak_duality_slack)),
        per_step: min_of(&|c| Some(c.per_step_slack)),
        any_eta_linear: min_of(&|c| c.any_eta_linear),
        any_eta_quadratic: min_of(&|c| c.any_eta_quadratic),
        optimal_linear: min_of(&|c| c.optimal_linear),
        optimal_quadratic: min_of(&|c| c.optimal_quadratic),
        average_return: min_of(&|c| Some(c.average_return_slack)),
        average_feasibility: min_of(&|c| Some(c.average_feasibility_slack)),
    };
    let dual_gap_monotone = iterations.windows(2).all(|w| w[1].dual_gap <= w[0].dual_gap);
    let rate_optimality = iterations
        .iter()
        .flat_map(|c| [c.linear_rate_optimal, c.quadratic_rate_optimal])
        .flatten()
        .all(|ok| ok);
    let passed = min_slack.all().iter().all(|s| *s >= -tol) && dual_gap_monotone && rate_optimality;

    Ok(BoundCertificate {
        tolerance: tol,
        lambda_star: kkt.lambda,
        dual_star: d_star,
        lipschitz_value: lp,
        cost_bound,
        cost_bound_inferred: inferred,
        cost_bound_violated,
        gamma,
        zeta,
        asymptotic_term: asymptotic,
        flagged_iterations: flagged,
        min_slack,
        dual_gap_monotone,
        rate_optimality,
        passed,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Running average of each cost after `k + 1` iterations.
    pub running_average: Vec<Vec<f64>>,
    pub final_average: Vec<f64>,
    pub window_average: Vec<f64>,
    pub window_len: usize,
    pub passed: bool,
}

/// Running averages of the recorded costs; passes when both the full-run and
/// trailing-window averages are within `tol` of the thresholds.
pub fn feasibility_check(
    record: &RunRecord,
    spec: &ConstraintSpec,
    window: f64,
    tol: f64,
) -> Result<FeasibilityReport> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument(format!("window must lie in (0, 1], got {window}")));
    }
    let m = spec.len();
    if let Some(r) = record.rows.iter().find(|r| r.j_c.len() != m) {
        return Err(Error::dim("recorded costs", m, r.j_c.len()));
    }
    let mut sums = vec![0.0; m];
    let mut running_average = Vec::with_capacity(record.len());
    for (k, row) in record.rows.iter().enumerate() {
        for (s, c) in sums.iter_mut().zip(&row.j_c) {
            *s += c;
        }
        running_average.push(sums.iter().map(|s| s / (k + 1) as f64).collect::<Vec<_>>());
    }
    let final_average = running_average.last().cloned().unwrap_or_default();
    let window_len = ((window * record.len() as f64).ceil() as usize).clamp(1, record.len());
    let tail = &record.rows[record.len() - window_len..];
    let window_average: Vec<f64> = (0..m)
        .map(|i| tail.iter().map(|r| r.j_c[i]).sum::<f64>() / window_len as f64)
        .collect();
    let within = |avg: &[f64]| avg.iter().zip(&spec.d).all(|(a, d)| *a <= d + tol);
    let passed = within(&final_average) && within(&window_average);
    Ok(FeasibilityReport {
        running_average,
        final_average,
        window_average,
        window_len,
        passed,
    })
}
