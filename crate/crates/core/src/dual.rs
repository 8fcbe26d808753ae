//! Dual-variable updates: projected gradient ascent and the PID-Lagrangian
//! controller.

use serde::{Deserialize, Serialize};

use crate::lagrangian::{constraint_value, ConstraintSpec, Multiplier};
use crate::{Error, Result};

/// `λ ← [λ + ζ g]₊`.
pub fn dual_ascent_step(lm: &Multiplier, zeta: f64, g: &[f64]) -> Result<Multiplier> {
    if !(zeta > 0.0) {
        return Err(Error::InvalidArgument(format!("dual rate must be positive, got {zeta}")));
    }
    if g.len() != lm.len() {
        return Err(Error::dim("constraint vector", lm.len(), g.len()));
    }
    let raw: Vec<f64> = lm.as_slice().iter().zip(g).map(|(l, gi)| l + zeta * gi).collect();
    Ok(Multiplier::project(&raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.05,
            ki: 0.0005,
            kd: 0.1,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if [self.kp, self.ki, self.kd].iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidConfig(format!("PID gains must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Controller memory: projected integral `I` and the previous cost signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: Vec<f64>,
    pub prev_cost: Option<Vec<f64>>,
}

impl PidState {
    pub fn new(m: usize) -> Self {
        Self {
            integral: vec![0.0; m],
            prev_cost: None,
        }
    }
}

/// One controller step, applied independently to each constraint:
///
/// ```text
/// I_k = [I_{k−1} + J_C^k − d]₊
/// λ_k = [K_P (J_C^k − d) + K_I I_k + K_D (J_C^k − J_C^{k−1})]₊
/// ```
///
/// The multiplier is recomputed from the three terms rather than incremented;
/// the derivative term is zero on the first call.
pub fn pid_dual_step(
    state: &PidState,
    gains: &PidGains,
    j_c: &[f64],
    spec: &ConstraintSpec,
) -> Result<(Multiplier, PidState)> {
    let g = constraint_value(j_c, spec)?;
    if state.integral.len() != g.len() {
        return Err(Error::dim("PID integral", g.len(), state.integral.len()));
    }
    if let Some(prev) = &state.prev_cost {
        if prev.len() != g.len() {
            return Err(Error::dim("PID previous cost", g.len(), prev.len()));
        }
    }
    let integral: Vec<f64> = state
        .integral
        .iter()
        .zip(&g)
        .map(|(i, gi)| (i + gi).max(0.0))
        .collect();
    let raw: Vec<f64> = (0..g.len())
        .map(|i| {
            let derivative = state.prev_cost.as_ref().map_or(0.0, |p| j_c[i] - p[i]);
            gains.kp * g[i] + gains.ki * integral[i] + gains.kd * derivative
        })
        .collect();
    Ok((
        Multiplier::project(&raw),
        PidState {
            integral,
            prev_cost: Some(j_c.to_vec()),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lm(v: &[f64]) -> Multiplier {
        Multiplier::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ascent_cases() {
        assert_eq!(dual_ascent_step(&lm(&[0.5]), 0.1, &[-10.0]).unwrap(), lm(&[0.0]));
        let up = dual_ascent_step(&lm(&[1.0]), 0.2, &[2.0]).unwrap();
        assert!((up.as_slice()[0] - 1.4).abs() < 1e-15);
        assert_eq!(dual_ascent_step(&lm(&[0.3, 2.0]), 0.5, &[0.0, 0.0]).unwrap(), lm(&[0.3, 2.0]));
        assert!(dual_ascent_step(&lm(&[1.0]), 0.0, &[1.0]).is_err());
        assert!(dual_ascent_step(&lm(&[1.0]), 0.1, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pid_first_step_with_reported_gains() {
        let spec = ConstraintSpec::new(vec![10.0]);
        let (l, s) = pid_dual_step(&PidState::new(1), &PidGains::default(), &[20.0], &spec).unwrap();
        assert_eq!(s.integral, vec![10.0]);
        assert!((l.as_slice()[0] - 0.505).abs() < 1e-15);
        assert_eq!(s.prev_cost, Some(vec![20.0]));
        // second step: derivative term now active
        let (l2, s2) = pid_dual_step(&s, &PidGains::default(), &[15.0], &spec).unwrap();
        assert_eq!(s2.integral, vec![15.0]);
        let expected: f64 = 0.05 * 5.0 + 0.0005 * 15.0 + 0.1 * (15.0 - 20.0);
        assert!((l2.as_slice()[0] - expected.max(0.0)).abs() < 1e-15);
    }

    #[test]
    fn feasible_costs_keep_multiplier_zero() {
        let spec = ConstraintSpec::new(vec![10.0]);
        let mut state = PidState::new(1);
        for k in 0..200 {
            let cost = 9.0 - 0.01 * k as f64;
            let (l, next) = pid_dual_step(&state, &PidGains::default(), &[cost], &spec).unwrap();
            assert_eq!(next.integral, vec![0.0]);
            assert_eq!(l.as_slice(), &[0.0], "step {k}");
            state = next;
        }
    }

    #[test]
    fn rising_feasible_cost_can_trigger_derivative_kick() {
        let spec = ConstraintSpec::new(vec![10.0]);
        let gains = PidGains::default();
        let (_, s) = pid_dual_step(&PidState::new(1), &gains, &[3.0], &spec).unwrap();
        let (l, s) = pid_dual_step(&s, &gains, &[9.0], &spec).unwrap();
        assert_eq!(s.integral, vec![0.0]);
        assert!((l.as_slice()[0] - (0.1 * 6.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = ConstraintSpec::new(vec![1.0, 2.0]);
        assert!(pid_dual_step(&PidState::new(1), &PidGains::default(), &[1.0, 2.0], &spec).is_err());
        assert!(pid_dual_step(&PidState::new(2), &PidGains::default(), &[1.0], &spec).is_err());
    }

    #[test]
    fn multi_constraint_is_componentwise() {
        let spec = ConstraintSpec::new(vec![10.0, 5.0]);
        let gains = PidGains::default();
        let (l, s) = pid_dual_step(&PidState::new(2), &gains, &[20.0, 1.0], &spec).unwrap();
        let (l0, _) = pid_dual_step(&PidState::new(1), &gains, &[20.0], &ConstraintSpec::new(vec![10.0])).unwrap();
        assert_eq!(l.as_slice()[0], l0.as_slice()[0]);
        assert_eq!(l.as_slice()[1], 0.0);
        assert_eq!(s.integral, vec![10.0, 0.0]);
    }

    proptest! {
        #[test]
        fn projection_is_non_expansive(
            x in prop::collection::vec(-10.0f64..10.0, 3),
            y in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let px = Multiplier::project(&x);
            let py = Multiplier::project(&y);
            let d_proj: f64 = px.as_slice().iter().zip(py.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
            let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_proj <= d + 1e-12);
        }

        #[test]
        fn pid_output_is_nonnegative(
            costs in prop::collection::vec(0.0f64..40.0, 1..50),
            kp in 0.0f64..1.0, ki in 0.0f64..1.0, kd in 0.0f64..1.0,
        ) {
            let spec = ConstraintSpec::new(vec![10.0]);
            let gains = PidGains { kp, ki, kd };
            let mut state = PidState::new(1);
            for c in costs {
                let (l, next) = pid_dual_step(&state, &gains, &[c], &spec).unwrap();
                prop_assert!(l.as_slice()[0] >= 0.0);
                prop_assert!(next.integral[0] >= 0.0);
                state = next;
            }
        }
    }
}
