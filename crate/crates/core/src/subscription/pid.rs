use serde::{Deserialize, Serialize};

fn default_output_max() -> f64 {
    1.0
}
fn default_integral_limit() -> f64 {
    f64::MAX
}

/// Gains are per minute. Negative gains give a reverse-acting loop, e.g. a
/// valve that must open further as depth rises above the set-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidParams {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    pub setpoint: f64,
    #[serde(default)]
    pub output_min: f64,
    #[serde(default = "default_output_max")]
    pub output_max: f64,
    /// The integral is kept within `±integral_limit`.
    #[serde(default = "default_integral_limit")]
    pub integral_limit: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
}

/// One controller update.
///
/// Error is `setpoint - measurement`; the derivative acts on the error. When
/// the unclamped output saturates and the integral term would push it further
/// into saturation, integration is suspended for this step.
pub fn pid_step(params: &PidParams, measurement: f64, state: PidState, dt_min: f64) -> (f64, PidState) {
    let error = params.setpoint - measurement;
    let derivative = if dt_min > 0.0 { (error - state.prev_error) / dt_min } else { 0.0 };
    let limit = params.integral_limit.abs();
    let candidate = (state.integral + error * dt_min).clamp(-limit, limit);

    let raw = |integral: f64| params.kp * error + params.ki * integral + params.kd * derivative;
    let pushing = params.ki * error;
    let unclamped = raw(candidate);
    let integral = if (unclamped > params.output_max && pushing > 0.0)
        || (unclamped < params.output_min && pushing < 0.0)
    {
        state.integral.clamp(-limit, limit)
    } else {
        candidate
    };
    let output = raw(integral);
    // terms can overflow to opposite infinities; fail to the low limit
    let output = if output.is_nan() { params.output_min } else { output.clamp(params.output_min, params.output_max) };
    (output, PidState { integral, prev_error: error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(kp: f64, ki: f64, kd: f64, setpoint: f64) -> PidParams {
        PidParams { kp, ki, kd, setpoint, output_min: 0.0, output_max: 1.0, integral_limit: 1.0 }
    }

    #[test]
    fn proportional_only() {
        let (u, _) = pid_step(&params(1.0, 0.0, 0.0, 1.0), 0.6, PidState::default(), 1.0);
        assert!((u - 0.4).abs() < 1e-12);
    }

    #[test]
    fn overflowing_terms_stay_in_range() {
        let p = PidParams { kp: 37.0, ki: 0.0, kd: -4.8, setpoint: 1.0, output_min: 0.0, output_max: 1.0, integral_limit: 0.0 };
        let (u, _) = pid_step(&p, 4.4e307, PidState::default(), 0.001);
        assert_eq!(u, 0.0);
    }

    #[test]
    fn at_setpoint_with_zero_state_does_nothing() {
        let (u, s) = pid_step(&params(1.0, 0.5, 0.2, 1.0), 1.0, PidState::default(), 1.0);
        assert_eq!(u, 0.0);
        assert_eq!(s, PidState::default());
    }

    #[test]
    fn three_step_saturated_sequence() {
        // kp=2, ki=0.1, error 0.5, dt=1, by hand:
        //   candidate integral 0.5 -> unclamped 2*0.5 + 0.1*0.5 = 1.05 > 1 with ki*e > 0
        //   -> integration suspended, integral stays 0, output clamp(1.0) = 1.0; same each step
        let p = params(2.0, 0.1, 0.0, 1.0);
        let mut state = PidState::default();
        let mut outputs = Vec::new();
        for _ in 0..3 {
            let (u, s) = pid_step(&p, 0.5, state, 1.0);
            outputs.push(u);
            state = s;
        }
        assert_eq!(outputs, vec![1.0, 1.0, 1.0]);
        assert_eq!(state.integral, 0.0);
        assert_eq!(state.prev_error, 0.5);
    }

    #[test]
    fn integral_accumulates_when_unsaturated() {
        // e = 0.2: step 1 integral 0.2, u = 0.5*0.2 + 0.1*0.2 = 0.12
        //          step 2 integral 0.4, u = 0.1 + 0.04 = 0.14
        let p = params(0.5, 0.1, 0.0, 1.0);
        let (u1, s1) = pid_step(&p, 0.8, PidState::default(), 1.0);
        let (u2, s2) = pid_step(&p, 0.8, s1, 1.0);
        assert!((u1 - 0.12).abs() < 1e-12 && (s1.integral - 0.2).abs() < 1e-12);
        assert!((u2 - 0.14).abs() < 1e-12 && (s2.integral - 0.4).abs() < 1e-12);
    }

    #[test]
    fn integral_respects_limit() {
        let p = PidParams { integral_limit: 0.3, ..params(0.0, 0.1, 0.0, 1.0) };
        let mut s = PidState::default();
        for _ in 0..10 {
            s = pid_step(&p, 0.0, s, 1.0).1;
        }
        assert!((s.integral - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_is_bounded_for_any_sequence(
            kp in -50.0f64..50.0, ki in -5.0f64..5.0, kd in -5.0f64..5.0,
            setpoint in -10.0f64..10.0, limit in 0.0f64..100.0,
            inputs in proptest::collection::vec((-1e6f64..1e6, 0.01f64..30.0), 1..60),
        ) {
            let p = PidParams { kp, ki, kd, setpoint, output_min: 0.0, output_max: 1.0, integral_limit: limit };
            let mut s = PidState::default();
            for (m, dt) in inputs {
                let (u, next) = pid_step(&p, m, s, dt);
                prop_assert!((0.0..=1.0).contains(&u));
                prop_assert!(next.integral.abs() <= limit + 1e-12);
                s = next;
            }
        }

        #[test]
        fn proportional_only_is_clamped_affine(kp in -10.0f64..10.0, sp in -5.0f64..5.0, m in -5.0f64..5.0) {
            let p = PidParams { kp, ki: 0.0, kd: 0.0, setpoint: sp, output_min: 0.0, output_max: 1.0, integral_limit: 1.0 };
            let (u, _) = pid_step(&p, m, PidState::default(), 1.0);
            prop_assert_eq!(u, (kp * (sp - m)).clamp(0.0, 1.0));
        }
    }
}
