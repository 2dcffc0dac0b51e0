//! Long-time evolution when the majorant is bounded: either one jump from a
//! level high enough that the span fits inside the horizon, or a sequence of
//! short steps between a fixed ceiling and the target level.

use serde::Serialize;

use super::{forward_evolve, EvolutionResult, EvolutionSystem, EvolveOptions};
use crate::error::{Error, Result};
use crate::scale_space::ScaleVector;

/// Largest number of steps before the request is rejected.
pub const MAX_GLOBAL_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalResult {
    /// Result of the last step; its input tail carries the errors of all
    /// earlier steps.
    pub result: EvolutionResult,
    pub steps: usize,
    /// Level the input was read at.
    pub alpha_top: f64,
}

/// `W(t,s)k` in `E_{α'}` for arbitrary `t ≥ s`, using levels up to
/// `alpha_ceiling`. `steps` forces a partition into that many equal steps.
#[allow(clippy::too_many_arguments)]
pub fn global_evolve(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    t: f64,
    alpha_prime: f64,
    alpha_ceiling: f64,
    opts: &EvolveOptions,
    steps: Option<usize>,
) -> Result<GlobalResult> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let ceiling = alpha_ceiling.min(sys.horizon.majorant.alpha_max());
    if !(ceiling > alpha_prime) {
        return Err(Error::HorizonExhausted { requested: t, max_reachable: s });
    }
    let span = t - s;
    let kb = sys.horizon.k_bound;
    let m_star = sys.horizon.majorant.sup();

    if matches!(steps, None | Some(1)) {
        // T(α', α_T) ≥ 2·span for α_T = α' + 4KeM*·span, so ρ ≤ 1/2
        let alpha_top = if m_star == 0.0 { ceiling } else { alpha_prime + 4.0 * kb * std::f64::consts::E * m_star * span };
        if alpha_top <= ceiling && alpha_top > alpha_prime {
            let result = forward_evolve(sys, k, s, t, alpha_top, alpha_prime, opts)?;
            return Ok(GlobalResult { result, steps: 1, alpha_top });
        }
    }

    let horizon = sys.existence_time(alpha_prime, ceiling)?;
    let n = match steps {
        Some(0) => return Err(Error::InvalidInput("steps must be positive".into())),
        Some(n) => {
            if span / n as f64 >= opts.rho_max * horizon {
                let reach = s + n as f64 * opts.rho_max * horizon;
                return Err(Error::HorizonExhausted { requested: t, max_reachable: reach });
            }
            n
        }
        None => ((span / (0.5 * horizon)).ceil() as usize).max(1),
    };
    if n > MAX_GLOBAL_STEPS {
        let reach = s + MAX_GLOBAL_STEPS as f64 * 0.5 * horizon;
        return Err(Error::HorizonExhausted { requested: t, max_reachable: reach });
    }

    let mut cur = k.clone();
    let mut last = None;
    for i in 0..n {
        let a = if i == 0 { s } else { s + span * i as f64 / n as f64 };
        let b = if i + 1 == n { t } else { s + span * (i + 1) as f64 / n as f64 };
        let res = forward_evolve(sys, &cur, a, b, ceiling, alpha_prime, opts)?;
        // the error lives on the working dimension, so it is lifted to the
        // ceiling by the largest weight ratio there
        let len = res.value.support_len();
        let top_degree = (0..len).map(|j| sys.grading.degree(j)).max().unwrap_or(0);
        let err = res.total_error();
        let lifted = if err == 0.0 { 0.0 } else { err * ((ceiling - alpha_prime) * top_degree as f64).exp() };
        cur = ScaleVector::with_tail(res.value.entries().to_vec(), ceiling, lifted)?;
        last = Some(res);
    }
    Ok(GlobalResult { result: last.expect("at least one step"), steps: n, alpha_top: ceiling })
}
