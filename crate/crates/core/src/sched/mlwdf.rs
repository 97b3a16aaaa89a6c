use std::f64::consts::LN_2;

use crate::dualsolve::{ResourceBudget, UserId};
use crate::traffic::{hol_after, hol_delay, Session};

use super::{
    settle, update_average, FrameAllocation, FrameContext, Grant, MlwdfUpdate, RateLedger, SchedConfig, SchedulerKind,
};

/// `a_i = -ln(δ_i) / (D_i^max R_i)`.
pub fn mlwdf_coefficient(exceed_prob: f64, delay_bound: f64, avg_rate: f64) -> f64 {
    -exceed_prob.ln() / (delay_bound * avg_rate)
}

/// `a_i D_HOL ln(1 + x_sub)`.
pub fn mlwdf_weight(coefficient: f64, hol_delay: f64, sub_sinr: f64) -> f64 {
    coefficient * hol_delay * sub_sinr.ln_1p()
}

/// Score of `session` for one subchannel carrying `P / N_sub` over
/// `W / N_sub`; the subchannel SINR does not depend on `N_sub`.
pub fn mlwdf_metric(session: &Session, avg_rate: f64, noise_coeff: f64, budget: &ResourceBudget, now: f64) -> f64 {
    let x = budget.total_power / (noise_coeff * budget.total_bandwidth);
    mlwdf_weight(mlwdf_coefficient(session.exceed_prob, session.delay_bound, avg_rate), hol_delay(session, now), x)
}

/// One frame of M-LWDF-PF: subchannels are handed out in order, each to the
/// backlogged session with the largest metric (ties to the lowest user id).
///
/// With [`MlwdfUpdate::PerSubchannel`] a session's `R` is re-evaluated as
/// `α R + (1-α) r_frame` after every subchannel, `r_frame` being its rate
/// granted so far this frame, and its head-of-line delay skips packets the
/// grants already cover.
pub fn mlwdf_frame(
    sessions: &mut [Session],
    ledger: &mut RateLedger,
    ctx: &FrameContext<'_>,
    cfg: &SchedConfig,
) -> FrameAllocation {
    assert!(cfg.n_sub >= 1, "at least one subchannel");
    let noise = ctx.noise_coeffs();
    let w_sub = ctx.budget.total_bandwidth / cfg.n_sub as f64;
    let p_sub = ctx.budget.total_power / cfg.n_sub as f64;
    let x_sub: Vec<f64> = noise.iter().map(|n| p_sub / (n * w_sub)).collect();
    let r_sub: Vec<f64> = x_sub.iter().map(|x| w_sub * x.ln_1p()).collect();
    let q_sub: Vec<f64> =
        if cfg.quantize { x_sub.iter().map(|&x| w_sub * cfg.mcs.spectral_eff(x)).collect() } else { r_sub.clone() };

    let users = sessions.len();
    let mut count = vec![0usize; users];
    let mut owner = Vec::with_capacity(cfg.n_sub);
    for _ in 0..cfg.n_sub {
        let mut best: Option<(f64, UserId, usize)> = None;
        for (i, s) in sessions.iter().enumerate() {
            let consumed = count[i] as f64 * q_sub[i] * ctx.frame_len / LN_2;
            let (d, backlog) = hol_after(s, ctx.now, consumed);
            if backlog <= 0.0 {
                continue;
            }
            let avg = match cfg.mlwdf_update {
                MlwdfUpdate::PerSubchannel => {
                    update_average(ledger.avg_rate[i], count[i] as f64 * r_sub[i], ledger.smoothing[i])
                }
                MlwdfUpdate::PerFrame => ledger.avg_rate[i],
            };
            let m = mlwdf_weight(mlwdf_coefficient(s.exceed_prob, s.delay_bound, avg), d, x_sub[i]);
            let better = match best {
                None => true,
                Some((bm, bid, _)) => m > bm || (m == bm && s.user_id < bid),
            };
            if better {
                best = Some((m, s.user_id, i));
            }
        }
        owner.push(best.map(|(_, id, i)| {
            count[i] += 1;
            id
        }));
    }

    let grants: Vec<Grant> = (0..users)
        .filter(|&i| count[i] > 0)
        .map(|i| {
            let k = count[i] as f64;
            Grant {
                user_id: sessions[i].user_id,
                bandwidth: k * w_sub,
                power: k * p_sub,
                rate: k * r_sub[i],
                quantized_rate: k * q_sub[i],
            }
        })
        .collect();
    settle(sessions, ledger, &grants, ctx);
    FrameAllocation {
        scheduler: SchedulerKind::Mlwdf,
        grants,
        fallback: false,
        degradations: Vec::new(),
        subchannel_owner: owner,
    }
}
