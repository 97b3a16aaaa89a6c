//! Per-frame schedulers: the dual-decomposition allocator and the M-LWDF-PF
//! subchannel-by-subchannel benchmark, plus the exponential rate ledger.

mod mlwdf;

use std::f64::consts::LN_2;

use log::warn;

use crate::channel::{link_coefficient, quantize_rate, ChannelState, McsTable, PropagationParams};
use crate::dualsolve::{self, DataUserState, Degradation, ResourceBudget, SolverOptions, UserId, UserShare};
use crate::traffic::{self, LinkView, SelectionPolicy, Session, TrafficClass};

pub use mlwdf::{mlwdf_coefficient, mlwdf_frame, mlwdf_metric, mlwdf_weight};

/// `R(t) = α R(t-1) + (1-α) r(t)`.
pub fn update_average(avg: f64, rate: f64, alpha: f64) -> f64 {
    alpha * avg + (1.0 - alpha) * rate
}

/// Exponentially averaged received rates, indexed by session position.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLedger {
    /// nats/s.
    pub avg_rate: Vec<f64>,
    pub smoothing: Vec<f64>,
}

impl RateLedger {
    pub fn new(users: usize, alpha: f64, initial: f64) -> Self {
        Self { avg_rate: vec![initial; users], smoothing: vec![alpha; users] }
    }

    pub fn len(&self) -> usize {
        self.avg_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.avg_rate.is_empty()
    }

    /// Applies one frame of received rates; missing users received 0.
    pub fn record_frame(&mut self, rates: &[f64]) {
        for (i, r) in self.avg_rate.iter_mut().enumerate() {
            *r = update_average(*r, rates.get(i).copied().unwrap_or(0.0), self.smoothing[i]);
        }
    }
}

/// `Σ ln R_i`. Any zero rate yields negative infinity.
pub fn log_sum(avg_rates: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    for r in avg_rates {
        if r.is_nan() || r <= 0.0 {
            warn!("log-sum over a zero average rate");
            return f64::NEG_INFINITY;
        }
        sum += r.ln();
    }
    sum
}

/// Log-sum over the data sessions of a ledger, rates in bits/s.
pub fn data_log_sum(sessions: &[Session], ledger: &RateLedger) -> f64 {
    log_sum(sessions.iter().zip(&ledger.avg_rate).filter(|(s, _)| s.klass == TrafficClass::Data).map(|(_, r)| r / LN_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    Fqpsa,
    Mlwdf,
}

impl SchedulerKind {
    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::Fqpsa => "FQPS",
            SchedulerKind::Mlwdf => "LWDF",
        }
    }
}

/// When M-LWDF refreshes `R` while handing out subchannels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlwdfUpdate {
    PerSubchannel,
    PerFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedConfig {
    pub n_sub: usize,
    pub quantize: bool,
    pub mcs: McsTable,
    pub selection: SelectionPolicy,
    pub mlwdf_update: MlwdfUpdate,
    pub solver: SolverOptions,
}

impl Default for SchedConfig {
    fn default() -> Self {
        Self {
            n_sub: 24,
            quantize: false,
            mcs: McsTable::default(),
            selection: SelectionPolicy::default(),
            mlwdf_update: MlwdfUpdate::PerSubchannel,
            solver: SolverOptions::default(),
        }
    }
}

/// Frame-wide inputs shared by both schedulers. `channels[i]` belongs to
/// `sessions[i]`.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub channels: &'a [ChannelState],
    pub propagation: &'a PropagationParams,
    pub budget: ResourceBudget,
    /// Frame start, seconds.
    pub now: f64,
    pub frame_len: f64,
}

impl FrameContext<'_> {
    pub fn end(&self) -> f64 {
        self.now + self.frame_len
    }

    fn noise_coeffs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| link_coefficient(c.gain, self.propagation).unwrap_or(f64::INFINITY)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grant {
    pub user_id: UserId,
    /// Hz.
    pub bandwidth: f64,
    /// W.
    pub power: f64,
    /// Shannon rate, nats/s.
    pub rate: f64,
    /// Rate after MCS flooring, nats/s; equals `rate` when quantization is off.
    pub quantized_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAllocation {
    pub scheduler: SchedulerKind,
    pub grants: Vec<Grant>,
    /// Equal split was used because the solver failed.
    pub fallback: bool,
    pub degradations: Vec<Degradation>,
    /// Owner of each subchannel, M-LWDF only.
    pub subchannel_owner: Vec<Option<UserId>>,
}

impl FrameAllocation {
    pub fn total_bandwidth(&self) -> f64 {
        self.grants.iter().map(|g| g.bandwidth).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.grants.iter().map(|g| g.power).sum()
    }

    pub fn grant(&self, user_id: UserId) -> Option<&Grant> {
        self.grants.iter().find(|g| g.user_id == user_id)
    }
}

fn grant_from_share(share: &UserShare, cfg: &SchedConfig) -> Grant {
    let rate = share.rate();
    let quantized_rate = if cfg.quantize { quantize_rate(share, &cfg.mcs) } else { rate };
    Grant { user_id: share.user_id, bandwidth: share.bandwidth, power: share.power, rate, quantized_rate }
}

/// Serves every session from `grants` (by user id) and updates the ledger
/// with the continuous rates.
fn settle(sessions: &mut [Session], ledger: &mut RateLedger, grants: &[Grant], ctx: &FrameContext<'_>) {
    let mut rates = vec![0.0; sessions.len()];
    for g in grants {
        let Some(i) = sessions.iter().position(|s| s.user_id == g.user_id) else { continue };
        rates[i] = g.rate;
        traffic::drain(&mut sessions[i], g.quantized_rate * ctx.frame_len / LN_2, ctx.end());
    }
    ledger.record_frame(&rates);
}

/// One frame of the proposed allocator.
///
/// Real-time sessions are selected, the convex problem is solved over them
/// and every backlogged data session, grants are optionally MCS-floored,
/// queues are served, and the rate ledger advances. A solver error never
/// aborts: the frame falls back to an equal split and is flagged.
pub fn fqpsa_frame(
    sessions: &mut [Session],
    ledger: &mut RateLedger,
    ctx: &FrameContext<'_>,
    cfg: &SchedConfig,
) -> FrameAllocation {
    let noise = ctx.noise_coeffs();
    let links: Vec<LinkView> = ctx
        .channels
        .iter()
        .zip(&noise)
        .zip(&ledger.avg_rate)
        .map(|((c, &n), &r)| LinkView { noise_coeff: n, fading_gain: c.fastfade_power, avg_rate: r })
        .collect();
    let selection = traffic::select_realtime(sessions, &links, ctx.now, ctx.frame_len, &cfg.selection);

    let data: Vec<DataUserState> = sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.klass == TrafficClass::Data && s.is_backlogged())
        .filter_map(|(i, s)| DataUserState::new(s.user_id, noise[i], ledger.avg_rate[i], ledger.smoothing[i]).ok())
        .collect();

    let mut alloc = FrameAllocation {
        scheduler: SchedulerKind::Fqpsa,
        grants: Vec::new(),
        fallback: false,
        degradations: Vec::new(),
        subchannel_owner: Vec::new(),
    };
    if data.is_empty() && selection.demands.is_empty() {
        settle(sessions, ledger, &[], ctx);
        return alloc;
    }

    match dualsolve::solve_with(&data, &selection.demands, &ctx.budget, &cfg.solver) {
        Ok(result) => {
            alloc.grants = result.shares.iter().map(|s| grant_from_share(s, cfg)).collect();
            alloc.degradations = result.degraded_rates;
        }
        Err(err) => {
            warn!("solver failed at t={:.3}s, using equal split: {err}", ctx.now);
            alloc.fallback = true;
            let ids: Vec<(UserId, f64)> = data
                .iter()
                .map(|u| (u.user_id, u.noise_coeff))
                .chain(selection.demands.iter().map(|d| (d.user_id, d.noise_coeff)))
                .collect();
            let k = ids.len() as f64;
            let (w, p) = (ctx.budget.total_bandwidth / k, ctx.budget.total_power / k);
            alloc.grants = ids
                .into_iter()
                .map(|(user_id, n)| {
                    grant_from_share(&UserShare { user_id, bandwidth: w, power: p, eff_sinr: p / (n * w) }, cfg)
                })
                .collect();
        }
    }
    settle(sessions, ledger, &alloc.grants, ctx);
    alloc
}
