//! Frame-level simulation of one cell, metric collection, and parameter
//! sweeps laid out as scheduler-by-metric tables.
//!
//! Every user owns two random streams, one for its channel and one for its
//! traffic, keyed by (seed, class, index within class). Both schedulers and
//! every sweep point therefore see the same realizations for the same user.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelState, McsTable, PropagationParams};
use crate::dualsolve::{ResourceBudget, SolverOptions, UserId};
use crate::sched::{self, FrameContext, MlwdfUpdate, RateLedger, SchedConfig, SchedulerKind};
use crate::traffic::{self, RateRule, SelectionPolicy, Session, TrafficClass, TrafficParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerChoice {
    Fqpsa,
    Mlwdf,
    Both,
}

impl SchedulerChoice {
    pub fn kinds(self) -> &'static [SchedulerKind] {
        match self {
            SchedulerChoice::Fqpsa => &[SchedulerKind::Fqpsa],
            SchedulerChoice::Mlwdf => &[SchedulerKind::Mlwdf],
            SchedulerChoice::Both => &[SchedulerKind::Fqpsa, SchedulerKind::Mlwdf],
        }
    }
}

impl FromStr for SchedulerChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fqpsa" => Ok(Self::Fqpsa),
            "mlwdf" => Ok(Self::Mlwdf),
            "both" => Ok(Self::Both),
            _ => Err(format!("expected fqpsa, mlwdf or both, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub voice_users: usize,
    pub video_users: usize,
    pub data_users: usize,
    /// Meters; users of each class are spread over these round-robin.
    pub distances: Vec<f64>,
    pub budget: ResourceBudget,
    /// Seconds.
    pub frame_len: f64,
    pub frames: u64,
    /// Seconds excluded from every metric.
    pub warmup: f64,
    pub seed: u64,
    pub scheduler: SchedulerChoice,
    pub propagation: PropagationParams,
    pub traffic: TrafficParams,
    pub quantize: bool,
    pub mcs: McsTable,
    pub alpha: f64,
    /// `R_i` before the first grant, nats/s.
    pub initial_rate: f64,
    /// Defaults to three quarters of `n_sub`.
    pub rt_cap: Option<usize>,
    pub n_sub: usize,
    pub defer_threshold: f64,
    pub force_fraction: f64,
    pub rate_rule: RateRule,
    /// Seconds.
    pub flush_window: f64,
    pub mlwdf_update: MlwdfUpdate,
    pub solver: SolverOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let selection = SelectionPolicy::default();
        Self {
            voice_users: 20,
            video_users: 20,
            data_users: 20,
            distances: vec![300.0, 600.0, 900.0, 1200.0, 1500.0],
            budget: ResourceBudget { total_power: 20.0, total_bandwidth: 8.3e6 },
            frame_len: 1e-3,
            frames: 60_000,
            warmup: 2.0,
            seed: 1,
            scheduler: SchedulerChoice::Both,
            propagation: PropagationParams::default(),
            traffic: TrafficParams::default(),
            quantize: false,
            mcs: McsTable::default(),
            alpha: 0.999,
            initial_rate: 1.0,
            rt_cap: None,
            n_sub: 24,
            defer_threshold: selection.defer_threshold,
            force_fraction: selection.force_fraction,
            rate_rule: selection.rate_rule,
            flush_window: selection.flush_window,
            mlwdf_update: MlwdfUpdate::PerSubchannel,
            solver: SolverOptions::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be positive and finite, got {v}"))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.total_users() >= 1, || "at least one user is required".into())?;
        check(self.frames >= 1, || "frames must be at least 1".into())?;
        positive("frame_len", self.frame_len)?;
        positive("total_power", self.budget.total_power)?;
        positive("total_bandwidth", self.budget.total_bandwidth)?;
        check(!self.distances.is_empty(), || "distances must not be empty".into())?;
        for &d in &self.distances {
            check(d >= 1.0 && d.is_finite(), || format!("distances must be >= 1 m, got {d}"))?;
        }
        check(self.warmup >= 0.0 && self.warmup < self.duration(), || {
            format!("warmup ({} s) must be nonnegative and shorter than the run ({} s)", self.warmup, self.duration())
        })?;
        check(self.alpha > 0.0 && self.alpha < 1.0, || format!("alpha must lie in (0, 1), got {}", self.alpha))?;
        positive("initial_rate", self.initial_rate)?;
        check(self.n_sub >= 1, || "n_sub must be at least 1".into())?;
        check(self.rt_cap != Some(0), || "rt_cap must be at least 1".into())?;
        check(self.defer_threshold >= 0.0 && self.defer_threshold.is_finite(), || {
            format!("defer_threshold must be nonnegative, got {}", self.defer_threshold)
        })?;
        positive("force_fraction", self.force_fraction)?;
        positive("flush_window", self.flush_window)?;
        let t = &self.traffic;
        for (name, v) in [
            ("voice_packet_bits", t.voice_packet_bits),
            ("voice_interval", t.voice_interval),
            ("video_packet_bits", t.video_packet_bits),
            ("video_interval", t.video_interval),
            ("file_bits", t.file_bits),
            ("voice_delay_bound", t.voice_delay_bound),
            ("video_delay_bound", t.video_delay_bound),
            ("data_delay_bound", t.data_delay_bound),
            ("voice_talkspurt", t.voice_talkspurt),
        ] {
            positive(name, v)?;
        }
        check(t.exceed_prob > 0.0 && t.exceed_prob < 1.0, || {
            format!("exceed_prob must lie in (0, 1), got {}", t.exceed_prob)
        })?;
        check((0.0..=1.0).contains(&t.voice_duty_cycle), || {
            format!("voice_duty_cycle must lie in [0, 1], got {}", t.voice_duty_cycle)
        })?;
        check(self.solver.degrade_factor > 0.0 && self.solver.degrade_factor < 1.0, || {
            format!("degrade_factor must lie in (0, 1), got {}", self.solver.degrade_factor)
        })?;
        check(self.solver.removal_floor > 0.0 && self.solver.removal_floor < 1.0, || {
            format!("removal_floor must lie in (0, 1), got {}", self.solver.removal_floor)
        })?;
        self.propagation.validate()?;
        Ok(())
    }

    pub fn total_users(&self) -> usize {
        self.voice_users + self.video_users + self.data_users
    }

    /// Seconds.
    pub fn duration(&self) -> f64 {
        self.frames as f64 * self.frame_len
    }

    pub fn effective_rt_cap(&self) -> usize {
        self.rt_cap.unwrap_or(((3 * self.n_sub) / 4).max(1))
    }

    pub fn sched_config(&self) -> SchedConfig {
        SchedConfig {
            n_sub: self.n_sub,
            quantize: self.quantize,
            mcs: self.mcs.clone(),
            selection: SelectionPolicy {
                rt_cap: self.effective_rt_cap(),
                defer_threshold: self.defer_threshold,
                force_fraction: self.force_fraction,
                rate_rule: self.rate_rule,
                flush_window: self.flush_window,
            },
            mlwdf_update: self.mlwdf_update,
            solver: self.solver,
        }
    }

    pub fn class_count(&self, klass: TrafficClass) -> usize {
        match klass {
            TrafficClass::Voice => self.voice_users,
            TrafficClass::Video => self.video_users,
            TrafficClass::Data => self.data_users,
        }
    }
}

/// Delay statistics of one (class, distance) group, seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDelay {
    pub klass: TrafficClass,
    pub distance: f64,
    pub samples: usize,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

/// Which end of the distance range a delay row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Nearest distance class ("G").
    Near,
    /// Farthest distance class ("B").
    Far,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheduler: SchedulerKind,
    /// Data bits delivered per second after warm-up.
    pub data_throughput: f64,
    /// Mean over measured frames of `Σ ln R_i` over data users, `R_i` in bits/s.
    pub logsum: f64,
    /// Ordered by class, then distance.
    pub delays: Vec<ClassDelay>,
    pub fallback_frames: u64,
    pub degradation_events: u64,
    pub frames_measured: u64,
    /// Largest per-frame `Σw / W` and `Σp / P`.
    pub peak_bandwidth_use: f64,
    pub peak_power_use: f64,
    /// Digest of every channel gain of the run.
    pub channel_checksum: u64,
}

impl MetricsReport {
    /// 95th-percentile delay in seconds; NaN when the class is empty.
    pub fn p95(&self, klass: TrafficClass, edge: Edge) -> f64 {
        let rows = self.delays.iter().filter(|d| d.klass == klass);
        let row = match edge {
            Edge::Near => rows.min_by(|a, b| a.distance.total_cmp(&b.distance)),
            Edge::Far => rows.max_by(|a, b| a.distance.total_cmp(&b.distance)),
        };
        row.map_or(f64::NAN, |r| r.p95)
    }
}

/// Nearest-rank percentile, `q` in (0, 1]; NaN for no samples.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

const STREAM_CHANNEL: u64 = 0;
const STREAM_TRAFFIC: u64 = 1;

fn class_tag(klass: TrafficClass) -> u64 {
    match klass {
        TrafficClass::Voice => 0,
        TrafficClass::Video => 1,
        TrafficClass::Data => 2,
    }
}

fn user_rng(seed: u64, klass: TrafficClass, index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((class_tag(klass) << 56) | (purpose << 48) | index as u64);
    rng
}

/// FNV-1a.
fn fold_checksum(acc: u64, value: u64) -> u64 {
    let mut h = acc;
    for byte in value.to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct User {
    session: Session,
    distance: f64,
    channel_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
}

fn build_users(cfg: &ScenarioConfig) -> Vec<User> {
    let mut users = Vec::with_capacity(cfg.total_users());
    for klass in [TrafficClass::Voice, TrafficClass::Video, TrafficClass::Data] {
        for index in 0..cfg.class_count(klass) {
            let user_id = users.len() as UserId;
            let mut traffic_rng = user_rng(cfg.seed, klass, index, STREAM_TRAFFIC);
            let first_arrival = match cfg.traffic.cbr(klass) {
                Some((_, interval)) => {
                    let slots = ((interval / cfg.frame_len).round() as u64).max(1);
                    traffic_rng.random_range(0..slots) as f64 * cfg.frame_len
                }
                None => 0.0,
            };
            let mut session = Session::new(user_id, klass, &cfg.traffic, first_arrival);
            session.record_after = cfg.warmup;
            users.push(User {
                session,
                distance: cfg.distances[index % cfg.distances.len()],
                channel_rng: user_rng(cfg.seed, klass, index, STREAM_CHANNEL),
                traffic_rng,
            });
        }
    }
    users
}

/// Simulates `cfg` under one scheduler.
pub fn run_scenario(cfg: &ScenarioConfig, kind: SchedulerKind) -> Result<MetricsReport> {
    cfg.validate()?;
    let sched_cfg = cfg.sched_config();
    let mut users = build_users(cfg);
    let mut channels = Vec::with_capacity(users.len());
    for u in users.iter_mut() {
        channels.push(ChannelState::new(u.session.user_id, u.distance, &cfg.propagation, 0.0, &mut u.channel_rng)?);
    }
    let mut sessions: Vec<Session> = users.iter().map(|u| u.session.clone()).collect();
    let mut ledger = RateLedger::new(sessions.len(), cfg.alpha, cfg.initial_rate);

    let mut checksum = 0xcbf2_9ce4_8422_2325u64;
    let mut report = MetricsReport {
        scheduler: kind,
        data_throughput: 0.0,
        logsum: 0.0,
        delays: Vec::new(),
        fallback_frames: 0,
        degradation_events: 0,
        frames_measured: 0,
        peak_bandwidth_use: 0.0,
        peak_power_use: 0.0,
        channel_checksum: 0,
    };
    let data_bits = |sessions: &[Session]| -> f64 {
        sessions.iter().filter(|s| s.klass == TrafficClass::Data).map(|s| s.delivered_bits).sum()
    };
    let mut bits_at_warmup = None;
    let mut logsum_acc = 0.0;

    for k in 0..cfg.frames {
        let now = k as f64 * cfg.frame_len;
        if bits_at_warmup.is_none() && now >= cfg.warmup - 1e-12 {
            bits_at_warmup = Some(data_bits(&sessions));
        }
        for (c, u) in channels.iter_mut().zip(users.iter_mut()) {
            if k > 0 {
                c.advance(now, &cfg.propagation, &mut u.channel_rng)?;
            }
            checksum = fold_checksum(checksum, c.gain.to_bits());
        }
        for (s, u) in sessions.iter_mut().zip(users.iter_mut()) {
            traffic::generate_arrivals(s, now, &mut u.traffic_rng);
        }
        let ctx = FrameContext {
            channels: &channels,
            propagation: &cfg.propagation,
            budget: cfg.budget,
            now,
            frame_len: cfg.frame_len,
        };
        let alloc = match kind {
            SchedulerKind::Fqpsa => sched::fqpsa_frame(&mut sessions, &mut ledger, &ctx, &sched_cfg),
            SchedulerKind::Mlwdf => sched::mlwdf_frame(&mut sessions, &mut ledger, &ctx, &sched_cfg),
        };
        report.fallback_frames += alloc.fallback as u64;
        report.degradation_events += alloc.degradations.len() as u64;
        report.peak_bandwidth_use = report.peak_bandwidth_use.max(alloc.total_bandwidth() / cfg.budget.total_bandwidth);
        report.peak_power_use = report.peak_power_use.max(alloc.total_power() / cfg.budget.total_power);
        if bits_at_warmup.is_some() {
            report.frames_measured += 1;
            if cfg.data_users > 0 {
                logsum_acc += sched::data_log_sum(&sessions, &ledger);
            }
        }
    }

    let measured = report.frames_measured as f64 * cfg.frame_len;
    if measured > 0.0 {
        report.data_throughput = (data_bits(&sessions) - bits_at_warmup.unwrap_or(0.0)) / measured;
        report.logsum = if cfg.data_users > 0 { logsum_acc / report.frames_measured as f64 } else { f64::NAN };
    }
    report.channel_checksum = checksum;
    report.delays = delay_table(cfg, &users, &sessions);
    Ok(report)
}

/// Per (class, distance) delay statistics. Packets still queued at the end
/// and already past their bound count at their current age.
fn delay_table(cfg: &ScenarioConfig, users: &[User], sessions: &[Session]) -> Vec<ClassDelay> {
    let end = cfg.duration();
    let mut out = Vec::new();
    for klass in [TrafficClass::Voice, TrafficClass::Video] {
        let mut distances: Vec<f64> = users.iter().filter(|u| u.session.klass == klass).map(|u| u.distance).collect();
        distances.sort_by(f64::total_cmp);
        distances.dedup();
        for d in distances {
            let mut samples: Vec<f64> = Vec::new();
            for (u, s) in users.iter().zip(sessions) {
                if u.session.klass != klass || u.distance != d {
                    continue;
                }
                samples.extend_from_slice(&s.delay_samples);
                samples.extend(
                    s.queue
                        .iter()
                        .filter(|p| p.arrival >= cfg.warmup && end - p.arrival > s.delay_bound)
                        .map(|p| end - p.arrival),
                );
            }
            samples.sort_by(f64::total_cmp);
            out.push(ClassDelay {
                klass,
                distance: d,
                samples: samples.len(),
                p50: percentile(&samples, 0.5),
                p95: percentile(&samples, 0.95),
                max: samples.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    out
}

/// Runs every scheduler selected by `cfg.scheduler`, in parallel.
pub fn run_configured(cfg: &ScenarioConfig) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    cfg.scheduler.kinds().par_iter().map(|&k| run_scenario(cfg, k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Voice,
    Video,
    Data,
}

impl SweepAxis {
    pub fn symbol(self) -> &'static str {
        match self {
            SweepAxis::Voice => "V",
            SweepAxis::Video => "S",
            SweepAxis::Data => "D",
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: usize) {
        match self {
            SweepAxis::Voice => cfg.voice_users = value,
            SweepAxis::Video => cfg.video_users = value,
            SweepAxis::Data => cfg.data_users = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "voice" | "v" => Ok(Self::Voice),
            "video" | "s" => Ok(Self::Video),
            "data" | "d" => Ok(Self::Data),
            _ => Err(format!("expected voice, video or data, got {s:?}")),
        }
    }
}

/// Reports arranged as columns, one per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// Top-left header cell.
    pub corner: String,
    pub columns: Vec<String>,
    /// `reports[c]` holds one report per scheduler for column `c`.
    pub reports: Vec<Vec<MetricsReport>>,
}

/// Runs both schedulers at every value of `axis`, on common random numbers.
pub fn sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[usize]) -> Result<ResultTable> {
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, v);
            cfg
        })
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let kinds = SchedulerChoice::Both.kinds();
    let jobs: Vec<(usize, SchedulerKind)> =
        (0..configs.len()).flat_map(|c| kinds.iter().map(move |&k| (c, k))).collect();
    let mut done: Vec<(usize, MetricsReport)> =
        jobs.par_iter().map(|&(c, k)| run_scenario(&configs[c], k).map(|r| (c, r))).collect::<Result<_>>()?;
    done.sort_by_key(|(c, r)| (*c, r.scheduler));
    let mut reports = vec![Vec::new(); configs.len()];
    for (c, r) in done {
        reports[c].push(r);
    }
    Ok(ResultTable {
        corner: axis.symbol().to_string(),
        columns: values.iter().map(|v| v.to_string()).collect(),
        reports,
    })
}

/// Single-scenario table with one `value` column.
pub fn run_table(cfg: &ScenarioConfig) -> Result<ResultTable> {
    Ok(ResultTable { corner: "metric".into(), columns: vec!["value".into()], reports: vec![run_configured(cfg)?] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Millis,
    Mbps,
    Plain,
    Count,
}

fn format_cell(v: f64, unit: Unit) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    match unit {
        Unit::Millis => format!("{:.1}", v * 1e3),
        Unit::Mbps => format!("{:.3}", v / 1e6),
        Unit::Plain => format!("{v:.2}"),
        Unit::Count => format!("{v:.0}"),
    }
}

impl ResultTable {
    fn kinds(&self) -> Vec<SchedulerKind> {
        let mut kinds: Vec<SchedulerKind> = self.reports.iter().flatten().map(|r| r.scheduler).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    fn row(&self, kind: SchedulerKind, f: impl Fn(&MetricsReport) -> f64, unit: Unit) -> Vec<String> {
        self.reports
            .iter()
            .map(|col| col.iter().find(|r| r.scheduler == kind).map_or(f64::NAN, &f))
            .map(|v| format_cell(v, unit))
            .collect()
    }

    /// Delay rows (milliseconds), then throughput (Mbps) and log-sum rows.
    pub fn rows(&self) -> Vec<(String, Vec<String>)> {
        let kinds = self.kinds();
        let mut rows = Vec::new();
        for klass in [TrafficClass::Voice, TrafficClass::Video] {
            for &kind in &kinds {
                for (edge, tag) in [(Edge::Near, "G"), (Edge::Far, "B")] {
                    rows.push((
                        format!("{} {} ({tag})", kind.label(), klass.label()),
                        self.row(kind, |r| r.p95(klass, edge), Unit::Millis),
                    ));
                }
            }
        }
        for &kind in &kinds {
            rows.push((format!("{} (Mbps)", kind.label()), self.row(kind, |r| r.data_throughput, Unit::Mbps)));
            rows.push((format!("{} Log-sum", kind.label()), self.row(kind, |r| r.logsum, Unit::Plain)));
        }
        rows
    }

    fn diagnostic_rows(&self) -> Vec<(String, Vec<String>)> {
        let mut rows = Vec::new();
        for kind in self.kinds() {
            let l = kind.label();
            if kind == SchedulerKind::Fqpsa {
                rows.push((format!("{l} fallback frames"), self.row(kind, |r| r.fallback_frames as f64, Unit::Count)));
                rows.push((format!("{l} degradations"), self.row(kind, |r| r.degradation_events as f64, Unit::Count)));
            }
            rows.push((format!("{l} peak power use"), self.row(kind, |r| r.peak_power_use, Unit::Plain)));
            rows.push((
                format!("{l} channel checksum"),
                self.reports
                    .iter()
                    .map(|col| {
                        col.iter()
                            .find(|r| r.scheduler == kind)
                            .map_or("NaN".into(), |r| format!("{:016x}", r.channel_checksum))
                    })
                    .collect(),
            ));
        }
        rows
    }

    /// Header row plus one row per metric; cells use a dot decimal separator.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{},{}", self.corner, self.columns.join(","));
        for (name, cells) in self.rows() {
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }

    /// Column-aligned text including solver and channel diagnostics.
    pub fn to_aligned(&self) -> String {
        let mut rows = vec![(format!("{} =", self.corner), self.columns.clone())];
        rows.extend(self.rows());
        rows.extend(self.diagnostic_rows());
        let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let cell_w = rows.iter().flat_map(|(_, c)| c.iter().map(String::len)).max().unwrap_or(0);
        let mut out = String::new();
        for (name, cells) in rows {
            let _ = write!(out, "{name:<name_w$}");
            for c in cells {
                let _ = write!(out, "  {c:>cell_w$}");
            }
            out.push('\n');
        }
        out
    }
}
