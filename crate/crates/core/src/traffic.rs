//! Voice, video and file-transfer sessions: packet generation, FIFO queues,
//! head-of-line delay, and the per-frame choice of real-time sessions with
//! their rate requirements.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::dualsolve::{RealTimeDemand, UserId};

/// Tolerance when deciding whether accumulated credit covers a packet.
const BIT_EPS: f64 = 1e-6;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficClass {
    Voice,
    Video,
    Data,
}

impl TrafficClass {
    pub fn is_realtime(self) -> bool {
        !matches!(self, TrafficClass::Data)
    }

    pub fn label(self) -> &'static str {
        match self {
            TrafficClass::Voice => "Voice",
            TrafficClass::Video => "Video",
            TrafficClass::Data => "Data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    pub voice_packet_bits: f64,
    pub voice_interval: f64,
    pub video_packet_bits: f64,
    pub video_interval: f64,
    pub file_bits: f64,
    pub voice_delay_bound: f64,
    pub video_delay_bound: f64,
    pub data_delay_bound: f64,
    pub exceed_prob: f64,
    /// Fraction of time a voice source is in a talk spurt.
    pub voice_duty_cycle: f64,
    /// Mean talk-spurt length in seconds, used when the duty cycle is below 1.
    pub voice_talkspurt: f64,
    /// Keep partially sent real-time packets across frames.
    pub rt_fragmentation: bool,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            voice_packet_bits: 640.0,
            voice_interval: 0.020,
            video_packet_bits: 1280.0,
            video_interval: 0.010,
            file_bits: 4.0e7,
            voice_delay_bound: 0.1,
            video_delay_bound: 0.4,
            data_delay_bound: 1.0,
            exceed_prob: 0.05,
            voice_duty_cycle: 1.0,
            voice_talkspurt: 1.0,
            rt_fragmentation: true,
        }
    }
}

impl TrafficParams {
    pub fn delay_bound(&self, klass: TrafficClass) -> f64 {
        match klass {
            TrafficClass::Voice => self.voice_delay_bound,
            TrafficClass::Video => self.video_delay_bound,
            TrafficClass::Data => self.data_delay_bound,
        }
    }

    /// Packet size and spacing of a constant-bit-rate class.
    pub fn cbr(&self, klass: TrafficClass) -> Option<(f64, f64)> {
        match klass {
            TrafficClass::Voice => Some((self.voice_packet_bits, self.voice_interval)),
            TrafficClass::Video => Some((self.video_packet_bits, self.video_interval)),
            TrafficClass::Data => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub bits: f64,
    /// Seconds.
    pub arrival: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OnOff {
    talking: bool,
    until: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub user_id: UserId,
    pub klass: TrafficClass,
    pub queue: VecDeque<Packet>,
    /// Bits of completed packets (real time) or of file content (data).
    pub delivered_bits: f64,
    pub generated_bits: f64,
    pub delay_samples: Vec<f64>,
    pub delay_bound: f64,
    pub exceed_prob: f64,
    /// Bits of the head packet already sent.
    pub hol_progress: f64,
    /// Delivery times before this are not sampled.
    pub record_after: f64,
    next_arrival: f64,
    packet_bits: f64,
    interval: f64,
    fragmentation: bool,
    on_off: Option<OnOff>,
    talkspurt: f64,
    silence: f64,
}

impl Session {
    /// `first_arrival` offsets the constant-bit-rate grid; ignored for data.
    pub fn new(user_id: UserId, klass: TrafficClass, params: &TrafficParams, first_arrival: f64) -> Self {
        let (packet_bits, interval) = params.cbr(klass).unwrap_or((params.file_bits, f64::INFINITY));
        let duty = params.voice_duty_cycle.clamp(0.0, 1.0);
        let on_off = (klass == TrafficClass::Voice && duty < 1.0).then_some(OnOff { talking: true, until: 0.0 });
        Self {
            user_id,
            klass,
            queue: VecDeque::new(),
            delivered_bits: 0.0,
            generated_bits: 0.0,
            delay_samples: Vec::new(),
            delay_bound: params.delay_bound(klass),
            exceed_prob: params.exceed_prob,
            hol_progress: 0.0,
            record_after: 0.0,
            next_arrival: first_arrival,
            packet_bits,
            interval,
            fragmentation: params.rt_fragmentation,
            on_off,
            talkspurt: params.voice_talkspurt,
            silence: if duty > 0.0 { params.voice_talkspurt * (1.0 - duty) / duty } else { f64::INFINITY },
        }
    }

    pub fn queued_bits(&self) -> f64 {
        self.queue.iter().map(|p| p.bits).sum()
    }

    /// Bits still to be sent, net of head-packet progress.
    pub fn backlog_bits(&self) -> f64 {
        (self.queued_bits() - self.hol_progress).max(0.0)
    }

    pub fn is_backlogged(&self) -> bool {
        !self.queue.is_empty()
    }

    fn push(&mut self, bits: f64, arrival: f64) {
        self.queue.push_back(Packet { bits, arrival });
        self.generated_bits += bits;
    }

    fn record(&mut self, delay: f64, at: f64) {
        if at >= self.record_after {
            self.delay_samples.push(delay);
        }
    }
}

/// Appends every packet that has arrived by `now`.
///
/// Voice and video are constant bit rate; a data session holds one file at a
/// time and is refilled by [`drain`] as soon as the file completes.
pub fn generate_arrivals<R: Rng + ?Sized>(session: &mut Session, now: f64, rng: &mut R) -> usize {
    if session.klass == TrafficClass::Data {
        if session.queue.is_empty() {
            let bits = session.packet_bits;
            session.push(bits, now);
            return 1;
        }
        return 0;
    }
    let mut added = 0;
    while session.next_arrival <= now + TIME_EPS {
        let t = session.next_arrival;
        let talking = match session.on_off.as_mut() {
            None => true,
            Some(state) => {
                while state.until <= t {
                    state.talking = !state.talking;
                    let mean = if state.talking { session.talkspurt } else { session.silence };
                    let hold = if mean.is_finite() && mean > 0.0 {
                        Exp::new(1.0 / mean).map(|d| d.sample(rng)).unwrap_or(mean)
                    } else {
                        f64::INFINITY
                    };
                    state.until += hold.max(session.interval);
                }
                state.talking
            }
        };
        if talking {
            let bits = session.packet_bits;
            session.push(bits, t);
            added += 1;
        }
        session.next_arrival += session.interval;
    }
    added
}

/// Age of the oldest queued packet, 0 for an empty queue.
pub fn hol_delay(session: &Session, now: f64) -> f64 {
    session.queue.front().map_or(0.0, |p| (now - p.arrival).max(0.0))
}

/// Head-of-line delay and remaining backlog once `consumed` further bits
/// are set aside for this frame.
pub fn hol_after(session: &Session, now: f64, consumed: f64) -> (f64, f64) {
    if session.klass == TrafficClass::Data {
        let backlog = (session.backlog_bits() - consumed).max(0.0);
        return (if backlog > 0.0 { hol_delay(session, now) } else { 0.0 }, backlog);
    }
    let mut credit = session.hol_progress + consumed;
    let mut iter = session.queue.iter();
    for p in iter.by_ref() {
        if credit + BIT_EPS >= p.bits {
            credit -= p.bits;
        } else {
            let rest: f64 = iter.map(|q| q.bits).sum();
            return ((now - p.arrival).max(0.0), p.bits - credit + rest);
        }
    }
    (0.0, 0.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DrainOutcome {
    pub packets: usize,
    pub bits: f64,
    /// Granted capacity nothing could use.
    pub wasted_bits: f64,
}

/// Serves the queue with `granted_bits` of capacity at time `now`.
///
/// Real-time packets are delivered whole. With fragmentation enabled the
/// unused part of the grant stays with the head packet; otherwise it is
/// dropped. Data files drain as a fluid; when a file completes the next one
/// is enqueued and the rest of the grant is dropped.
pub fn drain(session: &mut Session, granted_bits: f64, now: f64) -> DrainOutcome {
    let mut out = DrainOutcome::default();
    let granted = granted_bits.max(0.0);
    if session.klass == TrafficClass::Data {
        let Some(file) = session.queue.front().copied() else {
            out.wasted_bits = granted;
            return out;
        };
        let remaining = file.bits - session.hol_progress;
        let used = granted.min(remaining);
        session.hol_progress += used;
        session.delivered_bits += used;
        out.bits = used;
        out.wasted_bits = granted - used;
        if session.hol_progress + BIT_EPS >= file.bits {
            session.queue.pop_front();
            session.hol_progress = 0.0;
            session.record(now - file.arrival, now);
            out.packets = 1;
            let bits = session.packet_bits;
            session.push(bits, now);
        }
        return out;
    }

    let mut credit = session.hol_progress + granted;
    while let Some(head) = session.queue.front().copied() {
        if credit + BIT_EPS < head.bits {
            break;
        }
        session.queue.pop_front();
        credit = (credit - head.bits).max(0.0);
        session.delivered_bits += head.bits;
        session.record(now - head.arrival, now);
        out.packets += 1;
        out.bits += head.bits;
    }
    if session.queue.is_empty() || !session.fragmentation {
        out.wasted_bits = credit;
        session.hol_progress = 0.0;
    } else {
        session.hol_progress = credit;
    }
    out
}

/// How a selected session's rate requirement is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRule {
    /// Send the whole backlog over the flush window. A session that is only
    /// selected because it reached the forcing age sends just the packets
    /// past that age, within the frame.
    Flush,
    /// Spread the urgent backlog (packets older than half the bound, at least
    /// the head packet) over the head packet's remaining slack.
    DeadlinePaced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    /// Most real-time sessions served per frame.
    pub rt_cap: usize,
    /// Opportunistic deferral: a session is eligible once
    /// `(D_HOL / D_max) * g >= defer_threshold`, with `g` the current
    /// fast-fading gain. Zero disables deferral.
    pub defer_threshold: f64,
    /// Sessions whose `D_HOL / D_max` reaches this are always eligible.
    pub force_fraction: f64,
    pub rate_rule: RateRule,
    /// Seconds over which a flushed backlog is spread, capped by the head
    /// packet's remaining slack.
    pub flush_window: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self { rt_cap: 18, defer_threshold: 1.0, force_fraction: 0.8, rate_rule: RateRule::Flush, flush_window: 0.005 }
    }
}

/// What the selector needs to know about one session's link this frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkView {
    pub noise_coeff: f64,
    /// Fast-fading power gain, unit mean. Shadowing outlasts real-time
    /// deadlines and is not waited out.
    pub fading_gain: f64,
    /// `R_i`, nats/s.
    pub avg_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RealTimeSelection {
    pub demands: Vec<RealTimeDemand>,
    pub selected_ids: BTreeSet<UserId>,
}

/// `m_i = a_i D_HOL / n_i` with `a_i = -ln(δ_i) / (D_max R_i)`.
pub fn selection_score(session: &Session, link: &LinkView, now: f64) -> f64 {
    let a = -session.exceed_prob.ln() / (session.delay_bound * link.avg_rate.max(f64::MIN_POSITIVE));
    a * hol_delay(session, now) / link.noise_coeff
}

/// Bits of packets older than `age`, at least the rest of the head packet.
fn due_bits(s: &Session, now: f64, age: f64) -> f64 {
    let due: f64 = s.queue.iter().filter(|p| now - p.arrival >= age).map(|p| p.bits).sum();
    let head = s.queue.front().map_or(0.0, |p| p.bits);
    (due.max(head) - s.hol_progress).max(0.0)
}

/// Picks this frame's real-time sessions and their rate requirements.
///
/// `links[i]` describes `sessions[i]`. Deferral only applies while data
/// sessions exist to use the resources it frees.
pub fn select_realtime(
    sessions: &[Session],
    links: &[LinkView],
    now: f64,
    frame_len: f64,
    policy: &SelectionPolicy,
) -> RealTimeSelection {
    assert_eq!(sessions.len(), links.len(), "one link view per session");
    let any_data = sessions.iter().any(|s| s.klass == TrafficClass::Data);
    let defer = any_data && policy.defer_threshold > 0.0;

    // (score, index, full flush allowed)
    let mut ranked: Vec<(f64, usize, bool)> = sessions
        .iter()
        .zip(links)
        .enumerate()
        .filter(|(_, (s, _))| s.klass.is_realtime() && s.is_backlogged())
        .filter_map(|(i, (s, l))| {
            let urgency = hol_delay(s, now) / s.delay_bound;
            let good_channel = !defer || urgency * l.fading_gain >= policy.defer_threshold;
            (good_channel || urgency >= policy.force_fraction).then(|| (selection_score(s, l, now), i, good_channel))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| sessions[a.1].user_id.cmp(&sessions[b.1].user_id)));
    ranked.truncate(policy.rt_cap);

    let mut selection = RealTimeSelection::default();
    for (_, i, good_channel) in ranked {
        let s = &sessions[i];
        let bits = match policy.rate_rule {
            RateRule::Flush if good_channel => s.backlog_bits(),
            // Forced on a poor channel: only what is already overdue for forcing.
            RateRule::Flush => due_bits(s, now, policy.force_fraction * s.delay_bound),
            RateRule::DeadlinePaced => due_bits(s, now, 0.5 * s.delay_bound),
        };
        if bits <= 0.0 {
            continue;
        }
        let slack = s.delay_bound - hol_delay(s, now);
        let window = match policy.rate_rule {
            RateRule::Flush if good_channel => policy.flush_window.min(slack).max(frame_len),
            RateRule::Flush => frame_len,
            RateRule::DeadlinePaced => slack.max(frame_len),
        };
        selection.demands.push(RealTimeDemand {
            user_id: s.user_id,
            noise_coeff: links[i].noise_coeff,
            rate_req: bits * LN_2 / window,
        });
        selection.selected_ids.insert(s.user_id);
    }
    selection
}
