//! Block-fading downlink channel: distance path loss, lognormal shadowing and
//! Rayleigh fast fading, plus the conversions into solver inputs and
//! modulation-limited rates.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use thiserror::Error;

use crate::dualsolve::{UserId, UserShare};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("MCS table line {line}: {msg}")]
    McsParse { line: usize, msg: String },
    #[error("invalid MCS table: {0}")]
    McsInvalid(String),
    #[error("reading MCS table: {0}")]
    Io(#[from] std::io::Error),
}

/// Slack for comparing elapsed time against a coherence interval built from
/// summed frame lengths.
const TIME_EPS: f64 = 1e-9;

/// `dBm` (or `dBm/Hz`) to watts (or W/Hz).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    /// `N_0`, W/Hz.
    pub noise_psd: f64,
    /// SNR gap `β`.
    pub snr_gap: f64,
    pub shadow_mean_db: f64,
    pub shadow_sigma_db: f64,
    /// Seconds between fast-fading redraws.
    pub fast_coherence: f64,
    /// Seconds between shadowing redraws.
    pub slow_coherence: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            noise_psd: dbm_to_watts(-174.0),
            snr_gap: 0.25,
            shadow_mean_db: 0.0,
            shadow_sigma_db: 8.0,
            fast_coherence: 0.005,
            slow_coherence: 0.3,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let ok = self.noise_psd > 0.0
            && self.noise_psd.is_finite()
            && self.snr_gap > 0.0
            && self.snr_gap <= 1.0
            && self.shadow_sigma_db >= 0.0
            && self.shadow_mean_db.is_finite()
            && self.shadow_sigma_db.is_finite()
            && self.fast_coherence > 0.0
            && self.slow_coherence > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ChannelError::Domain(format!("invalid propagation parameters {self:?}")))
        }
    }
}

/// `-31.5 - 35 log10(d)` dB for `d >= 1` m; shadowing is added separately.
pub fn path_loss_db(distance: f64) -> Result<f64, ChannelError> {
    if !(distance.is_finite() && distance >= 1.0) {
        return Err(ChannelError::Domain(format!("path loss needs a finite distance >= 1 m, got {distance}")));
    }
    Ok(-31.5 - 35.0 * distance.log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub user_id: UserId,
    /// Meters.
    pub distance: f64,
    pub pathloss_db: f64,
    pub shadow_db: f64,
    /// Linear power of the fast-fading component, unit mean.
    pub fastfade_power: f64,
    /// `h_i`, linear.
    pub gain: f64,
    pub last_slow_update: f64,
    pub last_fast_update: f64,
}

impl ChannelState {
    /// A fresh channel with both random components drawn at time `now`.
    pub fn new<R: Rng + ?Sized>(
        user_id: UserId,
        distance: f64,
        params: &PropagationParams,
        now: f64,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let pathloss_db = path_loss_db(distance)?;
        let shadow_db = draw_shadow(params, rng)?;
        let fastfade_power = draw_fast(rng);
        let mut state = Self {
            user_id,
            distance,
            pathloss_db,
            shadow_db,
            fastfade_power,
            gain: 0.0,
            last_slow_update: now,
            last_fast_update: now,
        };
        state.recompute_gain();
        Ok(state)
    }

    fn recompute_gain(&mut self) {
        self.gain = db_to_linear(self.pathloss_db + self.shadow_db) * self.fastfade_power;
    }

    /// Channel relative to the distance-only mean: shadowing times fast fading.
    pub fn relative_gain(&self) -> f64 {
        db_to_linear(self.shadow_db) * self.fastfade_power
    }

    /// Redraws whichever components have outlived their coherence time.
    /// Returns true when the gain changed.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        params: &PropagationParams,
        rng: &mut R,
    ) -> Result<bool, ChannelError> {
        let mut changed = false;
        if now - self.last_slow_update >= params.slow_coherence - TIME_EPS {
            self.shadow_db = draw_shadow(params, rng)?;
            self.last_slow_update = now;
            changed = true;
        }
        if now - self.last_fast_update >= params.fast_coherence - TIME_EPS {
            self.fastfade_power = draw_fast(rng);
            self.last_fast_update = now;
            changed = true;
        }
        if changed {
            self.recompute_gain();
        }
        Ok(changed)
    }
}

/// Returns the state after advancing to `now`.
pub fn update_channel<R: Rng + ?Sized>(
    state: &ChannelState,
    now: f64,
    params: &PropagationParams,
    rng: &mut R,
) -> Result<ChannelState, ChannelError> {
    let mut next = *state;
    next.advance(now, params, rng)?;
    Ok(next)
}

fn draw_shadow<R: Rng + ?Sized>(params: &PropagationParams, rng: &mut R) -> Result<f64, ChannelError> {
    if params.shadow_sigma_db == 0.0 {
        return Ok(params.shadow_mean_db);
    }
    let normal = Normal::new(params.shadow_mean_db, params.shadow_sigma_db)
        .map_err(|e| ChannelError::Domain(format!("shadowing distribution: {e}")))?;
    Ok(normal.sample(rng))
}

fn draw_fast<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Exp(1) can return exactly 0, which would make the gain vanish.
    let v: f64 = Exp1.sample(rng);
    v.max(f64::MIN_POSITIVE)
}

/// `n = N_0 / (β h)`.
pub fn link_coefficient(gain: f64, params: &PropagationParams) -> Result<f64, ChannelError> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(ChannelError::Domain(format!("channel gain must be positive and finite, got {gain}")));
    }
    Ok(params.noise_psd / (params.snr_gap * gain))
}

/// `w ln(1 + p / (n w))` nats/s, with the `w = 0` corner defined as 0.
pub fn shannon_rate(bandwidth: f64, power: f64, noise_coeff: f64) -> f64 {
    if bandwidth <= 0.0 {
        return 0.0;
    }
    bandwidth * (power / (noise_coeff * bandwidth)).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsTier {
    /// Linear effective SINR at which the tier becomes usable.
    pub min_eff_sinr: f64,
    /// nats/s/Hz.
    pub spectral_eff: f64,
}

/// Effective-SINR thresholds and spectral efficiencies, lowest tier first.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    tiers: Vec<McsTier>,
}

/// (effective SINR dB, nats/s/Hz): QPSK 1/2 through 64-QAM 3/4.
const DEFAULT_MCS_DB: [(f64, f64); 6] =
    [(2.9, 0.693), (6.3, 1.039), (8.6, 1.386), (12.7, 2.079), (16.3, 2.773), (18.7, 3.119)];

impl Default for McsTable {
    fn default() -> Self {
        Self::from_db_rows(&DEFAULT_MCS_DB).expect("built-in MCS table is valid")
    }
}

impl McsTable {
    pub fn new(tiers: Vec<McsTier>) -> Result<Self, ChannelError> {
        if tiers.is_empty() {
            return Err(ChannelError::McsInvalid("table has no tiers".into()));
        }
        for t in &tiers {
            if !(t.min_eff_sinr > 0.0 && t.spectral_eff > 0.0) || !t.min_eff_sinr.is_finite() {
                return Err(ChannelError::McsInvalid(format!("non-positive tier {t:?}")));
            }
            if t.spectral_eff > t.min_eff_sinr.ln_1p() {
                return Err(ChannelError::McsInvalid(format!(
                    "tier {t:?} exceeds Shannon capacity ln(1+x) = {:.4} at its threshold",
                    t.min_eff_sinr.ln_1p()
                )));
            }
        }
        for pair in tiers.windows(2) {
            if !(pair[1].min_eff_sinr > pair[0].min_eff_sinr && pair[1].spectral_eff > pair[0].spectral_eff) {
                return Err(ChannelError::McsInvalid(format!(
                    "thresholds and efficiencies must strictly increase: {:?} then {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { tiers })
    }

    pub fn from_db_rows(rows: &[(f64, f64)]) -> Result<Self, ChannelError> {
        Self::new(rows.iter().map(|&(db, eff)| McsTier { min_eff_sinr: db_to_linear(db), spectral_eff: eff }).collect())
    }

    /// Parses `sinr_db efficiency` rows; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(ChannelError::McsParse {
                    line: i + 1,
                    msg: format!("expected 2 fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| ChannelError::McsParse { line: i + 1, msg: format!("{s:?}: {e}") })
            };
            rows.push((parse(fields[0])?, parse(fields[1])?));
        }
        Self::from_db_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChannelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn tiers(&self) -> &[McsTier] {
        &self.tiers
    }

    pub fn max_spectral_eff(&self) -> f64 {
        self.tiers.last().map_or(0.0, |t| t.spectral_eff)
    }

    /// Efficiency of the highest tier whose threshold is at or below `eff_sinr`.
    pub fn spectral_eff(&self, eff_sinr: f64) -> f64 {
        let idx = self.tiers.partition_point(|t| t.min_eff_sinr <= eff_sinr);
        if idx == 0 {
            0.0
        } else {
            self.tiers[idx - 1].spectral_eff
        }
    }
}

/// Rate actually carried by `share` once its SINR is floored to an MCS tier.
pub fn quantize_rate(share: &UserShare, mcs: &McsTable) -> f64 {
    if share.bandwidth <= 0.0 {
        return 0.0;
    }
    share.bandwidth * mcs.spectral_eff(share.eff_sinr)
}
