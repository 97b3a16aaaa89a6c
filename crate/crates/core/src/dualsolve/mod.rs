//! Per-frame joint power/bandwidth allocation for proportionally fair data
//! users and rate-constrained real-time users.
//!
//! The optimum is parameterized by two scalars (see [`DualPair`]):
//!
//! * `Λ_a` fixes every user's effective SINR through `x_i = f_a⁻¹(Λ_a / n_i)`;
//! * `Λ_p` fixes the data users' bandwidth through the positive-part rule in
//!   [`data_user_share`].
//!
//! Real-time users take exactly the bandwidth that meets their rate at `x_i`.
//! [`solve`] finds the unique pair that spends the whole bandwidth and power
//! budgets with two nested searches: the inner one finds `Λ_p` for the
//! bandwidth budget, the outer one moves `Λ_a` until the power budget is met.
//!
//! All rates are in nats per second.

mod fa;
pub mod verify;

use fa::f_a_inv_unchecked;
pub use fa::{f_a, f_a_inv};

use thiserror::Error;

/// Identifies a user across solver inputs and outputs.
pub type UserId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("real-time user cannot meet positive rate with zero SINR")]
    ZeroSinr,
    #[error("no bandwidth remains for data at lambda_a = {lambda_a:e}")]
    NoDataBandwidth { lambda_a: f64 },
    #[error("nothing to allocate: no data users and no real-time demands")]
    Empty,
    #[error("numerical failure: {reason}")]
    Numerical {
        reason: String,
        /// Best dual pair reached before giving up, if any.
        best: Option<DualPair>,
    },
}

pub type Result<T> = std::result::Result<T, SolveError>;

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SolveError::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Total power (W) and bandwidth (Hz) available in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceBudget {
    pub total_power: f64,
    pub total_bandwidth: f64,
}

impl ResourceBudget {
    pub fn new(total_power: f64, total_bandwidth: f64) -> Result<Self> {
        positive_finite("total_power", total_power)?;
        positive_finite("total_bandwidth", total_bandwidth)?;
        Ok(Self { total_power, total_bandwidth })
    }

    /// Same budget with both resources multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { total_power: self.total_power * c, total_bandwidth: self.total_bandwidth * c }
    }
}

/// A data user as seen by one frame's optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataUserState {
    pub user_id: UserId,
    /// `n_i = N_0 / (β h_i)`, W/Hz per unit effective SINR.
    pub noise_coeff: f64,
    /// Exponentially averaged received rate `R_i`, nats/s.
    pub avg_rate: f64,
    /// Averaging weight `α_i` on the past.
    pub smoothing: f64,
}

impl DataUserState {
    pub fn new(user_id: UserId, noise_coeff: f64, avg_rate: f64, smoothing: f64) -> Result<Self> {
        positive_finite("noise_coeff", noise_coeff)?;
        if !(avg_rate.is_finite() && avg_rate >= 0.0) {
            return Err(SolveError::Domain(format!("avg_rate must be finite and >= 0, got {avg_rate}")));
        }
        if !(smoothing > 0.0 && smoothing < 1.0) {
            return Err(SolveError::Domain(format!("smoothing must lie in (0, 1), got {smoothing}")));
        }
        Ok(Self { user_id, noise_coeff, avg_rate, smoothing })
    }

    /// `α̃_i = α_i / (1 - α_i)`.
    pub fn alpha_tilde(&self) -> f64 {
        self.smoothing / (1.0 - self.smoothing)
    }

    /// `R_i α̃_i`, the history handicap in the bandwidth rule.
    fn handicap(&self) -> f64 {
        self.avg_rate * self.alpha_tilde()
    }
}

/// A selected real-time session and the rate it must receive this frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealTimeDemand {
    pub user_id: UserId,
    pub noise_coeff: f64,
    /// Required rate `r_i^c`, nats/s.
    pub rate_req: f64,
}

impl RealTimeDemand {
    pub fn new(user_id: UserId, noise_coeff: f64, rate_req: f64) -> Result<Self> {
        positive_finite("noise_coeff", noise_coeff)?;
        positive_finite("rate_req", rate_req)?;
        Ok(Self { user_id, noise_coeff, rate_req })
    }
}

/// The two scalars that determine the allocation.
///
/// `lambda_a = Λ_p / Λ_w` and `lambda_p = L* / λ_p`; `Λ_w` is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPair {
    pub lambda_a: f64,
    pub lambda_p: f64,
}

impl DualPair {
    pub fn new(lambda_a: f64, lambda_p: f64) -> Self {
        Self { lambda_a, lambda_p }
    }

    /// `Λ_w = Λ_p / Λ_a`, undefined when `Λ_a = 0`.
    pub fn lambda_w(&self) -> Option<f64> {
        (self.lambda_a > 0.0).then(|| self.lambda_p / self.lambda_a)
    }
}

/// One user's slice of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserShare {
    pub user_id: UserId,
    /// Hz.
    pub bandwidth: f64,
    /// W.
    pub power: f64,
    /// `x_i = p_i / (n_i w_i)`.
    pub eff_sinr: f64,
}

impl UserShare {
    pub fn empty(user_id: UserId) -> Self {
        Self { user_id, bandwidth: 0.0, power: 0.0, eff_sinr: 0.0 }
    }

    /// Shannon rate `w ln(1 + x)` of this share, nats/s.
    pub fn rate(&self) -> f64 {
        if self.bandwidth > 0.0 {
            self.bandwidth * self.eff_sinr.ln_1p()
        } else {
            0.0
        }
    }
}

/// A real-time demand that was reduced to restore feasibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub user_id: UserId,
    pub original_rate: f64,
    /// Final requirement the solve was run with; 0 when the demand was dropped.
    pub reduced_rate: f64,
    pub removed: bool,
    /// Number of times this demand was cut.
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// Data users first (input order), then real-time users (input order).
    pub shares: Vec<UserShare>,
    pub feasible_as_given: bool,
    pub degraded_rates: Vec<Degradation>,
    pub dual: DualPair,
    /// Outer-search evaluations.
    pub iterations: usize,
    /// Feasibility floor `Λ_a⁰` used, when real-time demands were present.
    pub lambda_a_floor: Option<f64>,
}

impl AllocationResult {
    pub fn total_bandwidth(&self) -> f64 {
        self.shares.iter().map(|s| s.bandwidth).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.shares.iter().map(|s| s.power).sum()
    }

    pub fn share(&self, user_id: UserId) -> Option<&UserShare> {
        self.shares.iter().find(|s| s.user_id == user_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Multiplier applied to the heaviest real-time demand per infeasible round.
    pub degrade_factor: f64,
    /// Demands that fall below this fraction of their original rate are dropped.
    pub removal_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_outer: 200, max_inner: 200, degrade_factor: 0.5, removal_floor: 1e-3 }
    }
}

/// Bandwidth and power of a data user at the given dual pair.
pub fn data_user_share(dual: DualPair, u: &DataUserState) -> Result<UserShare> {
    positive_finite("lambda_a", dual.lambda_a)?;
    let x = f_a_inv_unchecked(dual.lambda_a / u.noise_coeff);
    let term = DataTerm::new(u, x);
    let w = term.bandwidth(dual.lambda_p);
    Ok(UserShare { user_id: u.user_id, bandwidth: w, power: w * term.power_per_hz, eff_sinr: x })
}

/// Bandwidth and power that meet a real-time demand exactly at `Λ_a`.
pub fn realtime_share(lambda_a: f64, d: &RealTimeDemand) -> Result<UserShare> {
    if lambda_a == 0.0 {
        return Err(SolveError::ZeroSinr);
    }
    positive_finite("lambda_a", lambda_a)?;
    let x = f_a_inv_unchecked(lambda_a / d.noise_coeff);
    let spectral = x.ln_1p();
    if spectral <= 0.0 {
        return Err(SolveError::ZeroSinr);
    }
    let w = d.rate_req / spectral;
    Ok(UserShare { user_id: d.user_id, bandwidth: w, power: d.noise_coeff * w * x, eff_sinr: x })
}

/// `(S_w, S_p)`: total bandwidth and power implied by a dual pair.
pub fn resource_sums(dual: DualPair, data: &[DataUserState], rt: &[RealTimeDemand]) -> Result<(f64, f64)> {
    if rt.is_empty() && data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let at = AtLambdaA::build(dual.lambda_a, data, rt)?;
    Ok(at.sums(dual.lambda_p))
}

/// `Λ_p^w(Λ_a)`: the `Λ_p` at which the allocation uses exactly `W`.
pub fn lambda_p_for_bandwidth(
    lambda_a: f64,
    data: &[DataUserState],
    rt: &[RealTimeDemand],
    total_bandwidth: f64,
) -> Result<f64> {
    positive_finite("total_bandwidth", total_bandwidth)?;
    if data.is_empty() {
        return Err(SolveError::Domain("lambda_p search needs at least one data user".into()));
    }
    let at = AtLambdaA::build(lambda_a, data, rt)?;
    at.lambda_p_for_bandwidth(total_bandwidth, SolverOptions::default().max_inner)
}

/// The smallest `Λ_a` at which the real-time demands alone fit into `W`.
///
/// Returns `None` when there are no real-time demands (no constraint).
pub fn feasibility_lambda(rt: &[RealTimeDemand], total_bandwidth: f64) -> Result<Option<f64>> {
    positive_finite("total_bandwidth", total_bandwidth)?;
    if rt.is_empty() {
        return Ok(None);
    }
    for d in rt {
        positive_finite("noise_coeff", d.noise_coeff)?;
        positive_finite("rate_req", d.rate_req)?;
    }
    let rt_bandwidth = |lambda_a: f64| -> f64 {
        rt.iter().map(|d| d.rate_req / f_a_inv_unchecked(lambda_a / d.noise_coeff).ln_1p()).sum()
    };

    // Start where a single user with the mean coefficient would need to carry
    // the whole demand on W.
    let total_rate: f64 = rt.iter().map(|d| d.rate_req).sum();
    let mean_n = rt.iter().map(|d| d.noise_coeff).sum::<f64>() / rt.len() as f64;
    let x_guess = (total_rate / total_bandwidth).min(700.0).exp_m1();
    let mut lo = (mean_n * fa::f_a_unchecked(x_guess)).max(f64::MIN_POSITIVE);
    let mut hi = lo;
    let mut grown = 0;
    while rt_bandwidth(lo) <= total_bandwidth {
        hi = lo;
        lo *= 0.25;
        grown += 1;
        if lo == 0.0 || grown > 2000 {
            return Err(SolveError::Numerical {
                reason: "feasibility floor below representable range".into(),
                best: None,
            });
        }
    }
    while rt_bandwidth(hi) > total_bandwidth {
        lo = hi;
        hi *= 4.0;
        grown += 1;
        if !hi.is_finite() || grown > 2000 {
            return Err(SolveError::Numerical {
                reason: "feasibility floor above representable range".into(),
                best: None,
            });
        }
    }
    // Invariant: S_w(lo) > W >= S_w(hi). Bisect geometrically to the last ulp.
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if rt_bandwidth(mid) > total_bandwidth {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Outcome of the feasibility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityCheck {
    pub is_feasible: bool,
    /// `Λ_a⁰`; `None` when no real-time demand constrains the frame.
    pub lambda_a_floor: Option<f64>,
    /// Power the real-time demands need at `Λ_a⁰` with nothing left for data.
    pub power_at_floor: f64,
}

/// Feasible iff `S_p(Λ_a⁰, 0) < P` (strict).
pub fn check_feasible(rt: &[RealTimeDemand], budget: &ResourceBudget) -> Result<FeasibilityCheck> {
    let Some(floor) = feasibility_lambda(rt, budget.total_bandwidth)? else {
        return Ok(FeasibilityCheck { is_feasible: true, lambda_a_floor: None, power_at_floor: 0.0 });
    };
    let mut power = 0.0;
    for d in rt {
        power += realtime_share(floor, d)?.power;
    }
    Ok(FeasibilityCheck { is_feasible: power < budget.total_power, lambda_a_floor: Some(floor), power_at_floor: power })
}

/// One infeasibility round's action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeStep {
    pub user_id: UserId,
    pub from_rate: f64,
    pub to_rate: f64,
    pub removed: bool,
}

/// Cuts the rate of the real-time demand that draws the most power at `Λ_a⁰`.
///
/// `original_rates[i]` is the undegraded requirement of `rt[i]`; both vectors
/// shrink together when a demand falls below the removal floor.
pub fn degrade_infeasible(
    rt: &mut Vec<RealTimeDemand>,
    original_rates: &mut Vec<f64>,
    budget: &ResourceBudget,
    options: &SolverOptions,
) -> Result<DegradeStep> {
    assert_eq!(rt.len(), original_rates.len(), "demand and original-rate lists differ in length");
    let floor = feasibility_lambda(rt, budget.total_bandwidth)?
        .ok_or_else(|| SolveError::Domain("nothing to degrade: no real-time demands".into()))?;
    let mut heaviest = 0;
    let mut heaviest_power = f64::NEG_INFINITY;
    for (i, d) in rt.iter().enumerate() {
        let p = realtime_share(floor, d)?.power;
        if p > heaviest_power {
            heaviest_power = p;
            heaviest = i;
        }
    }
    let from_rate = rt[heaviest].rate_req;
    let to_rate = from_rate * options.degrade_factor;
    let user_id = rt[heaviest].user_id;
    if to_rate < options.removal_floor * original_rates[heaviest] {
        rt.remove(heaviest);
        original_rates.remove(heaviest);
        Ok(DegradeStep { user_id, from_rate, to_rate: 0.0, removed: true })
    } else {
        rt[heaviest].rate_req = to_rate;
        Ok(DegradeStep { user_id, from_rate, to_rate, removed: false })
    }
}

/// Solves one frame: feasibility restoration, then the nested dual search.
pub fn solve(data: &[DataUserState], rt: &[RealTimeDemand], budget: &ResourceBudget) -> Result<AllocationResult> {
    solve_with(data, rt, budget, &SolverOptions::default())
}

pub fn solve_with(
    data: &[DataUserState],
    rt: &[RealTimeDemand],
    budget: &ResourceBudget,
    options: &SolverOptions,
) -> Result<AllocationResult> {
    if data.is_empty() && rt.is_empty() {
        return Err(SolveError::Empty);
    }
    positive_finite("total_power", budget.total_power)?;
    positive_finite("total_bandwidth", budget.total_bandwidth)?;

    let mut active: Vec<RealTimeDemand> = rt.to_vec();
    let mut originals: Vec<f64> = rt.iter().map(|d| d.rate_req).collect();
    let mut degraded: Vec<Degradation> = Vec::new();
    let mut feasible_as_given = true;
    let check = loop {
        let check = check_feasible(&active, budget)?;
        if check.is_feasible {
            break check;
        }
        feasible_as_given = false;
        let step = degrade_infeasible(&mut active, &mut originals, budget, options)?;
        match degraded.iter_mut().find(|d| d.user_id == step.user_id) {
            Some(entry) => {
                entry.reduced_rate = step.to_rate;
                entry.removed = step.removed;
                entry.rounds += 1;
            }
            None => degraded.push(Degradation {
                user_id: step.user_id,
                original_rate: step.from_rate,
                reduced_rate: step.to_rate,
                removed: step.removed,
                rounds: 1,
            }),
        }
    };

    let (dual, iterations) = if data.is_empty() {
        match check.lambda_a_floor {
            // Real-time only: meet the demands on all of W, leave power slack.
            Some(floor) => (DualPair::new(floor, 0.0), 0),
            None => (DualPair::new(0.0, 0.0), 0),
        }
    } else {
        outer_search(data, &active, budget, check, options)?
    };

    let mut shares = Vec::with_capacity(data.len() + rt.len());
    if dual.lambda_a > 0.0 {
        for u in data {
            shares.push(data_user_share(dual, u)?);
        }
    } else {
        shares.extend(data.iter().map(|u| UserShare::empty(u.user_id)));
    }
    for d in rt {
        match active.iter().find(|a| a.user_id == d.user_id) {
            Some(a) => shares.push(realtime_share(dual.lambda_a, a)?),
            None => shares.push(UserShare::empty(d.user_id)),
        }
    }

    Ok(AllocationResult {
        shares,
        feasible_as_given,
        degraded_rates: degraded,
        dual,
        iterations,
        lambda_a_floor: check.lambda_a_floor,
    })
}

/// Outer search on `Λ_a` so that `S_p(Λ_a, Λ_p^w(Λ_a)) = P`.
///
/// Works on the low side of the bracket so the returned allocation never
/// overshoots either budget.
fn outer_search(
    data: &[DataUserState],
    rt: &[RealTimeDemand],
    budget: &ResourceBudget,
    check: FeasibilityCheck,
    options: &SolverOptions,
) -> Result<(DualPair, usize)> {
    let p_total = budget.total_power;
    let w_total = budget.total_bandwidth;
    let mut evals = 0usize;

    // Power excess at Λ_a; data receive nothing at or below the floor.
    let mut excess = |lambda_a: f64| -> Result<(f64, f64)> {
        evals += 1;
        if evals > options.max_outer {
            return Err(SolveError::Numerical {
                reason: format!("outer search exceeded {} iterations", options.max_outer),
                best: None,
            });
        }
        let at = AtLambdaA::build(lambda_a, data, rt)?;
        if at.rt_bandwidth >= w_total {
            return Ok((0.0, at.rt_power - p_total));
        }
        let lambda_p = at.lambda_p_for_bandwidth(w_total, options.max_inner)?;
        let (_, s_p) = at.sums(lambda_p);
        Ok((lambda_p, s_p - p_total))
    };

    let (mut lo, mut lo_val) = match check.lambda_a_floor {
        Some(floor) => (floor, (0.0, check.power_at_floor - p_total)),
        None => {
            // Equal-split SINR of the strongest user as a starting scale.
            let n_min = data.iter().map(|u| u.noise_coeff).fold(f64::INFINITY, f64::min);
            let mut guess = (n_min * fa::f_a_unchecked(p_total / (n_min * w_total))).max(f64::MIN_POSITIVE);
            let mut val = excess(guess)?;
            while val.1 > 0.0 {
                guess *= 0.25;
                if guess == 0.0 {
                    return Err(SolveError::Numerical {
                        reason: "lambda_a underflow while bracketing".into(),
                        best: None,
                    });
                }
                val = excess(guess)?;
            }
            (guess, val)
        }
    };

    let mut hi = lo * 4.0;
    loop {
        let val = excess(hi)?;
        if val.1 > 0.0 {
            break;
        }
        lo = hi;
        lo_val = val;
        if lo_val.1.abs() <= 1e-12 * p_total {
            return Ok((DualPair::new(lo, lo_val.0), evals));
        }
        hi *= 4.0;
        if !hi.is_finite() {
            return Err(SolveError::Numerical { reason: "lambda_a overflow while bracketing".into(), best: None });
        }
    }

    loop {
        if lo_val.1.abs() <= 1e-12 * p_total {
            break;
        }
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            if lo_val.1.abs() <= 1e-7 * p_total {
                break;
            }
            return Err(SolveError::Numerical {
                reason: format!("power residual {:e} after bracket collapse", lo_val.1 / p_total),
                best: Some(DualPair::new(lo, lo_val.0)),
            });
        }
        let val = match excess(mid) {
            Ok(v) => v,
            Err(SolveError::Numerical { reason, .. }) => {
                return Err(SolveError::Numerical { reason, best: Some(DualPair::new(lo, lo_val.0)) })
            }
            Err(e) => return Err(e),
        };
        if val.1 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
            lo_val = val;
        }
    }
    Ok((DualPair::new(lo, lo_val.0), evals))
}

/// A data user's bandwidth rule at fixed SINR: `w = [Λ_p - c]⁺ · k`.
#[derive(Debug, Clone, Copy)]
struct DataTerm {
    /// `n (1+x) R α̃`
    threshold: f64,
    /// `1 / (ln(1+x) (1+x) n)`
    slope: f64,
    /// `n x`
    power_per_hz: f64,
}

impl DataTerm {
    fn new(u: &DataUserState, x: f64) -> Self {
        let one_plus = 1.0 + x;
        Self {
            threshold: u.noise_coeff * one_plus * u.handicap(),
            slope: 1.0 / (x.ln_1p() * one_plus * u.noise_coeff),
            power_per_hz: u.noise_coeff * x,
        }
    }

    #[inline]
    fn bandwidth(&self, lambda_p: f64) -> f64 {
        let excess = lambda_p - self.threshold;
        if excess > 0.0 {
            excess * self.slope
        } else {
            0.0
        }
    }
}

/// Everything about the allocation that depends on `Λ_a` alone.
struct AtLambdaA {
    lambda_a: f64,
    data: Vec<DataTerm>,
    rt_bandwidth: f64,
    rt_power: f64,
}

impl AtLambdaA {
    fn build(lambda_a: f64, data: &[DataUserState], rt: &[RealTimeDemand]) -> Result<Self> {
        if !(lambda_a.is_finite() && lambda_a > 0.0) {
            if lambda_a == 0.0 && !rt.is_empty() {
                return Err(SolveError::ZeroSinr);
            }
            return Err(SolveError::Domain(format!("lambda_a must be positive and finite, got {lambda_a}")));
        }
        let terms = data.iter().map(|u| DataTerm::new(u, f_a_inv_unchecked(lambda_a / u.noise_coeff))).collect();
        let mut rt_bandwidth = 0.0;
        let mut rt_power = 0.0;
        for d in rt {
            let s = realtime_share(lambda_a, d)?;
            rt_bandwidth += s.bandwidth;
            rt_power += s.power;
        }
        Ok(Self { lambda_a, data: terms, rt_bandwidth, rt_power })
    }

    fn data_bandwidth(&self, lambda_p: f64) -> f64 {
        self.data.iter().map(|t| t.bandwidth(lambda_p)).sum()
    }

    fn sums(&self, lambda_p: f64) -> (f64, f64) {
        let mut w = self.rt_bandwidth;
        let mut p = self.rt_power;
        for t in &self.data {
            let b = t.bandwidth(lambda_p);
            w += b;
            p += b * t.power_per_hz;
        }
        (w, p)
    }

    /// Bisection after geometric bracket growth; returns the low end so the
    /// bandwidth sum never exceeds `W`.
    fn lambda_p_for_bandwidth(&self, total_bandwidth: f64, max_iter: usize) -> Result<f64> {
        let target = total_bandwidth - self.rt_bandwidth;
        if target <= 0.0 {
            return Err(SolveError::NoDataBandwidth { lambda_a: self.lambda_a });
        }
        let mut lo = 0.0_f64;
        let mut hi = self.data.iter().map(|t| t.threshold).fold(0.0, f64::max) + 1.0;
        let mut doublings = 0;
        while self.data_bandwidth(hi) < target {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 || !hi.is_finite() {
                return Err(SolveError::Numerical {
                    reason: "lambda_p bracket growth exceeded 2^200".into(),
                    best: None,
                });
            }
        }
        let mut lo_bw = self.data_bandwidth(lo);
        for _ in 0..max_iter {
            if target - lo_bw <= 1e-13 * total_bandwidth {
                return Ok(lo);
            }
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let bw = self.data_bandwidth(mid);
            if bw <= target {
                lo = mid;
                lo_bw = bw;
            } else {
                hi = mid;
            }
        }
        if target - lo_bw <= 1e-8 * total_bandwidth {
            Ok(lo)
        } else {
            Err(SolveError::Numerical {
                reason: format!("bandwidth residual {:e} after inner search", (target - lo_bw) / total_bandwidth),
                best: None,
            })
        }
    }
}
