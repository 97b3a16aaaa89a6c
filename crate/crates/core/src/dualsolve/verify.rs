//! Optimality-certificate checks and random instance generation.
//!
//! These are the checks behind `fqpsa selftest`: every solve result is held
//! against the first-order conditions it must satisfy, independently of how
//! the search found it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_feasible, f_a, f_a_inv, lambda_p_for_bandwidth, resource_sums, solve, AllocationResult, DataUserState,
    DualPair, RealTimeDemand, ResourceBudget, Result,
};

/// Residuals of one solve result against its optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `(Σw - W) / W`, signed.
    pub bandwidth_rel: f64,
    /// `(Σp - P) / P`, signed.
    pub power_rel: f64,
    /// `max |n_i f_a(x_i) - Λ_a| / Λ_a` over users with `w_i > 0`.
    pub alignment_rel: f64,
    /// `max |w_i ln(1+x_i) - r_i| / r_i` over real-time users still served.
    pub rate_rel: f64,
    /// `max |p_i - n_i w_i x_i| / p_i` over users with `w_i > 0`.
    pub consistency_rel: f64,
    pub any_data_allocated: bool,
    pub negative_entries: usize,
}

impl KktReport {
    /// Budget equality is only required once a data user is allocated.
    pub fn budgets_met(&self, tol: f64) -> bool {
        if self.any_data_allocated {
            self.bandwidth_rel.abs() <= tol && self.power_rel.abs() <= tol
        } else {
            self.bandwidth_rel <= tol && self.power_rel <= tol
        }
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.budgets_met(tol)
            && self.alignment_rel <= tol
            && self.rate_rel <= tol
            && self.consistency_rel <= 1e-9
            && self.negative_entries == 0
    }
}

pub fn kkt_report(
    result: &AllocationResult,
    data: &[DataUserState],
    rt: &[RealTimeDemand],
    budget: &ResourceBudget,
) -> KktReport {
    let mut alignment_rel: f64 = 0.0;
    let mut consistency_rel: f64 = 0.0;
    let mut negative_entries = 0;
    let mut any_data_allocated = false;
    let noise_of = |id| {
        data.iter()
            .find(|u| u.user_id == id)
            .map(|u| u.noise_coeff)
            .or_else(|| rt.iter().find(|d| d.user_id == id).map(|d| d.noise_coeff))
    };
    for s in &result.shares {
        if s.bandwidth < 0.0 || s.power < 0.0 {
            negative_entries += 1;
        }
        if s.bandwidth <= 0.0 {
            continue;
        }
        if data.iter().any(|u| u.user_id == s.user_id) {
            any_data_allocated = true;
        }
        let n = noise_of(s.user_id).unwrap_or(f64::NAN);
        let lam = result.dual.lambda_a;
        let fa = f_a(s.eff_sinr).unwrap_or(f64::NAN);
        alignment_rel = alignment_rel.max(((n * fa - lam) / lam).abs());
        if s.power > 0.0 {
            consistency_rel = consistency_rel.max(((s.power - n * s.bandwidth * s.eff_sinr) / s.power).abs());
        }
    }
    let mut rate_rel: f64 = 0.0;
    for d in rt {
        let required = match result.degraded_rates.iter().find(|g| g.user_id == d.user_id) {
            Some(g) if g.removed => continue,
            Some(g) => g.reduced_rate,
            None => d.rate_req,
        };
        let got = result.share(d.user_id).map(|s| s.rate()).unwrap_or(0.0);
        rate_rel = rate_rel.max(((got - required) / required).abs());
    }
    KktReport {
        bandwidth_rel: (result.total_bandwidth() - budget.total_bandwidth) / budget.total_bandwidth,
        power_rel: (result.total_power() - budget.total_power) / budget.total_power,
        alignment_rel,
        rate_rel,
        consistency_rel,
        any_data_allocated,
        negative_entries,
    }
}

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub min_data: usize,
    pub max_data: usize,
    pub max_rt: usize,
    /// Width of the log-uniform noise-coefficient range, in decades.
    pub noise_decades: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self { min_data: 1, max_data: 20, max_rt: 10, noise_decades: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub data: Vec<DataUserState>,
    pub rt: Vec<RealTimeDemand>,
    pub budget: ResourceBudget,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Draws an instance whose scale and conditioning vary over several decades.
/// It may or may not be feasible.
pub fn random_instance<R: Rng>(rng: &mut R, shape: InstanceShape) -> Instance {
    let total_bandwidth = log_uniform(rng, 1e3, 1e7);
    let total_power = log_uniform(rng, 0.1, 100.0);
    let budget = ResourceBudget { total_power, total_bandwidth };
    // Centre the noise range on unit equal-split SINR.
    let n_ref = total_power / total_bandwidth;
    let half = 10f64.powf(shape.noise_decades / 2.0);
    let n_data = rng.random_range(shape.min_data..=shape.max_data);
    let n_rt = rng.random_range(0..=shape.max_rt);
    let mut id = 0u32;
    let mut data = Vec::with_capacity(n_data);
    for _ in 0..n_data {
        let noise_coeff = log_uniform(rng, n_ref / half, n_ref * half);
        let smoothing = rng.random_range(0.5..0.999);
        let alpha_tilde = smoothing / (1.0 - smoothing);
        let avg_rate =
            if rng.random_bool(0.05) { 0.0 } else { total_bandwidth * log_uniform(rng, 1e-2, 10.0) / alpha_tilde };
        data.push(DataUserState { user_id: id, noise_coeff, avg_rate, smoothing });
        id += 1;
    }
    let mut rt = Vec::with_capacity(n_rt);
    for _ in 0..n_rt {
        let noise_coeff = log_uniform(rng, n_ref / half, n_ref * half);
        let rate_req = total_bandwidth * log_uniform(rng, 1e-3, 0.3) / n_rt as f64;
        rt.push(RealTimeDemand { user_id: id, noise_coeff, rate_req });
        id += 1;
    }
    Instance { data, rt, budget }
}

/// Like [`random_instance`], but real-time rates are halved until
/// `check_feasible` passes.
pub fn random_feasible_instance<R: Rng>(rng: &mut R, shape: InstanceShape) -> Result<Instance> {
    let mut inst = random_instance(rng, shape);
    while !check_feasible(&inst.rt, &inst.budget)?.is_feasible {
        for d in &mut inst.rt {
            d.rate_req *= 0.5;
        }
    }
    Ok(inst)
}

/// Counts violations of the monotone structure the nested search relies on:
/// `S_w` nonincreasing in `Λ_a` and nondecreasing in `Λ_p`, and
/// `S_p(Λ_a, Λ_p^w(Λ_a))` nondecreasing in `Λ_a` above the feasibility floor.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    pub violations: usize,
    pub worst_rel: f64,
}

impl MonotonicityReport {
    fn record(&mut self, earlier: f64, later: f64, increasing: bool, slack: f64) {
        self.comparisons += 1;
        let scale = earlier.abs().max(later.abs()).max(f64::MIN_POSITIVE);
        let drift = if increasing { earlier - later } else { later - earlier } / scale;
        if drift > slack {
            self.violations += 1;
        }
        self.worst_rel = self.worst_rel.max(drift);
    }
}

/// Samples `points` values per sweep around the instance's own optimum.
pub fn monotonicity(inst: &Instance, points: usize, slack: f64) -> Result<MonotonicityReport> {
    let mut report = MonotonicityReport::default();
    let sol = solve(&inst.data, &inst.rt, &inst.budget)?;
    let centre = sol.dual;
    let floor = sol.lambda_a_floor.unwrap_or(0.0);
    let grid = |k: usize| 10f64.powf(-2.0 + 4.0 * k as f64 / (points - 1).max(1) as f64);

    // S_w along Λ_a at fixed Λ_p, and along Λ_p at fixed Λ_a.
    let mut prev: Option<f64> = None;
    for k in 0..points {
        let (w, _) = resource_sums(DualPair::new(centre.lambda_a * grid(k), centre.lambda_p), &inst.data, &inst.rt)?;
        if let Some(p) = prev {
            report.record(p, w, false, slack);
        }
        prev = Some(w);
    }
    prev = None;
    for k in 0..points {
        let (w, _) = resource_sums(DualPair::new(centre.lambda_a, centre.lambda_p * grid(k)), &inst.data, &inst.rt)?;
        if let Some(p) = prev {
            report.record(p, w, true, slack);
        }
        prev = Some(w);
    }

    // S_p on the bandwidth-tight curve, from just above the floor upwards.
    if !inst.data.is_empty() {
        let start = if floor > 0.0 { floor * (1.0 + 1e-6) } else { centre.lambda_a * 1e-2 };
        let stop = centre.lambda_a.max(start) * 1e2;
        prev = None;
        for k in 0..points {
            let t = k as f64 / (points - 1).max(1) as f64;
            let lambda_a = start * (stop / start).powf(t);
            let lambda_p = lambda_p_for_bandwidth(lambda_a, &inst.data, &inst.rt, inst.budget.total_bandwidth)?;
            let (_, s_p) = resource_sums(DualPair::new(lambda_a, lambda_p), &inst.data, &inst.rt)?;
            if let Some(p) = prev {
                report.record(p, s_p, true, slack);
            }
            prev = Some(s_p);
        }
    }
    Ok(report)
}

/// Outcome of one invariant family in [`selftest`].
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    /// Largest observed residual, in the family's own relative units.
    pub worst: f64,
}

impl FamilyOutcome {
    fn new(name: &'static str) -> Self {
        Self { name, checked: 0, failures: 0, worst: 0.0 }
    }

    fn observe(&mut self, residual: f64, tol: f64) {
        self.checked += 1;
        if residual.is_nan() || residual > tol {
            self.failures += 1;
        }
        if residual.is_nan() || residual > self.worst {
            self.worst = residual;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Runs every solver invariant family on `instances` random problems.
pub fn selftest(seed: u64, instances: usize) -> Vec<FamilyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget_eq = FamilyOutcome::new("budget equality");
    let mut align = FamilyOutcome::new("sinr alignment");
    let mut rates = FamilyOutcome::new("rate constraints");
    let mut fa_shape = FamilyOutcome::new("f_a monotone convex");
    let mut round_trip = FamilyOutcome::new("f_a round trip");
    let mut mono = FamilyOutcome::new("sum monotonicity");
    let mut equal_noise = FamilyOutcome::new("equal-noise equalization");
    let mut scale = FamilyOutcome::new("scale covariance");
    let mut degrade = FamilyOutcome::new("degradation terminates");

    for i in 0..instances {
        // f_a shape on a random pair.
        let a = rng.random_range(0.0..1e6);
        let b = rng.random_range(0.0..1e6);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let (fa_a, fa_b, fa_mid) = (f_a(a).unwrap(), f_a(b).unwrap(), f_a(0.5 * (a + b)).unwrap());
        let convex_gap = (fa_mid - 0.5 * (fa_a + fa_b)) / fa_b.max(1.0);
        fa_shape.observe(if a < b && fa_a < fa_b { convex_gap.max(0.0) } else { f64::INFINITY }, 1e-12);

        let x = log_uniform(&mut rng, 1e-6, 1e5);
        let back = f_a_inv(f_a(x).unwrap()).unwrap();
        round_trip.observe((back - x).abs() / x.max(1.0), 1e-9);

        let inst = match random_feasible_instance(&mut rng, InstanceShape::default()) {
            Ok(inst) => inst,
            Err(_) => {
                budget_eq.observe(f64::INFINITY, 0.0);
                continue;
            }
        };
        match solve(&inst.data, &inst.rt, &inst.budget) {
            Ok(sol) => {
                let k = kkt_report(&sol, &inst.data, &inst.rt, &inst.budget);
                budget_eq.observe(
                    if k.budgets_met(1e-6) { 0.0 } else { k.bandwidth_rel.abs().max(k.power_rel.abs()) },
                    1e-6,
                );
                align.observe(k.alignment_rel, 1e-6);
                rates.observe(k.rate_rel, 1e-6);

                let c = log_uniform(&mut rng, 1e-3, 1e3);
                let scaled = scale_instance(&inst, c);
                match solve(&scaled.data, &scaled.rt, &scaled.budget) {
                    Ok(s2) => {
                        let mut worst: f64 = 0.0;
                        for (u, v) in sol.shares.iter().zip(&s2.shares) {
                            worst = worst
                                .max(rel(u.bandwidth * c, v.bandwidth))
                                .max(rel(u.power * c, v.power))
                                .max(if u.bandwidth > 0.0 { rel(u.eff_sinr, v.eff_sinr) } else { 0.0 });
                        }
                        scale.observe(worst, 1e-6);
                    }
                    Err(_) => scale.observe(f64::INFINITY, 1e-6),
                }
            }
            Err(_) => budget_eq.observe(f64::INFINITY, 1e-6),
        }

        if i % 10 == 0 {
            let small = InstanceShape { min_data: 1, max_data: 5, max_rt: 3, noise_decades: 4.0 };
            if let Ok(inst) = random_feasible_instance(&mut rng, small) {
                match monotonicity(&inst, 20, 1e-9) {
                    Ok(m) => mono.observe(m.violations as f64, 0.0),
                    Err(_) => mono.observe(f64::INFINITY, 0.0),
                }
            }

            let mut same = random_instance(&mut rng, InstanceShape { max_rt: 3, ..InstanceShape::default() });
            let n = same.data[0].noise_coeff;
            same.data.iter_mut().for_each(|u| u.noise_coeff = n);
            same.rt.iter_mut().for_each(|d| d.noise_coeff = n);
            while !check_feasible(&same.rt, &same.budget).map(|c| c.is_feasible).unwrap_or(false) {
                same.rt.iter_mut().for_each(|d| d.rate_req *= 0.5);
            }
            let target = same.budget.total_power / (n * same.budget.total_bandwidth);
            match solve(&same.data, &same.rt, &same.budget) {
                Ok(sol) => {
                    let worst = sol
                        .shares
                        .iter()
                        .filter(|s| s.bandwidth > 0.0)
                        .map(|s| rel(target, s.eff_sinr))
                        .fold(0.0, f64::max);
                    equal_noise.observe(worst, 1e-6);
                }
                Err(_) => equal_noise.observe(f64::INFINITY, 1e-6),
            }

            // Overloaded real-time set: every demand must be cut or dropped in
            // at most ten rounds per demand.
            let mut heavy = random_instance(&mut rng, InstanceShape { max_rt: 10, ..InstanceShape::default() });
            if heavy.rt.is_empty() {
                heavy.rt.push(RealTimeDemand {
                    user_id: 10_000,
                    noise_coeff: heavy.data[0].noise_coeff,
                    rate_req: 1.0,
                });
            }
            heavy.rt.iter_mut().for_each(|d| d.rate_req *= 50.0);
            match solve(&heavy.data, &heavy.rt, &heavy.budget) {
                Ok(sol) => {
                    let rounds: u32 = sol.degraded_rates.iter().map(|d| d.rounds).sum();
                    let bound = 10 * heavy.rt.len() as u32;
                    degrade.observe(if rounds <= bound { 0.0 } else { rounds as f64 }, 0.0);
                }
                Err(_) => degrade.observe(f64::INFINITY, 0.0),
            }
        }
    }
    vec![budget_eq, align, rates, fa_shape, round_trip, mono, equal_noise, scale, degrade]
}

fn rel(expected: f64, got: f64) -> f64 {
    if expected == got {
        0.0
    } else {
        (expected - got).abs() / expected.abs().max(got.abs())
    }
}

/// Multiplies power, bandwidth, real-time rates and data average rates by `c`.
///
/// The averaged rates have to scale with the budgets: the data objective
/// depends on `w ln(1+x) / R`, so only then is the problem a pure rescaling.
pub fn scale_instance(inst: &Instance, c: f64) -> Instance {
    Instance {
        data: inst.data.iter().map(|u| DataUserState { avg_rate: u.avg_rate * c, ..*u }).collect(),
        rt: inst.rt.iter().map(|d| RealTimeDemand { rate_req: d.rate_req * c, ..*d }).collect(),
        budget: inst.budget.scaled(c),
    }
}
