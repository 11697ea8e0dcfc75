//! Random instance generators and brute-force oracles shared by the
//! integration suites.
#![allow(dead_code)]

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storage_fleet::{FleetState, Scheduler, StepDecision, StoreSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_store(rng: &mut ChaCha8Rng, name: &str, unbounded_output: bool) -> StoreSpec {
    let e = rng.gen_range(1.0..100.0);
    let p = if unbounded_output {
        f64::INFINITY
    } else {
        rng.gen_range(0.5..30.0)
    };
    let q = rng.gen_range(0.5..30.0);
    let eta = if rng.gen_bool(0.15) {
        1.0
    } else {
        rng.gen_range(0.3..1.0)
    };
    StoreSpec::new(name, e, p, q, eta)
}

pub fn random_fleet(rng: &mut ChaCha8Rng, n: usize, unbounded_output: bool) -> Vec<StoreSpec> {
    (0..n)
        .map(|i| random_store(rng, &format!("s{i}"), unbounded_output))
        .collect()
}

pub fn random_levels(rng: &mut ChaCha8Rng, fleet: &[StoreSpec]) -> FleetState {
    FleetState::new(
        fleet
            .iter()
            .map(|s| match rng.gen_range(0..7) {
                0 => 0.0,
                1 => s.capacity_mwh,
                _ => rng.gen_range(0.0..s.capacity_mwh),
            })
            .collect(),
    )
}

pub fn random_re(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if rng.gen_bool(0.05) {
        0.0
    } else {
        rng.gen_range(-scale..scale)
    }
}

pub fn random_trace(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| random_re(rng, scale)).collect()
}

/// Energy drawn from outside per unit rate: 1 when discharging, 1/η when
/// charging.
fn weight(rate_positive: bool, eta: f64) -> f64 {
    if rate_positive {
        1.0 / eta
    } else {
        1.0
    }
}

/// Per-store rate bounds for the given sign pattern bit.
fn orthant_bounds(level: f64, spec: &StoreSpec, positive: bool) -> (f64, f64) {
    if positive {
        (
            0.0,
            (spec.capacity_mwh - level).min(spec.efficiency * spec.input_power_mw),
        )
    } else {
        (-(level.min(spec.output_power_mw)), 0.0)
    }
}

/// Maximum of Σ v_i r_i over feasible rates with imbalance exactly `u`,
/// by enumerating the vertices of each sign orthant.
pub fn lp_oracle(levels: &[f64], fleet: &[StoreSpec], re: f64, v: &[f64], u: f64) -> Option<f64> {
    let n = fleet.len();
    let target = re - u;
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << n) {
        let pos: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let bounds: Vec<(f64, f64)> = (0..n)
            .map(|i| orthant_bounds(levels[i], &fleet[i], pos[i]))
            .collect();
        let a: Vec<f64> = (0..n)
            .map(|i| weight(pos[i], fleet[i].efficiency))
            .collect();
        for free in 0..n {
            for corner in 0..(1u32 << (n - 1)) {
                let mut r = vec![0.0; n];
                let mut k = 0;
                let mut acc = 0.0;
                for i in 0..n {
                    if i == free {
                        continue;
                    }
                    r[i] = if corner >> k & 1 == 1 {
                        bounds[i].1
                    } else {
                        bounds[i].0
                    };
                    acc += a[i] * r[i];
                    k += 1;
                }
                let rf = (target - acc) / a[free];
                let eps = 1e-9 * (1.0 + target.abs());
                if rf < bounds[free].0 - eps || rf > bounds[free].1 + eps {
                    continue;
                }
                r[free] = rf.clamp(bounds[free].0, bounds[free].1);
                let obj: f64 = r.iter().zip(v).map(|(r, v)| r * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.max(obj)));
            }
        }
    }
    best
}

/// Smallest |u| attainable by any feasible rate vector, respecting the
/// sign rule tying u to re.
pub fn min_abs_imbalance(levels: &[f64], fleet: &[StoreSpec], re: f64) -> f64 {
    let n = fleet.len();
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << n) {
        let (mut umin, mut umax) = (re, re);
        for i in 0..n {
            let positive = mask >> i & 1 == 1;
            let (lo, hi) = orthant_bounds(levels[i], &fleet[i], positive);
            let a = weight(positive, fleet[i].efficiency);
            umin -= a * hi;
            umax -= a * lo;
        }
        let (lo, hi) = if re > 0.0 {
            (umin.max(0.0), umax)
        } else if re < 0.0 {
            (umin, umax.min(0.0))
        } else {
            (umin.max(0.0), umax.min(0.0))
        };
        if lo > hi + 1e-12 {
            continue;
        }
        let m = if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            lo.abs().min(hi.abs())
        };
        best = best.min(m);
    }
    best
}

/// A greedy policy that, without cross-charging, hands external energy to
/// stores in a random order with random partial shares, then tops stores
/// up to their limits in the same order.
pub struct RandomGreedy {
    rng: RefCell<ChaCha8Rng>,
}

impl RandomGreedy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: RefCell::new(rng(seed)),
        }
    }
}

impl Scheduler for RandomGreedy {
    fn decide(&self, state: &FleetState, re: f64, fleet: &[StoreSpec]) -> StepDecision {
        let mut rng = self.rng.borrow_mut();
        let n = fleet.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut *rng);
        let mut rates = vec![0.0; n];
        let mut remaining = re.abs();
        let limit = |i: usize| -> f64 {
            let s = &fleet[i];
            if re >= 0.0 {
                s.max_charge(state.levels[i]) / s.efficiency
            } else {
                s.max_discharge(state.levels[i])
            }
        };
        let mut taken = vec![0.0; n];
        for &i in &order {
            let x = (rng.gen::<f64>() * limit(i)).min(remaining);
            taken[i] += x;
            remaining -= x;
        }
        for &i in &order {
            let x = (limit(i) - taken[i]).max(0.0).min(remaining);
            taken[i] += x;
            remaining -= x;
        }
        for i in 0..n {
            rates[i] = if re >= 0.0 {
                fleet[i].efficiency * taken[i]
            } else {
                -taken[i]
            };
        }
        StepDecision::from_rates(re, rates, fleet)
    }
}

/// Random rates satisfying the box, capacity and imbalance-sign
/// constraints at every hour; not greedy in general.
pub fn random_feasible_policy(
    rng: &mut ChaCha8Rng,
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
) -> Vec<Vec<f64>> {
    let mut levels = initial.levels.clone();
    let mut out = Vec::with_capacity(trace.len());
    for &re in trace {
        let mut r: Vec<f64> = fleet
            .iter()
            .zip(&levels)
            .map(|(s, &l)| {
                let lo = -s.max_discharge(l);
                let hi = s.max_charge(l);
                match rng.gen_range(0..6) {
                    0 => 0.0,
                    1 => lo,
                    2 => hi,
                    _ => rng.gen_range(lo..=hi),
                }
            })
            .collect();
        let drawn: f64 = r
            .iter()
            .zip(fleet)
            .map(|(r, s)| if *r >= 0.0 { r / s.efficiency } else { *r })
            .sum();
        // scaling every rate by α scales `drawn` by α
        let violates = (re >= 0.0 && drawn > re) || (re <= 0.0 && drawn < re);
        if violates {
            let alpha = (re / drawn) * (1.0 - 1e-12);
            for x in r.iter_mut() {
                *x *= alpha;
            }
        }
        for ((l, x), s) in levels.iter_mut().zip(&r).zip(fleet) {
            *l = (*l + x).clamp(0.0, s.capacity_mwh);
        }
        out.push(r);
    }
    out
}

/// A fleet and per-hour outcome simulated in the split-efficiency
/// convention: stored energy is counted before the output loss, charging
/// stores √η per unit input and discharging d removing d/√η.
pub struct SplitStore {
    pub capacity: f64,
    pub level: f64,
    pub output: f64,
    pub input: f64,
    pub efficiency: f64,
}

impl SplitStore {
    fn half(&self) -> f64 {
        self.efficiency.sqrt()
    }

    fn servable(&self) -> f64 {
        self.level * self.half()
    }

    fn headroom_input(&self) -> f64 {
        ((self.capacity - self.level) / self.half()).min(self.input)
    }

    fn max_delivery(&self) -> f64 {
        self.servable().min(self.output)
    }
}

pub enum SplitOrder {
    Efficiency,
    Duration,
}

/// Spill and unserved per hour for a priority policy without cross-charging.
pub fn split_convention_run(
    stores: &mut [SplitStore],
    trace: &[f64],
    order: SplitOrder,
) -> Vec<(f64, f64)> {
    let n = stores.len();
    trace
        .iter()
        .map(|&re| {
            let mut idx: Vec<usize> = (0..n).collect();
            let key = |i: usize, st: &[SplitStore]| -> f64 {
                match order {
                    SplitOrder::Efficiency => st[i].efficiency,
                    SplitOrder::Duration if re < 0.0 => st[i].servable() / st[i].output,
                    SplitOrder::Duration => {
                        (st[i].capacity * st[i].half() - st[i].servable()) / st[i].output
                    }
                }
            };
            // keys equal to about twelve digits are ties, broken by index
            let keys: Vec<f64> = (0..n)
                .map(|i| f64::from_bits((key(i, stores).to_bits() + (1 << 11)) >> 12 << 12))
                .collect();
            idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
            let mut remaining = re.abs();
            for i in idx {
                let st = &mut stores[i];
                if re >= 0.0 {
                    let x = st.headroom_input().min(remaining);
                    st.level = (st.level + x * st.half()).min(st.capacity);
                    remaining -= x;
                } else {
                    let d = st.max_delivery().min(remaining);
                    st.level = (st.level - d / st.half()).max(0.0);
                    remaining -= d;
                }
            }
            if re >= 0.0 {
                (remaining, 0.0)
            } else {
                (0.0, remaining)
            }
        })
        .collect()
}

pub fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
