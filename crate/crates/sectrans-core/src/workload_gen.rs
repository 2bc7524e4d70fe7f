//! Synthetic automotive workloads and the three-plant case-study platform.
//!
//! Periods follow the redistributed automotive benchmark shares: one column
//! for preemptive ECU workload, one for CAN traffic (which has no 1000 ms
//! row). Times are in microseconds at the system's resolution.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::utilization;
use crate::model::{AuthPolicy, ControlTransaction, Ecu, Link, ModelError, SecureTask, SystemModel, TaskId, TaskKind};
use crate::time::{Resolution, Tick};

/// Share of preemptive workload per period in milliseconds.
pub const ECU_SHARES: [(i64, f64); 7] =
    [(5, 0.025), (10, 0.3125), (20, 0.3125), (50, 0.0375), (100, 0.25), (200, 0.0125), (1000, 0.05)];

/// Share of bus workload per period in milliseconds.
pub const BUS_SHARES: [(i64, f64); 6] =
    [(5, 0.0263), (10, 0.3289), (20, 0.3289), (50, 0.0395), (100, 0.2632), (200, 0.0132)];

/// Payload of a full-size classic CAN frame; a 64-bit MAC fills one too.
pub const FULL_PAYLOAD_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator settings: {0}")]
    InvalidSpec(String),
    #[error("target unreachable: {0}")]
    Unreachable(String),
    #[error("bus rate must be positive")]
    ZeroRate,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Worst-case length in bits of a standard-identifier CAN frame with
/// `payload_bits` of data, including worst-case bit stuffing.
pub fn frame_bits(payload_bits: u32) -> u32 {
    let bytes = payload_bits.div_ceil(8);
    let stuffable = 34 + 8 * bytes;
    stuffable + 13 + (stuffable - 1) / 4
}

/// Frame duration in microseconds before rounding to ticks.
pub fn frame_time_us(payload_bits: u32, rate_bps: u64) -> Result<f64, GenError> {
    if rate_bps == 0 {
        return Err(GenError::ZeroRate);
    }
    if payload_bits > FULL_PAYLOAD_BITS {
        return Err(GenError::InvalidSpec(format!("payload of {payload_bits} bits exceeds one frame")));
    }
    Ok(f64::from(frame_bits(payload_bits)) * 1e6 / rate_bps as f64)
}

/// Worst-case frame duration in ticks (microsecond units), rounded up.
pub fn frame_time(payload_bits: u32, rate_bps: u64, resolution: Resolution) -> Result<Tick, GenError> {
    Ok(resolution.to_ticks_ceil(frame_time_us(payload_bits, rate_bps)?))
}

fn ms(resolution: Resolution, period_ms: i64) -> Tick {
    period_ms * 1000 * i64::from(resolution.ticks_per_unit())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub n_transactions: usize,
    pub ecu_count: usize,
    pub target_ecu_utilization: f64,
    pub target_bus_utilization: f64,
    /// Fixed bus rate; background frames are then added until the target is met.
    /// When unset the rate is chosen to meet the target.
    pub bus_rate: Option<u64>,
    /// Fraction of tasks and messages that belong to control transactions.
    pub qoc_share: f64,
    pub l_range: (u32, u32),
    pub f_range: (u32, u32),
    /// Extended ECU execution is `ceil((1 + overhead) · c)`.
    pub ecu_auth_overhead: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_transactions: 10,
            ecu_count: 4,
            target_ecu_utilization: 0.5,
            target_bus_utilization: 0.5,
            bus_rate: None,
            qoc_share: 0.25,
            l_range: (1, 5),
            f_range: (1, 3),
            ecu_auth_overhead: 0.5,
            seed: 0,
        }
    }
}

impl GenSpec {
    fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        if self.n_transactions == 0 || self.ecu_count == 0 {
            return bad("need at least one transaction and one ECU");
        }
        for u in [self.target_ecu_utilization, self.target_bus_utilization] {
            if !(u > 0.0 && u <= 1.0) {
                return bad("utilization targets must lie in (0, 1]");
            }
        }
        if !(0.25..=0.5).contains(&self.qoc_share) {
            return bad("qoc_share must lie in [0.25, 0.5]");
        }
        let (l0, l1) = self.l_range;
        let (f0, f1) = self.f_range;
        if l0 == 0 || l0 > l1 || f0 == 0 || f0 > f1 || f0 > l1 {
            return bad("l and f ranges must be nonempty, start at 1 or more, and allow f <= l");
        }
        if !(self.ecu_auth_overhead >= 0.0) {
            return bad("authentication overhead must be nonnegative");
        }
        Ok(())
    }
}

fn sample_periods<R: Rng>(rng: &mut R, column: &[(i64, f64)], n: usize) -> Vec<i64> {
    let dist = WeightedIndex::new(column.iter().map(|c| c.1)).expect("positive shares");
    (0..n).map(|_| column[dist.sample(rng)].0).collect()
}

/// Splits `total` into `n` shares uniformly over the simplex.
pub fn uunifast<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut left = total;
    for i in 1..n {
        let r: f64 = rng.random();
        let next = left * libm::pow(r, 1.0 / (n - i) as f64);
        out.push(left - next);
        left = next;
    }
    if n > 0 {
        out.push(left);
    }
    out
}

/// Regular execution time that gives utilization `u`, counting the
/// authentication overhead of `f` out of every `l` jobs.
fn wcet_for(u: f64, p: Tick, auth: Option<(u32, u32)>, overhead: f64) -> Tick {
    let factor = match auth {
        Some((l, f)) => 1.0 + overhead * f64::from(f) / f64::from(l),
        None => 1.0,
    };
    (libm::round(u * p as f64 / factor) as Tick).max(1)
}

fn extended(c: Tick, overhead: f64) -> Tick {
    (libm::ceil((1.0 + overhead) * c as f64) as Tick).max(c)
}

struct Draft {
    p: Tick,
    l: u32,
    f: u32,
    sens_ecu: usize,
    ctrl_ecu: usize,
}

/// Randomly generated system: control transactions with open offsets,
/// deadlines and authentication offsets, plus background tasks and frames.
pub fn generate(spec: &GenSpec) -> Result<SystemModel, GenError> {
    spec.check()?;
    let res = Resolution::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let periods = sample_periods(&mut rng, &BUS_SHARES, spec.n_transactions);
    let mut drafts = Vec::new();
    for p in periods {
        let l = rng.random_range(spec.l_range.0.max(spec.f_range.0)..=spec.l_range.1);
        let f = rng.random_range(spec.f_range.0..=spec.f_range.1.min(l));
        let sens_ecu = rng.random_range(0..spec.ecu_count);
        let ctrl_ecu = if spec.ecu_count > 1 {
            (sens_ecu + rng.random_range(1..spec.ecu_count)) % spec.ecu_count
        } else {
            0
        };
        drafts.push(Draft { p: ms(res, p), l, f, sens_ecu, ctrl_ecu });
    }

    // background counts so that transactions make up qoc_share of the tasks
    let ratio = (1.0 - spec.qoc_share) / spec.qoc_share;
    let mut qoc_on = vec![0usize; spec.ecu_count];
    for d in &drafts {
        qoc_on[d.sens_ecu] += 1;
        qoc_on[d.ctrl_ecu] += 1;
    }
    let avg = libm::round(2.0 * spec.n_transactions as f64 * ratio / spec.ecu_count as f64).max(1.0) as usize;
    let bg_on: Vec<usize> = qoc_on
        .iter()
        .map(|&k| if k == 0 { avg } else { (libm::round(k as f64 * ratio) as usize).max(1) })
        .collect();

    // per-ECU utilization split over transaction tasks first, then background
    let mut sens_c = vec![0; drafts.len()];
    let mut ctrl_c = vec![0; drafts.len()];
    let mut background = Vec::new();
    let mut ecus: Vec<Ecu> = (0..spec.ecu_count).map(|j| Ecu { id: j as u32, tasks: Vec::new() }).collect();
    let mut bg_ecu_tasks: Vec<Vec<SecureTask>> = vec![Vec::new(); spec.ecu_count];
    let mut next_id = 3 * drafts.len() as TaskId;
    for j in 0..spec.ecu_count {
        let mine: Vec<(usize, bool)> = drafts
            .iter()
            .enumerate()
            .flat_map(|(i, d)| [(i, d.sens_ecu == j, true), (i, d.ctrl_ecu == j, false)])
            .filter(|x| x.1)
            .map(|(i, _, sens)| (i, sens))
            .collect();
        let bg_periods = sample_periods(&mut rng, &ECU_SHARES, bg_on[j]);
        let shares = uunifast(&mut rng, mine.len() + bg_periods.len(), spec.target_ecu_utilization);
        for (&(i, sens), &u) in mine.iter().zip(&shares) {
            let d = &drafts[i];
            let c = wcet_for(u, d.p, Some((d.l, if sens { d.f } else { 1 })), spec.ecu_auth_overhead);
            if sens {
                sens_c[i] = c;
            } else {
                ctrl_c[i] = c;
            }
        }
        for (&p, &u) in bg_periods.iter().zip(&shares[mine.len()..]) {
            let p = ms(res, p);
            let t = SecureTask::implicit(next_id, TaskKind::Background, wcet_for(u, p, None, 0.0), p);
            next_id += 1;
            bg_ecu_tasks[j].push(t);
        }
    }

    // bus: one frame per sensor message, plus one MAC frame per authentication block
    let mut transactions = Vec::new();
    let frame_weight: f64 = drafts.iter().map(|d| (1.0 + 1.0 / f64::from(d.l)) / d.p as f64).sum();
    let (rate, bg_bus) = match spec.bus_rate {
        None => {
            let n_bg = libm::round(spec.n_transactions as f64 * ratio) as usize;
            let bg: Vec<Tick> = sample_periods(&mut rng, &BUS_SHARES, n_bg).into_iter().map(|p| ms(res, p)).collect();
            let per_tick: f64 = frame_weight + bg.iter().map(|&p| 1.0 / p as f64).sum::<f64>();
            // ticks per frame that meet the target, then the slowest rate giving it
            let ticks = libm::floor(spec.target_bus_utilization / per_tick).max(1.0);
            let us = ticks / f64::from(res.ticks_per_unit());
            let rate = libm::ceil(f64::from(frame_bits(FULL_PAYLOAD_BITS)) * 1e6 / us) as u64;
            (rate, bg)
        }
        Some(rate) => {
            let c = frame_time(FULL_PAYLOAD_BITS, rate, res)? as f64;
            let mut u = frame_weight * c;
            if u > spec.target_bus_utilization * 1.02 {
                return Err(GenError::Unreachable(format!(
                    "transaction messages alone load the bus to {u:.3} at {rate} bit/s"
                )));
            }
            let mut bg = Vec::new();
            loop {
                let p = ms(res, sample_periods(&mut rng, &BUS_SHARES, 1)[0]);
                if u + c / p as f64 > spec.target_bus_utilization {
                    break;
                }
                u += c / p as f64;
                bg.push(p);
            }
            let slowest = ms(res, BUS_SHARES[BUS_SHARES.len() - 1].0);
            while u + c / slowest as f64 <= spec.target_bus_utilization {
                u += c / slowest as f64;
                bg.push(slowest);
            }
            (rate, bg)
        }
    };
    let frame = frame_time(FULL_PAYLOAD_BITS, rate, res)?;
    if let Some(d) = drafts.iter().find(|d| 2 * frame > d.p) {
        return Err(GenError::Unreachable(format!("a frame with its MAC does not fit a period of {} ticks", d.p)));
    }

    let mut bus = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        let id = 3 * i as TaskId;
        let sens = SecureTask::new(id, TaskKind::Sensing, sens_c[i], d.p).with_ext(extended(sens_c[i], spec.ecu_auth_overhead));
        let net = SecureTask::new(id + 1, TaskKind::Message, frame, d.p).with_ext(2 * frame);
        let ctrl = SecureTask::new(id + 2, TaskKind::Control, ctrl_c[i], d.p).with_ext(extended(ctrl_c[i], spec.ecu_auth_overhead));
        let tx = ControlTransaction::assemble(
            i as u32,
            &format!("plant{i}"),
            sens,
            net,
            ctrl,
            AuthPolicy::open(d.f, d.l),
            Link::default(),
        )?;
        ecus[d.sens_ecu].tasks.push(id);
        ecus[d.ctrl_ecu].tasks.push(id + 2);
        bus.push(id + 1);
        transactions.push(tx);
    }
    for (j, tasks) in bg_ecu_tasks.into_iter().enumerate() {
        for t in tasks {
            ecus[j].tasks.push(t.id);
            background.push(t);
        }
    }
    for p in bg_bus {
        let t = SecureTask::implicit(next_id, TaskKind::Background, frame, p);
        next_id += 1;
        bus.push(t.id);
        background.push(t);
    }
    Ok(SystemModel { resolution: res, ecus, bus, transactions, background, c_max_nrt: 0 })
}

/// Realized long-run utilization of every ECU (by id order) and of the bus.
pub fn realized_utilization(system: &SystemModel) -> (Vec<f64>, f64) {
    let ecu = system.ecus.iter().map(|e| utilization(&system.tasks_on(crate::model::Resource::Ecu(e.id)))).collect();
    (ecu, utilization(&system.bus_messages()))
}

/// One control plant of the case study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasePlant {
    pub plant_id: String,
    pub l: u32,
    pub f: u32,
    /// Sensor frames per sample.
    pub frames: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyOptions {
    pub plants: Vec<CasePlant>,
    pub period_ms: i64,
    pub ecu_count: usize,
    pub background_frames: usize,
    pub background_tasks_per_ecu: usize,
    pub ecu_utilization: f64,
    pub bus_rate: u64,
    pub sensing_wcet_us: f64,
    pub control_wcet_us: f64,
    pub ecu_auth_overhead: f64,
    pub seed: u64,
}

impl Default for CaseStudyOptions {
    fn default() -> Self {
        let plant = |id: &str, l, f, frames| CasePlant { plant_id: id.to_string(), l, f, frames };
        CaseStudyOptions {
            plants: vec![plant("ACC", 5, 3, 2), plant("LK", 10, 2, 4), plant("DM", 10, 1, 2)],
            period_ms: 20,
            ecu_count: 8,
            background_frames: 70,
            background_tasks_per_ecu: 8,
            ecu_utilization: 0.5,
            bus_rate: 1_000_000,
            sensing_wcet_us: 200.0,
            control_wcet_us: 500.0,
            ecu_auth_overhead: 0.5,
            seed: 1,
        }
    }
}

/// Splits `n` items over the share column by largest remainder.
pub fn apportion(n: usize, column: &[(i64, f64)]) -> Vec<(i64, usize)> {
    let total: f64 = column.iter().map(|c| c.1).sum();
    let exact: Vec<f64> = column.iter().map(|c| n as f64 * c.1 / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&x| libm::floor(x) as usize).collect();
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - libm::floor(exact[b])).total_cmp(&(exact[a] - libm::floor(exact[a]))));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    column.iter().zip(counts).map(|(c, k)| (c.0, k)).collect()
}

/// Three control plants at a shared period, their sensing tasks on separate
/// ECUs, their controllers on three more, every ECU loaded with background
/// tasks and the bus with background frames, all per the benchmark shares.
pub fn case_study(opts: &CaseStudyOptions) -> Result<SystemModel, GenError> {
    let k = opts.plants.len();
    if opts.ecu_count < 2 * k {
        return Err(GenError::InvalidSpec(format!("{} plants need {} ECUs", k, 2 * k)));
    }
    let res = Resolution::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p = ms(res, opts.period_ms);
    let frame = frame_time(FULL_PAYLOAD_BITS, opts.bus_rate, res)?;
    let c_sens = res.to_ticks_ceil(opts.sensing_wcet_us);
    let c_ctrl = res.to_ticks_ceil(opts.control_wcet_us);

    let mut ecus: Vec<Ecu> = (0..opts.ecu_count).map(|j| Ecu { id: j as u32, tasks: Vec::new() }).collect();
    let mut transactions = Vec::new();
    let mut bus = Vec::new();
    for (i, plant) in opts.plants.iter().enumerate() {
        let id = 3 * i as TaskId;
        let c_net = frame * Tick::from(plant.frames);
        let sens = SecureTask::new(id, TaskKind::Sensing, c_sens, p).with_ext(extended(c_sens, opts.ecu_auth_overhead));
        let net = SecureTask::new(id + 1, TaskKind::Message, c_net, p).with_ext(2 * c_net);
        let ctrl = SecureTask::new(id + 2, TaskKind::Control, c_ctrl, p).with_ext(extended(c_ctrl, opts.ecu_auth_overhead));
        let policy = AuthPolicy::open(plant.f, plant.l);
        transactions.push(ControlTransaction::assemble(i as u32, &plant.plant_id, sens, net, ctrl, policy, Link::default())?);
        ecus[k + i].tasks.push(id);
        ecus[i].tasks.push(id + 2);
        bus.push(id + 1);
    }

    let mut background = Vec::new();
    let mut next_id = 3 * k as TaskId;
    for ecu in &mut ecus {
        let own: Vec<&SecureTask> = transactions.iter().flat_map(|tx| tx.tasks()).filter(|t| ecu.tasks.contains(&t.id)).collect();
        let used: f64 = own.iter().map(|t| utilization(&[(*t).clone()])).sum();
        let budget = opts.ecu_utilization - used;
        if budget <= 0.0 {
            return Err(GenError::Unreachable(format!("ECU {} is already at {used:.3}", ecu.id)));
        }
        let periods = sample_periods(&mut rng, &ECU_SHARES, opts.background_tasks_per_ecu);
        let shares = uunifast(&mut rng, periods.len(), budget);
        for (&pm, &u) in periods.iter().zip(&shares) {
            let tp = ms(res, pm);
            let t = SecureTask::implicit(next_id, TaskKind::Background, wcet_for(u, tp, None, 0.0), tp);
            next_id += 1;
            ecu.tasks.push(t.id);
            background.push(t);
        }
    }
    for (pm, n) in apportion(opts.background_frames, &BUS_SHARES) {
        for _ in 0..n {
            let t = SecureTask::implicit(next_id, TaskKind::Background, frame, ms(res, pm));
            next_id += 1;
            bus.push(t.id);
            background.push(t);
        }
    }
    Ok(SystemModel { resolution: res, ecus, bus, transactions, background, c_max_nrt: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_frame_at_one_megabit() {
        assert_eq!(frame_bits(64), 135);
        assert_eq!(frame_time(64, 1_000_000, Resolution::default()), Ok(1350));
        let slow = frame_time_us(64, 500_000).unwrap();
        let fast = frame_time_us(64, 1_000_000).unwrap();
        assert_eq!(slow, 2.0 * fast);
        assert_eq!(frame_time(0, 0, Resolution::default()), Err(GenError::ZeroRate));
    }

    #[test]
    fn shares_sum_to_one() {
        let ecu: f64 = ECU_SHARES.iter().map(|s| s.1).sum();
        let bus: f64 = BUS_SHARES.iter().map(|s| s.1).sum();
        assert!((ecu - 1.0).abs() < 1e-9);
        assert!((bus - 1.0).abs() < 1e-3);
    }

    #[test]
    fn seventy_frames_by_largest_remainder() {
        let a = apportion(70, &BUS_SHARES);
        assert_eq!(a, vec![(5, 2), (10, 23), (20, 23), (50, 3), (100, 18), (200, 1)]);
    }

    #[test]
    fn uunifast_preserves_the_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = uunifast(&mut rng, 7, 0.6);
        assert_eq!(u.len(), 7);
        assert!((u.iter().sum::<f64>() - 0.6).abs() < 1e-12);
        assert!(u.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn case_study_shape() {
        let sys = case_study(&CaseStudyOptions::default()).unwrap();
        assert!(sys.validate().is_valid());
        assert_eq!(sys.transactions.len(), 3);
        assert_eq!(sys.bus.len(), 73);
        assert!(sys.transactions.iter().all(|tx| tx.p == 200_000));
        let (ecu, bus) = realized_utilization(&sys);
        assert!(ecu.iter().all(|&u| (u - 0.5).abs() < 0.01), "{ecu:?}");
        assert!(bus > 0.5 && bus < 0.7, "{bus}");
    }
}
