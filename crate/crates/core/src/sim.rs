//! Exact event-driven simulation of the catalytic branching random walk.
//!
//! Every live particle carries exactly one pending event in a min-heap. Off
//! the catalysts the event is a non-zero jump after an `Exp(q_eff)` wait; on
//! catalyst `w_k` it fires after an `Exp(β_k)` wait and is a branching (with
//! probability `α_k`, the particle is replaced by `ξ_k` offspring at `w_k`) or
//! a non-zero jump.
//!
//! When the population exceeds `population_cap` the run stops: it is marked
//! truncated and every remaining snapshot repeats the frozen population with
//! `truncated = true`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::front::FrontShape;
use crate::jump_laws::{JumpLaw, Side, Site};
use crate::malthusian::{validate_catalysts, CatalystSpec};
use crate::seed::{SimRng, StreamSeed};
use crate::walk::{exponential, WalkConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub walk: WalkConfig,
    pub catalysts: Vec<CatalystSpec>,
    pub start: Site,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub population_cap: usize,
    pub seed: u64,
    /// Keep a full event log (small runs only).
    pub record_events: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        validate_catalysts(&self.catalysts, &self.walk)?;
        if self.start.len() != self.walk.dimension() {
            return Err(invalid("start", "dimension does not match the walk"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be finite and >= 0, got {}", self.t_end)));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(invalid("snapshot_times", "must be sorted"));
        }
        if self.snapshot_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(invalid("snapshot_times", "must lie in [0, t_end]"));
        }
        if self.population_cap < 1 {
            return Err(invalid("population_cap", "must be at least 1"));
        }
        Ok(())
    }

    /// Seed of run `index` in an ensemble.
    pub fn run_seed(&self, index: u64) -> StreamSeed {
        StreamSeed::new(self.seed).child(index)
    }
}

/// Population at a snapshot time. Positions are stored flat, `dimension`
/// coordinates per particle, in slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub time: f64,
    pub total: usize,
    pub local_counts: Vec<usize>,
    pub truncated: bool,
    pub dimension: usize,
    pub coords: Vec<i64>,
}

impl PopulationSnapshot {
    pub fn positions(&self) -> impl Iterator<Item = &[i64]> {
        self.coords.chunks_exact(self.dimension.max(1))
    }

    pub fn local_total(&self) -> usize {
        self.local_counts.iter().sum()
    }
}

/// Borrowed view of the live population, handed to snapshot observers.
pub struct SnapshotView<'a> {
    pub time: f64,
    pub total: usize,
    pub local_counts: &'a [usize],
    pub truncated: bool,
    dimension: usize,
    coords: &'a [i64],
    alive: &'a [bool],
}

impl<'a> SnapshotView<'a> {
    pub fn positions(&self) -> impl Iterator<Item = &'a [i64]> + 'a {
        let alive = self.alive;
        self.coords
            .chunks_exact(self.dimension)
            .zip(alive.iter())
            .filter_map(|(p, &a)| a.then_some(p))
    }

    pub fn to_owned(&self) -> PopulationSnapshot {
        PopulationSnapshot {
            time: self.time,
            total: self.total,
            local_counts: self.local_counts.to_vec(),
            truncated: self.truncated,
            dimension: self.dimension,
            coords: self.positions().flatten().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    Jump { particle: u64, from: Site, to: Site },
    Branch { particle: u64, catalyst: usize, offspring: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub total_after: usize,
}

/// Run summary without snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub seed: u64,
    pub truncated: bool,
    pub extinct: bool,
    pub extinction_time: Option<f64>,
    pub events: u64,
    pub branch_events: u64,
    pub offspring_total: u64,
    pub offspring_sq_total: u64,
    pub max_population: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub stats: RunStats,
    pub snapshots: Vec<PopulationSnapshot>,
    pub event_log: Option<Vec<SimEvent>>,
}

impl RunOutput {
    pub fn truncated(&self) -> bool {
        self.stats.truncated
    }

    pub fn extinct(&self) -> bool {
        self.stats.extinct
    }
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    seq: u64,
    slot: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Population<'c> {
    cfg: &'c SimConfig,
    d: usize,
    catalyst_at: HashMap<Site, usize>,
    coords: Vec<i64>,
    alive: Vec<bool>,
    ids: Vec<u64>,
    on_catalyst: Vec<Option<usize>>,
    free: Vec<usize>,
    heap: BinaryHeap<Pending>,
    seq: u64,
    next_id: u64,
    total: usize,
    local: Vec<usize>,
}

impl<'c> Population<'c> {
    fn new(cfg: &'c SimConfig) -> Self {
        Self {
            cfg,
            d: cfg.walk.dimension(),
            catalyst_at: cfg.catalysts.iter().enumerate().map(|(k, c)| (c.position.clone(), k)).collect(),
            coords: Vec::new(),
            alive: Vec::new(),
            ids: Vec::new(),
            on_catalyst: Vec::new(),
            free: Vec::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            next_id: 0,
            total: 0,
            local: vec![0; cfg.catalysts.len()],
        }
    }

    fn site(&self, slot: usize) -> &[i64] {
        &self.coords[slot * self.d..(slot + 1) * self.d]
    }

    fn delay(&self, slot: usize, rng: &mut SimRng) -> f64 {
        match self.on_catalyst[slot] {
            Some(k) => exponential(self.cfg.catalysts[k].beta, rng),
            None => self.cfg.walk.exit_delay(rng),
        }
    }

    fn schedule(&mut self, slot: usize, now: f64, rng: &mut SimRng) {
        let time = now + self.delay(slot, rng);
        self.heap.push(Pending { time, seq: self.seq, slot });
        self.seq += 1;
    }

    fn spawn(&mut self, site: &[i64], now: f64, rng: &mut SimRng) {
        let slot = match self.free.pop() {
            Some(s) => {
                self.coords[s * self.d..(s + 1) * self.d].copy_from_slice(site);
                self.alive[s] = true;
                s
            }
            None => {
                self.coords.extend_from_slice(site);
                self.alive.push(true);
                self.ids.push(0);
                self.on_catalyst.push(None);
                self.alive.len() - 1
            }
        };
        self.ids[slot] = self.next_id;
        self.next_id += 1;
        let k = self.catalyst_at.get(site).copied();
        self.on_catalyst[slot] = k;
        if let Some(k) = k {
            self.local[k] += 1;
        }
        self.total += 1;
        self.schedule(slot, now, rng);
    }

    fn remove(&mut self, slot: usize) {
        if let Some(k) = self.on_catalyst[slot] {
            self.local[k] -= 1;
        }
        self.alive[slot] = false;
        self.free.push(slot);
        self.total -= 1;
    }

    fn view(&self, time: f64, truncated: bool) -> SnapshotView<'_> {
        SnapshotView {
            time,
            total: self.total,
            local_counts: &self.local,
            truncated,
            dimension: self.d,
            coords: &self.coords,
            alive: &self.alive,
        }
    }
}

/// Run one realisation, handing each snapshot to `observe` instead of
/// storing it.
pub fn run_observed<F>(cfg: &SimConfig, seed: StreamSeed, mut observe: F) -> Result<(RunStats, Option<Vec<SimEvent>>)>
where
    F: FnMut(&SnapshotView<'_>),
{
    cfg.validate()?;
    let mut rng = seed.derive("cbrw-run").rng();
    let mut pop = Population::new(cfg);
    let mut log = cfg.record_events.then(Vec::new);
    let mut stats = RunStats {
        seed: seed.value(),
        truncated: false,
        extinct: false,
        extinction_time: None,
        events: 0,
        branch_events: 0,
        offspring_total: 0,
        offspring_sq_total: 0,
        max_population: 1,
    };
    let mut next_snap = 0;
    let snaps = &cfg.snapshot_times;
    let mut step = vec![0i64; pop.d];
    let mut from: Site = vec![0; pop.d];
    pop.spawn(&cfg.start, 0.0, &mut rng);

    while let Some(ev) = pop.heap.pop() {
        while next_snap < snaps.len() && snaps[next_snap] < ev.time {
            observe(&pop.view(snaps[next_snap], false));
            next_snap += 1;
        }
        if ev.time > cfg.t_end {
            break;
        }
        stats.events += 1;
        let slot = ev.slot;
        let branching = match pop.on_catalyst[slot] {
            Some(k) => rng.random::<f64>() < cfg.catalysts[k].alpha,
            None => false,
        };
        if branching {
            let k = pop.on_catalyst[slot].expect("branching happens on a catalyst");
            let xi = cfg.catalysts[k].offspring.sample(&mut rng);
            let id = pop.ids[slot];
            pop.remove(slot);
            let site = cfg.catalysts[k].position.clone();
            for _ in 0..xi {
                pop.spawn(&site, ev.time, &mut rng);
            }
            stats.branch_events += 1;
            stats.offspring_total += xi as u64;
            stats.offspring_sq_total += (xi * xi) as u64;
            if let Some(l) = log.as_mut() {
                l.push(SimEvent {
                    time: ev.time,
                    kind: EventKind::Branch {
                        particle: id,
                        catalyst: k,
                        offspring: xi,
                    },
                    total_after: pop.total,
                });
            }
            stats.max_population = stats.max_population.max(pop.total);
            if pop.total == 0 {
                stats.extinct = true;
                stats.extinction_time = Some(ev.time);
                break;
            }
            if pop.total > cfg.population_cap {
                stats.truncated = true;
                break;
            }
        } else {
            from.copy_from_slice(pop.site(slot));
            if let Some(k) = pop.on_catalyst[slot] {
                pop.local[k] -= 1;
            }
            let d = pop.d;
            cfg.walk.step(&mut rng, &mut pop.coords[slot * d..(slot + 1) * d], &mut step);
            let k = pop.catalyst_at.get(pop.site(slot)).copied();
            pop.on_catalyst[slot] = k;
            if let Some(k) = k {
                pop.local[k] += 1;
            }
            pop.schedule(slot, ev.time, &mut rng);
            if let Some(l) = log.as_mut() {
                l.push(SimEvent {
                    time: ev.time,
                    kind: EventKind::Jump {
                        particle: pop.ids[slot],
                        from: from.clone(),
                        to: pop.site(slot).to_vec(),
                    },
                    total_after: pop.total,
                });
            }
        }
    }
    let frozen = stats.truncated;
    while next_snap < snaps.len() {
        observe(&pop.view(snaps[next_snap], frozen));
        next_snap += 1;
    }
    Ok((stats, log))
}

/// Run one realisation and keep every snapshot.
pub fn run(cfg: &SimConfig, seed: StreamSeed) -> Result<RunOutput> {
    let mut snapshots = Vec::with_capacity(cfg.snapshot_times.len());
    let (stats, event_log) = run_observed(cfg, seed, |v| snapshots.push(v.to_owned()))?;
    Ok(RunOutput {
        stats,
        snapshots,
        event_log,
    })
}

/// Apply `f(run_index, run_seed)` to every run of an ensemble in parallel.
/// Results are in run order and independent of the thread count.
pub fn ensemble_map<T, F>(cfg: &SimConfig, n_runs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, StreamSeed) -> T + Sync + Send,
{
    (0..n_runs).into_par_iter().map(|i| f(i, cfg.run_seed(i as u64))).collect()
}

/// Number of trailing snapshots inspected by the catalyst-visit proxy.
pub fn tail_window(n_snapshots: usize) -> usize {
    ((0.1 * n_snapshots as f64).ceil() as usize).max(1)
}

/// Finite-horizon proxy for "catalysts are visited infinitely often": some
/// catalyst is occupied at one of the last 10% of snapshot times.
pub fn visits_catalysts_indicator(output: &RunOutput) -> bool {
    let local: Vec<usize> = output.snapshots.iter().map(|s| s.local_total()).collect();
    occupied_in_tail(&local)
}

/// The same proxy from per-snapshot local totals.
pub fn occupied_in_tail(local_totals: &[usize]) -> bool {
    if local_totals.is_empty() {
        return false;
    }
    let w = tail_window(local_totals.len());
    local_totals[local_totals.len() - w..].iter().any(|&c| c > 0)
}

/// `max_v H(X^v(t) / R^{-1,κ}(t))` with the side of each coordinate picking
/// its normalizer. Empty populations give 0.
pub fn max_h_statistic<'a, I>(positions: I, law: &JumpLaw, front: &FrontShape, t: f64) -> f64
where
    I: IntoIterator<Item = &'a [i64]>,
{
    let norms: Vec<(f64, f64)> = law
        .axes()
        .iter()
        .map(|a| (a.inverse_norm(Side::Plus, t), a.inverse_norm(Side::Minus, t)))
        .collect();
    let mut z = vec![0.0; norms.len()];
    let mut best = 0.0_f64;
    for p in positions {
        for ((zi, &x), &(np, nm)) in z.iter_mut().zip(p).zip(&norms) {
            let n = if x >= 0 { np } else { nm };
            *zi = if n > 0.0 { x as f64 / n } else { 0.0 };
        }
        best = best.max(front.shape_value(&z));
    }
    best
}
