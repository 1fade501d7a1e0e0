//! Exact event-driven stochastic simulation.
//!
//! Each path follows the jump process defined by a [`ModelSpec`] exactly:
//! Markovian channels compete through per-source exponential holding times
//! (redrawn whenever a transition changes the total rate, kept otherwise),
//! the winning channel within a source is picked by the standard cumulative
//!-rate partition, and every particle inside a delay compartment carries its
//! own waiting-time clock drawn once on entry. The next transition is the
//! minimum over all holding times and delay clocks.
//!
//! Delay clocks are stored as absolute firing times in per-compartment
//! binary min-heaps, so advancing time never touches them and both the
//! minimum lookup and the removal of a random particle's clock (a Markovian
//! death inside a delay compartment strikes each particle equally) stay
//! logarithmic.
//!
//! Replica ensembles run embarrassingly parallel with one counter-based
//! random stream per replica; the summary reduction uses exact integer
//! accumulators, so results are bit-identical at any parallelism degree.

use crate::dexp::DexpError;
use crate::model::{Diagnostic, ModelSpec, Source, Target};
use crate::sampler::{self, DexpQuantileTable, RngStream, SamplerError};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsaError {
    #[error("model failed validation: {}", format_diagnostics(.0))]
    InvalidSpec(Vec<Diagnostic>),
    #[error("ensemble needs at least one path")]
    EmptyEnsemble,
    #[error("invariant breached at t = {time}: {detail}")]
    InvariantBreach { time: f64, detail: String },
    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<SsaError>,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Dexp(#[from] DexpError),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Instantaneous state of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub counts: Vec<u64>,
}

/// Per-particle residual waiting times of one delay compartment, stored as
/// absolute firing times in a binary min-heap.
#[derive(Clone, Debug)]
pub struct DelayClockSet {
    compartment: usize,
    heap: Vec<f64>,
}

impl DelayClockSet {
    pub fn new(compartment: usize) -> Self {
        DelayClockSet { compartment, heap: Vec::new() }
    }

    pub fn compartment(&self) -> usize {
        self.compartment
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Earliest absolute firing time.
    pub fn peek_min(&self) -> Option<f64> {
        self.heap.first().copied()
    }

    pub fn push(&mut self, fire_time: f64) {
        self.heap.push(fire_time);
        self.sift_up(self.heap.len() - 1);
    }

    pub fn pop_min(&mut self) -> Option<f64> {
        if self.heap.is_empty() {
            return None;
        }
        let last = self.heap.len() - 1;
        self.heap.swap(0, last);
        let min = self.heap.pop();
        if !self.heap.is_empty() {
            self.sift_down(0);
        }
        min
    }

    /// Remove the clock of a uniformly chosen particle.
    fn remove_uniform(&mut self, rng: &mut RngStream) -> Option<f64> {
        if self.heap.is_empty() {
            return None;
        }
        let k = rng.index(self.heap.len());
        let last = self.heap.len() - 1;
        self.heap.swap(k, last);
        let removed = self.heap.pop();
        if k < self.heap.len() {
            self.sift_down(k);
            self.sift_up(k);
        }
        removed
    }

    /// Remaining waiting times relative to `now` (unordered multiset view).
    pub fn residuals(&self, now: f64) -> Vec<f64> {
        self.heap.iter().map(|t| t - now).collect()
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i] < self.heap[parent] {
                self.heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        loop {
            let l = 2 * i + 1;
            let r = l + 1;
            let mut smallest = i;
            if l < self.heap.len() && self.heap[l] < self.heap[smallest] {
                smallest = l;
            }
            if r < self.heap.len() && self.heap[r] < self.heap[smallest] {
                smallest = r;
            }
            if smallest == i {
                break;
            }
            self.heap.swap(i, smallest);
            i = smallest;
        }
    }
}

/// Which channel fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Markovian process, by index into `ModelSpec::markov`.
    Markov { process: usize },
    /// Delayed removal, by index into `ModelSpec::delays`.
    Delay { process: usize },
}

/// One logged transition.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    /// Source compartment; `None` for external influx.
    pub source: Option<usize>,
    /// Target compartment; `None` for removal from the system.
    pub target: Option<usize>,
}

/// A piecewise-constant path sampled onto the recording grid.
///
/// `counts_at(j)` is the state immediately after the last event at or before
/// `grid[j]` (sample-and-hold).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    n_compartments: usize,
    counts: Vec<u64>,
    pub events: Option<Vec<EventRecord>>,
}

impl Trajectory {
    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn n_compartments(&self) -> usize {
        self.n_compartments
    }

    pub fn counts_at(&self, j: usize) -> &[u64] {
        &self.counts[j * self.n_compartments..(j + 1) * self.n_compartments]
    }

    pub fn count(&self, j: usize, compartment: usize) -> u64 {
        self.counts[j * self.n_compartments + compartment]
    }
}

/// Per-grid-point moments across replicas, plus extinction statistics.
#[derive(Clone, Debug)]
pub struct EnsembleSummary {
    pub grid: Vec<f64>,
    n_compartments: usize,
    n_paths: usize,
    mean: Vec<f64>,
    variance: Vec<f64>,
    stderr: Vec<f64>,
    extinction_fraction: Vec<f64>,
}

impl EnsembleSummary {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_compartments(&self) -> usize {
        self.n_compartments
    }

    pub fn mean_at(&self, j: usize, compartment: usize) -> f64 {
        self.mean[j * self.n_compartments + compartment]
    }

    /// Unbiased (n-1 denominator) cross-replica variance.
    pub fn variance_at(&self, j: usize, compartment: usize) -> f64 {
        self.variance[j * self.n_compartments + compartment]
    }

    pub fn stderr_at(&self, j: usize, compartment: usize) -> f64 {
        self.stderr[j * self.n_compartments + compartment]
    }

    /// Fraction of paths in which the compartment count touched zero at any
    /// point up to the horizon.
    pub fn extinction_fraction(&self, compartment: usize) -> f64 {
        self.extinction_fraction[compartment]
    }
}

/// Immutable per-model context shared by every replica.
struct SimContext {
    tables: Vec<Option<Arc<DexpQuantileTable>>>,
    delay_index: Vec<Option<usize>>,
    /// Process indices grouped by source; group `n` is the external source.
    group_procs: Vec<Vec<usize>>,
}

impl SimContext {
    fn new(spec: &ModelSpec) -> Result<Self, SsaError> {
        let diags = spec.validate();
        if !diags.is_empty() {
            return Err(SsaError::InvalidSpec(diags));
        }
        let n = spec.n_compartments();
        let mut tables = vec![None; n];
        let mut delay_index = vec![None; n];
        for (k, d) in spec.delays.iter().enumerate() {
            tables[d.source] = Some(Arc::new(DexpQuantileTable::new(d.params)?));
            delay_index[d.source] = Some(k);
        }
        let mut group_procs = vec![Vec::new(); n + 1];
        for (k, p) in spec.markov.iter().enumerate() {
            let g = match p.source {
                Source::Compartment(s) => s,
                Source::External => n,
            };
            group_procs[g].push(k);
        }
        Ok(SimContext { tables, delay_index, group_procs })
    }
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    Delay(usize),
    MarkovGroup(usize),
}

struct Engine<'a> {
    spec: &'a ModelSpec,
    ctx: &'a SimContext,
    rng: RngStream,
    state: SystemState,
    clocks: Vec<Option<DelayClockSet>>,
    group_rate: Vec<f64>,
    group_next: Vec<f64>,
    hit_zero: Vec<bool>,
    events: Option<Vec<EventRecord>>,
}

impl<'a> Engine<'a> {
    fn new(
        spec: &'a ModelSpec,
        ctx: &'a SimContext,
        mut rng: RngStream,
        record_events: bool,
    ) -> Result<Self, SsaError> {
        let n = spec.n_compartments();
        let counts = spec.initial_counts.clone();
        // One clock per particle already inside a delay compartment: the
        // initial burst enters at t = 0.
        let mut clocks: Vec<Option<DelayClockSet>> = (0..n)
            .map(|i| ctx.tables[i].as_ref().map(|_| DelayClockSet::new(i)))
            .collect();
        for i in 0..n {
            if let Some(set) = clocks[i].as_mut() {
                let table = ctx.tables[i].as_ref().unwrap();
                for _ in 0..counts[i] {
                    set.push(sampler::sample_dexp(&mut rng, table));
                }
            }
        }
        let hit_zero = counts.iter().map(|&c| c == 0).collect();
        let mut engine = Engine {
            spec,
            ctx,
            rng,
            state: SystemState { time: 0.0, counts },
            clocks,
            group_rate: vec![0.0; n + 1],
            group_next: vec![f64::INFINITY; n + 1],
            hit_zero,
            events: record_events.then(Vec::new),
        };
        for g in 0..=n {
            let rate = engine.current_group_rate(g);
            engine.group_rate[g] = rate;
            engine.group_next[g] = engine.holding_from(rate)?;
        }
        Ok(engine)
    }

    fn n(&self) -> usize {
        self.spec.n_compartments()
    }

    fn current_group_rate(&self, g: usize) -> f64 {
        self.ctx.group_procs[g]
            .iter()
            .map(|&k| self.spec.markov[k].law.propensity(&self.state.counts))
            .sum()
    }

    fn holding_from(&mut self, rate: f64) -> Result<f64, SsaError> {
        Ok(self.state.time + sampler::sample_markov_holding(&mut self.rng, rate)?)
    }

    /// Minimum over every delay clock and holding time. Ties resolve to the
    /// lowest compartment index, delay clocks before Markovian channels
    /// within a compartment, external influx last.
    fn next_event(&self) -> Option<(f64, Choice)> {
        let mut best: Option<(f64, Choice)> = None;
        let mut consider = |t: f64, c: Choice| {
            if t.is_finite() && best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, c));
            }
        };
        for i in 0..self.n() {
            if let Some(set) = &self.clocks[i] {
                if let Some(t) = set.peek_min() {
                    consider(t, Choice::Delay(i));
                }
            }
            consider(self.group_next[i], Choice::MarkovGroup(i));
        }
        consider(self.group_next[self.n()], Choice::MarkovGroup(self.n()));
        best
    }

    fn breach(&self, detail: String) -> SsaError {
        SsaError::InvariantBreach { time: self.state.time, detail }
    }

    fn decrement(&mut self, i: usize) -> Result<(), SsaError> {
        if self.state.counts[i] == 0 {
            return Err(self.breach(format!(
                "removal from empty compartment '{}'",
                self.spec.compartments[i].name
            )));
        }
        self.state.counts[i] -= 1;
        Ok(())
    }

    /// Particle lands in `target`: bump the count and, if the target carries
    /// a delay process, draw a fresh waiting-time clock.
    fn deliver(&mut self, target: Target) {
        if let Target::Compartment(j) = target {
            self.state.counts[j] += 1;
            if let Some(set) = self.clocks[j].as_mut() {
                let table = self.ctx.tables[j].as_ref().unwrap();
                let wait = sampler::sample_dexp(&mut self.rng, table);
                set.push(self.state.time + wait);
            }
        }
    }

    fn apply(&mut self, time: f64, choice: Choice) -> Result<(), SsaError> {
        self.state.time = time;
        let n = self.n();
        let (log_kind, log_source, log_target) = match choice {
            Choice::Delay(i) => {
                let k = self.ctx.delay_index[i].expect("delay choice implies delay process");
                self.clocks[i]
                    .as_mut()
                    .and_then(|s| s.pop_min())
                    .ok_or_else(|| self.breach(format!("delay fired with no clock in {i}")))?;
                self.decrement(i)?;
                let target = self.spec.delays[k].target;
                self.deliver(target);
                (EventKind::Delay { process: k }, Some(i), target_index(target))
            }
            Choice::MarkovGroup(g) => {
                let k = self.select_process(g)?;
                let proc = &self.spec.markov[k];
                let mut source_idx = None;
                if let Source::Compartment(s) = proc.source {
                    self.decrement(s)?;
                    if let Some(set) = self.clocks[s].as_mut() {
                        // The memoryless channel strikes each particle at the
                        // same rate, independent of its delay clock.
                        set.remove_uniform(&mut self.rng)
                            .ok_or_else(|| self.breach(format!("no clock to remove in {s}")))?;
                    }
                    source_idx = Some(s);
                }
                let target = proc.target;
                self.deliver(target);
                (EventKind::Markov { process: k }, source_idx, target_index(target))
            }
        };

        // Clock conservation: one clock per particle in a delay compartment.
        for i in 0..n {
            if let Some(set) = &self.clocks[i] {
                if set.len() as u64 != self.state.counts[i] {
                    return Err(self.breach(format!(
                        "compartment '{}' holds {} particles but {} clocks",
                        self.spec.compartments[i].name,
                        self.state.counts[i],
                        set.len()
                    )));
                }
            }
        }
        for i in 0..n {
            if self.state.counts[i] == 0 {
                self.hit_zero[i] = true;
            }
        }

        // Redraw holding times where the rate changed; the fired channel's
        // clock was consumed either way. Unchanged rates keep their residual.
        let fired_group = match choice {
            Choice::MarkovGroup(g) => Some(g),
            Choice::Delay(_) => None,
        };
        for g in 0..=n {
            let rate = self.current_group_rate(g);
            if rate != self.group_rate[g] || fired_group == Some(g) {
                self.group_rate[g] = rate;
                self.group_next[g] = self.holding_from(rate)?;
            }
        }

        if let Some(events) = self.events.as_mut() {
            events.push(EventRecord {
                time,
                kind: log_kind,
                source: log_source,
                target: log_target,
            });
        }
        Ok(())
    }

    /// Cumulative-rate partition over the group's channels.
    fn select_process(&mut self, g: usize) -> Result<usize, SsaError> {
        let procs = &self.ctx.group_procs[g];
        let total = self.group_rate[g];
        if procs.is_empty() || total <= 0.0 {
            return Err(self.breach(format!("group {g} fired with rate {total}")));
        }
        let threshold = self.rng.uniform() * total;
        let mut acc = 0.0;
        for &k in procs {
            acc += self.spec.markov[k].law.propensity(&self.state.counts);
            if threshold <= acc {
                return Ok(k);
            }
        }
        Ok(*procs.last().unwrap())
    }

    fn run(mut self) -> Result<PathOutput, SsaError> {
        let grid = &self.spec.record_grid;
        let n = self.n();
        let mut counts_at_grid = Vec::with_capacity(grid.len() * n);
        let mut grid_pos = 0;
        loop {
            let next = self.next_event();
            let t_next = next.map_or(f64::INFINITY, |(t, _)| t);
            while grid_pos < grid.len() && grid[grid_pos] < t_next {
                counts_at_grid.extend_from_slice(&self.state.counts);
                grid_pos += 1;
            }
            if t_next > self.spec.horizon {
                // Horizon reached (or every channel quiet): the state holds
                // for whatever grid points remain.
                while grid_pos < grid.len() {
                    counts_at_grid.extend_from_slice(&self.state.counts);
                    grid_pos += 1;
                }
                break;
            }
            let (t, choice) = next.expect("finite event time");
            self.apply(t, choice)?;
        }
        Ok(PathOutput {
            counts_at_grid,
            hit_zero: self.hit_zero,
            events: self.events,
        })
    }
}

fn target_index(t: Target) -> Option<usize> {
    match t {
        Target::Sink => None,
        Target::Compartment(j) => Some(j),
    }
}

struct PathOutput {
    counts_at_grid: Vec<u64>,
    hit_zero: Vec<bool>,
    events: Option<Vec<EventRecord>>,
}

/// Simulate one path with a full event log.
pub fn run_path(spec: &ModelSpec, rng: RngStream) -> Result<Trajectory, SsaError> {
    let ctx = SimContext::new(spec)?;
    let out = Engine::new(spec, &ctx, rng, true)?.run()?;
    Ok(Trajectory {
        grid: spec.record_grid.clone(),
        n_compartments: spec.n_compartments(),
        counts: out.counts_at_grid,
        events: out.events,
    })
}

/// Exact integer accumulators; merging is associative and commutative, so
/// the reduction is identical under any parallel schedule.
struct Accum {
    n: u64,
    sum: Vec<u128>,
    sumsq: Vec<u128>,
    extinct: Vec<u64>,
}

impl Accum {
    fn empty(cells: usize, comps: usize) -> Self {
        Accum {
            n: 0,
            sum: vec![0; cells],
            sumsq: vec![0; cells],
            extinct: vec![0; comps],
        }
    }

    fn absorb(mut self, path: &PathOutput) -> Self {
        self.n += 1;
        for (i, &c) in path.counts_at_grid.iter().enumerate() {
            let c = c as u128;
            self.sum[i] += c;
            self.sumsq[i] += c * c;
        }
        for (i, &z) in path.hit_zero.iter().enumerate() {
            self.extinct[i] += z as u64;
        }
        self
    }

    fn merge(mut self, other: Accum) -> Self {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
        for (a, b) in self.extinct.iter_mut().zip(&other.extinct) {
            *a += b;
        }
        self
    }
}

/// Simulate `n_paths` replicas (replica `r` uses `stream_id = r`) and reduce
/// to per-grid-point mean, variance and standard error.
pub fn run_ensemble(spec: &ModelSpec, n_paths: usize, seed: u64) -> Result<EnsembleSummary, SsaError> {
    if n_paths == 0 {
        return Err(SsaError::EmptyEnsemble);
    }
    let ctx = SimContext::new(spec)?;
    let n = spec.n_compartments();
    let cells = spec.record_grid.len() * n;

    let acc = (0..n_paths as u64)
        .into_par_iter()
        .map(|replica| {
            let rng = RngStream::new(seed, replica);
            Engine::new(spec, &ctx, rng, false)
                .and_then(Engine::run)
                .map_err(|e| SsaError::Replica { replica, source: Box::new(e) })
        })
        .try_fold(
            || Accum::empty(cells, n),
            |acc, path| path.map(|p| acc.absorb(&p)),
        )
        .try_reduce(|| Accum::empty(cells, n), |a, b| Ok(a.merge(b)))?;

    let paths = acc.n as f64;
    let mut mean = Vec::with_capacity(cells);
    let mut variance = Vec::with_capacity(cells);
    let mut stderr = Vec::with_capacity(cells);
    for i in 0..cells {
        let m = acc.sum[i] as f64 / paths;
        // n*sumsq - sum^2 is exact in u128 for any population at this scale.
        let v = if acc.n > 1 {
            let num = acc.n as u128 * acc.sumsq[i] - acc.sum[i] * acc.sum[i];
            num as f64 / (paths * (paths - 1.0))
        } else {
            0.0
        };
        mean.push(m);
        variance.push(v);
        stderr.push((v / paths).sqrt());
    }
    let extinction_fraction = acc.extinct.iter().map(|&e| e as f64 / paths).collect();

    Ok(EnsembleSummary {
        grid: spec.record_grid.clone(),
        n_compartments: n,
        n_paths: acc.n as usize,
        mean,
        variance,
        stderr,
        extinction_fraction,
    })
}
