//! Discrete-event FCFS multi-server queue.
//!
//! Simultaneous events are resolved departure-before-arrival, departures by
//! server index, and an arriving job takes the lowest-indexed idle server.
//! Job ids are given to initial jobs first (those in service by server
//! index, then queued initial jobs), then to arrivals in order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::renewal::{Mode, RenewalStream, TimeKey};
use crate::rng::{experiment, SimRng, StreamKey};
use crate::stats;

pub const DEFAULT_MAX_EVENTS: u64 = 2_000_000_000;

const ARRIVAL_STREAM: u64 = 0;
const SERVICE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalFeed {
    /// Renewal arrivals; processing times drawn i.i.d. from the service law.
    Renewal { dist: DistSpec, mode: Mode },
    /// Fixed arrival epochs, optionally with their processing times.
    Explicit {
        times: Vec<f64>,
        #[serde(default)]
        services: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Empty,
    /// `n` jobs, one per server, with i.i.d. residual processing times.
    AllBusyResidual,
    /// A Poisson number of jobs with mean `E[S]/E[A]` and i.i.d. residual
    /// processing times; if more than `n`, the `n` in service are chosen
    /// uniformly at random.
    PoissonStationary,
    /// Initial jobs with the given processing times, served in list order.
    Explicit { processing: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    pub n: usize,
    pub arrival: ArrivalFeed,
    pub service: DistSpec,
    pub init: Init,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub replication: u64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
}

fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

impl QueueConfig {
    pub fn new(n: usize, arrival: ArrivalFeed, service: DistSpec, init: Init, horizon: f64, seed: u64) -> Self {
        Self {
            n,
            arrival,
            service,
            init,
            horizon,
            seed,
            replication: 0,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::new(self.seed, experiment::QUEUE, self.replication)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be positive and finite"));
        }
        if let ArrivalFeed::Explicit { times, services } = &self.arrival {
            if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::validation("arrival.times", "must be finite and non-negative"));
            }
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::validation("arrival.times", "must be non-decreasing"));
            }
            if let Some(s) = services {
                if s.len() != times.len() {
                    return Err(Error::validation("arrival.services", "length must match arrival.times"));
                }
                if s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::validation("arrival.services", "must be positive"));
                }
            }
            if self.init == Init::PoissonStationary {
                return Err(Error::validation(
                    "init",
                    "poisson_stationary needs a renewal arrival feed to define its mean",
                ));
            }
        }
        if let Init::Explicit { processing } = &self.init {
            if processing.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::validation("init.processing", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    ServiceStart,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueEvent {
    pub time: f64,
    pub kind: EventKind,
    pub job: u64,
    /// Server of a start or departure; `None` for arrivals.
    pub server: Option<usize>,
}

/// Receives every state change of a simulation.
pub trait Observer {
    /// Called once with the number in system at time 0.
    fn start(&mut self, _in_system: usize) {}
    /// Called after each event with the number in system after it.
    fn observe(&mut self, event: &QueueEvent, in_system: usize);
    /// Called at the end of the run.
    fn finish(&mut self, _horizon: f64, _in_system: usize) {}
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn start(&mut self, q: usize) {
        (**self).start(q)
    }
    fn observe(&mut self, e: &QueueEvent, q: usize) {
        (**self).observe(e, q)
    }
    fn finish(&mut self, h: f64, q: usize) {
        (**self).finish(h, q)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn start(&mut self, q: usize) {
        self.0.start(q);
        self.1.start(q);
    }
    fn observe(&mut self, e: &QueueEvent, q: usize) {
        self.0.observe(e, q);
        self.1.observe(e, q);
    }
    fn finish(&mut self, h: f64, q: usize) {
        self.0.finish(h, q);
        self.1.finish(h, q);
    }
}

/// Totals of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub initial: usize,
    pub arrivals: u64,
    pub departures: u64,
    pub final_in_system: usize,
    pub events: u64,
}

// One per run, so the size gap between variants does not matter.
#[allow(clippy::large_enum_variant)]
enum Source {
    Renewal {
        stream: RenewalStream,
        service: DistSpec,
        rng: SimRng,
    },
    Explicit {
        times: Vec<f64>,
        services: Vec<f64>,
        next: usize,
    },
}

impl Source {
    fn peek(&mut self) -> Result<Option<f64>> {
        match self {
            Source::Renewal { stream, .. } => Ok(Some(stream.peek()?)),
            Source::Explicit { times, next, .. } => Ok(times.get(*next).copied()),
        }
    }

    fn take(&mut self) -> Result<(f64, f64)> {
        match self {
            Source::Renewal {
                stream,
                service,
                rng,
            } => {
                let t = stream.next_event()?;
                Ok((t, service.sample(rng)))
            }
            Source::Explicit {
                times,
                services,
                next,
            } => {
                let i = *next;
                *next += 1;
                Ok((times[i], services[i]))
            }
        }
    }
}

/// The initial jobs' processing times, in service order, for `config`.
fn initial_jobs(config: &QueueConfig, rng: &mut SimRng) -> Result<Vec<f64>> {
    let residuals = |count: usize, rng: &mut SimRng| -> Result<Vec<f64>> {
        (0..count).map(|_| config.service.residual_sample(rng)).collect()
    };
    match &config.init {
        Init::Empty => Ok(Vec::new()),
        Init::AllBusyResidual => residuals(config.n, rng),
        Init::PoissonStationary => {
            let ArrivalFeed::Renewal { dist, .. } = &config.arrival else {
                return Err(Error::validation("init", "poisson_stationary needs a renewal feed"));
            };
            let mean = config.service.mean() / dist.mean();
            let z = Poisson::new(mean)
                .map_err(|e| Error::validation("init", e.to_string()))?
                .sample(rng) as usize;
            let mut jobs = residuals(z, rng)?;
            if z > config.n {
                // Choose the n jobs in service uniformly at random; the rest
                // queue in a uniformly random order.
                jobs.shuffle(rng);
            }
            Ok(jobs)
        }
        Init::Explicit { processing } => Ok(processing.clone()),
    }
}

fn make_source(config: &QueueConfig, key: StreamKey) -> Result<Source> {
    Ok(match &config.arrival {
        ArrivalFeed::Renewal { dist, mode } => Source::Renewal {
            stream: RenewalStream::new(*dist, *mode, key.rng(ARRIVAL_STREAM)),
            service: config.service,
            rng: key.rng(SERVICE_STREAM),
        },
        ArrivalFeed::Explicit { times, services } => {
            let services = match services {
                Some(s) => s.clone(),
                None => {
                    let mut rng = key.rng(SERVICE_STREAM);
                    times.iter().map(|_| config.service.sample(&mut rng)).collect()
                }
            };
            Source::Explicit {
                times: times.clone(),
                services,
                next: 0,
            }
        }
    })
}

struct Engine<'o, O: Observer> {
    n: usize,
    idle: BinaryHeap<Reverse<usize>>,
    departures: BinaryHeap<Reverse<TimeKey>>,
    serving: Vec<u64>,
    waiting: VecDeque<(u64, f64)>,
    in_system: usize,
    events: u64,
    max_events: u64,
    obs: &'o mut O,
}

impl<O: Observer> Engine<'_, O> {
    fn emit(&mut self, time: f64, kind: EventKind, job: u64, server: Option<usize>) -> Result<()> {
        self.events += 1;
        if self.events > self.max_events {
            return Err(Error::Resource(format!(
                "event cap of {} reached at time {time}",
                self.max_events
            )));
        }
        self.obs.observe(
            &QueueEvent {
                time,
                kind,
                job,
                server,
            },
            self.in_system,
        );
        Ok(())
    }

    fn start_service(&mut self, time: f64, server: usize, job: u64, processing: f64) -> Result<()> {
        self.serving[server] = job;
        self.departures.push(Reverse(TimeKey {
            time: time + processing,
            source: server,
        }));
        self.emit(time, EventKind::ServiceStart, job, Some(server))
    }
}

/// Runs one replication, streaming every event into `obs`.
pub fn simulate_with<O: Observer>(config: &QueueConfig, obs: &mut O) -> Result<RunSummary> {
    config.validate()?;
    let key = config.key();
    let mut init_rng = key.rng(INIT_STREAM);
    let initial = initial_jobs(config, &mut init_rng)?;
    let mut source = make_source(config, key)?;
    let n = config.n;
    let mut eng = Engine {
        n,
        idle: (0..n).map(Reverse).collect(),
        departures: BinaryHeap::with_capacity(n),
        serving: vec![u64::MAX; n],
        waiting: VecDeque::new(),
        in_system: initial.len(),
        events: 0,
        max_events: config.max_events,
        obs,
    };
    eng.obs.start(initial.len());
    for (job, &p) in initial.iter().enumerate() {
        if job < n {
            let Reverse(server) = eng.idle.pop().expect("idle server for initial job");
            eng.start_service(0.0, server, job as u64, p)?;
        } else {
            eng.waiting.push_back((job as u64, p));
        }
    }
    let mut next_job = initial.len() as u64;
    let (mut arrivals, mut departures) = (0u64, 0u64);
    loop {
        let dep = eng.departures.peek().map(|k| k.0.time);
        let arr = source.peek()?;
        let take_departure = match (dep, arr) {
            (Some(d), Some(a)) => d <= a,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_departure {
            let Reverse(TimeKey { time, source: server }) = eng.departures.peek().copied().unwrap();
            if time > config.horizon {
                break;
            }
            eng.departures.pop();
            eng.in_system -= 1;
            departures += 1;
            let job = eng.serving[server];
            eng.emit(time, EventKind::Departure, job, Some(server))?;
            match eng.waiting.pop_front() {
                Some((next, p)) => eng.start_service(time, server, next, p)?,
                None => {
                    eng.serving[server] = u64::MAX;
                    eng.idle.push(Reverse(server));
                }
            }
        } else {
            if arr.unwrap() > config.horizon {
                break;
            }
            let (time, p) = source.take()?;
            let job = next_job;
            next_job += 1;
            eng.in_system += 1;
            arrivals += 1;
            eng.emit(time, EventKind::Arrival, job, None)?;
            match eng.idle.pop() {
                Some(Reverse(server)) => eng.start_service(time, server, job, p)?,
                None => eng.waiting.push_back((job, p)),
            }
        }
    }
    debug_assert!(eng.n == n);
    let final_in_system = eng.in_system;
    let events = eng.events;
    eng.obs.finish(config.horizon, final_in_system);
    Ok(RunSummary {
        initial: initial.len(),
        arrivals,
        departures,
        final_in_system,
        events,
    })
}

/// Complete event log and number-in-system step function of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueuePath {
    pub n: usize,
    pub horizon: f64,
    pub initial: usize,
    pub events: Vec<QueueEvent>,
    /// Number in system just after each event.
    pub in_system: Vec<usize>,
}

#[derive(Default)]
struct PathRecorder {
    initial: usize,
    events: Vec<QueueEvent>,
    in_system: Vec<usize>,
}

impl Observer for PathRecorder {
    fn start(&mut self, q: usize) {
        self.initial = q;
    }
    fn observe(&mut self, e: &QueueEvent, q: usize) {
        self.events.push(*e);
        self.in_system.push(q);
    }
}

/// Runs one replication and keeps the full event log.
pub fn simulate(config: &QueueConfig) -> Result<QueuePath> {
    let mut rec = PathRecorder::default();
    simulate_with(config, &mut rec)?;
    Ok(QueuePath {
        n: config.n,
        horizon: config.horizon,
        initial: rec.initial,
        events: rec.events,
        in_system: rec.in_system,
    })
}

/// Per-job times reconstructed from an event log.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct JobRecord {
    pub job: u64,
    pub arrival: Option<f64>,
    pub start: Option<f64>,
    pub departure: Option<f64>,
    pub server: Option<usize>,
}

#[derive(Serialize)]
struct EventRow {
    time: f64,
    kind: EventKind,
    job: u64,
    server: Option<usize>,
    seed: u64,
}

#[derive(Serialize)]
struct SampleRow {
    t: f64,
    q_excess: usize,
    q_excess_scaled: f64,
    seed: u64,
}

impl QueuePath {
    /// `Q(t)`, right-continuous.
    pub fn q_at(&self, t: f64) -> usize {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            self.initial
        } else {
            self.in_system[k - 1]
        }
    }

    pub fn final_in_system(&self) -> usize {
        self.in_system.last().copied().unwrap_or(self.initial)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Distinct event epochs in increasing order.
    pub fn epochs(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.events.iter().map(|e| e.time).collect();
        ts.dedup();
        ts
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        let mut jobs: Vec<JobRecord> = Vec::new();
        for e in &self.events {
            let id = e.job as usize;
            if jobs.len() <= id {
                jobs.resize(id + 1, JobRecord::default());
            }
            let r = &mut jobs[id];
            r.job = e.job;
            match e.kind {
                EventKind::Arrival => r.arrival = Some(e.time),
                EventKind::ServiceStart => {
                    r.start = Some(e.time);
                    r.server = e.server;
                }
                EventKind::Departure => r.departure = Some(e.time),
            }
        }
        jobs
    }

    pub fn write_events_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            w.serialize(EventRow {
                time: e.time,
                kind: e.kind,
                job: e.job,
                server: e.server,
                seed,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One steady-state observation of the excess `(Q - n)^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadySample {
    pub t: f64,
    pub q: usize,
    pub q_excess: usize,
    pub q_excess_scaled: f64,
}

fn sample_at(n: usize, t: f64, q: usize) -> SteadySample {
    let q_excess = q.saturating_sub(n);
    SteadySample {
        t,
        q,
        q_excess,
        q_excess_scaled: q_excess as f64 / (n as f64).sqrt(),
    }
}

/// Default burn-in `20 n / mu` and stride `n / mu`.
pub fn default_window(n: usize, mu: f64) -> (f64, f64) {
    (20.0 * n as f64 / mu, n as f64 / mu)
}

fn check_window(t0: f64, stride: f64, horizon: f64) -> Result<()> {
    if !(t0 >= 0.0 && t0 < horizon) {
        return Err(Error::validation(
            "t0",
            format!("burn-in {t0} must lie in [0, horizon={horizon})"),
        ));
    }
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(Error::validation("stride", "must be positive"));
    }
    Ok(())
}

/// Samples `Q` at `t0, t0 + stride, ...` up to the horizon.
pub fn steady_state_samples(path: &QueuePath, t0: f64, stride: f64) -> Result<Vec<SteadySample>> {
    check_window(t0, stride, path.horizon)?;
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * stride;
        if t > path.horizon {
            break;
        }
        out.push(sample_at(path.n, t, path.q_at(t)));
        k += 1;
    }
    Ok(out)
}

pub fn write_samples_csv<W: Write>(samples: &[SteadySample], out: W, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(SampleRow {
            t: s.t,
            q_excess: s.q_excess,
            q_excess_scaled: s.q_excess_scaled,
            seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming form of [`steady_state_samples`].
#[derive(Debug, Clone)]
pub struct StrideSampler {
    n: usize,
    t0: f64,
    stride: f64,
    k: u64,
    q: usize,
    pub samples: Vec<SteadySample>,
}

impl StrideSampler {
    pub fn new(n: usize, t0: f64, stride: f64, horizon: f64) -> Result<Self> {
        check_window(t0, stride, horizon)?;
        Ok(Self {
            n,
            t0,
            stride,
            k: 0,
            q: 0,
            samples: Vec::new(),
        })
    }

    fn flush_before(&mut self, t: f64, inclusive: bool) {
        loop {
            let s = self.t0 + self.k as f64 * self.stride;
            if s > t || (!inclusive && s == t) {
                break;
            }
            self.samples.push(sample_at(self.n, s, self.q));
            self.k += 1;
        }
    }
}

impl Observer for StrideSampler {
    fn start(&mut self, q: usize) {
        self.q = q;
    }
    fn observe(&mut self, e: &QueueEvent, q: usize) {
        self.flush_before(e.time, false);
        self.q = q;
    }
    fn finish(&mut self, horizon: f64, _q: usize) {
        self.flush_before(horizon, true);
    }
}

/// Time-weighted occupation of each number-in-system value over `[t0, horizon]`.
#[derive(Debug, Clone, Default)]
pub struct OccupancyStats {
    t0: f64,
    last: f64,
    q: usize,
    pub time_in_state: Vec<f64>,
}

impl OccupancyStats {
    pub fn new(t0: f64) -> Self {
        Self {
            t0,
            ..Default::default()
        }
    }

    fn accrue(&mut self, t: f64) {
        let from = self.last.max(self.t0);
        if t > from {
            if self.time_in_state.len() <= self.q {
                self.time_in_state.resize(self.q + 1, 0.0);
            }
            self.time_in_state[self.q] += t - from;
        }
        self.last = self.last.max(t);
    }

    pub fn total_time(&self) -> f64 {
        self.time_in_state.iter().sum()
    }

    /// Fraction of time with at least `k` in system.
    pub fn fraction_at_least(&self, k: usize) -> f64 {
        self.time_in_state.iter().skip(k).sum::<f64>() / self.total_time()
    }

    pub fn distribution(&self) -> Vec<f64> {
        let total = self.total_time();
        self.time_in_state.iter().map(|x| x / total).collect()
    }
}

impl Observer for OccupancyStats {
    fn start(&mut self, q: usize) {
        self.q = q;
    }
    fn observe(&mut self, e: &QueueEvent, q: usize) {
        self.accrue(e.time);
        self.q = q;
    }
    fn finish(&mut self, horizon: f64, _q: usize) {
        self.accrue(horizon);
    }
}

/// Means of consecutive windows of a sample sequence, a burn-in diagnostic.
pub fn windowed_means(samples: &[SteadySample], windows: usize) -> Vec<f64> {
    let size = (samples.len() / windows.max(1)).max(1);
    samples
        .chunks(size)
        .take(windows)
        .map(|c| c.iter().map(|s| s.q_excess as f64).sum::<f64>() / c.len() as f64)
        .collect()
}

/// Strict exceedance tail `P((Q - n)^+ > x sqrt(n))` from correlated samples,
/// with batch-means 99% half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTail {
    pub thresholds: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub half_width: Vec<f64>,
    pub samples: u64,
}

pub fn empirical_tail(samples: &[SteadySample], thresholds: &[f64], batches: usize) -> Result<EmpiricalTail> {
    stats::check_thresholds(thresholds)?;
    if samples.is_empty() {
        return Err(Error::validation("samples", "no steady-state samples"));
    }
    let mut p_hat = Vec::new();
    let mut half_width = Vec::new();
    for &x in thresholds {
        let ind: Vec<f64> = samples
            .iter()
            .map(|s| if s.q_excess_scaled > x { 1.0 } else { 0.0 })
            .collect();
        let (m, se) = stats::batch_means(&ind, batches);
        p_hat.push(m);
        half_width.push(stats::Z99 * se);
    }
    Ok(EmpiricalTail {
        thresholds: thresholds.to_vec(),
        p_hat,
        half_width,
        samples: samples.len() as u64,
    })
}

/// Realized inputs of a run: initial processing times in service order,
/// and arrival epochs with processing times up to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub initial: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
}

impl QueueConfig {
    /// Draws the initial jobs and all arrivals up to the horizon exactly as
    /// [`simulate`] would.
    pub fn materialize(&self) -> Result<Scenario> {
        self.validate()?;
        let key = self.key();
        let initial = initial_jobs(self, &mut key.rng(INIT_STREAM))?;
        let mut source = make_source(self, key)?;
        let (mut arrivals, mut services) = (Vec::new(), Vec::new());
        while let Some(t) = source.peek()? {
            if t > self.horizon {
                break;
            }
            let (t, s) = source.take()?;
            arrivals.push(t);
            services.push(s);
            if arrivals.len() as u64 > self.max_events {
                return Err(Error::Resource(format!("more than {} arrivals", self.max_events)));
            }
        }
        Ok(Scenario {
            initial,
            arrivals,
            services,
        })
    }

    /// The explicit configuration replaying `scenario`.
    pub fn replay(&self, scenario: &Scenario) -> QueueConfig {
        QueueConfig {
            arrival: ArrivalFeed::Explicit {
                times: scenario.arrivals.clone(),
                services: Some(scenario.services.clone()),
            },
            init: Init::Explicit {
                processing: scenario.initial.clone(),
            },
            ..self.clone()
        }
    }
}

/// How the jobs of the base queue correspond to jobs of the augmented queue.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingPlan {
    /// Job `i` of the base queue is job `i` of the augmented queue.
    Identity,
    /// Each base arrival is the augmented arrival at the identical epoch;
    /// initial jobs correspond by position.
    MatchTimes,
    /// Explicit indices into the augmented initial jobs and arrivals.
    Explicit {
        initial: Vec<usize>,
        arrivals: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub time: f64,
    pub base: usize,
    pub augmented: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub epochs_checked: usize,
    pub violations: Vec<Violation>,
}

fn precondition(condition: &'static str, detail: String) -> Error {
    Error::Precondition { condition, detail }
}

fn resolve_plan(base: &Scenario, aug: &Scenario, plan: &CouplingPlan) -> Result<(Vec<usize>, Vec<usize>)> {
    match plan {
        CouplingPlan::Identity => Ok(((0..base.initial.len()).collect(), (0..base.arrivals.len()).collect())),
        CouplingPlan::Explicit { initial, arrivals } => Ok((initial.clone(), arrivals.clone())),
        CouplingPlan::MatchTimes => {
            let mut map = Vec::with_capacity(base.arrivals.len());
            let mut j = 0;
            for (k, &t) in base.arrivals.iter().enumerate() {
                while j < aug.arrivals.len() && aug.arrivals[j] < t {
                    j += 1;
                }
                if j == aug.arrivals.len() || aug.arrivals[j] != t {
                    return Err(precondition(
                        "(iii)",
                        format!("base arrival {k} at {t} has no augmented arrival at that epoch"),
                    ));
                }
                map.push(j);
                j += 1;
            }
            Ok(((0..base.initial.len()).collect(), map))
        }
    }
}

/// Checks the comparison hypotheses (i)-(iv) for the realized inputs and
/// then that the augmented queue holds at least as many jobs as the base
/// queue at every event epoch of either run.
pub fn dominance_check(base: &QueueConfig, augmented: &QueueConfig, plan: &CouplingPlan) -> Result<DominanceReport> {
    if base.n != augmented.n {
        return Err(Error::validation("augmented.n", "server counts differ"));
    }
    let b = base.materialize()?;
    let a = augmented.materialize()?;
    if b.initial.len() > base.n {
        return Err(precondition(
            "(i)",
            format!("base starts with {} jobs, more than n = {}", b.initial.len(), base.n),
        ));
    }
    let (imap, amap) = resolve_plan(&b, &a, plan)?;
    if imap.len() != b.initial.len() {
        return Err(precondition("(ii)", "initial map does not cover every base initial job".into()));
    }
    let mut used = vec![false; a.initial.len()];
    for (j, &i) in imap.iter().enumerate() {
        if i >= a.initial.len() || used[i] {
            return Err(precondition("(ii)", format!("base initial job {j} has no distinct partner")));
        }
        used[i] = true;
        if a.initial[i] != b.initial[j] {
            return Err(precondition(
                "(ii)",
                format!("initial job {j}: processing {} vs {}", b.initial[j], a.initial[i]),
            ));
        }
    }
    if amap.len() != b.arrivals.len() {
        return Err(precondition("(iii)", "arrival map does not cover every base arrival".into()));
    }
    for (k, &i) in amap.iter().enumerate() {
        if i >= a.arrivals.len() || (k > 0 && i <= amap[k - 1]) || a.arrivals[i] != b.arrivals[k] {
            return Err(precondition(
                "(iii)",
                format!("base arrival {k} is not matched to an augmented arrival at the same epoch"),
            ));
        }
        if a.services[i] != b.services[k] {
            return Err(precondition(
                "(iv)",
                format!("arrival {k}: processing {} vs {}", b.services[k], a.services[i]),
            ));
        }
    }
    let pb = simulate(&base.replay(&b))?;
    let pa = simulate(&augmented.replay(&a))?;
    let mut epochs = pb.epochs();
    epochs.extend(pa.epochs());
    epochs.push(0.0);
    epochs.sort_by(f64::total_cmp);
    epochs.dedup();
    let violations = epochs
        .iter()
        .filter_map(|&t| {
            let (qb, qa) = (pb.q_at(t), pa.q_at(t));
            (qa < qb).then_some(Violation {
                time: t,
                base: qb,
                augmented: qa,
            })
        })
        .collect();
    Ok(DominanceReport {
        epochs_checked: epochs.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn det(v: f64) -> DistSpec {
        DistSpec::deterministic(v).unwrap()
    }

    fn explicit(times: &[f64], services: &[f64]) -> ArrivalFeed {
        ArrivalFeed::Explicit {
            times: times.to_vec(),
            services: Some(services.to_vec()),
        }
    }

    #[test]
    fn single_job_walk_through() {
        let cfg = QueueConfig::new(1, explicit(&[0.5], &[0.4]), det(0.4), Init::Empty, 10.0, 1);
        let path = simulate(&cfg).unwrap();
        let kinds: Vec<_> = path.events.iter().map(|e| (e.time, e.kind)).collect();
        assert_eq!(kinds[0], (0.5, EventKind::Arrival));
        assert_eq!(kinds[1], (0.5, EventKind::ServiceStart));
        assert_abs_diff_eq!(kinds[2].0, 0.9);
        assert_eq!(kinds[2].1, EventKind::Departure);
        assert_eq!(path.q_at(0.7), 1);
        assert_eq!(path.q_at(0.9), 0);
    }

    #[test]
    fn renewal_deterministic_single_server() {
        let feed = ArrivalFeed::Renewal {
            dist: det(1.0),
            mode: Mode::Ordinary,
        };
        let cfg = QueueConfig::new(1, feed, det(0.4), Init::Empty, 3.5, 1);
        let path = simulate(&cfg).unwrap();
        let deps: Vec<f64> = path
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Departure)
            .map(|e| e.time)
            .collect();
        assert_eq!(deps.len(), 3);
        assert_abs_diff_eq!(deps[2], 3.4);
    }

    #[test]
    fn all_busy_residual_fills_every_server() {
        let feed = ArrivalFeed::Renewal {
            dist: DistSpec::exponential(9.0).unwrap(),
            mode: Mode::Equilibrium,
        };
        let cfg = QueueConfig::new(10, feed, DistSpec::exponential(1.0).unwrap(), Init::AllBusyResidual, 5.0, 3);
        let path = simulate(&cfg).unwrap();
        assert_eq!(path.initial, 10);
        let starts_at_zero = path
            .events
            .iter()
            .take_while(|e| e.time == 0.0 && e.kind == EventKind::ServiceStart)
            .count();
        assert_eq!(starts_at_zero, 10);
    }

    #[test]
    fn poisson_stationary_init_counts() {
        let feed = ArrivalFeed::Renewal {
            dist: DistSpec::exponential(9.0).unwrap(),
            mode: Mode::Equilibrium,
        };
        let cfg = QueueConfig::new(10, feed, DistSpec::exponential(1.0).unwrap(), Init::PoissonStationary, 1.0, 0);
        let mut total = 0;
        for r in 0..400 {
            total += cfg.clone().with_replication(r).materialize().unwrap().initial.len();
        }
        // Poisson(9): mean 9, sd of the sum sqrt(3600) = 60.
        assert!((total as f64 - 3600.0).abs() < 4.0 * 60.0, "{total}");
    }

    #[test]
    fn departures_precede_simultaneous_arrivals() {
        // Job 0 leaves at 1.0 exactly when job 1 arrives; the server is reused.
        let cfg = QueueConfig::new(1, explicit(&[0.0, 1.0], &[1.0, 1.0]), det(1.0), Init::Empty, 5.0, 0);
        let path = simulate(&cfg).unwrap();
        let at_one: Vec<EventKind> = path.events.iter().filter(|e| e.time == 1.0).map(|e| e.kind).collect();
        assert_eq!(at_one, vec![EventKind::Departure, EventKind::Arrival, EventKind::ServiceStart]);
        assert!(path.in_system.iter().all(|&q| q <= 1));
    }

    #[test]
    fn lowest_idle_server_is_used() {
        let cfg = QueueConfig::new(3, explicit(&[0.0, 0.1, 0.2, 5.0], &[1.0, 10.0, 10.0, 1.0]), det(1.0), Init::Empty, 20.0, 0);
        let jobs = simulate(&cfg).unwrap().jobs();
        assert_eq!(jobs.iter().map(|j| j.server.unwrap()).collect::<Vec<_>>(), vec![0, 1, 2, 0]);
    }

    #[test]
    fn event_cap_is_a_resource_error() {
        let feed = ArrivalFeed::Renewal {
            dist: DistSpec::exponential(1.0).unwrap(),
            mode: Mode::Ordinary,
        };
        let mut cfg = QueueConfig::new(1, feed, det(0.5), Init::Empty, 1e6, 0);
        cfg.max_events = 100;
        assert!(matches!(simulate(&cfg), Err(Error::Resource(_))));
    }

    #[test]
    fn stride_sampler_matches_path_sampling() {
        let feed = ArrivalFeed::Renewal {
            dist: DistSpec::exponential(4.5).unwrap(),
            mode: Mode::Equilibrium,
        };
        let cfg = QueueConfig::new(5, feed, DistSpec::erlang(2, 2.0).unwrap(), Init::AllBusyResidual, 200.0, 8);
        let path = simulate(&cfg).unwrap();
        let direct = steady_state_samples(&path, 20.0, 0.5).unwrap();
        let mut s = StrideSampler::new(5, 20.0, 0.5, 200.0).unwrap();
        simulate_with(&cfg, &mut s).unwrap();
        assert_eq!(direct, s.samples);
        assert_eq!(direct.len(), 361);
    }

    #[test]
    fn steady_state_samples_on_toy_path() {
        let cfg = QueueConfig::new(1, explicit(&[1.0, 1.5], &[2.0, 2.0]), det(1.0), Init::Empty, 6.0, 0);
        let path = simulate(&cfg).unwrap();
        let q: Vec<usize> = steady_state_samples(&path, 0.0, 1.0).unwrap().iter().map(|s| s.q).collect();
        // Q: 0 on [0,1), 1 on [1,1.5), 2 on [1.5,3), 1 on [3,5), 0 after.
        assert_eq!(q, vec![0, 1, 2, 1, 1, 0, 0]);
        let x: Vec<usize> = steady_state_samples(&path, 0.0, 1.0).unwrap().iter().map(|s| s.q_excess).collect();
        assert_eq!(x, vec![0, 0, 1, 0, 0, 0, 0]);
        assert!(steady_state_samples(&path, 6.0, 1.0).is_err());
        assert!(steady_state_samples(&path, 0.0, 0.0).is_err());
    }

    #[test]
    fn dominance_identity_and_extra_arrival() {
        let base = QueueConfig::new(2, explicit(&[0.1, 0.2, 0.3, 2.0], &[1.0, 1.5, 0.2, 0.7]), det(1.0), Init::Explicit { processing: vec![0.5] }, 10.0, 0);
        let r = dominance_check(&base, &base, &CouplingPlan::Identity).unwrap();
        assert!(r.violations.is_empty());
        let aug = QueueConfig {
            arrival: explicit(&[0.1, 0.15, 0.2, 0.3, 2.0], &[1.0, 9.0, 1.5, 0.2, 0.7]),
            ..base.clone()
        };
        let r = dominance_check(&base, &aug, &CouplingPlan::MatchTimes).unwrap();
        assert!(r.violations.is_empty());
    }

    #[test]
    fn dominance_preconditions() {
        let over = QueueConfig::new(1, explicit(&[], &[]), det(1.0), Init::Explicit { processing: vec![1.0, 1.0] }, 5.0, 0);
        match dominance_check(&over, &over, &CouplingPlan::Identity) {
            Err(Error::Precondition { condition, .. }) => assert_eq!(condition, "(i)"),
            other => panic!("{other:?}"),
        }
        let base = QueueConfig::new(1, explicit(&[1.0], &[1.0]), det(1.0), Init::Empty, 5.0, 0);
        let shifted = QueueConfig::new(1, explicit(&[1.5], &[1.0]), det(1.0), Init::Empty, 5.0, 0);
        assert!(matches!(
            dominance_check(&base, &shifted, &CouplingPlan::MatchTimes),
            Err(Error::Precondition { condition: "(iii)", .. })
        ));
        let other_service = QueueConfig::new(1, explicit(&[1.0], &[2.0]), det(1.0), Init::Empty, 5.0, 0);
        assert!(matches!(
            dominance_check(&base, &other_service, &CouplingPlan::Identity),
            Err(Error::Precondition { condition: "(iv)", .. })
        ));
    }

    #[test]
    fn occupancy_accrues_time() {
        let cfg = QueueConfig::new(1, explicit(&[1.0], &[2.0]), det(1.0), Init::Empty, 4.0, 0);
        let mut occ = OccupancyStats::new(0.0);
        simulate_with(&cfg, &mut occ).unwrap();
        assert_eq!(occ.time_in_state, vec![2.0, 2.0]);
        assert_abs_diff_eq!(occ.fraction_at_least(1), 0.5);
        let mut late = OccupancyStats::new(2.5);
        simulate_with(&cfg, &mut late).unwrap();
        assert_eq!(late.time_in_state, vec![1.0, 0.5]);
    }

    #[test]
    fn config_round_trip() {
        let feed = ArrivalFeed::Renewal {
            dist: DistSpec::exponential(9.0).unwrap(),
            mode: Mode::Equilibrium,
        };
        let cfg = QueueConfig::new(10, feed, DistSpec::erlang(2, 2.0).unwrap(), Init::PoissonStationary, 5.0, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<QueueConfig>(&text).unwrap(), cfg);
    }
}
