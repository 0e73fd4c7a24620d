//! Ordinary and equilibrium renewal streams, their superposition, and Monte
//! Carlo estimators of centered count moments and the variance function.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::par::{self, Policy};
use crate::rng::{SimRng, StreamKey};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every interval is drawn from the renewal law.
    Ordinary,
    /// The first interval is drawn from the residual-life law, giving
    /// stationary increments.
    Equilibrium,
}

/// A renewal counting process that draws its intervals lazily.
#[derive(Debug, Clone)]
pub struct RenewalStream {
    dist: DistSpec,
    mode: Mode,
    rng: SimRng,
    emitted: u64,
    last_time: f64,
    /// Next event time and the interval that produced it, once drawn.
    pending: Option<(f64, f64)>,
}

impl RenewalStream {
    pub fn new(dist: DistSpec, mode: Mode, rng: SimRng) -> Self {
        Self {
            dist,
            mode,
            rng,
            emitted: 0,
            last_time: 0.0,
            pending: None,
        }
    }

    pub fn dist(&self) -> &DistSpec {
        &self.dist
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of events emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Time of the last emitted event (0 before the first).
    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    fn draw(&mut self) -> Result<(f64, f64)> {
        if let Some(p) = self.pending {
            return Ok(p);
        }
        let interval = if self.emitted == 0 && self.mode == Mode::Equilibrium {
            self.dist.residual_sample(&mut self.rng)?
        } else {
            self.dist.sample(&mut self.rng)
        };
        let p = (self.last_time + interval, interval);
        self.pending = Some(p);
        Ok(p)
    }

    /// Time of the next event without consuming it.
    pub fn peek(&mut self) -> Result<f64> {
        Ok(self.draw()?.0)
    }

    /// Length of the interval ending at the next event.
    pub fn pending_interval(&mut self) -> Result<f64> {
        Ok(self.draw()?.1)
    }

    /// Consumes and returns the next event time.
    pub fn next_event(&mut self) -> Result<f64> {
        let (time, _) = self.draw()?;
        self.pending = None;
        self.emitted += 1;
        self.last_time = time;
        Ok(time)
    }

    /// `N(t)`, counting events at times `<= t`. Advances the stream; `t` must
    /// not precede the last emitted event.
    pub fn count_at(&mut self, t: f64) -> Result<u64> {
        if t < self.last_time {
            return Err(Error::validation(
                "t",
                format!("stream already advanced to {} > {t}", self.last_time),
            ));
        }
        while self.peek()? <= t {
            self.next_event()?;
        }
        Ok(self.emitted)
    }
}

/// An event of a pooled process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledEvent {
    pub time: f64,
    /// Index of the component stream that fired.
    pub source: usize,
    /// The interval of that stream ending at this event.
    pub interval: f64,
}

#[derive(Debug, Clone, Copy)]
/// Min-heap key ordered by time, then index.
pub(crate) struct TimeKey {
    pub(crate) time: f64,
    pub(crate) source: usize,
}

impl PartialEq for TimeKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.source.cmp(&other.source))
    }
}

/// Superposition of renewal streams as a lazy k-way merge. Simultaneous
/// events are emitted lowest stream index first.
#[derive(Debug, Clone)]
pub struct PooledStreams {
    streams: Vec<RenewalStream>,
    heap: BinaryHeap<Reverse<TimeKey>>,
    events: u64,
}

impl PooledStreams {
    pub fn new(mut streams: Vec<RenewalStream>) -> Result<Self> {
        let mut heap = BinaryHeap::with_capacity(streams.len());
        for (source, s) in streams.iter_mut().enumerate() {
            heap.push(Reverse(TimeKey {
                time: s.peek()?,
                source,
            }));
        }
        Ok(Self {
            streams,
            heap,
            events: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn stream(&self, i: usize) -> &RenewalStream {
        &self.streams[i]
    }

    pub fn stream_mut(&mut self, i: usize) -> &mut RenewalStream {
        &mut self.streams[i]
    }

    /// Events emitted so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|k| k.0.time)
    }

    pub fn next_event(&mut self) -> Result<PooledEvent> {
        let Reverse(TimeKey { source, .. }) = self
            .heap
            .pop()
            .ok_or_else(|| Error::validation("streams", "pooled process has no streams"))?;
        let s = &mut self.streams[source];
        let interval = s.pending_interval()?;
        let time = s.next_event()?;
        self.heap.push(Reverse(TimeKey {
            time: s.peek()?,
            source,
        }));
        self.events += 1;
        Ok(PooledEvent {
            time,
            source,
            interval,
        })
    }
}

/// `n` independent equilibrium streams of `dist`, stream `i` drawing from
/// generator `key.rng(first_stream + i)`.
pub fn equilibrium_streams(
    dist: &DistSpec,
    n: usize,
    key: StreamKey,
    first_stream: u64,
) -> Vec<RenewalStream> {
    (0..n)
        .map(|i| RenewalStream::new(*dist, Mode::Equilibrium, key.rng(first_stream + i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub reps: u64,
}

/// Monte Carlo estimate of `E|sum_i N_i(t) - n t / E[X]|^r` over `n` i.i.d.
/// equilibrium renewal processes, with a batch-means standard error.
pub fn centered_moment_mc(
    spec: &DistSpec,
    n: usize,
    t: f64,
    r: u32,
    reps: u64,
    key: StreamKey,
) -> Result<MomentEstimate> {
    if r < 2 {
        return Err(Error::validation("r", "moment order must be at least 2"));
    }
    if !spec.has_finite_moment(r) {
        return Err(Error::validation(
            "spec",
            format!("order-{r} moment is not finite"),
        ));
    }
    if reps < 1000 {
        return Err(Error::validation("reps", "at least 1000 replications required"));
    }
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::validation("t", "must be a non-negative finite time"));
    }
    let centre = n as f64 * t / spec.mean();
    let values: Vec<f64> = par::try_map_indexed(reps as usize, |rep| {
        let key = key.with_replication(rep as u64);
        let mut total = 0u64;
        for mut s in equilibrium_streams(spec, n, key, 0) {
            total += s.count_at(t)?;
        }
        Ok::<_, Error>((total as f64 - centre).abs().powi(r as i32))
    })?;
    let (estimate, std_err) = stats::batch_means(&values, 50);
    Ok(MomentEstimate {
        estimate,
        std_err,
        reps,
    })
}

/// An arithmetic time grid `0, h, 2h, ..., (len-1) h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticGrid {
    pub spacing: f64,
    pub len: usize,
}

impl ArithmeticGrid {
    /// Grid with spacing `h` covering `[0, horizon]`.
    pub fn covering(spacing: f64, horizon: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::validation("spacing", "must be positive"));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be non-negative"));
        }
        let steps = (horizon / spacing - 1e-9).ceil().max(0.0) as usize;
        Ok(Self {
            spacing,
            len: steps + 1,
        })
    }

    /// Validates that `times` is `0, h, 2h, ...` up to rounding.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::validation("grid", "must start at 0"));
        }
        if times.len() == 1 {
            return Ok(Self {
                spacing: 1.0,
                len: 1,
            });
        }
        let h = times[1];
        if !(h > 0.0) {
            return Err(Error::validation("grid", "must be strictly increasing"));
        }
        for (i, &t) in times.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-9 * h.max(t) {
                return Err(Error::validation(
                    "grid",
                    format!("not arithmetic: point {i} is {t}, expected {}", i as f64 * h),
                ));
            }
        }
        Ok(Self {
            spacing: h,
            len: times.len(),
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.time(i)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len - 1)
    }
}

/// Pointwise estimate of `V(t) = Var N_e(t)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTable {
    pub times: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub reps: u64,
}

#[derive(Serialize)]
struct VarianceRow {
    t: f64,
    #[serde(rename = "V_hat")]
    v_hat: f64,
    stderr: f64,
    reps: u64,
    seed: u64,
}

impl VarianceTable {
    pub fn write_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.times.len() {
            w.serialize(VarianceRow {
                t: self.times[i],
                v_hat: self.v_hat[i],
                stderr: self.stderr[i],
                reps: self.reps,
                seed,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

const VARIANCE_CHUNK: u64 = 256;

/// Estimates `V(t)` at each grid time from `reps` independent equilibrium
/// streams, using the exact mean `t / E[X]`. No smoothing is applied.
pub fn variance_function(
    spec: &DistSpec,
    grid: &[f64],
    reps: u64,
    key: StreamKey,
) -> Result<VarianceTable> {
    variance_function_with(Policy::default(), spec, grid, reps, key)
}

pub fn variance_function_with(
    policy: Policy,
    spec: &DistSpec,
    grid: &[f64],
    reps: u64,
    key: StreamKey,
) -> Result<VarianceTable> {
    if grid.first() != Some(&0.0) {
        return Err(Error::validation("grid", "must start at 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("grid", "must be strictly increasing and finite"));
    }
    if reps < 10_000 {
        return Err(Error::validation("reps", "at least 10^4 replications required"));
    }
    let m = grid.len();
    let rate = spec.rate();
    let chunks = reps.div_ceil(VARIANCE_CHUNK);
    // Per-chunk sums of d^2 and d^4 with d = N(t) - t/E[X].
    let partial = par::map_indexed(policy, chunks as usize, |c| -> Result<Vec<(f64, f64)>> {
        let mut acc = vec![(0.0, 0.0); m];
        let lo = c as u64 * VARIANCE_CHUNK;
        let hi = (lo + VARIANCE_CHUNK).min(reps);
        for rep in lo..hi {
            let mut s = RenewalStream::new(*spec, Mode::Equilibrium, key.with_replication(rep).rng(0));
            for (j, &t) in grid.iter().enumerate() {
                let d = s.count_at(t)? as f64 - rate * t;
                let d2 = d * d;
                acc[j].0 += d2;
                acc[j].1 += d2 * d2;
            }
        }
        Ok(acc)
    });
    let mut sum = vec![(0.0, 0.0); m];
    for chunk in partial {
        for (a, b) in sum.iter_mut().zip(chunk?) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }
    let r = reps as f64;
    let v_hat: Vec<f64> = sum.iter().map(|s| s.0 / r).collect();
    let stderr = sum
        .iter()
        .zip(&v_hat)
        .map(|(s, v)| ((s.1 / r - v * v).max(0.0) / (r - 1.0)).sqrt())
        .collect();
    Ok(VarianceTable {
        times: grid.to_vec(),
        v_hat,
        stderr,
        reps,
    })
}

/// Covariance of a stationary-increment process from its variance function:
/// `Cov(s, t) = (V(s) + V(t) - V(|t - s|)) / 2`, with `v[i] = V(times[i])` on
/// an arithmetic grid starting at 0.
pub fn covariance_matrix(times: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    ArithmeticGrid::from_times(times)?;
    if v.len() != times.len() {
        return Err(Error::validation("V", "length must match the grid"));
    }
    let m = times.len();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        0.5 * (v[i] + v[j] - v[i.abs_diff(j)])
    }))
}

/// [`covariance_matrix`] with `V` given as a function.
pub fn covariance_matrix_fn<F: Fn(f64) -> f64>(times: &[f64], v: F) -> Result<DMatrix<f64>> {
    let values: Vec<f64> = times.iter().map(|&t| v(t)).collect();
    covariance_matrix(times, &values)
}
