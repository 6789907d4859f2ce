//! Deterministic discrete-event kernel.
//!
//! The engine owns a simulation clock and a future-event list ordered by
//! `(time, seq)`, where `seq` is issued in schedule-call order. Events with
//! equal time therefore dispatch FIFO. Every dispatched event becomes one
//! [`LogRecord`]; the log is append-only and is the only input KPI code reads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};

use chrono::{DateTime, NaiveDateTime};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Whole seconds since 1970-01-01T00:00:00 (naive terminal-local time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

pub const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_secs(secs: u64) -> Self {
        SimTime(secs)
    }

    pub const fn secs(self) -> u64 {
        self.0
    }

    /// Fails for instants before the epoch.
    pub fn from_datetime(dt: NaiveDateTime) -> Option<Self> {
        u64::try_from(dt.and_utc().timestamp()).ok().map(SimTime)
    }

    pub fn to_datetime(self) -> NaiveDateTime {
        DateTime::from_timestamp(self.0 as i64, 0)
            .expect("u64 seconds within chrono range")
            .naive_utc()
    }

    pub fn parse_iso(s: &str) -> Option<Self> {
        NaiveDateTime::parse_from_str(s.trim(), ISO_FORMAT)
            .ok()
            .and_then(Self::from_datetime)
    }

    pub fn iso(self) -> String {
        self.to_datetime().format(ISO_FORMAT).to_string()
    }

    pub fn add_secs(self, secs: u64) -> Self {
        SimTime(self.0 + secs)
    }

    /// Saturating difference in seconds.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.iso())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<E> {
    pub time: SimTime,
    pub seq: u64,
    pub body: E,
}

struct Queued<E>(Event<E>);

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    // BinaryHeap is a max-heap; reverse so the smallest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule at {requested} (clock is {clock})")]
    SchedulingInPast { requested: SimTime, clock: SimTime },
}

#[derive(Debug, Error)]
pub enum RunError<E: fmt::Debug, H: std::error::Error + 'static> {
    #[error("run end {t_end} is before the clock {clock}")]
    EndInPast { t_end: SimTime, clock: SimTime },
    #[error("handler failed at {} (seq {}): {source}", .event.time, .event.seq)]
    Handler {
        event: Event<E>,
        #[source]
        source: H,
    },
}

/// Future-event list plus clock.
pub struct Engine<E> {
    clock: SimTime,
    next_seq: u64,
    dispatched: u64,
    queue: BinaryHeap<Queued<E>>,
}

impl<E> Engine<E> {
    pub fn new(start: SimTime) -> Self {
        Self {
            clock: start,
            next_seq: 0,
            dispatched: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Enqueues `body` at `t` and returns its sequence number.
    pub fn schedule(&mut self, t: SimTime, body: E) -> Result<u64, ScheduleError> {
        if t < self.clock {
            return Err(ScheduleError::SchedulingInPast {
                requested: t,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event { time: t, seq, body }));
        Ok(seq)
    }

    /// Schedules `delay` seconds after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: u64, body: E) -> u64 {
        let t = self.clock.add_secs(delay);
        self.schedule(t, body).expect("non-negative delay")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|q| q.0.time)
    }

    /// Pops the minimum `(time, seq)` event and advances the clock to it.
    pub fn step(&mut self) -> Option<Event<E>> {
        let Queued(ev) = self.queue.pop()?;
        self.clock = ev.time;
        self.dispatched += 1;
        Some(ev)
    }

    /// Dispatches every event with `time <= t_end` through `handler`.
    ///
    /// The handler's return value becomes the record's detail. The clock
    /// ends at `t_end`; later events stay pending.
    pub fn run_until<D, H, F>(
        &mut self,
        t_end: SimTime,
        mut handler: F,
    ) -> Result<SimulationLog<E, D>, RunError<E, H>>
    where
        E: fmt::Debug,
        H: std::error::Error + 'static,
        F: FnMut(&mut Self, &Event<E>) -> Result<D, H>,
    {
        if t_end < self.clock {
            return Err(RunError::EndInPast {
                t_end,
                clock: self.clock,
            });
        }
        let mut log = SimulationLog::default();
        while self.peek_time().is_some_and(|t| t <= t_end) {
            let event = self.step().expect("peeked");
            match handler(self, &event) {
                Ok(detail) => log.records.push(LogRecord { event, detail }),
                Err(source) => return Err(RunError::Handler { event, source }),
            }
        }
        self.clock = t_end;
        Ok(log)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord<E, D> {
    pub event: Event<E>,
    pub detail: D,
}

/// Append-only record of dispatched events.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog<E, D> {
    records: Vec<LogRecord<E, D>>,
}

impl<E, D> Default for SimulationLog<E, D> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
        }
    }
}

/// The three free-text columns of a canonical log line.
pub struct RecordFields {
    pub kind: &'static str,
    pub entity: String,
    pub detail: String,
}

pub const LOG_HEADER: &str = "time_iso,seq,kind,entity,detail";

impl<E, D> SimulationLog<E, D> {
    pub fn records(&self) -> &[LogRecord<E, D>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, other: SimulationLog<E, D>) {
        self.records.extend(other.records);
    }

    /// Writes `time_iso,seq,kind,entity,detail` lines (LF, UTF-8) after a header.
    ///
    /// `fields` must not produce commas or newlines; this is checked.
    pub fn write_canonical<W: Write>(
        &self,
        mut w: W,
        fields: impl Fn(&LogRecord<E, D>) -> RecordFields,
    ) -> io::Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for rec in &self.records {
            let f = fields(rec);
            for col in [f.kind, f.entity.as_str(), f.detail.as_str()] {
                if col.contains([',', '\n', '\r']) {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("log field {col:?} contains a separator"),
                    ));
                }
            }
            writeln!(
                w,
                "{},{},{},{},{}",
                rec.event.time, rec.event.seq, f.kind, f.entity, f.detail
            )?;
        }
        Ok(())
    }

    pub fn to_canonical_string(&self, fields: impl Fn(&LogRecord<E, D>) -> RecordFields) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf, fields)
            .expect("writing to a Vec cannot fail except on separator check");
        String::from_utf8(buf).expect("fields are UTF-8")
    }
}

/// Seeded randomness source: ChaCha8 with the 64-bit seed expanded by
/// `SeedableRng::seed_from_u64`. The stream is fixed by the ChaCha
/// specification, so draws are identical on every platform.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `[lo, hi]` by widening multiply with rejection
    /// (unbiased; independent of any `rand` version's range sampler).
    pub fn uniform_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range");
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        let range = span + 1;
        let zone = u64::MAX - (u64::MAX - range + 1) % range;
        loop {
            let x = self.next_u64();
            let wide = (x as u128) * (range as u128);
            if (wide as u64) <= zone {
                return lo + (wide >> 64) as u64;
            }
        }
    }
}
