//! Sample sources for the single-pass model and the bookkeeping around them.
//!
//! Every streaming routine reads through a [`SampleFeed`], which enforces the
//! sample budget, counts deliveries and owns the [`MemoryMeter`] used to report
//! peak resident state.

use std::cell::Cell;
use std::io::BufRead;
use std::path::Path;
use std::rc::Rc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Dataset, FilterStack, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceOrigin {
    Synthetic,
    FileReplay,
    Memory,
    External,
}

/// A single-consumer stream of samples in `R^d`.
pub trait SampleSource {
    fn dim(&self) -> usize;

    /// Writes the next sample into `out` (length `dim`). Returns `false` once the
    /// stream is exhausted.
    fn next_into(&mut self, out: &mut [f64]) -> bool;

    /// Ground-truth label of the most recent sample, when the source knows it.
    fn last_label(&self) -> Option<Label> {
        None
    }

    fn origin(&self) -> SourceOrigin {
        SourceOrigin::External
    }
}

impl<S: SampleSource + ?Sized> SampleSource for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn next_into(&mut self, out: &mut [f64]) -> bool {
        (**self).next_into(out)
    }
    fn last_label(&self) -> Option<Label> {
        (**self).last_label()
    }
    fn origin(&self) -> SourceOrigin {
        (**self).origin()
    }
}

/// Replays a finite dataset once, in order.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    data: Arc<Dataset>,
    pos: usize,
}

impl ReplaySource {
    pub fn new(data: Arc<Dataset>) -> Self {
        ReplaySource { data, pos: 0 }
    }
}

impl SampleSource for ReplaySource {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) -> bool {
        if self.pos >= self.data.len() {
            return false;
        }
        out.copy_from_slice(self.data.row(self.pos));
        self.pos += 1;
        true
    }

    fn last_label(&self) -> Option<Label> {
        let labels = self.data.labels()?;
        labels.get(self.pos.checked_sub(1)?).copied()
    }

    fn origin(&self) -> SourceOrigin {
        SourceOrigin::Memory
    }
}

/// I.i.d. draws (with replacement) from the uniform distribution over a finite
/// population. Unbounded.
#[derive(Debug, Clone)]
pub struct PopulationSource {
    data: Arc<Dataset>,
    rng: ChaCha8Rng,
    last: usize,
}

impl PopulationSource {
    pub fn new(data: Arc<Dataset>, seed: u64) -> Self {
        PopulationSource {
            data,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last: 0,
        }
    }
}

impl SampleSource for PopulationSource {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) -> bool {
        let n = self.data.len();
        if n == 0 {
            return false;
        }
        self.last = self.rng.random_range(0..n);
        out.copy_from_slice(self.data.row(self.last));
        true
    }

    fn last_label(&self) -> Option<Label> {
        self.data.labels().map(|l| l[self.last])
    }

    fn origin(&self) -> SourceOrigin {
        SourceOrigin::Memory
    }
}

/// Streams a dataset file line by line without loading it.
pub struct FileSource {
    lines: std::io::Lines<std::io::BufReader<std::fs::File>>,
    dim: usize,
    pending: Option<(Vec<f64>, Option<Label>)>,
    last: Option<Label>,
}

impl FileSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        let mut lines = std::io::BufReader::new(f).lines();
        // The first line fixes the dimension.
        loop {
            match lines.next() {
                None => return Err(Error::invalid("dataset file contains no points")),
                Some(line) => {
                    let line = line?;
                    if let Some(parsed) = parse_line(&line)? {
                        let dim = parsed.0.len();
                        return Ok(FileSource {
                            lines,
                            dim,
                            pending: Some(parsed),
                            last: None,
                        });
                    }
                }
            }
        }
    }
}

fn parse_line(line: &str) -> Result<Option<(Vec<f64>, Option<Label>)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut tokens = line.split_whitespace().peekable();
    let label = match tokens.peek() {
        Some(&"inlier") => Some(Label::Inlier),
        Some(&"outlier") => Some(Label::Outlier),
        _ => None,
    };
    if label.is_some() {
        tokens.next();
    }
    let coords = tokens
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("cannot parse coordinate {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some((coords, label)))
}

impl SampleSource for FileSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_into(&mut self, out: &mut [f64]) -> bool {
        if let Some((coords, label)) = self.pending.take() {
            out.copy_from_slice(&coords);
            self.last = label;
            return true;
        }
        for line in self.lines.by_ref() {
            let Ok(line) = line else { return false };
            match parse_line(&line) {
                Ok(Some((coords, label))) if coords.len() == self.dim => {
                    out.copy_from_slice(&coords);
                    self.last = label;
                    return true;
                }
                Ok(None) => continue,
                // Malformed lines end the stream.
                _ => return false,
            }
        }
        false
    }

    fn last_label(&self) -> Option<Label> {
        self.last
    }

    fn origin(&self) -> SourceOrigin {
        SourceOrigin::FileReplay
    }
}

/// Adapts a closure into a source.
pub struct FnSource<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&mut [f64]) -> bool> FnSource<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSource { dim, f }
    }
}

impl<F: FnMut(&mut [f64]) -> bool> SampleSource for FnSource<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn next_into(&mut self, out: &mut [f64]) -> bool {
        (self.f)(out)
    }
}

/// Wraps a source and counts every delivered sample.
pub struct CountingSource<S> {
    inner: S,
    delivered: Rc<Cell<u64>>,
}

impl<S: SampleSource> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        CountingSource {
            inner,
            delivered: Rc::new(Cell::new(0)),
        }
    }

    /// Shared handle to the delivery counter, readable after the source moves.
    pub fn counter(&self) -> Rc<Cell<u64>> {
        self.delivered.clone()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered.get()
    }
}

impl<S: SampleSource> SampleSource for CountingSource<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn next_into(&mut self, out: &mut [f64]) -> bool {
        let ok = self.inner.next_into(out);
        if ok {
            self.delivered.set(self.delivered.get() + 1);
        }
        ok
    }
    fn last_label(&self) -> Option<Label> {
        self.inner.last_label()
    }
    fn origin(&self) -> SourceOrigin {
        self.inner.origin()
    }
}

/// Tracks the number of live scalars attributable to algorithm state.
#[derive(Debug, Default)]
pub struct MemoryMeter {
    live: Cell<usize>,
    peak: Cell<usize>,
}

impl MemoryMeter {
    pub fn new() -> Rc<Self> {
        Rc::new(MemoryMeter::default())
    }

    /// Charges `n` scalars until the returned guard is dropped.
    pub fn charge(self: &Rc<Self>, n: usize) -> Charge {
        let live = self.live.get() + n;
        self.live.set(live);
        if live > self.peak.get() {
            self.peak.set(live);
        }
        Charge {
            meter: self.clone(),
            n,
        }
    }

    pub fn live(&self) -> usize {
        self.live.get()
    }

    pub fn peak(&self) -> usize {
        self.peak.get()
    }
}

#[must_use = "the charge is released when the guard drops"]
#[derive(Debug)]
pub struct Charge {
    meter: Rc<MemoryMeter>,
    n: usize,
}

impl Charge {
    /// Changes the charged amount in place.
    pub fn resize(&mut self, n: usize) {
        let live = self.meter.live.get() - self.n + n;
        self.meter.live.set(live);
        if live > self.meter.peak.get() {
            self.meter.peak.set(live);
        }
        self.n = n;
    }
}

impl Drop for Charge {
    fn drop(&mut self) {
        self.meter.live.set(self.meter.live.get() - self.n);
    }
}

const MAX_CONSECUTIVE_REJECTIONS: u64 = 1_000_000;

/// Budgeted, counted access to a [`SampleSource`].
pub struct SampleFeed<'s> {
    source: &'s mut dyn SampleSource,
    consumed: u64,
    budget: u64,
    meter: Rc<MemoryMeter>,
}

impl<'s> SampleFeed<'s> {
    pub fn new(source: &'s mut dyn SampleSource) -> Self {
        SampleFeed {
            source,
            consumed: 0,
            budget: u64::MAX,
            meter: MemoryMeter::new(),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn meter(&self) -> Rc<MemoryMeter> {
        self.meter.clone()
    }

    /// Draws one sample from `P`.
    pub fn draw(&mut self, out: &mut [f64]) -> Result<()> {
        if self.consumed >= self.budget || !self.source.next_into(out) {
            return Err(Error::StreamExhausted {
                consumed: self.consumed,
            });
        }
        self.consumed += 1;
        Ok(())
    }

    /// Draws one sample from `P` and reports its weight under `stack`.
    pub fn draw_weighted(&mut self, stack: &FilterStack, out: &mut [f64]) -> Result<bool> {
        self.draw(out)?;
        Ok(stack.keeps_unchecked(out))
    }

    /// Draws from `P_w` by rejection against `stack`.
    pub fn draw_filtered(&mut self, stack: &FilterStack, out: &mut [f64]) -> Result<()> {
        let mut rejected = 0u64;
        loop {
            if self.draw_weighted(stack, out)? {
                return Ok(());
            }
            rejected += 1;
            if rejected >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::degenerate(format!(
                    "{rejected} consecutive samples rejected by the filter stack"
                )));
            }
        }
    }
}
