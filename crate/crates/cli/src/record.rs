//! Benchmark records and the append-only CSV sink.

use std::io::Write;

pub const HEADER: [&str; 10] = ["method", "tier", "tier_value", "task", "metric", "value", "wall_seconds", "rep", "seed", "threads"];

/// Metric name of a record standing for a lane that did not run.
pub const SKIPPED: &str = "skipped";
/// Metric name of a record standing for a numerical failure.
pub const FAILED: &str = "failed";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRecord {
    pub method: String,
    /// 0 for exact, 1-based position in the sweep otherwise.
    pub tier: usize,
    pub tier_value: String,
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub wall_seconds: f64,
    /// Repetition index, or `all` for summaries across repetitions.
    pub rep: String,
    pub seed: String,
    pub threads: usize,
}

/// Writes records as CSV and flushes after each one so partial runs stay
/// readable.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    written: usize,
    failed: usize,
    skipped: usize,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> csv::Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(HEADER)?;
        writer.flush()?;
        Ok(Self { writer, written: 0, failed: 0, skipped: 0 })
    }

    pub fn push(&mut self, r: &BenchmarkRecord) -> csv::Result<()> {
        let tier = r.tier.to_string();
        // Debug formatting is the shortest exact round trip, with exponents.
        let value = format!("{:?}", r.value);
        let wall = format!("{:?}", r.wall_seconds);
        let threads = r.threads.to_string();
        self.writer.write_record([
            r.method.as_str(),
            &tier,
            &r.tier_value,
            &r.task,
            &r.metric,
            &value,
            &wall,
            &r.rep,
            &r.seed,
            &threads,
        ])?;
        self.writer.flush()?;
        self.written += 1;
        match r.metric.as_str() {
            FAILED => self.failed += 1,
            SKIPPED => self.skipped += 1,
            _ => {}
        }
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn failed(&self) -> usize {
        self.failed
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn into_inner(self) -> W {
        self.writer.into_inner().map_err(|e| e.into_error()).expect("flushed after every record")
    }
}
