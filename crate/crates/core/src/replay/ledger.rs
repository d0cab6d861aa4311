use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Index range and classes of one batch. Indices are global, 1-based and
/// chronological.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRecord {
    pub batch: u64,
    pub first: u64,
    pub last: u64,
    pub classes: Vec<u8>,
}

impl BatchRecord {
    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: u64) -> bool {
        (self.first..=self.last).contains(&index)
    }
}

/// Batch boundaries seen so far. Together with the model checkpoints and
/// frozen assignments this is all a run keeps between batches.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchLedger {
    records: Vec<BatchRecord>,
}

impl BatchLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens the next batch with `count` samples.
    pub fn push(&mut self, count: usize, classes: Vec<u8>) -> Result<&BatchRecord> {
        if count == 0 {
            return Err(Error::InvalidScenario("empty batch".into()));
        }
        let first = self.total() + 1;
        self.records.push(BatchRecord {
            batch: self.records.len() as u64 + 1,
            first,
            last: first + count as u64 - 1,
            classes,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// `N`, the number of samples presented so far.
    pub fn total(&self) -> u64 {
        self.records.last().map_or(0, |r| r.last)
    }

    pub fn records(&self) -> &[BatchRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn current(&self) -> Option<&BatchRecord> {
        self.records.last()
    }

    pub fn record(&self, batch: u64) -> Option<&BatchRecord> {
        batch.checked_sub(1).and_then(|b| self.records.get(b as usize))
    }

    pub fn batch_of(&self, index: u64) -> Result<&BatchRecord> {
        let total = self.total();
        if index == 0 || index > total {
            return Err(Error::IndexOutOfRange { index, total });
        }
        let pos = self.records.partition_point(|r| r.last < index);
        Ok(&self.records[pos])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch,first,last,classes\n");
        for r in &self.records {
            let classes: Vec<String> = r.classes.iter().map(u8::to_string).collect();
            writeln!(out, "{},{},{},{}", r.batch, r.first, r.last, classes.join(";")).expect("string write");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |n: usize| Error::InvalidCheckpoint(format!("ledger csv line {n}"));
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some("batch,first,last,classes") {
            return Err(bad(1));
        }
        let mut ledger = Self::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(n + 1));
            }
            let parse = |s: &str| s.parse::<u64>().map_err(|_| bad(n + 1));
            let (batch, first, last) = (parse(f[0])?, parse(f[1])?, parse(f[2])?);
            let classes = if f[3].is_empty() {
                Vec::new()
            } else {
                f[3].split(';')
                    .map(|c| c.parse::<u8>().map_err(|_| bad(n + 1)))
                    .collect::<Result<Vec<_>>>()?
            };
            if last < first {
                return Err(bad(n + 1));
            }
            let record = ledger.push((last - first + 1) as usize, classes)?.clone();
            if record.batch != batch || record.first != first {
                return Err(bad(n + 1));
            }
        }
        Ok(ledger)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
