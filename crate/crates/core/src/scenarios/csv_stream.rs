use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::domain::{Sample, SampleSource};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

/// Per-step row pools read from a CSV file with header `step,y,x1,...,xd`.
///
/// Training draws are taken without replacement from a per-run shuffle of
/// the step's pool. With a hold-out fraction, each step's pool is first
/// split (per run) into training rows and test rows; the test stream then
/// reads only the held-out rows. Without hold-out the test stream shuffles
/// the whole pool independently.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvStream {
    d: usize,
    pools: Vec<Vec<Sample>>,
    holdout: f64,
}

impl CsvStream {
    pub fn from_path(path: impl AsRef<Path>, holdout: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        Self::from_reader(file, holdout)
    }

    pub fn from_reader(reader: impl Read, holdout: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&holdout) {
            return Err(Error::param("scenario.holdout", "must lie in [0, 1)"));
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names.len() < 3 || names[0] != "step" || names[1] != "y" {
            return Err(Error::Csv(format!(
                "header must be step,y,x1,...,xd; got {}",
                names.join(",")
            )));
        }
        for (i, name) in names[2..].iter().enumerate() {
            if *name != format!("x{}", i + 1) {
                return Err(Error::Csv(format!("column {} should be x{}, got `{name}`", i + 3, i + 1)));
            }
        }
        let d = names.len() - 2;
        let mut pools: Vec<Vec<Sample>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let row = line + 2;
            let num = |i: usize| -> Result<f64> {
                let cell = rec.get(i).unwrap_or("").trim();
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Csv(format!("row {row}, column {}: `{cell}` is not a number", i + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Csv(format!("row {row}, column {}: non-finite value", i + 1)))
                }
            };
            let step_cell = rec.get(0).unwrap_or("").trim();
            let step: usize = step_cell
                .parse()
                .map_err(|_| Error::Csv(format!("row {row}: step `{step_cell}` is not a positive integer")))?;
            if step == 0 {
                return Err(Error::Csv(format!("row {row}: steps start at 1")));
            }
            let y = num(1)?;
            let x = (2..2 + d).map(num).collect::<Result<Vec<_>>>()?;
            if pools.len() < step {
                pools.resize_with(step, Vec::new);
            }
            pools[step - 1].push(Sample::new(x, y));
        }
        if pools.is_empty() {
            return Err(Error::Csv("file has no data rows".into()));
        }
        if let Some(i) = pools.iter().position(Vec::is_empty) {
            return Err(Error::Csv(format!("missing step {}", i + 1)));
        }
        Ok(Self { d, pools, holdout })
    }

    pub fn horizon(&self) -> usize {
        self.pools.len()
    }

    fn pool(&self, step: usize) -> Result<&[Sample]> {
        self.pools
            .get(step.wrapping_sub(1))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Csv(format!("missing step {step}")))
    }

    fn n_test(&self, pool_len: usize) -> usize {
        ((self.holdout * pool_len as f64).round() as usize).min(pool_len.saturating_sub(1))
    }

    /// Row indices of the step pool, split into (train, test) for this run.
    fn split(&self, seed: u64, step: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.pool(step)?.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let n_test = self.n_test(n);
        if n_test == 0 {
            return Ok((idx, Vec::new()));
        }
        idx.shuffle(&mut keyed_rng(seed, Stream::Holdout, step as u64, 0));
        let train = idx.split_off(n_test);
        Ok((train, idx))
    }
}

impl SampleSource for CsvStream {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw(&self, seed: u64, stream: Stream, step: usize, count: usize) -> Result<Vec<Sample>> {
        let pool = self.pool(step)?;
        let (train, test) = self.split(seed, step)?;
        let mut rows = match stream {
            Stream::Test if !test.is_empty() => test,
            Stream::Test => (0..pool.len()).collect(),
            _ => train,
        };
        if stream == Stream::Test {
            // evaluation uses whatever is available
            rows.shuffle(&mut keyed_rng(seed, Stream::Test, step as u64, 0));
            rows.truncate(count);
        } else {
            if count > rows.len() {
                return Err(Error::PoolExhausted {
                    step,
                    requested: count,
                    available: rows.len(),
                });
            }
            rows.shuffle(&mut keyed_rng(seed, Stream::Permutation, step as u64, stream as u64));
            rows.truncate(count);
        }
        Ok(rows.into_iter().map(|i| pool[i].clone()).collect())
    }

    fn capacity(&self, step: usize) -> Option<usize> {
        let n = self.pool(step).ok()?.len();
        Some(n - self.n_test(n))
    }
}
