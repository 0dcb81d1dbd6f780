//! The `ATKV` matrix file format, synthetic inputs, and CSV result records.
//!
//! `ATKV` layout, all little-endian:
//!
//! | offset | size | field                           |
//! |--------|------|---------------------------------|
//! | 0      | 4    | magic `b"ATKV"`                 |
//! | 4      | 1    | version, currently `1`          |
//! | 5      | 8    | rows (`u64`)                    |
//! | 13     | 8    | dims (`u64`)                    |
//! | 21     | 4·rows·dims | row-major IEEE-754 `f32` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ATKV";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 21;
/// Largest `n` whose integers `1..=n` are all exact in `f32`.
pub const MAX_EXACT_F32_INT: u64 = 1 << 24;

/// Row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
}

impl VectorDataset {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        let expected = rows.checked_mul(dims).ok_or_else(|| {
            Error::ShapeMismatch(format!("{rows} x {dims} overflows"))
        })?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| x.is_nan()) {
            return Err(Error::NanInPayload { index });
        }
        Ok(VectorDataset { rows, dims, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dims..(r + 1) * self.dims]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

pub fn write_dataset<W: Write>(ds: &VectorDataset, mut sink: W) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4] = VERSION;
    header[5..13].copy_from_slice(&(ds.rows as u64).to_le_bytes());
    header[13..21].copy_from_slice(&(ds.dims as u64).to_le_bytes());
    sink.write_all(&header)?;
    let mut buf = Vec::with_capacity(ds.data.len().min(1 << 16) * 4);
    for chunk in ds.data.chunks(1 << 16) {
        buf.clear();
        for x in chunk {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(what.to_string()),
        _ => Error::Io(e),
    })
}

pub fn read_dataset<R: Read>(mut source: R) -> Result<VectorDataset> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or_truncated(&mut source, &mut header[..4], "missing magic")?;
    let magic: [u8; 4] = header[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    read_exact_or_truncated(&mut source, &mut header[4..], "incomplete header")?;
    if header[4] != VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let rows = u64::from_le_bytes(header[5..13].try_into().expect("8 bytes"));
    let dims = u64::from_le_bytes(header[13..21].try_into().expect("8 bytes"));
    let len = rows
        .checked_mul(dims)
        .filter(|&l| l <= (usize::MAX / 4) as u64)
        .ok_or_else(|| Error::ShapeMismatch(format!("{rows} x {dims} is too large")))?
        as usize;

    let mut data = Vec::new();
    let mut buf = vec![0u8; 4 * len.min(1 << 16)];
    let mut remaining = len;
    while remaining > 0 {
        let take = remaining.min(1 << 16);
        read_exact_or_truncated(
            &mut source,
            &mut buf[..4 * take],
            &format!("payload ends {} elements early", remaining),
        )?;
        for b in buf[..4 * take].chunks_exact(4) {
            let x = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            if x.is_nan() {
                return Err(Error::NanInPayload { index: data.len() });
            }
            data.push(x);
        }
        remaining -= take;
    }
    Ok(VectorDataset {
        rows: rows as usize,
        dims: dims as usize,
        data,
    })
}

pub fn save(ds: &VectorDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(ds, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<VectorDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Row `row` of [`synth_distinct`]: a permutation of `1..=n` as `f32`.
pub fn synth_distinct_row(n: usize, seed: u64, row: u64) -> Result<Vec<f32>> {
    if n == 0 || n as u64 > MAX_EXACT_F32_INT {
        return Err(Error::Domain(format!(
            "n={n} must be in 1..={MAX_EXACT_F32_INT} to stay exact in f32"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    let mut v: Vec<f32> = (1..=n).map(|i| i as f32).collect();
    v.shuffle(&mut rng);
    Ok(v)
}

/// `rows` independent random permutations of `1..=n`, deterministic in
/// `seed`. Each row draws from its own stream, so row `r` is the same no
/// matter how many rows are requested.
pub fn synth_distinct(rows: usize, n: usize, seed: u64) -> Result<VectorDataset> {
    let mut data = Vec::with_capacity(rows * n);
    for r in 0..rows {
        data.extend(synth_distinct_row(n, seed, r as u64)?);
    }
    Ok(VectorDataset { rows, dims: n, data })
}

/// Rows of i.i.d. standard normal entries.
pub fn synth_gaussian(rows: usize, dims: usize, seed: u64) -> VectorDataset {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * dims)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    VectorDataset { rows, dims, data }
}

/// One line of a results CSV (`config,metric,value,stderr`).
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub config: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl ResultRecord {
    pub fn new(config: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        ResultRecord {
            config: config.into(),
            metric: metric.into(),
            value,
            stderr: None,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }
}

pub const CSV_HEADER: [&str; 4] = ["config", "metric", "value", "stderr"];

/// Writes records with the header row. Floats use the shortest round-trip
/// representation; a missing stderr is an empty field.
pub fn write_results_csv<W: Write>(records: &[ResultRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let stderr = r.stderr.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([&r.config, &r.metric, &r.value.to_string(), &stderr])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(source: R) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(source);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::ShapeMismatch(format!(
            "unexpected CSV header {headers:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::ShapeMismatch(format!("bad number {s:?}: {e}")))
        };
        let stderr = match &rec[3] {
            "" => None,
            s => Some(num(s)?),
        };
        out.push(ResultRecord {
            config: rec[0].to_string(),
            metric: rec[1].to_string(),
            value: num(&rec[2])?,
            stderr,
        });
    }
    Ok(out)
}
