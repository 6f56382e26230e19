//! Dataset planning, generation and storage.
//!
//! A dataset directory holds `manifest.json` and one JSON-Lines file per
//! split. Each line is a record carrying its configuration literal, value
//! bins, setup, the normalized spectrum (and optionally the raw one) as
//! base64 little-endian `f64`, and a CRC-32 of the record's other fields.
//! The manifest fixes the record count of every split, so a file cut at a
//! line boundary is detected as well as a torn line.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Configuration, ValueGrid};
use crate::count::count_canonical;
use crate::enumerate::{enumerate_canonical, random_canonical_with};
use crate::error::{Error, Result};
use crate::sim::{simulate, FrequencyGrid, NormalizedSpectrum, Setup, Spectrum};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

/// Random draws for one chain length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub length: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Quota {
    fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Which configurations go into which split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_c: usize,
    pub n_v: usize,
    /// Lengths whose canonical configurations all go to the training split.
    pub exhaustive: Vec<usize>,
    /// Seeded random draws for the remaining lengths.
    pub quotas: Vec<Quota>,
}

impl SplitSpec {
    /// Lengths 1 to 3 exhaustive, then 1,120 / 480 / 400 draws per length up to 10.
    pub fn full() -> Self {
        Self {
            n_c: 3,
            n_v: 5,
            exhaustive: vec![1, 2, 3],
            quotas: (4..=10)
                .map(|length| Quota {
                    length,
                    train: 1120,
                    val: 480,
                    test: 400,
                })
                .collect(),
        }
    }

    /// Lengths 1 to 4 with 2,000 training chains: all 720 of lengths 1 and 2
    /// plus 640 draws each at lengths 3 and 4; evaluation splits draw 100 per
    /// length at 3 and 4.
    pub fn reduced() -> Self {
        Self {
            n_c: 3,
            n_v: 5,
            exhaustive: vec![1, 2],
            quotas: [3, 4]
                .into_iter()
                .map(|length| Quota {
                    length,
                    train: 640,
                    val: 100,
                    test: 100,
                })
                .collect(),
        }
    }

    /// Expected record count of a split.
    pub fn total(&self, split: Split) -> Result<usize> {
        let mut n: usize = self.quotas.iter().map(|q| q.get(split)).sum();
        if split == Split::Train {
            for &len in &self.exhaustive {
                let c = count_canonical(len as i64, self.n_c, self.n_v)?.count;
                n += usize::try_from(c).map_err(|_| Error::Capacity(format!("length {len} is too large to enumerate")))?;
            }
        }
        Ok(n)
    }

    fn validate(&self) -> Result<()> {
        ValueGrid::new(self.n_v)?;
        crate::circuit::ComponentType::universe(self.n_c)?;
        let mut lens: Vec<usize> = self.exhaustive.clone();
        lens.extend(self.quotas.iter().map(|q| q.length));
        if lens.contains(&0) {
            return Err(Error::invalid("lengths must be at least 1"));
        }
        let distinct: HashSet<usize> = lens.iter().copied().collect();
        if distinct.len() != lens.len() {
            return Err(Error::invalid("each length may appear once in a split spec"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRecord {
    pub id: u64,
    pub split: Split,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub records: Vec<PlannedRecord>,
    /// Draws rejected as duplicates, per split.
    pub retries: BTreeMap<Split, u64>,
}

impl Plan {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PlannedRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split, length: usize) -> usize {
        self.split(split).filter(|r| r.config.len() == length).count()
    }
}

const MAX_REJECTS_PER_DRAW: u64 = 10_000;

/// Chooses every record's configuration. Random draws are rejected when their
/// canonical form already appears anywhere in the dataset.
pub fn plan(spec: &SplitSpec, seed: u64) -> Result<Plan> {
    spec.validate()?;
    let grid = ValueGrid::new(spec.n_v)?;
    let mut seen: HashSet<Vec<(u8, u8, u8)>> = HashSet::new();
    let mut by_split: BTreeMap<Split, Vec<Configuration>> = Split::ALL.iter().map(|s| (*s, Vec::new())).collect();
    let mut retries: BTreeMap<Split, u64> = Split::ALL.iter().map(|s| (*s, 0)).collect();

    let mut exhaustive = spec.exhaustive.clone();
    exhaustive.sort_unstable();
    for &len in &exhaustive {
        for c in enumerate_canonical(len, spec.n_c, spec.n_v, u64::MAX)? {
            seen.insert(c.canonical_key(&grid)?);
            by_split.get_mut(&Split::Train).expect("split").push(c);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotas = spec.quotas.clone();
    quotas.sort_by_key(|q| q.length);
    for q in &quotas {
        for split in Split::ALL {
            let mut rejects = 0u64;
            let mut taken = 0;
            while taken < q.get(split) {
                let c = random_canonical_with(&mut rng, q.length, spec.n_c, spec.n_v)?;
                if seen.insert(c.canonical_key(&grid)?) {
                    by_split.get_mut(&split).expect("split").push(c);
                    taken += 1;
                    rejects = 0;
                } else {
                    rejects += 1;
                    *retries.get_mut(&split).expect("split") += 1;
                    if rejects > MAX_REJECTS_PER_DRAW {
                        return Err(Error::Capacity(format!(
                            "could not draw {} distinct length-{} chains for {}",
                            q.get(split),
                            q.length,
                            split.name()
                        )));
                    }
                }
            }
        }
    }

    let records = by_split
        .into_iter()
        .flat_map(|(split, configs)| configs.into_iter().map(move |c| (split, c)))
        .enumerate()
        .map(|(id, (split, config))| PlannedRecord {
            id: id as u64,
            split,
            config,
        })
        .collect();
    Ok(Plan { records, retries })
}

/// Frequency grid description stored in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub f_min: f64,
    pub f_max: f64,
    pub d: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            f_min: 1.0,
            f_max: 1e6,
            d: FrequencyGrid::DEFAULT_LEN,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::log_spaced(self.f_min, self.f_max, self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: SplitSpec,
    pub value_grid: BTreeMap<String, Vec<f64>>,
    pub grid: GridSpec,
    pub setup: Setup,
    pub with_raw: bool,
    pub counts: BTreeMap<Split, usize>,
    pub retries: BTreeMap<Split, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub split: Split,
    pub config: Configuration,
    pub setup: Setup,
    pub normalized: NormalizedSpectrum<f64>,
    pub raw: Option<Spectrum<f64>>,
}

impl DatasetRecord {
    pub fn length(&self) -> usize {
        self.config.len()
    }
}

#[derive(Serialize, Deserialize)]
struct Body {
    id: u64,
    split: Split,
    length: usize,
    config: String,
    bins: Vec<u8>,
    setup: Setup,
    normalized: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    body: Body,
    crc: u32,
}

fn encode_f64(xs: impl Iterator<Item = f64>) -> String {
    let bytes: Vec<u8> = xs.flat_map(f64::to_le_bytes).collect();
    B64.encode(bytes)
}

fn decode_f64(s: &str) -> Option<Vec<f64>> {
    let bytes = B64.decode(s).ok()?;
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
    )
}

fn crc_of(body: &Body) -> Result<u32> {
    Ok(crc32fast::hash(&serde_json::to_vec(body)?))
}

fn encode_record(r: &DatasetRecord) -> Result<String> {
    let raw = r.raw.as_ref().map(|s| {
        encode_f64(
            s.v.iter()
                .map(|z| z.re)
                .chain(s.v.iter().map(|z| z.im))
                .chain(s.i.iter().map(|z| z.re))
                .chain(s.i.iter().map(|z| z.im)),
        )
    });
    let body = Body {
        id: r.id,
        split: r.split,
        length: r.config.len(),
        config: r.config.to_string(),
        bins: r
            .config
            .components()
            .iter()
            .map(|c| c.bin.ok_or_else(|| Error::invalid("dataset components must carry value bins")))
            .collect::<Result<_>>()?,
        setup: r.setup,
        normalized: encode_f64(r.normalized.as_slice().iter().copied()),
        raw,
    };
    let crc = crc_of(&body)?;
    Ok(serde_json::to_string(&Line { body, crc })?)
}

fn decode_record(line: &str, index: u64, grid: &FrequencyGrid) -> Result<DatasetRecord> {
    let bad = |reason: String| Error::Integrity {
        record: format!("line {}", index + 1),
        reason,
    };
    let parsed: Line = serde_json::from_str(line).map_err(|e| bad(format!("unparsable record: {e}")))?;
    let body = parsed.body;
    if crc_of(&body)? != parsed.crc {
        return Err(bad("checksum mismatch".into()));
    }
    let mut config: Configuration = body.config.parse().map_err(|e| bad(format!("{e}")))?;
    if body.bins.len() != config.len() || body.length != config.len() {
        return Err(bad("length fields disagree".into()));
    }
    let comps: Vec<_> = config
        .components()
        .iter()
        .zip(&body.bins)
        .map(|(c, &b)| crate::circuit::Component { bin: Some(b), ..*c })
        .collect();
    config = Configuration::new(comps)?;
    let d = grid.len();
    let normalized = decode_f64(&body.normalized)
        .filter(|x| x.len() == 4 * d)
        .ok_or_else(|| bad("normalized spectrum has the wrong size".into()))?;
    let raw = match body.raw {
        None => None,
        Some(s) => {
            let x = decode_f64(&s)
                .filter(|x| x.len() == 4 * d)
                .ok_or_else(|| bad("raw spectrum has the wrong size".into()))?;
            let z = |re: usize, im: usize| -> Vec<Complex64> {
                (0..d).map(|k| Complex64::new(x[re * d + k], x[im * d + k])).collect()
            };
            Some(Spectrum::new(z(0, 1), z(2, 3), grid.clone())?)
        }
    };
    Ok(DatasetRecord {
        id: body.id,
        split: body.split,
        config,
        setup: body.setup,
        normalized: NormalizedSpectrum::from_channels(d, normalized)?,
        raw,
    })
}

pub struct GenerateOptions {
    pub setup: Setup,
    pub grid: GridSpec,
    pub with_raw: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            setup: Setup::default(),
            grid: GridSpec::default(),
            with_raw: false,
        }
    }
}

/// Simulates a plan and writes it to `dir`. Record order is the plan order
/// regardless of parallelism.
pub fn write_dataset(dir: &Path, spec: &SplitSpec, plan: &Plan, seed: u64, opts: &GenerateOptions) -> Result<Manifest> {
    opts.setup.termination.validate()?;
    std::fs::create_dir_all(dir)?;
    let grid = opts.grid.build()?;
    let value_grid = ValueGrid::new(spec.n_v)?;
    let mut counts = BTreeMap::new();
    for split in Split::ALL {
        let records: Vec<&PlannedRecord> = plan.split(split).collect();
        let mut w = BufWriter::new(File::create(dir.join(split.file_name()))?);
        for chunk in records.chunks(512) {
            let lines = chunk
                .par_iter()
                .map(|p| {
                    let raw = simulate(&p.config, &grid, &opts.setup)?;
                    encode_record(&DatasetRecord {
                        id: p.id,
                        split,
                        config: p.config.clone(),
                        setup: opts.setup,
                        normalized: raw.normalize()?,
                        raw: opts.with_raw.then_some(raw),
                    })
                })
                .collect::<Result<Vec<String>>>()?;
            for line in lines {
                writeln!(w, "{line}")?;
            }
        }
        w.flush()?;
        counts.insert(split, records.len());
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed,
        spec: spec.clone(),
        value_grid: crate::circuit::ComponentType::ALL
            .iter()
            .map(|t| (t.symbol().to_string(), value_grid.values(*t).to_vec()))
            .collect(),
        grid: opts.grid,
        setup: opts.setup,
        with_raw: opts.with_raw,
        counts,
        retries: plan.retries.clone(),
    };
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Plans and writes a dataset in one step.
pub fn generate(dir: &Path, spec: &SplitSpec, seed: u64, opts: &GenerateOptions) -> Result<Manifest> {
    let p = plan(spec, seed)?;
    write_dataset(dir, spec, &p, seed, opts)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST))?)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "dataset format version {} is not supported",
            m.format_version
        )));
    }
    Ok(m)
}

/// Lazily decoded records of one split.
pub struct SplitReader {
    lines: std::io::Lines<BufReader<File>>,
    grid: FrequencyGrid,
    expected: usize,
    read: usize,
    path: PathBuf,
    failed: bool,
}

impl Iterator for SplitReader {
    type Item = Result<DatasetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let index = self.read as u64;
        let out = match self.lines.next() {
            None if self.read == self.expected => return None,
            None => Err(Error::Integrity {
                record: format!("line {}", index + 1),
                reason: format!(
                    "{} ends after {} of {} records",
                    self.path.display(),
                    self.read,
                    self.expected
                ),
            }),
            Some(Err(e)) => Err(e.into()),
            Some(Ok(_)) if self.read == self.expected => Err(Error::Integrity {
                record: format!("line {}", index + 1),
                reason: format!("{} has more records than its manifest lists", self.path.display()),
            }),
            Some(Ok(line)) => decode_record(&line, index, &self.grid),
        };
        self.read += 1;
        self.failed = out.is_err();
        Some(out)
    }
}

pub fn open_split(dir: &Path, split: Split) -> Result<SplitReader> {
    let m = read_manifest(dir)?;
    let path = dir.join(split.file_name());
    Ok(SplitReader {
        lines: BufReader::new(File::open(&path)?).lines(),
        grid: m.grid.build()?,
        expected: m.counts.get(&split).copied().unwrap_or(0),
        read: 0,
        path,
        failed: false,
    })
}

pub fn load_split(dir: &Path, split: Split) -> Result<Vec<DatasetRecord>> {
    open_split(dir, split)?.collect()
}

/// Draws `n` records uniformly without replacement, in id order.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..items.len()).collect();
    for i in 0..n {
        let j = rng.random_range(i..items.len());
        idx.swap(i, j);
    }
    let mut pick = idx[..n].to_vec();
    pick.sort_unstable();
    pick.into_iter().map(|i| items[i].clone()).collect()
}
