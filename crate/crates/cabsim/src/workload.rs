//! Request streams: trace files and synthetic Zipf workloads.
//!
//! A workload materializes to a deterministic `Vec<u64>` of opaque key
//! identifiers for a given seed. The multi-phase Zipf generator keeps one
//! key universe but applies a fresh pseudorandom permutation to the
//! popularity ranks at every phase boundary, so the hot set turns over
//! abruptly — the same kind of upheaval a switch between two production
//! traces produces.

use crate::hash::{hash_bytes, hash_key, mix64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("invalid workload spec `{0}`")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    /// One key token per line; blank lines skipped.
    Plain,
    /// Comma-separated; first column (timestamp) ignored, second is the key.
    Csv,
}

#[derive(Debug, Clone)]
pub enum WorkloadSource {
    File {
        path: PathBuf,
        format: TraceFormat,
    },
    Zipf {
        universe: u64,
        skew: f64,
        length: u64,
        phases: u32,
    },
    Concat(Vec<WorkloadSource>),
}

impl WorkloadSource {
    /// The default synthetic workload: four 2M-request phases over fresh
    /// 100K-key universes. Each phase opens with a 400K-request uniform
    /// burst (a scan-like stretch with a persistently low hit ratio)
    /// before settling into a cacheable Zipf(1.1) regime. The burst
    /// sustains cache churn across multiple reconfiguration segments, the
    /// way a switch between production traces does; an instantaneous
    /// popularity remap alone is absorbed within a fraction of a segment.
    pub fn default_synthetic() -> Self {
        let mut children = Vec::new();
        for _ in 0..4 {
            children.push(WorkloadSource::Zipf {
                universe: 100_000,
                skew: 0.0,
                length: 400_000,
                phases: 1,
            });
            children.push(WorkloadSource::Zipf {
                universe: 100_000,
                skew: 1.1,
                length: 1_600_000,
                phases: 1,
            });
        }
        WorkloadSource::Concat(children)
    }

    /// Parse a CLI-style spec: `file:PATH[:csv]` or `zipf:N,S,LEN[,PHASES]`.
    pub fn parse(spec: &str) -> Result<Self, WorkloadError> {
        let bad = || WorkloadError::Spec(spec.to_string());
        if let Some(rest) = spec.strip_prefix("file:") {
            let (path, format) = match rest.rsplit_once(':') {
                Some((path, "csv")) => (path, TraceFormat::Csv),
                Some((path, "plain")) => (path, TraceFormat::Plain),
                _ => (rest, TraceFormat::Plain),
            };
            if path.is_empty() {
                return Err(bad());
            }
            Ok(WorkloadSource::File {
                path: PathBuf::from(path),
                format,
            })
        } else if let Some(rest) = spec.strip_prefix("zipf:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() < 3 || parts.len() > 4 {
                return Err(bad());
            }
            let universe: u64 = parts[0].trim().parse().map_err(|_| bad())?;
            let skew: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let length: u64 = parts[2].trim().parse().map_err(|_| bad())?;
            let phases: u32 = match parts.get(3) {
                Some(p) => p.trim().parse().map_err(|_| bad())?,
                None => 1,
            };
            if universe == 0 || length == 0 || phases == 0 || skew < 0.0 || !skew.is_finite() {
                return Err(bad());
            }
            Ok(WorkloadSource::Zipf {
                universe,
                skew,
                length,
                phases,
            })
        } else {
            Err(bad())
        }
    }

    /// Deterministically expand the stream for the given seed.
    pub fn materialize(&self, seed: u64) -> Result<Vec<u64>, WorkloadError> {
        match self {
            WorkloadSource::File { path, format } => read_trace(path, *format, seed),
            WorkloadSource::Zipf {
                universe,
                skew,
                length,
                phases,
            } => Ok(zipf_stream(*universe, *skew, *length, seed, *phases)),
            WorkloadSource::Concat(children) => {
                let mut keys = Vec::new();
                for (i, child) in children.iter().enumerate() {
                    keys.extend(child.materialize(mix64(seed ^ i as u64))?);
                }
                Ok(keys)
            }
        }
    }
}

impl fmt::Display for WorkloadSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadSource::File { path, format } => {
                let suffix = match format {
                    TraceFormat::Plain => "",
                    TraceFormat::Csv => ":csv",
                };
                write!(f, "file:{}{}", path.display(), suffix)
            }
            WorkloadSource::Zipf {
                universe,
                skew,
                length,
                phases,
            } => write!(f, "zipf:{universe},{skew},{length},{phases}"),
            WorkloadSource::Concat(children) => {
                write!(f, "concat[")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Read a trace file into hashed 64-bit key identifiers.
pub fn read_trace(
    path: &std::path::Path,
    format: TraceFormat,
    seed: u64,
) -> Result<Vec<u64>, WorkloadError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| WorkloadError::Io {
        path: name.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut keys = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| WorkloadError::Io {
            path: name.clone(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let token = match format {
            TraceFormat::Plain => line,
            TraceFormat::Csv => {
                line.split(',').nth(1).map(str::trim).filter(|t| !t.is_empty()).ok_or_else(
                    || WorkloadError::Parse {
                        path: name.clone(),
                        line: i + 1,
                        reason: "expected `timestamp,key`".to_string(),
                    },
                )?
            }
        };
        keys.push(hash_bytes(token.as_bytes(), seed));
    }
    Ok(keys)
}

/// Zipf sampler over ranks `1..=n` with `P(rank r) ∝ r^-s`, realized as a
/// precomputed CDF plus binary search. Exact and deterministic.
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: u64, s: f64) -> Self {
        assert!(n >= 1);
        assert!(s >= 0.0);
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0f64;
        for r in 1..=n {
            acc += (r as f64).powf(-s);
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        ZipfSampler { cdf }
    }

    /// Rank in `0..n` (0 = most popular).
    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }

    /// Analytic probability of drawing rank `r` (0-based).
    pub fn rank_probability(&self, r: usize) -> f64 {
        if r == 0 {
            self.cdf[0]
        } else {
            self.cdf[r] - self.cdf[r - 1]
        }
    }
}

/// I.i.d. Zipf draws with a per-phase pseudorandom remap of the rank
/// space. Phase boundaries fall every `length / phases` requests (the
/// last phase absorbs the remainder).
pub fn zipf_stream(n: u64, s: f64, length: u64, seed: u64, phases: u32) -> Vec<u64> {
    assert!(n >= 1 && length >= 1 && phases >= 1);
    let sampler = ZipfSampler::new(n, s);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x7a69_7066));
    let key_seed = mix64(seed ^ 0x6b65_7973);
    let phase_len = (length / u64::from(phases)).max(1);

    let mut keys = Vec::with_capacity(length as usize);
    let mut perm: Vec<u32> = (0..n as u32).collect();
    for phase in 0..u64::from(phases) {
        let mut perm_rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ (phase << 8) ^ 0x7065_726d));
        if phase > 0 {
            perm.shuffle(&mut perm_rng);
        }
        let start = phase * phase_len;
        let end = if phase == u64::from(phases) - 1 {
            length
        } else {
            ((phase + 1) * phase_len).min(length)
        };
        for _ in start..end {
            let rank = sampler.sample(&mut rng);
            keys.push(hash_key(u64::from(perm[rank]), key_seed));
        }
        if keys.len() as u64 >= length {
            break;
        }
    }
    keys.truncate(length as usize);
    keys
}
