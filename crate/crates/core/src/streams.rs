//! Reproducible per-scenario observation streams.
//!
//! Every scenario of every replication owns a ChaCha8 keystream selected by
//! `(master_seed, replication)` for the key and `(domain, alternative,
//! distribution)` for the stream id. Observation `t` of a scenario always
//! occupies the same fixed block of keystream words, so a stream's values do
//! not depend on read order, on other scenarios, or on thread count. A
//! procedure run and a boundary-crossing oracle opened with the same
//! [`StreamSpec`] see literally the same observations.
//!
//! Gaussian observations use two 64-bit words each (Box-Muller, cosine
//! branch). Testbed observations use four words, which seed a private ChaCha8
//! generator for one full simulation replication.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Provenance, ProblemInstance, ScenarioId, ScenarioStats};
use crate::testbeds::ScenarioSimulator;

const DOMAIN_OBSERVATIONS: u64 = 0;
const DOMAIN_RULES: u64 = 1;
const DOMAIN_AUX: u64 = 2;

const GAUSSIAN_BLOCK: u64 = 2;
const TESTBED_BLOCK: u64 = 4;
/// ChaCha words are 32-bit; an observation block is counted in 64-bit draws.
const WORDS_PER_DRAW: u128 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("horizon exceeded: scenario {scenario} has no observation beyond {horizon}")]
    HorizonExceeded { scenario: ScenarioId, horizon: u64 },
    #[error("horizon {0} overflows the keystream counter")]
    CounterOverflow(u64),
    #[error("scenario {scenario} is outside a {k}x{m} instance")]
    BadScenario {
        scenario: ScenarioId,
        k: usize,
        m: usize,
    },
    #[error("requested {requested} prefix means but the horizon is {horizon}")]
    PrefixBeyondHorizon { requested: u64, horizon: u64 },
}

/// Identifies the randomness of one macro-replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamSpec {
    pub master_seed: u64,
    pub replication: u64,
    /// Maximum number of observations any single scenario may yield.
    pub horizon: u64,
}

impl StreamSpec {
    pub fn new(master_seed: u64, replication: u64, horizon: u64) -> Self {
        Self {
            master_seed,
            replication,
            horizon,
        }
    }

    pub fn with_horizon(self, horizon: u64) -> Self {
        Self { horizon, ..self }
    }

    fn key(&self) -> [u8; 32] {
        let mut seed_state = self.master_seed;
        let mut state = splitmix64(&mut seed_state) ^ self.replication.wrapping_mul(0xd1b5_4a32_d192_ed03);
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        out
    }

    fn keystream(&self, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream((domain << 56) ^ (a << 28) ^ b);
        rng
    }

    /// Randomness for sampling rules (posterior draws, exploration coins).
    pub fn rule_rng(&self) -> ChaCha8Rng {
        self.keystream(DOMAIN_RULES, 0, 0)
    }

    /// Auxiliary randomness for callers outside the scenario streams, keyed by `tag`.
    pub fn aux_rng(&self, tag: u64) -> ChaCha8Rng {
        self.keystream(DOMAIN_AUX, tag >> 28, tag & ((1 << 28) - 1))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal from two uniform words (cosine branch of Box-Muller).
fn box_muller(a: u64, b: u64) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Clone, Debug)]
enum Source {
    Gaussian {
        mean: f64,
        sd: f64,
        rng: ChaCha8Rng,
    },
    Simulated {
        sim: ScenarioSimulator,
        rng: ChaCha8Rng,
    },
    Fixed(Vec<f64>),
}

/// Lazily generated i.i.d. observations of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioStream {
    scenario: ScenarioId,
    cursor: u64,
    horizon: u64,
    source: Source,
}

/// Opens the stream of `scenario` for the replication described by `spec`.
pub fn open_stream(
    instance: &ProblemInstance,
    scenario: ScenarioId,
    spec: &StreamSpec,
) -> Result<ScenarioStream, StreamError> {
    if !scenario.is_within(instance.k, instance.m) {
        return Err(StreamError::BadScenario {
            scenario,
            k: instance.k,
            m: instance.m,
        });
    }
    let (row, col) = (scenario.row(), scenario.col());
    let rng = spec.keystream(DOMAIN_OBSERVATIONS, row as u64, col as u64);
    let (source, block) = match instance.backend.simulator(row, col) {
        None => (
            Source::Gaussian {
                mean: instance.mean(row, col),
                sd: instance.sd(row, col),
                rng,
            },
            GAUSSIAN_BLOCK,
        ),
        Some(sim) => (Source::Simulated { sim, rng }, TESTBED_BLOCK),
    };
    if spec.horizon.checked_mul(block).is_none() {
        return Err(StreamError::CounterOverflow(spec.horizon));
    }
    Ok(ScenarioStream {
        scenario,
        cursor: 0,
        horizon: spec.horizon,
        source,
    })
}

impl ScenarioStream {
    /// A scripted stream that replays `values`; its horizon is their length.
    pub fn fixed(scenario: ScenarioId, values: Vec<f64>) -> Self {
        Self {
            scenario,
            cursor: 0,
            horizon: values.len() as u64,
            source: Source::Fixed(values),
        }
    }

    pub fn scenario(&self) -> ScenarioId {
        self.scenario
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Next observation; fails with [`StreamError::HorizonExceeded`] once `horizon` values were read.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<f64, StreamError> {
        if self.cursor >= self.horizon {
            return Err(StreamError::HorizonExceeded {
                scenario: self.scenario,
                horizon: self.horizon,
            });
        }
        let value = match &mut self.source {
            Source::Gaussian { mean, sd, rng } => {
                let (a, b) = (rng.next_u64(), rng.next_u64());
                *mean + *sd * box_muller(a, b)
            }
            Source::Simulated { sim, rng } => {
                let mut seed = [0u8; 32];
                for chunk in seed.chunks_exact_mut(8) {
                    chunk.copy_from_slice(&rng.next_u64().to_le_bytes());
                }
                sim.simulate(&mut ChaCha8Rng::from_seed(seed))
            }
            Source::Fixed(values) => values[self.cursor as usize],
        };
        self.cursor += 1;
        Ok(value)
    }

    /// Moves the cursor to observation `index` (0-based) without reading.
    pub fn seek(&mut self, index: u64) -> Result<(), StreamError> {
        if index > self.horizon {
            return Err(StreamError::HorizonExceeded {
                scenario: self.scenario,
                horizon: self.horizon,
            });
        }
        match &mut self.source {
            Source::Gaussian { rng, .. } => {
                rng.set_word_pos(index as u128 * GAUSSIAN_BLOCK as u128 * WORDS_PER_DRAW)
            }
            Source::Simulated { rng, .. } => {
                rng.set_word_pos(index as u128 * TESTBED_BLOCK as u128 * WORDS_PER_DRAW)
            }
            Source::Fixed(_) => {}
        }
        self.cursor = index;
        Ok(())
    }
}

/// Running means after 1, 2, ..., `n` further observations of `stream`.
///
/// Accumulates through [`ScenarioStats::record`], so element `t - 1` equals
/// the engine's running mean after it consumed `t` observations of the same
/// scenario, bit for bit.
pub fn prefix_means(stream: &mut ScenarioStream, n: u64) -> Result<Vec<f64>, StreamError> {
    let remaining = stream.horizon - stream.cursor;
    if n > remaining {
        return Err(StreamError::PrefixBeyondHorizon {
            requested: n,
            horizon: stream.horizon,
        });
    }
    let mut stats = ScenarioStats::default();
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let x = stream.next()?;
        // finite by construction of every source
        stats
            .record(x, Provenance::Init)
            .expect("stream produced a non-finite observation");
        out.push(stats.mean);
    }
    Ok(out)
}

/// The `k x m` streams of one replication, row-major.
#[derive(Clone, Debug)]
pub struct StreamSet {
    k: usize,
    m: usize,
    streams: Vec<ScenarioStream>,
}

impl StreamSet {
    pub fn open(instance: &ProblemInstance, spec: &StreamSpec) -> Result<Self, StreamError> {
        let streams = (0..instance.k)
            .flat_map(|i| (0..instance.m).map(move |j| ScenarioId::from_zero_based(i, j)))
            .map(|id| open_stream(instance, id, spec))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            k: instance.k,
            m: instance.m,
            streams,
        })
    }

    /// Scripted streams; `rows[i][j]` lists the observations of scenario `(i, j)`.
    pub fn fixed(rows: Vec<Vec<Vec<f64>>>) -> Self {
        let k = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let streams = rows
            .into_iter()
            .enumerate()
            .flat_map(|(i, row)| {
                assert_eq!(row.len(), m, "ragged scripted streams");
                row.into_iter()
                    .enumerate()
                    .map(move |(j, vals)| ScenarioStream::fixed(ScenarioId::from_zero_based(i, j), vals))
            })
            .collect();
        Self { k, m, streams }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.k, self.m)
    }

    pub fn draw(&mut self, row: usize, col: usize) -> Result<f64, StreamError> {
        self.streams[row * self.m + col].next()
    }

    pub fn stream_mut(&mut self, row: usize, col: usize) -> &mut ScenarioStream {
        &mut self.streams[row * self.m + col]
    }
}
