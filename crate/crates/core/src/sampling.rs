//! Random index-set draws and the seeded RNG streams behind them.
//!
//! Streams are addressed by `(seed, stream_id)`. The harness reserves
//! stream 0 for initial data and uses stream `1 + rep` for the batch draws of
//! replication `rep`.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream reserved for drawing initial data.
pub const INITIAL_DATA_STREAM: u64 = 0;

/// Stream carrying the batch draws of replication `rep`.
pub fn replication_stream(rep: u64) -> u64 {
    1 + rep
}

/// A reproducible random stream: ChaCha8 keyed by `seed` with the
/// independent ChaCha stream selected by `stream_id`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A sorted set of distinct particle indices, `p >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    /// Builds a batch from arbitrary indices, checking distinctness and range.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        check_batch(&indices, n)?;
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Checks that a sorted index list is a valid batch for `n` particles.
pub(crate) fn check_batch(sorted: &[usize], n: usize) -> Result<()> {
    if sorted.len() < 2 {
        return Err(Error::domain(format!(
            "batch needs at least 2 members, got {}",
            sorted.len()
        )));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("batch contains a duplicate index"));
    }
    if let Some(&last) = sorted.last() {
        if last >= n {
            return Err(Error::domain(format!(
                "batch index {last} out of range for {n} particles"
            )));
        }
    }
    Ok(())
}

/// Disjoint equal-size batches covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    batches: Vec<Batch>,
    n: usize,
}

impl Partition {
    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_batch_size(n: usize, p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::domain(format!("batch size p must be >= 2, got {p}")));
    }
    if p > n {
        return Err(Error::domain(format!(
            "batch size p = {p} exceeds particle count {n}"
        )));
    }
    Ok(())
}

/// Uniform draw over all `C(n, p)` subsets.
pub fn sample_batch(rng: &mut RngStream, n: usize, p: usize) -> Result<Batch> {
    check_batch_size(n, p)?;
    let mut sampler = BatchSampler::new(n);
    let mut out = Vec::with_capacity(p);
    sampler.draw_into(rng, p, &mut out);
    Ok(Batch { indices: out })
}

/// Reusable uniform `p`-subset sampler.
///
/// Keeps a permutation buffer between draws so that each draw is a partial
/// Fisher–Yates pass of length `p`. Running partial Fisher–Yates on any fixed
/// permutation yields a uniform subset, so no reset is needed and a draw costs
/// `O(p log p)` instead of `O(n)`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    perm: Vec<usize>,
}

impl BatchSampler {
    pub fn new(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Writes a sorted uniform `p`-subset of `0..n` into `out`.
    /// Caller guarantees `2 <= p <= n`.
    pub fn draw_into(&mut self, rng: &mut RngStream, p: usize, out: &mut Vec<usize>) {
        let n = self.perm.len();
        for k in 0..p {
            let j = k + rng.below(n - k);
            self.perm.swap(k, j);
        }
        out.clear();
        out.extend_from_slice(&self.perm[..p]);
        out.sort_unstable();
    }

    pub fn draw(&mut self, rng: &mut RngStream, p: usize) -> Result<Batch> {
        check_batch_size(self.perm.len(), p)?;
        let mut out = Vec::with_capacity(p);
        self.draw_into(rng, p, &mut out);
        Ok(Batch { indices: out })
    }
}

/// Uniform random partition of `0..n` into `n / p` batches of size `p`:
/// a full Fisher–Yates shuffle chopped into consecutive blocks.
pub fn sample_partition(rng: &mut RngStream, n: usize, p: usize) -> Result<Partition> {
    check_batch_size(n, p)?;
    if !n.is_multiple_of(p) {
        return Err(Error::config(format!(
            "batch size p = {p} must divide particle count N = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut perm);
    let batches = perm
        .chunks(p)
        .map(|c| {
            let mut indices = c.to_vec();
            indices.sort_unstable();
            Batch { indices }
        })
        .collect();
    Ok(Partition { batches, n })
}

/// In-place Fisher–Yates. Also used by the RBM-1 stepper on a reused buffer.
pub(crate) fn shuffle(rng: &mut RngStream, perm: &mut [usize]) {
    let n = perm.len();
    for k in 0..n.saturating_sub(1) {
        let j = k + rng.below(n - k);
        perm.swap(k, j);
    }
}

/// `p - 1` distinct neighbors of particle `i`, uniform among the other
/// `n - 1` particles, returned sorted.
pub fn sample_mc_neighbors(
    rng: &mut RngStream,
    n: usize,
    p: usize,
    i: usize,
) -> Result<Vec<usize>> {
    check_batch_size(n, p)?;
    if i >= n {
        return Err(Error::domain(format!(
            "particle index {i} out of range for {n}"
        )));
    }
    let mut out = Vec::with_capacity(p - 1);
    mc_neighbors_into(rng, n, p, i, &mut out);
    Ok(out)
}

pub(crate) fn mc_neighbors_into(
    rng: &mut RngStream,
    n: usize,
    p: usize,
    i: usize,
    out: &mut Vec<usize>,
) {
    out.clear();
    // Sample from the n - 1 slots that skip `i`.
    out.extend(
        index::sample(rng, n - 1, p - 1)
            .into_iter()
            .map(|k| if k < i { k } else { k + 1 }),
    );
    out.sort_unstable();
}

/// Law of the number of times a fixed index is selected in `trials`
/// independent uniform batch draws: Binomial(trials, p/N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialLaw {
    pub trials: u64,
    pub prob: f64,
}

impl BinomialLaw {
    pub fn mean(&self) -> f64 {
        self.trials as f64 * self.prob
    }

    pub fn variance(&self) -> f64 {
        self.trials as f64 * self.prob * (1.0 - self.prob)
    }
}

/// Predicted law of the selection count η after `n_steps` RBM-r steps with
/// inclusion probability `ratio = p/N`.
pub fn selection_count_law(n_steps: u64, ratio: f64) -> Result<BinomialLaw> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::domain(format!(
            "ratio p/N must be in (0, 1], got {ratio}"
        )));
    }
    Ok(BinomialLaw {
        trials: n_steps,
        prob: ratio,
    })
}
