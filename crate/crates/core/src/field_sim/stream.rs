use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per RNG substream. Even, so draws that yield two paths never straddle chunks.
pub const CHUNK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub chunk: u64,
    pub index: u32,
}

/// Field values on a grid, row-major with `shape = (nx, ny)`; 1D grids have `ny = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub values: Vec<f64>,
    pub shape: (usize, usize),
    pub lineage: SeedLineage,
}

/// A sampler that produces two independent realizations per draw.
pub trait FieldSampler: Sync {
    fn shape(&self) -> (usize, usize);
    /// Per-chunk scratch space.
    type Scratch: Send;
    fn scratch(&self) -> Self::Scratch;
    fn draw(&self, rng: &mut ChaCha8Rng, scratch: &mut Self::Scratch, a: &mut [f64], b: &mut [f64]);
}

/// RNG of a chunk: ChaCha8 keyed by the master seed, with the chunk index as stream id.
fn chunk_rng(master_seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chunk);
    rng
}

fn chunk_count(n_paths: usize) -> usize {
    n_paths.div_ceil(CHUNK_SIZE)
}

/// Generates chunk `chunk` and feeds its realizations, in order, to `visit`.
fn run_chunk<S: FieldSampler, F: FnMut(&Realization)>(
    sampler: &S,
    n_paths: usize,
    master_seed: u64,
    chunk: usize,
    mut visit: F,
) {
    let (nx, ny) = sampler.shape();
    let start = chunk * CHUNK_SIZE;
    let count = CHUNK_SIZE.min(n_paths - start);
    let mut rng = chunk_rng(master_seed, chunk as u64);
    let mut scratch = sampler.scratch();
    let lineage = |index: usize| SeedLineage {
        master_seed,
        chunk: chunk as u64,
        index: index as u32,
    };
    let mut first = Realization {
        values: vec![0.0; nx * ny],
        shape: (nx, ny),
        lineage: lineage(0),
    };
    let mut second = first.clone();
    let mut index = 0;
    while index < count {
        sampler.draw(
            &mut rng,
            &mut scratch,
            &mut first.values,
            &mut second.values,
        );
        first.lineage = lineage(index);
        visit(&first);
        if index + 1 < count {
            second.lineage = lineage(index + 1);
            visit(&second);
        }
        index += 2;
    }
}

/// Parallel fold over `n_paths` realizations. Each chunk folds into its own accumulator;
/// accumulators are merged in chunk order, so the result does not depend on scheduling.
pub fn fold_paths<S, A, I, F, M>(
    sampler: &S,
    n_paths: usize,
    master_seed: u64,
    init: I,
    fold: F,
    mut merge: M,
) -> A
where
    S: FieldSampler,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &Realization) + Sync,
    M: FnMut(&mut A, A),
{
    let parts: Vec<A> = (0..chunk_count(n_paths))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            run_chunk(sampler, n_paths, master_seed, chunk, |r| fold(&mut acc, r));
            acc
        })
        .collect();
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    total
}

/// Sequential stream of realizations in `(chunk, index)` order.
pub struct SampleStream<'a, S: FieldSampler> {
    sampler: &'a S,
    n_paths: usize,
    master_seed: u64,
    next_chunk: usize,
    buffer: std::vec::IntoIter<Realization>,
}

impl<S: FieldSampler> Iterator for SampleStream<'_, S> {
    type Item = Realization;

    fn next(&mut self) -> Option<Realization> {
        loop {
            if let Some(r) = self.buffer.next() {
                return Some(r);
            }
            if self.next_chunk >= chunk_count(self.n_paths) {
                return None;
            }
            let mut out = Vec::with_capacity(CHUNK_SIZE);
            run_chunk(
                self.sampler,
                self.n_paths,
                self.master_seed,
                self.next_chunk,
                |r| out.push(r.clone()),
            );
            self.next_chunk += 1;
            self.buffer = out.into_iter();
        }
    }
}

/// `n_paths` i.i.d. realizations; a pure function of `(sampler, master_seed)`.
pub fn sample<S: FieldSampler>(
    sampler: &S,
    n_paths: usize,
    master_seed: u64,
) -> SampleStream<'_, S> {
    SampleStream {
        sampler,
        n_paths,
        master_seed,
        next_chunk: 0,
        buffer: Vec::new().into_iter(),
    }
}
