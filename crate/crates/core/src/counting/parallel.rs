//! Worker-pool tiling of the random space.
//!
//! One histogram job is split into fixed-size tiles of consecutive random
//! assignments. Workers claim tiles through a shared counter, count into
//! private partial histograms, and the partials are merged by summation, so
//! the result is bit-identical to a sequential run no matter how tiles land
//! on workers. The only other shared state is a cancellation flag, polled
//! between tiles, that the decision loop raises once a leak is found.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::{advance, Task};

/// Tiles cover at most 2^12 assignments so cancellation is prompt even at
/// full width.
const TILE_BITS: u32 = 12;

/// Histogram of the full random space under the fixed publics and privates
/// in `env`, computed by up to `workers` threads.
pub(crate) fn counts_tiled(
    task: &Task,
    env: &[u16],
    workers: usize,
    cancel: &AtomicBool,
) -> Vec<u64> {
    let len = task.counts_len();
    if cancel.load(Ordering::Relaxed) {
        return vec![0; len];
    }

    let base = task.width.domain_size() as u64;
    let total = base.pow(task.randoms.len() as u32);
    let tile = 1u64 << (task.width.bits() * task.randoms.len() as u32).min(TILE_BITS);
    let tiles = (total + tile - 1) / tile;
    let workers = workers.max(1).min(tiles as usize);

    if workers == 1 {
        let mut counts = vec![0u64; len];
        let mut env = env.to_vec();
        let mut regs = vec![0u16; task.compiled.regs()];
        run_tile(task, &mut env, &mut regs, &mut counts, 0, total);
        return counts;
    }

    let next = AtomicU64::new(0);
    let partials: Vec<Vec<u64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut counts = vec![0u64; len];
                    let mut env = env.to_vec();
                    let mut regs = vec![0u16; task.compiled.regs()];
                    loop {
                        if cancel.load(Ordering::Relaxed) {
                            break;
                        }
                        let t = next.fetch_add(1, Ordering::Relaxed);
                        if t >= tiles {
                            break;
                        }
                        let start = t * tile;
                        let end = (start + tile).min(total);
                        run_tile(task, &mut env, &mut regs, &mut counts, start, end);
                    }
                    counts
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut merged = vec![0u64; len];
    for partial in partials {
        for (m, p) in merged.iter_mut().zip(partial) {
            *m += p;
        }
    }
    merged
}

/// Count random assignments `start..end`, where an assignment's number has
/// the randoms as little-endian digits over the word domain.
fn run_tile(
    task: &Task,
    env: &mut [u16],
    regs: &mut [u16],
    counts: &mut [u64],
    start: u64,
    end: u64,
) {
    let base = task.width.domain_size() as u64;
    let mask = task.width.mask();
    let range = task.random_slots();
    let mut seed = start;
    for slot in range.clone() {
        env[slot] = (seed % base) as u16;
        seed /= base;
    }
    let idx_base = base as usize;
    for _ in start..end {
        task.compiled.run(env, regs);
        let mut idx = 0usize;
        for &reg in task.compiled.outputs().iter().rev() {
            idx = idx * idx_base + regs[reg as usize] as usize;
        }
        counts[idx] += 1;
        advance(env, range.clone(), mask);
    }
}
