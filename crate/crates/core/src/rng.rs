//! Counter-based random streams.
//!
//! Every process iteration gets its own stream keyed by the root seed, the
//! process path and the iteration number. Draw `i` of a stream is a pure
//! function of the key and `i`, so a stream can be resumed from a persisted
//! draw count without replaying earlier draws, and no stream depends on how
//! many draws any other process made.

use crate::model::Path;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn absorb(key: u64, word: u64) -> u64 {
    mix(key.wrapping_add(GOLDEN) ^ word)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    draws: u64,
}

impl Stream {
    pub fn new(seed: u64, process: &Path, iteration: u64) -> Stream {
        let mut key = mix(seed);
        key = absorb(key, fnv1a(process.world.as_str().as_bytes()));
        if let Some(e) = &process.entity {
            key = absorb(key, fnv1a(e.as_str().as_bytes()));
        }
        if let Some(p) = &process.property {
            key = absorb(key, fnv1a(p.as_str().as_bytes()));
        }
        key = absorb(key, iteration);
        Stream { key, draws: 0 }
    }

    /// Continues a stream after `draws` values were taken.
    pub fn resume(seed: u64, process: &Path, iteration: u64, draws: u64) -> Stream {
        let mut s = Stream::new(seed, process, iteration);
        s.draws = draws;
        s
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        mix(self.key.wrapping_add(self.draws.wrapping_mul(GOLDEN)))
    }

    /// Uniform integer in `lo..=hi`; `lo` if the range is empty.
    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        let x = self.next_u64();
        if hi <= lo {
            return lo;
        }
        let span = (hi as i128 - lo as i128 + 1) as u128;
        let offset = ((x as u128 * span) >> 64) as i128;
        (lo as i128 + offset) as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::name;

    fn path(e: &str) -> Path {
        Path::property(name("w"), name(e), name("move"))
    }

    #[test]
    fn streams_are_independent_and_resumable() {
        let mut a = Stream::new(42, &path("ch1"), 0);
        let first: [u64; 3] = core::array::from_fn(|_| a.next_u64());
        let mut b = Stream::resume(42, &path("ch1"), 0, 1);
        assert_eq!(b.next_u64(), first[1]);
        assert_eq!(b.next_u64(), first[2]);
        assert_ne!(Stream::new(42, &path("ch2"), 0).next_u64(), first[0]);
        assert_ne!(Stream::new(42, &path("ch1"), 1).next_u64(), first[0]);
        assert_ne!(Stream::new(43, &path("ch1"), 0).next_u64(), first[0]);
    }

    #[test]
    fn range_bounds() {
        let mut s = Stream::new(1, &path("x"), 0);
        let mut seen = [false; 4];
        for _ in 0..1000 {
            let v = s.range_inclusive(1, 4);
            assert!((1..=4).contains(&v));
            seen[(v - 1) as usize] = true;
        }
        assert!(seen.iter().all(|x| *x));
        assert_eq!(s.range_inclusive(5, 5), 5);
        assert_eq!(s.range_inclusive(9, 2), 9);
        // the full i64 range must not overflow the span computation
        s.range_inclusive(i64::MIN, i64::MAX);
    }
}
