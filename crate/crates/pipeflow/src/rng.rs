//! Counter-based splittable random streams.
//!
//! Every draw is a pure function of `(key, counter)`, which gives O(1)
//! random access into a stream and exact replay across runs and degrees
//! of parallelism. Child streams are derived by hashing a label into the
//! key, so trials never share state.

/// 64-bit finalizer (splitmix64).
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive a child key from a parent key and a label.
#[inline]
pub fn derive_key(key: u64, label: u64) -> u64 {
    mix64(key ^ mix64(label.wrapping_add(0xD1342543DE82EF95)))
}

/// A stateless generator: `value(n)` is the n-th word of the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { key: mix64(key) }
    }

    pub fn derive(&self, label: u64) -> Self {
        Stream {
            key: derive_key(self.key, label),
        }
    }

    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        mix64(self.key ^ counter.wrapping_mul(0x9E3779B97F4A7C15))
    }

    /// Uniform draw in [0, 1) from the n-th word.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.word(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// A cursor over a [`Stream`], for call sites that consume draws in order.
#[derive(Clone, Copy, Debug)]
pub struct Cursor {
    stream: Stream,
    counter: u64,
}

impl Cursor {
    pub fn new(stream: Stream) -> Self {
        Cursor { stream, counter: 0 }
    }

    pub fn from_seed(seed: u64) -> Self {
        Cursor::new(Stream::new(seed))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = self.stream.word(self.counter);
        self.counter += 1;
        w
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let u = self.stream.uniform(self.counter);
        self.counter += 1;
        u
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }
}
