//! Exact base dynamics `θ ↦ dθ mod 1` driven by base-d digits.
//!
//! Multiplying a float by `d` shifts its mantissa out after roughly
//! `53 / log2 d` steps, so long floating orbits of the base map collapse onto
//! 0. [`DigitStream`] keeps a window of the next `K` digits of θ (with
//! `d^K ≤ 2^63`), so θ is always resolved to about `d^-K` and one base step is
//! a digit shift. Digits come from an explicit prefix first and then from a
//! tail that is either all zeros or a seeded pseudo-random stream.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum Tail {
    Zeros,
    Random(RandomDigits),
}

#[derive(Debug, Clone)]
pub struct RandomDigits {
    pub(crate) rng: ChaCha8Rng,
    pub(crate) buf: u64,
    pub(crate) nbits: u32,
}

impl RandomDigits {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            buf: 0,
            nbits: 0,
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            buf: 0,
            nbits: 0,
        }
    }

    /// The next `count` base-d digits.
    pub fn take(&mut self, d: u32, count: usize) -> Vec<u32> {
        let d = d as u64;
        let bits = if d.is_power_of_two() { d.trailing_zeros() } else { 0 };
        (0..count).map(|_| self.next(d, bits) as u32).collect()
    }

    #[inline]
    fn next(&mut self, d: u64, bits: u32) -> u64 {
        if bits == 0 {
            return self.rng.random_range(0..d);
        }
        if self.nbits < bits {
            self.buf = self.rng.next_u64();
            self.nbits = 64;
        }
        let v = self.buf & (d - 1);
        self.buf >>= bits;
        self.nbits -= bits;
        v
    }
}

#[derive(Debug, Clone)]
pub struct DigitStream {
    d: u64,
    /// log2 d when d is a power of two, else 0
    bits: u32,
    width: u32,
    modulus: u64,
    high: u64,
    window: u64,
    prefix: Vec<u32>,
    pos: usize,
    tail: Tail,
}

/// Largest K with d^K ≤ 2^63, and d^K.
pub fn window_width(d: u64) -> (u32, u64) {
    assert!(d >= 2);
    let mut k = 0u32;
    let mut m = 1u64;
    while let Some(next) = m.checked_mul(d) {
        if next > 1u64 << 63 {
            break;
        }
        m = next;
        k += 1;
    }
    (k, m)
}

impl DigitStream {
    pub fn new(d: u32, prefix: Vec<u32>, tail: Tail) -> Self {
        let d = d as u64;
        let (width, modulus) = window_width(d);
        let bits = if d.is_power_of_two() {
            d.trailing_zeros()
        } else {
            0
        };
        let mut s = Self {
            d,
            bits,
            width,
            modulus,
            high: modulus / d,
            window: 0,
            prefix,
            pos: 0,
            tail,
        };
        for _ in 0..width {
            let digit = s.next_digit();
            s.window = s.window * d + digit;
        }
        s
    }

    /// Digits of a float θ ∈ [0, 1) followed by `tail`.
    pub fn from_theta(d: u32, theta: f64, tail: Tail) -> Self {
        Self::new(d, float_digits(theta, d), tail)
    }

    /// Uniformly random point of the circle.
    pub fn random(d: u32, seed: u64, stream: u64) -> Self {
        Self::new(d, Vec::new(), Tail::Random(RandomDigits::new(seed, stream)))
    }

    #[inline]
    fn next_digit(&mut self) -> u64 {
        let digit = if self.pos < self.prefix.len() {
            self.prefix[self.pos] as u64
        } else {
            match &mut self.tail {
                Tail::Zeros => 0,
                Tail::Random(r) => r.next(self.d, self.bits),
            }
        };
        self.pos += 1;
        digit
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        let t = self.window as f64 / self.modulus as f64;
        if t < 1.0 {
            t
        } else {
            f64::from_bits(1.0f64.to_bits() - 1)
        }
    }

    /// Leading digit of θ.
    #[inline]
    pub fn leading_digit(&self) -> u32 {
        (self.window / self.high) as u32
    }

    /// One step of the base map.
    #[inline]
    pub fn advance(&mut self) {
        let digit = self.next_digit();
        if self.bits > 0 {
            self.window = ((self.window & (self.high - 1)) << self.bits) | digit;
        } else {
            self.window = (self.window % self.high) * self.d + digit;
        }
    }

    pub fn base(&self) -> u32 {
        self.d as u32
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub(crate) fn raw_state(&self) -> (u64, usize) {
        (self.window, self.pos)
    }

    pub(crate) fn tail(&self) -> &Tail {
        &self.tail
    }

    pub(crate) fn restore(d: u32, window: u64, pos: usize, prefix: Vec<u32>, tail: Tail) -> Self {
        let mut s = Self::new(d, Vec::new(), Tail::Zeros);
        s.window = window;
        s.pos = pos;
        s.prefix = prefix;
        s.tail = tail;
        s
    }
}

/// Base-d digits of a float θ ∈ [0, 1). Exact (terminating) for power-of-two
/// bases; otherwise truncated once float resolution is exhausted.
pub fn float_digits(theta: f64, d: u32) -> Vec<u32> {
    assert!((0.0..1.0).contains(&theta), "theta must lie in [0,1)");
    let df = d as f64;
    let max = if d.is_power_of_two() {
        1100
    } else {
        (53.0 / df.log2()).ceil() as usize + 8
    };
    let mut out = Vec::new();
    let mut t = theta;
    while t != 0.0 && out.len() < max {
        t *= df;
        let digit = t.floor();
        out.push(digit as u32);
        t -= digit;
    }
    out
}

/// First `count` base-d digits of the rational `num / den` (0 ≤ num < den).
pub fn rational_digits(num: u128, den: u128, d: u32, count: usize) -> Vec<u32> {
    assert!(den > 0 && num < den);
    let d = d as u128;
    let mut r = num;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r *= d;
        out.push((r / den) as u32);
        r %= den;
    }
    out
}

/// `n` base-d digits of the integer `j` (most significant first).
pub fn integer_digits(mut j: u128, d: u32, n: usize) -> Vec<u32> {
    let d = d as u128;
    let mut out = vec![0u32; n];
    for slot in out.iter_mut().rev() {
        *slot = (j % d) as u32;
        j /= d;
    }
    assert_eq!(j, 0, "integer does not fit in the requested digit count");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(window_width(2), (63, 1 << 63));
        assert_eq!(window_width(3).0, 39);
        assert_eq!(window_width(10).0, 18);
    }

    #[test]
    fn shift_matches_float_doubling_for_dyadics() {
        let theta = 0.3125; // 0.0101 in binary
        let mut s = DigitStream::from_theta(2, theta, Tail::Zeros);
        let mut t = theta;
        for _ in 0..10 {
            assert_eq!(s.theta(), t);
            s.advance();
            t = (2.0 * t).fract();
        }
    }

    #[test]
    fn random_tail_does_not_collapse() {
        let mut s = DigitStream::random(2, 7, 0);
        let mut zeros = 0;
        for _ in 0..10_000 {
            s.advance();
            if s.theta() == 0.0 {
                zeros += 1;
            }
        }
        assert_eq!(zeros, 0);
    }

    #[test]
    fn ternary_shift() {
        let digits = vec![1, 2, 0, 2];
        let mut s = DigitStream::new(3, digits, Tail::Zeros);
        let expected = (1.0 / 3.0) + 2.0 / 9.0 + 2.0 / 81.0;
        assert!((s.theta() - expected).abs() < 1e-15);
        s.advance();
        let expected = 2.0 / 3.0 + 2.0 / 27.0;
        assert!((s.theta() - expected).abs() < 1e-15);
        assert_eq!(s.leading_digit(), 2);
    }

    #[test]
    fn rational_and_integer_digits() {
        assert_eq!(rational_digits(1, 3, 2, 4), vec![0, 1, 0, 1]);
        assert_eq!(integer_digits(6, 2, 4), vec![0, 1, 1, 0]);
        assert_eq!(float_digits(0.75, 2), vec![1, 1]);
    }

    #[test]
    fn replayed_tail_matches_stream() {
        let digits = RandomDigits::new(4, 9).take(2, 80);
        let mut s = DigitStream::new(2, Vec::new(), Tail::Random(RandomDigits::new(4, 9)));
        let mut t = DigitStream::new(2, digits, Tail::Zeros);
        for _ in 0..17 {
            assert_eq!(s.theta(), t.theta());
            s.advance();
            t.advance();
        }
    }

    #[test]
    fn random_streams_are_reproducible() {
        let mut a = DigitStream::random(5, 11, 3);
        let mut b = DigitStream::random(5, 11, 3);
        for _ in 0..500 {
            a.advance();
            b.advance();
            assert_eq!(a.theta().to_bits(), b.theta().to_bits());
        }
    }
}
