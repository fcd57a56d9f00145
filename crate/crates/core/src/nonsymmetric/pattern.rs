use rand::Rng;

use crate::error::{Error, Result};

/// A vector in `{+1,-1}^T` packed one bit per coordinate (set bit = `+1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignPattern {
    words: Vec<u64>,
    len: usize,
}

impl SignPattern {
    /// All coordinates `-1`.
    pub fn zeros(len: usize) -> Self {
        SignPattern {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut p = SignPattern::zeros(len);
        p.fill_random(rng);
        p
    }

    pub fn fill_random<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for w in &mut self.words {
            *w = rng.random();
        }
        self.mask_tail();
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        let mut p = SignPattern::zeros(signs.len());
        for (x, &s) in signs.iter().enumerate() {
            match s {
                1 => p.words[x / 64] |= 1 << (x % 64),
                -1 => {}
                other => return Err(Error::InvalidParameter(format!("pattern entry must be +1 or -1, got {other}"))),
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, x: usize) -> i8 {
        assert!(x < self.len, "coordinate {x} out of range {}", self.len);
        if (self.words[x / 64] >> (x % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn negated(&self) -> Self {
        let mut p = SignPattern {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        p.mask_tail();
        p
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.len).map(|x| self.get(x)).collect()
    }

    /// `sums[x] += sign * b(x)` for every coordinate.
    #[inline]
    pub fn accumulate_signed(&self, sign: i8, sums: &mut [i64]) {
        debug_assert_eq!(sums.len(), self.len);
        let flip = if sign > 0 { 0 } else { u64::MAX };
        for (chunk, &word) in sums.chunks_mut(64).zip(&self.words) {
            let w = word ^ flip;
            for (k, s) in chunk.iter_mut().enumerate() {
                *s += (((w >> k) & 1) as i64) * 2 - 1;
            }
        }
    }

    /// Inner product `b . v`.
    pub fn dot(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.len);
        let mut total = 0.0;
        for (chunk, &word) in v.chunks(64).zip(&self.words) {
            for (k, &a) in chunk.iter().enumerate() {
                if (word >> k) & 1 == 1 {
                    total += a;
                } else {
                    total -= a;
                }
            }
        }
        total
    }

    /// Little-endian packed bytes, `ceil(T / 8)` of them; bit `x % 8` of byte
    /// `x / 8` holds coordinate `x`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for i in 0..nbytes {
            out.push((self.words[i / 8] >> (8 * (i % 8))) as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Parse(format!(
                "pattern of {len} coordinates needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let mut p = SignPattern::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            p.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let before = p.words.clone();
        p.mask_tail();
        if before != p.words {
            return Err(Error::Parse("pattern has bits set beyond its length".into()));
        }
        Ok(p)
    }

    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        if !hex.len().is_multiple_of(2) {
            return Err(Error::Parse(format!("odd-length hex pattern: {hex}")));
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| Error::Parse(format!("bad hex pattern: {hex}"))))
            .collect::<Result<Vec<u8>>>()?;
        SignPattern::from_bytes(&bytes, len)
    }
}
