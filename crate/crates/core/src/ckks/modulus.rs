//! Word-sized prime moduli: Barrett and Shoup modular multiplication, prime
//! search for NTT-friendly primes.

/// A prime modulus `q < 2^62` with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor(2^128 / q), split into high and low words.
    ratio_hi: u64,
    ratio_lo: u64,
}

impl Modulus {
    pub const MAX_BITS: u32 = 62;

    pub fn new(value: u64) -> Self {
        assert!(value > 2 && value < (1u64 << Self::MAX_BITS), "modulus out of range");
        let ratio = u128::MAX / value as u128;
        Self {
            value,
            ratio_hi: (ratio >> 64) as u64,
            ratio_lo: ratio as u64,
        }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Barrett reduction of a 128-bit value smaller than `q^2 * 4`.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x_hi = (x >> 64) as u64;
        let x_lo = x as u64;
        // High 128 bits of x * ratio, truncated to the low word (the quotient fits in 64 bits).
        let lo_lo_hi = ((x_lo as u128 * self.ratio_lo as u128) >> 64) as u64;
        let lo_hi = x_lo as u128 * self.ratio_hi as u128;
        let hi_lo = x_hi as u128 * self.ratio_lo as u128;
        let mid = (lo_hi as u64 as u128) + (hi_lo as u64 as u128) + lo_lo_hi as u128;
        let carry = (mid >> 64) as u64;
        let quotient = x_hi
            .wrapping_mul(self.ratio_hi)
            .wrapping_add((lo_hi >> 64) as u64)
            .wrapping_add((hi_lo >> 64) as u64)
            .wrapping_add(carry);
        let mut r = (x as u64).wrapping_sub(quotient.wrapping_mul(self.value));
        while r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline(always)]
    pub fn reduce(&self, a: u64) -> u64 {
        if a < self.value {
            a
        } else {
            a % self.value
        }
    }

    /// Reduces a signed integer into `[0, q)`.
    pub fn reduce_i128(&self, a: i128) -> u64 {
        let q = self.value as i128;
        let r = a % q;
        (if r < 0 { r + q } else { r }) as u64
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// `floor(w * 2^64 / q)`, the Shoup companion of a fixed multiplicand `w`.
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` using the precomputed Shoup value of `w`.
    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `q` is prime.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }

    /// Centered representative of `a` in `(-q/2, q/2]`.
    #[inline(always)]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest primes below `2^bits` congruent to 1 modulo `2n`, skipping any in `exclude`.
pub fn ntt_primes(bits: u32, n: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    assert!(bits <= Modulus::MAX_BITS && bits >= 10);
    let step = 2 * n as u64;
    let upper = 1u64 << bits;
    // Largest candidate of the form k*2n + 1 below 2^bits.
    let mut candidate = ((upper - 1) / step) * step + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        assert!(candidate > step, "ran out of NTT primes at {bits} bits");
        if is_prime(candidate) && !exclude.contains(&candidate) && !out.contains(&candidate) {
            out.push(candidate);
        }
        candidate -= step;
    }
    out
}

/// Smallest-generator primitive `2n`-th root of unity modulo `q`.
pub fn primitive_root_2n(q: &Modulus, n: usize) -> Option<u64> {
    let two_n = 2 * n as u64;
    if (q.value() - 1) % two_n != 0 {
        return None;
    }
    let cofactor = (q.value() - 1) / two_n;
    for x in 2..q.value().min(1 << 20) {
        let g = q.pow(x, cofactor);
        // Order divides 2n; it is exactly 2n iff g^n = -1.
        if q.pow(g, n as u64) == q.value() - 1 {
            return Some(g);
        }
    }
    None
}
