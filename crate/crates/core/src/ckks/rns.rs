//! Residue-number-system polynomials and CRT reconstruction.

use byteorder::{ByteOrder, LittleEndian};
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use super::modulus::Modulus;

/// A polynomial stored as one coefficient (or evaluation) vector per prime.
/// Limb `i` is reduced modulo the `i`-th modulus of whatever basis the
/// owner uses; all limbs share one representation (NTT or coefficient).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) limbs: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(num_limbs: usize, n: usize) -> Self {
        Self {
            limbs: vec![vec![0u64; n]; num_limbs],
        }
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }

    pub fn degree(&self) -> usize {
        self.limbs.first().map_or(0, Vec::len)
    }

    pub fn limb(&self, i: usize) -> &[u64] {
        &self.limbs[i]
    }

    pub fn write_words(&self, out: &mut Vec<u8>) {
        out.reserve(self.num_limbs() * self.degree() * 8);
        for limb in &self.limbs {
            for w in limb {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
    }

    pub fn read_words(bytes: &[u8], num_limbs: usize, n: usize) -> Self {
        debug_assert_eq!(bytes.len(), num_limbs * n * 8);
        let limbs = bytes
            .chunks_exact(n * 8)
            .map(|c| c.chunks_exact(8).map(LittleEndian::read_u64).collect())
            .collect();
        Self { limbs }
    }

    /// Residues of a signed coefficient vector in each modulus (coefficient form).
    pub fn from_signed(coeffs: &[i64], moduli: &[Modulus]) -> Self {
        let limbs = moduli
            .iter()
            .map(|q| coeffs.iter().map(|&c| q.reduce_i128(c as i128)).collect())
            .collect();
        Self { limbs }
    }

    pub fn add_assign(&mut self, other: &RnsPoly, moduli: &[Modulus]) {
        for ((a, b), q) in self.limbs.iter_mut().zip(&other.limbs).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = q.add(*x, *y);
            }
        }
    }

    pub fn sub_assign(&mut self, other: &RnsPoly, moduli: &[Modulus]) {
        for ((a, b), q) in self.limbs.iter_mut().zip(&other.limbs).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = q.sub(*x, *y);
            }
        }
    }

    pub fn negate(&mut self, moduli: &[Modulus]) {
        for (a, q) in self.limbs.iter_mut().zip(moduli) {
            for x in a.iter_mut() {
                *x = q.neg(*x);
            }
        }
    }

    /// Pointwise product over the first `self.num_limbs()` moduli.
    pub fn mul(&self, other: &RnsPoly, moduli: &[Modulus]) -> RnsPoly {
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .zip(moduli)
            .map(|((a, b), q)| a.iter().zip(b).map(|(x, y)| q.mul(*x, *y)).collect())
            .collect();
        RnsPoly { limbs }
    }

    /// `self += a * b` pointwise.
    pub fn mul_acc(&mut self, a: &RnsPoly, b: &RnsPoly, moduli: &[Modulus]) {
        for (((acc, x), y), q) in self.limbs.iter_mut().zip(&a.limbs).zip(&b.limbs).zip(moduli) {
            for ((s, u), v) in acc.iter_mut().zip(x).zip(y) {
                *s = q.add(*s, q.mul(*u, *v));
            }
        }
    }

    /// Keeps limbs `0..count`.
    pub fn truncate(&mut self, count: usize) {
        self.limbs.truncate(count);
    }
}

/// CRT reconstruction from residues modulo a prefix of primes to centered
/// integers in `(-Q/2, Q/2]`.
#[derive(Clone, Debug)]
pub struct CrtBasis {
    moduli: Vec<Modulus>,
    product: BigUint,
    half: BigUint,
    // (Q / q_i) and its inverse modulo q_i
    partials: Vec<BigUint>,
    partial_inverses: Vec<u64>,
}

impl CrtBasis {
    pub fn new(moduli: &[Modulus]) -> Self {
        let product = moduli
            .iter()
            .fold(BigUint::from(1u8), |acc, q| acc * q.value());
        let partials: Vec<BigUint> = moduli.iter().map(|q| &product / q.value()).collect();
        let partial_inverses = moduli
            .iter()
            .zip(&partials)
            .map(|(q, p)| {
                let r = (p % q.value()).to_u64().expect("residue fits");
                q.inv(r)
            })
            .collect();
        Self {
            moduli: moduli.to_vec(),
            half: &product >> 1,
            product,
            partials,
            partial_inverses,
        }
    }

    pub fn product(&self) -> &BigUint {
        &self.product
    }

    /// Non-negative representative in `[0, Q)`.
    pub fn reconstruct(&self, residues: &[u64]) -> BigUint {
        let mut acc = BigUint::zero();
        for (i, q) in self.moduli.iter().enumerate() {
            let y = q.mul(residues[i], self.partial_inverses[i]);
            acc += &self.partials[i] * y;
        }
        acc % &self.product
    }

    pub fn reconstruct_centered(&self, residues: &[u64]) -> BigInt {
        let x = self.reconstruct(residues);
        if x > self.half {
            BigInt::from_biguint(Sign::Minus, &self.product - x)
        } else {
            BigInt::from_biguint(Sign::Plus, x)
        }
    }

    /// Centered value of each coefficient of a coefficient-form polynomial, as f64.
    pub fn centered_f64(&self, poly: &RnsPoly) -> Vec<f64> {
        let n = poly.degree();
        if self.moduli.len() == 1 {
            let q = &self.moduli[0];
            return poly.limbs[0].iter().map(|&c| q.center(c) as f64).collect();
        }
        let mut residues = vec![0u64; self.moduli.len()];
        (0..n)
            .map(|j| {
                for (i, r) in residues.iter_mut().enumerate() {
                    *r = poly.limbs[i][j];
                }
                self.reconstruct_centered(&residues).to_f64().unwrap_or(f64::NAN)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::modulus::ntt_primes;
    use num_bigint::RandBigInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crt_matches_bigint_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let moduli: Vec<Modulus> = ntt_primes(40, 16, 4, &[]).into_iter().map(Modulus::new).collect();
        for k in 1..=4 {
            let basis = CrtBasis::new(&moduli[..k]);
            for _ in 0..50 {
                let x = rng.gen_biguint_below(basis.product());
                let residues: Vec<u64> = moduli[..k]
                    .iter()
                    .map(|q| (&x % q.value()).to_u64().unwrap())
                    .collect();
                assert_eq!(basis.reconstruct(&residues), x);
            }
        }
    }

    #[test]
    fn centered_lift_handles_negatives() {
        let moduli: Vec<Modulus> = ntt_primes(30, 8, 2, &[]).into_iter().map(Modulus::new).collect();
        let basis = CrtBasis::new(&moduli);
        let values = [-5i64, 0, 7, -123_456_789_012, 987_654_321_098, 1, -1, 42];
        let poly = RnsPoly::from_signed(&values, &moduli);
        let back = basis.centered_f64(&poly);
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(*a as f64, *b);
        }
    }

    #[test]
    fn words_roundtrip() {
        let moduli: Vec<Modulus> = ntt_primes(30, 4, 2, &[]).into_iter().map(Modulus::new).collect();
        let p = RnsPoly::from_signed(&[1, -2, 3, -4], &moduli);
        let mut bytes = Vec::new();
        p.write_words(&mut bytes);
        assert_eq!(RnsPoly::read_words(&bytes, 2, 4), p);
    }
}
