//! Precomputed ring context: moduli, NTT tables, encoder and the RNS
//! algorithms (rescale, key switching, automorphisms) built on them.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::encoding::Encoder;
use super::modulus::Modulus;
use super::ntt::NttTable;
use super::params::RingParams;
use super::rns::{CrtBasis, RnsPoly};
use crate::error::HeError;

#[derive(Debug)]
pub struct CkksContext {
    params: RingParams,
    digest: [u8; 32],
    /// `q_0 .. q_d` followed by the special prime `P`.
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    encoder: Encoder,
    // inv_last[l][i] = q_l^{-1} mod q_i for i < l
    inv_last: Vec<Vec<u64>>,
    // P^{-1} mod q_i
    inv_special: Vec<u64>,
    // P mod q_i
    special_mod_q: Vec<u64>,
    crt: Vec<CrtBasis>,
}

impl CkksContext {
    pub fn new(params: RingParams) -> Result<Self, HeError> {
        params.validate()?;
        let n = params.ring_degree;
        let moduli: Vec<Modulus> = params
            .modulus_chain
            .iter()
            .chain(std::iter::once(&params.special_modulus))
            .map(|&q| Modulus::new(q))
            .collect();
        let tables = moduli
            .iter()
            .map(|q| NttTable::new(*q, n).ok_or(HeError::InvalidPrime(q.value())))
            .collect::<Result<Vec<_>, _>>()?;
        let depth = params.depth();
        let inv_last = (0..=depth)
            .map(|l| (0..l).map(|i| moduli[i].inv(moduli[l].value())).collect())
            .collect();
        let special = moduli[depth + 1];
        let inv_special = (0..=depth).map(|i| moduli[i].inv(special.value())).collect();
        let special_mod_q = (0..=depth).map(|i| moduli[i].reduce(special.value())).collect();
        let crt = (0..=depth).map(|l| CrtBasis::new(&moduli[..=l])).collect();
        Ok(Self {
            digest: params.digest(),
            encoder: Encoder::new(n),
            params,
            moduli,
            tables,
            inv_last,
            inv_special,
            special_mod_q,
            crt,
        })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn degree(&self) -> usize {
        self.params.ring_degree
    }

    pub fn slots(&self) -> usize {
        self.params.slot_count()
    }

    pub fn depth(&self) -> usize {
        self.params.depth()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Moduli `q_0 .. q_level`.
    pub fn level_moduli(&self, level: usize) -> &[Modulus] {
        &self.moduli[..=level]
    }

    pub fn modulus(&self, i: usize) -> &Modulus {
        &self.moduli[i]
    }

    pub fn special_index(&self) -> usize {
        self.depth() + 1
    }

    /// `q_0 .. q_d, P`.
    pub fn extended_moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn to_ntt(&self, poly: &mut RnsPoly) {
        for (i, limb) in poly.limbs.iter_mut().enumerate() {
            self.tables[i].forward(limb);
        }
    }

    pub fn to_coeff(&self, poly: &mut RnsPoly) {
        for (i, limb) in poly.limbs.iter_mut().enumerate() {
            self.tables[i].inverse(limb);
        }
    }

    /// As `to_ntt`, but limb `i` of `poly` uses basis index `basis[i]`.
    fn to_ntt_basis(&self, poly: &mut RnsPoly, basis: &[usize]) {
        for (limb, &b) in poly.limbs.iter_mut().zip(basis) {
            self.tables[b].forward(limb);
        }
    }

    /// Encodes real slot values at `scale` as an NTT-form plaintext at `level`.
    pub fn encode(&self, values: &[f64], level: usize, scale: f64) -> Result<RnsPoly, HeError> {
        if values.len() != self.slots() {
            return Err(HeError::PlainLength {
                got: values.len(),
                expected: self.slots(),
            });
        }
        let limit = self.params.magnitude_limit();
        for &v in values {
            if !v.is_finite() || v.abs() > limit {
                return Err(HeError::MagnitudeOverflow { value: v, limit });
            }
        }
        let coeffs = self.encoder.embed_inverse(values);
        let moduli = self.level_moduli(level);
        let mut poly = RnsPoly::zero(level + 1, self.degree());
        for (j, c) in coeffs.iter().enumerate() {
            let scaled = (c * scale).round();
            // Scaled coefficients stay far below 2^127.
            let v = scaled as i128;
            for (i, q) in moduli.iter().enumerate() {
                poly.limbs[i][j] = q.reduce_i128(v);
            }
        }
        self.to_ntt(&mut poly);
        Ok(poly)
    }

    /// Decodes an NTT-form plaintext at `scale` back to slot values.
    pub fn decode(&self, poly: &RnsPoly, scale: f64) -> Vec<f64> {
        let mut coeff = poly.clone();
        self.to_coeff(&mut coeff);
        let level = coeff.num_limbs() - 1;
        let centered = self.crt[level].centered_f64(&coeff);
        let scaled: Vec<f64> = centered.iter().map(|c| c / scale).collect();
        self.encoder.embed(&scaled)
    }

    pub fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.degree()).map(|_| rng.gen_range(-1i64..=1)).collect()
    }

    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let sigma = self.params.error_stddev;
        let normal = Normal::new(0.0, sigma).expect("valid stddev");
        let bound = 6.0 * sigma;
        (0..self.degree())
            .map(|_| loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= bound {
                    break x.round() as i64;
                }
            })
            .collect()
    }

    /// Uniform NTT-form polynomial over the given basis indices.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, basis: &[usize]) -> RnsPoly {
        let n = self.degree();
        let limbs = basis
            .iter()
            .map(|&b| {
                let q = self.moduli[b].value();
                (0..n).map(|_| rng.gen_range(0..q)).collect()
            })
            .collect();
        RnsPoly { limbs }
    }

    /// NTT-form residues of a small signed polynomial over the given basis indices.
    pub fn small_to_ntt(&self, coeffs: &[i64], basis: &[usize]) -> RnsPoly {
        let moduli: Vec<Modulus> = basis.iter().map(|&b| self.moduli[b]).collect();
        let mut p = RnsPoly::from_signed(coeffs, &moduli);
        self.to_ntt_basis(&mut p, basis);
        p
    }

    /// Drops the last prime `q_l`, dividing by it with rounding.
    pub fn rescale_poly(&self, poly: &mut RnsPoly) {
        let l = poly.num_limbs() - 1;
        assert!(l >= 1);
        let mut last = poly.limbs.pop().expect("limb");
        self.tables[l].inverse(&mut last);
        let ql = self.moduli[l];
        // Add q_l/2 before flooring so the division rounds to nearest.
        let half = ql.value() >> 1;
        for x in last.iter_mut() {
            *x = ql.add(*x, half);
        }
        let mut tmp = vec![0u64; self.degree()];
        for i in 0..l {
            let qi = self.moduli[i];
            let half_i = qi.reduce(half);
            for (t, &x) in tmp.iter_mut().zip(&last) {
                *t = qi.sub(qi.reduce(x), half_i);
            }
            self.tables[i].forward(&mut tmp);
            let inv = self.inv_last[l][i];
            let inv_shoup = qi.shoup(inv);
            for (c, &t) in poly.limbs[i].iter_mut().zip(&tmp) {
                *c = qi.mul_shoup(qi.sub(*c, t), inv, inv_shoup);
            }
        }
    }

    /// Applies `X -> X^galois` to a coefficient-form polynomial.
    pub fn automorphism_coeff(&self, poly: &RnsPoly, galois: usize, basis: &[usize]) -> RnsPoly {
        let n = self.degree();
        let two_n = 2 * n;
        let mut out = RnsPoly::zero(poly.num_limbs(), n);
        for ((src, dst), &b) in poly.limbs.iter().zip(out.limbs.iter_mut()).zip(basis) {
            let q = self.moduli[b];
            let mut idx = 0usize;
            for &c in src {
                if idx < n {
                    dst[idx] = c;
                } else {
                    dst[idx - n] = q.neg(c);
                }
                idx = (idx + galois) % two_n;
            }
        }
        out
    }

    /// Applies `X -> X^galois` to small signed coefficients.
    pub fn automorphism_signed(&self, coeffs: &[i64], galois: usize) -> Vec<i64> {
        let n = self.degree();
        let mut out = vec![0i64; n];
        for (i, &c) in coeffs.iter().enumerate() {
            let j = (i * galois) % (2 * n);
            if j < n {
                out[j] = c;
            } else {
                out[j - n] = -c;
            }
        }
        out
    }

    /// Key switching with one digit per ciphertext prime and a special
    /// prime: returns NTT-form `(k0, k1)` over `q_0..q_level` with
    /// `k0 + k1*s ~ d*s'` where the key encrypts `P*s'`.
    ///
    /// `d` is in coefficient form over `q_0..q_level`.
    pub fn key_switch(&self, d: &RnsPoly, key: &[(RnsPoly, RnsPoly)], level: usize) -> (RnsPoly, RnsPoly) {
        let n = self.degree();
        let special = self.special_index();
        let basis: Vec<usize> = (0..=level).chain(std::iter::once(special)).collect();
        let mut acc0 = RnsPoly::zero(basis.len(), n);
        let mut acc1 = RnsPoly::zero(basis.len(), n);
        let mut lifted = vec![0u64; n];
        for (j, digit) in d.limbs.iter().enumerate().take(level + 1) {
            let (kb, ka) = &key[j];
            for (t, &b) in basis.iter().enumerate() {
                let qb = self.moduli[b];
                for (dst, &src) in lifted.iter_mut().zip(digit) {
                    *dst = qb.reduce(src);
                }
                self.tables[b].forward(&mut lifted);
                // Keys are stored over the full extended basis, so basis
                // index and key limb coincide.
                let key_limb = b;
                let (a0, a1) = (&mut acc0.limbs[t], &mut acc1.limbs[t]);
                for (((s0, s1), &x), (&y0, &y1)) in a0
                    .iter_mut()
                    .zip(a1.iter_mut())
                    .zip(&lifted)
                    .zip(kb.limbs[key_limb].iter().zip(&ka.limbs[key_limb]))
                {
                    *s0 = qb.add(*s0, qb.mul(x, y0));
                    *s1 = qb.add(*s1, qb.mul(x, y1));
                }
            }
        }
        (self.mod_down(acc0, level), self.mod_down(acc1, level))
    }

    // Divides an NTT-form polynomial over (q_0..q_level, P) by P with rounding.
    fn mod_down(&self, mut poly: RnsPoly, level: usize) -> RnsPoly {
        let special = self.special_index();
        let mut last = poly.limbs.pop().expect("special limb");
        self.tables[special].inverse(&mut last);
        let p = self.moduli[special];
        let half = p.value() >> 1;
        for x in last.iter_mut() {
            *x = p.add(*x, half);
        }
        let mut tmp = vec![0u64; self.degree()];
        for i in 0..=level {
            let qi = self.moduli[i];
            let half_i = qi.reduce(half);
            for (t, &x) in tmp.iter_mut().zip(&last) {
                *t = qi.sub(qi.reduce(x), half_i);
            }
            self.tables[i].forward(&mut tmp);
            let inv = self.inv_special[i];
            let inv_shoup = qi.shoup(inv);
            for (c, &t) in poly.limbs[i].iter_mut().zip(&tmp) {
                *c = qi.mul_shoup(qi.sub(*c, t), inv, inv_shoup);
            }
        }
        poly
    }

    pub fn special_mod_q(&self, i: usize) -> u64 {
        self.special_mod_q[i]
    }


}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::SecurityCheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_ctx() -> CkksContext {
        let mut p = RingParams::default_for(64);
        p.security = SecurityCheck::InsecureTestOnly;
        CkksContext::new(p).unwrap()
    }

    #[test]
    fn encode_decode_zero_is_exact() {
        let ctx = small_ctx();
        let zero = vec![0.0; ctx.slots()];
        let pt = ctx.encode(&zero, 3, 2f64.powi(40)).unwrap();
        assert!(pt.limbs.iter().flatten().all(|&x| x == 0));
        assert_eq!(ctx.decode(&pt, 2f64.powi(40)), zero);
    }

    #[test]
    fn encode_is_linear_and_roundtrips() {
        let ctx = small_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scale = 2f64.powi(40);
        let u: Vec<f64> = (0..ctx.slots()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..ctx.slots()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut pu = ctx.encode(&u, 2, scale).unwrap();
        let pv = ctx.encode(&v, 2, scale).unwrap();
        for (a, b) in ctx.decode(&pu, scale).iter().zip(&u) {
            assert!((a - b).abs() < 1e-6);
        }
        pu.add_assign(&pv, ctx.level_moduli(2));
        for (i, s) in ctx.decode(&pu, scale).iter().enumerate() {
            assert!((s - (u[i] + v[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn magnitude_overflow() {
        let ctx = small_ctx();
        let mut v = vec![0.0; ctx.slots()];
        v[3] = 1e6;
        assert!(matches!(
            ctx.encode(&v, 3, 2f64.powi(40)),
            Err(HeError::MagnitudeOverflow { .. })
        ));
        v[3] = f64::NAN;
        assert!(ctx.encode(&v, 3, 2f64.powi(40)).is_err());
    }

    #[test]
    fn rescale_divides_by_last_prime() {
        let ctx = small_ctx();
        let n = ctx.degree();
        let q2 = ctx.modulus(2).value() as i64;
        // 3*q2 + 5 divided by q2 rounds to 3; -7*q2 - 2 to -7.
        let mut coeffs = vec![0i64; n];
        coeffs[0] = 3 * q2 + 5;
        coeffs[1] = -7 * q2 - 2;
        let mut p = RnsPoly::from_signed(&coeffs, ctx.level_moduli(2));
        ctx.to_ntt(&mut p);
        ctx.rescale_poly(&mut p);
        ctx.to_coeff(&mut p);
        assert_eq!(p.num_limbs(), 2);
        let vals = CrtBasis::new(ctx.level_moduli(1)).centered_f64(&p);
        assert_eq!(vals[0], 3.0);
        assert_eq!(vals[1], -7.0);
        assert!(vals[2..].iter().all(|&v| v == 0.0));
    }
}
