//! Key material and its binary encoding.
//!
//! Every serialized key starts with `BMK1 | params digest (32) | kind u8`.
//! Kinds: 1 secret, 2 public, 3 relinearization, 4 Galois set, 5 evaluation
//! bundle (relinearization plus Galois set).

use std::collections::BTreeMap;

use byteorder::{ByteOrder, LittleEndian};
use rand::Rng;

use super::context::CkksContext;
use super::rns::RnsPoly;
use crate::error::HeError;

pub const KEY_MAGIC: &[u8; 4] = b"BMK1";
const KEY_HEADER_LEN: usize = 4 + 32 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum KeyKind {
    Secret = 1,
    Public = 2,
    Relin = 3,
    Galois = 4,
    Evaluation = 5,
}

impl KeyKind {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Secret,
            2 => Self::Public,
            3 => Self::Relin,
            4 => Self::Galois,
            5 => Self::Evaluation,
            _ => return None,
        })
    }
}

/// Reads the kind byte of a serialized key after checking magic and digest.
pub fn peek_key_kind(bytes: &[u8], digest: &[u8; 32]) -> Result<KeyKind, HeError> {
    if bytes.len() < KEY_HEADER_LEN || &bytes[..4] != KEY_MAGIC {
        return Err(HeError::Malformed("bad key magic".into()));
    }
    if &bytes[4..36] != digest {
        return Err(HeError::KeyMismatch);
    }
    KeyKind::from_u8(bytes[36]).ok_or_else(|| HeError::Malformed("unknown key kind".into()))
}

fn header(out: &mut Vec<u8>, digest: &[u8; 32], kind: KeyKind) {
    out.extend_from_slice(KEY_MAGIC);
    out.extend_from_slice(digest);
    out.push(kind as u8);
}

fn body<'a>(bytes: &'a [u8], digest: &[u8; 32], kind: KeyKind) -> Result<&'a [u8], HeError> {
    let got = peek_key_kind(bytes, digest)?;
    if got != kind {
        return Err(HeError::Malformed(format!("expected {kind:?} key, found {got:?}")));
    }
    Ok(&bytes[KEY_HEADER_LEN..])
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], HeError> {
        if self.buf.len() < len {
            return Err(HeError::Malformed("truncated key".into()));
        }
        let (head, tail) = self.buf.split_at(len);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, HeError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64, HeError> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn poly(&mut self, limbs: usize, n: usize) -> Result<RnsPoly, HeError> {
        Ok(RnsPoly::read_words(self.take(limbs * n * 8)?, limbs, n))
    }

    fn finish(&self) -> Result<(), HeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(HeError::Malformed("trailing bytes in key".into()))
        }
    }
}

/// Ternary secret `s`, kept in coefficient and NTT form over the extended basis.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    pub(crate) ntt: RnsPoly,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl SecretKey {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, rng: &mut R) -> Self {
        let coeffs = ctx.sample_ternary(rng);
        Self::from_coeffs(ctx, coeffs)
    }

    fn from_coeffs(ctx: &CkksContext, coeffs: Vec<i64>) -> Self {
        let basis: Vec<usize> = (0..ctx.extended_moduli().len()).collect();
        let ntt = ctx.small_to_ntt(&coeffs, &basis);
        Self { coeffs, ntt }
    }

    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut out = Vec::with_capacity(KEY_HEADER_LEN + self.coeffs.len());
        header(&mut out, &ctx.digest(), KeyKind::Secret);
        out.extend(self.coeffs.iter().map(|&c| c as i8 as u8));
        out
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self, HeError> {
        let b = body(bytes, &ctx.digest(), KeyKind::Secret)?;
        if b.len() != ctx.degree() {
            return Err(HeError::Malformed("secret key length".into()));
        }
        let coeffs: Vec<i64> = b.iter().map(|&x| x as i8 as i64).collect();
        if coeffs.iter().any(|c| c.abs() > 1) {
            return Err(HeError::Malformed("secret key is not ternary".into()));
        }
        Ok(Self::from_coeffs(ctx, coeffs))
    }
}

/// Encryption of zero at the top level: `(b, a)` with `b = -a*s + e`.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

impl PublicKey {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, sk: &SecretKey, rng: &mut R) -> Self {
        let top = ctx.depth();
        let basis: Vec<usize> = (0..=top).collect();
        let moduli = ctx.level_moduli(top);
        let a = ctx.sample_uniform(rng, &basis);
        let e = ctx.small_to_ntt(&ctx.sample_gaussian(rng), &basis);
        let mut s = sk.ntt.clone();
        s.truncate(top + 1);
        let mut b = a.mul(&s, moduli);
        b.negate(moduli);
        b.add_assign(&e, moduli);
        Self { b, a }
    }

    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut out = Vec::new();
        header(&mut out, &ctx.digest(), KeyKind::Public);
        self.b.write_words(&mut out);
        self.a.write_words(&mut out);
        out
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self, HeError> {
        let mut r = Reader {
            buf: body(bytes, &ctx.digest(), KeyKind::Public)?,
        };
        let limbs = ctx.depth() + 1;
        let b = r.poly(limbs, ctx.degree())?;
        let a = r.poly(limbs, ctx.degree())?;
        r.finish()?;
        Ok(Self { b, a })
    }
}

/// Key-switching key from `s'` to `s`: one `(b_j, a_j)` pair per ciphertext
/// prime, each over `q_0..q_d, P`, with `b_j = -a_j*s + e_j + [i == j]*P*s'`
/// in limb `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeySwitchKey {
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

impl KeySwitchKey {
    /// `target` is `s'` in NTT form over the extended basis.
    pub fn generate<R: Rng + ?Sized>(
        ctx: &CkksContext,
        sk: &SecretKey,
        target: &RnsPoly,
        rng: &mut R,
    ) -> Self {
        let ext = ctx.extended_moduli();
        let basis: Vec<usize> = (0..ext.len()).collect();
        let digits = (0..=ctx.depth())
            .map(|j| {
                let a = ctx.sample_uniform(rng, &basis);
                let e = ctx.small_to_ntt(&ctx.sample_gaussian(rng), &basis);
                let mut b = a.mul(&sk.ntt, ext);
                b.negate(ext);
                b.add_assign(&e, ext);
                let qj = ctx.modulus(j);
                let p = ctx.special_mod_q(j);
                for (x, &t) in b.limbs[j].iter_mut().zip(&target.limbs[j]) {
                    *x = qj.add(*x, qj.mul(p, t));
                }
                (b, a)
            })
            .collect();
        Self { digits }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.digits.len() as u32).to_le_bytes());
        for (b, a) in &self.digits {
            b.write_words(out);
            a.write_words(out);
        }
    }

    fn read(r: &mut Reader<'_>, ctx: &CkksContext) -> Result<Self, HeError> {
        let count = r.u32()? as usize;
        if count != ctx.depth() + 1 {
            return Err(HeError::Malformed("key-switching digit count".into()));
        }
        let limbs = ctx.extended_moduli().len();
        let digits = (0..count)
            .map(|_| Ok((r.poly(limbs, ctx.degree())?, r.poly(limbs, ctx.degree())?)))
            .collect::<Result<_, HeError>>()?;
        Ok(Self { digits })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelinKey(pub(crate) KeySwitchKey);

impl RelinKey {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, sk: &SecretKey, rng: &mut R) -> Self {
        let s2 = sk.ntt.mul(&sk.ntt, ctx.extended_moduli());
        Self(KeySwitchKey::generate(ctx, sk, &s2, rng))
    }

    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut out = Vec::new();
        header(&mut out, &ctx.digest(), KeyKind::Relin);
        self.0.write(&mut out);
        out
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self, HeError> {
        let mut r = Reader {
            buf: body(bytes, &ctx.digest(), KeyKind::Relin)?,
        };
        let k = KeySwitchKey::read(&mut r, ctx)?;
        r.finish()?;
        Ok(Self(k))
    }
}

/// Rotation keys indexed by left-rotation step in `[1, S)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaloisKeys {
    pub(crate) keys: BTreeMap<usize, KeySwitchKey>,
}

impl GaloisKeys {
    pub fn generate<R: Rng + ?Sized>(
        ctx: &CkksContext,
        sk: &SecretKey,
        steps: &[usize],
        rng: &mut R,
    ) -> Self {
        let basis: Vec<usize> = (0..ctx.extended_moduli().len()).collect();
        let mut keys = BTreeMap::new();
        for &step in steps {
            let step = step % ctx.slots();
            if step == 0 || keys.contains_key(&step) {
                continue;
            }
            let g = ctx.encoder().galois_element(step);
            let rotated = ctx.automorphism_signed(&sk.coeffs, g);
            let target = ctx.small_to_ntt(&rotated, &basis);
            keys.insert(step, KeySwitchKey::generate(ctx, sk, &target, rng));
        }
        Self { keys }
    }

    pub fn steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, step: usize) -> bool {
        self.keys.contains_key(&step)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        for (step, k) in &self.keys {
            out.extend_from_slice(&(*step as u64).to_le_bytes());
            k.write(out);
        }
    }

    fn read(r: &mut Reader<'_>, ctx: &CkksContext) -> Result<Self, HeError> {
        let count = r.u32()? as usize;
        let mut keys = BTreeMap::new();
        for _ in 0..count {
            let step = r.u64()? as usize;
            if step == 0 || step >= ctx.slots() {
                return Err(HeError::Malformed(format!("rotation step {step}")));
            }
            keys.insert(step, KeySwitchKey::read(r, ctx)?);
        }
        Ok(Self { keys })
    }

    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut out = Vec::new();
        header(&mut out, &ctx.digest(), KeyKind::Galois);
        self.write(&mut out);
        out
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self, HeError> {
        let mut r = Reader {
            buf: body(bytes, &ctx.digest(), KeyKind::Galois)?,
        };
        let k = Self::read(&mut r, ctx)?;
        r.finish()?;
        Ok(k)
    }
}

/// Everything the server needs: relinearization and rotation keys.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationKeys {
    pub relin: RelinKey,
    pub galois: GaloisKeys,
}

impl EvaluationKeys {
    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut out = Vec::new();
        header(&mut out, &ctx.digest(), KeyKind::Evaluation);
        self.relin.0.write(&mut out);
        self.galois.write(&mut out);
        out
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self, HeError> {
        let mut r = Reader {
            buf: body(bytes, &ctx.digest(), KeyKind::Evaluation)?,
        };
        let relin = RelinKey(KeySwitchKey::read(&mut r, ctx)?);
        let galois = GaloisKeys::read(&mut r, ctx)?;
        r.finish()?;
        Ok(Self { relin, galois })
    }
}

/// A complete key set as produced by key generation on the client.
#[derive(Clone, Debug)]
pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub evaluation: EvaluationKeys,
}

impl KeySet {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, rotation_steps: &[usize], rng: &mut R) -> Self {
        let secret = SecretKey::generate(ctx, rng);
        let public = PublicKey::generate(ctx, &secret, rng);
        let relin = RelinKey::generate(ctx, &secret, rng);
        let galois = GaloisKeys::generate(ctx, &secret, rotation_steps, rng);
        Self {
            secret,
            public,
            evaluation: EvaluationKeys { relin, galois },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::{RingParams, SecurityCheck};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> CkksContext {
        let mut p = RingParams::default_for(32);
        p.security = SecurityCheck::InsecureTestOnly;
        CkksContext::new(p).unwrap()
    }

    #[test]
    fn secret_roundtrip_and_ternary() {
        let c = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sk = SecretKey::generate(&c, &mut rng);
        assert!(sk.coeffs.iter().all(|x| x.abs() <= 1));
        let bytes = sk.to_bytes(&c);
        assert_eq!(&bytes[..4], b"BMK1");
        assert_eq!(bytes[36], 1);
        let back = SecretKey::from_bytes(&c, &bytes).unwrap();
        assert_eq!(back.coeffs, sk.coeffs);
        assert_eq!(back.ntt, sk.ntt);
    }

    #[test]
    fn evaluation_keys_roundtrip() {
        let c = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ks = KeySet::generate(&c, &[1, 2, 15, 16, 17], &mut rng);
        // 16 is the identity rotation and 17 wraps to 1.
        assert_eq!(ks.evaluation.galois.steps().collect::<Vec<_>>(), vec![1, 2, 15]);
        let bytes = ks.evaluation.to_bytes(&c);
        assert_eq!(EvaluationKeys::from_bytes(&c, &bytes).unwrap(), ks.evaluation);
        let pk = ks.public.to_bytes(&c);
        assert_eq!(PublicKey::from_bytes(&c, &pk).unwrap(), ks.public);
        assert!(matches!(
            PublicKey::from_bytes(&c, &bytes),
            Err(HeError::Malformed(_))
        ));
    }

    #[test]
    fn foreign_digest_is_rejected() {
        let c = ctx();
        let mut other_params = RingParams::from_bits(32, 45, 40, 2, 50, 40);
        other_params.security = SecurityCheck::InsecureTestOnly;
        let other = CkksContext::new(other_params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pk = PublicKey::generate(&other, &SecretKey::generate(&other, &mut rng), &mut rng);
        assert_eq!(
            PublicKey::from_bytes(&c, &pk.to_bytes(&other)),
            Err(HeError::KeyMismatch)
        );
    }
}
