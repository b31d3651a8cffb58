//! The lattice backend of the operation contract.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::context::CkksContext;
use super::keys::{EvaluationKeys, KeySet, PublicKey, SecretKey};
use super::params::RingParams;
use super::rns::RnsPoly;
use crate::error::HeError;
use crate::he::{
    check_add, check_mul_ct, check_mul_operand, check_rescale, check_rotate, check_slots,
    normalize_rotation, BackendId, Ciphertext, Decryptor, Encryptor, Evaluator, Op, OpCounters,
    Payload, PlainVector, SchemeParams,
};

/// Backend-independent parameters describing a ring configuration.
pub fn scheme_params(ring: &RingParams) -> SchemeParams {
    SchemeParams {
        slot_count: ring.slot_count(),
        depth: ring.depth(),
        scale_bits: ring.scale_bits,
        backend: BackendId::Ckks,
        security_profile: match ring.security {
            super::params::SecurityCheck::Enforce => {
                Some((ring.ring_degree, ring.total_modulus_bits().ceil() as u32))
            }
            super::params::SecurityCheck::InsecureTestOnly => None,
        },
    }
}

fn parts<'a>(ct: &'a Ciphertext, slots: usize) -> Result<&'a [RnsPoly], HeError> {
    check_slots(ct, slots)?;
    match &ct.payload {
        Payload::Ckks(p) => Ok(p),
        Payload::Exact(_) => Err(HeError::BackendMismatch),
    }
}

/// Server-side evaluator holding only public evaluation keys.
pub struct CkksEvaluator {
    ctx: Arc<CkksContext>,
    params: SchemeParams,
    keys: EvaluationKeys,
    counters: OpCounters,
    // Encoded plaintexts keyed by (plain vector id, level).
    plain_cache: Mutex<HashMap<(u64, usize), Arc<RnsPoly>>>,
}

impl std::fmt::Debug for CkksEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksEvaluator")
            .field("params", &self.params)
            .field("rotation_steps", &self.keys.galois.steps().collect::<Vec<_>>())
            .finish()
    }
}

impl CkksEvaluator {
    pub fn new(ctx: Arc<CkksContext>, keys: EvaluationKeys) -> Self {
        Self {
            params: scheme_params(ctx.params()),
            ctx,
            keys,
            counters: OpCounters::default(),
            plain_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn context(&self) -> &Arc<CkksContext> {
        &self.ctx
    }

    pub fn keys(&self) -> &EvaluationKeys {
        &self.keys
    }

    pub fn clear_plain_cache(&self) {
        self.plain_cache.lock().clear();
    }

    fn wrap(&self, level: usize, scale: f64, needs_rescale: bool, polys: Vec<RnsPoly>) -> Ciphertext {
        Ciphertext {
            level,
            scale,
            slot_count: self.params.slot_count,
            needs_rescale,
            payload: Payload::Ckks(polys),
        }
    }

    // Plaintexts are encoded at scale q_level, so the following rescale
    // leaves the ciphertext scale unchanged.
    fn encoded_plain(&self, p: &PlainVector, level: usize) -> Result<Arc<RnsPoly>, HeError> {
        let key = (p.id(), level);
        if let Some(hit) = self.plain_cache.lock().get(&key) {
            return Ok(hit.clone());
        }
        let q = self.ctx.modulus(level).value() as f64;
        let poly = Arc::new(self.ctx.encode(p.slots(), level, q)?);
        self.plain_cache.lock().insert(key, poly.clone());
        Ok(poly)
    }

    fn relinearize(&self, c0: RnsPoly, c1: RnsPoly, c2: RnsPoly, level: usize) -> (RnsPoly, RnsPoly) {
        let moduli = self.ctx.level_moduli(level);
        let mut d = c2;
        self.ctx.to_coeff(&mut d);
        let (k0, k1) = self.ctx.key_switch(&d, &self.keys.relin.0.digits, level);
        let (mut r0, mut r1) = (c0, c1);
        r0.add_assign(&k0, moduli);
        r1.add_assign(&k1, moduli);
        (r0, r1)
    }

    /// Reduces a three-component product to two components.
    pub fn relinearize_ct(&self, a: &Ciphertext) -> Result<Ciphertext, HeError> {
        let p = parts(a, self.params.slot_count)?;
        if p.len() != 3 {
            return Err(HeError::InvalidCiphertextForm { components: p.len() });
        }
        let (r0, r1) = self.relinearize(p[0].clone(), p[1].clone(), p[2].clone(), a.level);
        Ok(self.wrap(a.level, a.scale, a.needs_rescale, vec![r0, r1]))
    }

    /// Multiplication without relinearization (three components).
    pub fn mul_ct_raw(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_mul_ct(a, b)?;
        let (x, y) = (parts(a, self.params.slot_count)?, parts(b, self.params.slot_count)?);
        if x.len() != 2 || y.len() != 2 {
            return Err(HeError::InvalidCiphertextForm {
                components: x.len().max(y.len()),
            });
        }
        let moduli = self.ctx.level_moduli(a.level);
        let c0 = x[0].mul(&y[0], moduli);
        let mut c1 = x[0].mul(&y[1], moduli);
        c1.mul_acc(&x[1], &y[0], moduli);
        let c2 = x[1].mul(&y[1], moduli);
        Ok(self.wrap(a.level, a.scale * b.scale, true, vec![c0, c1, c2]))
    }
}

impl Evaluator for CkksEvaluator {
    fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn params_digest(&self) -> [u8; 32] {
        self.ctx.digest()
    }

    fn counters(&self) -> &OpCounters {
        &self.counters
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_add(a, b)?;
        let (x, y) = (parts(a, self.params.slot_count)?, parts(b, self.params.slot_count)?);
        if x.len() != y.len() {
            return Err(HeError::InvalidCiphertextForm { components: y.len() });
        }
        self.counters.record(Op::Add, a.level);
        let moduli = self.ctx.level_moduli(a.level);
        let out = x
            .iter()
            .zip(y)
            .map(|(p, q)| {
                let mut s = p.clone();
                s.add_assign(q, moduli);
                s
            })
            .collect();
        Ok(self.wrap(a.level, a.scale, a.needs_rescale, out))
    }

    fn mul_plain(&self, a: &Ciphertext, p: &PlainVector) -> Result<Ciphertext, HeError> {
        check_mul_operand(a)?;
        if p.len() != self.params.slot_count {
            return Err(HeError::PlainLength {
                got: p.len(),
                expected: self.params.slot_count,
            });
        }
        let x = parts(a, self.params.slot_count)?;
        let pt = self.encoded_plain(p, a.level)?;
        self.counters.record(Op::MulP, a.level);
        let moduli = self.ctx.level_moduli(a.level);
        let out = x.iter().map(|c| c.mul(&pt, moduli)).collect();
        let q = self.ctx.modulus(a.level).value() as f64;
        Ok(self.wrap(a.level, a.scale * q, true, out))
    }

    fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        let raw = self.mul_ct_raw(a, b)?;
        self.counters.record(Op::MulC, a.level);
        let Payload::Ckks(mut p) = raw.payload else {
            unreachable!()
        };
        let c2 = p.pop().expect("three components");
        let c1 = p.pop().expect("three components");
        let c0 = p.pop().expect("three components");
        let (r0, r1) = self.relinearize(c0, c1, c2, a.level);
        Ok(self.wrap(raw.level, raw.scale, true, vec![r0, r1]))
    }

    fn rotate(&self, a: &Ciphertext, r: i64) -> Result<Ciphertext, HeError> {
        let x = parts(a, self.params.slot_count)?;
        let step = normalize_rotation(r, self.params.slot_count);
        if step == 0 {
            return Ok(a.clone());
        }
        check_rotate(a)?;
        if x.len() != 2 {
            return Err(HeError::InvalidCiphertextForm { components: x.len() });
        }
        let key = self.keys.galois.keys.get(&step).ok_or(HeError::MissingRotationKey(r))?;
        self.counters.record(Op::Rot, a.level);
        let ctx = &self.ctx;
        let level = a.level;
        let basis: Vec<usize> = (0..=level).collect();
        let g = ctx.encoder().galois_element(step);
        let mut c0 = x[0].clone();
        let mut c1 = x[1].clone();
        ctx.to_coeff(&mut c0);
        ctx.to_coeff(&mut c1);
        let mut r0 = ctx.automorphism_coeff(&c0, g, &basis);
        let r1 = ctx.automorphism_coeff(&c1, g, &basis);
        ctx.to_ntt(&mut r0);
        let (k0, k1) = ctx.key_switch(&r1, &key.digits, level);
        r0.add_assign(&k0, ctx.level_moduli(level));
        Ok(self.wrap(level, a.scale, a.needs_rescale, vec![r0, k1]))
    }

    fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_rescale(a)?;
        let x = parts(a, self.params.slot_count)?;
        self.counters.record(Op::Res, a.level);
        let q = self.ctx.modulus(a.level).value() as f64;
        let out = x
            .iter()
            .map(|c| {
                let mut c = c.clone();
                self.ctx.rescale_poly(&mut c);
                c
            })
            .collect();
        Ok(self.wrap(a.level - 1, a.scale / q, false, out))
    }

    fn supports_rotation(&self, r: i64) -> bool {
        let step = normalize_rotation(r, self.params.slot_count);
        step == 0 || self.keys.galois.contains(step)
    }
}

/// Client holding the public key and, optionally, the secret key.
pub struct CkksClient {
    ctx: Arc<CkksContext>,
    public: PublicKey,
    secret: Option<SecretKey>,
    rng: Mutex<ChaCha20Rng>,
}

impl std::fmt::Debug for CkksClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksClient")
            .field("has_secret", &self.secret.is_some())
            .finish()
    }
}

impl CkksClient {
    pub fn new(ctx: Arc<CkksContext>, public: PublicKey, secret: Option<SecretKey>) -> Self {
        Self {
            ctx,
            public,
            secret,
            rng: Mutex::new(ChaCha20Rng::from_entropy()),
        }
    }

    /// Deterministic randomness; for reproducible tests only.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = Mutex::new(ChaCha20Rng::seed_from_u64(seed));
        self
    }

    pub fn from_key_set(ctx: Arc<CkksContext>, keys: &KeySet) -> Self {
        Self::new(ctx, keys.public.clone(), Some(keys.secret.clone()))
    }

    pub fn context(&self) -> &Arc<CkksContext> {
        &self.ctx
    }

    pub fn params(&self) -> SchemeParams {
        scheme_params(self.ctx.params())
    }

    fn encrypt_values(&self, values: &[f64], level: usize, scale: f64) -> Result<Ciphertext, HeError> {
        let ctx = &self.ctx;
        if level > ctx.depth() {
            return Err(HeError::InvalidParams(format!("level {level} above depth")));
        }
        let m = ctx.encode(values, level, scale)?;
        let basis: Vec<usize> = (0..=level).collect();
        let moduli = ctx.level_moduli(level);
        let mut rng = self.rng.lock();
        let u = ctx.small_to_ntt(&ctx.sample_ternary(&mut *rng), &basis);
        let e0 = ctx.small_to_ntt(&ctx.sample_gaussian(&mut *rng), &basis);
        let e1 = ctx.small_to_ntt(&ctx.sample_gaussian(&mut *rng), &basis);
        drop(rng);
        let mut pb = self.public.b.clone();
        let mut pa = self.public.a.clone();
        pb.truncate(level + 1);
        pa.truncate(level + 1);
        let mut c0 = u.mul(&pb, moduli);
        c0.add_assign(&e0, moduli);
        c0.add_assign(&m, moduli);
        let mut c1 = u.mul(&pa, moduli);
        c1.add_assign(&e1, moduli);
        Ok(Ciphertext {
            level,
            scale,
            slot_count: ctx.slots(),
            needs_rescale: false,
            payload: Payload::Ckks(vec![c0, c1]),
        })
    }
}

impl Encryptor for CkksClient {
    fn encrypt(&self, v: &PlainVector) -> Result<Ciphertext, HeError> {
        self.encrypt_at_level(v, self.ctx.depth())
    }

    fn encrypt_at_level(&self, v: &PlainVector, level: usize) -> Result<Ciphertext, HeError> {
        let scale = 2f64.powi(self.ctx.params().scale_bits as i32);
        self.encrypt_values(v.slots(), level, scale)
    }
}

impl Decryptor for CkksClient {
    fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<f64>, HeError> {
        let sk = self.secret.as_ref().ok_or(HeError::MissingSecretKey)?;
        let p = parts(ct, self.ctx.slots())?;
        let moduli = self.ctx.level_moduli(ct.level);
        let mut s = sk.ntt.clone();
        s.truncate(ct.level + 1);
        let mut acc = p[0].clone();
        let mut power = s.clone();
        for c in &p[1..] {
            acc.mul_acc(c, &power, moduli);
            power = power.mul(&s, moduli);
        }
        Ok(self.ctx.decode(&acc, ct.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::SecurityCheck;
    use rand::Rng;

    struct Fixture {
        eval: CkksEvaluator,
        client: CkksClient,
    }

    fn fixture(n: usize, steps: &[usize]) -> Fixture {
        let mut p = RingParams::default_for(n);
        p.security = SecurityCheck::InsecureTestOnly;
        let ctx = Arc::new(CkksContext::new(p).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let keys = KeySet::generate(&ctx, steps, &mut rng);
        Fixture {
            eval: CkksEvaluator::new(ctx.clone(), keys.evaluation.clone()),
            client: CkksClient::from_key_set(ctx, &keys).with_seed(12),
        }
    }

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() < tol, "slot {i}: {x} vs {y}");
        }
    }

    #[test]
    fn encrypt_decrypt_roundtrip() {
        let f = fixture(64, &[]);
        let v = random_vec(32, 1);
        let ct = f.client.encrypt(&PlainVector::new(v.clone())).unwrap();
        assert_eq!(ct.level(), 3);
        assert_close(&f.client.decrypt(&ct).unwrap(), &v, 1e-6);
        let low = f.client.encrypt_at_level(&PlainVector::new(v.clone()), 0).unwrap();
        assert_close(&f.client.decrypt(&low).unwrap(), &v, 1e-6);
    }

    #[test]
    fn add_and_mul_plain_then_rescale() {
        let f = fixture(64, &[]);
        let u = random_vec(32, 2);
        let v = random_vec(32, 3);
        let cu = f.client.encrypt(&PlainVector::new(u.clone())).unwrap();
        let cv = f.client.encrypt(&PlainVector::new(v.clone())).unwrap();
        let sum = f.eval.add(&cu, &cv).unwrap();
        let want: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        assert_close(&f.client.decrypt(&sum).unwrap(), &want, 1e-6);
        let mask: Vec<f64> = (0..32).map(|i| (i % 2) as f64).collect();
        let prod = f.eval.mul_plain(&cu, &PlainVector::new(mask.clone())).unwrap();
        assert!(prod.needs_rescale());
        let r = f.eval.rescale(&prod).unwrap();
        assert_eq!(r.level(), 2);
        assert!((r.scale() - cu.scale()).abs() < 1e-3);
        let want: Vec<f64> = u.iter().zip(&mask).map(|(a, b)| a * b).collect();
        assert_close(&f.client.decrypt(&r).unwrap(), &want, 1e-6);
    }

    #[test]
    fn mul_ct_relinearizes() {
        let f = fixture(64, &[]);
        let u = random_vec(32, 4);
        let v = random_vec(32, 5);
        let cu = f.client.encrypt(&PlainVector::new(u.clone())).unwrap();
        let cv = f.client.encrypt(&PlainVector::new(v.clone())).unwrap();
        let raw = f.eval.mul_ct_raw(&cu, &cv).unwrap();
        let want: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
        assert_close(&f.client.decrypt(&raw).unwrap(), &want, 1e-5);
        let prod = f.eval.rescale(&f.eval.mul_ct(&cu, &cv).unwrap()).unwrap();
        assert_close(&f.client.decrypt(&prod).unwrap(), &want, 1e-5);
        assert!(matches!(
            f.eval.relinearize_ct(&cu),
            Err(HeError::InvalidCiphertextForm { components: 2 })
        ));
        // Products chain down to level 0.
        let sq = f.eval.rescale(&f.eval.mul_ct(&prod, &prod).unwrap()).unwrap();
        let sq = f.eval.rescale(&f.eval.mul_ct(&sq, &sq).unwrap()).unwrap();
        assert_eq!(sq.level(), 0);
        let want4: Vec<f64> = want.iter().map(|x| x.powi(4)).collect();
        assert_close(&f.client.decrypt(&sq).unwrap(), &want4, 1e-4);
    }

    #[test]
    fn rotation_moves_slots_left() {
        let f = fixture(64, &[1, 5, 31]);
        let v = random_vec(32, 6);
        let ct = f.client.encrypt(&PlainVector::new(v.clone())).unwrap();
        for (r, step) in [(1i64, 1usize), (5, 5), (-1, 31)] {
            let rot = f.eval.rotate(&ct, r).unwrap();
            let want: Vec<f64> = (0..32).map(|p| v[(p + step) % 32]).collect();
            assert_close(&f.client.decrypt(&rot).unwrap(), &want, 1e-6);
        }
        assert_eq!(f.eval.rotate(&ct, 2), Err(HeError::MissingRotationKey(2)));
        assert!(f.eval.supports_rotation(32));
        assert!(!f.eval.supports_rotation(3));
        assert_eq!(f.eval.counters().snapshot().get(Op::Rot, 3), 3);
    }

    #[test]
    fn serialized_ciphertext_roundtrips() {
        let f = fixture(32, &[]);
        let ct = f.client.encrypt(&PlainVector::new(random_vec(16, 7))).unwrap();
        let digest = f.eval.params_digest();
        let bytes = ct.to_bytes(&digest);
        let back = Ciphertext::from_bytes(&bytes, f.eval.params(), &digest).unwrap();
        assert_eq!(back, ct);
    }

    #[test]
    fn decrypt_without_secret_fails() {
        let f = fixture(32, &[]);
        let ct = f.client.encrypt(&PlainVector::new(random_vec(16, 8))).unwrap();
        let public_only = CkksClient::new(f.client.ctx.clone(), f.client.public.clone(), None);
        assert_eq!(public_only.decrypt(&ct), Err(HeError::MissingSecretKey));
    }

    #[test]
    fn exact_and_lattice_backends_agree() {
        use crate::he::ExactEngine;
        let f = fixture(64, &[3]);
        let exact = ExactEngine::new(SchemeParams::exact(32, 3, 40)).unwrap();
        let u = random_vec(32, 9);
        let v = random_vec(32, 10);
        let mask = PlainVector::new((0..32).map(|i| (i < 16) as u8 as f64).collect());
        let run = |e: &dyn Evaluator, a: Ciphertext, b: Ciphertext| {
            let m = e.rescale(&e.mul_ct(&a, &b).unwrap()).unwrap();
            let r = e.rotate(&m, 3).unwrap();
            let s = e.add(&m, &r).unwrap();
            e.rescale(&e.mul_plain(&s, &mask).unwrap()).unwrap()
        };
        let lat = run(
            &f.eval,
            f.client.encrypt(&PlainVector::new(u.clone())).unwrap(),
            f.client.encrypt(&PlainVector::new(v.clone())).unwrap(),
        );
        let ex = run(
            &exact,
            exact.encrypt(&PlainVector::new(u)).unwrap(),
            exact.encrypt(&PlainVector::new(v)).unwrap(),
        );
        assert_eq!(lat.level(), ex.level());
        assert_close(&f.client.decrypt(&lat).unwrap(), &exact.decrypt(&ex).unwrap(), 1e-5);
        assert_eq!(f.eval.counters().snapshot(), exact.counters().snapshot());
    }
}
