use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CostError, TimingTable};
use crate::he::{Encryptor, Evaluator, Op, PlainVector};

fn mean_std(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let start = Instant::now();
    let out = f();
    (start.elapsed().as_secs_f64() * 1e3, out)
}

/// Measures the five operations on random ciphertexts at levels
/// `1..=min(depth, 3)`, `reps` times each. Needs a rotation key for 1.
///
/// Rotations cycle through every power-of-two step that has a key, as the
/// pipeline's ladders do, so key-switching keys are not always cache-hot.
/// Plaintext multiplication is timed with an already encoded operand, as
/// pipeline masks are.
pub fn calibrate(
    eval: &dyn Evaluator,
    enc: &dyn Encryptor,
    reps: usize,
    seed: u64,
) -> Result<TimingTable, CostError> {
    let params = eval.params().clone();
    if params.depth < 3 {
        return Err(CostError::BackendUnavailable(format!(
            "depth {} below 3",
            params.depth
        )));
    }
    if !eval.supports_rotation(1) {
        return Err(CostError::BackendUnavailable("no rotation key for 1".into()));
    }
    let reps = reps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut ChaCha8Rng| {
        PlainVector::new((0..params.slot_count).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let steps: Vec<i64> = (0..params.slot_count.trailing_zeros())
        .map(|k| 1i64 << k)
        .filter(|&r| eval.supports_rotation(r))
        .collect();
    let mut table = TimingTable::new();
    let mut turn = 0;
    for level in 1..=3 {
        let mut samples: [Vec<f64>; 5] = Default::default();
        for _ in 0..reps {
            let a = enc.encrypt_at_level(&random(&mut rng), level)?;
            let b = enc.encrypt_at_level(&random(&mut rng), level)?;
            let p = random(&mut rng);
            eval.mul_plain(&b, &p)?;
            let (t_add, _) = time_ms(|| eval.add(&a, &b));
            let (t_mulc, prod) = time_ms(|| eval.mul_ct(&a, &b));
            let (t_mulp, _) = time_ms(|| eval.mul_plain(&a, &p));
            let mut t_rot = 0.0;
            for _ in 0..steps.len() {
                let r = steps[turn % steps.len()];
                turn += 1;
                t_rot += time_ms(|| eval.rotate(&a, r)).0;
            }
            let t_rot = t_rot / steps.len() as f64;
            let prod = prod?;
            let (t_res, _) = time_ms(|| eval.rescale(&prod));
            for (i, t) in [t_add, t_mulc, t_mulp, t_rot, t_res].into_iter().enumerate() {
                samples[i].push(t);
            }
        }
        for (op, s) in Op::ALL.into_iter().zip(samples.iter()) {
            let (mean, std) = mean_std(s);
            // Timer resolution can round very fast operations to zero.
            table.insert(op, level, mean.max(1e-6), std);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{ExactEngine, SchemeParams};

    #[test]
    fn exact_backend_table_has_fifteen_entries() {
        let e = ExactEngine::new(SchemeParams::exact(64, 3, 40)).unwrap();
        let t = calibrate(&e, &e, 3, 1).unwrap();
        assert_eq!(t.len(), 15);
        t.validate(3).unwrap();
        assert!(t.iter().all(|(_, _, x)| x.std_ms.is_some()));
    }

    #[test]
    fn shallow_backend_is_rejected() {
        let e = ExactEngine::new(SchemeParams::exact(64, 2, 40)).unwrap();
        assert!(matches!(calibrate(&e, &e, 1, 1), Err(CostError::BackendUnavailable(_))));
    }

    #[test]
    fn std_absent_for_single_rep() {
        assert_eq!(mean_std(&[2.0]), (2.0, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}
