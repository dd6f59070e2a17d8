use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;

/// Antithetic NES estimate of the gradient of `obj` at `x`:
/// `(1 / 2nσ) Σ [f(x + σδ) − f(x − σδ)] δ` with standard normal `δ`.
///
/// Directions are drawn from `rng` before any evaluation, and the `2n`
/// evaluations may run in parallel; the result does not depend on the
/// schedule.
pub fn nes_gradient<F, R>(obj: F, x: &[f64], samples: usize, sigma: f64, rng: &mut R) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    R: Rng + ?Sized,
{
    let (grad, _) = nes_gradient_with(|p| obj(p).map(|v| (v, ())), x, samples, sigma, rng)?;
    Ok(grad)
}

/// Like [`nes_gradient`] but the objective also returns side data, which is
/// handed back in evaluation order (`+δ₁, −δ₁, +δ₂, …`).
pub fn nes_gradient_with<F, T, R>(
    obj: F,
    x: &[f64],
    samples: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<T>)>
where
    F: Fn(&[f64]) -> Result<(f64, T)> + Sync,
    T: Send,
    R: Rng + ?Sized,
{
    let deltas: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..x.len()).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let points: Vec<Vec<f64>> = deltas
        .iter()
        .flat_map(|d| {
            let plus = x.iter().zip(d).map(|(a, e)| a + sigma * e).collect();
            let minus = x.iter().zip(d).map(|(a, e)| a - sigma * e).collect();
            [plus, minus]
        })
        .collect();
    let evals: Vec<(f64, T)> = points.par_iter().map(|p| obj(p)).collect::<Result<_>>()?;
    let mut grad = vec![0.0; x.len()];
    for (i, d) in deltas.iter().enumerate() {
        let diff = evals[2 * i].0 - evals[2 * i + 1].0;
        for (g, e) in grad.iter_mut().zip(d) {
            *g += diff * e;
        }
    }
    let scale = 1.0 / (2.0 * samples as f64 * sigma);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((grad, evals.into_iter().map(|(_, t)| t).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn constant_objective_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = nes_gradient(|_| Ok(3.5), &[0.1, 0.2, 0.3], 15, 0.08, &mut rng).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn exactly_two_n_evaluations() {
        let calls = AtomicUsize::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        nes_gradient(
            |_| {
                calls.fetch_add(1, Ordering::Relaxed);
                Ok(0.0)
            },
            &[0.0; 4],
            7,
            0.1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 14);
    }

    #[test]
    fn deterministic_under_seed() {
        let f = |a: &[f64]| Ok(a.iter().map(|v| v.sin()).sum::<f64>());
        let g1 = nes_gradient(f, &[0.3; 5], 15, 0.08, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let g2 = nes_gradient(f, &[0.3; 5], 15, 0.08, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(g1, g2);
    }
}
