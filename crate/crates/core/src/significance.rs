//! Time-shifted surrogate test for the non-causality null hypothesis.
//!
//! The driver series is circularly rotated by a random offset, which
//! preserves its marginal distribution and autocorrelation (up to the
//! wraparound seam) while destroying its coupling to the other variables.
//! Rotating only the driver and re-estimating the measure with the same
//! conditioning set builds the empirical null distribution; the one-sided
//! p-value uses the rank of the observed value with the usual ECDF endpoint
//! correction, so it can never reach exactly 0 or 1.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::PreparedMeasure;
use crate::rng::{derive_seed, rng_from, stream};
use crate::timeseries::{Dataset, EstimationParams};
use crate::variants::{effective_pair, AnalysisContext, SelectionOutcome, VariantId};

/// Minimum rotation offset as a fraction of the series length; offsets near
/// 0 or n would leak the causal signal into the null.
const SHIFT_MARGIN: f64 = 0.05;

/// Outcome of one surrogate test.
#[derive(Debug, Clone, Serialize)]
pub struct SurrogateTest {
    pub observed: f64,
    pub surrogate_values: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
}

/// Circularly rotates `series` by a uniform offset drawn from
/// `[ceil(0.05 n), n - ceil(0.05 n)]`.
pub fn time_shift_surrogate(series: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 20 {
        return Err(Error::SeriesTooShort { n_eff: n, min: 20 });
    }
    let margin = ((n as f64) * SHIFT_MARGIN).ceil() as usize;
    let mut rng = rng_from(seed, &[stream::SURROGATE]);
    let d = rng.gen_range(margin..=n - margin);
    Ok(rotated(series, d))
}

pub(crate) fn rotated(series: &[f64], offset: usize) -> Vec<f64> {
    let n = series.len();
    (0..n).map(|i| series[(i + offset) % n]).collect()
}

/// Rank-based one-sided p-value with the ECDF endpoint correction:
/// `p = (r0 - 0.326) / (n_surrogates + 1 + 0.348)` where
/// `r0 = 1 + #{surrogates >= observed}`.
pub fn ecdf_corrected_p(observed: f64, surrogates: &[f64]) -> f64 {
    let r0 = 1 + surrogates.iter().filter(|&&s| s >= observed).count();
    let p = (r0 as f64 - 0.326) / (surrogates.len() as f64 + 1.0 + 0.348);
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Runs the surrogate test for one ordered pair and variant, returning the
/// selection that was used alongside the test.
pub fn surrogate_test_in(
    ctx: &AnalysisContext<'_>,
    driver: usize,
    response: usize,
    variant: &VariantId,
) -> Result<(SurrogateTest, SelectionOutcome)> {
    let (pair, outcome) = effective_pair(ctx, driver, response, variant)?;
    let prepared = PreparedMeasure::new(ctx.data, &pair, &ctx.params)?;
    let driver_series = ctx.data.column_vec(driver);
    let observed = prepared.evaluate(&driver_series)?;
    let surrogate_values: Vec<f64> = (0..ctx.params.n_surrogates)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(
                ctx.seed,
                &[stream::SURROGATE, driver as u64, response as u64, s as u64],
            );
            let surrogate = time_shift_surrogate(&driver_series, seed)?;
            prepared.evaluate(&surrogate)
        })
        .collect::<Result<_>>()?;
    let p_value = ecdf_corrected_p(observed, &surrogate_values);
    let test =
        SurrogateTest { observed, surrogate_values, p_value, reject: p_value < ctx.params.alpha };
    Ok((test, outcome))
}

/// Surrogate test without a shared context.
pub fn surrogate_test(
    data: &Dataset,
    driver: usize,
    response: usize,
    variant: &VariantId,
    params: &EstimationParams,
    seed: u64,
) -> Result<SurrogateTest> {
    let ctx = AnalysisContext::new(data, *params, seed);
    surrogate_test_in(&ctx, driver, response, variant).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn surrogate_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let series: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let surr = time_shift_surrogate(&series, 7).unwrap();

        let mut a = series.clone();
        let mut b = surr.clone();
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        assert_eq!(a, b, "a rotation must be a permutation");

        // recover the offset from the first element and verify all indices
        let d = series.iter().position(|&v| v == surr[0]).unwrap();
        let margin = 5; // ceil(0.05 * 100)
        assert!((margin..=100 - margin).contains(&d));
        for i in 0..series.len() {
            assert_eq!(surr[i], series[(i + d) % series.len()]);
        }
    }

    #[test]
    fn surrogate_needs_twenty_samples() {
        assert!(matches!(
            time_shift_surrogate(&[0.0; 19], 1),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn rotation_preserves_autocorrelation() {
        // AR(1) series: lag-1 autocorrelation survives the rotation except
        // at the seam
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 2048;
        let mut series = vec![0.0f64; n];
        for t in 1..n {
            series[t] = 0.7 * series[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let ac = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let num: f64 = s.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
            let den: f64 = s.iter().map(|v| (v - m) * (v - m)).sum();
            num / den
        };
        let original = ac(&series);
        let surrogate = ac(&time_shift_surrogate(&series, 3).unwrap());
        assert!(
            (original - surrogate).abs() < 0.1,
            "autocorrelation drifted: {original} vs {surrogate}"
        );
    }

    #[test]
    fn ecdf_correction_endpoints() {
        let surrogates: Vec<f64> = (0..100).map(|i| i as f64).collect();
        // observed above all 100 surrogates: r0 = 1
        let p_low = ecdf_corrected_p(1000.0, &surrogates);
        assert!((p_low - 0.674 / 101.348).abs() < 1e-12);
        assert!(p_low < 0.05);
        // observed below all surrogates: r0 = 101
        let p_high = ecdf_corrected_p(-1.0, &surrogates);
        assert!((p_high - 100.674 / 101.348).abs() < 1e-12);
        assert!(p_high > 0.99);
        assert!(p_low > 0.0 && p_high < 1.0);
    }

    #[test]
    fn p_value_monotone_in_observed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let surrogates: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let mut last = f64::INFINITY;
        for step in 0..50 {
            let observed = -3.0 + step as f64 * 0.12;
            let p = ecdf_corrected_p(observed, &surrogates);
            assert!(p <= last, "p must not increase with the observed value");
            last = p;
        }
    }

    #[test]
    fn p_value_invariant_to_surrogate_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut surrogates: Vec<f64> = (0..101).map(|_| rng.sample(StandardNormal)).collect();
        let p = ecdf_corrected_p(0.3, &surrogates);
        surrogates.reverse();
        assert_eq!(p, ecdf_corrected_p(0.3, &surrogates));
    }

    #[test]
    fn coupled_pair_detected_and_independent_pair_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 512;
        let mut x = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        let mut w = vec![0.0f64; n];
        for t in 1..n {
            x[t] = 0.5 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
            y[t] = 0.9 * x[t - 1] + 0.2 * y[t - 1] + rng.sample::<f64, _>(StandardNormal);
            w[t] = 0.5 * w[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let data = crate::timeseries::Dataset::from_columns(
            &[x, y, w],
            vec!["X".into(), "Y".into(), "W".into()],
        )
        .unwrap()
        .standardize()
        .unwrap();
        let params = EstimationParams { m: 2, n_surrogates: 100, ..Default::default() };
        let coupled = surrogate_test(&data, 0, 1, &VariantId::Te, &params, 11).unwrap();
        assert!(coupled.reject, "X -> Y should be significant (p = {})", coupled.p_value);
        assert_eq!(coupled.surrogate_values.len(), 100);
        let unrelated = surrogate_test(&data, 2, 0, &VariantId::Te, &params, 11).unwrap();
        assert!(
            unrelated.p_value > 0.05,
            "W -> X should not be significant (p = {})",
            unrelated.p_value
        );
    }

    #[test]
    fn observed_equals_variant_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..256).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let data = crate::timeseries::Dataset::from_columns(
            &cols,
            vec!["A".into(), "B".into(), "C".into()],
        )
        .unwrap();
        let params = EstimationParams { m: 2, n_surrogates: 100, ..Default::default() };
        let ctx = AnalysisContext::new(&data, params, 21);
        let (test, _) = surrogate_test_in(&ctx, 0, 1, &VariantId::Pte).unwrap();
        let direct = crate::variants::variant_measure_in(&ctx, 0, 1, &VariantId::Pte).unwrap();
        assert_eq!(test.observed, direct);
    }
}
