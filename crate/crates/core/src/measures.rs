//! Transfer entropy and partial transfer entropy.
//!
//! Both measures are conditional mutual informations on the embedded series:
//!
//! ```text
//! TE(X -> Y)      = I(y_{t+h} ; x_t | y_t)
//! PTE(X -> Y | Z) = I(y_{t+h} ; x_t | y_t, z_t)
//! ```
//!
//! where the bold vectors are delay embeddings. The response and conditioning
//! blocks of a pair are prepared once and can then be evaluated against any
//! driver series of the same length — the surrogate test swaps in rotated
//! drivers without touching the rest of the embedding, so the observed value
//! and every surrogate share their time alignment exactly.

use crate::error::{Error, Result};
use crate::knn::{conditional_mutual_information, PointCloud};
use crate::timeseries::{embed, lag_matrix, Dataset, EmbeddedView, EstimationParams, RoleSplit};

/// One ordered driver/response pair with an optional conditioning set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub driver: usize,
    pub response: usize,
    pub conditioning: Vec<usize>,
}

impl PairSpec {
    pub fn new(driver: usize, response: usize, conditioning: Vec<usize>) -> Result<Self> {
        if driver == response {
            return Err(Error::InvalidParameter(
                "driver and response must be distinct variables".into(),
            ));
        }
        for (i, &c) in conditioning.iter().enumerate() {
            if c == driver || c == response {
                return Err(Error::InvalidParameter(format!(
                    "conditioning variable {c} coincides with the driver or response"
                )));
            }
            if conditioning[..i].contains(&c) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate conditioning variable {c}"
                )));
            }
        }
        Ok(Self { driver, response, conditioning })
    }

    /// Bivariate pair without conditioning.
    pub fn bivariate(driver: usize, response: usize) -> Result<Self> {
        Self::new(driver, response, Vec::new())
    }

    pub fn roles(&self) -> RoleSplit {
        RoleSplit {
            driver: self.driver,
            response: self.response,
            conditioning: self.conditioning.clone(),
        }
    }
}

/// Response/conditioning side of a measure, reusable across driver series.
pub(crate) struct PreparedMeasure {
    target: PointCloud,
    given: PointCloud,
    params: EstimationParams,
}

impl PreparedMeasure {
    pub(crate) fn new(data: &Dataset, pair: &PairSpec, params: &EstimationParams) -> Result<Self> {
        let view: EmbeddedView = embed(data, &pair.roles(), params)?;
        let target = PointCloud::from_column(&view.target)?;
        let response = PointCloud::from_array(view.response.view())?;
        let given = if view.conditioning.ncols() == 0 {
            response
        } else {
            let cond = PointCloud::from_array(view.conditioning.view())?;
            PointCloud::hstack(&[&response, &cond])?
        };
        Ok(Self { target, given, params: *params })
    }

    /// Measure value for an arbitrary driver series of the original length.
    pub(crate) fn evaluate(&self, driver_series: &[f64]) -> Result<f64> {
        let block = lag_matrix(driver_series, &self.params)?;
        let driver = PointCloud::from_array(block.view())?;
        conditional_mutual_information(&driver, &self.target, &self.given, self.params.k)
    }
}

fn measure(data: &Dataset, pair: &PairSpec, params: &EstimationParams) -> Result<f64> {
    let prepared = PreparedMeasure::new(data, pair, params)?;
    prepared.evaluate(&data.column_vec(pair.driver))
}

/// Bivariate transfer entropy of `pair.driver -> pair.response` in nats.
///
/// The pair must carry no conditioning variables.
pub fn transfer_entropy(data: &Dataset, pair: &PairSpec, params: &EstimationParams) -> Result<f64> {
    if !pair.conditioning.is_empty() {
        return Err(Error::InvalidParameter(
            "transfer_entropy expects an empty conditioning set; use partial_transfer_entropy"
                .into(),
        ));
    }
    measure(data, pair, params)
}

/// Partial transfer entropy of `pair.driver -> pair.response` given
/// `pair.conditioning`, in nats. An empty conditioning set reduces exactly
/// to [`transfer_entropy`].
pub fn partial_transfer_entropy(
    data: &Dataset,
    pair: &PairSpec,
    params: &EstimationParams,
) -> Result<f64> {
    measure(data, pair, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white_noise(n: usize, k: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> =
            (0..k).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let labels = (1..=k).map(|i| format!("X{i}")).collect();
        Dataset::from_columns(&cols, labels).unwrap()
    }

    #[test]
    fn pair_spec_validation() {
        assert!(PairSpec::new(1, 1, vec![]).is_err());
        assert!(PairSpec::new(0, 1, vec![0]).is_err());
        assert!(PairSpec::new(0, 1, vec![2, 2]).is_err());
        assert!(PairSpec::new(0, 1, vec![2, 3]).is_ok());
    }

    #[test]
    fn te_rejects_conditioned_pair() {
        let data = white_noise(128, 3, 1);
        let pair = PairSpec::new(0, 1, vec![2]).unwrap();
        let params = EstimationParams::with_m(2);
        assert!(transfer_entropy(&data, &pair, &params).is_err());
    }

    #[test]
    fn pte_with_empty_conditioning_equals_te() {
        let data = white_noise(512, 3, 2);
        let pair = PairSpec::bivariate(0, 1).unwrap();
        let params = EstimationParams::with_m(2);
        let te = transfer_entropy(&data, &pair, &params).unwrap();
        let pte = partial_transfer_entropy(&data, &pair, &params).unwrap();
        assert_eq!(te, pte);
    }

    #[test]
    fn te_independent_noise_near_zero() {
        let data = white_noise(2048, 2, 3);
        let pair = PairSpec::bivariate(0, 1).unwrap();
        let params = EstimationParams::with_m(2);
        let te = transfer_entropy(&data, &pair, &params).unwrap();
        assert!(te.abs() < 0.05, "independent TE = {te}");
    }

    #[test]
    fn measures_are_deterministic() {
        let data = white_noise(400, 4, 4);
        let pair = PairSpec::new(0, 1, vec![2, 3]).unwrap();
        let params = EstimationParams::with_m(3);
        let a = partial_transfer_entropy(&data, &pair, &params).unwrap();
        let b = partial_transfer_entropy(&data, &pair, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn te_detects_linear_coupling() {
        // y_t = 0.8 x_{t-1} + noise: TE(X->Y) should clearly exceed TE(Y->X)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1024;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for t in 1..n {
            x[t] = 0.5 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
            y[t] = 0.8 * x[t - 1] + 0.3 * y[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let data = Dataset::from_columns(&[x, y], vec!["X".into(), "Y".into()]).unwrap();
        let params = EstimationParams::with_m(2);
        let fwd = transfer_entropy(&data, &PairSpec::bivariate(0, 1).unwrap(), &params).unwrap();
        let bwd = transfer_entropy(&data, &PairSpec::bivariate(1, 0).unwrap(), &params).unwrap();
        assert!(fwd > 0.05, "forward TE = {fwd}");
        assert!(fwd > 3.0 * bwd.max(0.01), "fwd {fwd} vs bwd {bwd}");
    }
}
