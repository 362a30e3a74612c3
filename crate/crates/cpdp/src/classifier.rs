//! Gaussian naive Bayes over metric vectors.
//!
//! Fits per-class feature means and variances plus class priors, then
//! scores instances in log space: `ln prior + sum_j ln N(x_j; mu_j, var_j)`.
//! Posteriors come out of a log-sum-exp normalization, so extreme joint
//! densities never overflow. Variances are population (maximum-likelihood)
//! estimates floored at a configurable minimum.

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, MetricInstance, ProjectDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Prior and per-feature Gaussian parameters of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams<T> {
    pub prior: T,
    pub means: Vec<T>,
    pub variances: Vec<T>,
}

/// Fitted two-class Gaussian naive Bayes model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NbModel<T> {
    feature_names: Vec<String>,
    faulty: ClassParams<T>,
    clean: ClassParams<T>,
}

/// Normalized class posteriors for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPosterior<T> {
    pub faulty: T,
    pub clean: T,
}

impl<T: Scalar> NbModel<T> {
    /// Fits priors, means, and floored population variances from a fully
    /// labeled dataset. Both classes must be present.
    pub fn fit(dataset: &ProjectDataset<T>, variance_floor: T) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset(dataset.name().to_string()));
        }
        if !(variance_floor.is_finite() && variance_floor > T::zero()) {
            return Err(Error::InvalidParameter(
                "variance_floor must be positive".into(),
            ));
        }
        let labels = dataset.labels()?;
        let n_faulty = labels.iter().filter(|&&l| l == Label::Faulty).count();
        let n_clean = labels.len() - n_faulty;
        if n_faulty == 0 {
            return Err(Error::MissingClass("faulty".into()));
        }
        if n_clean == 0 {
            return Err(Error::MissingClass("clean".into()));
        }

        let n = T::from_f64_lossy(labels.len() as f64);
        let class_params = |class: Label, count: usize| {
            let count_t = T::from_f64_lossy(count as f64);
            let width = dataset.feature_count();
            let mut means = vec![T::zero(); width];
            let mut variances = vec![T::zero(); width];
            for (inst, &label) in dataset.instances().iter().zip(&labels) {
                if label == class {
                    for (m, &x) in means.iter_mut().zip(&inst.features) {
                        *m += x;
                    }
                }
            }
            for m in &mut means {
                *m /= count_t;
            }
            for (inst, &label) in dataset.instances().iter().zip(&labels) {
                if label == class {
                    for ((v, &m), &x) in variances.iter_mut().zip(&means).zip(&inst.features) {
                        let d = x - m;
                        *v += d * d;
                    }
                }
            }
            for v in &mut variances {
                *v = (*v / count_t).max(variance_floor);
            }
            ClassParams {
                prior: count_t / n,
                means,
                variances,
            }
        };

        Ok(NbModel {
            feature_names: dataset.feature_names().to_vec(),
            faulty: class_params(Label::Faulty, n_faulty),
            clean: class_params(Label::Clean, n_clean),
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn faulty_params(&self) -> &ClassParams<T> {
        &self.faulty
    }

    pub fn clean_params(&self) -> &ClassParams<T> {
        &self.clean
    }

    fn log_joint(&self, params: &ClassParams<T>, features: &[T]) -> T {
        let two = T::from_f64_lossy(2.0);
        let two_pi = T::from_f64_lossy(2.0 * std::f64::consts::PI);
        let mut acc = params.prior.ln();
        for ((&x, &mean), &var) in features.iter().zip(&params.means).zip(&params.variances) {
            let d = x - mean;
            acc += -(two_pi * var).ln() / two - d * d / (two * var);
        }
        acc
    }

    /// Normalized posteriors `P(class | x)`; they sum to 1.
    pub fn predict_proba(&self, instance: &MetricInstance<T>) -> Result<ClassPosterior<T>> {
        if instance.features.len() != self.feature_count() {
            return Err(Error::ShapeMismatch(format!(
                "instance {:?} has {} features, model expects {}",
                instance.id,
                instance.features.len(),
                self.feature_count()
            )));
        }
        if instance.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("features of {:?}", instance.id)));
        }
        let lf = self.log_joint(&self.faulty, &instance.features);
        let lc = self.log_joint(&self.clean, &instance.features);
        // Log-sum-exp with the max factored out.
        let m = lf.max(lc);
        let ef = (lf - m).exp();
        let ec = (lc - m).exp();
        let z = ef + ec;
        Ok(ClassPosterior {
            faulty: ef / z,
            clean: ec / z,
        })
    }

    /// Posterior argmax; an exact tie goes to faulty (the costly miss).
    pub fn predict(&self, instance: &MetricInstance<T>) -> Result<Label> {
        let posterior = self.predict_proba(instance)?;
        Ok(if posterior.faulty >= posterior.clean {
            Label::Faulty
        } else {
            Label::Clean
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: NbModel<T> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse nb model json: {e}")))?;
        let widths_ok = model.faulty.means.len() == model.feature_names.len()
            && model.faulty.variances.len() == model.feature_names.len()
            && model.clean.means.len() == model.feature_names.len()
            && model.clean.variances.len() == model.feature_names.len();
        if !widths_ok {
            return Err(Error::ShapeMismatch(
                "nb model parameter widths disagree with feature names".into(),
            ));
        }
        if model
            .faulty
            .variances
            .iter()
            .chain(&model.clean.variances)
            .any(|&v| !(v.is_finite() && v > T::zero()))
        {
            return Err(Error::InvalidParameter(
                "nb model variances must be positive".into(),
            ));
        }
        Ok(model)
    }
}

/// Variance floor relative to the largest overall per-feature population
/// variance: `rel * max_j var(x_j)`, falling back to `rel` itself when every
/// feature is constant. Keeps the floor scale-free across datasets.
pub fn relative_variance_floor<T: Scalar>(dataset: &ProjectDataset<T>, rel: f64) -> Result<T> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(dataset.name().to_string()));
    }
    if !(rel.is_finite() && rel > 0.0) {
        return Err(Error::InvalidParameter(
            "relative variance floor must be positive".into(),
        ));
    }
    let n = T::from_f64_lossy(dataset.len() as f64);
    let mut max_var = T::zero();
    for j in 0..dataset.feature_count() {
        let mean = dataset.feature_column(j).sum::<T>() / n;
        let var = dataset
            .feature_column(j)
            .map(|x| (x - mean) * (x - mean))
            .sum::<T>()
            / n;
        max_var = max_var.max(var);
    }
    let rel_t = T::from_f64_lossy(rel);
    Ok(if max_var > T::zero() {
        rel_t * max_var
    } else {
        rel_t
    })
}
