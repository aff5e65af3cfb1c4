//! Unsupervised concept discovery over final-layer embeddings.

mod methods;
pub mod shapley;
pub mod sobol;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::explanation::{ClassConcepts, ConceptExplanation, ProjectionRule};
use crate::model::{validate_pair, EmbeddingSet, LinearHead, Task};
use crate::numerics::Rng;

pub use methods::{fit_cdisco, fit_ice, fit_kmeans, fit_mcd_lite};
pub use shapley::{fit_cshap_lite, shapley_values, ShapleyGame, ShapleyValues};
pub use sobol::{sobol_importance, SobolIndices};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kmeans,
    Cdisco,
    Ice,
    McdLite,
    CshapLite,
    Sae,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Kmeans,
        Method::Cdisco,
        Method::Ice,
        Method::McdLite,
        Method::CshapLite,
        Method::Sae,
    ];

    pub fn default_importance(&self) -> Importance {
        match self {
            Method::Cdisco => Importance::Gradient,
            Method::CshapLite => Importance::Shapley,
            _ => Importance::HeadProjection,
        }
    }

    pub fn rule(&self) -> ProjectionRule {
        match self {
            Method::Kmeans | Method::Cdisco | Method::CshapLite => ProjectionRule::LinearDot,
            Method::Ice => ProjectionRule::Nnls,
            Method::McdLite => ProjectionRule::OrthonormalDecompose,
            Method::Sae => ProjectionRule::SaeTopk,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Kmeans => "kmeans",
            Method::Cdisco => "cdisco",
            Method::Ice => "ice",
            Method::McdLite => "mcd-lite",
            Method::CshapLite => "cshap-lite",
            Method::Sae => "sae",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Method::Kmeans),
            "cdisco" => Ok(Method::Cdisco),
            "ice" => Ok(Method::Ice),
            "mcd-lite" | "mcd" => Ok(Method::McdLite),
            "cshap-lite" | "cshap" => Ok(Method::CshapLite),
            "sae" => Ok(Method::Sae),
            other => Err(Error::Parameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Importance {
    /// α = fᵢ·v.
    HeadProjection,
    /// Gradient of the logit along the concept, which at the final linear
    /// layer is again fᵢ·v.
    Gradient,
    /// Total-order Sobol index of each coefficient.
    Sobol,
    /// Shapley value (cshap-lite only).
    Shapley,
}

impl fmt::Display for Importance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Importance::HeadProjection => "head-projection",
            Importance::Gradient => "gradient",
            Importance::Sobol => "sobol",
            Importance::Shapley => "shapley",
        })
    }
}

impl std::str::FromStr for Importance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head-projection" => Ok(Importance::HeadProjection),
            "gradient" => Ok(Importance::Gradient),
            "sobol" => Ok(Importance::Sobol),
            "shapley" => Ok(Importance::Shapley),
            other => Err(Error::Parameter(format!("unknown importance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub method: Method,
    /// Concepts per output.
    pub k: usize,
    /// Subspace dimension for mcd-lite.
    pub subspace_dim: usize,
    /// Global pool size for cshap-lite.
    pub pool_size: usize,
    /// `None` uses the method's own importance.
    pub importance: Option<Importance>,
    pub seed: u64,
    pub sae_epochs: usize,
    pub shapley_permutations: usize,
}

impl DiscoveryConfig {
    pub fn new(method: Method, k: usize, seed: u64) -> Self {
        Self {
            method,
            k,
            subspace_dim: 2,
            pool_size: 100,
            importance: None,
            seed,
            sae_epochs: 200,
            shapley_permutations: shapley::DEFAULT_PERMUTATIONS,
        }
    }

    pub fn importance(&self) -> Importance {
        self.importance.unwrap_or_else(|| self.method.default_importance())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("K must be at least 1".into()));
        }
        if self.subspace_dim == 0 {
            return Err(Error::Parameter("subspace dimension must be at least 1".into()));
        }
        if self.method == Method::CshapLite && self.pool_size < self.k {
            return Err(Error::Parameter(format!(
                "pool size M = {} is smaller than K = {}",
                self.pool_size, self.k
            )));
        }
        match (self.importance(), self.method) {
            (Importance::Shapley, m) if m != Method::CshapLite => Err(Error::Parameter(format!(
                "shapley importance is only defined for cshap-lite, not {m}"
            ))),
            (Importance::Sobol, Method::Sae | Method::CshapLite) => Err(Error::Parameter(format!(
                "sobol importance is not supported for {}",
                self.method
            ))),
            _ => Ok(()),
        }
    }
}

/// α = fᵢ·v for every row of `cavs`.
pub(crate) fn head_projection(cavs: &Array2<f64>, f: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
    cavs.dot(&f)
}

/// Member rows of every output. Regression pools every sample.
fn class_data(train: &EmbeddingSet, head: &LinearHead, k: usize) -> Result<Vec<Array2<f64>>> {
    let c = head.num_outputs();
    let mut out = Vec::with_capacity(c);
    for i in 0..c {
        let idx = train.members(i);
        if head.task != Task::Regression && idx.len() < k {
            return Err(Error::UnderPopulated {
                class: i,
                found: idx.len(),
                required: k,
            });
        }
        out.push(train.rows(&idx));
    }
    Ok(out)
}

/// Fits the configured method on the training set.
pub fn fit(config: &DiscoveryConfig, train: &EmbeddingSet, head: &LinearHead) -> Result<ConceptExplanation> {
    config.validate()?;
    if let Some(v) = validate_pair(head, train).into_iter().next() {
        return Err(Error::Invalid(v.to_string()));
    }
    let rng = Rng::new(config.seed, 0);
    let k = config.k;
    let expl = match config.method {
        Method::CshapLite => fit_cshap_lite(train, head, k, config.pool_size, config.shapley_permutations, &rng)?,
        Method::Sae => methods::fit_sae(train, head, k, config.sae_epochs, &rng)?,
        method => {
            let data = class_data(train, head, k)?;
            let classes: Result<Vec<ClassConcepts>> = data
                .par_iter()
                .enumerate()
                .map(|(i, h)| {
                    let mut r = rng.fork(i as u64);
                    let f = head.row(i);
                    match method {
                        Method::Kmeans => fit_kmeans(h.view(), f, k, &mut r),
                        Method::Cdisco => fit_cdisco(h.view(), f, k),
                        Method::Ice => fit_ice(h.view(), f, k, &mut r),
                        Method::McdLite => fit_mcd_lite(h.view(), f, k, config.subspace_dim, &mut r),
                        _ => unreachable!("global methods handled above"),
                    }
                    .map_err(|e| match e {
                        Error::Degenerate(m) => Error::Degenerate(format!("class {i}: {m}")),
                        other => other,
                    })
                })
                .collect();
            ConceptExplanation {
                method: method.to_string(),
                rule: method.rule(),
                dim: head.dim(),
                classes: classes?,
                sae: None,
            }
        }
    };
    let expl = if config.importance() == Importance::Sobol {
        with_sobol_importances(expl, train, &rng)?
    } else {
        expl
    };
    expl.validate()?;
    Ok(expl)
}

fn with_sobol_importances(mut expl: ConceptExplanation, train: &EmbeddingSet, rng: &Rng) -> Result<ConceptExplanation> {
    for i in 0..expl.num_classes() {
        let idx = train.members(i);
        let h = train.rows(&idx);
        let mut r = rng.fork(1_000_000 + i as u64);
        let s = sobol_importance(&expl, i, h.view(), &mut r)?;
        expl.classes[i].importances = if s.degenerate {
            tracing::warn!(class = i, "constant concept coefficients; sobol importances set to 0");
            Array1::zeros(s.total.len())
        } else {
            s.total
        };
    }
    Ok(expl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Labels, Split};
    use ndarray::array;

    #[test]
    fn config_checks() {
        let mut c = DiscoveryConfig::new(Method::CshapLite, 5, 0);
        c.pool_size = 3;
        assert!(matches!(c.validate(), Err(Error::Parameter(_))));
        let mut c = DiscoveryConfig::new(Method::Kmeans, 2, 0);
        c.importance = Some(Importance::Shapley);
        assert!(c.validate().is_err());
        assert!(DiscoveryConfig::new(Method::Kmeans, 0, 0).validate().is_err());
    }

    #[test]
    fn under_populated_class_is_named() {
        let head = LinearHead::new(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0], Task::Classification).unwrap();
        let train = EmbeddingSet::new(
            array![[1.0, 0.0], [2.0, 0.1], [0.0, 1.0]],
            Labels::Classes(vec![0, 0, 1]),
            Split::Train,
        )
        .unwrap();
        let err = fit(&DiscoveryConfig::new(Method::Kmeans, 2, 0), &train, &head).unwrap_err();
        assert_eq!(
            err,
            Error::UnderPopulated {
                class: 1,
                found: 1,
                required: 2
            }
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("mcd".parse::<Method>().unwrap(), Method::McdLite);
    }
}
