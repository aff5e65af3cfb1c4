//! Fit on the training split, evaluate on the test split.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use surf_core::discovery::{self, DiscoveryConfig, Importance, Method};
use surf_core::explanation::ConceptExplanation;
use surf_core::metrics::metric_suite;
use surf_core::model::{EmbeddingSet, LinearHead};
use surf_core::numerics::Rng;
use surf_core::report::EvalReport;
use surf_core::sanity::make_perfect;
use surf_core::surrogates::{self, SurrogateKind, SurrogateSpec};

use crate::bundle::Bundle;
use crate::error::{BenchError, Result};

/// A discovery method, or `oracle`: the exact factorization of the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodSpec {
    Oracle,
    Discovery(Method),
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Oracle => f.write_str("oracle"),
            MethodSpec::Discovery(m) => m.fmt(f),
        }
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(MethodSpec::Oracle),
            other => Ok(MethodSpec::Discovery(other.parse()?)),
        }
    }
}

/// Discovery settings shared by every method in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub subspace_dim: usize,
    pub pool_size: usize,
    pub importance: Option<Importance>,
    pub sae_epochs: usize,
    pub shapley_permutations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        let d = DiscoveryConfig::new(Method::Kmeans, 1, 0);
        Self {
            subspace_dim: d.subspace_dim,
            pool_size: d.pool_size,
            importance: d.importance,
            sae_epochs: d.sae_epochs,
            shapley_permutations: d.shapley_permutations,
        }
    }
}

impl FitOptions {
    pub fn config(&self, method: Method, k: usize, seed: u64) -> DiscoveryConfig {
        let mut c = DiscoveryConfig::new(method, k, seed);
        c.subspace_dim = self.subspace_dim;
        c.pool_size = self.pool_size;
        c.importance = self.importance;
        c.sae_epochs = self.sae_epochs;
        c.shapley_permutations = self.shapley_permutations;
        c
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("surf-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("report-format".to_string(), "1".to_string()),
    ])
}

pub fn fit_explanation(
    method: MethodSpec,
    k: usize,
    opts: &FitOptions,
    seed: u64,
    train: &EmbeddingSet,
    head: &LinearHead,
) -> Result<Bundle> {
    let (explanation, k) = match method {
        MethodSpec::Oracle => {
            let mut e = make_perfect(head)?;
            e.method = "oracle".into();
            (e, 1)
        }
        MethodSpec::Discovery(m) => (discovery::fit(&opts.config(m, k, seed), train, head)?, k),
    };
    Ok(Bundle { explanation, k, seed })
}

/// Coefficients each output's surrogate reads: the largest basis, or the
/// SAE sparsity.
pub fn coefficient_count(expl: &ConceptExplanation) -> usize {
    match &expl.sae {
        Some(s) => s.k,
        None => expl.max_basis(),
    }
}

/// Surrogates are seeded by their kind, so a surrogate gets the same
/// stream whatever else is in the list.
fn surrogate_rng(seed: u64, spec: &SurrogateSpec) -> Rng {
    Rng::new(seed, 1).fork(spec.tag() as u64)
}

/// Builds each surrogate and computes its metric suite on `test`.
pub fn evaluate_bundle(
    bundle: &Bundle,
    train: &EmbeddingSet,
    test: &EmbeddingSet,
    head: &LinearHead,
    specs: &[SurrogateSpec],
) -> Result<Vec<EvalReport>> {
    let expl = &bundle.explanation;
    let (c, d) = head.weights.dim();
    let kc = coefficient_count(expl) as u64;
    specs
        .iter()
        .map(|spec| {
            let kind = surrogates::build(spec, expl, head, train, &mut surrogate_rng(bundle.seed, spec))?;
            let out = surrogates::evaluate(&kind, expl, head, test)?;
            let results = metric_suite(&out, head.task, &test.labels, None)?;
            let mut r = EvalReport::new(expl.method.clone(), spec.name(), &results);
            r.k = Some(bundle.k);
            let hidden = match spec {
                SurrogateSpec::CshapEval(cfg) => cfg.hidden as u64,
                _ => 0,
            };
            r.flops = surrogates::flops(spec.tag(), kc, c as u64, d as u64, hidden);
            r.params_learnt = kind.params_learnt() as u64;
            if let SurrogateKind::CshapEval(s) = &kind {
                r.mlp_sharing = Some(s.params.sharing().to_string());
            }
            r.seeds = vec![bundle.seed];
            r.versions = versions();
            Ok(r)
        })
        .collect()
}

/// Fits every method on `train` and evaluates every surrogate on `test`.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    train: &EmbeddingSet,
    test: &EmbeddingSet,
    head: &LinearHead,
    methods: &[MethodSpec],
    k: usize,
    opts: &FitOptions,
    specs: &[SurrogateSpec],
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for &m in methods {
        let bundle = fit_explanation(m, k, opts, seed, train, head)?;
        out.extend(evaluate_bundle(&bundle, train, test, head, specs)?);
    }
    Ok(out)
}

/// The three-setting sanity comparison, with version stamps on every row.
pub fn run_sanity(
    head: &LinearHead,
    train: &EmbeddingSet,
    eval: &EmbeddingSet,
    specs: &[SurrogateSpec],
    n_seeds: usize,
    seed: u64,
) -> Result<surf_core::sanity::SanityTable> {
    let mut t = surf_core::sanity::run_sanity(head, train, eval, specs, n_seeds, seed)?;
    for r in &mut t.rows {
        r.versions = versions();
    }
    Ok(t)
}
