//! Learner specification strings such as `x-rf`, `t-ols` or `x-rf:tau=ols`.
//!
//! Grammar: `oracle`, or `<meta>-<base>[:<slot>=<value>,...]` where `meta` is
//! one of `s t x f u` and `base` one of `rf ols ols0 mean knn knn<k>`.
//! Slots: `mu0 mu1 mu tau0 tau1 tau` (X), `mu0 mu1 mu` (T), `obs tau` (U),
//! `e=known|forest|logistic` (X, F, U), `g=zero|one|e|<c>` (X), `floor=<v>` (U).

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::dgp::FeatureFn;
use crate::error::{Error, Result};
use crate::learners::{
    ForestParams, KChoice, KnnRegressor, MeanRegressor, OlsRegressor, PropensityMethod,
    DEFAULT_PROPENSITY_CLIP,
};
use crate::meta::{
    Base, CateEstimator, CateLearner, MetaLearner, OracleLearner, PropensitySource, WeightChoice,
    DEFAULT_U_FLOOR,
};

pub const VALID_METAS: &[&str] = &["s", "t", "x", "f", "u"];
pub const VALID_BASES: &[&str] = &["rf", "ols", "ols0", "mean", "knn", "knn<k>"];

/// One-line summary of accepted specs for usage errors.
pub fn usage() -> String {
    format!(
        "valid learners: oracle, or <meta>-<base>[:slot=base,...] with meta in {{{}}} and base in {{{}}}, e.g. x-rf, t-ols, s-knn, x-rf:tau=ols",
        VALID_METAS.join(","),
        VALID_BASES.join(",")
    )
}

/// Settings shared by every parsed learner.
#[derive(Clone)]
pub struct LearnerContext {
    pub forest: ForestParams,
    /// Used for `e=known` and as the default propensity when present.
    pub known_propensity: Option<FeatureFn>,
    /// True CATE for `oracle`.
    pub oracle_tau: Option<FeatureFn>,
    pub clip: f64,
}

impl Default for LearnerContext {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            known_propensity: None,
            oracle_tau: None,
            clip: DEFAULT_PROPENSITY_CLIP,
        }
    }
}

impl LearnerContext {
    pub fn for_spec(spec: &crate::dgp::SimulationSpec) -> Self {
        let (mu0, mu1) = (spec.mu0.clone(), spec.mu1.clone());
        Self {
            known_propensity: Some(spec.propensity.clone()),
            oracle_tau: Some(Arc::new(move |x| mu1(x) - mu0(x))),
            ..Self::default()
        }
    }
}

/// A learner together with the spec string it was parsed from.
#[derive(Debug, Clone)]
pub struct NamedLearner {
    spec: String,
    inner: Parsed,
}

#[derive(Debug, Clone)]
enum Parsed {
    Meta(MetaLearner),
    Oracle(OracleLearner),
}

impl NamedLearner {
    pub fn meta(&self) -> Option<&MetaLearner> {
        match &self.inner {
            Parsed::Meta(m) => Some(m),
            Parsed::Oracle(_) => None,
        }
    }
}

impl CateLearner for NamedLearner {
    fn fit(&self, ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        match &self.inner {
            Parsed::Meta(m) => m.fit(ds),
            Parsed::Oracle(o) => o.fit(ds),
        }
    }

    fn name(&self) -> String {
        self.spec.clone()
    }
}

impl fmt::Display for NamedLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

fn bad(spec: &str, reason: impl Into<String>) -> Error {
    Error::LearnerSpec {
        spec: spec.to_string(),
        reason: format!("{}; {}", reason.into(), usage()),
    }
}

fn parse_base(spec: &str, s: &str, ctx: &LearnerContext) -> Result<Base> {
    Ok(match s {
        "rf" => Arc::new(ctx.forest),
        "ols" => Arc::new(OlsRegressor { intercept: true }),
        "ols0" => Arc::new(OlsRegressor { intercept: false }),
        "mean" => Arc::new(MeanRegressor),
        "knn" => Arc::new(KnnRegressor::default()),
        _ => {
            let k = s
                .strip_prefix("knn")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| bad(spec, format!("unknown base learner `{s}`")))?;
            Arc::new(KnnRegressor { k: KChoice::Fixed(k) })
        }
    })
}

fn parse_propensity(spec: &str, s: &str, ctx: &LearnerContext) -> Result<PropensitySource> {
    match s {
        "known" => ctx
            .known_propensity
            .clone()
            .map(PropensitySource::Known)
            .ok_or_else(|| bad(spec, "no known propensity in this context")),
        "forest" => Ok(PropensitySource::Estimate {
            method: PropensityMethod::Forest(ctx.forest),
            clip: ctx.clip,
        }),
        "logistic" => Ok(PropensitySource::Estimate {
            method: PropensityMethod::Logistic,
            clip: ctx.clip,
        }),
        other => Err(bad(spec, format!("unknown propensity `{other}`"))),
    }
}

/// Parses one learner spec.
pub fn parse_learner(spec: &str, ctx: &LearnerContext) -> Result<NamedLearner> {
    let spec = spec.trim();
    if spec == "oracle" {
        let tau = ctx
            .oracle_tau
            .clone()
            .ok_or_else(|| bad(spec, "oracle needs a synthetic ground truth"))?;
        return Ok(NamedLearner {
            spec: spec.into(),
            inner: Parsed::Oracle(OracleLearner::new(tau)),
        });
    }
    let (head, opts) = match spec.split_once(':') {
        Some((h, o)) => (h, Some(o)),
        None => (spec, None),
    };
    let (meta, base) = head
        .split_once('-')
        .ok_or_else(|| bad(spec, "expected <meta>-<base>"))?;
    let base = parse_base(spec, base, ctx)?;
    let mut slots: Vec<(&str, &str)> = Vec::new();
    if let Some(opts) = opts {
        for kv in opts.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(spec, format!("override `{kv}` is not slot=value")))?;
            slots.push((k.trim(), v.trim()));
        }
    }
    let mut propensity = match &ctx.known_propensity {
        Some(e) => PropensitySource::Known(e.clone()),
        None => PropensitySource::Estimate {
            method: PropensityMethod::Forest(ctx.forest),
            clip: ctx.clip,
        },
    };
    let allowed: &[&str] = match meta {
        "s" => &[],
        "t" => &["mu", "mu0", "mu1"],
        "x" => &["mu", "mu0", "mu1", "tau", "tau0", "tau1", "g", "e"],
        "f" => &["e"],
        "u" => &["obs", "tau", "e", "floor"],
        other => return Err(bad(spec, format!("unknown meta-learner `{other}`"))),
    };
    let (mut mu0, mut mu1, mut tau0, mut tau1) = (base.clone(), base.clone(), base.clone(), base.clone());
    let (mut obs, mut tau) = (base.clone(), base.clone());
    let mut weight = WeightChoice::Propensity;
    let mut floor = DEFAULT_U_FLOOR;
    for (k, v) in slots {
        if !allowed.contains(&k) {
            return Err(bad(spec, format!("slot `{k}` not valid for `{meta}`")));
        }
        match k {
            "e" => propensity = parse_propensity(spec, v, ctx)?,
            "g" => {
                weight = match v {
                    "zero" | "0" => WeightChoice::Zero,
                    "one" | "1" => WeightChoice::One,
                    "e" => WeightChoice::Propensity,
                    c => {
                        let c: f64 = c.parse().map_err(|_| bad(spec, format!("bad weight `{c}`")))?;
                        if !(0.0..=1.0).contains(&c) {
                            return Err(bad(spec, format!("weight {c} outside [0,1]")));
                        }
                        WeightChoice::Constant(c)
                    }
                }
            }
            "floor" => {
                floor = v
                    .parse::<f64>()
                    .ok()
                    .filter(|f| *f > 0.0 && *f < 1.0)
                    .ok_or_else(|| bad(spec, format!("bad floor `{v}`")))?;
            }
            _ => {
                let b = parse_base(spec, v, ctx)?;
                match k {
                    "mu" => {
                        mu0 = b.clone();
                        mu1 = b;
                    }
                    "mu0" => mu0 = b,
                    "mu1" => mu1 = b,
                    "tau" if meta == "x" => {
                        tau0 = b.clone();
                        tau1 = b;
                    }
                    "tau" => tau = b,
                    "tau0" => tau0 = b,
                    "tau1" => tau1 = b,
                    "obs" => obs = b,
                    _ => unreachable!(),
                }
            }
        }
    }
    let learner = match meta {
        "s" => MetaLearner::S { base },
        "t" => MetaLearner::T { mu0, mu1 },
        "x" => MetaLearner::X {
            mu0,
            mu1,
            tau0,
            tau1,
            weight,
            propensity,
        },
        "f" => MetaLearner::F { tau: base, propensity },
        _ => MetaLearner::U {
            obs,
            tau,
            propensity,
            floor,
        },
    };
    Ok(NamedLearner {
        spec: spec.into(),
        inner: Parsed::Meta(learner),
    })
}

/// Parses a comma-separated list, keeping `:` overrides attached to their learner.
pub fn parse_learner_list(list: &str, ctx: &LearnerContext) -> Result<Vec<NamedLearner>> {
    let mut specs: Vec<String> = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match specs.last_mut() {
            Some(prev) if prev.contains(':') && part.contains('=') && !part.contains('-') => {
                prev.push(',');
                prev.push_str(part);
            }
            _ => specs.push(part.to_string()),
        }
    }
    if specs.is_empty() {
        return Err(bad(list, "no learners given"));
    }
    specs.iter().map(|s| parse_learner(s, ctx)).collect()
}
