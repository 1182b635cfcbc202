//! Dataset sources: builtin names, generator specs and files.
//!
//! Builtins: `span`, `pair-contradicting`, `pair-aligned`, `bump`, `planar`,
//! `nonsep`. The generators take `key=value` options after a colon:
//! `planar:seed=7,resample=true` and
//! `nonsep:overlap=0.8,seed=3,tasks=2,points=20,radius=1`. Anything else
//! is read as a dataset text file, or as a planar generator in JSON when
//! the path ends in `.json`.

use std::collections::BTreeMap;
use std::path::Path;

use seqmargin_core::data::{
    load_dataset, make_bump_toy, make_span_toy, make_pair_dataset, make_nonseparable, sample_2d_tasks, DatasetProvider,
    PairSplit, Generator2D, NonseparableSpec, ResamplingProvider,
};
use seqmargin_core::train::TaskSource;
use seqmargin_core::Dataset;

use crate::error::{HarnessError, Result};

pub const BUILTIN_NAMES: [&str; 6] = ["span", "pair-contradicting", "pair-aligned", "bump", "planar", "nonsep"];

/// Resolved training data. Datasets are kept with their labels; callers
/// absorb them before training.
#[derive(Clone, Debug)]
pub enum Loaded {
    Fixed(Dataset),
    Resampling(ResamplingProvider<f64>),
}

impl Loaded {
    /// Absorbed dataset used for certificates and recorded losses.
    pub fn evaluation(&self) -> Dataset {
        match self {
            Loaded::Fixed(ds) => ds.clone().into_absorbed(),
            Loaded::Resampling(p) => p.reference().clone(),
        }
    }

    pub fn fixed(&self) -> Result<&Dataset> {
        match self {
            Loaded::Fixed(ds) => Ok(ds),
            Loaded::Resampling(_) => Err(HarnessError::Usage(
                "this command needs a fixed dataset, not a resampling generator".into(),
            )),
        }
    }

    pub fn task_source<'a>(&'a self, absorbed: &'a Dataset) -> TaskSource<'a, f64> {
        match self {
            Loaded::Fixed(_) => TaskSource::Fixed(absorbed),
            Loaded::Resampling(p) => TaskSource::Resampling(p),
        }
    }
}

fn options(name: &str, text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| HarnessError::Usage(format!("{name}: option {part:?} is not key=value")))?;
        if !allowed.contains(&k) {
            return Err(HarnessError::Usage(format!(
                "{name}: unknown option {k:?} (allowed: {})",
                allowed.join(", ")
            )));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(opts: &BTreeMap<String, String>, key: &str, name: &str) -> Result<Option<T>> {
    opts.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| HarnessError::Usage(format!("{name}: option {key}={v:?} is malformed")))
        })
        .transpose()
}

/// Resolves `spec`. `seed` overrides any generator seed.
pub fn resolve_dataset(spec: &str, seed: Option<u64>) -> Result<Loaded> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let plain = |ds: Dataset| -> Result<Loaded> {
        if !rest.is_empty() {
            return Err(HarnessError::Usage(format!("builtin {name} takes no options")));
        }
        Ok(Loaded::Fixed(ds))
    };
    match name {
        "span" => plain(make_span_toy()),
        "pair-contradicting" => plain(make_pair_dataset(PairSplit::Contradicting)),
        "pair-aligned" => plain(make_pair_dataset(PairSplit::Aligned)),
        "bump" => plain(make_bump_toy()),
        "planar" => {
            let opts = options(name, rest, &["seed", "resample"])?;
            let mut gen = Generator2D::three_task_benchmark(0);
            gen.seed = seed.or(get(&opts, "seed", name)?).or(Some(0));
            let resample = get(&opts, "resample", name)?.unwrap_or(false);
            provider(sample_2d_tasks(&gen, resample)?)
        }
        "nonsep" => {
            let opts = options(name, rest, &["overlap", "seed", "tasks", "points", "radius"])?;
            let mut s = NonseparableSpec::new(get(&opts, "overlap", name)?.unwrap_or(1.0), 0);
            s.seed = seed.or(get(&opts, "seed", name)?).unwrap_or(0);
            if let Some(t) = get(&opts, "tasks", name)? {
                s.tasks = t;
            }
            if let Some(p) = get(&opts, "points", name)? {
                s.points_per_task = p;
            }
            if let Some(r) = get(&opts, "radius", name)? {
                s.radius = r;
            }
            Ok(Loaded::Fixed(make_nonseparable(&s)?))
        }
        _ => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(HarnessError::Usage(format!(
                    "{spec:?} is neither a builtin ({}) nor an existing file",
                    BUILTIN_NAMES.join(", ")
                )));
            }
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                let mut gen: Generator2D = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
                    path: path.to_path_buf(),
                    message: format!("at `{}`: {}", e.path(), e.inner()),
                })?;
                if seed.is_some() {
                    gen.seed = seed;
                }
                return provider(sample_2d_tasks(&gen, false)?);
            }
            Ok(Loaded::Fixed(load_dataset(path)?))
        }
    }
}

/// `spec` with its generator seed set to `seed`; other sources are returned unchanged.
pub fn with_seed(spec: &str, seed: u64) -> String {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    if name != "planar" && name != "nonsep" {
        return spec.to_string();
    }
    let mut parts: Vec<String> = rest
        .split(',')
        .filter(|p| !p.is_empty() && !p.starts_with("seed="))
        .map(String::from)
        .collect();
    parts.push(format!("seed={seed}"));
    format!("{name}:{}", parts.join(","))
}

fn provider(p: DatasetProvider<f64>) -> Result<Loaded> {
    Ok(match p {
        DatasetProvider::Fixed(ds) => Loaded::Fixed(ds),
        DatasetProvider::Resampling(r) => Loaded::Resampling(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        for name in BUILTIN_NAMES {
            let ds = resolve_dataset(name, None).unwrap().evaluation();
            assert!(ds.is_absorbed() && !ds.is_empty(), "{name}");
        }
        assert_eq!(resolve_dataset("planar", None).unwrap().evaluation().len(), 300);
    }

    #[test]
    fn generator_options() {
        let a = resolve_dataset("nonsep:overlap=0.9,seed=2,points=10", None).unwrap().evaluation();
        assert_eq!(a.len(), 20);
        let b = resolve_dataset("nonsep:overlap=0.9,seed=5,points=10", Some(2)).unwrap().evaluation();
        assert_eq!(a, b);
        assert!(matches!(
            resolve_dataset("planar:seed=1,resample=true", None).unwrap(),
            Loaded::Resampling(_)
        ));
        assert!(resolve_dataset("planar:sed=1", None).is_err());
        assert!(resolve_dataset("span:seed=1", None).is_err());
        assert_eq!(resolve_dataset("no-such-thing", None).unwrap_err().exit_code(), 2);
        assert_eq!(with_seed("planar:resample=true,seed=1", 9), "planar:resample=true,seed=9");
        assert_eq!(with_seed("nonsep", 4), "nonsep:seed=4");
        assert_eq!(with_seed("span", 4), "span");
    }
}
