use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Deserializer, Serialize};

use prosodid_core::classifiers::{ClassifierKind, Hyperparams};
use prosodid_core::corpus::Tier;
use prosodid_core::eval::{ExtractConfig, Grid, SynthConfig};
use prosodid_core::prosody::{Feature, FeatureCombo};

/// One file drives every subcommand; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Corpus root (wav files, annotations, speakers.tsv).
    pub corpus: PathBuf,
    pub out: PathBuf,
    /// Feature cache; empty means `<out>/cache`. `PROSODID_CACHE` wins over both.
    pub cache: PathBuf,
    pub tiers: Vec<Tier>,
    #[serde(deserialize_with = "combos_or_all")]
    pub combos: Vec<FeatureCombo>,
    pub contexts: Vec<bool>,
    pub classifiers: Vec<ClassifierKind>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// 0 uses every processor.
    pub workers: usize,
    pub extract: ExtractConfig,
    pub hyperparams: Hyperparams,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = Grid::default();
        Self {
            corpus: PathBuf::from("corpus"),
            out: PathBuf::from("out"),
            cache: PathBuf::new(),
            tiers: grid.tiers,
            combos: grid.combos,
            contexts: grid.contexts,
            classifiers: grid.classifiers,
            folds: 4,
            repeats: 5,
            seed: 0,
            workers: 0,
            extract: ExtractConfig::default(),
            hyperparams: Hyperparams::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn combos_or_all<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<FeatureCombo>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Combos {
        Keyword(String),
        List(Vec<String>),
    }
    let list = match Combos::deserialize(d)? {
        Combos::Keyword(s) => vec![s],
        Combos::List(l) => l,
    };
    parse_combos(&list).map_err(serde::de::Error::custom)
}

/// Each item is one combination (`EN+F0+ST` or `EN,F0,ST`), or `all`.
pub fn parse_combos(items: &[String]) -> anyhow::Result<Vec<FeatureCombo>> {
    let mut out = Vec::new();
    for item in items {
        if item.trim().eq_ignore_ascii_case("all") {
            out.extend(FeatureCombo::all());
            continue;
        }
        let features = item
            .split([',', '+'])
            .map(|f| match f.trim().to_ascii_uppercase().as_str() {
                "EN" => Ok(Feature::En),
                "F0" => Ok(Feature::F0),
                "ST" => Ok(Feature::St),
                "DUR" => Ok(Feature::Dur),
                other => bail!("unknown feature {other:?} in combination {item:?}"),
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        out.push(FeatureCombo::new(&features)?);
    }
    dedup(&mut out);
    Ok(out)
}

fn dedup<T: PartialEq>(v: &mut Vec<T>) {
    let mut i = 0;
    while i < v.len() {
        if v[..i].contains(&v[i]) {
            v.remove(i);
        } else {
            i += 1;
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.tiers.is_empty() || self.combos.is_empty() || self.contexts.is_empty() || self.classifiers.is_empty() {
            bail!("tiers, combos, contexts and classifiers must each list at least one value");
        }
        if self.folds < 2 {
            bail!("folds must be >= 2, got {}", self.folds);
        }
        if self.repeats == 0 {
            bail!("repeats must be >= 1");
        }
        self.extract.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid {
            tiers: self.tiers.clone(),
            combos: self.combos.clone(),
            contexts: self.contexts.clone(),
            classifiers: self.classifiers.clone(),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        if self.cache.as_os_str().is_empty() {
            self.out.join("cache")
        } else {
            self.cache.clone()
        }
    }
}
