use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpe::{Fpe, FpeConfig, PrototypeSet};
use crate::gan::{GanConfig, GanModel};
use crate::tensor::{ParamStore, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Persisted models. Any part may be absent; loading only builds what is present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub fpe_config: Option<FpeConfig>,
    pub gan_config: Option<GanConfig>,
    /// Prefixed `fpe/`, `gen/` or `disc/`.
    pub params: Vec<ParamEntry>,
    pub prototypes: Option<PrototypeSet>,
    pub carry: Option<Tensor>,
}

fn entries<'a>(prefix: &str, store: &'a ParamStore) -> impl Iterator<Item = ParamEntry> + 'a {
    let prefix = prefix.to_string();
    store.iter().map(move |p| ParamEntry {
        name: format!("{prefix}/{}", p.name),
        shape: p.value.shape().to_vec(),
        values: p.value.data().to_vec(),
    })
}

impl Checkpoint {
    pub fn new(fpe: Option<&Fpe>, prototypes: Option<&PrototypeSet>, gan: Option<&GanModel>, carry: Option<&Tensor>) -> Self {
        let mut params = Vec::new();
        if let Some(f) = fpe {
            params.extend(entries("fpe", &f.store));
        }
        if let Some(g) = gan {
            params.extend(entries("gen", &g.generator.store));
            params.extend(entries("disc", &g.discriminator.store));
        }
        Self {
            format_version: FORMAT_VERSION,
            fpe_config: fpe.map(|f| f.config.clone()),
            gan_config: gan.map(|g| g.config.clone()),
            params,
            prototypes: prototypes.cloned(),
            carry: carry.cloned(),
        }
    }

    fn fill(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let mut src = ParamStore::new();
        for e in self.params.iter().filter(|e| e.name.starts_with(&format!("{prefix}/"))) {
            let t = Tensor::new(e.shape.clone(), e.values.clone()).map_err(|err| Error::format(format!("{}: {err}", e.name)))?;
            src.add(&e.name[prefix.len() + 1..], t).map_err(|err| Error::format(err.to_string()))?;
        }
        store.copy_values_from(&src)
    }

    pub fn fpe(&self) -> Result<Option<Fpe>> {
        let Some(cfg) = &self.fpe_config else { return Ok(None) };
        let mut model = Fpe::new(cfg.clone(), 0)?;
        self.fill("fpe", &mut model.store)?;
        Ok(Some(model))
    }

    pub fn gan(&self) -> Result<Option<GanModel>> {
        let Some(cfg) = &self.gan_config else { return Ok(None) };
        let mut model = GanModel::new(cfg.clone(), 0)?;
        self.fill("gen", &mut model.generator.store)?;
        self.fill("disc", &mut model.discriminator.store)?;
        Ok(Some(model))
    }

    /// Saved recurrent carry if it matches `m` hosts.
    pub fn carry_for(&self, m: usize) -> Option<Tensor> {
        self.carry.clone().filter(|c| c.rows() == m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.format_version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "checkpoint format {} but this build reads {FORMAT_VERSION}",
                c.format_version
            )));
        }
        for e in &c.params {
            if e.shape.iter().product::<usize>() != e.values.len() {
                return Err(Error::format(format!("{} has shape {:?} but {} values", e.name, e.shape, e.values.len())));
            }
        }
        // build once so a bad file fails here rather than at first use
        c.fpe()?;
        c.gan()?;
        Ok(c)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let fpe = Fpe::new(FpeConfig::default(), 4).unwrap();
        let gan = GanModel::new(GanConfig::default(), 4).unwrap();
        let protos = PrototypeSet::random(3, 8, 0.9, 0.05, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let carry = Tensor::filled(&[3, 16], 0.1 + 0.2);
        Checkpoint::new(Some(&fpe), Some(&protos), Some(&gan), Some(&carry))
    }

    #[test]
    fn text_round_trip_is_exact() {
        let c = sample();
        let text = c.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
        let fpe = back.fpe().unwrap().unwrap();
        let orig = Fpe::new(FpeConfig::default(), 4).unwrap();
        for (a, b) in fpe.store.iter().zip(orig.store.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn truncated_text_fails() {
        let text = sample().to_json().unwrap();
        assert!(matches!(Checkpoint::from_json(&text[..text.len() / 2]), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version_and_shape_fail() {
        let mut c = sample();
        c.format_version = 99;
        assert!(Checkpoint::from_json(&serde_json::to_string(&c).unwrap()).is_err());
        let mut c = sample();
        c.params[0].shape = vec![1, 1];
        assert!(Checkpoint::from_json(&serde_json::to_string(&c).unwrap()).is_err());
        let mut c = sample();
        c.params.retain(|e| e.name != "gen/gen.ln.gain");
        assert!(Checkpoint::from_json(&serde_json::to_string(&c).unwrap()).is_err());
    }

    #[test]
    fn carry_dropped_for_other_host_counts() {
        let c = sample();
        assert!(c.carry_for(3).is_some());
        assert!(c.carry_for(16).is_none());
    }
}
