use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::io::spec::{parse_kernel, parse_profile, parse_rate};
use crate::model::{JumpKernel, Profile, RateFunction};
use crate::sim::{Process, SimulationSpec, MAX_HORIZON};
use crate::verify::{SuiteKind, VerifySettings};

use super::ExperimentError;

/// Verification keys that are taken from the other sections instead.
const SHARED_VERIFY_KEYS: [&str; 6] = ["n_values", "horizon", "profile", "seed", "grid_size", "sde_steps"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Ndjson,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// Rate spec; table files are inlined as `table[...]`.
    pub g: String,
    pub p: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSection {
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub process: Process,
    pub replicas: u64,
    pub seed: u64,
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySection {
    pub suites: Vec<SuiteKind>,
    pub settings: VerifySettings,
}

/// A validated experiment with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub scale: ScaleSection,
    pub initial: InitialSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub verify: Option<VerifySection>,
}

/// Resolved model objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub g: RateFunction,
    pub kernel: JumpKernel,
    pub profile: Profile,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::ConfigInvalid { path: path.into(), reason: reason.into() }
}

struct Section {
    name: &'static str,
    table: toml::Table,
}

impl Section {
    fn new(root: &mut toml::Table, name: &'static str) -> Result<Self, ExperimentError> {
        let table = match root.remove(name) {
            None => toml::Table::new(),
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(invalid(name, "expected a table")),
        };
        Ok(Self { name, table })
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn take<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ExperimentError> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(v) => v.try_into().map(Some).map_err(|e: toml::de::Error| invalid(self.path(key), e.message())),
        }
    }

    fn require<T: DeserializeOwned>(&mut self, key: &str) -> Result<T, ExperimentError> {
        self.take(key)?.ok_or_else(|| invalid(self.path(key), "required key is missing"))
    }

    fn finish(self) -> Result<(), ExperimentError> {
        match self.table.keys().next() {
            Some(k) => Err(invalid(self.path(k), "unknown key")),
            None => Ok(()),
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate; `base` resolves `table:FILE` rate specs.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<(Self, Resolved), ExperimentError> {
        let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("<document>", e.message()))?;

        let mut s = Section::new(&mut root, "model")?;
        let g_spec: String = s.require("g")?;
        let g = parse_rate(&g_spec, base).map_err(|e| invalid("model.g", e.to_string()))?;
        let p_spec: String = s.take("p")?.unwrap_or_else(|| "nn".into());
        let kernel = parse_kernel(&p_spec).map_err(|e| invalid("model.p", e.to_string()))?;
        s.finish()?;
        let model = ModelSection { g: g.label(), p: kernel.label() };

        let mut s = Section::new(&mut root, "scale")?;
        let n: Vec<usize> = s.take("N")?.unwrap_or_else(|| vec![64]);
        let t: f64 = s.take("T")?.unwrap_or(0.1);
        let m: usize = s.take("M")?.unwrap_or(1024);
        let dt: f64 = s.take("dt")?.unwrap_or(t / 1000.0);
        s.finish()?;
        if n.is_empty() || n.iter().any(|&v| v as i64 <= 2 * kernel.support_radius()) {
            return Err(invalid("scale.N", "every N must exceed twice the kernel range"));
        }
        if !(t > 0.0 && t <= MAX_HORIZON) {
            return Err(invalid("scale.T", format!("horizon must lie in (0, {MAX_HORIZON}]")));
        }
        if m < 8 {
            return Err(invalid("scale.M", "grid needs at least 8 nodes"));
        }
        if !(dt > 0.0 && dt <= 1e-3 * t * (1.0 + 1e-12)) {
            return Err(invalid("scale.dt", "dt must lie in (0, T/1000]"));
        }
        let scale = ScaleSection { n, t, m, dt };

        let mut s = Section::new(&mut root, "initial")?;
        let profile_spec: String = s.take("profile")?.unwrap_or_else(|| "sine:1,0.5".into());
        let profile = parse_profile(&profile_spec).map_err(|e| invalid("initial.profile", e.to_string()))?;
        s.finish()?;
        let initial = InitialSection { profile: profile.label() };

        let mut s = Section::new(&mut root, "run")?;
        let process: Process = s.take("process")?.unwrap_or(Process::Tagged);
        let replicas: u64 = s.take("replicas")?.unwrap_or(100);
        let seed: u64 = s.take("seed")?.unwrap_or(0);
        let checkpoints: Vec<f64> = s.take("checkpoints")?.unwrap_or_default();
        s.finish()?;
        if replicas == 0 {
            return Err(invalid("run.replicas", "at least one replica"));
        }
        if checkpoints.iter().any(|&c| !(c >= 0.0 && c <= t)) {
            return Err(invalid("run.checkpoints", "checkpoints must lie in [0, T]"));
        }
        let mut probe = SimulationSpec::new(process, g.clone(), scale.n[0], t, profile, seed);
        probe.kernel = kernel.clone();
        probe.validate().map_err(|e| invalid("run.process", e.to_string()))?;
        let run = RunSection { process, replicas, seed, checkpoints };

        let mut s = Section::new(&mut root, "output")?;
        let directory: String = s.take("directory")?.unwrap_or_else(|| "experiment".into());
        let formats: Vec<Format> = s.take("formats")?.unwrap_or_else(|| vec![Format::Ndjson, Format::Csv]);
        s.finish()?;
        let output = OutputSection { directory, formats };

        let verify = match root.remove("verify") {
            None => None,
            Some(toml::Value::Table(mut t)) => Some(verify_section(&mut t, &scale, &profile, seed)?),
            Some(_) => return Err(invalid("verify", "expected a table")),
        };
        if let Some(k) = root.keys().next() {
            return Err(invalid(k.as_str(), "unknown section"));
        }
        let cfg = Self { model, scale, initial, run, output, verify };
        Ok((cfg, Resolved { g, kernel, profile }))
    }

    /// Verification settings merged with the model sections; defaults
    /// apply when the config has no `[verify]` table.
    pub fn verify_settings(&self, profile: Profile) -> VerifySettings {
        match &self.verify {
            Some(v) => v.settings.clone(),
            None => merged(VerifySettings::default(), &self.scale, &profile, self.run.seed),
        }
    }

    /// Materialised document; parses back to the same config.
    pub fn to_toml(&self) -> String {
        let mut root = toml::Table::new();
        root.insert("model".into(), value(&self.model));
        root.insert("scale".into(), value(&self.scale));
        root.insert("initial".into(), value(&self.initial));
        root.insert("run".into(), value(&self.run));
        root.insert("output".into(), value(&self.output));
        if let Some(v) = &self.verify {
            let mut t = toml::Table::try_from(&v.settings).expect("settings serialise");
            for k in SHARED_VERIFY_KEYS {
                t.remove(k);
            }
            t.insert("suites".into(), toml::Value::try_from(&v.suites).expect("suite names serialise"));
            root.insert("verify".into(), toml::Value::Table(t));
        }
        toml::to_string(&root).expect("TOML tables serialise")
    }
}

fn value<T: Serialize>(v: &T) -> toml::Value {
    toml::Value::try_from(v).expect("config sections serialise")
}

fn merged(mut s: VerifySettings, scale: &ScaleSection, profile: &Profile, seed: u64) -> VerifySettings {
    s.n_values = scale.n.clone();
    s.horizon = scale.t;
    s.profile = *profile;
    s.seed = seed;
    s.grid_size = scale.m;
    s.sde_steps = (scale.t / scale.dt).round() as usize;
    s
}

fn verify_section(
    t: &mut toml::Table,
    scale: &ScaleSection,
    profile: &Profile,
    seed: u64,
) -> Result<VerifySection, ExperimentError> {
    let suites = match t.remove("suites") {
        None => Vec::new(),
        Some(v) => {
            let names: Vec<String> = v.try_into().map_err(|e: toml::de::Error| invalid("verify.suites", e.message()))?;
            names
                .iter()
                .map(|n| SuiteKind::parse(n).ok_or_else(|| invalid("verify.suites", format!("unknown suite {n:?}"))))
                .collect::<Result<_, _>>()?
        }
    };
    let known = toml::Table::try_from(VerifySettings::default()).expect("settings serialise");
    for k in t.keys() {
        if SHARED_VERIFY_KEYS.contains(&k.as_str()) {
            return Err(invalid(format!("verify.{k}"), "set through the scale, initial and run sections"));
        }
        if !known.contains_key(k) {
            return Err(invalid(format!("verify.{k}"), "unknown key"));
        }
    }
    let mut full = known;
    for (k, v) in std::mem::take(t) {
        full.insert(k, v);
    }
    let settings: VerifySettings =
        toml::Value::Table(full).try_into().map_err(|e: toml::de::Error| invalid("verify", e.message()))?;
    Ok(VerifySection { suites, settings: merged(settings, scale, profile, seed) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_materialised_and_round_trip() {
        let (cfg, res) = ExperimentConfig::from_toml_str("[model]\ng = \"pow:0.5\"\n", None).unwrap();
        assert_eq!(cfg.scale.n, vec![64]);
        assert_eq!(cfg.scale.dt, 1e-4);
        assert_eq!(cfg.run.process, Process::Tagged);
        assert_eq!(res.g.eval(4), 2.0);
        let text = cfg.to_toml();
        let (back, _) = ExperimentConfig::from_toml_str(&text, None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn key_paths_in_errors() {
        let path = |doc: &str| match ExperimentConfig::from_toml_str(doc, None) {
            Err(ExperimentError::ConfigInvalid { path, .. }) => path,
            other => panic!("{other:?}"),
        };
        assert_eq!(path("[scale]\nT = 0.1\n"), "model.g");
        assert_eq!(path("[model]\ng = \"linear\"\n"), "model.g");
        assert_eq!(path("[model]\ng = \"unit\"\ncolour = 1\n"), "model.colour");
        assert_eq!(path("[model]\ng = \"unit\"\n[scale]\nT = \"long\"\n"), "scale.T");
        assert_eq!(path("[model]\ng = \"unit\"\n[extra]\n"), "extra");
        assert_eq!(path("[model]\ng = \"pow:0.5\"\n[run]\nprocess = \"second-class\"\n"), "run.process");
        assert_eq!(path("[model]\ng = \"unit\"\n[verify]\nnull_runs = 3\nbogus = 1\n"), "verify.bogus");
        assert_eq!(path("[model]\ng = \"unit\"\n[verify]\nhorizon = 1\n"), "verify.horizon");
        assert_eq!(path("[model]\ng = \"unit\"\n[verify]\nsuites = [\"nope\"]\n"), "verify.suites");
    }

    #[test]
    fn verify_section_merges_scale() {
        let doc = "[model]\ng = \"unit\"\n[scale]\nN = [32, 64]\nT = 0.2\n[run]\nseed = 9\n\
                   [verify]\nsuites = [\"hydro\", \"gaps\"]\nnull_runs = 7\n";
        let (cfg, res) = ExperimentConfig::from_toml_str(doc, None).unwrap();
        let v = cfg.verify.as_ref().unwrap();
        assert_eq!(v.suites, vec![SuiteKind::Hydro, SuiteKind::Gaps]);
        assert_eq!(v.settings.null_runs, 7);
        assert_eq!(v.settings.n_values, vec![32, 64]);
        assert_eq!(v.settings.sde_steps, 1000);
        assert_eq!(cfg.verify_settings(res.profile).seed, 9);
        let (back, _) = ExperimentConfig::from_toml_str(&cfg.to_toml(), None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn table_files_are_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.txt"), "1 2 2.5").unwrap();
        let (cfg, _) =
            ExperimentConfig::from_toml_str("[model]\ng = \"table:g.txt\"\n[run]\nprocess = \"bulk\"\n", Some(dir.path()))
                .unwrap();
        assert_eq!(cfg.model.g, "table[1,2,2.5]");
    }
}
