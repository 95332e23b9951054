//! Pipeline configuration: one TOML document holding every tunable.
//!
//! A file may set `preset = "desk"` or `preset = "full"` and override any
//! subset of keys; missing keys take the preset's value. Environment
//! variables `ELSEG_<SECTION>__<KEY>=value` override individual keys after
//! the file is read (for example `ELSEG_DBSCAN__MIN_PTS=12`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoenc::{Scale, TrainConfig};
use crate::cluster::DbscanParams;
use crate::error::{Error, Result};
use crate::segment::{BusbarOptions, CombineMode, ThresholdConfig};
use crate::ssim::SsimParams;

pub const ENV_PREFIX: &str = "ELSEG_";
/// Environment variables with the prefix that are not config keys.
const ENV_RESERVED: &[&str] = &["CONFIG", "LOG"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 64×64 cells on a CPU.
    Desk,
    /// 640×480 cells and the full-size model.
    Full,
}

/// Inputs of the cost model that are not measured by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSettings {
    /// Human review seconds per image.
    pub t_revision: f64,
    /// One-off tuning seconds.
    pub t_tuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub scale: Scale,
    pub seed: u64,
    pub workers: usize,
    pub disparity_ssim: SsimParams,
    pub threshold: ThresholdConfig,
    /// Disparity intensity below which a pixel is never a defect. Keeps
    /// Otsu from splitting pure reconstruction noise on clean cells.
    pub min_disparity: f64,
    pub busbars: BusbarOptions,
    pub dbscan: DbscanParams,
    pub alpha: f64,
    pub train: TrainConfig,
    pub cost: CostSettings,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    /// Values for 640×480 cells: adaptive block 61 with C = 10, ε = 10, minPts =
    /// 100, α = √2, full-scale model.
    pub fn full() -> Self {
        Self {
            preset: Preset::Full,
            scale: Scale::Full,
            seed: 0,
            workers: 1,
            disparity_ssim: SsimParams::disparity_preset(1.0),
            threshold: ThresholdConfig::tuned(),
            min_disparity: 0.0,
            busbars: BusbarOptions::default(),
            dbscan: DbscanParams::tuned(),
            alpha: std::f64::consts::SQRT_2,
            train: TrainConfig::default(),
            cost: CostSettings {
                t_revision: 5.3,
                t_tuning: 1950.0,
            },
            paths: Paths {
                data_dir: "data".into(),
                model: "model.elseg".into(),
                out_dir: "out".into(),
            },
        }
    }

    /// Values tuned for 64×64 synthetic cells. Windows and cluster sizes
    /// shrink with the image; α stays at √2 since pixel spacing does not
    /// change.
    pub fn desk() -> Self {
        Self {
            preset: Preset::Desk,
            scale: Scale::Desk,
            disparity_ssim: SsimParams {
                window_size: 3,
                gaussian_sigma: 0.2,
                ..SsimParams::disparity_preset(1.0)
            },
            threshold: ThresholdConfig {
                adaptive_block: 5,
                adaptive_c: 0.0,
                combine_mode: CombineMode::Union,
            },
            min_disparity: 0.1,
            busbars: BusbarOptions {
                expected_count: Some(2),
                expected_horizontal: Some(0),
                ..BusbarOptions::default()
            },
            dbscan: DbscanParams {
                epsilon: 1.5,
                min_pts: 3,
            },
            seed: 2,
            train: TrainConfig {
                parallel: true,
                seed: 2,
                ..TrainConfig::default()
            },
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, e: Error| Error::argument(format!("{key}: {}", e.root()));
        self.disparity_ssim.validate().map_err(|e| bad("disparity_ssim", e))?;
        let shape = self.scale.input_shape();
        self.threshold
            .validate_for(shape.w, shape.h)
            .map_err(|e| bad("threshold", e))?;
        self.busbars.validate().map_err(|e| bad("busbars", e))?;
        self.dbscan.validate().map_err(|e| bad("dbscan", e))?;
        self.train.validate().map_err(|e| bad("train", e))?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::argument(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.min_disparity) {
            return Err(Error::argument("min_disparity must lie in [0, 1]"));
        }
        if self.workers == 0 {
            return Err(Error::argument("workers must be at least 1"));
        }
        for (k, v) in [("cost.t_revision", self.cost.t_revision), ("cost.t_tuning", self.cost.t_tuning)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::argument(format!("{k} must be a non-negative number")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Parses a document, filling missing keys from its preset.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e| Error::argument(format!("config TOML: {e}")))?;
        let preset = match file.get("preset") {
            None => Preset::Desk,
            Some(v) => Preset::deserialize(v.clone()).map_err(|e| Error::argument(format!("preset: {e}")))?,
        };
        let mut base = toml::Table::try_from(Self::preset(preset)).expect("config serializes");
        merge(&mut base, file);
        Self::from_table(base)
    }

    fn from_table(t: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(t.clone())
            .try_into()
            .map_err(|e| Error::argument(format!("config: {e}")))?;
        // Nested sections tolerate extra fields when deserializing, so a
        // misspelled key would otherwise be dropped silently.
        let known = toml::Table::try_from(&cfg).expect("config serializes");
        if let Some(key) = unknown_key(&t, &known) {
            return Err(Error::argument(format!("unknown config key {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).at(path))?;
        Self::from_toml(&text).map_err(|e| e.at(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::Io(e).at(path))
    }

    /// Applies `ELSEG_*` overrides from the given variables.
    pub fn with_env(self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = toml::Table::try_from(&self).expect("config serializes");
        let mut changed = false;
        for (k, v) in vars {
            let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
            if ENV_RESERVED.contains(&rest) {
                continue;
            }
            let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
            set_path(&mut table, &path, &v).map_err(|e| Error::argument(format!("{k}: {e}")))?;
            changed = true;
        }
        if !changed {
            return Ok(self);
        }
        Self::from_table(table)
    }

    /// [`with_env`](Self::with_env) over the process environment.
    pub fn with_process_env(self) -> Result<Self> {
        self.with_env(std::env::vars())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// First key of `given` that `known` lacks, as a dotted path.
fn unknown_key(given: &toml::Table, known: &toml::Table) -> Option<String> {
    given.iter().find_map(|(k, v)| match (v, known.get(k)) {
        (_, None) => Some(k.clone()),
        (toml::Value::Table(g), Some(toml::Value::Table(n))) => unknown_key(g, n).map(|rest| format!("{k}.{rest}")),
        _ => None,
    })
}

fn set_path(table: &mut toml::Table, path: &[String], raw: &str) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut t = table;
    for p in parents {
        t = match t.get_mut(p) {
            Some(toml::Value::Table(inner)) => inner,
            _ => return Err(format!("unknown section {p:?}")),
        };
    }
    let parsed: Option<toml::Value> = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"));
    let value = match (t.get(last), parsed) {
        (Some(toml::Value::String(_)), _) | (None, None) => toml::Value::String(raw.to_owned()),
        (Some(toml::Value::Float(_)), Some(toml::Value::Integer(i))) => toml::Value::Float(i as f64),
        (_, Some(v)) => v,
        (Some(_), None) => return Err(format!("cannot parse {raw:?}")),
    };
    if t.get(last).is_none() && !matches!(last.as_str(), "expected_count" | "expected_horizontal") {
        return Err(format!("unknown key {last:?}"));
    }
    t.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        PipelineConfig::desk().validate().unwrap();
        PipelineConfig::full().validate().unwrap();
        let p = PipelineConfig::full();
        assert_eq!(p.threshold.adaptive_block, 61);
        assert_eq!(p.threshold.adaptive_c, 10.0);
        assert_eq!((p.dbscan.epsilon, p.dbscan.min_pts), (10.0, 100));
        assert_eq!(p.alpha, 2f64.sqrt());
        assert_eq!((p.train.learning_rate, p.train.batch_size, p.train.patience), (0.003, 16, 10));
    }

    #[test]
    fn toml_round_trip() {
        for cfg in [PipelineConfig::desk(), PipelineConfig::full()] {
            let text = cfg.to_toml();
            let back = PipelineConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn misspelled_keys_are_rejected() {
        let err = PipelineConfig::from_toml("[dbscan]\nepsilonn = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("dbscan.epsilonn"), "{err}");
        assert!(PipelineConfig::from_toml("[train.loss_ssim]\nwindow = 5\n").is_err());
        // Optional keys absent from a preset are still accepted.
        let cfg = PipelineConfig::from_toml("preset = \"full\"\n[busbars]\nexpected_count = 3\n").unwrap();
        assert_eq!(cfg.busbars.expected_count, Some(3));
    }

    #[test]
    fn partial_file_uses_preset() {
        let cfg = PipelineConfig::from_toml("preset = \"full\"\n[dbscan]\nepsilon = 30.0\n").unwrap();
        assert_eq!(cfg.dbscan.epsilon, 30.0);
        assert_eq!(cfg.dbscan.min_pts, 100);
        assert_eq!(cfg.scale, Scale::Full);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::desk());
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "[threshold]\nadaptive_block = 14\n",
            "[threshold]\nadaptive_block = 65\n",
            "[dbscan]\nmin_pts = 0\n",
            "alpha = -1.0\n",
            "workers = 0\n",
            "unknown_key = 1\n",
            "preset = \"huge\"\n",
            "seed = \"abc\"\n",
        ] {
            assert!(matches!(PipelineConfig::from_toml(bad), Err(Error::Argument(_))), "{bad}");
        }
    }

    #[test]
    fn env_overrides() {
        let vars = [
            ("ELSEG_DBSCAN__MIN_PTS", "12"),
            ("ELSEG_DBSCAN__EPSILON", "3"),
            ("ELSEG_SEED", "99"),
            ("ELSEG_PATHS__OUT_DIR", "/tmp/x"),
            ("ELSEG_BUSBARS__EXPECTED_COUNT", "2"),
            ("ELSEG_CONFIG", "ignored.toml"),
            ("HOME", "/root"),
        ]
        .map(|(k, v)| (k.to_owned(), v.to_owned()));
        let cfg = PipelineConfig::desk().with_env(vars).unwrap();
        assert_eq!((cfg.dbscan.min_pts, cfg.dbscan.epsilon, cfg.seed), (12, 3.0, 99));
        assert_eq!(cfg.paths.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.busbars.expected_count, Some(2));
        let bad = [("ELSEG_DBSCAN__NOPE".to_owned(), "1".to_owned())];
        assert!(PipelineConfig::desk().with_env(bad).is_err());
        let bad = [("ELSEG_THRESHOLD__ADAPTIVE_BLOCK".to_owned(), "8".to_owned())];
        assert!(PipelineConfig::desk().with_env(bad).is_err());
    }
}
